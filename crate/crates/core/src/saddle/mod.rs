//! Transition-state search: a climbing-image band between two minima,
//! eigenvector-following refinement of its highest images, and a scheduler
//! that connects the database one component pair at a time.

mod band;
mod connect;
mod refine;

pub use band::{band_search, BandConfig, BandOutcome, SaddleCandidate};
pub use connect::{connect_landscape, AttemptLog, ConnectConfig, ConnectSummary};
pub use refine::{refine_ts, RefineConfig, RefineFailure, RefinedSaddle};
