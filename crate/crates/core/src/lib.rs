//! Loss-landscape mapping and conserved-weight interpretation for small
//! feed-forward classifiers.
//!
//! The crate treats the full-batch training loss of a network as an energy
//! landscape. Basin hopping collects minima, a nudged elastic band followed
//! by eigenvector following locates the index-1 saddles linking them, and the
//! resulting database is coarse-grained into a disconnectivity graph. Groups
//! of minima in that graph are then inspected for weights whose value barely
//! changes across the group ("conserved" weights) and those weights are
//! ablated to measure how much the classifier depends on them.
//!
//! Everything here is pure computation over `alloc` collections so the crate
//! builds without `std`. File formats, CSV ingestion and the command-line
//! front end live in the companion `weightscape` crate.
#![no_std]
#![warn(missing_debug_implementations)]

extern crate alloc;

pub mod data;
pub mod error;
pub mod interpret;
pub mod landscape;
pub mod linalg;
pub mod model;
pub mod objective;
pub mod optim;
pub mod rng;
pub mod saddle;
pub mod symmetry;

pub use data::Dataset;
pub use error::{Error, Result};
pub use landscape::{
    DisconnectivityGraph, Fingerprint, LandscapeDatabase, Minimum, TransitionState,
};
pub use linalg::Matrix;
pub use model::{Architecture, EdgeIndex, ParameterVector};
pub use objective::{NetObjective, Objective};
