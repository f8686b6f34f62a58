//! Local minimization and basin-hopping global search.

mod basin;
mod lbfgs;

pub use basin::{
    basin_hop, merge_walk, metropolis_accept, walk, BasinHopConfig, BasinHopSummary, StepOutcome,
    Walk,
};
pub use lbfgs::{minimize, MinimizeConfig, MinimizeOutcome};
