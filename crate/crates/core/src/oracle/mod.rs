//! Independent checks on the recursion: a stationary solve of the truncated
//! generator and a discrete-event simulation of the queue itself.

pub mod ctmc;
pub mod sim;

pub use ctmc::{solve_truncated_ctmc, TruncatedGenerator, DEFAULT_BAND_CAP};
pub use sim::{simulate, Estimate, SimulationEstimate, StateEstimate, SINGLE_RUN_BATCHES};
