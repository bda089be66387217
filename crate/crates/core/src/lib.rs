//! Exact joint queue-length distribution of the M/M/1 queue with `N`
//! preemptive-priority classes and class-dependent exponential service,
//! computed recursively from first-passage probabilities, plus a spare-parts
//! availability layer and independent validation oracles.

pub mod busy_period;
pub mod equilibrium;
pub mod error;
pub mod grid;
pub mod model;
pub mod oracle;
pub mod passage;
pub mod spares;
pub mod truncation;

pub use equilibrium::{
    boundary_marginal, compute_joint, marginal, solve, JointDistribution, MarginalDistribution,
};
pub use error::{Error, Result};
pub use model::{validate, PrioritySystem, SubsystemView};
pub use passage::{MultiIndex, PassageKind, PassageSet, PassageTable};
pub use truncation::{build_cuboid, TruncationCuboid};
