use thiserror::Error;

/// Errors raised while building or solving a priority system.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("system must have at least one class")]
    NoClasses,

    #[error("arrival and service rate vectors differ in length ({arrivals} vs {services})")]
    LengthMismatch { arrivals: usize, services: usize },

    #[error("class {class}: {which} rate must be positive and finite, got {value}")]
    NonPositiveRate {
        class: usize,
        which: &'static str,
        value: f64,
    },

    #[error("system is unstable: utilization {rho} >= 1")]
    Unstable { rho: f64 },

    #[error("index {index} out of range 1..={max}")]
    IndexOutOfRange { index: usize, max: usize },

    #[error("epsilon must lie in (0,1), got {0}")]
    InvalidEpsilon(f64),

    #[error("fixed-point iteration did not converge after {iterations} iterations (last step {last_step:e})")]
    NoConvergence { iterations: usize, last_step: f64 },

    #[error("missing zero-index seed for class {class} at level {level}")]
    MissingSeed { level: usize, class: usize },

    #[error("missing dependency: {0}")]
    MissingDependency(String),

    #[error("non-finite entry {value} in {table} at flat index {index}")]
    NonFiniteEntry {
        table: String,
        index: usize,
        value: f64,
    },

    #[error("negative probability {value:e} at state {state:?}")]
    NegativeProbability { state: Vec<usize>, value: f64 },

    #[error("captured mass {captured} does not exceed 1 - {epsilon}")]
    MassDeficit { captured: f64, epsilon: f64 },

    #[error("problem size {size} exceeds budget {cap}")]
    BudgetExceeded { size: u128, cap: u128 },

    #[error("linear system is singular")]
    SingularSystem,

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}

pub type Result<T> = std::result::Result<T, Error>;
