use thiserror::Error;

/// Errors shared by all core modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error("query at t = {t} exceeds materialized horizon {horizon}")]
    HorizonExceeded { t: f64, horizon: f64 },

    #[error("perturbation infeasible at index {index} after {retries} retries")]
    PerturbInfeasible { index: usize, retries: usize },

    #[error("target {y} outside attainable range [{lo}, {hi}] of {name}")]
    OutOfRange {
        name: String,
        y: f64,
        lo: f64,
        hi: f64,
    },

    #[error("domain hint exceeded while evaluating {name}: {value} > {max}")]
    DomainExceeded { name: String, value: f64, max: f64 },

    #[error("quadrature failure on [{a}, {b}]: {reason}")]
    Quadrature { a: f64, b: f64, reason: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("extremum trend unresolved at t = {t_max}; declare a tail hint for p")]
    TailUnresolved { t_max: f64 },

    #[error("finite escape in growth regime between t = {lo} and t = {hi}")]
    FiniteEscape { lo: f64, hi: f64 },

    #[error("step size underflow at t = {t} (h = {h}); system may be stiff")]
    StepUnderflow { t: f64, h: f64 },

    #[error("non-finite evaluation at t = {t}")]
    NonFinite { t: f64 },

    #[error("empty ensemble")]
    EmptyEnsemble,

    #[error("inconclusive: {0}")]
    Inconclusive(String),

    #[error("{0}")]
    Other(String),
}

pub type Result<T> = std::result::Result<T, Error>;
