use thiserror::Error;

/// Errors produced by model construction and fitting.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate time domain: t_min = t_max but {knots} interior knots requested")]
    DegenerateTimeDomain { knots: usize },

    #[error("interior knots are not strictly increasing")]
    NonIncreasingKnots,

    #[error("length mismatch: basis has {basis} entries, coefficient vector has {coefficients}")]
    LengthMismatch { basis: usize, coefficients: usize },

    #[error("dispersion must be 1 for {family} (got {dispersion})")]
    FixedDispersion { family: &'static str, dispersion: f64 },

    #[error("dispersion must be positive (got {0})")]
    NonpositiveDispersion(f64),

    #[error("mean {mu} outside the mean domain of the {family} family")]
    MeanOutOfDomain { family: &'static str, mu: f64 },

    #[error("response {y} outside the support of the {family} family")]
    ResponseOutOfSupport { family: &'static str, y: f64 },

    #[error("correlation parameter {rho} outside the validity range for cluster size {m}")]
    InvalidCorrelation { rho: f64, m: usize },

    #[error("nonpositive variance entry {value} at position {index}")]
    NonpositiveVariance { index: usize, value: f64 },

    #[error("singular working correlation matrix (size {m}, rho {rho})")]
    SingularCorrelation { m: usize, rho: f64 },

    #[error("singular system H + nE even after ridge jitter; consider a larger lambda")]
    SingularSystem,

    #[error("saturated effective dimension: d(lambda) = {d:.4} >= n = {n}")]
    SaturatedEffectiveDimension { d: f64, n: usize },

    #[error("no lambda on the grid produced a converged fit")]
    TuningFailed { diagnostics: Vec<String> },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid dataset: {0}")]
    InvalidData(String),
}

pub type Result<T> = std::result::Result<T, Error>;
