use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("adaptive step underflow at t = {t:.6e} (dt = {dt:.3e} < dt_min)")]
    StepUnderflow { t: f64, dt: f64, last_state: Vec<f64> },

    #[error("non-finite state at t = {t:.6e}")]
    NonFinite { t: f64, last_state: Vec<f64> },

    #[error("{branch} branch undefined at x = {x} (fold at {fold})")]
    BranchInvalid { branch: &'static str, x: f64, fold: f64 },

    #[error("Newton iteration did not converge in {iterations} iterations (last residual {:.3e})", residuals.last().copied().unwrap_or(f64::NAN))]
    NewtonFailed { iterations: usize, residuals: Vec<f64> },

    #[error("averaging window [{t0}, {t1}] exceeds trajectory span ending at {available}; extend integration by {}", t1 - available)]
    WindowOutOfRange { t0: f64, t1: f64, available: f64 },

    #[error("unbounded fast flow: |state| = {norm:.3e} exceeds bound {bound:.3e} at t = {t:.3e}")]
    UnboundedFastFlow { t: f64, norm: f64, bound: f64 },

    #[error("fold: dH/df is near-singular (condition {cond:.3e})")]
    Fold { state: Vec<f64>, cond: f64 },

    #[error("system entirely null: all singular values below cutoff {cutoff:.3e}")]
    NullSystem { cutoff: f64 },

    #[error("invariance solver diverged at iteration {iteration}")]
    Divergence { iteration: usize, history: Vec<f64> },

    #[error("only {visited} of {total} grid nodes visited by fine bursts; use more bursts or a smaller grid")]
    InsufficientCoverage { visited: usize, total: usize },

    #[error("coarse state {state:?} lies outside the grid")]
    OutsideGrid { state: Vec<f64> },

    #[error("reconstructed state misses the target coarse value by {miss:.3e} (tolerance {tol:.3e})")]
    Reconstruction { miss: f64, tol: f64 },

    #[error("degenerate metric: both trajectory norms vanish")]
    DegenerateMetric,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        !matches!(
            self,
            Error::InvalidArgument(_) | Error::Format(_) | Error::Io(_) | Error::DimensionMismatch { .. }
        )
    }
}
