use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found} ({what})")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("matrix is reducible: {0}")]
    Reducible(String),

    #[error("eigensolver did not converge after {iterations} iterations")]
    EigenNonConvergence { iterations: usize },

    #[error("model is not critical: |lambda| = {lambda:e} exceeds {tolerance:e}")]
    NotCritical { lambda: f64, tolerance: f64 },

    #[error("step size underflow at t = {t:e} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("negative excursion {value:e} at site {site}, t = {t:e}")]
    NegativeExcursion { site: usize, t: f64, value: f64 },

    #[error("warm start not certified: relative change {change:e} exceeds {limit:e}")]
    WarmStart { change: f64, limit: f64 },

    #[error("Picard iteration did not reach tolerance {tol:e} in {iterations} iterations (last change {change:e})")]
    PicardCap {
        iterations: usize,
        tol: f64,
        change: f64,
    },

    #[error("test function is not normalized: <f, phi*>_m = {0}")]
    Unnormalized(f64),

    #[error("too few samples: {have} < {need}")]
    TooFewSamples { have: usize, need: usize },

    #[error("non-finite state at site {site} (step {step})")]
    NonFinite { site: usize, step: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::Dimension {
            what,
            expected,
            found,
        });
    }
    Ok(())
}
