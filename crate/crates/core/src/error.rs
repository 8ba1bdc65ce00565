use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("step size {dt} violates the stability bound (must be < {limit})")]
    StepTooLarge { dt: f64, limit: f64 },

    #[error("delays are not integer multiples of the step {dt}")]
    IncommensurateDelays { dt: f64 },

    #[error("q grid spacing {dq} aliases the kernel within the window (need < {limit})")]
    AliasedGrid { dq: f64, limit: f64 },

    #[error("quadrature did not converge: refining the q grid changed the population by {change:e} (tolerance {tolerance:e})")]
    QuadratureNotConverged { change: f64, tolerance: f64 },

    #[error("window [{lo}, {hi}] is outside the trace domain [{start}, {end}]")]
    WindowOutOfDomain {
        lo: f64,
        hi: f64,
        start: f64,
        end: f64,
    },

    #[error("population must be strictly positive in the fit window (found {value} at t = {t})")]
    NonPositivePopulation { t: f64, value: f64 },

    #[error("fit window invalid: {0}")]
    FitWindow(String),

    #[error(
        "Lorentzian fit did not converge after {iterations} iterations (rms residual {residual:e})"
    )]
    FitNotConverged { iterations: usize, residual: f64 },

    #[error("spectral density is identically zero")]
    ZeroSpectrum,

    #[error("need at least {required} emitters, got {got}")]
    TooFewEmitters { required: usize, got: usize },

    #[error("invalid density operator: {0}")]
    InvalidDensityOperator(String),
}

impl Error {
    /// True for failures of an iterative method to reach its tolerance, as
    /// opposed to bad inputs.
    pub fn is_convergence_failure(&self) -> bool {
        matches!(
            self,
            Error::QuadratureNotConverged { .. } | Error::FitNotConverged { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: format!("must be finite and > 0, got {value}"),
        })
    }
}

pub(crate) fn ensure_non_negative(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: format!("must be finite and >= 0, got {value}"),
        })
    }
}
