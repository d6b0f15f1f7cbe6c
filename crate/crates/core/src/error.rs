use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("|alpha|^2 = {mean_photons} exceeds the truncation budget of {limit} photons")]
    AmplitudeTooLarge { mean_photons: f64, limit: f64 },

    #[error("quadrature did not converge: grid refinement changed the value by {difference:e}")]
    QuadratureNonConvergence { difference: f64 },

    #[error("coupling rejection rate {rate:e} exceeds 1e-3 (delta_g too large relative to g)")]
    RejectionRate { rate: f64 },

    #[error("linearized phase unavailable: global detuning is zero")]
    LinearizationUnavailable,

    #[error("exact-phase sampling needs definition-mode pulse factors, got the fixed constants")]
    ConventionMismatch,

    #[error("series diverges at x = {x}: first omitted term {omitted:e} exceeds 10% of partial sum {partial:e}")]
    SeriesDivergence { x: f64, partial: f64, omitted: f64 },

    #[error("fidelity underflow at x = {x}")]
    Underflow { x: f64 },

    #[error("support budget exceeded: {terms} terms > {budget}")]
    BudgetExceeded { terms: u128, budget: u128 },

    #[error("trade-off infidelity {0} lies outside the highly reliable region (> 1)")]
    OutsideReliableRegion(f64),

    #[error("trade-off has no positive solution: {0}")]
    Infeasible(String),

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for failures of a numerical procedure, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::QuadratureNonConvergence { .. }
                | Error::SeriesDivergence { .. }
                | Error::Underflow { .. }
                | Error::RejectionRate { .. }
                | Error::OutsideReliableRegion(_)
                | Error::Infeasible(_)
        )
    }
}
