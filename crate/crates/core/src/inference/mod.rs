//! Survey-weighted Bernoulli-logit estimation.
//!
//! The pseudo-log-likelihood exponentiates each unit's likelihood contribution
//! by a weight `w*_i` proportional to `1 / pi_i` and normalized so that the
//! weights sum to the sample size. Point estimates come from a damped Newton
//! iteration ([`weighted_mle`]); the pseudo-posterior under an independent
//! normal prior is sampled with adaptive random-walk Metropolis
//! ([`fit_pseudo_posterior`]).

mod curve;
mod data;
pub mod diagnostics;
mod likelihood;
pub mod mcmc;
mod mle;

use thiserror::Error;

pub(crate) use curve::quantile_sorted;
pub use curve::{curve_from_draws, curve_from_fit, curve_from_point, write_curve_csv, CurvePoint};
pub use data::{normalize_weights, WeightedDataset};
pub use likelihood::{log_expit, pseudo_log_likelihood, pseudo_score, observed_information};
pub use mcmc::{fit_pseudo_posterior, McmcConfig, PosteriorFit, PriorSpec};
pub use mle::{weighted_mle, IterationTrace, MleFit};

#[derive(Debug, Error)]
pub enum FitError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("separation detected after {iterations} iterations (max |beta| = {max_abs_beta:.3})")]
    Separation {
        iterations: usize,
        max_abs_beta: f64,
        trace: Vec<IterationTrace>,
    },
    #[error("Newton iteration did not converge in {iterations} iterations (gradient norm {grad_norm:e})")]
    NotConverged {
        iterations: usize,
        grad_norm: f64,
        trace: Vec<IterationTrace>,
    },
    #[error("observed information is not positive definite")]
    SingularInformation,
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for FitError {
    fn from(e: std::io::Error) -> Self {
        FitError::Io(e.to_string())
    }
}

impl From<csv::Error> for FitError {
    fn from(e: csv::Error) -> Self {
        FitError::Io(e.to_string())
    }
}
