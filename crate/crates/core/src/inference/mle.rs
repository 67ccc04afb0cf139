use nalgebra::{DMatrix, DVector};

use super::likelihood::{observed_information, pseudo_log_likelihood, pseudo_score};
use super::{FitError, WeightedDataset};

const MAX_ITERATIONS: usize = 100;
const GRAD_TOL: f64 = 1e-8;
const SEPARATION_BOUND: f64 = 15.0;
const MAX_HALVINGS: usize = 60;

#[derive(Debug, Clone, PartialEq)]
pub struct IterationTrace {
    pub iteration: usize,
    pub log_likelihood: f64,
    pub grad_norm: f64,
    pub step_scale: f64,
}

/// Weighted maximum-likelihood estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct MleFit {
    pub beta: Vec<f64>,
    /// Standard errors from the inverse weighted observed information.
    pub se: Vec<f64>,
    /// Inverse observed information at `beta`.
    pub covariance: DMatrix<f64>,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<IterationTrace>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Maximizes the pseudo-log-likelihood by Newton iteration with step halving.
///
/// Exits when the score norm drops below 1e-8. Separation is declared when the
/// coefficients leave `[-15, 15]` while the score is still shrinking.
pub fn weighted_mle(data: &WeightedDataset) -> Result<MleFit, FitError> {
    let p = data.n_coef();
    if data.len() < p {
        return Err(FitError::InvalidInput(format!(
            "need at least {p} observations, got {}",
            data.len()
        )));
    }

    let mut beta = vec![0.0; p];
    let mut ll = pseudo_log_likelihood(data, &beta);
    let mut grad = pseudo_score(data, &beta);
    let mut trace = vec![IterationTrace {
        iteration: 0,
        log_likelihood: ll,
        grad_norm: norm(&grad),
        step_scale: 0.0,
    }];

    for iteration in 1..=MAX_ITERATIONS {
        let g_norm = norm(&grad);
        if g_norm < GRAD_TOL {
            return finish(data, beta, ll, iteration - 1, trace);
        }

        let info = observed_information(data, &beta);
        let chol = info.cholesky().ok_or(FitError::SingularInformation)?;
        let step = chol.solve(&DVector::from_column_slice(&grad));

        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let cand: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + scale * s).collect();
            let cand_ll = pseudo_log_likelihood(data, &cand);
            if cand_ll.is_finite() && cand_ll >= ll - 1e-12 * ll.abs().max(1.0) {
                accepted = Some((cand, cand_ll));
                break;
            }
            scale *= 0.5;
        }
        let Some((cand, cand_ll)) = accepted else {
            return Err(FitError::NotConverged {
                iterations: iteration,
                grad_norm: g_norm,
                trace,
            });
        };

        beta = cand;
        ll = cand_ll;
        grad = pseudo_score(data, &beta);
        let new_norm = norm(&grad);
        trace.push(IterationTrace {
            iteration,
            log_likelihood: ll,
            grad_norm: new_norm,
            step_scale: scale,
        });

        if max_abs(&beta) > SEPARATION_BOUND && new_norm < g_norm {
            return Err(FitError::Separation {
                iterations: iteration,
                max_abs_beta: max_abs(&beta),
                trace,
            });
        }
    }

    if norm(&grad) < GRAD_TOL {
        return finish(data, beta, ll, MAX_ITERATIONS, trace);
    }
    Err(FitError::NotConverged {
        iterations: MAX_ITERATIONS,
        grad_norm: norm(&grad),
        trace,
    })
}

fn finish(
    data: &WeightedDataset,
    beta: Vec<f64>,
    ll: f64,
    iterations: usize,
    trace: Vec<IterationTrace>,
) -> Result<MleFit, FitError> {
    let covariance = observed_information(data, &beta)
        .try_inverse()
        .ok_or(FitError::SingularInformation)?;
    let se = (0..beta.len()).map(|i| covariance[(i, i)].sqrt()).collect();
    Ok(MleFit {
        beta,
        se,
        covariance,
        log_likelihood: ll,
        iterations,
        converged: true,
        trace,
    })
}
