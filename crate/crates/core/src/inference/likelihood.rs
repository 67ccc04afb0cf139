use nalgebra::{DMatrix, DVector};

use super::WeightedDataset;
use crate::synthpop::expit;

/// `log(expit(eta))` without overflow: `-log1p(exp(-eta))` for positive
/// arguments and `eta - log1p(exp(eta))` otherwise.
pub fn log_expit(eta: f64) -> f64 {
    if eta >= 0.0 {
        -(-eta).exp().ln_1p()
    } else {
        eta - eta.exp().ln_1p()
    }
}

fn linear_predictor(data: &WeightedDataset, beta: &[f64]) -> DVector<f64> {
    data.x() * DVector::from_column_slice(beta)
}

/// `sum_i w*_i [y_i log(theta_i) + (1 - y_i) log(1 - theta_i)]` with
/// `theta_i = expit(x_i' beta)`.
pub fn pseudo_log_likelihood(data: &WeightedDataset, beta: &[f64]) -> f64 {
    let eta = linear_predictor(data, beta);
    eta.iter()
        .zip(data.y())
        .zip(data.weights())
        .map(|((&e, &y), &w)| w * if y == 1 { log_expit(e) } else { log_expit(-e) })
        .sum()
}

/// Gradient of [`pseudo_log_likelihood`]: `X' (w* (y - theta))`.
pub fn pseudo_score(data: &WeightedDataset, beta: &[f64]) -> Vec<f64> {
    let eta = linear_predictor(data, beta);
    let resid = DVector::from_iterator(
        eta.len(),
        eta.iter()
            .zip(data.y())
            .zip(data.weights())
            .map(|((&e, &y), &w)| w * (f64::from(y) - expit(e))),
    );
    (data.x().transpose() * resid).iter().copied().collect()
}

/// Weighted observed information `X' diag(w* theta (1 - theta)) X`, the
/// negated Hessian of [`pseudo_log_likelihood`].
pub fn observed_information(data: &WeightedDataset, beta: &[f64]) -> DMatrix<f64> {
    let eta = linear_predictor(data, beta);
    let p = data.n_coef();
    let mut info = DMatrix::zeros(p, p);
    for (i, (&e, &w)) in eta.iter().zip(data.weights()).enumerate() {
        let t = expit(e);
        let v = w * t * (1.0 - t);
        let row = data.x().row(i);
        for a in 0..p {
            for b in 0..=a {
                info[(a, b)] += v * row[a] * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            info[(b, a)] = info[(a, b)];
        }
    }
    info
}
