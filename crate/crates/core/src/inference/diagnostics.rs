//! Convergence diagnostics for multi-chain MCMC output.
//!
//! Split potential-scale-reduction and a multi-chain effective sample size
//! using Geyer's initial monotone sequence on the combined autocorrelation.

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sample_var(x: &[f64], m: f64) -> f64 {
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Split R-hat for one parameter. Each chain is cut in half; returns NaN for
/// chains shorter than 4 draws or zero within-chain variance.
pub fn split_rhat(chains: &[&[f64]]) -> f64 {
    let len = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    if chains.is_empty() || len < 4 {
        return f64::NAN;
    }
    let half = len / 2;
    let halves: Vec<&[f64]> = chains
        .iter()
        .flat_map(|c| [&c[..half], &c[len - half..len]])
        .collect();
    let m = halves.len() as f64;
    let n = half as f64;
    let means: Vec<f64> = halves.iter().map(|h| mean(h)).collect();
    let grand = mean(&means);
    let b = n / (m - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let w = halves
        .iter()
        .zip(&means)
        .map(|(h, &hm)| sample_var(h, hm))
        .sum::<f64>()
        / m;
    if !(w > 0.0) {
        return f64::NAN;
    }
    (((n - 1.0) / n * w + b / n) / w).sqrt()
}

fn autocovariance(x: &[f64], m: f64, lag: usize) -> f64 {
    let n = x.len();
    x[..n - lag]
        .iter()
        .zip(&x[lag..])
        .map(|(a, b)| (a - m) * (b - m))
        .sum::<f64>()
        / n as f64
}

/// Effective sample size across chains of equal length.
pub fn effective_sample_size(chains: &[&[f64]]) -> f64 {
    let len = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    if chains.is_empty() || len < 4 {
        return f64::NAN;
    }
    let chains: Vec<&[f64]> = chains.iter().map(|c| &c[..len]).collect();
    let m = chains.len() as f64;
    let n = len as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let vars: Vec<f64> = chains.iter().zip(&means).map(|(c, &cm)| sample_var(c, cm)).collect();
    let w = mean(&vars);
    let b = if chains.len() > 1 {
        let grand = mean(&means);
        n / (m - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>()
    } else {
        0.0
    };
    let var_plus = (n - 1.0) / n * w + b / n;
    if !(var_plus > 0.0) {
        return f64::NAN;
    }

    let rho = |lag: usize| -> f64 {
        let acov = chains
            .iter()
            .zip(&means)
            .map(|(c, &cm)| autocovariance(c, cm, lag))
            .sum::<f64>()
            / m;
        1.0 - (w - acov) / var_plus
    };

    // Geyer: sum consecutive pairs while positive, forcing monotone decrease.
    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut lag = 0;
    while lag + 1 < len {
        let mut pair = rho(lag) + rho(lag + 1);
        if pair <= 0.0 {
            break;
        }
        pair = pair.min(prev_pair);
        tau += 2.0 * pair;
        prev_pair = pair;
        lag += 2;
    }
    let tau = tau.max(1.0 / (m * n).log10().max(1.0));
    m * n / tau
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Seed;
    use rand_distr::{Distribution, StandardNormal};

    fn white_noise(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = Seed::new(seed).rng();
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn iid_chains_look_converged() {
        let chains: Vec<Vec<f64>> = (0..4).map(|s| white_noise(s, 2000)).collect();
        let refs: Vec<&[f64]> = chains.iter().map(|c| c.as_slice()).collect();
        let r = split_rhat(&refs);
        assert!((r - 1.0).abs() < 0.01, "rhat {r}");
        let ess = effective_sample_size(&refs);
        assert!(ess > 5000.0 && ess < 12000.0, "ess {ess}");
    }

    #[test]
    fn shifted_chains_flagged() {
        let mut chains: Vec<Vec<f64>> = (0..4).map(|s| white_noise(10 + s, 500)).collect();
        for v in chains[0].iter_mut() {
            *v += 3.0;
        }
        let refs: Vec<&[f64]> = chains.iter().map(|c| c.as_slice()).collect();
        assert!(split_rhat(&refs) > 1.5);
    }

    #[test]
    fn ar1_chain_has_reduced_ess() {
        let noise = white_noise(99, 20_000);
        let mut x = vec![0.0; noise.len()];
        for i in 1..x.len() {
            x[i] = 0.9 * x[i - 1] + noise[i];
        }
        // tau = (1 + 0.9) / (1 - 0.9) = 19
        let ess = effective_sample_size(&[&x]);
        assert!(ess > 20_000.0 / 30.0 && ess < 20_000.0 / 12.0, "ess {ess}");
    }

    #[test]
    fn short_chains_nan() {
        assert!(split_rhat(&[&[1.0, 2.0]]).is_nan());
        assert!(effective_sample_size(&[]).is_nan());
    }
}
