//! Adaptive random-walk Metropolis for the pseudo-posterior.
//!
//! Proposals are multivariate normal. During warmup the proposal covariance is
//! periodically reset to the empirical covariance of the warmup draws scaled
//! by `2.38^2 / d`; it is frozen once warmup ends, so the kept draws come from
//! a fixed Metropolis kernel.

use std::fmt::Write as _;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::diagnostics::{effective_sample_size, split_rhat};
use super::likelihood::{observed_information, pseudo_log_likelihood, pseudo_score};
use super::mle::{weighted_mle, MleFit};
use super::{FitError, WeightedDataset};
use crate::rng::{Rng, Seed};

const RHAT_WARN: f64 = 1.05;
const ADAPT_START: usize = 100;
const ADAPT_EVERY: usize = 50;

/// Independent `Normal(0, sd^2)` prior on every coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSpec {
    pub sd: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec { sd: 5.0 }
    }
}

impl PriorSpec {
    pub fn log_density(&self, beta: &[f64]) -> f64 {
        -beta.iter().map(|b| b * b).sum::<f64>() / (2.0 * self.sd * self.sd)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McmcConfig {
    pub chains: usize,
    pub warmup: usize,
    pub iters: usize,
    pub seed: u64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            chains: 4,
            warmup: 1000,
            iters: 2000,
            seed: 0,
        }
    }
}

/// Kept draws and acceptance count from one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainRun {
    pub draws: Vec<Vec<f64>>,
    pub accepted: usize,
}

struct Welford {
    n: usize,
    mean: DVector<f64>,
    m2: DMatrix<f64>,
}

impl Welford {
    fn new(d: usize) -> Self {
        Welford {
            n: 0,
            mean: DVector::zeros(d),
            m2: DMatrix::zeros(d, d),
        }
    }

    fn push(&mut self, x: &DVector<f64>) {
        self.n += 1;
        let delta = x - &self.mean;
        self.mean += &delta / self.n as f64;
        let delta2 = x - &self.mean;
        self.m2 += &delta * delta2.transpose();
    }

    fn covariance(&self) -> Option<DMatrix<f64>> {
        (self.n > 1).then(|| &self.m2 / (self.n as f64 - 1.0))
    }
}

/// Runs one adaptive Metropolis chain targeting `log_target`, starting from
/// `init` with proposal covariance `2.38^2 / d * init_cov`.
pub fn adaptive_metropolis<F>(
    log_target: F,
    init: &[f64],
    init_cov: &DMatrix<f64>,
    warmup: usize,
    iters: usize,
    rng: &mut Rng,
) -> ChainRun
where
    F: Fn(&[f64]) -> f64,
{
    let d = init.len();
    let scale = 2.38 * 2.38 / d as f64;
    let mut chol = (init_cov * scale)
        .cholesky()
        .map(|c| c.l())
        .unwrap_or_else(|| DMatrix::identity(d, d) * scale.sqrt());

    let mut current = DVector::from_column_slice(init);
    let mut current_lp = log_target(init);
    let mut stats = Welford::new(d);
    let mut draws = Vec::with_capacity(iters);
    let mut accepted = 0;

    for t in 0..warmup + iters {
        let z = DVector::from_iterator(d, (0..d).map(|_| StandardNormal.sample(rng)));
        let proposal = &current + &chol * z;
        let lp = log_target(proposal.as_slice());
        let u: f64 = rng.random();
        let accept = lp.is_finite() && (lp - current_lp >= 0.0 || u.ln() < lp - current_lp);
        if accept {
            current = proposal;
            current_lp = lp;
        }

        if t < warmup {
            stats.push(&current);
            let step = t + 1;
            if step >= ADAPT_START && step % ADAPT_EVERY == 0 {
                if let Some(cov) = stats.covariance() {
                    let jitter = 1e-10 * (cov.trace() / d as f64).max(1e-12);
                    let target = (cov + DMatrix::identity(d, d) * jitter) * scale;
                    if let Some(c) = target.cholesky() {
                        chol = c.l();
                    }
                }
            }
        } else {
            if accept {
                accepted += 1;
            }
            draws.push(current.iter().copied().collect());
        }
    }
    ChainRun { draws, accepted }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub acceptance_rate: f64,
    pub r_hat: Vec<f64>,
    pub ess: Vec<f64>,
}

/// Pseudo-posterior draws with summaries.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorFit {
    /// Kept draws, chain-major: chain `c` occupies rows `c*iters..(c+1)*iters`.
    pub draws: Vec<Vec<f64>>,
    pub chains: usize,
    pub iters: usize,
    pub point: Vec<f64>,
    pub sd: Vec<f64>,
    pub mle: Option<MleFit>,
    pub diagnostics: Diagnostics,
    pub warnings: Vec<String>,
}

impl PosteriorFit {
    pub fn n_coef(&self) -> usize {
        self.point.len()
    }

    /// Draws of coefficient `k` in chain `c`.
    pub fn chain(&self, c: usize, k: usize) -> Vec<f64> {
        self.draws[c * self.iters..(c + 1) * self.iters]
            .iter()
            .map(|row| row[k])
            .collect()
    }

    pub fn write_draws_csv<W: Write>(&self, w: W) -> Result<(), FitError> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["chain".to_string(), "iteration".to_string()];
        header.extend((0..self.n_coef()).map(|k| format!("beta{k}")));
        out.write_record(&header)?;
        for (row_idx, row) in self.draws.iter().enumerate() {
            let mut rec = vec![
                (row_idx / self.iters).to_string(),
                (row_idx % self.iters).to_string(),
            ];
            rec.extend(row.iter().map(|v| v.to_string()));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "chains = {}", self.chains);
        let _ = writeln!(s, "iterations = {}", self.iters);
        let _ = writeln!(s, "acceptance_rate = {}", self.diagnostics.acceptance_rate);
        for k in 0..self.n_coef() {
            let _ = writeln!(s, "beta{k}.mean = {}", self.point[k]);
            let _ = writeln!(s, "beta{k}.sd = {}", self.sd[k]);
            let _ = writeln!(s, "beta{k}.r_hat = {}", self.diagnostics.r_hat[k]);
            let _ = writeln!(s, "beta{k}.ess = {}", self.diagnostics.ess[k]);
            if let Some(mle) = &self.mle {
                let _ = writeln!(s, "beta{k}.mle = {}", mle.beta[k]);
                let _ = writeln!(s, "beta{k}.mle_se = {}", mle.se[k]);
            }
        }
        for w in &self.warnings {
            let _ = writeln!(s, "warning = {w}");
        }
        s
    }
}

/// Posterior mode under the normal prior, used to start chains when the
/// unpenalized MLE does not exist.
fn posterior_mode(data: &WeightedDataset, prior: &PriorSpec) -> Result<Vec<f64>, FitError> {
    let p = data.n_coef();
    let precision = 1.0 / (prior.sd * prior.sd);
    let objective = |b: &[f64]| pseudo_log_likelihood(data, b) + prior.log_density(b);
    let mut beta = vec![0.0; p];
    let mut value = objective(&beta);
    for _ in 0..200 {
        let mut grad = pseudo_score(data, &beta);
        for (g, b) in grad.iter_mut().zip(&beta) {
            *g -= precision * b;
        }
        if grad.iter().map(|g| g * g).sum::<f64>().sqrt() < 1e-8 {
            return Ok(beta);
        }
        let info = observed_information(data, &beta) + DMatrix::identity(p, p) * precision;
        let step = info
            .cholesky()
            .ok_or(FitError::SingularInformation)?
            .solve(&DVector::from_vec(grad));
        let mut scale = 1.0;
        loop {
            let cand: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + scale * s).collect();
            let v = objective(&cand);
            if v >= value - 1e-12 * value.abs().max(1.0) || scale < 1e-12 {
                beta = cand;
                value = v;
                break;
            }
            scale *= 0.5;
        }
    }
    Ok(beta)
}

/// Samples the pseudo-posterior `exp(pseudo_ll(beta)) * prior(beta)`.
///
/// Chains start at the weighted MLE (or the posterior mode when the MLE does
/// not exist) and run concurrently with seeds derived from `cfg.seed`.
pub fn fit_pseudo_posterior(
    data: &WeightedDataset,
    prior: &PriorSpec,
    cfg: &McmcConfig,
) -> Result<PosteriorFit, FitError> {
    if !(prior.sd > 0.0 && prior.sd.is_finite()) {
        return Err(FitError::InvalidInput(format!("prior sd must be positive, got {}", prior.sd)));
    }
    if cfg.chains == 0 || cfg.iters < 4 {
        return Err(FitError::InvalidInput("need at least one chain and four kept draws".into()));
    }
    let p = data.n_coef();
    let mut warnings = Vec::new();

    let mle = if data.is_empty() {
        None
    } else {
        match weighted_mle(data) {
            Ok(fit) => Some(fit),
            Err(e @ (FitError::Separation { .. } | FitError::NotConverged { .. })) => {
                warnings.push(format!("weighted MLE unavailable ({e}); chains start at the posterior mode"));
                None
            }
            Err(e) => return Err(e),
        }
    };
    let init = match (&mle, data.is_empty()) {
        (Some(fit), _) => fit.beta.clone(),
        (None, true) => vec![0.0; p],
        (None, false) => posterior_mode(data, prior)?,
    };
    let precision = DMatrix::identity(p, p) / (prior.sd * prior.sd);
    let init_cov = (observed_information(data, &init) + precision)
        .try_inverse()
        .ok_or(FitError::SingularInformation)?;

    let log_target = |b: &[f64]| pseudo_log_likelihood(data, b) + prior.log_density(b);
    let root = Seed::new(cfg.seed);
    let runs: Vec<ChainRun> = (0..cfg.chains)
        .into_par_iter()
        .map(|c| {
            let mut rng = root.child(c as u64).rng();
            adaptive_metropolis(log_target, &init, &init_cov, cfg.warmup, cfg.iters, &mut rng)
        })
        .collect();

    let accepted: usize = runs.iter().map(|r| r.accepted).sum();
    let draws: Vec<Vec<f64>> = runs.into_iter().flat_map(|r| r.draws).collect();
    let total = draws.len() as f64;
    let point: Vec<f64> = (0..p).map(|k| draws.iter().map(|d| d[k]).sum::<f64>() / total).collect();
    let sd: Vec<f64> = (0..p)
        .map(|k| {
            (draws.iter().map(|d| (d[k] - point[k]).powi(2)).sum::<f64>() / (total - 1.0)).sqrt()
        })
        .collect();

    let mut fit = PosteriorFit {
        draws,
        chains: cfg.chains,
        iters: cfg.iters,
        point,
        sd,
        mle,
        diagnostics: Diagnostics {
            acceptance_rate: accepted as f64 / total,
            r_hat: Vec::new(),
            ess: Vec::new(),
        },
        warnings,
    };
    for k in 0..p {
        let per_chain: Vec<Vec<f64>> = (0..cfg.chains).map(|c| fit.chain(c, k)).collect();
        let refs: Vec<&[f64]> = per_chain.iter().map(|c| c.as_slice()).collect();
        let r = split_rhat(&refs);
        if r > RHAT_WARN {
            fit.warnings.push(format!("beta{k}: potential scale reduction {r:.4} > {RHAT_WARN}"));
        }
        fit.diagnostics.r_hat.push(r);
        fit.diagnostics.ess.push(effective_sample_size(&refs));
    }
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_target_variance() {
        // log p(x) = -x^2 / (2 * 4): variance 4.
        let mut rng = Seed::new(5).rng();
        let run = adaptive_metropolis(
            |x: &[f64]| -x[0] * x[0] / 8.0,
            &[0.0],
            &DMatrix::from_element(1, 1, 1.0),
            2000,
            100_000,
            &mut rng,
        );
        let n = run.draws.len() as f64;
        let m = run.draws.iter().map(|d| d[0]).sum::<f64>() / n;
        let v = run.draws.iter().map(|d| (d[0] - m).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((v - 4.0).abs() / 4.0 < 0.05, "variance {v}");
        let rate = run.accepted as f64 / n;
        assert!(rate > 0.2 && rate < 0.7, "acceptance {rate}");
    }

    #[test]
    fn prior_only_recovers_prior() {
        let data = WeightedDataset::empty(2);
        let prior = PriorSpec { sd: 5.0 };
        let cfg = McmcConfig {
            chains: 4,
            warmup: 1000,
            iters: 10_000,
            seed: 3,
        };
        let fit = fit_pseudo_posterior(&data, &prior, &cfg).unwrap();
        for k in 0..2 {
            // ESS of several thousand: mean error sd ~ 5 / sqrt(ess)
            let mc = 5.0 / fit.diagnostics.ess[k].sqrt();
            assert!(fit.point[k].abs() < 4.0 * mc, "mean {} mc {mc}", fit.point[k]);
            assert!((fit.sd[k] - 5.0).abs() < 0.1 * 5.0, "sd {}", fit.sd[k]);
        }
        assert!(fit.mle.is_none());
    }

    #[test]
    fn same_seed_same_draws() {
        let data = WeightedDataset::marginal(
            &[-1.0, -0.5, 0.0, 0.2, 0.9, 1.4, -0.3, 0.6],
            &[0, 1, 0, 1, 1, 1, 0, 0],
            &[1.0, 2.0, 1.0, 3.0, 1.0, 1.0, 2.0, 1.0],
        )
        .unwrap();
        let cfg = McmcConfig {
            chains: 3,
            warmup: 200,
            iters: 300,
            seed: 8,
        };
        let a = fit_pseudo_posterior(&data, &PriorSpec::default(), &cfg).unwrap();
        let b = fit_pseudo_posterior(&data, &PriorSpec::default(), &cfg).unwrap();
        assert_eq!(a.draws, b.draws);
        assert_eq!(a.draws.len(), 900);
    }

    #[test]
    fn separated_data_still_samples() {
        let data =
            WeightedDataset::marginal(&[-2.0, -1.0, 1.0, 2.0], &[0, 0, 1, 1], &[1.0; 4]).unwrap();
        let cfg = McmcConfig {
            chains: 2,
            warmup: 300,
            iters: 500,
            seed: 1,
        };
        let fit = fit_pseudo_posterior(&data, &PriorSpec::default(), &cfg).unwrap();
        assert!(fit.mle.is_none());
        assert!(!fit.warnings.is_empty());
        assert!(fit.draws.iter().flatten().all(|v| v.is_finite()));
    }

    #[test]
    fn bad_prior_rejected() {
        let data = WeightedDataset::empty(2);
        let cfg = McmcConfig::default();
        assert!(fit_pseudo_posterior(&data, &PriorSpec { sd: 0.0 }, &cfg).is_err());
    }

    fn simulated(n: usize, seed: u64) -> WeightedDataset {
        use rand::Rng as _;
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = Seed::new(seed).rng();
        let x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let y: Vec<u8> = x
            .iter()
            .map(|&xi| u8::from(rng.random::<f64>() < crate::synthpop::expit(-0.8 + 1.2 * xi)))
            .collect();
        WeightedDataset::marginal(&x, &y, &vec![1.0; n]).unwrap()
    }

    #[test]
    fn posterior_mean_tracks_mle_at_n_400() {
        let data = simulated(400, 17);
        for sd in [5.0, 100.0] {
            let fit = fit_pseudo_posterior(&data, &PriorSpec { sd }, &McmcConfig { seed: 4, ..McmcConfig::default() }).unwrap();
            let mle = fit.mle.as_ref().unwrap();
            for k in 0..2 {
                assert!((fit.point[k] - mle.beta[k]).abs() < 0.05, "sd {sd}: {:?} vs {:?}", fit.point, mle.beta);
                assert!((fit.sd[k] / mle.se[k] - 1.0).abs() < 0.2, "sd {sd}: {:?} vs {:?}", fit.sd, mle.se);
            }
        }
    }
}
