//! Fixed-size πps sampling with Brewer's draw-by-draw procedure.
//!
//! Target probabilities are `n * size / sum(size)`, with units whose target
//! reaches one taken with certainty and the remaining sample size
//! redistributed over the rest until no target exceeds one. The sample is then
//! realized by `n` successive draws; at draw `i` an unselected unit `k` is
//! chosen with probability proportional to
//!
//! ```text
//! pi_k (n - a - pi_k) / (n - a - pi_k (n - i + 1))
//! ```
//!
//! where `a` is the summed target of the units already drawn. This choice
//! reproduces the targets exactly as first-order inclusion probabilities.

use rand::Rng as _;

use super::DesignError;
use crate::rng::{Rng, Seed};

const CERTAIN: f64 = 1.0 - 1e-12;

/// Capped-proportional inclusion probabilities summing to `n`.
pub fn brewer_pps_inclusion(sizes: &[f64], n: usize) -> Result<Vec<f64>, DesignError> {
    check_sizes(sizes)?;
    if n == 0 || n > sizes.len() {
        return Err(DesignError::SampleSize {
            requested: n,
            available: sizes.len(),
        });
    }
    let mut certain = vec![false; sizes.len()];
    loop {
        let remaining = n - certain.iter().filter(|c| **c).count();
        let total: f64 = sizes.iter().zip(&certain).filter(|(_, c)| !**c).map(|(s, _)| s).sum();
        let mut changed = false;
        for (i, s) in sizes.iter().enumerate() {
            if !certain[i] && remaining as f64 * s / total >= 1.0 {
                certain[i] = true;
                changed = true;
            }
        }
        if !changed {
            return Ok(sizes
                .iter()
                .zip(&certain)
                .map(|(s, &c)| if c { 1.0 } else { remaining as f64 * s / total })
                .collect());
        }
    }
}

fn check_sizes(sizes: &[f64]) -> Result<(), DesignError> {
    match sizes.iter().position(|s| !(*s > 0.0 && s.is_finite())) {
        Some(i) => Err(DesignError::InvalidSize { position: i, value: sizes[i] }),
        None => Ok(()),
    }
}

/// One Brewer draw-by-draw selection for target probabilities `pi` (which
/// must sum to an integer). Returns selected positions in ascending order.
pub fn brewer_select(pi: &[f64], rng: &mut Rng) -> Vec<usize> {
    let n = pi.iter().sum::<f64>().round() as usize;
    let mut selected = vec![false; pi.len()];
    let mut chosen: Vec<usize> = Vec::with_capacity(n);
    for (i, &p) in pi.iter().enumerate() {
        if p >= CERTAIN {
            selected[i] = true;
            chosen.push(i);
        }
    }
    let draws = n - chosen.len();
    let mut a = 0.0;
    let mut weights = vec![0.0; pi.len()];
    for step in 1..=draws {
        let remaining = (draws - step + 1) as f64;
        let free = draws as f64 - a;
        let mut total = 0.0;
        for (k, &p) in pi.iter().enumerate() {
            weights[k] = if selected[k] || p <= 0.0 {
                0.0
            } else {
                (p * (free - p) / (free - p * remaining)).max(0.0)
            };
            total += weights[k];
        }
        let mut u = rng.random::<f64>() * total;
        let mut pick = None;
        for (k, &w) in weights.iter().enumerate() {
            if w > 0.0 {
                pick = Some(k);
                if u < w {
                    break;
                }
                u -= w;
            }
        }
        let k = pick.expect("at least one unit remains eligible");
        selected[k] = true;
        chosen.push(k);
        a += pi[k];
    }
    chosen.sort_unstable();
    chosen
}

/// Draws `n` distinct positions with Brewer's procedure on `sizes`.
pub fn draw_brewer_pps(sizes: &[f64], n: usize, seed: Seed) -> Result<Vec<usize>, DesignError> {
    let pi = brewer_pps_inclusion(sizes, n)?;
    Ok(brewer_select(&pi, &mut seed.rng()))
}

/// Exact outcome distribution of [`brewer_select`] by dynamic programming over
/// subsets. Returns `(bitmask, probability)` pairs; limited to 24 units.
pub fn brewer_outcomes(pi: &[f64]) -> Result<Vec<(u32, f64)>, DesignError> {
    let len = pi.len();
    if len > 24 {
        return Err(DesignError::Unsupported(format!(
            "exact Brewer enumeration is limited to 24 units, got {len}"
        )));
    }
    let n = pi.iter().sum::<f64>().round() as usize;
    let certain: u32 = pi
        .iter()
        .enumerate()
        .filter(|(_, p)| **p >= CERTAIN)
        .fold(0, |m, (i, _)| m | (1 << i));
    let draws = n - certain.count_ones() as usize;
    let mut layer: Vec<(u32, f64)> = vec![(certain, 1.0)];
    for step in 1..=draws {
        let remaining = (draws - step + 1) as f64;
        let mut next = std::collections::BTreeMap::<u32, f64>::new();
        for &(mask, prob) in &layer {
            let a: f64 = (0..len)
                .filter(|&k| mask & (1 << k) != 0 && certain & (1 << k) == 0)
                .map(|k| pi[k])
                .sum();
            let free = draws as f64 - a;
            let w: Vec<f64> = (0..len)
                .map(|k| {
                    if mask & (1 << k) != 0 || pi[k] <= 0.0 {
                        0.0
                    } else {
                        (pi[k] * (free - pi[k]) / (free - pi[k] * remaining)).max(0.0)
                    }
                })
                .collect();
            let total: f64 = w.iter().sum();
            for (k, wk) in w.iter().enumerate() {
                if *wk > 0.0 {
                    *next.entry(mask | (1 << k)).or_insert(0.0) += prob * wk / total;
                }
            }
        }
        layer = next.into_iter().collect();
    }
    Ok(layer)
}
