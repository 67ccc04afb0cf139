//! Systematic sampling after sorting.
//!
//! Units are sorted by a key (ties broken by ascending unit id). In equal
//! probability mode the interval is the real number `k = M / n`; a start
//! `u ~ Uniform[0, k)` selects sorted positions `floor(u + j k)` for
//! `j = 0..n`. In PPS mode the same walk runs along cumulative size with step
//! `sum(size) / n`.
//!
//! Because the outcome is a step function of `u`, the design's full outcome
//! space can be enumerated exactly from the breakpoints of that function.

use rand::Rng as _;

use super::DesignError;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SystematicMode<'a> {
    Equal,
    /// Sizes aligned with the `ids` slice.
    Pps(&'a [f64]),
}

/// Positions of `ids` sorted by `(key, id)`.
pub fn sorted_order(ids: &[usize], keys: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]).then(ids[a].cmp(&ids[b])));
    order
}

/// Cumulative boundaries of the walk in sorted order: `bounds[p]..bounds[p+1]`
/// is the segment owned by sorted position `p`.
fn boundaries(order: &[usize], mode: SystematicMode<'_>) -> Vec<f64> {
    let mut bounds = Vec::with_capacity(order.len() + 1);
    bounds.push(0.0);
    let mut acc = 0.0;
    for &pos in order {
        acc += match mode {
            SystematicMode::Equal => 1.0,
            SystematicMode::Pps(sizes) => sizes[pos],
        };
        bounds.push(acc);
    }
    bounds
}

fn locate(bounds: &[f64], point: f64) -> usize {
    // Last p with bounds[p] <= point.
    let p = bounds.partition_point(|&b| b <= point);
    p.saturating_sub(1).min(bounds.len() - 2)
}

fn validate(
    ids: &[usize],
    keys: &[f64],
    n: usize,
    mode: SystematicMode<'_>,
) -> Result<f64, DesignError> {
    if keys.len() != ids.len() {
        return Err(DesignError::Invalid("ids and keys differ in length".into()));
    }
    if n == 0 || n > ids.len() {
        return Err(DesignError::SampleSize {
            requested: n,
            available: ids.len(),
        });
    }
    match mode {
        SystematicMode::Equal => Ok(ids.len() as f64 / n as f64),
        SystematicMode::Pps(sizes) => {
            if sizes.len() != ids.len() {
                return Err(DesignError::Invalid("ids and sizes differ in length".into()));
            }
            if let Some(p) = sizes.iter().position(|s| !(*s > 0.0 && s.is_finite())) {
                return Err(DesignError::InvalidSize { position: p, value: sizes[p] });
            }
            let step = sizes.iter().sum::<f64>() / n as f64;
            let certain: Vec<usize> = sizes
                .iter()
                .zip(ids)
                .filter(|(s, _)| **s >= step)
                .map(|(_, &id)| id)
                .collect();
            if certain.is_empty() {
                Ok(step)
            } else {
                Err(DesignError::CertaintyUnits(certain))
            }
        }
    }
}

fn select(bounds: &[f64], order: &[usize], ids: &[usize], n: usize, step: f64, u: f64) -> Vec<usize> {
    let mut out: Vec<usize> = (0..n)
        .map(|j| ids[order[locate(bounds, u + j as f64 * step)]])
        .collect();
    out.sort_unstable();
    out
}

/// One systematic sample; returns the selected ids in ascending order.
pub fn draw_systematic(
    ids: &[usize],
    keys: &[f64],
    n: usize,
    mode: SystematicMode<'_>,
    rng: &mut Rng,
) -> Result<Vec<usize>, DesignError> {
    let step = validate(ids, keys, n, mode)?;
    let order = sorted_order(ids, keys);
    let bounds = boundaries(&order, mode);
    let u = rng.random::<f64>() * step;
    Ok(select(&bounds, &order, ids, n, step, u))
}

/// Every distinct outcome of the design with its probability. Outcomes are
/// ascending id lists, returned in order of the random start.
pub fn systematic_outcomes(
    ids: &[usize],
    keys: &[f64],
    n: usize,
    mode: SystematicMode<'_>,
) -> Result<Vec<(Vec<usize>, f64)>, DesignError> {
    let step = validate(ids, keys, n, mode)?;
    let order = sorted_order(ids, keys);
    let bounds = boundaries(&order, mode);

    // The j-th point crosses boundary b when u = b - j * step.
    let mut cuts = vec![0.0, step];
    for j in 0..n {
        let offset = j as f64 * step;
        for &b in &bounds {
            let u = b - offset;
            if u > 0.0 && u < step {
                cuts.push(u);
            }
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * step.max(1.0));

    let mut outcomes: Vec<(Vec<usize>, f64)> = Vec::new();
    for w in cuts.windows(2) {
        let len = w[1] - w[0];
        if len <= 0.0 {
            continue;
        }
        let sample = select(&bounds, &order, ids, n, step, 0.5 * (w[0] + w[1]));
        let prob = len / step;
        match outcomes.iter_mut().find(|(s, _)| *s == sample) {
            Some(existing) => existing.1 += prob,
            None => outcomes.push((sample, prob)),
        }
    }
    Ok(outcomes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Seed;

    #[test]
    fn ten_choose_five_has_two_parity_outcomes() {
        let ids: Vec<usize> = (0..10).collect();
        let keys: Vec<f64> = ids.iter().map(|&i| i as f64).collect();
        let out = systematic_outcomes(&ids, &keys, 5, SystematicMode::Equal).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0], (vec![0, 2, 4, 6, 8], 0.5));
        assert_eq!(out[1], (vec![1, 3, 5, 7, 9], 0.5));
    }

    #[test]
    fn parity_follows_sort_order_not_ids() {
        let ids: Vec<usize> = (0..4).collect();
        let keys = [3.0, 1.0, 2.0, 0.0];
        // Sorted: 3, 1, 2, 0.
        let out = systematic_outcomes(&ids, &keys, 2, SystematicMode::Equal).unwrap();
        assert_eq!(out, vec![(vec![2, 3], 0.5), (vec![0, 1], 0.5)]);
    }

    #[test]
    fn ties_break_by_id() {
        let ids = [7, 3, 5, 1];
        let keys = [1.0; 4];
        assert_eq!(sorted_order(&ids, &keys), vec![3, 1, 2, 0]);
    }

    #[test]
    fn fractional_interval_first_order_is_n_over_m() {
        let ids: Vec<usize> = (0..7).collect();
        let keys: Vec<f64> = ids.iter().map(|&i| (i * 5 % 7) as f64).collect();
        let out = systematic_outcomes(&ids, &keys, 3, SystematicMode::Equal).unwrap();
        let total: f64 = out.iter().map(|o| o.1).sum();
        assert!((total - 1.0).abs() < 1e-12);
        for id in 0..7 {
            let p: f64 = out.iter().filter(|(s, _)| s.contains(&id)).map(|o| o.1).sum();
            assert!((p - 3.0 / 7.0).abs() < 1e-12, "unit {id}: {p}");
        }
        assert!(out.iter().all(|(s, _)| s.len() == 3));
    }

    #[test]
    fn pps_first_order_proportional() {
        let ids: Vec<usize> = (0..5).collect();
        let sizes = [1.0, 2.0, 3.0, 1.5, 2.5];
        let keys = [5.0, 4.0, 3.0, 2.0, 1.0];
        let out = systematic_outcomes(&ids, &keys, 2, SystematicMode::Pps(&sizes)).unwrap();
        for id in 0..5 {
            let p: f64 = out.iter().filter(|(s, _)| s.contains(&id)).map(|o| o.1).sum();
            assert!((p - 2.0 * sizes[id] / 10.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pps_certainty_units_reported() {
        let ids = [10, 11, 12];
        let err = draw_systematic(&ids, &[0.0, 1.0, 2.0], 2, SystematicMode::Pps(&[5.0, 1.0, 1.0]), &mut Seed::new(1).rng());
        match err {
            Err(DesignError::CertaintyUnits(u)) => assert_eq!(u, vec![10]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn draw_is_deterministic_under_seed() {
        let ids: Vec<usize> = (0..50).collect();
        let keys: Vec<f64> = ids.iter().map(|&i| ((i * 37) % 50) as f64).collect();
        let a = draw_systematic(&ids, &keys, 7, SystematicMode::Equal, &mut Seed::new(3).rng()).unwrap();
        let b = draw_systematic(&ids, &keys, 7, SystematicMode::Equal, &mut Seed::new(3).rng()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 7);
    }
}
