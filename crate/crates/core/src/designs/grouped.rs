//! One unit per group, drawn with probability proportional to size.

use std::ops::Range;

use rand::Rng as _;

use super::DesignError;
use crate::rng::Rng;

/// `size_i / sum(size)` over one group.
pub fn within_group_inclusion(sizes: &[f64]) -> Result<Vec<f64>, DesignError> {
    if sizes.is_empty() {
        return Err(DesignError::Invalid("empty group".into()));
    }
    if let Some(p) = sizes.iter().position(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(DesignError::InvalidSize { position: p, value: sizes[p] });
    }
    let total: f64 = sizes.iter().sum();
    Ok(sizes.iter().map(|s| s / total).collect())
}

fn pick(sizes: &[f64], rng: &mut Rng) -> usize {
    let total: f64 = sizes.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (k, &s) in sizes.iter().enumerate() {
        if u < s {
            return k;
        }
        u -= s;
    }
    sizes.len() - 1
}

/// Selects exactly one index from every group, independently across groups.
/// `groups` index into `sizes`; the result holds one index per group in group
/// order.
pub fn draw_one_pps_per_group(
    groups: &[Range<usize>],
    sizes: &[f64],
    rng: &mut Rng,
) -> Result<Vec<usize>, DesignError> {
    for g in groups {
        if g.end > sizes.len() {
            return Err(DesignError::Invalid(format!("group {g:?} exceeds {} units", sizes.len())));
        }
        within_group_inclusion(&sizes[g.clone()])?;
    }
    Ok(groups
        .iter()
        .map(|g| g.start + pick(&sizes[g.clone()], rng))
        .collect())
}
