use rayon::prelude::*;

use super::{tri_index, tri_len, CrossPairs, InclusionError, InclusionTable, Method, DENSE_PAIR_LIMIT};
use crate::designs::DesignSpec;
use crate::rng::Seed;
use crate::synthpop::Population;

/// Which pairs a Monte Carlo table tracks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PairScope {
    /// First-order probabilities only.
    None,
    /// Every pair (dense; limited to a few thousand units).
    All,
    /// Pairs inside each of the given disjoint unit sets.
    Within(Vec<Vec<usize>>),
}

const MAX_CHUNKS: u64 = 64;

/// Runs `replicates` jobs in parallel, each adding into a zeroed counter
/// vector of length `width`, and sums the vectors. Replicate `r` must derive
/// its randomness from `r` alone; the integer sum makes the result independent
/// of scheduling.
pub(crate) fn parallel_counts<F, E>(replicates: u64, width: usize, job: F) -> Result<Vec<u64>, E>
where
    F: Fn(u64, &mut [u64]) -> Result<(), E> + Sync,
    E: Send,
{
    let chunks = replicates.clamp(1, MAX_CHUNKS);
    let per = replicates.div_ceil(chunks);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![0u64; width];
            for r in c * per..((c + 1) * per).min(replicates) {
                job(r, &mut acc)?;
            }
            Ok(acc)
        })
        .try_reduce(
            || vec![0u64; width],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                Ok(a)
            },
        )
}

/// Estimates inclusion probabilities from `replicates` independent draws of
/// the design; replicate `r` uses `seed.child(r)`.
pub fn monte_carlo_inclusion(
    design: &DesignSpec,
    pop: &Population,
    replicates: u64,
    seed: Seed,
    scope: PairScope,
) -> Result<InclusionTable, InclusionError> {
    if replicates == 0 {
        return Err(InclusionError::Invalid("replicates must be at least 1".into()));
    }
    let n_units = pop.len();
    let members = match scope {
        PairScope::None => vec![],
        PairScope::All => {
            if n_units > DENSE_PAIR_LIMIT {
                return Err(InclusionError::Invalid(format!(
                    "all-pairs Monte Carlo is limited to {DENSE_PAIR_LIMIT} units, got {n_units}"
                )));
            }
            vec![(0..n_units).collect()]
        }
        PairScope::Within(sets) => sets
            .into_iter()
            .map(|mut s| {
                s.sort_unstable();
                s
            })
            .collect(),
    };
    let mut locate = vec![None; n_units];
    let mut offsets = Vec::with_capacity(members.len());
    let mut width = n_units;
    for (b, m) in members.iter().enumerate() {
        for (p, &i) in m.iter().enumerate() {
            if i >= n_units || locate[i].is_some() {
                return Err(InclusionError::Invalid(format!("unit {i} is out of range or in two pair sets")));
            }
            locate[i] = Some((b, p));
        }
        offsets.push(width);
        width += tri_len(m.len());
    }

    let counts = parallel_counts(replicates, width, |r, acc| {
        let sample = design.select(pop, seed.child(r))?;
        let mut placed: Vec<(usize, usize)> = Vec::with_capacity(sample.len());
        for &i in &sample {
            acc[i] += 1;
            if let Some(l) = locate[i] {
                placed.push(l);
            }
        }
        placed.sort_unstable();
        for (x, &(b, p)) in placed.iter().enumerate() {
            let m = members[b].len();
            for &(b2, q) in &placed[x + 1..] {
                if b2 != b {
                    break;
                }
                acc[offsets[b] + tri_index(p, q, m)] += 1;
            }
        }
        Ok::<(), InclusionError>(())
    })?;

    let r = replicates as f64;
    let est = |c: u64| c as f64 / r;
    let se = |p: f64| (p * (1.0 - p) / r).sqrt();
    let pi: Vec<f64> = counts[..n_units].iter().map(|&c| est(c)).collect();
    let pi_se = pi.iter().map(|&p| se(p)).collect();
    let mut within = Vec::with_capacity(members.len());
    let mut within_se = Vec::with_capacity(members.len());
    for (b, m) in members.iter().enumerate() {
        let slice = &counts[offsets[b]..offsets[b] + tri_len(m.len())];
        let w: Vec<f64> = slice.iter().map(|&c| est(c)).collect();
        within_se.push(w.iter().map(|&p| se(p)).collect());
        within.push(w);
    }
    Ok(InclusionTable::new(pi, members, within, CrossPairs::NotComputed, Method::MonteCarlo { replicates })?
        .with_standard_errors(pi_se, within_se))
}
