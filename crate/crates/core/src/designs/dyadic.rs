//! Dyadic partition designs.
//!
//! Units are sorted by a key and split into a low half and a high half; one
//! half is kept with probability 1/2. The stratified variant cuts the sorted
//! order into consecutive strata of fixed size and applies the same rule
//! independently in every stratum.

use rand::Rng as _;

use super::systematic::sorted_order;
use super::DesignError;
use crate::rng::Rng;

/// One stratum's two halves, as ids in sorted order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DyadicStratum {
    pub low: Vec<usize>,
    pub high: Vec<usize>,
}

impl DyadicStratum {
    pub fn len(&self) -> usize {
        self.low.len() + self.high.len()
    }

    pub fn is_empty(&self) -> bool {
        self.low.is_empty() && self.high.is_empty()
    }
}

/// Splits `ids` (sorted by `keys`, ties by id) into strata and halves. With
/// `stratum_size = None` the whole population is one stratum. A final stratum
/// shorter than `stratum_size` is still split at its midpoint.
pub fn dyadic_strata(
    ids: &[usize],
    keys: &[f64],
    stratum_size: Option<usize>,
) -> Result<Vec<DyadicStratum>, DesignError> {
    if ids.len() != keys.len() {
        return Err(DesignError::Invalid("ids and keys differ in length".into()));
    }
    if ids.is_empty() || !ids.len().is_multiple_of(2) {
        return Err(DesignError::Invalid(format!(
            "dyadic partition needs an even, non-zero population size, got {}",
            ids.len()
        )));
    }
    let width = match stratum_size {
        None => ids.len(),
        Some(s) if s == 0 || s % 2 != 0 => {
            return Err(DesignError::Invalid(format!("stratum size must be even and positive, got {s}")))
        }
        Some(s) => s,
    };
    let sorted: Vec<usize> = sorted_order(ids, keys).into_iter().map(|p| ids[p]).collect();
    Ok(sorted
        .chunks(width)
        .map(|chunk| {
            let mid = chunk.len() / 2;
            DyadicStratum {
                low: chunk[..mid].to_vec(),
                high: chunk[mid..].to_vec(),
            }
        })
        .collect())
}

/// Draws one dyadic sample; returns selected ids in ascending order.
pub fn draw_dyadic_partition(
    ids: &[usize],
    keys: &[f64],
    stratum_size: Option<usize>,
    rng: &mut Rng,
) -> Result<Vec<usize>, DesignError> {
    let strata = dyadic_strata(ids, keys, stratum_size)?;
    let mut out: Vec<usize> = Vec::with_capacity(ids.len() / 2);
    for s in &strata {
        let half = if rng.random::<bool>() { &s.high } else { &s.low };
        out.extend_from_slice(half);
    }
    out.sort_unstable();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Seed;

    #[test]
    fn four_units_two_outcomes() {
        let ids = [0, 1, 2, 3];
        let keys = [2.5, 0.1, 9.0, 4.0];
        let strata = dyadic_strata(&ids, &keys, None).unwrap();
        assert_eq!(strata, vec![DyadicStratum { low: vec![1, 0], high: vec![3, 2] }]);
        let mut rng = Seed::new(1).rng();
        let mut seen = std::collections::BTreeSet::new();
        for _ in 0..200 {
            seen.insert(draw_dyadic_partition(&ids, &keys, None, &mut rng).unwrap());
        }
        assert_eq!(seen.into_iter().collect::<Vec<_>>(), vec![vec![0, 1], vec![2, 3]]);
    }

    #[test]
    fn halves_partition_population() {
        let ids: Vec<usize> = (0..20).collect();
        let keys: Vec<f64> = ids.iter().map(|&i| ((i * 7) % 20) as f64).collect();
        let s = &dyadic_strata(&ids, &keys, None).unwrap()[0];
        let mut all: Vec<usize> = s.low.iter().chain(&s.high).copied().collect();
        all.sort_unstable();
        assert_eq!(all, ids);
        assert!(s.low.iter().all(|l| !s.high.contains(l)));
    }

    #[test]
    fn stratified_takes_half_of_each_stratum() {
        let ids: Vec<usize> = (0..100).collect();
        let keys: Vec<f64> = ids.iter().map(|&i| ((i * 31) % 100) as f64).collect();
        let strata = dyadic_strata(&ids, &keys, Some(50)).unwrap();
        let sample = draw_dyadic_partition(&ids, &keys, Some(50), &mut Seed::new(5).rng()).unwrap();
        assert_eq!(sample.len(), 50);
        for s in &strata {
            let hits = s.low.iter().chain(&s.high).filter(|i| sample.contains(i)).count();
            assert_eq!(hits, 25);
        }
    }

    #[test]
    fn odd_inputs_rejected() {
        assert!(dyadic_strata(&[0, 1, 2], &[0.0, 1.0, 2.0], None).is_err());
        assert!(dyadic_strata(&[0, 1, 2, 3], &[0.0; 4], Some(3)).is_err());
    }

    #[test]
    fn short_final_stratum_split_at_midpoint() {
        let ids: Vec<usize> = (0..10).collect();
        let keys: Vec<f64> = ids.iter().map(|&i| i as f64).collect();
        let strata = dyadic_strata(&ids, &keys, Some(4)).unwrap();
        assert_eq!(strata.len(), 3);
        assert_eq!(strata[2], DyadicStratum { low: vec![8], high: vec![9] });
    }
}
