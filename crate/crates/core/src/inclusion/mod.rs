//! First- and second-order inclusion probabilities.
//!
//! An [`InclusionTable`] stores `pi_i` for every unit and `pi_ij` in a
//! block layout: units are covered by disjoint blocks (strata, halves, PSUs,
//! households or the whole population) whose within-block pairs are held
//! densely, while every cross-block pair follows one [`CrossPairs`] rule. This
//! keeps the O(N^2) pair set implicit for clustered and stratified designs.
//!
//! Tables are built exactly by [`exact_inclusion`], by design replication in
//! [`monte_carlo_inclusion`], or for the three-stage design by
//! [`multistage_inclusion`] (stage-1 pairs by replication, the rest exact).

mod conditions;
mod deviation;
mod exact;
mod monte_carlo;

pub use conditions::{
    condition_growth_scan, condition_report, BlockCertificate, ConditionReport, GrowthRow,
    GrowthScan, Trend, Verdict,
};
pub use deviation::{deviation_matrix, DenseView, DeviationMatrix, Tolerance, DENSE_EXPORT_LIMIT, EXACT_EPSILON};
pub use exact::{exact_inclusion, multistage_inclusion};
pub use monte_carlo::{monte_carlo_inclusion, PairScope};

use thiserror::Error;

use crate::designs::DesignError;

/// Above this many units a single dense pair block is refused.
pub const DENSE_PAIR_LIMIT: usize = 4096;

#[derive(Debug, Error)]
pub enum InclusionError {
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error("{0}; use monte_carlo_inclusion (or multistage_inclusion for three-stage designs)")]
    NotEnumerable(String),
    #[error("unit {unit} has zero inclusion probability (every unit must be reachable)")]
    ZeroInclusion { unit: usize },
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for InclusionError {
    fn from(e: std::io::Error) -> Self {
        InclusionError::Io(e.to_string())
    }
}

/// How a table was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Exact,
    MonteCarlo { replicates: u64 },
    /// Stage-1 joint probabilities by replication, everything else exact.
    Hybrid { stage1_replicates: u64 },
}

impl Method {
    pub fn label(&self) -> String {
        match self {
            Method::Exact => "exact".into(),
            Method::MonteCarlo { replicates } => format!("monte_carlo({replicates})"),
            Method::Hybrid { stage1_replicates } => format!("hybrid(stage1 replicates {stage1_replicates})"),
        }
    }
}

/// Rule for pairs whose units lie in different blocks.
#[derive(Debug, Clone, PartialEq)]
pub enum CrossPairs {
    NotComputed,
    /// `pi_ij = pi_i pi_j`.
    Factoring,
    /// The same joint probability for every cross pair.
    Constant(f64),
    /// `pi_ij = pi_kl * (pi_i / pi_k) * (pi_j / pi_l)` for units of blocks k != l,
    /// as in designs whose later stages run independently inside each block.
    Blockwise {
        block_pi: Vec<f64>,
        /// Upper triangle over blocks.
        block_pairs: Vec<f64>,
        block_pair_se: Option<Vec<f64>>,
    },
}

/// Offset of pair `(a, b)`, `a < b < m`, in a row-major upper triangle.
#[inline]
pub(crate) fn tri_index(a: usize, b: usize, m: usize) -> usize {
    debug_assert!(a < b && b < m);
    a * (2 * m - a - 1) / 2 + (b - a - 1)
}

#[inline]
pub(crate) fn tri_len(m: usize) -> usize {
    m * m.saturating_sub(1) / 2
}

const UNBLOCKED: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct InclusionTable {
    pi: Vec<f64>,
    pi_se: Option<Vec<f64>>,
    members: Vec<Vec<usize>>,
    locate: Vec<(u32, u32)>,
    within: Vec<Vec<f64>>,
    within_se: Option<Vec<Vec<f64>>>,
    cross: CrossPairs,
    method: Method,
}

impl InclusionTable {
    /// Assembles a table. `members` are disjoint, each sorted ascending; units
    /// outside every block are allowed only when `cross` is not `Blockwise`.
    pub(crate) fn new(
        pi: Vec<f64>,
        members: Vec<Vec<usize>>,
        within: Vec<Vec<f64>>,
        cross: CrossPairs,
        method: Method,
    ) -> Result<Self, InclusionError> {
        let n = pi.len();
        if n > u32::MAX as usize - 1 {
            return Err(InclusionError::Invalid("too many units".into()));
        }
        let mut locate = vec![(UNBLOCKED, 0u32); n];
        for (b, m) in members.iter().enumerate() {
            if within[b].len() != tri_len(m.len()) {
                return Err(InclusionError::Invalid(format!("block {b} has a malformed pair triangle")));
            }
            for (p, &i) in m.iter().enumerate() {
                if i >= n || locate[i].0 != UNBLOCKED {
                    return Err(InclusionError::Invalid(format!("unit {i} is out of range or in two blocks")));
                }
                locate[i] = (b as u32, p as u32);
            }
        }
        if let CrossPairs::Blockwise { block_pi, block_pairs, .. } = &cross {
            if locate.iter().any(|l| l.0 == UNBLOCKED)
                || block_pi.len() != members.len()
                || block_pairs.len() != tri_len(members.len())
            {
                return Err(InclusionError::Invalid("blockwise cross rule needs a full block cover".into()));
            }
        }
        Ok(InclusionTable {
            pi,
            pi_se: None,
            members,
            locate,
            within,
            within_se: None,
            cross,
            method,
        })
    }

    pub(crate) fn with_standard_errors(mut self, pi_se: Vec<f64>, within_se: Vec<Vec<f64>>) -> Self {
        self.pi_se = Some(pi_se);
        self.within_se = Some(within_se);
        self
    }

    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.is_empty()
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    /// Binomial standard errors of estimated `pi_i` (Monte Carlo tables only).
    pub fn pi_se(&self) -> Option<&[f64]> {
        self.pi_se.as_deref()
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn cross(&self) -> &CrossPairs {
        &self.cross
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.members
    }

    /// Block index of `unit`, if it belongs to one.
    pub fn block_of(&self, unit: usize) -> Option<usize> {
        let b = self.locate[unit].0;
        (b != UNBLOCKED).then_some(b as usize)
    }

    /// Expected sample size `sum(pi_i)`.
    pub fn expected_size(&self) -> f64 {
        self.pi.iter().sum()
    }

    /// Joint inclusion probability, `None` when the pair was not computed.
    pub fn pair(&self, i: usize, j: usize) -> Option<f64> {
        if i == j {
            return Some(self.pi[i]);
        }
        let ((bi, pi_), (bj, pj)) = (self.locate[i], self.locate[j]);
        if bi == bj && bi != UNBLOCKED {
            let m = self.members[bi as usize].len();
            let (a, b) = if pi_ < pj { (pi_, pj) } else { (pj, pi_) };
            return Some(self.within[bi as usize][tri_index(a as usize, b as usize, m)]);
        }
        match &self.cross {
            CrossPairs::NotComputed => None,
            CrossPairs::Factoring => Some(self.pi[i] * self.pi[j]),
            CrossPairs::Constant(c) => Some(*c),
            CrossPairs::Blockwise { block_pi, block_pairs, .. } => {
                let (k, l) = (bi as usize, bj as usize);
                let (a, b) = if k < l { (k, l) } else { (l, k) };
                let joint = block_pairs[tri_index(a, b, block_pi.len())];
                Some(joint * (self.pi[i] / block_pi[k]) * (self.pi[j] / block_pi[l]))
            }
        }
    }

    /// Standard error of an estimated pair; `Some(0)` for exact pairs.
    pub fn pair_se(&self, i: usize, j: usize) -> Option<f64> {
        if i == j {
            return Some(self.pi_se.as_ref().map_or(0.0, |s| s[i]));
        }
        let ((bi, pi_), (bj, pj)) = (self.locate[i], self.locate[j]);
        if bi == bj && bi != UNBLOCKED {
            let Some(se) = &self.within_se else { return Some(0.0) };
            let m = self.members[bi as usize].len();
            let (a, b) = if pi_ < pj { (pi_, pj) } else { (pj, pi_) };
            return Some(se[bi as usize][tri_index(a as usize, b as usize, m)]);
        }
        match &self.cross {
            CrossPairs::NotComputed => None,
            CrossPairs::Factoring | CrossPairs::Constant(_) => Some(0.0),
            CrossPairs::Blockwise { block_pi, block_pairs, block_pair_se } => {
                let Some(se) = block_pair_se else { return Some(0.0) };
                let (k, l) = (bi as usize, bj as usize);
                let (a, b) = if k < l { (k, l) } else { (l, k) };
                let t = tri_index(a, b, block_pi.len());
                let scale = (self.pi[i] / block_pi[k]) * (self.pi[j] / block_pi[l]);
                debug_assert!(block_pairs[t].is_finite());
                Some(se[t] * scale)
            }
        }
    }

    /// Replicates behind an estimated pair, `None` for pairs known exactly.
    pub(crate) fn pair_replicates(&self, i: usize, j: usize) -> Option<u64> {
        let same_block = self.locate[i].0 == self.locate[j].0 && self.locate[i].0 != UNBLOCKED;
        match self.method {
            Method::Exact => None,
            Method::MonteCarlo { replicates } => Some(replicates),
            Method::Hybrid { stage1_replicates } => match (&self.cross, same_block) {
                (CrossPairs::Blockwise { block_pair_se: Some(_), .. }, false) => Some(stage1_replicates),
                _ => None,
            },
        }
    }

    /// Number of pair probabilities that were estimated by replication.
    pub(crate) fn estimated_pair_count(&self) -> u64 {
        let within: u64 = self.within.iter().map(|w| w.len() as u64).sum();
        match self.method {
            Method::Exact => 0,
            Method::MonteCarlo { .. } => within,
            Method::Hybrid { .. } => match &self.cross {
                CrossPairs::Blockwise { block_pairs, .. } => block_pairs.len() as u64,
                _ => 0,
            },
        }
    }

    /// Block-level view `(pi_k, pi_kl)` of a blockwise cross rule.
    pub fn block_pair(&self, k: usize, l: usize) -> Option<(f64, f64, f64)> {
        match &self.cross {
            CrossPairs::Blockwise { block_pi, block_pairs, .. } if k != l => {
                let (a, b) = if k < l { (k, l) } else { (l, k) };
                Some((block_pi[k], block_pi[l], block_pairs[tri_index(a, b, block_pi.len())]))
            }
            _ => None,
        }
    }

    /// `sum_{j != i} pi_ij`; equals `(n - 1) pi_i` for fixed-size designs.
    pub fn pair_row_sum(&self, i: usize) -> Option<f64> {
        let mut s = 0.0;
        for j in 0..self.len() {
            if j != i {
                s += self.pair(i, j)?;
            }
        }
        Some(s)
    }

    /// Calls `f(i, j, pi_ij)` for every computed pair `i < j`.
    pub fn for_each_pair<F: FnMut(usize, usize, f64)>(&self, mut f: F) {
        let n = self.len();
        for i in 0..n {
            for j in i + 1..n {
                if let Some(p) = self.pair(i, j) {
                    f(i, j, p);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangle_indexing_is_dense() {
        let m = 7;
        let mut seen = vec![false; tri_len(m)];
        for a in 0..m {
            for b in a + 1..m {
                let t = tri_index(a, b, m);
                assert!(!seen[t]);
                seen[t] = true;
            }
        }
        assert!(seen.into_iter().all(|s| s));
    }

    #[test]
    fn lookup_is_symmetric() {
        let t = InclusionTable::new(
            vec![0.5; 4],
            vec![vec![0, 2], vec![1, 3]],
            vec![vec![0.5], vec![0.5]],
            CrossPairs::Constant(0.0),
            Method::Exact,
        )
        .unwrap();
        assert_eq!(t.pair(0, 2), Some(0.5));
        assert_eq!(t.pair(2, 0), Some(0.5));
        assert_eq!(t.pair(1, 2), Some(0.0));
        assert_eq!(t.pair(3, 3), Some(0.5));
        assert_eq!(t.pair_row_sum(0), Some(0.5));
    }

    #[test]
    fn overlapping_blocks_rejected() {
        let r = InclusionTable::new(
            vec![0.5; 3],
            vec![vec![0, 1], vec![1, 2]],
            vec![vec![0.2], vec![0.2]],
            CrossPairs::Factoring,
            Method::Exact,
        );
        assert!(r.is_err());
    }
}
