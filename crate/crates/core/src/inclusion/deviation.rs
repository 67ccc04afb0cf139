use std::io::Write;

use statrs::distribution::{ContinuousCDF, Normal};

use super::{InclusionError, InclusionTable};

/// Factorization tolerance for exactly known pairs.
pub const EXACT_EPSILON: f64 = 1e-9;

/// Family-wise false-flag rate used to size the Monte Carlo tolerance.
const FAMILY_ALPHA: f64 = 1e-3;

/// Limit for dense matrix export.
pub const DENSE_EXPORT_LIMIT: usize = 2000;

/// How `|d_ij|` is compared against zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tolerance {
    /// One threshold for every pair.
    Fixed(f64),
    /// `EXACT_EPSILON` for exact pairs; for estimated pairs
    /// `max(EXACT_EPSILON, z * se0 / (pi_i pi_j))`, where `se0` is the binomial
    /// standard error of the pair estimate if the pair factored and `z` is at
    /// least 4, raised to a Bonferroni bound over all estimated pairs.
    Auto,
}

/// Which matrix a dense export writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DenseView {
    Signed,
    Magnitude,
    /// -1, 0 or +1; 0 for pairs classified as factoring.
    Sign,
}

/// Factorization deviations `d_ij = pi_ij / (pi_i pi_j) - 1` over a table.
#[derive(Debug, Clone, Copy)]
pub struct DeviationMatrix<'a> {
    table: &'a InclusionTable,
    tolerance: Tolerance,
    z: f64,
}

/// Checks that every `pi_i > 0` and wraps the table.
pub fn deviation_matrix(
    table: &InclusionTable,
    tolerance: Tolerance,
) -> Result<DeviationMatrix<'_>, InclusionError> {
    if let Some(unit) = table.pi().iter().position(|&p| !(p > 0.0)) {
        return Err(InclusionError::ZeroInclusion { unit });
    }
    let m = table.estimated_pair_count().max(1) as f64;
    let bonferroni = Normal::standard().inverse_cdf(1.0 - FAMILY_ALPHA / (2.0 * m));
    Ok(DeviationMatrix {
        table,
        tolerance,
        z: bonferroni.max(4.0),
    })
}

impl<'a> DeviationMatrix<'a> {
    pub fn table(&self) -> &'a InclusionTable {
        self.table
    }

    pub fn tolerance(&self) -> Tolerance {
        self.tolerance
    }

    /// Critical value applied to estimated pairs under [`Tolerance::Auto`].
    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn describe_tolerance(&self) -> String {
        match self.tolerance {
            Tolerance::Fixed(e) => format!("fixed {e:e}"),
            Tolerance::Auto if self.table.estimated_pair_count() == 0 => format!("exact {EXACT_EPSILON:e}"),
            Tolerance::Auto => format!("max({EXACT_EPSILON:e}, {:.3} * se0 / (pi_i pi_j))", self.z),
        }
    }

    pub fn dev(&self, i: usize, j: usize) -> Option<f64> {
        let pi = self.table.pi();
        self.table.pair(i, j).map(|p| p / (pi[i] * pi[j]) - 1.0)
    }

    pub fn epsilon(&self, i: usize, j: usize) -> f64 {
        match self.tolerance {
            Tolerance::Fixed(e) => e,
            Tolerance::Auto => match self.table.pair_replicates(i, j) {
                None => EXACT_EPSILON,
                Some(r) => {
                    let q = self.null_joint(i, j);
                    let se0 = (q * (1.0 - q) / r as f64).sqrt();
                    (self.z * se0 / q).max(EXACT_EPSILON)
                }
            },
        }
    }

    /// The estimated quantity's value if the pair factored: `pi_i pi_j`, or
    /// `pi_k pi_l` when the estimate is a block-level joint probability.
    fn null_joint(&self, i: usize, j: usize) -> f64 {
        let t = self.table;
        match (t.block_of(i), t.block_of(j)) {
            (Some(k), Some(l)) if k != l => match t.block_pair(k, l) {
                Some((pk, pl, _)) => pk * pl,
                None => t.pi()[i] * t.pi()[j],
            },
            _ => t.pi()[i] * t.pi()[j],
        }
    }

    /// `Some(true)` when `|d_ij| <= epsilon`, `None` for uncomputed pairs.
    pub fn is_factoring(&self, i: usize, j: usize) -> Option<bool> {
        self.dev(i, j).map(|d| d.abs() <= self.epsilon(i, j))
    }

    /// Calls `f(i, j, d_ij, factoring)` for every computed pair `i < j`, and
    /// returns the number of uncomputed pairs.
    pub fn for_each<F: FnMut(usize, usize, f64, bool)>(&self, mut f: F) -> u64 {
        let n = self.table.len();
        let mut missing = 0;
        for i in 0..n {
            for j in i + 1..n {
                match self.dev(i, j) {
                    Some(d) => f(i, j, d, d.abs() <= self.epsilon(i, j)),
                    None => missing += 1,
                }
            }
        }
        missing
    }

    /// Triplets `i,j,dev` for every non-factoring pair `i < j`.
    pub fn write_triplets<W: Write>(&self, w: W) -> Result<u64, InclusionError> {
        let mut out = csv::Writer::from_writer(w);
        let mut err = None;
        let mut rows = 0;
        out.write_record(["i", "j", "dev"]).map_err(csv_err)?;
        self.for_each(|i, j, d, factoring| {
            if !factoring && err.is_none() {
                rows += 1;
                if let Err(e) = out.write_record([i.to_string(), j.to_string(), d.to_string()]) {
                    err = Some(e);
                }
            }
        });
        if let Some(e) = err {
            return Err(csv_err(e));
        }
        out.flush()?;
        Ok(rows)
    }

    /// Full `N x N` matrix without header; the diagonal is written as 0 and
    /// uncomputed pairs as `NA`.
    pub fn write_dense<W: Write>(&self, w: W, view: DenseView) -> Result<(), InclusionError> {
        let n = self.table.len();
        if n > DENSE_EXPORT_LIMIT {
            return Err(InclusionError::Invalid(format!(
                "dense export is limited to {DENSE_EXPORT_LIMIT} units, got {n}"
            )));
        }
        let mut out = std::io::BufWriter::new(w);
        let mut line = String::new();
        for i in 0..n {
            line.clear();
            for j in 0..n {
                if j > 0 {
                    line.push(',');
                }
                if i == j {
                    line.push('0');
                    continue;
                }
                let (a, b) = if i < j { (i, j) } else { (j, i) };
                match self.dev(a, b) {
                    None => line.push_str("NA"),
                    Some(d) => {
                        let v = match view {
                            DenseView::Signed => d,
                            DenseView::Magnitude => d.abs(),
                            DenseView::Sign if d.abs() <= self.epsilon(a, b) => 0.0,
                            DenseView::Sign => d.signum(),
                        };
                        line.push_str(&v.to_string());
                    }
                }
            }
            line.push('\n');
            out.write_all(line.as_bytes())?;
        }
        out.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> InclusionError {
    InclusionError::Io(e.to_string())
}
