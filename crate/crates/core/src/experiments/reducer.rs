use super::Arm;

/// Marker written for cells without any successful replicate.
pub const NA: &str = "NA";

/// One fitted curve (or a failure) for one arm, ladder point and replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateRecord {
    pub arm: Arm,
    pub ladder: usize,
    pub replicate: usize,
    /// Curve estimates on the ladder point's grid, or the failure message.
    pub outcome: Result<Vec<f64>, String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellStats {
    pub mean: f64,
    pub bias: f64,
    pub mse: f64,
    /// Standard deviation of the estimates across replicates (0 for one).
    pub sd: f64,
    pub n_reps: usize,
}

impl CellStats {
    /// Natural log of `|bias|`; `-inf` when the bias is exactly zero.
    pub fn log_abs_bias(&self) -> f64 {
        self.bias.abs().ln()
    }

    pub fn log_mse(&self) -> f64 {
        self.mse.ln()
    }

    /// Standard error of the replicate mean.
    pub fn mean_se(&self) -> f64 {
        self.sd / (self.n_reps as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub arm: Arm,
    pub ladder: usize,
    pub grid_index: usize,
    pub x1: f64,
    /// Population reference value at `x1`.
    pub population: f64,
    /// `None` when no replicate succeeded.
    pub stats: Option<CellStats>,
}

/// Formats a logged statistic; `ln(0)` becomes `-inf`.
pub fn format_log(v: f64) -> String {
    if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        v.to_string()
    }
}

/// Aggregates replicate records into per-cell bias and MSE.
///
/// `points` lists `(ladder, grid, reference)` for every ladder point. Cells
/// are produced for every arm, ladder point and grid index, in that order.
/// Records are sorted before summation, so the output does not depend on the
/// order in which replicates finished.
pub fn replicate_reducer(
    records: &[ReplicateRecord],
    points: &[(usize, &[f64], &[f64])],
    arms: &[Arm],
) -> Vec<CellSummary> {
    let mut ok: Vec<&ReplicateRecord> = records.iter().filter(|r| r.outcome.is_ok()).collect();
    ok.sort_by_key(|r| (r.arm, r.ladder, r.replicate));

    let mut cells = Vec::new();
    for &arm in arms {
        for &(ladder, grid, reference) in points {
            let group: Vec<&[f64]> = ok
                .iter()
                .filter(|r| r.arm == arm && r.ladder == ladder)
                .map(|r| r.outcome.as_deref().expect("filtered to successes"))
                .collect();
            for (g, (&x1, &population)) in grid.iter().zip(reference).enumerate() {
                let stats = (!group.is_empty()).then(|| {
                    let k = group.len() as f64;
                    let mean = group.iter().map(|c| c[g]).sum::<f64>() / k;
                    let bias = group.iter().map(|c| c[g] - population).sum::<f64>() / k;
                    let mse = group.iter().map(|c| (c[g] - population).powi(2)).sum::<f64>() / k;
                    let sd = if group.len() > 1 {
                        (group.iter().map(|c| (c[g] - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
                    } else {
                        0.0
                    };
                    CellStats {
                        mean,
                        bias,
                        mse,
                        sd,
                        n_reps: group.len(),
                    }
                });
                cells.push(CellSummary {
                    arm,
                    ladder,
                    grid_index: g,
                    x1,
                    population,
                    stats,
                });
            }
        }
    }
    cells
}
