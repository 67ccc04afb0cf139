//! Numeric diagnostics for the design conditions on non-zero inclusion
//! probabilities, restricted pairwise dependence and a stable sampling
//! fraction.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use super::{DeviationMatrix, InclusionError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    /// A single finite design cannot settle an asymptotic condition.
    Descriptive,
    NotChecked,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Descriptive => "DESCRIPTIVE",
            Verdict::NotChecked => "NOT_CHECKED",
        })
    }
}

/// Evidence that dependence is confined to bounded blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockCertificate {
    pub n_blocks: usize,
    pub max_block_size: usize,
    pub cross_block_pairs: u64,
    pub cross_block_nonfactoring: u64,
    pub cross_block_uncomputed: u64,
    pub cross_block_max_dev: f64,
    /// All cross-block pairs computed and factoring.
    pub certified: bool,
    /// `N (C4 - 1) / 2`, the most pairs bounded blocks can hold.
    pub s1_bound: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    pub method: String,
    pub tolerance: String,
    pub n_units: usize,
    /// Expected sample size `sum(pi_i)`.
    pub n: f64,
    pub sampling_fraction: f64,
    pub min_pi: f64,
    /// `1 / min(pi_i)`.
    pub gamma: f64,
    pub total_pairs: u64,
    pub uncomputed_pairs: u64,
    pub s1_size: u64,
    pub s2_size: u64,
    /// Largest `|d_ij|` over factoring pairs (0 when there are none).
    pub s2_max_dev: f64,
    pub s1_ratio: f64,
    pub blocks: Option<BlockCertificate>,
    /// `(condition, verdict, detail)`.
    pub verdicts: Vec<(String, Verdict, String)>,
}

impl ConditionReport {
    pub fn verdict(&self, condition: &str) -> Option<Verdict> {
        self.verdicts.iter().find(|v| v.0 == condition).map(|v| v.1)
    }

    /// `key = value` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| s.push_str(&format!("{k} = {v}\n"));
        kv("method", self.method.clone());
        kv("epsilon", self.tolerance.clone());
        kv("N", self.n_units.to_string());
        kv("n", self.n.to_string());
        kv("sampling_fraction", self.sampling_fraction.to_string());
        kv("min_pi", self.min_pi.to_string());
        kv("gamma", self.gamma.to_string());
        kv("total_pairs", self.total_pairs.to_string());
        kv("uncomputed_pairs", self.uncomputed_pairs.to_string());
        kv("s1_size", self.s1_size.to_string());
        kv("s2_size", self.s2_size.to_string());
        kv("s2_max_dev", self.s2_max_dev.to_string());
        kv("s1_ratio", self.s1_ratio.to_string());
        if let Some(b) = &self.blocks {
            kv("blocks.count", b.n_blocks.to_string());
            kv("blocks.max_size", b.max_block_size.to_string());
            kv("blocks.cross_pairs", b.cross_block_pairs.to_string());
            kv("blocks.cross_nonfactoring", b.cross_block_nonfactoring.to_string());
            kv("blocks.cross_uncomputed", b.cross_block_uncomputed.to_string());
            kv("blocks.cross_max_dev", b.cross_block_max_dev.to_string());
            kv("blocks.certified", b.certified.to_string());
            kv("blocks.s1_bound", b.s1_bound.to_string());
        }
        for (c, v, d) in &self.verdicts {
            kv(&format!("verdict.{c}"), format!("{v} ({d})"));
        }
        s
    }
}

/// Summarizes a deviation matrix. `block_labels`, one label per unit, names a
/// candidate partition (e.g. PSU) whose cross-block pairs should all factor.
pub fn condition_report(dev: &DeviationMatrix<'_>, block_labels: Option<&[usize]>) -> Result<ConditionReport, InclusionError> {
    let tab = dev.table();
    let n_units = tab.len();
    if let Some(l) = block_labels {
        if l.len() != n_units {
            return Err(InclusionError::Invalid(format!("{} block labels for {n_units} units", l.len())));
        }
    }
    let mut s1 = 0u64;
    let mut s2 = 0u64;
    let mut s2_max = 0.0f64;
    let (mut cross, mut cross_bad, mut cross_max) = (0u64, 0u64, 0.0f64);
    let uncomputed = dev.for_each(|i, j, d, factoring| {
        if factoring {
            s2 += 1;
            s2_max = s2_max.max(d.abs());
        } else {
            s1 += 1;
        }
        if let Some(l) = block_labels {
            if l[i] != l[j] {
                cross += 1;
                cross_max = cross_max.max(d.abs());
                cross_bad += u64::from(!factoring);
            }
        }
    });

    let blocks = block_labels.map(|labels| {
        let mut sizes = BTreeMap::<usize, usize>::new();
        for &l in labels {
            *sizes.entry(l).or_default() += 1;
        }
        let c4 = sizes.values().copied().max().unwrap_or(0);
        let within_pairs: u64 = sizes.values().map(|&s| (s * s.saturating_sub(1) / 2) as u64).sum();
        let total = (n_units * n_units.saturating_sub(1) / 2) as u64;
        let cross_uncomputed = (total - within_pairs) - cross;
        BlockCertificate {
            n_blocks: sizes.len(),
            max_block_size: c4,
            cross_block_pairs: total - within_pairs,
            cross_block_nonfactoring: cross_bad,
            cross_block_uncomputed: cross_uncomputed,
            cross_block_max_dev: cross_max,
            certified: cross_bad == 0 && cross_uncomputed == 0,
            s1_bound: (n_units * c4.saturating_sub(1) / 2) as u64,
        }
    });

    let pi = tab.pi();
    let min_pi = pi.iter().copied().fold(f64::INFINITY, f64::min);
    let n = tab.expected_size();
    let fraction = n / n_units as f64;
    let s1_ratio = s1 as f64 / n_units as f64;

    let mut verdicts = vec![(
        "nonzero_inclusion".to_string(),
        if min_pi > 0.0 { Verdict::Pass } else { Verdict::Fail },
        format!("gamma = {}", 1.0 / min_pi),
    )];
    verdicts.push((
        "restricted_dependence".into(),
        Verdict::Descriptive,
        format!("s1_ratio = {s1_ratio}, N * s2_max_dev = {}; boundedness needs a growth scan", n_units as f64 * s2_max),
    ));
    verdicts.push(match &blocks {
        None => ("block_dependence".into(), Verdict::NotChecked, "no block partition supplied".into()),
        Some(b) if b.certified => {
            assert!(s1 <= b.s1_bound, "certified blocks must bound S1: {s1} > {}", b.s1_bound);
            (
                "block_dependence".into(),
                Verdict::Pass,
                format!("{} blocks of size <= {}; all cross-block pairs factor", b.n_blocks, b.max_block_size),
            )
        }
        Some(b) => (
            "block_dependence".into(),
            Verdict::Fail,
            format!(
                "{} non-factoring and {} uncomputed cross-block pairs; max cross-block |d| = {}",
                b.cross_block_nonfactoring, b.cross_block_uncomputed, b.cross_block_max_dev
            ),
        ),
    });
    verdicts.push(("constant_fraction".into(), Verdict::Descriptive, format!("n/N = {fraction}")));

    Ok(ConditionReport {
        method: tab.method().label(),
        tolerance: dev.describe_tolerance(),
        n_units,
        n,
        sampling_fraction: fraction,
        min_pi,
        gamma: 1.0 / min_pi,
        total_pairs: (n_units * n_units.saturating_sub(1) / 2) as u64,
        uncomputed_pairs: uncomputed,
        s1_size: s1,
        s2_size: s2,
        s2_max_dev: s2_max,
        s1_ratio,
        blocks,
        verdicts,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthRow {
    pub n_units: usize,
    pub s1_size: u64,
    pub s1_ratio: f64,
    /// `N * s2_max_dev`.
    pub s2_scaled: f64,
    pub gamma: f64,
    pub sampling_fraction: f64,
}

/// Least-squares trend of a statistic against `ln N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trend {
    pub slope: f64,
    pub t_stat: f64,
    /// Fitted change over the grid, `slope * (ln N_max - ln N_min)`.
    pub growth: f64,
    pub growing: bool,
}

/// A fitted change counts as growth when it exceeds this fraction of the
/// statistic's mean level and is not explained by scatter (t > 2).
const GROWTH_FRACTION: f64 = 0.25;
const GROWTH_T: f64 = 2.0;

fn trend(x: &[f64], y: &[f64]) -> Trend {
    let k = x.len() as f64;
    let mx = x.iter().sum::<f64>() / k;
    let my = y.iter().sum::<f64>() / k;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - my - slope * (a - mx)).powi(2)).sum();
    let se = (rss / (k - 2.0) / sxx).sqrt();
    let t_stat = if se > 0.0 { slope / se } else if slope > 0.0 { f64::INFINITY } else { 0.0 };
    let range = x.iter().copied().fold(f64::NEG_INFINITY, f64::max) - x.iter().copied().fold(f64::INFINITY, f64::min);
    let growth = slope * range;
    let scale = (y.iter().map(|v| v.abs()).sum::<f64>() / k).max(1e-6);
    Trend {
        slope,
        t_stat,
        growth,
        growing: growth > GROWTH_FRACTION * scale && t_stat > GROWTH_T,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthScan {
    pub rows: Vec<GrowthRow>,
    pub s1_trend: Trend,
    pub s2_trend: Trend,
    pub verdict: Verdict,
    pub detail: String,
}

impl GrowthScan {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), InclusionError> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| InclusionError::Io(e.to_string());
        out.write_record(["N", "s1_size", "s1_ratio", "s2_max_dev_times_N", "gamma", "sampling_fraction"])
            .map_err(io)?;
        for r in &self.rows {
            out.write_record([
                r.n_units.to_string(),
                r.s1_size.to_string(),
                r.s1_ratio.to_string(),
                r.s2_scaled.to_string(),
                r.gamma.to_string(),
                r.sampling_fraction.to_string(),
            ])
            .map_err(io)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Evaluates `report_at(N)` over `grid` and judges whether the non-factoring
/// pair count per unit and the scaled residual deviation stay bounded.
pub fn condition_growth_scan<F>(grid: &[usize], mut report_at: F) -> Result<GrowthScan, InclusionError>
where
    F: FnMut(usize) -> Result<ConditionReport, InclusionError>,
{
    if grid.len() < 3 {
        return Err(InclusionError::Invalid("a growth scan needs at least 3 grid points".into()));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(InclusionError::Invalid("grid must be strictly increasing".into()));
    }
    let mut rows = Vec::with_capacity(grid.len());
    for &n in grid {
        let r = report_at(n)?;
        if r.uncomputed_pairs > 0 {
            return Err(InclusionError::Invalid(format!("report at N = {n} has uncomputed pairs")));
        }
        rows.push(GrowthRow {
            n_units: r.n_units,
            s1_size: r.s1_size,
            s1_ratio: r.s1_ratio,
            s2_scaled: r.n_units as f64 * r.s2_max_dev,
            gamma: r.gamma,
            sampling_fraction: r.sampling_fraction,
        });
    }
    let x: Vec<f64> = rows.iter().map(|r| (r.n_units as f64).ln()).collect();
    let s1_trend = trend(&x, &rows.iter().map(|r| r.s1_ratio).collect::<Vec<_>>());
    let s2_trend = trend(&x, &rows.iter().map(|r| r.s2_scaled).collect::<Vec<_>>());
    let (verdict, detail) = match (s1_trend.growing, s2_trend.growing) {
        (false, false) => (Verdict::Pass, "s1_ratio and N * s2_max_dev bounded over the grid".to_string()),
        (s1, s2) => {
            let mut parts = Vec::new();
            if s1 {
                parts.push(format!(
                    "s1_ratio grows from {} to {} (slope {} per log N)",
                    rows[0].s1_ratio,
                    rows[rows.len() - 1].s1_ratio,
                    s1_trend.slope
                ));
            }
            if s2 {
                parts.push(format!("N * s2_max_dev grows (slope {} per log N)", s2_trend.slope));
            }
            (Verdict::Fail, parts.join("; "))
        }
    };
    Ok(GrowthScan {
        rows,
        s1_trend,
        s2_trend,
        verdict,
        detail,
    })
}
