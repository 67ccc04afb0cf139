use std::io::Write;

use super::{FitError, PosteriorFit};
use crate::synthpop::expit;

/// Posterior summary of `theta(x1) = expit(b0 + b1 x1)` at one grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub x1: f64,
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Linear-interpolation quantile of sorted data.
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Maps every `(b0, b1, ..)` draw through the marginal curve at each grid
/// point and reports the mean with a central 95% interval.
pub fn curve_from_draws(draws: &[Vec<f64>], grid: &[f64]) -> Vec<CurvePoint> {
    grid.iter()
        .map(|&x| {
            let mut theta: Vec<f64> = draws.iter().map(|b| expit(b[0] + b[1] * x)).collect();
            theta.sort_by(f64::total_cmp);
            let mean = theta.iter().sum::<f64>() / theta.len() as f64;
            CurvePoint {
                x1: x,
                mean,
                lo: quantile_sorted(&theta, 0.025),
                hi: quantile_sorted(&theta, 0.975),
            }
        })
        .collect()
}

pub fn curve_from_fit(fit: &PosteriorFit, grid: &[f64]) -> Vec<CurvePoint> {
    curve_from_draws(&fit.draws, grid)
}

/// Plug-in curve from a single coefficient vector; the interval collapses to
/// the point.
pub fn curve_from_point(beta: &[f64], grid: &[f64]) -> Vec<CurvePoint> {
    grid.iter()
        .map(|&x| {
            let t = expit(beta[0] + beta[1] * x);
            CurvePoint {
                x1: x,
                mean: t,
                lo: t,
                hi: t,
            }
        })
        .collect()
}

/// Writes `x1,mean,lo,hi`.
pub fn write_curve_csv<W: Write>(curve: &[CurvePoint], w: W) -> Result<(), FitError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["x1", "mean", "lo", "hi"])?;
    for c in curve {
        out.write_record([c.x1.to_string(), c.mean.to_string(), c.lo.to_string(), c.hi.to_string()])?;
    }
    out.flush()?;
    Ok(())
}
