//! Replicated three-stage study over the PSU ladder, equal against
//! inverse-probability weights, with MLE point estimates.
//!
//! ```text
//! cargo run --release --example three_stage_study
//! ```

use infsamp::experiments::{run_study, Arm, ExperimentConfig, PointEstimate};
use infsamp::Seed;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ExperimentConfig::three_stage(vec![10, 20, 40, 80, 160], 50).with_estimate(PointEstimate::Mle);
    let result = run_study(&cfg, Seed::new(20240601), None)?;
    result.check_failures()?;
    let mid = result.median_index();
    println!("median grid point x1 = {:.3}", result.points[0].grid[mid]);
    for arm in [Arm::Equal, Arm::InverseProbability] {
        for p in &result.points {
            let s = result.cell(arm, p.ladder, mid).and_then(|c| c.stats).expect("successful replicates");
            println!("{arm:>20} K = {:3} n = {:3}: bias = {:+.4}, mse = {:.5}", p.ladder, p.sample_size, s.bias, s.mse);
        }
    }
    let mut csv = Vec::new();
    result.write_summary_csv(&mut csv)?;
    println!("summary.csv: {} rows", String::from_utf8(csv)?.lines().count() - 1);
    Ok(())
}
