//! Dyadic study: the two fixed halves of the unstratified partition against
//! stratified replicates, over a population-size ladder.
//!
//! ```text
//! cargo run --release --example dyadic_study
//! ```

use infsamp::experiments::{format_log, run_study, Arm, ExperimentConfig, PointEstimate};
use infsamp::Seed;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ExperimentConfig::dyadic(vec![100, 200, 400, 800, 1600], 50).with_estimate(PointEstimate::Mle);
    let result = run_study(&cfg, Seed::new(7), None)?;
    let mid = result.median_index();
    for p in &result.points {
        let stat = |arm| result.cell(arm, p.ladder, mid).and_then(|c| c.stats).expect("successful fit");
        let (lo, hi, st) = (stat(Arm::PartitionLow), stat(Arm::PartitionHigh), stat(Arm::Stratified));
        println!(
            "N = {:5}: |bias| low = {:.4}, high = {:.4}, stratified = {:.4}, stratified log MSE = {}",
            p.ladder,
            lo.bias.abs(),
            hi.bias.abs(),
            st.bias.abs(),
            format_log(st.log_mse())
        );
    }
    Ok(())
}
