//! Exact and Monte Carlo inclusion tables, factorization deviations and a
//! condition report for the dyadic partition design.
//!
//! ```text
//! cargo run --release --example inclusion
//! ```

use infsamp::designs::{DesignSpec, SortKey};
use infsamp::inclusion::{
    condition_report, deviation_matrix, exact_inclusion, monte_carlo_inclusion, PairScope, Tolerance,
};
use infsamp::synthpop::{generate_population, Structure, TrueModel};
use infsamp::Seed;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pop = generate_population(Structure::flat(100), TrueModel::default(), Seed::new(3))?;
    let design = DesignSpec::DyadicPartition { sort: SortKey::Size };

    let exact = exact_inclusion(&design, &pop)?;
    let mc = monte_carlo_inclusion(&design, &pop, 100_000, Seed::new(4), PairScope::All)?;
    let mut worst = 0.0f64;
    for i in 0..pop.len() {
        for j in i + 1..pop.len() {
            let (e, m) = (exact.pair(i, j).unwrap(), mc.pair(i, j).unwrap());
            let se = (e * (1.0 - e) / 100_000.0).sqrt().max(1e-12);
            worst = worst.max((m - e).abs() / se);
        }
    }
    println!("largest |MC - exact| over all pairs: {worst:.2} binomial SE");

    let dev = deviation_matrix(&exact, Tolerance::Auto)?;
    let report = condition_report(&dev, None)?;
    print!("{}", report.to_text());

    let mut triplets = Vec::new();
    let rows = dev.write_triplets(&mut triplets)?;
    println!("{rows} non-factoring pairs exported");
    Ok(())
}
