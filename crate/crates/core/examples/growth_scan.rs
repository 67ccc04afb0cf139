//! Growth of non-factoring pairs with N: unstratified against stratified
//! dyadic designs.
//!
//! ```text
//! cargo run --release --example growth_scan
//! ```

use infsamp::designs::{DesignSpec, SortKey};
use infsamp::inclusion::{condition_growth_scan, condition_report, deviation_matrix, exact_inclusion, Tolerance};
use infsamp::synthpop::{generate_population, Structure, TrueModel};
use infsamp::Seed;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = [100, 200, 400, 800, 1600];
    let designs = [
        ("unstratified", DesignSpec::DyadicPartition { sort: SortKey::Size }),
        ("strata of 50", DesignSpec::StratifiedDyadic { sort: SortKey::Size, stratum_size: 50 }),
    ];
    for (name, design) in designs {
        let scan = condition_growth_scan(&grid, |n| {
            let pop = generate_population(Structure::flat(n), TrueModel::default(), Seed::new(9).child(n as u64))
                .expect("valid population");
            let tab = exact_inclusion(&design, &pop)?;
            condition_report(&deviation_matrix(&tab, Tolerance::Auto)?, None)
        })?;
        println!("{name}: {} ({})", scan.verdict, scan.detail);
        for r in &scan.rows {
            println!("  N = {:5}  s1 = {:8}  s1/N = {:7.1}", r.n_units, r.s1_size, r.s1_ratio);
        }
    }
    Ok(())
}
