//! Draw one sample from each design on a flat population and compare the
//! weighted total with N.
//!
//! ```text
//! cargo run --example designs
//! ```

use infsamp::designs::{DesignSpec, MultistageSpec, SortKey};
use infsamp::synthpop::{generate_population, Structure, TrueModel};
use infsamp::Seed;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let flat = generate_population(Structure::flat(400), TrueModel::default(), Seed::new(1))?;
    let nested = generate_population(Structure::nested(200, 10, 3), TrueModel::default(), Seed::new(1))?;

    let flat_designs = [
        DesignSpec::Srs { n: 40 },
        DesignSpec::BrewerPps { n: 40 },
        DesignSpec::SystematicEqual { n: 40, sort: SortKey::X1 },
        DesignSpec::SystematicPps { n: 40, sort: SortKey::Size },
        DesignSpec::DyadicPartition { sort: SortKey::Size },
        DesignSpec::StratifiedDyadic { sort: SortKey::Size, stratum_size: 50 },
    ];
    for (r, design) in flat_designs.iter().enumerate() {
        let draw = design.draw(&flat, Seed::new(10).child(r as u64))?;
        let total: f64 = draw.selected_weights().iter().sum();
        println!("{design:?}: n = {}, sum of 1/pi = {total:.1} (N = {})", draw.n(), flat.len());
    }

    for k in [10, 160] {
        let design = DesignSpec::Multistage(MultistageSpec::three_stage(k));
        let draw = design.draw(&nested, Seed::new(11))?;
        let total: f64 = draw.selected_weights().iter().sum();
        println!("three-stage K = {k}: n = {}, sum of 1/pi = {total:.0}", draw.n());
    }
    Ok(())
}
