//! Generate the nested 200 x 10 x 3 population and summarize it.
//!
//! ```text
//! cargo run --example population
//! ```

use infsamp::synthpop::{generate_population, population_fit, Structure, TrueModel};
use infsamp::Seed;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pop = generate_population(Structure::nested(200, 10, 3), TrueModel::default(), Seed::new(2024))?;
    let n = pop.len() as f64;
    let mean_y = pop.units().iter().map(|u| u.y as f64).sum::<f64>() / n;
    let mean_x2 = pop.units().iter().map(|u| u.x2).sum::<f64>() / n;
    println!("N = {}, PSUs = {}, households = {}", pop.len(), pop.psu_ranges().len(), pop.hh_ranges().len());
    println!("mean y = {mean_y:.4}, mean x2 = {mean_x2:.4}");

    let fit = population_fit(&pop)?;
    println!("population marginal fit: a = {:.4}, b = {:.4}", fit.beta[0], fit.beta[1]);

    let mut head = Vec::new();
    pop.write_csv(&mut head)?;
    for line in String::from_utf8(head)?.lines().take(4) {
        println!("{line}");
    }
    Ok(())
}
