//! Weighted and unweighted fits of the marginal curve to one three-stage
//! sample: MLE, pseudo-posterior draws and curve summaries.
//!
//! ```text
//! cargo run --release --example fit
//! ```

use infsamp::designs::{DesignSpec, MultistageSpec};
use infsamp::inference::{
    curve_from_fit, fit_pseudo_posterior, weighted_mle, McmcConfig, PriorSpec, WeightedDataset,
};
use infsamp::synthpop::{generate_population, population_fit_curve, Structure, TrueModel};
use infsamp::Seed;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pop = generate_population(Structure::nested(200, 10, 3), TrueModel::default(), Seed::new(2024))?;
    let draw = DesignSpec::Multistage(MultistageSpec::three_stage(80)).draw(&pop, Seed::new(1))?;
    let sel = draw.selected();
    let x1: Vec<f64> = sel.iter().map(|&i| pop.units()[i].x1).collect();
    let y: Vec<u8> = sel.iter().map(|&i| pop.units()[i].y).collect();

    let grid = [-1.0, 0.0, 1.0];
    let truth = population_fit_curve(&pop, &grid)?;
    println!("population curve: {:?}", truth.iter().map(|t| format!("{:.3}", t.1)).collect::<Vec<_>>());

    for (name, weights) in [("weighted", draw.selected_weights()), ("equal", vec![1.0; sel.len()])] {
        let data = WeightedDataset::marginal(&x1, &y, &weights)?;
        let mle = weighted_mle(&data)?;
        let post = fit_pseudo_posterior(&data, &PriorSpec::default(), &McmcConfig { seed: 2, ..McmcConfig::default() })?;
        println!("{name}: mle = ({:.3}, {:.3}), posterior mean = ({:.3}, {:.3}), r_hat = {:.3?}",
            mle.beta[0], mle.beta[1], post.point[0], post.point[1], post.diagnostics.r_hat);
        for c in curve_from_fit(&post, &grid) {
            println!("  theta({:+.1}) = {:.3} [{:.3}, {:.3}]", c.x1, c.mean, c.lo, c.hi);
        }
    }
    Ok(())
}
