//! Brewer probability-proportional-to-size targets against realized
//! selection frequencies.
//!
//! ```text
//! cargo run --release --example brewer
//! ```

use infsamp::designs::{brewer_pps_inclusion, draw_brewer_pps};
use infsamp::Seed;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let reps = 200_000u64;
    for sizes in [vec![3.0, 2.0, 1.0], vec![10.0, 1.0, 1.0, 1.0, 1.0, 1.0]] {
        let pi = brewer_pps_inclusion(&sizes, 2)?;
        let mut hits = vec![0u64; sizes.len()];
        for r in 0..reps {
            for i in draw_brewer_pps(&sizes, 2, Seed::new(5).child(r))? {
                hits[i] += 1;
            }
        }
        println!("sizes {sizes:?}, n = 2, sum pi = {}", pi.iter().sum::<f64>());
        for (i, p) in pi.iter().enumerate() {
            let est = hits[i] as f64 / reps as f64;
            let se = (p * (1.0 - p) / reps as f64).sqrt();
            println!("  unit {i}: target {p:.5}, realized {est:.5}, z = {:.2}", if se > 0.0 { (est - p) / se } else { 0.0 });
        }
    }
    Ok(())
}
