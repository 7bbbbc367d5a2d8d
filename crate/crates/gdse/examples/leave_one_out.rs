// How much a single sample moves the gradient descent path.
//
// ```bash
// cargo run -p gdse --example leave_one_out
// ```

use gdse::gd::{generate_responses, leave_one_out, run_gd, GdConfig};
use gdse::linalg::norm;
use gdse::{sample_design, DesignKind, LinkFunction, ModelSpec, NoiseSpec};
use std::error::Error;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let (m, n) = (1500, 30);
    let model = ModelSpec::squared_on_link(LinkFunction::x_plus_sin(), NoiseSpec::gaussian(0.1));
    let mu_star = vec![1.0 / (n as f64).sqrt(); n];
    let x = sample_design(&DesignKind::Rademacher, m, n, 21)?;
    let (y, _) = generate_responses(&x, &mu_star, &model, 22);
    let cfg = GdConfig::new(0.2, 30, vec![0.0; n]);
    let full = run_gd(&x, &y, &model, &cfg)?;

    let mut worst: f64 = 0.0;
    for i in [0, 7, 700, m - 1] {
        let loo = leave_one_out(&x, i, &y, &model, &cfg)?;
        let gap: Vec<f64> = full.final_iterate.iter().zip(&loo.final_iterate).map(|(a, b)| a - b).collect();
        println!("row {i:>4}: |mu - mu_(-i)| = {:.2e}", norm(&gap));
        worst = worst.max(norm(&gap));
    }
    // One row out of m should shift the iterate by O(1/m) up to logs.
    assert!(worst < 20.0 / m as f64);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
