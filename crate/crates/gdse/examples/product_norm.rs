// Empirical dynamics matrices along a gradient descent path and the
// product-norm statistic that controls how errors compound.
//
// ```bash
// cargo run -p gdse --example product_norm
// ```

use gdse::gd::{empirical_m, generate_responses, product_norm_diag, run_gd, GdConfig};
use gdse::{sample_design, DesignKind, LinkFunction, ModelSpec, NoiseSpec};
use std::error::Error;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let (m, n, eta) = (800, 12, 0.4);
    let model = ModelSpec::squared_on_link(LinkFunction::sigmoid(), NoiseSpec::gaussian(0.1));
    let mu_star = vec![1.0 / (n as f64).sqrt(); n];
    let x = sample_design(&DesignKind::Rademacher, m, n, 77)?;
    let (y, xi) = generate_responses(&x, &mu_star, &model, 78);
    let mut cfg = GdConfig::new(eta, 8, vec![0.0; n]);
    cfg.keep_iterates = true;
    let traj = run_gd(&x, &y, &model, &cfg)?;

    let mats: Vec<_> = traj
        .iterates
        .windows(2)
        .map(|w| empirical_m(&x, &w[1], &w[0], &mu_star, &xi, &model, 8))
        .collect();
    let etas = vec![eta; mats.len()];
    let stat = product_norm_diag(&mats, &etas)?;
    println!("{} steps, product-norm statistic {stat:.4}", mats.len());
    // Contractive steps keep the statistic below 1 + sum of a geometric series.
    assert!(stat >= 1.0 && stat < 1.0 + mats.len() as f64 + 1.0);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
