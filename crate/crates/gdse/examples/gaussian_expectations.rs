// Bivariate Gaussian expectations and the state evolution coefficients
// they produce.
//
// ```bash
// cargo run -p gdse --example gaussian_expectations
// ```

use gdse::model::gauss2_expect;
use gdse::{GaussianPairCov, LinkFunction, ModelSpec, NoiseSpec};
use std::error::Error;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    // E[G1^2 G2^2] = s11 s22 + 2 s12^2.
    let cov = GaussianPairCov::new(1.5, 0.4, 0.8);
    let v = gauss2_expect(|a, b, _| a * a * b * b, cov, &NoiseSpec::zero(), 20, true);
    println!("E[G1^2 G2^2] = {v:.12} (exact {:.12})", 1.5 * 0.8 + 2.0 * 0.16);
    assert!((v - 1.52).abs() < 1e-12);

    // tau and delta for each built-in link at the same covariance.
    for name in ["identity", "sigmoid", "x_plus_sin", "quad_plus_linear", "square"] {
        let model = ModelSpec::squared_on_link(LinkFunction::by_name(name)?, NoiseSpec::gaussian(0.3));
        let (tau, delta) = model.tau_delta(cov);
        println!("{name:<17} tau {tau:>9.5}  delta {delta:>9.5}");
    }

    // Square link: tau = 2(3 gamma^2 - 1) - 2 E xi, delta = 4 alpha when |mu*| = 1.
    let pr = ModelSpec::squared_on_link(LinkFunction::square(), NoiseSpec::gaussian_with_mean(0.1, 0.5));
    let (tau, delta) = pr.tau_delta(GaussianPairCov::new(0.5, 0.3, 1.0));
    assert!((tau - (2.0 * (1.5 - 1.0) - 0.2)).abs() < 1e-10);
    assert!((delta - 1.2).abs() < 1e-10);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
