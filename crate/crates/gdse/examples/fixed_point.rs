// Fixed points of the state evolution for convex losses.
//
// ```bash
// cargo run -p gdse --example fixed_point
// ```

use gdse::model::CustomScore;
use gdse::state_evolution::solve_fixed_point;
use gdse::{LinkFunction, ModelSpec, NoiseSpec};
use std::error::Error;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    // Squared loss on the identity link: tau = 1 and delta = 1.
    let ls = ModelSpec::squared_on_link(LinkFunction::identity(), NoiseSpec::gaussian(0.5));
    let fp = solve_fixed_point(&ls, 1.0, 1.0, 1e-13)?;
    println!("least squares: tau {:.12} delta {:.12} ({} iterations)", fp.tau, fp.delta, fp.iterations);
    assert!((fp.tau - 1.0).abs() < 1e-12);

    // A Huber-smoothed loss on a sigmoid response, strongly convex in x.
    let score = CustomScore::new(
        "pseudo-huber",
        |x: f64, y: f64| {
            let r = x - y;
            0.5 * x + r / (1.0 + r * r).sqrt()
        },
        |z: f64, xi: f64| 1.0 / (1.0 + (-z).exp()) + xi,
    );
    let model = ModelSpec::custom(LinkFunction::sigmoid(), score, NoiseSpec::gaussian(0.2));
    let fp = solve_fixed_point(&model, 1.5, 0.7, 1e-12)?;
    println!(
        "pseudo-huber: tau {:.6} delta {:.6} residual {:.1e} ({} iterations)",
        fp.tau, fp.delta, fp.residual, fp.iterations
    );
    assert!(fp.residual < 1e-10);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
