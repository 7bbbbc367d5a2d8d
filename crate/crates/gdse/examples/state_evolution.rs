// The deterministic state evolution next to its Monte Carlo counterpart,
// gradient descent on the population loss under a Gaussian design.
//
// ```bash
// cargo run -p gdse --example state_evolution
// ```

use gdse::gd::StepSizes;
use gdse::linalg::norm;
use gdse::state_evolution::{se_run, theoretical_gd_mc, Geometry, McOptions};
use gdse::{DesignKind, LinkFunction, ModelSpec, NoiseSpec};
use std::error::Error;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let n = 10;
    let model = ModelSpec::squared_on_link(LinkFunction::sigmoid(), NoiseSpec::gaussian(0.2));
    let mu_star: Vec<f64> = (0..n).map(|j| if j < 5 { 0.4 } else { 0.2 }).collect();
    let mu0: Vec<f64> = (0..n).map(|j| 0.1 * (j as f64 - 4.5) / 4.5).collect();
    let steps = StepSizes::Constant(1.0);
    let t_max = 5;

    let track = se_run(Geometry::from_vectors(&mu0, &mu_star), &model, &steps, t_max)?;
    let mc = theoretical_gd_mc(&DesignKind::Gaussian, &model, &mu0, &mu_star, &steps, t_max, 400, 9, McOptions::default())?;

    for t in 0..=t_max {
        let p = track.points[t];
        let u = track.vector_at(t, &mu0, &mu_star);
        let gap: Vec<f64> = u.iter().zip(&mc.means[t]).map(|(a, b)| a - b).collect();
        println!(
            "t {t}  tau {:.4}  delta {:.4}  |u* - mc| {:.4}  (mc se {:.4})",
            p.tau, p.delta, norm(&gap), mc.se_norm(t)
        );
        assert!(norm(&gap) <= 4.0 * mc.se_norm(t) + 1e-12);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
