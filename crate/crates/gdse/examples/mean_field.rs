// Mean-field diagnostics shrinking as the aspect ratio grows.
//
// ```bash
// cargo run -p gdse --example mean_field
// ```

use gdse::gd::StepSizes;
use gdse::meanfield::{mf_compare, mf_run};
use gdse::state_evolution::{se_run, Geometry};
use gdse::{LinkFunction, ModelSpec, NoiseSpec};
use std::error::Error;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let n = 20;
    let model = ModelSpec::squared_on_link(LinkFunction::sigmoid(), NoiseSpec::gaussian(0.3));
    let mu_star = vec![1.0 / (n as f64).sqrt(); n];
    let mu0: Vec<f64> = (0..n).map(|j| 0.2 * ((j as f64) * 1.3).cos()).collect();
    let steps = StepSizes::Constant(1.0);
    let track = se_run(Geometry::from_vectors(&mu0, &mu_star), &model, &steps, 3)?;

    let mut previous = f64::INFINITY;
    for phi in [2.0, 20.0, 200.0] {
        let run = mf_run(&mu0, &mu_star, &model, &steps, phi, 3, 20_000, 17)?;
        let d = mf_compare(&run, &track, &mu0, &mu_star, 2)?;
        let last = d.last().expect("three steps");
        println!(
            "phi {phi:>5}: tau gap {:.2e}  max Cov(w) {:.2e}  Omega gap {:.2e}",
            last.offdiag_tau, last.w_cov_max, last.omega_gap
        );
        assert!(last.omega_gap < previous);
        previous = last.omega_gap;
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
