// Gradient descent on a sigmoid single-index model, tracked against the
// Gaussian state evolution started from the same point.
//
// ```bash
// cargo run -p gdse --example gradient_descent
// ```

use gdse::gd::{generate_responses, run_gd, GdConfig, StepSizes};
use gdse::state_evolution::{se_run, Geometry};
use gdse::{sample_design, DesignKind, LinkFunction, ModelSpec, NoiseSpec};
use std::error::Error;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let (m, n, eta, t_max) = (4000, 40, 0.5, 40);
    let model = ModelSpec::squared_on_link(LinkFunction::sigmoid(), NoiseSpec::gaussian(0.05));
    let mu_star = vec![1.0 / (n as f64).sqrt(); n];
    let mu0: Vec<f64> = (0..n).map(|j| if j % 2 == 0 { 0.15 } else { -0.15 }).collect();

    let x = sample_design(&DesignKind::Gaussian, m, n, 3)?;
    let (y, _noise) = generate_responses(&x, &mu_star, &model, 4);

    let track = se_run(Geometry::from_vectors(&mu0, &mu_star), &model, &StepSizes::Constant(eta), t_max)?;
    let cfg = GdConfig::new(eta, t_max, mu0.clone())
        .with_signal(mu_star.clone())
        .with_reference(track.vectors(&mu0, &mu_star));
    let traj = run_gd(&x, &y, &model, &cfg)?.into_result()?;

    for r in traj.records.iter().step_by(10) {
        println!(
            "t {:>3}  corr {:.4}  |mu - u*| {:.4}  max|<X_i,mu>| {:.3}",
            r.t, r.corr, r.conc_error, r.incoherence
        );
    }
    let last = traj.last();
    assert!(last.corr > traj.records[0].corr);
    assert!(last.conc_error < 0.2);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
