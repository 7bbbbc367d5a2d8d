// Predict the correlation of gradient descent with the signal without
// touching the data, then check the prediction on an actual run.
//
// ```bash
// cargo run -p gdse --example data_free_estimator
// ```

use gdse::estimator::{estimator_run, EstimatorConfig};
use gdse::gd::{generate_responses, run_gd, GdConfig};
use gdse::linalg::norm;
use gdse::{sample_design, DesignKind, LinkFunction, ModelSpec, NoiseSpec};
use std::error::Error;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let (m, n, eta, t_max) = (4000, 100, 0.5, 60);
    let model = ModelSpec::squared_on_link(LinkFunction::sigmoid(), NoiseSpec::zero());
    let mu_star = vec![1.0 / (n as f64).sqrt(); n];
    // A start orthogonal to the signal, so alpha_hat(0) = 0 is exact.
    let mu0: Vec<f64> = (0..n).map(|j| if j % 2 == 0 { 0.1 } else { -0.1 }).collect();

    let est = estimator_run(&EstimatorConfig::new(1.0, eta, norm(&mu0), 0.0), &model, t_max)?;

    let x = sample_design(&DesignKind::StdExponential, m, n, 8)?;
    let (y, _) = generate_responses(&x, &mu_star, &model, 9);
    let traj = run_gd(&x, &y, &model, &GdConfig::new(eta, t_max, mu0).with_signal(mu_star))?;

    let mut worst: f64 = 0.0;
    for (row, rec) in est.rows.iter().zip(&traj.records) {
        worst = worst.max((row.corr_hat - rec.corr).abs());
        if row.t % 15 == 0 {
            println!("t {:>2}  corr_hat {:.4}  corr {:.4}", row.t, row.corr_hat, rec.corr);
        }
    }
    println!("largest gap {worst:.4}");
    assert!(worst < 0.1);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
