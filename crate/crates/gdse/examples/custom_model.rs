// A user-defined link, loss and noise law, plugged into gradient descent
// and the state evolution.
//
// ```bash
// cargo run -p gdse --example custom_model
// ```

use gdse::gd::{generate_responses, run_gd, GdConfig, StepSizes};
use gdse::model::CustomScore;
use gdse::state_evolution::{se_run, Geometry};
use gdse::{sample_design, DesignKind, LinkFunction, ModelSpec, NoiseSpec};
use std::error::Error;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    // tanh link with all derivatives up to order four.
    let link = LinkFunction::custom("tanh", |x| {
        let t = x.tanh();
        let s = 1.0 - t * t;
        [t, s, -2.0 * t * s, -2.0 * s * (1.0 - 3.0 * t * t), 8.0 * t * s * (2.0 - 3.0 * t * t)]
    });
    // Heavy-tailed noise given by an empirical sample.
    let noise = NoiseSpec::empirical(vec![-0.3, -0.1, 0.0, 0.05, 0.1, 0.25])?;
    // Logcosh loss on the tanh response.
    let score = CustomScore::new(
        "logcosh",
        |x: f64, y: f64| {
            let t = x.tanh();
            (t - y).tanh() * (1.0 - t * t)
        },
        |z: f64, xi: f64| z.tanh() + xi,
    );
    let model = ModelSpec::custom(link, score, noise);

    let n = 30;
    let mu_star = vec![1.0 / (n as f64).sqrt(); n];
    let mu0 = vec![0.0; n];
    let x = sample_design(&DesignKind::Gaussian, 3000, n, 31)?;
    let (y, _) = generate_responses(&x, &mu_star, &model, 32);
    let se = se_run(Geometry::from_vectors(&mu0, &mu_star), &model, &StepSizes::Constant(1.0), 40)?;
    let gd = run_gd(&x, &y, &model, &GdConfig::new(1.0, 40, mu0.clone()).with_signal(mu_star.clone()).with_reference(se.vectors(&mu0, &mu_star)))?;

    let last = gd.last();
    println!(
        "after 40 steps: corr {:.4}, |mu - u*| {:.4}, SE distance to signal {:.4}",
        last.corr,
        last.conc_error,
        se.distance_to_signal(40)
    );
    assert!(last.corr > 0.9);
    assert!(last.conc_error < 0.25);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
