// Phase retrieval from a nearly orthogonal start: the scalar recursion for
// the signal and orthogonal components, its stages and the blow-up factors
// accumulated by the Gaussian dynamics along the way.
//
// ```bash
// cargo run -p gdse --example phase_retrieval_stages
// ```

use gdse::gd::StepSizes;
use gdse::state_evolution::{b_quantities, detect_stages, pr_run, se_run, Geometry, PrState, StageBands};
use gdse::{LinkFunction, ModelSpec, NoiseSpec};
use std::error::Error;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let n = 1000.0f64;
    let alpha0 = 1.0 / (n * n.ln()).sqrt();
    let eta = 0.1;
    let track = pr_run(PrState { alpha: alpha0, beta: 1.0, eta, noise_mean: 0.0 }, 200);
    let stages = detect_stages(&track, StageBands::default());
    println!(
        "plateau entered at t = {:?}, {} plateau steps, |alpha| > 1/2 at t = {:?}",
        stages.plateau_entry,
        stages.plateau.len(),
        stages.signal_exit
    );
    assert!(stages.plateau_entry < stages.signal_exit);

    // The same dynamics through the general state evolution.
    let model = ModelSpec::squared_on_link(LinkFunction::square(), NoiseSpec::zero());
    let g = Geometry::unit_signal((alpha0 * alpha0 + 1.0).sqrt(), alpha0);
    let se = se_run(g, &model, &StepSizes::Constant(eta), 60)?;
    for t in [0, 20, 40, 60] {
        let p = se.points[t];
        let beta = (p.gamma * p.gamma - p.alpha * p.alpha).max(0.0).sqrt();
        println!("t {t:>2}  alpha {:.4} (scalar {:.4})  beta {:.4}", p.alpha, track[t].alpha, beta);
        assert!((p.alpha - track[t].alpha).abs() < 1e-8);
    }
    let b = b_quantities(&se, 0.0);
    println!("B0(60) = {:.3}, B(60) = {:.3}", b.b0[60], b.b[60]);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
