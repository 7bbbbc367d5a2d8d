//! Acceptance checks. Each test prints one `criterion NN PASS|FAIL` line
//! with the measured numbers, then asserts the same condition.

use gdse::estimator::{estimator_run, EstimatorConfig};
use gdse::gd::{generate_responses, run_gd, GdConfig, StepSizes};
use gdse::harness::experiments::{banded_init, flat_signal, gaussian_init};
use gdse::harness::{run_experiment, ExperimentConfig, ExperimentKind, ResultTable};
use gdse::linalg::{dot, norm, sym_eigenvalues};
use gdse::model::CustomScore;
use gdse::state_evolution::{
    detect_stages, mz_coefficients, mz_matrix_eigs, pr_run, rank2_eigs, se_run, solve_fixed_point,
    theoretical_gd_mc, Geometry, McOptions, MzMode, PrState, Rank2Coefficients, StageBands,
};
use gdse::{sample_design, DesignKind, LinkFunction, ModelSpec, NoiseSpec};
use nalgebra::DMatrix;
use std::collections::BTreeMap;
use std::time::Instant;

fn report(id: u32, pass: bool, detail: impl AsRef<str>) -> bool {
    println!("criterion {id:02} {}: {}", if pass { "PASS" } else { "FAIL" }, detail.as_ref());
    pass
}

fn gaussian_vector(n: usize, seed: u64) -> Vec<f64> {
    sample_design(&DesignKind::Gaussian, 1, n, seed).unwrap().entries().to_vec()
}

fn dense_rank2(c: Rank2Coefficients, u: &[f64], v: &[f64]) -> DMatrix<f64> {
    let n = u.len();
    DMatrix::from_fn(n, n, |i, j| {
        let id = if i == j { c.c0 } else { 0.0 };
        id + c.c11 * u[i] * u[j] + c.c12 * (u[i] * v[j] + v[i] * u[j]) + c.c22 * v[i] * v[j]
    })
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Unit-signal phase-retrieval track started at `alpha = 1/sqrt(n log n)`, `beta = 1`.
fn pr_track(n: f64, t_max: usize) -> Vec<PrState> {
    let alpha = 1.0 / (n * n.ln()).sqrt();
    pr_run(PrState { alpha, beta: 1.0, eta: 0.1, noise_mean: 0.0 }, t_max)
}

#[test]
fn criterion_01_gaussian_theoretical_gd_matches_state_evolution() {
    let start = Instant::now();
    let n = 20;
    let t_max = 10;
    let model = ModelSpec::squared_on_link(LinkFunction::sigmoid(), NoiseSpec::gaussian(0.2));
    let mu_star: Vec<f64> = (0..n).map(|j| if j % 2 == 0 { 0.35 } else { 0.1 }).collect();
    let mu0: Vec<f64> = gaussian_vector(n, 11).iter().map(|x| 0.1 * x).collect();
    let steps = StepSizes::Constant(1.0);
    let se = se_run(Geometry::from_vectors(&mu0, &mu_star), &model, &steps, t_max).unwrap();
    let mc = theoretical_gd_mc(&DesignKind::Gaussian, &model, &mu0, &mu_star, &steps, t_max, 2000, 21, McOptions::default())
        .unwrap();
    // At t = 0 every chain sits at mu0, so gap and standard error are both rounding noise.
    let mut worst = 0.0f64;
    let mut within = true;
    for t in 0..=t_max {
        let u = se.vector_at(t, &mu0, &mu_star);
        let gap: Vec<f64> = u.iter().zip(&mc.means[t]).map(|(a, b)| a - b).collect();
        within &= norm(&gap) <= 3.0 * mc.se_norm(t) + 1e-12;
        if t > 0 {
            worst = worst.max(norm(&gap) / mc.se_norm(t));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = within && secs < 60.0;
    assert!(report(1, pass, format!("max_t>0 |u*(t) - mean| / se = {worst:.3} (<= 3), runtime {secs:.2}s (< 60s)")));
}

#[test]
fn criterion_02_rank_two_spectra_match_dense_eigensolver() {
    let mut worst_rank2 = 0.0f64;
    let mut worst_mz = 0.0f64;
    let models = [
        ModelSpec::squared_on_link(LinkFunction::sigmoid(), NoiseSpec::gaussian(0.3)),
        ModelSpec::squared_on_link(LinkFunction::square(), NoiseSpec::zero()),
        ModelSpec::squared_on_link(LinkFunction::x_plus_sin(), NoiseSpec::zero()),
    ];
    for k in 0..100u64 {
        let n = 2 + (k as usize % 11);
        let u = gaussian_vector(n, 1000 + k);
        let v = gaussian_vector(n, 5000 + k);
        let c = gaussian_vector(4, 9000 + k);
        let coeffs = Rank2Coefficients { c0: c[0], c11: c[1], c12: c[2], c22: c[3] };
        let spectrum = rank2_eigs(c[0], c[1], c[2], c[3], &u, &v).unwrap();
        worst_rank2 = worst_rank2.max(max_abs_diff(&spectrum.expand(n), &sym_eigenvalues(&dense_rank2(coeffs, &u, &v))));

        let scale = 0.5 / norm(&u);
        let u: Vec<f64> = u.iter().map(|x| x * scale).collect();
        let mu: Vec<f64> = v.iter().map(|x| x / norm(&v)).collect();
        let model = &models[k as usize % models.len()];
        let mode = if k % 2 == 0 { MzMode::SelfPair } else { MzMode::WithSignal };
        let (uu, umu, mumu) = (dot(&u, &u), dot(&u, &mu), dot(&mu, &mu));
        let dense = sym_eigenvalues(&dense_rank2(mz_coefficients(model, uu, umu, mumu, mode), &u, &mu));
        let spectrum = mz_matrix_eigs(model, uu, umu, mumu, mode);
        worst_mz = worst_mz.max(max_abs_diff(&spectrum.expand(n), &dense));
    }

    let n = 7;
    let mut e = vec![0.0; n];
    e[0] = 1.0;
    let m_closed = rank2_eigs(1.0, 2.0, 1.0, 0.0, &e, &e).unwrap().expand(n);
    let mut m_want = vec![1.0; n - 1];
    m_want.push(5.0);
    let n_closed = rank2_eigs(2.0, 6.0, 0.0, -2.0, &e, &e).unwrap().expand(n);
    let mut n_want = vec![2.0; n - 1];
    n_want.push(6.0);
    // With u = v the span is one-dimensional: the second span eigenvalue is the bulk value 2.
    let exact = m_closed == m_want && n_closed == n_want;

    let pass = worst_rank2 <= 1e-10 && worst_mz <= 1e-10 && exact;
    assert!(report(
        2,
        pass,
        format!(
            "rank2 vs dense {worst_rank2:.1e}, Gaussian dynamics matrix vs dense {worst_mz:.1e} (<= 1e-10); \
             M spectrum {m_closed:?}, N spectrum {n_closed:?}"
        )
    ));
}

#[test]
fn criterion_03_phase_retrieval_scalar_dynamics_have_three_stages() {
    let start = Instant::now();
    let bands = StageBands { plateau_tol: 0.05, ..StageBands::default() };
    let t_max = 3000;
    let track = pr_track(1e3, t_max);
    let stages = detect_stages(&track, bands);
    let ordered = matches!((stages.plateau_entry, stages.signal_exit), (Some(a), Some(b)) if a < b);
    let last = track[t_max];
    let dist = ((last.alpha - 1.0).powi(2) + last.beta.powi(2)).sqrt();

    let mut per_log = Vec::new();
    for n in [1e2, 1e3, 1e4] {
        let t0 = detect_stages(&pr_track(n, t_max), bands).signal_exit.expect("signal grows");
        per_log.push((n, t0, t0 as f64 / f64::ln(n)));
    }
    let ratios: Vec<f64> = per_log.iter().map(|p| p.2).collect();
    let spread = ratios.iter().copied().fold(0.0, f64::max) / ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let secs = start.elapsed().as_secs_f64();

    let pass = ordered && dist < 1e-3 && spread <= 2.0;
    assert!(report(
        3,
        pass,
        format!(
            "plateau entry t={:?} before |alpha|>0.5 at t={:?}; final |u*-mu*| = {dist:.2e} (< 1e-3); \
             T0 by n {:?}, spread of T0/ln n = {spread:.3} (<= 2); {secs:.2}s",
            stages.plateau_entry,
            stages.signal_exit,
            per_log.iter().map(|p| (p.0 as u64, p.1)).collect::<Vec<_>>()
        )
    ));
}

#[test]
fn criterion_04_plateau_spectra_of_gaussian_dynamics_matrices() {
    let model = ModelSpec::squared_on_link(LinkFunction::square(), NoiseSpec::zero());
    let track = pr_track(1e3, 400);
    let plateau = detect_stages(&track, StageBands::default()).plateau;
    let (mut self_lo, mut self_hi, mut signal_lo) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY);
    for &t in &plateau {
        let s = track[t];
        let uu = s.alpha * s.alpha + s.beta * s.beta;
        let l_self = mz_matrix_eigs(&model, uu, s.alpha, 1.0, MzMode::SelfPair).min();
        let l_sig = mz_matrix_eigs(&model, uu, s.alpha, 1.0, MzMode::WithSignal).min();
        self_lo = self_lo.min(l_self);
        self_hi = self_hi.max(l_self);
        signal_lo = signal_lo.min(l_sig);
    }
    let pass = !plateau.is_empty() && self_lo >= -4.1 && self_hi <= -3.9 && signal_lo >= -1e-2;
    assert!(report(
        4,
        pass,
        format!(
            "{} plateau steps; self-pair min eigenvalue in [{self_lo:.4}, {self_hi:.4}] (within [-4.1, -3.9]); \
             with-signal min eigenvalue >= {signal_lo:.4} (>= -1e-2)",
            plateau.len()
        )
    ));
}

#[test]
fn criterion_05_design_dependence_of_phase_retrieval_from_random_start() {
    let start = Instant::now();
    let mut cfg = ExperimentConfig::default();
    cfg.fig1.dims = vec![50, 150];
    let table = run_experiment(&cfg, ExperimentKind::Fig1PR).unwrap();
    let mut best: BTreeMap<(String, usize), f64> = BTreeMap::new();
    for r in table.metric("mean_abs_corr") {
        let e = best.entry((r.design.clone(), r.n)).or_insert(f64::NEG_INFINITY);
        *e = e.max(r.value);
    }
    let b = |d: &str, n: usize| best[&(d.to_string(), n)];
    let checks = [
        ("gaussian n=50 > 0.95", b("gaussian", 50) > 0.95),
        ("rademacher n=50 > 0.95", b("rademacher", 50) > 0.95),
        ("std_exponential n=50 < 0.6", b("std_exponential", 50) < 0.6),
        ("gaussian n=150 >= 0.9", b("gaussian", 150) >= 0.9),
        ("rademacher n=150 < 0.9", b("rademacher", 150) < 0.9),
        ("std_exponential n=150 < 0.9", b("std_exponential", 150) < 0.9),
    ];
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    let secs = start.elapsed().as_secs_f64();
    assert!(report(
        5,
        failed.is_empty(),
        format!("best mean |corr| within 500 steps {best:?}; failed checks {failed:?}; {secs:.1}s")
    ));
}

fn fig2_reduced() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.fig2.links = vec!["sigmoid".into()];
    cfg.fig2.etas = vec![0.5];
    cfg.fig2.n = 100;
    cfg.fig2.m = 4000;
    cfg.fig2.replications = 20;
    cfg
}

fn fig2_gaps(cfg: &ExperimentConfig) -> BTreeMap<String, f64> {
    let table = run_experiment(cfg, ExperimentKind::Fig2Corr).unwrap();
    let mut gaps: BTreeMap<String, f64> = BTreeMap::new();
    for r in table.metric("abs_gap") {
        let e = gaps.entry(r.design.clone()).or_insert(0.0);
        *e = if r.value.is_finite() { e.max(r.value) } else { f64::INFINITY };
    }
    gaps
}

#[test]
fn criterion_06_data_free_estimate_tracks_oracle_correlation() {
    let gaps = fig2_gaps(&fig2_reduced());
    let worst = gaps.values().copied().fold(0.0, f64::max);
    let pass = gaps.len() == 3 && worst <= 0.05;
    assert!(report(6, pass, format!("sup_t |oracle - estimate| by design {gaps:?} (<= 0.05)")));
}

#[test]
#[ignore = "full scale takes several minutes"]
fn criterion_06_full_scale() {
    let mut cfg = fig2_reduced();
    cfg.fig2.n = 300;
    cfg.fig2.m = 10_000;
    cfg.fig2.replications = 100;
    let gaps = fig2_gaps(&cfg);
    let worst = gaps.values().copied().fold(0.0, f64::max);
    assert!(report(6, worst <= 0.05, format!("full scale: sup_t gap by design {gaps:?} (<= 0.05)")));
}

#[test]
fn criterion_07_estimator_reproduces_state_evolution_exactly() {
    let n = 40;
    let mu_star = flat_signal(n);
    let mu0 = gaussian_init(n, 77);
    let cases = [(LinkFunction::identity(), 0.3), (LinkFunction::sigmoid(), 0.5), (LinkFunction::square(), 0.05)];
    let mut worst = Vec::new();
    for (link, eta) in cases {
        let name = link.name().to_string();
        let model = ModelSpec::squared_on_link(link, NoiseSpec::zero());
        let se = se_run(Geometry::from_vectors(&mu0, &mu_star), &model, &StepSizes::Constant(eta), 50).unwrap();
        let cfg = EstimatorConfig::new(norm(&mu_star), eta, norm(&mu0), dot(&mu0, &mu_star));
        let est = estimator_run(&cfg, &model, 50).unwrap();
        let gap = se
            .points
            .iter()
            .zip(&est.rows)
            .map(|(p, r)| (p.gamma - r.gamma_hat).abs().max((p.alpha - r.alpha_hat).abs()))
            .fold(0.0, f64::max);
        worst.push((name, gap, se.points.len() == est.rows.len()));
    }
    let pass = worst.iter().all(|w| w.1 <= 1e-6 && w.2);
    assert!(report(7, pass, format!("max_t<=50 |(gamma, alpha) - estimate| by link {worst:?} (<= 1e-6)")));
}

#[test]
fn criterion_08_concentration_error_shrinks_like_inverse_root_aspect_ratio() {
    let cfg = ExperimentConfig::default();
    let table = run_experiment(&cfg, ExperimentKind::ConcSweep).unwrap();
    let t_end = cfg.conc.t_max;
    let points: Vec<(f64, f64)> = table.metric("median_conc_error")
        .filter(|r| r.t == t_end)
        .map(|r| (r.m as f64 / r.n as f64, r.value))
        .collect();
    let decreasing = points.windows(2).all(|w| w[1].1 < w[0].1);
    let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().map(|p| (p.0.ln(), p.1.ln())).unzip();
    let k = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / k, ly.iter().sum::<f64>() / k);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let pass = points.len() == 3 && decreasing && (-0.7..=-0.3).contains(&slope);
    assert!(report(
        8,
        pass,
        format!("median error at t={t_end} by phi {points:?}; log-log slope {slope:.3} (in [-0.7, -0.3])")
    ));
}

#[test]
fn criterion_09_iterates_stay_incoherent_with_design_rows() {
    let bound = |m: usize, max_norm: f64| 3.0 * (2.0 * (m as f64).ln()).sqrt() * (1.0 + max_norm);

    // Concentration sweep runs: per replication, all recorded t.
    let cfg = ExperimentConfig::default();
    let table = run_experiment(&cfg, ExperimentKind::ConcSweep).unwrap();
    let mut runs: BTreeMap<(usize, usize), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in &table.rows {
        let Some(rep) = r.replication else { continue };
        let e = runs.entry((r.m, rep)).or_default();
        match r.metric.as_str() {
            "incoherence" => e.0.push(r.value),
            "norm" => e.1.push(r.value),
            _ => {}
        }
    }
    let mut worst_conc = 0.0f64;
    for ((m, _), (inc, norms)) in &runs {
        let b = bound(*m, norms.iter().copied().fold(0.0, f64::max));
        worst_conc = worst_conc.max(inc.iter().copied().fold(0.0, f64::max) / b);
    }

    // Converged phase retrieval, Gaussian design.
    let (n, m) = (50, 3000);
    let model = ModelSpec::squared_on_link(LinkFunction::square(), NoiseSpec::zero());
    let mu_star = flat_signal(n);
    let mut worst_pr = 0.0f64;
    let mut converged = 0;
    for r in 0..5u64 {
        let (mu0, _, _) = banded_init(n, &mu_star, [0.65, 0.75], 10_000, 300 + r).unwrap();
        let x = sample_design(&DesignKind::Gaussian, m, n, 400 + r).unwrap();
        let (y, _) = generate_responses(&x, &mu_star, &model, 500 + r);
        let traj = run_gd(&x, &y, &model, &GdConfig::new(0.1, 500, mu0).with_signal(mu_star.clone()))
            .unwrap()
            .into_result()
            .unwrap();
        if traj.last().corr.abs() < 0.99 {
            continue;
        }
        converged += 1;
        let b = bound(m, traj.records.iter().map(|rec| rec.norm).fold(0.0, f64::max));
        worst_pr = worst_pr.max(traj.records.iter().map(|rec| rec.incoherence).fold(0.0, f64::max) / b);
    }
    let pass = !runs.is_empty() && worst_conc <= 1.0 && converged > 0 && worst_pr <= 1.0;
    assert!(report(
        9,
        pass,
        format!(
            "max incoherence / bound: {worst_conc:.3} over {} sweep runs, {worst_pr:.3} over {converged} converged \
             phase-retrieval runs (<= 1)",
            runs.len()
        )
    ));
}

#[test]
fn criterion_10_mean_field_corrections_vanish_with_aspect_ratio() {
    let start = Instant::now();
    let cfg = ExperimentConfig::default();
    let table = run_experiment(&cfg, ExperimentKind::MfSweep).unwrap();
    // (t, m) -> value; m grows with phi at fixed n.
    let collect = |metric: &str| -> BTreeMap<(usize, usize), f64> {
        table.metric(metric).map(|r| ((r.t, r.m), r.value)).collect()
    };
    let tau_se = collect("tau_se_max");
    let mut bad = Vec::new();
    let mut summary = Vec::new();
    for metric in ["offdiag_tau", "w_cov_max", "omega_gap"] {
        let vals = collect(metric);
        for t in 1..=cfg.mf.t_max {
            let row: Vec<(usize, f64)> = vals.iter().filter(|(k, _)| k.0 == t).map(|(k, v)| (k.1, *v)).collect();
            for w in row.windows(2) {
                let err = if metric == "offdiag_tau" { 2.0 * (tau_se[&(t, w[0].0)] + tau_se[&(t, w[1].0)]) } else { 0.0 };
                if w[1].1 > w[0].1 + err + 1e-12 {
                    bad.push(format!("{metric} t={t} m={}..{}", w[0].0, w[1].0));
                }
            }
            summary.push(format!("{metric}[t={t}] {:?}", row.iter().map(|p| format!("{:.2e}", p.1)).collect::<Vec<_>>()));
        }
    }
    let m_big = (1000.0 * cfg.mf.n as f64) as usize;
    let off_big = collect("offdiag_tau")
        .iter()
        .filter(|(k, _)| k.1 == m_big)
        .map(|(_, v)| *v)
        .fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    let pass = bad.is_empty() && off_big < 0.05;
    assert!(report(
        10,
        pass,
        format!(
            "{}; non-monotone {bad:?}; off-diagonal tau at phi=1000 {off_big:.2e} (< 0.05); {secs:.1}s",
            summary.join("; ")
        )
    ));
}

#[test]
fn criterion_11_fixed_points_of_convex_losses() {
    // Least squares on the identity link.
    let ls = ModelSpec::squared_on_link(LinkFunction::identity(), NoiseSpec::gaussian(0.5));
    let fp_ls = solve_fixed_point(&ls, 1.3, 1.0, 1e-14).unwrap();

    // Squared loss fitted to a sigmoid response: delta equals E F'(|mu*| G).
    let sigmoid = |z: f64| 1.0 / (1.0 + (-z).exp());
    let dsig = move |z: f64| sigmoid(z) * (1.0 - sigmoid(z));
    let score = CustomScore::new("squared", |x: f64, y: f64| x - y, move |z: f64, xi: f64| sigmoid(z) + xi)
        .with_partials(|_, _, _| 1.0, move |_, z, _| -dsig(z))
        .affine_in_noise(true);
    let s = 1.7;
    let mis = ModelSpec::custom(LinkFunction::sigmoid(), score, NoiseSpec::gaussian(0.2));
    let fp_mis = solve_fixed_point(&mis, s, 1.0, 1e-14).unwrap();
    // Independent oracle: composite Simpson on [-12, 12] against the standard normal density.
    let k = 24_000;
    let h = 24.0 / k as f64;
    let oracle: f64 = (0..=k)
        .map(|i| {
            let g = -12.0 + i as f64 * h;
            let w = if i == 0 || i == k { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            w * dsig(s * g) * (-0.5 * g * g).exp()
        })
        .sum::<f64>()
        * h
        / 3.0
        / (2.0 * std::f64::consts::PI).sqrt();

    // Strongly convex custom score with finite-difference partials.
    let huber = CustomScore::new(
        "pseudo-huber",
        |x: f64, y: f64| {
            let r = x - y;
            0.5 * x + r / (1.0 + r * r).sqrt()
        },
        move |z: f64, xi: f64| sigmoid(z) + xi,
    );
    let fp_h = solve_fixed_point(&ModelSpec::custom(LinkFunction::sigmoid(), huber, NoiseSpec::gaussian(0.2)), 1.5, 0.7, 1e-12)
        .unwrap();

    let tau_gap = (fp_ls.tau - 1.0).abs().max((fp_mis.tau - 1.0).abs());
    let delta_gap = (fp_mis.delta - oracle).abs();
    let pass = tau_gap <= 1e-12 && delta_gap <= 1e-8 && fp_h.residual < 1e-10;
    assert!(report(
        11,
        pass,
        format!(
            "|tau - 1| = {tau_gap:.1e} (<= 1e-12); delta {:.12} vs oracle {oracle:.12}, gap {delta_gap:.1e} (<= 1e-8); \
             pseudo-huber residual {:.1e} (< 1e-10)",
            fp_mis.delta, fp_h.residual
        )
    ));
}

fn small_configs() -> Vec<(ExperimentKind, ExperimentConfig)> {
    let mut base = ExperimentConfig::default();
    base.run.seed = 4242;
    let mut out = Vec::new();
    let mut c = base.clone();
    c.fig1.dims = vec![20];
    c.fig1.m = 300;
    c.fig1.replications = 4;
    c.fig1.t_max = 40;
    out.push((ExperimentKind::Fig1PR, c));
    let mut c = base.clone();
    c.fig2.links = vec!["sigmoid".into(), "x_plus_sin".into()];
    c.fig2.etas = vec![0.5, 0.05];
    c.fig2.n = 20;
    c.fig2.m = 300;
    c.fig2.replications = 3;
    c.fig2.t_max = 10;
    out.push((ExperimentKind::Fig2Corr, c));
    let mut c = base.clone();
    c.conc.n = 10;
    c.conc.phis = vec![5.0, 20.0];
    c.conc.replications = 3;
    c.conc.t_max = 5;
    out.push((ExperimentKind::ConcSweep, c));
    let mut c = base.clone();
    c.mf.n = 10;
    c.mf.phis = vec![5.0, 50.0];
    c.mf.mc_draws = 5000;
    c.mf.t_max = 2;
    out.push((ExperimentKind::MfSweep, c));
    let mut c = base;
    c.custom.n = 10;
    c.custom.m = 100;
    c.custom.replications = 3;
    c.custom.t_max = 5;
    out.push((ExperimentKind::Custom, c));
    out
}

#[test]
fn criterion_12_reruns_from_manifests_are_byte_identical() {
    let dir = std::env::temp_dir().join(format!("gdse-acceptance-{}", std::process::id()));
    let mut mismatches = Vec::new();
    for (kind, mut cfg) in small_configs() {
        cfg.run.threads = Some(1);
        let first = run_experiment(&cfg, kind).unwrap();
        let stored = dir.join(kind.id());
        first.write(&stored).unwrap();
        let back = ResultTable::read(&stored).unwrap();
        let (mut again, again_kind) = ExperimentConfig::from_manifest(&back.manifest.experiment, &back.manifest.config).unwrap();
        again.run.threads = Some(4);
        let second = run_experiment(&again, again_kind).unwrap();
        let same = first.to_csv_bytes().unwrap() == second.to_csv_bytes().unwrap()
            && first.manifest_json() == second.manifest_json()
            && back.to_csv_bytes().unwrap() == first.to_csv_bytes().unwrap();
        if !same {
            mismatches.push(kind.id());
        }
    }
    std::fs::remove_dir_all(&dir).ok();
    assert!(report(
        12,
        mismatches.is_empty(),
        format!("fig1, fig2, conc, mf, custom rerun from stored manifests at 1 vs 4 threads; mismatches {mismatches:?}")
    ));
}
