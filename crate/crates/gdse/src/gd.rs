//! Empirical gradient descent and its trajectory diagnostics.

use crate::design::{dot, rng_from_seed, DesignMatrix};
use crate::error::{config_err, Error, Result};
use crate::linalg::{norm, op_norm};
use crate::model::ModelSpec;
use crate::quad;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Iterates whose norm exceeds this are treated as divergent.
pub const DIVERGENCE_NORM: f64 = 1e12;

/// Step sizes `eta_t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum StepSizes {
    Constant(f64),
    /// One value per iteration; the last value repeats past the end.
    Schedule(Vec<f64>),
}

impl StepSizes {
    pub fn at(&self, t: usize) -> f64 {
        match self {
            StepSizes::Constant(eta) => *eta,
            StepSizes::Schedule(v) => v[t.min(v.len() - 1)],
        }
    }

    pub fn validate(&self, allow_zero: bool) -> Result<()> {
        let ok = |e: f64| e.is_finite() && (e > 0.0 || (allow_zero && e == 0.0));
        match self {
            StepSizes::Constant(e) if ok(*e) => Ok(()),
            StepSizes::Schedule(v) if !v.is_empty() && v.iter().all(|&e| ok(e)) => Ok(()),
            _ => config_err("step sizes must be positive and finite"),
        }
    }
}

/// Gradient descent settings.
#[derive(Clone, Debug)]
pub struct GdConfig {
    pub step_sizes: StepSizes,
    pub t_max: usize,
    pub init: Vec<f64>,
    pub record_every: usize,
    /// Signal used for overlap and correlation columns.
    pub mu_star: Option<Vec<f64>>,
    /// Reference path `u*(t)`, indexed by `t`, for the concentration error.
    pub reference: Option<Vec<Vec<f64>>>,
    /// Keep every recorded iterate in memory.
    pub keep_iterates: bool,
    /// Stop once `|corr| exceeds this` (needs `mu_star`).
    pub stop_at_corr: Option<f64>,
}

impl GdConfig {
    pub fn new(eta: f64, t_max: usize, init: Vec<f64>) -> Self {
        GdConfig {
            step_sizes: StepSizes::Constant(eta),
            t_max,
            init,
            record_every: 1,
            mu_star: None,
            reference: None,
            keep_iterates: false,
            stop_at_corr: None,
        }
    }

    pub fn with_signal(mut self, mu_star: Vec<f64>) -> Self {
        self.mu_star = Some(mu_star);
        self
    }

    pub fn with_reference(mut self, path: Vec<Vec<f64>>) -> Self {
        self.reference = Some(path);
        self
    }
}

/// Scalars recorded at one iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GdRecord {
    pub t: usize,
    pub norm: f64,
    pub overlap: f64,
    pub corr: f64,
    pub incoherence: f64,
    pub conc_error: f64,
}

#[derive(Clone, Debug)]
pub struct GdTrajectory {
    pub records: Vec<GdRecord>,
    /// Recorded iterates when `keep_iterates` is set; always holds `mu(0)`.
    pub iterates: Vec<Vec<f64>>,
    pub final_iterate: Vec<f64>,
    /// Iteration at which the run was halted for divergence.
    pub diverged_at: Option<usize>,
    /// Iteration at which the correlation stop fired.
    pub stopped_at: Option<usize>,
}

impl GdTrajectory {
    /// Convert a divergence marker into an error.
    pub fn into_result(self) -> Result<Self> {
        match self.diverged_at {
            Some(t) => Err(Error::Diverged { t, norm: norm(&self.final_iterate) }),
            None => Ok(self),
        }
    }

    pub fn last(&self) -> &GdRecord {
        self.records.last().expect("trajectory always holds t = 0")
    }
}

/// Draw noise and responses `Y_i = F(<X_i, mu*>, xi_i)`.
pub fn generate_responses(x: &DesignMatrix, mu_star: &[f64], model: &ModelSpec, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let z = x.mul_vec(mu_star);
    let mut rng = rng_from_seed(seed);
    let xi: Vec<f64> = (0..x.rows()).map(|_| model.noise.sample(&mut rng)).collect();
    let y = z.iter().zip(&xi).map(|(&zi, &e)| model.response(zi, e)).collect();
    (y, xi)
}

/// Oracle correlation `<mu, mu*> / (|mu| |mu*|)`, zero for a zero iterate.
pub fn correlation(mu: &[f64], mu_star: &[f64]) -> f64 {
    let d = norm(mu) * norm(mu_star);
    if d == 0.0 {
        0.0
    } else {
        (dot(mu, mu_star) / d).clamp(-1.0, 1.0)
    }
}

/// `max_i |<X_i, mu>|`.
pub fn incoherence(x: &DesignMatrix, mu: &[f64]) -> f64 {
    x.mul_vec(mu).iter().fold(0.0, |a, v| a.max(v.abs()))
}

/// Run gradient descent on `(X, y)`.
pub fn run_gd(x: &DesignMatrix, y: &[f64], model: &ModelSpec, cfg: &GdConfig) -> Result<GdTrajectory> {
    run_core(x, y, model, cfg, None)
}

/// Gradient descent with row `i` (0-based) zeroed, still dividing by `m`.
pub fn leave_one_out(x: &DesignMatrix, i: usize, y: &[f64], model: &ModelSpec, cfg: &GdConfig) -> Result<GdTrajectory> {
    if i >= x.rows() {
        return config_err(format!("row {i} out of range for m = {}", x.rows()));
    }
    run_core(x, y, model, cfg, Some(i))
}

fn run_core(x: &DesignMatrix, y: &[f64], model: &ModelSpec, cfg: &GdConfig, skip: Option<usize>) -> Result<GdTrajectory> {
    let (m, n) = (x.rows(), x.cols());
    if y.len() != m {
        return config_err(format!("response length {} != m = {m}", y.len()));
    }
    if cfg.init.len() != n {
        return config_err(format!("init length {} != n = {n}", cfg.init.len()));
    }
    if cfg.t_max == 0 {
        return config_err("t_max must be at least 1");
    }
    cfg.step_sizes.validate(true)?;
    if let Some(ms) = &cfg.mu_star {
        if ms.len() != n {
            return config_err("signal length differs from n");
        }
    }
    let every = cfg.record_every.max(1);
    let mut mu = cfg.init.clone();
    let mut records = Vec::new();
    let mut iterates = vec![mu.clone()];
    let mut diverged_at = None;
    let mut stopped_at = None;

    let mut z = x.mul_vec(&mu);
    if let Some(i) = skip {
        z[i] = 0.0;
    }
    records.push(record(0, &mu, &z, cfg));
    for t in 1..=cfg.t_max {
        let eta = cfg.step_sizes.at(t - 1);
        let mut g: Vec<f64> = z.iter().zip(y).map(|(&zi, &yi)| model.loss_grad(zi, yi)).collect();
        if let Some(i) = skip {
            g[i] = 0.0;
        }
        let step = x.tr_mul_vec(&g);
        let scale = eta / m as f64;
        for (a, s) in mu.iter_mut().zip(&step) {
            *a -= scale * s;
        }
        let nrm = norm(&mu);
        if !nrm.is_finite() || nrm > DIVERGENCE_NORM {
            diverged_at = Some(t);
            break;
        }
        z = x.mul_vec(&mu);
        if let Some(i) = skip {
            z[i] = 0.0;
        }
        let rec = record(t, &mu, &z, cfg);
        let stop = cfg.stop_at_corr.is_some_and(|c| rec.corr.abs() > c);
        if t % every == 0 || t == cfg.t_max || stop {
            if cfg.keep_iterates {
                iterates.push(mu.clone());
            }
            records.push(rec);
        }
        if stop {
            stopped_at = Some(t);
            break;
        }
    }
    Ok(GdTrajectory { records, iterates, final_iterate: mu, diverged_at, stopped_at })
}

fn record(t: usize, mu: &[f64], z: &[f64], cfg: &GdConfig) -> GdRecord {
    let nrm = norm(mu);
    let (overlap, corr) = match &cfg.mu_star {
        Some(ms) => (dot(mu, ms), correlation(mu, ms)),
        None => (f64::NAN, f64::NAN),
    };
    let conc_error = match cfg.reference.as_ref().and_then(|r| r.get(t)) {
        Some(u) => mu.iter().zip(u).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt(),
        None => f64::NAN,
    };
    GdRecord {
        t,
        norm: nrm,
        overlap,
        corr,
        incoherence: z.iter().fold(0.0, |a, v| a.max(v.abs())),
        conc_error,
    }
}

/// `M_{u,v}(X) = mean_i [ int_0^1 dS/dx(<X_i, U u + (1-U) v>, <X_i, mu*>, xi_i) dU ] X_i X_i^T`.
pub fn empirical_m(
    x: &DesignMatrix,
    u: &[f64],
    v: &[f64],
    mu_star: &[f64],
    xi: &[f64],
    model: &ModelSpec,
    u_nodes: usize,
) -> DMatrix<f64> {
    let (m, n) = (x.rows(), x.cols());
    let a = x.mul_vec(u);
    let b = x.mul_vec(v);
    let c = x.mul_vec(mu_star);
    let rule = quad::legendre01(u_nodes.max(1));
    let weights: Vec<f64> = (0..m)
        .map(|i| {
            if a[i] == b[i] {
                model.d1(a[i], c[i], xi[i])
            } else {
                rule.expect(|s| model.d1(s * a[i] + (1.0 - s) * b[i], c[i], xi[i]))
            }
        })
        .collect();
    let xm = DMatrix::from_row_slice(m, n, x.entries());
    let mut wx = xm.clone();
    for (i, w) in weights.iter().enumerate() {
        wx.row_mut(i).scale_mut(*w);
    }
    let out = xm.transpose() * wx / m as f64;
    (&out + out.transpose()) * 0.5
}

/// `1 + max_tau sum_{s <= tau} prod_{r in [s, tau]} |I - eta_r M_r|_op`.
pub fn product_norm_diag(matrices: &[DMatrix<f64>], etas: &[f64]) -> Result<f64> {
    if matrices.len() != etas.len() {
        return config_err("need one step size per matrix");
    }
    let Some(first) = matrices.first() else {
        return Ok(1.0);
    };
    let n = first.nrows();
    if matrices.iter().any(|a| a.nrows() != n || a.ncols() != n) {
        return config_err("matrices must be square and of equal size");
    }
    let id = DMatrix::<f64>::identity(n, n);
    let mut running = 0.0f64;
    let mut best = 0.0f64;
    for (a, &eta) in matrices.iter().zip(etas) {
        let f = op_norm(&(&id - a * eta));
        running = f * (1.0 + running);
        best = best.max(running);
    }
    Ok(1.0 + best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{sample_design, DesignKind};
    use crate::model::{LinkFunction, NoiseSpec};

    fn unit(n: usize) -> Vec<f64> {
        vec![1.0 / (n as f64).sqrt(); n]
    }

    #[test]
    fn global_minimizer_is_stationary() {
        let x = sample_design(&DesignKind::Gaussian, 40, 6, 1).unwrap();
        let model = ModelSpec::squared_on_link(LinkFunction::identity(), NoiseSpec::zero());
        let ms = unit(6);
        let (y, _) = generate_responses(&x, &ms, &model, 2);
        let traj = run_gd(&x, &y, &model, &GdConfig::new(0.5, 10, ms.clone())).unwrap();
        for (a, b) in traj.final_iterate.iter().zip(&ms) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_step_keeps_init() {
        let x = sample_design(&DesignKind::Rademacher, 30, 4, 3).unwrap();
        let model = ModelSpec::squared_on_link(LinkFunction::square(), NoiseSpec::gaussian(0.3));
        let (y, _) = generate_responses(&x, &unit(4), &model, 4);
        let init = vec![0.3, -0.1, 0.2, 0.5];
        let traj = run_gd(&x, &y, &model, &GdConfig::new(0.0, 5, init.clone())).unwrap();
        assert_eq!(traj.final_iterate, init);
    }

    #[test]
    fn one_step_matches_hand_written_gradient() {
        let x = sample_design(&DesignKind::StdExponential, 25, 5, 7).unwrap();
        let model = ModelSpec::squared_on_link(LinkFunction::sigmoid(), NoiseSpec::gaussian(0.2));
        let (y, _) = generate_responses(&x, &unit(5), &model, 8);
        let init = vec![0.2, -0.4, 0.1, 0.0, 0.3];
        let traj = run_gd(&x, &y, &model, &GdConfig::new(0.7, 1, init.clone())).unwrap();
        let mut expect = init.clone();
        for i in 0..25 {
            let row = x.row(i);
            let s: f64 = row.iter().zip(&init).map(|(a, b)| a * b).sum();
            let sg = 1.0 / (1.0 + (-s).exp());
            let r = (sg - y[i]) * sg * (1.0 - sg);
            for j in 0..5 {
                expect[j] -= 0.7 / 25.0 * r * row[j];
            }
        }
        for (a, b) in traj.final_iterate.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn leave_one_out_equals_deleted_row_rerun() {
        let (m, n) = (50, 5);
        let x = sample_design(&DesignKind::Gaussian, m, n, 10).unwrap();
        let model = ModelSpec::squared_on_link(LinkFunction::identity(), NoiseSpec::gaussian(0.5));
        let (y, _) = generate_responses(&x, &unit(n), &model, 11);
        let cfg = GdConfig::new(0.4, 15, vec![0.0; n]);
        let loo = leave_one_out(&x, 7, &y, &model, &cfg).unwrap();

        // Independent construction: drop the row and rescale the step so the
        // divisor stays m.
        let rows: Vec<f64> = (0..m).filter(|&i| i != 7).flat_map(|i| x.row(i).to_vec()).collect();
        let yd: Vec<f64> = (0..m).filter(|&i| i != 7).map(|i| y[i]).collect();
        let xd = DesignMatrix::from_rows(m - 1, n, rows, DesignKind::Gaussian, 0).unwrap();
        let mut cfg2 = cfg.clone();
        cfg2.step_sizes = StepSizes::Constant(0.4 * (m - 1) as f64 / m as f64);
        let direct = run_gd(&xd, &yd, &model, &cfg2).unwrap();
        for (a, b) in loo.final_iterate.iter().zip(&direct.final_iterate) {
            assert!((a - b).abs() < 1e-13);
        }
        let full = run_gd(&x, &y, &model, &cfg).unwrap();
        assert!(full.final_iterate != loo.final_iterate);
    }

    #[test]
    fn leave_one_out_of_single_row_is_constant() {
        let x = sample_design(&DesignKind::Gaussian, 1, 3, 1).unwrap();
        let model = ModelSpec::squared_on_link(LinkFunction::sigmoid(), NoiseSpec::zero());
        let init = vec![0.1, 0.2, 0.3];
        let traj = leave_one_out(&x, 0, &[0.9], &model, &GdConfig::new(1.0, 4, init.clone())).unwrap();
        assert_eq!(traj.final_iterate, init);
        assert!(leave_one_out(&x, 1, &[0.9], &model, &GdConfig::new(1.0, 4, init)).is_err());
    }

    #[test]
    fn divergence_is_reported_not_propagated() {
        let x = sample_design(&DesignKind::Gaussian, 40, 4, 2).unwrap();
        let model = ModelSpec::squared_on_link(LinkFunction::square(), NoiseSpec::zero());
        let (y, _) = generate_responses(&x, &unit(4), &model, 3);
        let traj = run_gd(&x, &y, &model, &GdConfig::new(5.0, 200, vec![1.0; 4])).unwrap();
        let t = traj.diverged_at.expect("large step must diverge");
        assert!(traj.records.iter().all(|r| r.norm.is_finite()));
        assert!(matches!(traj.into_result(), Err(Error::Diverged { t: tt, .. }) if tt == t));
    }

    #[test]
    fn incoherence_scales_linearly() {
        let x = sample_design(&DesignKind::Gaussian, 60, 5, 4).unwrap();
        let mu = vec![0.3, -0.2, 0.5, 0.1, 0.0];
        let scaled: Vec<f64> = mu.iter().map(|v| -2.5 * v).collect();
        assert!((incoherence(&x, &scaled) - 2.5 * incoherence(&x, &mu)).abs() < 1e-14);
    }

    #[test]
    fn empirical_m_identity_and_collapsed_average() {
        let x = sample_design(&DesignKind::Gaussian, 30, 4, 5).unwrap();
        let id = ModelSpec::squared_on_link(LinkFunction::identity(), NoiseSpec::zero());
        let xi = vec![0.0; 30];
        let u = vec![0.1, 0.2, -0.3, 0.4];
        let v = vec![0.5, 0.0, 0.0, 0.5];
        let ms = unit(4);
        let mm = empirical_m(&x, &u, &v, &ms, &xi, &id, 16);
        let xm = DMatrix::from_row_slice(30, 4, x.entries());
        assert!((mm - xm.transpose() * &xm / 30.0).abs().max() < 1e-13);

        let pr = ModelSpec::squared_on_link(LinkFunction::square(), NoiseSpec::zero());
        let same = empirical_m(&x, &u, &u, &ms, &xi, &pr, 16);
        let mut direct = DMatrix::zeros(4, 4);
        for i in 0..30 {
            let r = nalgebra::DVector::from_row_slice(x.row(i));
            let w = pr.d1(r.dot(&nalgebra::DVector::from_vec(u.clone())), r.dot(&nalgebra::DVector::from_vec(ms.clone())), 0.0);
            direct += &r * r.transpose() * w;
        }
        assert!((same - direct / 30.0).abs().max() < 1e-12);
    }

    #[test]
    fn product_norm_examples() {
        let id = DMatrix::<f64>::identity(3, 3);
        // Every factor |I - I| is zero, so every product vanishes.
        assert_eq!(product_norm_diag(&[id.clone(), id.clone()], &[1.0, 1.0]).unwrap(), 1.0);
        let z = DMatrix::<f64>::zeros(3, 3);
        assert!((product_norm_diag(&[z.clone(), z.clone(), z], &[1.0; 3]).unwrap() - 4.0).abs() < 1e-14);
    }

    #[test]
    fn product_norm_matches_direct_svd() {
        let mats: Vec<DMatrix<f64>> = (0..4)
            .map(|k| DMatrix::from_fn(3, 3, |i, j| ((i + 2 * j + 5 * k) as f64).cos()))
            .collect();
        let etas = [0.3, 0.5, 0.2, 0.9];
        let f: Vec<f64> = mats
            .iter()
            .zip(&etas)
            .map(|(a, e)| {
                let b = DMatrix::<f64>::identity(3, 3) - a * *e;
                b.svd(false, false).singular_values.max()
            })
            .collect();
        let mut best = 0.0f64;
        for tau in 0..4 {
            let mut sum = 0.0;
            for s in 0..=tau {
                sum += (s..=tau).map(|r| f[r]).product::<f64>();
            }
            best = best.max(sum);
        }
        assert!((product_norm_diag(&mats, &etas).unwrap() - (1.0 + best)).abs() < 1e-12);
    }
}
