//! Dynamical mean-field state evolution, evaluated by Monte Carlo.
//!
//! The recursion tracks a Gaussian family `z(0..t)` feeding the score
//! functions `Upsilon_t` and a second Gaussian family `w(1..t)` entering the
//! parameter-side maps `Omega_t`. Because every coefficient of the `Omega`
//! recursion is a scalar, `Omega_t` is affine: a constant vector plus scalar
//! weights on `w(1), ..., w(t)` shared by all coordinates. The run stores that
//! affine form directly, so `Cov(z)` follows in closed form and only the
//! `Upsilon` side needs sampling.
//!
//! Derivatives of `Upsilon_t` with respect to the `z` variables are carried
//! per draw through a forward triangular recursion. All iterations share one
//! stream of base Gaussian draws mapped through a lower-triangular factor of
//! `Cov(z)`, so the samples of `z(0..t-1)` are the same at every iteration
//! and the sampled `Cov(w)` is a Gram matrix.

use crate::design::{replication_seed, rng_from_seed};
use crate::error::{config_err, Error, Result};
use crate::gd::StepSizes;
use crate::linalg::{dot, op_norm, semi_cholesky, sym_eigenvalues};
use crate::model::ModelSpec;
use crate::state_evolution::SeTrack;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

const CHUNK: usize = 4096;
const PSD_TOL: f64 = 1e-6;

/// Snapshot after iteration `t`.
#[derive(Clone, Debug)]
pub struct MfState {
    pub t: usize,
    /// Covariance of `z(0..t)` used at this iteration.
    pub sigma_z: DMatrix<f64>,
    /// Covariance of `w(1..t)`.
    pub sigma_w: DMatrix<f64>,
    /// `tau[r-1][s-1] = tau_{r,s}` for `1 <= s <= r <= t`.
    pub tau: Vec<Vec<f64>>,
    /// Monte Carlo standard errors of `tau`.
    pub tau_se: Vec<Vec<f64>>,
    /// `delta_r` for `r = 1..=t`.
    pub delta: Vec<f64>,
    /// Constant part of `Omega_t`.
    pub omega_const: Vec<f64>,
    /// Weights of `Omega_t` on `w(1..t)`; also `rho_{t, s}`.
    pub omega_weights: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct MfRun {
    pub phi: f64,
    pub etas: Vec<f64>,
    pub mc_draws: usize,
    pub states: Vec<MfState>,
    /// Whether the step sizes vary, in which case the `eta_{t-1}^2` factor
    /// of `Cov(w)` is not symmetric in its two time indices.
    pub varying_steps: bool,
}

/// Coefficients needed to evaluate `Upsilon_1..Upsilon_t` on one draw.
pub struct UpsilonContext<'a> {
    pub model: &'a ModelSpec,
    pub phi: f64,
    pub etas: &'a [f64],
    /// `weights[r]` = weights of `Omega_r` (so `rho_{r,s} = weights[r][s-1]`).
    pub weights: &'a [Vec<f64>],
}

impl UpsilonContext<'_> {
    /// Returns `Upsilon_1..Upsilon_t` and `d[s][r-1] = dUpsilon_r / dz(s)`
    /// for `s = 0..=t`.
    pub fn eval(&self, z: &[f64], xi: f64) -> (Vec<f64>, Vec<Vec<f64>>) {
        let t = z.len() - 1;
        let mut ups = vec![0.0; t];
        let mut d = vec![vec![0.0; t]; t + 1];
        for r in 1..=t {
            let rho = &self.weights[r - 1];
            let mut theta = z[r];
            for s in 1..r {
                theta -= self.etas[s - 1] * rho[s - 1] * ups[s - 1] / self.phi;
            }
            ups[r - 1] = self.model.score(theta, z[0], xi);
            let (g1, g2) = self.model.d1_d2(theta, z[0], xi);
            for (s, row) in d.iter_mut().enumerate() {
                let mut inner = if s == r { 1.0 } else { 0.0 };
                for q in 1..r {
                    inner -= self.etas[q - 1] * rho[q - 1] * row[q - 1] / self.phi;
                }
                row[r - 1] = g1 * inner + if s == 0 { g2 } else { 0.0 };
            }
        }
        (ups, d)
    }
}

#[derive(Default, Clone)]
struct Moments {
    /// `E Upsilon_t Upsilon_s`, `s = 1..=t`.
    cross: Vec<f64>,
    /// `E dUpsilon_t / dz(s)`, `s = 0..=t`, and second moments for errors.
    deriv: Vec<f64>,
    deriv_sq: Vec<f64>,
}

impl Moments {
    fn zeros(t: usize) -> Self {
        Moments { cross: vec![0.0; t], deriv: vec![0.0; t + 1], deriv_sq: vec![0.0; t + 1] }
    }

    fn add(&mut self, o: &Moments) {
        for (a, b) in self.cross.iter_mut().zip(&o.cross) {
            *a += b;
        }
        for (a, b) in self.deriv.iter_mut().zip(&o.deriv) {
            *a += b;
        }
        for (a, b) in self.deriv_sq.iter_mut().zip(&o.deriv_sq) {
            *a += b;
        }
    }
}

/// `Cov(z(a), z(b))` from the affine forms of `Omega_{a-1}` and `Omega_{b-1}`.
fn z_cov(consts: &[Vec<f64>], weights: &[Vec<f64>], sigma_w: &DMatrix<f64>, n: usize, a: usize, b: usize) -> f64 {
    // consts[k] / weights[k] hold Omega_{k-1}; index 0 is Omega_{-1}.
    let c = dot(&consts[a], &consts[b]) / n as f64;
    let (wa, wb) = (&weights[a], &weights[b]);
    let mut q = 0.0;
    for (i, x) in wa.iter().enumerate() {
        for (j, y) in wb.iter().enumerate() {
            q += x * sigma_w[(i, j)] * y;
        }
    }
    c + q
}

fn check_psd(m: &DMatrix<f64>, what: &str, t: usize) -> Result<()> {
    if m.nrows() == 0 {
        return Ok(());
    }
    let ev = sym_eigenvalues(m);
    let scale = ev.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    if ev[0] < -PSD_TOL * scale {
        return Err(Error::Numeric(format!(
            "{what} lost positive semidefiniteness at t = {t} (eigenvalue {:e}); offending matrix {m}",
            ev[0]
        )));
    }
    Ok(())
}

/// Run the mean-field recursion for `t_max` iterations.
#[allow(clippy::too_many_arguments)]
pub fn mf_run(
    mu0: &[f64],
    mu_star: &[f64],
    model: &ModelSpec,
    steps: &StepSizes,
    phi: f64,
    t_max: usize,
    mc_draws: usize,
    seed: u64,
) -> Result<MfRun> {
    let n = mu0.len();
    if mu_star.len() != n || n == 0 {
        return config_err("mu0 and mu* must be nonempty and of equal length");
    }
    if !(phi > 0.0) {
        return config_err("aspect ratio must be positive");
    }
    if mc_draws < 2 {
        return config_err("need at least two Monte Carlo draws");
    }
    steps.validate(true)?;
    let etas: Vec<f64> = (0..t_max).map(|t| steps.at(t)).collect();
    let varying_steps = etas.windows(2).any(|w| w[0] != w[1]);
    let rn = (n as f64).sqrt();
    let star_scaled: Vec<f64> = mu_star.iter().map(|v| rn * v).collect();

    // consts[k], weights[k] describe Omega_{k-1}.
    let mut consts = vec![star_scaled.clone(), mu0.iter().map(|v| rn * v).collect::<Vec<_>>()];
    let mut weights: Vec<Vec<f64>> = vec![vec![], vec![]];
    let mut sigma_w = DMatrix::<f64>::zeros(0, 0);
    let mut tau: Vec<Vec<f64>> = Vec::new();
    let mut tau_se: Vec<Vec<f64>> = Vec::new();
    let mut delta = Vec::new();
    let mut states = Vec::with_capacity(t_max);

    for t in 1..=t_max {
        let mut sigma_z = DMatrix::<f64>::zeros(t + 1, t + 1);
        for a in 0..=t {
            for b in 0..=a {
                let v = z_cov(&consts, &weights, &pad(&sigma_w, t), n, a, b);
                sigma_z[(a, b)] = v;
                sigma_z[(b, a)] = v;
            }
        }
        check_psd(&sigma_z, "Cov(z)", t)?;
        let factor = semi_cholesky(&sigma_z, 1e-12);

        // weights of Omega_r for r = 0..t-1, as used by Upsilon_{r+1}.
        let omega_w: Vec<Vec<f64>> = (1..=t).map(|k| weights[k].clone()).collect();
        let ctx = UpsilonContext { model, phi, etas: &etas, weights: &omega_w };
        let chunks = mc_draws.div_ceil(CHUNK);
        let partial: Vec<Moments> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut rng = rng_from_seed(replication_seed(seed, c as u64));
                let count = CHUNK.min(mc_draws - c * CHUNK);
                let mut acc = Moments::zeros(t);
                let mut g = vec![0.0; t_max + 1];
                let mut z = vec![0.0; t + 1];
                for _ in 0..count {
                    // Fixed-width draws: iteration t sees the same base
                    // variables as every earlier iteration.
                    let xi = model.noise.sample(&mut rng);
                    for gi in g.iter_mut() {
                        *gi = rng.sample(StandardNormal);
                    }
                    for (i, zi) in z.iter_mut().enumerate() {
                        *zi = (0..=i).map(|j| factor[(i, j)] * g[j]).sum();
                    }
                    let (ups, d) = ctx.eval(&z, xi);
                    for s in 0..t {
                        acc.cross[s] += ups[t - 1] * ups[s];
                    }
                    for s in 0..=t {
                        let v = d[s][t - 1];
                        acc.deriv[s] += v;
                        acc.deriv_sq[s] += v * v;
                    }
                }
                acc
            })
            .collect();
        let mut tot = Moments::zeros(t);
        for p in &partial {
            tot.add(p);
        }
        let nd = mc_draws as f64;
        let row: Vec<f64> = (1..=t).map(|s| tot.deriv[s] / nd).collect();
        let row_se: Vec<f64> = (1..=t)
            .map(|s| {
                let m = tot.deriv[s] / nd;
                ((tot.deriv_sq[s] / nd - m * m).max(0.0) / nd).sqrt()
            })
            .collect();
        let delta_t = -tot.deriv[0] / nd;
        tau.push(row.clone());
        tau_se.push(row_se);
        delta.push(delta_t);

        // Cov(w(t), w(s)) = eta_{t-1}^2 / phi * E Upsilon_t Upsilon_s.
        let eta = etas[t - 1];
        let mut next_w = pad(&sigma_w, t);
        for s in 1..=t {
            let v = eta * eta / phi * tot.cross[s - 1] / nd;
            next_w[(t - 1, s - 1)] = v;
            next_w[(s - 1, t - 1)] = v;
        }
        check_psd(&next_w, "Cov(w)", t)?;
        sigma_w = next_w;

        // Omega_t = w(t) + sum_s (1{t=s} - eta tau_{t,s}) Omega_{s-1} + eta delta_t sqrt(n) mu*.
        let mut c = star_scaled.iter().map(|v| eta * delta_t * v).collect::<Vec<_>>();
        let mut w = vec![0.0; t];
        w[t - 1] = 1.0;
        for s in 1..=t {
            let coef = if s == t { 1.0 } else { 0.0 } - eta * row[s - 1];
            for (ci, prev) in c.iter_mut().zip(&consts[s]) {
                *ci += coef * prev;
            }
            for (wi, prev) in w.iter_mut().zip(&weights[s]) {
                *wi += coef * prev;
            }
        }
        consts.push(c.clone());
        weights.push(w.clone());
        states.push(MfState {
            t,
            sigma_z,
            sigma_w: sigma_w.clone(),
            tau: tau.clone(),
            tau_se: tau_se.clone(),
            delta: delta.clone(),
            omega_const: c,
            omega_weights: w,
        });
    }
    Ok(MfRun { phi, etas, mc_draws, states, varying_steps })
}

fn pad(m: &DMatrix<f64>, size: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(size, size);
    for i in 0..m.nrows().min(size) {
        for j in 0..m.ncols().min(size) {
            out[(i, j)] = m[(i, j)];
        }
    }
    out
}

/// `E (d + sigma G)^p` for even `p`.
pub fn gaussian_even_moment(d: f64, sigma: f64, p: u32) -> f64 {
    let mut total = 0.0;
    let mut binom = 1.0f64;
    let mut dfact = 1.0f64; // (k - 1)!! for the current even k
    for k in 0..=p {
        if k > 0 {
            binom *= (p - k + 1) as f64 / k as f64;
        }
        if k % 2 == 0 {
            if k >= 2 {
                dfact *= (k - 1) as f64;
            }
            total += binom * d.powi((p - k) as i32) * sigma.powi(k as i32) * dfact;
        }
    }
    total
}

/// Distance of the mean-field recursion from the rescaled state evolution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MfDiagnostics {
    pub t: usize,
    pub phi: f64,
    pub offdiag_tau: f64,
    pub w_cov_max: f64,
    /// Gap in the `p`-th moment of `Omega_t` against the state evolution.
    #[serde(rename = "omega_gap_p")]
    pub omega_gap: f64,
    pub p: u32,
    pub mc_draws: usize,
}

pub fn mf_compare(mf: &MfRun, se: &SeTrack, mu0: &[f64], mu_star: &[f64], p: u32) -> Result<Vec<MfDiagnostics>> {
    if p == 0 || p % 2 == 1 {
        return config_err("moment order must be a positive even integer");
    }
    if se.points.len() < mf.states.len() + 1 {
        return config_err("state evolution track is shorter than the mean-field run");
    }
    let g = crate::state_evolution::Geometry::from_vectors(mu0, mu_star);
    let rel = |a: f64, b: f64| (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()));
    if !(rel(g.mu0_norm2, se.geometry.mu0_norm2) && rel(g.cross, se.geometry.cross) && rel(g.star_norm2, se.geometry.star_norm2)) {
        return config_err("geometry of the state evolution does not match the supplied vectors");
    }
    let rn = (mu0.len() as f64).sqrt();
    let mut out = Vec::with_capacity(mf.states.len());
    for st in &mf.states {
        let t = st.t;
        let mut gap = DMatrix::<f64>::zeros(t, t);
        for r in 1..=t {
            for s in 1..=r {
                gap[(r - 1, s - 1)] = st.tau[r - 1][s - 1];
            }
            gap[(r - 1, r - 1)] -= se.points[r - 1].tau;
        }
        let w_cov_max = (0..t).map(|s| st.sigma_w[(t - 1, s)].abs()).fold(0.0, f64::max);
        let w = &st.omega_weights;
        let var: f64 = (0..t).map(|i| (0..t).map(|j| w[i] * st.sigma_w[(i, j)] * w[j]).sum::<f64>()).sum();
        let sigma = var.max(0.0).sqrt();
        let u = se.vector_at(t, mu0, mu_star);
        let omega_gap = st
            .omega_const
            .iter()
            .zip(&u)
            .map(|(c, ui)| gaussian_even_moment(c - rn * ui, sigma, p))
            .fold(0.0, f64::max);
        out.push(MfDiagnostics {
            t,
            phi: mf.phi,
            offdiag_tau: op_norm(&gap),
            w_cov_max,
            omega_gap,
            p,
            mc_draws: mf.mc_draws,
        });
    }
    Ok(out)
}
