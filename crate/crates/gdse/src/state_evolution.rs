//! Gaussian state evolution and its long-time diagnostics.
//!
//! The state `u*(t)` always lies in the span of `mu(0)` and `mu*`, so a track
//! stores the two coefficients `(a, b)` of `u*(t) = a mu(0) + b mu*` together
//! with the three Gram numbers of the pair.

use crate::design::{replication_seed, rng_from_seed, sample_design, DesignKind};
use crate::error::{config_err, Error, Result};
use crate::gd::StepSizes;
use crate::linalg::{dot, norm};
use crate::model::{gauss2_expect_many, gauss2_plain, GaussianPairCov, Loss, ModelSpec};
use crate::quad;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Gram numbers of `(mu(0), mu*)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub mu0_norm2: f64,
    pub cross: f64,
    pub star_norm2: f64,
}

impl Geometry {
    pub fn from_vectors(mu0: &[f64], mu_star: &[f64]) -> Self {
        Geometry {
            mu0_norm2: dot(mu0, mu0),
            cross: dot(mu0, mu_star),
            star_norm2: dot(mu_star, mu_star),
        }
    }

    /// Geometry of a unit signal and an initialization with the given norm
    /// and overlap.
    pub fn unit_signal(mu0_norm: f64, overlap: f64) -> Self {
        Geometry { mu0_norm2: mu0_norm * mu0_norm, cross: overlap, star_norm2: 1.0 }
    }

    pub fn gamma2(&self, a: f64, b: f64) -> f64 {
        a * a * self.mu0_norm2 + 2.0 * a * b * self.cross + b * b * self.star_norm2
    }

    pub fn alpha(&self, a: f64, b: f64) -> f64 {
        a * self.cross + b * self.star_norm2
    }
}

/// One state of the evolution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SePoint {
    pub t: usize,
    pub a: f64,
    pub b: f64,
    pub gamma: f64,
    pub alpha: f64,
    /// `tau` evaluated at this state (drives the step to `t + 1`).
    pub tau: f64,
    pub delta: f64,
}

#[derive(Clone, Debug)]
pub struct SeTrack {
    pub geometry: Geometry,
    pub points: Vec<SePoint>,
    pub model: ModelSpec,
    pub etas: Vec<f64>,
}

impl SeTrack {
    /// Covariance feeding `tau` and `delta` at step `t`.
    pub fn cov_at(&self, t: usize) -> GaussianPairCov {
        let p = &self.points[t];
        GaussianPairCov::new(p.gamma * p.gamma, p.alpha, self.geometry.star_norm2)
    }

    /// `u*(t)` reconstructed in ambient coordinates.
    pub fn vector_at(&self, t: usize, mu0: &[f64], mu_star: &[f64]) -> Vec<f64> {
        let p = &self.points[t];
        mu0.iter().zip(mu_star).map(|(x, y)| p.a * x + p.b * y).collect()
    }

    pub fn vectors(&self, mu0: &[f64], mu_star: &[f64]) -> Vec<Vec<f64>> {
        (0..self.points.len()).map(|t| self.vector_at(t, mu0, mu_star)).collect()
    }

    /// `|u*(t) - mu*|`.
    pub fn distance_to_signal(&self, t: usize) -> f64 {
        let p = &self.points[t];
        self.geometry.gamma2(p.a, p.b - 1.0).max(0.0).sqrt()
    }
}

/// Run the state evolution for `t_max` steps.
pub fn se_run(geometry: Geometry, model: &ModelSpec, steps: &StepSizes, t_max: usize) -> Result<SeTrack> {
    if geometry.star_norm2 <= 0.0 {
        return config_err("signal must be nonzero");
    }
    steps.validate(true)?;
    let point = |t, a, b| -> Result<SePoint> {
        let gamma2 = geometry.gamma2(a, b).max(0.0);
        let alpha = geometry.alpha(a, b);
        let (tau, delta) = model.tau_delta(GaussianPairCov::new(gamma2, alpha, geometry.star_norm2));
        if !(tau.is_finite() && delta.is_finite()) {
            return Err(Error::Numeric(format!("non-finite tau/delta at t = {t}")));
        }
        Ok(SePoint { t, a, b, gamma: gamma2.sqrt(), alpha, tau, delta })
    };
    let mut points = vec![point(0, 1.0, 0.0)?];
    let mut etas = Vec::with_capacity(t_max);
    for t in 1..=t_max {
        let prev = points[t - 1];
        let eta = steps.at(t - 1);
        etas.push(eta);
        let shrink = 1.0 - eta * prev.tau;
        points.push(point(t, shrink * prev.a, shrink * prev.b + eta * prev.delta)?);
    }
    Ok(SeTrack { geometry, points, model: model.clone(), etas })
}

/// Monte Carlo tuning for the theoretical gradient descent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McOptions {
    /// Independent chains; their spread gives the standard errors.
    pub chains: usize,
    /// Rows per fresh design (defaults to `n`).
    pub rows_per_design: Option<usize>,
}

impl Default for McOptions {
    fn default() -> Self {
        McOptions { chains: 20, rows_per_design: None }
    }
}

/// Monte Carlo theoretical gradient descent path.
#[derive(Clone, Debug)]
pub struct TheoreticalGd {
    /// Mean over chains of `u_X(t)`, `t = 0..=t_max`.
    pub means: Vec<Vec<f64>>,
    /// Per-coordinate standard errors of `means`.
    pub std_errors: Vec<Vec<f64>>,
    pub chains: usize,
}

impl TheoreticalGd {
    /// `sqrt(sum_j se_j^2)` at step `t`.
    pub fn se_norm(&self, t: usize) -> f64 {
        norm(&self.std_errors[t])
    }
}

/// `u_X(t) = u_X(t-1) - eta E[X_1 S(<X_1, u>, <X_1, mu*>, xi)]` with the
/// expectation replaced by averages over fresh designs.
///
/// `mc_reps` designs are split evenly across `opts.chains` independent
/// chains.
#[allow(clippy::too_many_arguments)]
pub fn theoretical_gd_mc(
    kind: &DesignKind,
    model: &ModelSpec,
    mu0: &[f64],
    mu_star: &[f64],
    steps: &StepSizes,
    t_max: usize,
    mc_reps: usize,
    seed: u64,
    opts: McOptions,
) -> Result<TheoreticalGd> {
    let n = mu0.len();
    if mu_star.len() != n {
        return config_err("mu0 and mu* differ in length");
    }
    if mc_reps == 0 {
        return config_err("mc_reps must be at least 1");
    }
    let chains = opts.chains.clamp(1, mc_reps);
    let per_chain = mc_reps / chains;
    let rows = opts.rows_per_design.unwrap_or(n).max(1);
    let paths: Vec<Result<Vec<Vec<f64>>>> = (0..chains)
        .into_par_iter()
        .map(|c| {
            let chain_seed = replication_seed(seed, c as u64);
            let mut noise_rng = rng_from_seed(chain_seed ^ 0x5eed);
            let mut u = mu0.to_vec();
            let mut path = vec![u.clone()];
            for t in 1..=t_max {
                let eta = steps.at(t - 1);
                let mut grad = vec![0.0; n];
                for r in 0..per_chain {
                    let design_seed = replication_seed(chain_seed, (t * per_chain + r) as u64 + 1);
                    let x = sample_design(kind, rows, n, design_seed)?;
                    let xu = x.mul_vec(&u);
                    let xs = x.mul_vec(mu_star);
                    let s: Vec<f64> = (0..rows)
                        .map(|i| model.score(xu[i], xs[i], model.noise.sample(&mut noise_rng)))
                        .collect();
                    for (g, v) in grad.iter_mut().zip(x.tr_mul_vec(&s)) {
                        *g += v;
                    }
                }
                let scale = eta / (per_chain * rows) as f64;
                for (a, g) in u.iter_mut().zip(&grad) {
                    *a -= scale * g;
                }
                path.push(u.clone());
            }
            Ok(path)
        })
        .collect();
    let paths = paths.into_iter().collect::<Result<Vec<_>>>()?;
    let g = chains as f64;
    let mut means = Vec::with_capacity(t_max + 1);
    let mut std_errors = Vec::with_capacity(t_max + 1);
    for t in 0..=t_max {
        let mean: Vec<f64> = (0..n).map(|j| paths.iter().map(|p| p[t][j]).sum::<f64>() / g).collect();
        let se: Vec<f64> = (0..n)
            .map(|j| {
                if chains < 2 {
                    return f64::NAN;
                }
                let var = paths.iter().map(|p| (p[t][j] - mean[j]).powi(2)).sum::<f64>() / (g - 1.0);
                (var / g).sqrt()
            })
            .collect();
        means.push(mean);
        std_errors.push(se);
    }
    Ok(TheoreticalGd { means, std_errors, chains })
}

/// Phase-retrieval state in signal/orthogonal coordinates (unit signal).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrState {
    pub alpha: f64,
    pub beta: f64,
    pub eta: f64,
    pub noise_mean: f64,
}

/// One step of the phase-retrieval scalar recursion.
pub fn pr_step(s: PrState) -> PrState {
    let r2 = s.alpha * s.alpha + s.beta * s.beta;
    let drift = 2.0 * s.eta * s.noise_mean;
    PrState {
        alpha: (1.0 - 6.0 * s.eta * (r2 - 1.0) + drift) * s.alpha,
        beta: ((1.0 - 6.0 * s.eta * (r2 - 1.0 / 3.0) + drift) * s.beta).abs(),
        ..s
    }
}

/// `t_max + 1` states starting from `s`.
pub fn pr_run(s: PrState, t_max: usize) -> Vec<PrState> {
    let mut out = Vec::with_capacity(t_max + 1);
    out.push(s);
    for _ in 0..t_max {
        let next = pr_step(*out.last().expect("non-empty"));
        out.push(next);
    }
    out
}

/// Tolerances used to label the three phase-retrieval stages.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageBands {
    /// Band around `1/sqrt(3)` that marks the plateau of `beta`.
    pub plateau_tol: f64,
    /// `|alpha|` below this counts as "signal still small".
    pub signal_small: f64,
    /// `|alpha|` above this ends the search phase.
    pub signal_large: f64,
}

impl Default for StageBands {
    fn default() -> Self {
        StageBands { plateau_tol: 0.01, signal_small: 0.1, signal_large: 0.5 }
    }
}

/// Stage labels of a phase-retrieval track.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    /// First `t` with `beta` inside the plateau band.
    pub plateau_entry: Option<usize>,
    /// Times on the plateau while the signal is still small.
    pub plateau: Vec<usize>,
    /// First `t` with `|alpha|` above `signal_large`.
    pub signal_exit: Option<usize>,
}

pub fn detect_stages(track: &[PrState], bands: StageBands) -> StageSummary {
    let target = 1.0 / 3f64.sqrt();
    let on_plateau = |s: &PrState| (s.beta - target).abs() <= bands.plateau_tol;
    StageSummary {
        plateau_entry: track.iter().position(on_plateau),
        plateau: track
            .iter()
            .enumerate()
            .filter(|(_, s)| on_plateau(s) && s.alpha.abs() <= bands.signal_small)
            .map(|(t, _)| t)
            .collect(),
        signal_exit: track.iter().position(|s| s.alpha.abs() > bands.signal_large),
    }
}

/// First-hitting times of a phase-retrieval track.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTimes {
    /// `min{t : alpha(t+1) sign(alpha(0)) >= 1/(c0 log^5 m)}`.
    pub t0: Option<usize>,
    /// `min{t : max(|alpha(t) - 1|, beta(t)) <= eps0/4}`.
    pub t_eps: Option<usize>,
    pub threshold: f64,
    pub summary: StageSummary,
}

pub fn pr_stage_times(track: &[PrState], c0: f64, m: usize, eps0: f64) -> StageTimes {
    let threshold = 1.0 / (c0 * (m as f64).ln().powi(5));
    let sign = track.first().map_or(1.0, |s| if s.alpha < 0.0 { -1.0 } else { 1.0 });
    let t0 = (0..track.len().saturating_sub(1)).find(|&t| track[t + 1].alpha * sign >= threshold);
    let t_eps = track
        .iter()
        .position(|s| (s.alpha - 1.0).abs().max(s.beta) <= eps0 / 4.0);
    StageTimes { t0, t_eps, threshold, summary: detect_stages(track, StageBands::default()) }
}

/// `c0 I + c11 u u^T + c12 (u v^T + v u^T) + c22 v v^T`, described by its
/// bulk eigenvalue and the two eigenvalues on `span(u, v)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rank2Spectrum {
    pub bulk: f64,
    /// `(low, high)`.
    pub extremes: (f64, f64),
}

impl Rank2Spectrum {
    pub fn min(&self) -> f64 {
        self.bulk.min(self.extremes.0)
    }

    pub fn max(&self) -> f64 {
        self.bulk.max(self.extremes.1)
    }

    /// All `n` eigenvalues in ascending order (`n >= 2`).
    pub fn expand(&self, n: usize) -> Vec<f64> {
        let mut v = vec![self.bulk; n.saturating_sub(2)];
        v.push(self.extremes.0);
        v.push(self.extremes.1);
        v.sort_by(f64::total_cmp);
        v
    }
}

/// Coefficients of a rank-two perturbation of a multiple of the identity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rank2Coefficients {
    pub c0: f64,
    pub c11: f64,
    pub c12: f64,
    pub c22: f64,
}

/// Spectrum from the Gram numbers `<u,u>`, `<u,v>`, `<v,v>`.
pub fn rank2_eigs_gram(c: Rank2Coefficients, uu: f64, uv: f64, vv: f64) -> Rank2Spectrum {
    let (a11, a12, a22) = if uu > 0.0 {
        let p = uu.sqrt();
        let q = uv / p;
        let r = (vv - q * q).max(0.0).sqrt();
        (
            c.c11 * p * p + 2.0 * c.c12 * p * q + c.c22 * q * q,
            (c.c12 * p + c.c22 * q) * r,
            c.c22 * r * r,
        )
    } else {
        (c.c22 * vv, 0.0, 0.0)
    };
    let mid = 0.5 * (a11 + a22);
    let rad = (0.25 * (a11 - a22).powi(2) + a12 * a12).sqrt();
    Rank2Spectrum { bulk: c.c0, extremes: (c.c0 + mid - rad, c.c0 + mid + rad) }
}

pub fn rank2_eigs(c0: f64, c11: f64, c12: f64, c22: f64, u: &[f64], v: &[f64]) -> Result<Rank2Spectrum> {
    if u.len() != v.len() {
        return config_err("u and v differ in length");
    }
    if norm(v) == 0.0 {
        return config_err("v must be nonzero");
    }
    Ok(rank2_eigs_gram(Rank2Coefficients { c0, c11, c12, c22 }, dot(u, u), dot(u, v), dot(v, v)))
}

/// Which Gaussian dynamics matrix to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MzMode {
    /// `E int_0^1 dS/dx(<Z, U u + (1-U) mu*>, <Z, mu*>, xi) dU Z Z^T`.
    WithSignal,
    /// `E dS/dx(<Z, u>, <Z, mu*>, xi) Z Z^T`.
    SelfPair,
}

/// Legendre nodes used for the `U`-average.
pub const U_NODES: usize = 16;

fn is_phase_retrieval(model: &ModelSpec) -> bool {
    matches!(model.loss, Loss::SquaredOnLink) && model.link.name() == "square"
}

/// Coefficients of the Gaussian dynamics matrix at `u` with Gram numbers
/// `(uu, u_mu, mumu)`, by Gaussian integration by parts.
pub fn mz_coefficients(model: &ModelSpec, uu: f64, u_mu: f64, mumu: f64, mode: MzMode) -> Rank2Coefficients {
    let nu = model.noise.mean;
    if is_phase_retrieval(model) {
        return match mode {
            MzMode::SelfPair => Rank2Coefficients { c0: 6.0 * uu - 2.0 * mumu - 2.0 * nu, c11: 12.0, c12: 0.0, c22: -4.0 },
            MzMode::WithSignal => Rank2Coefficients { c0: 2.0 * uu + 2.0 * u_mu - 2.0 * nu, c11: 4.0, c12: 2.0, c22: 0.0 },
        };
    }
    let moments = |ww: f64, w_mu: f64| -> [f64; 4] {
        gauss2_expect_many(
            |x, z, xi| {
                let [a, b, c] = model.third(x, z, xi);
                [model.d1(x, z, xi), a, b, c]
            },
            GaussianPairCov::new(ww, w_mu, mumu),
            &model.noise,
            model.nodes,
            model.affine_in_noise(),
        )
    };
    match mode {
        MzMode::SelfPair => {
            let [g, e111, e112, e122] = moments(uu, u_mu);
            Rank2Coefficients { c0: g, c11: e111, c12: e112, c22: e122 }
        }
        MzMode::WithSignal => {
            let rule = quad::legendre01(U_NODES);
            let mut c = Rank2Coefficients { c0: 0.0, c11: 0.0, c12: 0.0, c22: 0.0 };
            for (&s, &w) in rule.nodes.iter().zip(&rule.weights) {
                let t = 1.0 - s;
                let ww = s * s * uu + 2.0 * s * t * u_mu + t * t * mumu;
                let w_mu = s * u_mu + t * mumu;
                let [g, e111, e112, e122] = moments(ww, w_mu);
                c.c0 += w * g;
                c.c11 += w * s * s * e111;
                c.c12 += w * (s * t * e111 + s * e112);
                c.c22 += w * (t * t * e111 + 2.0 * t * e112 + e122);
            }
            c
        }
    }
}

pub fn mz_matrix_eigs(model: &ModelSpec, uu: f64, u_mu: f64, mumu: f64, mode: MzMode) -> Rank2Spectrum {
    rank2_eigs_gram(mz_coefficients(model, uu, u_mu, mumu, mode), uu, u_mu, mumu)
}

/// Minimum eigenvalues along a track and the cumulative products built on them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BQuantities {
    pub lam_min_signal: Vec<f64>,
    pub lam_min_self: Vec<f64>,
    /// `B0(t)` for `t = 0..=T`, with `B0(0) = 0`.
    pub b0: Vec<f64>,
    pub b: Vec<f64>,
}

pub fn b_quantities(track: &SeTrack, eps_n: f64) -> BQuantities {
    let g = track.geometry;
    let mut out = BQuantities { lam_min_signal: vec![], lam_min_self: vec![], b0: vec![0.0], b: vec![0.0] };
    for p in &track.points {
        let uu = p.gamma * p.gamma;
        out.lam_min_signal.push(mz_matrix_eigs(&track.model, uu, p.alpha, g.star_norm2, MzMode::WithSignal).min());
        out.lam_min_self.push(mz_matrix_eigs(&track.model, uu, p.alpha, g.star_norm2, MzMode::SelfPair).min());
    }
    let neg = |x: f64| (-x).max(0.0);
    for (r, &eta) in track.etas.iter().enumerate() {
        let f0 = 1.0 + eta * neg(out.lam_min_signal[r]);
        let f1 = 1.0 + eta * neg(out.lam_min_self[r]) + eps_n;
        let (b0, b) = (out.b0[r], out.b[r]);
        out.b0.push((b0 + 1.0) * f0);
        out.b.push((b + 1.0) * f1);
    }
    out
}

/// Solution of the convex fixed-point equation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub tau: f64,
    pub delta: f64,
    pub iterations: usize,
    pub residual: f64,
}

/// Maximum Picard iterations before giving up.
pub const FIXED_POINT_MAX_ITER: usize = 10_000;

/// The map `(tau, delta) -> (E dS/dx(rG, G, xi), -E dS/dz(rG, G, xi))`
/// with `r = delta / tau` and `G ~ N(0, |mu*|^2)`.
pub fn fixed_point_map(model: &ModelSpec, mu_star_norm: f64, tau: f64, delta: f64) -> (f64, f64) {
    let s2 = mu_star_norm * mu_star_norm;
    let r = delta / tau;
    let cov = GaussianPairCov::new(r * r * s2, r * s2, s2);
    let [t, d] = if model.affine_in_noise() || model.noise.is_zero() {
        let nu = model.noise.mean;
        gauss2_plain(|x, z| { let (a, b) = model.d1_d2(x, z, nu); [a, b] }, cov, model.nodes)
    } else {
        model.noise.expect(|xi| gauss2_plain(|x, z| { let (a, b) = model.d1_d2(x, z, xi); [a, b] }, cov, model.nodes))
    };
    (t, -d)
}

/// Damped Picard iteration for the fixed point.
pub fn solve_fixed_point(model: &ModelSpec, mu_star_norm: f64, damping: f64, tol: f64) -> Result<FixedPoint> {
    if !(damping > 0.0 && damping <= 1.0) {
        return config_err("damping must lie in (0, 1]");
    }
    if mu_star_norm <= 0.0 {
        return config_err("signal norm must be positive");
    }
    let probe_min = (0..=20)
        .flat_map(|i| (0..=20).map(move |j| (-5.0 + 0.5 * i as f64, -5.0 + 0.5 * j as f64)))
        .map(|(x, z)| model.d1(x, z, model.noise.mean))
        .fold(f64::INFINITY, f64::min);
    if probe_min.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return config_err(format!("dS/dx is not bounded below by a positive constant (min {probe_min:e})"));
    }
    let (mut tau, mut delta) = (1.0, 1.0);
    let mut residual = f64::INFINITY;
    for it in 1..=FIXED_POINT_MAX_ITER {
        let (t1, d1) = fixed_point_map(model, mu_star_norm, tau, delta);
        let nt = (1.0 - damping) * tau + damping * t1;
        let nd = (1.0 - damping) * delta + damping * d1;
        if !(nt.is_finite() && nd.is_finite()) || nt <= 0.0 {
            return Err(Error::Numeric(format!("fixed-point iterate left the domain at iteration {it}")));
        }
        let change = (nt - tau).abs().max((nd - delta).abs());
        tau = nt;
        delta = nd;
        if change < tol {
            let (t2, d2) = fixed_point_map(model, mu_star_norm, tau, delta);
            residual = (t2 - tau).abs().max((d2 - delta).abs());
            return Ok(FixedPoint { tau, delta, iterations: it, residual });
        }
        residual = change;
    }
    Err(Error::Numeric(format!(
        "fixed point did not converge in {FIXED_POINT_MAX_ITER} iterations (last change {residual:e})"
    )))
}
