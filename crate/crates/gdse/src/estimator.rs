//! Data-free estimation of the state evolution.
//!
//! Only the link, the signal strength `|mu*|` and the step size are needed:
//! the pair `(gamma, alpha)` is propagated through its own two-dimensional
//! recursion, with `tau` and `delta` recomputed under the estimated Gaussian
//! covariance at every step. The noise never enters.

use crate::design::{replication_seed, rng_from_seed};
use crate::error::{config_err, Result};
use crate::model::{gauss2_plain, GaussianPairCov, ModelSpec, DEFAULT_NODES};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Backend {
    Quadrature { nodes: usize },
    MonteCarlo { draws: usize, seed: u64 },
}

impl Default for Backend {
    fn default() -> Self {
        Backend::Quadrature { nodes: DEFAULT_NODES }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub mu_star_norm: f64,
    pub eta: f64,
    pub gamma0_hat: f64,
    pub alpha0_hat: f64,
    /// Upper clamp on `gamma`.
    pub cap: f64,
    pub backend: Backend,
}

impl EstimatorConfig {
    pub fn new(mu_star_norm: f64, eta: f64, gamma0_hat: f64, alpha0_hat: f64) -> Self {
        EstimatorConfig { mu_star_norm, eta, gamma0_hat, alpha0_hat, cap: 100f64.exp(), backend: Backend::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu_star_norm > 0.0) {
            return config_err("signal norm must be positive");
        }
        if !(self.eta >= 0.0) || !(self.cap > 0.0) || !(self.gamma0_hat >= 0.0) {
            return config_err("step size, cap and initial gamma must be nonnegative (cap positive)");
        }
        if self.alpha0_hat.abs() > self.gamma0_hat * self.mu_star_norm * (1.0 + 1e-12) {
            return config_err("initial alpha exceeds gamma * |mu*|");
        }
        match self.backend {
            Backend::Quadrature { nodes } if nodes >= 2 => Ok(()),
            Backend::MonteCarlo { draws, .. } if draws >= 1 => Ok(()),
            _ => config_err("backend parameters must be positive"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorRow {
    pub t: usize,
    pub tau_hat: f64,
    pub delta_hat: f64,
    pub gamma_hat: f64,
    pub alpha_hat: f64,
    pub corr_hat: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorTrack {
    pub rows: Vec<EstimatorRow>,
    /// Steps at which the estimated covariance had to be projected.
    pub psd_clipped: Vec<usize>,
    /// Set when the link or its first two derivatives look unbounded, so the
    /// error guarantee for the estimator does not formally apply.
    pub unbounded_link: bool,
}

/// Outcome of one estimator step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutput {
    pub tau_hat: f64,
    pub delta_hat: f64,
    pub gamma_hat: f64,
    pub alpha_hat: f64,
    pub psd_clipped: bool,
}

/// `T_M(x) = (x ^ M) v (-M)`.
pub fn truncate(x: f64, bound: f64) -> f64 {
    x.min(bound).max(-bound)
}

fn hat_moments(model: &ModelSpec, cov: GaussianPairCov, backend: Backend, t: usize) -> (f64, f64) {
    match backend {
        Backend::Quadrature { nodes } => {
            let [a, b] = gauss2_plain(
                |x, z| {
                    let (d1, d2) = model.d1_d2(x, z, 0.0);
                    [d1, -d2]
                },
                cov,
                nodes,
            );
            (a, b)
        }
        Backend::MonteCarlo { draws, seed } => {
            let c = cov.projected();
            let s = c.s2.sqrt();
            let (slope, resid) = if c.s2 > 0.0 {
                let k = c.alpha / c.s2;
                (k, (c.gamma2 - c.alpha * k).max(0.0).sqrt())
            } else {
                (0.0, c.gamma2.sqrt())
            };
            let mut rng = rng_from_seed(replication_seed(seed, t as u64));
            let (mut a, mut b) = (0.0, 0.0);
            for _ in 0..draws {
                let g2: f64 = s * rng.sample::<f64, _>(StandardNormal);
                let g1 = slope * g2 + resid * rng.sample::<f64, _>(StandardNormal);
                let (d1, d2) = model.d1_d2(g1, g2, 0.0);
                a += d1;
                b -= d2;
            }
            (a / draws as f64, b / draws as f64)
        }
    }
}

/// One step from `(gamma, alpha)` at iteration `t`.
pub fn estimator_step(gamma: f64, alpha: f64, cfg: &EstimatorConfig, model: &ModelSpec, t: usize) -> StepOutput {
    let s2 = cfg.mu_star_norm * cfg.mu_star_norm;
    let raw = GaussianPairCov::new(gamma * gamma, alpha, s2);
    let psd_clipped = !raw.is_psd(1e-12);
    let (tau, delta) = hat_moments(model, raw, cfg.backend, t);
    let k = 1.0 - cfg.eta * tau;
    let ed = cfg.eta * delta;
    let g2 = k * k * gamma * gamma + ed * ed * s2 + 2.0 * ed * k * alpha;
    let gamma_next = g2.max(0.0).sqrt().min(cfg.cap);
    let alpha_next = truncate(k * alpha + ed * s2, gamma_next * cfg.mu_star_norm);
    StepOutput { tau_hat: tau, delta_hat: delta, gamma_hat: gamma_next, alpha_hat: alpha_next, psd_clipped }
}

fn corr(gamma: f64, alpha: f64, mu_star_norm: f64) -> f64 {
    if gamma == 0.0 {
        0.0
    } else {
        (alpha / (gamma * mu_star_norm)).clamp(-1.0, 1.0)
    }
}

/// Heuristic growth check of `phi`, `phi'` and `phi''`.
pub fn link_looks_unbounded(model: &ModelSpec) -> bool {
    let sup = |r: f64| {
        (0..=400)
            .map(|k| -r + 2.0 * r * k as f64 / 400.0)
            .map(|x| {
                let d = model.link.derivs(x);
                d[0].abs().max(d[1].abs()).max(d[2].abs())
            })
            .fold(0.0, f64::max)
    };
    sup(100.0) > 2.0 * sup(10.0)
}

pub fn estimator_run(cfg: &EstimatorConfig, model: &ModelSpec, t_max: usize) -> Result<EstimatorTrack> {
    cfg.validate()?;
    let mut rows = Vec::with_capacity(t_max + 1);
    let mut clipped = Vec::new();
    let (mut gamma, mut alpha) = (cfg.gamma0_hat.min(cfg.cap), cfg.alpha0_hat);
    for t in 0..=t_max {
        let out = estimator_step(gamma, alpha, cfg, model, t);
        if out.psd_clipped {
            clipped.push(t);
        }
        rows.push(EstimatorRow {
            t,
            tau_hat: out.tau_hat,
            delta_hat: out.delta_hat,
            gamma_hat: gamma,
            alpha_hat: alpha,
            corr_hat: corr(gamma, alpha, cfg.mu_star_norm),
        });
        gamma = out.gamma_hat;
        alpha = out.alpha_hat;
    }
    Ok(EstimatorTrack { rows, psd_clipped: clipped, unbounded_link: link_looks_unbounded(model) })
}

/// Moment estimate of `|mu*|` for the square link: `E Y = |mu*|^2 + E xi`.
pub fn signal_norm_square_link(y: &[f64], noise_mean: f64) -> Result<f64> {
    if y.is_empty() {
        return config_err("no responses");
    }
    let m2 = y.iter().sum::<f64>() / y.len() as f64 - noise_mean;
    if m2 <= 0.0 {
        return config_err("moment estimate of the squared signal norm is not positive");
    }
    Ok(m2.sqrt())
}
