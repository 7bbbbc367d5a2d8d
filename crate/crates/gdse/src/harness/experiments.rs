//! Experiment runners producing [`ResultTable`]s.
//!
//! Every job (one grid cell) gets a seed derived from the base seed and the
//! job label; replication `r` of the job uses `replication_seed(job, r)`, and
//! the design, initialization and noise streams of a replication are split
//! off that seed. Replications run on the rayon pool and are merged by index.

use super::config::{label_tag, ConcConfig, CustomConfig, ExperimentConfig, ExperimentKind, Fig1Config, Fig2Config, MfConfig};
use super::table::{Manifest, ResultTable, Row, SeedEntry};
use crate::design::{replication_seed, rng_from_seed, sample_design, DesignKind, DesignRegistry};
use crate::error::{Error, Result};
use crate::estimator::{estimator_run, Backend, EstimatorConfig};
use crate::gd::{generate_responses, run_gd, GdConfig, StepSizes};
use crate::linalg::{dot, norm};
use crate::meanfield::{mf_compare, mf_run};
use crate::model::{LinkFunction, ModelSpec, NoiseSpec};
use crate::state_evolution::{se_run, Geometry};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

const DESIGN_STREAM: u64 = 1;
const INIT_STREAM: u64 = 2;
const NOISE_STREAM: u64 = 3;

pub fn job_seed(base: u64, label: &str) -> u64 {
    replication_seed(base, label_tag(label))
}

/// `N(0, I_n / n)`.
pub fn gaussian_init(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    let s = (n as f64).sqrt();
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal) / s).collect()
}

/// `1_n / sqrt(n)`.
pub fn flat_signal(n: usize) -> Vec<f64> {
    vec![1.0 / (n as f64).sqrt(); n]
}

/// Rejection-sample `mu0 ~ N(0, I_n / n)` until
/// `sqrt(n) <mu0, mu*> / |mu0|` falls inside `band`.
pub fn banded_init(n: usize, mu_star: &[f64], band: [f64; 2], max_attempts: usize, seed: u64) -> Result<(Vec<f64>, f64, usize)> {
    let mut rng = rng_from_seed(seed);
    let s = (n as f64).sqrt();
    for attempt in 1..=max_attempts {
        let mu0: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal) / s).collect();
        let scaled = s * dot(&mu0, mu_star) / norm(&mu0);
        if scaled >= band[0] && scaled <= band[1] {
            return Ok((mu0, scaled, attempt));
        }
    }
    Err(Error::Numeric(format!(
        "no initialization with scaled correlation in [{}, {}] after {max_attempts} attempts",
        band[0], band[1]
    )))
}

fn noise(sigma: f64) -> NoiseSpec {
    if sigma > 0.0 {
        NoiseSpec::gaussian(sigma)
    } else {
        NoiseSpec::zero()
    }
}

fn design(name: &str) -> Result<DesignKind> {
    DesignKind::parse(name, &DesignRegistry::with_builtins())
}

/// Median of the finite entries; NaN when there are none.
pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

fn mean_finite(values: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut k) = (0.0, 0usize);
    for v in values.filter(|v| v.is_finite()) {
        s += v;
        k += 1;
    }
    if k == 0 {
        f64::NAN
    } else {
        s / k as f64
    }
}

/// Common columns of a job.
#[derive(Clone)]
struct JobKey {
    experiment: &'static str,
    design: String,
    model: String,
    m: usize,
    n: usize,
    eta: f64,
    seed: u64,
}

impl JobKey {
    fn row(&self, replication: Option<(usize, u64)>, t: usize, metric: &str, value: f64) -> Row {
        Row {
            experiment: self.experiment.into(),
            design: self.design.clone(),
            model: self.model.clone(),
            m: self.m,
            n: self.n,
            eta: self.eta,
            replication: replication.map(|r| r.0),
            seed: replication.map_or(self.seed, |r| r.1),
            t,
            metric: metric.into(),
            value,
        }
    }
}

struct Collector {
    rows: Vec<Row>,
    seeds: Vec<SeedEntry>,
}

impl Collector {
    fn new() -> Self {
        Collector { rows: Vec::new(), seeds: Vec::new() }
    }

    fn job(&mut self, label: &str, seed: u64, reps: usize) -> Vec<u64> {
        self.seeds.push(SeedEntry { job: label.into(), replication: None, seed });
        (0..reps)
            .map(|r| {
                let s = replication_seed(seed, r as u64);
                self.seeds.push(SeedEntry { job: label.into(), replication: Some(r), seed: s });
                s
            })
            .collect()
    }

    fn finish(self, cfg: &ExperimentConfig, kind: ExperimentKind) -> ResultTable {
        ResultTable {
            rows: self.rows,
            manifest: Manifest {
                experiment: kind.id().into(),
                artifact_version: env!("CARGO_PKG_VERSION").into(),
                config_hash: cfg.hash(kind),
                config: cfg.resolved_section(kind),
                base_seed: cfg.run.seed,
                seeds: self.seeds,
            },
        }
    }
}

/// Run one experiment, on a dedicated pool when `run.threads` is set.
pub fn run_experiment(cfg: &ExperimentConfig, kind: ExperimentKind) -> Result<ResultTable> {
    cfg.validate(kind)?;
    let go = || match kind {
        ExperimentKind::Fig1PR => run_fig1(cfg),
        ExperimentKind::Fig2Corr => run_fig2(cfg),
        ExperimentKind::ConcSweep => run_conc_sweep(cfg),
        ExperimentKind::MfSweep => run_mf_sweep(cfg),
        ExperimentKind::Custom => run_custom(cfg),
    };
    match cfg.run.threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?
            .install(go),
        None => go(),
    }
}

struct Fig1Rep {
    abs_corr: Vec<f64>,
    final_corr: f64,
    init_scaled: f64,
    attempts: usize,
    diverged_at: Option<usize>,
    stopped_at: Option<usize>,
}

fn fig1_rep(c: &Fig1Config, kind: &DesignKind, n: usize, seed: u64) -> Result<Fig1Rep> {
    let mu_star = flat_signal(n);
    let (mu0, init_scaled, attempts) =
        banded_init(n, &mu_star, c.init_band, c.max_init_attempts, replication_seed(seed, INIT_STREAM))?;
    let x = sample_design(kind, c.m, n, replication_seed(seed, DESIGN_STREAM))?;
    let model = ModelSpec::squared_on_link(LinkFunction::square(), NoiseSpec::zero());
    let (y, _) = generate_responses(&x, &mu_star, &model, replication_seed(seed, NOISE_STREAM));
    let mut gc = GdConfig::new(c.eta, c.t_max, mu0).with_signal(mu_star);
    gc.stop_at_corr = Some(c.stop_at_corr);
    let traj = run_gd(&x, &y, &model, &gc)?;
    let mut abs_corr = vec![f64::NAN; c.t_max + 1];
    for r in &traj.records {
        abs_corr[r.t] = r.corr.abs();
    }
    if traj.diverged_at.is_none() {
        // Carry the last value forward past an early stop.
        for t in 1..=c.t_max {
            if abs_corr[t].is_nan() {
                abs_corr[t] = abs_corr[t - 1];
            }
        }
    }
    let final_corr = traj.last().corr;
    Ok(Fig1Rep { abs_corr, final_corr, init_scaled, attempts, diverged_at: traj.diverged_at, stopped_at: traj.stopped_at })
}

/// Phase retrieval from banded random initializations, per design and dimension.
pub fn run_fig1(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let c = &cfg.fig1;
    let mut out = Collector::new();
    for dname in &c.designs {
        let kind = design(dname)?;
        for &n in &c.dims {
            let label = format!("fig1/{}/n{n}", kind.name());
            let seed = job_seed(cfg.run.seed, &label);
            let seeds = out.job(&label, seed, c.replications);
            let reps = seeds
                .par_iter()
                .map(|&s| fig1_rep(c, &kind, n, s))
                .collect::<Result<Vec<_>>>()?;
            let key = JobKey { experiment: "fig1", design: kind.name(), model: "square".into(), m: c.m, n, eta: c.eta, seed };
            for (r, (rep, &s)) in reps.iter().zip(&seeds).enumerate() {
                let id = Some((r, s));
                out.rows.push(key.row(id, 0, "init_scaled_corr", rep.init_scaled));
                out.rows.push(key.row(id, 0, "init_attempts", rep.attempts as f64));
                if let Some(t) = rep.diverged_at {
                    out.rows.push(key.row(id, t, "diverged_at", t as f64));
                }
                if let Some(t) = rep.stopped_at {
                    out.rows.push(key.row(id, t, "stopped_at", t as f64));
                }
                out.rows.push(key.row(id, c.t_max, "final_abs_corr", rep.abs_corr[c.t_max]));
                out.rows.push(key.row(id, c.t_max, "final_corr", rep.final_corr));
            }
            let kept: Vec<&Fig1Rep> = reps.iter().filter(|r| r.diverged_at.is_none()).collect();
            for t in 0..=c.t_max {
                let v = mean_finite(kept.iter().map(|r| r.abs_corr[t]));
                out.rows.push(key.row(None, t, "mean_abs_corr", v));
            }
            out.rows.push(key.row(None, c.t_max, "diverged", (reps.len() - kept.len()) as f64));
        }
    }
    Ok(out.finish(cfg, ExperimentKind::Fig1PR))
}

struct Fig2Rep {
    corr: Vec<f64>,
    corr_hat: Vec<f64>,
    diverged: bool,
}

fn fig2_rep(c: &Fig2Config, kind: &DesignKind, model: &ModelSpec, eta: f64, seed: u64) -> Result<Fig2Rep> {
    let n = c.n;
    let mu_star = flat_signal(n);
    let mu0 = gaussian_init(n, replication_seed(seed, INIT_STREAM));
    let x = sample_design(kind, c.m, n, replication_seed(seed, DESIGN_STREAM))?;
    let (y, _) = generate_responses(&x, &mu_star, model, replication_seed(seed, NOISE_STREAM));
    let mut ec = EstimatorConfig::new(norm(&mu_star), eta, norm(&mu0), 0.0);
    ec.backend = Backend::Quadrature { nodes: c.quad_nodes };
    let est = estimator_run(&ec, model, c.t_max)?;
    let gc = GdConfig::new(eta, c.t_max, mu0).with_signal(mu_star);
    let traj = run_gd(&x, &y, model, &gc)?;
    let mut corr = vec![f64::NAN; c.t_max + 1];
    for r in &traj.records {
        corr[r.t] = r.corr;
    }
    Ok(Fig2Rep {
        corr,
        corr_hat: est.rows.iter().map(|r| r.corr_hat).collect(),
        diverged: traj.diverged_at.is_some(),
    })
}

/// Oracle correlation of empirical runs next to the data-free estimate.
pub fn run_fig2(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let c = &cfg.fig2;
    let mut out = Collector::new();
    for (lname, &eta) in c.links.iter().zip(&c.etas) {
        let link = LinkFunction::by_name(lname)?;
        let model = ModelSpec::squared_on_link(link, noise(c.noise_sigma));
        for dname in &c.designs {
            let kind = design(dname)?;
            let label = format!("fig2/{lname}/{}", kind.name());
            let seed = job_seed(cfg.run.seed, &label);
            let seeds = out.job(&label, seed, c.replications);
            let reps = seeds
                .par_iter()
                .map(|&s| fig2_rep(c, &kind, &model, eta, s))
                .collect::<Result<Vec<_>>>()?;
            let key =
                JobKey { experiment: "fig2", design: kind.name(), model: lname.clone(), m: c.m, n: c.n, eta, seed };
            for (r, (rep, &s)) in reps.iter().zip(&seeds).enumerate() {
                out.rows.push(key.row(Some((r, s)), c.t_max, "final_corr", rep.corr[c.t_max]));
            }
            let kept: Vec<&Fig2Rep> = reps.iter().filter(|r| !r.diverged).collect();
            for t in 0..=c.t_max {
                let oracle = mean_finite(kept.iter().map(|r| r.corr[t]));
                let est = mean_finite(reps.iter().map(|r| r.corr_hat[t]));
                out.rows.push(key.row(None, t, "mean_oracle_corr", oracle));
                out.rows.push(key.row(None, t, "corr_hat", est));
                out.rows.push(key.row(None, t, "abs_gap", (oracle - est).abs()));
            }
            out.rows.push(key.row(None, c.t_max, "diverged", (reps.len() - kept.len()) as f64));
        }
    }
    Ok(out.finish(cfg, ExperimentKind::Fig2Corr))
}

struct ConcRep {
    conc: Vec<f64>,
    incoherence: Vec<f64>,
    norm: Vec<f64>,
    corr: Vec<f64>,
}

/// One empirical run measured against its own state evolution reference.
#[allow(clippy::too_many_arguments)]
fn reference_rep(
    kind: &DesignKind,
    model: &ModelSpec,
    n: usize,
    m: usize,
    eta: f64,
    t_max: usize,
    seed: u64,
) -> Result<ConcRep> {
    let mu_star = flat_signal(n);
    let mu0 = gaussian_init(n, replication_seed(seed, INIT_STREAM));
    let track = se_run(Geometry::from_vectors(&mu0, &mu_star), model, &StepSizes::Constant(eta), t_max)?;
    let reference = track.vectors(&mu0, &mu_star);
    let x = sample_design(kind, m, n, replication_seed(seed, DESIGN_STREAM))?;
    let (y, _) = generate_responses(&x, &mu_star, model, replication_seed(seed, NOISE_STREAM));
    let gc = GdConfig::new(eta, t_max, mu0).with_signal(mu_star).with_reference(reference);
    let traj = run_gd(&x, &y, model, &gc)?.into_result()?;
    Ok(ConcRep {
        conc: traj.records.iter().map(|r| r.conc_error).collect(),
        incoherence: traj.records.iter().map(|r| r.incoherence).collect(),
        norm: traj.records.iter().map(|r| r.norm).collect(),
        corr: traj.records.iter().map(|r| r.corr).collect(),
    })
}

fn sample_size(phi: f64, n: usize) -> usize {
    ((phi * n as f64).round() as usize).max(1)
}

/// Concentration error and incoherence across aspect ratios.
pub fn run_conc_sweep(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let c: &ConcConfig = &cfg.conc;
    let kind = design(&c.design)?;
    let model = ModelSpec::squared_on_link(LinkFunction::by_name(&c.link)?, noise(c.noise_sigma));
    let mut out = Collector::new();
    for &phi in &c.phis {
        let m = sample_size(phi, c.n);
        let label = format!("conc/{}/{}/m{m}", c.link, kind.name());
        let seed = job_seed(cfg.run.seed, &label);
        let seeds = out.job(&label, seed, c.replications);
        let reps = seeds
            .par_iter()
            .map(|&s| reference_rep(&kind, &model, c.n, m, c.eta, c.t_max, s))
            .collect::<Result<Vec<_>>>()?;
        let key = JobKey { experiment: "conc", design: kind.name(), model: c.link.clone(), m, n: c.n, eta: c.eta, seed };
        for (r, (rep, &s)) in reps.iter().zip(&seeds).enumerate() {
            for t in 0..=c.t_max {
                out.rows.push(key.row(Some((r, s)), t, "conc_error", rep.conc[t]));
                out.rows.push(key.row(Some((r, s)), t, "incoherence", rep.incoherence[t]));
                out.rows.push(key.row(Some((r, s)), t, "norm", rep.norm[t]));
            }
        }
        for t in 0..=c.t_max {
            let conc: Vec<f64> = reps.iter().map(|r| r.conc[t]).collect();
            let inc: Vec<f64> = reps.iter().map(|r| r.incoherence[t]).collect();
            out.rows.push(key.row(None, t, "median_conc_error", median(&conc)));
            out.rows.push(key.row(None, t, "median_incoherence", median(&inc)));
            out.rows.push(key.row(None, t, "max_incoherence", inc.iter().copied().fold(0.0, f64::max)));
        }
    }
    Ok(out.finish(cfg, ExperimentKind::ConcSweep))
}

/// Mean-field diagnostics per aspect ratio for one shared initialization.
pub fn run_mf_sweep(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let c: &MfConfig = &cfg.mf;
    let model = ModelSpec::squared_on_link(LinkFunction::by_name(&c.link)?, noise(c.noise_sigma));
    let mu_star = flat_signal(c.n);
    let init_label = format!("mf/{}/init", c.link);
    let mu0 = gaussian_init(c.n, job_seed(cfg.run.seed, &init_label));
    let steps = StepSizes::Constant(c.eta);
    let track = se_run(Geometry::from_vectors(&mu0, &mu_star), &model, &steps, c.t_max)?;
    let mut out = Collector::new();
    out.seeds.push(SeedEntry { job: init_label.clone(), replication: None, seed: job_seed(cfg.run.seed, &init_label) });
    for &phi in &c.phis {
        let m = sample_size(phi, c.n);
        let label = format!("mf/{}/phi{phi}", c.link);
        let seed = job_seed(cfg.run.seed, &label);
        out.job(&label, seed, 0);
        let run = mf_run(&mu0, &mu_star, &model, &steps, phi, c.t_max, c.mc_draws, seed)?;
        let diags = mf_compare(&run, &track, &mu0, &mu_star, c.moment)?;
        let key = JobKey { experiment: "mf", design: "gaussian".into(), model: c.link.clone(), m, n: c.n, eta: c.eta, seed };
        for (d, st) in diags.iter().zip(&run.states) {
            let tau_se = st.tau_se.iter().flatten().copied().fold(0.0, f64::max);
            out.rows.push(key.row(None, d.t, "phi", phi));
            out.rows.push(key.row(None, d.t, "offdiag_tau", d.offdiag_tau));
            out.rows.push(key.row(None, d.t, "w_cov_max", d.w_cov_max));
            out.rows.push(key.row(None, d.t, "omega_gap", d.omega_gap));
            out.rows.push(key.row(None, d.t, "tau_se_max", tau_se));
            out.rows.push(key.row(None, d.t, "mc_draws", c.mc_draws as f64));
        }
    }
    Ok(out.finish(cfg, ExperimentKind::MfSweep))
}

/// A user-chosen link and design, compared with the state evolution.
pub fn run_custom(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let c: &CustomConfig = &cfg.custom;
    let kind = design(&c.design)?;
    let model = ModelSpec::squared_on_link(LinkFunction::by_name(&c.link)?, noise(c.noise_sigma));
    let mut out = Collector::new();
    let label = format!("custom/{}/{}/m{}/n{}", c.link, kind.name(), c.m, c.n);
    let seed = job_seed(cfg.run.seed, &label);
    let seeds = out.job(&label, seed, c.replications);
    let reps = seeds
        .par_iter()
        .map(|&s| reference_rep(&kind, &model, c.n, c.m, c.eta, c.t_max, s))
        .collect::<Result<Vec<_>>>()?;
    let key = JobKey { experiment: "custom", design: kind.name(), model: c.link.clone(), m: c.m, n: c.n, eta: c.eta, seed };
    for (r, (rep, &s)) in reps.iter().zip(&seeds).enumerate() {
        for t in 0..=c.t_max {
            out.rows.push(key.row(Some((r, s)), t, "corr", rep.corr[t]));
            out.rows.push(key.row(Some((r, s)), t, "conc_error", rep.conc[t]));
        }
    }
    for t in 0..=c.t_max {
        let conc: Vec<f64> = reps.iter().map(|r| r.conc[t]).collect();
        out.rows.push(key.row(None, t, "mean_corr", mean_finite(reps.iter().map(|r| r.corr[t]))));
        out.rows.push(key.row(None, t, "median_conc_error", median(&conc)));
    }
    Ok(out.finish(cfg, ExperimentKind::Custom))
}
