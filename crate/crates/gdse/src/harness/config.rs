//! Experiment configuration files.
//!
//! A file holds an optional `[run]` section plus one flat section per
//! experiment. Every key has a default, and unknown keys or sections are
//! rejected when the file is parsed.

use crate::error::{config_err, Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExperimentKind {
    Fig1PR,
    Fig2Corr,
    ConcSweep,
    MfSweep,
    Custom,
}

impl ExperimentKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "fig1" => Ok(ExperimentKind::Fig1PR),
            "fig2" => Ok(ExperimentKind::Fig2Corr),
            "conc" => Ok(ExperimentKind::ConcSweep),
            "mf" => Ok(ExperimentKind::MfSweep),
            "custom" => Ok(ExperimentKind::Custom),
            other => config_err(format!("unknown experiment `{other}` (expected fig1, fig2, conc, mf or custom)")),
        }
    }

    pub fn id(self) -> &'static str {
        match self {
            ExperimentKind::Fig1PR => "fig1",
            ExperimentKind::Fig2Corr => "fig2",
            ExperimentKind::ConcSweep => "conc",
            ExperimentKind::MfSweep => "mf",
            ExperimentKind::Custom => "custom",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { seed: 20240917, out: None, threads: None }
    }
}

/// Randomly initialized phase retrieval under several designs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Fig1Config {
    pub designs: Vec<String>,
    pub dims: Vec<usize>,
    pub m: usize,
    pub eta: f64,
    pub replications: usize,
    pub t_max: usize,
    pub stop_at_corr: f64,
    /// Accepted band for `sqrt(n) <mu0, mu*> / |mu0|`.
    pub init_band: [f64; 2],
    pub max_init_attempts: usize,
}

impl Default for Fig1Config {
    fn default() -> Self {
        Fig1Config {
            designs: vec!["gaussian".into(), "rademacher".into(), "std_exponential".into()],
            dims: vec![50, 100, 150],
            m: 3000,
            eta: 0.1,
            replications: 50,
            t_max: 500,
            stop_at_corr: 0.999,
            init_band: [0.65, 0.75],
            max_init_attempts: 10_000,
        }
    }
}

/// Oracle correlation against the data-free estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Fig2Config {
    pub links: Vec<String>,
    /// One step size per link.
    pub etas: Vec<f64>,
    pub designs: Vec<String>,
    pub n: usize,
    pub m: usize,
    pub replications: usize,
    pub t_max: usize,
    pub noise_sigma: f64,
    pub quad_nodes: usize,
}

impl Default for Fig2Config {
    fn default() -> Self {
        Fig2Config {
            links: vec!["sigmoid".into(), "x_plus_sin".into(), "quad_plus_linear".into()],
            etas: vec![0.5, 0.01, 0.005],
            designs: vec!["gaussian".into(), "rademacher".into(), "std_exponential".into()],
            n: 300,
            m: 10_000,
            replications: 100,
            t_max: 100,
            noise_sigma: 0.0,
            quad_nodes: 60,
        }
    }
}

/// Concentration error across aspect ratios at fixed dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConcConfig {
    pub link: String,
    pub design: String,
    pub n: usize,
    pub phis: Vec<f64>,
    pub eta: f64,
    pub t_max: usize,
    pub replications: usize,
    pub noise_sigma: f64,
}

impl Default for ConcConfig {
    fn default() -> Self {
        ConcConfig {
            link: "identity".into(),
            design: "gaussian".into(),
            n: 50,
            phis: vec![50.0, 200.0, 800.0],
            eta: 0.3,
            t_max: 20,
            replications: 20,
            noise_sigma: 1.0,
        }
    }
}

/// Mean-field diagnostics across aspect ratios.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MfConfig {
    pub link: String,
    pub n: usize,
    pub phis: Vec<f64>,
    pub eta: f64,
    pub t_max: usize,
    pub mc_draws: usize,
    pub noise_sigma: f64,
    pub moment: u32,
}

impl Default for MfConfig {
    fn default() -> Self {
        MfConfig {
            link: "identity".into(),
            n: 50,
            phis: vec![10.0, 100.0, 1000.0],
            eta: 0.5,
            t_max: 3,
            mc_draws: 100_000,
            noise_sigma: 0.5,
            moment: 2,
        }
    }
}

/// A single empirical run family compared with the state evolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CustomConfig {
    pub link: String,
    pub design: String,
    pub n: usize,
    pub m: usize,
    pub eta: f64,
    pub t_max: usize,
    pub replications: usize,
    pub noise_sigma: f64,
}

impl Default for CustomConfig {
    fn default() -> Self {
        CustomConfig {
            link: "sigmoid".into(),
            design: "gaussian".into(),
            n: 100,
            m: 4000,
            eta: 0.5,
            t_max: 50,
            replications: 10,
            noise_sigma: 0.1,
        }
    }
}

/// The whole configuration file with every default filled in.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub run: RunSection,
    pub fig1: Fig1Config,
    pub fig2: Fig2Config,
    pub conc: ConcConfig,
    pub mf: MfConfig,
    pub custom: CustomConfig,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        config_err(format!("{name} must be positive, got {v}"))
    }
}

fn positive_int(name: &str, v: usize) -> Result<()> {
    if v > 0 {
        Ok(())
    } else {
        config_err(format!("{name} must be at least 1"))
    }
}

fn nonempty<T>(name: &str, v: &[T]) -> Result<()> {
    if v.is_empty() {
        config_err(format!("{name} must not be empty"))
    } else {
        Ok(())
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Check one experiment's section.
    pub fn validate(&self, kind: ExperimentKind) -> Result<()> {
        if self.run.threads == Some(0) {
            return config_err("threads must be at least 1");
        }
        match kind {
            ExperimentKind::Fig1PR => {
                let c = &self.fig1;
                nonempty("fig1.designs", &c.designs)?;
                nonempty("fig1.dims", &c.dims)?;
                c.dims.iter().try_for_each(|&n| positive_int("fig1.dims", n))?;
                positive_int("fig1.m", c.m)?;
                positive("fig1.eta", c.eta)?;
                positive_int("fig1.replications", c.replications)?;
                positive_int("fig1.t_max", c.t_max)?;
                positive_int("fig1.max_init_attempts", c.max_init_attempts)?;
                if !(c.init_band[0] < c.init_band[1]) {
                    return config_err("fig1.init_band must be an increasing pair");
                }
                Ok(())
            }
            ExperimentKind::Fig2Corr => {
                let c = &self.fig2;
                nonempty("fig2.links", &c.links)?;
                nonempty("fig2.designs", &c.designs)?;
                if c.etas.len() != c.links.len() {
                    return config_err("fig2.etas needs one step size per link");
                }
                // A zero step is allowed here: it gives constant tracks.
                if c.etas.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
                    return config_err("fig2.etas must be nonnegative");
                }
                positive_int("fig2.n", c.n)?;
                positive_int("fig2.m", c.m)?;
                positive_int("fig2.replications", c.replications)?;
                positive_int("fig2.t_max", c.t_max)?;
                positive_int("fig2.quad_nodes", c.quad_nodes)?;
                if !(c.noise_sigma >= 0.0) {
                    return config_err("fig2.noise_sigma must be nonnegative");
                }
                Ok(())
            }
            ExperimentKind::ConcSweep => {
                let c = &self.conc;
                positive_int("conc.n", c.n)?;
                nonempty("conc.phis", &c.phis)?;
                c.phis.iter().try_for_each(|&p| positive("conc.phis", p))?;
                positive("conc.eta", c.eta)?;
                positive_int("conc.t_max", c.t_max)?;
                positive_int("conc.replications", c.replications)?;
                if !(c.noise_sigma >= 0.0) {
                    return config_err("conc.noise_sigma must be nonnegative");
                }
                Ok(())
            }
            ExperimentKind::MfSweep => {
                let c = &self.mf;
                positive_int("mf.n", c.n)?;
                nonempty("mf.phis", &c.phis)?;
                c.phis.iter().try_for_each(|&p| positive("mf.phis", p))?;
                positive("mf.eta", c.eta)?;
                positive_int("mf.t_max", c.t_max)?;
                if c.mc_draws < 1000 {
                    return config_err("mf.mc_draws must be at least 1000");
                }
                if c.moment == 0 || c.moment % 2 == 1 {
                    return config_err("mf.moment must be a positive even integer");
                }
                if !(c.noise_sigma >= 0.0) {
                    return config_err("mf.noise_sigma must be nonnegative");
                }
                Ok(())
            }
            ExperimentKind::Custom => {
                let c = &self.custom;
                positive_int("custom.n", c.n)?;
                positive_int("custom.m", c.m)?;
                positive("custom.eta", c.eta)?;
                positive_int("custom.t_max", c.t_max)?;
                positive_int("custom.replications", c.replications)?;
                if !(c.noise_sigma >= 0.0) {
                    return config_err("custom.noise_sigma must be nonnegative");
                }
                Ok(())
            }
        }
    }

    /// The resolved section of one experiment, with the seed, as TOML.
    pub fn resolved_section(&self, kind: ExperimentKind) -> String {
        #[derive(Serialize)]
        struct Resolved<'a, T: Serialize> {
            seed: u64,
            section: &'a T,
        }
        let seed = self.run.seed;
        let text = match kind {
            ExperimentKind::Fig1PR => toml::to_string(&Resolved { seed, section: &self.fig1 }),
            ExperimentKind::Fig2Corr => toml::to_string(&Resolved { seed, section: &self.fig2 }),
            ExperimentKind::ConcSweep => toml::to_string(&Resolved { seed, section: &self.conc }),
            ExperimentKind::MfSweep => toml::to_string(&Resolved { seed, section: &self.mf }),
            ExperimentKind::Custom => toml::to_string(&Resolved { seed, section: &self.custom }),
        };
        text.expect("plain config structs always serialize")
    }

    /// Rebuild the configuration stored in a manifest. Sections other than
    /// the manifest's experiment keep their defaults.
    pub fn from_manifest(experiment: &str, resolved: &str) -> Result<(Self, ExperimentKind)> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Stored<T> {
            seed: u64,
            section: T,
        }
        fn parse<T: serde::de::DeserializeOwned>(text: &str) -> Result<(u64, T)> {
            let s: Stored<T> = toml::from_str(text).map_err(|e| Error::Config(format!("bad stored config: {e}")))?;
            Ok((s.seed, s.section))
        }
        let kind = ExperimentKind::parse(experiment)?;
        let mut cfg = ExperimentConfig::default();
        cfg.run.seed = match kind {
            ExperimentKind::Fig1PR => parse(resolved).map(|(s, c)| {
                cfg.fig1 = c;
                s
            })?,
            ExperimentKind::Fig2Corr => parse(resolved).map(|(s, c)| {
                cfg.fig2 = c;
                s
            })?,
            ExperimentKind::ConcSweep => parse(resolved).map(|(s, c)| {
                cfg.conc = c;
                s
            })?,
            ExperimentKind::MfSweep => parse(resolved).map(|(s, c)| {
                cfg.mf = c;
                s
            })?,
            ExperimentKind::Custom => parse(resolved).map(|(s, c)| {
                cfg.custom = c;
                s
            })?,
        };
        Ok((cfg, kind))
    }

    /// SHA-256 of [`Self::resolved_section`], hex encoded.
    pub fn hash(&self, kind: ExperimentKind) -> String {
        hex_digest(self.resolved_section(kind).as_bytes())
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// A 64-bit tag derived from a label, used to separate seed streams.
pub(crate) fn label_tag(label: &str) -> u64 {
    let d = Sha256::digest(label.as_bytes());
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}
