use clap::{Args, Parser, Subcommand};
use gdse::design::{empirical_moments, DesignRegistry};
use gdse::estimator::{estimator_run, EstimatorConfig};
use gdse::gd::{generate_responses, run_gd, GdConfig, StepSizes};
use gdse::harness::experiments::{flat_signal, gaussian_init, job_seed};
use gdse::harness::{emit_plotdata, run_experiment, ExperimentConfig, ExperimentKind, ResultTable};
use gdse::meanfield::{mf_compare, mf_run};
use gdse::state_evolution::{b_quantities, se_run, Geometry};
use gdse::{sample_design, DesignKind, Error, LinkFunction, ModelSpec, NoiseSpec, Result};
use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "gdse", version, about = "Gradient descent, state evolution and mean-field diagnostics for single-index models")]
struct Cli {
    /// Experiment configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed; overrides `run.seed` from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory; tables go to stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ModelArgs {
    #[arg(long, default_value = "sigmoid")]
    link: String,
    #[arg(long, default_value_t = 0.0)]
    noise_sigma: f64,
}

impl ModelArgs {
    fn model(&self) -> Result<ModelSpec> {
        let noise = if self.noise_sigma > 0.0 { NoiseSpec::gaussian(self.noise_sigma) } else { NoiseSpec::zero() };
        Ok(ModelSpec::squared_on_link(LinkFunction::by_name(&self.link)?, noise))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Sample a design and report its empirical moments.
    Sample {
        #[arg(long, default_value = "gaussian")]
        design: String,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: usize,
    },
    /// Run gradient descent on a freshly sampled problem.
    Gd {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value = "gaussian")]
        design: String,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        eta: f64,
        #[arg(long, default_value_t = 100)]
        t_max: usize,
        /// Also write every iterate to `iterates.bin` (little-endian f64, row per t); needs `--out`.
        #[arg(long)]
        dump_iterates: bool,
    },
    /// Run the state evolution for a unit signal.
    Se {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        eta: f64,
        #[arg(long, default_value_t = 100)]
        t_max: usize,
        #[arg(long, default_value_t = 1.0)]
        mu0_norm: f64,
        #[arg(long, default_value_t = 0.0)]
        overlap: f64,
        /// Slack added to each factor of the cumulative product `B`.
        #[arg(long, default_value_t = 0.0)]
        eps_n: f64,
    },
    /// Run the data-free estimator.
    Estimate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        eta: f64,
        #[arg(long, default_value_t = 100)]
        t_max: usize,
        #[arg(long, default_value_t = 1.0)]
        signal_norm: f64,
        #[arg(long, default_value_t = 1.0)]
        gamma0: f64,
        #[arg(long, default_value_t = 0.0)]
        alpha0: f64,
    },
    /// Mean-field diagnostics at one aspect ratio.
    Meanfield {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 50)]
        n: usize,
        #[arg(long)]
        phi: f64,
        #[arg(long, default_value_t = 0.5)]
        eta: f64,
        #[arg(long, default_value_t = 3)]
        t_max: usize,
        #[arg(long, default_value_t = 100_000)]
        mc_draws: usize,
        #[arg(long, default_value_t = 2)]
        moment: u32,
    },
    /// Run a configured experiment: fig1, fig2, conc, mf or custom.
    Experiment { name: String },
    /// Turn a stored result table into plot data.
    Export {
        /// Directory holding table.csv and manifest.json.
        #[arg(long)]
        from: PathBuf,
        /// Plot id; defaults to the table's experiment.
        #[arg(long)]
        plot: Option<String>,
    },
}

fn emit<T: Serialize>(rows: &[T], out: Option<&Path>, file: &str) -> Result<()> {
    let sink: Box<dyn Write> = match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            Box::new(std::fs::File::create(dir.join(file))?)
        }
        None => Box::new(std::io::stdout()),
    };
    let mut w = csv::Writer::from_writer(sink);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.run.seed = s;
    }
    if cli.threads.is_some() {
        cfg.run.threads = cli.threads;
    }
    if cli.out.is_some() {
        cfg.run.out = cli.out.clone();
    }
    if let Some(k) = cfg.run.threads {
        if k == 0 {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
    }
    let seed = cfg.run.seed;
    let out = cfg.run.out.clone();
    let out = out.as_deref();
    match cli.command {
        Command::Sample { design, m, n } => {
            let kind = DesignKind::parse(&design, &DesignRegistry::with_builtins())?;
            let x = sample_design(&kind, m, n, job_seed(seed, "cli/sample"))?;
            #[derive(Serialize)]
            struct Moment {
                design: String,
                order: u32,
                value: f64,
            }
            let rows = (1..=4)
                .map(|k| Ok(Moment { design: kind.name(), order: k, value: empirical_moments(&x, k)? }))
                .collect::<Result<Vec<_>>>()?;
            emit(&rows, out, "moments.csv")
        }
        Command::Gd { model, design, m, n, eta, t_max, dump_iterates } => {
            if dump_iterates && out.is_none() {
                return Err(Error::Config("--dump-iterates needs --out".into()));
            }
            let model = model.model()?;
            let kind = DesignKind::parse(&design, &DesignRegistry::with_builtins())?;
            let x = sample_design(&kind, m, n, job_seed(seed, "cli/gd/design"))?;
            let mu_star = flat_signal(n);
            let mu0 = gaussian_init(n, job_seed(seed, "cli/gd/init"));
            let (y, _) = generate_responses(&x, &mu_star, &model, job_seed(seed, "cli/gd/noise"));
            let track = se_run(Geometry::from_vectors(&mu0, &mu_star), &model, &StepSizes::Constant(eta), t_max)?;
            let mut gc = GdConfig::new(eta, t_max, mu0.clone())
                .with_signal(mu_star.clone())
                .with_reference(track.vectors(&mu0, &mu_star));
            gc.keep_iterates = dump_iterates;
            let traj = run_gd(&x, &y, &model, &gc)?.into_result()?;
            if let (true, Some(dir)) = (dump_iterates, out) {
                std::fs::create_dir_all(dir)?;
                let bytes: Vec<u8> = traj.iterates.iter().flatten().flat_map(|v| v.to_le_bytes()).collect();
                std::fs::write(dir.join("iterates.bin"), bytes)?;
            }
            emit(&traj.records, out, "gd.csv")
        }
        Command::Se { model, eta, t_max, mu0_norm, overlap, eps_n } => {
            if !(eps_n >= 0.0) {
                return Err(Error::Config("eps_n must be non-negative".into()));
            }
            let track = se_run(Geometry::unit_signal(mu0_norm, overlap), &model.model()?, &StepSizes::Constant(eta), t_max)?;
            let bq = b_quantities(&track, eps_n);
            #[derive(Serialize)]
            struct SeRow {
                t: usize,
                a: f64,
                b: f64,
                gamma: f64,
                alpha: f64,
                tau: f64,
                delta: f64,
                lam_min_signal: f64,
                lam_min_self: f64,
                #[serde(rename = "B0")]
                b0: f64,
                #[serde(rename = "B")]
                b_all: f64,
            }
            let rows: Vec<SeRow> = track
                .points
                .iter()
                .enumerate()
                .map(|(t, p)| SeRow {
                    t: p.t,
                    a: p.a,
                    b: p.b,
                    gamma: p.gamma,
                    alpha: p.alpha,
                    tau: p.tau,
                    delta: p.delta,
                    lam_min_signal: bq.lam_min_signal[t],
                    lam_min_self: bq.lam_min_self[t],
                    b0: bq.b0[t],
                    b_all: bq.b[t],
                })
                .collect();
            emit(&rows, out, "se.csv")
        }
        Command::Estimate { model, eta, t_max, signal_norm, gamma0, alpha0 } => {
            let track = estimator_run(&EstimatorConfig::new(signal_norm, eta, gamma0, alpha0), &model.model()?, t_max)?;
            if track.unbounded_link {
                eprintln!("warning: link looks unbounded; the estimator error bound does not formally apply");
            }
            emit(&track.rows, out, "estimate.csv")
        }
        Command::Meanfield { model, n, phi, eta, t_max, mc_draws, moment } => {
            let model = model.model()?;
            let mu_star = flat_signal(n);
            let mu0 = gaussian_init(n, job_seed(seed, "cli/meanfield/init"));
            let steps = StepSizes::Constant(eta);
            let mf = mf_run(&mu0, &mu_star, &model, &steps, phi, t_max, mc_draws, job_seed(seed, "cli/meanfield"))?;
            let track = se_run(Geometry::from_vectors(&mu0, &mu_star), &model, &steps, t_max)?;
            emit(&mf_compare(&mf, &track, &mu0, &mu_star, moment)?, out, "meanfield.csv")
        }
        Command::Experiment { name } => {
            let kind = ExperimentKind::parse(&name)?;
            let table = run_experiment(&cfg, kind)?;
            match out {
                Some(dir) => {
                    let dir = dir.join(kind.id());
                    table.write(&dir)?;
                    emit_plotdata(&table, kind.id(), &dir.join("plot"))?;
                    eprintln!("wrote {} rows to {}", table.rows.len(), dir.display());
                }
                None => std::io::stdout().write_all(&table.to_csv_bytes()?)?,
            }
            Ok(())
        }
        Command::Export { from, plot } => {
            let table = ResultTable::read(&from)?;
            let id = plot.unwrap_or_else(|| table.manifest.experiment.clone());
            let dir = out.map(Path::to_path_buf).unwrap_or_else(|| from.join("plot"));
            for f in emit_plotdata(&table, &id, &dir)? {
                println!("{}", f.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
