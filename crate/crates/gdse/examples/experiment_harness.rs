// Configure an experiment in TOML, run it, persist the table with its
// manifest, rerun from the stored configuration and export plot data.
//
// ```bash
// cargo run -p gdse --example experiment_harness
// ```

use gdse::harness::{emit_plotdata, run_experiment, ExperimentConfig, ExperimentKind, ResultTable};
use std::error::Error;

const CONFIG: &str = r#"
[run]
seed = 4242

[conc]
n = 20
phis = [20.0, 80.0]
t_max = 10
replications = 4
"#;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let cfg = ExperimentConfig::from_toml_str(CONFIG)?;
    let table = run_experiment(&cfg, ExperimentKind::ConcSweep)?;
    println!("{} rows, config hash {}", table.rows.len(), &table.manifest.config_hash[..12]);

    let dir = std::env::temp_dir().join(format!("gdse-harness-example-{}", std::process::id()));
    table.write(&dir)?;
    let stored = ResultTable::read(&dir)?;
    assert_eq!(stored.manifest, table.manifest);

    // Rerunning with one thread reproduces the table byte for byte.
    let mut again = cfg.clone();
    again.run.threads = Some(1);
    assert_eq!(run_experiment(&again, ExperimentKind::ConcSweep)?.to_csv_bytes()?, table.to_csv_bytes()?);

    for file in emit_plotdata(&stored, "conc", &dir.join("plot"))? {
        println!("wrote {}", file.display());
    }
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
