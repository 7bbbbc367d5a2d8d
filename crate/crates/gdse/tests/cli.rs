//! Exit codes and outputs of the `gdse` binary.

use std::process::Command;

fn gdse(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_gdse")).args(args).output().expect("binary runs")
}

#[test]
fn state_evolution_table_goes_to_stdout() {
    let out = gdse(&["se", "--link", "sigmoid", "--eta", "0.5", "--t-max", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("t,a,b,gamma,alpha,tau,delta,lam_min_signal,lam_min_self,B0,B\n"));
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn iterate_dump_holds_every_step() {
    let dir = std::env::temp_dir().join(format!("gdse-cli-dump-{}", std::process::id()));
    let out = gdse(&[
        "--out", dir.to_str().unwrap(), "gd", "--m", "40", "--n", "4", "--eta", "0.5", "--t-max", "6", "--dump-iterates",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read(dir.join("iterates.bin")).unwrap().len(), 7 * 4 * 8);
    assert_eq!(gdse(&["gd", "--m", "40", "--n", "4", "--eta", "0.5", "--dump-iterates"]).status.code(), Some(2));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn unknown_names_are_config_errors() {
    assert_eq!(gdse(&["se", "--link", "cubic", "--eta", "0.5"]).status.code(), Some(2));
    assert_eq!(gdse(&["experiment", "fig9"]).status.code(), Some(2));
    assert_eq!(gdse(&["sample", "--design", "cauchy", "--m", "4", "--n", "2"]).status.code(), Some(2));
    assert_eq!(gdse(&["--threads", "0", "se", "--eta", "0.5"]).status.code(), Some(2));
    assert_eq!(gdse(&["gd"]).status.code(), Some(2));
}

#[test]
fn bad_config_file_is_a_config_error() {
    let dir = std::env::temp_dir().join(format!("gdse-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("bad.toml");
    std::fs::write(&path, "[mf]\nphiz = [1.0]\n").unwrap();
    let out = gdse(&["--config", path.to_str().unwrap(), "experiment", "mf"]);
    assert_eq!(out.status.code(), Some(2));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn blown_up_evolution_is_a_numeric_failure() {
    let out = gdse(&["se", "--link", "square", "--eta", "10", "--t-max", "200"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn experiment_writes_table_manifest_and_plot_data() {
    let dir = std::env::temp_dir().join(format!("gdse-cli-exp-{}", std::process::id()));
    let cfg = dir.join("mf.toml");
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::write(&cfg, "[mf]\nphis = [5.0, 50.0]\nmc_draws = 2000\nt_max = 2\n").unwrap();
    let out = gdse(&["--config", cfg.to_str().unwrap(), "--out", dir.to_str().unwrap(), "--seed", "3", "experiment", "mf"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["mf/table.csv", "mf/manifest.json", "mf/plot/mf.csv", "mf/plot/plot_manifest.json"] {
        assert!(dir.join(f).is_file(), "missing {f}");
    }
    let export = dir.join("export");
    let out = gdse(&["--out", export.to_str().unwrap(), "export", "--from", dir.join("mf").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        std::fs::read(export.join("mf.csv")).unwrap(),
        std::fs::read(dir.join("mf/plot/mf.csv")).unwrap()
    );
    std::fs::remove_dir_all(&dir).unwrap();
}
