//! Tidy per-panel CSV files for plotting. Nothing is rendered here.

use super::table::{ResultTable, Row};
use crate::error::{config_err, Result};
use serde::Serialize;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

pub const PLOT_IDS: [&str; 5] = ["fig1", "fig2", "conc", "mf", "custom"];

#[derive(Serialize)]
struct PlotManifest<'a> {
    plot: &'a str,
    config_hash: &'a str,
    artifact_version: &'a str,
    files: Vec<String>,
}

/// Ordered key for floats that come straight from the table.
fn fkey(x: f64) -> u64 {
    x.to_bits()
}

fn aggregates<'a>(table: &'a ResultTable, metric: &'a str) -> impl Iterator<Item = &'a Row> + 'a {
    table.rows.iter().filter(move |r| r.replication.is_none() && r.metric == metric)
}

fn write_csv(path: &Path, header: &[&str], records: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in records {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Values of `metric` keyed by `(group, t, design)`.
fn lookup<'a>(table: &'a ResultTable, metric: &'a str, group: impl Fn(&Row) -> String) -> BTreeMap<(String, usize, String), f64> {
    aggregates(table, metric).map(|r| ((group(r), r.t, r.design.clone()), r.value)).collect()
}

/// Write the CSV files of plot `plot_id` plus a `plot_manifest.json` into `dir`.
pub fn emit_plotdata(table: &ResultTable, plot_id: &str, dir: &Path) -> Result<Vec<PathBuf>> {
    if !PLOT_IDS.contains(&plot_id) {
        return config_err(format!("unknown plot id `{plot_id}` (expected one of {})", PLOT_IDS.join(", ")));
    }
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    match plot_id {
        "fig1" => {
            let header = ["t", "design", "mean_abs_corr"];
            let mut by_n: BTreeMap<usize, Vec<Vec<String>>> = BTreeMap::new();
            for r in aggregates(table, "mean_abs_corr") {
                by_n.entry(r.n).or_default().push(vec![r.t.to_string(), r.design.clone(), r.value.to_string()]);
            }
            if by_n.is_empty() {
                files.push(dir.join("fig1.csv"));
                write_csv(&files[0], &header, &[])?;
            }
            for (n, mut recs) in by_n {
                recs.sort_by(|a, b| (a[0].parse::<usize>().unwrap(), &a[1]).cmp(&(b[0].parse::<usize>().unwrap(), &b[1])));
                let path = dir.join(format!("fig1_n{n}.csv"));
                write_csv(&path, &header, &recs)?;
                files.push(path);
            }
        }
        "fig2" => {
            let header = ["t", "design", "oracle", "estimated"];
            let oracle = lookup(table, "mean_oracle_corr", |r| r.model.clone());
            let est = lookup(table, "corr_hat", |r| r.model.clone());
            let mut by_link: BTreeMap<String, Vec<Vec<String>>> = BTreeMap::new();
            for ((link, t, design), v) in &oracle {
                let e = est.get(&(link.clone(), *t, design.clone())).copied().unwrap_or(f64::NAN);
                by_link.entry(link.clone()).or_default().push(vec![t.to_string(), design.clone(), v.to_string(), e.to_string()]);
            }
            if by_link.is_empty() {
                files.push(dir.join("fig2.csv"));
                write_csv(&files[0], &header, &[])?;
            }
            for (link, mut recs) in by_link {
                recs.sort_by(|a, b| (a[0].parse::<usize>().unwrap(), &a[1]).cmp(&(b[0].parse::<usize>().unwrap(), &b[1])));
                let path = dir.join(format!("fig2_{link}.csv"));
                write_csv(&path, &header, &recs)?;
                files.push(path);
            }
        }
        "conc" => {
            let header = ["phi", "t", "median_conc_error", "median_incoherence", "max_incoherence"];
            let mut cells: BTreeMap<(u64, usize), [f64; 4]> = BTreeMap::new();
            for (k, metric) in ["median_conc_error", "median_incoherence", "max_incoherence"].iter().enumerate() {
                for r in aggregates(table, metric) {
                    let phi = r.m as f64 / r.n as f64;
                    let cell = cells.entry((fkey(phi), r.t)).or_insert([phi, f64::NAN, f64::NAN, f64::NAN]);
                    cell[k + 1] = r.value;
                }
            }
            let recs: Vec<Vec<String>> = cells
                .iter()
                .map(|((_, t), v)| vec![v[0].to_string(), t.to_string(), v[1].to_string(), v[2].to_string(), v[3].to_string()])
                .collect();
            let path = dir.join("conc.csv");
            write_csv(&path, &header, &recs)?;
            files.push(path);
        }
        "mf" => {
            let header = ["t", "phi", "offdiag_tau", "w_cov_max", "omega_gap_p", "mc_draws"];
            let metrics = ["phi", "offdiag_tau", "w_cov_max", "omega_gap", "mc_draws"];
            let mut cells: BTreeMap<(u64, usize), [f64; 5]> = BTreeMap::new();
            for (k, metric) in metrics.iter().enumerate() {
                for r in aggregates(table, metric) {
                    let cell = cells.entry((r.seed, r.t)).or_insert([f64::NAN; 5]);
                    cell[k] = r.value;
                }
            }
            let mut recs: Vec<(usize, u64, Vec<String>)> = cells
                .iter()
                .map(|((_, t), v)| {
                    let row = vec![t.to_string(), v[0].to_string(), v[1].to_string(), v[2].to_string(), v[3].to_string(), (v[4] as u64).to_string()];
                    (*t, fkey(v[0]), row)
                })
                .collect();
            recs.sort_by(|a, b| (a.0, f64::from_bits(a.1)).partial_cmp(&(b.0, f64::from_bits(b.1))).unwrap());
            let path = dir.join("mf.csv");
            write_csv(&path, &header, &recs.into_iter().map(|r| r.2).collect::<Vec<_>>())?;
            files.push(path);
        }
        _ => {
            let header = ["t", "mean_corr", "median_conc_error"];
            let corr: BTreeMap<usize, f64> = aggregates(table, "mean_corr").map(|r| (r.t, r.value)).collect();
            let conc: BTreeMap<usize, f64> = aggregates(table, "median_conc_error").map(|r| (r.t, r.value)).collect();
            let recs: Vec<Vec<String>> = corr
                .iter()
                .map(|(t, v)| vec![t.to_string(), v.to_string(), conc.get(t).copied().unwrap_or(f64::NAN).to_string()])
                .collect();
            let path = dir.join("custom.csv");
            write_csv(&path, &header, &recs)?;
            files.push(path);
        }
    }
    let manifest = PlotManifest {
        plot: plot_id,
        config_hash: &table.manifest.config_hash,
        artifact_version: &table.manifest.artifact_version,
        files: files.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect(),
    };
    let mpath = dir.join("plot_manifest.json");
    fs::write(&mpath, serde_json::to_string_pretty(&manifest).expect("manifest serializes"))?;
    files.push(mpath);
    Ok(files)
}
