//! Long-format result tables and their manifests.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

pub const TABLE_FILE: &str = "table.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// One measurement. Aggregates over replications leave `replication` empty;
/// `seed` is then the seed of the job the aggregate belongs to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub experiment: String,
    pub design: String,
    pub model: String,
    pub m: usize,
    pub n: usize,
    pub eta: f64,
    pub replication: Option<usize>,
    pub seed: u64,
    pub t: usize,
    pub metric: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedEntry {
    pub job: String,
    pub replication: Option<usize>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: String,
    pub artifact_version: String,
    pub config_hash: String,
    /// Resolved configuration section, defaults included.
    pub config: String,
    pub base_seed: u64,
    pub seeds: Vec<SeedEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<Row>,
    pub manifest: Manifest,
}

impl ResultTable {
    pub fn to_csv_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        if self.rows.is_empty() {
            w.write_record(ROW_HEADER)?;
        }
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }

    pub fn manifest_json(&self) -> String {
        serde_json::to_string_pretty(&self.manifest).expect("manifest serializes")
    }

    /// Write `table.csv` and `manifest.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(TABLE_FILE), self.to_csv_bytes()?)?;
        fs::write(dir.join(MANIFEST_FILE), self.manifest_json())?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let manifest_text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
        let manifest: Manifest =
            serde_json::from_str(&manifest_text).map_err(|e| Error::Config(format!("bad manifest: {e}")))?;
        let mut rdr = csv::Reader::from_path(dir.join(TABLE_FILE))?;
        let rows = rdr.deserialize().collect::<std::result::Result<Vec<Row>, _>>()?;
        Ok(ResultTable { rows, manifest })
    }

    pub fn metric<'a>(&'a self, metric: &'a str) -> impl Iterator<Item = &'a Row> + 'a {
        self.rows.iter().filter(move |r| r.metric == metric)
    }
}

const ROW_HEADER: [&str; 11] = ["experiment", "design", "model", "m", "n", "eta", "replication", "seed", "t", "metric", "value"];
