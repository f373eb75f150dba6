//! Run manifests, output files with schema headers, and run comparison.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_SCHEMA: &str = "cylinder-rds/manifest/v1";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Ok,
    Failed,
    Skipped,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub status: StageStatus,
    pub error: Option<String>,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub file: String,
    pub schema: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub pass: bool,
    pub detail: String,
}

/// Headline numbers kept in the manifest for comparison.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub n: Option<usize>,
    pub periods: Option<Vec<u32>>,
    pub permutation: Option<String>,
    pub top_exponent: Option<f64>,
    pub top_exponent_std_err: Option<f64>,
    pub extremal_exponent: Option<f64>,
    pub convergence_gap: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub version: String,
    /// Fully resolved configuration.
    pub config: serde_json::Value,
    pub config_hash: String,
    pub seeds: BTreeMap<String, Vec<u64>>,
    /// Thresholds derived at run time from the data.
    pub derived_thresholds: BTreeMap<String, f64>,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub run_dir: String,
    pub stages: Vec<StageRecord>,
    pub outputs: Vec<OutputRecord>,
    pub acceptance: BTreeMap<String, Check>,
    pub summary: RunSummary,
}

impl RunManifest {
    pub fn complete(&self) -> bool {
        self.stages.iter().all(|s| s.status == StageStatus::Ok)
    }

    pub fn accepted(&self) -> bool {
        self.acceptance.values().all(|c| c.pass)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let path = if path.is_dir() {
            path.join(MANIFEST_FILE)
        } else {
            path.to_path_buf()
        };
        let text = fs::read_to_string(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let m: RunManifest =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if m.schema != MANIFEST_SCHEMA {
            return Err(Error::Incompatible(format!(
                "manifest schema {} (expected {MANIFEST_SCHEMA})",
                m.schema
            )));
        }
        Ok(m)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(dir.join(MANIFEST_FILE), text)?;
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes output files into one run directory and records their hashes.
pub struct OutputSink {
    dir: PathBuf,
    config_hash: String,
    pub records: Vec<OutputRecord>,
}

impl OutputSink {
    pub fn new(dir: PathBuf, config_hash: String) -> Self {
        Self {
            dir,
            config_hash,
            records: Vec::new(),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Header lines every CSV output starts with, without the leading `#`.
    pub fn csv_header(&self, schema: &str) -> Vec<String> {
        vec![
            format!("schema: {schema}"),
            format!("config_hash: {}", self.config_hash),
        ]
    }

    pub fn write_bytes(&mut self, file: &str, schema: &str, bytes: &[u8]) -> Result<()> {
        fs::write(self.dir.join(file), bytes)?;
        self.records.push(OutputRecord {
            file: file.to_string(),
            schema: schema.to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    /// JSON wrapped as `{schema, config_hash, data}`.
    pub fn write_json<T: Serialize>(&mut self, file: &str, schema: &str, data: &T) -> Result<()> {
        let doc = serde_json::json!({
            "schema": schema,
            "config_hash": self.config_hash,
            "data": data,
        });
        let text = serde_json::to_string_pretty(&doc).map_err(|e| Error::Io(e.to_string()))?;
        self.write_bytes(file, schema, text.as_bytes())
    }
}

/// Creates `<root>/<name>-<hash12>-<NNN>` with the first free `NNN`; existing
/// run directories are never reused.
pub fn create_run_dir(root: &Path, name: &str, config_hash: &str) -> Result<PathBuf> {
    fs::create_dir_all(root)?;
    for seq in 0..100_000u32 {
        let dir = root.join(format!("{name}-{}-{seq:03}", &config_hash[..12]));
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e.into()),
        }
    }
    Err(Error::Io(format!("no free run directory under {}", root.display())))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExponentDiff {
    pub a: f64,
    pub b: f64,
    pub combined_std_err: f64,
    /// `|a − b| < 2 · combined standard error`.
    pub within_two_std_err: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RunDiff {
    /// Checks whose outcome differs, or that exist in only one run.
    pub acceptance: BTreeMap<String, (Option<bool>, Option<bool>)>,
    pub periods: Option<(Vec<u32>, Vec<u32>)>,
    pub n: Option<(Option<usize>, Option<usize>)>,
    pub top_exponent: Option<ExponentDiff>,
    /// Files present in both runs with different hashes, or in only one.
    pub outputs: Vec<String>,
}

impl RunDiff {
    pub fn is_empty(&self) -> bool {
        self.acceptance.is_empty()
            && self.periods.is_none()
            && self.n.is_none()
            && self.outputs.is_empty()
            && self.top_exponent.as_ref().is_none_or(|e| e.a == e.b)
    }
}

/// Structural difference between two complete runs.
pub fn compare_runs(a: &RunManifest, b: &RunManifest) -> Result<RunDiff> {
    if a.schema != b.schema {
        return Err(Error::Incompatible(format!(
            "manifest schemas {} and {}",
            a.schema, b.schema
        )));
    }
    for (m, label) in [(a, "first"), (b, "second")] {
        if !m.complete() {
            return Err(Error::Incompatible(format!("{label} run is incomplete")));
        }
    }
    let mut diff = RunDiff::default();
    let keys: std::collections::BTreeSet<&String> = a.acceptance.keys().chain(b.acceptance.keys()).collect();
    for k in keys {
        let (x, y) = (a.acceptance.get(k).map(|c| c.pass), b.acceptance.get(k).map(|c| c.pass));
        if x != y {
            diff.acceptance.insert(k.clone(), (x, y));
        }
    }
    let sorted = |p: &Option<Vec<u32>>| {
        p.clone().map(|mut v| {
            v.sort_unstable();
            v
        })
    };
    let (pa, pb) = (sorted(&a.summary.periods), sorted(&b.summary.periods));
    if pa != pb {
        diff.periods = Some((pa.unwrap_or_default(), pb.unwrap_or_default()));
    }
    if a.summary.n != b.summary.n {
        diff.n = Some((a.summary.n, b.summary.n));
    }
    if let (Some(x), Some(y)) = (a.summary.top_exponent, b.summary.top_exponent) {
        let se = (a.summary.top_exponent_std_err.unwrap_or(0.0).powi(2)
            + b.summary.top_exponent_std_err.unwrap_or(0.0).powi(2))
        .sqrt();
        diff.top_exponent = Some(ExponentDiff {
            a: x,
            b: y,
            combined_std_err: se,
            within_two_std_err: (x - y).abs() < 2.0 * se || x == y,
        });
    }
    let ha: BTreeMap<&str, &str> = a.outputs.iter().map(|o| (o.file.as_str(), o.sha256.as_str())).collect();
    let hb: BTreeMap<&str, &str> = b.outputs.iter().map(|o| (o.file.as_str(), o.sha256.as_str())).collect();
    let files: std::collections::BTreeSet<&str> = ha.keys().chain(hb.keys()).copied().collect();
    diff.outputs = files
        .into_iter()
        .filter(|f| ha.get(f) != hb.get(f))
        .map(str::to_string)
        .collect();
    Ok(diff)
}
