//! On-disk layout of a run directory.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, HarnessError, Result};
use crate::blockir::{BlockTemplate, NetworkSpec, SCHEMA_VERSION};
use crate::stats::SampleRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyManifest {
    pub name: String,
    pub template: BlockTemplate,
    /// RNG stream the family was sampled from.
    pub stream: u64,
    pub model_ids: Vec<String>,
    /// Draws rejected because no valid network could be built from them.
    pub rejected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub run_id: String,
    pub tool_version: String,
    pub generator: String,
    pub created_unix: u64,
    pub config: ExperimentConfig,
    pub families: Vec<FamilyManifest>,
}

impl Manifest {
    pub fn family(&self, name: &str) -> Option<&FamilyManifest> {
        self.families.iter().find(|f| f.name == name)
    }

    pub fn contains(&self, model_id: &str) -> bool {
        self.families.iter().any(|f| f.model_ids.iter().any(|m| m == model_id))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpecFile {
    pub schema_version: u32,
    pub model_id: String,
    pub family: String,
    pub network: NetworkSpec,
}

/// One accuracy measurement as produced by a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRecord {
    pub model_id: String,
    pub dataset: String,
    pub epochs: u32,
    /// `None` only for failed training runs.
    pub top1_error: Option<f64>,
    /// Free-form trainer metadata (recipe, seed, wall time, ...).
    /// `"status": "failed"` marks a run that produced no usable error.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub trainer: BTreeMap<String, serde_json::Value>,
}

impl AccuracyRecord {
    pub fn new(model_id: impl Into<String>, dataset: impl Into<String>, epochs: u32, top1_error: f64) -> Self {
        AccuracyRecord {
            model_id: model_id.into(),
            dataset: dataset.into(),
            epochs,
            top1_error: Some(top1_error),
            trainer: BTreeMap::new(),
        }
    }

    pub fn failed(&self) -> bool {
        self.trainer.get("status").and_then(|s| s.as_str()) == Some("failed")
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.model_id.is_empty() {
            return Err("model_id is empty".into());
        }
        match self.top1_error {
            Some(e) if !(0.0..=1.0).contains(&e) => Err(format!("top1_error {e} is outside [0, 1]")),
            None if !self.failed() => Err("top1_error is missing and the record is not marked failed".into()),
            _ => Ok(()),
        }
    }
}

/// A line of `records.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredRecord {
    pub schema_version: u32,
    pub run_id: String,
    #[serde(flatten)]
    pub record: AccuracyRecord,
}

/// A row of `cost.csv`. `values` follows the table's metric columns and is
/// empty for invalid rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CostRow {
    pub model_id: String,
    pub family: String,
    pub valid: bool,
    pub reason: String,
    pub values: Vec<f64>,
}

/// Joined cost and accuracy records of one family.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyRecords {
    pub name: String,
    pub records: Vec<SampleRecord>,
}

const COST_FIXED_COLUMNS: [&str; 4] = ["model_id", "family", "status", "reason"];

#[derive(Debug, Clone)]
pub struct RunStore {
    root: PathBuf,
}

impl RunStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunStore { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    pub fn spec_path(&self, family: &str, model_id: &str) -> PathBuf {
        self.root.join("specs").join(family).join(format!("{model_id}.json"))
    }

    pub fn records_path(&self) -> PathBuf {
        self.root.join("records.jsonl")
    }

    pub fn cost_path(&self) -> PathBuf {
        self.root.join("cost.csv")
    }

    pub fn cost_meta_path(&self) -> PathBuf {
        self.root.join("cost_meta.json")
    }

    pub(crate) fn write_file(&self, path: &Path, contents: &str) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        }
        fs::write(path, contents).map_err(|e| HarnessError::io(path, e))
    }

    fn read_file(&self, path: &Path) -> Result<String> {
        fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))
    }

    pub fn has_manifest(&self) -> bool {
        self.manifest_path().is_file()
    }

    pub fn write_manifest(&self, manifest: &Manifest) -> Result<()> {
        let text = serde_json::to_string_pretty(manifest).expect("manifest serializes") + "\n";
        self.write_file(&self.manifest_path(), &text)
    }

    pub fn read_manifest(&self) -> Result<Manifest> {
        let path = self.manifest_path();
        let text = self.read_file(&path)?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Parse {
            path: path.display().to_string(),
            line: e.line(),
            message: e.to_string(),
        })
    }

    pub fn write_spec(&self, spec: &ModelSpecFile) -> Result<()> {
        let text = serde_json::to_string_pretty(spec).expect("spec serializes") + "\n";
        self.write_file(&self.spec_path(&spec.family, &spec.model_id), &text)
    }

    pub fn read_spec(&self, family: &str, model_id: &str) -> Result<ModelSpecFile> {
        let path = self.spec_path(family, model_id);
        let text = self.read_file(&path)?;
        let spec: ModelSpecFile = serde_json::from_str(&text).map_err(|e| HarnessError::Parse {
            path: path.display().to_string(),
            line: e.line(),
            message: e.to_string(),
        })?;
        if spec.schema_version != SCHEMA_VERSION {
            return Err(HarnessError::Parse {
                path: path.display().to_string(),
                line: 1,
                message: format!("unsupported schema version {}", spec.schema_version),
            });
        }
        Ok(spec)
    }

    /// Parses JSON lines, reporting the offending line on failure.
    pub(crate) fn parse_jsonl<T: serde::de::DeserializeOwned>(path: &Path, text: &str) -> Result<Vec<T>> {
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| HarnessError::Parse {
                    path: path.display().to_string(),
                    line: i + 1,
                    message: e.to_string(),
                })
            })
            .collect()
    }

    pub fn read_records(&self) -> Result<Vec<StoredRecord>> {
        let path = self.records_path();
        if !path.exists() {
            return Ok(Vec::new());
        }
        let text = self.read_file(&path)?;
        Self::parse_jsonl(&path, &text)
    }

    pub fn append_records(&self, records: &[StoredRecord]) -> Result<()> {
        if records.is_empty() {
            return Ok(());
        }
        let path = self.records_path();
        let mut text = String::new();
        for r in records {
            text.push_str(&serde_json::to_string(r).expect("record serializes"));
            text.push('\n');
        }
        let mut file = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| HarnessError::io(&path, e))?;
        file.write_all(text.as_bytes()).map_err(|e| HarnessError::io(&path, e))
    }

    pub fn write_cost(&self, metrics: &[String], rows: &[CostRow]) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let header: Vec<&str> = COST_FIXED_COLUMNS.iter().copied().chain(metrics.iter().map(String::as_str)).collect();
        let csv_err = |e: csv::Error| HarnessError::Run(format!("writing cost table: {e}"));
        w.write_record(&header).map_err(csv_err)?;
        for row in rows {
            let mut fields = vec![
                row.model_id.clone(),
                row.family.clone(),
                if row.valid { "ok".into() } else { "invalid".into() },
                row.reason.clone(),
            ];
            if row.valid {
                fields.extend(row.values.iter().map(|v| v.to_string()));
            } else {
                fields.extend(metrics.iter().map(|_| String::new()));
            }
            w.write_record(&fields).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| HarnessError::Run(e.to_string()))?;
        self.write_file(&self.cost_path(), &String::from_utf8(bytes).expect("csv is utf-8"))
    }

    /// Metric column names and rows of `cost.csv`.
    pub fn read_cost(&self) -> Result<(Vec<String>, Vec<CostRow>)> {
        let path = self.cost_path();
        if !path.exists() {
            return Err(HarnessError::Run(format!(
                "{} has no cost table; run the cost step first",
                self.root.display()
            )));
        }
        let parse_err = |line: usize, message: String| HarnessError::Parse {
            path: path.display().to_string(),
            line,
            message,
        };
        let mut r = csv::Reader::from_path(&path).map_err(|e| parse_err(1, e.to_string()))?;
        let header: Vec<String> = r.headers().map_err(|e| parse_err(1, e.to_string()))?.iter().map(String::from).collect();
        if header.len() < COST_FIXED_COLUMNS.len() || header[..4] != COST_FIXED_COLUMNS {
            return Err(parse_err(1, "unexpected header".into()));
        }
        let metrics = header[4..].to_vec();
        let mut rows = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| parse_err(i + 2, e.to_string()))?;
            let valid = &rec[2] == "ok";
            let values = if valid {
                rec.iter()
                    .skip(4)
                    .map(|v| v.parse::<f64>().map_err(|e| parse_err(i + 2, format!("`{v}`: {e}"))))
                    .collect::<Result<Vec<_>>>()?
            } else {
                Vec::new()
            };
            rows.push(CostRow {
                model_id: rec[0].to_string(),
                family: rec[1].to_string(),
                valid,
                reason: rec[3].to_string(),
                values,
            });
        }
        Ok((metrics, rows))
    }

    /// Joins valid cost rows with accuracy records, per family in manifest
    /// order. Models without a successful accuracy record are left out.
    pub fn family_records(&self) -> Result<Vec<FamilyRecords>> {
        let manifest = self.read_manifest()?;
        let (metrics, rows) = self.read_cost()?;
        let errors: BTreeMap<String, f64> = self
            .read_records()?
            .into_iter()
            .filter(|r| !r.record.failed())
            .filter_map(|r| Some((r.record.model_id, r.record.top1_error?)))
            .collect();
        let mut by_id: BTreeMap<(&str, &str), &CostRow> = BTreeMap::new();
        for row in rows.iter().filter(|r| r.valid) {
            by_id.insert((row.family.as_str(), row.model_id.as_str()), row);
        }
        Ok(manifest
            .families
            .iter()
            .map(|fam| {
                let records = fam
                    .model_ids
                    .iter()
                    .filter_map(|id| {
                        let row = by_id.get(&(fam.name.as_str(), id.as_str()))?;
                        let error = *errors.get(id)?;
                        let mut rec = SampleRecord::new(id.clone(), error);
                        for (m, v) in metrics.iter().zip(&row.values) {
                            rec = rec.with_metric(m.clone(), *v);
                        }
                        Some(rec)
                    })
                    .collect();
                FamilyRecords {
                    name: fam.name.clone(),
                    records,
                }
            })
            .collect())
    }
}
