//! Subcommand implementations shared by the CLI and the tests.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use super::{
    canonical_json, compare_families, content_id, surrogate_error, AccuracyRecord, CompareOptions, CompareOutput,
    CostRow, ExperimentConfig, FamilyManifest, FamilyRecords, HarnessError, Manifest, ModelSpecFile, Result,
    RunStore, StoredRecord,
};
use crate::blockir::{build_network, TensorShape, SCHEMA_VERSION};
use crate::costmodel::{bundled_profile, bundled_profiles, network_cost, HardwareProfile};
use crate::designspace::{ParamSampler, GENERATOR_ID};
use crate::par::Execution;
use crate::stats::SampleRecord;

#[derive(Debug, Clone, PartialEq)]
pub struct SampleOutcome {
    pub run_dir: PathBuf,
    pub manifest: Manifest,
}

/// Run identity: hash of the canonical config and the generator.
fn run_id(config: &ExperimentConfig) -> String {
    content_id(&format!("{}\n{GENERATOR_ID}", canonical_json(config)))
}

/// Samples every family of `config` into the run directory `out`.
///
/// Family `k` draws from RNG stream `k`, so adding a family leaves the
/// others unchanged. Draws that cannot be built into a network, or that
/// duplicate an earlier model, are rejected and redrawn.
pub fn cmd_sample(config: &ExperimentConfig, out: &Path) -> Result<SampleOutcome> {
    config.validate()?;
    let store = RunStore::new(out);
    let id = run_id(config);
    if store.has_manifest() {
        let existing = store.read_manifest()?;
        if existing.run_id != id {
            return Err(HarnessError::Run(format!(
                "{} already holds run {}; choose another output directory",
                out.display(),
                existing.run_id
            )));
        }
    }
    let ranges = config.effective_ranges();
    let input = TensorShape::square(config.input_resolution, 3)?;
    let mut families = Vec::with_capacity(config.families.len());
    for (k, fam) in config.families.iter().enumerate() {
        let mut sampler = ParamSampler::with_stream(&ranges, k as u64)?;
        let mut seen = BTreeSet::new();
        let mut ids = Vec::with_capacity(config.samples);
        let mut rejected = 0;
        while ids.len() < config.samples {
            let mut built = None;
            sampler.next_accepted(|c| {
                let net = c
                    .plan
                    .to_four_stages()
                    .map_err(HarnessError::from)
                    .and_then(|s| Ok(build_network(&s, &fam.template, input, config.num_classes)?));
                match net {
                    Ok(net) => {
                        let net = net.with_origin(c.params);
                        let model_id = content_id(&canonical_json(&net));
                        if seen.insert(model_id.clone()) {
                            built = Some((model_id, net));
                            true
                        } else {
                            false
                        }
                    }
                    Err(_) => {
                        rejected += 1;
                        false
                    }
                }
            })?;
            let (model_id, network) = built.expect("accepted draw was built");
            store.write_spec(&ModelSpecFile {
                schema_version: SCHEMA_VERSION,
                model_id: model_id.clone(),
                family: fam.name.clone(),
                network,
            })?;
            ids.push(model_id);
        }
        families.push(FamilyManifest {
            name: fam.name.clone(),
            template: fam.template,
            stream: k as u64,
            model_ids: ids,
            rejected,
        });
    }
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        run_id: id,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        generator: GENERATOR_ID.to_string(),
        created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        config: config.clone(),
        families,
    };
    store.write_manifest(&manifest)?;
    Ok(SampleOutcome {
        run_dir: out.to_path_buf(),
        manifest,
    })
}

/// Resolves profile references: an existing file path is loaded, anything
/// else must name a bundled profile. Returns each profile with its source.
pub fn resolve_profiles(refs: &[String]) -> Result<Vec<(HardwareProfile, String)>> {
    let mut out: Vec<(HardwareProfile, String)> = Vec::with_capacity(refs.len());
    for r in refs {
        let path = Path::new(r);
        let resolved = if path.is_file() {
            (HardwareProfile::load(path)?, format!("file:{r}"))
        } else if let Some(p) = bundled_profile(r) {
            (p, "bundled".to_string())
        } else {
            let available: Vec<String> = bundled_profiles().into_iter().map(|p| p.name).collect();
            return Err(HarnessError::MissingProfile {
                name: r.clone(),
                available: available.join(", "),
            });
        };
        if out.iter().any(|(p, _)| p.name == resolved.0.name) {
            return Err(HarnessError::Run(format!("profile `{}` given twice", resolved.0.name)));
        }
        out.push(resolved);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct ProfileMeta {
    name: String,
    source: String,
    kernel_table_entries: usize,
    table_hits: usize,
    roofline_layers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct CostMeta {
    run_id: String,
    metrics: Vec<String>,
    profiles: Vec<ProfileMeta>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostOutcome {
    pub metrics: Vec<String>,
    pub rows: Vec<CostRow>,
}

impl CostOutcome {
    pub fn invalid(&self) -> usize {
        self.rows.iter().filter(|r| !r.valid).count()
    }
}

/// Evaluates every model of a run on `profiles` (or the profiles named in
/// the run's config) and writes `cost.csv` and `cost_meta.json`.
pub fn cmd_cost(run_dir: &Path, profiles: Option<&[String]>, execution: Execution) -> Result<CostOutcome> {
    let store = RunStore::new(run_dir);
    let manifest = store.read_manifest()?;
    let refs = profiles.map(<[String]>::to_vec).unwrap_or_else(|| manifest.config.profiles.clone());
    let resolved = resolve_profiles(&refs)?;
    let hw: Vec<HardwareProfile> = resolved.iter().map(|(p, _)| p.clone()).collect();
    let mut metrics: Vec<String> = ["macs", "params", "activations"].map(String::from).to_vec();
    metrics.extend(hw.iter().map(|p| format!("latency:{}", p.name)));

    let jobs: Vec<(&str, &str)> = manifest
        .families
        .iter()
        .flat_map(|f| f.model_ids.iter().map(move |m| (f.name.as_str(), m.as_str())))
        .collect();
    let evaluated = execution.map(&jobs, |&(family, model_id)| {
        let result = store.read_spec(family, model_id).and_then(|spec| {
            if content_id(&canonical_json(&spec.network)) != model_id {
                return Err(HarnessError::Run("spec content does not match its model id".into()));
            }
            spec.network.validate()?;
            let layers = spec.network.layers.len();
            Ok((network_cost(&spec.network, &hw)?, layers))
        });
        (family, model_id, result)
    });

    let mut hits = vec![0usize; hw.len()];
    let mut roofline = vec![0usize; hw.len()];
    let rows: Vec<CostRow> = evaluated
        .into_iter()
        .map(|(family, model_id, result)| {
            let mut row = CostRow {
                model_id: model_id.to_string(),
                family: family.to_string(),
                valid: false,
                reason: String::new(),
                values: Vec::new(),
            };
            match result {
                Ok((report, layers)) => {
                    row.valid = true;
                    row.values = vec![report.macs as f64, report.params as f64, report.activations as f64];
                    for (i, p) in hw.iter().enumerate() {
                        row.values.push(report.latency[&p.name]);
                        let h = report.table_hits[&p.name];
                        hits[i] += h;
                        roofline[i] += layers - h;
                    }
                }
                Err(e) => row.reason = e.to_string(),
            }
            row
        })
        .collect();
    store.write_cost(&metrics, &rows)?;
    let meta = CostMeta {
        run_id: manifest.run_id.clone(),
        metrics: metrics.clone(),
        profiles: resolved
            .iter()
            .enumerate()
            .map(|(i, (p, source))| ProfileMeta {
                name: p.name.clone(),
                source: source.clone(),
                kernel_table_entries: p.kernel_table.len(),
                table_hits: hits[i],
                roofline_layers: roofline[i],
            })
            .collect(),
    };
    let text = serde_json::to_string_pretty(&meta).expect("meta serializes") + "\n";
    store.write_file(&store.cost_meta_path(), &text)?;
    Ok(CostOutcome { metrics, rows })
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct IngestReport {
    /// Incoming records whose model id belongs to the run.
    pub matched: usize,
    pub added: usize,
    /// Matched records identical to ones already stored.
    pub already_present: usize,
    /// Model ids not found in the run.
    pub unmatched: Vec<String>,
}

fn label(error: Option<f64>) -> String {
    error.map_or_else(|| "failed".to_string(), |e| e.to_string())
}

/// Appends accuracy records from a JSON-lines file to the run's log.
///
/// Every line is validated before anything is written. A record for a
/// model that already has a different error is a conflict and aborts the
/// whole ingest.
pub fn cmd_ingest(run_dir: &Path, accuracy: &Path) -> Result<IngestReport> {
    let store = RunStore::new(run_dir);
    let manifest = store.read_manifest()?;
    let text = std::fs::read_to_string(accuracy).map_err(|e| HarnessError::io(accuracy, e))?;
    let incoming: Vec<AccuracyRecord> = RunStore::parse_jsonl(accuracy, &text)?;
    for (i, r) in incoming.iter().enumerate() {
        r.validate().map_err(|message| HarnessError::Parse {
            path: accuracy.display().to_string(),
            line: i + 1,
            message,
        })?;
    }
    let mut known: BTreeMap<String, Option<f64>> = store
        .read_records()?
        .into_iter()
        .map(|r| (r.record.model_id, r.record.top1_error))
        .collect();
    let mut report = IngestReport::default();
    let mut fresh = Vec::new();
    for r in incoming {
        if !manifest.contains(&r.model_id) {
            report.unmatched.push(r.model_id);
            continue;
        }
        report.matched += 1;
        match known.get(&r.model_id) {
            Some(&e) if e == r.top1_error => report.already_present += 1,
            Some(&e) => {
                return Err(HarnessError::Conflict {
                    model_id: r.model_id,
                    existing: label(e),
                    incoming: label(r.top1_error),
                })
            }
            None => {
                known.insert(r.model_id.clone(), r.top1_error);
                fresh.push(StoredRecord {
                    schema_version: SCHEMA_VERSION,
                    run_id: manifest.run_id.clone(),
                    record: r,
                });
            }
        }
    }
    report.added = fresh.len();
    store.append_records(&fresh)?;
    Ok(report)
}

/// Writes surrogate accuracies for every valid model of a run to
/// `surrogate_accuracy.jsonl` and ingests them.
pub fn cmd_surrogate(run_dir: &Path) -> Result<IngestReport> {
    let store = RunStore::new(run_dir);
    let manifest = store.read_manifest()?;
    let cfg = manifest.config.surrogate;
    let mut trainer = BTreeMap::new();
    trainer.insert("source".to_string(), serde_json::json!("surrogate"));
    trainer.insert("coefficients".to_string(), serde_json::to_value(cfg).expect("config serializes"));
    let mut text = String::new();
    for fam in &manifest.families {
        for id in &fam.model_ids {
            let Ok(spec) = store.read_spec(&fam.name, id) else {
                continue;
            };
            let Ok(error) = surrogate_error(&spec.network, id, &cfg) else {
                continue;
            };
            let rec = AccuracyRecord {
                trainer: trainer.clone(),
                ..AccuracyRecord::new(id.clone(), "surrogate", 0, error)
            };
            text.push_str(&serde_json::to_string(&rec).expect("record serializes"));
            text.push('\n');
        }
    }
    let path = run_dir.join("surrogate_accuracy.jsonl");
    store.write_file(&path, &text)?;
    cmd_ingest(run_dir, &path)
}

/// Where sample-size analysis takes its records from.
#[derive(Debug, Clone, PartialEq)]
pub enum SampleSizeSource {
    /// Joined records of every family in a run.
    Run(PathBuf),
    /// Explicit records, for example [`super::bundled_surrogate_pool`].
    Records(Vec<FamilyRecords>),
}

/// Noise-versus-sample-size analysis; writes its outputs to `out`.
pub fn cmd_samplesize(source: SampleSizeSource, out: &Path, opts: &CompareOptions) -> Result<CompareOutput> {
    let families = match source {
        SampleSizeSource::Run(dir) => RunStore::new(dir).family_records()?,
        SampleSizeSource::Records(f) => f,
    };
    let opts = CompareOptions {
        statistic: super::Statistic::SampleSize,
        ..opts.clone()
    };
    let output = compare_families(&families, &opts)?;
    output.write(out)?;
    Ok(output)
}

/// Writes each bundled profile as `<name>.toml` into `out`.
pub fn cmd_emit_profiles(out: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
    bundled_profiles()
        .into_iter()
        .map(|p| {
            let path = out.join(format!("{}.toml", p.name));
            std::fs::write(&path, p.to_toml()).map_err(|e| HarnessError::io(&path, e))?;
            Ok(path)
        })
        .collect()
}

/// Records of an in-memory pool wrapped as a single family.
pub fn pool_family(name: &str, records: Vec<SampleRecord>) -> FamilyRecords {
    FamilyRecords {
        name: name.to_string(),
        records,
    }
}
