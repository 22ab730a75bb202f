use std::fs;
use std::path::Path;

use blockbench::blockir::BlockTemplate;
use blockbench::harness::{
    bundled_surrogate_pool, canonical_json, cmd_compare, cmd_cost, cmd_emit_profiles, cmd_ingest, cmd_sample,
    cmd_samplesize, cmd_surrogate, compare_families, content_id, pool_family, surrogate_from_counts,
    AccuracyRecord, CompareOptions, ExperimentConfig, FamilyConfig, FamilyRecords, HarnessError, RunStore,
    SampleSizeSource, Statistic, SurrogateConfig,
};
use blockbench::stats::{NoiseConfig, SampleRecord};
use blockbench::{Execution, HardwareProfile};

fn config(samples: usize) -> ExperimentConfig {
    ExperimentConfig {
        samples,
        families: vec![
            FamilyConfig {
                name: "standard".into(),
                template: BlockTemplate::standard(),
            },
            FamilyConfig {
                name: "dwsep".into(),
                template: BlockTemplate::depthwise_separable(),
            },
        ],
        ..ExperimentConfig::example()
    }
}

fn jsonl(records: &[AccuracyRecord]) -> String {
    records.iter().map(|r| serde_json::to_string(r).unwrap() + "\n").collect()
}

fn all_ids(run: &Path) -> Vec<String> {
    let m = RunStore::new(run).read_manifest().unwrap();
    m.families.iter().flat_map(|f| f.model_ids.clone()).collect()
}

#[test]
fn two_families_of_130_give_260_spec_files() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let out = cmd_sample(&config(130), &run).unwrap();
    let count: usize = ["standard", "dwsep"]
        .iter()
        .map(|f| fs::read_dir(run.join("specs").join(f)).unwrap().count())
        .sum();
    assert_eq!(count, 260);
    assert!(out.manifest.families.iter().all(|f| f.model_ids.len() == 130));
}

#[test]
fn rerun_reproduces_manifest_identity() {
    let dir = tempfile::tempdir().unwrap();
    let a = cmd_sample(&config(12), &dir.path().join("a")).unwrap().manifest;
    let b = cmd_sample(&config(12), &dir.path().join("b")).unwrap().manifest;
    assert_eq!(a.run_id, b.run_id);
    assert_eq!(a.families, b.families);
    // same directory again is allowed and idempotent
    let c = cmd_sample(&config(12), &dir.path().join("a")).unwrap().manifest;
    assert_eq!(a.families, c.families);
    // a different config is refused in an occupied directory
    let other = ExperimentConfig { seed: 9, ..config(12) };
    assert!(matches!(cmd_sample(&other, &dir.path().join("a")), Err(HarnessError::Run(_))));
}

#[test]
fn zero_samples_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = cmd_sample(&config(0), dir.path()).unwrap_err();
    assert_eq!(err.category(), "config");
    assert!(err.to_string().contains("samples"));
}

#[test]
fn adding_a_family_leaves_existing_ones_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let two = cmd_sample(&config(8), &dir.path().join("two")).unwrap().manifest;
    let mut cfg = config(8);
    cfg.families.push(FamilyConfig {
        name: "grouped".into(),
        template: BlockTemplate::grouped(2),
    });
    let three = cmd_sample(&cfg, &dir.path().join("three")).unwrap().manifest;
    assert_eq!(two.families[..], three.families[..2]);
}

#[test]
fn cost_table_shape_and_profile_idempotence() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let mut cfg = config(130);
    cfg.families.truncate(1);
    cmd_sample(&cfg, &run).unwrap();
    let out = cmd_cost(&run, None, Execution::default()).unwrap();
    assert_eq!(out.rows.len(), 130);
    assert_eq!(out.metrics.len(), 3 + 5);
    assert!(out.rows.iter().all(|r| r.valid && r.values.len() == 8));

    let four: Vec<String> = ["mobile_cpu", "vpu", "mobile_gpu", "embedded_gpu"].map(String::from).to_vec();
    let before_csv = {
        cmd_cost(&run, Some(&four), Execution::default()).unwrap();
        fs::read_to_string(run.join("cost.csv")).unwrap()
    };
    let mut five = four.clone();
    five.push("server_gpu".into());
    cmd_cost(&run, Some(&five), Execution::Sequential).unwrap();
    let after_csv = fs::read_to_string(run.join("cost.csv")).unwrap();
    for (b, a) in before_csv.lines().zip(after_csv.lines()) {
        assert!(a.starts_with(&format!("{b},")), "{b} / {a}");
    }
}

#[test]
fn invalid_spec_is_flagged_and_the_run_continues() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    cmd_sample(&config(5), &run).unwrap();
    let store = RunStore::new(&run);
    let id = all_ids(&run)[2].clone();
    let mut spec = store.read_spec("standard", &id).unwrap();
    // break channel agreement between two layers
    if let blockbench::LayerKind::Conv { out_channels, .. } = &mut spec.network.layers[0].spec.kind {
        *out_channels += 1;
    }
    fs::write(store.spec_path("standard", &id), serde_json::to_string(&spec).unwrap()).unwrap();
    let out = cmd_cost(&run, Some(&["vpu".to_string()]), Execution::default()).unwrap();
    assert_eq!(out.rows.len(), 10);
    assert_eq!(out.invalid(), 1);
    let bad = out.rows.iter().find(|r| !r.valid).unwrap();
    assert_eq!(bad.model_id, id);
    assert!(!bad.reason.is_empty());
}

#[test]
fn unknown_profile_lists_the_available_ones() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    cmd_sample(&config(2), &run).unwrap();
    let err = cmd_cost(&run, Some(&["no_such_profile.toml".to_string()]), Execution::default()).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("no_such_profile.toml") && msg.contains("mobile_cpu") && msg.contains("vpu"), "{msg}");
}

#[test]
fn profile_files_and_kernel_tables_are_used() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    cmd_sample(&config(3), &run).unwrap();
    let written = cmd_emit_profiles(&dir.path().join("profiles")).unwrap();
    assert_eq!(written.len(), 5);
    let vpu_path = dir.path().join("profiles/vpu.toml");
    let mut vpu = HardwareProfile::load(&vpu_path).unwrap();
    vpu.name = "vpu_measured".into();

    // measured latency for every layer of the first model
    let store = RunStore::new(&run);
    let id = all_ids(&run)[0].clone();
    let net = store.read_spec("standard", &id).unwrap().network;
    let mut table = blockbench::costmodel::KernelTable::new();
    for l in &net.layers {
        table.insert(blockbench::costmodel::KernelSignature::of(&l.spec, l.input), 1e-3);
    }
    fs::write(dir.path().join("vpu_table.csv"), table.to_csv()).unwrap();
    vpu.kernel_table_file = Some("vpu_table.csv".into());
    let path = dir.path().join("vpu_measured.toml");
    fs::write(&path, vpu.to_toml()).unwrap();

    let refs = [path.display().to_string()];
    let out = cmd_cost(&run, Some(&refs), Execution::default()).unwrap();
    let row = out.rows.iter().find(|r| r.model_id == id).unwrap();
    let expect = 1e-3 * net.layers.len() as f64;
    assert!((row.values[3] - expect).abs() < 1e-12, "{} vs {expect}", row.values[3]);
    let meta = fs::read_to_string(run.join("cost_meta.json")).unwrap();
    assert!(meta.contains("\"source\": \"file:") && meta.contains("kernel_table_entries"));
}

#[test]
fn ingest_joins_reports_unmatched_and_rejects_conflicts() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let mut cfg = config(130);
    cfg.families.truncate(1);
    cmd_sample(&cfg, &run).unwrap();
    cmd_cost(&run, Some(&["vpu".to_string()]), Execution::default()).unwrap();
    let ids = all_ids(&run);

    // 129 known ids plus one unknown
    let mut recs: Vec<AccuracyRecord> = ids[..129]
        .iter()
        .enumerate()
        .map(|(i, id)| AccuracyRecord::new(id.clone(), "toy", 10, 0.2 + i as f64 * 1e-3))
        .collect();
    recs.push(AccuracyRecord::new("ffffffffffffffff", "toy", 10, 0.3));
    let file = dir.path().join("acc.jsonl");
    fs::write(&file, jsonl(&recs)).unwrap();
    let report = cmd_ingest(&run, &file).unwrap();
    assert_eq!(report.matched, 129);
    assert_eq!(report.added, 129);
    assert_eq!(report.unmatched, vec!["ffffffffffffffff".to_string()]);
    let joined = RunStore::new(&run).family_records().unwrap();
    assert_eq!(joined[0].records.len(), 129);

    // re-ingesting the same file is a no-op
    let before = fs::read_to_string(run.join("records.jsonl")).unwrap();
    let again = cmd_ingest(&run, &file).unwrap();
    assert_eq!((again.added, again.already_present), (0, 129));
    assert_eq!(before, fs::read_to_string(run.join("records.jsonl")).unwrap());

    // the last model completes the family to 130
    fs::write(&file, jsonl(&[AccuracyRecord::new(ids[129].clone(), "toy", 10, 0.25)])).unwrap();
    cmd_ingest(&run, &file).unwrap();
    assert_eq!(RunStore::new(&run).family_records().unwrap()[0].records.len(), 130);

    // a conflicting value names the model and writes nothing
    fs::write(&file, jsonl(&[AccuracyRecord::new(ids[5].clone(), "toy", 10, 0.9)])).unwrap();
    let err = cmd_ingest(&run, &file).unwrap_err();
    assert_eq!(err.category(), "conflict");
    assert!(err.to_string().contains(&ids[5]));
    assert_eq!(fs::read_to_string(run.join("records.jsonl")).unwrap().lines().count(), 130);
}

#[test]
fn ingest_validates_before_writing() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    cmd_sample(&config(2), &run).unwrap();
    let ids = all_ids(&run);
    let good = serde_json::to_string(&AccuracyRecord::new(ids[0].clone(), "toy", 1, 0.4)).unwrap();
    let file = dir.path().join("acc.jsonl");
    fs::write(&file, format!("{good}\n{{\"model_id\": \"{}\", \"dataset\": \"toy\", \"epochs\": 1, \"top1_error\": 1.5}}\n", ids[1])).unwrap();
    let err = cmd_ingest(&run, &file).unwrap_err();
    assert!(matches!(err, HarnessError::Parse { line: 2, .. }), "{err}");
    assert!(!run.join("records.jsonl").exists());

    // failed training runs are stored but never joined
    let failed = format!(
        "{{\"model_id\": \"{}\", \"dataset\": \"toy\", \"epochs\": 1, \"top1_error\": null, \"trainer\": {{\"status\": \"failed\"}}}}\n",
        ids[1]
    );
    fs::write(&file, format!("{good}\n{failed}")).unwrap();
    assert_eq!(cmd_ingest(&run, &file).unwrap().added, 2);
    cmd_cost(&run, Some(&["vpu".to_string()]), Execution::default()).unwrap();
    let joined = RunStore::new(&run).family_records().unwrap();
    assert_eq!(joined.iter().map(|f| f.records.len()).sum::<usize>(), 1);
}

#[test]
fn compare_names_a_dominating_family_in_every_band() {
    let fam = |name: &str, shift: f64| FamilyRecords {
        name: name.into(),
        records: (0..60)
            .map(|i| {
                let c = 1e6 * 1.1f64.powi(i);
                SampleRecord::new(format!("{name}{i}"), 0.5 - 0.004 * i as f64 + shift).with_metric("macs", c)
            })
            .collect(),
    };
    let opts = CompareOptions {
        bands: 8,
        ..CompareOptions::default()
    };
    let out = compare_families(&[fam("good", 0.0), fam("bad", 0.05)], &opts).unwrap();
    assert_eq!(out.bands.len(), 8);
    assert!(out.bands.iter().all(|b| b.winner.as_deref() == Some("good")));
    assert!(out.crossovers.is_empty());
}

#[test]
fn constructed_crossing_lands_in_the_reported_interval() {
    // a: err = 0.30 - 0.02 ln(c/1e6); b: err = 0.40 - 0.05 ln(c/1e6); cross at c = 1e6 e^(10/3)
    let crossing = 1e6 * (10.0f64 / 3.0).exp();
    let fam = |name: &str, a: f64, b: f64| FamilyRecords {
        name: name.into(),
        records: (0..200)
            .map(|i| {
                let c = 1e6 * 1.03f64.powi(i);
                SampleRecord::new(format!("{name}{i}"), a - b * (c / 1e6).ln()).with_metric("macs", c)
            })
            .collect(),
    };
    let out = compare_families(&[fam("a", 0.30, 0.02), fam("b", 0.40, 0.05)], &CompareOptions::default()).unwrap();
    assert_eq!(out.crossovers.len(), 1);
    let c = &out.crossovers[0];
    assert_eq!((c.from.as_str(), c.to.as_str()), ("a", "b"));
    assert!(c.lo <= crossing && crossing <= c.hi, "{crossing} not in [{}, {}]", c.lo, c.hi);
}

#[test]
fn samplesize_on_the_synthetic_pool_writes_trend_and_elbow() {
    let pool = bundled_surrogate_pool(Execution::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let opts = CompareOptions {
        noise: NoiseConfig::default().with_repetitions(30),
        ..CompareOptions::default()
    };
    let out = cmd_samplesize(SampleSizeSource::Records(vec![pool_family("synthetic", pool)]), dir.path(), &opts).unwrap();
    let trend = &out.trends["synthetic"];
    assert!(trend.elbow.is_some());
    let csv = fs::read_to_string(dir.path().join("samplesize_synthetic.csv")).unwrap();
    assert!(csv.contains("elbow=") && csv.lines().count() > 10);
    assert!(dir.path().join("samplesize.svg").exists());
}

#[test]
fn surrogate_pool_has_a_dense_middle_and_a_thin_good_tail() {
    let pool = bundled_surrogate_pool(Execution::default()).unwrap();
    let mut errors: Vec<f64> = pool.iter().map(|r| r.error).collect();
    errors.sort_by(f64::total_cmp);
    let q = |p: f64| errors[((errors.len() - 1) as f64 * p) as usize];
    // sparse best models: the lowest 5% spread wider than the central 10%
    assert!(q(0.05) - q(0.0) > q(0.55) - q(0.45), "{} {} {} {}", q(0.0), q(0.05), q(0.45), q(0.55));
    assert!(errors.iter().filter(|&&e| e <= 0.02).count() < errors.len() / 100);
    assert!(errors.iter().all(|e| (0.02..=0.98).contains(e)));
}

#[test]
fn surrogate_examples() {
    let cfg = SurrogateConfig {
        noise: 0.0,
        ..SurrogateConfig::default()
    };
    let small = surrogate_from_counts(1e7, 1e5, "x", &cfg);
    let large = surrogate_from_counts(5e7, 4e5, "y", &cfg);
    assert!(large < small);
    let noisy = SurrogateConfig::default();
    assert_eq!(surrogate_from_counts(1e8, 1e6, "z", &noisy), surrogate_from_counts(1e8, 1e6, "z", &noisy));
}

#[test]
fn model_id_is_independent_of_key_order() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    cmd_sample(&config(1), &run).unwrap();
    let store = RunStore::new(&run);
    let id = all_ids(&run)[0].clone();
    let spec = store.read_spec("standard", &id).unwrap();
    // re-serialize through a map with reversed insertion order
    let value = serde_json::to_value(&spec.network).unwrap();
    let obj = value.as_object().unwrap();
    let reversed: Vec<(String, serde_json::Value)> = obj.iter().rev().map(|(k, v)| (k.clone(), v.clone())).collect();
    let text = format!(
        "{{{}}}",
        reversed.iter().map(|(k, v)| format!("{}:{}", serde_json::to_string(k).unwrap(), v)).collect::<Vec<_>>().join(",")
    );
    let reparsed: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(content_id(&canonical_json(&reparsed)), id);
}

#[test]
fn full_workflow_over_two_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    cmd_sample(&config(20), &a).unwrap();
    cmd_sample(&ExperimentConfig { seed: 3, ..config(20) }, &b).unwrap();
    for run in [&a, &b] {
        cmd_cost(run, None, Execution::default()).unwrap();
        cmd_surrogate(run).unwrap();
    }
    let out = cmd_compare(
        &[a.clone(), b.clone()],
        &dir.path().join("cmp"),
        &CompareOptions {
            statistic: Statistic::Edf,
            ..CompareOptions::default()
        },
    )
    .unwrap();
    let header = out.file("edf.csv").unwrap().lines().nth(1).unwrap().to_string();
    assert_eq!(header, "error,a.standard,a.dwsep,b.standard,b.dwsep");
    assert!(dir.path().join("cmp/summary.csv").exists());

    let missing = CompareOptions {
        metric: "latency:nowhere".into(),
        ..CompareOptions::default()
    };
    assert!(cmd_compare(&[a], &dir.path().join("cmp2"), &missing).is_err());
}
