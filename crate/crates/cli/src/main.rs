use std::path::{Path, PathBuf};
use std::process::ExitCode;

use blockbench::harness::{
    bundled_surrogate_pool, cmd_compare, cmd_cost, cmd_emit_profiles, cmd_ingest, cmd_sample, cmd_samplesize,
    cmd_surrogate, pool_family, CompareOptions, CompareOutput, ExperimentConfig, HarnessError, SampleSizeSource,
    Statistic,
};
use blockbench::stats::{NoiseConfig, WeightScheme};
use blockbench::Execution;
use clap::{Parser, Subcommand};
use serde_json::json;

#[derive(Parser)]
#[command(name = "blockbench", version, about = "Compare building blocks through sampled design spaces")]
struct Cli {
    /// Experiment config (TOML, or JSON with a .json extension).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Run on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample every family of the config into a run directory.
    Sample,
    /// Compute complexity and latency of every model in a run.
    Cost {
        #[arg(long)]
        run: Option<PathBuf>,
        /// Bundled profile name or profile file; repeatable.
        #[arg(long = "profile")]
        profiles: Vec<String>,
    },
    /// Attach surrogate accuracies to a run.
    Surrogate {
        #[arg(long)]
        run: Option<PathBuf>,
    },
    /// Append accuracy records (JSON lines) to a run.
    Ingest {
        #[arg(long)]
        run: Option<PathBuf>,
        #[arg(long)]
        accuracy: PathBuf,
    },
    /// Compare the families of one or more runs.
    Compare {
        #[arg(long = "run", required = true)]
        runs: Vec<PathBuf>,
        #[arg(long, default_value = "macs")]
        metric: String,
        /// edf, pareto or samplesize.
        #[arg(long, default_value = "pareto")]
        statistic: Statistic,
        /// uniform, recorded, or band:<metric>:<lo>:<hi>.
        #[arg(long, default_value = "uniform")]
        scheme: String,
        #[arg(long, default_value_t = 6)]
        bands: usize,
        #[arg(long, default_value_t = blockbench::stats::DEFAULT_REPETITIONS)]
        repetitions: usize,
    },
    /// Sample-size recommendation from a run or the bundled synthetic pool.
    Samplesize {
        #[arg(long, conflicts_with = "synthetic")]
        run: Option<PathBuf>,
        #[arg(long)]
        synthetic: bool,
        #[arg(long, default_value = "macs")]
        metric: String,
        #[arg(long, default_value_t = blockbench::stats::DEFAULT_REPETITIONS)]
        repetitions: usize,
    },
    /// Write the bundled hardware profiles as TOML files.
    EmitProfiles,
    /// Print an example experiment config.
    EmitConfig,
}

fn exit_code(category: &str) -> u8 {
    match category {
        "config" => 3,
        "io" => 4,
        "parse" => 5,
        "validation" => 6,
        "cost" => 7,
        "statistics" => 8,
        "conflict" => 9,
        _ => 10,
    }
}

fn parse_scheme(s: &str) -> Result<WeightScheme, HarnessError> {
    let bad = || HarnessError::Config {
        field: "scheme".into(),
        message: format!("`{s}` is not uniform, recorded or band:<metric>:<lo>:<hi>"),
    };
    match s {
        "uniform" => Ok(WeightScheme::Uniform),
        "recorded" => Ok(WeightScheme::Recorded),
        _ => {
            let parts: Vec<&str> = s.split(':').collect();
            match parts.as_slice() {
                ["band", metric, lo, hi] => Ok(WeightScheme::Band {
                    metric: metric.to_string(),
                    lo: lo.parse().map_err(|_| bad())?,
                    hi: hi.parse().map_err(|_| bad())?,
                }),
                _ => Err(bad()),
            }
        }
    }
}

fn load_config(cli: &Cli) -> Result<Option<ExperimentConfig>, HarnessError> {
    let Some(path) = &cli.config else {
        return Ok(None);
    };
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(Some(cfg))
}

fn run_dir(cli: &Cli, explicit: &Option<PathBuf>) -> Result<PathBuf, HarnessError> {
    if let Some(r) = explicit.clone().or_else(|| cli.out.clone()) {
        return Ok(r);
    }
    match load_config(cli)? {
        Some(cfg) => Ok(cfg.output_dir),
        None => Err(HarnessError::Config {
            field: "run".into(),
            message: "give --run, --out or --config".into(),
        }),
    }
}

fn compare_summary(out: &Path, output: &CompareOutput) -> serde_json::Value {
    let elbows: serde_json::Map<String, serde_json::Value> =
        output.trends.iter().map(|(k, t)| (k.clone(), json!(t.elbow))).collect();
    json!({
        "out": out,
        "files": output.files.iter().map(|(n, _)| n).collect::<Vec<_>>(),
        "bands": output.bands,
        "crossovers": output.crossovers,
        "elbows": elbows,
    })
}

fn run(cli: &Cli) -> Result<serde_json::Value, HarnessError> {
    let execution = if cli.sequential { Execution::Sequential } else { Execution::default() };
    let noise = |repetitions: usize| {
        NoiseConfig::default()
            .with_repetitions(repetitions)
            .with_seed(cli.seed.unwrap_or(0))
            .with_execution(execution)
    };
    match &cli.command {
        Command::Sample => {
            let cfg = load_config(cli)?.ok_or_else(|| HarnessError::Config {
                field: "config".into(),
                message: "sample needs --config".into(),
            })?;
            let out = cli.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
            let outcome = cmd_sample(&cfg, &out)?;
            let families: Vec<_> = outcome
                .manifest
                .families
                .iter()
                .map(|f| json!({"name": f.name, "models": f.model_ids.len(), "rejected": f.rejected}))
                .collect();
            Ok(json!({"run_dir": out, "run_id": outcome.manifest.run_id, "families": families}))
        }
        Command::Cost { run, profiles } => {
            let dir = run_dir(cli, run)?;
            let refs = (!profiles.is_empty()).then_some(profiles.as_slice());
            let outcome = cmd_cost(&dir, refs, execution)?;
            Ok(json!({"run_dir": dir, "rows": outcome.rows.len(), "invalid": outcome.invalid(), "metrics": outcome.metrics}))
        }
        Command::Surrogate { run } => {
            let dir = run_dir(cli, run)?;
            Ok(serde_json::to_value(cmd_surrogate(&dir)?).expect("report serializes"))
        }
        Command::Ingest { run, accuracy } => {
            let dir = run_dir(cli, run)?;
            Ok(serde_json::to_value(cmd_ingest(&dir, accuracy)?).expect("report serializes"))
        }
        Command::Compare {
            runs,
            metric,
            statistic,
            scheme,
            bands,
            repetitions,
        } => {
            let opts = CompareOptions {
                metric: metric.clone(),
                statistic: *statistic,
                scheme: parse_scheme(scheme)?,
                bands: *bands,
                noise: noise(*repetitions),
                ..CompareOptions::default()
            };
            let default_out = runs[0].join("compare");
            let out = cli.out.clone().unwrap_or(default_out);
            let output = cmd_compare(runs, &out, &opts)?;
            Ok(compare_summary(&out, &output))
        }
        Command::Samplesize {
            run,
            synthetic,
            metric,
            repetitions,
        } => {
            let (source, default_out) = match (run, synthetic) {
                (Some(dir), _) => (SampleSizeSource::Run(dir.clone()), dir.join("samplesize")),
                (None, true) => {
                    let pool = bundled_surrogate_pool(execution)?;
                    (SampleSizeSource::Records(vec![pool_family("synthetic", pool)]), PathBuf::from("samplesize"))
                }
                (None, false) => {
                    return Err(HarnessError::Config {
                        field: "run".into(),
                        message: "give --run or --synthetic".into(),
                    })
                }
            };
            let opts = CompareOptions {
                metric: metric.clone(),
                noise: noise(*repetitions),
                ..CompareOptions::default()
            };
            let out = cli.out.clone().unwrap_or(default_out);
            let output = cmd_samplesize(source, &out, &opts)?;
            Ok(compare_summary(&out, &output))
        }
        Command::EmitProfiles => {
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("profiles"));
            Ok(json!({"written": cmd_emit_profiles(&out)?}))
        }
        Command::EmitConfig => {
            let text = ExperimentConfig::example().to_toml();
            match &cli.out {
                Some(path) => {
                    std::fs::write(path, text).map_err(|e| HarnessError::Io {
                        path: path.display().to_string(),
                        source: e,
                    })?;
                    Ok(json!({"written": path}))
                }
                None => {
                    print!("{text}");
                    Ok(serde_json::Value::Null)
                }
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(serde_json::Value::Null) => ExitCode::SUCCESS,
        Ok(v) => {
            println!("{v}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", json!({"error": {"category": e.category(), "message": e.to_string()}}));
            ExitCode::from(exit_code(e.category()))
        }
    }
}
