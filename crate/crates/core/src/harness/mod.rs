//! Experiment harness: sampling runs to disk, costing them, joining
//! externally measured accuracies, and comparing design spaces.
//!
//! A run directory holds:
//!
//! ```text
//! manifest.json                 run id, config snapshot, model ids per family
//! specs/<family>/<model_id>.json
//! cost.csv, cost_meta.json      written by `cmd_cost`
//! records.jsonl                 accuracy log, appended by `cmd_ingest`
//! ```

mod commands;
mod compare;
mod config;
mod store;
mod surrogate;

use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::blockir::IrError;
use crate::costmodel::CostError;
use crate::designspace::DesignError;
use crate::stats::StatsError;

pub use commands::{
    cmd_cost, cmd_emit_profiles, cmd_ingest, cmd_sample, cmd_samplesize, cmd_surrogate, pool_family,
    resolve_profiles, CostOutcome, IngestReport, SampleOutcome, SampleSizeSource,
};
pub use compare::{cmd_compare, compare_families, Band, CompareOptions, CompareOutput, Crossover, Statistic};
pub use config::{ExperimentConfig, FamilyConfig, SurrogateConfig};
pub use store::{
    AccuracyRecord, CostRow, FamilyManifest, FamilyRecords, Manifest, ModelSpecFile, RunStore, StoredRecord,
};
pub use surrogate::{bundled_surrogate_pool, surrogate_error, surrogate_from_counts, synthetic_pool, POOL_SEED, POOL_SIZE};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error(transparent)]
    Ir(#[from] IrError),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("unknown profile `{name}`; bundled profiles are {available}")]
    MissingProfile { name: String, available: String },
    #[error("model {model_id} already has a different accuracy record ({existing} vs {incoming})")]
    Conflict { model_id: String, existing: String, incoming: String },
    #[error("{0}")]
    Run(String),
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// Short machine-readable category.
    pub fn category(&self) -> &'static str {
        match self {
            HarnessError::Config { .. } => "config",
            HarnessError::Io { .. } => "io",
            HarnessError::Parse { .. } => "parse",
            HarnessError::Ir(_) | HarnessError::Design(_) => "validation",
            HarnessError::Cost(_) | HarnessError::MissingProfile { .. } => "cost",
            HarnessError::Stats(_) => "statistics",
            HarnessError::Conflict { .. } => "conflict",
            HarnessError::Run(_) => "run",
        }
    }
}

/// JSON with object keys sorted and no insignificant whitespace.
pub fn canonical_json<T: Serialize>(value: &T) -> String {
    // serde_json::Value keeps object keys in a BTreeMap.
    let v = serde_json::to_value(value).expect("value serializes");
    serde_json::to_string(&v).expect("value serializes")
}

/// First 16 hex digits of the SHA-256 of `text`.
pub fn content_id(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    hex::encode(&digest[..8])
}
