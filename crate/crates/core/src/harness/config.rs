//! Experiment configuration, read from TOML or JSON.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{HarnessError, Result};
use crate::blockir::{BlockTemplate, MIN_INPUT_RESOLUTION};
use crate::costmodel::bundled_profiles;
use crate::designspace::SamplingRanges;
use crate::stats::DEFAULT_SAMPLE_SIZE;

/// Coefficients of the surrogate error model
/// `a - b ln(macs) + c ln(params)` plus half-normal noise of amplitude
/// `noise * (noise_reference_macs / macs)^noise_exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurrogateConfig {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub noise: f64,
    pub noise_reference_macs: f64,
    pub noise_exponent: f64,
    pub noise_seed: u64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        SurrogateConfig {
            a: 1.2,
            b: 0.04,
            c: -0.01,
            noise: 0.25,
            noise_reference_macs: 1e6,
            noise_exponent: 0.15,
            noise_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyConfig {
    pub name: String,
    pub template: BlockTemplate,
}

fn default_samples() -> usize {
    DEFAULT_SAMPLE_SIZE
}

fn default_resolution() -> u32 {
    160
}

fn default_classes() -> u32 {
    2
}

fn default_profiles() -> Vec<String> {
    bundled_profiles().into_iter().map(|p| p.name).collect()
}

fn default_metrics() -> Vec<String> {
    ["macs", "params", "activations"].map(String::from).to_vec()
}

fn default_output() -> PathBuf {
    PathBuf::from("runs/experiment")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Master seed; overrides any seed given inside `ranges`.
    #[serde(default)]
    pub seed: u64,
    /// Models sampled per family.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_resolution")]
    pub input_resolution: u32,
    #[serde(default = "default_classes")]
    pub num_classes: u32,
    #[serde(default)]
    pub ranges: SamplingRanges,
    pub families: Vec<FamilyConfig>,
    /// Bundled profile names or paths to profile files.
    #[serde(default = "default_profiles")]
    pub profiles: Vec<String>,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<String>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub surrogate: SurrogateConfig,
}

fn field(field: &str, message: impl Into<String>) -> HarnessError {
    HarnessError::Config {
        field: field.to_string(),
        message: message.into(),
    }
}

impl ExperimentConfig {
    /// The bundled comparison: one family per building-block variant.
    pub fn example() -> Self {
        use crate::blockir::Bottleneck;
        let families = [
            ("standard", BlockTemplate::standard()),
            ("dwsep", BlockTemplate::depthwise_separable()),
            ("grouped4", BlockTemplate::grouped(4)),
            ("dwsep_bottleneck", BlockTemplate::depthwise_separable().with_bottleneck(Bottleneck::regular())),
            ("dwsep_inverted", BlockTemplate::depthwise_separable().with_bottleneck(Bottleneck::inverted())),
            ("dwsep_se", BlockTemplate::depthwise_separable().with_se(4)),
        ]
        .into_iter()
        .map(|(name, template)| FamilyConfig {
            name: name.to_string(),
            template,
        })
        .collect();
        ExperimentConfig {
            seed: 0,
            samples: default_samples(),
            input_resolution: default_resolution(),
            num_classes: default_classes(),
            ranges: SamplingRanges::default(),
            families,
            profiles: default_profiles(),
            metrics: default_metrics(),
            output_dir: default_output(),
            surrogate: SurrogateConfig::default(),
        }
    }

    pub fn parse(text: &str, json: bool) -> Result<Self> {
        let cfg: ExperimentConfig = if json {
            serde_json::from_str(text).map_err(|e| field("<document>", e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| field("<document>", e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; `.json` files are JSON, anything else TOML.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let json = path.extension().is_some_and(|e| e == "json");
        Self::parse(&text, json)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Sampling ranges with the master seed applied.
    pub fn effective_ranges(&self) -> SamplingRanges {
        self.ranges.with_seed(self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(field("samples", "must be at least 1"));
        }
        if self.families.is_empty() {
            return Err(field("families", "at least one family is required"));
        }
        let mut names = BTreeSet::new();
        for (i, fam) in self.families.iter().enumerate() {
            let ok = !fam.name.is_empty()
                && fam
                    .name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
            if !ok {
                return Err(field(
                    &format!("families[{i}].name"),
                    format!("`{}` must be non-empty and use only [A-Za-z0-9_-]", fam.name),
                ));
            }
            if !names.insert(fam.name.as_str()) {
                return Err(field(&format!("families[{i}].name"), format!("duplicate family `{}`", fam.name)));
            }
            fam.template
                .validate()
                .map_err(|e| field(&format!("families[{i}].template"), e.to_string()))?;
        }
        if self.input_resolution < MIN_INPUT_RESOLUTION {
            return Err(field(
                "input_resolution",
                format!("must be at least {MIN_INPUT_RESOLUTION}"),
            ));
        }
        if self.num_classes == 0 {
            return Err(field("num_classes", "must be at least 1"));
        }
        self.ranges.validate().map_err(|e| field("ranges", e.to_string()))?;
        for (i, m) in self.metrics.iter().enumerate() {
            let known = matches!(m.as_str(), "macs" | "params" | "activations")
                || m.strip_prefix("latency:").is_some_and(|p| !p.is_empty());
            if !known {
                return Err(field(&format!("metrics[{i}]"), format!("unknown metric `{m}`")));
            }
        }
        let s = &self.surrogate;
        if !(s.noise >= 0.0 && s.noise_reference_macs > 0.0) {
            return Err(field("surrogate", "noise must be >= 0 and noise_reference_macs > 0"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_round_trips_through_toml_and_json() {
        let cfg = ExperimentConfig::example();
        cfg.validate().unwrap();
        assert_eq!(ExperimentConfig::parse(&cfg.to_toml(), false).unwrap(), cfg);
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::parse(&json, true).unwrap(), cfg);
    }

    #[test]
    fn minimal_toml_uses_defaults() {
        let text = r#"
            [[families]]
            name = "dwsep"
            template = { conv = { type = "depthwise_separable" }, bottleneck = { type = "none" } }
        "#;
        let cfg = ExperimentConfig::parse(text, false).unwrap();
        assert_eq!(cfg.samples, 130);
        assert_eq!(cfg.ranges, SamplingRanges::default());
        assert_eq!(cfg.profiles.len(), 5);
        assert!(!cfg.families[0].template.use_se);
    }

    #[test]
    fn validation_names_the_field() {
        let mut cfg = ExperimentConfig::example();
        cfg.samples = 0;
        match cfg.validate() {
            Err(HarnessError::Config { field, .. }) => assert_eq!(field, "samples"),
            other => panic!("{other:?}"),
        }
        let mut cfg = ExperimentConfig::example();
        cfg.families[1].name = "standard".into();
        assert!(matches!(cfg.validate(), Err(HarnessError::Config { field, .. }) if field == "families[1].name"));
        let mut cfg = ExperimentConfig::example();
        cfg.ranges.quantization.min = 0.9;
        assert!(matches!(cfg.validate(), Err(HarnessError::Config { field, .. }) if field == "ranges"));
    }
}
