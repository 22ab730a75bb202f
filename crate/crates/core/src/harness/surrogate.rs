//! Surrogate accuracies and synthetic record pools.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use super::{canonical_json, content_id, Result, SurrogateConfig};
use crate::blockir::{build_network, BlockTemplate, NetworkSpec, TensorShape};
use crate::costmodel::network_totals;
use crate::designspace::{ParamSampler, SamplingRanges};
use crate::par::Execution;
use crate::stats::SampleRecord;

/// Size of the bundled synthetic pool.
pub const POOL_SIZE: usize = 5000;
/// Seed of the bundled synthetic pool.
pub const POOL_SEED: u64 = 2022;

fn noise_rng(noise_seed: u64, model_id: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(noise_seed.to_le_bytes());
    h.update(model_id.as_bytes());
    let digest = h.finalize();
    ChaCha8Rng::from_seed(digest.into())
}

/// Surrogate error from complexity counts. Deterministic in
/// `(cfg, model_id)`.
pub fn surrogate_from_counts(macs: f64, params: f64, model_id: &str, cfg: &SurrogateConfig) -> f64 {
    let macs = macs.max(1.0);
    let params = params.max(1.0);
    let base = cfg.a - cfg.b * macs.ln() + cfg.c * params.ln();
    let amplitude = cfg.noise * (cfg.noise_reference_macs / macs).powf(cfg.noise_exponent);
    let z: f64 = noise_rng(cfg.noise_seed, model_id).sample(StandardNormal);
    (base + amplitude * z.abs()).clamp(0.02, 0.98)
}

pub fn surrogate_error(net: &NetworkSpec, model_id: &str, cfg: &SurrogateConfig) -> Result<f64> {
    let totals = network_totals(net)?;
    Ok(surrogate_from_counts(totals.macs as f64, totals.params as f64, model_id, cfg))
}

/// `size` surrogate records from networks sampled with `template`.
pub fn synthetic_pool(
    size: usize,
    seed: u64,
    template: &BlockTemplate,
    resolution: u32,
    cfg: &SurrogateConfig,
    execution: Execution,
) -> Result<Vec<SampleRecord>> {
    let ranges = SamplingRanges::default().with_seed(seed);
    let mut sampler = ParamSampler::new(&ranges)?;
    let input = TensorShape::square(resolution, 3)?;
    let mut configs = Vec::with_capacity(size);
    while configs.len() < size {
        let c = sampler.next_accepted(|c| {
            c.plan
                .to_four_stages()
                .is_ok_and(|stages| build_network(&stages, template, input, 2).is_ok())
        })?;
        configs.push(c);
    }
    let nets = execution.map(&configs, |c| {
        let stages = c.plan.to_four_stages()?;
        let net = build_network(&stages, template, input, 2)?.with_origin(c.params);
        let totals = network_totals(&net)?;
        let id = content_id(&canonical_json(&net));
        let error = surrogate_from_counts(totals.macs as f64, totals.params as f64, &id, cfg);
        Ok(SampleRecord::new(id, error)
            .with_metric("macs", totals.macs as f64)
            .with_metric("params", totals.params as f64)
            .with_metric("activations", totals.output_activations as f64))
    });
    nets.into_iter().collect()
}

/// The 5,000-record pool of inverted-bottleneck depthwise networks.
pub fn bundled_surrogate_pool(execution: Execution) -> Result<Vec<SampleRecord>> {
    use crate::blockir::Bottleneck;
    let template = BlockTemplate::depthwise_separable().with_bottleneck(Bottleneck::inverted());
    synthetic_pool(POOL_SIZE, POOL_SEED, &template, 160, &SurrogateConfig::default(), execution)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_bounded() {
        let cfg = SurrogateConfig::default();
        let a = surrogate_from_counts(3e8, 4e6, "abc", &cfg);
        assert_eq!(a, surrogate_from_counts(3e8, 4e6, "abc", &cfg));
        assert!((0.02..=0.98).contains(&a));
        let other = SurrogateConfig { noise_seed: 1, ..cfg };
        assert_ne!(a, surrogate_from_counts(3e8, 4e6, "abc", &other));
    }

    #[test]
    fn noiseless_error_decreases_with_macs() {
        let cfg = SurrogateConfig { noise: 0.0, ..SurrogateConfig::default() };
        let small = surrogate_from_counts(1e7, 1e6, "a", &cfg);
        let large = surrogate_from_counts(1e9, 1e6, "a", &cfg);
        assert!(large < small);
    }

    #[test]
    fn small_pool_is_reproducible() {
        let t = BlockTemplate::depthwise_separable();
        let cfg = SurrogateConfig::default();
        let a = synthetic_pool(20, 3, &t, 64, &cfg, Execution::Sequential).unwrap();
        let b = synthetic_pool(20, 3, &t, 64, &cfg, Execution::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 20);
    }
}
