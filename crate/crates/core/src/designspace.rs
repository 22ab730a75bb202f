//! RegNet design space: linear block widths, log-quantisation into stages,
//! and seeded random sampling of configurations.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blockir::{Stage, NUM_STAGES};

/// Identifier of the random source, recorded in run metadata.
pub const GENERATOR_ID: &str = "rand_chacha::ChaCha8Rng/seed_from_u64 (rand_chacha 0.9)";

/// Quantised widths are rounded to a multiple of this.
pub const WIDTH_QUANTUM: u32 = 8;

/// Number of most recent draws inspected by the rejection guard.
pub const REJECTION_WINDOW: usize = 1000;

/// Sampling fails once fewer than this fraction of the window is accepted.
pub const MIN_ACCEPTANCE_RATE: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DesignError {
    #[error("invalid design-space parameters: {0}")]
    InvalidParams(String),
    #[error("invalid sampling range for `{field}`: {reason}")]
    InvalidRange { field: &'static str, reason: String },
    #[error("block widths are empty")]
    EmptyWidths,
    #[error("block width {width} is below the initial width {initial}")]
    WidthBelowInitial { width: f64, initial: f64 },
    #[error("quantisation produced {found} stages (at most {NUM_STAGES} allowed)")]
    TooManyStages { found: usize },
    #[error("total depth {0} cannot fill {NUM_STAGES} stages")]
    TooShallow(u32),
    #[error("only {accepted} of the last {window} draws were accepted; sampling ranges are misconfigured")]
    TooManyRejections { accepted: usize, window: usize },
    #[error("sample count must be at least 1")]
    EmptySample,
}

pub type Result<T, E = DesignError> = std::result::Result<T, E>;

/// The four RegNet hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignSpaceParams {
    /// Total block count `d`.
    pub depth: u32,
    /// Initial width `w_0`.
    pub initial_width: u32,
    /// Width slope `w_a`.
    pub slope: f64,
    /// Quantisation multiplier `w_m`.
    pub quantization: f64,
}

impl DesignSpaceParams {
    pub fn new(depth: u32, initial_width: u32, slope: f64, quantization: f64) -> Result<Self> {
        let p = DesignSpaceParams {
            depth,
            initial_width,
            slope,
            quantization,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(DesignError::InvalidParams(m));
        if self.depth < NUM_STAGES as u32 {
            return bad(format!("depth {} must be at least {NUM_STAGES}", self.depth));
        }
        if self.initial_width < WIDTH_QUANTUM {
            return bad(format!("initial width {} must be at least {WIDTH_QUANTUM}", self.initial_width));
        }
        if !(self.slope >= 0.0 && self.slope.is_finite()) {
            return bad(format!("slope {} must be finite and non-negative", self.slope));
        }
        if !(self.quantization > 1.0 && self.quantization.is_finite()) {
            return bad(format!("quantization {} must be finite and greater than 1", self.quantization));
        }
        Ok(())
    }

    pub fn widths(&self) -> Vec<f64> {
        widths_per_block(self.depth, self.initial_width as f64, self.slope)
    }

    pub fn stage_plan(&self) -> Result<StagePlan> {
        quantize_widths(&self.widths(), self.initial_width as f64, self.quantization)
    }
}

/// `u_j = w_0 + w_a * j` for `0 <= j < depth`.
pub fn widths_per_block(depth: u32, initial_width: f64, slope: f64) -> Vec<f64> {
    (0..depth).map(|j| initial_width + slope * j as f64).collect()
}

/// Per-stage `(width, depth)` pairs after quantisation.
///
/// Widths are strictly increasing multiples of [`WIDTH_QUANTUM`] and there
/// are at most [`NUM_STAGES`] stages.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StagePlan {
    pub stages: Vec<Stage>,
}

impl StagePlan {
    pub fn total_depth(&self) -> u32 {
        self.stages.iter().map(|s| s.depth).sum()
    }

    pub fn widths(&self) -> Vec<u32> {
        self.stages.iter().map(|s| s.width).collect()
    }

    /// Lays the plan out over exactly four stages.
    ///
    /// Plans with fewer distinct widths split their deepest stage (earliest
    /// on ties) into two equal-width halves until four stages exist, so
    /// every network still has four resolution stages.
    pub fn to_four_stages(&self) -> Result<Vec<Stage>> {
        let total = self.total_depth();
        if total < NUM_STAGES as u32 {
            return Err(DesignError::TooShallow(total));
        }
        if self.stages.len() > NUM_STAGES {
            return Err(DesignError::TooManyStages {
                found: self.stages.len(),
            });
        }
        let mut stages = self.stages.clone();
        while stages.len() < NUM_STAGES {
            let (idx, deepest) = stages
                .iter()
                .enumerate()
                .fold((0, stages[0]), |best, (i, s)| if s.depth > best.1.depth { (i, *s) } else { best });
            let head = deepest.depth.div_ceil(2);
            stages[idx].depth = head;
            stages.insert(idx + 1, Stage::new(deepest.width, deepest.depth - head));
        }
        Ok(stages)
    }
}

fn round_to_quantum(width: f64) -> u32 {
    let q = WIDTH_QUANTUM as f64;
    (((width / q).round() * q) as u32).max(WIDTH_QUANTUM)
}

/// Quantises per-block widths into stages.
///
/// Each width snaps to `w_0 * w_m^s` with `s = round(log(u / w_0) / log(w_m))`,
/// then to the nearest multiple of 8; runs of equal widths become stages.
pub fn quantize_widths(widths: &[f64], initial_width: f64, quantization: f64) -> Result<StagePlan> {
    if widths.is_empty() {
        return Err(DesignError::EmptyWidths);
    }
    if quantization.is_nan() || quantization <= 1.0 {
        return Err(DesignError::InvalidParams(format!(
            "quantization {quantization} must be greater than 1"
        )));
    }
    let mut stages: Vec<Stage> = Vec::new();
    for &u in widths {
        if u < initial_width {
            return Err(DesignError::WidthBelowInitial {
                width: u,
                initial: initial_width,
            });
        }
        let exponent = ((u / initial_width).ln() / quantization.ln()).round();
        let width = round_to_quantum(initial_width * quantization.powf(exponent));
        match stages.last_mut() {
            Some(last) if last.width == width => last.depth += 1,
            _ => stages.push(Stage::new(width, 1)),
        }
    }
    if stages.len() > NUM_STAGES {
        return Err(DesignError::TooManyStages { found: stages.len() });
    }
    Ok(StagePlan { stages })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    #[default]
    Uniform,
    LogUniform,
}

fn one() -> u32 {
    1
}

/// Inclusive integer range on the lattice `min + k * step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntRange {
    pub min: u32,
    pub max: u32,
    #[serde(default = "one")]
    pub step: u32,
    #[serde(default)]
    pub distribution: Distribution,
}

impl IntRange {
    pub fn uniform(min: u32, max: u32, step: u32) -> Self {
        IntRange {
            min,
            max,
            step,
            distribution: Distribution::Uniform,
        }
    }

    fn check(&self, field: &'static str, floor: u32) -> Result<()> {
        let bad = |reason: String| Err(DesignError::InvalidRange { field, reason });
        if self.step == 0 {
            return bad("step must be positive".into());
        }
        if self.min > self.max {
            return bad(format!("min {} exceeds max {}", self.min, self.max));
        }
        if self.min < floor {
            return bad(format!("min {} is below the allowed minimum {floor}", self.min));
        }
        Ok(())
    }

    fn draw(&self, rng: &mut impl Rng) -> u32 {
        let steps = (self.max - self.min) / self.step;
        let k = match self.distribution {
            Distribution::Uniform => rng.random_range(0..=steps),
            Distribution::LogUniform => {
                let x = log_uniform(rng, self.min as f64, (self.min + steps * self.step) as f64);
                (((x - self.min as f64) / self.step as f64).round() as u32).min(steps)
            }
        };
        self.min + k * self.step
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RealRange {
    pub min: f64,
    pub max: f64,
    #[serde(default)]
    pub distribution: Distribution,
}

impl RealRange {
    pub fn uniform(min: f64, max: f64) -> Self {
        RealRange {
            min,
            max,
            distribution: Distribution::Uniform,
        }
    }

    fn draw(&self, rng: &mut impl Rng) -> f64 {
        if self.min == self.max {
            return self.min;
        }
        match self.distribution {
            Distribution::Uniform => rng.random_range(self.min..=self.max),
            Distribution::LogUniform => log_uniform(rng, self.min, self.max),
        }
    }
}

fn log_uniform(rng: &mut impl Rng, min: f64, max: f64) -> f64 {
    if min == max {
        return min;
    }
    rng.random_range(min.ln()..=max.ln()).exp().clamp(min, max)
}

fn default_ranges_seed() -> u64 {
    0
}

/// Allowed values and distributions for each design-space parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingRanges {
    pub depth: IntRange,
    pub initial_width: IntRange,
    pub slope: RealRange,
    pub quantization: RealRange,
    #[serde(default = "default_ranges_seed")]
    pub seed: u64,
}

impl Default for SamplingRanges {
    fn default() -> Self {
        SamplingRanges {
            depth: IntRange::uniform(6, 20, 1),
            initial_width: IntRange::uniform(8, 96, 8),
            slope: RealRange::uniform(0.0, 32.0),
            quantization: RealRange::uniform(1.5, 3.0),
            seed: 0,
        }
    }
}

impl SamplingRanges {
    pub fn new(
        depth: IntRange,
        initial_width: IntRange,
        slope: RealRange,
        quantization: RealRange,
        seed: u64,
    ) -> Result<Self> {
        let r = SamplingRanges {
            depth,
            initial_width,
            slope,
            quantization,
            seed,
        };
        r.validate()?;
        Ok(r)
    }

    /// A range set that can only produce `params`.
    pub fn point(params: DesignSpaceParams, seed: u64) -> Result<Self> {
        Self::new(
            IntRange::uniform(params.depth, params.depth, 1),
            IntRange::uniform(params.initial_width, params.initial_width, 1),
            RealRange::uniform(params.slope, params.slope),
            RealRange::uniform(params.quantization, params.quantization),
            seed,
        )
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.depth.check("depth", NUM_STAGES as u32)?;
        self.initial_width.check("initial_width", WIDTH_QUANTUM)?;
        check_real(&self.slope, "slope", |v| v >= 0.0, "must be non-negative")?;
        check_real(&self.quantization, "quantization", |v| v > 1.0, "must be greater than 1")?;
        Ok(())
    }
}

fn check_real(range: &RealRange, field: &'static str, ok: impl Fn(f64) -> bool, rule: &str) -> Result<()> {
    let bad = |reason: String| Err(DesignError::InvalidRange { field, reason });
    if !(range.min.is_finite() && range.max.is_finite()) {
        return bad("bounds must be finite".into());
    }
    if range.min > range.max {
        return bad(format!("min {} exceeds max {}", range.min, range.max));
    }
    if !ok(range.min) {
        return bad(format!("min {} {rule}", range.min));
    }
    if range.distribution == Distribution::LogUniform && range.min <= 0.0 {
        return bad("log-uniform ranges need a positive minimum".into());
    }
    Ok(())
}

/// A sampled configuration together with its quantised stage plan.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledConfig {
    pub params: DesignSpaceParams,
    pub plan: StagePlan,
}

/// Seeded stream of design-space draws with rejection of invalid ones.
pub struct ParamSampler {
    ranges: SamplingRanges,
    rng: ChaCha8Rng,
    window: VecDeque<bool>,
    accepted_in_window: usize,
}

impl ParamSampler {
    pub fn new(ranges: &SamplingRanges) -> Result<Self> {
        Self::with_stream(ranges, 0)
    }

    /// Independent stream `stream` for the same seed.
    pub fn with_stream(ranges: &SamplingRanges, stream: u64) -> Result<Self> {
        ranges.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(ranges.seed);
        rng.set_stream(stream);
        Ok(ParamSampler {
            ranges: *ranges,
            rng,
            window: VecDeque::with_capacity(REJECTION_WINDOW),
            accepted_in_window: 0,
        })
    }

    fn draw(&mut self) -> DesignSpaceParams {
        let rng = &mut self.rng;
        DesignSpaceParams {
            depth: self.ranges.depth.draw(rng),
            initial_width: self.ranges.initial_width.draw(rng),
            slope: self.ranges.slope.draw(rng),
            quantization: self.ranges.quantization.draw(rng),
        }
    }

    fn record(&mut self, accepted: bool) -> Result<()> {
        if self.window.len() == REJECTION_WINDOW && self.window.pop_front() == Some(true) {
            self.accepted_in_window -= 1;
        }
        self.window.push_back(accepted);
        if accepted {
            self.accepted_in_window += 1;
        }
        let needed = (MIN_ACCEPTANCE_RATE * REJECTION_WINDOW as f64).ceil() as usize;
        if self.window.len() == REJECTION_WINDOW && self.accepted_in_window < needed {
            return Err(DesignError::TooManyRejections {
                accepted: self.accepted_in_window,
                window: REJECTION_WINDOW,
            });
        }
        Ok(())
    }

    /// Next draw whose width quantisation succeeds and which `accept` keeps.
    pub fn next_accepted<F>(&mut self, mut accept: F) -> Result<SampledConfig>
    where
        F: FnMut(&SampledConfig) -> bool,
    {
        loop {
            let params = self.draw();
            let candidate = params
                .validate()
                .and_then(|_| params.stage_plan())
                .map(|plan| SampledConfig { params, plan });
            let keep = match candidate {
                Ok(c) if accept(&c) => Some(c),
                _ => None,
            };
            self.record(keep.is_some())?;
            if let Some(c) = keep {
                return Ok(c);
            }
        }
    }
}

impl Iterator for ParamSampler {
    type Item = Result<SampledConfig>;

    fn next(&mut self) -> Option<Self::Item> {
        Some(self.next_accepted(|_| true))
    }
}

/// Draws `n` valid parameter sets. Identical for identical `(ranges, n)`.
pub fn sample(ranges: &SamplingRanges, n: usize) -> Result<Vec<DesignSpaceParams>> {
    if n == 0 {
        return Err(DesignError::EmptySample);
    }
    ParamSampler::new(ranges)?
        .take(n)
        .map(|r| r.map(|c| c.params))
        .collect()
}
