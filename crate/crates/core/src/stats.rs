//! Family comparison statistics.
//!
//! * [`edf`]: weighted empirical distribution of model errors.
//! * [`pareto_front`]: the accuracy/complexity front of a sample of models.
//! * [`curve_noise`]: how much the front of an `n`-model sample varies
//!   between repeated draws from a fixed pool.
//! * [`kneedle`] and [`recommend_sample_size`]: the elbow of the noise
//!   trend, i.e. the sample size past which extra models stop paying off.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par::Execution;

/// Repetitions per sample size used by default.
pub const DEFAULT_REPETITIONS: usize = 100;

/// Sample size to fall back to when no pool is available to measure one.
pub const DEFAULT_SAMPLE_SIZE: usize = 130;

pub const DEFAULT_SENSITIVITY: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("no records")]
    Empty,
    #[error("record {model_id} has no `{metric}` metric")]
    MissingMetric { model_id: String, metric: String },
    #[error("record {model_id} has error {error} outside [0, 1]")]
    ErrorOutOfRange { model_id: String, error: f64 },
    #[error("record {model_id} has an invalid weight or complexity value")]
    NonFinite { model_id: String },
    #[error("all weights are zero under scheme {0}")]
    AllZeroWeights(String),
    #[error("sample size {n} exceeds the pool of {pool} records")]
    SampleTooLarge { n: usize, pool: usize },
    #[error("sample size must be at least 1")]
    EmptySample,
    #[error("at least 2 repetitions are needed, got {0}")]
    TooFewRepetitions(usize),
    #[error("invalid curve: {0}")]
    InvalidPoints(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("no elbow found: {0}")]
    NoElbow(String),
}

pub type Result<T, E = StatsError> = std::result::Result<T, E>;

fn unit_weight() -> f64 {
    1.0
}

/// One sampled model with its complexity metrics and error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub model_id: String,
    /// Metric name (`macs`, `params`, `activations`, `latency:<profile>`) to value.
    pub complexity: BTreeMap<String, f64>,
    pub error: f64,
    #[serde(default = "unit_weight")]
    pub weight: f64,
}

impl SampleRecord {
    pub fn new(model_id: impl Into<String>, error: f64) -> Self {
        SampleRecord {
            model_id: model_id.into(),
            complexity: BTreeMap::new(),
            error,
            weight: 1.0,
        }
    }

    pub fn with_metric(mut self, name: impl Into<String>, value: f64) -> Self {
        self.complexity.insert(name.into(), value);
        self
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }

    pub fn metric(&self, name: &str) -> Result<f64> {
        let v = *self.complexity.get(name).ok_or_else(|| StatsError::MissingMetric {
            model_id: self.model_id.clone(),
            metric: name.to_string(),
        })?;
        if !v.is_finite() {
            return Err(StatsError::NonFinite {
                model_id: self.model_id.clone(),
            });
        }
        Ok(v)
    }

    fn checked_error(&self) -> Result<f64> {
        if !(0.0..=1.0).contains(&self.error) {
            return Err(StatsError::ErrorOutOfRange {
                model_id: self.model_id.clone(),
                error: self.error,
            });
        }
        Ok(self.error)
    }
}

/// How EDF weights are assigned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum WeightScheme {
    /// `w_i = 1`.
    Uniform,
    /// `w_i = 1` for records with `lo <= metric <= hi`, `0` otherwise.
    Band { metric: String, lo: f64, hi: f64 },
    /// The weights stored on the records.
    Recorded,
}

impl WeightScheme {
    /// Label written next to every EDF output.
    pub fn label(&self) -> String {
        match self {
            WeightScheme::Uniform => "uniform".into(),
            WeightScheme::Band { metric, lo, hi } => format!("band({metric},{lo},{hi})"),
            WeightScheme::Recorded => "recorded".into(),
        }
    }

    fn weight(&self, record: &SampleRecord) -> Result<f64> {
        let w = match self {
            WeightScheme::Uniform => 1.0,
            WeightScheme::Band { metric, lo, hi } => {
                let v = record.metric(metric)?;
                if (*lo..=*hi).contains(&v) {
                    1.0
                } else {
                    0.0
                }
            }
            WeightScheme::Recorded => record.weight,
        };
        if !(w >= 0.0 && w.is_finite()) {
            return Err(StatsError::NonFinite {
                model_id: record.model_id.clone(),
            });
        }
        Ok(w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdfPoint {
    pub error: f64,
    /// Weighted fraction of models with error `<= error`, i.e. the value
    /// of the EDF just above this threshold.
    pub fraction: f64,
}

/// Right-open step function `F(e) = sum_i w_i [e_i < e] / sum_i w_i`.
///
/// Weights are rescaled to sum to the record count, so with unit weights
/// this is exactly the fraction of models with error below `e`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdfCurve {
    pub scheme: String,
    pub points: Vec<EdfPoint>,
}

impl EdfCurve {
    /// `F(e)`: weighted fraction of records with error strictly below `e`.
    pub fn eval(&self, e: f64) -> f64 {
        let idx = self.points.partition_point(|p| p.error < e);
        if idx == 0 {
            0.0
        } else {
            self.points[idx - 1].fraction
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("# scheme={}\nerror,fraction\n", self.scheme);
        for p in &self.points {
            let _ = writeln!(out, "{},{}", p.error, p.fraction);
        }
        out
    }
}

/// Error EDF of `records` under `scheme`, with a jump at every distinct error.
pub fn edf(records: &[SampleRecord], scheme: &WeightScheme) -> Result<EdfCurve> {
    if records.is_empty() {
        return Err(StatsError::Empty);
    }
    let mut weighted = records
        .iter()
        .map(|r| Ok((r.checked_error()?, scheme.weight(r)?)))
        .collect::<Result<Vec<_>>>()?;
    let total: f64 = weighted.iter().map(|&(_, w)| w).sum();
    if total <= 0.0 {
        return Err(StatsError::AllZeroWeights(scheme.label()));
    }
    weighted.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut points: Vec<EdfPoint> = Vec::new();
    let mut cumulative = 0.0;
    let mut i = 0;
    while i < weighted.len() {
        let e = weighted[i].0;
        while i < weighted.len() && weighted[i].0 == e {
            cumulative += weighted[i].1;
            i += 1;
        }
        points.push(EdfPoint {
            error: e,
            fraction: cumulative / total,
        });
    }
    // the last step is exactly 1 regardless of summation order
    if let Some(last) = points.last_mut() {
        last.fraction = 1.0;
    }
    Ok(EdfCurve {
        scheme: scheme.label(),
        points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub complexity: f64,
    pub error: f64,
    pub model_id: String,
}

/// Non-dominated accuracy/complexity points, complexity strictly
/// increasing and error strictly decreasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoCurve {
    pub metric: String,
    pub points: Vec<ParetoPoint>,
}

impl ParetoCurve {
    /// Best error reachable with complexity `<= x`; `None` below the
    /// cheapest point.
    pub fn value_at(&self, x: f64) -> Option<f64> {
        let idx = self.points.partition_point(|p| p.complexity <= x);
        (idx > 0).then(|| self.points[idx - 1].error)
    }

    pub fn model_ids(&self) -> Vec<&str> {
        self.points.iter().map(|p| p.model_id.as_str()).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{},error,model_id\n", self.metric);
        for p in &self.points {
            let _ = writeln!(out, "{},{},{}", p.complexity, p.error, p.model_id);
        }
        out
    }
}

/// Indices of the front of `(complexity, error)` pairs, in complexity order.
///
/// A point is kept when its error is strictly below that of every point
/// with smaller-or-equal complexity that sorts before it; exact duplicates
/// collapse to the first in `(complexity, error, tie)` order.
fn front_indices<K: Ord>(points: &[(f64, f64)], tie: impl Fn(usize) -> K) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[a]
            .0
            .total_cmp(&points[b].0)
            .then(points[a].1.total_cmp(&points[b].1))
            .then_with(|| tie(a).cmp(&tie(b)))
    });
    let mut best = f64::INFINITY;
    order
        .into_iter()
        .filter(|&i| {
            let keep = points[i].1 < best;
            if keep {
                best = points[i].1;
            }
            keep
        })
        .collect()
}

/// Accuracy/complexity front of `records` along `metric`.
pub fn pareto_front(records: &[SampleRecord], metric: &str) -> Result<ParetoCurve> {
    if records.is_empty() {
        return Err(StatsError::Empty);
    }
    let pts = records
        .iter()
        .map(|r| Ok((r.metric(metric)?, r.checked_error()?)))
        .collect::<Result<Vec<_>>>()?;
    let points = front_indices(&pts, |i| records[i].model_id.as_str())
        .into_iter()
        .map(|i| ParetoPoint {
            complexity: pts[i].0,
            error: pts[i].1,
            model_id: records[i].model_id.clone(),
        })
        .collect();
    Ok(ParetoCurve {
        metric: metric.to_string(),
        points,
    })
}

/// `k` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, k: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
        return Err(StatsError::InvalidGrid(format!("bounds {lo}..{hi} must be positive and ordered")));
    }
    if k < 2 {
        return Err(StatsError::InvalidGrid("need at least 2 grid points".into()));
    }
    let (a, b) = (lo.ln(), hi.ln());
    let mut grid: Vec<f64> = (0..k).map(|i| (a + (b - a) * i as f64 / (k - 1) as f64).exp()).collect();
    grid[0] = lo;
    grid[k - 1] = hi;
    Ok(grid)
}

/// Log grid spanning the `metric` range of `records`.
pub fn metric_grid(records: &[SampleRecord], metric: &str, k: usize) -> Result<Vec<f64>> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for r in records {
        let v = r.metric(metric)?;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if records.is_empty() {
        return Err(StatsError::Empty);
    }
    log_grid(lo, hi, k)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    pub repetitions: usize,
    pub seed: u64,
    pub execution: Execution,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            repetitions: DEFAULT_REPETITIONS,
            seed: 0,
            execution: Execution::default(),
        }
    }
}

impl NoiseConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_repetitions(mut self, repetitions: usize) -> Self {
        self.repetitions = repetitions;
        self
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }
}

/// Average per-grid-point standard deviation of sampled fronts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseEstimate {
    pub mean_std: f64,
    /// Monte-Carlo standard error of `mean_std`, taken as the mean of the
    /// per-point standard errors `sigma / sqrt(2 (R - 1))`.
    pub standard_error: f64,
    /// Grid points defined in at least two repetitions.
    pub points_used: usize,
}

/// Population standard deviation, exactly zero for constant input.
fn std_dev(values: &[f64]) -> f64 {
    let shift = values[0];
    let n = values.len() as f64;
    let mean = values.iter().map(|v| v - shift).sum::<f64>() / n;
    let var = values.iter().map(|v| (v - shift - mean).powi(2)).sum::<f64>() / n;
    var.sqrt()
}

/// Evaluates the front of `pts` as a step function on `grid`.
fn front_on_grid(pts: &[(f64, f64)], grid: &[f64]) -> Vec<Option<f64>> {
    let front = front_indices(pts, |i| i);
    let mut out = Vec::with_capacity(grid.len());
    let mut j = 0;
    let mut current = None;
    for &x in grid {
        while j < front.len() && pts[front[j]].0 <= x {
            current = Some(pts[front[j]].1);
            j += 1;
        }
        out.push(current);
    }
    out
}

/// Front variability of `n`-record samples drawn without replacement.
///
/// Repetition `r` draws with a ChaCha8 stream `r` under `config.seed`, so
/// the result does not depend on the execution mode.
pub fn curve_noise(
    pool: &[SampleRecord],
    metric: &str,
    n: usize,
    grid: &[f64],
    config: &NoiseConfig,
) -> Result<NoiseEstimate> {
    if pool.is_empty() {
        return Err(StatsError::Empty);
    }
    if n == 0 {
        return Err(StatsError::EmptySample);
    }
    if n > pool.len() {
        return Err(StatsError::SampleTooLarge { n, pool: pool.len() });
    }
    if config.repetitions < 2 {
        return Err(StatsError::TooFewRepetitions(config.repetitions));
    }
    let pts = pool
        .iter()
        .map(|r| Ok((r.metric(metric)?, r.checked_error()?)))
        .collect::<Result<Vec<_>>>()?;

    let curves: Vec<Vec<Option<f64>>> = config.execution.map_range(config.repetitions, |rep| {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(rep as u64);
        let drawn: Vec<(f64, f64)> = rand::seq::index::sample(&mut rng, pts.len(), n)
            .into_iter()
            .map(|i| pts[i])
            .collect();
        front_on_grid(&drawn, grid)
    });

    let mut total = 0.0;
    let mut used = 0;
    let mut column = Vec::with_capacity(config.repetitions);
    for g in 0..grid.len() {
        column.clear();
        column.extend(curves.iter().filter_map(|c| c[g]));
        if column.len() >= 2 {
            total += std_dev(&column);
            used += 1;
        }
    }
    let mean_std = if used == 0 { 0.0 } else { total / used as f64 };
    Ok(NoiseEstimate {
        mean_std,
        standard_error: mean_std / (2.0 * (config.repetitions as f64 - 1.0)).sqrt(),
        points_used: used,
    })
}

/// Result of elbow detection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Knee {
    Elbow { x: f64, index: usize },
    NoElbow,
}

impl Knee {
    pub fn x(&self) -> Option<f64> {
        match self {
            Knee::Elbow { x, .. } => Some(*x),
            Knee::NoElbow => None,
        }
    }
}

fn min_max_normalize(v: &[f64]) -> Option<Vec<f64>> {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    (range > 0.0).then(|| v.iter().map(|x| (x - lo) / range).collect())
}

/// Kneedle knee/elbow detection.
///
/// The curve is brought into convex-decreasing orientation (mirroring `x`
/// for increasing curves and rotating concave ones by 180 degrees), both
/// axes are min-max normalised, and the difference curve to the chord is
/// scanned for a local maximum after which it drops by more than
/// `sensitivity` times the mean normalised `x` spacing. The first such
/// maximum is the elbow.
pub fn kneedle(points: &[(f64, f64)], sensitivity: f64) -> Result<Knee> {
    let n = points.len();
    if n < 3 {
        return Err(StatsError::InvalidPoints(format!("need at least 3 points, got {n}")));
    }
    if points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return Err(StatsError::InvalidPoints("non-finite coordinate".into()));
    }
    if points.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(StatsError::InvalidPoints("x must be strictly increasing".into()));
    }

    let mut xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let mut ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let mut reversed = false;

    if ys[n - 1] > ys[0] {
        xs = xs.iter().rev().map(|x| -x).collect();
        ys.reverse();
        reversed = !reversed;
    }
    let (Some(xn), Some(yn)) = (min_max_normalize(&xs), min_max_normalize(&ys)) else {
        return Ok(Knee::NoElbow);
    };
    // in decreasing orientation the chord runs from (0, 1) to (1, 0)
    let above_chord: f64 = xn.iter().zip(&yn).map(|(x, y)| y - (1.0 - x)).sum();
    let (xn, yn) = if above_chord > 0.0 {
        xs = xs.iter().rev().map(|x| -x).collect();
        ys = ys.iter().rev().map(|y| -y).collect();
        reversed = !reversed;
        (
            min_max_normalize(&xs).expect("x range"),
            min_max_normalize(&ys).expect("y range"),
        )
    } else {
        (xn, yn)
    };

    let diff: Vec<f64> = xn.iter().zip(&yn).map(|(x, y)| (1.0 - y) - x).collect();
    let peak = diff.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if peak <= 1e-12 {
        return Ok(Knee::NoElbow);
    }
    let mean_dx = (xn[n - 1] - xn[0]) / (n - 1) as f64;
    let is_max = |i: usize| diff[i] > diff[i - 1] && diff[i] >= diff[i + 1];
    let is_min = |i: usize| diff[i] < diff[i - 1] && diff[i] <= diff[i + 1];

    let Some(first_max) = (1..n - 1).find(|&i| is_max(i)) else {
        return Ok(Knee::NoElbow);
    };
    let mut threshold = f64::NEG_INFINITY;
    let mut candidate = first_max;
    for i in first_max..n - 1 {
        if is_max(i) {
            threshold = diff[i] - sensitivity * mean_dx;
            candidate = i;
        } else if is_min(i) {
            threshold = 0.0;
        }
        if diff[i + 1] < threshold {
            let index = if reversed { n - 1 - candidate } else { candidate };
            return Ok(Knee::Elbow {
                x: points[index].0,
                index,
            });
        }
    }
    Ok(Knee::NoElbow)
}

/// Least-squares fit of `noise = a + b / n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendFit {
    pub a: f64,
    pub b: f64,
    pub residual_rms: f64,
}

impl TrendFit {
    pub const METHOD: &'static str = "ordinary least squares on a + b/n";

    pub fn eval(&self, n: f64) -> f64 {
        self.a + self.b / n
    }

    pub fn fit(points: &[(usize, f64)]) -> Result<Self> {
        if points.len() < 2 {
            return Err(StatsError::InvalidPoints("trend fit needs at least 2 sample sizes".into()));
        }
        let m = points.len() as f64;
        let t: Vec<f64> = points.iter().map(|&(n, _)| 1.0 / n as f64).collect();
        let t_mean = t.iter().sum::<f64>() / m;
        let y_mean = points.iter().map(|p| p.1).sum::<f64>() / m;
        let sxx: f64 = t.iter().map(|ti| (ti - t_mean).powi(2)).sum();
        let sxy: f64 = t.iter().zip(points).map(|(ti, p)| (ti - t_mean) * (p.1 - y_mean)).sum();
        if sxx <= 0.0 {
            return Err(StatsError::InvalidPoints("sample sizes must not all be equal".into()));
        }
        let b = sxy / sxx;
        let a = y_mean - b * t_mean;
        let rss: f64 = t.iter().zip(points).map(|(ti, p)| (p.1 - a - b * ti).powi(2)).sum();
        Ok(TrendFit {
            a,
            b,
            residual_rms: (rss / m).sqrt(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoisePoint {
    pub sample_size: usize,
    pub mean_std: f64,
    pub standard_error: f64,
}

/// Noise versus sample size, its trendline and the trendline's elbow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseTrend {
    pub metric: String,
    pub points: Vec<NoisePoint>,
    pub fit: TrendFit,
    pub elbow: Option<usize>,
}

impl NoiseTrend {
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# metric={} fit={} a={} b={} residual_rms={} elbow={}\nsample_size,mean_std,standard_error,trend\n",
            self.metric,
            TrendFit::METHOD,
            self.fit.a,
            self.fit.b,
            self.fit.residual_rms,
            self.elbow.map(|e| e.to_string()).unwrap_or_else(|| "none".into()),
        );
        for p in &self.points {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                p.sample_size,
                p.mean_std,
                p.standard_error,
                self.fit.eval(p.sample_size as f64)
            );
        }
        out
    }
}

/// Sample sizes probed by default, capped at the pool size.
pub fn default_n_grid(pool_size: usize) -> Vec<usize> {
    const GRID: [usize; 21] = [
        10, 15, 20, 30, 40, 50, 65, 80, 100, 130, 160, 200, 250, 320, 400, 500, 650, 800, 1000, 1300, 1600,
    ];
    GRID.into_iter().filter(|&n| n <= pool_size).collect()
}

/// Measures the noise trend over `n_grid` and returns it with its elbow.
///
/// The elbow is located by [`kneedle`] on the fitted `a + b/n` trendline
/// evaluated at every integer sample size in the grid's range.
pub fn noise_trend(
    pool: &[SampleRecord],
    metric: &str,
    n_grid: &[usize],
    grid_points: usize,
    config: &NoiseConfig,
) -> Result<NoiseTrend> {
    if n_grid.len() < 3 {
        return Err(StatsError::InvalidPoints("sample-size grid needs at least 3 entries".into()));
    }
    if n_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(StatsError::InvalidPoints("sample sizes must be strictly increasing".into()));
    }
    let grid = metric_grid(pool, metric, grid_points)?;
    let points = n_grid
        .iter()
        .map(|&n| {
            let est = curve_noise(pool, metric, n, &grid, config)?;
            Ok(NoisePoint {
                sample_size: n,
                mean_std: est.mean_std,
                standard_error: est.standard_error,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let fit = TrendFit::fit(&points.iter().map(|p| (p.sample_size, p.mean_std)).collect::<Vec<_>>())?;
    let elbow = if fit.b > 0.0 {
        let dense: Vec<(f64, f64)> = (n_grid[0]..=*n_grid.last().unwrap())
            .map(|n| (n as f64, fit.eval(n as f64)))
            .collect();
        kneedle(&dense, DEFAULT_SENSITIVITY)?.x().map(|x| x as usize)
    } else {
        None
    };
    Ok(NoiseTrend {
        metric: metric.to_string(),
        points,
        fit,
        elbow,
    })
}

/// Grid resolution used for the complexity axis in sample-size analysis.
pub const NOISE_GRID_POINTS: usize = 50;

/// Recommended sample size for random-sampling fronts built from `pool`.
pub fn recommend_sample_size(
    pool: &[SampleRecord],
    metric: &str,
    n_grid: &[usize],
    config: &NoiseConfig,
) -> Result<(usize, NoiseTrend)> {
    let trend = noise_trend(pool, metric, n_grid, NOISE_GRID_POINTS, config)?;
    match trend.elbow {
        Some(n) => Ok((n, trend)),
        None => Err(StatsError::NoElbow(format!(
            "the noise trend over sample sizes {}..{} does not decrease; try a wider sample-size grid",
            n_grid[0],
            n_grid[n_grid.len() - 1]
        ))),
    }
}
