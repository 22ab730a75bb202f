//! Comparing design-space families through EDFs, fronts and noise trends.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{FamilyRecords, HarnessError, Result, RunStore};
use crate::plot::{Plot, Series};
use crate::stats::{
    default_n_grid, edf, log_grid, noise_trend, pareto_front, NoiseConfig, NoiseTrend, SampleRecord, StatsError,
    WeightScheme,
};

/// Error thresholds of the shared EDF grid: `0, 0.005, ..., 1`.
const EDF_GRID_STEPS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Edf,
    Pareto,
    SampleSize,
}

impl FromStr for Statistic {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "edf" => Ok(Statistic::Edf),
            "pareto" => Ok(Statistic::Pareto),
            "samplesize" | "sample_size" => Ok(Statistic::SampleSize),
            _ => Err(format!("unknown statistic `{s}` (expected edf, pareto or samplesize)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareOptions {
    pub metric: String,
    pub statistic: Statistic,
    pub scheme: WeightScheme,
    /// Log-spaced complexity bands in the summary.
    pub bands: usize,
    /// Points of the shared complexity grid.
    pub grid_points: usize,
    pub noise: NoiseConfig,
    /// Sample sizes probed for the noise trend; defaults per family.
    pub n_grid: Option<Vec<usize>>,
}

impl Default for CompareOptions {
    fn default() -> Self {
        CompareOptions {
            metric: "macs".into(),
            statistic: Statistic::Pareto,
            scheme: WeightScheme::Uniform,
            bands: 6,
            grid_points: 50,
            noise: NoiseConfig::default(),
            n_grid: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
    /// Lowest error per family among its records in the band.
    pub best: BTreeMap<String, Option<f64>>,
    pub winner: Option<String>,
}

/// Change of the best family between two consecutive occupied bands.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Crossover {
    pub lo: f64,
    pub hi: f64,
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareOutput {
    /// File name and contents, in writing order.
    pub files: Vec<(String, String)>,
    pub bands: Vec<Band>,
    pub crossovers: Vec<Crossover>,
    pub trends: BTreeMap<String, NoiseTrend>,
}

impl CompareOutput {
    pub fn file(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, c)| c.as_str())
    }

    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        self.files
            .iter()
            .map(|(name, contents)| {
                let path = dir.join(name);
                std::fs::write(&path, contents).map_err(|e| HarnessError::io(&path, e))?;
                Ok(path)
            })
            .collect()
    }
}

fn check(families: &[FamilyRecords], metric: &str) -> Result<()> {
    if families.is_empty() {
        return Err(HarnessError::Run("nothing to compare".into()));
    }
    let mut names = BTreeSet::new();
    for fam in families {
        if !names.insert(fam.name.as_str()) {
            return Err(HarnessError::Run(format!("duplicate family `{}`", fam.name)));
        }
        if fam.records.is_empty() {
            return Err(HarnessError::Run(format!(
                "family `{}` has no records with both cost and accuracy",
                fam.name
            )));
        }
        for r in &fam.records {
            r.metric(metric)?;
        }
    }
    Ok(())
}

fn bands(families: &[FamilyRecords], metric: &str, count: usize) -> Result<Vec<Band>> {
    let values = families.iter().flat_map(|f| f.records.iter()).map(|r| r.metric(metric));
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values {
        let v = v?;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let edges = if hi > lo {
        log_grid(lo, hi, count.max(1) + 1)?
    } else {
        vec![lo, hi]
    };
    let last = edges.len() - 2;
    let mut out = Vec::with_capacity(edges.len() - 1);
    for k in 0..edges.len() - 1 {
        let (blo, bhi) = (edges[k], edges[k + 1]);
        let inside = |c: f64| c >= blo && (c < bhi || (k == last && c <= bhi));
        let mut best = BTreeMap::new();
        let mut winner: Option<(&str, f64)> = None;
        for fam in families {
            let b = fam
                .records
                .iter()
                .filter(|r| r.metric(metric).is_ok_and(inside))
                .map(|r| r.error)
                .fold(None, |acc: Option<f64>, e| Some(acc.map_or(e, |a| a.min(e))));
            if let Some(e) = b {
                if winner.is_none_or(|(_, w)| e < w) {
                    winner = Some((&fam.name, e));
                }
            }
            best.insert(fam.name.clone(), b);
        }
        out.push(Band {
            lo: blo,
            hi: bhi,
            best,
            winner: winner.map(|(n, _)| n.to_string()),
        });
    }
    Ok(out)
}

fn crossovers(bands: &[Band]) -> Vec<Crossover> {
    let mut out = Vec::new();
    let mut prev: Option<&Band> = None;
    for band in bands.iter().filter(|b| b.winner.is_some()) {
        if let Some(p) = prev {
            if p.winner != band.winner {
                out.push(Crossover {
                    lo: p.lo,
                    hi: band.hi,
                    from: p.winner.clone().unwrap_or_default(),
                    to: band.winner.clone().unwrap_or_default(),
                });
            }
        }
        prev = Some(band);
    }
    out
}

fn cell(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn summary_csv(metric: &str, families: &[FamilyRecords], bands: &[Band]) -> String {
    let mut out = format!("# metric={metric}\nband_lo,band_hi,winner");
    for f in families {
        let _ = write!(out, ",{}", f.name);
    }
    out.push('\n');
    for b in bands {
        let _ = write!(out, "{},{},{}", b.lo, b.hi, b.winner.as_deref().unwrap_or(""));
        for f in families {
            let _ = write!(out, ",{}", cell(b.best[&f.name]));
        }
        out.push('\n');
    }
    out
}

fn crossovers_csv(crossovers: &[Crossover]) -> String {
    let mut out = String::from("lo,hi,from,to\n");
    for c in crossovers {
        let _ = writeln!(out, "{},{},{},{}", c.lo, c.hi, c.from, c.to);
    }
    out
}

fn wide_csv(comment: &str, x_name: &str, xs: &[f64], names: &[&str], columns: &[Vec<Option<f64>>]) -> String {
    let mut out = format!("# {comment}\n{x_name}");
    for n in names {
        let _ = write!(out, ",{n}");
    }
    out.push('\n');
    for (i, x) in xs.iter().enumerate() {
        out.push_str(&x.to_string());
        for col in columns {
            let _ = write!(out, ",{}", cell(col[i]));
        }
        out.push('\n');
    }
    out
}

/// Compares `families` on one metric with one statistic.
///
/// All per-family curves are evaluated on grids shared by every family.
pub fn compare_families(families: &[FamilyRecords], opts: &CompareOptions) -> Result<CompareOutput> {
    let metric = opts.metric.as_str();
    check(families, metric)?;
    let names: Vec<&str> = families.iter().map(|f| f.name.as_str()).collect();
    let mut files = Vec::new();
    let mut trends = BTreeMap::new();

    match opts.statistic {
        Statistic::Edf => {
            let xs: Vec<f64> = (0..=EDF_GRID_STEPS).map(|i| i as f64 / EDF_GRID_STEPS as f64).collect();
            let curves = families
                .iter()
                .map(|f| edf(&f.records, &opts.scheme))
                .collect::<std::result::Result<Vec<_>, StatsError>>()?;
            let columns: Vec<Vec<Option<f64>>> =
                curves.iter().map(|c| xs.iter().map(|&x| Some(c.eval(x))).collect()).collect();
            let label = opts.scheme.label();
            files.push((
                "edf.csv".to_string(),
                wide_csv(&format!("scheme={label} metric={metric}"), "error", &xs, &names, &columns),
            ));
            let series: Vec<Series> = families
                .iter()
                .zip(&curves)
                .map(|(f, c)| {
                    let mut pts = vec![(0.0, 0.0)];
                    pts.extend(c.points.iter().map(|p| (p.error, p.fraction)));
                    Series::new(f.name.clone(), pts)
                })
                .collect();
            let svg = Plot::new(format!("error EDF ({label})"), "error", "fraction of models")
                .steps()
                .render(&series);
            files.push(("edf.svg".to_string(), svg));
        }
        Statistic::Pareto => {
            let all: Vec<SampleRecord> = families.iter().flat_map(|f| f.records.iter().cloned()).collect();
            let lo = all.iter().map(|r| r.metric(metric)).try_fold(f64::INFINITY, |a, v| v.map(|v| a.min(v)))?;
            let hi = all.iter().map(|r| r.metric(metric)).try_fold(f64::NEG_INFINITY, |a, v| v.map(|v| a.max(v)))?;
            let xs = if hi > lo { log_grid(lo, hi, opts.grid_points)? } else { vec![lo] };
            let fronts = families
                .iter()
                .map(|f| pareto_front(&f.records, metric))
                .collect::<std::result::Result<Vec<_>, StatsError>>()?;
            let columns: Vec<Vec<Option<f64>>> =
                fronts.iter().map(|c| xs.iter().map(|&x| c.value_at(x)).collect()).collect();
            files.push((
                "pareto.csv".to_string(),
                wide_csv(&format!("metric={metric}"), metric, &xs, &names, &columns),
            ));
            for (f, front) in families.iter().zip(&fronts) {
                files.push((format!("pareto_front_{}.csv", f.name), front.to_csv()));
            }
            let series: Vec<Series> = families
                .iter()
                .zip(&fronts)
                .map(|(f, c)| Series::new(f.name.clone(), c.points.iter().map(|p| (p.complexity, p.error)).collect()))
                .collect();
            let svg = Plot::new("error-complexity front", metric, "error").log_x().steps().render(&series);
            files.push(("pareto.svg".to_string(), svg));
        }
        Statistic::SampleSize => {
            let mut elbows = String::from("family,pool_size,elbow,fit_a,fit_b,residual_rms\n");
            let mut series = Vec::new();
            for f in families {
                let grid = opts.n_grid.clone().unwrap_or_else(|| default_n_grid(f.records.len()));
                let trend = noise_trend(&f.records, metric, &grid, opts.grid_points, &opts.noise)?;
                let _ = writeln!(
                    elbows,
                    "{},{},{},{},{},{}",
                    f.name,
                    f.records.len(),
                    trend.elbow.map(|e| e.to_string()).unwrap_or_default(),
                    trend.fit.a,
                    trend.fit.b,
                    trend.fit.residual_rms
                );
                files.push((format!("samplesize_{}.csv", f.name), trend.to_csv()));
                series.push(Series::new(
                    f.name.clone(),
                    trend.points.iter().map(|p| (p.sample_size as f64, p.mean_std)).collect(),
                ));
                trends.insert(f.name.clone(), trend);
            }
            files.push(("elbows.csv".to_string(), elbows));
            let svg = Plot::new("front noise vs sample size", "sample size", "mean std of front")
                .log_x()
                .render(&series);
            files.push(("samplesize.svg".to_string(), svg));
        }
    }

    let bands = bands(families, metric, opts.bands)?;
    let crossovers = crossovers(&bands);
    files.push(("summary.csv".to_string(), summary_csv(metric, families, &bands)));
    files.push(("crossovers.csv".to_string(), crossovers_csv(&crossovers)));
    Ok(CompareOutput {
        files,
        bands,
        crossovers,
        trends,
    })
}

/// Loads the joined records of every family in `runs` and compares them,
/// writing all outputs to `out`. Family names shared by several runs are
/// prefixed with the run directory name.
pub fn cmd_compare(runs: &[PathBuf], out: &Path, opts: &CompareOptions) -> Result<CompareOutput> {
    let mut loaded: Vec<(String, FamilyRecords)> = Vec::new();
    for run in runs {
        let tag = run
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".into());
        for fam in RunStore::new(run).family_records()? {
            loaded.push((tag.clone(), fam));
        }
    }
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for (_, f) in &loaded {
        *counts.entry(f.name.clone()).or_default() += 1;
    }
    let families: Vec<FamilyRecords> = loaded
        .into_iter()
        .map(|(tag, mut f)| {
            if counts[&f.name] > 1 {
                f.name = format!("{tag}.{}", f.name);
            }
            f
        })
        .collect();
    let output = compare_families(&families, opts)?;
    output.write(out)?;
    Ok(output)
}
