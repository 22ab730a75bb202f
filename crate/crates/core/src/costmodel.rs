//! Analytic complexity counts and per-platform latency estimates.
//!
//! Counting convention: one MAC per multiply-accumulate, biases ignored,
//! batch-norm folded into the preceding convolution, and elementwise
//! additions or activations free. Latency per layer is either a measured
//! kernel-table entry or the roofline bound
//! `max(macs / (peak * utilization), bytes / bandwidth)`, summed over layers
//! at batch size 1.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blockir::{self, ConvRole, IrError, LayerKind, LayerSpec, NetworkSpec, TensorShape};

#[derive(Debug, Error)]
pub enum CostError {
    #[error(transparent)]
    Shape(#[from] IrError),
    #[error("profile `{profile}` has no utilization factor for layer class `{class}`")]
    MissingUtilization { profile: String, class: LayerClass },
    #[error("profile `{profile}`: {reason}")]
    InvalidProfile { profile: String, reason: String },
    #[error("unknown layer class `{0}`")]
    UnknownClass(String),
    #[error("kernel table: {0}")]
    KernelTable(String),
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = CostError> = std::result::Result<T, E>;

/// Layer categories a hardware profile assigns utilization factors to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerClass {
    StandardConv,
    PointwiseConv,
    DepthwiseConv,
    GroupedConv,
    SeUnit,
    FullyConnected,
    /// Global average pooling. Defaults to full utilization when a profile
    /// omits it.
    Pooling,
    /// Residual adds. Defaults to full utilization when a profile omits it.
    Elementwise,
}

impl LayerClass {
    pub const ALL: [LayerClass; 8] = [
        LayerClass::StandardConv,
        LayerClass::PointwiseConv,
        LayerClass::DepthwiseConv,
        LayerClass::GroupedConv,
        LayerClass::SeUnit,
        LayerClass::FullyConnected,
        LayerClass::Pooling,
        LayerClass::Elementwise,
    ];

    pub fn of(layer: &LayerSpec) -> Self {
        match layer.kind {
            LayerKind::Conv { .. } => match layer.conv_role().expect("conv layer") {
                ConvRole::Standard => LayerClass::StandardConv,
                ConvRole::Pointwise => LayerClass::PointwiseConv,
                ConvRole::Depthwise => LayerClass::DepthwiseConv,
                ConvRole::Grouped => LayerClass::GroupedConv,
            },
            LayerKind::SqueezeExcite { .. } => LayerClass::SeUnit,
            LayerKind::FullyConnected { .. } => LayerClass::FullyConnected,
            LayerKind::GlobalAvgPool => LayerClass::Pooling,
            LayerKind::Add { .. } => LayerClass::Elementwise,
        }
    }

    /// Whether a profile must list this class explicitly.
    pub fn requires_utilization(self) -> bool {
        !matches!(self, LayerClass::Pooling | LayerClass::Elementwise)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LayerClass::StandardConv => "standard_conv",
            LayerClass::PointwiseConv => "pointwise_conv",
            LayerClass::DepthwiseConv => "depthwise_conv",
            LayerClass::GroupedConv => "grouped_conv",
            LayerClass::SeUnit => "se_unit",
            LayerClass::FullyConnected => "fully_connected",
            LayerClass::Pooling => "pooling",
            LayerClass::Elementwise => "elementwise",
        }
    }
}

impl fmt::Display for LayerClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LayerClass {
    type Err = CostError;

    fn from_str(s: &str) -> Result<Self> {
        LayerClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| CostError::UnknownClass(s.to_string()))
    }
}

/// Counts for a single layer. `bytes_moved` is in elements; multiply by the
/// profile's `bytes_per_element` for bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LayerCost {
    pub macs: u64,
    pub params: u64,
    pub output_activations: u64,
    pub bytes_moved: u64,
}

impl std::ops::Add for LayerCost {
    type Output = LayerCost;

    fn add(self, rhs: LayerCost) -> LayerCost {
        LayerCost {
            macs: self.macs + rhs.macs,
            params: self.params + rhs.params,
            output_activations: self.output_activations + rhs.output_activations,
            bytes_moved: self.bytes_moved + rhs.bytes_moved,
        }
    }
}

impl std::iter::Sum for LayerCost {
    fn sum<I: Iterator<Item = LayerCost>>(iter: I) -> Self {
        iter.fold(LayerCost::default(), |a, b| a + b)
    }
}

/// Counts one layer applied to `input`.
pub fn layer_cost(layer: &LayerSpec, input: TensorShape) -> Result<LayerCost> {
    let output = blockir::output_shape(layer, input)?;
    let in_elems = input.elements();
    let out_elems = output.elements();
    let (macs, params, inputs_read) = match layer.kind {
        LayerKind::Conv {
            kernel_size,
            in_channels,
            out_channels,
            groups,
            ..
        } => {
            let params = kernel_size as u64 * kernel_size as u64 * (in_channels / groups) as u64 * out_channels as u64;
            (output.pixels() * params, params, in_elems)
        }
        LayerKind::SqueezeExcite {
            channels,
            reduction,
        } => {
            let c = channels as u64;
            let fc = 2 * c * (c / reduction as u64);
            // squeeze pass + rescale multiply, plus the two dense layers
            (fc + 2 * input.pixels() * c, fc, in_elems)
        }
        LayerKind::GlobalAvgPool => (in_elems, 0, in_elems),
        LayerKind::FullyConnected {
            in_features,
            out_features,
        } => {
            let p = in_features as u64 * out_features as u64;
            (p, p, in_elems)
        }
        // reads the branch output and the skip tensor
        LayerKind::Add { .. } => (0, 0, 2 * in_elems),
    };
    Ok(LayerCost {
        macs,
        params,
        output_activations: out_elems,
        bytes_moved: params + inputs_read + out_elems,
    })
}

/// `1/C_out + 1/K^2`: the MAC ratio of a depthwise + pointwise pair to the
/// standard convolution it replaces (equal input and output channels).
pub fn dwsep_reduction_factor(c_out: u32, kernel_size: u32) -> f64 {
    let k2 = kernel_size as u64 * kernel_size as u64;
    (k2 + c_out as u64) as f64 / (c_out as u64 * k2) as f64
}

/// Canonical layer signature used to key kernel latency tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct KernelSignature {
    pub layer_class: LayerClass,
    pub kernel_size: u32,
    pub stride: u32,
    pub in_channels: u32,
    pub out_channels: u32,
    /// Group count for convolutions; the reduction ratio for SE units.
    pub groups: u32,
    pub height: u32,
    pub width: u32,
}

impl KernelSignature {
    pub fn of(layer: &LayerSpec, input: TensorShape) -> Self {
        let (kernel_size, stride, in_channels, out_channels, groups) = match layer.kind {
            LayerKind::Conv {
                kernel_size,
                stride,
                in_channels,
                out_channels,
                groups,
            } => (kernel_size, stride, in_channels, out_channels, groups),
            LayerKind::SqueezeExcite {
                channels,
                reduction,
            } => (1, 1, channels, channels, reduction),
            LayerKind::FullyConnected {
                in_features,
                out_features,
            } => (1, 1, in_features, out_features, 1),
            LayerKind::GlobalAvgPool | LayerKind::Add { .. } => (1, 1, input.channels, input.channels, 1),
        };
        KernelSignature {
            layer_class: LayerClass::of(layer),
            kernel_size,
            stride,
            in_channels,
            out_channels,
            groups,
            height: input.height,
            width: input.width,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct KernelRow {
    layer_class: String,
    kernel_size: u32,
    stride: u32,
    in_channels: u32,
    out_channels: u32,
    groups: u32,
    height: u32,
    width: u32,
    latency_seconds: f64,
}

/// Measured per-kernel latencies.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KernelTable {
    entries: BTreeMap<KernelSignature, f64>,
}

impl KernelTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, signature: KernelSignature, seconds: f64) {
        self.entries.insert(signature, seconds);
    }

    pub fn get(&self, signature: &KernelSignature) -> Option<f64> {
        self.entries.get(signature).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Parses CSV with the signature columns plus `latency_seconds`.
    pub fn from_csv<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut table = KernelTable::new();
        let mut rdr = csv::Reader::from_reader(reader);
        for (line, row) in rdr.deserialize::<KernelRow>().enumerate() {
            let row = row.map_err(|e| CostError::KernelTable(e.to_string()))?;
            if !(row.latency_seconds > 0.0 && row.latency_seconds.is_finite()) {
                return Err(CostError::KernelTable(format!(
                    "row {}: latency_seconds must be positive",
                    line + 1
                )));
            }
            let sig = KernelSignature {
                layer_class: row.layer_class.parse()?,
                kernel_size: row.kernel_size,
                stride: row.stride,
                in_channels: row.in_channels,
                out_channels: row.out_channels,
                groups: row.groups,
                height: row.height,
                width: row.width,
            };
            table.insert(sig, row.latency_seconds);
        }
        Ok(table)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for (s, &t) in &self.entries {
            w.serialize(KernelRow {
                layer_class: s.layer_class.to_string(),
                kernel_size: s.kernel_size,
                stride: s.stride,
                in_channels: s.in_channels,
                out_channels: s.out_channels,
                groups: s.groups,
                height: s.height,
                width: s.width,
                latency_seconds: t,
            })
            .expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf8 csv")
    }
}

/// A platform description for roofline latency estimation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardwareProfile {
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub peak_macs_per_second: f64,
    /// Bytes per second.
    pub memory_bandwidth: f64,
    pub bytes_per_element: u32,
    pub utilization: BTreeMap<LayerClass, f64>,
    /// CSV kernel table, relative to the profile file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_table_file: Option<String>,
    #[serde(skip)]
    pub kernel_table: KernelTable,
}

impl HardwareProfile {
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| {
            Err(CostError::InvalidProfile {
                profile: self.name.clone(),
                reason,
            })
        };
        if self.name.is_empty() {
            return bad("name must not be empty".into());
        }
        if !(self.peak_macs_per_second > 0.0 && self.peak_macs_per_second.is_finite()) {
            return bad("peak_macs_per_second must be positive".into());
        }
        if !(self.memory_bandwidth > 0.0 && self.memory_bandwidth.is_finite()) {
            return bad("memory_bandwidth must be positive".into());
        }
        if self.bytes_per_element == 0 {
            return bad("bytes_per_element must be positive".into());
        }
        for (class, &u) in &self.utilization {
            if !(u > 0.0 && u <= 1.0) {
                return bad(format!("utilization for {class} is {u}, expected (0, 1]"));
            }
        }
        Ok(())
    }

    pub fn utilization_for(&self, class: LayerClass) -> Result<f64> {
        match self.utilization.get(&class) {
            Some(&u) => Ok(u),
            None if !class.requires_utilization() => Ok(1.0),
            None => Err(CostError::MissingUtilization {
                profile: self.name.clone(),
                class,
            }),
        }
    }

    /// Parses a profile from TOML or JSON text (JSON when it starts with `{`).
    pub fn parse(text: &str) -> Result<Self> {
        let parsed: std::result::Result<HardwareProfile, String> = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| e.to_string())
        } else {
            toml::from_str(text).map_err(|e| e.to_string())
        };
        let profile = parsed.map_err(|reason| CostError::InvalidProfile {
            profile: "<unparsed>".into(),
            reason,
        })?;
        profile.validate()?;
        Ok(profile)
    }

    /// Loads a profile file and its kernel table, if it names one.
    pub fn load(path: &Path) -> Result<Self> {
        let io = |source| CostError::Io {
            path: path.display().to_string(),
            source,
        };
        let text = std::fs::read_to_string(path).map_err(io)?;
        let mut profile = Self::parse(&text)?;
        if let Some(table) = &profile.kernel_table_file {
            let table_path = path.parent().unwrap_or(Path::new(".")).join(table);
            let file = std::fs::File::open(&table_path).map_err(|source| CostError::Io {
                path: table_path.display().to_string(),
                source,
            })?;
            profile.kernel_table = KernelTable::from_csv(file)?;
        }
        Ok(profile)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("profile serializes")
    }
}

/// Where a layer's latency came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatencySource {
    KernelTable,
    Roofline,
}

/// Roofline time of one layer: the slower of compute and memory traffic.
pub fn roofline_seconds(cost: &LayerCost, class: LayerClass, profile: &HardwareProfile) -> Result<f64> {
    let utilization = profile.utilization_for(class)?;
    let compute = cost.macs as f64 / (profile.peak_macs_per_second * utilization);
    let memory = (cost.bytes_moved * profile.bytes_per_element as u64) as f64 / profile.memory_bandwidth;
    Ok(compute.max(memory))
}

pub fn layer_latency(layer: &LayerSpec, input: TensorShape, profile: &HardwareProfile) -> Result<(f64, LatencySource)> {
    if !profile.kernel_table.is_empty() {
        if let Some(t) = profile.kernel_table.get(&KernelSignature::of(layer, input)) {
            return Ok((t, LatencySource::KernelTable));
        }
    }
    let cost = layer_cost(layer, input)?;
    Ok((roofline_seconds(&cost, LayerClass::of(layer), profile)?, LatencySource::Roofline))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LatencyEstimate {
    pub seconds: f64,
    pub table_hits: usize,
    pub roofline_layers: usize,
}

/// Batch-1 latency of `net` on `profile`, summed over layers.
pub fn estimate_latency(net: &NetworkSpec, profile: &HardwareProfile) -> Result<LatencyEstimate> {
    let mut est = LatencyEstimate::default();
    for layer in &net.layers {
        let (t, source) = layer_latency(&layer.spec, layer.input, profile)?;
        est.seconds += t;
        match source {
            LatencySource::KernelTable => est.table_hits += 1,
            LatencySource::Roofline => est.roofline_layers += 1,
        }
    }
    Ok(est)
}

/// Complexity and latency summary of one network.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CostReport {
    pub macs: u64,
    pub params: u64,
    pub activations: u64,
    /// Seconds per profile name.
    pub latency: BTreeMap<String, f64>,
    /// Layers answered by a kernel table, per profile.
    pub table_hits: BTreeMap<String, usize>,
}

/// Sums layer costs over `net`.
pub fn network_totals(net: &NetworkSpec) -> Result<LayerCost> {
    net.layers.iter().map(|l| layer_cost(&l.spec, l.input)).sum()
}

pub fn network_cost(net: &NetworkSpec, profiles: &[HardwareProfile]) -> Result<CostReport> {
    let totals = network_totals(net)?;
    let mut report = CostReport {
        macs: totals.macs,
        params: totals.params,
        activations: totals.output_activations,
        ..CostReport::default()
    };
    for profile in profiles {
        let est = estimate_latency(net, profile)?;
        report.latency.insert(profile.name.clone(), est.seconds);
        report.table_hits.insert(profile.name.clone(), est.table_hits);
    }
    Ok(report)
}

fn profile(name: &str, description: &str, peak: f64, bandwidth: f64, bytes: u32, util: [f64; 6]) -> HardwareProfile {
    let classes = [
        LayerClass::StandardConv,
        LayerClass::PointwiseConv,
        LayerClass::DepthwiseConv,
        LayerClass::GroupedConv,
        LayerClass::SeUnit,
        LayerClass::FullyConnected,
    ];
    HardwareProfile {
        name: name.to_string(),
        description: description.to_string(),
        peak_macs_per_second: peak,
        memory_bandwidth: bandwidth,
        bytes_per_element: bytes,
        utilization: classes.into_iter().zip(util).collect(),
        kernel_table_file: None,
        kernel_table: KernelTable::new(),
    }
}

/// Illustrative profiles named after common deployment targets.
///
/// The numbers are plausible orders of magnitude chosen so the roofline
/// model expresses the qualitative behaviour of each platform class. They
/// are not measurements of any device.
pub fn bundled_profiles() -> Vec<HardwareProfile> {
    // utilization order: standard, pointwise, depthwise, grouped, se, fc
    vec![
        profile(
            "mobile_cpu",
            "illustrative: big-core phone CPU, fp32, compute bound",
            2.0e10,
            2.0e10,
            4,
            [0.55, 0.6, 0.5, 0.35, 0.3, 0.5],
        ),
        profile(
            "mobile_gpu",
            "illustrative: phone GPU, fp16",
            6.0e10,
            1.5e10,
            2,
            [0.6, 0.6, 0.35, 0.3, 0.2, 0.4],
        ),
        profile(
            "vpu",
            "illustrative: USB vision accelerator, fp16, memory bound on low-reuse kernels",
            2.0e11,
            3.0e9,
            2,
            [0.8, 0.6, 0.1, 0.25, 0.1, 0.5],
        ),
        profile(
            "embedded_gpu",
            "illustrative: small embedded GPU with an optimizing runtime, fp16",
            1.2e11,
            6.0e9,
            2,
            [0.8, 0.6, 0.12, 0.25, 0.08, 0.5],
        ),
        profile(
            "server_gpu",
            "illustrative: datacenter GPU at batch size 1, fp32",
            1.5e13,
            9.0e11,
            4,
            [0.7, 0.5, 0.05, 0.15, 0.05, 0.3],
        ),
    ]
}

/// Looks up a bundled profile by name.
pub fn bundled_profile(name: &str) -> Option<HardwareProfile> {
    bundled_profiles().into_iter().find(|p| p.name == name)
}
