//! Layer-level network IR and the building-block templates under comparison.
//!
//! A [`NetworkSpec`] is a flat list of [`LayerSpec`]s with every input and
//! output shape resolved: a stride-2 stem convolution, four stages of
//! identical blocks and a pooling + fully-connected head. There are no
//! weights here; the IR only carries what the cost model and an external
//! trainer need to agree on the architecture.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::designspace::DesignSpaceParams;

/// Version of the JSON layout written by [`NetworkSpec::to_json`].
pub const SCHEMA_VERSION: u32 = 1;

/// Number of stages every network is laid out over.
pub const NUM_STAGES: usize = 4;

/// Smallest input side length that survives the stem and four stage halvings.
pub const MIN_INPUT_RESOLUTION: u32 = 1 << (NUM_STAGES + 1);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IrError {
    #[error("tensor shape {0}x{1}x{2} has a zero dimension")]
    EmptyShape(u32, u32, u32),
    #[error("layer {index} ({layer}): {reason}")]
    InvalidLayer {
        index: usize,
        layer: String,
        reason: String,
    },
    #[error("layer {index} ({layer}) expects {expected} input channels, got {found}")]
    ChannelMismatch {
        index: usize,
        layer: String,
        expected: u32,
        found: u32,
    },
    #[error("layer {index}: residual add joins {left} with {right}")]
    ResidualMismatch {
        index: usize,
        left: TensorShape,
        right: TensorShape,
    },
    #[error("invalid block template: {0}")]
    InvalidTemplate(String),
    #[error("input {height}x{width} is too small for the stem plus {NUM_STAGES} stride-2 stages (need at least {MIN_INPUT_RESOLUTION})")]
    ResolutionTooSmall { height: u32, width: u32 },
    #[error("a network needs exactly {NUM_STAGES} stages, got {0}")]
    StageCount(usize),
    #[error("stage {index}: {reason}")]
    InvalidStage { index: usize, reason: String },
    #[error("stored shapes disagree with shape inference at layer {0}")]
    StaleShapes(usize),
    #[error("unsupported schema version {found} (expected {SCHEMA_VERSION})")]
    SchemaVersion { found: u32 },
    #[error("malformed network spec: {0}")]
    Parse(String),
}

pub type Result<T, E = IrError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TensorShape {
    pub height: u32,
    pub width: u32,
    pub channels: u32,
}

impl TensorShape {
    pub fn new(height: u32, width: u32, channels: u32) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(IrError::EmptyShape(height, width, channels));
        }
        Ok(TensorShape {
            height,
            width,
            channels,
        })
    }

    pub fn square(side: u32, channels: u32) -> Result<Self> {
        Self::new(side, side, channels)
    }

    /// Number of spatial positions, `H * W`.
    pub fn pixels(&self) -> u64 {
        self.height as u64 * self.width as u64
    }

    pub fn elements(&self) -> u64 {
        self.pixels() * self.channels as u64
    }
}

impl fmt::Display for TensorShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    None,
    Relu,
    Sigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerKind {
    /// 2-D convolution with "same" padding and no bias.
    Conv {
        kernel_size: u32,
        stride: u32,
        in_channels: u32,
        out_channels: u32,
        groups: u32,
    },
    /// Squeeze-and-excitation unit: global pooling, `C -> C/r -> C` gating
    /// and a channel-wise rescale of the input.
    SqueezeExcite { channels: u32, reduction: u32 },
    GlobalAvgPool,
    /// Dense layer over the flattened input.
    FullyConnected { in_features: u32, out_features: u32 },
    /// Residual addition. The skip input is the input of the layer `span`
    /// positions before this one.
    Add { span: u32 },
}

/// Which flavour of convolution a `Conv` layer is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConvRole {
    Standard,
    Pointwise,
    Depthwise,
    Grouped,
}

/// Classifies a convolution by its kernel and grouping.
pub fn conv_role(kernel_size: u32, in_channels: u32, out_channels: u32, groups: u32) -> ConvRole {
    if groups == 1 {
        if kernel_size == 1 {
            ConvRole::Pointwise
        } else {
            ConvRole::Standard
        }
    } else if groups == in_channels && out_channels.is_multiple_of(in_channels) {
        ConvRole::Depthwise
    } else {
        ConvRole::Grouped
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerSpec {
    #[serde(flatten)]
    pub kind: LayerKind,
    #[serde(default)]
    pub activation: Activation,
}

impl LayerSpec {
    pub fn conv(
        kernel_size: u32,
        stride: u32,
        in_channels: u32,
        out_channels: u32,
        groups: u32,
        activation: Activation,
    ) -> Self {
        LayerSpec {
            kind: LayerKind::Conv {
                kernel_size,
                stride,
                in_channels,
                out_channels,
                groups,
            },
            activation,
        }
    }

    pub fn pointwise(in_channels: u32, out_channels: u32, activation: Activation) -> Self {
        Self::conv(1, 1, in_channels, out_channels, 1, activation)
    }

    pub fn depthwise(kernel_size: u32, stride: u32, channels: u32, activation: Activation) -> Self {
        Self::conv(kernel_size, stride, channels, channels, channels, activation)
    }

    pub fn squeeze_excite(channels: u32, reduction: u32) -> Self {
        LayerSpec {
            kind: LayerKind::SqueezeExcite {
                channels,
                reduction,
            },
            activation: Activation::None,
        }
    }

    pub fn global_avg_pool() -> Self {
        LayerSpec {
            kind: LayerKind::GlobalAvgPool,
            activation: Activation::None,
        }
    }

    pub fn fully_connected(in_features: u32, out_features: u32, activation: Activation) -> Self {
        LayerSpec {
            kind: LayerKind::FullyConnected {
                in_features,
                out_features,
            },
            activation,
        }
    }

    pub fn add(span: u32) -> Self {
        LayerSpec {
            kind: LayerKind::Add { span },
            activation: Activation::None,
        }
    }

    /// `Some(role)` for convolutions.
    pub fn conv_role(&self) -> Option<ConvRole> {
        match self.kind {
            LayerKind::Conv {
                kernel_size,
                in_channels,
                out_channels,
                groups,
                ..
            } => Some(conv_role(kernel_size, in_channels, out_channels, groups)),
            _ => None,
        }
    }

    /// Checks the layer's own structural invariants, independent of its input.
    pub fn validate(&self, index: usize) -> Result<()> {
        let fail = |reason: String| IrError::InvalidLayer {
            index,
            layer: self.to_string(),
            reason,
        };
        match self.kind {
            LayerKind::Conv {
                kernel_size,
                stride,
                in_channels,
                out_channels,
                groups,
            } => {
                if kernel_size == 0 || kernel_size % 2 == 0 {
                    return Err(fail(format!("kernel size {kernel_size} must be odd and positive")));
                }
                if stride != 1 && stride != 2 {
                    return Err(fail(format!("stride {stride} must be 1 or 2")));
                }
                if in_channels == 0 || out_channels == 0 || groups == 0 {
                    return Err(fail("channel and group counts must be positive".into()));
                }
                if in_channels % groups != 0 || out_channels % groups != 0 {
                    return Err(fail(format!(
                        "{groups} groups do not divide {in_channels} input / {out_channels} output channels"
                    )));
                }
            }
            LayerKind::SqueezeExcite {
                channels,
                reduction,
            } => {
                if channels == 0 || reduction == 0 {
                    return Err(fail("channels and reduction ratio must be positive".into()));
                }
                if channels % reduction != 0 {
                    return Err(fail(format!(
                        "reduction ratio {reduction} does not divide {channels} channels"
                    )));
                }
            }
            LayerKind::FullyConnected {
                in_features,
                out_features,
            } => {
                if in_features == 0 || out_features == 0 {
                    return Err(fail("feature counts must be positive".into()));
                }
            }
            LayerKind::Add { span } => {
                if span == 0 {
                    return Err(fail("residual span must be at least one layer".into()));
                }
            }
            LayerKind::GlobalAvgPool => {}
        }
        Ok(())
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            LayerKind::Conv {
                kernel_size: k,
                stride,
                in_channels,
                out_channels,
                groups,
            } => {
                let tag = match conv_role(k, in_channels, out_channels, groups) {
                    ConvRole::Pointwise => "PW".to_string(),
                    ConvRole::Depthwise => format!("DW {k}x{k}"),
                    ConvRole::Standard => format!("Conv {k}x{k}"),
                    ConvRole::Grouped => format!("GConv {k}x{k}"),
                };
                write!(f, "{tag} {in_channels}->{out_channels}")?;
                if groups != 1 {
                    write!(f, " g={groups}")?;
                }
                if stride != 1 {
                    write!(f, " s={stride}")?;
                }
            }
            LayerKind::SqueezeExcite {
                channels,
                reduction,
            } => write!(f, "SE {channels} r={reduction}")?,
            LayerKind::GlobalAvgPool => write!(f, "GAP")?,
            LayerKind::FullyConnected {
                in_features,
                out_features,
            } => write!(f, "FC {in_features}->{out_features}")?,
            LayerKind::Add { span } => write!(f, "Add span={span}")?,
        }
        match self.activation {
            Activation::None => Ok(()),
            Activation::Relu => write!(f, " relu"),
            Activation::Sigmoid => write!(f, " sigmoid"),
        }
    }
}

/// Output shape of a single layer, checking that `input` is acceptable.
fn infer_output(layer: &LayerSpec, index: usize, input: TensorShape) -> Result<TensorShape> {
    let mismatch = |expected: u32| IrError::ChannelMismatch {
        index,
        layer: layer.to_string(),
        expected,
        found: input.channels,
    };
    match layer.kind {
        LayerKind::Conv {
            stride,
            in_channels,
            out_channels,
            ..
        } => {
            if input.channels != in_channels {
                return Err(mismatch(in_channels));
            }
            Ok(TensorShape {
                height: input.height.div_ceil(stride),
                width: input.width.div_ceil(stride),
                channels: out_channels,
            })
        }
        LayerKind::SqueezeExcite { channels, .. } => {
            if input.channels != channels {
                return Err(mismatch(channels));
            }
            Ok(input)
        }
        LayerKind::GlobalAvgPool => Ok(TensorShape {
            height: 1,
            width: 1,
            channels: input.channels,
        }),
        LayerKind::FullyConnected {
            in_features,
            out_features,
        } => {
            if input.elements() != in_features as u64 {
                return Err(IrError::ChannelMismatch {
                    index,
                    layer: layer.to_string(),
                    expected: in_features,
                    found: input.elements().min(u32::MAX as u64) as u32,
                });
            }
            Ok(TensorShape {
                height: 1,
                width: 1,
                channels: out_features,
            })
        }
        LayerKind::Add { .. } => Ok(input),
    }
}

/// Output shape of one layer applied to `input`.
///
/// Residual adds are shape-preserving here; checking the skip input needs
/// the surrounding layer list, see [`propagate_shapes`].
pub fn output_shape(layer: &LayerSpec, input: TensorShape) -> Result<TensorShape> {
    TensorShape::new(input.height, input.width, input.channels)?;
    layer.validate(0)?;
    infer_output(layer, 0, input)
}

/// Infers `(input, output)` shapes for every layer.
///
/// Convolutions use "same" padding, so a stride-2 layer maps a side of
/// length `n` to `ceil(n / 2)`.
pub fn propagate_shapes(layers: &[LayerSpec], input: TensorShape) -> Result<Vec<(TensorShape, TensorShape)>> {
    TensorShape::new(input.height, input.width, input.channels)?;
    let mut shapes: Vec<(TensorShape, TensorShape)> = Vec::with_capacity(layers.len());
    let mut current = input;
    for (index, layer) in layers.iter().enumerate() {
        layer.validate(index)?;
        if let LayerKind::Add { span } = layer.kind {
            let span = span as usize;
            if span > index {
                return Err(IrError::InvalidLayer {
                    index,
                    layer: layer.to_string(),
                    reason: format!("residual span {span} reaches before the first layer"),
                });
            }
            let skip = shapes[index - span].0;
            if skip != current {
                return Err(IrError::ResidualMismatch {
                    index,
                    left: skip,
                    right: current,
                });
            }
        }
        let output = infer_output(layer, index, current)?;
        shapes.push((current, output));
        current = output;
    }
    Ok(shapes)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ConvKind {
    Standard,
    DepthwiseSeparable,
    Grouped { groups: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Bottleneck {
    /// Single spatial convolution; no restoring pointwise layer.
    None,
    /// Reduce to `ratio * out_channels`, convolve, restore.
    Regular { ratio: f64 },
    /// Expand to `expansion * in_channels`, convolve, project.
    Inverted { expansion: f64 },
}

impl Bottleneck {
    pub const DEFAULT_RATIO: f64 = 0.25;
    pub const DEFAULT_EXPANSION: f64 = 6.0;

    pub fn regular() -> Self {
        Bottleneck::Regular {
            ratio: Self::DEFAULT_RATIO,
        }
    }

    pub fn inverted() -> Self {
        Bottleneck::Inverted {
            expansion: Self::DEFAULT_EXPANSION,
        }
    }
}

fn default_se_ratio() -> u32 {
    4
}

fn default_kernel_size() -> u32 {
    3
}

/// A building-block family: convolution type, bottleneck structure and
/// optional squeeze-and-excitation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockTemplate {
    pub conv: ConvKind,
    pub bottleneck: Bottleneck,
    #[serde(default)]
    pub use_se: bool,
    #[serde(default = "default_se_ratio")]
    pub se_ratio: u32,
    #[serde(default = "default_kernel_size")]
    pub kernel_size: u32,
}

impl BlockTemplate {
    pub fn new(conv: ConvKind, bottleneck: Bottleneck) -> Self {
        BlockTemplate {
            conv,
            bottleneck,
            use_se: false,
            se_ratio: default_se_ratio(),
            kernel_size: default_kernel_size(),
        }
    }

    pub fn standard() -> Self {
        Self::new(ConvKind::Standard, Bottleneck::None)
    }

    pub fn depthwise_separable() -> Self {
        Self::new(ConvKind::DepthwiseSeparable, Bottleneck::None)
    }

    pub fn grouped(groups: u32) -> Self {
        Self::new(ConvKind::Grouped { groups }, Bottleneck::None)
    }

    pub fn with_bottleneck(mut self, bottleneck: Bottleneck) -> Self {
        self.bottleneck = bottleneck;
        self
    }

    pub fn with_se(mut self, ratio: u32) -> Self {
        self.use_se = true;
        self.se_ratio = ratio;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(IrError::InvalidTemplate(m));
        if let ConvKind::Grouped { groups } = self.conv {
            if groups < 2 {
                return bad(format!("grouped convolution needs at least 2 groups, got {groups}"));
            }
        }
        match self.bottleneck {
            Bottleneck::Regular { ratio } if !(ratio > 0.0 && ratio <= 1.0) => {
                return bad(format!("bottleneck ratio {ratio} must lie in (0, 1]"));
            }
            Bottleneck::Inverted { expansion } if !(expansion >= 1.0 && expansion.is_finite()) => {
                return bad(format!("expansion factor {expansion} must be at least 1"));
            }
            _ => {}
        }
        if self.use_se && self.se_ratio == 0 {
            return bad("squeeze-excitation ratio must be positive".into());
        }
        if self.kernel_size == 0 || self.kernel_size.is_multiple_of(2) {
            return bad(format!("kernel size {} must be odd", self.kernel_size));
        }
        Ok(())
    }
}

/// Scales `channels` and rounds to the nearest positive multiple of `divisor`.
fn scaled_channels(channels: u32, factor: f64, divisor: u32) -> u32 {
    let units = (channels as f64 * factor / divisor as f64).round() as u32;
    units.max(1) * divisor
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Expands one block of `template` into its layer sequence.
///
/// Layer order follows the MBConv drawing: optional pointwise expand or
/// reduce, the spatial convolution, the optional SE unit, the restoring
/// pointwise convolution, and a residual add when `stride == 1` and the
/// channel count is unchanged.
pub fn instantiate_block(
    template: &BlockTemplate,
    in_ch: u32,
    out_ch: u32,
    stride: u32,
    input_shape: TensorShape,
) -> Result<Vec<LayerSpec>> {
    template.validate()?;
    if in_ch == 0 || out_ch == 0 {
        return Err(IrError::InvalidTemplate("block channel counts must be positive".into()));
    }
    if stride != 1 && stride != 2 {
        return Err(IrError::InvalidTemplate(format!("block stride {stride} must be 1 or 2")));
    }
    if input_shape.channels != in_ch {
        return Err(IrError::ChannelMismatch {
            index: 0,
            layer: "block input".into(),
            expected: in_ch,
            found: input_shape.channels,
        });
    }

    let k = template.kernel_size;
    // Bottleneck widths must suit the grouped conv and the SE reduction.
    let groups = match template.conv {
        ConvKind::Grouped { groups } => groups,
        _ => 1,
    };
    let se = if template.use_se { template.se_ratio } else { 1 };
    let divisor = groups / gcd(groups, se) * se;
    let mid = match template.bottleneck {
        Bottleneck::None => None,
        Bottleneck::Regular { ratio } => Some(scaled_channels(out_ch, ratio, divisor)),
        Bottleneck::Inverted { expansion } => Some(scaled_channels(in_ch, expansion, divisor)),
    };

    let mut layers = Vec::with_capacity(5);
    let spatial_in = match mid {
        Some(mid) => {
            layers.push(LayerSpec::pointwise(in_ch, mid, Activation::Relu));
            mid
        }
        None => in_ch,
    };
    let spatial_out = match (mid, template.conv) {
        (Some(mid), _) => mid,
        (None, ConvKind::DepthwiseSeparable) => in_ch,
        (None, _) => out_ch,
    };
    layers.push(match template.conv {
        ConvKind::Standard => LayerSpec::conv(k, stride, spatial_in, spatial_out, 1, Activation::Relu),
        ConvKind::Grouped { groups } => {
            LayerSpec::conv(k, stride, spatial_in, spatial_out, groups, Activation::Relu)
        }
        ConvKind::DepthwiseSeparable => LayerSpec::depthwise(k, stride, spatial_in, Activation::Relu),
    });
    if template.use_se {
        layers.push(LayerSpec::squeeze_excite(spatial_out, template.se_ratio));
    }
    if mid.is_some() {
        layers.push(LayerSpec::pointwise(spatial_out, out_ch, Activation::None));
    } else if template.conv == ConvKind::DepthwiseSeparable {
        layers.push(LayerSpec::pointwise(spatial_out, out_ch, Activation::Relu));
    }
    if stride == 1 && in_ch == out_ch {
        layers.push(LayerSpec::add(layers.len() as u32));
    }

    propagate_shapes(&layers, input_shape)?;
    Ok(layers)
}

/// Width and number of blocks of one stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Stage {
    pub width: u32,
    pub depth: u32,
}

impl Stage {
    pub fn new(width: u32, depth: u32) -> Self {
        Stage { width, depth }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedLayer {
    #[serde(flatten)]
    pub spec: LayerSpec,
    pub input: TensorShape,
    pub output: TensorShape,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkMetadata {
    pub template: BlockTemplate,
    pub stages: Vec<Stage>,
    pub num_classes: u32,
    /// Design-space parameters the stage layout was derived from, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<DesignSpaceParams>,
}

/// A complete network with resolved shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub schema_version: u32,
    pub input: TensorShape,
    pub layers: Vec<ResolvedLayer>,
    /// Index of the first layer of each stage.
    pub stage_boundaries: [usize; NUM_STAGES],
    pub metadata: NetworkMetadata,
}

/// Builds stem, four stages of `template` blocks, and the classifier head.
///
/// The first block of every stage has stride 2 and performs the width
/// change; the remaining blocks are identical stride-1 blocks.
pub fn build_network(
    stages: &[Stage],
    template: &BlockTemplate,
    input: TensorShape,
    num_classes: u32,
) -> Result<NetworkSpec> {
    template.validate()?;
    TensorShape::new(input.height, input.width, input.channels)?;
    if stages.len() != NUM_STAGES {
        return Err(IrError::StageCount(stages.len()));
    }
    for (index, stage) in stages.iter().enumerate() {
        if stage.width == 0 || stage.depth == 0 {
            return Err(IrError::InvalidStage {
                index,
                reason: format!("width {} and depth {} must be positive", stage.width, stage.depth),
            });
        }
    }
    if input.height.min(input.width) < MIN_INPUT_RESOLUTION {
        return Err(IrError::ResolutionTooSmall {
            height: input.height,
            width: input.width,
        });
    }
    if num_classes == 0 {
        return Err(IrError::InvalidTemplate("num_classes must be positive".into()));
    }

    let stem_width = stages[0].width;
    let mut layers = vec![LayerSpec::conv(3, 2, input.channels, stem_width, 1, Activation::Relu)];
    let mut shape = infer_output(&layers[0], 0, input)?;
    let mut boundaries = [0usize; NUM_STAGES];
    let mut width = stem_width;

    for (s, stage) in stages.iter().enumerate() {
        boundaries[s] = layers.len();
        for b in 0..stage.depth {
            let stride = if b == 0 { 2 } else { 1 };
            let block = instantiate_block(template, width, stage.width, stride, shape).map_err(|e| {
                reindex(e, layers.len())
            })?;
            for layer in &block {
                shape = infer_output(layer, layers.len(), shape)?;
                layers.push(*layer);
            }
            width = stage.width;
        }
    }
    layers.push(LayerSpec::global_avg_pool());
    layers.push(LayerSpec::fully_connected(width, num_classes, Activation::None));

    let shapes = propagate_shapes(&layers, input)?;
    let layers = layers
        .into_iter()
        .zip(shapes)
        .map(|(spec, (input, output))| ResolvedLayer { spec, input, output })
        .collect();

    Ok(NetworkSpec {
        schema_version: SCHEMA_VERSION,
        input,
        layers,
        stage_boundaries: boundaries,
        metadata: NetworkMetadata {
            template: *template,
            stages: stages.to_vec(),
            num_classes,
            origin: None,
        },
    })
}

/// Shifts block-relative layer indices in an error to network positions.
fn reindex(err: IrError, offset: usize) -> IrError {
    match err {
        IrError::InvalidLayer { index, layer, reason } => IrError::InvalidLayer {
            index: index + offset,
            layer,
            reason,
        },
        IrError::ChannelMismatch {
            index,
            layer,
            expected,
            found,
        } => IrError::ChannelMismatch {
            index: index + offset,
            layer,
            expected,
            found,
        },
        IrError::ResidualMismatch { index, left, right } => IrError::ResidualMismatch {
            index: index + offset,
            left,
            right,
        },
        other => other,
    }
}

impl NetworkSpec {
    pub fn with_origin(mut self, params: DesignSpaceParams) -> Self {
        self.metadata.origin = Some(params);
        self
    }

    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    /// Total number of blocks across all stages.
    pub fn block_count(&self) -> u32 {
        self.metadata.stages.iter().map(|s| s.depth).sum()
    }

    /// Shape entering the classifier head.
    pub fn final_feature_shape(&self) -> Option<TensorShape> {
        self.layers
            .iter()
            .find(|l| l.spec.kind == LayerKind::GlobalAvgPool)
            .map(|l| l.input)
    }

    /// Re-runs shape inference and checks every stored invariant. Specs
    /// read from disk go through this before they are costed.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(IrError::SchemaVersion {
                found: self.schema_version,
            });
        }
        let specs = self.layer_specs();
        let shapes = propagate_shapes(&specs, self.input)?;
        for (i, (layer, (input, output))) in self.layers.iter().zip(shapes).enumerate() {
            if layer.input != input || layer.output != output {
                return Err(IrError::StaleShapes(i));
            }
        }
        let mut prev = 0;
        for (index, &b) in self.stage_boundaries.iter().enumerate() {
            if b == 0 || b <= prev && index > 0 || b >= self.layers.len() {
                return Err(IrError::InvalidStage {
                    index,
                    reason: format!("boundary {b} out of order or out of range"),
                });
            }
            prev = b;
        }
        if self.metadata.stages.len() != NUM_STAGES {
            return Err(IrError::StageCount(self.metadata.stages.len()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network spec serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| IrError::Parse(e.to_string()))?;
        let version = value
            .get("schema_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| IrError::Parse("missing schema_version".into()))?;
        if version != SCHEMA_VERSION as u64 {
            return Err(IrError::SchemaVersion {
                found: version as u32,
            });
        }
        serde_json::from_value(value).map_err(|e| IrError::Parse(e.to_string()))
    }
}
