//! Sequential architecture model: layers, shapes, validation and parameter counts.
//!
//! An [`Architecture`] is an ordered list of hidden layers applied to an image
//! of shape `height × width × channels`. The classifier head
//! (flatten → dense(`num_classes`) → softmax) is implicit: it is never stored in
//! `layers` and every consumer appends it.
//!
//! Convolutions use valid padding and square kernels; pooling windows are
//! square with stride equal to the window.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

/// Default cap on the number of hidden layers.
pub const MAX_LAYERS: usize = 32;
/// Default cap on the total learnable parameter count (head included).
pub const MAX_PARAMETERS: u64 = 5_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationFn {
    Relu,
    Tanh,
    Sigmoid,
}

impl ActivationFn {
    pub const ALL: [ActivationFn; 3] = [ActivationFn::Relu, ActivationFn::Tanh, ActivationFn::Sigmoid];

    pub fn name(self) -> &'static str {
        match self {
            ActivationFn::Relu => "relu",
            ActivationFn::Tanh => "tanh",
            ActivationFn::Sigmoid => "sigmoid",
        }
    }
}

/// The kind of a hidden layer, without its hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv2d,
    MaxPool,
    Dense,
    Activation,
    Dropout,
}

impl LayerKind {
    pub const ALL: [LayerKind; 5] = [
        LayerKind::Conv2d,
        LayerKind::MaxPool,
        LayerKind::Dense,
        LayerKind::Activation,
        LayerKind::Dropout,
    ];

    /// Conv2D and MaxPool need a spatial input.
    pub fn is_spatial(self) -> bool {
        matches!(self, LayerKind::Conv2d | LayerKind::MaxPool)
    }

    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Conv2d => "conv2d",
            LayerKind::MaxPool => "max_pool",
            LayerKind::Dense => "dense",
            LayerKind::Activation => "activation",
            LayerKind::Dropout => "dropout",
        }
    }
}

/// One hidden layer with its hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    Conv2d { filters: u32, kernel: u32, stride: u32 },
    MaxPool { pool: u32 },
    Dense { units: u32 },
    Activation {
        #[serde(rename = "fn")]
        function: ActivationFn,
    },
    Dropout { rate: f64 },
}

impl LayerSpec {
    pub fn conv(filters: u32, kernel: u32, stride: u32) -> Self {
        LayerSpec::Conv2d { filters, kernel, stride }
    }

    pub fn pool(pool: u32) -> Self {
        LayerSpec::MaxPool { pool }
    }

    pub fn dense(units: u32) -> Self {
        LayerSpec::Dense { units }
    }

    pub fn act(function: ActivationFn) -> Self {
        LayerSpec::Activation { function }
    }

    pub fn relu() -> Self {
        LayerSpec::act(ActivationFn::Relu)
    }

    pub fn dropout(rate: f64) -> Self {
        LayerSpec::Dropout { rate }
    }

    pub fn kind(&self) -> LayerKind {
        match self {
            LayerSpec::Conv2d { .. } => LayerKind::Conv2d,
            LayerSpec::MaxPool { .. } => LayerKind::MaxPool,
            LayerSpec::Dense { .. } => LayerKind::Dense,
            LayerSpec::Activation { .. } => LayerKind::Activation,
            LayerSpec::Dropout { .. } => LayerKind::Dropout,
        }
    }

    /// Hyperparameters are in range: positive integers, dropout rate in (0, 1).
    pub fn params_in_range(&self) -> bool {
        match *self {
            LayerSpec::Conv2d { filters, kernel, stride } => filters > 0 && kernel > 0 && stride > 0,
            LayerSpec::MaxPool { pool } => pool > 0,
            LayerSpec::Dense { units } => units > 0,
            LayerSpec::Activation { .. } => true,
            LayerSpec::Dropout { rate } => rate > 0.0 && rate < 1.0,
        }
    }
}

/// Input image shape, serialized as `[height, width, channels]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[u32; 3]", into = "[u32; 3]")]
pub struct InputShape {
    pub height: u32,
    pub width: u32,
    pub channels: u32,
}

impl InputShape {
    pub fn new(height: u32, width: u32, channels: u32) -> Self {
        InputShape { height, width, channels }
    }

    pub fn size(&self) -> u64 {
        self.height as u64 * self.width as u64 * self.channels as u64
    }
}

impl From<[u32; 3]> for InputShape {
    fn from(v: [u32; 3]) -> Self {
        InputShape::new(v[0], v[1], v[2])
    }
}

impl From<InputShape> for [u32; 3] {
    fn from(s: InputShape) -> Self {
        [s.height, s.width, s.channels]
    }
}

/// Activation shape flowing between layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Shape {
    Spatial([u32; 3]),
    Flat([u64; 1]),
}

impl Shape {
    pub fn spatial(height: u32, width: u32, channels: u32) -> Self {
        Shape::Spatial([height, width, channels])
    }

    pub fn flat(n: u64) -> Self {
        Shape::Flat([n])
    }

    /// Number of elements (product of dimensions).
    pub fn size(&self) -> u64 {
        match *self {
            Shape::Spatial([h, w, c]) => h as u64 * w as u64 * c as u64,
            Shape::Flat([n]) => n,
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Spatial([h, w, c]) => write!(f, "({h},{w},{c})"),
            Shape::Flat([n]) => write!(f, "({n})"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Sampled,
    Ablation,
    Variation,
    Handcrafted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub id: String,
    pub input_shape: InputShape,
    pub num_classes: u32,
    pub layers: Vec<LayerSpec>,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<String>,
    /// Milliseconds since the Unix epoch; zero when unknown.
    #[serde(default)]
    pub created_at: u64,
}

impl Architecture {
    /// A sampled architecture whose id is its structural fingerprint.
    pub fn new(input_shape: InputShape, num_classes: u32, layers: Vec<LayerSpec>) -> Self {
        let mut arch = Architecture {
            id: String::new(),
            input_shape,
            num_classes,
            layers,
            provenance: Provenance::Sampled,
            parent_id: None,
            created_at: 0,
        };
        arch.id = crate::codec::fingerprint_id(&arch);
        arch
    }

    /// Derives a child with different layers; the id is re-fingerprinted.
    pub fn derive(&self, layers: Vec<LayerSpec>, provenance: Provenance) -> Self {
        let mut child = Architecture {
            id: String::new(),
            input_shape: self.input_shape,
            num_classes: self.num_classes,
            layers,
            provenance,
            parent_id: Some(self.id.clone()),
            created_at: self.created_at,
        };
        child.id = crate::codec::fingerprint_id(&child);
        child
    }

    /// Same input, classes and layers (ignores id, provenance and timestamps).
    pub fn same_structure(&self, other: &Architecture) -> bool {
        self.input_shape == other.input_shape
            && self.num_classes == other.num_classes
            && self.layers == other.layers
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
#[serde(tag = "error", rename_all = "snake_case")]
pub enum ShapeError {
    /// A kernel or pool window is larger than the incoming spatial extent.
    #[error("layer {index}: window {window} does not fit spatial extent {height}x{width}")]
    NonPositiveShape { index: usize, window: u32, height: u32, width: u32 },
    #[error("layer {index}: spatial layer after a dense layer")]
    SpatialAfterFlatten { index: usize },
    #[error("layer {index}: hyperparameter out of range")]
    BadParameter { index: usize },
    #[error("input shape and class count must be positive")]
    BadInput,
}

/// Output shape of a single layer applied to `input`.
pub fn layer_output(index: usize, layer: &LayerSpec, input: Shape) -> Result<Shape, ShapeError> {
    if !layer.params_in_range() {
        return Err(ShapeError::BadParameter { index });
    }
    match (*layer, input) {
        (LayerSpec::Conv2d { filters, kernel, stride }, Shape::Spatial([h, w, _])) => {
            if kernel > h || kernel > w {
                return Err(ShapeError::NonPositiveShape { index, window: kernel, height: h, width: w });
            }
            Ok(Shape::spatial((h - kernel) / stride + 1, (w - kernel) / stride + 1, filters))
        }
        (LayerSpec::MaxPool { pool }, Shape::Spatial([h, w, c])) => {
            if pool > h || pool > w {
                return Err(ShapeError::NonPositiveShape { index, window: pool, height: h, width: w });
            }
            Ok(Shape::spatial(h / pool, w / pool, c))
        }
        (LayerSpec::Conv2d { .. } | LayerSpec::MaxPool { .. }, Shape::Flat(_)) => {
            Err(ShapeError::SpatialAfterFlatten { index })
        }
        (LayerSpec::Dense { units }, _) => Ok(Shape::flat(units as u64)),
        (LayerSpec::Activation { .. } | LayerSpec::Dropout { .. }, s) => Ok(s),
    }
}

/// Learnable parameters of one layer given its input shape.
pub fn layer_parameters(layer: &LayerSpec, input: Shape) -> u64 {
    match *layer {
        LayerSpec::Conv2d { filters, kernel, .. } => {
            let c_in = match input {
                Shape::Spatial([_, _, c]) => c as u64,
                Shape::Flat(_) => 0,
            };
            (kernel as u64 * kernel as u64 * c_in + 1) * filters as u64
        }
        LayerSpec::Dense { units } => (input.size() + 1) * units as u64,
        _ => 0,
    }
}

/// Shapes after every hidden layer followed by the head output `(num_classes)`.
pub fn infer_shapes(arch: &Architecture) -> Result<Vec<Shape>, ShapeError> {
    let s = arch.input_shape;
    if s.height == 0 || s.width == 0 || s.channels == 0 || arch.num_classes == 0 {
        return Err(ShapeError::BadInput);
    }
    let mut shapes = Vec::with_capacity(arch.layers.len() + 1);
    let mut current = Shape::spatial(s.height, s.width, s.channels);
    for (i, layer) in arch.layers.iter().enumerate() {
        current = layer_output(i, layer, current)?;
        shapes.push(current);
    }
    shapes.push(Shape::flat(arch.num_classes as u64));
    Ok(shapes)
}

/// Per-layer parameter counts: one entry per hidden layer, then the head.
pub fn parameter_breakdown(arch: &Architecture) -> Result<Vec<u64>, ShapeError> {
    let shapes = infer_shapes(arch)?;
    let s = arch.input_shape;
    let mut incoming = Shape::spatial(s.height, s.width, s.channels);
    let mut counts = Vec::with_capacity(shapes.len());
    for (layer, out) in arch.layers.iter().zip(&shapes) {
        counts.push(layer_parameters(layer, incoming));
        incoming = *out;
    }
    counts.push((incoming.size() + 1) * arch.num_classes as u64);
    Ok(counts)
}

/// Total learnable parameters including the classifier head.
pub fn count_parameters(arch: &Architecture) -> Result<u64, ShapeError> {
    Ok(parameter_breakdown(arch)?.iter().sum())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Limits {
    pub max_layers: usize,
    pub max_parameters: u64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { max_layers: MAX_LAYERS, max_parameters: MAX_PARAMETERS }
    }
}

/// One broken structural rule. Violations are data, not failures.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Violation {
    /// Conv2D or MaxPool somewhere after a Dense layer.
    SpatialAfterDense { index: usize },
    /// Kernel or pool window larger than the incoming spatial extent.
    WindowTooLarge { index: usize, window: u32, extent: u32 },
    AdjacentActivations { index: usize },
    AdjacentDropouts { index: usize },
    TooManyLayers { count: usize, max: usize },
    TooManyParameters { count: u64, max: u64 },
    /// Zero-sized hyperparameter, dropout rate outside (0, 1), or empty input.
    BadParameter { index: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::SpatialAfterDense { index } => {
                write!(f, "layer {index}: conv/pool layers must not follow a dense layer")
            }
            Violation::WindowTooLarge { index, window, extent } => {
                write!(f, "layer {index}: window {window} exceeds spatial extent {extent}")
            }
            Violation::AdjacentActivations { index } => write!(f, "layer {index}: two adjacent activations"),
            Violation::AdjacentDropouts { index } => write!(f, "layer {index}: two adjacent dropouts"),
            Violation::TooManyLayers { count, max } => write!(f, "{count} layers exceeds limit {max}"),
            Violation::TooManyParameters { count, max } => {
                write!(f, "{count} parameters exceeds limit {max}")
            }
            Violation::BadParameter { index } => write!(f, "layer {index}: hyperparameter out of range"),
        }
    }
}

/// [`validate_with`] using the default [`Limits`].
pub fn validate(arch: &Architecture) -> Result<(), Vec<Violation>> {
    validate_with(arch, &Limits::default())
}

/// Checks every structural rule and returns all violations found.
///
/// Once a layer breaks shape inference the downstream shapes are unknown, so
/// window-fit checks after it and the parameter limit are skipped.
pub fn validate_with(arch: &Architecture, limits: &Limits) -> Result<(), Vec<Violation>> {
    let mut violations = Vec::new();
    let s = arch.input_shape;
    let mut shape = if s.height == 0 || s.width == 0 || s.channels == 0 || arch.num_classes == 0 {
        violations.push(Violation::BadParameter { index: 0 });
        None
    } else {
        Some(Shape::spatial(s.height, s.width, s.channels))
    };
    // `None` once an earlier shape failure makes the total unknowable.
    let mut params: Option<u64> = shape.map(|_| 0);
    let mut seen_dense = false;
    let mut prev: Option<LayerKind> = None;

    for (index, layer) in arch.layers.iter().enumerate() {
        let kind = layer.kind();
        if kind == LayerKind::Activation && prev == Some(LayerKind::Activation) {
            violations.push(Violation::AdjacentActivations { index });
        }
        if kind == LayerKind::Dropout && prev == Some(LayerKind::Dropout) {
            violations.push(Violation::AdjacentDropouts { index });
        }
        let in_range = layer.params_in_range();
        if !in_range {
            violations.push(Violation::BadParameter { index });
        }
        if kind.is_spatial() && seen_dense {
            violations.push(Violation::SpatialAfterDense { index });
            shape = None;
        } else if !in_range {
            shape = None;
        }
        match shape {
            Some(input) => match layer_output(index, layer, input) {
                Ok(out) => {
                    params = params.map(|p| p + layer_parameters(layer, input));
                    shape = Some(out);
                }
                Err(ShapeError::NonPositiveShape { window, height, width, .. }) => {
                    violations.push(Violation::WindowTooLarge { index, window, extent: height.min(width) });
                    shape = None;
                }
                Err(_) => shape = None,
            },
            // A dense layer re-establishes a known (flat) shape.
            None => {
                if let (LayerSpec::Dense { units }, true) = (layer, in_range) {
                    shape = Some(Shape::flat(*units as u64));
                }
            }
        }
        if shape.is_none() {
            params = None;
        }
        if kind == LayerKind::Dense {
            seen_dense = true;
        }
        prev = Some(kind);
    }

    if arch.layers.len() > limits.max_layers {
        violations.push(Violation::TooManyLayers { count: arch.layers.len(), max: limits.max_layers });
    }
    if let (Some(out), Some(p)) = (shape, params) {
        let total = p + (out.size() + 1) * arch.num_classes as u64;
        if total > limits.max_parameters {
            violations.push(Violation::TooManyParameters { count: total, max: limits.max_parameters });
        }
    }

    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}
