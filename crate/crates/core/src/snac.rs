//! Sequential architecture chips: one glyph per layer plus the classifier head.
//!
//! Chip height follows the activation size on a bounded log scale:
//! `0.15 + 0.85 * clamp(log10(size) / 6, 0, 1)`.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::arch::{parameter_breakdown, infer_shapes, Architecture, LayerSpec, ShapeError};
use crate::math;

pub const MIN_HEIGHT: f64 = 0.15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChipKind {
    Conv2d,
    MaxPool,
    Dense,
    Activation,
    Dropout,
    Head,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decoration {
    None,
    DottedBorder,
    ReluGlyph,
    TanhGlyph,
    SigmoidGlyph,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnacChip {
    pub kind: ChipKind,
    pub color_key: String,
    pub symbol_key: String,
    pub height: f64,
    pub decoration: Decoration,
    /// Short hyperparameter summary, e.g. `8f 3×3`.
    pub label: String,
    pub params: u64,
    /// Compact parameter count, e.g. `8.3k`.
    pub param_label: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnacChipSequence {
    pub chips: Vec<SnacChip>,
    pub total_params: u64,
    pub total_label: String,
}

fn palette(kind: ChipKind) -> (&'static str, &'static str) {
    match kind {
        ChipKind::Conv2d => ("#4e79a7", "square"),
        ChipKind::MaxPool => ("#f28e2b", "triangle"),
        ChipKind::Dense => ("#59a14f", "circle"),
        ChipKind::Activation => ("#e15759", "wave"),
        ChipKind::Dropout => ("#76b7b2", "cross"),
        ChipKind::Head => ("#9c755f", "star"),
    }
}

/// Bounded-log height for an activation of `size` elements.
pub fn chip_height(size: u64) -> f64 {
    let frac = if size == 0 { 0.0 } else { (math::log10(size as f64) / 6.0).clamp(0.0, 1.0) };
    MIN_HEIGHT + (1.0 - MIN_HEIGHT) * frac
}

/// Compact magnitude: `170`, `8.3k`, `412.8k`, `1.2M`.
pub fn format_compact(n: u64) -> String {
    if n < 1000 {
        return n.to_string();
    }
    let k = n as f64 / 1e3;
    let k_label = format!("{k:.1}");
    if k_label.len() <= 5 {
        // "999.9" and below
        return format!("{k_label}k");
    }
    let m = n as f64 / 1e6;
    let m_label = format!("{m:.1}");
    if m_label.len() <= 5 {
        return format!("{m_label}M");
    }
    format!("{:.1}G", n as f64 / 1e9)
}

fn describe(layer: &LayerSpec) -> (ChipKind, Decoration, String) {
    use crate::arch::ActivationFn;
    match *layer {
        LayerSpec::Conv2d { filters, kernel, stride } => {
            let mut label = format!("{filters}f {kernel}×{kernel}");
            if stride != 1 {
                label.push_str(&format!(" /{stride}"));
            }
            (ChipKind::Conv2d, Decoration::None, label)
        }
        LayerSpec::MaxPool { pool } => (ChipKind::MaxPool, Decoration::None, format!("{pool}×{pool}")),
        LayerSpec::Dense { units } => (ChipKind::Dense, Decoration::None, format!("{units}u")),
        LayerSpec::Activation { function } => {
            let deco = match function {
                ActivationFn::Relu => Decoration::ReluGlyph,
                ActivationFn::Tanh => Decoration::TanhGlyph,
                ActivationFn::Sigmoid => Decoration::SigmoidGlyph,
            };
            (ChipKind::Activation, deco, function.name().to_string())
        }
        LayerSpec::Dropout { rate } => (ChipKind::Dropout, Decoration::DottedBorder, format!("{rate}")),
    }
}

pub fn snac_encoding(arch: &Architecture) -> Result<SnacChipSequence, ShapeError> {
    let shapes = infer_shapes(arch)?;
    let params = parameter_breakdown(arch)?;
    let mut chips = Vec::with_capacity(shapes.len());
    let head = (ChipKind::Head, Decoration::None, format!("{}-way", arch.num_classes));
    let descs = arch.layers.iter().map(describe).chain(core::iter::once(head));
    for ((desc, shape), p) in descs.zip(&shapes).zip(&params) {
        let (kind, decoration, label) = desc;
        let (color, symbol) = palette(kind);
        chips.push(SnacChip {
            kind,
            color_key: color.into(),
            symbol_key: symbol.into(),
            height: chip_height(shape.size()),
            decoration,
            label,
            params: *p,
            param_label: format_compact(*p),
        });
    }
    let total: u64 = params.iter().sum();
    Ok(SnacChipSequence { chips, total_params: total, total_label: format_compact(total) })
}
