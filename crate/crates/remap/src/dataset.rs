//! Dataset manifests and loading.

use std::fs;
use std::path::{Path, PathBuf};

use remap_core::trainer::{DatasetError, Split};
use remap_core::{Dataset, InputShape};
use serde::{Deserialize, Serialize};

use crate::idx::{self, IdxError};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitFiles {
    pub images: PathBuf,
    pub labels: PathBuf,
}

/// JSON manifest; file paths are relative to the manifest's directory.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub class_names: Vec<String>,
    /// Block-average factor applied to both spatial dimensions.
    #[serde(default = "one")]
    pub downsample: u32,
    pub train: SplitFiles,
    pub val: SplitFiles,
}

fn one() -> u32 {
    1
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("manifest {path}: {source}")]
    Manifest { path: String, source: serde_json::Error },
    #[error(transparent)]
    Idx(#[from] IdxError),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("{split} label {label} at index {index} is outside 0..{num_classes}")]
    LabelOutOfRange { split: &'static str, index: usize, label: u8, num_classes: usize },
    #[error(transparent)]
    Invalid(#[from] DatasetError),
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self, LoadError> {
        let text =
            fs::read_to_string(path).map_err(|source| LoadError::Io { path: path.display().to_string(), source })?;
        serde_json::from_str(&text).map_err(|source| LoadError::Manifest { path: path.display().to_string(), source })
    }

    /// Copy with every file path made absolute against `base`.
    pub fn resolved(&self, base: &Path) -> Manifest {
        let fix = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        let mut m = self.clone();
        m.train = SplitFiles { images: fix(&self.train.images), labels: fix(&self.train.labels) };
        m.val = SplitFiles { images: fix(&self.val.images), labels: fix(&self.val.labels) };
        m
    }
}

fn downsample(pixels: &[u8], h: usize, w: usize, c: usize, f: usize) -> Vec<f32> {
    let (oh, ow) = (h / f, w / f);
    let scale = 1.0 / (255.0 * (f * f) as f32);
    let mut out = Vec::with_capacity(oh * ow * c);
    for oy in 0..oh {
        for ox in 0..ow {
            for ch in 0..c {
                let mut sum = 0u32;
                for dy in 0..f {
                    for dx in 0..f {
                        sum += pixels[((oy * f + dy) * w + ox * f + dx) * c + ch] as u32;
                    }
                }
                out.push(sum as f32 * scale);
            }
        }
    }
    out
}

fn load_split(
    files: &SplitFiles,
    split: &'static str,
    factor: usize,
    num_classes: usize,
) -> Result<(Split, InputShape), LoadError> {
    let images = idx::read(&files.images, idx::IMAGES_MAGIC)?;
    let labels = idx::read(&files.labels, idx::LABELS_MAGIC)?;
    let (n, h, w, c) = match images.dims[..] {
        [n, h, w] => (n as usize, h as usize, w as usize, 1usize),
        [n, h, w, c] => (n as usize, h as usize, w as usize, c as usize),
        _ => {
            return Err(LoadError::DimensionMismatch(format!(
                "{split} images have dimensions {:?}; expected [n, h, w] or [n, h, w, c]",
                images.dims
            )))
        }
    };
    if labels.dims.len() != 1 || labels.dims[0] as usize != n {
        return Err(LoadError::DimensionMismatch(format!(
            "{split}: {n} images but labels have dimensions {:?}",
            labels.dims
        )));
    }
    if factor == 0 || h % factor != 0 || w % factor != 0 {
        return Err(LoadError::DimensionMismatch(format!("{split}: {h}x{w} images are not divisible by {factor}")));
    }
    if let Some(index) = labels.data.iter().position(|&l| l as usize >= num_classes) {
        return Err(LoadError::LabelOutOfRange { split, index, label: labels.data[index], num_classes });
    }
    let per_image = h * w * c;
    let mut pixels = Vec::with_capacity(n * per_image / (factor * factor));
    for i in 0..n {
        pixels.extend(downsample(&images.data[i * per_image..(i + 1) * per_image], h, w, c, factor));
    }
    let shape = InputShape::new((h / factor) as u32, (w / factor) as u32, c as u32);
    Ok((Split { images: pixels, labels: labels.data.iter().map(|&l| l as u32).collect() }, shape))
}

/// Loads both splits described by the manifest at `path`.
pub fn load_dataset(path: &Path) -> Result<Dataset, LoadError> {
    let manifest = Manifest::read(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    load_from_manifest(&manifest.resolved(base))
}

/// Loads from a manifest whose paths are already absolute.
pub fn load_from_manifest(manifest: &Manifest) -> Result<Dataset, LoadError> {
    let factor = manifest.downsample as usize;
    let k = manifest.class_names.len();
    let (train, train_shape) = load_split(&manifest.train, "train", factor, k)?;
    let (val, val_shape) = load_split(&manifest.val, "val", factor, k)?;
    if train_shape != val_shape {
        return Err(LoadError::DimensionMismatch(format!(
            "train images are {train_shape:?} but val images are {val_shape:?}"
        )));
    }
    Ok(Dataset::new(manifest.name.clone(), train_shape, manifest.class_names.clone(), train, val)?)
}
