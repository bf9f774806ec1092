//! Miniature CNN trainer and its deterministic surrogate.

mod gradcheck;
mod network;
mod scalar;
mod surrogate;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicBool, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arch::{count_parameters, Architecture, InputShape, ShapeError, Violation};

pub use gradcheck::{gradient_check, GradientReport, SampleBatch, FD_STEP};
pub use network::{argmax, build_network, softmax, Network, Sgd, TensorInfo, Workspace};
pub use scalar::Scalar;
pub use surrogate::{surrogate_asymptote, surrogate_train};

const SHUFFLE_SALT: u64 = 0x5eed_0f5e_ed5e_ed01;
const DROPOUT_SALT: u64 = 0xd409_0075_a17e_d001;

/// Images plus labels for one split.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Split {
    /// `count * H * W * C` values in `[0, 1]`, channel-last.
    pub images: Vec<f32>,
    pub labels: Vec<u32>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize, image_size: usize) -> &[f32] {
        &self.images[i * image_size..(i + 1) * image_size]
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum DatasetError {
    #[error("{split} split: {images} pixel values do not fit {labels} images of {per_image} values")]
    ImageCount { split: &'static str, images: usize, labels: usize, per_image: usize },
    #[error("{split} split: label {label} at index {index} is outside 0..{num_classes}")]
    LabelOutOfRange { split: &'static str, index: usize, label: u32, num_classes: u32 },
    #[error("{split} split: pixel {index} is outside [0, 1]")]
    PixelOutOfRange { split: &'static str, index: usize },
    #[error("validation split is empty")]
    EmptyValidation,
    #[error("need at least two classes, got {0}")]
    TooFewClasses(usize),
    #[error("input shape has a zero dimension")]
    BadShape,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub input_shape: InputShape,
    pub class_names: Vec<String>,
    pub train: Split,
    pub val: Split,
    /// First training image of each class, if the class occurs in training.
    pub thumbnails: Vec<Option<Vec<f32>>>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        input_shape: InputShape,
        class_names: Vec<String>,
        train: Split,
        val: Split,
    ) -> Result<Self, DatasetError> {
        if input_shape.size() == 0 {
            return Err(DatasetError::BadShape);
        }
        if class_names.len() < 2 {
            return Err(DatasetError::TooFewClasses(class_names.len()));
        }
        if val.is_empty() {
            return Err(DatasetError::EmptyValidation);
        }
        let per_image = input_shape.size() as usize;
        let num_classes = class_names.len() as u32;
        for (split, data) in [("train", &train), ("val", &val)] {
            if data.images.len() != data.labels.len() * per_image {
                return Err(DatasetError::ImageCount {
                    split,
                    images: data.images.len(),
                    labels: data.labels.len(),
                    per_image,
                });
            }
            if let Some(index) = data.labels.iter().position(|&l| l >= num_classes) {
                return Err(DatasetError::LabelOutOfRange { split, index, label: data.labels[index], num_classes });
            }
            if let Some(index) = data.images.iter().position(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(DatasetError::PixelOutOfRange { split, index });
            }
        }
        let thumbnails = (0..num_classes)
            .map(|c| train.labels.iter().position(|&l| l == c).map(|i| train.image(i, per_image).to_vec()))
            .collect();
        Ok(Dataset { name: name.into(), input_shape, class_names, train, val, thumbnails })
    }

    pub fn num_classes(&self) -> u32 {
        self.class_names.len() as u32
    }

    pub fn image_size(&self) -> usize {
        self.input_shape.size() as usize
    }

    /// Validation examples per true class.
    pub fn val_class_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.class_names.len()];
        for &l in &self.val.labels {
            counts[l as usize] += 1;
        }
        counts
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingMode {
    #[default]
    Real,
    Surrogate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub epochs: u32,
    pub batch_size: u32,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
    pub mode: TrainingMode,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig { epochs: 10, batch_size: 64, learning_rate: 0.01, momentum: 0.9, seed: 0, mode: TrainingMode::Real }
    }
}

impl TrainingConfig {
    pub fn surrogate(epochs: u32, seed: u64) -> Self {
        TrainingConfig { epochs, seed, mode: TrainingMode::Surrogate, ..Self::default() }
    }

    pub fn check(&self) -> Result<(), TrainError> {
        if self.epochs == 0 {
            return Err(TrainError::BadConfig("epochs must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::BadConfig("learning_rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(TrainError::BadConfig("batch_size must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(TrainError::BadConfig("momentum must be in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    #[default]
    Complete,
    /// Stopped at an epoch boundary on request.
    Cancelled,
    /// Loss became non-finite; curves keep the last finite epoch.
    Failed,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub train_loss: Vec<f64>,
    pub val_accuracy: Vec<f64>,
    /// Predicted label per validation example, in dataset order.
    pub predictions: Vec<u32>,
    /// `confusion[true][predicted]`.
    pub confusion_matrix: Vec<Vec<u64>>,
    pub per_class_accuracy: Vec<f64>,
    pub param_count: u64,
    /// Milliseconds; filled in by the caller that owns a clock.
    #[serde(default)]
    pub wall_time_ms: u64,
    pub status: RunStatus,
}

impl TrainingRecord {
    pub fn epochs_run(&self) -> usize {
        self.train_loss.len()
    }

    /// Accuracy of the final predictions.
    pub fn final_accuracy(&self) -> f64 {
        let total: u64 = self.confusion_matrix.iter().flatten().sum();
        if total == 0 {
            return 0.0;
        }
        let trace: u64 = (0..self.confusion_matrix.len()).map(|i| self.confusion_matrix[i][i]).sum();
        trace as f64 / total as f64
    }

    pub(crate) fn from_predictions(
        train_loss: Vec<f64>,
        val_accuracy: Vec<f64>,
        predictions: Vec<u32>,
        labels: &[u32],
        num_classes: usize,
        param_count: u64,
        status: RunStatus,
    ) -> Self {
        let mut confusion = vec![vec![0u64; num_classes]; num_classes];
        for (&t, &p) in labels.iter().zip(&predictions) {
            confusion[t as usize][p as usize] += 1;
        }
        let per_class_accuracy = confusion
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let n: u64 = row.iter().sum();
                if n == 0 {
                    0.0
                } else {
                    row[i] as f64 / n as f64
                }
            })
            .collect();
        TrainingRecord {
            train_loss,
            val_accuracy,
            predictions,
            confusion_matrix: confusion,
            per_class_accuracy,
            param_count,
            wall_time_ms: 0,
            status,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochProgress {
    pub epoch: u32,
    pub train_loss: f64,
    pub val_accuracy: f64,
}

/// Receives per-epoch progress and answers cancellation checks.
pub trait ProgressSink {
    fn epoch_finished(&mut self, progress: &EpochProgress);

    fn is_cancelled(&self) -> bool {
        false
    }
}

impl ProgressSink for () {
    fn epoch_finished(&mut self, _: &EpochProgress) {}
}

impl ProgressSink for Vec<EpochProgress> {
    fn epoch_finished(&mut self, progress: &EpochProgress) {
        self.push(*progress);
    }
}

/// Sink that forwards progress to a closure and reads cancellation from a shared flag.
pub struct FlagSink<'a, F: FnMut(&EpochProgress)> {
    pub on_epoch: F,
    pub cancel: &'a AtomicBool,
}

impl<F: FnMut(&EpochProgress)> ProgressSink for FlagSink<'_, F> {
    fn epoch_finished(&mut self, progress: &EpochProgress) {
        (self.on_epoch)(progress)
    }

    fn is_cancelled(&self) -> bool {
        self.cancel.load(Ordering::Acquire)
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("architecture is invalid: {0:?}")]
    InvalidArchitecture(Vec<Violation>),
    #[error(transparent)]
    Shape(ShapeError),
    #[error("architecture expects input {expected:?} with {classes} classes, dataset has {found:?} with {found_classes}")]
    DatasetMismatch { expected: InputShape, classes: u32, found: InputShape, found_classes: u32 },
    #[error("bad training config: {0}")]
    BadConfig(&'static str),
    #[error("gradient check needs a non-empty batch")]
    EmptyBatch,
}

fn shuffle(order: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
}

/// Predictions and accuracy of `net` on the validation split.
pub fn evaluate(net: &Network<f32>, dataset: &Dataset) -> (Vec<u32>, f64) {
    let d = dataset.image_size();
    let mut ws = net.workspace();
    let mut correct = 0usize;
    let preds: Vec<u32> = (0..dataset.val.len())
        .map(|i| {
            let p = argmax(net.forward(dataset.val.image(i, d), &mut ws, None)) as u32;
            correct += (p == dataset.val.labels[i]) as usize;
            p
        })
        .collect();
    (preds, correct as f64 / dataset.val.len() as f64)
}

/// Trains `arch` on `dataset`, reporting each epoch to `sink`.
pub fn train(
    arch: &Architecture,
    dataset: &Dataset,
    config: &TrainingConfig,
    sink: &mut dyn ProgressSink,
) -> Result<TrainingRecord, TrainError> {
    config.check()?;
    if arch.input_shape != dataset.input_shape || arch.num_classes != dataset.num_classes() {
        return Err(TrainError::DatasetMismatch {
            expected: arch.input_shape,
            classes: arch.num_classes,
            found: dataset.input_shape,
            found_classes: dataset.num_classes(),
        });
    }
    if config.mode == TrainingMode::Surrogate {
        return surrogate_train(arch, config, &dataset.val.labels, sink);
    }

    let mut net = build_network::<f32>(arch, config.seed)?;
    let param_count = count_parameters(arch).map_err(TrainError::Shape)?;
    let num_classes = arch.num_classes as usize;
    let d = dataset.image_size();
    let n = dataset.train.len();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed ^ SHUFFLE_SALT);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed ^ DROPOUT_SALT);
    let mut opt = Sgd::<f32>::new(config.learning_rate, config.momentum, net.parameter_count());
    let mut grad = vec![0f32; net.parameter_count()];
    let mut ws = net.workspace();
    let mut dlogits = Vec::with_capacity(num_classes);
    let mut logits = Vec::with_capacity(num_classes);
    let mut order: Vec<usize> = (0..n).collect();

    let mut losses = Vec::new();
    let mut accs = Vec::new();
    let mut last_good: Option<Network<f32>> = None;
    let mut status = RunStatus::Complete;

    for epoch in 1..=config.epochs {
        if sink.is_cancelled() {
            status = RunStatus::Cancelled;
            break;
        }
        for (i, o) in order.iter_mut().enumerate() {
            *o = i;
        }
        shuffle(&mut order, &mut shuffle_rng);
        let mut loss_sum = 0f64;
        let mut diverged = false;
        for batch in order.chunks(config.batch_size as usize) {
            grad.fill(0.0);
            let scale = 1.0 / batch.len() as f32;
            for &idx in batch {
                logits.clear();
                logits.extend_from_slice(net.forward(dataset.train.image(idx, d), &mut ws, Some(&mut dropout_rng)));
                let loss = Network::<f32>::softmax_cross_entropy(
                    &logits,
                    dataset.train.labels[idx] as usize,
                    scale,
                    &mut dlogits,
                );
                loss_sum += loss as f64;
                net.backward(&mut ws, &dlogits, &mut grad);
            }
            if !loss_sum.is_finite() {
                diverged = true;
                break;
            }
            opt.step(net.params_mut(), &grad);
        }
        let train_loss = loss_sum / n.max(1) as f64;
        if diverged || !train_loss.is_finite() || net.params().iter().any(|p| !p.is_finite()) {
            status = RunStatus::Failed;
            break;
        }
        let (_, acc) = evaluate(&net, dataset);
        losses.push(train_loss);
        accs.push(acc);
        sink.epoch_finished(&EpochProgress { epoch, train_loss, val_accuracy: acc });
        if epoch < config.epochs {
            last_good = Some(net.clone());
        }
    }

    // A failed run reports the weights of its last finite epoch.
    let final_net = match (status, last_good) {
        (RunStatus::Failed, Some(good)) => good,
        (RunStatus::Failed, None) => build_network::<f32>(arch, config.seed)?,
        _ => net,
    };
    let (predictions, _) = evaluate(&final_net, dataset);
    Ok(TrainingRecord::from_predictions(
        losses,
        accs,
        predictions,
        &dataset.val.labels,
        num_classes,
        param_count,
        status,
    ))
}

#[cfg(test)]
mod tests;
