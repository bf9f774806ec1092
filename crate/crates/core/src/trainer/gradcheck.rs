use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::build_network;
use super::TrainError;
use crate::arch::Architecture;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-4;
const MAX_COORDINATES: usize = 200;
/// Magnitudes below this are compared on absolute error.
const DENOMINATOR_FLOOR: f64 = 1e-6;

/// A small batch in high precision; images are flat channel-last.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleBatch {
    pub images: Vec<f64>,
    pub labels: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientReport {
    pub max_relative_error: f64,
    /// Coordinates compared.
    pub checked: usize,
    /// Coordinates dropped because the finite difference crossed a ReLU or pooling kink.
    pub skipped_kinks: usize,
    pub parameter_count: usize,
}

impl GradientReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.checked > 0 && self.max_relative_error < tolerance
    }
}

/// Compares analytic gradients of the mean batch loss with central finite
/// differences on up to 200 random coordinates, in `f64`.
///
/// Relative error is `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn gradient_check(arch: &Architecture, batch: &SampleBatch, seed: u64) -> Result<GradientReport, TrainError> {
    if batch.labels.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let mut net = build_network::<f64>(arch, seed)?;
    let count = batch.labels.len();
    if batch.images.len() != count * net.input_size() {
        return Err(TrainError::EmptyBatch);
    }
    let p = net.parameter_count();
    let mut grad = vec![0.0; p];
    net.loss_and_gradient(&batch.images, &batch.labels, &mut grad);
    let regime = net.regime_signature(&batch.images, count);

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let candidates = sample(&mut rng, p, p).into_vec();
    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut skipped = 0;
    for j in candidates {
        if checked == MAX_COORDINATES {
            break;
        }
        let original = net.params()[j];
        net.params_mut()[j] = original + FD_STEP;
        let plus = net.loss(&batch.images, &batch.labels);
        let plus_regime = net.regime_signature(&batch.images, count);
        net.params_mut()[j] = original - FD_STEP;
        let minus = net.loss(&batch.images, &batch.labels);
        let minus_regime = net.regime_signature(&batch.images, count);
        net.params_mut()[j] = original;
        if plus_regime != regime || minus_regime != regime {
            skipped += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        let analytic = grad[j];
        let denom = analytic.abs().max(numeric.abs()).max(DENOMINATOR_FLOOR);
        worst = worst.max((analytic - numeric).abs() / denom);
        checked += 1;
    }
    Ok(GradientReport { max_relative_error: worst, checked, skipped_kinks: skipped, parameter_count: p })
}
