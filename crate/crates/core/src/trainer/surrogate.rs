use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EpochProgress, ProgressSink, RunStatus, TrainError, TrainingConfig, TrainingRecord};
use crate::arch::{count_parameters, validate, Architecture};
use crate::codec::structure_seed;
use crate::math;

/// Asymptotic accuracy before noise: `0.35 + 0.6 * sigmoid((log10(params) - 3) / 1.2)`.
pub fn surrogate_asymptote(params: u64) -> f64 {
    let p = (params.max(1)) as f64;
    0.35 + 0.6 * math::sigmoid((math::log10(p) - 3.0) / 1.2)
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1 = 1.0 - rng.gen::<f64>();
    let u2 = rng.gen::<f64>();
    math::sqrt(-2.0 * math::ln(u1)) * libm::cos(2.0 * core::f64::consts::PI * u2)
}

/// Deterministic pseudo-training from the structure hash, parameter count and seed.
///
/// Every epoch's accuracy is a multiple of `1 / val_count`, and the final
/// predictions hit exactly that many correct labels.
pub fn surrogate_train(
    arch: &Architecture,
    config: &TrainingConfig,
    val_labels: &[u32],
    sink: &mut dyn ProgressSink,
) -> Result<TrainingRecord, TrainError> {
    config.check()?;
    validate(arch).map_err(TrainError::InvalidArchitecture)?;
    let params = count_parameters(arch).map_err(TrainError::Shape)?;
    let k = arch.num_classes as usize;
    let n = val_labels.len();
    let mut rng = ChaCha8Rng::seed_from_u64(structure_seed(arch) ^ config.seed.rotate_left(17) ^ params);
    let asymptote = (surrogate_asymptote(params) + 0.05 * standard_normal(&mut rng)).clamp(0.0, 1.0);
    let max_loss = math::ln(k as f64);

    let mut losses = Vec::new();
    let mut accs = Vec::new();
    let mut correct = 0usize;
    let mut status = RunStatus::Complete;
    for epoch in 1..=config.epochs {
        if sink.is_cancelled() {
            status = RunStatus::Cancelled;
            break;
        }
        let raw = asymptote * (1.0 - math::exp(-(epoch as f64) / 3.0));
        correct = libm::round(raw * n as f64) as usize;
        let acc = correct as f64 / n.max(1) as f64;
        let loss = max_loss * (1.0 - acc);
        losses.push(loss);
        accs.push(acc);
        sink.epoch_finished(&EpochProgress { epoch, train_loss: loss, val_accuracy: acc });
    }
    if k < 2 {
        correct = n;
    }

    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.gen_range(0..=i));
    }
    let mut predictions: Vec<u32> = val_labels.to_vec();
    for &i in &order[correct..] {
        let offset = rng.gen_range(1..k as u32);
        predictions[i] = (val_labels[i] + offset) % k as u32;
    }
    Ok(TrainingRecord::from_predictions(losses, accs, predictions, val_labels, k, params, status))
}
