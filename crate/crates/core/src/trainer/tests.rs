use super::*;
use crate::arch::{ActivationFn, LayerSpec};
use alloc::string::ToString;
use proptest::prelude::*;
use rand::Rng;

fn halves_split(n: usize, seed: u64) -> Split {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = Split::default();
    for i in 0..n {
        let class = (i % 2) as u32;
        for _y in 0..8 {
            for x in 0..8 {
                let bright = (x < 4) == (class == 0);
                let base = if bright { 0.7 } else { 0.1 };
                split.images.push(base + rng.gen::<f32>() * 0.2);
            }
        }
        split.labels.push(class);
    }
    split
}

fn halves() -> Dataset {
    let names = vec!["left".to_string(), "right".to_string()];
    Dataset::new("halves", InputShape::new(8, 8, 1), names, halves_split(200, 1), halves_split(60, 2)).unwrap()
}

struct Cancelled;

impl ProgressSink for Cancelled {
    fn epoch_finished(&mut self, _: &EpochProgress) {
        panic!("no epoch should run");
    }

    fn is_cancelled(&self) -> bool {
        true
    }
}

fn check_record(record: &TrainingRecord, data: &Dataset) {
    let counts = data.val_class_counts();
    for (row, &n) in record.confusion_matrix.iter().zip(&counts) {
        assert_eq!(row.iter().sum::<u64>(), n);
    }
    let correct = record.predictions.iter().zip(&data.val.labels).filter(|(p, t)| p == t).count();
    assert_eq!(record.final_accuracy(), correct as f64 / data.val.len() as f64);
    assert_eq!(record.train_loss.len(), record.val_accuracy.len());
    assert_eq!(record.predictions.len(), data.val.len());
}

#[test]
fn separable_halves_are_learned() {
    let data = halves();
    let arch = Architecture::new(data.input_shape, 2, vec![LayerSpec::dense(8), LayerSpec::relu()]);
    let config = TrainingConfig { epochs: 5, seed: 3, ..TrainingConfig::default() };
    let mut progress = Vec::new();
    let record = train(&arch, &data, &config, &mut progress).unwrap();
    assert_eq!(record.status, RunStatus::Complete);
    assert_eq!(record.epochs_run(), 5);
    assert_eq!(progress.len(), 5);
    assert_eq!(progress.last().unwrap().val_accuracy, record.val_accuracy[4]);
    assert_eq!(*record.val_accuracy.last().unwrap(), 1.0);
    assert_eq!(record.final_accuracy(), 1.0);
    check_record(&record, &data);
}

#[test]
fn training_is_bit_reproducible() {
    let data = halves();
    let arch = Architecture::new(
        data.input_shape,
        2,
        vec![LayerSpec::conv(4, 3, 1), LayerSpec::relu(), LayerSpec::dropout(0.25), LayerSpec::dense(6)],
    );
    let config = TrainingConfig { epochs: 2, batch_size: 16, seed: 11, ..TrainingConfig::default() };
    let a = train(&arch, &data, &config, &mut ()).unwrap();
    let b = train(&arch, &data, &config, &mut ()).unwrap();
    assert_eq!(a, b);
    check_record(&a, &data);
}

#[test]
fn cancelled_before_first_epoch() {
    let data = halves();
    let arch = Architecture::new(data.input_shape, 2, vec![]);
    let record = train(&arch, &data, &TrainingConfig::default(), &mut Cancelled).unwrap();
    assert_eq!(record.status, RunStatus::Cancelled);
    assert!(record.train_loss.is_empty() && record.val_accuracy.is_empty());
    check_record(&record, &data);
}

#[test]
fn cancel_flag_stops_at_epoch_boundary() {
    let data = halves();
    let arch = Architecture::new(data.input_shape, 2, vec![LayerSpec::dense(4)]);
    let flag = AtomicBool::new(false);
    let mut seen = 0;
    let mut sink = FlagSink {
        on_epoch: |p: &EpochProgress| {
            seen = p.epoch;
            if p.epoch == 2 {
                flag.store(true, Ordering::Release);
            }
        },
        cancel: &flag,
    };
    let record = train(&arch, &data, &TrainingConfig::default(), &mut sink).unwrap();
    assert_eq!(record.status, RunStatus::Cancelled);
    assert_eq!(record.epochs_run(), 2);
    assert_eq!(seen, 2);
}

#[test]
fn divergence_marks_failed() {
    let data = halves();
    let arch = Architecture::new(data.input_shape, 2, vec![LayerSpec::dense(8)]);
    let config = TrainingConfig { learning_rate: 1e30, epochs: 3, ..TrainingConfig::default() };
    let record = train(&arch, &data, &config, &mut ()).unwrap();
    assert_eq!(record.status, RunStatus::Failed);
    assert!(record.epochs_run() < 3);
    assert!(record.train_loss.iter().all(|l| l.is_finite()));
    check_record(&record, &data);
}

#[test]
fn mismatched_dataset_is_rejected() {
    let data = halves();
    let arch = Architecture::new(InputShape::new(4, 4, 1), 2, vec![]);
    assert!(matches!(train(&arch, &data, &TrainingConfig::default(), &mut ()), Err(TrainError::DatasetMismatch { .. })));
    let bad = TrainingConfig { epochs: 0, ..TrainingConfig::default() };
    let arch = Architecture::new(data.input_shape, 2, vec![]);
    assert!(matches!(train(&arch, &data, &bad, &mut ()), Err(TrainError::BadConfig(_))));
}

#[test]
fn dataset_invariants() {
    let names = vec!["a".to_string(), "b".to_string()];
    let shape = InputShape::new(1, 1, 1);
    let ok = Split { images: vec![0.5, 0.0], labels: vec![0, 1] };
    assert!(Dataset::new("t", shape, names.clone(), ok.clone(), Split::default()).is_err());
    let bad_label = Split { images: vec![0.5], labels: vec![2] };
    assert!(matches!(
        Dataset::new("t", shape, names.clone(), ok.clone(), bad_label),
        Err(DatasetError::LabelOutOfRange { .. })
    ));
    let bad_count = Split { images: vec![0.5], labels: vec![0, 1] };
    assert!(matches!(
        Dataset::new("t", shape, names.clone(), bad_count, ok.clone()),
        Err(DatasetError::ImageCount { .. })
    ));
    let bright = Split { images: vec![1.5], labels: vec![0] };
    assert!(matches!(
        Dataset::new("t", shape, names.clone(), ok.clone(), bright),
        Err(DatasetError::PixelOutOfRange { .. })
    ));
    let d = Dataset::new("t", shape, names, ok.clone(), ok).unwrap();
    assert_eq!(d.thumbnails, vec![Some(vec![0.5]), Some(vec![0.0])]);
}

#[test]
fn surrogate_is_deterministic_and_consistent() {
    let data = halves();
    let arch = Architecture::new(data.input_shape, 2, vec![LayerSpec::dense(16), LayerSpec::relu()]);
    let config = TrainingConfig::surrogate(4, 5);
    let a = train(&arch, &data, &config, &mut ()).unwrap();
    let b = train(&arch, &data, &config, &mut ()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.epochs_run(), 4);
    check_record(&a, &data);
    assert_eq!(*a.val_accuracy.last().unwrap(), a.final_accuracy());
    let other = train(&arch, &data, &TrainingConfig::surrogate(4, 6), &mut ()).unwrap();
    assert_ne!(a, other);
}

#[test]
fn surrogate_asymptote_grows_with_size() {
    assert!(surrogate_asymptote(100_000) > surrogate_asymptote(1_000));
    assert!((surrogate_asymptote(1_000) - 0.65).abs() < 1e-12);
}

#[test]
fn surrogate_curve_rises() {
    let labels: Vec<u32> = (0..500).map(|i| i % 10).collect();
    let arch = Architecture::new(InputShape::new(14, 14, 1), 10, vec![LayerSpec::dense(64)]);
    let r = surrogate_train(&arch, &TrainingConfig::surrogate(10, 1), &labels, &mut ()).unwrap();
    assert!(r.val_accuracy.windows(2).all(|w| w[0] <= w[1]));
    assert!(r.train_loss.windows(2).all(|w| w[0] >= w[1]));
    assert!(r.train_loss.iter().all(|&l| l >= 0.0));
}

#[test]
fn dropout_is_identity_at_eval() {
    let data = halves();
    let make = |rate| Architecture::new(data.input_shape, 2, vec![LayerSpec::dense(8), LayerSpec::dropout(rate)]);
    let low = build_network::<f32>(&make(0.1), 4).unwrap();
    let high = build_network::<f32>(&make(0.9), 4).unwrap();
    assert_eq!(evaluate(&low, &data), evaluate(&high, &data));
}

#[test]
fn bias_gradient_at_origin() {
    let arch = Architecture::new(InputShape::new(3, 3, 1), 4, vec![LayerSpec::conv(2, 2, 1), LayerSpec::relu()]);
    let mut net = build_network::<f64>(&arch, 0).unwrap();
    net.params_mut().fill(0.0);
    let labels = [0u32, 3, 3];
    let images = vec![0.0; 27];
    let mut grad = vec![0.0; net.parameter_count()];
    let loss = net.loss_and_gradient(&images, &labels, &mut grad);
    assert!((loss - libm::log(4.0)).abs() < 1e-15);
    let head_bias = net.tensors().last().unwrap();
    let g = &grad[head_bias.offset..head_bias.offset + head_bias.len];
    // mean over the batch of softmax(0) - one_hot
    let expected: Vec<f64> = (0..4)
        .map(|k| (0.75 - labels.iter().filter(|&&l| l == k).count() as f64) / 3.0)
        .collect();
    assert_eq!(g, &expected[..]);
}

#[test]
fn head_only_gradient_check() {
    let arch = Architecture::new(InputShape::new(5, 5, 1), 3, vec![]);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let batch = SampleBatch { images: (0..100).map(|_| rng.gen()).collect(), labels: vec![0, 1, 2, 1] };
    let report = gradient_check(&arch, &batch, 2).unwrap();
    assert_eq!(report.checked, 78);
    assert!(report.passes(1e-5), "{report:?}");
}

#[test]
fn conv_gradient_check() {
    let arch = Architecture::new(
        InputShape::new(8, 8, 1),
        3,
        vec![LayerSpec::conv(3, 3, 1), LayerSpec::relu(), LayerSpec::pool(2), LayerSpec::dense(8), LayerSpec::act(ActivationFn::Tanh)],
    );
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let batch = SampleBatch { images: (0..3 * 64).map(|_| rng.gen()).collect(), labels: vec![0, 1, 2] };
    let report = gradient_check(&arch, &batch, 3).unwrap();
    assert_eq!(report.checked, 200);
    assert!(report.passes(1e-4), "{report:?}");
}

fn small_arch(variant: u8) -> Architecture {
    let layers = match variant % 4 {
        0 => vec![],
        1 => vec![LayerSpec::dense(6), LayerSpec::act(ActivationFn::Tanh)],
        2 => vec![LayerSpec::conv(2, 3, 1), LayerSpec::act(ActivationFn::Sigmoid), LayerSpec::dense(4)],
        _ => vec![LayerSpec::conv(3, 2, 2), LayerSpec::relu(), LayerSpec::pool(1), LayerSpec::dropout(0.3)],
    };
    Architecture::new(InputShape::new(6, 6, 1), 3, layers)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn single_sgd_step_lowers_loss(variant in 0u8..4, seed in any::<u64>(), label in 0u32..3, pixels in proptest::collection::vec(0.0f64..1.0, 36)) {
        let arch = small_arch(variant);
        let mut net = build_network::<f64>(&arch, seed).unwrap();
        let mut grad = vec![0.0; net.parameter_count()];
        let before = net.loss_and_gradient(&pixels, &[label], &mut grad);
        let mut opt = Sgd::<f64>::new(1e-3, 0.9, grad.len());
        opt.step(net.params_mut(), &grad);
        let after = net.loss(&pixels, &[label]);
        prop_assume!(after.is_finite());
        prop_assert!(after < before, "{before} -> {after}");
    }

    #[test]
    fn softmax_is_a_distribution(logits in proptest::collection::vec(-50.0f32..50.0, 2..20)) {
        let p = softmax(&logits);
        let sum: f32 = p.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-6);
        prop_assert!(p.iter().all(|&x| x >= 0.0));
        let mut d = Vec::new();
        for label in 0..logits.len() {
            prop_assert!(Network::<f32>::softmax_cross_entropy(&logits, label, 1.0, &mut d) >= 0.0);
        }
    }
}
