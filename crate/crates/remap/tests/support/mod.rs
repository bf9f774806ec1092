#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use remap::cli::{preprocess, PreprocessArgs};
use remap::idx::encode;
use remap::session::SessionState;

/// Writes a learnable synthetic dataset: class `c` lights up horizontal band
/// `c` of a `side x side` image. Returns the manifest path.
pub fn write_dataset(dir: &Path, side: u32, classes: u32, n_train: u32, n_val: u32, seed: u64) -> PathBuf {
    fs::create_dir_all(dir).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let band = side / classes;
    let mut split = |n: u32, stem: &str| {
        let mut pixels = Vec::with_capacity((n * side * side) as usize);
        let mut labels = Vec::with_capacity(n as usize);
        for i in 0..n {
            let c = i % classes;
            labels.push(c as u8);
            for y in 0..side {
                for _ in 0..side {
                    let lit = y / band == c;
                    pixels.push(if lit { rng.gen_range(150..=255) } else { rng.gen_range(0..90) });
                }
            }
        }
        fs::write(dir.join(format!("{stem}-images")), encode(&[n, side, side], &pixels)).unwrap();
        fs::write(dir.join(format!("{stem}-labels")), encode(&[n], &labels)).unwrap();
    };
    split(n_train, "train");
    split(n_val, "val");
    let manifest = serde_json::json!({
        "name": "bands",
        "class_names": (0..classes).map(|c| format!("band{c}")).collect::<Vec<_>>(),
        "train": { "images": "train-images", "labels": "train-labels" },
        "val": { "images": "val-images", "labels": "val-labels" },
    });
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest).unwrap()).unwrap();
    path
}

/// Small dataset that trains in milliseconds.
pub fn small_dataset(dir: &Path) -> PathBuf {
    write_dataset(dir, 8, 4, 160, 80, 1)
}

pub fn preprocess_session(manifest: &Path, session: &Path, count: usize, epochs: u32, surrogate: bool) {
    preprocess(&PreprocessArgs {
        dataset: manifest.to_path_buf(),
        count,
        epochs,
        seed: 3,
        surrogate,
        session: session.to_path_buf(),
    })
    .map_err(|e| e.0)
    .unwrap();
}

/// Registry, queue, matrices and embeddings agree (sequence numbers may differ).
pub fn assert_same_content(a: &SessionState, b: &SessionState) {
    assert_eq!(a.models, b.models);
    assert_eq!(a.jobs, b.jobs);
    assert_eq!(a.structural, b.structural);
    assert_eq!(a.prediction, b.prediction);
    assert_eq!(a.embeddings, b.embeddings);
    assert_eq!(a.config, b.config);
    assert_eq!(a.dataset, b.dataset);
}

pub const WAIT: Duration = Duration::from_secs(120);
