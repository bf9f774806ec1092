mod support;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use remap_core::metrics::{
    distance_matrix, mass_profile, otmann_distance, prediction_distance, transport_problem, Metric, ModelRef,
    OtmannParams,
};
use remap_core::sampler::{sample_architecture, TransitionModel};
use remap_core::{Architecture, InputShape, LayerSpec};
use support::oracle::transport_optimum;

fn corpus(n: usize, max_depth: usize, seed: u64) -> Vec<Architecture> {
    let model = TransitionModel { max_depth, ..TransitionModel::default() };
    (0..n as u64)
        .map(|i| sample_architecture(&model, seed + i, InputShape::new(14, 14, 1), 10).architecture)
        .collect()
}

#[test]
fn solver_matches_vertex_enumeration() {
    let archs = corpus(100, 3, 1000);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let params = OtmannParams::default();
    for _ in 0..50 {
        let a = archs.choose(&mut rng).unwrap();
        let b = archs.choose(&mut rng).unwrap();
        let problem = transport_problem(&mass_profile(a).unwrap(), &mass_profile(b).unwrap(), &params);
        let solved = problem.solve().objective;
        let oracle = transport_optimum(&problem);
        assert!((solved - oracle).abs() <= 1e-9, "{solved} vs {oracle} for {:?} / {:?}", a.layers, b.layers);
    }
}

#[test]
fn two_by_three_conv_instance() {
    let input = InputShape::new(14, 14, 1);
    let a = Architecture::new(input, 10, vec![LayerSpec::conv(16, 3, 1)]);
    let b = Architecture::new(input, 10, vec![LayerSpec::conv(16, 3, 1), LayerSpec::conv(16, 3, 1)]);
    let problem = transport_problem(&mass_profile(&a).unwrap(), &mass_profile(&b).unwrap(), &OtmannParams::default());
    assert_eq!(problem.supply.len(), 3);
    assert_eq!(problem.demand.len(), 4);
    let d = otmann_distance(&a, &b).unwrap();
    assert!((d - transport_optimum(&problem)).abs() <= 1e-9);
}

#[test]
fn structural_axioms_on_sampled_corpus() {
    let archs = corpus(60, 8, 77);
    let models: Vec<ModelRef<'_>> =
        archs.iter().map(|arch| ModelRef { id: &arch.id, arch, predictions: None }).collect();
    let m = distance_matrix(&models, Metric::Structural).unwrap();
    let n = m.len();
    for i in 0..n {
        assert_eq!(m.get(i, i), 0.0);
        assert_eq!(otmann_distance(&archs[i], &archs[i]).unwrap(), 0.0);
        for j in 0..n {
            assert_eq!(m.get(i, j), m.get(j, i));
            assert!(m.get(i, j) >= 0.0 && m.get(i, j).is_finite());
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let (i, j, k) = (rng.gen_range(0..n), rng.gen_range(0..n), rng.gen_range(0..n));
        assert!(m.get(i, k) <= m.get(i, j) + m.get(j, k) + 1e-9);
    }
    // single calls agree with the matrix, in both argument orders
    for _ in 0..10 {
        let (i, j) = (rng.gen_range(0..n), rng.gen_range(0..n));
        assert_eq!(otmann_distance(&archs[i], &archs[j]).unwrap(), m.get(i, j));
        assert_eq!(otmann_distance(&archs[j], &archs[i]).unwrap(), m.get(i, j));
    }
}

#[test]
fn prediction_axioms() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let vectors: Vec<Vec<u32>> = (0..40).map(|_| (0..200).map(|_| rng.gen_range(0..10)).collect()).collect();
    for _ in 0..1000 {
        let (a, b, c) = (vectors.choose(&mut rng).unwrap(), vectors.choose(&mut rng).unwrap(), vectors.choose(&mut rng).unwrap());
        let ab = prediction_distance(a, b).unwrap();
        assert_eq!(ab, prediction_distance(b, a).unwrap());
        assert_eq!(prediction_distance(a, a).unwrap(), 0.0);
        assert!(prediction_distance(a, c).unwrap() <= ab + prediction_distance(b, c).unwrap() + 1e-9);
    }
    let mut perm: Vec<usize> = (0..200).collect();
    perm.shuffle(&mut rng);
    let permute = |v: &[u32]| perm.iter().map(|&i| v[i]).collect::<Vec<_>>();
    assert_eq!(
        prediction_distance(&vectors[0], &vectors[1]).unwrap(),
        prediction_distance(&permute(&vectors[0]), &permute(&vectors[1])).unwrap()
    );
}

#[test]
fn twenty_model_matrix_is_symmetric() {
    let archs = corpus(20, 10, 400);
    let preds: Vec<Vec<u32>> = (0..20u32).map(|s| (0..50).map(|i| (i * s) % 10).collect()).collect();
    let models: Vec<ModelRef<'_>> = archs
        .iter()
        .zip(&preds)
        .map(|(arch, p)| ModelRef { id: &arch.id, arch, predictions: Some(p) })
        .collect();
    for metric in [Metric::Structural, Metric::Prediction] {
        let m = distance_matrix(&models, metric).unwrap();
        let rows = m.rows();
        for i in 0..20 {
            for j in 0..20 {
                assert_eq!(rows[i][j], rows[j][i]);
            }
        }
    }
}

/// Cost of keeping every layer in place and creating the new one from nothing.
fn keep_in_place_bound(a: &Architecture, b: &Architecture, inserted_at: usize) -> f64 {
    let pa = mass_profile(a).unwrap();
    let pb = mass_profile(b).unwrap();
    let nu = OtmannParams::default().nu;
    let mut cost = nu * pb[inserted_at].mass;
    for (i, ea) in pa.iter().enumerate() {
        let eb = &pb[if i < inserted_at { i } else { i + 1 }];
        let shared = ea.mass.min(eb.mass);
        let label = if ea.layer == eb.layer { 0.0 } else { 0.1 };
        cost += shared * (label + (ea.position - eb.position).abs());
        cost += nu * (ea.mass - eb.mass).abs();
    }
    cost
}

#[test]
fn inserting_a_dense_layer_is_bounded_by_an_explicit_plan() {
    let archs = corpus(80, 8, 900);
    let mut checked = 0;
    for a in &archs {
        let at = a.layers.len();
        let mut layers = a.layers.clone();
        layers.push(LayerSpec::dense(16));
        let b = a.derive(layers, remap_core::Provenance::Handcrafted);
        if remap_core::validate(&b).is_err() {
            continue;
        }
        let d = otmann_distance(a, &b).unwrap();
        assert!(d <= keep_in_place_bound(a, &b, at) + 1e-9);
        checked += 1;
    }
    assert!(checked > 20);
}
