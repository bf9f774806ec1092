//! Two-dimensional model overviews.

mod mds;
mod oos;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math;
use crate::metrics::{DistanceMatrix, Metric};

pub use mds::{double_center, symmetric_eigen};
pub use oos::{stress, weighted_centroid};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    Interpretable,
    Structural,
    Prediction,
}

impl Projection {
    pub const ALL: [Projection; 3] = [Projection::Interpretable, Projection::Structural, Projection::Prediction];

    pub fn name(self) -> &'static str {
        match self {
            Projection::Interpretable => "interpretable",
            Projection::Structural => "structural",
            Projection::Prediction => "prediction",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }

    pub fn metric(self) -> Option<Metric> {
        match self {
            Projection::Interpretable => None,
            Projection::Structural => Some(Metric::Structural),
            Projection::Prediction => Some(Metric::Prediction),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub id: String,
    pub x: f64,
    pub y: f64,
}

/// Spectral diagnostics of a classical MDS fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MdsFit {
    /// Top two eigenvalues of the double-centered matrix, before clamping.
    pub eigenvalues: [f64; 2],
    /// Most negative eigenvalue (0 if none); nonzero means the distances are not Euclidean.
    pub min_eigenvalue: f64,
    /// All eigenvalues were nonpositive and every point sits at the origin.
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Embedding2D {
    pub projection: Projection,
    pub points: Vec<Point>,
    /// Models the configuration was fitted on, in fit order.
    pub base_ids: Vec<String>,
    pub fit: Option<MdsFit>,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum EmbeddingError {
    #[error("classical MDS needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("distance to base point {0} is not a finite nonnegative number")]
    NonFiniteDistance(usize),
    #[error("expected {expected} distances to base points, got {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("the interpretable projection has no fitted base")]
    NotFitted,
    #[error("model {0} is missing from the distance matrix")]
    UnknownModel(String),
}

impl Embedding2D {
    pub fn get(&self, id: &str) -> Option<(f64, f64)> {
        self.points.iter().find(|p| p.id == id).map(|p| (p.x, p.y))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.points.iter().any(|p| p.id == id)
    }

    fn base_coords(&self) -> Vec<[f64; 2]> {
        self.base_ids
            .iter()
            .map(|id| {
                let (x, y) = self.get(id).expect("base point present");
                [x, y]
            })
            .collect()
    }

    /// Places a new model out-of-sample and records it.
    pub fn insert(&mut self, id: impl Into<String>, distances_to_base: &[f64]) -> Result<(f64, f64), EmbeddingError> {
        let (x, y) = out_of_sample(self, distances_to_base)?;
        let id = id.into();
        match self.points.iter_mut().find(|p| p.id == id) {
            Some(p) => {
                p.x = x;
                p.y = y;
            }
            None => self.points.push(Point { id, x, y }),
        }
        Ok((x, y))
    }
}

/// `x = log10(params)`, `y = accuracy`.
pub fn interpretable_projection<'a>(models: impl IntoIterator<Item = (&'a str, u64, f64)>) -> Embedding2D {
    let points = models
        .into_iter()
        .map(|(id, params, accuracy)| Point { id: id.into(), x: math::log10(params.max(1) as f64), y: accuracy })
        .collect();
    Embedding2D { projection: Projection::Interpretable, points, base_ids: Vec::new(), fit: None }
}

fn projection_for(metric: Metric) -> Projection {
    match metric {
        Metric::Structural => Projection::Structural,
        Metric::Prediction => Projection::Prediction,
    }
}

/// Torgerson scaling onto the top two eigen-axes; each axis is flipped so its
/// largest-magnitude coordinate is positive.
pub fn classical_mds(matrix: &DistanceMatrix) -> Result<Embedding2D, EmbeddingError> {
    let n = matrix.len();
    if n < 3 {
        return Err(EmbeddingError::TooFewPoints(n));
    }
    let b = double_center(&matrix.values, n);
    let (values, vectors) = symmetric_eigen(&b, n);
    let mut axes = [vec![0.0; n], vec![0.0; n]];
    for (k, axis) in axes.iter_mut().enumerate() {
        let lambda = values[k];
        if lambda <= 0.0 {
            continue;
        }
        let scale = math::sqrt(lambda);
        for (a, v) in axis.iter_mut().zip(&vectors[k]) {
            *a = v * scale;
        }
        let mut pivot = 0;
        for i in 1..n {
            if axis[i].abs() > axis[pivot].abs() {
                pivot = i;
            }
        }
        if axis[pivot] < 0.0 {
            axis.iter_mut().for_each(|a| *a = -*a);
        }
    }
    let min_eigenvalue = values.last().copied().unwrap_or(0.0).min(0.0);
    let points = matrix
        .ids
        .iter()
        .enumerate()
        .map(|(i, id)| Point { id: id.clone(), x: axes[0][i], y: axes[1][i] })
        .collect();
    Ok(Embedding2D {
        projection: projection_for(matrix.metric),
        points,
        base_ids: matrix.ids.clone(),
        fit: Some(MdsFit { eigenvalues: [values[0], values[1]], min_eigenvalue, degenerate: values[0] <= 0.0 }),
    })
}

/// Position minimizing raw stress to the fitted base points, which stay fixed.
pub fn out_of_sample(embedding: &Embedding2D, distances_to_base: &[f64]) -> Result<(f64, f64), EmbeddingError> {
    if embedding.fit.is_none() {
        return Err(EmbeddingError::NotFitted);
    }
    if distances_to_base.len() != embedding.base_ids.len() {
        return Err(EmbeddingError::LengthMismatch {
            expected: embedding.base_ids.len(),
            found: distances_to_base.len(),
        });
    }
    if let Some(i) = distances_to_base.iter().position(|d| !(d.is_finite() && *d >= 0.0)) {
        return Err(EmbeddingError::NonFiniteDistance(i));
    }
    let y = oos::place(&embedding.base_coords(), distances_to_base);
    Ok((y[0], y[1]))
}

/// Brings an MDS overview up to date with `matrix`.
///
/// The base is fitted once; models added later are inserted out-of-sample.
/// Passing `refit = true` refits over every model in the matrix.
/// Returns `None` while fewer than three models exist.
pub fn refresh(
    current: Option<Embedding2D>,
    matrix: &DistanceMatrix,
    refit: bool,
) -> Result<Option<Embedding2D>, EmbeddingError> {
    let mut embedding = match current {
        Some(e) if !refit => e,
        _ => {
            if matrix.len() < 3 {
                return Ok(None);
            }
            return classical_mds(matrix).map(Some);
        }
    };
    let base_index: Vec<usize> = embedding
        .base_ids
        .iter()
        .map(|id| matrix.index_of(id).ok_or_else(|| EmbeddingError::UnknownModel(id.clone())))
        .collect::<Result<_, _>>()?;
    for (i, id) in matrix.ids.iter().enumerate() {
        if embedding.contains(id) {
            continue;
        }
        let row: Vec<f64> = base_index.iter().map(|&b| matrix.get(i, b)).collect();
        embedding.insert(id.clone(), &row)?;
    }
    Ok(Some(embedding))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::string::ToString;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn matrix_from_points(points: &[[f64; 2]]) -> DistanceMatrix {
        let ids = (0..points.len()).map(|i| format!("p{i}")).collect();
        let rows: Vec<Vec<f64>> = points
            .iter()
            .map(|a| points.iter().map(|b| libm::hypot(a[0] - b[0], a[1] - b[1])).collect())
            .collect();
        DistanceMatrix::from_rows(Metric::Structural, ids, &rows).unwrap()
    }

    fn recovered(e: &Embedding2D, i: usize, j: usize) -> f64 {
        libm::hypot(e.points[i].x - e.points[j].x, e.points[i].y - e.points[j].y)
    }

    fn explicit(rows: &[Vec<f64>]) -> DistanceMatrix {
        let ids = (0..rows.len()).map(|i| i.to_string()).collect();
        DistanceMatrix::from_rows(Metric::Prediction, ids, rows).unwrap()
    }

    #[test]
    fn interpretable_axes() {
        let e = interpretable_projection([("a", 8300, 0.91), ("b", 1, 0.5)]);
        assert!((e.points[0].x - 3.919).abs() < 1e-3);
        assert_eq!(e.points[0].y, 0.91);
        assert_eq!(e.points[1].x, 0.0);
    }

    #[test]
    fn collinear_and_equilateral() {
        let line = explicit(&[vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 1.0], vec![2.0, 1.0, 0.0]]);
        let tri = explicit(&[vec![0.0, 1.0, 1.0], vec![1.0, 0.0, 1.0], vec![1.0, 1.0, 0.0]]);
        for m in [&line, &tri] {
            let e = classical_mds(m).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    assert!((recovered(&e, i, j) - m.get(i, j)).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn random_cloud_round_trip_and_centering() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<[f64; 2]> = (0..25).map(|_| [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)]).collect();
        let m = matrix_from_points(&pts);
        let e = classical_mds(&m).unwrap();
        for i in 0..pts.len() {
            for j in 0..pts.len() {
                assert!((recovered(&e, i, j) - m.get(i, j)).abs() < 1e-6);
            }
        }
        let mx: f64 = e.points.iter().map(|p| p.x).sum::<f64>() / 25.0;
        let my: f64 = e.points.iter().map(|p| p.y).sum::<f64>() / 25.0;
        assert!(mx.abs() < 1e-9 && my.abs() < 1e-9);
        assert_eq!(e, classical_mds(&m).unwrap());
        // largest-magnitude coordinate on each axis is positive
        let xs: Vec<f64> = e.points.iter().map(|p| p.x).collect();
        let big = xs.iter().copied().fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
        assert!(big > 0.0);
    }

    #[test]
    fn degenerate_spectrum_is_flagged() {
        let zero = explicit(&[vec![0.0; 3], vec![0.0; 3], vec![0.0; 3]]);
        let e = classical_mds(&zero).unwrap();
        assert!(e.fit.as_ref().unwrap().degenerate);
        assert!(e.points.iter().all(|p| p.x == 0.0 && p.y == 0.0));
        assert_eq!(classical_mds(&explicit(&[vec![0.0, 1.0], vec![1.0, 0.0]])), Err(EmbeddingError::TooFewPoints(2)));
    }

    fn two_point_base() -> Embedding2D {
        Embedding2D {
            projection: Projection::Structural,
            points: vec![Point { id: "l".into(), x: -1.0, y: 0.0 }, Point { id: "r".into(), x: 1.0, y: 0.0 }],
            base_ids: vec!["l".into(), "r".into()],
            fit: Some(MdsFit { eigenvalues: [2.0, 0.0], min_eigenvalue: 0.0, degenerate: false }),
        }
    }

    #[test]
    fn two_circle_intersection_prefers_positive_y() {
        let r2 = libm::sqrt(2.0);
        let (x, y) = out_of_sample(&two_point_base(), &[r2, r2]).unwrap();
        assert!(x.abs() < 1e-9 && (y - 1.0).abs() < 1e-9, "({x}, {y})");
    }

    #[test]
    fn symmetric_base_with_radius_distances_maps_to_origin() {
        let mut e = two_point_base();
        e.points.push(Point { id: "u".into(), x: 0.0, y: 1.0 });
        e.points.push(Point { id: "d".into(), x: 0.0, y: -1.0 });
        e.base_ids.extend(["u".into(), "d".into()]);
        let (x, y) = out_of_sample(&e, &[1.0; 4]).unwrap();
        assert!(x.abs() < 1e-9 && y.abs() < 1e-9);
    }

    #[test]
    fn self_embedding_and_stress_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let pts: Vec<[f64; 2]> = (0..15).map(|_| [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]).collect();
        let m = matrix_from_points(&pts);
        let e = classical_mds(&m).unwrap();
        for i in 0..pts.len() {
            let (x, y) = out_of_sample(&e, m.row(i)).unwrap();
            assert!((x - e.points[i].x).abs() < 1e-6 && (y - e.points[i].y).abs() < 1e-6);
        }
        let base: Vec<[f64; 2]> = e.points.iter().map(|p| [p.x, p.y]).collect();
        let delta: Vec<f64> = (0..15).map(|_| rng.gen_range(0.5..3.0)).collect();
        let (x, y) = out_of_sample(&e, &delta).unwrap();
        assert!(stress([x, y], &base, &delta) <= stress(weighted_centroid(&base, &delta), &base, &delta));
    }

    #[test]
    fn out_of_sample_rejects_bad_input() {
        let e = two_point_base();
        assert_eq!(out_of_sample(&e, &[1.0]), Err(EmbeddingError::LengthMismatch { expected: 2, found: 1 }));
        assert_eq!(out_of_sample(&e, &[1.0, f64::NAN]), Err(EmbeddingError::NonFiniteDistance(1)));
    }

    #[test]
    fn refresh_policy_inserts_then_refits() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<[f64; 2]> = (0..8).map(|_| [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]).collect();
        let base = matrix_from_points(&pts[..6]);
        let fitted = refresh(None, &base, false).unwrap().unwrap();
        assert_eq!(refresh(Some(fitted.clone()), &base, false).unwrap().unwrap(), fitted);

        let grown = matrix_from_points(&pts);
        let updated = refresh(Some(fitted.clone()), &grown, false).unwrap().unwrap();
        assert_eq!(updated.base_ids, fitted.base_ids);
        for id in &fitted.base_ids {
            assert_eq!(updated.get(id), fitted.get(id));
        }
        assert!(updated.contains("p7"));
        let full = refresh(Some(updated), &grown, true).unwrap().unwrap();
        assert_eq!(full.base_ids.len(), 8);
        assert!(refresh(None, &matrix_from_points(&pts[..2]), false).unwrap().is_none());
    }
}
