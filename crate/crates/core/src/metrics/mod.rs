//! Structural and prediction distances between models, and pairwise matrices.

mod otmann;
mod transport;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::arch::{Architecture, ShapeError, Violation};

pub use otmann::{
    mass_profile, otmann_distance, otmann_distance_with, transport_problem, LayerGroup, LayerMassProfile, OtmannParams,
    ProfileEntry,
};
pub use transport::{TransportPlan, TransportProblem};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Structural,
    Prediction,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Structural => "structural",
            Metric::Prediction => "prediction",
        }
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("prediction vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("prediction vectors are empty")]
    Empty,
    #[error("model {0} has no predictions")]
    MissingPredictions(String),
    #[error("architecture is invalid: {0:?}")]
    Invalid(Vec<Violation>),
    #[error(transparent)]
    Shape(ShapeError),
    #[error("models given do not match the matrix ids")]
    IdMismatch,
}

/// Fraction of positions where the two label vectors disagree.
pub fn prediction_distance(p: &[u32], q: &[u32]) -> Result<f64, MetricError> {
    if p.len() != q.len() {
        return Err(MetricError::LengthMismatch(p.len(), q.len()));
    }
    if p.is_empty() {
        return Err(MetricError::Empty);
    }
    let differ = p.iter().zip(q).filter(|(a, b)| a != b).count();
    Ok(differ as f64 / p.len() as f64)
}

/// One model as seen by the distance functions.
#[derive(Clone, Copy, Debug)]
pub struct ModelRef<'a> {
    pub id: &'a str,
    pub arch: &'a Architecture,
    pub predictions: Option<&'a [u32]>,
}

pub fn model_distance(metric: Metric, a: &ModelRef<'_>, b: &ModelRef<'_>) -> Result<f64, MetricError> {
    match metric {
        Metric::Structural => otmann_distance(a.arch, b.arch),
        Metric::Prediction => {
            let p = a.predictions.ok_or_else(|| MetricError::MissingPredictions(a.id.into()))?;
            let q = b.predictions.ok_or_else(|| MetricError::MissingPredictions(b.id.into()))?;
            prediction_distance(p, q)
        }
    }
}

/// Symmetric, zero-diagonal matrix over a list of model ids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    pub metric: Metric,
    pub ids: Vec<String>,
    /// Row-major `n * n` values.
    pub values: Vec<f64>,
}

impl DistanceMatrix {
    pub fn empty(metric: Metric) -> Self {
        DistanceMatrix { metric, ids: Vec::new(), values: Vec::new() }
    }

    /// Builds from a full square matrix, checking it is a valid distance table.
    pub fn from_rows(metric: Metric, ids: Vec<String>, rows: &[Vec<f64>]) -> Option<Self> {
        let n = ids.len();
        if rows.len() != n || rows.iter().any(|r| r.len() != n) {
            return None;
        }
        for i in 0..n {
            if rows[i][i] != 0.0 {
                return None;
            }
            for j in 0..n {
                if !(rows[i][j].is_finite() && rows[i][j] >= 0.0 && rows[i][j] == rows[j][i]) {
                    return None;
                }
            }
        }
        Some(DistanceMatrix { metric, ids, values: rows.concat() })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.len() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.len();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.row(i).to_vec()).collect()
    }
}

/// All pairwise distances; each unordered pair is evaluated once.
pub fn distance_matrix(models: &[ModelRef<'_>], metric: Metric) -> Result<DistanceMatrix, MetricError> {
    let n = models.len();
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let d = model_distance(metric, &models[i], &models[j])?;
            values[i * n + j] = d;
            values[j * n + i] = d;
        }
    }
    Ok(DistanceMatrix { metric, ids: models.iter().map(|m| m.id.into()).collect(), values })
}

/// Distances from `new` to every model already in the matrix, in matrix order.
pub fn distances_to(matrix_models: &[ModelRef<'_>], new: &ModelRef<'_>, metric: Metric) -> Result<Vec<f64>, MetricError> {
    matrix_models.iter().map(|m| model_distance(metric, m, new)).collect()
}

/// Adds one row and column for `new`; `existing` must list the matrix models in order.
pub fn append_row(matrix: &mut DistanceMatrix, existing: &[ModelRef<'_>], new: &ModelRef<'_>) -> Result<(), MetricError> {
    if existing.len() != matrix.len() || existing.iter().zip(&matrix.ids).any(|(m, id)| m.id != id) {
        return Err(MetricError::IdMismatch);
    }
    let row = distances_to(existing, new, matrix.metric)?;
    append_distances(matrix, new.id.into(), &row);
    Ok(())
}

/// Adds one row and column from precomputed distances.
pub fn append_distances(matrix: &mut DistanceMatrix, id: String, row: &[f64]) {
    let n = matrix.len();
    let mut values = Vec::with_capacity((n + 1) * (n + 1));
    for i in 0..n {
        values.extend_from_slice(matrix.row(i));
        values.push(row[i]);
    }
    values.extend_from_slice(row);
    values.push(0.0);
    matrix.values = values;
    matrix.ids.push(id);
}
