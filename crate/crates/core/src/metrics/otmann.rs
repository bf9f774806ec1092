//! Optimal-transport distance between sequential architectures.
//!
//! Every layer (and the classifier head) becomes a point carrying mass
//! `log10(1 + params)` for conv/dense layers and `1` for the others. Mass
//! moves between layers of the same group at `label_cost + |pos_a - pos_b|`;
//! mass left unmatched on either side pays `nu` per unit.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::transport::TransportProblem;
use super::MetricError;
use crate::arch::{parameter_breakdown, validate, Architecture, LayerSpec};
use crate::codec::structure_key;
use crate::math;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerGroup {
    Spatial,
    Dense,
    Activation,
    Regularization,
}

/// Mismatch costs and the non-assignment penalty.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OtmannParams {
    pub same_kind_cost: f64,
    pub same_group_cost: f64,
    pub nu: f64,
}

impl Default for OtmannParams {
    fn default() -> Self {
        OtmannParams { same_kind_cost: 0.1, same_group_cost: 0.25, nu: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileEntry {
    pub mass: f64,
    pub group: LayerGroup,
    pub position: f64,
    /// The head is represented as `Dense(num_classes)`.
    pub layer: LayerSpec,
}

pub type LayerMassProfile = Vec<ProfileEntry>;

fn group(layer: &LayerSpec) -> LayerGroup {
    match layer {
        LayerSpec::Conv2d { .. } | LayerSpec::MaxPool { .. } => LayerGroup::Spatial,
        LayerSpec::Dense { .. } => LayerGroup::Dense,
        LayerSpec::Activation { .. } => LayerGroup::Activation,
        LayerSpec::Dropout { .. } => LayerGroup::Regularization,
    }
}

pub fn mass_profile(arch: &Architecture) -> Result<LayerMassProfile, MetricError> {
    validate(arch).map_err(MetricError::Invalid)?;
    let params = parameter_breakdown(arch).map_err(MetricError::Shape)?;
    let layers = arch.layers.iter().cloned().chain(core::iter::once(LayerSpec::dense(arch.num_classes)));
    let n = arch.layers.len() + 1;
    Ok(layers
        .zip(params)
        .enumerate()
        .map(|(i, (layer, p))| {
            let mass = match layer {
                LayerSpec::Conv2d { .. } | LayerSpec::Dense { .. } => math::log10(1.0 + p as f64),
                _ => 1.0,
            };
            let position = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
            ProfileEntry { mass, group: group(&layer), position, layer }
        })
        .collect())
}

fn label_cost(a: &ProfileEntry, b: &ProfileEntry, params: &OtmannParams) -> Option<f64> {
    if a.group != b.group {
        None
    } else if a.layer == b.layer {
        Some(0.0)
    } else if a.layer.kind() == b.layer.kind() {
        Some(params.same_kind_cost)
    } else {
        Some(params.same_group_cost)
    }
}

/// The balanced problem: each side gets a dummy node holding the other side's total mass.
pub fn transport_problem(a: &LayerMassProfile, b: &LayerMassProfile, params: &OtmannParams) -> TransportProblem {
    let total_a: f64 = a.iter().map(|e| e.mass).sum();
    let total_b: f64 = b.iter().map(|e| e.mass).sum();
    let mut supply: Vec<f64> = a.iter().map(|e| e.mass).collect();
    supply.push(total_b);
    let mut demand: Vec<f64> = b.iter().map(|e| e.mass).collect();
    demand.push(total_a);
    let mut cost = vec![vec![None; b.len() + 1]; a.len() + 1];
    for (i, ea) in a.iter().enumerate() {
        for (j, eb) in b.iter().enumerate() {
            cost[i][j] = label_cost(ea, eb, params).map(|l| l + math::abs(ea.position - eb.position));
        }
        cost[i][b.len()] = Some(params.nu);
    }
    for j in 0..b.len() {
        cost[a.len()][j] = Some(params.nu);
    }
    cost[a.len()][b.len()] = Some(0.0);
    TransportProblem { supply, demand, cost }
}

/// Structural distance with the default coefficients.
pub fn otmann_distance(a: &Architecture, b: &Architecture) -> Result<f64, MetricError> {
    otmann_distance_with(a, b, &OtmannParams::default())
}

pub fn otmann_distance_with(a: &Architecture, b: &Architecture, params: &OtmannParams) -> Result<f64, MetricError> {
    let (ka, kb) = (structure_key(a), structure_key(b));
    let (first, second) = match ka.cmp(&kb) {
        core::cmp::Ordering::Equal => {
            validate(a).map_err(MetricError::Invalid)?;
            return Ok(0.0);
        }
        core::cmp::Ordering::Less => (a, b),
        core::cmp::Ordering::Greater => (b, a),
    };
    let pa = mass_profile(first)?;
    let pb = mass_profile(second)?;
    Ok(transport_problem(&pa, &pb, params).solve().objective.max(0.0))
}
