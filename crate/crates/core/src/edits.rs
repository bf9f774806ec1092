//! Model-generation operators: ablations, random single-edit variations and
//! strict handcrafted edits.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arch::{validate_with, Architecture, LayerKind, LayerSpec, Limits, Provenance, Violation};
use crate::codec::structure_key;
use crate::sampler::{hyperparameter_count, hyperparameter_key, Grids};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditKind {
    /// Insert a new layer before `target_index` (handle `n` = just before the head).
    Prepend,
    Remove,
    Replace,
    Reparameterize,
}

impl EditKind {
    pub const ALL: [EditKind; 4] = [EditKind::Prepend, EditKind::Remove, EditKind::Replace, EditKind::Reparameterize];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EditOp {
    pub op: EditKind,
    pub target_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<LayerSpec>,
    /// Allows off-grid payload hyperparameters.
    #[serde(default, skip_serializing_if = "core::ops::Not::not")]
    pub custom: bool,
}

impl EditOp {
    pub fn prepend(at: usize, layer: LayerSpec) -> Self {
        EditOp { op: EditKind::Prepend, target_index: at, payload: Some(layer), custom: false }
    }

    pub fn remove(at: usize) -> Self {
        EditOp { op: EditKind::Remove, target_index: at, payload: None, custom: false }
    }

    pub fn replace(at: usize, layer: LayerSpec) -> Self {
        EditOp { op: EditKind::Replace, target_index: at, payload: Some(layer), custom: false }
    }

    pub fn reparameterize(at: usize, layer: LayerSpec) -> Self {
        EditOp { op: EditKind::Reparameterize, target_index: at, payload: Some(layer), custom: false }
    }

    pub fn custom(mut self) -> Self {
        self.custom = true;
        self
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error, Serialize, Deserialize)]
#[serde(tag = "error", rename_all = "snake_case")]
pub enum EditError {
    #[error("no layers selected")]
    EmptySelection,
    #[error("index {index} out of bounds for {len} layers")]
    IndexOutOfBounds { index: usize, len: usize },
    #[error("edit result is invalid")]
    InvalidResult { violations: Vec<Violation> },
    #[error("{op:?} needs a payload layer")]
    MissingPayload { op: EditKind },
    #[error("payload hyperparameters are off-grid; mark the edit custom to allow them")]
    OffGrid,
    #[error("reparameterize cannot change the layer kind")]
    KindChange,
    #[error("variation constraints list {given} layers but the parent has {expected}")]
    ConstraintLength { given: usize, expected: usize },
    #[error("no (layer, op) pair is enabled")]
    NothingEnabled,
}

/// Layers of `arch` after `edit`, without validation.
fn edited_layers(arch: &Architecture, edit: &EditOp, grids: &Grids) -> Result<Vec<LayerSpec>, EditError> {
    let n = arch.layers.len();
    let limit = if edit.op == EditKind::Prepend { n } else { n.saturating_sub(1) };
    if edit.target_index > limit || (edit.op != EditKind::Prepend && n == 0) {
        return Err(EditError::IndexOutOfBounds { index: edit.target_index, len: n });
    }
    let mut layers = arch.layers.clone();
    if edit.op == EditKind::Remove {
        layers.remove(edit.target_index);
        return Ok(layers);
    }
    let payload = edit.payload.ok_or(EditError::MissingPayload { op: edit.op })?;
    if !edit.custom && !grids.contains(&payload) {
        return Err(EditError::OffGrid);
    }
    match edit.op {
        EditKind::Prepend => layers.insert(edit.target_index, payload),
        EditKind::Replace => layers[edit.target_index] = payload,
        EditKind::Reparameterize => {
            if layers[edit.target_index].kind() != payload.kind() {
                return Err(EditError::KindChange);
            }
            layers[edit.target_index] = payload;
        }
        EditKind::Remove => unreachable!(),
    }
    Ok(layers)
}

/// Applies one handcrafted edit. The result must validate; nothing is repaired.
pub fn apply_edit(
    arch: &Architecture,
    edit: &EditOp,
    grids: &Grids,
    limits: &Limits,
) -> Result<Architecture, EditError> {
    let layers = edited_layers(arch, edit, grids)?;
    let child = arch.derive(layers, Provenance::Handcrafted);
    validate_with(&child, limits).map_err(|violations| EditError::InvalidResult { violations })?;
    Ok(child)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedAblation {
    pub index: usize,
    pub violations: Vec<Violation>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationSet {
    /// `(removed layer index, child)` in ascending index order.
    pub children: Vec<(usize, Architecture)>,
    pub skipped: Vec<SkippedAblation>,
}

/// One child per selected index with exactly that layer removed.
pub fn ablations(parent: &Architecture, selected: &BTreeSet<usize>, limits: &Limits) -> Result<AblationSet, EditError> {
    if selected.is_empty() {
        return Err(EditError::EmptySelection);
    }
    let n = parent.layers.len();
    if let Some(&bad) = selected.iter().find(|&&i| i >= n) {
        return Err(EditError::IndexOutOfBounds { index: bad, len: n });
    }
    let mut set = AblationSet { children: Vec::new(), skipped: Vec::new() };
    for &index in selected {
        let mut layers = parent.layers.clone();
        layers.remove(index);
        let child = parent.derive(layers, Provenance::Ablation);
        match validate_with(&child, limits) {
            Ok(()) => set.children.push((index, child)),
            Err(violations) => set.skipped.push(SkippedAblation { index, violations }),
        }
    }
    Ok(set)
}

/// Which edits variations may apply, per parent layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariationConstraints {
    /// Allowed ops for each parent layer (prepend means "insert before this layer").
    pub layers: Vec<BTreeSet<EditKind>>,
    /// Allow inserting a layer right before the classifier head.
    #[serde(default)]
    pub head_prepend: bool,
    pub n_children: usize,
    pub seed: u64,
}

impl VariationConstraints {
    /// Every op on every layer, plus insertion before the head.
    pub fn unconstrained(parent: &Architecture, n_children: usize, seed: u64) -> Self {
        VariationConstraints {
            layers: parent.layers.iter().map(|_| EditKind::ALL.iter().copied().collect()).collect(),
            head_prepend: true,
            n_children,
            seed,
        }
    }

    /// Only `ops` on the listed layer, nothing else.
    pub fn only(parent: &Architecture, layer: usize, ops: &[EditKind], n_children: usize, seed: u64) -> Self {
        let mut layers: Vec<BTreeSet<EditKind>> = parent.layers.iter().map(|_| BTreeSet::new()).collect();
        if let Some(slot) = layers.get_mut(layer) {
            slot.extend(ops.iter().copied());
        }
        VariationConstraints { layers, head_prepend: false, n_children, seed }
    }

    fn enabled_pairs(&self) -> Vec<(usize, EditKind)> {
        let mut pairs: Vec<(usize, EditKind)> = Vec::new();
        for (i, ops) in self.layers.iter().enumerate() {
            pairs.extend(ops.iter().map(|op| (i, *op)));
        }
        if self.head_prepend {
            pairs.push((self.layers.len(), EditKind::Prepend));
        }
        pairs
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariationChild {
    pub edit: EditOp,
    pub architecture: Architecture,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariationSet {
    pub children: Vec<VariationChild>,
    /// Set when the attempt budget ran out before `n_children` were found.
    pub exhausted: Option<BudgetExhausted>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetExhausted {
    pub wanted: usize,
    pub found: usize,
    pub attempts: usize,
    pub rejected_invalid: usize,
    pub rejected_duplicate: usize,
}

fn random_grid_layer<R: Rng>(grids: &Grids, rng: &mut R) -> Option<LayerSpec> {
    let kind = LayerKind::ALL[rng.gen_range(0..LayerKind::ALL.len())];
    crate::sampler::draw_hyperparameters(&grids.candidates(kind), rng)
}

/// Another grid value for one hyperparameter of `layer`.
fn reparameterized<R: Rng>(layer: &LayerSpec, grids: &Grids, rng: &mut R) -> Option<LayerSpec> {
    let candidates = grids.candidates(layer.kind());
    let dims = hyperparameter_count(layer.kind());
    // Dimensions that have at least one alternative grid value.
    let mut options: Vec<(usize, Vec<LayerSpec>)> = Vec::new();
    for k in 0..dims {
        let mut alts: Vec<LayerSpec> = Vec::new();
        let mut keys: Vec<u64> = Vec::new();
        for c in &candidates {
            let differs_only_in_k = (0..dims).all(|j| j == k || hyperparameter_key(c, j) == hyperparameter_key(layer, j));
            let key = hyperparameter_key(c, k);
            if differs_only_in_k && key != hyperparameter_key(layer, k) && !keys.contains(&key) {
                keys.push(key);
                alts.push(*c);
            }
        }
        // Off-grid layers: any grid value for this dimension, other params kept.
        if alts.is_empty() && !grids.contains(layer) {
            alts.extend(off_grid_alternatives(layer, k, grids));
        }
        if !alts.is_empty() {
            options.push((k, alts));
        }
    }
    if options.is_empty() {
        return None;
    }
    let (_, alts) = &options[rng.gen_range(0..options.len())];
    Some(alts[rng.gen_range(0..alts.len())])
}

fn off_grid_alternatives(layer: &LayerSpec, k: usize, grids: &Grids) -> Vec<LayerSpec> {
    let mut out = Vec::new();
    match (*layer, k) {
        (LayerSpec::Conv2d { kernel, stride, .. }, 0) => {
            out.extend(grids.conv2d.filters.iter().map(|&f| LayerSpec::conv(f, kernel, stride)))
        }
        (LayerSpec::Conv2d { filters, stride, .. }, 1) => {
            out.extend(grids.conv2d.kernel.iter().map(|&kk| LayerSpec::conv(filters, kk, stride)))
        }
        (LayerSpec::Conv2d { filters, kernel, .. }, _) => {
            out.extend(grids.conv2d.stride.iter().map(|&s| LayerSpec::conv(filters, kernel, s)))
        }
        _ => out.extend(grids.candidates(layer.kind())),
    }
    out.retain(|c| c != layer);
    out
}

/// Children that each differ from `parent` by exactly one random edit drawn
/// uniformly from the enabled `(layer, op)` pairs.
pub fn variations(
    parent: &Architecture,
    constraints: &VariationConstraints,
    grids: &Grids,
    limits: &Limits,
) -> Result<VariationSet, EditError> {
    if constraints.layers.len() != parent.layers.len() {
        return Err(EditError::ConstraintLength { given: constraints.layers.len(), expected: parent.layers.len() });
    }
    let pairs = constraints.enabled_pairs();
    if pairs.is_empty() {
        return Err(EditError::NothingEnabled);
    }
    let wanted = constraints.n_children;
    let budget = 20 * wanted;
    let mut rng = ChaCha8Rng::seed_from_u64(constraints.seed);
    let mut seen: BTreeSet<String> = BTreeSet::new();
    seen.insert(structure_key(parent));
    let mut children = Vec::new();
    let (mut invalid, mut duplicate) = (0, 0);
    let mut attempts = 0;
    while children.len() < wanted && attempts < budget {
        attempts += 1;
        let (index, op) = pairs[rng.gen_range(0..pairs.len())];
        let payload = match op {
            EditKind::Remove => None,
            EditKind::Prepend | EditKind::Replace => random_grid_layer(grids, &mut rng),
            EditKind::Reparameterize => reparameterized(&parent.layers[index], grids, &mut rng),
        };
        if op != EditKind::Remove && payload.is_none() {
            invalid += 1;
            continue;
        }
        let edit = EditOp { op, target_index: index, payload, custom: true };
        let layers = match edited_layers(parent, &edit, grids) {
            Ok(l) => l,
            Err(_) => {
                invalid += 1;
                continue;
            }
        };
        let child = parent.derive(layers, Provenance::Variation);
        if validate_with(&child, limits).is_err() {
            invalid += 1;
            continue;
        }
        if !seen.insert(structure_key(&child)) {
            duplicate += 1;
            continue;
        }
        let custom = payload.is_some_and(|p| !grids.contains(&p));
        let edit = EditOp { custom, ..edit };
        children.push(VariationChild { edit, architecture: child });
    }
    let exhausted = (children.len() < wanted).then_some(BudgetExhausted {
        wanted,
        found: children.len(),
        attempts,
        rejected_invalid: invalid,
        rejected_duplicate: duplicate,
    });
    Ok(VariationSet { children, exhausted })
}
