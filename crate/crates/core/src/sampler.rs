//! Random architectures from a layer-to-layer Markov chain.
//!
//! The walk starts at `START`; at each step transitions that would produce an
//! invalid prefix are masked out and the row renormalized, the next layer kind
//! is drawn, and its hyperparameters are drawn one at a time, uniformly over
//! the grid values that still admit a valid layer.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arch::{validate_with, ActivationFn, Architecture, InputShape, LayerKind, LayerSpec, Limits};
use crate::codec::structure_key;

pub const DEFAULT_MAX_DEPTH: usize = 12;
const NUM_STATES: usize = 7;

/// Chain states in matrix order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum State {
    Start,
    Layer(LayerKind),
    End,
}

impl State {
    pub const ALL: [State; NUM_STATES] = [
        State::Start,
        State::Layer(LayerKind::Conv2d),
        State::Layer(LayerKind::MaxPool),
        State::Layer(LayerKind::Dense),
        State::Layer(LayerKind::Activation),
        State::Layer(LayerKind::Dropout),
        State::End,
    ];

    pub fn index(self) -> usize {
        match self {
            State::Start => 0,
            State::Layer(LayerKind::Conv2d) => 1,
            State::Layer(LayerKind::MaxPool) => 2,
            State::Layer(LayerKind::Dense) => 3,
            State::Layer(LayerKind::Activation) => 4,
            State::Layer(LayerKind::Dropout) => 5,
            State::End => 6,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            State::Start => "start",
            State::Layer(k) => k.name(),
            State::End => "end",
        }
    }

    fn from_name(s: &str) -> Option<State> {
        State::ALL.iter().copied().find(|st| st.name() == s)
    }
}

/// Hyperparameter grids per layer kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grids {
    pub conv2d: ConvGrid,
    pub max_pool: PoolGrid,
    pub dense: DenseGrid,
    pub activation: ActivationGrid,
    pub dropout: DropoutGrid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvGrid {
    pub filters: Vec<u32>,
    pub kernel: Vec<u32>,
    pub stride: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolGrid {
    pub pool: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseGrid {
    pub units: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActivationGrid {
    #[serde(rename = "fn")]
    pub functions: Vec<ActivationFn>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DropoutGrid {
    pub rate: Vec<f64>,
}

impl Default for Grids {
    fn default() -> Self {
        Grids {
            conv2d: ConvGrid { filters: alloc::vec![4, 8, 16, 32, 64], kernel: alloc::vec![3, 5], stride: alloc::vec![1] },
            max_pool: PoolGrid { pool: alloc::vec![2, 3] },
            dense: DenseGrid { units: alloc::vec![16, 32, 64, 128, 256] },
            activation: ActivationGrid { functions: ActivationFn::ALL.to_vec() },
            dropout: DropoutGrid { rate: alloc::vec![0.1, 0.25, 0.5] },
        }
    }
}

impl Grids {
    /// Every grid combination for `kind`, in grid order.
    pub fn candidates(&self, kind: LayerKind) -> Vec<LayerSpec> {
        let mut out = Vec::new();
        match kind {
            LayerKind::Conv2d => {
                for &filters in &self.conv2d.filters {
                    for &kernel in &self.conv2d.kernel {
                        for &stride in &self.conv2d.stride {
                            out.push(LayerSpec::conv(filters, kernel, stride));
                        }
                    }
                }
            }
            LayerKind::MaxPool => out.extend(self.max_pool.pool.iter().map(|&p| LayerSpec::pool(p))),
            LayerKind::Dense => out.extend(self.dense.units.iter().map(|&u| LayerSpec::dense(u))),
            LayerKind::Activation => out.extend(self.activation.functions.iter().map(|&f| LayerSpec::act(f))),
            LayerKind::Dropout => out.extend(self.dropout.rate.iter().map(|&r| LayerSpec::dropout(r))),
        }
        out
    }

    /// Whether every hyperparameter of `layer` is a grid value.
    pub fn contains(&self, layer: &LayerSpec) -> bool {
        self.candidates(layer.kind()).contains(layer)
    }

    fn is_empty_for(&self, kind: LayerKind) -> bool {
        self.candidates(kind).is_empty()
    }
}

/// Number of independently drawn hyperparameters per layer kind.
pub(crate) fn hyperparameter_count(kind: LayerKind) -> usize {
    match kind {
        LayerKind::Conv2d => 3,
        _ => 1,
    }
}

/// Hyperparameter `k` of `layer` as a comparable key.
pub(crate) fn hyperparameter_key(layer: &LayerSpec, k: usize) -> u64 {
    match (*layer, k) {
        (LayerSpec::Conv2d { filters, .. }, 0) => filters as u64,
        (LayerSpec::Conv2d { kernel, .. }, 1) => kernel as u64,
        (LayerSpec::Conv2d { stride, .. }, _) => stride as u64,
        (LayerSpec::MaxPool { pool }, _) => pool as u64,
        (LayerSpec::Dense { units }, _) => units as u64,
        (LayerSpec::Activation { function }, _) => function as u64,
        (LayerSpec::Dropout { rate }, _) => rate.to_bits(),
    }
}

/// Draws hyperparameters one at a time, each uniformly over the values that
/// still leave at least one candidate. Returns `None` if `candidates` is empty.
pub(crate) fn draw_hyperparameters<R: Rng>(candidates: &[LayerSpec], rng: &mut R) -> Option<LayerSpec> {
    let first = candidates.first()?;
    let mut remaining: Vec<LayerSpec> = candidates.to_vec();
    for k in 0..hyperparameter_count(first.kind()) {
        let mut values: Vec<u64> = Vec::new();
        for c in &remaining {
            let key = hyperparameter_key(c, k);
            if !values.contains(&key) {
                values.push(key);
            }
        }
        let chosen = values[rng.gen_range(0..values.len())];
        remaining.retain(|c| hyperparameter_key(c, k) == chosen);
    }
    remaining.first().copied()
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("row `{row}` sums to {sum}, expected 1")]
    RowSum { row: &'static str, sum: f64 },
    #[error("negative or non-finite probability in row `{row}`")]
    BadProbability { row: &'static str },
    #[error("transition dense -> {to} must be zero")]
    SpatialAfterDense { to: &'static str },
    #[error("END is not reachable from `{from}`")]
    EndUnreachable { from: &'static str },
    #[error("transitions into START are not allowed")]
    IntoStart,
    #[error("empty or out-of-range grid for {kind}")]
    BadGrid { kind: &'static str },
    #[error("unknown state `{0}`")]
    UnknownState(String),
    #[error("config parse error: {0}")]
    Parse(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransitionModel {
    /// Row-stochastic matrix indexed by [`State::index`]. The END row is ignored.
    pub probs: [[f64; NUM_STATES]; NUM_STATES],
    pub grids: Grids,
    pub max_depth: usize,
    pub limits: Limits,
}

impl Default for TransitionModel {
    fn default() -> Self {
        use LayerKind::*;
        let mut m = TransitionModel::empty(Grids::default());
        let rows: [(State, &[(State, f64)]); 6] = [
            (
                State::Start,
                &[
                    (State::Layer(Conv2d), 0.6),
                    (State::Layer(Dense), 0.2),
                    (State::Layer(Activation), 0.1),
                    (State::Layer(Dropout), 0.05),
                    (State::Layer(MaxPool), 0.05),
                ],
            ),
            (
                State::Layer(Conv2d),
                &[
                    (State::Layer(Activation), 0.4),
                    (State::Layer(MaxPool), 0.2),
                    (State::Layer(Conv2d), 0.15),
                    (State::Layer(Dense), 0.1),
                    (State::Layer(Dropout), 0.05),
                    (State::End, 0.1),
                ],
            ),
            (
                State::Layer(Activation),
                &[
                    (State::Layer(Conv2d), 0.25),
                    (State::Layer(MaxPool), 0.15),
                    (State::Layer(Dense), 0.25),
                    (State::Layer(Dropout), 0.15),
                    (State::End, 0.2),
                ],
            ),
            (
                State::Layer(MaxPool),
                &[
                    (State::Layer(Conv2d), 0.35),
                    (State::Layer(Dense), 0.25),
                    (State::Layer(Activation), 0.15),
                    (State::Layer(Dropout), 0.05),
                    (State::End, 0.2),
                ],
            ),
            (
                State::Layer(Dense),
                &[
                    (State::Layer(Activation), 0.3),
                    (State::Layer(Dropout), 0.2),
                    (State::Layer(Dense), 0.2),
                    (State::End, 0.3),
                ],
            ),
            (
                State::Layer(Dropout),
                &[
                    (State::Layer(Dense), 0.4),
                    (State::Layer(Conv2d), 0.2),
                    (State::Layer(Activation), 0.1),
                    (State::End, 0.3),
                ],
            ),
        ];
        for (from, cells) in rows {
            for &(to, p) in cells {
                m.set(from, to, p);
            }
        }
        m
    }
}

#[derive(Serialize, Deserialize)]
struct ModelConfig {
    max_depth: usize,
    transitions: BTreeMap<String, BTreeMap<String, f64>>,
    grids: Grids,
    #[serde(default)]
    limits: Option<Limits>,
}

impl TransitionModel {
    /// All-zero transitions (END absorbing) with the given grids.
    pub fn empty(grids: Grids) -> Self {
        let mut probs = [[0.0; NUM_STATES]; NUM_STATES];
        probs[State::End.index()][State::End.index()] = 1.0;
        TransitionModel { probs, grids, max_depth: DEFAULT_MAX_DEPTH, limits: Limits::default() }
    }

    pub fn set(&mut self, from: State, to: State, p: f64) {
        self.probs[from.index()][to.index()] = p;
    }

    pub fn prob(&self, from: State, to: State) -> f64 {
        self.probs[from.index()][to.index()]
    }

    pub fn check(&self) -> Result<(), ModelError> {
        for from in State::ALL {
            if from == State::End {
                continue;
            }
            let row = &self.probs[from.index()];
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(ModelError::BadProbability { row: from.name() });
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(ModelError::RowSum { row: from.name(), sum });
            }
            if row[State::Start.index()] != 0.0 {
                return Err(ModelError::IntoStart);
            }
        }
        let dense = State::Layer(LayerKind::Dense);
        for to in [LayerKind::Conv2d, LayerKind::MaxPool] {
            if self.prob(dense, State::Layer(to)) != 0.0 {
                return Err(ModelError::SpatialAfterDense { to: to.name() });
            }
        }
        // END must be reachable along positive-probability arcs.
        let mut reaches_end = [false; NUM_STATES];
        reaches_end[State::End.index()] = true;
        loop {
            let mut changed = false;
            for i in 0..NUM_STATES {
                if !reaches_end[i] && (0..NUM_STATES).any(|j| self.probs[i][j] > 0.0 && reaches_end[j]) {
                    reaches_end[i] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        if let Some(s) = State::ALL.iter().find(|s| !reaches_end[s.index()]) {
            return Err(ModelError::EndUnreachable { from: s.name() });
        }
        for kind in LayerKind::ALL {
            let reachable = State::ALL.iter().any(|s| *s != State::End && self.prob(*s, State::Layer(kind)) > 0.0);
            if reachable && self.grids.is_empty_for(kind) {
                return Err(ModelError::BadGrid { kind: kind.name() });
            }
            if self.grids.candidates(kind).iter().any(|l| !l.params_in_range()) {
                return Err(ModelError::BadGrid { kind: kind.name() });
            }
        }
        Ok(())
    }

    /// Parses the JSON config dialect and checks the invariants.
    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let cfg: ModelConfig = serde_json::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?;
        let mut m = TransitionModel::empty(cfg.grids);
        m.max_depth = cfg.max_depth;
        if let Some(l) = cfg.limits {
            m.limits = l;
        }
        for (from, row) in &cfg.transitions {
            let f = State::from_name(from).ok_or_else(|| ModelError::UnknownState(from.clone()))?;
            for (to, p) in row {
                let t = State::from_name(to).ok_or_else(|| ModelError::UnknownState(to.clone()))?;
                m.set(f, t, *p);
            }
        }
        m.check()?;
        Ok(m)
    }

    /// Canonical JSON config (zero cells omitted).
    pub fn to_json(&self) -> String {
        let mut transitions = BTreeMap::new();
        for from in State::ALL {
            if from == State::End {
                continue;
            }
            let row: BTreeMap<String, f64> = State::ALL
                .iter()
                .filter(|to| self.prob(from, **to) > 0.0)
                .map(|to| (to.name().to_string(), self.prob(from, *to)))
                .collect();
            transitions.insert(from.name().to_string(), row);
        }
        crate::codec::to_canonical(&ModelConfig {
            max_depth: self.max_depth,
            transitions,
            grids: self.grids.clone(),
            limits: Some(self.limits),
        })
    }

    /// Unmasked step: draws the successor of `from` from its row.
    pub fn step<R: Rng>(&self, from: State, rng: &mut R) -> State {
        let weights = self.probs[from.index()];
        choose_weighted(&weights, rng).map(|i| State::ALL[i]).unwrap_or(State::End)
    }
}

fn choose_weighted<R: Rng>(weights: &[f64; NUM_STATES], rng: &mut R) -> Option<usize> {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return None;
    }
    let r = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut last = None;
    for (i, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last = Some(i);
        if r < acc {
            return Some(i);
        }
    }
    last
}

/// Why a walk stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    End,
    MaxDepth,
    /// Masking emptied the row; the architecture is the valid prefix so far.
    DeadEnd,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sampled {
    pub architecture: Architecture,
    pub stop: StopReason,
}

/// Valid grid layers of `kind` that can be appended to `prefix`.
pub(crate) fn feasible_layers(
    grids: &Grids,
    limits: &Limits,
    input_shape: InputShape,
    num_classes: u32,
    prefix: &[LayerSpec],
    kind: LayerKind,
) -> Vec<LayerSpec> {
    let mut trial = Architecture {
        id: String::new(),
        input_shape,
        num_classes,
        layers: prefix.to_vec(),
        provenance: crate::arch::Provenance::Sampled,
        parent_id: None,
        created_at: 0,
    };
    trial.layers.push(LayerSpec::relu());
    let last = trial.layers.len() - 1;
    grids
        .candidates(kind)
        .into_iter()
        .filter(|c| {
            trial.layers[last] = *c;
            validate_with(&trial, limits).is_ok()
        })
        .collect()
}

pub fn sample_architecture(
    model: &TransitionModel,
    seed: u64,
    input_shape: InputShape,
    num_classes: u32,
) -> Sampled {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers: Vec<LayerSpec> = Vec::new();
    let mut state = State::Start;
    let stop = loop {
        if layers.len() >= model.max_depth {
            break StopReason::MaxDepth;
        }
        let row = model.probs[state.index()];
        let mut weights = [0.0; NUM_STATES];
        let mut options: [Vec<LayerSpec>; NUM_STATES] = Default::default();
        for (j, to) in State::ALL.iter().enumerate() {
            if row[j] <= 0.0 {
                continue;
            }
            match to {
                State::Start => {}
                State::End => weights[j] = row[j],
                State::Layer(kind) => {
                    let feasible =
                        feasible_layers(&model.grids, &model.limits, input_shape, num_classes, &layers, *kind);
                    if !feasible.is_empty() {
                        weights[j] = row[j];
                        options[j] = feasible;
                    }
                }
            }
        }
        let Some(next) = choose_weighted(&weights, &mut rng) else {
            break StopReason::DeadEnd;
        };
        match State::ALL[next] {
            State::End => break StopReason::End,
            s @ State::Layer(_) => {
                let layer = draw_hyperparameters(&options[next], &mut rng).expect("feasible set is nonempty");
                layers.push(layer);
                state = s;
            }
            State::Start => unreachable!("START column is masked"),
        }
    };
    Sampled { architecture: Architecture::new(input_shape, num_classes, layers), stop }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum SampleError {
    #[error("batch size must be at least 1")]
    EmptyBatch,
    #[error("only {found} distinct architectures after {attempts} attempts (wanted {wanted})")]
    InsufficientDiversity { wanted: usize, found: usize, attempts: usize },
}

/// `n` distinct architectures (by canonical structure), seeds `base_seed`,
/// `base_seed + 1`, ... up to `50 * n` attempts.
pub fn sample_batch(
    model: &TransitionModel,
    n: usize,
    base_seed: u64,
    input_shape: InputShape,
    num_classes: u32,
) -> Result<Vec<Architecture>, SampleError> {
    if n == 0 {
        return Err(SampleError::EmptyBatch);
    }
    let budget = 50 * n;
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(n);
    for attempt in 0..budget {
        let s = sample_architecture(model, base_seed.wrapping_add(attempt as u64), input_shape, num_classes);
        if seen.insert(structure_key(&s.architecture)) {
            out.push(s.architecture);
            if out.len() == n {
                return Ok(out);
            }
        }
    }
    Err(SampleError::InsufficientDiversity { wanted: n, found: out.len(), attempts: budget })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::validate;
    use alloc::vec;

    const MNIST14: InputShape = InputShape { height: 14, width: 14, channels: 1 };

    fn forced(path: &[(State, State)]) -> TransitionModel {
        let mut m = TransitionModel::empty(Grids::default());
        for &(a, b) in path {
            m.set(a, b, 1.0);
        }
        // Rows off the path still need to be stochastic.
        for s in State::ALL {
            if s != State::End && m.probs[s.index()].iter().sum::<f64>() == 0.0 {
                m.set(s, State::End, 1.0);
            }
        }
        m
    }

    #[test]
    fn default_model_is_well_formed() {
        TransitionModel::default().check().unwrap();
    }

    #[test]
    fn forced_dense_path() {
        let dense = State::Layer(LayerKind::Dense);
        let m = forced(&[(State::Start, dense), (dense, State::End)]);
        m.check().unwrap();
        for seed in 0..20 {
            let s = sample_architecture(&m, seed, MNIST14, 10);
            assert_eq!(s.stop, StopReason::End);
            assert_eq!(s.architecture.layers.len(), 1);
            assert!(m.grids.dense.units.contains(&match s.architecture.layers[0] {
                LayerSpec::Dense { units } => units,
                ref other => panic!("unexpected {other:?}"),
            }));
        }
    }

    #[test]
    fn zero_depth_gives_head_only() {
        let m = TransitionModel { max_depth: 0, ..TransitionModel::default() };
        let s = sample_architecture(&m, 3, MNIST14, 10);
        assert!(s.architecture.layers.is_empty());
        assert_eq!(s.stop, StopReason::MaxDepth);
    }

    #[test]
    fn forced_conv_chain_stops_at_depth() {
        let conv = State::Layer(LayerKind::Conv2d);
        let mut m = forced(&[(State::Start, conv), (conv, conv)]);
        m.max_depth = 3;
        let s = sample_architecture(&m, 11, MNIST14, 10);
        assert_eq!(s.architecture.layers.len(), 3);
        assert!(s.architecture.layers.iter().all(|l| l.kind() == LayerKind::Conv2d));
        assert_eq!(s.stop, StopReason::MaxDepth);
    }

    #[test]
    fn dead_end_returns_valid_prefix() {
        // Conv only, forever: 14 -> 12 -> ... until no kernel fits.
        let conv = State::Layer(LayerKind::Conv2d);
        let mut m = forced(&[(State::Start, conv), (conv, conv)]);
        m.max_depth = 32;
        let s = sample_architecture(&m, 5, MNIST14, 10);
        assert_eq!(s.stop, StopReason::DeadEnd);
        assert!(validate(&s.architecture).is_ok());
        assert!(s.architecture.layers.len() >= 3);
    }

    #[test]
    fn determinism() {
        let m = TransitionModel::default();
        for seed in 0..50 {
            let a = sample_architecture(&m, seed, MNIST14, 10).architecture;
            let b = sample_architecture(&m, seed, MNIST14, 10).architecture;
            assert_eq!(crate::codec::serialize(&a), crate::codec::serialize(&b));
        }
    }

    #[test]
    fn sweep_is_always_valid() {
        let m = TransitionModel::default();
        for seed in 0..1000 {
            let a = sample_architecture(&m, seed, MNIST14, 10).architecture;
            assert_eq!(validate(&a), Ok(()), "seed {seed}: {:?}", a.layers);
            let first_dense = a.layers.iter().position(|l| l.kind() == LayerKind::Dense);
            if let Some(d) = first_dense {
                assert!(a.layers[d..].iter().all(|l| !l.kind().is_spatial()));
            }
        }
    }

    #[test]
    fn batch_sizes() {
        let m = TransitionModel::default();
        let batch = sample_batch(&m, 100, 0, MNIST14, 10).unwrap();
        assert_eq!(batch.len(), 100);
        let keys: BTreeSet<_> = batch.iter().map(structure_key).collect();
        assert_eq!(keys.len(), 100);
        assert_eq!(sample_batch(&m, 1, 9, MNIST14, 10).unwrap().len(), 1);
        assert_eq!(sample_batch(&m, 0, 9, MNIST14, 10), Err(SampleError::EmptyBatch));
    }

    #[test]
    fn degenerate_model_lacks_diversity() {
        let dense = State::Layer(LayerKind::Dense);
        let mut m = forced(&[(State::Start, dense), (dense, State::End)]);
        m.grids.dense.units = vec![16];
        assert_eq!(
            sample_batch(&m, 2, 0, MNIST14, 10),
            Err(SampleError::InsufficientDiversity { wanted: 2, found: 1, attempts: 100 })
        );
    }

    #[test]
    fn empirical_transition_frequencies() {
        let m = TransitionModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        for from in State::ALL {
            if from == State::End {
                continue;
            }
            let mut counts = [0usize; NUM_STATES];
            let steps = 10_000;
            for _ in 0..steps {
                counts[m.step(from, &mut rng).index()] += 1;
            }
            for to in State::ALL {
                let freq = counts[to.index()] as f64 / steps as f64;
                assert!((freq - m.prob(from, to)).abs() <= 0.03, "{} -> {}: {freq}", from.name(), to.name());
            }
        }
    }

    #[test]
    fn config_round_trip_and_checks() {
        let m = TransitionModel::default();
        let text = m.to_json();
        let back = TransitionModel::from_json(&text).unwrap();
        assert_eq!(back, m);

        let bad = text.replacen("\"end\":0.3", "\"end\":0.2", 1);
        assert!(matches!(TransitionModel::from_json(&bad), Err(ModelError::RowSum { .. })));

        let mut spatial = TransitionModel::default();
        spatial.set(State::Layer(LayerKind::Dense), State::Layer(LayerKind::Conv2d), 0.1);
        spatial.set(State::Layer(LayerKind::Dense), State::End, 0.2);
        assert_eq!(spatial.check(), Err(ModelError::SpatialAfterDense { to: "conv2d" }));

        let mut stuck = TransitionModel::empty(Grids::default());
        let conv = State::Layer(LayerKind::Conv2d);
        stuck.set(State::Start, conv, 1.0);
        stuck.set(conv, conv, 1.0);
        for s in [LayerKind::MaxPool, LayerKind::Dense, LayerKind::Activation, LayerKind::Dropout] {
            stuck.set(State::Layer(s), State::End, 1.0);
        }
        assert_eq!(stuck.check(), Err(ModelError::EndUnreachable { from: "start" }));
    }

    #[test]
    fn hyperparameters_drawn_per_dimension() {
        let grids = Grids::default();
        let cands = grids.candidates(LayerKind::Conv2d);
        assert_eq!(cands.len(), 10);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut seen_k5 = false;
        for _ in 0..200 {
            let l = draw_hyperparameters(&cands, &mut rng).unwrap();
            assert!(grids.contains(&l));
            seen_k5 |= matches!(l, LayerSpec::Conv2d { kernel: 5, .. });
        }
        assert!(seen_k5);
    }
}
