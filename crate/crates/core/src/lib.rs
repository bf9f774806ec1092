//! Core engine for human-steered search over small sequential image classifiers.
//!
//! Everything in this crate is pure computation over owned values and builds
//! without `std` (only `alloc` is required):
//!
//! - [`arch`]: the layer/architecture data model, shape inference, validation
//!   and parameter counting.
//! - [`codec`]: the canonical JSON text form and structural fingerprints.
//! - [`snac`]: the compact per-layer chip encoding consumed by the UI.
//! - [`sampler`]: the layer-to-layer Markov chain used to seed a session.
//! - [`edits`]: ablations, random single-edit variations and handcrafted edits.
//! - [`trainer`]: a from-scratch CNN trainer plus a deterministic surrogate.
//! - [`metrics`]: structural (optimal transport) and prediction distances.
//! - [`embedding`]: interpretable axes, classical MDS and out-of-sample insertion.
//! - [`pareto`]: accuracy-versus-size dominance.
//!
//! IO, persistence, the HTTP service and the CLI live in the `remap` crate.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod arch;
pub mod codec;
pub mod edits;
pub mod embedding;
pub mod metrics;
pub mod pareto;
pub mod sampler;
pub mod snac;
pub mod trainer;

mod math;

pub use arch::{
    count_parameters, infer_shapes, validate, validate_with, ActivationFn, Architecture,
    InputShape, LayerKind, LayerSpec, Limits, Provenance, Shape, ShapeError, Violation,
};
pub use codec::{deserialize, serialize, structure_key, DecodeError};
pub use edits::{ablations, apply_edit, variations, EditError, EditKind, EditOp, VariationConstraints};
pub use embedding::{classical_mds, interpretable_projection, out_of_sample, Embedding2D, Projection};
pub use metrics::{otmann_distance, prediction_distance, DistanceMatrix, Metric};

pub use sampler::{sample_architecture, sample_batch, Grids, TransitionModel};
pub use snac::{snac_encoding, SnacChipSequence};
pub use trainer::{train, Dataset, TrainingConfig, TrainingRecord};
