//! Fine-grained entity type classification over mention spans.
//!
//! The crate implements a family of multi-label classifiers that assign
//! hierarchical type paths (e.g. `/person/artist`) to entity mentions in
//! context: a sparse hand-crafted-feature baseline, three neural context
//! encoders (averaging, LSTM, attentive bi-LSTM), hybrid variants that fuse
//! both feature kinds, and a hierarchical label encoding that shares
//! parameters between related types. Training is plain single-threaded
//! Adam over analytic gradients, verifiable with the built-in
//! finite-difference checker.

pub mod analysis;
pub mod corpus;
pub mod encoders;
pub mod features;
pub mod labels;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod synth;

pub use corpus::{ClusterTable, EmbeddingTable, MentionInstance};
pub use encoders::{AttentionWeights, ContextWindows, EncoderKind};
pub use labels::{HierarchyMatrix, TypePath, TypeSystem};
pub use model::{Model, ModelConfig, Prediction};
pub use numerics::{Mode, Parameter, Tensor};
