//! Contractive coupled dynamics for graph neural networks: an adjacency
//! matrix evolved by a permutation-equivariant contractive Euler step,
//! coupled with graph-gradient feature diffusion.

// `!(x >= 0.0)` style checks are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod activation;
pub mod adjacency;
pub mod error;
pub mod features;
pub mod graph;
pub mod io;
pub mod linalg;
pub mod network;
pub mod robustness;
pub mod sampling;
pub mod sbm;
pub mod train;
pub mod verify;

pub use activation::LeakyRelu;
pub use adjacency::{
    adjacency_step, build_t, equivariant_linear, jacobian_l1_probe, max_step_adjacency, operator_l1_norm,
    AdjacencyStepConfig, EquivariantCoeffs,
};
pub use error::{CsgnnError, Result};
pub use features::{
    energy, feature_step, graph_gradient, graph_gradient_adjoint, safe_feature_step, EdgeTensor, LayerParams,
    Parameterization,
};
pub use graph::{Graph, Permutation, PerturbationBudget};
pub use network::{
    certify, expansivity_bound, forward, ArchConfig, Certificate, ForwardTrace, LayerBlock, Mode, NetworkParams,
};
pub use robustness::{AttackKind, AttackSpec, GcnConfig, ModelConfig, ResultRow};
pub use sbm::{gen_sbm, SbmConfig};
pub use train::{train, EpochMetrics, TrainConfig, TrainOutcome};
pub use verify::{run_all, SuiteResult, VerifyConfig, VerifyReport};
