//! Adaptive random-walk Metropolis (with optional Gibbs blocks) over a
//! model's unconstrained parameter space, plus convergence diagnostics.

mod diagnostics;
mod draws;
mod engine;

pub use diagnostics::{diagnostics, effective_sample_size, split_rhat, ChainDiagnostics, ParamDiagnostics, RHAT_WARN};
pub use draws::{ColumnMeta, DrawMatrix};
pub use engine::{
    chain_rng, run_chains, run_chains_traced, Adaptation, ChainConfig, ParamSpec, SimRng, TargetModel, Update,
};
