//! Variational f-divergence estimation with kernel-restricted test functions.

// Negated comparisons are deliberate: they reject NaN. Published coefficient
// tables are kept digit for digit.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod error;
pub mod estimators;
pub mod experiment;
pub mod generators;
pub mod kernels;
pub mod numerics;
pub mod oracle;
pub mod sampling;
pub mod simplex;

pub use error::{Error, Result};
pub use estimators::{EstimateResult, EstimatorConfig, KernelRule, LambdaRule};
pub use experiment::{EstimatorKind, ExperimentConfig, ResultRecord, Summary};
pub use generators::{make_generator, BetaParams, DivergenceGenerator};
pub use kernels::{GramBlocks, KernelSpec};
pub use sampling::{SampleMatrix, SeededStream};
pub use simplex::{SimplexWeights, SolverOptions, SolverReport};
