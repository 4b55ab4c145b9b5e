//! Meta-learning for support recovery in high-dimensional precision matrix
//! estimation.
//!
//! The method has two steps. Step one pools the samples of `K` auxiliary
//! tasks and estimates a single common precision matrix by l1-regularized
//! log-determinant divergence minimization; its support estimates the
//! support union of all tasks. Step two estimates the precision matrix of a
//! novel task under the constraints that its support is contained in the
//! recovered union and its diagonal is pinned to the step-one diagonal.
//!
//! The crate provides:
//!
//! * [`matops`] — dense symmetric linear algebra (Jacobi eigensolver,
//!   Cholesky, pair-indexed Kronecker blocks, matrix norms),
//! * [`model`] — precision matrices, support sets, samples, covariances and
//!   the recovery-success predicates,
//! * [`rng`] — a counter-based deterministic generator with named substreams,
//! * [`synth`] — seeded generators for random multi-task Gaussian families
//!   and the two hard-instance ensembles behind the lower bounds,
//! * [`solver`] — ADMM solvers for the pooled and support-constrained
//!   estimators with KKT certification,
//! * [`theory`] — closed-form constants, sufficient-sample bounds and
//!   information-theoretic lower bounds,
//! * [`harness`] — reproducible Monte-Carlo sweep pipelines,
//! * [`io`] — the JSON/CSV file formats shared with the CLI.

pub mod harness;
pub mod io;
pub mod matops;
pub mod model;
pub mod rng;
pub mod solver;
pub mod synth;
pub mod theory;

pub use matops::{norms, pd_factorize, sym_eigen, MatrixNorms, SquareMatrix};
pub use model::{
    empirical_covariance, sign_consistent, support_of, support_union, CovarianceEstimate,
    PrecisionMatrix, SampleSet, SupportSet,
};
pub use solver::{constrained_glasso, glasso, pooled_glasso, SolverConfig, SolverResult};
pub use synth::{gen_family, GeneratedFamily, TaskFamilySpec};

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot:.3e} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("index ({i}, {j}) out of range for dimension {n}")]
    IndexOutOfRange { i: usize, j: usize, n: usize },
    #[error("empty sample set")]
    EmptySampleSet,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("singular block: {0}")]
    SingularBlock(String),
    #[error("numeric failure: {0}")]
    NumericFailure(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
