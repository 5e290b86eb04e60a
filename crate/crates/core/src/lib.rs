//! Lowest-excitation solver for the RPA (time-dependent SCF) eigenproblem
//! by quasi-independent Rayleigh quotient iteration over oscillator duals,
//! on truncated blocked sparse matrices.

pub mod blocksparse;
pub mod error;
pub mod experiments;
pub mod linesearch;
pub mod model;
pub mod ops;
pub mod oracle;
pub mod solvers;

pub use blocksparse::{multiply, spamm, BlockSparseMatrix};
pub use error::{Error, Result};
pub use model::{apply_g, ChainParams, ModelSystem};
pub use solvers::{quirqi, rqi_thouless, tda_rqi, ConvergenceTrace, Solution, SolveStatus, SolverConfig};
