//! Eigensolvers for the lowest excitation and their convergence records.
//!
//! - [`quirqi`]: dual-channel nonlinear conjugate gradients on the Tsiper
//!   quotient, coupled only through the two-dimensional line search.
//! - [`rqi_thouless`]: the same machinery on the single-channel Thouless
//!   quotient (baseline).
//! - [`tda_rqi`]: conjugate gradients on the Hermitian Tamm-Dancoff
//!   Rayleigh quotient of a dense `A` (baseline).

mod quirqi;
mod tda;
mod thouless;
pub(crate) mod trace;

use serde::{Deserialize, Serialize};

use crate::blocksparse::BlockSparseMatrix;
use crate::error::{Error, Result};
use crate::ops::GuessKind;

pub use quirqi::{quirqi, quirqi_from};
pub use tda::{tda_rqi, tda_rqi_from, TdaSolution};
pub use thouless::{rqi_thouless, rqi_thouless_from};
pub use trace::{ConvergenceTrace, SolveStatus, TraceRow, TRACE_HEADER};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Tile truncation threshold; also the SpAMM drop tolerance.
    pub tau_mtx: f64,
    /// Exit when the relative energy change falls to this...
    pub epsilon: f64,
    /// ...and the largest gradient element falls to this.
    pub gamma: f64,
    pub max_iter: usize,
    pub guess: GuessKind,
    pub seed: u64,
    /// Rescale the iterate to `|<p, q>| = 1` after every step.
    pub renormalize: bool,
    /// Clamp Polak-Ribiere coefficients at zero.
    pub pr_plus: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tau_mtx: 1e-5,
            epsilon: 1e-4,
            gamma: 1e-3,
            max_iter: 200,
            guess: GuessKind::Dipole,
            seed: 42,
            renormalize: true,
            pr_plus: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.tau_mtx >= 0.0 && self.tau_mtx.is_finite()) {
            return bad(format!("tau_mtx must be finite and nonnegative, got {}", self.tau_mtx));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad(format!("epsilon must lie in (0, 1), got {}", self.epsilon));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be positive, got {}", self.gamma));
        }
        if self.max_iter == 0 {
            return bad("max_iter must be at least 1".into());
        }
        Ok(())
    }

    /// Same configuration with exact arithmetic (no truncation).
    pub fn exact(&self) -> Self {
        Self { tau_mtx: 0.0, ..self.clone() }
    }
}

/// Converged (or last accepted) excitation from a sparse-path solver.
#[derive(Clone, Debug)]
pub struct Solution {
    pub omega: f64,
    /// Transition density.
    pub v: BlockSparseMatrix,
    /// Position-like dual (dual-channel solver only).
    pub p: Option<BlockSparseMatrix>,
    /// Momentum-like dual (dual-channel solver only).
    pub q: Option<BlockSparseMatrix>,
    pub trace: ConvergenceTrace,
}

/// Polak-Ribiere coefficient from the three inner products, clamped at zero
/// under PR+.
pub(crate) fn polak_ribiere(num: f64, den: f64, pr_plus: bool) -> f64 {
    let beta = num / den;
    if !beta.is_finite() {
        0.0
    } else if pr_plus {
        beta.max(0.0)
    } else {
        beta
    }
}

/// Relative size of a quotient change that is indistinguishable from
/// round-off in its evaluation.
pub const ROUNDOFF_BAND: f64 = 64.0 * f64::EPSILON;

/// Exit test shared by all solvers. A rise within [`ROUNDOFF_BAND`] counts
/// as stagnation, a larger one as a non-variational step. Returns the terminal status, if any.
pub(crate) fn exit_status(omega: f64, omega_old: f64, e_rel: f64, g_max: f64, cfg: &SolverConfig) -> Option<SolveStatus> {
    if e_rel.abs() <= cfg.epsilon && g_max <= cfg.gamma {
        Some(SolveStatus::Converged)
    } else if omega - omega_old > ROUNDOFF_BAND * omega.abs() {
        Some(SolveStatus::NonVariationalExit)
    } else if omega >= omega_old {
        Some(SolveStatus::Stagnated)
    } else {
        None
    }
}
