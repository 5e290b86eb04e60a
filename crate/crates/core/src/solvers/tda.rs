//! Conjugate gradients on the Hermitian Rayleigh quotient `x^T A x / x^T x`
//! (Tamm-Dancoff baseline on a dense `A`).

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::trace::{ConvergenceTrace, SolveStatus, TraceRow};
use super::{exit_status, polak_ribiere, SolverConfig};
use crate::error::{Error, Result};
use crate::linesearch::{minimize_ratio, ratio_shift};

#[derive(Clone, Debug)]
pub struct TdaSolution {
    pub omega: f64,
    /// Unit-norm amplitude vector.
    pub x: DVector<f64>,
    pub trace: ConvergenceTrace,
}

/// Lowest eigenvalue of the symmetric `a` from a seeded uniform guess.
pub fn tda_rqi(a: &DMatrix<f64>, cfg: &SolverConfig) -> Result<TdaSolution> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let x0 = DVector::from_fn(a.nrows(), |_, _| rng.random_range(-1.0..1.0));
    tda_rqi_from(a, cfg, &x0)
}

/// Lowest eigenvalue of the symmetric `a` starting from `x0`.
pub fn tda_rqi_from(a: &DMatrix<f64>, cfg: &SolverConfig, x0: &DVector<f64>) -> Result<TdaSolution> {
    cfg.validate()?;
    if !a.is_square() {
        return Err(Error::dims("TDA matrix (rows vs cols)", a.nrows(), a.ncols()));
    }
    if x0.len() != a.nrows() {
        return Err(Error::dims("TDA starting vector", x0.len(), a.nrows()));
    }
    let n0 = x0.norm();
    if !(n0 > 0.0 && n0.is_finite()) {
        return Err(Error::InvalidParameter("TDA starting vector must be nonzero and finite".into()));
    }
    let mut x = x0 / n0;
    let mut omega_old = f64::INFINITY;
    let mut prev: Option<(f64, DVector<f64>)> = None;
    let mut memory: Option<(DVector<f64>, DVector<f64>)> = None;
    let mut trace = ConvergenceTrace::new();

    for iter in 0..cfg.max_iter {
        let started = Instant::now();
        let ax = a * &x;
        let xx = x.norm_squared();
        let omega = x.dot(&ax) / xx;
        let g = &x * omega - &ax;
        let g_max = g.amax();
        if !(omega.is_finite() && g_max.is_finite()) {
            return Err(Error::NonFinite(format!("iteration {iter}: omega = {omega}, g_max = {g_max}")));
        }
        let e_rel = (omega_old - omega) / omega;
        let mut row = TraceRow {
            iter,
            omega,
            omega_p: None,
            omega_q: None,
            e_rel,
            g_max,
            lambda_p: None,
            lambda_q: None,
            nnz_fraction: 1.0,
            block_products: 0,
            wall_ms: 0.0,
        };

        let status = exit_status(omega, omega_old, e_rel, g_max, cfg)
            .or((iter + 1 == cfg.max_iter).then_some(SolveStatus::MaxIter));
        if let Some(status) = status {
            row.wall_ms = started.elapsed().as_secs_f64() * 1e3;
            trace.rows.push(row);
            trace.status = status;
            let (omega, x) = match (status, prev) {
                (SolveStatus::NonVariationalExit | SolveStatus::Stagnated, Some(prev)) if prev.0 < omega => prev,
                _ => (omega, x),
            };
            return Ok(TdaSolution { omega, x, trace });
        }

        let h = match memory.take() {
            None => g.clone(),
            Some((g_old, h_old)) => {
                let beta = polak_ribiere(g.dot(&(&g - &g_old)), g_old.norm_squared(), cfg.pr_plus);
                &g + h_old * beta
            }
        };
        omega_old = omega;
        prev = Some((omega, x.clone()));

        let ah = a * &h;
        let numerator = [x.dot(&ax), 2.0 * h.dot(&ax), h.dot(&ah)];
        let denominator = [xx, 2.0 * h.dot(&x), h.norm_squared()];
        let lambda = minimize_ratio(numerator, denominator, 1.0).filter(|&l| ratio_shift(numerator, denominator, l) < 0.0);
        row.lambda_p = Some(lambda.unwrap_or(0.0));

        let (mut h, mut g) = (h, g);
        if let Some(l) = lambda {
            x += &h * l;
            if cfg.renormalize {
                let c = 1.0 / x.norm();
                x *= c;
                h *= c;
                g *= c;
            }
        }
        memory = Some((g, h));
        row.wall_ms = started.elapsed().as_secs_f64() * 1e3;
        trace.rows.push(row);
    }
    unreachable!("the final iteration always reports a status")
}
