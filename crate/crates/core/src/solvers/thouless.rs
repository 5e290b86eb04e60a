//! Single-channel conjugate gradients on the Thouless quotient
//! `<v, L[v]> / |<v, v>|` (baseline for the dual-channel solver).

use std::time::Instant;

use super::trace::{ConvergenceTrace, SolveStatus, TraceRow};
use super::{exit_status, polak_ribiere, Solution, SolverConfig};
use crate::blocksparse::BlockSparseMatrix;
use crate::error::{Error, Result};
use crate::linesearch::{minimize_ratio, ratio_shift};
use crate::model::ModelSystem;
use crate::ops::{annihilate, apply_l, build_guess, gdot, MulCtx};

const DEGENERATE_METRIC: f64 = 1e-14;

/// Lowest excitation from the configured starting guess.
pub fn rqi_thouless(sys: &ModelSystem, cfg: &SolverConfig) -> Result<Solution> {
    cfg.validate()?;
    let v0 = build_guess(sys, cfg.guess, cfg.seed, &MulCtx::new(cfg.tau_mtx))?;
    rqi_thouless_from(sys, cfg, &v0)
}

/// Lowest excitation starting from the transition density `v0`, which is
/// projected onto the particle-hole space first.
pub fn rqi_thouless_from(sys: &ModelSystem, cfg: &SolverConfig, v0: &BlockSparseMatrix) -> Result<Solution> {
    cfg.validate()?;
    if v0.dim() != sys.n_sites() {
        return Err(Error::dims("starting density", v0.dim(), sys.n_sites()));
    }
    let tau = cfg.tau_mtx;
    let ctx = MulCtx::new(tau);

    let mut v = annihilate(v0, sys, &ctx)?.filter(tau);
    let mut omega_old = f64::INFINITY;
    let mut prev: Option<(f64, BlockSparseMatrix)> = None;
    let mut memory: Option<(BlockSparseMatrix, BlockSparseMatrix)> = None;
    let mut trace = ConvergenceTrace::new();

    for iter in 0..cfg.max_iter {
        let started = Instant::now();
        let products0 = ctx.products();
        let nnz_fraction = v.nnz_fraction();

        let lv = apply_l(&v, sys, &ctx)?.filter(tau);
        let vv = gdot(&v, &v, sys, &ctx)?;
        let norm2 = v.frobenius_norm().powi(2);
        if !(vv.abs() > DEGENERATE_METRIC * norm2) {
            return Err(Error::DegenerateMetric { denom: vv, iteration: iter });
        }
        let sign = vv.signum();
        let num = gdot(&v, &lv, sys, &ctx)?;
        let omega = num / vv.abs();
        let g = v.scale(sign * omega).sub(&lv)?;
        let g_max = g.max_abs();
        if !(omega.is_finite() && g_max.is_finite()) {
            return Err(Error::NonFinite(format!(
                "iteration {iter}: omega = {omega}, g_max = {g_max}, <v, v> = {vv}"
            )));
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
            nnz_fraction,
            block_products: 0,
            wall_ms: 0.0,
        };
        let finish = |mut row: TraceRow, trace: &mut ConvergenceTrace| {
            row.block_products = ctx.products() - products0;
            row.wall_ms = started.elapsed().as_secs_f64() * 1e3;
            trace.rows.push(row);
        };

        let status = exit_status(omega, omega_old, e_rel, g_max, cfg)
            .or((iter + 1 == cfg.max_iter).then_some(SolveStatus::MaxIter));
        if let Some(status) = status {
            finish(row, &mut trace);
            trace.status = status;
            let (omega, v) = match (status, prev) {
                (SolveStatus::NonVariationalExit | SolveStatus::Stagnated, Some(prev)) if prev.0 < omega => prev,
                _ => (omega, v),
            };
            return Ok(Solution { omega, v, p: None, q: None, trace });
        }

        let h = match memory.take() {
            None => g.clone(),
            Some((g_old, h_old)) => {
                let beta = polak_ribiere(
                    gdot(&g, &g.sub(&g_old)?, sys, &ctx)?,
                    gdot(&g_old, &g_old, sys, &ctx)?,
                    cfg.pr_plus,
                );
                g.axpy(beta, &h_old)?.filter(tau)
            }
        };
        omega_old = omega;
        prev = Some((omega, v.clone()));

        let lh = apply_l(&h, sys, &ctx)?.filter(tau);
        // Quotient along v + l h; the metric sign is folded into the
        // denominator so that it is positive at l = 0. The metric is symmetric.
        let vh = 2.0 * gdot(&v, &h, sys, &ctx)?;
        let numerator = [num, gdot(&v, &lh, sys, &ctx)? + gdot(&h, &lv, sys, &ctx)?, gdot(&h, &lh, sys, &ctx)?];
        let denominator = [vv.abs(), sign * vh, sign * gdot(&h, &h, sys, &ctx)?];
        let lambda = minimize_ratio(numerator, denominator, 1.0).filter(|&l| ratio_shift(numerator, denominator, l) < 0.0);
        row.lambda_p = Some(lambda.unwrap_or(0.0));

        let (mut h, mut g) = (h, g);
        if let Some(l) = lambda {
            // Re-annihilating keeps round-off from seeding components
            // outside the particle-hole space.
            v = annihilate(&v.axpy(l, &h)?, sys, &ctx)?;
            if cfg.renormalize {
                let d = denominator[0] + l * (denominator[1] + l * denominator[2]);
                let c = 1.0 / d.abs().sqrt();
                if c.is_finite() {
                    for m in [&mut v, &mut h, &mut g] {
                        *m = m.scale(c);
                    }
                }
            }
            v.filter_in_place(tau);
        }
        memory = Some((g, h));
        finish(row, &mut trace);
    }
    unreachable!("the final iteration always reports a status")
}
