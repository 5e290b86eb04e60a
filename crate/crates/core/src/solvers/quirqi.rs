//! Dual-channel nonlinear conjugate gradients on the Tsiper quotient.

use std::time::Instant;

use super::trace::{ConvergenceTrace, SolveStatus, TraceRow};
use super::{exit_status, polak_ribiere, Solution, SolverConfig};
use crate::blocksparse::BlockSparseMatrix;
use crate::error::{Error, Result};
use crate::linesearch::{assemble_coeffs, line_search, LineSearchStatus};
use crate::model::ModelSystem;
use crate::ops::{annihilate, apply_l, build_guess, channel_images, evaluate_duals, gdot, merge, split, MulCtx};

/// Relative size of `|<p, q>|` against `|p| |q|` below which the metric is
/// treated as degenerate.
const DEGENERATE_METRIC: f64 = 1e-14;

/// Lowest excitation from the configured starting guess.
pub fn quirqi(sys: &ModelSystem, cfg: &SolverConfig) -> Result<Solution> {
    cfg.validate()?;
    let v0 = build_guess(sys, cfg.guess, cfg.seed, &MulCtx::new(cfg.tau_mtx))?;
    quirqi_from(sys, cfg, &v0)
}

struct Iterate {
    omega: f64,
    v: BlockSparseMatrix,
    p: BlockSparseMatrix,
    q: BlockSparseMatrix,
}

impl Iterate {
    fn into_solution(self, trace: ConvergenceTrace) -> Solution {
        Solution { omega: self.omega, v: self.v, p: Some(self.p), q: Some(self.q), trace }
    }
}

fn with_iteration(err: Error, iteration: usize) -> Error {
    match err {
        Error::DegenerateMetric { denom, .. } => Error::DegenerateMetric { denom, iteration },
        other => other,
    }
}

/// Lowest excitation starting from the transition density `v0`.
pub fn quirqi_from(sys: &ModelSystem, cfg: &SolverConfig, v0: &BlockSparseMatrix) -> Result<Solution> {
    cfg.validate()?;
    if v0.dim() != sys.n_sites() {
        return Err(Error::dims("starting density", v0.dim(), sys.n_sites()));
    }
    let tau = cfg.tau_mtx;
    let ctx = MulCtx::new(tau);

    let mut v = v0.clone();
    let (mut p, mut q) = split(&v, sys, &ctx)?;
    let mut omega_old = f64::INFINITY;
    let mut prev: Option<Iterate> = None;
    let mut memory: Option<(BlockSparseMatrix, BlockSparseMatrix, BlockSparseMatrix, BlockSparseMatrix)> = None;
    let mut trace = ConvergenceTrace::new();

    for iter in 0..cfg.max_iter {
        let started = Instant::now();
        let products0 = ctx.products();
        let nnz_fraction = v.nnz_fraction();

        let ev = evaluate_duals(&p, &q, &v, sys, &ctx, tau)?;
        let scale = 0.5 * (p.frobenius_norm().powi(2) + q.frobenius_norm().powi(2));
        if !(ev.denom.abs() > DEGENERATE_METRIC * scale) {
            return Err(Error::DegenerateMetric { denom: ev.denom, iteration: iter });
        }
        if !(ev.omega.is_finite() && ev.g_max.is_finite()) {
            return Err(Error::NonFinite(format!(
                "iteration {iter}: omega = {}, g_max = {}, <p, q> = {}",
                ev.omega, ev.g_max, ev.denom
            )));
        }
        let e_rel = (omega_old - ev.omega) / ev.omega;
        let mut row = TraceRow {
            iter,
            omega: ev.omega,
            omega_p: Some(ev.omega_p),
            omega_q: Some(ev.omega_q),
            e_rel,
            g_max: ev.g_max,
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

        let status = exit_status(ev.omega, omega_old, e_rel, ev.g_max, cfg)
            .or((iter + 1 == cfg.max_iter).then_some(SolveStatus::MaxIter));
        if let Some(status) = status {
            finish(row, &mut trace);
            trace.status = status;
            let current = Iterate { omega: ev.omega, v, p, q };
            let reported = match (status, prev) {
                (SolveStatus::NonVariationalExit | SolveStatus::Stagnated, Some(prev)) if prev.omega < current.omega => prev,
                _ => current,
            };
            return Ok(reported.into_solution(trace));
        }

        // Conjugate directions, one per channel.
        let (g_p, g_q) = (ev.g_p, ev.g_q);
        let conjugate = match memory.take() {
            None => None,
            Some((gp_old, gq_old, hp_old, hq_old)) => {
                let bp = polak_ribiere(
                    gdot(&g_p, &g_p.sub(&gp_old)?, sys, &ctx)?,
                    gdot(&gp_old, &gp_old, sys, &ctx)?,
                    cfg.pr_plus,
                );
                let bq = polak_ribiere(
                    gdot(&g_q, &g_q.sub(&gq_old)?, sys, &ctx)?,
                    gdot(&gq_old, &gq_old, sys, &ctx)?,
                    cfg.pr_plus,
                );
                (bp != 0.0 || bq != 0.0)
                    .then(|| -> Result<_> { Ok((g_p.axpy(bp, &hp_old)?.filter(tau), g_q.axpy(bq, &hq_old)?.filter(tau))) })
                    .transpose()?
            }
        };
        omega_old = ev.omega;
        prev = Some(Iterate { omega: ev.omega, v: v.clone(), p: p.clone(), q: q.clone() });

        // Search along the conjugate pair; if that cannot lower the quotient
        // (lost conjugacy near the round-off floor), retry once along the
        // gradients themselves.
        let mut attempt = conjugate;
        let (h_p, h_q, coeffs, ls) = loop {
            let retry = attempt.is_some();
            let (h_p, h_q) = attempt.take().unwrap_or_else(|| (g_p.clone(), g_q.clone()));
            let h_v = annihilate(&merge(&h_p, &h_q)?, sys, &ctx)?.filter(tau);
            let lh_v = apply_l(&h_v, sys, &ctx)?;
            let (mut lh_p, mut lh_q) = channel_images(&lh_v, sys, &ctx)?;
            lh_p.filter_in_place(tau);
            lh_q.filter_in_place(tau);
            let coeffs = assemble_coeffs(&p, &q, &h_p, &h_q, &ev.lp, &ev.lq, &lh_p, &lh_q, sys, &ctx)
                .map_err(|e| with_iteration(e, iter))?;
            let ls = line_search(&coeffs);
            if ls.status != LineSearchStatus::Stagnated || !retry {
                break (h_p, h_q, coeffs, ls);
            }
        };
        let (lp, lq) = match ls.status {
            LineSearchStatus::Stagnated => (0.0, 0.0),
            _ => (ls.lambda_p, ls.lambda_q),
        };
        row.lambda_p = Some(lp);
        row.lambda_q = Some(lq);

        let (mut h_p, mut h_q, mut g_p, mut g_q) = (h_p, h_q, g_p, g_q);
        // A stagnated search leaves the iterate untouched, so the next
        // evaluation reproduces omega exactly and the exit test decides.
        if ls.status != LineSearchStatus::Stagnated {
            // Re-deriving the duals from the annihilated density keeps them
            // on the particle-hole space; components outside it are
            // invisible to the operator and would otherwise grow from
            // round-off.
            v = annihilate(&merge(&p.axpy(lp, &h_p)?, &q.axpy(lq, &h_q)?)?, sys, &ctx)?;
            (p, q) = split(&v, sys, &ctx)?;
            if cfg.renormalize {
                // <p', q'> follows from the plane coefficients without new products.
                let c = 1.0 / (coeffs.denominator(lp, lq).abs() / 2.0).sqrt();
                if c.is_finite() {
                    for m in [&mut p, &mut q, &mut v, &mut h_p, &mut h_q, &mut g_p, &mut g_q] {
                        *m = m.scale(c);
                    }
                }
            }
            p.filter_in_place(tau);
            q.filter_in_place(tau);
            v.filter_in_place(tau);
        }
        memory = Some((g_p, g_q, h_p, h_q));
        finish(row, &mut trace);
    }
    unreachable!("the final iteration always reports a status")
}
