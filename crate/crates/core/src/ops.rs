//! Representation-independent response operators.
//!
//! Everything here works on `N x N` site-basis matrices and the ground-state
//! projector `P` (with `Q = I - P` kept implicit):
//!
//! - `L[v] = [F, v] + [G[v], P]`, the response operator,
//! - `f_a(x) = P x Q + Q x P`, annihilation of the occ-occ and virt-virt blocks,
//! - `<x, y> = tr{x^T [y, P]}`, the indefinite metric,
//! - `f_+(v) = P v Q + (Q v P)^T` and `f_-(v) = P v Q - (Q v P)^T`, the split
//!   into position-like and momentum-like duals,
//! - `F(p, q) = (p + q + (p - q)^T) / 2`, the merge back to a density.
//!
//! With these, `<p, L_p>` and `<q, L_q>` reproduce the MO-space forms
//! `p.K.p` and `q.T.q` without ever rotating into the orbital basis.
//! For pure particle-hole arguments the metric reduces to `<p, q> = -tr{p^T q}`.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blocksparse::{spamm, BlockSparseMatrix};
use crate::error::{Error, Result};
use crate::model::{apply_g, ModelSystem};

/// Multiplication context: SpAMM drop tolerance plus a running count of
/// executed tile products.
#[derive(Debug, Default)]
pub struct MulCtx {
    tau: f64,
    products: AtomicU64,
}

impl MulCtx {
    pub fn new(tau: f64) -> Self {
        Self { tau, products: AtomicU64::new(0) }
    }

    pub fn exact() -> Self {
        Self::new(0.0)
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Tile products executed so far.
    pub fn products(&self) -> u64 {
        self.products.load(Ordering::Relaxed)
    }

    pub fn mul(&self, a: &BlockSparseMatrix, b: &BlockSparseMatrix) -> Result<BlockSparseMatrix> {
        let (m, n) = spamm(a, b, self.tau)?;
        self.products.fetch_add(n, Ordering::Relaxed);
        Ok(m)
    }
}

fn check_dim(x: &BlockSparseMatrix, sys: &ModelSystem, what: &str) -> Result<()> {
    if x.dim() != sys.n_sites() {
        return Err(Error::dims(what, x.dim(), sys.n_sites()));
    }
    Ok(())
}

/// `L[v] = [F, v] + [G[v], P]`.
pub fn apply_l(v: &BlockSparseMatrix, sys: &ModelSystem, ctx: &MulCtx) -> Result<BlockSparseMatrix> {
    check_dim(v, sys, "apply_l")?;
    let (f, p) = (sys.fock(), sys.density());
    let g = apply_g(v, sys)?;
    let fv = ctx.mul(f, v)?;
    let vf = ctx.mul(v, f)?;
    let gp = ctx.mul(&g, p)?;
    let pg = ctx.mul(p, &g)?;
    fv.sub(&vf)?.add(&gp.sub(&pg)?)
}

/// `(P x Q, Q x P)` from three products.
fn ph_hp_parts(x: &BlockSparseMatrix, sys: &ModelSystem, ctx: &MulCtx) -> Result<(BlockSparseMatrix, BlockSparseMatrix)> {
    check_dim(x, sys, "projection")?;
    let p = sys.density();
    let px = ctx.mul(p, x)?;
    let xp = ctx.mul(x, p)?;
    let pxp = ctx.mul(&px, p)?;
    Ok((px.sub(&pxp)?, xp.sub(&pxp)?))
}

/// `f_a(x) = P x Q + Q x P`.
pub fn annihilate(x: &BlockSparseMatrix, sys: &ModelSystem, ctx: &MulCtx) -> Result<BlockSparseMatrix> {
    let (ph, hp) = ph_hp_parts(x, sys, ctx)?;
    ph.add(&hp)
}

/// `[y, P] = y P - P y`.
pub fn metric_image(y: &BlockSparseMatrix, sys: &ModelSystem, ctx: &MulCtx) -> Result<BlockSparseMatrix> {
    check_dim(y, sys, "metric_image")?;
    let p = sys.density();
    ctx.mul(y, p)?.sub(&ctx.mul(p, y)?)
}

/// Generalized inner product `<x, y> = tr{x^T [y, P]}`.
pub fn gdot(x: &BlockSparseMatrix, y: &BlockSparseMatrix, sys: &ModelSystem, ctx: &MulCtx) -> Result<f64> {
    check_dim(x, sys, "gdot")?;
    x.trace_product(&metric_image(y, sys, ctx)?)
}

/// `(f_+(v), f_-(v))`.
pub fn split(v: &BlockSparseMatrix, sys: &ModelSystem, ctx: &MulCtx) -> Result<(BlockSparseMatrix, BlockSparseMatrix)> {
    let (ph, hp) = ph_hp_parts(v, sys, ctx)?;
    let hpt = hp.transpose();
    Ok((ph.add(&hpt)?, ph.sub(&hpt)?))
}

pub fn split_plus(v: &BlockSparseMatrix, sys: &ModelSystem, ctx: &MulCtx) -> Result<BlockSparseMatrix> {
    split(v, sys, ctx).map(|(p, _)| p)
}

pub fn split_minus(v: &BlockSparseMatrix, sys: &ModelSystem, ctx: &MulCtx) -> Result<BlockSparseMatrix> {
    split(v, sys, ctx).map(|(_, q)| q)
}

/// `F(p, q) = (p + q + (p - q)^T) / 2`.
pub fn merge(p: &BlockSparseMatrix, q: &BlockSparseMatrix) -> Result<BlockSparseMatrix> {
    let sum = p.add(q)?;
    let diff_t = p.sub(q)?.transpose();
    Ok(sum.add(&diff_t)?.scale(0.5))
}

/// Channel images of `L[v]`: `L[p] = f_-(L[v])`, `L[q] = f_+(L[v])`.
pub fn channel_images(
    lv: &BlockSparseMatrix,
    sys: &ModelSystem,
    ctx: &MulCtx,
) -> Result<(BlockSparseMatrix, BlockSparseMatrix)> {
    let (plus, minus) = split(lv, sys, ctx)?;
    Ok((minus, plus))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GuessKind {
    #[default]
    Dipole,
    Random,
}

/// Rescales `v` so that `|<f_+(v), f_-(v)>| = 1`; `None` when the metric
/// vanishes.
fn normalize_guess(v: BlockSparseMatrix, sys: &ModelSystem, ctx: &MulCtx) -> Result<Option<BlockSparseMatrix>> {
    let norm = v.frobenius_norm();
    if norm == 0.0 {
        return Ok(None);
    }
    let (p, q) = split(&v, sys, ctx)?;
    let d = gdot(&p, &q, sys, ctx)?;
    if !d.is_finite() || d.abs() <= 1e-12 * norm * norm {
        return Ok(None);
    }
    Ok(Some(v.scale(1.0 / d.abs().sqrt())))
}

fn random_guess(sys: &ModelSystem, seed: u64, ctx: &MulCtx) -> Result<BlockSparseMatrix> {
    let n = sys.n_sites();
    for attempt in 0..16u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt));
        let values: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dense = nalgebra::DMatrix::from_row_slice(n, n, &values);
        let raw = BlockSparseMatrix::from_dense(&dense, sys.block_size(), 0.0)?;
        if let Some(v) = normalize_guess(annihilate(&raw, sys, ctx)?, sys, ctx)? {
            return Ok(v);
        }
    }
    Err(Error::NonFinite("no admissible random guess after 16 seeds".into()))
}

/// Initial transition density.
///
/// `Dipole` takes the hole-particle block of the axial dipole commutator,
/// `Q [D, P] P = Q D P`, i.e. the dipole excitation amplitudes with no
/// de-excitation part; the full commutator is antisymmetric and has zero
/// metric. `Random` annihilates a seeded uniform(-1, 1) matrix. Both are
/// normalized to `|<p, q>| = 1`; a degenerate dipole guess falls back to
/// `Random` with `seed + 1`.
pub fn build_guess(sys: &ModelSystem, kind: GuessKind, seed: u64, ctx: &MulCtx) -> Result<BlockSparseMatrix> {
    match kind {
        GuessKind::Random => random_guess(sys, seed, ctx),
        GuessKind::Dipole => {
            let axial: Vec<f64> = sys.coords().iter().map(|c| c[0]).collect();
            let d = BlockSparseMatrix::from_diagonal(&axial, sys.block_size())?;
            let dp = ctx.mul(&d, sys.density())?;
            let pdp = ctx.mul(sys.density(), &dp)?;
            match normalize_guess(dp.sub(&pdp)?, sys, ctx)? {
                Some(v) => Ok(v),
                None => random_guess(sys, seed.wrapping_add(1), ctx),
            }
        }
    }
}

/// The Tsiper quotient and its channel gradients at `(p, q)`.
#[derive(Clone, Debug)]
pub struct TsiperEval {
    pub omega: f64,
    pub omega_p: f64,
    pub omega_q: f64,
    /// Signed `<p, q>`.
    pub denom: f64,
    /// `sign(<p, q>)`.
    pub sign: f64,
    pub lp: BlockSparseMatrix,
    pub lq: BlockSparseMatrix,
    /// `s * omega * q - L[p]`.
    pub g_p: BlockSparseMatrix,
    /// `s * omega * p - L[q]`.
    pub g_q: BlockSparseMatrix,
    pub g_max: f64,
}

/// Evaluates the quotient with channel images taken from `L[v]`, filtering
/// the images at `tau_filter`. `v` is the (annihilated, possibly truncated)
/// density paired with `(p, q)`.
pub fn evaluate_duals(
    p: &BlockSparseMatrix,
    q: &BlockSparseMatrix,
    v: &BlockSparseMatrix,
    sys: &ModelSystem,
    ctx: &MulCtx,
    tau_filter: f64,
) -> Result<TsiperEval> {
    let lv = apply_l(v, sys, ctx)?;
    let (mut lp, mut lq) = channel_images(&lv, sys, ctx)?;
    lp.filter_in_place(tau_filter);
    lq.filter_in_place(tau_filter);
    let denom = gdot(p, q, sys, ctx)?;
    let scale = 2.0 * denom.abs();
    let omega_p = gdot(p, &lp, sys, ctx)? / scale;
    let omega_q = gdot(q, &lq, sys, ctx)? / scale;
    let omega = omega_p + omega_q;
    let sign = if denom < 0.0 { -1.0 } else { 1.0 };
    let g_p = q.scale(sign * omega).sub(&lp)?;
    let g_q = p.scale(sign * omega).sub(&lq)?;
    let g_max = g_p.max_abs().max(g_q.max_abs());
    Ok(TsiperEval { omega, omega_p, omega_q, denom, sign, lp, lq, g_p, g_q, g_max })
}

/// Exact evaluation at `(p, q)` with `v = F(p, q)`.
pub fn tsiper_eval(p: &BlockSparseMatrix, q: &BlockSparseMatrix, sys: &ModelSystem, ctx: &MulCtx) -> Result<TsiperEval> {
    let v = merge(p, q)?;
    evaluate_duals(p, q, &v, sys, ctx, 0.0)
}

/// Optimization state of the dual-channel iteration.
#[derive(Clone, Debug)]
pub struct DualState {
    pub v: BlockSparseMatrix,
    pub p: BlockSparseMatrix,
    pub q: BlockSparseMatrix,
    pub lp: BlockSparseMatrix,
    pub lq: BlockSparseMatrix,
    pub g_p: BlockSparseMatrix,
    pub g_q: BlockSparseMatrix,
    pub h_p: BlockSparseMatrix,
    pub h_q: BlockSparseMatrix,
    pub h_v: BlockSparseMatrix,
    pub omega: f64,
    pub omega_p: f64,
    pub omega_q: f64,
    pub denom: f64,
}
