//! Coupled two-dimensional line search over the Tsiper quotient.
//!
//! Along `(p + l_p h_p, q + l_q h_q)` the quotient is a ratio of a separable
//! quadratic and a bilinear form:
//!
//! ```text
//!            A_p + l_p B_p + l_p^2 C_p + A_q + l_q B_q + l_q^2 C_q
//! w(l_p,l_q) = -----------------------------------------------------
//!            | R + l_p S + l_q T + l_p l_q U |
//! ```
//!
//! For a fixed `l_q` the `l_p` problem is quadratic-over-linear with a closed
//! form minimizer (and vice versa), so the plane is minimized by alternating
//! the two exact one-dimensional updates until they agree.

use crate::blocksparse::BlockSparseMatrix;
use crate::error::{Error, Result};
use crate::model::ModelSystem;
use crate::ops::{metric_image, MulCtx};

/// Largest admissible step magnitude.
pub const LAMBDA_CAP: f64 = 1e3;
/// Sweep limit of the alternating updates.
pub const MAX_SWEEPS: usize = 50;
/// Stop once `|dl_p| + |dl_q|` falls below this.
pub const SWEEP_TOL: f64 = 1e-12;
/// Coarse scan: points per axis and half width (in units of the natural
/// step length of each channel).
pub const SCAN_POINTS: usize = 21;
pub const SCAN_HALF_WIDTH: f64 = 2.0;
/// Points whose denominator is below this fraction of the magnitude of its
/// terms are treated as singular (`0 / 0` when a step annihilates a dual).
pub const DEN_REL_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineSearchCoeffs {
    pub a_p: f64,
    pub b_p: f64,
    pub c_p: f64,
    pub a_q: f64,
    pub b_q: f64,
    pub c_q: f64,
    pub r_pq: f64,
    pub s_pq: f64,
    pub t_pq: f64,
    pub u_pq: f64,
}

impl LineSearchCoeffs {
    pub fn numerator(&self, lp: f64, lq: f64) -> f64 {
        self.a_p + lp * (self.b_p + lp * self.c_p) + self.a_q + lq * (self.b_q + lq * self.c_q)
    }

    /// Signed denominator.
    pub fn denominator(&self, lp: f64, lq: f64) -> f64 {
        self.r_pq + lp * self.s_pq + lq * self.t_pq + lp * lq * self.u_pq
    }

    pub fn omega(&self, lp: f64, lq: f64) -> f64 {
        self.numerator(lp, lq) / self.denominator(lp, lq).abs()
    }

    /// `omega(l_p, l_q) - omega(0, 0)` in a form that keeps its relative
    /// accuracy when the change is far below the resolution of `omega`.
    pub fn shift(&self, lp: f64, lq: f64) -> f64 {
        let n0 = self.a_p + self.a_q;
        let dn = lp * (self.b_p + lp * self.c_p) + lq * (self.b_q + lq * self.c_q);
        let dd = lp * self.s_pq + lq * self.t_pq + lp * lq * self.u_pq;
        let d = self.r_pq + dd;
        if d.signum() == self.r_pq.signum() {
            let r = self.r_pq.abs();
            (r * dn - n0 * self.r_pq.signum() * dd) / (r * d.abs())
        } else {
            self.omega(lp, lq) - self.omega(0.0, 0.0)
        }
    }

    /// Whether the denominator at `(l_p, l_q)` is resolved against round-off.
    pub fn is_admissible(&self, lp: f64, lq: f64) -> bool {
        let terms = self.r_pq.abs() + (lp * self.s_pq).abs() + (lq * self.t_pq).abs() + (lp * lq * self.u_pq).abs();
        self.denominator(lp, lq).abs() > DEN_REL_TOL * terms
    }

    /// The same plane with channel roles exchanged.
    fn swapped(&self) -> Self {
        Self {
            a_p: self.a_q,
            b_p: self.b_q,
            c_p: self.c_q,
            a_q: self.a_p,
            b_q: self.b_p,
            c_q: self.c_p,
            r_pq: self.r_pq,
            s_pq: self.t_pq,
            t_pq: self.s_pq,
            u_pq: self.u_pq,
        }
    }

    /// Exact `l_p` minimizer for fixed `l_q`, keeping the denominator sign.
    fn best_p(&self, lq: f64, sign: f64) -> Option<f64> {
        let a = self.a_p + self.a_q + lq * self.b_q + lq * lq * self.c_q;
        let r = self.r_pq + lq * self.t_pq;
        let s = self.s_pq + lq * self.u_pq;
        minimize_ratio([a, self.b_p, self.c_p], [r, s, 0.0], sign)
    }
}

/// Builds the plane coefficients from the current duals, directions and
/// their operator images. The metric sign is folded into `R, S, T, U` so
/// that `R > 0`.
#[allow(clippy::too_many_arguments)]
pub fn assemble_coeffs(
    p: &BlockSparseMatrix,
    q: &BlockSparseMatrix,
    h_p: &BlockSparseMatrix,
    h_q: &BlockSparseMatrix,
    lp: &BlockSparseMatrix,
    lq: &BlockSparseMatrix,
    lh_p: &BlockSparseMatrix,
    lh_q: &BlockSparseMatrix,
    sys: &ModelSystem,
    ctx: &MulCtx,
) -> Result<LineSearchCoeffs> {
    let img = |y: &BlockSparseMatrix| metric_image(y, sys, ctx);
    let (i_lp, i_lq, i_lhp, i_lhq) = (img(lp)?, img(lq)?, img(lh_p)?, img(lh_q)?);
    let (i_q, i_hq) = (img(q)?, img(h_q)?);

    let pq = p.trace_product(&i_q)?;
    if pq == 0.0 || !pq.is_finite() {
        return Err(Error::DegenerateMetric { denom: pq, iteration: 0 });
    }
    let s = if pq < 0.0 { -2.0 } else { 2.0 };
    Ok(LineSearchCoeffs {
        a_p: p.trace_product(&i_lp)?,
        b_p: p.trace_product(&i_lhp)? + h_p.trace_product(&i_lp)?,
        c_p: h_p.trace_product(&i_lhp)?,
        a_q: q.trace_product(&i_lq)?,
        b_q: q.trace_product(&i_lhq)? + h_q.trace_product(&i_lq)?,
        c_q: h_q.trace_product(&i_lhq)?,
        r_pq: s * pq,
        s_pq: s * h_p.trace_product(&i_q)?,
        t_pq: s * p.trace_product(&i_hq)?,
        u_pq: s * h_p.trace_product(&i_hq)?,
    })
}

/// Minimizes `(a + b l + c l^2) / |r + s l + u l^2|` over `l` restricted to
/// `sign * (r + s l + u l^2) > 0` and `|l| <= LAMBDA_CAP`.
///
/// Stationary points solve `(c s - b u) l^2 + 2 (c r - a u) l + (b r - a s) = 0`.
pub(crate) fn minimize_ratio(num: [f64; 3], den: [f64; 3], sign: f64) -> Option<f64> {
    let [a, b, c] = num;
    let [r, s, u] = den;
    let lead = c * s - b * u;
    let mid = 2.0 * (c * r - a * u);
    let cst = b * r - a * s;

    let mut candidates = Vec::with_capacity(4);
    if s == 0.0 && u == 0.0 {
        // constant denominator: plain parabola
        if c > 0.0 {
            candidates.push(-b / (2.0 * c));
        }
    } else if lead == 0.0 {
        if mid != 0.0 {
            candidates.push(-cst / mid);
        }
    } else {
        let disc = mid * mid - 4.0 * lead * cst;
        if disc >= 0.0 {
            let root = disc.sqrt();
            let k = -0.5 * (mid + mid.signum() * root);
            if k != 0.0 {
                candidates.push(k / lead);
                candidates.push(cst / k);
            } else {
                candidates.push(0.0);
            }
        }
    }
    if u != 0.0 {
        candidates.extend([-LAMBDA_CAP, LAMBDA_CAP]);
    }

    let ratio = |l: f64| (a + l * (b + l * c)) / (r + l * (s + l * u)).abs();
    candidates
        .into_iter()
        .filter(|l| {
            let terms = r.abs() + (l * s).abs() + (l * l * u).abs();
            l.is_finite() && l.abs() <= LAMBDA_CAP && sign * (r + l * (s + l * u)) > DEN_REL_TOL * terms
        })
        .map(|l| (l, ratio(l)))
        .filter(|(_, w)| w.is_finite())
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .map(|(l, _)| l)
}

/// `ratio(l) - ratio(0)` for `ratio(l) = (a + b l + c l^2) / |r + s l + u l^2|`
/// in difference form (accurate when the change is below the resolution of
/// the ratio itself).
pub(crate) fn ratio_shift(num: [f64; 3], den: [f64; 3], l: f64) -> f64 {
    let [a, b, c] = num;
    let [r, s, u] = den;
    let dn = l * (b + l * c);
    let dd = l * (s + l * u);
    let d = r + dd;
    if d.signum() == r.signum() {
        (r.abs() * dn - a * r.signum() * dd) / (r.abs() * d.abs())
    } else {
        (a + dn) / d.abs() - a / r.abs()
    }
}

/// Natural step length of a channel: the `l` at which `l^2 C` matches `A`.
fn step_scale(a: f64, c: f64) -> f64 {
    if a > 0.0 && c > 0.0 {
        (a / c).sqrt()
    } else {
        1.0
    }
}

/// Lowest point of a `SCAN_POINTS x SCAN_POINTS` grid over
/// `[-SCAN_HALF_WIDTH, SCAN_HALF_WIDTH]^2` in natural step units. The origin
/// is always a grid point.
pub fn coarse_scan(c: &LineSearchCoeffs) -> (f64, f64) {
    let (sp, sq) = (step_scale(c.a_p, c.c_p), step_scale(c.a_q, c.c_q));
    let half = (SCAN_POINTS / 2) as f64;
    let mut best = (0.0, 0.0, 0.0);
    for i in 0..SCAN_POINTS {
        let lp = sp * SCAN_HALF_WIDTH * (i as f64 - half) / half;
        for j in 0..SCAN_POINTS {
            let lq = sq * SCAN_HALF_WIDTH * (j as f64 - half) / half;
            let w = c.shift(lp, lq);
            if w.is_finite() && w < best.2 && c.is_admissible(lp, lq) {
                best = (lp, lq, w);
            }
        }
    }
    (best.0, best.1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LineSearchStatus {
    /// Both one-dimensional optimality conditions hold.
    Converged,
    /// Sweep limit reached before the steps settled.
    SweepLimit,
    /// No admissible one-dimensional minimizer; the starting pair is returned.
    CoarseFallback,
    /// No decrease below the origin; `(0, 0)` is returned.
    Stagnated,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineSearchOutcome {
    pub lambda_p: f64,
    pub lambda_q: f64,
    pub omega: f64,
    pub sweeps: usize,
    pub status: LineSearchStatus,
}

/// Alternating exact one-dimensional updates from `init`, preserving the
/// denominator sign found there.
pub fn solve_2d(c: &LineSearchCoeffs, init: (f64, f64)) -> LineSearchOutcome {
    let origin = c.omega(0.0, 0.0);
    let stagnated = |sweeps| LineSearchOutcome {
        lambda_p: 0.0,
        lambda_q: 0.0,
        omega: origin,
        sweeps,
        status: LineSearchStatus::Stagnated,
    };
    let den0 = c.denominator(init.0, init.1);
    if !(den0.is_finite() && den0 != 0.0) {
        return stagnated(0);
    }
    let sign = den0.signum();
    let swapped = c.swapped();
    let (mut lp, mut lq) = init;
    let mut shift = c.shift(lp, lq);
    let mut moved = false;
    let mut status = LineSearchStatus::SweepLimit;
    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS {
        sweeps += 1;
        let mut delta = 0.0;
        if let Some(next) = c.best_p(lq, sign) {
            let w = c.shift(next, lq);
            if w <= shift && c.is_admissible(next, lq) {
                delta += (next - lp).abs();
                lp = next;
                shift = w;
                moved = true;
            }
        }
        if let Some(next) = swapped.best_p(lp, sign) {
            let w = c.shift(lp, next);
            if w <= shift && c.is_admissible(lp, next) {
                delta += (next - lq).abs();
                lq = next;
                shift = w;
                moved = true;
            }
        }
        if delta < SWEEP_TOL {
            status = LineSearchStatus::Converged;
            break;
        }
    }
    if !moved && sweeps == 1 && init != (0.0, 0.0) {
        status = LineSearchStatus::CoarseFallback;
    }
    if !(shift < 0.0) {
        return stagnated(sweeps);
    }
    LineSearchOutcome { lambda_p: lp, lambda_q: lq, omega: origin + shift, sweeps, status }
}

/// Coarse scan followed by [`solve_2d`].
pub fn line_search(c: &LineSearchCoeffs) -> LineSearchOutcome {
    solve_2d(c, coarse_scan(c))
}
