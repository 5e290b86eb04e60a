//! Brute-force dense reference: explicit molecular-orbital `A` and `B`
//! blocks obtained by probing the response operator, full RPA and TDA
//! spectra, and the map from amplitudes back to site-basis densities.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::blocksparse::BlockSparseMatrix;
use crate::error::{Error, Result};
use crate::model::{sorted_eigen, ModelSystem};
use crate::ops::{apply_l, split, MulCtx};
use crate::solvers::trace::fmt_f64;

/// Largest system the dense reference accepts.
pub const ORACLE_MAX_SITES: usize = 64;

/// Smallest eigenvalue of `A + B` or `A - B`, relative to the largest,
/// accepted as positive definite.
const DEFINITENESS_TOL: f64 = 1e-12;

/// Dense response matrices and, once solved, the RPA roots.
///
/// Particle-hole pairs are indexed `k = i * n_virt + a` with `i` an occupied
/// and `a` a virtual orbital (both ascending in energy).
#[derive(Clone, Debug)]
pub struct DenseSpectrum {
    pub orbital_energies: DVector<f64>,
    pub mo_coeffs: DMatrix<f64>,
    pub n_occ: usize,
    pub n_virt: usize,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    /// Ascending positive excitation energies (empty until solved).
    pub omegas: Vec<f64>,
    /// Column `k` holds `X` of root `k`.
    pub x: DMatrix<f64>,
    /// Column `k` holds `Y` of root `k`.
    pub y: DMatrix<f64>,
    /// `|A X + B Y - w X| + |-B X - A Y - w Y|` per root.
    pub residuals: Vec<f64>,
}

/// Ascending eigenvalues and eigenvectors of the symmetric `A`.
#[derive(Clone, Debug)]
pub struct TdaSpectrum {
    pub omegas: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RootSummary {
    pub root: usize,
    pub omega: f64,
    pub x_norm: f64,
    pub y_norm: f64,
}

impl DenseSpectrum {
    pub fn n_ov(&self) -> usize {
        self.n_occ * self.n_virt
    }

    pub fn pair_index(&self, i: usize, a: usize) -> usize {
        i * self.n_virt + a
    }

    pub fn k_matrix(&self) -> DMatrix<f64> {
        &self.a + &self.b
    }

    pub fn t_matrix(&self) -> DMatrix<f64> {
        &self.a - &self.b
    }

    pub fn lowest(&self) -> Option<f64> {
        self.omegas.first().copied()
    }

    pub fn roots(&self) -> Vec<RootSummary> {
        (0..self.omegas.len())
            .map(|k| RootSummary {
                root: k,
                omega: self.omegas[k],
                x_norm: self.x.column(k).norm(),
                y_norm: self.y.column(k).norm(),
            })
            .collect()
    }

    /// JSON array of `{root, omega, x_norm, y_norm}`.
    pub fn write_roots_json<W: Write>(&self, w: W) -> serde_json::Result<()> {
        serde_json::to_writer_pretty(w, &self.roots())
    }

    pub const ROOTS_HEADER: &'static str = "root,omega,x_norm,y_norm";

    /// One CSV row per solved root.
    pub fn write_roots_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", Self::ROOTS_HEADER)?;
        for r in self.roots() {
            writeln!(w, "{},{},{},{}", r.root, fmt_f64(r.omega), fmt_f64(r.x_norm), fmt_f64(r.y_norm))?;
        }
        Ok(())
    }

    /// Site-basis density `sum X_ia |a><i| + Y_ia |i><a|`.
    pub fn amplitudes_to_site(&self, x: &DVector<f64>, y: &DVector<f64>) -> DMatrix<f64> {
        let (no, nv) = (self.n_occ, self.n_virt);
        let xm = DMatrix::from_fn(nv, no, |a, i| x[i * nv + a]);
        let ym = DMatrix::from_fn(no, nv, |i, a| y[i * nv + a]);
        let c_occ = self.mo_coeffs.columns(0, no);
        let c_virt = self.mo_coeffs.columns(no, nv);
        &c_virt * xm * c_occ.transpose() + &c_occ * ym * c_virt.transpose()
    }

    /// `(X, Y)` amplitudes of a site-basis density (inverse of
    /// [`Self::amplitudes_to_site`] on annihilated densities).
    pub fn site_to_amplitudes(&self, v: &DMatrix<f64>) -> (DVector<f64>, DVector<f64>) {
        let (no, nv) = (self.n_occ, self.n_virt);
        let vm = self.mo_coeffs.transpose() * v * &self.mo_coeffs;
        let x = DVector::from_fn(no * nv, |k, _| vm[(no + k % nv, k / nv)]);
        let y = DVector::from_fn(no * nv, |k, _| vm[(k / nv, no + k % nv)]);
        (x, y)
    }
}

/// Probes the response operator in natural pair order.
pub fn build_ab(sys: &ModelSystem) -> Result<DenseSpectrum> {
    let n_ov = sys.n_occ() * sys.n_virt();
    build_ab_ordered(sys, &(0..n_ov).collect::<Vec<_>>())
}

/// Probes the response operator visiting pairs in `order` (a permutation of
/// `0..n_ov`). The result does not depend on the order.
pub fn build_ab_ordered(sys: &ModelSystem, order: &[usize]) -> Result<DenseSpectrum> {
    let n = sys.n_sites();
    if n > ORACLE_MAX_SITES {
        return Err(Error::OracleTooLarge { n, cap: ORACLE_MAX_SITES });
    }
    let (no, nv) = (sys.n_occ(), sys.n_virt());
    let n_ov = no * nv;
    let mut seen = vec![false; n_ov];
    for &k in order {
        if k >= n_ov || std::mem::replace(&mut seen[k], true) {
            return Err(Error::InvalidParameter(format!("probe order is not a permutation of 0..{n_ov}")));
        }
    }
    if order.len() != n_ov {
        return Err(Error::InvalidParameter(format!("probe order has {} entries, expected {n_ov}", order.len())));
    }

    let (eps, c) = sorted_eigen(&sys.fock().to_dense());
    let bs = sys.block_size();
    let ctx = MulCtx::exact();
    let columns: Vec<(usize, Result<DMatrix<f64>>)> = order
        .par_iter()
        .map(|&k| {
            let (i, a) = (k / nv, k % nv);
            let dyad = c.column(no + a) * c.column(i).transpose();
            let image = BlockSparseMatrix::from_dense(&dyad, bs, 0.0)
                .and_then(|v| apply_l(&v, sys, &ctx))
                .map(|lv| c.transpose() * lv.to_dense() * &c);
            (k, image)
        })
        .collect();

    let mut a_mat = DMatrix::zeros(n_ov, n_ov);
    let mut b_mat = DMatrix::zeros(n_ov, n_ov);
    for (k, image) in columns {
        let lm = image?;
        for j in 0..no {
            for b in 0..nv {
                let l = j * nv + b;
                a_mat[(l, k)] = lm[(no + b, j)];
                b_mat[(l, k)] = -lm[(j, no + b)];
            }
        }
    }
    Ok(DenseSpectrum {
        orbital_energies: eps,
        mo_coeffs: c,
        n_occ: no,
        n_virt: nv,
        a: a_mat,
        b: b_mat,
        omegas: Vec::new(),
        x: DMatrix::zeros(n_ov, 0),
        y: DMatrix::zeros(n_ov, 0),
        residuals: Vec::new(),
    })
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn check_definite(name: &str, evals: &DVector<f64>) -> Result<()> {
    let max = evals.amax();
    let min = evals.min();
    if !(min > DEFINITENESS_TOL * max) {
        return Err(Error::UnstableGroundState(format!(
            "{name} is not positive definite (smallest eigenvalue {min:.6e}, largest {max:.6e})"
        )));
    }
    Ok(())
}

/// Full RPA spectrum through the symmetric product `T^1/2 K T^1/2`.
/// Amplitudes are normalized to `X^T X - Y^T Y = 1`.
pub fn solve_rpa_dense(mut spec: DenseSpectrum) -> Result<DenseSpectrum> {
    let k = symmetrize(&spec.k_matrix());
    let t = symmetrize(&spec.t_matrix());
    let (k_evals, _) = sorted_eigen(&k);
    check_definite("A + B", &k_evals)?;
    let (t_evals, t_vecs) = sorted_eigen(&t);
    check_definite("A - B", &t_evals)?;

    let t_half = &t_vecs * DMatrix::from_diagonal(&t_evals.map(f64::sqrt)) * t_vecs.transpose();
    let t_inv_half = &t_vecs * DMatrix::from_diagonal(&t_evals.map(|e| 1.0 / e.sqrt())) * t_vecs.transpose();
    let m = symmetrize(&(&t_half * &k * &t_half));
    let (mu, z) = sorted_eigen(&m);

    let n_ov = spec.n_ov();
    let mut x = DMatrix::zeros(n_ov, n_ov);
    let mut y = DMatrix::zeros(n_ov, n_ov);
    let mut omegas = Vec::with_capacity(n_ov);
    let mut residuals = Vec::with_capacity(n_ov);
    for r in 0..n_ov {
        if !(mu[r] > 0.0) {
            return Err(Error::UnstableGroundState(format!("squared excitation energy {} is not positive", mu[r])));
        }
        let w = mu[r].sqrt();
        let zr = z.column(r) / w.sqrt();
        let sum = &t_half * &zr; // X + Y
        let diff = &t_inv_half * &zr * w; // X - Y
        let xr = (&sum + &diff) * 0.5;
        let yr = (&sum - &diff) * 0.5;
        let res = (&spec.a * &xr + &spec.b * &yr - &xr * w).norm() + (-(&spec.b * &xr) - &spec.a * &yr - &yr * w).norm();
        x.set_column(r, &xr);
        y.set_column(r, &yr);
        omegas.push(w);
        residuals.push(res);
    }
    spec.omegas = omegas;
    spec.x = x;
    spec.y = y;
    spec.residuals = residuals;
    Ok(spec)
}

/// Tamm-Dancoff spectrum: ascending eigenpairs of `A`.
pub fn solve_tda_dense(spec: &DenseSpectrum) -> TdaSpectrum {
    let (evals, vectors) = sorted_eigen(&symmetrize(&spec.a));
    TdaSpectrum { omegas: evals.iter().copied().collect(), vectors }
}

/// Site-basis `(v, p, q)` of a solved root, ready to inject into the
/// iterative solvers.
pub fn embed_eigenpair(
    spec: &DenseSpectrum,
    root: usize,
    sys: &ModelSystem,
) -> Result<(BlockSparseMatrix, BlockSparseMatrix, BlockSparseMatrix)> {
    if root >= spec.omegas.len() {
        return Err(Error::InvalidParameter(format!(
            "root {root} out of range ({} solved roots)",
            spec.omegas.len()
        )));
    }
    let dense = spec.amplitudes_to_site(&spec.x.column(root).into_owned(), &spec.y.column(root).into_owned());
    let v = BlockSparseMatrix::from_dense(&dense, sys.block_size(), 0.0)?;
    let (p, q) = split(&v, sys, &MulCtx::exact())?;
    Ok((v, p, q))
}

/// Convenience: build and solve in one call.
pub fn rpa_spectrum(sys: &ModelSystem) -> Result<DenseSpectrum> {
    solve_rpa_dense(build_ab(sys)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ChainParams;

    #[test]
    fn cap_is_enforced() {
        let sys = ModelSystem::build_chain(66, &ChainParams { kernel_u: 0.0, ..Default::default() }).unwrap();
        assert!(matches!(build_ab(&sys), Err(Error::OracleTooLarge { n: 66, cap: 64 })));
    }

    #[test]
    fn bad_probe_order_rejected() {
        let sys = ModelSystem::build_chain(4, &ChainParams::default()).unwrap();
        assert!(build_ab_ordered(&sys, &[0, 1, 2, 2]).is_err());
        assert!(build_ab_ordered(&sys, &[0, 1, 2]).is_err());
    }

    #[test]
    fn amplitude_round_trip() {
        let sys = ModelSystem::build_chain(6, &ChainParams::default()).unwrap();
        let spec = build_ab(&sys).unwrap();
        let x = DVector::from_fn(spec.n_ov(), |k, _| (k as f64 * 0.7).sin());
        let y = DVector::from_fn(spec.n_ov(), |k, _| (k as f64 * 1.3).cos());
        let (x2, y2) = spec.site_to_amplitudes(&spec.amplitudes_to_site(&x, &y));
        assert!((x2 - x).amax() < 1e-13);
        assert!((y2 - y).amax() < 1e-13);
    }
}
