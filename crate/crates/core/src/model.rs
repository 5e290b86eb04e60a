//! Lattice model systems: a Pariser-Parr-Pople chain with an Ohno screening
//! kernel and a closed-shell self-consistent ground state.
//!
//! The ground state supplies the Fockian `F` and the density projector `P`
//! used by the response operator; the kernel defines the screening operator
//! `G[v]` (Hartree minus exchange). `F` is built from the same kernel, so
//! `dF/dP = G` and `[F, P] = 0` at self-consistency.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::blocksparse::{BlockSparseMatrix, DEFAULT_BLOCK_SIZE};
use crate::error::{Error, Result};

/// Tolerance on the ground-state invariants (idempotency, stationarity).
pub const GROUND_STATE_TOL: f64 = 1e-10;

const DIIS_DEPTH: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainParams {
    /// Nearest-neighbour hopping (energy).
    pub hopping: f64,
    /// Fractional bond alternation: bond `i` hops with `t * (1 + alternation * (-1)^i)`.
    pub alternation: f64,
    /// Per-bond hopping override, length `n_sites - 1`.
    pub bond_hoppings: Option<Vec<f64>>,
    pub bond_length: f64,
    /// Per-site energies; zeros when absent.
    pub site_energies: Option<Vec<f64>>,
    /// On-site repulsion of the Ohno kernel.
    pub kernel_u: f64,
    /// Energy-times-length constant of the Ohno kernel.
    pub ohno_constant: f64,
    /// Kernel entries beyond this distance are zeroed; `None` keeps all.
    pub kernel_cutoff: Option<f64>,
    /// Doubly occupied orbitals; half filling when absent.
    pub n_occ: Option<usize>,
    /// Triplet response drops the Hartree term of `G`.
    pub triplet: bool,
    pub block_size: usize,
    /// Tile threshold applied to `F` and `P` after the ground state is solved.
    pub ground_threshold: f64,
    /// Convergence target on `||FP - PF||_F`.
    pub scf_tolerance: f64,
    pub scf_max_iter: usize,
}

impl Default for ChainParams {
    fn default() -> Self {
        Self {
            hopping: -2.4,
            alternation: 0.0,
            bond_hoppings: None,
            bond_length: 1.4,
            site_energies: None,
            kernel_u: 11.13,
            ohno_constant: 14.397,
            kernel_cutoff: None,
            n_occ: None,
            triplet: false,
            block_size: DEFAULT_BLOCK_SIZE,
            ground_threshold: 0.0,
            scf_tolerance: 1e-11,
            scf_max_iter: 300,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ModelSystem {
    n_sites: usize,
    n_occ: usize,
    coords: Vec<[f64; 3]>,
    triplet: bool,
    fock: BlockSparseMatrix,
    density: BlockSparseMatrix,
    kernel: BlockSparseMatrix,
    orbital_energies: Vec<f64>,
    scf_iterations: usize,
}

fn check_finite(name: &str, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be finite, got {x}")))
    }
}

fn ohno(u: f64, r: f64, constant: f64) -> f64 {
    if u == 0.0 {
        0.0
    } else {
        u / (1.0 + (u * r / constant).powi(2)).sqrt()
    }
}

/// Eigenpairs sorted by ascending eigenvalue.
pub(crate) fn sorted_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m.clone());
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vectors.set_column(k, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

fn aufbau(fock: &DMatrix<f64>, n_occ: usize) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (energies, coeffs) = sorted_eigen(fock);
    if n_occ < energies.len() {
        let gap = energies[n_occ] - energies[n_occ - 1];
        if gap < 1e-8 {
            return Err(Error::DegenerateFrontier { gap });
        }
    }
    let occ = coeffs.columns(0, n_occ);
    Ok((energies, &occ * occ.transpose()))
}

/// Closed-shell mean field: `h + diag(gamma (2 diag P - Z)) - gamma o P`
/// with unit core charges.
fn mean_field(core: &DMatrix<f64>, gamma: &DMatrix<f64>, density: &DMatrix<f64>) -> DMatrix<f64> {
    let n = core.nrows();
    let charge = DVector::from_fn(n, |i, _| 2.0 * density[(i, i)] - 1.0);
    let hartree = gamma * charge;
    let mut f = core - gamma.component_mul(density);
    for i in 0..n {
        f[(i, i)] += hartree[i];
    }
    f
}

/// Pulay extrapolation over stored Fockians and commutator residuals.
fn diis_extrapolate(focks: &[DMatrix<f64>], errors: &[DMatrix<f64>]) -> Option<DMatrix<f64>> {
    let m = focks.len();
    let mut b = DMatrix::zeros(m + 1, m + 1);
    for i in 0..m {
        for j in 0..m {
            b[(i, j)] = errors[i].dot(&errors[j]);
        }
        b[(i, m)] = -1.0;
        b[(m, i)] = -1.0;
    }
    let mut rhs = DVector::zeros(m + 1);
    rhs[m] = -1.0;
    let c = b.lu().solve(&rhs)?;
    if !c.iter().all(|x| x.is_finite()) {
        return None;
    }
    let mut f = DMatrix::zeros(focks[0].nrows(), focks[0].ncols());
    for (ci, fi) in c.iter().zip(focks) {
        f += fi * *ci;
    }
    Some(f)
}

impl ModelSystem {
    /// Builds a straight chain and solves its closed-shell ground state.
    pub fn build_chain(n_sites: usize, params: &ChainParams) -> Result<Self> {
        if n_sites < 2 {
            return Err(Error::InvalidParameter(format!("chain needs at least 2 sites, got {n_sites}")));
        }
        for (name, x) in [
            ("hopping", params.hopping),
            ("alternation", params.alternation),
            ("bond_length", params.bond_length),
            ("kernel_u", params.kernel_u),
            ("ohno_constant", params.ohno_constant),
            ("ground_threshold", params.ground_threshold),
            ("scf_tolerance", params.scf_tolerance),
        ] {
            check_finite(name, x)?;
        }
        if params.bond_length <= 0.0 || params.ohno_constant <= 0.0 {
            return Err(Error::InvalidParameter("bond_length and ohno_constant must be positive".into()));
        }
        if params.kernel_u < 0.0 {
            return Err(Error::InvalidParameter("kernel_u must be nonnegative".into()));
        }
        if params.ground_threshold < 0.0 || params.scf_tolerance <= 0.0 {
            return Err(Error::InvalidParameter("thresholds must be positive".into()));
        }
        if let Some(rc) = params.kernel_cutoff {
            if rc.is_nan() || rc <= 0.0 {
                return Err(Error::InvalidParameter(format!("kernel_cutoff must be positive, got {rc}")));
            }
        }
        let n_occ = match params.n_occ {
            Some(k) if k >= 1 && k < n_sites => k,
            Some(k) => return Err(Error::InvalidParameter(format!("n_occ {k} outside 1..{n_sites}"))),
            None if n_sites % 2 == 0 => n_sites / 2,
            None => {
                return Err(Error::InvalidParameter(format!(
                    "odd chain length {n_sites} has no default closed-shell filling"
                )))
            }
        };
        let site_energies = match &params.site_energies {
            Some(e) if e.len() == n_sites => e.clone(),
            Some(e) => return Err(Error::dims("site_energies", e.len(), n_sites)),
            None => vec![0.0; n_sites],
        };
        let bonds = match &params.bond_hoppings {
            Some(t) if t.len() == n_sites - 1 => t.clone(),
            Some(t) => return Err(Error::dims("bond_hoppings", t.len(), n_sites - 1)),
            None => (0..n_sites - 1)
                .map(|i| {
                    let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                    params.hopping * (1.0 + params.alternation * sign)
                })
                .collect(),
        };
        for (i, x) in site_energies.iter().chain(&bonds).enumerate() {
            check_finite(&format!("site/bond parameter {i}"), *x)?;
        }

        let coords: Vec<[f64; 3]> = (0..n_sites).map(|i| [i as f64 * params.bond_length, 0.0, 0.0]).collect();
        let core = DMatrix::from_fn(n_sites, n_sites, |i, j| {
            if i == j {
                site_energies[i]
            } else if i + 1 == j {
                bonds[i]
            } else if j + 1 == i {
                bonds[j]
            } else {
                0.0
            }
        });
        let gamma = DMatrix::from_fn(n_sites, n_sites, |i, j| {
            let r = distance(&coords[i], &coords[j]);
            match params.kernel_cutoff {
                Some(rc) if r > rc => 0.0,
                _ => ohno(params.kernel_u, r, params.ohno_constant),
            }
        });

        let (_, mut density) = aufbau(&core, n_occ)?;
        let mut focks: Vec<DMatrix<f64>> = Vec::new();
        let mut errors: Vec<DMatrix<f64>> = Vec::new();
        let mut iterations = 0;
        let fock = loop {
            let fock = mean_field(&core, &gamma, &density);
            let residual = &fock * &density - &density * &fock;
            let res_norm = residual.norm();
            if res_norm <= params.scf_tolerance {
                break fock;
            }
            if !res_norm.is_finite() || iterations >= params.scf_max_iter {
                return Err(Error::ScfNotConverged { iterations, residual: res_norm });
            }
            iterations += 1;
            if focks.len() == DIIS_DEPTH {
                focks.remove(0);
                errors.remove(0);
            }
            focks.push(fock.clone());
            errors.push(residual);
            let guess = if focks.len() > 1 {
                diis_extrapolate(&focks, &errors).unwrap_or(fock)
            } else {
                fock
            };
            density = aufbau(&guess, n_occ)?.1;
        };
        let (energies, _) = sorted_eigen(&fock);

        let bs = params.block_size;
        Ok(Self {
            n_sites,
            n_occ,
            coords,
            triplet: params.triplet,
            fock: BlockSparseMatrix::from_dense(&fock, bs, params.ground_threshold)?,
            density: BlockSparseMatrix::from_dense(&density, bs, params.ground_threshold)?,
            kernel: BlockSparseMatrix::from_dense(&gamma, bs, 0.0)?,
            orbital_energies: energies.iter().copied().collect(),
            scf_iterations: iterations,
        })
    }

    /// Assembles a system from explicit matrices, checking the ground-state
    /// invariants. Sites are placed on a unit-spaced line.
    pub fn from_parts(
        fock: &DMatrix<f64>,
        density: &DMatrix<f64>,
        kernel: &DMatrix<f64>,
        block_size: usize,
        triplet: bool,
    ) -> Result<Self> {
        let n = fock.nrows();
        for (name, m) in [("fock", fock), ("density", density), ("kernel", kernel)] {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::DimensionMismatch(format!(
                    "{name} is {}x{}, expected {n}x{n}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        if (density * density - density).norm() > GROUND_STATE_TOL {
            return Err(Error::InvalidParameter("density is not idempotent".into()));
        }
        if (fock * density - density * fock).norm() > GROUND_STATE_TOL {
            return Err(Error::InvalidParameter("fock and density do not commute".into()));
        }
        let trace = density.trace();
        let n_occ = trace.round() as usize;
        let (energies, _) = sorted_eigen(fock);
        Ok(Self {
            n_sites: n,
            n_occ,
            coords: (0..n).map(|i| [i as f64, 0.0, 0.0]).collect(),
            triplet,
            fock: BlockSparseMatrix::from_dense(fock, block_size, 0.0)?,
            density: BlockSparseMatrix::from_dense(density, block_size, 0.0)?,
            kernel: BlockSparseMatrix::from_dense(kernel, block_size, 0.0)?,
            orbital_energies: energies.iter().copied().collect(),
            scf_iterations: 0,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn n_occ(&self) -> usize {
        self.n_occ
    }

    pub fn n_virt(&self) -> usize {
        self.n_sites - self.n_occ
    }

    pub fn coords(&self) -> &[[f64; 3]] {
        &self.coords
    }

    pub fn is_triplet(&self) -> bool {
        self.triplet
    }

    pub fn fock(&self) -> &BlockSparseMatrix {
        &self.fock
    }

    pub fn density(&self) -> &BlockSparseMatrix {
        &self.density
    }

    pub fn kernel(&self) -> &BlockSparseMatrix {
        &self.kernel
    }

    pub fn block_size(&self) -> usize {
        self.fock.block_size()
    }

    /// Ascending eigenvalues of `F`.
    pub fn orbital_energies(&self) -> &[f64] {
        &self.orbital_energies
    }

    pub fn scf_iterations(&self) -> usize {
        self.scf_iterations
    }

    /// XYZ-style geometry block (one carbon-like site per line).
    pub fn write_xyz<W: Write>(&self, mut w: W, comment: &str) -> io::Result<()> {
        writeln!(w, "{}", self.n_sites)?;
        writeln!(w, "{comment}")?;
        for c in &self.coords {
            writeln!(w, "C {:.8} {:.8} {:.8}", c[0], c[1], c[2])?;
        }
        Ok(())
    }
}

fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Screening operator on an explicit kernel:
/// `G[v]_ij = delta_ij * sum_k gamma_ik * 2 v_kk - gamma_ij * v_ij`,
/// with the Hartree part dropped for triplet response.
pub fn screen(v: &BlockSparseMatrix, kernel: &BlockSparseMatrix, triplet: bool) -> Result<BlockSparseMatrix> {
    let exchange = kernel.hadamard(v)?;
    if triplet {
        return Ok(exchange.scale(-1.0));
    }
    let charge: Vec<f64> = v.diagonal().iter().map(|x| 2.0 * x).collect();
    let potential = kernel.matvec(&charge)?;
    let hartree = BlockSparseMatrix::from_diagonal(&potential, v.block_size())?;
    hartree.sub(&exchange)
}

/// `G[v]` for the system's kernel and spin channel.
pub fn apply_g(v: &BlockSparseMatrix, sys: &ModelSystem) -> Result<BlockSparseMatrix> {
    if v.dim() != sys.n_sites {
        return Err(Error::dims("apply_g", v.dim(), sys.n_sites));
    }
    screen(v, &sys.kernel, sys.triplet)
}
