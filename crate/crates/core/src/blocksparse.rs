//! Blocked sparse square matrices.
//!
//! A [`BlockSparseMatrix`] partitions an `N x N` matrix into dense tiles of a
//! fixed edge length (the trailing tiles are ragged when the edge does not
//! divide `N`). Only tiles that carry data are stored, each with its cached
//! Frobenius norm. The norms drive both truncation ([`BlockSparseMatrix::filter`])
//! and the screened product [`spamm`], which skips any tile product whose
//! norm product falls below the drop tolerance.

use std::collections::BTreeMap;
use std::io::{self, Write};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Default tile edge.
pub const DEFAULT_BLOCK_SIZE: usize = 4;

/// A dense row-major tile with its Frobenius norm.
#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    norm: f64,
}

impl Block {
    fn new(rows: usize, cols: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), rows * cols);
        let norm = frobenius(&values);
        Self { rows, cols, values, norm }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Cached Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.norm
    }

    fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    fn transposed(&self) -> Self {
        let mut values = vec![0.0; self.values.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                values[c * self.rows + r] = self.values[r * self.cols + c];
            }
        }
        Self { rows: self.cols, cols: self.rows, values, norm: self.norm }
    }
}

fn frobenius(values: &[f64]) -> f64 {
    values.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `acc += a * b` for row-major tiles.
fn gemm_acc(acc: &mut [f64], a: &Block, b: &Block) {
    let n = b.cols;
    for i in 0..a.rows {
        let out = &mut acc[i * n..(i + 1) * n];
        for k in 0..a.cols {
            let aik = a.values[i * a.cols + k];
            if aik == 0.0 {
                continue;
            }
            let brow = &b.values[k * n..(k + 1) * n];
            for (o, bkj) in out.iter_mut().zip(brow) {
                *o += aik * bkj;
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockSparseMatrix {
    dim: usize,
    block_size: usize,
    nblocks: usize,
    rows: Vec<BTreeMap<usize, Block>>,
}

impl BlockSparseMatrix {
    pub fn zeros(dim: usize, block_size: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("matrix order must be positive".into()));
        }
        if block_size == 0 {
            return Err(Error::InvalidParameter("block size must be positive".into()));
        }
        let nblocks = dim.div_ceil(block_size);
        Ok(Self { dim, block_size, nblocks, rows: vec![BTreeMap::new(); nblocks] })
    }

    pub fn identity(dim: usize, block_size: usize) -> Result<Self> {
        Self::from_diagonal(&vec![1.0; dim], block_size)
    }

    pub fn from_diagonal(diag: &[f64], block_size: usize) -> Result<Self> {
        let mut m = Self::zeros(diag.len(), block_size)?;
        for r in 0..m.nblocks {
            let (start, len) = m.extent(r);
            let mut values = vec![0.0; len * len];
            for i in 0..len {
                values[i * len + i] = diag[start + i];
            }
            let blk = Block::new(len, len, values);
            if blk.norm > 0.0 {
                m.rows[r].insert(r, blk);
            }
        }
        Ok(m)
    }

    /// Builds from a dense square matrix, keeping tiles with norm `>= tau`.
    /// All-zero tiles are never stored.
    pub fn from_dense(dense: &DMatrix<f64>, block_size: usize, tau: f64) -> Result<Self> {
        if dense.nrows() != dense.ncols() {
            return Err(Error::dims("square matrix required", dense.nrows(), dense.ncols()));
        }
        let mut m = Self::zeros(dense.nrows(), block_size)?;
        for r in 0..m.nblocks {
            let (r0, rl) = m.extent(r);
            for c in 0..m.nblocks {
                let (c0, cl) = m.extent(c);
                let mut values = Vec::with_capacity(rl * cl);
                for i in 0..rl {
                    for j in 0..cl {
                        values.push(dense[(r0 + i, c0 + j)]);
                    }
                }
                let blk = Block::new(rl, cl, values);
                if blk.norm > 0.0 && blk.norm >= tau {
                    m.rows[r].insert(c, blk);
                }
            }
        }
        Ok(m)
    }

    /// Builds from an element generator, evaluated tile by tile over the
    /// tile pattern returned by `pattern(block_row)`.
    pub fn from_fn_with_pattern<F, P, I>(dim: usize, block_size: usize, pattern: P, f: F) -> Result<Self>
    where
        F: Fn(usize, usize) -> f64,
        P: Fn(usize) -> I,
        I: IntoIterator<Item = usize>,
    {
        let mut m = Self::zeros(dim, block_size)?;
        for r in 0..m.nblocks {
            let (r0, rl) = m.extent(r);
            for c in pattern(r) {
                if c >= m.nblocks {
                    continue;
                }
                let (c0, cl) = m.extent(c);
                let mut values = Vec::with_capacity(rl * cl);
                for i in 0..rl {
                    for j in 0..cl {
                        values.push(f(r0 + i, c0 + j));
                    }
                }
                let blk = Block::new(rl, cl, values);
                if blk.norm > 0.0 {
                    m.rows[r].insert(c, blk);
                }
            }
        }
        Ok(m)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.dim, self.dim);
        for ((r, c), blk) in self.blocks() {
            let r0 = r * self.block_size;
            let c0 = c * self.block_size;
            for i in 0..blk.rows {
                for j in 0..blk.cols {
                    d[(r0 + i, c0 + j)] = blk.get(i, j);
                }
            }
        }
        d
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    /// Number of tile rows (and columns).
    pub fn block_rows(&self) -> usize {
        self.nblocks
    }

    /// Start index and length of tile row/column `r`.
    pub fn extent(&self, r: usize) -> (usize, usize) {
        let start = r * self.block_size;
        (start, self.block_size.min(self.dim - start))
    }

    pub fn stored_blocks(&self) -> usize {
        self.rows.iter().map(BTreeMap::len).sum()
    }

    /// Fraction of the `N^2` elements covered by stored tiles.
    pub fn nnz_fraction(&self) -> f64 {
        let stored: usize = self.blocks().map(|(_, b)| b.values.len()).sum();
        stored as f64 / (self.dim * self.dim) as f64
    }

    /// Stored tiles in row-major tile order.
    pub fn blocks(&self) -> impl Iterator<Item = ((usize, usize), &Block)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(r, row)| row.iter().map(move |(&c, b)| ((r, c), b)))
    }

    pub fn block(&self, r: usize, c: usize) -> Option<&Block> {
        self.rows.get(r).and_then(|row| row.get(&c))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = (i / self.block_size, j / self.block_size);
        self.block(r, c)
            .map(|b| b.get(i - r * self.block_size, j - c * self.block_size))
            .unwrap_or(0.0)
    }

    pub fn is_empty(&self) -> bool {
        self.rows.iter().all(BTreeMap::is_empty)
    }

    /// Drops every tile whose norm is below `tau`. Surviving tiles are
    /// untouched.
    pub fn filter(&self, tau: f64) -> Self {
        let mut out = self.clone();
        out.filter_in_place(tau);
        out
    }

    /// In-place [`filter`](Self::filter); returns the number of dropped tiles.
    pub fn filter_in_place(&mut self, tau: f64) -> usize {
        if tau <= 0.0 {
            return 0;
        }
        let mut dropped = 0;
        for row in &mut self.rows {
            let before = row.len();
            row.retain(|_, b| b.norm >= tau);
            dropped += before - row.len();
        }
        dropped
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.blocks().map(|(_, b)| b.norm * b.norm).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.blocks()
            .flat_map(|(_, b)| b.values.iter())
            .fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().all(|(_, b)| b.values.iter().all(|x| x.is_finite()))
    }

    fn check_conformable(&self, other: &Self, what: &str) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::dims(what, self.dim, other.dim));
        }
        if self.block_size != other.block_size {
            return Err(Error::DimensionMismatch(format!(
                "{what}: block size {} vs {}",
                self.block_size, other.block_size
            )));
        }
        Ok(())
    }

    /// `alpha * self + beta * other`.
    pub fn combine(&self, alpha: f64, other: &Self, beta: f64) -> Result<Self> {
        self.check_conformable(other, "combine")?;
        let rows = self
            .rows
            .iter()
            .zip(&other.rows)
            .map(|(x, y)| {
                let mut row = BTreeMap::new();
                for (&c, b) in x {
                    let values = b.values.iter().map(|v| alpha * v).collect();
                    row.insert(c, (b.rows, b.cols, values));
                }
                for (&c, b) in y {
                    let entry = row
                        .entry(c)
                        .or_insert_with(|| (b.rows, b.cols, vec![0.0; b.values.len()]));
                    for (o, v) in entry.2.iter_mut().zip(&b.values) {
                        *o += beta * v;
                    }
                }
                row.into_iter()
                    .map(|(c, (r, k, values))| (c, Block::new(r, k, values)))
                    .collect()
            })
            .collect();
        Ok(Self { rows, ..*self })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.combine(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.combine(1.0, other, -1.0)
    }

    /// `self + alpha * other`.
    pub fn axpy(&self, alpha: f64, other: &Self) -> Result<Self> {
        self.combine(1.0, other, alpha)
    }

    pub fn scale(&self, alpha: f64) -> Self {
        let rows = self
            .rows
            .iter()
            .map(|row| {
                row.iter()
                    .map(|(&c, b)| {
                        let values = b.values.iter().map(|v| alpha * v).collect();
                        (c, Block::new(b.rows, b.cols, values))
                    })
                    .collect()
            })
            .collect();
        Self { rows, ..*self }
    }

    pub fn transpose(&self) -> Self {
        let mut rows = vec![BTreeMap::new(); self.nblocks];
        for ((r, c), b) in self.blocks() {
            rows[c].insert(r, b.transposed());
        }
        Self { rows, ..*self }
    }

    pub fn trace(&self) -> f64 {
        self.diagonal().iter().sum()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.dim];
        for (r, row) in self.rows.iter().enumerate() {
            if let Some(b) = row.get(&r) {
                let (start, len) = self.extent(r);
                for i in 0..len {
                    d[start + i] = b.get(i, i);
                }
            }
        }
        d
    }

    /// `tr{self^T * other}`, evaluated over tiles stored in both operands.
    pub fn trace_product(&self, other: &Self) -> Result<f64> {
        self.check_conformable(other, "trace_product")?;
        let mut sum = 0.0;
        for (x, y) in self.rows.iter().zip(&other.rows) {
            for (c, bx) in x {
                if let Some(by) = y.get(c) {
                    sum += bx.values.iter().zip(&by.values).map(|(a, b)| a * b).sum::<f64>();
                }
            }
        }
        Ok(sum)
    }

    /// Elementwise product; only tiles present in both operands survive.
    pub fn hadamard(&self, other: &Self) -> Result<Self> {
        self.check_conformable(other, "hadamard")?;
        let rows = self
            .rows
            .iter()
            .zip(&other.rows)
            .map(|(x, y)| {
                x.iter()
                    .filter_map(|(&c, bx)| {
                        let by = y.get(&c)?;
                        let values = bx.values.iter().zip(&by.values).map(|(a, b)| a * b).collect();
                        let blk = Block::new(bx.rows, bx.cols, values);
                        (blk.norm > 0.0).then_some((c, blk))
                    })
                    .collect()
            })
            .collect();
        Ok(Self { rows, ..*self })
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::dims("matvec", self.dim, x.len()));
        }
        let mut y = vec![0.0; self.dim];
        for ((r, c), b) in self.blocks() {
            let (r0, _) = self.extent(r);
            let (c0, _) = self.extent(c);
            for i in 0..b.rows {
                y[r0 + i] += (0..b.cols).map(|j| b.get(i, j) * x[c0 + j]).sum::<f64>();
            }
        }
        Ok(y)
    }

    /// Coordinate dump `i j value` of every stored element, row-major,
    /// 17 significant digits.
    pub fn write_triplets<W: Write>(&self, mut w: W) -> io::Result<()> {
        for (r, row) in self.rows.iter().enumerate() {
            let (r0, rl) = self.extent(r);
            for i in 0..rl {
                for (&c, b) in row {
                    let (c0, _) = self.extent(c);
                    for j in 0..b.cols {
                        writeln!(w, "{} {} {:.16e}", r0 + i, c0 + j, b.get(i, j))?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Screened blocked product: a tile product `A_ik * B_kj` is executed only
/// when `|A_ik| * |B_kj| >= tau`. Returns the product and the number of
/// executed tile products.
pub fn spamm(
    a: &BlockSparseMatrix,
    b: &BlockSparseMatrix,
    tau: f64,
) -> Result<(BlockSparseMatrix, u64)> {
    a.check_conformable(b, "spamm")?;
    let results: Vec<(BTreeMap<usize, Block>, u64)> = a
        .rows
        .par_iter()
        .map(|arow| {
            let mut acc: BTreeMap<usize, (usize, usize, Vec<f64>)> = BTreeMap::new();
            let mut count = 0u64;
            for (&k, ablk) in arow {
                for (&j, bblk) in &b.rows[k] {
                    if ablk.norm * bblk.norm < tau {
                        continue;
                    }
                    count += 1;
                    let slot = acc
                        .entry(j)
                        .or_insert_with(|| (ablk.rows, bblk.cols, vec![0.0; ablk.rows * bblk.cols]));
                    gemm_acc(&mut slot.2, ablk, bblk);
                }
            }
            let row = acc
                .into_iter()
                .map(|(j, (r, c, values))| (j, Block::new(r, c, values)))
                .collect();
            (row, count)
        })
        .collect();
    let mut count = 0;
    let mut rows = Vec::with_capacity(results.len());
    for (row, n) in results {
        rows.push(row);
        count += n;
    }
    Ok((BlockSparseMatrix { rows, ..*a }, count))
}

/// Exact blocked product.
pub fn multiply(a: &BlockSparseMatrix, b: &BlockSparseMatrix) -> Result<BlockSparseMatrix> {
    spamm(a, b, 0.0).map(|(m, _)| m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dense(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn ragged_tiles_roundtrip() {
        let d = random_dense(10, 1);
        let m = BlockSparseMatrix::from_dense(&d, 4, 0.0).unwrap();
        assert_eq!(m.block_rows(), 3);
        assert_eq!(m.extent(2), (8, 2));
        assert_eq!(m.to_dense(), d);
        assert_eq!(m.get(9, 3), d[(9, 3)]);
    }

    #[test]
    fn cached_norms_match_values() {
        let m = BlockSparseMatrix::from_dense(&random_dense(9, 2), 4, 0.0).unwrap();
        for (_, b) in m.blocks() {
            assert!((b.norm() - frobenius(b.values())).abs() <= f64::EPSILON * b.norm());
        }
    }

    #[test]
    fn filter_zero_is_identity() {
        let m = BlockSparseMatrix::from_dense(&random_dense(8, 3), 2, 0.0).unwrap();
        assert_eq!(m.filter(0.0), m);
    }

    #[test]
    fn filter_drops_single_small_block() {
        let d = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.0]);
        let m = BlockSparseMatrix::from_dense(&d, 2, 0.0).unwrap();
        assert!((m.frobenius_norm() - 0.5).abs() < 1e-15);
        assert!(m.filter(0.6).is_empty());
    }

    #[test]
    fn filter_keeps_blocks_at_threshold_bitwise() {
        // tile norms 1.0, 1e-5, 3e-4, 2.0 on a 4x4 matrix with b = 2
        let mut d = DMatrix::zeros(4, 4);
        d[(0, 0)] = 1.0;
        d[(0, 2)] = 1e-5;
        d[(2, 0)] = 3e-4;
        d[(2, 2)] = 2.0;
        let m = BlockSparseMatrix::from_dense(&d, 2, 0.0).unwrap();
        let f = m.filter(1e-4);
        assert_eq!(f.stored_blocks(), 3);
        assert!(f.block(0, 1).is_none());
        for ((r, c), b) in f.blocks() {
            assert_eq!(b, m.block(r, c).unwrap());
        }
        let diff = (m.to_dense() - f.to_dense()).norm();
        assert_eq!(diff, 1e-5);
    }

    #[test]
    fn filter_error_bound() {
        let m = BlockSparseMatrix::from_dense(&random_dense(12, 4).map(|x| x * 1e-3), 3, 0.0).unwrap();
        let tau = 2e-3;
        let f = m.filter(tau);
        let dropped = (m.stored_blocks() - f.stored_blocks()) as f64;
        let err = (m.to_dense() - f.to_dense()).norm();
        assert!(err <= tau * dropped.sqrt());
    }

    #[test]
    fn spamm_identity_operand() {
        let a = BlockSparseMatrix::from_dense(&random_dense(10, 5), 4, 0.0).unwrap();
        let id = BlockSparseMatrix::identity(10, 4).unwrap();
        let (p, _) = spamm(&a, &id, 0.0).unwrap();
        assert_eq!(p.to_dense(), a.to_dense());
    }

    #[test]
    fn spamm_rejects_mismatch() {
        let a = BlockSparseMatrix::zeros(8, 4).unwrap();
        let b = BlockSparseMatrix::zeros(8, 2).unwrap();
        let c = BlockSparseMatrix::zeros(6, 4).unwrap();
        assert!(matches!(spamm(&a, &b, 0.0), Err(Error::DimensionMismatch(_))));
        assert!(matches!(spamm(&a, &c, 0.0), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn spamm_exact_on_random_32() {
        let (da, db) = (random_dense(32, 6), random_dense(32, 7));
        let a = BlockSparseMatrix::from_dense(&da, 4, 0.0).unwrap();
        let b = BlockSparseMatrix::from_dense(&db, 4, 0.0).unwrap();
        let (p, count) = spamm(&a, &b, 0.0).unwrap();
        let err = (p.to_dense() - &da * &db).norm();
        assert!(err <= 1e-13 * da.norm() * db.norm());
        assert_eq!(count, 8 * 8 * 8);
    }

    #[test]
    fn basic_algebra() {
        let id = BlockSparseMatrix::identity(4, 4).unwrap();
        assert_eq!(id.trace_product(&id).unwrap(), 4.0);

        let (dx, dy) = (random_dense(8, 8), random_dense(8, 9));
        let x = BlockSparseMatrix::from_dense(&dx, 3, 0.0).unwrap();
        let y = BlockSparseMatrix::from_dense(&dy, 3, 0.0).unwrap();
        assert_eq!(x.transpose().transpose(), x);
        assert_eq!(x.transpose().to_dense(), dx.transpose());
        let dense_tr = (dx.transpose() * &dy).trace();
        assert!((x.trace_product(&y).unwrap() - dense_tr).abs() <= 1e-13);

        let comb = x.combine(2.0, &y, -0.5).unwrap().to_dense();
        assert!((comb - (&dx * 2.0 - &dy * 0.5)).norm() < 1e-14);
        assert!((x.scale(3.0).to_dense() - &dx * 3.0).norm() < 1e-14);
        assert!((x.hadamard(&y).unwrap().to_dense() - dx.component_mul(&dy)).norm() < 1e-15);
        let v: Vec<f64> = (0..8).map(|i| i as f64 - 3.5).collect();
        let mv = x.matvec(&v).unwrap();
        let dv = &dx * nalgebra::DVector::from_vec(v);
        assert!(mv.iter().zip(dv.iter()).all(|(a, b)| (a - b).abs() < 1e-13));
        assert!((x.trace() - dx.trace()).abs() < 1e-14);
    }

    #[test]
    fn triplet_dump_is_row_major() {
        let d = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 2.0, 0.0, 0.0, 0.0, 3.0, 0.0, 1.0 / 3.0]);
        let m = BlockSparseMatrix::from_dense(&d, 2, 0.0).unwrap();
        let mut buf = Vec::new();
        m.write_triplets(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "0 0 1.0000000000000000e0");
        assert_eq!(lines[2], "0 2 2.0000000000000000e0");
        assert_eq!(*lines.last().unwrap(), "2 2 3.3333333333333331e-1");
        let parsed: f64 = lines.last().unwrap().split(' ').nth(2).unwrap().parse().unwrap();
        assert_eq!(parsed, 1.0 / 3.0);
    }
}
