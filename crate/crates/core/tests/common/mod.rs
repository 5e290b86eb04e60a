//! Helpers shared by the integration suites.
#![allow(dead_code)]

use nalgebra::DMatrix;
use quirqi::ops::{annihilate, build_guess, split, GuessKind, MulCtx};
use quirqi::{BlockSparseMatrix, ChainParams, ModelSystem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn chain(n: usize) -> ModelSystem {
    ModelSystem::build_chain(n, &ChainParams::default()).expect("default chain builds")
}

/// A chain with randomized hopping, alternation, repulsion and site
/// energies. The ground state may still turn out RPA-unstable; callers
/// screen with the oracle.
pub fn random_params(rng: &mut ChaCha8Rng) -> ChainParams {
    ChainParams {
        hopping: rng.random_range(-3.0..-1.8),
        alternation: rng.random_range(0.0..0.25),
        kernel_u: rng.random_range(4.0..12.0),
        ohno_constant: rng.random_range(10.0..16.0),
        bond_length: rng.random_range(1.2..1.6),
        ..Default::default()
    }
}

pub fn random_dense(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0))
}

pub fn to_bsm(m: &DMatrix<f64>, block_size: usize) -> BlockSparseMatrix {
    BlockSparseMatrix::from_dense(m, block_size, 0.0).expect("square input")
}

/// Random annihilated density on `sys`.
pub fn random_density(sys: &ModelSystem, seed: u64) -> BlockSparseMatrix {
    build_guess(sys, GuessKind::Random, seed, &MulCtx::exact()).expect("random guess")
}

/// Random, independent `(p, q)` duals on `sys`.
pub fn random_duals(sys: &ModelSystem, seed: u64) -> (BlockSparseMatrix, BlockSparseMatrix) {
    let ctx = MulCtx::exact();
    let (p, _) = split(&random_density(sys, seed), sys, &ctx).unwrap();
    let (_, q) = split(&random_density(sys, seed.wrapping_add(7919)), sys, &ctx).unwrap();
    (p, q)
}

/// Random matrix projected onto the hole-particle/particle-hole blocks.
pub fn random_annihilated(sys: &ModelSystem, rng: &mut ChaCha8Rng) -> BlockSparseMatrix {
    let raw = to_bsm(&random_dense(sys.n_sites(), rng), sys.block_size());
    annihilate(&raw, sys, &MulCtx::exact()).unwrap()
}

/// `|a - b|_F / max(|b|_F, tiny)`.
pub fn rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

/// Matrix with entries decaying exponentially away from the diagonal.
pub fn decaying(n: usize, length: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| {
        let d = (i as f64 - j as f64).abs();
        rng.random_range(-1.0..1.0) * (-d / length).exp()
    })
}
