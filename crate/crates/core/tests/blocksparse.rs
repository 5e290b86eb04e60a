mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;
use quirqi::{multiply, spamm, BlockSparseMatrix};

fn dense_strategy() -> impl Strategy<Value = (DMatrix<f64>, DMatrix<f64>, usize)> {
    (1usize..20, 1usize..7).prop_flat_map(|(n, bs)| {
        let elems = proptest::collection::vec(-1.0f64..1.0, n * n);
        (elems.clone(), elems, Just(n), Just(bs))
            .prop_map(|(a, b, n, bs)| (DMatrix::from_row_slice(n, n, &a), DMatrix::from_row_slice(n, n, &b), bs))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dense_roundtrip_is_exact((a, _, bs) in dense_strategy()) {
        let m = BlockSparseMatrix::from_dense(&a, bs, 0.0).unwrap();
        prop_assert_eq!(m.to_dense(), a);
    }

    #[test]
    fn exact_product_matches_dense((a, b, bs) in dense_strategy()) {
        let prod = multiply(&common::to_bsm(&a, bs), &common::to_bsm(&b, bs)).unwrap().to_dense();
        let dense = &a * &b;
        prop_assert!((prod - &dense).amax() <= 1e-13 * (1.0 + dense.amax()));
    }

    #[test]
    fn transpose_and_trace_product((a, b, bs) in dense_strategy()) {
        let (sa, sb) = (common::to_bsm(&a, bs), common::to_bsm(&b, bs));
        prop_assert_eq!(sa.transpose().to_dense(), a.transpose());
        let expect = a.component_mul(&b).sum();
        prop_assert!((sa.trace_product(&sb).unwrap() - expect).abs() <= 1e-12 * (1.0 + expect.abs()));
    }

    #[test]
    fn filter_error_is_bounded_by_dropped_norms((a, _, bs) in dense_strategy(), tau in 0.0f64..2.0) {
        let m = common::to_bsm(&a, bs);
        let kept = m.filter(tau);
        prop_assert!(kept.blocks().all(|(_, blk)| blk.norm() >= tau));
        let dropped = m.stored_blocks() - kept.stored_blocks();
        let err = (m.to_dense() - kept.to_dense()).norm();
        prop_assert!(err <= tau * (dropped as f64).sqrt() + 1e-15);
    }

    #[test]
    fn spamm_skips_only_small_products((a, b, bs) in dense_strategy(), tau in 0.0f64..1.0) {
        let (sa, sb) = (common::to_bsm(&a, bs), common::to_bsm(&b, bs));
        let (_, executed) = spamm(&sa, &sb, tau).unwrap();
        let mut expected = 0u64;
        for ((_, k), ablk) in sa.blocks() {
            for ((kb, _), bblk) in sb.blocks() {
                if kb == k && ablk.norm() * bblk.norm() >= tau {
                    expected += 1;
                }
            }
        }
        prop_assert_eq!(executed, expected);
    }
}

#[test]
fn spamm_error_is_monotone_in_the_drop_tolerance() {
    let mut rng = common::rng(3);
    for (n, bs) in [(48, 4), (61, 6)] {
        let a = common::decaying(n, 2.5, &mut rng);
        let b = common::decaying(n, 2.5, &mut rng);
        let (sa, sb) = (common::to_bsm(&a, bs), common::to_bsm(&b, bs));
        let dense = &a * &b;
        let mut last = f64::INFINITY;
        let mut last_count = u64::MAX;
        for e in (-12..=1).rev() {
            let (prod, count) = spamm(&sa, &sb, 10f64.powi(e)).unwrap();
            let err = common::rel_diff(&prod.to_dense(), &dense);
            assert!(err <= last, "n={n} tau=1e{e}: {err} > {last}");
            assert!(count >= last_count || last_count == u64::MAX);
            (last, last_count) = (err, count);
        }
        let exact = common::rel_diff(&spamm(&sa, &sb, 0.0).unwrap().0.to_dense(), &dense);
        assert!(exact <= last && exact <= 1e-13, "n={n}: exact product error {exact}");
    }
}

#[test]
fn decaying_matrices_are_sparse_after_filtering() {
    let mut rng = common::rng(8);
    let a = common::decaying(200, 1.0, &mut rng);
    let m = common::to_bsm(&a, 4).filter(1e-8);
    assert!(m.nnz_fraction() < 0.5, "nnz fraction {}", m.nnz_fraction());
}
