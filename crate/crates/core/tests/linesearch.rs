mod common;

use quirqi::linesearch::{
    assemble_coeffs, coarse_scan, line_search, solve_2d, LineSearchCoeffs, LineSearchStatus, LAMBDA_CAP,
};
use quirqi::ops::{apply_l, channel_images, merge, tsiper_eval, MulCtx};

fn plane(rng: &mut rand_chacha::ChaCha8Rng) -> LineSearchCoeffs {
    use rand::Rng;
    LineSearchCoeffs {
        a_p: rng.random_range(1.0..4.0),
        b_p: rng.random_range(-2.0..2.0),
        c_p: rng.random_range(0.5..3.0),
        a_q: rng.random_range(1.0..4.0),
        b_q: rng.random_range(-2.0..2.0),
        c_q: rng.random_range(0.5..3.0),
        r_pq: rng.random_range(1.0..3.0),
        s_pq: rng.random_range(-0.5..0.5),
        t_pq: rng.random_range(-0.5..0.5),
        u_pq: rng.random_range(-0.3..0.3),
    }
}

#[test]
fn outcome_never_rises_and_reports_its_own_value() {
    let mut rng = common::rng(40);
    for _ in 0..200 {
        let c = plane(&mut rng);
        let out = line_search(&c);
        assert!(out.omega <= c.omega(0.0, 0.0));
        assert!(out.lambda_p.abs() <= LAMBDA_CAP && out.lambda_q.abs() <= LAMBDA_CAP);
        if out.status != LineSearchStatus::Stagnated {
            let direct = c.omega(out.lambda_p, out.lambda_q);
            assert!((direct - out.omega).abs() <= 1e-12 * direct.abs());
        }
    }
}

#[test]
fn converged_outcome_is_stationary_in_each_step() {
    let mut rng = common::rng(41);
    for _ in 0..100 {
        let c = plane(&mut rng);
        let out = line_search(&c);
        if out.status != LineSearchStatus::Converged {
            continue;
        }
        let h = 1e-5;
        let (lp, lq) = (out.lambda_p, out.lambda_q);
        let dp = (c.omega(lp + h, lq) - c.omega(lp - h, lq)) / (2.0 * h);
        let dq = (c.omega(lp, lq + h) - c.omega(lp, lq - h)) / (2.0 * h);
        assert!(dp.abs() < 1e-6 && dq.abs() < 1e-6, "gradient ({dp}, {dq})");
    }
}

#[test]
fn stationary_origin_stagnates() {
    // minimum of the decoupled plane sits at the origin
    let c = LineSearchCoeffs {
        a_p: 2.0,
        b_p: 0.0,
        c_p: 1.0,
        a_q: 1.0,
        b_q: 0.0,
        c_q: 3.0,
        r_pq: 1.5,
        s_pq: 0.0,
        t_pq: 0.0,
        u_pq: 0.0,
    };
    let out = line_search(&c);
    assert_eq!(out.status, LineSearchStatus::Stagnated);
    assert_eq!((out.lambda_p, out.lambda_q), (0.0, 0.0));
}

#[test]
fn singular_start_is_rejected() {
    let mut rng = common::rng(42);
    let mut c = plane(&mut rng);
    c.r_pq = 1.0;
    c.s_pq = -1.0;
    c.t_pq = 0.0;
    c.u_pq = 0.0;
    // denominator vanishes exactly at (1, 0)
    let out = solve_2d(&c, (1.0, 0.0));
    assert_eq!(out.status, LineSearchStatus::Stagnated);
}

#[test]
fn coarse_scan_returns_a_grid_point_no_worse_than_origin() {
    let mut rng = common::rng(43);
    for _ in 0..50 {
        let c = plane(&mut rng);
        let (lp, lq) = coarse_scan(&c);
        assert!(c.omega(lp, lq) <= c.omega(0.0, 0.0));
    }
}

#[test]
fn assembled_plane_reproduces_the_quotient_along_the_directions() {
    let ctx = MulCtx::exact();
    for (n, seed) in [(6, 1), (10, 2), (12, 3)] {
        let sys = common::chain(n);
        let (p, q) = common::random_duals(&sys, seed);
        let (hp, hq) = common::random_duals(&sys, seed + 100);
        let images = |p, q| channel_images(&apply_l(&merge(p, q).unwrap(), &sys, &ctx).unwrap(), &sys, &ctx).unwrap();
        let (lp, lq) = images(&p, &q);
        let (lhp, lhq) = images(&hp, &hq);
        let c = assemble_coeffs(&p, &q, &hp, &hq, &lp, &lq, &lhp, &lhq, &sys, &ctx).unwrap();
        for (a, b) in [(0.0, 0.0), (0.3, -0.2), (-1.1, 0.7), (2.0, 2.0)] {
            let direct = tsiper_eval(&p.axpy(a, &hp).unwrap(), &q.axpy(b, &hq).unwrap(), &sys, &ctx).unwrap().omega;
            assert!((c.omega(a, b) - direct).abs() <= 1e-11 * direct.abs(), "({a}, {b}): {} vs {direct}", c.omega(a, b));
        }
        let out = line_search(&c);
        assert!(out.omega <= c.omega(0.0, 0.0));
    }
}

#[test]
fn shift_agrees_with_difference_of_values() {
    let mut rng = common::rng(44);
    for _ in 0..100 {
        let c = plane(&mut rng);
        for (a, b) in [(0.1, 0.2), (-0.5, 0.4), (1.3, -0.9)] {
            let diff = c.omega(a, b) - c.omega(0.0, 0.0);
            assert!((c.shift(a, b) - diff).abs() <= 1e-12 * (1.0 + c.omega(a, b).abs()));
        }
    }
}

#[test]
fn shift_resolves_changes_below_value_resolution() {
    let c = LineSearchCoeffs {
        a_p: 3.0,
        b_p: -2e-9,
        c_p: 1.0,
        a_q: 3.0,
        b_q: 0.0,
        c_q: 1.0,
        r_pq: 2.0,
        s_pq: 0.0,
        t_pq: 0.0,
        u_pq: 0.0,
    };
    let l = 1e-9;
    // exact change: (l * b + l^2 c) / r = -5e-19
    let shift = c.shift(l, 0.0);
    assert!((shift + 5e-19).abs() <= 1e-30, "{shift}");
    assert_eq!(c.omega(l, 0.0), c.omega(0.0, 0.0));
}
