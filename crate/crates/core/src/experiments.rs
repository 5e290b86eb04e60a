//! Batch experiments behind the command-line modes: solver-versus-oracle
//! comparison, the three-solver convergence comparison, the truncation
//! threshold sweep and the block-product scaling benchmark.

use std::io::{self, Write};
use std::time::Instant;

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{ChainParams, ModelSystem};
use crate::ops::{build_guess, MulCtx};
use crate::oracle::{build_ab, solve_rpa_dense, solve_tda_dense};
use crate::solvers::trace::{fmt_f64, fmt_opt};
use crate::solvers::{quirqi, quirqi_from, rqi_thouless_from, tda_rqi_from, Solution, SolveStatus, SolverConfig, TdaSolution};

/// One-line JSON summary of a solver run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub solver: String,
    pub n_sites: usize,
    pub omega: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub total_block_products: u64,
    pub total_wall_ms: f64,
}

impl RunSummary {
    pub fn from_solution(solver: &str, n_sites: usize, sol: &Solution) -> Self {
        Self {
            solver: solver.into(),
            n_sites,
            omega: sol.omega,
            status: sol.trace.status,
            iterations: sol.trace.iterations(),
            total_block_products: sol.trace.total_block_products(),
            total_wall_ms: sol.trace.total_wall_ms(),
        }
    }
}

/// The dual-channel solver checked against the dense reference.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompareReport {
    pub n_sites: usize,
    pub omega: f64,
    pub omega_oracle: f64,
    pub abs_error: f64,
    pub rel_error: f64,
    pub iterations: usize,
    pub status: SolveStatus,
    /// Lowest Tamm-Dancoff root, for reference.
    pub omega_tda_oracle: f64,
}

impl CompareReport {
    pub const HEADER: &'static str = "n_sites,omega,omega_oracle,abs_error,rel_error,iterations,status,omega_tda_oracle";

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{}", Self::HEADER)?;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            self.n_sites,
            fmt_f64(self.omega),
            fmt_f64(self.omega_oracle),
            fmt_f64(self.abs_error),
            fmt_f64(self.rel_error),
            self.iterations,
            self.status.as_str(),
            fmt_f64(self.omega_tda_oracle),
        )
    }
}

pub fn compare(sys: &ModelSystem, cfg: &SolverConfig) -> Result<(CompareReport, Solution)> {
    let spec = solve_rpa_dense(build_ab(sys)?)?;
    let tda = solve_tda_dense(&spec);
    let sol = quirqi(sys, cfg)?;
    let omega_oracle = spec.omegas[0];
    let abs_error = sol.omega - omega_oracle;
    let report = CompareReport {
        n_sites: sys.n_sites(),
        omega: sol.omega,
        omega_oracle,
        abs_error,
        rel_error: abs_error / omega_oracle,
        iterations: sol.trace.iterations(),
        status: sol.trace.status,
        omega_tda_oracle: tda.omegas[0],
    };
    Ok((report, sol))
}

/// The three solvers started from one shared guess.
#[derive(Clone, Debug)]
pub struct SolverComparison {
    pub quirqi: Solution,
    pub thouless: Solution,
    pub tda: TdaSolution,
    pub omega_rpa_oracle: f64,
    pub omega_tda_oracle: f64,
}

impl SolverComparison {
    pub const CURVE_HEADER: &'static str = "iter,quirqi,rqi_thouless,tda_rqi";

    /// `omega - omega_final` per solver and iteration; empty once a solver
    /// has stopped.
    pub fn write_curve_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let curves = [
            (&self.quirqi.trace.rows, self.quirqi.omega),
            (&self.thouless.trace.rows, self.thouless.omega),
            (&self.tda.trace.rows, self.tda.omega),
        ];
        let len = curves.iter().map(|(rows, _)| rows.len()).max().unwrap_or(0);
        writeln!(w, "{}", Self::CURVE_HEADER)?;
        for k in 0..len {
            let cells: Vec<String> = curves
                .iter()
                .map(|(rows, last)| fmt_opt(rows.get(k).map(|r| r.omega - last)))
                .collect();
            writeln!(w, "{k},{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// Runs the dual-channel, single-channel and Tamm-Dancoff solvers from the
/// configured guess. The Tamm-Dancoff start is the guess's hole-particle
/// amplitude vector.
pub fn fig1(sys: &ModelSystem, cfg: &SolverConfig) -> Result<SolverComparison> {
    cfg.validate()?;
    let spec = solve_rpa_dense(build_ab(sys)?)?;
    let tda_spec = solve_tda_dense(&spec);
    let v0 = build_guess(sys, cfg.guess, cfg.seed, &MulCtx::new(cfg.tau_mtx))?;
    let (x0, _): (DVector<f64>, _) = spec.site_to_amplitudes(&v0.to_dense());
    if !(x0.norm() > 0.0) {
        return Err(Error::InvalidParameter("starting guess has no hole-particle component".into()));
    }
    Ok(SolverComparison {
        quirqi: quirqi_from(sys, cfg, &v0)?,
        thouless: rqi_thouless_from(sys, cfg, &v0)?,
        tda: tda_rqi_from(&spec.a, cfg, &x0)?,
        omega_rpa_oracle: spec.omegas[0],
        omega_tda_oracle: tda_spec.omegas[0],
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub tau_mtx: f64,
    pub omega: f64,
    /// `omega - omega(tau = 0)`.
    pub delta: f64,
    pub iterations: usize,
    /// Stored-tile fraction of the final transition density.
    pub nnz_fraction: f64,
    pub status: SolveStatus,
}

pub const SWEEP_HEADER: &str = "tau_mtx,omega,delta,iterations,nnz_fraction,status";

/// Solves once exactly and once per threshold in `taus`. The exact
/// reference is the first row.
pub fn threshold_sweep(sys: &ModelSystem, cfg: &SolverConfig, taus: &[f64]) -> Result<Vec<SweepRow>> {
    let run = |tau: f64| quirqi(sys, &SolverConfig { tau_mtx: tau, ..cfg.clone() });
    let exact = run(0.0)?;
    let row = |tau: f64, sol: &Solution| SweepRow {
        tau_mtx: tau,
        omega: sol.omega,
        delta: sol.omega - exact.omega,
        iterations: sol.trace.iterations(),
        nnz_fraction: sol.v.nnz_fraction(),
        status: sol.trace.status,
    };
    let mut rows = vec![row(0.0, &exact)];
    for &tau in taus.iter().filter(|&&t| t != 0.0) {
        rows.push(row(tau, &run(tau)?));
    }
    Ok(rows)
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut w: W) -> io::Result<()> {
    writeln!(w, "{SWEEP_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            fmt_f64(r.tau_mtx),
            fmt_f64(r.omega),
            fmt_f64(r.delta),
            r.iterations,
            fmt_f64(r.nnz_fraction),
            r.status.as_str()
        )?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingRow {
    pub n_sites: usize,
    pub iterations: usize,
    pub block_products: u64,
    pub products_per_iteration: f64,
    /// Informative only; machine dependent.
    pub wall_ms_per_iteration: f64,
    pub nnz_fraction: f64,
    pub omega: f64,
}

pub const SCALING_HEADER: &str =
    "n_sites,iterations,block_products,products_per_iteration,wall_ms_per_iteration,nnz_fraction,omega";

/// Runs the sparse dual-channel solver for `cfg.max_iter` iterations (or
/// until it exits) on each chain length and records its tile-product cost.
/// No dense reference is built.
pub fn scaling(params: &ChainParams, lengths: &[usize], cfg: &SolverConfig) -> Result<Vec<ScalingRow>> {
    cfg.validate()?;
    lengths
        .iter()
        .map(|&n| {
            let sys = ModelSystem::build_chain(n, params)?;
            let started = Instant::now();
            let sol = quirqi(&sys, cfg)?;
            let elapsed = started.elapsed().as_secs_f64() * 1e3;
            let iterations = sol.trace.iterations();
            let products = sol.trace.total_block_products();
            Ok(ScalingRow {
                n_sites: n,
                iterations,
                block_products: products,
                products_per_iteration: products as f64 / iterations as f64,
                wall_ms_per_iteration: elapsed / iterations as f64,
                nnz_fraction: sol.v.nnz_fraction(),
                omega: sol.omega,
            })
        })
        .collect()
}

pub fn write_scaling_csv<W: Write>(rows: &[ScalingRow], mut w: W) -> io::Result<()> {
    writeln!(w, "{SCALING_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.n_sites,
            r.iterations,
            r.block_products,
            fmt_f64(r.products_per_iteration),
            fmt_f64(r.wall_ms_per_iteration),
            fmt_f64(r.nnz_fraction),
            fmt_f64(r.omega)
        )?;
    }
    Ok(())
}

/// Least-squares line `y = slope * x + intercept`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() {
        return Err(Error::dims("linear fit", x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(Error::InvalidParameter("linear fit needs at least two points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("linear fit needs distinct abscissae".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LinearFit { slope, intercept, r_squared })
}
