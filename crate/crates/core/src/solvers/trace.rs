//! Per-iteration convergence records and their CSV form.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

/// Column order of [`ConvergenceTrace::write_csv`]. Wall-clock time is kept
/// out of the CSV so that reruns with the same seed are byte-identical.
pub const TRACE_HEADER: &str = "iter,omega,omega_p,omega_q,e_rel,g_max,lambda_p,lambda_q,nnz_fraction,block_products";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    /// The quotient rose; the previous iterate is reported.
    NonVariationalExit,
    MaxIter,
    /// The quotient stopped decreasing to within round-off; the lowest
    /// iterate is reported.
    Stagnated,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Converged => "converged",
            Self::NonVariationalExit => "non_variational_exit",
            Self::MaxIter => "max_iter",
            Self::Stagnated => "stagnated",
        }
    }
}

/// One quotient evaluation. The step fields describe the step taken after
/// the evaluation and are empty on the terminal row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub omega: f64,
    pub omega_p: Option<f64>,
    pub omega_q: Option<f64>,
    pub e_rel: f64,
    pub g_max: f64,
    pub lambda_p: Option<f64>,
    pub lambda_q: Option<f64>,
    /// Stored-tile fraction of the transition density.
    pub nnz_fraction: f64,
    /// Tile products spent in this iteration.
    pub block_products: u64,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    pub rows: Vec<TraceRow>,
    pub status: SolveStatus,
}

pub(crate) fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub(crate) fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

impl ConvergenceTrace {
    pub fn new() -> Self {
        Self { rows: Vec::new(), status: SolveStatus::MaxIter }
    }

    /// Number of quotient evaluations.
    pub fn iterations(&self) -> usize {
        self.rows.len()
    }

    pub fn total_block_products(&self) -> u64 {
        self.rows.iter().map(|r| r.block_products).sum()
    }

    pub fn total_wall_ms(&self) -> f64 {
        self.rows.iter().map(|r| r.wall_ms).sum()
    }

    pub fn final_row(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{TRACE_HEADER}")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                r.iter,
                fmt_f64(r.omega),
                fmt_opt(r.omega_p),
                fmt_opt(r.omega_q),
                fmt_f64(r.e_rel),
                fmt_f64(r.g_max),
                fmt_opt(r.lambda_p),
                fmt_opt(r.lambda_q),
                fmt_f64(r.nnz_fraction),
                r.block_products,
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("trace CSV is ASCII")
    }
}

impl Default for ConvergenceTrace {
    fn default() -> Self {
        Self::new()
    }
}
