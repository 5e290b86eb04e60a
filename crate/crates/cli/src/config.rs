//! Strict JSON run configuration.

use std::path::{Path, PathBuf};

use quirqi::oracle::ORACLE_MAX_SITES;
use quirqi::{ChainParams, SolverConfig};
use serde::Deserialize;
use serde_json::{Map, Value};

use crate::failure::Failure;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Solve,
    Oracle,
    Compare,
    Fig1,
    #[value(name = "threshold-sweep")]
    ThresholdSweep,
    Scaling,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Solve => "solve",
            Mode::Oracle => "oracle",
            Mode::Compare => "compare",
            Mode::Fig1 => "fig1",
            Mode::ThresholdSweep => "threshold_sweep",
            Mode::Scaling => "scaling",
        }
    }
}

/// On-disk layout. The model section is kept as a raw map so that its
/// `n_sites` key can be separated from the strictly parsed chain
/// parameters.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    model: Map<String, Value>,
    #[serde(default)]
    solver: SolverConfig,
    mode: Option<Mode>,
    output_dir: Option<PathBuf>,
    chain_lengths: Option<Vec<usize>>,
    tau_list: Option<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub mode: Mode,
    /// Chain length; absent only in scaling mode.
    pub n_sites: Option<usize>,
    pub model: ChainParams,
    pub solver: SolverConfig,
    pub output_dir: PathBuf,
    pub chain_lengths: Vec<usize>,
    pub tau_list: Vec<f64>,
}

fn schema(message: impl Into<String>, path: &Path) -> Failure {
    Failure::config(message, path)
}

impl RunConfig {
    /// Reads and validates `path` for `mode`. `out` and `seed` override the
    /// file's `output_dir` and `solver.seed`.
    pub fn load(path: &Path, mode: Mode, out: Option<PathBuf>, seed: Option<u64>) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| schema(format!("cannot read config: {e}"), path))?;
        let raw: RawConfig = serde_json::from_str(&text).map_err(|e| schema(e.to_string(), path))?;

        if let Some(declared) = raw.mode {
            if declared != mode {
                return Err(schema(
                    format!("config declares mode {} but {} was requested", declared.as_str(), mode.as_str()),
                    path,
                ));
            }
        }
        let mut model_map = raw.model;
        let n_sites = match model_map.remove("n_sites") {
            None => None,
            Some(v) => Some(
                v.as_u64()
                    .map(|n| n as usize)
                    .ok_or_else(|| schema(format!("model.n_sites must be a positive integer, got {v}"), path))?,
            ),
        };
        let model: ChainParams =
            serde_json::from_value(Value::Object(model_map)).map_err(|e| schema(format!("model: {e}"), path))?;
        let mut solver = raw.solver;
        if let Some(seed) = seed {
            solver.seed = seed;
        }
        solver.validate().map_err(|e| schema(format!("solver: {e}"), path))?;

        let output_dir = out
            .or(raw.output_dir)
            .ok_or_else(|| schema("no output directory: pass --out or set output_dir", path))?;

        let chain_lengths = match (mode, raw.chain_lengths) {
            (Mode::Scaling, None) => return Err(schema("scaling mode requires chain_lengths", path)),
            (Mode::Scaling, Some(v)) if v.len() < 2 => {
                return Err(schema("chain_lengths needs at least two lengths", path))
            }
            (_, v) => v.unwrap_or_default(),
        };
        let tau_list = match (mode, raw.tau_list) {
            (Mode::ThresholdSweep, None) => return Err(schema("threshold_sweep mode requires tau_list", path)),
            (_, Some(v)) if v.iter().any(|t| !(t.is_finite() && *t >= 0.0)) => {
                return Err(schema("tau_list entries must be finite and nonnegative", path))
            }
            (_, v) => v.unwrap_or_default(),
        };
        match (mode, n_sites) {
            (Mode::Scaling, _) => {}
            (_, None) => return Err(schema("missing required field model.n_sites", path)),
            (_, Some(n)) if n < 2 => return Err(schema(format!("model.n_sites must be at least 2, got {n}"), path)),
            (Mode::Oracle | Mode::Compare | Mode::Fig1, Some(n)) if n > ORACLE_MAX_SITES => {
                return Err(schema(
                    format!("{} mode needs the dense reference, limited to {ORACLE_MAX_SITES} sites; got {n}", mode.as_str()),
                    path,
                ))
            }
            _ => {}
        }
        Ok(Self { mode, n_sites, model, solver, output_dir, chain_lengths, tau_list })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites.expect("validated for every mode that reads it")
    }
}
