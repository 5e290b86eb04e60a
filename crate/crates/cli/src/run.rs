//! Mode dispatch. Every mode computes its artifacts in memory first, so a
//! failed run leaves nothing behind in the output directory.

use std::path::Path;
use std::time::Instant;

use quirqi::experiments::{
    compare, fig1, linear_fit, scaling, threshold_sweep, write_scaling_csv, write_sweep_csv, RunSummary,
};
use quirqi::oracle::{rpa_spectrum, solve_tda_dense};
use quirqi::{quirqi, ModelSystem, Solution};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Mode, RunConfig};
use crate::failure::Failure;

/// Named file contents awaiting a successful run.
pub struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    fn new() -> Self {
        Self { files: Vec::new() }
    }

    fn add(&mut self, name: &str, write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) {
        let mut buf = Vec::new();
        write(&mut buf).expect("writing to memory cannot fail");
        self.files.push((name.to_owned(), buf));
    }

    fn add_json(&mut self, name: &str, value: &impl Serialize) {
        let mut buf = serde_json::to_vec_pretty(value).expect("summary serializes");
        buf.push(b'\n');
        self.files.push((name.to_owned(), buf));
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    pub fn write_to(&self, dir: &Path) -> Result<(), Failure> {
        std::fs::create_dir_all(dir).map_err(|e| Failure::io(format!("cannot create output directory: {e}"), dir))?;
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            std::fs::write(&path, bytes).map_err(|e| Failure::io(format!("cannot write {name}: {e}"), &path))?;
        }
        Ok(())
    }
}

fn trace_file(sol: &Solution) -> impl FnOnce(&mut Vec<u8>) -> std::io::Result<()> + '_ {
    move |b| sol.trace.write_csv(b)
}

fn build(cfg: &RunConfig) -> Result<ModelSystem, quirqi::Error> {
    ModelSystem::build_chain(cfg.n_sites(), &cfg.model)
}

fn config_echo(cfg: &RunConfig) -> Value {
    json!({
        "mode": cfg.mode.as_str(),
        "n_sites": cfg.n_sites,
        "model": cfg.model,
        "solver": cfg.solver,
    })
}

pub fn execute(cfg: &RunConfig) -> Result<Artifacts, Failure> {
    let mode = cfg.mode.as_str();
    let fail = |e| Failure::from_solver(e, mode);
    let started = Instant::now();
    let mut out = Artifacts::new();
    let mut summary = config_echo(cfg);

    match cfg.mode {
        Mode::Solve => {
            let sys = build(cfg).map_err(fail)?;
            let sol = quirqi(&sys, &cfg.solver).map_err(fail)?;
            out.add("trace.csv", trace_file(&sol));
            out.add("geometry.xyz", |b| sys.write_xyz(b, &format!("{}-site chain", sys.n_sites())));
            summary["result"] = json!(RunSummary::from_solution("quirqi", sys.n_sites(), &sol));
        }
        Mode::Oracle => {
            let sys = build(cfg).map_err(fail)?;
            let spec = rpa_spectrum(&sys).map_err(fail)?;
            let tda = solve_tda_dense(&spec);
            out.add("roots.csv", |b| spec.write_roots_csv(b));
            summary["result"] = json!({
                "omega_rpa": spec.omegas[0],
                "omega_tda": tda.omegas[0],
                "n_roots": spec.omegas.len(),
                "max_residual": spec.residuals.iter().copied().fold(0.0, f64::max),
            });
        }
        Mode::Compare => {
            let sys = build(cfg).map_err(fail)?;
            let (report, sol) = compare(&sys, &cfg.solver).map_err(fail)?;
            out.add("compare.csv", |b| report.write_csv(b));
            out.add("trace.csv", trace_file(&sol));
            summary["result"] = json!(report);
            summary["run"] = json!(RunSummary::from_solution("quirqi", sys.n_sites(), &sol));
        }
        Mode::Fig1 => {
            let sys = build(cfg).map_err(fail)?;
            let cmp = fig1(&sys, &cfg.solver).map_err(fail)?;
            out.add("trace_quirqi.csv", trace_file(&cmp.quirqi));
            out.add("trace_rqi_thouless.csv", trace_file(&cmp.thouless));
            out.add("trace_tda_rqi.csv", |b| cmp.tda.trace.write_csv(b));
            out.add("convergence.csv", |b| cmp.write_curve_csv(b));
            let n = sys.n_sites();
            summary["result"] = json!({
                "quirqi": RunSummary::from_solution("quirqi", n, &cmp.quirqi),
                "rqi_thouless": RunSummary::from_solution("rqi_thouless", n, &cmp.thouless),
                "tda_rqi": {
                    "omega": cmp.tda.omega,
                    "status": cmp.tda.trace.status,
                    "iterations": cmp.tda.trace.iterations(),
                    "total_wall_ms": cmp.tda.trace.total_wall_ms(),
                },
                "omega_rpa_oracle": cmp.omega_rpa_oracle,
                "omega_tda_oracle": cmp.omega_tda_oracle,
            });
        }
        Mode::ThresholdSweep => {
            let sys = build(cfg).map_err(fail)?;
            let rows = threshold_sweep(&sys, &cfg.solver, &cfg.tau_list).map_err(fail)?;
            out.add("threshold_sweep.csv", |b| write_sweep_csv(&rows, b));
            summary["result"] = json!(rows);
        }
        Mode::Scaling => {
            let rows = scaling(&cfg.model, &cfg.chain_lengths, &cfg.solver).map_err(fail)?;
            let x: Vec<f64> = rows.iter().map(|r| r.n_sites as f64).collect();
            let y: Vec<f64> = rows.iter().map(|r| r.products_per_iteration).collect();
            let fit = linear_fit(&x, &y).map_err(fail)?;
            out.add("scaling.csv", |b| write_scaling_csv(&rows, b));
            summary["result"] = json!({ "rows": rows, "products_per_iteration_fit": fit });
        }
    }
    summary["total_wall_ms"] = json!(started.elapsed().as_secs_f64() * 1e3);
    out.add_json("summary.json", &summary);
    Ok(out)
}
