use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use refract::lundberg::{lundberg_fn, solve_pair};
use refract::refracted::{first_claim_density, DensityEngine, RefractedSolution, Side};
use refract::simulator::{estimate_joint_histogram, estimate_phi, SimConfig};
use refract::validate::{run_checks, ValidationSetup};
use serde_json::{json, Value};

use crate::config::Resolved;
use crate::error::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Where results go: files under `dir`, or stdout.
pub struct Sink {
    dir: Option<PathBuf>,
}

impl Sink {
    pub fn new(dir: Option<PathBuf>) -> Result<Self, CliError> {
        if let Some(d) = &dir {
            std::fs::create_dir_all(d)?;
        }
        Ok(Self { dir })
    }

    fn emit(&self, name: &str, body: &str) -> Result<(), CliError> {
        match &self.dir {
            Some(d) => {
                let path = d.join(name);
                std::fs::write(&path, body)?;
                println!("wrote {}", path.display());
            }
            None => {
                print!("{body}");
                if !body.ends_with('\n') {
                    println!();
                }
            }
        }
        Ok(())
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }
}

fn config_json(r: &Resolved) -> Value {
    serde_json::to_value(&r.config).unwrap_or(Value::Null)
}

/// Comment lines put in front of every CSV.
fn csv_preamble(r: &Resolved) -> String {
    format!("# refract {VERSION}\n# config {}\n", config_json(r))
}

fn with_echo(r: &Resolved, body: Value) -> Value {
    json!({ "version": VERSION, "config": config_json(r), "result": body })
}

fn pretty(v: &Value) -> Result<String, CliError> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

pub fn roots(r: &Resolved, sink: &Sink) -> Result<(), CliError> {
    let roots = solve_pair(&r.model, r.params)?;
    let m = &r.model;
    let res1 = lundberg_fn(m.lambda, m.c1, r.params, &m.claims, roots.rho1);
    let res2 = lundberg_fn(m.lambda, m.c2, r.params, &m.claims, roots.rho2);
    let body = json!({ "rho1": roots.rho1, "rho2": roots.rho2, "residual1": res1, "residual2": res2 });
    sink.emit("roots.json", &pretty(&with_echo(r, body))?)
}

pub fn phi(r: &Resolved, sink: &Sink) -> Result<(), CliError> {
    let b = r.model.b;
    let top = r.config.run.u.iter().cloned().fold(b, f64::max);
    let span = (top - b + 1.0).max(1.0);
    let sol = RefractedSolution::with_grid(&r.model, r.params, span, r.config.grid.h_x)?;
    let mut out = csv_preamble(r);
    out.push_str("u,phi,side\n");
    let mut rows: Vec<(f64, f64, Side)> = Vec::new();
    for &u in &r.config.run.u {
        if u <= b {
            rows.push((u, sol.phi1(u)?, Side::Below));
        } else {
            rows.push((u, sol.phi2(u)?, Side::Above));
        }
    }
    if !r.config.run.u.is_empty() {
        rows.push((b, sol.phi1(b)?, Side::Below));
        rows.push((b, sol.phi2(b)?, Side::Above));
    }
    for (u, v, side) in rows {
        let _ = writeln!(out, "{u},{v:.12e},{}", side.as_str());
    }
    sink.emit("phi.csv", &out)
}

pub fn density(r: &Resolved, sink: &Sink) -> Result<(), CliError> {
    let us = &r.config.run.u;
    if us.is_empty() {
        return Err(CliError::Config("density needs at least one capital in run.u".into()));
    }
    let grid = r.config.grid.spec();
    let engine = DensityEngine::new(&r.model, us, grid)?;
    let top = engine.capitals().iter().cloned().fold(r.model.b, f64::max);
    let sol = RefractedSolution::with_grid(&r.model, r.params, (top - r.model.b + 1.0).max(1.0), r.config.grid.h_x)?;
    let ms: Vec<usize> = if r.config.run.m.is_empty() { (1..=grid.n_max).collect() } else { r.config.run.m.clone() };
    let mut summaries = Vec::new();
    for (k, &u) in engine.capitals().iter().enumerate() {
        let table = engine.table(u)?;
        let mut csv = csv_preamble(r);
        csv.push_str("n,t,w\n");
        for &n in &ms {
            for (i, w) in table.row(n).iter().enumerate() {
                let _ = writeln!(csv, "{n},{},{w:e}", i as f64 * table.dt());
            }
        }
        sink.emit(&format!("density_u{k}.csv"), &csv)?;
        let phi = sol.phi(u)?;
        let transform = table.transform(r.params);
        let first_claim_gap = table
            .row(1)
            .iter()
            .enumerate()
            .map(|(i, w)| (w - first_claim_density(&r.model, u, i as f64 * table.dt())).abs())
            .fold(0.0, f64::max);
        summaries.push(json!({
            "u": u,
            "requested_u": us[k],
            "side": table.side().as_str(),
            "total": table.total(),
            "masses": table.masses(),
            "transform": transform,
            "phi": phi,
            "transform_residual": (transform - phi).abs(),
            "first_claim_max_gap": first_claim_gap,
            "clamped": table.clamped(),
        }));
    }
    let lat = engine.lattice();
    let body = json!({
        "lattice": { "dt": lat.dt, "time_points": lat.nt, "amount_step": lat.h },
        "tables": summaries,
    });
    sink.emit("density_summary.json", &pretty(&with_echo(r, body))?)
}

pub fn simulate(r: &Resolved, sink: &Sink) -> Result<(), CliError> {
    let s = &r.config.sim;
    let cfg = SimConfig { paths: s.paths, horizon: s.horizon, seed: s.seed };
    let hcfg = SimConfig { paths: s.hist_paths, horizon: s.horizon, seed: s.seed };
    let mut estimates = Vec::new();
    for (k, &u) in r.config.run.u.iter().enumerate() {
        let e = estimate_phi(&r.model, u, r.params, &cfg)?;
        estimates.push(json!({
            "u": u,
            "phi": e.estimate,
            "std_error": e.std_error,
            "horizon_bias": e.horizon_bias,
            "paths": e.paths,
        }));
        let h = estimate_joint_histogram(&r.model, u, &hcfg, &s.hist_edges, s.hist_n_max)?;
        let mut csv = csv_preamble(r);
        let _ = writeln!(csv, "# u {u}");
        csv.push_str(&h.to_csv());
        sink.emit(&format!("histogram_u{k}.csv"), &csv)?;
    }
    let body = json!({ "estimates": estimates });
    sink.emit("simulate.json", &pretty(&with_echo(r, body))?)
}

pub fn validate(r: &Resolved, sink: &Sink) -> Result<(), CliError> {
    let b = r.model.b;
    let us = &r.config.run.u;
    let below = us.iter().cloned().filter(|u| *u <= b).fold(f64::NAN, f64::max);
    let above = us.iter().cloned().filter(|u| *u > b).fold(f64::NAN, f64::min);
    let setup = ValidationSetup {
        model: r.model.clone(),
        params: r.params,
        grid: r.config.grid.spec(),
        below: if below.is_nan() { b / 2.0 } else { below },
        above: if above.is_nan() { b + 1.0 } else { above },
        phi_paths: r.config.sim.paths,
        hist_paths: r.config.sim.hist_paths,
        hist_edges: r.config.sim.hist_edges.clone(),
        seed: r.config.sim.seed,
    };
    let checks = run_checks(&setup);
    for c in &checks {
        eprintln!(
            "[{}] {:>2} {:<32} value {:.3e} (tol {:.1e}) {} [{:.1}s]",
            if c.passed { "PASS" } else { "FAIL" },
            c.id,
            c.name,
            c.value,
            c.tolerance,
            c.detail,
            c.seconds
        );
    }
    let failed: Vec<String> = checks.iter().filter(|c| !c.passed).map(|c| c.name.clone()).collect();
    let body = json!({ "passed": failed.is_empty(), "checks": checks });
    sink.emit("validate.json", &pretty(&with_echo(r, body))?)?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Validation(failed.join(", ")))
    }
}
