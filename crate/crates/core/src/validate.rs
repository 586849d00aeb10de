//! Self-checks that can be run against any configuration.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::claims::ClaimDistribution;
use crate::classical::{g_kernel, ClassicalSolution};
use crate::error::Result;
use crate::lundberg::{lundberg_fn, solve_pair};
use crate::model::{RiskModel, TransformParams};
use crate::refracted::{DensityEngine, GridSpec, RefractedSolution};
use crate::simulator::{estimate_joint_histogram, estimate_phi, SimConfig};

/// Outcome of one check.
#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub id: u32,
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub tolerance: f64,
    pub detail: String,
    pub seconds: f64,
}

/// Inputs for [`run_checks`].
#[derive(Clone, Debug)]
pub struct ValidationSetup {
    pub model: RiskModel,
    pub params: TransformParams,
    pub grid: GridSpec,
    /// One capital at or below the threshold and one above it.
    pub below: f64,
    pub above: f64,
    pub phi_paths: u64,
    pub hist_paths: u64,
    pub hist_edges: Vec<f64>,
    pub seed: u64,
}

fn timed<F: FnOnce() -> Result<(bool, f64, f64, String)>>(id: u32, name: &str, f: F) -> CheckResult {
    let start = Instant::now();
    let (passed, value, tolerance, detail) = match f() {
        Ok(v) => v,
        Err(e) => (false, f64::NAN, f64::NAN, format!("error: {e}")),
    };
    CheckResult {
        id,
        name: name.to_string(),
        passed,
        value,
        tolerance,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Largest Lundberg residual over the model and `count` random parameter
/// sets drawn around it.
pub fn lundberg_residuals(model: &RiskModel, params: TransformParams, count: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut sets = vec![(model.clone(), params)];
    for _ in 0..count {
        let lambda = rng.random_range(0.2..3.0);
        let mean = model.claims.mean();
        let c2 = lambda * mean * rng.random_range(1.05..3.0);
        let c1 = c2 * rng.random_range(1.0..2.0);
        let m = RiskModel::new(lambda, c1, c2, model.b, model.claims.clone())?;
        let p = TransformParams::new(rng.random_range(0.0..2.0), rng.random_range(0.05..1.0))?;
        sets.push((m, p));
    }
    for (m, p) in &sets {
        let roots = solve_pair(m, *p)?;
        for (c, rho) in [(m.c1, roots.rho1), (m.c2, roots.rho2)] {
            worst = worst.max(lundberg_fn(m.lambda, c, *p, &m.claims, rho).abs());
        }
    }
    Ok(worst)
}

/// `max |e^{-rho x} - sum_n r^n L[g(x, n, .)](delta)|` over `xs` and both
/// drifts.
pub fn lagrange_residual(model: &RiskModel, params: TransformParams, xs: &[f64], n_max: usize, dt: f64) -> Result<f64> {
    let roots = solve_pair(model, params)?;
    let mut worst: f64 = 0.0;
    for (i, rho) in [(1u8, roots.rho1), (2u8, roots.rho2)] {
        let c = if i == 1 { model.c1 } else { model.c2 };
        for &x in xs {
            // the kernel mass beyond t_max is below e^{-delta t_max}
            let t_max = x / c + 40.0 / (params.delta + model.lambda * (1.0 - params.r) + 0.1);
            let mut acc = 0.0;
            for n in 0..=n_max {
                let g = g_kernel(model, i, x, n, dt, t_max)?;
                acc += params.r.powi(n as i32) * g.laplace_at(params.delta);
            }
            worst = worst.max((acc - (-rho * x).exp()).abs());
        }
    }
    Ok(worst)
}

/// Largest residual of the integro-differential equations: on
/// `[lo_margin, b - lo_margin]` for `phi_1` and on `(b, b + upper]` for
/// `phi_2`.
pub fn ide_residuals(sol: &RefractedSolution, lo_margin: f64, upper: f64) -> (f64, f64) {
    let m = sol.model();
    let p = sol.params();
    let h = sol.step();
    let phi1 = sol.phi1_grid();
    let nb = phi1.len() - 1;
    let mut phi: Vec<f64> = phi1.to_vec();
    phi.extend_from_slice(&sol.phi2_grid()[1..]);
    let f: Vec<f64> = (0..phi.len()).map(|i| m.claims.f(i as f64 * h)).collect();
    let residual = |i: usize, c: f64| {
        let d = (phi[i + 1] - phi[i - 1]) / (2.0 * h);
        let mut conv = 0.5 * (phi[i] * f[0] + phi[0] * f[i]);
        for j in 1..i {
            conv += phi[i - j] * f[j];
        }
        conv *= h;
        let u = i as f64 * h;
        let rhs = (m.lambda + p.delta) / c * phi[i] - m.lambda * p.r / c * (conv + m.claims.fbar(u));
        (d - rhs).abs()
    };
    let lo = (lo_margin / h).ceil() as usize;
    let hi = ((m.b - lo_margin) / h).floor() as usize;
    let below = (lo.max(1)..=hi.min(nb.saturating_sub(1))).map(|i| residual(i, m.c1)).fold(0.0, f64::max);
    let top = (nb + (upper / h).round() as usize).min(phi.len() - 2);
    let above = (nb + 1..=top).map(|i| residual(i, m.c2)).fold(0.0, f64::max);
    (below, above)
}

/// `|sum_n r^n L[w(u, n, .)](delta) - phi(u)|` at each capital.
pub fn transform_residuals(model: &RiskModel, params: TransformParams, grid: GridSpec, us: &[f64]) -> Result<Vec<f64>> {
    let sol = RefractedSolution::new(model, params)?;
    let engine = DensityEngine::new(model, us, grid)?;
    engine
        .capitals()
        .iter()
        .map(|&u| Ok((engine.table(u)?.transform(params) - sol.phi(u)?).abs()))
        .collect()
}

/// Runs the checks that apply to the setup. Claim-count-exact checks that
/// need a closed form are left to the test suite.
pub fn run_checks(s: &ValidationSetup) -> Vec<CheckResult> {
    let mut out = Vec::new();
    out.push(timed(1, "lundberg residuals", || {
        let r = lundberg_residuals(&s.model, s.params, 50, s.seed)?;
        Ok((r < 1e-12, r, 1e-12, "51 parameter sets, both drifts".into()))
    }));
    out.push(timed(3, "lagrange identity", || {
        let r = lagrange_residual(&s.model, s.params, &[0.5, 1.0, 2.0, 5.0], 50, 2e-3)?;
        Ok((r < 1e-6, r, 1e-6, "x in {0.5, 1, 2, 5}, both drifts".into()))
    }));
    let sol = RefractedSolution::new(&s.model, s.params).map_err(|e| e.to_string());
    out.push(timed(6, "boundary continuity", || {
        let sol = sol.clone().map_err(crate::error::Error::Numerical)?;
        let gap = (sol.phi1(s.model.b)? - sol.phi2(s.model.b)?).abs();
        Ok((gap < 1e-3, gap, 1e-3, format!("phi1(b) = {:.8}", sol.phi1(s.model.b)?)))
    }));
    out.push(timed(7, "integro-differential residual", || {
        let sol = sol.clone().map_err(crate::error::Error::Numerical)?;
        let (a, b) = ide_residuals(&sol, 0.1, 5.0);
        let r = a.max(b);
        Ok((r < 1e-3, r, 1e-3, format!("below {a:.2e}, above {b:.2e}")))
    }));
    out.push(timed(8, "transform consistency", || {
        let r = transform_residuals(&s.model, s.params, s.grid, &[s.below, s.above])?;
        let worst = r.iter().cloned().fold(0.0, f64::max);
        Ok((worst < 1e-2, worst, 1e-2, format!("residuals {}", r.iter().map(|v| format!("{v:.2e}")).collect::<Vec<_>>().join(" "))))
    }));
    out.push(timed(9, "monte carlo agreement", || {
        let sol = sol.clone().map_err(crate::error::Error::Numerical)?;
        let cfg = SimConfig::new(s.phi_paths, s.seed);
        let mut worst: f64 = 0.0;
        let mut notes = Vec::new();
        for u in [s.below, s.above] {
            let e = estimate_phi(&s.model, u, s.params, &cfg)?;
            let z = (e.estimate - sol.phi(u)?) / e.std_error;
            worst = worst.max(z.abs());
            notes.push(format!("phi({u}) z={z:.2}"));
        }
        let engine = DensityEngine::new(&s.model, &[s.below, s.above], s.grid)?;
        let n_hist = 3.min(s.grid.n_max);
        let hcfg = SimConfig::new(s.hist_paths, s.seed);
        for &u in engine.capitals() {
            let table = engine.table(u)?;
            let h = estimate_joint_histogram(&s.model, u, &hcfg, &s.hist_edges, n_hist)?;
            for n in 1..=n_hist {
                for k in 0..h.bins() {
                    let (lo, hi) = (h.edges()[k], h.edges()[k + 1]);
                    if hi > table.t_max() + 1e-9 {
                        continue;
                    }
                    let want = table.integrate(n, lo, hi) / h.width(k);
                    let se = h.std_error(n, k);
                    if se > 0.0 {
                        worst = worst.max(((h.density(n, k) - want) / se).abs());
                    }
                }
            }
        }
        notes.push(format!("max |z| = {worst:.2}"));
        Ok((worst < 3.0, worst, 3.0, notes.join(", ")))
    }));
    out.push(timed(10, "no-refraction degeneracy", || {
        let flat = s.model.unrefracted();
        let sol = RefractedSolution::new(&flat, s.params)?;
        let classical = ClassicalSolution::new(&flat, s.params, flat.b.max(s.below), 1e-3)?;
        let mut worst: f64 = 0.0;
        for i in 0..=20 {
            let u = flat.b * i as f64 / 20.0;
            worst = worst.max((sol.phi1(u)? - classical.phi_inf(u)).abs());
        }
        let grid = GridSpec { n_max: s.grid.n_max.min(5), ..s.grid };
        let engine = DensityEngine::new(&flat, &[s.below], grid)?;
        let u = engine.capitals()[0];
        let table = engine.table(u)?;
        for n in 1..=grid.n_max {
            let w = engine.w_inf_row(u, n)?;
            let samples = &w.grid().expect("gridded").samples;
            for (a, b) in table.row(n).iter().zip(samples) {
                worst = worst.max((a - b).abs());
            }
        }
        Ok((worst < 1e-3, worst, 1e-3, "phi_1 vs phi_inf and w_1 vs w_inf".into()))
    }));
    out.push(timed(11, "thread-count determinism", || {
        let cfg = SimConfig::new(20_000, s.seed);
        let run = |threads: usize| -> Result<String> {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| crate::error::Error::Numerical(format!("thread pool: {e}")))?;
            pool.install(|| {
                let e = estimate_phi(&s.model, s.below, s.params, &cfg)?;
                let h = estimate_joint_histogram(&s.model, s.below, &cfg, &s.hist_edges, 3)?;
                Ok(format!("{:e},{:e}\n{}", e.estimate, e.std_error, h.to_csv()))
            })
        };
        let same = run(1)? == run(8)?;
        Ok((same, if same { 0.0 } else { 1.0 }, 0.0, "1 vs 8 threads".into()))
    }));
    out
}

/// Reference setup used by the test suite and the CLI defaults.
pub fn reference_setup() -> ValidationSetup {
    ValidationSetup {
        model: RiskModel::new(1.0, 1.5, 1.2, 2.0, ClaimDistribution::Exponential { rate: 1.0 })
            .expect("reference model is valid"),
        params: TransformParams::new(0.5, 0.9).expect("reference parameters are valid"),
        grid: GridSpec::default(),
        below: 1.0,
        above: 3.0,
        phi_paths: 1_000_000,
        hist_paths: 10_000_000,
        hist_edges: vec![0.0, 0.5, 1.0, 2.0, 4.0, 8.0],
        seed: 20261016,
    }
}
