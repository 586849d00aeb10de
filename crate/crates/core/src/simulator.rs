//! Exact event-driven simulation of the refracted surplus.
//!
//! Between claims the surplus moves along straight lines (slope `c1` below
//! the threshold, `c2` at or above it), so each path is simulated without
//! time stepping. Paths are grouped in blocks of [`BLOCK`]; block `k` draws
//! from ChaCha8 stream `k` of the seed, which makes every result independent
//! of the number of worker threads.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;

use crate::claims::ClaimDistribution;
use crate::error::{Error, Result};
use crate::model::{RiskModel, TransformParams};

pub const BLOCK: u64 = 1024;
pub const DEFAULT_HORIZON: f64 = 200.0;

/// Path weights below this end a transform estimate early.
pub const WEIGHT_CUTOFF: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimOutcome {
    pub ruined: bool,
    pub tau: Option<f64>,
    pub n_claims_at_ruin: Option<usize>,
    pub horizon_hit: bool,
}

impl SimOutcome {
    fn survived(horizon_hit: bool) -> Self {
        Self { ruined: false, tau: None, n_claims_at_ruin: None, horizon_hit }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimConfig {
    pub paths: u64,
    pub horizon: f64,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(paths: u64, seed: u64) -> Self {
        Self { paths, horizon: DEFAULT_HORIZON, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.paths == 0 {
            return Err(Error::Usage("number of paths must be positive".into()));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Usage(format!("horizon must be positive and finite, got {}", self.horizon)));
        }
        Ok(())
    }
}

/// Source of inter-arrival times and claim sizes.
pub trait ClaimStream {
    fn next_interarrival(&mut self) -> f64;
    fn next_claim(&mut self) -> f64;
}

/// Poisson arrivals with i.i.d. claims.
pub struct RandomClaims<'a, R> {
    arrivals: Exp<f64>,
    claims: &'a ClaimDistribution,
    rng: R,
}

impl<'a, R: rand::Rng> RandomClaims<'a, R> {
    pub fn new(lambda: f64, claims: &'a ClaimDistribution, rng: R) -> Result<Self> {
        let arrivals = Exp::new(lambda).map_err(|e| Error::InvalidModel(format!("arrival rate: {e}")))?;
        Ok(Self { arrivals, claims, rng })
    }
}

impl<R: rand::Rng> ClaimStream for RandomClaims<'_, R> {
    fn next_interarrival(&mut self) -> f64 {
        self.arrivals.sample(&mut self.rng)
    }

    fn next_claim(&mut self) -> f64 {
        self.claims.sample(&mut self.rng)
    }
}

/// A fixed sequence; no further claims arrive once it is used up.
#[derive(Clone, Debug, Default)]
pub struct ScriptedClaims {
    events: Vec<(f64, f64)>,
    next: usize,
    claim: f64,
}

impl ScriptedClaims {
    /// `events[k] = (inter-arrival, claim size)`.
    pub fn new(events: Vec<(f64, f64)>) -> Self {
        Self { events, next: 0, claim: 0.0 }
    }
}

impl ClaimStream for ScriptedClaims {
    fn next_interarrival(&mut self) -> f64 {
        match self.events.get(self.next) {
            Some(&(e, x)) => {
                self.next += 1;
                self.claim = x;
                e
            }
            None => f64::INFINITY,
        }
    }

    fn next_claim(&mut self) -> f64 {
        self.claim
    }
}

/// Limits on a single path beyond the time horizon.
#[derive(Clone, Copy, Debug)]
struct Stop {
    horizon: f64,
    max_claims: usize,
    discount: Option<TransformParams>,
}

fn run_path<S: ClaimStream>(model: &RiskModel, u0: f64, stream: &mut S, stop: Stop) -> SimOutcome {
    let (b, c1, c2) = (model.b, model.c1, model.c2);
    let mut x = u0;
    let mut t = 0.0;
    let mut n = 0usize;
    loop {
        let e = stream.next_interarrival();
        if x < b {
            let tb = (b - x) / c1;
            x = if e <= tb { x + c1 * e } else { b + c2 * (e - tb) };
        } else {
            x += c2 * e;
        }
        t += e;
        if t > stop.horizon {
            return SimOutcome::survived(true);
        }
        n += 1;
        x -= stream.next_claim();
        if x < 0.0 {
            return SimOutcome { ruined: true, tau: Some(t), n_claims_at_ruin: Some(n), horizon_hit: false };
        }
        if n >= stop.max_claims {
            return SimOutcome::survived(false);
        }
        if let Some(p) = stop.discount {
            let w = p.r.powi(n as i32 + 1) * (-p.delta * t).exp();
            if w < WEIGHT_CUTOFF {
                return SimOutcome::survived(false);
            }
        }
    }
}

/// One path until ruin or the horizon.
pub fn simulate_path<S: ClaimStream>(model: &RiskModel, u0: f64, stream: &mut S, horizon: f64) -> SimOutcome {
    run_path(model, u0, stream, Stop { horizon, max_claims: usize::MAX, discount: None })
}

/// Runs `cfg.paths` paths and folds each block of outcomes in path order;
/// block results are returned in block order.
fn run_blocks<A, F>(model: &RiskModel, u0: f64, cfg: &SimConfig, stop: Stop, init: A, fold: F) -> Result<Vec<A>>
where
    A: Clone + Send + Sync,
    F: Fn(&mut A, SimOutcome) + Sync,
{
    model.validate()?;
    cfg.validate()?;
    if u0 < 0.0 {
        return Err(Error::Domain(format!("initial capital must be >= 0, got {u0}")));
    }
    let blocks = cfg.paths.div_ceil(BLOCK);
    (0..blocks)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(k);
            let mut stream = RandomClaims::new(model.lambda, &model.claims, rng)?;
            let mut acc = init.clone();
            let count = BLOCK.min(cfg.paths - k * BLOCK);
            for _ in 0..count {
                fold(&mut acc, run_path(model, u0, &mut stream, stop));
            }
            Ok(acc)
        })
        .collect()
}

/// Outcomes of every path, in path order.
pub fn simulate_outcomes(model: &RiskModel, u0: f64, cfg: &SimConfig) -> Result<Vec<SimOutcome>> {
    let stop = Stop { horizon: cfg.horizon, max_claims: usize::MAX, discount: None };
    let blocks = run_blocks(model, u0, cfg, stop, Vec::new(), |v: &mut Vec<SimOutcome>, o| v.push(o))?;
    Ok(blocks.into_iter().flatten().collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhiEstimate {
    pub estimate: f64,
    pub std_error: f64,
    /// Bound on the mass lost to the horizon, `e^{-delta * horizon}`.
    pub horizon_bias: f64,
    pub paths: u64,
}

/// Plain Monte Carlo estimate of `E[r^N e^{-delta tau}; tau < inf]`.
pub fn estimate_phi(model: &RiskModel, u0: f64, params: TransformParams, cfg: &SimConfig) -> Result<PhiEstimate> {
    params.validate()?;
    let stop = Stop { horizon: cfg.horizon, max_claims: usize::MAX, discount: Some(params) };
    let blocks = run_blocks(model, u0, cfg, stop, (0.0f64, 0.0f64), |acc, o| {
        if let (Some(t), Some(n)) = (o.tau, o.n_claims_at_ruin) {
            let w = params.r.powi(n as i32) * (-params.delta * t).exp();
            acc.0 += w;
            acc.1 += w * w;
        }
    })?;
    let (s, s2) = blocks.into_iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let n = cfg.paths as f64;
    let mean = s / n;
    let var = if cfg.paths > 1 { ((s2 - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
    Ok(PhiEstimate {
        estimate: mean,
        std_error: (var / n).sqrt(),
        horizon_bias: (-params.delta * cfg.horizon).exp(),
        paths: cfg.paths,
    })
}

/// Counts of ruin by claim count and time bin.
#[derive(Clone, Debug, PartialEq)]
pub struct JointHistogram {
    edges: Vec<f64>,
    n_max: usize,
    paths: u64,
    /// `counts[n - 1][k]`.
    counts: Vec<Vec<u64>>,
}

impl JointHistogram {
    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn paths(&self) -> u64 {
        self.paths
    }

    pub fn bins(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn count(&self, n: usize, k: usize) -> u64 {
        self.counts[n - 1][k]
    }

    pub fn width(&self, k: usize) -> f64 {
        self.edges[k + 1] - self.edges[k]
    }

    /// Density estimate on cell `(n, k)`.
    pub fn density(&self, n: usize, k: usize) -> f64 {
        self.count(n, k) as f64 / (self.paths as f64 * self.width(k))
    }

    /// Binomial standard error of [`density`](Self::density).
    pub fn std_error(&self, n: usize, k: usize) -> f64 {
        let p = self.count(n, k) as f64 / self.paths as f64;
        (p * (1.0 - p) / self.paths as f64).sqrt() / self.width(k)
    }

    /// CSV with columns `n,t_lo,t_hi,count,density,std_error`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,t_lo,t_hi,count,density,std_error\n");
        for n in 1..=self.n_max {
            for k in 0..self.bins() {
                let _ = writeln!(
                    s,
                    "{n},{},{},{},{:e},{:e}",
                    self.edges[k],
                    self.edges[k + 1],
                    self.count(n, k),
                    self.density(n, k),
                    self.std_error(n, k)
                );
            }
        }
        s
    }
}

/// Histogram of `(N, tau)` over the cells `n <= n_max` and the bins given by
/// `edges`. Paths stop at the last edge or after `n_max` claims.
pub fn estimate_joint_histogram(
    model: &RiskModel,
    u0: f64,
    cfg: &SimConfig,
    edges: &[f64],
    n_max: usize,
) -> Result<JointHistogram> {
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[1] > w[0])) || edges[0] < 0.0 {
        return Err(Error::Usage("time bin edges must be increasing, nonnegative and at least two".into()));
    }
    if n_max == 0 {
        return Err(Error::Usage("claim count limit must be >= 1".into()));
    }
    let last = *edges.last().expect("checked length");
    let horizon = last.min(cfg.horizon);
    let stop = Stop { horizon, max_claims: n_max, discount: None };
    let bins = edges.len() - 1;
    let init = vec![vec![0u64; bins]; n_max];
    let blocks = run_blocks(model, u0, cfg, stop, init, |acc, o| {
        if let (Some(t), Some(n)) = (o.tau, o.n_claims_at_ruin) {
            let k = edges.partition_point(|e| *e <= t);
            if k >= 1 && k <= bins {
                acc[n - 1][k - 1] += 1;
            }
        }
    })?;
    let mut counts = vec![vec![0u64; bins]; n_max];
    for block in blocks {
        for (row, add) in counts.iter_mut().zip(block) {
            for (c, a) in row.iter_mut().zip(add) {
                *c += a;
            }
        }
    }
    Ok(JointHistogram { edges: edges.to_vec(), n_max, paths: cfg.paths, counts })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> RiskModel {
        RiskModel::new(1.0, 1.5, 1.2, 2.0, ClaimDistribution::Exponential { rate: 1.0 }).unwrap()
    }

    #[test]
    fn no_claims_no_ruin() {
        let mut s = ScriptedClaims::new(vec![]);
        let o = simulate_path(&reference(), 0.0, &mut s, 50.0);
        assert!(!o.ruined && o.horizon_hit && o.tau.is_none());
    }

    #[test]
    fn first_claim_geometry() {
        let m = reference();
        // level at t = 1 from zero: 1.5 (threshold 2 not reached)
        let mut s = ScriptedClaims::new(vec![(1.0, 1.6)]);
        let o = simulate_path(&m, 0.0, &mut s, 50.0);
        assert_eq!((o.ruined, o.n_claims_at_ruin), (true, Some(1)));
        assert!((o.tau.unwrap() - 1.0).abs() < 1e-12);
        // level at t = 3: 2 + 1.2 * (3 - 4/3)
        let level = 2.0 + 1.2 * (3.0 - 4.0 / 3.0);
        let mut s = ScriptedClaims::new(vec![(3.0, level - 1e-9)]);
        assert!(!simulate_path(&m, 0.0, &mut s, 50.0).ruined);
        let mut s = ScriptedClaims::new(vec![(3.0, level + 1e-9)]);
        assert!(simulate_path(&m, 0.0, &mut s, 50.0).ruined);
    }

    #[test]
    fn hand_built_sequence() {
        let m = reference();
        // 1 -> 2.5 at t=1, claim 2 -> 0.5, then 1.2 time units: 0.5 + 1.5*1 = 2, +1.2*0.2 = 2.24
        let mut s = ScriptedClaims::new(vec![(1.0, 2.0), (1.2, 2.3)]);
        let o = simulate_path(&m, 1.0, &mut s, 50.0);
        assert_eq!(o.n_claims_at_ruin, Some(2));
        assert!((o.tau.unwrap() - 2.2).abs() < 1e-12);
    }

    #[test]
    fn independent_of_thread_count() {
        let m = reference();
        let cfg = SimConfig { paths: 5000, horizon: 50.0, seed: 7 };
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| simulate_outcomes(&m, 1.0, &cfg).unwrap())
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn discounting_limits() {
        let m = reference();
        let cfg = SimConfig::new(2000, 3);
        let heavy = estimate_phi(&m, 1.0, TransformParams::new(1e3, 1.0).unwrap(), &cfg).unwrap();
        assert!(heavy.estimate < 1e-3);
        let far = estimate_phi(&m, 60.0, TransformParams::new(0.0, 1.0).unwrap(), &cfg).unwrap();
        assert!(far.estimate < 1e-2);
    }

    #[test]
    fn histogram_is_defective() {
        let m = reference();
        let cfg = SimConfig::new(20_000, 11);
        let h = estimate_joint_histogram(&m, 1.0, &cfg, &[0.0, 0.5, 1.0, 2.0, 4.0], 3).unwrap();
        let mut mass = 0.0;
        for n in 1..=3 {
            for k in 0..h.bins() {
                mass += h.density(n, k) * h.width(k);
            }
        }
        assert!(mass > 0.0 && mass <= 1.0);
        assert!(h.to_csv().lines().count() == 1 + 3 * 4);
    }
}
