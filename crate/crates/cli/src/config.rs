use std::path::{Path, PathBuf};

use refract::claims::{ClaimDistribution, TabulatedDensity};
use refract::refracted::GridSpec;
use refract::{RiskModel, TransformParams};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Everything a run needs. Times are in the same unit as `1 / lambda`,
/// amounts in the claim size unit.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelBlock,
    #[serde(default)]
    pub transform: TransformBlock,
    #[serde(default)]
    pub grid: GridBlock,
    #[serde(default)]
    pub sim: SimBlock,
    #[serde(default)]
    pub run: RunBlock,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    /// Claim arrival rate.
    pub lambda: f64,
    /// Premium rate below the threshold.
    pub c1: f64,
    /// Premium rate above the threshold, net of dividends.
    pub c2: f64,
    /// Threshold level.
    pub b: f64,
    pub claims: ClaimSpec,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum ClaimSpec {
    Exponential { rate: f64 },
    Erlang { shape: u32, rate: f64 },
    Mixture { weights: Vec<f64>, rates: Vec<f64> },
    /// Two-column CSV `x,f` with a header row; relative paths resolve
    /// against the config file.
    Tabulated { path: PathBuf },
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformBlock {
    /// Force of interest.
    pub delta: f64,
    /// Weight per claim, in `(0, 1]`.
    pub r: f64,
}

impl Default for TransformBlock {
    fn default() -> Self {
        Self { delta: 0.5, r: 0.9 }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    /// Target time step; the lattice may adjust it slightly so that the
    /// threshold and the capitals fall on nodes.
    pub dt: f64,
    pub t_max: f64,
    /// Amount step for the transforms.
    pub h_x: f64,
    pub n_max: usize,
}

impl Default for GridBlock {
    fn default() -> Self {
        Self { dt: 0.0125, t_max: 50.0, h_x: 1e-3, n_max: 20 }
    }
}

impl GridBlock {
    pub fn spec(&self) -> GridSpec {
        GridSpec {
            t_max: self.t_max,
            time_points: (self.t_max / self.dt).round().max(2.0) as usize,
            n_max: self.n_max,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimBlock {
    pub paths: u64,
    pub seed: u64,
    pub horizon: f64,
    /// Paths for the joint histogram.
    pub hist_paths: u64,
    /// Time bin edges of the joint histogram.
    pub hist_edges: Vec<f64>,
    pub hist_n_max: usize,
}

impl Default for SimBlock {
    fn default() -> Self {
        Self {
            paths: 1_000_000,
            seed: 20261016,
            horizon: 200.0,
            hist_paths: 10_000_000,
            hist_edges: vec![0.0, 0.5, 1.0, 2.0, 4.0, 8.0],
            hist_n_max: 3,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunBlock {
    /// Initial capitals.
    pub u: Vec<f64>,
    /// Claim counts written by `density`; empty means all.
    #[serde(default)]
    pub m: Vec<usize>,
}

impl Default for RunBlock {
    fn default() -> Self {
        Self { u: vec![1.0, 3.0], m: Vec::new() }
    }
}

/// Validated objects built from a [`RunConfig`].
pub struct Resolved {
    pub config: RunConfig,
    pub model: RiskModel,
    pub params: TransformParams,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Resolved, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if let ClaimSpec::Tabulated { path: p } = &mut config.model.claims {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        config.resolve()
    }

    pub fn resolve(self) -> Result<Resolved, CliError> {
        let bad = |e: refract::Error| CliError::Config(e.to_string());
        let claims = match &self.model.claims {
            ClaimSpec::Exponential { rate } => ClaimDistribution::Exponential { rate: *rate },
            ClaimSpec::Erlang { shape, rate } => ClaimDistribution::Erlang { shape: *shape, rate: *rate },
            ClaimSpec::Mixture { weights, rates } => {
                ClaimDistribution::MixtureOfExponentials { weights: weights.clone(), rates: rates.clone() }
            }
            ClaimSpec::Tabulated { path } => ClaimDistribution::Tabulated(TabulatedDensity::from_csv(path).map_err(bad)?),
        };
        let m = &self.model;
        let model = RiskModel::new(m.lambda, m.c1, m.c2, m.b, claims).map_err(bad)?;
        let params = TransformParams::new(self.transform.delta, self.transform.r).map_err(bad)?;
        let g = &self.grid;
        if !(g.dt > 0.0 && g.t_max > g.dt && g.h_x > 0.0 && g.n_max >= 1) {
            return Err(CliError::Config(format!(
                "grid needs 0 < dt < t_max, h_x > 0 and n_max >= 1, got dt={}, t_max={}, h_x={}, n_max={}",
                g.dt, g.t_max, g.h_x, g.n_max
            )));
        }
        let s = &self.sim;
        if s.paths == 0 || s.hist_paths == 0 || !(s.horizon > 0.0) || s.hist_n_max == 0 {
            return Err(CliError::Config("sim needs paths, hist_paths, hist_n_max >= 1 and horizon > 0".into()));
        }
        if s.hist_edges.len() < 2 || s.hist_edges.windows(2).any(|w| !(w[1] > w[0])) || s.hist_edges[0] < 0.0 {
            return Err(CliError::Config("sim.hist_edges must be nonnegative, increasing, at least two".into()));
        }
        if let Some(u) = self.run.u.iter().find(|u| !(**u >= 0.0 && u.is_finite())) {
            return Err(CliError::Config(format!("run.u entries must be finite and >= 0, got {u}")));
        }
        if self.run.m.iter().any(|m| *m == 0 || *m > g.n_max) {
            return Err(CliError::Config(format!("run.m entries must lie in 1..={}", g.n_max)));
        }
        Ok(Resolved { config: self, model, params })
    }
}

/// The reference configuration, also written by `refract init`.
pub const REFERENCE_TOML: &str = r#"# Refracted compound Poisson model. Time unit: 1 / lambda.
[model]
lambda = 1.0   # claim arrivals per unit time
c1 = 1.5       # premium rate below b
c2 = 1.2       # premium rate above b (after dividends)
b = 2.0        # threshold

[model.claims]
type = "exponential"   # exponential | erlang | mixture | tabulated
rate = 1.0

[transform]
delta = 0.5    # discount rate
r = 0.9        # weight per claim

[grid]
dt = 0.0125    # time step
t_max = 50.0   # time horizon of the density tables
h_x = 0.001    # amount step for the transforms
n_max = 20     # largest claim count

[sim]
paths = 1000000
seed = 20261016
horizon = 200.0
hist_paths = 10000000
hist_edges = [0.0, 0.5, 1.0, 2.0, 4.0, 8.0]
hist_n_max = 3

[run]
u = [1.0, 3.0]
m = []
"#;
