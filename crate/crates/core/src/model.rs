//! Model parameters.

use crate::claims::ClaimDistribution;
use crate::error::{Error, Result};

/// Compound Poisson surplus with premium rate `c1` below the threshold `b`
/// and `c2` above it.
#[derive(Clone, Debug, PartialEq)]
pub struct RiskModel {
    pub lambda: f64,
    pub c1: f64,
    pub c2: f64,
    pub b: f64,
    pub claims: ClaimDistribution,
}

impl RiskModel {
    /// Validated constructor.
    pub fn new(lambda: f64, c1: f64, c2: f64, b: f64, claims: ClaimDistribution) -> Result<Self> {
        let m = Self { lambda, c1, c2, b, claims };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidModel(format!("{name} must be positive and finite, got {v}")))
            }
        };
        pos("lambda", self.lambda)?;
        pos("c1", self.c1)?;
        pos("c2", self.c2)?;
        if !(self.b >= 0.0 && self.b.is_finite()) {
            return Err(Error::InvalidModel(format!("threshold b must be >= 0, got {}", self.b)));
        }
        self.claims.validate()?;
        if self.c2 > self.c1 {
            return Err(Error::InvalidModel(format!(
                "premium above the threshold must not exceed the one below: c2 = {} > c1 = {}",
                self.c2, self.c1
            )));
        }
        let load = self.lambda * self.claims.mean();
        if self.c2 <= load {
            return Err(Error::InvalidModel(format!(
                "net profit condition fails: c2 = {} must exceed lambda * E[X] = {}",
                self.c2, load
            )));
        }
        Ok(())
    }

    /// Same model with both premium rates equal to `c1` (no refraction).
    pub fn unrefracted(&self) -> Self {
        Self { c2: self.c1, ..self.clone() }
    }
}

/// Laplace argument `delta` for the ruin time and marking variable `r`
/// for the claim count.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransformParams {
    pub delta: f64,
    pub r: f64,
}

impl TransformParams {
    pub fn new(delta: f64, r: f64) -> Result<Self> {
        let p = Self { delta, r };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidModel(format!("delta must be >= 0, got {}", self.delta)));
        }
        if !(self.r > 0.0 && self.r <= 1.0) {
            return Err(Error::InvalidModel(format!("r must lie in (0, 1], got {}", self.r)));
        }
        Ok(())
    }
}
