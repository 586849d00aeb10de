//! Nonnegative roots of `c s - (lambda + delta) + lambda r f̂(s) = 0`.

use crate::claims::ClaimDistribution;
use crate::error::{Error, Result};
use crate::model::{RiskModel, TransformParams};

const RESIDUAL_TOL: f64 = 1e-13;
const MAX_ITER: usize = 100;

/// Roots for both premium rates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LundbergRoots {
    pub rho1: f64,
    pub rho2: f64,
    pub residuals: (f64, f64),
}

/// Value of the Lundberg function at `s`.
pub fn lundberg_fn(lambda: f64, c: f64, params: TransformParams, d: &ClaimDistribution, s: f64) -> f64 {
    c * s - (lambda + params.delta) + lambda * params.r * d.lt(s)
}

/// The nonnegative root for premium rate `c`.
///
/// The function is convex, negative at 0 unless `delta = 0, r = 1`, and
/// nonnegative at `(lambda + delta) / c`.
pub fn solve_root(lambda: f64, c: f64, params: TransformParams, d: &ClaimDistribution) -> Result<f64> {
    if !(lambda > 0.0 && c > 0.0) {
        return Err(Error::InvalidModel(format!("lambda and c must be positive, got {lambda}, {c}")));
    }
    params.validate()?;
    if params.delta == 0.0 && params.r == 1.0 {
        return Ok(0.0);
    }
    let g = |s: f64| lundberg_fn(lambda, c, params, d, s);
    let dg = |s: f64| c + lambda * params.r * d.lt_derivative(s);
    let mut lo = 0.0;
    let mut hi = (lambda + params.delta) / c;
    let f_lo = g(lo);
    let mut f_hi = g(hi);
    let mut expansions = 0;
    while f_hi < 0.0 {
        hi *= 2.0;
        f_hi = g(hi);
        expansions += 1;
        if expansions > 60 || !f_hi.is_finite() {
            return Err(Error::Bracket { lo, hi, f_lo, f_hi });
        }
    }
    if f_lo > 0.0 {
        return Err(Error::Bracket { lo, hi, f_lo, f_hi });
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    let mut s = 0.5 * (lo + hi);
    for _ in 0..MAX_ITER {
        let v = g(s);
        if v.abs() < RESIDUAL_TOL {
            return Ok(s);
        }
        if v < 0.0 {
            lo = s;
        } else {
            hi = s;
        }
        let slope = dg(s);
        let newton = s - v / slope;
        s = if slope > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo < 4.0 * f64::EPSILON * hi.max(1.0) {
            break;
        }
    }
    let v = g(s);
    if v.abs() < 1e-12 {
        Ok(s)
    } else {
        Err(Error::Numerical(format!("root iteration stalled at s = {s}, residual {v:e}")))
    }
}

/// Roots for `c1` and `c2`.
pub fn solve_pair(model: &RiskModel, params: TransformParams) -> Result<LundbergRoots> {
    let rho1 = solve_root(model.lambda, model.c1, params, &model.claims)?;
    let rho2 = if model.c2 == model.c1 {
        rho1
    } else {
        solve_root(model.lambda, model.c2, params, &model.claims)?
    };
    Ok(LundbergRoots {
        rho1,
        rho2,
        residuals: (
            lundberg_fn(model.lambda, model.c1, params, &model.claims, rho1),
            lundberg_fn(model.lambda, model.c2, params, &model.claims, rho2),
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp1() -> ClaimDistribution {
        ClaimDistribution::Exponential { rate: 1.0 }
    }

    #[test]
    fn quadratic_examples() {
        let p = TransformParams::new(0.5, 1.0).unwrap();
        let r = solve_root(1.0, 1.5, p, &exp1()).unwrap();
        assert!((r - 1.0 / 3f64.sqrt()).abs() < 1e-12);
        assert_eq!(solve_root(1.0, 1.5, TransformParams::new(0.0, 1.0).unwrap(), &exp1()).unwrap(), 0.0);
        let r = solve_root(1.0, 1.5, TransformParams::new(0.5, 0.5).unwrap(), &exp1()).unwrap();
        assert!((r - (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn pair_example() {
        let m = RiskModel::new(1.0, 1.5, 1.2, 2.0, exp1()).unwrap();
        let roots = solve_pair(&m, TransformParams::new(0.5, 1.0).unwrap()).unwrap();
        let rho2 = (0.3 + (0.09f64 + 2.4).sqrt()) / 2.4;
        assert!((roots.rho2 - rho2).abs() < 1e-12);
        assert!((rho2 - 0.782_489).abs() < 1e-6);
        let same = solve_pair(&m.unrefracted(), TransformParams::new(0.5, 1.0).unwrap()).unwrap();
        assert_eq!(same.rho1, same.rho2);
    }

    #[test]
    fn large_delta_asymptote() {
        let p = TransformParams::new(1e3, 0.8).unwrap();
        for c in [1.5, 1.2] {
            let r = solve_root(1.0, c, p, &exp1()).unwrap();
            let asym = 1001.0 / c;
            assert!((r - asym).abs() / asym < 0.01);
        }
    }

    #[test]
    fn increasing_in_delta() {
        let d = ClaimDistribution::Erlang { shape: 2, rate: 2.0 };
        let mut prev = -1.0;
        for k in 0..40 {
            let delta = 0.05 * k as f64;
            let r = solve_root(1.0, 1.3, TransformParams::new(delta, 0.9).unwrap(), &d).unwrap();
            assert!(r > prev);
            prev = r;
        }
    }
}
