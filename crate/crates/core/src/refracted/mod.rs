//! The refracted model: transforms `phi_1` below the threshold and `phi_2`
//! above it, and the joint density of ruin time and claim count.

mod density;

pub use density::{DensityEngine, DensityTable, GridSpec, Side};

use crate::classical::{contraction_factor, fit_step, solve_renewal, ClassicalSolution, DEFAULT_AMOUNT_STEP};
use crate::error::{Error, Result};
use crate::lundberg::{solve_pair, LundbergRoots};
use crate::model::{RiskModel, TransformParams};
use crate::quad::interp_cubic;

/// Default length of the `phi_2` grid above the threshold.
pub const DEFAULT_UPPER_SPAN: f64 = 10.0;

/// `phi_1` on `[0, b]` and `phi_2` on `[b, b + span]`, sharing one amount step.
#[derive(Clone, Debug)]
pub struct RefractedSolution {
    model: RiskModel,
    params: TransformParams,
    roots: LundbergRoots,
    step: f64,
    classical: ClassicalSolution,
    chi: f64,
    k: f64,
    phi1: Vec<f64>,
    h: Vec<f64>,
    phi2: Vec<f64>,
}

impl RefractedSolution {
    pub fn new(model: &RiskModel, params: TransformParams) -> Result<Self> {
        Self::with_grid(model, params, DEFAULT_UPPER_SPAN, DEFAULT_AMOUNT_STEP)
    }

    pub fn with_grid(model: &RiskModel, params: TransformParams, span: f64, h: f64) -> Result<Self> {
        model.validate()?;
        params.validate()?;
        if !(span > 0.0) || !(h > 0.0) {
            return Err(Error::Usage(format!("bad amount grid: span={span}, step={h}")));
        }
        let roots = solve_pair(model, params)?;
        let lam = model.lambda;
        let factor = contraction_factor(lam, params.r, model.c2, roots.rho2, &model.claims);
        if factor >= 1.0 {
            return Err(Error::NotContractive { factor });
        }
        let (step, nb) = fit_step(model.b, h);
        let classical = ClassicalSolution::new(model, params, model.b, step)?;
        let d = &model.claims;
        let rho2 = roots.rho2;
        let kappa2 = lam * params.r / model.c2;
        let ny = (span / step).ceil() as usize;
        let tf2: Vec<f64> = (0..=nb + ny).map(|i| d.tf(rho2, i as f64 * step)).collect();
        let tfbar2 = |x: f64| d.tfbar(rho2, x);

        let phi_inf = classical.phi_inf_grid();
        let nu = classical.nu_grid();
        let conv_at_b = |g: &[f64]| -> f64 {
            if nb == 0 {
                return 0.0;
            }
            let mut s = 0.5 * (g[0] * tf2[nb] + g[nb] * tf2[0]);
            for i in 1..nb {
                s += g[i] * tf2[nb - i];
            }
            s * step
        };
        let chi = nu[nb] - kappa2 * conv_at_b(nu);
        if chi.abs() < 1e-12 {
            return Err(Error::Singular { chi });
        }
        let k = (kappa2 * (conv_at_b(phi_inf) + tfbar2(model.b)) - phi_inf[nb]) / chi;
        let phi1: Vec<f64> = phi_inf.iter().zip(nu).map(|(p, v)| p + k * v).collect();

        let h_fn: Vec<f64> = (0..=ny)
            .map(|l| {
                let mut s = 0.0;
                if nb > 0 {
                    s = 0.5 * (phi1[0] * tf2[l + nb] + phi1[nb] * tf2[l]);
                    for i in 1..nb {
                        s += phi1[i] * tf2[l + nb - i];
                    }
                    s *= step;
                }
                s + tfbar2(l as f64 * step + model.b)
            })
            .collect();
        let forcing: Vec<f64> = h_fn.iter().map(|v| kappa2 * v).collect();
        let phi2 = solve_renewal(&tf2, &forcing, kappa2, step);
        Ok(Self {
            model: model.clone(),
            params,
            roots,
            step,
            classical,
            chi,
            k,
            phi1,
            h: h_fn,
            phi2,
        })
    }

    pub fn model(&self) -> &RiskModel {
        &self.model
    }

    pub fn params(&self) -> TransformParams {
        self.params
    }

    pub fn roots(&self) -> &LundbergRoots {
        &self.roots
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn classical(&self) -> &ClassicalSolution {
        &self.classical
    }

    /// `nu(b) - (lambda r / c2) nu * T_rho2 f(b)`.
    pub fn chi(&self) -> f64 {
        self.chi
    }

    /// Coefficient of `nu` in `phi_1`.
    pub fn k(&self) -> f64 {
        self.k
    }

    /// Largest capital covered by the `phi_2` grid.
    pub fn upper_limit(&self) -> f64 {
        self.model.b + (self.phi2.len() - 1) as f64 * self.step
    }

    pub fn phi1_grid(&self) -> &[f64] {
        &self.phi1
    }

    /// `phi_2(b + l * step)`.
    pub fn phi2_grid(&self) -> &[f64] {
        &self.phi2
    }

    pub fn phi1(&self, u: f64) -> Result<f64> {
        if !(0.0..=self.model.b + 1e-12).contains(&u) {
            return Err(Error::Domain(format!("phi1 needs 0 <= u <= b = {}, got {u}", self.model.b)));
        }
        Ok(interp_cubic(&self.phi1, self.step, u))
    }

    pub fn phi2(&self, u: f64) -> Result<f64> {
        if u < self.model.b || u > self.upper_limit() + 1e-12 {
            return Err(Error::Domain(format!(
                "phi2 needs b <= u <= {}, got {u}",
                self.upper_limit()
            )));
        }
        Ok(interp_cubic(&self.phi2, self.step, u - self.model.b))
    }

    /// `phi_1` at or below the threshold, `phi_2` above it.
    pub fn phi(&self, u: f64) -> Result<f64> {
        if u <= self.model.b {
            self.phi1(u)
        } else {
            self.phi2(u)
        }
    }

    /// The forcing `h(y)` of the `phi_2` renewal equation, `y = u - b >= 0`.
    pub fn h_fn(&self, y: f64) -> Result<f64> {
        if y < 0.0 {
            return Err(Error::Domain(format!("h needs y >= 0, got {y}")));
        }
        Ok(interp_cubic(&self.h, self.step, y))
    }
}

/// Joint density of ruin time and claim count for the first claim, read off
/// the first-claim decomposition.
pub fn first_claim_density(model: &RiskModel, u: f64, t: f64) -> f64 {
    if t < 0.0 || u < 0.0 {
        return 0.0;
    }
    let lam = model.lambda;
    let level = if u >= model.b {
        u + model.c2 * t
    } else {
        let tb = (model.b - u) / model.c1;
        if t < tb {
            u + model.c1 * t
        } else {
            model.b + model.c2 * (t - tb)
        }
    };
    lam * (-lam * t).exp() * model.claims.fbar(level)
}

/// The two closed forms printed for `w_1(u, 1, t)`, kept for diagnostics.
pub fn printed_first_claim_variants(model: &RiskModel, u: f64, t: f64) -> (f64, f64) {
    let lam = model.lambda;
    let arg = model.c2 * t + model.b + model.c2 / model.c1 * (u - model.b);
    let fbar = model.claims.fbar(arg.max(0.0));
    let v1 = lam / model.c2 * (-lam * t).exp() * fbar;
    let v2 = lam / model.c2 * (-lam * (t + model.b / model.c1)).exp() * fbar;
    (v1, v2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::claims::ClaimDistribution;

    fn reference() -> RiskModel {
        RiskModel::new(1.0, 1.5, 1.2, 2.0, ClaimDistribution::Exponential { rate: 1.0 }).unwrap()
    }

    fn params() -> TransformParams {
        TransformParams::new(0.5, 0.9).unwrap()
    }

    #[test]
    fn boundary_continuity() {
        let s = RefractedSolution::new(&reference(), params()).unwrap();
        let gap = s.phi1(2.0).unwrap() - s.phi2(2.0).unwrap();
        assert!(gap.abs() < 1e-6, "{gap}");
        assert!(s.phi2(s.upper_limit()).unwrap() < s.phi2(2.5).unwrap());
    }

    #[test]
    fn no_refraction_reduces_to_classical() {
        let m = reference().unrefracted();
        let s = RefractedSolution::new(&m, params()).unwrap();
        for u in [0.0, 0.7, 1.3, 2.0] {
            let a = s.phi1(u).unwrap();
            let b = s.classical().phi_inf(u);
            assert!((a - b).abs() < 1e-6, "u={u}: {a} {b}");
        }
        assert!(s.k().abs() < 1e-6);
        let p = s.phi2(4.0).unwrap();
        let q = ClassicalSolution::new(&m, params(), 4.0, 1e-3).unwrap().phi_inf(4.0);
        assert!((p - q).abs() < 1e-5, "{p} {q}");
    }

    #[test]
    fn far_threshold_is_classical() {
        let m = RiskModel::new(1.0, 1.5, 1.2, 50.0, ClaimDistribution::Exponential { rate: 1.0 }).unwrap();
        let s = RefractedSolution::with_grid(&m, params(), 1.0, 5e-3).unwrap();
        let gap = s.phi1(1.0).unwrap() - s.classical().phi_inf(1.0);
        assert!(gap.abs() < 1e-4, "{gap}");
    }

    #[test]
    fn chi_limits() {
        let m = RiskModel::new(1.0, 1.5, 1.2, 0.0, ClaimDistribution::Exponential { rate: 1.0 }).unwrap();
        let s = RefractedSolution::new(&m, params()).unwrap();
        assert!((s.chi() - 1.0).abs() < 1e-12);
        let tiny = TransformParams::new(0.5, 1e-9).unwrap();
        let s = RefractedSolution::new(&reference(), tiny).unwrap();
        let rho1 = 1.5 / 1.5;
        assert!((s.chi() - (rho1 * 2.0f64).exp()).abs() < 1e-4 * s.chi());
    }

    #[test]
    fn boundary_identity() {
        let m = reference();
        let p = params();
        let s = RefractedSolution::new(&m, p).unwrap();
        let rho2 = s.roots().rho2;
        let step = s.step();
        let phi1 = s.phi1_grid();
        let nb = phi1.len() - 1;
        let mut conv = 0.5 * (phi1[0] * m.claims.tf(rho2, 2.0) + phi1[nb] * m.claims.tf(rho2, 0.0));
        for (i, v) in phi1.iter().enumerate().take(nb).skip(1) {
            conv += v * m.claims.tf(rho2, 2.0 - i as f64 * step);
        }
        conv *= step;
        let rhs = m.lambda * p.r * (conv + m.claims.tfbar(rho2, 2.0));
        assert!((m.c2 * s.phi2(2.0).unwrap() - rhs).abs() < 1e-4);
    }

    #[test]
    fn first_claim_geometry() {
        let m = reference();
        let v = first_claim_density(&m, 3.0, 1.0);
        assert!((v - (-5.2f64).exp()).abs() < 1e-15);
        // below the threshold the level is continuous at the crossing time
        let tb = 1.0 / 1.5;
        let a = first_claim_density(&m, 1.0, tb - 1e-12);
        let b = first_claim_density(&m, 1.0, tb + 1e-12);
        assert!((a - b).abs() < 1e-10);
    }
}
