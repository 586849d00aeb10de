//! The unrefracted model with premium rate `c1`: Gerber-Shiu type
//! transforms, the first passage kernels and the joint density of ruin
//! time and claim count.

mod cache;

pub use cache::{KernelCache, Lattice};

use crate::claims::{ClaimDistribution, ConvolutionPowers};
use crate::error::{Error, Result};
use crate::hybridfn::{Domain, HybridFunction};
use crate::lundberg::solve_root;
use crate::model::{RiskModel, TransformParams};
use crate::quad::{binomial, integrate, interp_cubic, ln_factorial, xlny};

/// Default amount step for the renewal solvers.
pub const DEFAULT_AMOUNT_STEP: f64 = 1e-3;

/// Solves `g(x) = kappa * int_0^x g(x - y) k(y) dy + forcing(x)` on the grid
/// `x_i = i * h` by trapezoid forward substitution.
pub fn solve_renewal(kernel: &[f64], forcing: &[f64], kappa: f64, h: f64) -> Vec<f64> {
    let n = forcing.len();
    assert!(kernel.len() >= n, "kernel shorter than forcing");
    let mut g = vec![0.0; n];
    if n == 0 {
        return g;
    }
    g[0] = forcing[0];
    let diag = 1.0 - 0.5 * kappa * h * kernel[0];
    for i in 1..n {
        let mut acc = 0.5 * kernel[i] * g[0];
        for j in 1..i {
            acc += kernel[j] * g[i - j];
        }
        g[i] = (kappa * h * acc + forcing[i]) / diag;
    }
    g
}

/// `kappa * int_0^inf T_rho f(x) dx`, the contraction factor of the renewal
/// equations.
pub fn contraction_factor(lambda: f64, r: f64, c: f64, rho: f64, d: &ClaimDistribution) -> f64 {
    let mass = if rho > 0.0 { (1.0 - d.lt(rho)) / rho } else { d.mean() };
    lambda * r / c * mass
}

/// Amount step that puts `x` on the grid, no coarser than `h`.
pub(crate) fn fit_step(x: f64, h: f64) -> (f64, usize) {
    if x <= 0.0 {
        return (h, 0);
    }
    let n = (x / h - 1e-9).ceil().max(1.0) as usize;
    (x / n as f64, n)
}

/// `phi_inf` and `nu` on `[0, x_max]`.
#[derive(Clone, Debug)]
pub struct ClassicalSolution {
    step: f64,
    rho1: f64,
    phi_inf: Vec<f64>,
    nu: Vec<f64>,
}

impl ClassicalSolution {
    /// Solves both renewal equations for drift `c1` with amount step close to
    /// `h` (adjusted so that `x_max` is a node).
    pub fn new(model: &RiskModel, params: TransformParams, x_max: f64, h: f64) -> Result<Self> {
        let (step, n) = fit_step(x_max, h);
        let rho1 = solve_root(model.lambda, model.c1, params, &model.claims)?;
        let kappa = model.lambda * params.r / model.c1;
        let factor = contraction_factor(model.lambda, params.r, model.c1, rho1, &model.claims);
        if factor >= 1.0 {
            return Err(Error::NotContractive { factor });
        }
        let d = &model.claims;
        let kernel: Vec<f64> = (0..=n).map(|i| d.tf(rho1, i as f64 * step)).collect();
        let forcing: Vec<f64> = (0..=n).map(|i| kappa * d.tfbar(rho1, i as f64 * step)).collect();
        let phi_inf = solve_renewal(&kernel, &forcing, kappa, step);
        let p: Vec<f64> = (0..=n).map(|i| (rho1 * i as f64 * step).exp()).collect();
        let nu = solve_renewal(&kernel, &p, kappa, step);
        Ok(Self { step, rho1, phi_inf, nu })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn rho1(&self) -> f64 {
        self.rho1
    }

    pub fn phi_inf_grid(&self) -> &[f64] {
        &self.phi_inf
    }

    pub fn nu_grid(&self) -> &[f64] {
        &self.nu
    }

    pub fn phi_inf(&self, u: f64) -> f64 {
        interp_cubic(&self.phi_inf, self.step, u)
    }

    pub fn nu(&self, u: f64) -> f64 {
        interp_cubic(&self.nu, self.step, u)
    }
}

/// Transform `E[r^N e^{-delta tau}; tau < inf]` of the unrefracted model.
pub fn phi_inf(model: &RiskModel, u: f64, params: TransformParams) -> Result<f64> {
    if u < 0.0 {
        return Err(Error::Domain(format!("initial capital must be >= 0, got {u}")));
    }
    Ok(ClassicalSolution::new(model, params, u, DEFAULT_AMOUNT_STEP)?.phi_inf(u))
}

/// The auxiliary function `nu` with `nu(0) = 1`.
pub fn nu(model: &RiskModel, u: f64, params: TransformParams) -> Result<f64> {
    if u < 0.0 {
        return Err(Error::Domain(format!("initial capital must be >= 0, got {u}")));
    }
    Ok(ClassicalSolution::new(model, params, u, DEFAULT_AMOUNT_STEP)?.nu(u))
}

/// Upward first passage kernel for drift index `i` (1 or 2): the atom
/// `e^{-lambda x / c}` at `x / c` for `n = 0`, otherwise the density
/// `x t^{n-1} e^{-lambda t} lambda^n f^{n*}(c t - x) / n!` sampled from
/// `x / c` to `t_max` with step `dt`.
pub fn g_kernel(model: &RiskModel, i: u8, x: f64, n: usize, dt: f64, t_max: f64) -> Result<HybridFunction> {
    let c = match i {
        1 => model.c1,
        2 => model.c2,
        _ => return Err(Error::Usage(format!("drift index must be 1 or 2, got {i}"))),
    };
    let start = x / c;
    if n == 0 {
        return Ok(HybridFunction::atom(Domain::Time, start, (-model.lambda * x / c).exp()));
    }
    let powers = ConvolutionPowers::new(&model.claims, n, c * t_max - x, 1e-3);
    let len = ((t_max - start) / dt).floor().max(0.0) as usize + 1;
    let lam = model.lambda;
    let samples = (0..len)
        .map(|k| {
            let t = start + k as f64 * dt;
            let w = c * t - x;
            let fn_ = powers.pdf(n, w.max(0.0));
            if fn_ == 0.0 || t == 0.0 {
                return 0.0;
            }
            let mag = (n as f64 * lam.ln() + (n - 1) as f64 * t.abs().ln() - lam * t - ln_factorial(n)).exp();
            let sign = if t < 0.0 && (n - 1) % 2 == 1 { -1.0 } else { 1.0 };
            x * sign * mag * fn_
        })
        .collect();
    Ok(HybridFunction::from_grid(Domain::Time, start, dt, samples))
}

/// `b_n(u, y)`: the kernel with `(T_rho f)^{n*}(u) = int_0^inf e^{-rho y} b_n(u, y) dy`.
pub fn b_kernel(d: &ClaimDistribution, n: usize, u: f64, y: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::Usage("b_n is defined for n >= 1".into()));
    }
    if u < 0.0 || y < 0.0 {
        return Err(Error::Domain(format!("b_n needs u, y >= 0, got ({u}, {y})")));
    }
    let powers = ConvolutionPowers::new(d, n, u + y + 1.0, 1e-3);
    let g = |k: usize, x: f64| if k == 0 { 0.0 } else { powers.pdf(k, x) };
    let gamma_n = ln_factorial(n - 1).exp();
    // j = 0: the atom of f^{0*} at x = 0 counts in full
    let mut total = (xlny((n - 1) as f64, u)).exp() * g(n, y + u) / gamma_n;
    for j in 1..n {
        let sign = if j % 2 == 1 { -1.0 } else { 1.0 };
        let coef = sign * binomial(n, j) / gamma_n;
        let part = integrate(
            |x| (u - x).powi(n as i32 - 1) * g(n - j, y + u - x) * g(j, x),
            0.0,
            u,
            1e-14,
        );
        total += coef * part;
    }
    Ok(total)
}

/// Density `varpi(u, k, t)` of the auxiliary function `nu` for `k >= 1`,
/// supported on `[-u / c1, 0]`.
pub(crate) fn varpi_value(model: &RiskModel, powers: &ConvolutionPowers, u: f64, k: usize, t: f64) -> f64 {
    if t > 0.0 || t < -u / model.c1 - 1e-12 {
        return 0.0;
    }
    let arg = (u + model.c1 * t).max(0.0);
    let fk = powers.pdf(k, arg);
    if fk == 0.0 || t == 0.0 {
        return 0.0;
    }
    let lam = model.lambda;
    let mag = (k as f64 * (lam * t.abs()).ln() - lam * t - ln_factorial(k)).exp();
    let sign = if k % 2 == 1 { -1.0 } else { 1.0 };
    model.c1 * sign * mag * fk
}

/// `varpi(u, n, .)` for `n = 0..=n_max`: the atom `e^{lambda u / c1}` at
/// `-u / c1`, then densities on `[-u / c1, 0]` sampled with step close to
/// `dt`, chosen so that both ends are nodes.
pub fn nu_density(model: &RiskModel, u: f64, n_max: usize, dt: f64) -> Result<Vec<HybridFunction>> {
    if u < 0.0 {
        return Err(Error::Domain(format!("initial capital must be >= 0, got {u}")));
    }
    let start = -u / model.c1;
    let mut out = vec![HybridFunction::atom(Domain::Time, start, (model.lambda * u / model.c1).exp())];
    if n_max == 0 {
        return Ok(out);
    }
    let powers = ConvolutionPowers::new(&model.claims, n_max, u + 1.0, 1e-3);
    let (step, cells) = fit_step(-start, dt);
    for k in 1..=n_max {
        let samples = (0..=cells)
            .map(|i| varpi_value(model, &powers, u, k, start + i as f64 * step))
            .collect();
        out.push(HybridFunction::from_grid(Domain::Time, start, step, samples));
    }
    Ok(out)
}

/// Joint density `w_inf(u, n, .)` on `[0, t_max]` for `n = 1..=n_max`.
pub fn w_inf(model: &RiskModel, u: f64, n_max: usize, t_max: f64, time_points: usize) -> Result<Vec<HybridFunction>> {
    if u < 0.0 {
        return Err(Error::Domain(format!("initial capital must be >= 0, got {u}")));
    }
    let cache = KernelCache::new(model.unrefracted(), Lattice::for_single(model.c1, t_max, time_points), n_max)?;
    let rows = cache.w_inf_at(u);
    Ok(rows
        .into_iter()
        .map(|s| HybridFunction::from_grid(Domain::Time, 0.0, cache.lattice().dt, s))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> RiskModel {
        RiskModel::new(1.0, 1.5, 1.2, 2.0, ClaimDistribution::Exponential { rate: 1.0 }).unwrap()
    }

    #[test]
    fn ruin_probability_closed_form() {
        let p = TransformParams::new(0.0, 1.0).unwrap();
        let sol = ClassicalSolution::new(&model(), p, 5.0, 1e-3).unwrap();
        assert!((sol.phi_inf(0.0) - 2.0 / 3.0).abs() < 1e-9);
        for u in [0.5, 1.0, 2.7, 5.0] {
            let exact = 2.0 / 3.0 * (-u / 3.0f64).exp();
            assert!((sol.phi_inf(u) - exact).abs() < 1e-6, "u={u}");
        }
        assert!(phi_inf(&model(), 200.0, p).unwrap() < 1e-20);
    }

    #[test]
    fn initial_values() {
        let p = TransformParams::new(0.5, 0.9).unwrap();
        let m = model();
        let sol = ClassicalSolution::new(&m, p, 2.0, 1e-3).unwrap();
        assert_eq!(sol.nu(0.0), 1.0);
        let rho = sol.rho1();
        assert!((1.5 * sol.phi_inf(0.0) - 0.9 * m.claims.tfbar(rho, 0.0)).abs() < 1e-12);
    }

    #[test]
    fn nu_satisfies_its_equation() {
        // c1 nu' - (lambda + delta) nu + lambda r int nu(u-x) f(x) dx = 0
        let p = TransformParams::new(0.5, 0.9).unwrap();
        let sol = ClassicalSolution::new(&model(), p, 3.0, 1e-3).unwrap();
        let nu = sol.nu_grid();
        let h = sol.step();
        for i in [200usize, 1000, 2500] {
            let d = (nu[i + 1] - nu[i - 1]) / (2.0 * h);
            let conv: Vec<f64> = (0..=i).map(|j| nu[i - j] * (-(j as f64) * h).exp()).collect();
            let c = crate::quad::trapezoid(&conv, h);
            let res = 1.5 * d - 1.5 * nu[i] + 0.9 * c;
            assert!(res.abs() < 1e-5, "i={i} res={res}");
        }
    }

    #[test]
    fn kernel_examples() {
        let m = model();
        let g0 = g_kernel(&m, 1, 1.0, 0, 0.01, 10.0).unwrap();
        let a = g0.atoms()[0];
        assert!((a.location - 2.0 / 3.0).abs() < 1e-15);
        assert!((a.mass - (-2.0f64 / 3.0).exp()).abs() < 1e-15);
        let g1 = g_kernel(&m, 1, 1.0, 1, 1.0 / 300.0, 10.0).unwrap();
        assert!((g1.evaluate(1.0) - (-1.5f64).exp()).abs() < 1e-12);
        assert_eq!(g1.evaluate(0.5), 0.0);
    }

    #[test]
    fn b_kernel_low_orders() {
        let d = ClaimDistribution::Exponential { rate: 1.0 };
        assert!((b_kernel(&d, 1, 0.7, 0.4).unwrap() - d.f(1.1)).abs() < 1e-15);
        let (u, y) = (1.3, 0.6);
        assert!((b_kernel(&d, 2, u, y).unwrap() - u * y * (-(u + y) as f64).exp()).abs() < 1e-12);
        let b3 = b_kernel(&d, 3, u, y).unwrap();
        assert!((b3 - u * u * y * y * (-(u + y) as f64).exp() / 4.0).abs() < 1e-12);
    }

    #[test]
    fn nu_density_transform_matches_nu() {
        let m = model();
        let p = TransformParams::new(0.5, 0.9).unwrap();
        let parts = nu_density(&m, 1.0, 30, 1e-4).unwrap();
        let series: f64 = parts.iter().enumerate().map(|(n, f)| p.r.powi(n as i32) * f.laplace_at(p.delta)).sum();
        let direct = nu(&m, 1.0, p).unwrap();
        assert!((series - direct).abs() < 1e-4, "{series} vs {direct}");
    }

    #[test]
    fn lagrange_identity_small() {
        let m = model();
        let p = TransformParams::new(0.5, 0.9).unwrap();
        let rho = solve_root(1.0, 1.5, p, &m.claims).unwrap();
        let x = 1.0;
        let mut acc = 0.0;
        for n in 0..=50 {
            let g = g_kernel(&m, 1, x, n, 2e-3, 80.0).unwrap();
            acc += p.r.powi(n as i32) * g.laplace_at(p.delta);
        }
        assert!((acc - (-rho * x).exp()).abs() < 1e-6, "{acc} vs {}", (-rho * x).exp());
    }
}
