//! Quadrature rules and small special functions shared by the solvers.

use std::sync::OnceLock;

const LN_FACT_TABLE: usize = 4096;

fn ln_fact_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = Vec::with_capacity(LN_FACT_TABLE);
        let mut acc = 0.0;
        t.push(0.0);
        for k in 1..LN_FACT_TABLE {
            acc += (k as f64).ln();
            t.push(acc);
        }
        t
    })
}

/// ln(n!)
pub fn ln_factorial(n: usize) -> f64 {
    if n < LN_FACT_TABLE {
        return ln_fact_table()[n];
    }
    // Stirling series, far past the table
    let x = n as f64 + 1.0;
    (x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln() + 1.0 / (12.0 * x)
        - 1.0 / (360.0 * x * x * x)
}

/// Binomial coefficient as a float.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)).exp().round()
}

/// `p * ln(x)` with the convention `0 * ln 0 = 0`.
#[inline]
pub(crate) fn xlny(p: f64, x: f64) -> f64 {
    if p == 0.0 {
        0.0
    } else {
        p * x.ln()
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Fixed-order Gauss-Legendre rule mapped to [a, b].
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        let (nodes, weights) = gauss_legendre(n);
        Self { nodes, weights }
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, b: f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let fc = f(mid);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let s = f(mid - dx) + f(mid + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Adaptive Gauss-Kronrod (7/15) integration of `f` over [a, b].
///
/// Bisects until the local error estimate is below `tol` scaled by the
/// interval share, or the depth limit is hit.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (whole, err) = gk15(&mut f, a, b);
    refine(&mut f, a, b, whole, err, tol, 0)
}

fn refine<F: FnMut(f64) -> f64>(
    f: &mut F,
    a: f64,
    b: f64,
    whole: f64,
    err: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    if err <= tol || depth >= 40 {
        return whole;
    }
    let m = 0.5 * (a + b);
    let (l, el) = gk15(f, a, m);
    let (r, er) = gk15(f, m, b);
    if (el + er - err).abs() < 1e-300 && el + er <= tol {
        return l + r;
    }
    refine(f, a, m, l, el, 0.5 * tol, depth + 1) + refine(f, m, b, r, er, 0.5 * tol, depth + 1)
}

/// Integral of `f` over [a, inf) via the map x = a + s/(1-s).
pub fn integrate_to_inf<F: FnMut(f64) -> f64>(mut f: F, a: f64, tol: f64) -> f64 {
    integrate(
        |s| {
            let one = 1.0 - s;
            f(a + s / one) / (one * one)
        },
        0.0,
        1.0,
        tol,
    )
}

/// Four-point Lagrange interpolation on the uniform grid `x_i = i * step`.
/// Clamps to the grid ends.
pub fn interp_cubic(samples: &[f64], step: f64, x: f64) -> f64 {
    let n = samples.len();
    if n == 0 {
        return 0.0;
    }
    if n < 4 {
        return interp_linear(samples, step, x);
    }
    let pos = (x / step).clamp(0.0, (n - 1) as f64);
    let i = pos.floor() as usize;
    if (pos - i as f64).abs() < 1e-12 {
        return samples[i];
    }
    let base = i.saturating_sub(1).min(n - 4);
    let s = pos - base as f64;
    let y = &samples[base..base + 4];
    let l0 = -(s - 1.0) * (s - 2.0) * (s - 3.0) / 6.0;
    let l1 = s * (s - 2.0) * (s - 3.0) / 2.0;
    let l2 = -s * (s - 1.0) * (s - 3.0) / 2.0;
    let l3 = s * (s - 1.0) * (s - 2.0) / 6.0;
    l0 * y[0] + l1 * y[1] + l2 * y[2] + l3 * y[3]
}

/// Linear interpolation on the uniform grid `x_i = i * step`; zero outside.
pub fn interp_linear(samples: &[f64], step: f64, x: f64) -> f64 {
    let n = samples.len();
    if n == 0 || x < 0.0 {
        return 0.0;
    }
    let pos = x / step;
    let i = pos.floor() as usize;
    if i + 1 >= n {
        return if i + 1 == n && (pos - i as f64) < 1e-9 {
            samples[n - 1]
        } else {
            0.0
        };
    }
    let frac = pos - i as f64;
    samples[i] * (1.0 - frac) + samples[i + 1] * frac
}

/// Trapezoid rule over uniformly spaced samples.
pub fn trapezoid(samples: &[f64], step: f64) -> f64 {
    match samples.len() {
        0 | 1 => 0.0,
        n => step * (samples.iter().sum::<f64>() - 0.5 * (samples[0] + samples[n - 1])),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factorials() {
        assert_eq!(ln_factorial(0), 0.0);
        assert!((ln_factorial(5) - 120f64.ln()).abs() < 1e-13);
        let big = ln_factorial(5000);
        let direct: f64 = (1..=5000).map(|k| (k as f64).ln()).sum();
        assert!((big - direct).abs() / direct < 1e-12);
        assert_eq!(binomial(6, 2), 15.0);
    }

    #[test]
    fn legendre_exact_for_polynomials() {
        let gl = GaussLegendre::new(8);
        let v = gl.integrate(|x| x.powi(15) + 3.0 * x * x, 0.0, 2.0);
        assert!((v - (2f64.powi(16) / 16.0 + 8.0)).abs() < 1e-9);
    }

    #[test]
    fn kronrod_semi_infinite() {
        let v = integrate_to_inf(|x| (-x).exp(), 0.0, 1e-13);
        assert!((v - 1.0).abs() < 1e-12);
        let g = integrate(|x| x.sqrt(), 0.0, 1.0, 1e-12);
        assert!((g - 2.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn cubic_interpolation_is_exact_on_cubics() {
        let step = 0.1;
        let s: Vec<f64> = (0..20).map(|i| (i as f64 * step).powi(3)).collect();
        let x = 0.737;
        assert!((interp_cubic(&s, step, x) - x.powi(3)).abs() < 1e-12);
    }
}
