//! Claim size distributions: densities, transforms, the Dickson-Hipp
//! operator and n-fold convolutions.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{Error, Result};
use crate::fftconv::trapezoid_conv;
use crate::hybridfn::{Domain, HybridFunction};
use crate::quad::{ln_factorial, xlny, GaussLegendre};

const POLE_MARGIN: f64 = 1e-9;

/// Claim size law.
#[derive(Clone, Debug, PartialEq)]
pub enum ClaimDistribution {
    Exponential { rate: f64 },
    Erlang { shape: u32, rate: f64 },
    MixtureOfExponentials { weights: Vec<f64>, rates: Vec<f64> },
    Tabulated(TabulatedDensity),
}

/// Density given by samples on `x_i = i * step`, linearly interpolated and
/// zero past the last sample.
#[derive(Clone, Debug, PartialEq)]
pub struct TabulatedDensity {
    step: f64,
    pdf: Vec<f64>,
    tail: Vec<f64>,
}

impl TabulatedDensity {
    /// Builds a density from uniform samples, renormalized to unit mass.
    pub fn new(step: f64, samples: Vec<f64>) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::Domain(format!("tabulated step must be positive, got {step}")));
        }
        if samples.len() < 2 {
            return Err(Error::Domain("tabulated density needs at least two samples".into()));
        }
        if samples.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Domain("tabulated density samples must be finite and >= 0".into()));
        }
        let mass = crate::quad::trapezoid(&samples, step);
        if mass <= 0.0 {
            return Err(Error::Domain("tabulated density has zero mass".into()));
        }
        let pdf: Vec<f64> = samples.iter().map(|v| v / mass).collect();
        let n = pdf.len();
        let mut tail = vec![0.0; n];
        for i in (0..n - 1).rev() {
            tail[i] = tail[i + 1] + 0.5 * step * (pdf[i] + pdf[i + 1]);
        }
        Ok(Self { step, pdf, tail })
    }

    /// Builds from strictly increasing abscissae, resampling onto a uniform
    /// grid whose step is the smallest gap. The density is zero below the
    /// first abscissa.
    pub fn from_points(xs: &[f64], fs: &[f64]) -> Result<Self> {
        if xs.len() != fs.len() || xs.len() < 2 {
            return Err(Error::Domain("tabulated density needs matching x and f columns".into()));
        }
        if xs[0] < 0.0 {
            return Err(Error::Domain("tabulated abscissae must be nonnegative".into()));
        }
        let mut step = f64::INFINITY;
        for w in xs.windows(2) {
            let gap = w[1] - w[0];
            if gap <= 0.0 {
                return Err(Error::Domain("tabulated abscissae must be strictly increasing".into()));
            }
            step = step.min(gap);
        }
        let last = xs[xs.len() - 1];
        let n = (last / step).round() as usize + 1;
        let mut samples = Vec::with_capacity(n);
        let mut k = 0;
        for i in 0..n {
            let x = (i as f64 * step).min(last);
            if x < xs[0] - 1e-12 * step {
                samples.push(0.0);
                continue;
            }
            while k + 2 < xs.len() && xs[k + 1] < x {
                k += 1;
            }
            let (x0, x1) = (xs[k], xs[k + 1]);
            let frac = ((x - x0) / (x1 - x0)).clamp(0.0, 1.0);
            samples.push(fs[k] * (1.0 - frac) + fs[k + 1] * frac);
        }
        Self::new(step, samples)
    }

    /// Reads a headerless or headed two column CSV `x, f(x)`.
    pub fn from_csv<P: AsRef<Path>>(path: P) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_path(path)?;
        let mut xs = Vec::new();
        let mut fs = Vec::new();
        for (line, rec) in reader.records().enumerate() {
            let rec = rec?;
            if rec.len() < 2 {
                return Err(Error::Domain(format!("line {}: expected two columns", line + 1)));
            }
            let (x, f) = match (rec[0].parse::<f64>(), rec[1].parse::<f64>()) {
                (Ok(x), Ok(f)) => (x, f),
                _ if line == 0 => continue,
                _ => return Err(Error::Domain(format!("line {}: unparsable number", line + 1))),
            };
            xs.push(x);
            fs.push(f);
        }
        Self::from_points(&xs, &fs)
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn samples(&self) -> &[f64] {
        &self.pdf
    }

    fn support_end(&self) -> f64 {
        self.step * (self.pdf.len() - 1) as f64
    }

    fn pdf_at(&self, x: f64) -> f64 {
        crate::quad::interp_linear(&self.pdf, self.step, x)
    }

    fn survival_at(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        let pos = x / self.step;
        let i = pos.floor() as usize;
        if i + 1 >= self.pdf.len() {
            return 0.0;
        }
        let tau = x - i as f64 * self.step;
        let (a, b) = (self.pdf[i], self.pdf[i + 1]);
        (self.tail[i] - (a * tau + (b - a) * tau * tau / (2.0 * self.step))).max(0.0)
    }

    /// `int_x^inf e^{-s(y-x)} g(y) dy` segment by segment with a 5 point rule.
    fn exp_integral<G: Fn(f64) -> f64>(&self, s: f64, x: f64, g: G) -> f64 {
        let end = self.support_end();
        if x >= end {
            return 0.0;
        }
        let gl = GaussLegendre::new(5);
        let first = ((x / self.step).floor() as usize + 1).min(self.pdf.len() - 1);
        let mut lo = x;
        let mut total = 0.0;
        for i in first..self.pdf.len() {
            let hi = i as f64 * self.step;
            if hi > lo {
                total += gl.integrate(|y| (-s * (y - x)).exp() * g(y), lo, hi);
            }
            lo = hi;
        }
        total
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let target = rng.random::<f64>();
        // survival decreases from 1; find segment with tail bracketing 1 - target
        let q = 1.0 - target;
        let n = self.pdf.len();
        let (mut lo, mut hi) = (0usize, n - 1);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.tail[mid] >= q {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let need = self.tail[lo] - q;
        let (a, b) = (self.pdf[lo], self.pdf[lo + 1]);
        let h = self.step;
        // solve a t + (b-a) t^2 / (2h) = need on [0, h]
        let qa = (b - a) / (2.0 * h);
        let tau = if qa.abs() < 1e-14 {
            if a > 0.0 {
                need / a
            } else {
                0.0
            }
        } else {
            let disc = (a * a + 4.0 * qa * need).max(0.0);
            2.0 * need / (a + disc.sqrt())
        };
        lo as f64 * h + tau.clamp(0.0, h)
    }
}

impl ClaimDistribution {
    /// Checks the parameters.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidModel(m));
        match self {
            Self::Exponential { rate } if !(*rate > 0.0 && rate.is_finite()) => {
                bad(format!("exponential rate must be positive, got {rate}"))
            }
            Self::Erlang { shape, rate } if *shape == 0 || !(*rate > 0.0 && rate.is_finite()) => {
                bad(format!("erlang needs shape >= 1 and rate > 0, got ({shape}, {rate})"))
            }
            Self::MixtureOfExponentials { weights, rates } => {
                if weights.is_empty() || weights.len() != rates.len() {
                    return bad("mixture needs matching nonempty weights and rates".into());
                }
                if weights.iter().any(|p| !(*p > 0.0)) || rates.iter().any(|m| !(*m > 0.0 && m.is_finite())) {
                    return bad("mixture weights and rates must be positive".into());
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return bad(format!("mixture weights sum to {total}, expected 1"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// `(shape, rate)` when the law is a gamma with integer shape.
    pub(crate) fn gamma_form(&self) -> Option<(u32, f64)> {
        match self {
            Self::Exponential { rate } => Some((1, *rate)),
            Self::Erlang { shape, rate } => Some((*shape, *rate)),
            _ => None,
        }
    }

    /// Leftmost singularity of the transform (as a negative number).
    fn pole(&self) -> f64 {
        match self {
            Self::Exponential { rate } | Self::Erlang { rate, .. } => -rate,
            Self::MixtureOfExponentials { rates, .. } => -rates.iter().cloned().fold(f64::INFINITY, f64::min),
            Self::Tabulated(_) => f64::NEG_INFINITY,
        }
    }

    fn check_transform_arg(&self, s: f64) -> Result<()> {
        if !s.is_finite() || s <= self.pole() + POLE_MARGIN {
            return Err(Error::Domain(format!("transform argument {s} at or beyond pole {}", self.pole())));
        }
        Ok(())
    }

    fn check_x(x: f64) -> Result<()> {
        if x < 0.0 || x.is_nan() {
            return Err(Error::Domain(format!("claim amount must be >= 0, got {x}")));
        }
        Ok(())
    }

    /// Density `f(x)`.
    pub fn pdf(&self, x: f64) -> Result<f64> {
        Self::check_x(x)?;
        Ok(self.f(x))
    }

    /// Distribution function `F(x)`.
    pub fn cdf(&self, x: f64) -> Result<f64> {
        Self::check_x(x)?;
        Ok(1.0 - self.fbar(x))
    }

    /// Survival function `1 - F(x)`.
    pub fn survival(&self, x: f64) -> Result<f64> {
        Self::check_x(x)?;
        Ok(self.fbar(x))
    }

    pub(crate) fn f(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        match self {
            Self::Exponential { rate } => rate * (-rate * x).exp(),
            Self::Erlang { shape, rate } => gamma_pdf(*shape as usize, *rate, x),
            Self::MixtureOfExponentials { weights, rates } => weights
                .iter()
                .zip(rates)
                .map(|(p, m)| p * m * (-m * x).exp())
                .sum(),
            Self::Tabulated(t) => t.pdf_at(x),
        }
    }

    pub(crate) fn fbar(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        match self {
            Self::Exponential { rate } => (-rate * x).exp(),
            Self::Erlang { shape, rate } => poisson_range(rate * x, 0, *shape as usize),
            Self::MixtureOfExponentials { weights, rates } => {
                weights.iter().zip(rates).map(|(p, m)| p * (-m * x).exp()).sum()
            }
            Self::Tabulated(t) => t.survival_at(x),
        }
    }

    /// Mean claim size.
    pub fn mean(&self) -> f64 {
        match self {
            Self::Exponential { rate } => 1.0 / rate,
            Self::Erlang { shape, rate } => *shape as f64 / rate,
            Self::MixtureOfExponentials { weights, rates } => {
                weights.iter().zip(rates).map(|(p, m)| p / m).sum()
            }
            Self::Tabulated(t) => t.exp_integral(0.0, 0.0, |y| y * t.pdf_at(y)),
        }
    }

    /// Laplace transform `E[e^{-sX}]`.
    pub fn laplace(&self, s: f64) -> Result<f64> {
        self.check_transform_arg(s)?;
        Ok(self.lt(s))
    }

    pub(crate) fn lt(&self, s: f64) -> f64 {
        match self {
            Self::Exponential { rate } => rate / (rate + s),
            Self::Erlang { shape, rate } => (rate / (rate + s)).powi(*shape as i32),
            Self::MixtureOfExponentials { weights, rates } => {
                weights.iter().zip(rates).map(|(p, m)| p * m / (m + s)).sum()
            }
            Self::Tabulated(t) => t.exp_integral(s, 0.0, |y| t.pdf_at(y)),
        }
    }

    /// Derivative of the transform, `-E[X e^{-sX}]`.
    pub(crate) fn lt_derivative(&self, s: f64) -> f64 {
        match self {
            Self::Exponential { rate } => -rate / ((rate + s) * (rate + s)),
            Self::Erlang { shape, rate } => {
                let k = *shape as i32;
                -(k as f64) * rate.powi(k) / (rate + s).powi(k + 1)
            }
            Self::MixtureOfExponentials { weights, rates } => weights
                .iter()
                .zip(rates)
                .map(|(p, m)| -p * m / ((m + s) * (m + s)))
                .sum(),
            Self::Tabulated(t) => -t.exp_integral(s, 0.0, |y| y * t.pdf_at(y)),
        }
    }

    /// Dickson-Hipp transform of the density, `T_s f(x)`.
    pub fn dickson_hipp_pdf(&self, s: f64, x: f64) -> Result<f64> {
        self.check_transform_arg(s)?;
        Self::check_x(x)?;
        Ok(self.tf(s, x))
    }

    /// Dickson-Hipp transform of the survival function, `T_s F̄(x)`.
    pub fn dickson_hipp_survival(&self, s: f64, x: f64) -> Result<f64> {
        self.check_transform_arg(s)?;
        Self::check_x(x)?;
        Ok(self.tfbar(s, x))
    }

    pub(crate) fn tf(&self, s: f64, x: f64) -> f64 {
        match self {
            Self::Exponential { rate } => rate * (-rate * x).exp() / (s + rate),
            Self::Erlang { shape, rate } => {
                let k = *shape as usize;
                let sb = s + rate;
                let mut acc = 0.0;
                for i in 0..k {
                    acc += (ln_binomial(k - 1, i) + xlny((k - 1 - i) as f64, x) + ln_factorial(i)
                        - (i + 1) as f64 * sb.ln())
                    .exp();
                }
                acc * (k as f64 * rate.ln() - rate * x - ln_factorial(k - 1)).exp()
            }
            Self::MixtureOfExponentials { weights, rates } => weights
                .iter()
                .zip(rates)
                .map(|(p, m)| p * m * (-m * x).exp() / (s + m))
                .sum(),
            Self::Tabulated(t) => t.exp_integral(s, x, |y| t.pdf_at(y)),
        }
    }

    pub(crate) fn tfbar(&self, s: f64, x: f64) -> f64 {
        match self {
            Self::Exponential { rate } => (-rate * x).exp() / (s + rate),
            Self::Erlang { shape, rate } => {
                let k = *shape as usize;
                let sb = s + rate;
                let mut acc = 0.0;
                for j in 0..k {
                    for i in 0..=j {
                        acc += (j as f64 * rate.ln() - ln_factorial(j) + ln_binomial(j, i)
                            + xlny((j - i) as f64, x)
                            + ln_factorial(i)
                            - (i + 1) as f64 * sb.ln())
                        .exp();
                    }
                }
                acc * (-rate * x).exp()
            }
            Self::MixtureOfExponentials { weights, rates } => weights
                .iter()
                .zip(rates)
                .map(|(p, m)| p * (-m * x).exp() / (s + m))
                .sum(),
            Self::Tabulated(t) => t.exp_integral(s, x, |y| t.survival_at(y)),
        }
    }

    /// n-fold convolution `f^{n*}` sampled on `[0, x_max]` with step `step`;
    /// `n = 0` gives the unit atom at the origin.
    pub fn convolve_n(&self, n: usize, step: f64, x_max: f64) -> HybridFunction {
        if n == 0 {
            return HybridFunction::atom(Domain::Amount, 0.0, 1.0);
        }
        let powers = ConvolutionPowers::new(self, n, x_max, step);
        let len = (x_max / step).round() as usize + 1;
        let samples = (0..len).map(|i| powers.pdf(n, i as f64 * step)).collect();
        HybridFunction::from_grid(Domain::Amount, 0.0, step, samples)
    }

    /// Quantile `q` of the claim law by bisection on the survival function.
    pub fn quantile(&self, q: f64) -> f64 {
        let target = 1.0 - q;
        let mut hi = self.mean().max(1e-6);
        while self.fbar(hi) > target {
            hi *= 2.0;
            if hi > 1e12 {
                break;
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.fbar(mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }

    /// Draws one claim.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Exponential { rate } => Exp::new(*rate).expect("validated rate").sample(rng),
            Self::Erlang { shape, rate } => {
                let e = Exp::new(*rate).expect("validated rate");
                (0..*shape).map(|_| e.sample(rng)).sum()
            }
            Self::MixtureOfExponentials { weights, rates } => {
                let u = rng.random::<f64>();
                let mut acc = 0.0;
                let mut pick = rates.len() - 1;
                for (i, p) in weights.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        pick = i;
                        break;
                    }
                }
                Exp::new(rates[pick]).expect("validated rate").sample(rng)
            }
            Self::Tabulated(t) => t.sample(rng),
        }
    }
}

fn ln_binomial(n: usize, k: usize) -> f64 {
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// Gamma(shape, rate) density with integer shape.
pub(crate) fn gamma_pdf(shape: usize, rate: f64, x: f64) -> f64 {
    if x < 0.0 {
        return 0.0;
    }
    if x == 0.0 {
        return if shape == 1 { rate } else { 0.0 };
    }
    (rate.ln() + (shape - 1) as f64 * (rate * x).ln() - rate * x - ln_factorial(shape - 1)).exp()
}

/// `sum_{i=lo}^{hi-1} e^{-z} z^i / i!`
pub(crate) fn poisson_range(z: f64, lo: usize, hi: usize) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    if z <= 0.0 {
        return if lo == 0 { 1.0 } else { 0.0 };
    }
    let lz = z.ln();
    (lo..hi).map(|i| (i as f64 * lz - z - ln_factorial(i)).exp()).sum()
}

/// Regularized lower incomplete gamma with integer shape: `P(X <= x)` for
/// Gamma(shape, rate).
pub(crate) fn gamma_cdf(shape: usize, rate: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return if shape == 0 { 1.0 } else { 0.0 };
    }
    let z = rate * x;
    if z < shape as f64 {
        // upper Poisson tail summed directly
        let lz = z.ln();
        let mut acc = 0.0;
        let mut i = shape;
        loop {
            let term = (i as f64 * lz - z - ln_factorial(i)).exp();
            acc += term;
            if term < 1e-18 * acc || i > shape + 10_000 {
                break;
            }
            i += 1;
        }
        acc
    } else {
        1.0 - poisson_range(z, 0, shape)
    }
}

/// Which function sits under the claim-weighted kernel integral.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Weight {
    Density,
    Survival,
}

/// Cached convolution powers `f^{n*}`, `n <= n_max`.
#[derive(Clone, Debug)]
pub struct ConvolutionPowers {
    n_max: usize,
    dist: ClaimDistribution,
    repr: PowerRepr,
}

#[derive(Clone, Debug)]
enum PowerRepr {
    Gamma { shape: usize, rate: f64 },
    Grid { step: f64, pdf: Vec<Vec<f64>>, cdf: Vec<Vec<f64>> },
}

impl ConvolutionPowers {
    /// Powers up to `n_max`; the grid path samples `[0, x_max]` at `step`.
    pub fn new(dist: &ClaimDistribution, n_max: usize, x_max: f64, step: f64) -> Self {
        let repr = match dist.gamma_form() {
            Some((shape, rate)) => PowerRepr::Gamma { shape: shape as usize, rate },
            None => {
                let q_end = dist.quantile(1.0 - 1e-10);
                let len = (x_max.max(step) / step).ceil() as usize + 1;
                let base: Vec<f64> = (0..len)
                    .map(|i| {
                        let x = i as f64 * step;
                        if x > q_end {
                            0.0
                        } else {
                            dist.f(x)
                        }
                    })
                    .collect();
                let mut pdf = vec![vec![0.0; len]; n_max + 1];
                let mut cdf = vec![vec![1.0; len]; n_max + 1];
                if n_max >= 1 {
                    pdf[1] = base.clone();
                }
                for n in 2..=n_max {
                    let mut c = trapezoid_conv(&pdf[n - 1], &base, step);
                    c.truncate(len);
                    pdf[n] = c;
                }
                for n in 1..=n_max {
                    let mut acc = 0.0;
                    cdf[n][0] = 0.0;
                    for i in 1..len {
                        acc += 0.5 * step * (pdf[n][i - 1] + pdf[n][i]);
                        cdf[n][i] = acc.min(1.0);
                    }
                }
                PowerRepr::Grid { step, pdf, cdf }
            }
        };
        Self { n_max, dist: dist.clone(), repr }
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn distribution(&self) -> &ClaimDistribution {
        &self.dist
    }

    /// `f^{n*}(x)` for `n >= 1`.
    pub fn pdf(&self, n: usize, x: f64) -> f64 {
        debug_assert!(n >= 1);
        match &self.repr {
            PowerRepr::Gamma { shape, rate } => gamma_pdf(n * shape, *rate, x),
            PowerRepr::Grid { step, pdf, .. } => {
                if n == 1 {
                    self.dist.f(x)
                } else {
                    crate::quad::interp_linear(&pdf[n], *step, x)
                }
            }
        }
    }

    /// `F^{n*}(x)`, with `F^{0*} = 1` on `[0, inf)`.
    pub fn cdf(&self, n: usize, x: f64) -> f64 {
        if n == 0 {
            return if x >= 0.0 { 1.0 } else { 0.0 };
        }
        match &self.repr {
            PowerRepr::Gamma { shape, rate } => gamma_cdf(n * shape, *rate, x),
            PowerRepr::Grid { step, cdf, .. } => {
                if n == 1 {
                    1.0 - self.dist.fbar(x)
                } else if x <= 0.0 {
                    0.0
                } else {
                    let row = &cdf[n];
                    let pos = x / step;
                    if pos >= (row.len() - 1) as f64 {
                        row[row.len() - 1]
                    } else {
                        crate::quad::interp_linear(row, *step, x)
                    }
                }
            }
        }
    }

    /// `F^{n*}(x) - F^{(n+1)*}(x)`.
    pub fn band(&self, n: usize, x: f64) -> f64 {
        match &self.repr {
            PowerRepr::Gamma { shape, rate } => {
                if x < 0.0 {
                    0.0
                } else {
                    poisson_range(rate * x, n * shape, (n + 1) * shape)
                }
            }
            PowerRepr::Grid { .. } => (self.cdf(n, x) - self.cdf(n + 1, x)).max(0.0),
        }
    }

    /// `C(w_i) = int_0^{w_i} a g(shift + a) f^{m*}(w_i - a) da` at
    /// `w_i = i * w_step`, `i < len`, where `g` is the density or the
    /// survival function; `m >= 1`.
    pub fn weighted_tail_conv(
        &self,
        weight: Weight,
        shift: f64,
        m: usize,
        w_step: f64,
        len: usize,
    ) -> Vec<f64> {
        debug_assert!(m >= 1);
        match &self.repr {
            PowerRepr::Gamma { shape, rate } => {
                let coeffs = poly_exp_coeffs(weight, *shape, *rate, shift);
                let q = m * shape;
                let lb = rate.ln();
                (0..len)
                    .map(|i| {
                        let w = i as f64 * w_step;
                        if w <= 0.0 {
                            return 0.0;
                        }
                        let lw = w.ln();
                        let base = q as f64 * lb - rate * w;
                        coeffs
                            .iter()
                            .enumerate()
                            .filter(|(_, c)| **c != 0.0)
                            .map(|(p, c)| {
                                c * (base + (p + q + 1) as f64 * lw + ln_factorial(p + 1)
                                    - ln_factorial(p + q + 1))
                                .exp()
                            })
                            .sum()
                    })
                    .collect()
            }
            PowerRepr::Grid { .. } => {
                let g: Vec<f64> = (0..len)
                    .map(|i| {
                        let a = i as f64 * w_step;
                        let v = match weight {
                            Weight::Density => self.dist.f(shift + a),
                            Weight::Survival => self.dist.fbar(shift + a),
                        };
                        a * v
                    })
                    .collect();
                let p: Vec<f64> = (0..len).map(|i| self.pdf(m, i as f64 * w_step)).collect();
                let mut c = trapezoid_conv(&g, &p, w_step);
                c.truncate(len);
                c
            }
        }
    }
}

/// Coefficients `c_p` with `g(x + a) = sum_p c_p a^p e^{-rate a}` for the
/// Erlang density or survival function.
fn poly_exp_coeffs(weight: Weight, shape: usize, rate: f64, x: f64) -> Vec<f64> {
    let k = shape;
    let mut c = vec![0.0; k];
    let lx = if x > 0.0 { x.ln() } else { f64::NEG_INFINITY };
    let pow = |e: usize| if e == 0 { 0.0 } else { e as f64 * lx };
    match weight {
        Weight::Density => {
            for (p, cp) in c.iter_mut().enumerate() {
                *cp = (k as f64 * rate.ln() - rate * x - ln_factorial(k - 1) + ln_binomial(k - 1, p)
                    + pow(k - 1 - p))
                .exp();
            }
        }
        Weight::Survival => {
            for j in 0..k {
                for (p, cp) in c.iter_mut().enumerate().take(j + 1) {
                    *cp += (j as f64 * rate.ln() - ln_factorial(j) - rate * x + ln_binomial(j, p)
                        + pow(j - p))
                    .exp();
                }
            }
        }
    }
    c
}
