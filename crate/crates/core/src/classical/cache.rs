use realfft::num_complex::Complex64;

use crate::claims::{ConvolutionPowers, Weight};
use crate::error::{Error, Result};
use crate::fftconv::{mul_acc, next_fast_len, RealFft};
use crate::model::RiskModel;
use crate::quad::ln_factorial;

/// Shared time and amount lattice.
///
/// Times are `t_i = i * dt`, amounts `x_j = j * h` with `h = c1 * dt`, so a
/// shift by `x_j / c1` in time is exactly `j` steps. The threshold sits at
/// index `nb` and the largest amount needed at index `top`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lattice {
    pub dt: f64,
    pub nt: usize,
    pub h: f64,
    pub nb: usize,
    pub top: usize,
}

impl Lattice {
    /// Lattice for the model with every initial capital in `us` on the
    /// amount grid when possible. Returns the lattice and the capitals as
    /// they sit on it (snapped to the nearest node when no aligned step
    /// was found near the target).
    pub fn aligned(model: &RiskModel, us: &[f64], t_max: f64, time_points: usize) -> Result<(Self, Vec<f64>)> {
        if !(t_max > 0.0) || time_points < 2 {
            return Err(Error::Usage(format!("bad time grid: t_max={t_max}, points={time_points}")));
        }
        if us.iter().any(|u| !(*u >= 0.0 && u.is_finite())) {
            return Err(Error::Domain("initial capitals must be finite and >= 0".into()));
        }
        let c1 = model.c1;
        let q_target = c1 * t_max / time_points as f64;
        let anchor = if model.b > 0.0 {
            Some(model.b)
        } else {
            us.iter().cloned().find(|u| *u > 0.0)
        };
        let fits = |q: f64, x: f64| {
            let k = x / q;
            (k - k.round()).abs() < 1e-7 * k.max(1.0)
        };
        let q = match anchor {
            None => q_target,
            Some(a) => {
                let n0 = (a / q_target - 1e-9).ceil().max(1.0) as usize;
                let found = (n0..=4 * n0 + 16).map(|n| a / n as f64).find(|q| us.iter().all(|u| fits(*q, *u)));
                found.unwrap_or(a / n0 as f64)
            }
        };
        let snapped: Vec<f64> = us
            .iter()
            .map(|u| {
                let k = (u / q).round();
                let mut v = k * q;
                if *u > model.b && v <= model.b {
                    v = model.b + q;
                }
                if fits(q, *u) {
                    *u
                } else {
                    v
                }
            })
            .collect();
        let dt = q / c1;
        let nt = (t_max / dt + 1e-9).floor() as usize + 1;
        let nb = (model.b / q).round() as usize;
        let top = snapped.iter().map(|u| (u / q).round() as usize).max().unwrap_or(0).max(nb);
        if nb + 2 >= nt {
            return Err(Error::Usage(format!(
                "time horizon {t_max} too short for threshold crossing time {}",
                model.b / c1
            )));
        }
        Ok((Self { dt, nt, h: q, nb, top }, snapped))
    }

    /// Lattice without a threshold, for the unrefracted model.
    pub fn for_single(c1: f64, t_max: f64, time_points: usize) -> Self {
        let dt = t_max / time_points as f64;
        Self { dt, nt: time_points + 1, h: c1 * dt, nb: 0, top: 0 }
    }

    pub fn t(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    pub fn t_max(&self) -> f64 {
        self.t(self.nt - 1)
    }

    /// Amount index of `u` if it is a node.
    pub fn amount_index(&self, u: f64) -> Option<usize> {
        let k = u / self.h;
        let r = k.round();
        ((k - r).abs() < 1e-6 * k.max(1.0)).then_some(r as usize)
    }
}

/// Classical-model tables shared by the density recursions: convolution
/// powers, `w_inf(0, n, .)` and its spectra.
pub struct KernelCache {
    model: RiskModel,
    lat: Lattice,
    n_max: usize,
    powers: ConvolutionPowers,
    fft: RealFft,
    w0: Vec<Vec<f64>>,
    w0_spec: Vec<Vec<Complex64>>,
}

impl KernelCache {
    pub fn new(model: RiskModel, lat: Lattice, n_max: usize) -> Result<Self> {
        if n_max == 0 {
            return Err(Error::Usage("claim count limit must be >= 1".into()));
        }
        let x_extent = model.c1 * lat.t_max() + lat.top as f64 * lat.h + 1.0;
        let powers = ConvolutionPowers::new(&model.claims, n_max + 1, x_extent, 1e-3);
        let fft = RealFft::new(next_fast_len(2 * lat.nt - 1));
        let mut cache = Self { model, lat, n_max, powers, fft, w0: Vec::new(), w0_spec: Vec::new() };
        let lam = cache.model.lambda;
        let c1 = cache.model.c1;
        let mut w0: Vec<Vec<f64>> = Vec::with_capacity(n_max);
        for n in 1..=n_max {
            let row: Vec<f64> = if n == 1 {
                (0..lat.nt)
                    .map(|i| {
                        let t = lat.t(i);
                        lam * (-lam * t).exp() * cache.model.claims.fbar(c1 * t)
                    })
                    .collect()
            } else {
                cache
                    .drift_kernel(c1, Weight::Survival, 0.0, n - 1)
                    .into_iter()
                    .map(|v| lam / c1 * v)
                    .collect()
            };
            w0.push(row);
        }
        cache.w0_spec = w0.iter().map(|r| cache.fft.forward_halved(r, 0)).collect();
        cache.w0 = w0;
        Ok(cache)
    }

    pub fn model(&self) -> &RiskModel {
        &self.model
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lat
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn powers(&self) -> &ConvolutionPowers {
        &self.powers
    }

    pub(crate) fn fft(&self) -> &RealFft {
        &self.fft
    }

    /// `w_inf(0, n, t_i)`, rows `n = 1..=n_max`.
    pub fn w_inf_zero(&self) -> &[Vec<f64>] {
        &self.w0
    }

    /// `lambda^m t^{m-1} e^{-lambda t} / m!` on the time grid.
    fn poisson_prefactor(&self, m: usize) -> Vec<f64> {
        let lam = self.model.lambda;
        (0..self.lat.nt)
            .map(|i| {
                let t = self.lat.t(i);
                if t == 0.0 {
                    return if m == 1 { lam } else { 0.0 };
                }
                (m as f64 * lam.ln() + (m - 1) as f64 * t.ln() - lam * t - ln_factorial(m)).exp()
            })
            .collect()
    }

    /// `int g(y) g_c(y - x, m, t) dy` on the time grid, where `g_c` is the
    /// upward passage kernel for drift `c` and `g` the claim density or
    /// survival function.
    pub fn drift_kernel(&self, c: f64, weight: Weight, x: f64, m: usize) -> Vec<f64> {
        let lam = self.model.lambda;
        let d = &self.model.claims;
        if m == 0 {
            return (0..self.lat.nt)
                .map(|i| {
                    let t = self.lat.t(i);
                    let g = match weight {
                        Weight::Density => d.f(x + c * t),
                        Weight::Survival => d.fbar(x + c * t),
                    };
                    c * (-lam * t).exp() * g
                })
                .collect();
        }
        let pref = self.poisson_prefactor(m);
        let conv = self.powers.weighted_tail_conv(weight, x, m, c * self.lat.dt, self.lat.nt);
        pref.iter().zip(conv).map(|(p, v)| p * v).collect()
    }

    /// `w_inf(v, n, t_i)` for `n = 1..=n_max` at any capital `v >= 0`.
    pub fn w_inf_at(&self, v: f64) -> Vec<Vec<f64>> {
        if v == 0.0 {
            return self.w0.clone();
        }
        let lat = &self.lat;
        let lam = self.model.lambda;
        let c1 = self.model.c1;
        let d = &self.model.claims;
        let m = self.n_max;
        let mut out = Vec::with_capacity(m);
        out.push(
            (0..lat.nt)
                .map(|i| {
                    let t = lat.t(i);
                    lam * (-lam * t).exp() * d.fbar(v + c1 * t)
                })
                .collect::<Vec<f64>>(),
        );
        if m == 1 {
            return out;
        }
        let spec: Vec<Vec<Complex64>> = (1..m)
            .map(|j| {
                let pj: Vec<f64> = (0..lat.nt)
                    .map(|i| {
                        let s = lat.t(i);
                        if s == 0.0 {
                            return 0.0;
                        }
                        (j as f64 * (lam * s).ln() - lam * s - ln_factorial(j)).exp()
                            * self.powers.pdf(j, v + c1 * s)
                    })
                    .collect();
                self.fft.forward_halved(&pj, 0)
            })
            .collect();
        for n in 1..m {
            let mut acc = vec![Complex64::new(0.0, 0.0); self.fft.spectrum_len()];
            for j in 1..=n {
                mul_acc(&mut acc, &spec[j - 1], &self.w0_spec[n - j], 1.0);
            }
            let conv = self.fft.inverse(acc);
            let row = (0..lat.nt)
                .map(|i| {
                    let t = lat.t(i);
                    let lead = if t == 0.0 {
                        0.0
                    } else {
                        (n as f64 * (lam * t).ln() - lam * t - ln_factorial(n)).exp()
                            * lam
                            * self.powers.band(n, v + c1 * t)
                    };
                    let c = if i == 0 { 0.0 } else { conv[i] * lat.dt };
                    lead - c1 * c
                })
                .collect();
            out.push(row);
        }
        out
    }

    /// `varpi(j h, k, t)` for `k >= 1` at `t = (p - j) dt`, `p = 0..=j`.
    pub fn varpi_samples(&self, j: usize, k: usize) -> Vec<f64> {
        let v = j as f64 * self.lat.h;
        (0..=j)
            .map(|p| {
                let t = (p as f64 - j as f64) * self.lat.dt;
                super::varpi_value(&self.model, &self.powers, v, k, t)
            })
            .collect()
    }
}
