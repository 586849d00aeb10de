use std::fmt::Write as _;

use log::{debug, warn};
use rayon::prelude::*;
use realfft::num_complex::Complex64;

use crate::claims::Weight;
use crate::classical::{KernelCache, Lattice};
use crate::error::{Error, Result};
use crate::fftconv::{mul_acc, next_fast_len, trapezoid_conv, Fft2};
use crate::hybridfn::{Domain, HybridFunction};
use crate::model::{RiskModel, TransformParams};

/// Negative values above this are treated as rounding and clamped.
pub const CLAMP_SLACK: f64 = 1e-6;

/// Time grid and claim count limit for a density computation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub t_max: f64,
    /// Target number of time steps on `[0, t_max]`; the aligned lattice may
    /// use a slightly different count.
    pub time_points: usize,
    pub n_max: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { t_max: 50.0, time_points: 4000, n_max: 20 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Below,
    Above,
}

impl Side {
    pub fn as_str(&self) -> &'static str {
        match self {
            Side::Below => "below",
            Side::Above => "above",
        }
    }
}

/// `w(u, n, t_i)` for `n = 1..=n_max` on a uniform time grid.
#[derive(Clone, Debug)]
pub struct DensityTable {
    u: f64,
    side: Side,
    dt: f64,
    values: Vec<Vec<f64>>,
    clamped: usize,
}

impl DensityTable {
    fn new(u: f64, side: Side, dt: f64, mut values: Vec<Vec<f64>>) -> Result<Self> {
        let mut clamped = 0;
        for (n, row) in values.iter_mut().enumerate() {
            for (i, v) in row.iter_mut().enumerate() {
                if *v < 0.0 {
                    if *v < -CLAMP_SLACK {
                        return Err(Error::Numerical(format!(
                            "density w(u={u}, n={}, t={}) = {:e} is negative beyond rounding",
                            n + 1,
                            i as f64 * dt,
                            *v
                        )));
                    }
                    *v = 0.0;
                    clamped += 1;
                }
            }
        }
        if clamped > 0 {
            debug!("clamped {clamped} small negative density values at u={u}");
        }
        Ok(Self { u, side, dt, values, clamped })
    }

    pub fn u(&self) -> f64 {
        self.u
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn n_max(&self) -> usize {
        self.values.len()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn t_max(&self) -> f64 {
        (self.len().saturating_sub(1)) as f64 * self.dt
    }

    /// Number of small negative values set to zero.
    pub fn clamped(&self) -> usize {
        self.clamped
    }

    /// Row for claim count `n >= 1`.
    pub fn row(&self, n: usize) -> &[f64] {
        &self.values[n - 1]
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// Linear interpolation of `w(u, n, t)`.
    pub fn value(&self, n: usize, t: f64) -> f64 {
        crate::quad::interp_linear(self.row(n), self.dt, t)
    }

    /// `int w(u, n, t) dt` over `[lo, hi]`.
    pub fn integrate(&self, n: usize, lo: f64, hi: f64) -> f64 {
        self.to_hybrid(n).integrate(lo, hi)
    }

    /// `P(N = n, tau <= t_max)`.
    pub fn mass(&self, n: usize) -> f64 {
        crate::quad::trapezoid(self.row(n), self.dt)
    }

    pub fn masses(&self) -> Vec<f64> {
        (1..=self.n_max()).map(|n| self.mass(n)).collect()
    }

    pub fn total(&self) -> f64 {
        self.masses().iter().sum()
    }

    /// `sum_n r^n int e^{-delta t} w(u, n, t) dt`.
    pub fn transform(&self, params: TransformParams) -> f64 {
        (1..=self.n_max())
            .map(|n| {
                let disc: Vec<f64> = self
                    .row(n)
                    .iter()
                    .enumerate()
                    .map(|(i, w)| w * (-params.delta * i as f64 * self.dt).exp())
                    .collect();
                params.r.powi(n as i32) * crate::quad::trapezoid(&disc, self.dt)
            })
            .sum()
    }

    pub fn to_hybrid(&self, n: usize) -> HybridFunction {
        HybridFunction::from_grid(Domain::Time, 0.0, self.dt, self.row(n).to_vec())
    }

    /// CSV with columns `n,t,w`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,t,w\n");
        for (n, row) in self.values.iter().enumerate() {
            for (i, w) in row.iter().enumerate() {
                let _ = writeln!(s, "{},{},{:e}", n + 1, i as f64 * self.dt, w);
            }
        }
        s
    }
}

type Spectrum = Vec<Complex64>;

/// Densities of the refracted model on a shared lattice.
///
/// Build once for the capitals of interest; every capital on the amount
/// grid up to the largest requested one is then available.
pub struct DensityEngine {
    model: RiskModel,
    lat: Lattice,
    n_max: usize,
    capitals: Vec<f64>,
    cache: KernelCache,
    /// `w_inf(j h, n)`, `j <= nb`.
    winf: Vec<Vec<Vec<f64>>>,
    /// `sigma(b, k)` for `k >= 1`, time origin `-b / c1`.
    sigma: Vec<Vec<f64>>,
    gamma: Vec<Vec<f64>>,
    /// `w_1(j h, m)`, `j <= nb`.
    w1: Vec<Vec<Vec<f64>>>,
    /// `w_2(b + l h, m)`, `l >= 1`.
    w2: Vec<Vec<Vec<f64>>>,
}

impl DensityEngine {
    pub fn new(model: &RiskModel, capitals: &[f64], grid: GridSpec) -> Result<Self> {
        model.validate()?;
        if grid.n_max == 0 {
            return Err(Error::Usage("claim count limit must be >= 1".into()));
        }
        let (lat, capitals) = Lattice::aligned(model, capitals, grid.t_max, grid.time_points)?;
        for (u, v) in capitals.iter().zip(&capitals) {
            if u != v {
                warn!("capital {u} moved to lattice node {v}");
            }
        }
        let cache = KernelCache::new(model.clone(), lat, grid.n_max)?;
        let mut engine = Self {
            model: model.clone(),
            lat,
            n_max: grid.n_max,
            capitals,
            cache,
            winf: Vec::new(),
            sigma: Vec::new(),
            gamma: Vec::new(),
            w1: Vec::new(),
            w2: Vec::new(),
        };
        engine.build()?;
        Ok(engine)
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lat
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// Requested capitals as placed on the lattice.
    pub fn capitals(&self) -> &[f64] {
        &self.capitals
    }

    fn k2(&self, l: usize, m: usize) -> Vec<f64> {
        self.cache.drift_kernel(self.model.c2, Weight::Density, l as f64 * self.lat.h, m)
    }

    fn l2(&self, l: usize, m: usize) -> Vec<f64> {
        self.cache.drift_kernel(self.model.c2, Weight::Survival, l as f64 * self.lat.h, m)
    }

    fn build(&mut self) -> Result<()> {
        let lat = self.lat;
        let nb = lat.nb;
        let nt = lat.nt;
        let mm = self.n_max;
        let dt = lat.dt;
        let h = lat.h;
        let lam = self.model.lambda;
        let c2 = self.model.c2;
        let fft = self.cache.fft();
        let alpha = |j: usize| if j == 0 || j == nb { 0.5 } else { 1.0 };
        let zero_spec = || vec![Complex64::new(0.0, 0.0); fft.spectrum_len()];

        let winf: Vec<Vec<Vec<f64>>> =
            (0..=nb).into_par_iter().map(|j| self.cache.w_inf_at(j as f64 * h)).collect();

        // K_2 rows for x_j in [0, b] and their spectra; varpi samples and spectra
        let k2_low: Vec<Vec<Vec<f64>>> =
            (0..=nb).into_par_iter().map(|j| (0..mm).map(|m| self.k2(j, m)).collect()).collect();
        let k2_spec: Vec<Vec<Spectrum>> = k2_low
            .par_iter()
            .map(|rows| rows.iter().map(|r| fft.forward_halved(r, 0)).collect())
            .collect();
        let varpi: Vec<Vec<Vec<f64>>> = (0..=nb)
            .into_par_iter()
            .map(|j| (1..mm).map(|k| self.cache.varpi_samples(j, k)).collect())
            .collect();
        let varpi_spec: Vec<Vec<Spectrum>> = varpi
            .par_iter()
            .enumerate()
            .map(|(j, rows)| rows.iter().map(|r| fft.forward_halved(r, nb - j)).collect())
            .collect();

        // sigma(b, n) for n = 1..mm-1 in the frame with origin -b/c1
        let sigma: Vec<Vec<f64>> = (1..mm)
            .into_par_iter()
            .map(|n| {
                let mut acc = zero_spec();
                for m in 0..n.saturating_sub(1) {
                    let k = n - 1 - m;
                    for j in 0..=nb {
                        let w = alpha(j) * h;
                        if nb > 0 {
                            mul_acc(&mut acc, &varpi_spec[nb - j][k - 1], &k2_spec[j][m], w);
                        }
                    }
                }
                let mut grid_part: Vec<f64> = fft.inverse(acc).into_iter().take(nt).map(|v| v * dt).collect();
                if n >= 2 && nb > 0 {
                    // zero-length intervals where both halved first samples meet
                    for j in 0..=nb {
                        let first = varpi[nb - j][n - 2][0];
                        grid_part[j] -= 0.25 * first * k2_low[j][0][0] * dt * alpha(j) * h;
                    }
                }
                (0..nt)
                    .map(|p| {
                        let mut atom = 0.0;
                        let top = nb.min(p);
                        if top > 0 {
                            for j in 0..=top {
                                let w = if j == 0 || j == top { 0.5 } else { 1.0 };
                                atom += w
                                    * h
                                    * (lam * (nb - j) as f64 * dt).exp()
                                    * k2_low[j][n - 1][p - j];
                            }
                        }
                        let direct = if p <= nb { varpi[nb][n - 1][p] } else { 0.0 };
                        direct - lam / c2 * (atom + grid_part[p])
                    })
                    .collect()
            })
            .collect();

        // gamma(b, n) for n = 1..=mm
        let winf_spec: Vec<Vec<Spectrum>> = winf
            .par_iter()
            .map(|rows| rows.iter().map(|r| fft.forward_halved(r, 0)).collect())
            .collect();
        let gamma: Vec<Vec<f64>> = (1..=mm)
            .into_par_iter()
            .map(|n| {
                let l = self.l2(nb, n - 1);
                let mut grid_part = vec![0.0; nt];
                if n >= 2 && nb > 0 {
                    let mut acc = zero_spec();
                    for m in 0..=n - 2 {
                        let k = n - 1 - m;
                        for j in 0..=nb {
                            mul_acc(&mut acc, &winf_spec[nb - j][k - 1], &k2_spec[j][m], alpha(j) * h);
                        }
                    }
                    for (i, v) in fft.inverse(acc).into_iter().take(nt).enumerate().skip(1) {
                        grid_part[i] = v * dt;
                    }
                }
                l.iter().zip(&grid_part).map(|(a, g)| lam / c2 * (a + g)).collect()
            })
            .collect();
        drop(winf_spec);
        drop(k2_spec);

        let d: Vec<Vec<f64>> = gamma
            .iter()
            .zip(&winf[nb])
            .map(|(g, w)| g.iter().zip(w).map(|(a, b)| a - b).collect())
            .collect();
        let d_spec: Vec<Spectrum> = d.iter().map(|r| fft.forward_halved(r, 0)).collect();
        let sigma_spec: Vec<Spectrum> = sigma.iter().map(|r| fft.forward_halved(r, 0)).collect();

        // w_1 at every node of [0, b]
        let shrink = (-lam * nb as f64 * dt).exp();
        let w1: Vec<Vec<Vec<f64>>> = (0..=nb)
            .into_par_iter()
            .map(|j| {
                let lift = (lam * j as f64 * dt).exp();
                let shift = nb - j;
                let mut rows: Vec<Vec<f64>> = Vec::with_capacity(mm);
                let mut diff: Vec<Vec<f64>> = Vec::with_capacity(mm);
                let mut diff_spec: Vec<Spectrum> = Vec::with_capacity(mm);
                for m in 1..=mm {
                    let mut conv = vec![0.0; nt];
                    if m >= 2 {
                        let mut acc = zero_spec();
                        for n in 1..m {
                            mul_acc(&mut acc, &sigma_spec[m - n - 1], &diff_spec[n - 1], 1.0);
                            mul_acc(&mut acc, &d_spec[n - 1], &varpi_spec[j][m - n - 1], 1.0);
                        }
                        for (i, v) in fft.inverse(acc).into_iter().take(nt).enumerate() {
                            conv[i] = v * dt;
                        }
                        for n in 1..m {
                            conv[0] -= 0.25 * sigma[m - n - 1][0] * diff[n - 1][0] * dt;
                            conv[shift] -= 0.25 * d[n - 1][0] * varpi[j][m - n - 1][0] * dt;
                        }
                    }
                    let w = &winf[j][m - 1];
                    let row: Vec<f64> = (0..nt)
                        .map(|i| {
                            let tail = if i >= shift { lift * d[m - 1][i - shift] } else { 0.0 };
                            w[i] + shrink * (conv[i] + tail)
                        })
                        .collect();
                    let dr: Vec<f64> = w.iter().zip(&row).map(|(a, b)| a - b).collect();
                    diff_spec.push(fft.forward_halved(&dr, 0));
                    diff.push(dr);
                    rows.push(row);
                }
                rows
            })
            .collect();
        drop(varpi_spec);
        drop(sigma_spec);
        drop(d_spec);

        self.winf = winf;
        self.sigma = sigma;
        self.gamma = gamma;
        self.w1 = w1;
        if lat.top > nb {
            self.w2 = self.solve_upper()?;
        }
        Ok(())
    }

    /// `w_2` on `(b, top]` by the first-drop renewal recursion in the
    /// claim count, one 2D convolution per level.
    fn solve_upper(&self) -> Result<Vec<Vec<Vec<f64>>>> {
        let lat = self.lat;
        let (nb, top, nt, mm) = (lat.nb, lat.top, lat.nt, self.n_max);
        let lam = self.model.lambda;
        let c2 = self.model.c2;
        let rows_a = next_fast_len(2 * top - nb + 1);
        let cols_t = next_fast_len(2 * nt - 1);
        let fft2 = Fft2::new(rows_a, cols_t);
        let k_spec: Vec<Spectrum> = (0..mm.saturating_sub(1))
            .into_par_iter()
            .map(|m| {
                let rows: Vec<Vec<f64>> = (0..=top).map(|l| self.k2(l, m)).collect();
                fft2.forward(&rows, 0.5, 0.5)
            })
            .collect();
        let l_rows: Vec<Vec<Vec<f64>>> = (nb + 1..=top)
            .into_par_iter()
            .map(|l| (0..mm).map(|m| self.l2(l, m)).collect())
            .collect();
        // upper[l - nb - 1][m - 1]
        let mut upper: Vec<Vec<Vec<f64>>> = l_rows
            .iter()
            .map(|ls| vec![ls[0].iter().map(|v| lam / c2 * v).collect()])
            .collect();
        let mut w_spec: Vec<Spectrum> = Vec::with_capacity(mm);
        let scale = lat.dt * lat.h;
        for level in 2..=mm {
            let j = level - 1;
            let rows: Vec<Vec<f64>> = (0..=top)
                .map(|l| if l <= nb { self.w1[l][j - 1].clone() } else { upper[l - nb - 1][j - 1].clone() })
                .collect();
            w_spec.push(fft2.forward(&rows, 0.5, 0.5));
            let mut acc = vec![Complex64::new(0.0, 0.0); fft2.spectrum_len()];
            for j in 1..level {
                mul_acc(&mut acc, &w_spec[j - 1], &k_spec[level - 1 - j], 1.0);
            }
            let conv = fft2.inverse(acc, top + 1);
            for l in nb + 1..=top {
                let lr = &l_rows[l - nb - 1][level - 1];
                let row: Vec<f64> = (0..nt)
                    .map(|i| {
                        let c = if i == 0 { 0.0 } else { conv[l][i] * scale };
                        lam / c2 * (lr[i] + c)
                    })
                    .collect();
                upper[l - nb - 1].push(row);
            }
        }
        Ok(upper)
    }

    fn node(&self, u: f64) -> Result<usize> {
        let l = self
            .lat
            .amount_index(u)
            .ok_or_else(|| Error::Usage(format!("capital {u} is not on the amount lattice (step {})", self.lat.h)))?;
        if l > self.lat.top {
            return Err(Error::Usage(format!(
                "capital {u} exceeds the largest prepared capital {}",
                self.lat.top as f64 * self.lat.h
            )));
        }
        Ok(l)
    }

    /// Density table at a lattice capital.
    pub fn table(&self, u: f64) -> Result<DensityTable> {
        let l = self.node(u)?;
        let nb = self.lat.nb;
        if l <= nb {
            DensityTable::new(u, Side::Below, self.lat.dt, self.w1[l].clone())
        } else {
            DensityTable::new(u, Side::Above, self.lat.dt, self.w2[l - nb - 1].clone())
        }
    }

    /// `w_inf(u, n, .)` at a lattice capital in `[0, b]`.
    pub fn w_inf_row(&self, u: f64, n: usize) -> Result<HybridFunction> {
        let l = self.node(u)?;
        if l > self.lat.nb || n == 0 || n > self.n_max {
            return Err(Error::Usage(format!("w_inf row needs u <= b and 1 <= n <= {}", self.n_max)));
        }
        Ok(self.time_fn(0.0, self.winf[l][n - 1].clone()))
    }

    fn time_fn(&self, origin: f64, samples: Vec<f64>) -> HybridFunction {
        HybridFunction::from_grid(Domain::Time, origin, self.lat.dt, samples)
    }

    fn frame_origin(&self) -> f64 {
        -(self.lat.nb as f64) * self.lat.dt
    }

    /// `sigma(b, n, .)`: an atom for `n = 0`, otherwise a grid starting at
    /// `-b / c1`.
    pub fn sigma_kernel(&self, n: usize) -> Result<HybridFunction> {
        let b = self.model.b;
        let c1 = self.model.c1;
        match n {
            0 => Ok(HybridFunction::atom(Domain::Time, -b / c1, (self.model.lambda * b / c1).exp())),
            n if n < self.n_max => Ok(self.time_fn(self.frame_origin(), self.sigma[n - 1].clone())),
            _ => Err(Error::Usage(format!("sigma kernel available for n < {}", self.n_max))),
        }
    }

    /// `gamma(b, n, .)` for `1 <= n <= n_max`.
    pub fn gamma_kernel(&self, n: usize) -> Result<HybridFunction> {
        if n == 0 || n > self.n_max {
            return Err(Error::Usage(format!("gamma kernel available for 1 <= n <= {}", self.n_max)));
        }
        Ok(self.time_fn(0.0, self.gamma[n - 1].clone()))
    }

    /// `vartheta(u, m, n, .)` on the grid starting at `-b / c1`.
    pub fn vartheta(&self, u: f64, m: usize, n: usize) -> Result<HybridFunction> {
        if m < n {
            return Err(Error::Usage(format!("vartheta needs m >= n, got m={m}, n={n}")));
        }
        if n == 0 || m > self.n_max {
            return Err(Error::Usage(format!("vartheta needs 1 <= n <= m <= {}", self.n_max)));
        }
        let j = self.node(u)?;
        let lat = self.lat;
        if j > lat.nb {
            return Err(Error::Domain(format!("vartheta needs u <= b, got {u}")));
        }
        let (nb, nt, dt) = (lat.nb, lat.nt, lat.dt);
        let lam = self.model.lambda;
        let d: Vec<f64> = self.gamma[n - 1].iter().zip(&self.winf[nb][n - 1]).map(|(g, w)| g - w).collect();
        let w = &self.winf[j][n - 1];
        let samples = if m == n {
            let a = (lam * nb as f64 * dt).exp();
            let c = (lam * j as f64 * dt).exp();
            let shift = nb - j;
            (0..nt)
                .map(|p| a * w[p] + if p >= shift { c * d[p - shift] } else { 0.0 })
                .collect()
        } else {
            let k = m - n;
            let varpi = self.cache.varpi_samples(j, k);
            let mut framed = vec![0.0; nt];
            for (p, v) in varpi.iter().enumerate() {
                if nb - j + p < nt {
                    framed[nb - j + p] = *v;
                }
            }
            let a = trapezoid_conv(&self.sigma[k - 1], w, dt);
            let c = trapezoid_conv(&d, &framed[nb - j..], dt);
            let mut b = vec![0.0; nt];
            for (i, v) in c.iter().enumerate() {
                if nb - j + i < nt {
                    b[nb - j + i] = *v;
                }
            }
            (0..nt).map(|p| a.get(p).copied().unwrap_or(0.0) + b[p]).collect()
        };
        Ok(self.time_fn(self.frame_origin(), samples))
    }

    /// `epsilon(y, m, .)` for a lattice offset `y >= 0` above the threshold.
    pub fn epsilon_kernel(&self, y: f64, m: usize) -> Result<HybridFunction> {
        let lat = self.lat;
        let a = lat
            .amount_index(y)
            .ok_or_else(|| Error::Usage(format!("offset {y} is not on the amount lattice")))?;
        let nb = lat.nb;
        if a + nb > lat.top {
            return Err(Error::Usage(format!(
                "epsilon needs y + b <= {}",
                lat.top as f64 * lat.h
            )));
        }
        if m >= self.n_max {
            return Err(Error::Usage(format!("epsilon available for m < {}", self.n_max)));
        }
        let mut out = self.l2(a + nb, m);
        for n in 1..=m {
            for l in a..=a + nb {
                let w = if (l == a || l == a + nb) && nb > 0 { 0.5 } else { 1.0 };
                if nb == 0 {
                    continue;
                }
                let k = self.k2(l, m - n);
                let c = trapezoid_conv(&self.w1[a + nb - l][n - 1], &k, lat.dt);
                for (o, v) in out.iter_mut().zip(c) {
                    *o += w * lat.h * v;
                }
            }
        }
        Ok(self.time_fn(0.0, out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::claims::ClaimDistribution;
    use crate::refracted::first_claim_density;

    fn reference() -> RiskModel {
        RiskModel::new(1.0, 1.5, 1.2, 2.0, ClaimDistribution::Exponential { rate: 1.0 }).unwrap()
    }

    fn small_grid() -> GridSpec {
        GridSpec { t_max: 12.0, time_points: 1200, n_max: 4 }
    }

    #[test]
    fn first_row_matches_first_claim_formula() {
        let m = reference();
        let e = DensityEngine::new(&m, &[1.0, 3.0], small_grid()).unwrap();
        for u in [1.0, 3.0] {
            let t = e.table(u).unwrap();
            for i in (0..t.len()).step_by(37) {
                let s = i as f64 * t.dt();
                let want = first_claim_density(&m, u, s);
                assert!((t.row(1)[i] - want).abs() < 1e-10, "u={u} t={s}: {} {want}", t.row(1)[i]);
            }
        }
    }

    #[test]
    fn closed_form_kernels() {
        let m = reference();
        // dt = 1/81 puts t = 1 on a node
        let grid = GridSpec { t_max: 12.0, time_points: 972, n_max: 4 };
        let e = DensityEngine::new(&m, &[1.0, 3.0], grid).unwrap();
        assert!((e.lattice().dt - 1.0 / 81.0).abs() < 1e-15);
        let g = e.gamma_kernel(1).unwrap();
        assert!((g.evaluate(1.0) - (-4.2f64).exp()).abs() < 1e-10);
        let eps = e.epsilon_kernel(1.0, 0).unwrap();
        assert!((eps.evaluate(1.0) - 1.2 * (-5.2f64).exp()).abs() < 1e-10);
        let s0 = e.sigma_kernel(0).unwrap();
        assert_eq!(s0.atoms().len(), 1);
        assert!((s0.atoms()[0].location + 2.0 / 1.5).abs() < 1e-12);
        assert!((s0.atoms()[0].mass - (2.0f64 / 1.5).exp()).abs() < 1e-12);
        assert!(matches!(e.vartheta(1.0, 1, 2), Err(Error::Usage(_))));
    }

    #[test]
    fn vartheta_sums_match_recursion() {
        // sum_n sigma(m-n) * w1(n) = sum_n vartheta(m, n) at m = 2
        let m = reference();
        let e = DensityEngine::new(&m, &[1.0], small_grid()).unwrap();
        let lat = *e.lattice();
        let j = lat.amount_index(1.0).unwrap();
        let w1 = &e.w1[j];
        let lhs_atom = |i: usize| (m.lambda * lat.nb as f64 * lat.dt).exp() * w1[1][i];
        let conv = trapezoid_conv(&e.sigma[0], &w1[0], lat.dt);
        let t1 = e.vartheta(1.0, 2, 1).unwrap();
        let t2 = e.vartheta(1.0, 2, 2).unwrap();
        for p in [200usize, 400, 700] {
            let lhs = lhs_atom(p) + conv[p];
            let rhs = t1.grid().unwrap().samples[p] + t2.grid().unwrap().samples[p];
            assert!((lhs - rhs).abs() < 1e-3 * lhs.abs().max(1e-3), "p={p}: {lhs} {rhs}");
        }
    }

    #[test]
    fn no_refraction_gives_classical_density() {
        let m = reference().unrefracted();
        let e = DensityEngine::new(&m, &[1.0, 3.0], small_grid()).unwrap();
        let w = crate::classical::w_inf(&m, 3.0, 4, 12.0, 1200).unwrap();
        let below = e.table(1.0).unwrap();
        let above = e.table(3.0).unwrap();
        for n in 1..=4 {
            let winf = e.w_inf_row(1.0, n).unwrap();
            for i in (1..below.len()).step_by(50) {
                let t = i as f64 * below.dt();
                assert!((below.row(n)[i] - winf.evaluate(t)).abs() < 1e-3);
                assert!((above.row(n)[i] - w[n - 1].evaluate(t)).abs() < 1e-3, "n={n} t={t}");
            }
        }
    }

    #[test]
    fn table_invariants() {
        let e = DensityEngine::new(&reference(), &[0.5, 1.0, 3.0], small_grid()).unwrap();
        let mut prev = f64::INFINITY;
        for u in [0.5, 1.0, 3.0] {
            let t = e.table(u).unwrap();
            assert!(t.values().iter().flatten().all(|v| *v >= 0.0));
            let total = t.total();
            assert!(total <= 1.0 + 1e-3 && total < prev);
            prev = total;
        }
        let csv = e.table(1.0).unwrap().to_csv();
        assert!(csv.starts_with("n,t,w\n1,0,"));
    }
}
