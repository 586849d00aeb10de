//! Functions represented as point atoms plus a density sampled on a
//! uniform grid.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::fftconv::trapezoid_conv;

/// Variable the function is defined over.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Domain {
    Time,
    Amount,
}

/// Point mass.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Atom {
    pub location: f64,
    pub mass: f64,
}

/// Density samples at `origin + i * step`.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub origin: f64,
    pub step: f64,
    pub samples: Vec<f64>,
}

impl Grid {
    pub fn end(&self) -> f64 {
        self.origin + self.step * (self.samples.len().saturating_sub(1)) as f64
    }

    fn at(&self, t: f64) -> f64 {
        let pos = (t - self.origin) / self.step;
        if pos < -1e-9 || self.samples.is_empty() {
            return 0.0;
        }
        let pos = pos.max(0.0);
        let i = pos.floor() as usize;
        let last = self.samples.len() - 1;
        if i >= last {
            return if pos - last as f64 <= 1e-9 { self.samples[last] } else { 0.0 };
        }
        let frac = pos - i as f64;
        self.samples[i] * (1.0 - frac) + self.samples[i + 1] * frac
    }
}

const MERGE_TOL: f64 = 1e-12;
const PRUNE_MASS: f64 = 1e-15;

/// Atoms plus an optional gridded density.
#[derive(Clone, Debug, PartialEq)]
pub struct HybridFunction {
    domain: Domain,
    atoms: Vec<Atom>,
    grid: Option<Grid>,
}

impl HybridFunction {
    pub fn zero(domain: Domain) -> Self {
        Self { domain, atoms: Vec::new(), grid: None }
    }

    pub fn atom(domain: Domain, location: f64, mass: f64) -> Self {
        Self::new(domain, vec![Atom { location, mass }], None)
    }

    pub fn from_grid(domain: Domain, origin: f64, step: f64, samples: Vec<f64>) -> Self {
        assert!(step > 0.0, "grid step must be positive");
        Self { domain, atoms: Vec::new(), grid: Some(Grid { origin, step, samples }) }
    }

    /// Builds a function, merging atoms that share a location.
    pub fn new(domain: Domain, atoms: Vec<Atom>, grid: Option<Grid>) -> Self {
        let mut f = Self { domain, atoms, grid };
        f.normalize_atoms();
        f
    }

    fn normalize_atoms(&mut self) {
        self.atoms.sort_by(|a, b| a.location.total_cmp(&b.location));
        let mut merged: Vec<Atom> = Vec::with_capacity(self.atoms.len());
        for a in self.atoms.drain(..) {
            match merged.last_mut() {
                Some(last) if (last.location - a.location).abs() <= MERGE_TOL * last.location.abs().max(1.0) => {
                    last.mass += a.mass;
                }
                _ => merged.push(a),
            }
        }
        merged.retain(|a| a.mass.abs() > PRUNE_MASS);
        self.atoms = merged;
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn grid(&self) -> Option<&Grid> {
        self.grid.as_ref()
    }

    /// Density part at `t`, linearly interpolated; zero off the grid.
    pub fn evaluate(&self, t: f64) -> f64 {
        self.grid.as_ref().map_or(0.0, |g| g.at(t))
    }

    /// Atom masses in `[lo, hi]` plus the trapezoid integral of the grid
    /// over its overlap with `[lo, hi]`.
    pub fn integrate(&self, lo: f64, hi: f64) -> f64 {
        let atoms: f64 = self
            .atoms
            .iter()
            .filter(|a| a.location >= lo && a.location <= hi)
            .map(|a| a.mass)
            .sum();
        atoms + self.grid.as_ref().map_or(0.0, |g| grid_integral(g, lo, hi, |_| 1.0))
    }

    /// Integral over the whole line.
    pub fn total(&self) -> f64 {
        self.integrate(f64::NEG_INFINITY, f64::INFINITY)
    }

    /// `sum mass e^{-delta loc} + trapezoid(e^{-delta t} density)`.
    pub fn laplace_at(&self, delta: f64) -> f64 {
        let atoms: f64 = self.atoms.iter().map(|a| a.mass * (-delta * a.location).exp()).sum();
        atoms
            + self.grid.as_ref().map_or(0.0, |g| {
                grid_integral(g, f64::NEG_INFINITY, f64::INFINITY, |t| (-delta * t).exp())
            })
    }

    pub fn scale(&self, alpha: f64) -> Self {
        let atoms = self
            .atoms
            .iter()
            .map(|a| Atom { location: a.location, mass: a.mass * alpha })
            .collect();
        let grid = if alpha == 0.0 {
            None
        } else {
            self.grid.as_ref().map(|g| Grid {
                origin: g.origin,
                step: g.step,
                samples: g.samples.iter().map(|v| v * alpha).collect(),
            })
        };
        Self::new(self.domain, atoms, grid)
    }

    /// `self + alpha * other`. Grids must share a step; an origin offset
    /// that is not a whole number of steps is resolved by linear
    /// interpolation onto this function's lattice.
    pub fn add_scaled(&self, other: &Self, alpha: f64) -> Result<Self> {
        self.check_domain(other)?;
        let mut atoms = self.atoms.clone();
        atoms.extend(other.atoms.iter().map(|a| Atom { location: a.location, mass: alpha * a.mass }));
        let grid = match (&self.grid, &other.grid) {
            (None, None) => None,
            (Some(g), None) => Some(g.clone()),
            (None, Some(h)) => Some(Grid {
                origin: h.origin,
                step: h.step,
                samples: h.samples.iter().map(|v| alpha * v).collect(),
            }),
            (Some(g), Some(h)) => Some(add_grids(g, h, alpha)?),
        };
        let mut out = Self::new(self.domain, atoms, grid);
        if let Some(g) = &out.grid {
            if g.samples.iter().all(|v| *v == 0.0) {
                out.grid = None;
            }
        }
        Ok(out)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.add_scaled(other, 1.0)
    }

    fn check_domain(&self, other: &Self) -> Result<()> {
        if self.domain != other.domain {
            return Err(Error::Usage(format!(
                "cannot combine {:?} and {:?} functions",
                self.domain, other.domain
            )));
        }
        if let (Some(g), Some(h)) = (&self.grid, &other.grid) {
            if (g.step - h.step).abs() > 1e-12 * g.step {
                return Err(Error::Usage(format!("grid steps differ: {} vs {}", g.step, h.step)));
            }
        }
        Ok(())
    }

    /// `(a * b)(t) = int a(x) b(t - x) dx`, atoms acting as translations and
    /// grid pairs combined by the trapezoid rule.
    pub fn convolve(&self, other: &Self) -> Result<Self> {
        self.check_domain(other)?;
        let mut atoms = Vec::new();
        for a in &self.atoms {
            for b in &other.atoms {
                atoms.push(Atom { location: a.location + b.location, mass: a.mass * b.mass });
            }
        }
        let mut out = Self::new(self.domain, atoms, None);
        let shifted = |g: &Grid, a: &Atom| Grid {
            origin: g.origin + a.location,
            step: g.step,
            samples: g.samples.iter().map(|v| v * a.mass).collect(),
        };
        if let Some(g) = &other.grid {
            for a in &self.atoms {
                out = out.add(&Self { domain: self.domain, atoms: vec![], grid: Some(shifted(g, a)) })?;
            }
        }
        if let Some(g) = &self.grid {
            for a in &other.atoms {
                out = out.add(&Self { domain: self.domain, atoms: vec![], grid: Some(shifted(g, a)) })?;
            }
            if let Some(h) = &other.grid {
                let samples = trapezoid_conv(&g.samples, &h.samples, g.step);
                let conv = Grid { origin: g.origin + h.origin, step: g.step, samples };
                out = out.add(&Self { domain: self.domain, atoms: vec![], grid: Some(conv) })?;
            }
        }
        Ok(out)
    }

    /// CSV with an atoms section and a grid section.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let label = match self.domain {
            Domain::Time => "time",
            Domain::Amount => "amount",
        };
        let _ = writeln!(s, "# domain,{label}");
        let _ = writeln!(s, "section,location,value");
        for a in &self.atoms {
            let _ = writeln!(s, "atom,{:.17e},{:.17e}", a.location, a.mass);
        }
        if let Some(g) = &self.grid {
            for (i, v) in g.samples.iter().enumerate() {
                let _ = writeln!(s, "grid,{:.17e},{:.17e}", g.origin + i as f64 * g.step, v);
            }
        }
        s
    }
}

/// Trapezoid integral of `weight(t) * g(t)` over the overlap of the grid with
/// `[lo, hi]`, cutting partial cells by linear interpolation.
fn grid_integral<W: Fn(f64) -> f64>(g: &Grid, lo: f64, hi: f64, weight: W) -> f64 {
    let n = g.samples.len();
    if n < 2 || hi <= lo {
        return 0.0;
    }
    let a = lo.max(g.origin);
    let b = hi.min(g.end());
    if b <= a {
        return 0.0;
    }
    let val = |t: f64| g.at(t) * weight(t);
    let first = ((a - g.origin) / g.step - 1e-9).ceil().max(0.0) as usize;
    let last = (((b - g.origin) / g.step + 1e-9).floor() as usize).min(n - 1);
    let node = |i: usize| g.origin + i as f64 * g.step;
    if first > last {
        return 0.5 * (b - a) * (val(a) + val(b));
    }
    let mut total = 0.0;
    let t_first = node(first);
    if t_first > a {
        total += 0.5 * (t_first - a) * (val(a) + g.samples[first] * weight(t_first));
    }
    for i in first..last {
        total += 0.5 * g.step * (g.samples[i] * weight(node(i)) + g.samples[i + 1] * weight(node(i + 1)));
    }
    let t_last = node(last);
    if b > t_last {
        total += 0.5 * (b - t_last) * (g.samples[last] * weight(t_last) + val(b));
    }
    total
}

fn add_grids(g: &Grid, h: &Grid, alpha: f64) -> Result<Grid> {
    let step = g.step;
    let offset = (h.origin - g.origin) / step;
    let k = offset.round();
    let aligned = (offset - k).abs() < 1e-6;
    let h_on_lattice: Grid = if aligned {
        h.clone()
    } else {
        // resample onto g's lattice
        let start = ((h.origin - g.origin) / step).ceil();
        let end = ((h.end() - g.origin) / step).floor();
        let samples = if end >= start {
            (start as i64..=end as i64)
                .map(|i| h.at(g.origin + i as f64 * step))
                .collect()
        } else {
            Vec::new()
        };
        Grid { origin: g.origin + start * step, step, samples }
    };
    if h_on_lattice.samples.is_empty() {
        return Ok(g.clone());
    }
    let ho = ((h_on_lattice.origin - g.origin) / step).round() as i64;
    let lo = ho.min(0);
    let hi = (g.samples.len() as i64 - 1).max(ho + h_on_lattice.samples.len() as i64 - 1);
    let mut samples = vec![0.0; (hi - lo + 1) as usize];
    for (i, v) in g.samples.iter().enumerate() {
        samples[(i as i64 - lo) as usize] += v;
    }
    for (i, v) in h_on_lattice.samples.iter().enumerate() {
        samples[(i as i64 + ho - lo) as usize] += alpha * v;
    }
    Ok(Grid { origin: g.origin + lo as f64 * step, step, samples })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp_density(step: f64, end: f64) -> HybridFunction {
        let n = (end / step).round() as usize + 1;
        let s = (0..n).map(|i| (-(i as f64) * step).exp()).collect();
        HybridFunction::from_grid(Domain::Time, 0.0, step, s)
    }

    #[test]
    fn identity_and_translation() {
        let g = exp_density(0.01, 5.0);
        let d0 = HybridFunction::atom(Domain::Time, 0.0, 1.0);
        let c = d0.convolve(&g).unwrap();
        assert_eq!(c.grid().unwrap().samples, g.grid().unwrap().samples);
        let a = HybridFunction::atom(Domain::Time, 0.3, 2.0);
        let c = a.convolve(&g).unwrap();
        assert!((c.evaluate(1.3) - 2.0 * (-1f64).exp()).abs() < 1e-12);
        assert_eq!(c.evaluate(0.29), 0.0);
    }

    #[test]
    fn exponential_self_convolution() {
        let g = exp_density(1e-3, 10.0);
        let c = g.convolve(&g).unwrap();
        assert!((c.evaluate(1.0) - (-1f64).exp()).abs() < 2e-6);
    }

    #[test]
    fn integrate_examples() {
        let d0 = HybridFunction::atom(Domain::Time, 0.0, 1.0);
        assert_eq!(d0.integrate(-1.0, 1.0), 1.0);
        let g = exp_density(1e-3, 40.0);
        assert!((g.integrate(0.0, 40.0) - 1.0).abs() < 1e-6);
        assert_eq!(HybridFunction::zero(Domain::Time).total(), 0.0);
        // partial cells
        assert!((g.integrate(0.0005, 1.0) - ((-0.0005f64).exp() - (-1f64).exp())).abs() < 1e-7);
    }

    #[test]
    fn laplace_examples() {
        let d0 = HybridFunction::atom(Domain::Time, 0.0, 1.0);
        assert_eq!(d0.laplace_at(0.7), 1.0);
        let (lam, c1, u, delta) = (1.0, 1.5, 1.0, 0.5);
        let a = HybridFunction::atom(Domain::Time, -u / c1, (lam * u / c1 as f64).exp());
        assert!((a.laplace_at(delta) - ((lam + delta) * u / c1).exp()).abs() < 1e-12);
        let g = exp_density(1e-3, 40.0);
        assert!((g.laplace_at(1.0) - 0.5).abs() < 1e-6);
    }

    #[test]
    fn scale_and_add() {
        let g = exp_density(0.1, 2.0).add(&HybridFunction::atom(Domain::Time, 0.5, 1.0)).unwrap();
        assert_eq!(g.scale(0.0).total(), 0.0);
        let z = g.add_scaled(&g, -1.0).unwrap();
        assert!(z.atoms().is_empty());
        assert_eq!(z.total(), 0.0);
        let two = HybridFunction::atom(Domain::Time, 0.0, 1.0).scale(2.0);
        assert_eq!(two.atoms(), &[Atom { location: 0.0, mass: 2.0 }]);
        let other = HybridFunction::from_grid(Domain::Time, 0.0, 0.2, vec![1.0, 1.0]);
        assert!(matches!(g.add(&other), Err(Error::Usage(_))));
        let amount = HybridFunction::atom(Domain::Amount, 0.0, 1.0);
        assert!(g.convolve(&amount).is_err());
    }

    #[test]
    fn csv_has_both_sections() {
        let f = HybridFunction::new(
            Domain::Time,
            vec![Atom { location: -0.5, mass: 2.0 }],
            Some(Grid { origin: 0.0, step: 0.5, samples: vec![1.0, 0.5] }),
        );
        let csv = f.to_csv();
        assert!(csv.contains("atom,-5.00000000000000000e-1"));
        assert_eq!(csv.lines().filter(|l| l.starts_with("grid,")).count(), 2);
    }
}
