//! Convolution engines: direct and FFT based, one and two dimensional.
//!
//! Every trapezoid convolution here uses the same discretization:
//! halve the first sample of both inputs, form the plain discrete
//! convolution, then zero the first output (an integral over an empty
//! interval).

use std::sync::Arc;

use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Smallest integer >= n whose only prime factors are 2, 3 and 5.
pub fn next_fast_len(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut k = m;
        for p in [2, 3, 5] {
            while k % p == 0 {
                k /= p;
            }
        }
        if k == 1 {
            return m;
        }
        m += 1;
    }
}

/// Real-input FFT of a fixed length with its inverse.
pub struct RealFft {
    n: usize,
    fwd: Arc<dyn RealToComplex<f64>>,
    inv: Arc<dyn ComplexToReal<f64>>,
}

impl RealFft {
    pub fn new(n: usize) -> Self {
        let mut planner = RealFftPlanner::<f64>::new();
        Self {
            n,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn spectrum_len(&self) -> usize {
        self.n / 2 + 1
    }

    /// Spectrum of `data` placed at `offset` in a zero buffer.
    pub fn forward(&self, data: &[f64], offset: usize) -> Vec<Complex64> {
        let mut buf = vec![0.0; self.n];
        let end = (offset + data.len()).min(self.n);
        if offset < end {
            buf[offset..end].copy_from_slice(&data[..end - offset]);
        }
        let mut out = self.fwd.make_output_vec();
        self.fwd
            .process(&mut buf, &mut out)
            .expect("forward fft buffer sizes");
        out
    }

    /// Same as [`forward`](Self::forward) but with the first sample halved.
    pub fn forward_halved(&self, data: &[f64], offset: usize) -> Vec<Complex64> {
        let mut buf = vec![0.0; self.n];
        let end = (offset + data.len()).min(self.n);
        if offset < end {
            buf[offset..end].copy_from_slice(&data[..end - offset]);
            buf[offset] *= 0.5;
        }
        let mut out = self.fwd.make_output_vec();
        self.fwd
            .process(&mut buf, &mut out)
            .expect("forward fft buffer sizes");
        out
    }

    /// Normalized inverse transform.
    pub fn inverse(&self, mut spec: Vec<Complex64>) -> Vec<f64> {
        spec[0].im = 0.0;
        if self.n % 2 == 0 {
            let last = spec.len() - 1;
            spec[last].im = 0.0;
        }
        let mut out = self.inv.make_output_vec();
        self.inv
            .process(&mut spec, &mut out)
            .expect("inverse fft buffer sizes");
        let scale = 1.0 / self.n as f64;
        out.iter_mut().for_each(|v| *v *= scale);
        out
    }
}

/// `acc += w * a * b` elementwise.
#[inline]
pub fn mul_acc(acc: &mut [Complex64], a: &[Complex64], b: &[Complex64], w: f64) {
    for ((c, x), y) in acc.iter_mut().zip(a).zip(b) {
        *c += x * y * w;
    }
}

/// Plain discrete convolution, full length `a.len() + b.len() - 1`.
pub fn linear_conv(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let len = a.len() + b.len() - 1;
    if a.len().min(b.len()) <= 32 || a.len() * b.len() <= 65_536 {
        let mut out = vec![0.0; len];
        for (i, x) in a.iter().enumerate() {
            if *x == 0.0 {
                continue;
            }
            for (j, y) in b.iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        return out;
    }
    let fft = RealFft::new(next_fast_len(len));
    let fa = fft.forward(a, 0);
    let fb = fft.forward(b, 0);
    let prod: Vec<Complex64> = fa.iter().zip(&fb).map(|(x, y)| x * y).collect();
    let mut out = fft.inverse(prod);
    out.truncate(len);
    out
}

/// Trapezoid-rule convolution of two sampled functions that vanish before
/// their first sample. Output sample `i` approximates the integral over
/// `[0, i * step]`.
pub fn trapezoid_conv(a: &[f64], b: &[f64], step: f64) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut ah = a.to_vec();
    let mut bh = b.to_vec();
    ah[0] *= 0.5;
    bh[0] *= 0.5;
    let mut out = linear_conv(&ah, &bh);
    out[0] = 0.0;
    out.iter_mut().for_each(|v| *v *= step);
    out
}

/// Two dimensional FFT over (amount rows, time columns), real input.
///
/// Spectra are stored column major: `spec[k * rows + l]` for time
/// frequency `k` and amount frequency `l`.
pub struct Fft2 {
    rows: usize,
    time: RealFft,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub fn new(rows: usize, cols: usize) -> Self {
        let mut planner = FftPlanner::<f64>::new();
        Self {
            rows,
            time: RealFft::new(cols),
            col_fwd: planner.plan_fft_forward(rows),
            col_inv: planner.plan_fft_inverse(rows),
        }
    }

    pub fn spectrum_len(&self) -> usize {
        self.rows * self.time.spectrum_len()
    }

    /// Spectrum of the array whose row `l` is `data[l]`; row 0 and the first
    /// time sample are scaled by `row0` and `col0`.
    pub fn forward(&self, data: &[Vec<f64>], row0: f64, col0: f64) -> Vec<Complex64> {
        let kc = self.time.spectrum_len();
        let mut spec = vec![Complex64::new(0.0, 0.0); self.rows * kc];
        let mut buf = Vec::new();
        for (l, row) in data.iter().enumerate().take(self.rows) {
            buf.clear();
            buf.extend_from_slice(row);
            if buf.is_empty() {
                continue;
            }
            buf[0] *= col0;
            if l == 0 {
                buf.iter_mut().for_each(|v| *v *= row0);
            }
            let s = self.time.forward(&buf, 0);
            for (k, v) in s.into_iter().enumerate() {
                spec[k * self.rows + l] = v;
            }
        }
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.col_fwd.get_inplace_scratch_len()];
        for col in spec.chunks_mut(self.rows) {
            self.col_fwd.process_with_scratch(col, &mut scratch);
        }
        spec
    }

    /// Inverse transform; returns rows `0..n_rows`, each of the full time
    /// length, normalized.
    pub fn inverse(&self, mut spec: Vec<Complex64>, n_rows: usize) -> Vec<Vec<f64>> {
        let kc = self.time.spectrum_len();
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.col_inv.get_inplace_scratch_len()];
        for col in spec.chunks_mut(self.rows) {
            self.col_inv.process_with_scratch(col, &mut scratch);
        }
        let scale = 1.0 / self.rows as f64;
        (0..n_rows.min(self.rows))
            .map(|l| {
                let row: Vec<Complex64> = (0..kc).map(|k| spec[k * self.rows + l] * scale).collect();
                self.time.inverse(row)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_len() {
        assert_eq!(next_fast_len(7), 8);
        assert_eq!(next_fast_len(8026), 8100);
        assert_eq!(next_fast_len(1), 1);
    }

    #[test]
    fn fft_matches_direct() {
        let a: Vec<f64> = (0..500).map(|i| ((i * 7 % 13) as f64).sin()).collect();
        let b: Vec<f64> = (0..300).map(|i| (i as f64 * 0.01).cos()).collect();
        let fast = linear_conv(&a, &b);
        let mut slow = vec![0.0; a.len() + b.len() - 1];
        for i in 0..a.len() {
            for j in 0..b.len() {
                slow[i + j] += a[i] * b[j];
            }
        }
        for (x, y) in fast.iter().zip(&slow) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn trapezoid_conv_of_exponentials() {
        let h = 1e-3;
        let e: Vec<f64> = (0..2001).map(|i| (-(i as f64) * h).exp()).collect();
        let c = trapezoid_conv(&e, &e, h);
        // (e * e)(t) = t e^{-t}, integrand constant so trapezoid is exact
        assert!((c[1000] - (-1f64).exp()).abs() < 1e-12);
        assert_eq!(c[0], 0.0);
    }

    #[test]
    fn two_dimensional_roundtrip_convolution() {
        let a = vec![vec![1.0, 2.0, 0.5], vec![0.0, 1.0, 3.0]];
        let b = vec![vec![2.0, 1.0], vec![1.0, 1.0], vec![0.5, 0.0]];
        let f = Fft2::new(4, 4);
        let sa = f.forward(&a, 1.0, 1.0);
        let sb = f.forward(&b, 1.0, 1.0);
        let prod: Vec<Complex64> = sa.iter().zip(&sb).map(|(x, y)| x * y).collect();
        let out = f.inverse(prod, 4);
        let mut direct = vec![vec![0.0; 4]; 4];
        for (i, ra) in a.iter().enumerate() {
            for (j, rb) in b.iter().enumerate() {
                for (p, x) in ra.iter().enumerate() {
                    for (q, y) in rb.iter().enumerate() {
                        if i + j < 4 && p + q < 4 {
                            direct[i + j][p + q] += x * y;
                        }
                    }
                }
            }
        }
        for l in 0..4 {
            for k in 0..4 {
                assert!((out[l][k] - direct[l][k]).abs() < 1e-12, "{l} {k}");
            }
        }
    }
}
