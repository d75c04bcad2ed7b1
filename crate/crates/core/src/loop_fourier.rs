//! Truncated Fourier loops in `R^{2n}`.
//!
//! A loop is `x(t) = sum_k e^{-2 pi k J0 t} c_k` for `|k| <= M`. In each
//! symplectic plane `e^{-2 pi k J0 t}` acts on `q + i p` as `e^{-2 pi i k t}`,
//! so the coefficients of one plane form an ordinary complex Fourier series
//! without any conjugate-symmetry constraint, and every `c_k` is a free
//! vector in `R^{2n}`.
//!
//! Norms used throughout:
//! * `||x||_{1/2}^2 = |c_0|^2 + 2 pi sum |k| |c_k|^2`
//! * `(1/2) int J0 x' . x = pi sum k |c_k|^2`
//! * `||x||_{H1}^2 = sum 4 pi^2 k^2 |c_k|^2` on zero-mean loops.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics;

/// Spectral parts of a loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Part {
    Plus,
    Minus,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierLoop {
    n: usize,
    m: usize,
    /// Coefficient of mode `k` occupies `data[(k + m) * 2n .. (k + m + 1) * 2n]`.
    data: Vec<f64>,
}

impl FourierLoop {
    pub fn zeros(n: usize, m: usize) -> Self {
        Self { n, m, data: vec![0.0; (2 * m + 1) * 2 * n] }
    }

    pub fn constant(m: usize, v: &[f64]) -> Self {
        let mut x = Self::zeros(v.len() / 2, m);
        x.coeff_mut(0).copy_from_slice(v);
        x
    }

    pub fn single_mode(m: usize, k: i64, v: &[f64]) -> Self {
        let mut x = Self::zeros(v.len() / 2, m);
        x.coeff_mut(k).copy_from_slice(v);
        x
    }

    /// Half-dimension of phase space.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Mode cutoff.
    pub fn cutoff(&self) -> usize {
        self.m
    }

    fn offset(&self, k: i64) -> usize {
        assert!(k.unsigned_abs() as usize <= self.m, "mode {k} outside cutoff {}", self.m);
        (k + self.m as i64) as usize * 2 * self.n
    }

    pub fn coeff(&self, k: i64) -> &[f64] {
        let o = self.offset(k);
        &self.data[o..o + 2 * self.n]
    }

    pub fn coeff_mut(&mut self, k: i64) -> &mut [f64] {
        let o = self.offset(k);
        let d = 2 * self.n;
        &mut self.data[o..o + d]
    }

    /// Coefficient of mode `k`, or zero outside the cutoff.
    pub fn coeff_or_zero(&self, k: i64) -> Vec<f64> {
        if k.unsigned_abs() as usize <= self.m {
            self.coeff(k).to_vec()
        } else {
            vec![0.0; 2 * self.n]
        }
    }

    pub fn mean(&self) -> &[f64] {
        self.coeff(0)
    }

    pub fn modes(&self) -> impl Iterator<Item = i64> {
        let m = self.m as i64;
        -m..=m
    }

    /// Point value `x(t)`.
    pub fn evaluate(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; 2 * self.n];
        let mut tmp = vec![0.0; 2 * self.n];
        for k in self.modes() {
            tmp.copy_from_slice(self.coeff(k));
            numerics::rotate_in_place(-2.0 * PI * k as f64 * t, &mut tmp);
            for (o, v) in out.iter_mut().zip(&tmp) {
                *o += v;
            }
        }
        out
    }

    /// The loop `x'`.
    pub fn derivative(&self) -> FourierLoop {
        let mut out = Self::zeros(self.n, self.m);
        for k in self.modes() {
            if k == 0 {
                continue;
            }
            let jc = numerics::j0(self.coeff(k));
            for (o, v) in out.coeff_mut(k).iter_mut().zip(jc) {
                *o = -2.0 * PI * k as f64 * v;
            }
        }
        out
    }

    /// The loop `J0 x'`, whose mode `k` coefficient is `2 pi k c_k`.
    pub fn j0_derivative(&self) -> FourierLoop {
        let mut out = Self::zeros(self.n, self.m);
        for k in self.modes() {
            let f = 2.0 * PI * k as f64;
            for (o, v) in out.coeff_mut(k).iter_mut().zip(self.coeff(k)) {
                *o = f * v;
            }
        }
        out
    }

    pub fn project(&self, part: Part) -> FourierLoop {
        let mut out = Self::zeros(self.n, self.m);
        for k in self.modes() {
            let keep = match part {
                Part::Plus => k > 0,
                Part::Minus => k < 0,
                Part::Zero => k == 0,
            };
            if keep {
                out.coeff_mut(k).copy_from_slice(self.coeff(k));
            }
        }
        out
    }

    /// The zero-mean part `x - mean(x)`.
    pub fn zero_mean_part(&self) -> FourierLoop {
        let mut out = self.clone();
        out.coeff_mut(0).iter_mut().for_each(|v| *v = 0.0);
        out
    }

    fn weighted_sum(&self, w: impl Fn(i64) -> f64) -> f64 {
        self.modes().map(|k| w(k) * numerics::dot(self.coeff(k), self.coeff(k))).sum()
    }

    pub fn norm_half_sq(&self) -> f64 {
        self.weighted_sum(|k| if k == 0 { 1.0 } else { 2.0 * PI * k.abs() as f64 })
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.weighted_sum(|_| 1.0)
    }

    /// `int |x'|^2`, the squared `H1` norm on zero-mean loops.
    pub fn h1_norm_sq(&self) -> f64 {
        self.weighted_sum(|k| 4.0 * PI * PI * (k * k) as f64)
    }

    pub fn h1_norm(&self) -> f64 {
        self.h1_norm_sq().sqrt()
    }

    /// `(1/2) int J0 x' . x`, evaluated spectrally.
    pub fn symplectic_quadform(&self) -> f64 {
        self.weighted_sum(|k| PI * k as f64)
    }

    /// `H1` inner product `int x' . y'`.
    pub fn h1_inner(&self, other: &FourierLoop) -> f64 {
        self.modes()
            .map(|k| 4.0 * PI * PI * (k * k) as f64 * numerics::dot(self.coeff(k), other.coeff(k)))
            .sum()
    }

    /// The zero-mean primitive `Pi v` with `(Pi v)' = v`.
    pub fn primitive_zero_mean(&self) -> Result<FourierLoop> {
        let mean = numerics::norm(self.mean());
        if mean > 1e-12 {
            return Err(Error::NonzeroMean { norm: mean });
        }
        let mut out = Self::zeros(self.n, self.m);
        for k in self.modes() {
            if k == 0 {
                continue;
            }
            let jc = numerics::j0(self.coeff(k));
            let f = 1.0 / (2.0 * PI * k as f64);
            for (o, v) in out.coeff_mut(k).iter_mut().zip(jc) {
                *o = f * v;
            }
        }
        Ok(out)
    }

    /// Coefficients of `t -> x(t + theta)`.
    pub fn shift_time(&self, theta: f64) -> FourierLoop {
        let mut out = self.clone();
        for k in self.modes() {
            numerics::rotate_in_place(-2.0 * PI * k as f64 * theta, out.coeff_mut(k));
        }
        out
    }

    /// Coefficients under the reflection `k -> -k`.
    pub fn reflect_modes(&self) -> FourierLoop {
        let mut out = Self::zeros(self.n, self.m);
        for k in self.modes() {
            out.coeff_mut(-k).copy_from_slice(self.coeff(k));
        }
        out
    }

    /// Change the cutoff, padding with zeros or truncating.
    pub fn with_cutoff(&self, m: usize) -> FourierLoop {
        let mut out = Self::zeros(self.n, m);
        let common = m.min(self.m) as i64;
        for k in -common..=common {
            out.coeff_mut(k).copy_from_slice(self.coeff(k));
        }
        out
    }

    pub fn axpy(&mut self, a: f64, other: &FourierLoop) {
        assert_eq!((self.n, self.m), (other.n, other.m));
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += a * y;
        }
    }

    pub fn scaled(&self, a: f64) -> FourierLoop {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= a);
        out
    }

    pub fn add(&self, other: &FourierLoop) -> FourierLoop {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    pub fn sub(&self, other: &FourierLoop) -> FourierLoop {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    pub fn raw(&self) -> &[f64] {
        &self.data
    }

    /// Largest mode with a coefficient above `tol` in absolute value.
    pub fn support_max(&self, tol: f64) -> Option<i64> {
        self.modes()
            .filter(|&k| self.coeff(k).iter().any(|v| v.abs() > tol))
            .map(|k| k.abs())
            .max()
    }

    /// Rows `(k, c_k...)` for the CSV loop table.
    pub fn table_rows(&self) -> Vec<Vec<f64>> {
        self.modes()
            .map(|k| {
                let mut row = vec![k as f64];
                row.extend_from_slice(self.coeff(k));
                row
            })
            .collect()
    }
}

/// Uniform quadrature nodes `t_j = j / Q` with cached FFT plans.
///
/// Node values are stored flat: node `j` occupies `[j * 2n, (j + 1) * 2n)`.
#[derive(Clone)]
pub struct NodeGrid {
    q: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for NodeGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NodeGrid").field("q", &self.q).finish()
    }
}

impl NodeGrid {
    pub fn new(q: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self { q, forward: planner.plan_fft_forward(q), inverse: planner.plan_fft_inverse(q) }
    }

    pub fn len(&self) -> usize {
        self.q
    }

    pub fn is_empty(&self) -> bool {
        self.q == 0
    }

    pub fn time(&self, j: usize) -> f64 {
        j as f64 / self.q as f64
    }

    /// Values of `x` at all nodes. Requires `Q > 2M`.
    pub fn values(&self, x: &FourierLoop) -> Vec<f64> {
        let (n, m, q) = (x.n, x.m as i64, self.q);
        assert!(q as i64 > 2 * m, "quadrature Q = {q} must exceed 2M = {}", 2 * m);
        let mut out = vec![0.0; q * 2 * n];
        let mut buf = vec![Complex64::new(0.0, 0.0); q];
        for plane in 0..n {
            buf.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
            for k in -m..=m {
                let c = x.coeff(k);
                buf[k.rem_euclid(q as i64) as usize] = Complex64::new(c[2 * plane], c[2 * plane + 1]);
            }
            self.forward.process(&mut buf);
            for (j, b) in buf.iter().enumerate() {
                out[j * 2 * n + 2 * plane] = b.re;
                out[j * 2 * n + 2 * plane + 1] = b.im;
            }
        }
        out
    }

    /// Discrete Fourier coefficients up to cutoff `m` of node values.
    pub fn coefficients(&self, values: &[f64], n: usize, m: usize) -> FourierLoop {
        let q = self.q;
        assert_eq!(values.len(), q * 2 * n);
        let mut out = FourierLoop::zeros(n, m);
        let mut buf = vec![Complex64::new(0.0, 0.0); q];
        let scale = 1.0 / q as f64;
        for plane in 0..n {
            for (j, b) in buf.iter_mut().enumerate() {
                *b = Complex64::new(values[j * 2 * n + 2 * plane], values[j * 2 * n + 2 * plane + 1]);
            }
            self.inverse.process(&mut buf);
            for k in -(m as i64)..=(m as i64) {
                let b = buf[k.rem_euclid(q as i64) as usize] * scale;
                let c = out.coeff_mut(k);
                c[2 * plane] = b.re;
                c[2 * plane + 1] = b.im;
            }
        }
        out
    }

    /// Quadrature mean of a scalar sequence over the nodes.
    pub fn mean(&self, values: &[f64]) -> f64 {
        values.iter().sum::<f64>() / self.q as f64
    }

    /// Quadrature `L2` norm of flat node values.
    pub fn l2_norm(&self, values: &[f64]) -> f64 {
        (values.iter().map(|v| v * v).sum::<f64>() / self.q as f64).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_mode_evaluates_to_coefficient_at_zero() {
        let x = FourierLoop::single_mode(3, 1, &[0.3, -0.7]);
        let v = x.evaluate(0.0);
        assert!((v[0] - 0.3).abs() < 1e-15 && (v[1] + 0.7).abs() < 1e-15);
        let d = x.derivative();
        let expect = numerics::j0(&[0.3, -0.7]);
        assert!((d.coeff(1)[0] + 2.0 * PI * expect[0]).abs() < 1e-14);
        assert!((d.coeff(1)[1] + 2.0 * PI * expect[1]).abs() < 1e-14);
    }

    #[test]
    fn j0_derivative_of_circle_is_two_pi_times_loop() {
        let x = FourierLoop::single_mode(2, 1, &[1.0, 0.5]);
        for &t in &[0.0, 0.13, 0.71] {
            let h = 1e-5;
            let xp = x.evaluate(t + h);
            let xm = x.evaluate(t - h);
            let dx: Vec<f64> = xp.iter().zip(&xm).map(|(a, b)| (a - b) / (2.0 * h)).collect();
            let jdx = numerics::j0(&dx);
            let xt = x.evaluate(t);
            for i in 0..2 {
                assert!((jdx[i] - 2.0 * PI * xt[i]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn node_grid_round_trip() {
        let mut x = FourierLoop::zeros(2, 4);
        let mut s = 0.1;
        for k in x.modes().collect::<Vec<_>>() {
            for v in x.coeff_mut(k) {
                s = (s * 7.3 + 0.17) % 1.0;
                *v = s - 0.5;
            }
        }
        let grid = NodeGrid::new(16);
        let vals = grid.values(&x);
        for j in 0..16 {
            let direct = x.evaluate(grid.time(j));
            for i in 0..4 {
                assert!((vals[j * 4 + i] - direct[i]).abs() < 1e-13);
            }
        }
        let back = grid.coefficients(&vals, 2, 4);
        for (a, b) in back.raw().iter().zip(x.raw()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn primitive_inverts_derivative() {
        let v = FourierLoop::single_mode(2, 1, &[0.0, 1.0]);
        let p = v.primitive_zero_mean().unwrap();
        let expect = numerics::j0(&[0.0, 1.0]);
        assert!((p.coeff(1)[0] - expect[0] / (2.0 * PI)).abs() < 1e-15);
        let back = p.derivative();
        for (a, b) in back.raw().iter().zip(v.raw()) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(matches!(
            FourierLoop::constant(2, &[1.0, 0.0]).primitive_zero_mean(),
            Err(Error::NonzeroMean { .. })
        ));
    }

    #[test]
    fn quadform_of_circle() {
        let x = FourierLoop::single_mode(3, 1, &[0.6, 0.8]);
        assert!((x.symplectic_quadform() - PI).abs() < 1e-14);
        assert!((x.reflect_modes().symplectic_quadform() + PI).abs() < 1e-14);
        assert_eq!(FourierLoop::constant(3, &[1.0, 2.0]).symplectic_quadform(), 0.0);
    }
}
