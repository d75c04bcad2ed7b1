use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::gauge::GaugeDomain;
use super::{Conjugate, HamiltonianFn, HamiltonianModel};
use crate::numerics;

/// `(1/2) (z - c)^T A(t) (z - c)` with
/// `A(t) = A0 + A1 cos(2 pi t) + A2 sin(2 pi t)`.
#[derive(Debug, Clone)]
pub struct QuadraticHamiltonian {
    pub a0: DMatrix<f64>,
    pub a1: Option<DMatrix<f64>>,
    pub a2: Option<DMatrix<f64>>,
    pub center: DVector<f64>,
}

impl QuadraticHamiltonian {
    pub fn new(a0: DMatrix<f64>) -> Self {
        let d = a0.nrows();
        Self { a0, a1: None, a2: None, center: DVector::zeros(d) }
    }

    /// `eta |z|^2` on `R^{2n}`.
    pub fn scalar(n: usize, eta: f64) -> Self {
        Self::new(DMatrix::identity(2 * n, 2 * n) * (2.0 * eta))
    }

    pub fn with_time_dependence(mut self, a1: DMatrix<f64>, a2: DMatrix<f64>) -> Self {
        self.a1 = Some(a1);
        self.a2 = Some(a2);
        self
    }

    pub fn with_center(mut self, c: DVector<f64>) -> Self {
        self.center = c;
        self
    }

    pub fn matrix(&self, t: f64) -> DMatrix<f64> {
        let mut a = self.a0.clone();
        let (s, c) = (2.0 * PI * t).sin_cos();
        if let Some(a1) = &self.a1 {
            a += c * a1;
        }
        if let Some(a2) = &self.a2 {
            a += s * a2;
        }
        a
    }
}

impl HamiltonianFn for QuadraticHamiltonian {
    fn n(&self) -> usize {
        self.a0.nrows() / 2
    }

    fn value(&self, t: f64, z: &[f64]) -> f64 {
        let d = DVector::from_column_slice(z) - &self.center;
        0.5 * d.dot(&(self.matrix(t) * &d))
    }

    fn gradient(&self, t: f64, z: &[f64]) -> DVector<f64> {
        self.matrix(t) * (DVector::from_column_slice(z) - &self.center)
    }

    fn hessian(&self, t: f64, _z: &[f64]) -> DMatrix<f64> {
        self.matrix(t)
    }

    fn time_dependent(&self) -> bool {
        self.a1.is_some() || self.a2.is_some()
    }

    fn analytic_bounds(&self) -> Option<(f64, f64)> {
        let samples = if self.time_dependent() { 512 } else { 1 };
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for j in 0..samples {
            let ev = numerics::symmetric_eigenvalues(&self.matrix(j as f64 / samples as f64));
            lo = lo.min(ev[0]);
            hi = hi.max(ev[ev.len() - 1]);
        }
        if self.time_dependent() {
            // The eigenvalue curves are smooth in t; a small margin covers
            // the gaps between samples.
            lo *= 0.999;
            hi *= 1.001;
        }
        Some((lo, hi))
    }

    fn exact_conjugate(&self, t: f64, w: &[f64]) -> Option<Conjugate> {
        let a = self.matrix(t);
        let chol = a.clone().cholesky()?;
        let wv = DVector::from_column_slice(w);
        let y = chol.solve(&wv) + &self.center;
        let value = wv.dot(&y) - self.value(t, y.as_slice());
        Some(Conjugate { value, argmax: y, hessian: chol.inverse() })
    }

    fn describe(&self) -> String {
        if self.time_dependent() {
            format!("time-dependent quadratic (n={})", self.n())
        } else {
            format!("quadratic diag={:?}", self.a0.diagonal().as_slice())
        }
    }
}

/// `eps * exp(-|z - c|^2 / sigma^2) * (1 + tau cos(2 pi t))`, an additive
/// perturbation term, not convex on its own.
#[derive(Debug, Clone)]
pub struct GaussianBump {
    pub eps: f64,
    pub center: DVector<f64>,
    pub sigma: f64,
    pub tau: f64,
}

impl HamiltonianFn for GaussianBump {
    fn n(&self) -> usize {
        self.center.len() / 2
    }

    fn value(&self, t: f64, z: &[f64]) -> f64 {
        let d = DVector::from_column_slice(z) - &self.center;
        self.eps * (-d.norm_squared() / (self.sigma * self.sigma)).exp() * (1.0 + self.tau * (2.0 * PI * t).cos())
    }

    fn gradient(&self, t: f64, z: &[f64]) -> DVector<f64> {
        let d = DVector::from_column_slice(z) - &self.center;
        let s2 = self.sigma * self.sigma;
        let v = self.value(t, z);
        (-2.0 * v / s2) * d
    }

    fn hessian(&self, t: f64, z: &[f64]) -> DMatrix<f64> {
        let d = DVector::from_column_slice(z) - &self.center;
        let s2 = self.sigma * self.sigma;
        let v = self.value(t, z);
        let k = d.len();
        (4.0 * v / (s2 * s2)) * &d * d.transpose() - (2.0 * v / s2) * DMatrix::identity(k, k)
    }

    fn time_dependent(&self) -> bool {
        self.tau != 0.0
    }

    fn describe(&self) -> String {
        format!("gaussian bump eps={} sigma={} tau={}", self.eps, self.sigma, self.tau)
    }
}

/// Symmetry-breaking term `eps * beta(G(z)) * (a(t) . z) / sqrt(G(z))` with
/// `a(t) = e^{-2 pi J0 t} a0`, `a0` a unit vector in the first plane at angle
/// `theta0`, and `beta(G) = (1 - ((G - 1)/w)^2)^3` supported on `|G - 1| < w`.
///
/// Along the family of circles `e^{-2 pi J0 t} e^{theta J0} v` on the unit
/// gauge level the term equals `eps cos(theta - theta0)`, and its gradient
/// vanishes on the two circles `theta = theta0` and `theta = theta0 + pi`.
#[derive(Debug, Clone)]
pub struct RotatingBump {
    pub domain: GaugeDomain,
    pub eps: f64,
    pub theta0: f64,
    pub width: f64,
}

impl RotatingBump {
    fn direction(&self, t: f64) -> DVector<f64> {
        let d = 2 * self.domain.n();
        let mut a = vec![0.0; d];
        a[0] = self.theta0.cos();
        a[1] = self.theta0.sin();
        numerics::rotate_in_place(-2.0 * PI * t, &mut a);
        DVector::from_vec(a)
    }

    fn beta(&self, g: f64) -> (f64, f64, f64) {
        let w = self.width;
        let x = (g - 1.0) / w;
        if x.abs() >= 1.0 {
            return (0.0, 0.0, 0.0);
        }
        let s = 1.0 - x * x;
        (s * s * s, -6.0 * x * s * s / w, (-6.0 * s * s + 24.0 * x * x * s) / (w * w))
    }

    fn all(&self, t: f64, z: &[f64], order: usize) -> (f64, DVector<f64>, DMatrix<f64>) {
        let d = z.len();
        let (g, gg, gh) = self.domain.gauge_all(z, order);
        let (b, db, ddb) = self.beta(g);
        if b == 0.0 && db == 0.0 {
            return (0.0, DVector::zeros(d), DMatrix::zeros(d, d));
        }
        let a = self.direction(t);
        let zv = DVector::from_column_slice(z);
        let l = a.dot(&zv);
        let rs = g.sqrt();
        let u = l / rs;
        let value = self.eps * b * u;
        if order == 0 {
            return (value, DVector::zeros(d), DMatrix::zeros(d, d));
        }
        let du = &a / rs - (0.5 * l / (g * rs)) * &gg;
        let grad = self.eps * (db * u * &gg + b * &du);
        if order == 1 {
            return (value, grad, DMatrix::zeros(d, d));
        }
        let ag = &a * gg.transpose();
        let ddu = -(0.5 / (g * rs)) * (&ag + ag.transpose()) + (0.75 * l / (g * g * rs)) * &gg * gg.transpose()
            - (0.5 * l / (g * rs)) * &gh;
        let gdu = &gg * du.transpose();
        let hess = self.eps * (ddb * u * &gg * gg.transpose() + db * (&gdu + gdu.transpose()) + db * u * &gh + b * ddu);
        (value, grad, hess)
    }
}

impl HamiltonianFn for RotatingBump {
    fn n(&self) -> usize {
        self.domain.n()
    }

    fn value(&self, t: f64, z: &[f64]) -> f64 {
        self.all(t, z, 0).0
    }

    fn gradient(&self, t: f64, z: &[f64]) -> DVector<f64> {
        self.all(t, z, 1).1
    }

    fn hessian(&self, t: f64, z: &[f64]) -> DMatrix<f64> {
        self.all(t, z, 2).2
    }

    fn time_dependent(&self) -> bool {
        true
    }

    fn describe(&self) -> String {
        format!("rotating bump eps={} theta0={} width={}", self.eps, self.theta0, self.width)
    }
}

/// Sum of oracles; convexity bounds are sampled.
#[derive(Clone)]
pub struct SumHamiltonian {
    pub terms: Vec<Arc<dyn HamiltonianFn>>,
    pub scale: f64,
}

impl HamiltonianFn for SumHamiltonian {
    fn n(&self) -> usize {
        self.terms[0].n()
    }

    fn value(&self, t: f64, z: &[f64]) -> f64 {
        self.terms.iter().map(|h| h.value(t, z)).sum()
    }

    fn gradient(&self, t: f64, z: &[f64]) -> DVector<f64> {
        let mut g = self.terms[0].gradient(t, z);
        for h in &self.terms[1..] {
            g += h.gradient(t, z);
        }
        g
    }

    fn hessian(&self, t: f64, z: &[f64]) -> DMatrix<f64> {
        let mut m = self.terms[0].hessian(t, z);
        for h in &self.terms[1..] {
            m += h.hessian(t, z);
        }
        m
    }

    fn time_dependent(&self) -> bool {
        self.terms.iter().any(|h| h.time_dependent())
    }

    fn sample_scale(&self) -> f64 {
        self.scale
    }

    fn describe(&self) -> String {
        self.terms.iter().map(|h| h.describe()).collect::<Vec<_>>().join(" + ")
    }
}

/// `lambda^2 H(t, z / lambda)`, the Hamiltonian adapted to the domain
/// `lambda C` when `H` is adapted to `C`.
#[derive(Clone)]
pub struct ScaledHamiltonian {
    pub base: HamiltonianModel,
    pub lambda: f64,
}

impl ScaledHamiltonian {
    fn inner(&self, z: &[f64]) -> Vec<f64> {
        z.iter().map(|v| v / self.lambda).collect()
    }
}

impl HamiltonianFn for ScaledHamiltonian {
    fn n(&self) -> usize {
        self.base.n()
    }

    fn value(&self, t: f64, z: &[f64]) -> f64 {
        self.lambda * self.lambda * self.base.eval(t, &self.inner(z))
    }

    fn gradient(&self, t: f64, z: &[f64]) -> DVector<f64> {
        self.lambda * self.base.grad(t, &self.inner(z))
    }

    fn hessian(&self, t: f64, z: &[f64]) -> DMatrix<f64> {
        self.base.hess(t, &self.inner(z))
    }

    fn time_dependent(&self) -> bool {
        self.base.time_dependent
    }

    fn analytic_bounds(&self) -> Option<(f64, f64)> {
        Some((self.base.h_lo, self.base.h_hi))
    }

    fn exact_conjugate(&self, t: f64, w: &[f64]) -> Option<Conjugate> {
        let wi: Vec<f64> = w.iter().map(|v| v / self.lambda).collect();
        let c = self.base.oracle().exact_conjugate(t, &wi)?;
        Some(Conjugate { value: self.lambda * self.lambda * c.value, argmax: self.lambda * c.argmax, hessian: c.hessian })
    }

    fn sample_scale(&self) -> f64 {
        self.lambda * self.base.oracle().sample_scale()
    }

    fn describe(&self) -> String {
        format!("scaled({}) [{}]", self.lambda, self.base.describe())
    }
}

/// `H(t, z - b)`.
#[derive(Clone)]
pub struct TranslatedHamiltonian {
    pub base: HamiltonianModel,
    pub shift: DVector<f64>,
}

impl TranslatedHamiltonian {
    fn inner(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(self.shift.iter()).map(|(a, b)| a - b).collect()
    }
}

impl HamiltonianFn for TranslatedHamiltonian {
    fn n(&self) -> usize {
        self.base.n()
    }

    fn value(&self, t: f64, z: &[f64]) -> f64 {
        self.base.eval(t, &self.inner(z))
    }

    fn gradient(&self, t: f64, z: &[f64]) -> DVector<f64> {
        self.base.grad(t, &self.inner(z))
    }

    fn hessian(&self, t: f64, z: &[f64]) -> DMatrix<f64> {
        self.base.hess(t, &self.inner(z))
    }

    fn time_dependent(&self) -> bool {
        self.base.time_dependent
    }

    fn analytic_bounds(&self) -> Option<(f64, f64)> {
        Some((self.base.h_lo, self.base.h_hi))
    }

    fn exact_conjugate(&self, t: f64, w: &[f64]) -> Option<Conjugate> {
        let c = self.base.oracle().exact_conjugate(t, w)?;
        let wv = DVector::from_column_slice(w);
        Some(Conjugate { value: c.value + wv.dot(&self.shift), argmax: c.argmax + &self.shift, hessian: c.hessian })
    }

    fn describe(&self) -> String {
        format!("translated({:?}) [{}]", self.shift.as_slice(), self.base.describe())
    }
}

/// Toy model defined through its conjugate
/// `H*_t(w) = |w|^2/(4 eta) + gamma (a(t) . w)^2 + kappa rho(|w|^2)` with
/// `a(t) = e^{-2 pi J0 t} e_1` and `rho(s) = s - ln(1 + s)`.
///
/// On head loops made of mode 1 alone the conjugate gradient stays in mode
/// 1, so the tail map vanishes and the reduced functional is the explicit
/// function of the mode-1 coefficient `c`
/// `(pi^2/eta - pi)|c|^2 + 4 pi^2 gamma c_q^2 + kappa rho(4 pi^2 |c|^2)`,
/// a double well when `pi < eta`, `4 pi^2 gamma > pi - pi^2/eta` and
/// `4 pi^2 kappa > pi - pi^2/eta`.
#[derive(Debug, Clone)]
pub struct DoubleWellToy {
    pub n: usize,
    pub eta: f64,
    pub gamma: f64,
    pub kappa: f64,
}

impl DoubleWellToy {
    fn direction(&self, t: f64) -> DVector<f64> {
        let mut a = vec![0.0; 2 * self.n];
        a[0] = 1.0;
        numerics::rotate_in_place(-2.0 * PI * t, &mut a);
        DVector::from_vec(a)
    }

    fn dual(&self, t: f64, w: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
        let d = w.len();
        let a = self.direction(t);
        let s = w.norm_squared();
        let aw = a.dot(w);
        let rho = s - s.ln_1p();
        let drho = s / (1.0 + s);
        let ddrho = 1.0 / ((1.0 + s) * (1.0 + s));
        let v = s / (4.0 * self.eta) + self.gamma * aw * aw + self.kappa * rho;
        let g = w / (2.0 * self.eta) + (2.0 * self.gamma * aw) * &a + (2.0 * self.kappa * drho) * w;
        let h = DMatrix::identity(d, d) * (1.0 / (2.0 * self.eta) + 2.0 * self.kappa * drho)
            + (2.0 * self.gamma) * &a * a.transpose()
            + (4.0 * self.kappa * ddrho) * w * w.transpose();
        (v, g, h)
    }

    /// Value, gradient and Hessian of the primal `H` at `z` via Newton on
    /// `grad H*(w) = z`.
    fn primal(&self, t: f64, z: &[f64]) -> (f64, DVector<f64>, DMatrix<f64>) {
        let zv = DVector::from_column_slice(z);
        let upper = 1.0 / (2.0 * self.eta) + 2.0 * self.gamma + 2.5 * self.kappa;
        let mut w = &zv / upper;
        for _ in 0..100 {
            let (_, g, h) = self.dual(t, &w);
            let r = &g - &zv;
            if r.norm() < 1e-15 * (1.0 + zv.norm()) {
                break;
            }
            let step = h.cholesky().expect("toy conjugate is strongly convex").solve(&(-&r));
            let obj = |w: &DVector<f64>| self.dual(t, w).0 - zv.dot(w);
            let f0 = obj(&w);
            let mut alpha = 1.0;
            while alpha > 1e-12 && obj(&(&w + alpha * &step)) > f0 + 1e-14 * (1.0 + f0.abs()) {
                alpha *= 0.5;
            }
            w += alpha * step;
        }
        let (v, _, h) = self.dual(t, &w);
        let hinv = h.cholesky().expect("toy conjugate is strongly convex").inverse();
        (zv.dot(&w) - v, w, hinv)
    }

    /// The explicit reduced functional on the mode-1 coefficient `c`.
    pub fn reduced_formula(&self, c: [f64; 2]) -> f64 {
        let r2 = c[0] * c[0] + c[1] * c[1];
        let s = 4.0 * PI * PI * r2;
        (PI * PI / self.eta - PI) * r2 + 4.0 * PI * PI * self.gamma * c[0] * c[0] + self.kappa * (s - s.ln_1p())
    }
}

impl HamiltonianFn for DoubleWellToy {
    fn n(&self) -> usize {
        self.n
    }

    fn value(&self, t: f64, z: &[f64]) -> f64 {
        self.primal(t, z).0
    }

    fn gradient(&self, t: f64, z: &[f64]) -> DVector<f64> {
        self.primal(t, z).1
    }

    fn hessian(&self, t: f64, z: &[f64]) -> DMatrix<f64> {
        self.primal(t, z).2
    }

    fn time_dependent(&self) -> bool {
        true
    }

    fn analytic_bounds(&self) -> Option<(f64, f64)> {
        Some((1.0 / (1.0 / (2.0 * self.eta) + 2.0 * self.gamma + 2.5 * self.kappa), 2.0 * self.eta))
    }

    fn exact_conjugate(&self, t: f64, w: &[f64]) -> Option<Conjugate> {
        let wv = DVector::from_column_slice(w);
        let (v, g, h) = self.dual(t, &wv);
        Some(Conjugate { value: v, argmax: g, hessian: h })
    }

    fn describe(&self) -> String {
        format!("double-well toy eta={} gamma={} kappa={}", self.eta, self.gamma, self.kappa)
    }
}
