//! The direct action, Clarke's dual action, their derivatives, the duality
//! gap and the lift of dual critical points to periodic orbits.
//!
//! All dual-side quantities are discrete: the functional is
//! `Psi(x) = -pi sum k |c_k|^2 + (1/Q) sum_j H*_{t_j}(w_j)` with
//! `w_j = (J0 x')(t_j)`, and every gradient and Hessian below is the exact
//! derivative of that discrete expression.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::convex_model::HamiltonianModel;
use crate::error::{Error, Result};
use crate::loop_fourier::{FourierLoop, NodeGrid, Part};
use crate::numerics;

/// Value, gradient and gradient norm of a functional at a loop.
#[derive(Debug, Clone, Serialize)]
pub struct ActionEvaluation {
    pub value: f64,
    /// Gradient in the `H1` metric `(x, y) = int x' . y'`.
    pub gradient: FourierLoop,
    /// `H1` norm of the gradient.
    pub residual_norm: f64,
}

/// Node data of the dual functional at one loop.
#[derive(Debug, Clone)]
pub struct DualState {
    pub value: f64,
    /// `w_j = J0 x'(t_j)`, flat.
    pub w: Vec<f64>,
    /// `y_j = grad H*_{t_j}(w_j)`, flat.
    pub argmax: Vec<f64>,
    /// `Hess H*_{t_j}(w_j)` per node, present when requested.
    pub conj_hessians: Vec<DMatrix<f64>>,
    /// Discrete Fourier coefficients of `y`.
    pub argmax_coeffs: FourierLoop,
}

/// An ordered set of nonzero modes with helpers to move between loops and
/// flat coordinate vectors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModeSet {
    pub n: usize,
    pub modes: Vec<i64>,
}

impl ModeSet {
    pub fn new(n: usize, modes: Vec<i64>) -> Self {
        Self { n, modes }
    }

    /// All nonzero modes `1 <= |k| <= m`.
    pub fn zero_mean(n: usize, m: usize) -> Self {
        let m = m as i64;
        Self::new(n, (-m..=m).filter(|&k| k != 0).collect())
    }

    pub fn dim(&self) -> usize {
        2 * self.n * self.modes.len()
    }

    pub fn pack(&self, x: &FourierLoop) -> DVector<f64> {
        let mut v = DVector::zeros(self.dim());
        for (i, &k) in self.modes.iter().enumerate() {
            v.rows_mut(2 * self.n * i, 2 * self.n).copy_from_slice(&x.coeff_or_zero(k));
        }
        v
    }

    /// Add the coordinates `v` onto the modes of `x`.
    pub fn add_into(&self, v: &DVector<f64>, x: &mut FourierLoop) {
        let d = 2 * self.n;
        for (i, &k) in self.modes.iter().enumerate() {
            for (c, a) in x.coeff_mut(k).iter_mut().zip(v.rows(d * i, d).iter()) {
                *c += a;
            }
        }
    }

    pub fn unpack(&self, v: &DVector<f64>, m: usize) -> FourierLoop {
        let mut x = FourierLoop::zeros(self.n, m);
        self.add_into(v, &mut x);
        x
    }

    /// Diagonal of the `H1` Gram matrix, `4 pi^2 k^2` per coordinate.
    pub fn h1_weights(&self) -> DVector<f64> {
        let d = 2 * self.n;
        DVector::from_iterator(self.dim(), self.modes.iter().flat_map(|&k| std::iter::repeat_n(4.0 * PI * PI * (k * k) as f64, d)))
    }

    /// `2 pi k` per coordinate.
    pub fn frequencies(&self) -> DVector<f64> {
        let d = 2 * self.n;
        DVector::from_iterator(self.dim(), self.modes.iter().flat_map(|&k| std::iter::repeat_n(2.0 * PI * k as f64, d)))
    }
}

/// A Hamiltonian together with the quadrature used for every time
/// integral.
#[derive(Debug, Clone)]
pub struct ActionContext {
    pub h: HamiltonianModel,
    pub grid: NodeGrid,
}

/// Result of lifting a dual critical point to a periodic orbit.
#[derive(Debug, Clone, Serialize)]
pub struct Lift {
    pub v0: Vec<f64>,
    pub orbit: FourierLoop,
    /// `||x' - X_H(x)||_{L2}` of the lifted loop at the nodes.
    pub orbit_residual: f64,
    /// `L2` deviation of `grad H*(J0 x') - x` from its mean.
    pub deviation: f64,
    pub dual_gradient_norm: f64,
}

fn check_zero_mean(x: &FourierLoop) -> Result<()> {
    let m = numerics::norm(x.mean());
    if m > 1e-12 {
        return Err(Error::NonzeroMean { norm: m });
    }
    Ok(())
}

impl ActionContext {
    pub fn new(h: HamiltonianModel, q: usize) -> Self {
        Self { h, grid: NodeGrid::new(q) }
    }

    pub fn n(&self) -> usize {
        self.h.n()
    }

    pub fn q(&self) -> usize {
        self.grid.len()
    }

    fn check_cutoff(&self, x: &FourierLoop) -> Result<()> {
        if self.q() <= 2 * x.cutoff() {
            return Err(Error::InvalidInput(format!("quadrature Q = {} must exceed 2M = {}", self.q(), 2 * x.cutoff())));
        }
        Ok(())
    }

    /// `Phi_H(x) = (1/2) int J0 x' . x - int H_t(x(t)) dt`.
    pub fn direct_action(&self, x: &FourierLoop) -> Result<f64> {
        self.check_cutoff(x)?;
        let d = 2 * self.n();
        let vals = self.grid.values(x);
        let mean_h = (0..self.q()).map(|j| self.h.eval(self.grid.time(j), &vals[j * d..(j + 1) * d])).sum::<f64>() / self.q() as f64;
        Ok(x.symplectic_quadform() - mean_h)
    }

    /// Node data of the dual functional; `warm` is a flat set of previous
    /// maximizers to start the pointwise conjugate solves from.
    pub fn dual_state(&self, x: &FourierLoop, hessians: bool, warm: Option<&[f64]>) -> Result<DualState> {
        check_zero_mean(x)?;
        self.check_cutoff(x)?;
        let d = 2 * self.n();
        let q = self.q();
        let w = self.grid.values(&x.j0_derivative());
        let mut argmax = vec![0.0; q * d];
        let mut conj_hessians = Vec::with_capacity(if hessians { q } else { 0 });
        let mut total = 0.0;
        for j in 0..q {
            let t = self.grid.time(j);
            let wj = &w[j * d..(j + 1) * d];
            let start: Option<Vec<f64>> = match warm {
                Some(wm) => Some(wm[j * d..(j + 1) * d].to_vec()),
                None if j > 0 => Some(argmax[(j - 1) * d..j * d].to_vec()),
                None => None,
            };
            let c = match self.h.conjugate(t, wj, start.as_deref()) {
                Ok(c) => c,
                Err(_) if start.is_some() => self.h.conjugate(t, wj, None)?,
                Err(e) => return Err(e),
            };
            total += c.value;
            argmax[j * d..(j + 1) * d].copy_from_slice(c.argmax.as_slice());
            if hessians {
                conj_hessians.push(c.hessian);
            }
        }
        let value = -x.symplectic_quadform() + total / q as f64;
        let argmax_coeffs = self.grid.coefficients(&argmax, self.n(), x.cutoff());
        Ok(DualState { value, w, argmax, conj_hessians, argmax_coeffs })
    }

    /// `Psi_{H*}(x) = -(1/2) int J0 x' . x + int H*_t(J0 x'(t)) dt`.
    pub fn dual_action(&self, x: &FourierLoop) -> Result<f64> {
        Ok(self.dual_state(x, false, None).map_err(|e| e.at("action_functionals", "dual_action"))?.value)
    }

    /// Partial derivatives `dPsi/dc_k = 2 pi k (yhat_k - c_k)` as a loop.
    pub fn euclidean_gradient(x: &FourierLoop, state: &DualState) -> FourierLoop {
        let mut g = FourierLoop::zeros(x.n(), x.cutoff());
        for k in x.modes() {
            if k == 0 {
                continue;
            }
            let f = 2.0 * PI * k as f64;
            let (y, c) = (state.argmax_coeffs.coeff(k), x.coeff(k));
            for (i, o) in g.coeff_mut(k).iter_mut().enumerate() {
                *o = f * (y[i] - c[i]);
            }
        }
        g
    }

    /// `H1` gradient `(yhat_k - c_k) / (2 pi k)` from node data.
    pub fn h1_gradient(x: &FourierLoop, state: &DualState) -> FourierLoop {
        let mut g = FourierLoop::zeros(x.n(), x.cutoff());
        for k in x.modes() {
            if k == 0 {
                continue;
            }
            let f = 1.0 / (2.0 * PI * k as f64);
            let (y, c) = (state.argmax_coeffs.coeff(k), x.coeff(k));
            for (i, o) in g.coeff_mut(k).iter_mut().enumerate() {
                *o = f * (y[i] - c[i]);
            }
        }
        g
    }

    /// Value and `H1` gradient `Pi(J0 x - J0 grad H*(J0 x'))` of the dual
    /// functional.
    pub fn dual_gradient(&self, x: &FourierLoop) -> Result<ActionEvaluation> {
        let state = self.dual_state(x, false, None).map_err(|e| e.at("action_functionals", "dual_gradient"))?;
        let gradient = Self::h1_gradient(x, &state);
        let residual_norm = gradient.h1_norm();
        Ok(ActionEvaluation { value: state.value, gradient, residual_norm })
    }

    /// Euclidean Hessian of the dual functional in the coordinates of
    /// `modes`, from a state computed with Hessians.
    pub fn dual_hessian_matrix(&self, state: &DualState, modes: &ModeSet) -> DMatrix<f64> {
        let d = 2 * self.n();
        let q = self.q();
        let dim = modes.dim();
        let mut b = DMatrix::zeros(q * d, dim);
        for j in 0..q {
            let t = self.grid.time(j);
            for (i, &k) in modes.modes.iter().enumerate() {
                let f = 2.0 * PI * k as f64;
                let r = numerics::rotation_matrix(self.n(), -f * t) * f;
                b.view_mut((j * d, i * d), (d, d)).copy_from(&r);
            }
        }
        let mut sb = DMatrix::zeros(q * d, dim);
        for j in 0..q {
            let block = &state.conj_hessians[j] * b.rows(j * d, d);
            sb.rows_mut(j * d, d).copy_from(&block);
        }
        let mut hess = b.transpose() * sb / q as f64;
        let freq = modes.frequencies();
        for i in 0..dim {
            hess[(i, i)] -= freq[i];
        }
        0.5 * (&hess + hess.transpose())
    }

    /// `d^2 Psi(x)[u, v] = -int J0 u' . v + int Hess H*_t(J0 x') J0 u' . J0 v'`.
    pub fn dual_hessian_bilinear(&self, x: &FourierLoop, u: &FourierLoop, v: &FourierLoop) -> Result<f64> {
        let op = |e: Error| e.at("action_functionals", "dual_hessian_bilinear");
        check_zero_mean(u).map_err(op)?;
        check_zero_mean(v).map_err(op)?;
        let state = self.dual_state(x, true, None).map_err(op)?;
        Ok(self.bilinear_from_state(&state, u, v))
    }

    fn bilinear_from_state(&self, state: &DualState, u: &FourierLoop, v: &FourierLoop) -> f64 {
        let d = 2 * self.n();
        let wu = self.grid.values(&u.j0_derivative());
        let wv = self.grid.values(&v.j0_derivative());
        let mut quad = 0.0;
        for j in 0..self.q() {
            let a = DVector::from_column_slice(&wu[j * d..(j + 1) * d]);
            let b = DVector::from_column_slice(&wv[j * d..(j + 1) * d]);
            quad += b.dot(&(&state.conj_hessians[j] * a));
        }
        let cross: f64 = u.modes().map(|k| 2.0 * PI * k as f64 * numerics::dot(u.coeff(k), v.coeff(k))).sum();
        -cross + quad / self.q() as f64
    }

    /// `H1` representative of `d^2 Psi(x)[u, .]`.
    pub fn dual_hessian_apply(&self, x: &FourierLoop, u: &FourierLoop) -> Result<FourierLoop> {
        let op = |e: Error| e.at("action_functionals", "dual_hessian_apply");
        check_zero_mean(u).map_err(op)?;
        let state = self.dual_state(x, true, None).map_err(op)?;
        Ok(self.hessian_apply_from_state(&state, u))
    }

    pub fn hessian_apply_from_state(&self, state: &DualState, u: &FourierLoop) -> FourierLoop {
        let d = 2 * self.n();
        let wu = self.grid.values(&u.j0_derivative());
        let mut z = vec![0.0; wu.len()];
        for j in 0..self.q() {
            let a = DVector::from_column_slice(&wu[j * d..(j + 1) * d]);
            z[j * d..(j + 1) * d].copy_from_slice((&state.conj_hessians[j] * a).as_slice());
        }
        let zc = self.grid.coefficients(&z, self.n(), u.cutoff());
        let mut out = FourierLoop::zeros(u.n(), u.cutoff());
        for k in u.modes() {
            if k == 0 {
                continue;
            }
            let f = 2.0 * PI * k as f64;
            let (zk, uk) = (zc.coeff(k), u.coeff(k));
            for (i, o) in out.coeff_mut(k).iter_mut().enumerate() {
                *o = (f * zk[i] - f * uk[i]) / (f * f);
            }
        }
        out
    }

    /// `Psi(pi(x)) - (1/2) ||P^- y||_{1/2}^2 - Phi(x + y)` for `y` in
    /// `R^{2n} + H^-`.
    pub fn duality_gap(&self, x: &FourierLoop, y: &FourierLoop) -> Result<f64> {
        let op = |e: Error| e.at("action_functionals", "duality_gap");
        if let Some(k) = y.modes().find(|&k| k > 0 && y.coeff(k).iter().any(|v| *v != 0.0)) {
            return Err(op(Error::BadModeSupport { mode: k }));
        }
        let m = x.cutoff().max(y.cutoff());
        let (x, y) = (x.with_cutoff(m), y.with_cutoff(m));
        let psi = self.dual_action(&x.zero_mean_part()).map_err(op)?;
        let minus = 0.5 * y.project(Part::Minus).norm_half_sq();
        let phi = self.direct_action(&x.add(&y)).map_err(op)?;
        Ok(psi - minus - phi)
    }

    /// The unique `v0` making `x + v0` a periodic orbit, for a critical
    /// point `x` of the dual functional.
    pub fn lift_to_orbit(&self, x: &FourierLoop, tolerance: f64) -> Result<Lift> {
        let op = |e: Error| e.at("action_functionals", "lift_to_orbit");
        let state = self.dual_state(x, false, None).map_err(op)?;
        let gn = Self::h1_gradient(x, &state).h1_norm();
        if !(gn <= tolerance) {
            return Err(op(Error::NotCritical { residual: gn, tolerance }));
        }
        self.lift_from_state(x, &state, gn).map_err(op)
    }

    pub fn lift_from_state(&self, x: &FourierLoop, state: &DualState, dual_gradient_norm: f64) -> Result<Lift> {
        let d = 2 * self.n();
        let q = self.q();
        let xv = self.grid.values(x);
        let mut v0 = vec![0.0; d];
        for j in 0..q {
            for i in 0..d {
                v0[i] += (state.argmax[j * d + i] - xv[j * d + i]) / q as f64;
            }
        }
        let mut dev = 0.0;
        for j in 0..q {
            for i in 0..d {
                let e = state.argmax[j * d + i] - xv[j * d + i] - v0[i];
                dev += e * e;
            }
        }
        let deviation = (dev / q as f64).sqrt();
        if deviation > 1e-6 {
            return Err(Error::LiftInconsistent { deviation });
        }
        let mut orbit = x.clone();
        orbit.coeff_mut(0).copy_from_slice(&v0);
        let orbit_residual = self.orbit_residual(&orbit);
        Ok(Lift { v0, orbit, orbit_residual, deviation, dual_gradient_norm })
    }

    /// `||x' - X_H(x)||_{L2}` at the nodes.
    pub fn orbit_residual(&self, x: &FourierLoop) -> f64 {
        let d = 2 * self.n();
        let xv = self.grid.values(x);
        let dv = self.grid.values(&x.derivative());
        let mut r = vec![0.0; xv.len()];
        for j in 0..self.q() {
            let xh = self.h.vector_field(self.grid.time(j), &xv[j * d..(j + 1) * d]);
            for i in 0..d {
                r[j * d + i] = dv[j * d + i] - xh[i];
            }
        }
        self.grid.l2_norm(&r)
    }
}

/// Distance `|z(1) - z(0)|` after integrating `z' = X_H(t, z)` from
/// `orbit(0)` over one period with classical fourth-order Runge-Kutta.
pub fn shooting_residual(h: &HamiltonianModel, orbit: &FourierLoop, steps: usize) -> f64 {
    let z0 = orbit.evaluate(0.0);
    let mut z = z0.clone();
    let dt = 1.0 / steps as f64;
    let add = |a: &[f64], b: &[f64], s: f64| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x + s * y).collect() };
    for i in 0..steps {
        let t = i as f64 * dt;
        let k1 = h.vector_field(t, &z);
        let k2 = h.vector_field(t + 0.5 * dt, &add(&z, &k1, 0.5 * dt));
        let k3 = h.vector_field(t + 0.5 * dt, &add(&z, &k2, 0.5 * dt));
        let k4 = h.vector_field(t + dt, &add(&z, &k3, dt));
        for j in 0..z.len() {
            z[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
    }
    numerics::norm(&add(&z, &z0, -1.0))
}

/// Whether every trace point whose gradient norm is below `gradient_floor`
/// has norm at most `bound`.
pub fn palais_smale_audit(trace: &[(f64, f64)], gradient_floor: f64, bound: f64) -> bool {
    trace.iter().filter(|(g, _)| *g < gradient_floor).all(|(_, x)| *x <= bound)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convex_model::{HamiltonianModel, QuadraticHamiltonian};

    fn quad(eta: f64) -> ActionContext {
        ActionContext::new(HamiltonianModel::new(QuadraticHamiltonian::scalar(1, eta)).unwrap(), 32)
    }

    #[test]
    fn single_mode_actions() {
        let ctx = quad(4.0);
        let v = [0.3, -0.2];
        let x = FourierLoop::single_mode(4, 1, &v);
        let v2 = 0.13;
        assert!((ctx.direct_action(&x).unwrap() - (PI - 4.0) * v2).abs() < 1e-13);
        assert!((ctx.dual_action(&x).unwrap() - PI * v2 * (PI / 4.0 - 1.0)).abs() < 1e-13);
        assert!(ctx.dual_action(&FourierLoop::zeros(1, 4)).unwrap().abs() < 1e-15);
    }

    #[test]
    fn quadratic_gradient_is_mode_diagonal() {
        let ctx = quad(4.0);
        let mut x = FourierLoop::zeros(1, 3);
        x.coeff_mut(2).copy_from_slice(&[0.1, 0.4]);
        x.coeff_mut(-1).copy_from_slice(&[-0.2, 0.05]);
        let g = ctx.dual_gradient(&x).unwrap().gradient;
        // yhat_k = 2 pi k c_k / (2 eta), so the gradient is c_k (pi k / eta - 1) / (2 pi k).
        for k in [2i64, -1] {
            let f = (PI * k as f64 / 4.0 - 1.0) / (2.0 * PI * k as f64);
            for i in 0..2 {
                assert!((g.coeff(k)[i] - f * x.coeff(k)[i]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn nonzero_mean_is_rejected() {
        let ctx = quad(4.0);
        let x = FourierLoop::constant(2, &[1.0, 0.0]);
        assert!(matches!(ctx.dual_action(&x).unwrap_err().root(), Error::NonzeroMean { .. }));
    }

    #[test]
    fn positive_modes_rejected_by_gap() {
        let ctx = quad(4.0);
        let y = FourierLoop::single_mode(2, 1, &[1.0, 0.0]);
        let err = ctx.duality_gap(&FourierLoop::zeros(1, 2), &y).unwrap_err();
        assert!(matches!(err.root(), Error::BadModeSupport { mode: 1 }));
    }
}
