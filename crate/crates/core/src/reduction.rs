//! Saddle-point reduction of the dual functional to the head modes
//! `1..=N`.
//!
//! On the tail modes `[-M, -1] + [N + 1, M]` the dual functional is
//! uniformly convex once `2 pi (N + 1) > h_hi`, so for every head loop `x`
//! the tail minimizer `Y(x)` is unique and `psi(x) = Psi(x + Y(x))` is a
//! smooth function on a finite-dimensional space with the same critical
//! points, indices and nullities as `Psi`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::action_functionals::{ActionContext, DualState, Lift, ModeSet};
use crate::convex_model::HamiltonianModel;
use crate::error::{Error, Result};
use crate::loop_fourier::FourierLoop;
use crate::numerics;

/// Smallest `N` with `2 pi (N + 1) > h_hi`, together with the tail
/// coercivity constant `delta = 1/h_hi - 1/(2 pi (N + 1))`.
pub fn choose_n_for_bound(h_hi: f64) -> (usize, f64) {
    let mut n = 0usize;
    while 2.0 * PI * (n as f64 + 1.0) <= h_hi {
        n += 1;
    }
    (n, 1.0 / h_hi - 1.0 / (2.0 * PI * (n as f64 + 1.0)))
}

/// [`choose_n_for_bound`] applied to the upper convexity bound of `h`.
pub fn choose_n(h: &HamiltonianModel) -> (usize, f64) {
    choose_n_for_bound(h.h_hi)
}

/// Tail minimizer at one head loop.
#[derive(Debug, Clone)]
pub struct TailSolution {
    /// Tail coordinates of `Y(x)`.
    pub y: DVector<f64>,
    /// The loop `x + Y(x)`.
    pub full: FourierLoop,
    /// Dual node data at `x + Y(x)`, with conjugate Hessians.
    pub state: DualState,
    /// `H1` norm of the tail gradient at `x + Y(x)`.
    pub tail_residual: f64,
    pub iterations: usize,
}

/// Value and derivatives of the reduced functional at a head point.
#[derive(Debug, Clone)]
pub struct ReducedEval {
    pub value: f64,
    /// Euclidean gradient in head coordinates.
    pub gradient: DVector<f64>,
    /// `H1` norm of the gradient.
    pub gradient_norm: f64,
    /// Euclidean Hessian in head coordinates, when requested.
    pub hessian: Option<DMatrix<f64>>,
    pub tail: TailSolution,
}

/// Index data read from a symmetric form in `H1`-scaled coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Inertia {
    pub negative: usize,
    pub zero: usize,
    pub positive: usize,
}

/// Zero threshold for eigenvalues of `H1`-scaled Hessians.
pub const HESSIAN_ZERO_TOL: f64 = 1e-7;

pub fn inertia(eigenvalues: &[f64], tol: f64) -> Inertia {
    Inertia {
        negative: eigenvalues.iter().filter(|&&e| e < -tol).count(),
        zero: eigenvalues.iter().filter(|&&e| e.abs() <= tol).count(),
        positive: eigenvalues.iter().filter(|&&e| e > tol).count(),
    }
}

/// Audit of the tail-truncation doubling test.
#[derive(Debug, Clone, Serialize)]
pub struct TruncationAudit {
    pub points: usize,
    pub max_difference: f64,
    pub passed: bool,
}

/// The manifold `{x + Y(x)}` and the reduced functional on it.
#[derive(Debug, Clone)]
pub struct ReducedManifold {
    pub ctx: ActionContext,
    /// Head cutoff `N`.
    pub n_head: usize,
    /// Tail truncation `M`.
    pub m: usize,
    pub delta: f64,
    pub head: ModeSet,
    pub tail: ModeSet,
    pub tail_tolerance: f64,
    pub max_newton: usize,
}

impl ReducedManifold {
    /// Reduction with `N` from [`choose_n`], tail truncation `m` and `q`
    /// quadrature nodes.
    pub fn new(h: HamiltonianModel, m: usize, q: usize) -> Result<Self> {
        let (n_head, _) = choose_n(&h);
        Self::with_head(h, n_head, m, q)
    }

    /// Reduction with an explicit head cutoff, which must still satisfy
    /// `2 pi (N + 1) > h_hi`.
    pub fn with_head(h: HamiltonianModel, n_head: usize, m: usize, q: usize) -> Result<Self> {
        let tag = |e: Error| e.at("reduction", "new");
        if 2.0 * PI * (n_head as f64 + 1.0) <= h.h_hi {
            return Err(tag(Error::InvalidInput(format!("head cutoff N = {n_head} violates 2 pi (N + 1) > h_hi = {}", h.h_hi))));
        }
        if m <= n_head {
            return Err(tag(Error::InvalidInput(format!("need N < M, got N = {n_head}, M = {m}"))));
        }
        if q <= 2 * m {
            return Err(tag(Error::InvalidInput(format!("quadrature Q = {q} must exceed 2M = {}", 2 * m))));
        }
        let n = h.n();
        let delta = 1.0 / h.h_hi - 1.0 / (2.0 * PI * (n_head as f64 + 1.0));
        let head = ModeSet::new(n, (1..=n_head as i64).collect());
        let mi = m as i64;
        let tail = ModeSet::new(n, (-mi..=-1).chain(n_head as i64 + 1..=mi).collect());
        Ok(Self { ctx: ActionContext::new(h, q), n_head, m, delta, head, tail, tail_tolerance: 1e-10, max_newton: 60 })
    }

    pub fn n(&self) -> usize {
        self.ctx.n()
    }

    pub fn head_dim(&self) -> usize {
        self.head.dim()
    }

    pub fn h(&self) -> &HamiltonianModel {
        &self.ctx.h
    }

    /// Head loop from head coordinates.
    pub fn head_loop(&self, v: &DVector<f64>) -> FourierLoop {
        self.head.unpack(v, self.m)
    }

    pub fn head_coords(&self, x: &FourierLoop) -> DVector<f64> {
        self.head.pack(x)
    }

    /// Head-mode `H1` weights `4 pi^2 k^2`.
    pub fn head_weights(&self) -> DVector<f64> {
        self.head.h1_weights()
    }

    fn tail_state(&self, x: &DVector<f64>, y: &DVector<f64>, warm: Option<&[f64]>) -> Result<(FourierLoop, DualState)> {
        let mut full = self.head.unpack(x, self.m);
        self.tail.add_into(y, &mut full);
        let state = self.ctx.dual_state(&full, true, warm)?;
        Ok((full, state))
    }

    /// Euclidean gradient of the dual functional in the coordinates of
    /// `modes`.
    fn partials(&self, full: &FourierLoop, state: &DualState, modes: &ModeSet) -> DVector<f64> {
        modes.pack(&ActionContext::euclidean_gradient(full, state))
    }

    /// Minimize `y -> Psi(x + y)` over the truncated tail by Newton with
    /// backtracking, starting from `warm` when given.
    pub fn solve_tail(&self, x: &DVector<f64>, warm: Option<&TailSolution>) -> Result<TailSolution> {
        let tag = |e: Error| e.at("reduction", "solve_tail");
        let weights = self.tail.h1_weights();
        let mut y = warm.map(|w| w.y.clone()).unwrap_or_else(|| DVector::zeros(self.tail.dim()));
        let warm_nodes = warm.map(|w| w.state.argmax.clone());
        let (mut full, mut state) = self.tail_state(x, &y, warm_nodes.as_deref()).map_err(tag)?;
        for it in 0..=self.max_newton {
            let g = self.partials(&full, &state, &self.tail);
            let r = g.component_div(&weights).dot(&g).sqrt();
            if r < self.tail_tolerance {
                // Polish with plain Newton steps while they still reduce the
                // residual: the head gradient inherits the tail error
                // amplified by up to `1 / delta`.
                return self.polish_tail(x, y, full, state, r, it).map_err(tag);
            }
            if it == self.max_newton {
                break;
            }
            let hess = self.ctx.dual_hessian_matrix(&state, &self.tail);
            let chol = hess.cholesky().ok_or_else(|| tag(Error::CoercivityViolation))?;
            let step = -chol.solve(&g);
            let slope = g.dot(&step);
            if !(slope < 0.0) {
                return Err(tag(Error::CoercivityViolation));
            }
            let f0 = state.value;
            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..40 {
                let trial = &y + alpha * &step;
                let (tf, ts) = self.tail_state(x, &trial, Some(&state.argmax)).map_err(tag)?;
                let tiny = -slope * alpha < 1e-13 * (1.0 + f0.abs());
                if ts.value <= f0 + 1e-4 * alpha * slope || tiny {
                    accepted = Some((trial, tf, ts));
                    break;
                }
                alpha *= 0.5;
            }
            let (ny, nf, ns) = accepted.ok_or_else(|| tag(Error::CoercivityViolation))?;
            y = ny;
            full = nf;
            state = ns;
        }
        let g = self.partials(&full, &state, &self.tail);
        let r = g.component_div(&weights).dot(&g).sqrt();
        Err(tag(Error::NoConvergence { seed: 0, gradient: r }))
    }

    fn polish_tail(
        &self,
        x: &DVector<f64>,
        mut y: DVector<f64>,
        mut full: FourierLoop,
        mut state: DualState,
        mut r: f64,
        mut iterations: usize,
    ) -> Result<TailSolution> {
        let weights = self.tail.h1_weights();
        for _ in 0..3 {
            if r < 1e-15 {
                break;
            }
            let g = self.partials(&full, &state, &self.tail);
            let Some(chol) = self.ctx.dual_hessian_matrix(&state, &self.tail).cholesky() else { break };
            let trial = &y - chol.solve(&g);
            let Ok((tf, ts)) = self.tail_state(x, &trial, Some(&state.argmax)) else { break };
            let tg = self.partials(&tf, &ts, &self.tail);
            let tr = tg.component_div(&weights).dot(&tg).sqrt();
            if !(tr < 0.5 * r) {
                break;
            }
            y = trial;
            full = tf;
            state = ts;
            r = tr;
            iterations += 1;
        }
        Ok(TailSolution { y, full, state, tail_residual: r, iterations })
    }

    /// Reduced value, Euclidean gradient and optionally the Hessian.
    pub fn evaluate(&self, x: &DVector<f64>, hessian: bool, warm: Option<&TailSolution>) -> Result<ReducedEval> {
        let tail = self.solve_tail(x, warm)?;
        let gradient = self.partials(&tail.full, &tail.state, &self.head);
        let gradient_norm = gradient.component_div(&self.head_weights()).dot(&gradient).sqrt();
        let hessian = if hessian { Some(self.schur(&tail.state).map_err(|e| e.at("reduction", "reduced_hessian"))?) } else { None };
        Ok(ReducedEval { value: tail.state.value, gradient, gradient_norm, hessian, tail })
    }

    pub fn reduced_value(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(self.evaluate(x, false, None)?.value)
    }

    pub fn reduced_gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.evaluate(x, false, None)?.gradient)
    }

    /// Schur complement `H11 - H12 H22^{-1} H21` at a solved point.
    pub fn reduced_hessian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(self.evaluate(x, true, None)?.hessian.expect("requested"))
    }

    fn schur(&self, state: &DualState) -> Result<DMatrix<f64>> {
        let hd = self.head.dim();
        let all = ModeSet::new(self.n(), self.head.modes.iter().chain(&self.tail.modes).copied().collect());
        let full = self.ctx.dual_hessian_matrix(state, &all);
        let h11 = full.view((0, 0), (hd, hd)).into_owned();
        let h12 = full.view((0, hd), (hd, self.tail.dim())).into_owned();
        let h22 = full.view((hd, hd), (self.tail.dim(), self.tail.dim())).into_owned();
        let chol = h22.cholesky().ok_or(Error::TailSingular)?;
        let s = h11 - &h12 * chol.solve(&h12.transpose());
        Ok(0.5 * (&s + s.transpose()))
    }

    /// Eigenvalues of a head-space Euclidean Hessian in `H1`-scaled
    /// coordinates.
    pub fn scaled_head_spectrum(&self, hess: &DMatrix<f64>) -> Vec<f64> {
        if hess.nrows() == 0 {
            return Vec::new();
        }
        let w = self.head_weights().map(|v| 1.0 / v.sqrt());
        let scaled = DMatrix::from_diagonal(&w) * hess * DMatrix::from_diagonal(&w);
        numerics::symmetric_eigenvalues(&scaled)
    }

    /// Eigenvalues of the full zero-mean Hessian of the dual functional in
    /// `H1`-scaled coordinates at a solved point.
    pub fn full_spectrum(&self, tail: &TailSolution) -> Vec<f64> {
        let all = ModeSet::zero_mean(self.n(), self.m);
        let hess = self.ctx.dual_hessian_matrix(&tail.state, &all);
        let w = all.h1_weights().map(|v| 1.0 / v.sqrt());
        numerics::symmetric_eigenvalues(&(DMatrix::from_diagonal(&w) * hess * DMatrix::from_diagonal(&w)))
    }

    /// Smallest eigenvalue of the tail Hessian in `H1`-scaled coordinates,
    /// to be compared with `delta`.
    pub fn tail_min_eigenvalue(&self, tail: &TailSolution) -> f64 {
        let hess = self.ctx.dual_hessian_matrix(&tail.state, &self.tail);
        let w = self.tail.h1_weights().map(|v| 1.0 / v.sqrt());
        numerics::symmetric_eigenvalues(&(DMatrix::from_diagonal(&w) * hess * DMatrix::from_diagonal(&w)))[0]
    }

    /// Lift a reduced critical point to a periodic orbit.
    pub fn lift(&self, eval: &ReducedEval) -> Result<Lift> {
        self.ctx
            .lift_from_state(&eval.tail.full, &eval.tail.state, eval.gradient_norm)
            .map_err(|e| e.at("reduction", "lift"))
    }

    /// The same reduction with tail truncation `2M` and `2Q` nodes.
    pub fn doubled(&self) -> Result<Self> {
        let mut r = Self::with_head(self.ctx.h.clone(), self.n_head, 2 * self.m, 2 * self.ctx.q())?;
        r.tail_tolerance = self.tail_tolerance;
        r.max_newton = self.max_newton;
        Ok(r)
    }

    /// Reduction whose tail truncation passes the doubling audit. Starting
    /// from `m`, the truncation grows by half until the audit at `points`
    /// random head points of norm up to `radius` passes or `m_max` is
    /// reached; the last audit is returned either way. Quadrature uses `4M`
    /// nodes.
    #[allow(clippy::too_many_arguments)]
    pub fn with_audited_truncation(
        h: HamiltonianModel,
        n_head: usize,
        mut m: usize,
        m_max: usize,
        tail_tolerance: f64,
        points: usize,
        radius: f64,
        seed: u64,
    ) -> Result<(Self, TruncationAudit)> {
        loop {
            let mut rm = Self::with_head(h.clone(), n_head, m, 4 * m)?;
            rm.tail_tolerance = tail_tolerance;
            let audit = rm.truncation_audit(points, radius, &[], seed)?;
            if audit.passed || m >= m_max {
                return Ok((rm, audit));
            }
            m = (m + m / 2).min(m_max);
        }
    }

    /// Compare `psi` with the doubled truncation at `points` random head
    /// points of `H1` norm up to `radius`, plus any `extra` points.
    pub fn truncation_audit(&self, points: usize, radius: f64, extra: &[DVector<f64>], seed: u64) -> Result<TruncationAudit> {
        let fine = self.doubled()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = self.head_weights();
        let mut samples: Vec<DVector<f64>> = extra.to_vec();
        for _ in 0..points {
            let u = numerics::unit_vector(&mut rng, self.head_dim());
            let s: f64 = rand::Rng::random::<f64>(&mut rng) * radius;
            samples.push(DVector::from_iterator(self.head_dim(), u.iter().zip(w.iter()).map(|(a, b)| s * a / b.sqrt())));
        }
        let mut worst: f64 = 0.0;
        for x in &samples {
            let a = self.evaluate(x, false, None)?.value;
            let b = fine.evaluate(x, false, None)?.value;
            worst = worst.max((a - b).abs());
        }
        Ok(TruncationAudit { points: samples.len(), max_difference: worst, passed: worst < 1e-8 })
    }

    /// Distance between `Y(x)` solved cold and solved from a perturbed warm
    /// start.
    pub fn graph_audit(&self, x: &DVector<f64>, perturbation: f64, seed: u64) -> Result<f64> {
        let base = self.solve_tail(x, None)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut warm = base.clone();
        let noise = numerics::normal_vector(&mut rng, self.tail.dim());
        let w = self.tail.h1_weights();
        for i in 0..warm.y.len() {
            warm.y[i] += perturbation * noise[i] / w[i].sqrt();
        }
        let again = self.solve_tail(x, Some(&warm))?;
        let d = &again.y - &base.y;
        Ok(d.component_mul(&w).dot(&d).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convex_model::QuadraticHamiltonian;

    #[test]
    fn head_cutoff_arithmetic() {
        assert_eq!(choose_n_for_bound(8.0).0, 1);
        assert_eq!(choose_n_for_bound(2.0).0, 0);
        assert_eq!(choose_n_for_bound(100.0).0, 15);
        let (n, d) = choose_n_for_bound(8.0);
        assert!((d - (1.0 / 8.0 - 1.0 / (4.0 * PI))).abs() < 1e-15 && n == 1);
    }

    #[test]
    fn quadratic_tail_vanishes() {
        let h = HamiltonianModel::new(QuadraticHamiltonian::scalar(1, 4.0)).unwrap();
        let r = ReducedManifold::new(h, 6, 32).unwrap();
        let x = DVector::from_vec(vec![0.3, -0.1]);
        let t = r.solve_tail(&x, None).unwrap();
        assert!(t.y.norm() < 1e-14);
        // psi(x) = pi |c|^2 (pi / eta - 1) on mode 1.
        assert!((t.state.value - PI * 0.1 * (PI / 4.0 - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn origin_index_equals_quadratic_formula() {
        for (eta, expect) in [(1.0, 0usize), (4.0, 2), (7.0, 4), (10.0, 6)] {
            let h = HamiltonianModel::new(QuadraticHamiltonian::scalar(1, eta)).unwrap();
            let r = ReducedManifold::new(h, 8, 40).unwrap();
            let e = r.evaluate(&DVector::zeros(r.head_dim()), true, None).unwrap();
            let spec = r.scaled_head_spectrum(e.hessian.as_ref().unwrap());
            assert_eq!(inertia(&spec, HESSIAN_ZERO_TOL).negative, expect, "eta = {eta}");
        }
    }
}
