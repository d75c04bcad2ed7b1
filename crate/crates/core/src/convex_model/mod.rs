//! Convex Hamiltonians, gauges of convex bodies and numerical Fenchel
//! conjugation.

mod gauge;
mod models;
mod profile;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics;

pub use gauge::{ellipsoid_gauge, perturbed_ball_gauge, slope_nonresonance_check, GaugeDomain, GaugeKind};
pub use models::{
    DoubleWellToy, GaussianBump, QuadraticHamiltonian, RotatingBump, ScaledHamiltonian, SumHamiltonian,
    TranslatedHamiltonian,
};
pub use profile::{profile_hamiltonian, ProfileHamiltonian, ProfileKind};

/// Pointwise oracle of a time-periodic Hamiltonian on `R^{2n}`.
pub trait HamiltonianFn: Send + Sync {
    fn n(&self) -> usize;
    fn value(&self, t: f64, z: &[f64]) -> f64;
    fn gradient(&self, t: f64, z: &[f64]) -> DVector<f64>;
    fn hessian(&self, t: f64, z: &[f64]) -> DMatrix<f64>;

    fn time_dependent(&self) -> bool {
        false
    }

    /// Exact convexity bounds when they are known in closed form.
    fn analytic_bounds(&self) -> Option<(f64, f64)> {
        None
    }

    /// Closed-form conjugate, for models that are defined through it.
    fn exact_conjugate(&self, _t: f64, _w: &[f64]) -> Option<Conjugate> {
        None
    }

    /// Length scale over which convexity bounds are sampled.
    fn sample_scale(&self) -> f64 {
        1.0
    }

    fn describe(&self) -> String;
}

/// Value, maximizer and Hessian of `H*_t` at a point `w`.
#[derive(Debug, Clone)]
pub struct Conjugate {
    pub value: f64,
    pub argmax: DVector<f64>,
    /// `Hess H*_t(w)`, the inverse of `Hess H_t` at the maximizer.
    pub hessian: DMatrix<f64>,
}

/// A quadratically convex Hamiltonian together with its convexity bounds.
#[derive(Clone)]
pub struct HamiltonianModel {
    inner: Arc<dyn HamiltonianFn>,
    pub h_lo: f64,
    pub h_hi: f64,
    pub time_dependent: bool,
}

impl std::fmt::Debug for HamiltonianModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HamiltonianModel")
            .field("model", &self.inner.describe())
            .field("h_lo", &self.h_lo)
            .field("h_hi", &self.h_hi)
            .finish()
    }
}

/// Seed for the deterministic convexity-bound sampler.
const BOUND_SAMPLER_SEED: u64 = 0x5eed_b0d5;

impl HamiltonianModel {
    /// Wrap an oracle, taking analytic bounds when available and otherwise
    /// estimating them by sampling Hessian eigenvalues.
    pub fn new<F: HamiltonianFn + 'static>(f: F) -> Result<Self> {
        Self::from_arc(Arc::new(f))
    }

    pub fn from_arc(inner: Arc<dyn HamiltonianFn>) -> Result<Self> {
        let (h_lo, h_hi) = match inner.analytic_bounds() {
            Some(b) => b,
            None => {
                let (lo, hi) = sample_hessian_bounds(inner.as_ref(), BOUND_SAMPLER_SEED);
                if lo <= 0.0 {
                    return Err(Error::ConvexityLoss { min_eigenvalue: lo });
                }
                (0.98 * lo, 1.02 * hi)
            }
        };
        if !(h_lo > 0.0) || !(h_hi >= h_lo) || !h_hi.is_finite() {
            return Err(Error::ConvexityLoss { min_eigenvalue: h_lo });
        }
        let time_dependent = inner.time_dependent();
        Ok(Self { inner, h_lo, h_hi, time_dependent })
    }

    /// Wrap an oracle with explicitly supplied bounds.
    pub fn with_bounds(inner: Arc<dyn HamiltonianFn>, h_lo: f64, h_hi: f64) -> Self {
        let time_dependent = inner.time_dependent();
        Self { inner, h_lo, h_hi, time_dependent }
    }

    pub fn n(&self) -> usize {
        self.inner.n()
    }

    pub fn eval(&self, t: f64, z: &[f64]) -> f64 {
        self.inner.value(t, z)
    }

    pub fn grad(&self, t: f64, z: &[f64]) -> DVector<f64> {
        self.inner.gradient(t, z)
    }

    pub fn hess(&self, t: f64, z: &[f64]) -> DMatrix<f64> {
        self.inner.hessian(t, z)
    }

    pub fn describe(&self) -> String {
        self.inner.describe()
    }

    pub fn oracle(&self) -> &Arc<dyn HamiltonianFn> {
        &self.inner
    }

    /// Hamiltonian vector field `X_H = -J0 grad H`.
    pub fn vector_field(&self, t: f64, z: &[f64]) -> Vec<f64> {
        let g = self.grad(t, z);
        numerics::j0(g.as_slice()).into_iter().map(|v| -v).collect()
    }

    /// `H*_t(w)` with maximizer and Hessian, warm-started at `warm` when
    /// given and at `w / (2 h_lo)` otherwise.
    pub fn conjugate(&self, t: f64, w: &[f64], warm: Option<&[f64]>) -> Result<Conjugate> {
        if let Some(c) = self.inner.exact_conjugate(t, w) {
            return Ok(c);
        }
        let start: Vec<f64> = match warm {
            Some(y) => y.to_vec(),
            None => w.iter().map(|v| v / (2.0 * self.h_lo)).collect(),
        };
        newton_conjugate(self.inner.as_ref(), t, w, start)
    }
}

/// `(H*_t(w), argmax)` by damped Newton on `grad H_t(y) = w`.
pub fn fenchel_conjugate(h: &HamiltonianModel, t: f64, w: &[f64]) -> Result<(f64, DVector<f64>)> {
    let c = h.conjugate(t, w, None).map_err(|e| e.at("convex_model", "fenchel_conjugate"))?;
    Ok((c.value, c.argmax))
}

const CONJUGATE_MAX_ITER: usize = 50;

fn newton_conjugate(h: &dyn HamiltonianFn, t: f64, w: &[f64], start: Vec<f64>) -> Result<Conjugate> {
    let w_norm = numerics::norm(w);
    let accept = 1e-10 * (1.0 + w_norm);
    let target = 1e-14 * (1.0 + w_norm);
    let wv = DVector::from_column_slice(w);
    let mut y = DVector::from_vec(start);
    let objective = |y: &DVector<f64>| wv.dot(y) - h.value(t, y.as_slice());
    let mut f = objective(&y);
    let mut residual = f64::INFINITY;
    let mut stalled = 0;
    for _ in 0..CONJUGATE_MAX_ITER {
        let g = h.gradient(t, y.as_slice()) - &wv;
        let r = g.norm();
        if r < target {
            break;
        }
        if r >= 0.5 * residual {
            stalled += 1;
            if stalled >= 3 && r < accept {
                break;
            }
        }
        residual = r;
        let hs = h.hessian(t, y.as_slice());
        let step = match numerics::spd_solve(&hs, &(-&g)) {
            Some(s) => s,
            None => hs.lu().solve(&(-&g)).unwrap_or_else(|| -&g),
        };
        let slope = -g.dot(&step);
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial = &y + alpha * &step;
            let ft = objective(&trial);
            // Require a tenth of the increase predicted by the quadratic
            // model; plain Armijo accepts the two-cycle that Newton falls
            // into on sublinear-growth conjugates.
            let predicted = alpha * slope.max(0.0) * (1.0 - 0.5 * alpha);
            if ft >= f + 0.1 * predicted - 1e-14 * (1.0 + f.abs()) {
                y = trial;
                f = ft;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            y += alpha * &step;
            f = objective(&y);
        }
    }
    let final_residual = (h.gradient(t, y.as_slice()) - &wv).norm();
    if !(final_residual <= accept) {
        return Err(Error::NewtonDivergence { residual: final_residual, w_norm });
    }
    let hess = h.hessian(t, y.as_slice());
    let inv = hess
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or(Error::ConvexityLoss { min_eigenvalue: numerics::symmetric_eigenvalues(&hess)[0] })?;
    let value = wv.dot(&y) - h.value(t, y.as_slice());
    Ok(Conjugate { value, argmax: y, hessian: inv })
}

/// Extreme Hessian eigenvalues over a deterministic sample of points.
pub fn sample_hessian_bounds(h: &dyn HamiltonianFn, seed: u64) -> (f64, f64) {
    let n = h.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = h.sample_scale();
    let times: Vec<f64> = if h.time_dependent() { (0..6).map(|j| j as f64 / 6.0 + 0.03).collect() } else { vec![0.0] };
    let mut radii: Vec<f64> = (0..160).map(|i| scale * 10f64.powf(-3.0 + 4.0 * i as f64 / 159.0)).collect();
    radii.push(0.0);
    let mut directions: Vec<Vec<f64>> = (0..2 * n).map(|i| {
        let mut e = vec![0.0; 2 * n];
        e[i] = 1.0;
        e
    }).collect();
    for _ in 0..40 {
        directions.push(numerics::unit_vector(&mut rng, 2 * n));
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &t in &times {
        for r in &radii {
            for d in &directions {
                let z: Vec<f64> = d.iter().map(|v| v * r).collect();
                let ev = numerics::symmetric_eigenvalues(&h.hessian(t, &z));
                lo = lo.min(ev[0]);
                hi = hi.max(ev[ev.len() - 1]);
            }
        }
    }
    (lo, hi)
}

/// Report of the finite-difference and periodicity audits of a model.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ModelAudit {
    pub max_gradient_error: f64,
    pub max_hessian_error: f64,
    pub max_periodicity_error: f64,
    pub min_hessian_ratio: f64,
    pub max_hessian_ratio: f64,
}

impl ModelAudit {
    pub fn passed(&self) -> bool {
        self.max_gradient_error < 1e-6
            && self.max_hessian_error < 1e-6
            && self.max_periodicity_error < 1e-12
            && self.min_hessian_ratio >= 1.0 - 1e-9
            && self.max_hessian_ratio <= 1.0 + 1e-9
    }
}

/// Check gradient and Hessian against central differences, 1-periodicity
/// and the stored convexity bounds at random points of radius up to
/// `radius`.
pub fn audit_model(h: &HamiltonianModel, samples: usize, radius: f64, seed: u64) -> ModelAudit {
    use rand::Rng;
    let n = h.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut audit = ModelAudit {
        max_gradient_error: 0.0,
        max_hessian_error: 0.0,
        max_periodicity_error: 0.0,
        min_hessian_ratio: f64::INFINITY,
        max_hessian_ratio: 0.0,
    };
    for _ in 0..samples {
        let t: f64 = rng.random();
        let r: f64 = radius * rng.random::<f64>().max(0.05);
        let z: Vec<f64> = numerics::unit_vector(&mut rng, 2 * n).into_iter().map(|v| v * r).collect();
        let g = h.grad(t, &z);
        let hs = h.hess(t, &z);
        let step = 1e-5 * (1.0 + r);
        let mut fd_g = DVector::zeros(2 * n);
        let mut fd_h = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..2 * n {
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[i] += step;
            zm[i] -= step;
            fd_g[i] = (h.eval(t, &zp) - h.eval(t, &zm)) / (2.0 * step);
            let col = (h.grad(t, &zp) - h.grad(t, &zm)) / (2.0 * step);
            fd_h.set_column(i, &col);
        }
        let ge = (&fd_g - &g).norm() / (1.0 + g.norm());
        let he = (&fd_h - &hs).norm() / (1.0 + hs.norm());
        audit.max_gradient_error = audit.max_gradient_error.max(ge);
        audit.max_hessian_error = audit.max_hessian_error.max(he);
        let pe = (h.eval(t + 1.0, &z) - h.eval(t, &z)).abs() / (1.0 + h.eval(t, &z).abs());
        audit.max_periodicity_error = audit.max_periodicity_error.max(pe);
        let u = numerics::unit_vector(&mut rng, 2 * n);
        let uv = DVector::from_vec(u);
        let q = uv.dot(&(&hs * &uv));
        audit.min_hessian_ratio = audit.min_hessian_ratio.min(q / h.h_lo);
        audit.max_hessian_ratio = audit.max_hessian_ratio.max(q / h.h_hi);
    }
    audit
}
