use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gauge::GaugeDomain;
use super::{HamiltonianFn, HamiltonianModel};
use crate::error::{Error, Result};
use crate::numerics;

/// Radial profiles `phi` composed with a gauge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ProfileKind {
    /// `eta r + xi`.
    Linear { eta: f64, xi: f64 },
    /// `(2T/p) r^{p/2}`, so that `phi'(1) = T`.
    PHomogeneous { t: f64, p: f64 },
    /// Convex profile with `phi(0) = phi0`, `phi'(0) = c0`, `phi'(1) = a_min`
    /// and slope tending to `eta` at infinity:
    /// `phi'(s) = eta - (eta - c0) exp(-kappa s^2)`.
    FlatConvex { a_min: f64, eta: f64, c0: f64, phi0: f64 },
}

impl ProfileKind {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            ProfileKind::Linear { eta, .. } => eta > 0.0,
            ProfileKind::PHomogeneous { t, p } => t > 0.0 && p > 1.0,
            ProfileKind::FlatConvex { a_min, eta, c0, .. } => c0 > 0.0 && c0 < a_min && a_min < eta,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid profile parameters {self:?}")))
        }
    }

    fn kappa(a_min: f64, eta: f64, c0: f64) -> f64 {
        ((eta - c0) / (eta - a_min)).ln()
    }

    /// `(phi, phi', phi'')` at `r >= 0`, without any cap.
    pub fn raw(&self, r: f64) -> (f64, f64, f64) {
        match *self {
            ProfileKind::Linear { eta, xi } => (eta * r + xi, eta, 0.0),
            ProfileKind::PHomogeneous { t, p } => {
                let e = 0.5 * p;
                let r = r.max(0.0);
                ((t / e) * r.powf(e), t * r.powf(e - 1.0), t * (e - 1.0) * r.powf(e - 2.0))
            }
            ProfileKind::FlatConvex { a_min, eta, c0, phi0 } => {
                let k = Self::kappa(a_min, eta, c0);
                let sk = k.sqrt();
                let g = (-k * r * r).exp();
                let erf_part = 0.5 * PI.sqrt() / sk * libm::erf(sk * r);
                (phi0 + eta * r - (eta - c0) * erf_part, eta - (eta - c0) * g, 2.0 * k * r * (eta - c0) * g)
            }
        }
    }

    /// Whether the profile needs a cap near the origin to be `C^2` there.
    fn needs_cap(&self) -> bool {
        matches!(self, ProfileKind::PHomogeneous { p, .. } if (*p - 2.0).abs() > 1e-12 && *p < 4.0)
    }

    pub fn describe(&self) -> String {
        format!("{self:?}")
    }
}

/// `phi(H_C(z))` with an optional quadratic-in-`r` cap below a level.
#[derive(Debug, Clone)]
pub struct ProfileHamiltonian {
    pub domain: GaugeDomain,
    pub kind: ProfileKind,
    /// Below this gauge level the profile is replaced by its second-order
    /// Taylor polynomial at the level.
    pub cap_level: Option<f64>,
}

impl ProfileHamiltonian {
    pub fn new(domain: GaugeDomain, kind: ProfileKind) -> Result<Self> {
        kind.validate()?;
        let cap_level = if kind.needs_cap() { Some(domain.smoothing_radius.powi(2)) } else { None };
        Ok(Self { domain, kind, cap_level })
    }

    /// `(phi, phi', phi'')` including the cap.
    pub fn phi(&self, r: f64) -> (f64, f64, f64) {
        match self.cap_level {
            Some(r0) if r < r0 => {
                let (a, b, c) = self.kind.raw(r0);
                let d = r - r0;
                (a + b * d + 0.5 * c * d * d, b + c * d, c)
            }
            _ => self.kind.raw(r),
        }
    }
}

impl HamiltonianFn for ProfileHamiltonian {
    fn n(&self) -> usize {
        self.domain.n()
    }

    fn value(&self, _t: f64, z: &[f64]) -> f64 {
        self.phi(self.domain.gauge_eval(z)).0
    }

    fn gradient(&self, _t: f64, z: &[f64]) -> DVector<f64> {
        let (r, g, _) = self.domain.gauge_all(z, 1);
        self.phi(r).1 * g
    }

    fn hessian(&self, _t: f64, z: &[f64]) -> DMatrix<f64> {
        let (r, g, h) = self.domain.gauge_all(z, 2);
        let (_, d1, d2) = self.phi(r);
        d1 * h + d2 * &g * g.transpose()
    }

    fn analytic_bounds(&self) -> Option<(f64, f64)> {
        Some(level_sampled_bounds(self))
    }

    fn sample_scale(&self) -> f64 {
        self.domain.inradius()
    }

    fn describe(&self) -> String {
        format!("{} o {}", self.kind.describe(), self.domain.describe())
    }
}

/// Hessian eigenvalue extremes over points placed on a dense set of gauge
/// levels, including the cap level and the unit level.
fn level_sampled_bounds(h: &ProfileHamiltonian) -> (f64, f64) {
    let d = 2 * h.domain.n();
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let mut dirs: Vec<Vec<f64>> = (0..d)
        .map(|i| {
            let mut e = vec![0.0; d];
            e[i] = 1.0;
            e
        })
        .collect();
    for _ in 0..32 {
        dirs.push(numerics::unit_vector(&mut rng, d));
    }
    let mut levels: Vec<f64> = (0..360).map(|i| 10f64.powf(-6.0 + 9.0 * i as f64 / 359.0)).collect();
    levels.push(0.0);
    levels.push(1.0);
    if let Some(r0) = h.cap_level {
        levels.extend([r0, r0 * (1.0 - 1e-9), r0 * (1.0 + 1e-9)]);
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for u in &dirs {
        let gu = h.domain.gauge_eval(u);
        for &r in &levels {
            let s = (r / gu).sqrt();
            let z: Vec<f64> = u.iter().map(|v| v * s).collect();
            let ev = numerics::symmetric_eigenvalues(&h.hessian(0.0, &z));
            lo = lo.min(ev[0]);
            hi = hi.max(ev[d - 1]);
        }
    }
    (lo, hi)
}

/// Build `phi o H_C` as a Hamiltonian model, failing with `ConvexityLoss`
/// when the assembled Hessian is not positive definite at the audit points.
pub fn profile_hamiltonian(domain: &GaugeDomain, kind: ProfileKind) -> Result<HamiltonianModel> {
    let tag = |e: Error| e.at("convex_model", "profile_hamiltonian");
    let h = ProfileHamiltonian::new(domain.clone(), kind).map_err(tag)?;
    let (lo, hi) = level_sampled_bounds(&h);
    if !(lo > 0.0) {
        return Err(tag(Error::ConvexityLoss { min_eigenvalue: lo }));
    }
    Ok(HamiltonianModel::with_bounds(std::sync::Arc::new(h), 0.98 * lo, 1.02 * hi))
}

#[cfg(test)]
mod tests {
    use super::super::gauge::ellipsoid_gauge;
    use super::*;

    #[test]
    fn linear_profile_on_disk() {
        let h = profile_hamiltonian(&ellipsoid_gauge(&[1.0]).unwrap(), ProfileKind::Linear { eta: 4.0, xi: 0.0 }).unwrap();
        let z = [0.3, -0.4];
        assert!((h.eval(0.0, &z) - 4.0 * 0.25).abs() < 1e-15);
        let hs = h.hess(0.0, &z);
        assert!((hs[(0, 0)] - 8.0).abs() < 1e-14 && hs[(0, 1)].abs() < 1e-14);
    }

    #[test]
    fn p_homogeneous_gradient_formula() {
        let h = profile_hamiltonian(&ellipsoid_gauge(&[1.0]).unwrap(), ProfileKind::PHomogeneous { t: PI, p: 1.5 }).unwrap();
        let z = [0.6, 0.2];
        let r = numerics::norm(&z);
        assert!((h.eval(0.0, &z) - 4.0 * PI / 3.0 * r.powf(1.5)).abs() < 1e-14);
        let g = h.grad(0.0, &z);
        for i in 0..2 {
            assert!((g[i] - 2.0 * PI * z[i] / r.sqrt()).abs() < 1e-13);
        }
    }

    #[test]
    fn flat_convex_profile_data() {
        let k = ProfileKind::FlatConvex { a_min: PI, eta: 1.5 * PI, c0: 0.2, phi0: -0.05 };
        let (f0, d0, _) = k.raw(0.0);
        let (_, d1, dd1) = k.raw(1.0);
        assert!((f0 + 0.05).abs() < 1e-15 && (d0 - 0.2).abs() < 1e-14);
        assert!((d1 - PI).abs() < 1e-13 && dd1 > 0.0);
        let h = 1e-6;
        let fd = (k.raw(0.7 + h).0 - k.raw(0.7 - h).0) / (2.0 * h);
        assert!((fd - k.raw(0.7).1).abs() < 1e-8);
    }
}
