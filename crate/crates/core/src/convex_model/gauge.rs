use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics;

/// Shape families with closed-form gauges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GaugeKind {
    /// `sum (q_i^2 + p_i^2) / r_i^2`.
    Ellipsoid { radii: Vec<f64> },
    /// `|z|^2 + eps * chi(z) * sum_j z_j^4 / |z|^2` evaluated at `z / scale`,
    /// where `chi` switches the quartic term off near the origin.
    PerturbedBall { n: usize, eps: f64, scale: f64 },
}

/// The positively 2-homogeneous function equal to 1 on the boundary of a
/// convex body containing the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaugeDomain {
    pub kind: GaugeKind,
    /// Relative radius `rho` of the caps: profiles built on the gauge are
    /// replaced by quadratic-type caps below the gauge level `rho^2`, i.e.
    /// inside `rho C`, and the perturbed-ball gauge is smoothed inside the
    /// same body-relative ball. Scaling the body leaves `rho` unchanged.
    pub smoothing_radius: f64,
}

/// Gauge of the ellipsoid with the given radii in the planes `(q_i, p_i)`.
pub fn ellipsoid_gauge(radii: &[f64]) -> Result<GaugeDomain> {
    if radii.is_empty() || radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(Error::InvalidInput(format!("ellipsoid radii must be positive, got {radii:?}")));
    }
    Ok(GaugeDomain { kind: GaugeKind::Ellipsoid { radii: radii.to_vec() }, smoothing_radius: 0.05 })
}

/// Gauge of a smooth perturbation of the unit ball of size `eps`.
pub fn perturbed_ball_gauge(n: usize, eps: f64) -> Result<GaugeDomain> {
    if n == 0 || !(eps.abs() < 0.2) {
        return Err(Error::InvalidInput(format!("perturbed ball needs n >= 1 and |eps| < 0.2, got n={n}, eps={eps}")));
    }
    Ok(GaugeDomain { kind: GaugeKind::PerturbedBall { n, eps, scale: 1.0 }, smoothing_radius: 0.05 })
}

impl GaugeDomain {
    pub fn n(&self) -> usize {
        match &self.kind {
            GaugeKind::Ellipsoid { radii } => radii.len(),
            GaugeKind::PerturbedBall { n, .. } => *n,
        }
    }

    pub fn with_smoothing_radius(mut self, rho: f64) -> Self {
        self.smoothing_radius = rho;
        self
    }

    /// The domain `lambda * C`.
    pub fn scaled(&self, lambda: f64) -> GaugeDomain {
        let kind = match &self.kind {
            GaugeKind::Ellipsoid { radii } => GaugeKind::Ellipsoid { radii: radii.iter().map(|r| r * lambda).collect() },
            GaugeKind::PerturbedBall { n, eps, scale } => GaugeKind::PerturbedBall { n: *n, eps: *eps, scale: scale * lambda },
        };
        GaugeDomain { kind, smoothing_radius: self.smoothing_radius }
    }

    pub fn describe(&self) -> String {
        match &self.kind {
            GaugeKind::Ellipsoid { radii } => format!("ellipsoid{radii:?}"),
            GaugeKind::PerturbedBall { n, eps, scale } => format!("perturbed_ball(n={n}, eps={eps}, scale={scale})"),
        }
    }

    /// Whether the gauge is a quadratic form, in which case it is smooth at
    /// the origin without modification.
    pub fn is_quadratic(&self) -> bool {
        matches!(self.kind, GaugeKind::Ellipsoid { .. })
    }

    pub fn gauge_eval(&self, z: &[f64]) -> f64 {
        self.gauge_all(z, 0).0
    }

    pub fn gauge_grad(&self, z: &[f64]) -> DVector<f64> {
        self.gauge_all(z, 1).1
    }

    pub fn gauge_hess(&self, z: &[f64]) -> DMatrix<f64> {
        self.gauge_all(z, 2).2
    }

    /// Minkowski gauge `sqrt(H_C)`.
    pub fn minkowski(&self, z: &[f64]) -> f64 {
        self.gauge_eval(z).max(0.0).sqrt()
    }

    /// Value, gradient and Hessian up to the requested order.
    pub fn gauge_all(&self, z: &[f64], order: usize) -> (f64, DVector<f64>, DMatrix<f64>) {
        let d = z.len();
        match &self.kind {
            GaugeKind::Ellipsoid { radii } => {
                let mut v = 0.0;
                let mut g = DVector::zeros(d);
                let mut h = DMatrix::zeros(d, d);
                for (i, r) in radii.iter().enumerate() {
                    let a = 1.0 / (r * r);
                    for j in [2 * i, 2 * i + 1] {
                        v += a * z[j] * z[j];
                        if order >= 1 {
                            g[j] = 2.0 * a * z[j];
                        }
                        if order >= 2 {
                            h[(j, j)] = 2.0 * a;
                        }
                    }
                }
                (v, g, h)
            }
            GaugeKind::PerturbedBall { eps, scale, .. } => {
                let u: Vec<f64> = z.iter().map(|v| v / scale).collect();
                let rho = self.smoothing_radius;
                let (v, g, h) = perturbed_ball_unit(&u, *eps, rho, order);
                (v, g / *scale, h / (scale * scale))
            }
        }
    }

    /// Closed-characteristic actions up to `t_max`, when known in closed
    /// form.
    pub fn known_spectrum(&self, t_max: f64) -> Option<Vec<f64>> {
        match &self.kind {
            GaugeKind::Ellipsoid { radii } => {
                let mut out = Vec::new();
                for r in radii {
                    let base = PI * r * r;
                    let mut m = 1.0;
                    while m * base <= t_max * (1.0 + 1e-12) {
                        out.push(m * base);
                        m += 1.0;
                    }
                }
                out.sort_by(f64::total_cmp);
                Some(out)
            }
            GaugeKind::PerturbedBall { eps, .. } if *eps == 0.0 => {
                let mut out = Vec::new();
                let mut m = 1.0;
                while m * PI <= t_max * (1.0 + 1e-12) {
                    out.push(m * PI);
                    m += 1.0;
                }
                Some(out)
            }
            GaugeKind::PerturbedBall { .. } => None,
        }
    }

    /// Smallest distance from the origin to the boundary, estimated from a
    /// deterministic sample of directions (exact for ellipsoids).
    pub fn inradius(&self) -> f64 {
        match &self.kind {
            GaugeKind::Ellipsoid { radii } => radii.iter().copied().fold(f64::INFINITY, f64::min),
            GaugeKind::PerturbedBall { .. } => {
                let mut rng = ChaCha8Rng::seed_from_u64(17);
                let d = 2 * self.n();
                let mut best = f64::INFINITY;
                for _ in 0..2000 {
                    let u = numerics::unit_vector(&mut rng, d);
                    best = best.min(1.0 / self.gauge_eval(&u).sqrt());
                }
                best
            }
        }
    }
}

/// Perturbed unit-ball gauge at unit scale with the quartic term blended
/// out inside radius `rho`.
fn perturbed_ball_unit(z: &[f64], eps: f64, rho: f64, order: usize) -> (f64, DVector<f64>, DMatrix<f64>) {
    let d = z.len();
    let zv = DVector::from_column_slice(z);
    let r2 = zv.norm_squared();
    let base_v = r2;
    let base_g = 2.0 * &zv;
    let base_h = 2.0 * DMatrix::identity(d, d);
    // Blending variable s = (r2 / rho^2 - 1/4) / (3/4).
    let denom = 0.75 * rho * rho;
    let s = (r2 / (rho * rho) - 0.25) / 0.75;
    let (chi, dchi, ddchi) = numerics::smoothstep(s);
    if chi == 0.0 && dchi == 0.0 {
        return (base_v, base_g, base_h);
    }
    let f: f64 = z.iter().map(|v| v.powi(4)).sum();
    let grad_f = DVector::from_iterator(d, z.iter().map(|v| 4.0 * v.powi(3)));
    let p = f / r2;
    let grad_p = &grad_f / r2 - 2.0 * f / (r2 * r2) * &zv;
    let grad_s = (2.0 / denom) * &zv;
    let e = chi * p;
    let grad_e = dchi * p * &grad_s + chi * &grad_p;
    let mut hess_e = DMatrix::zeros(d, d);
    if order >= 2 {
        let hess_f = DMatrix::from_diagonal(&DVector::from_iterator(d, z.iter().map(|v| 12.0 * v * v)));
        let zz = &zv * zv.transpose();
        let cross = &grad_f * zv.transpose();
        let hess_p = hess_f / r2 - 2.0 * (&cross + cross.transpose()) / (r2 * r2)
            - 2.0 * f / (r2 * r2) * DMatrix::identity(d, d)
            + 8.0 * f / (r2 * r2 * r2) * &zz;
        let hess_s = (2.0 / denom) * DMatrix::identity(d, d);
        let gs_gp = &grad_s * grad_p.transpose();
        hess_e = ddchi * p * &grad_s * grad_s.transpose() + dchi * p * hess_s + dchi * (&gs_gp + gs_gp.transpose()) + chi * hess_p;
    }
    (base_v + eps * e, base_g + eps * grad_e, base_h + eps * hess_e)
}

/// Whether the slope `eta` stays at distance more than `1e-6` from the
/// action spectrum of the domain.
pub fn slope_nonresonance_check(domain: &GaugeDomain, eta: f64) -> Result<bool> {
    let spectrum = domain
        .known_spectrum(eta.abs() + 1.0)
        .ok_or(Error::SpectrumUnavailable)
        .map_err(|e| e.at("convex_model", "slope_nonresonance_check"))?;
    Ok(spectrum.iter().all(|a| (a - eta).abs() > 1e-6))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ellipsoid_spectrum_and_resonance() {
        let disk = ellipsoid_gauge(&[1.0]).unwrap();
        let s = disk.known_spectrum(10.0).unwrap();
        assert!((s[0] - PI).abs() < 1e-15 && (s[1] - 2.0 * PI).abs() < 1e-15 && s.len() == 3);
        assert!(slope_nonresonance_check(&disk, 4.0).unwrap());
        assert!(!slope_nonresonance_check(&disk, PI).unwrap());
        let e = ellipsoid_gauge(&[1.0, 2.0]).unwrap();
        assert!(!slope_nonresonance_check(&e, 2.0 * PI).unwrap());
        let scaled = e.scaled(0.5).known_spectrum(4.0).unwrap();
        assert!((scaled[0] - 0.25 * PI).abs() < 1e-14);
    }

    #[test]
    fn perturbed_ball_has_no_oracle() {
        let g = perturbed_ball_gauge(1, 0.01).unwrap();
        assert!(matches!(slope_nonresonance_check(&g, 4.0).unwrap_err().root(), Error::SpectrumUnavailable));
    }
}
