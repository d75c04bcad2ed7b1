//! Morse index, nullity and Conley-Zehnder index of periodic orbits.
//!
//! Two independent routes are provided. The spectral route solves the
//! pencil `J0 phi' = mu S(t) phi` with `S(t) = Hess H_t(x(t))` by a Fourier
//! Galerkin method and counts eigenvalues in `(0, 1)`. The path route
//! integrates the linearized flow `Z' = -J0 S(t) Z` with a symplectic
//! scheme and reads the Conley-Zehnder index off the lifted eigen-angles of
//! a unitary chart of `Z(t)`.

use std::f64::consts::PI;
use std::ops::SubAssign;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::convex_model::{profile_hamiltonian, GaugeDomain, HamiltonianModel, ProfileKind};
use crate::error::{Error, Result};
use crate::loop_fourier::{FourierLoop, NodeGrid};
use crate::numerics;

/// Tolerance on `|mu - 1|` for counting the nullity.
pub const NULLITY_TOL: f64 = 1e-7;

/// Tolerance for counting zero eigenvalues of the pencil.
const ZERO_TOL: f64 = 1e-9;

/// Spectrum of `J0 phi' = mu S phi` inside a window.
#[derive(Debug, Clone, Serialize)]
pub struct OrbitSpectrum {
    /// Eigenvalues with `|mu| <= window`, sorted, with multiplicity.
    pub eigenvalues: Vec<f64>,
    pub window: f64,
    /// Number of eigenvalues in `(0, 1)` excluding those within the nullity
    /// tolerance of 1.
    pub count_in_unit: usize,
    pub count_eq_1: usize,
    pub count_eq_0: usize,
    /// Fourier cutoff of the discretization.
    pub cutoff: usize,
}

impl OrbitSpectrum {
    fn counts(&self) -> (usize, usize, usize) {
        (self.count_in_unit, self.count_eq_1, self.count_eq_0)
    }
}

/// Indices read from an orbit spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct IndexTriple {
    pub dual_index: usize,
    pub relative_index: usize,
    pub nullity: usize,
}

/// A Fourier cutoff large enough to resolve all eigenvalues up to 2 for
/// orbits of `h` with modes up to `orbit_modes`.
pub fn default_spectrum_cutoff(h: &HamiltonianModel, orbit_modes: usize) -> usize {
    let by_bound = (2.0 * h.h_hi / (2.0 * PI)).ceil() as usize + 6;
    by_bound.max(orbit_modes + 4).max(8)
}

fn pencil_eigenvalues(h: &HamiltonianModel, orbit: &FourierLoop, cutoff: usize) -> Result<Vec<f64>> {
    let n = h.n();
    let d = 2 * n;
    let q = (4 * cutoff + 2).max(4 * orbit.cutoff() + 2).max(64);
    let grid = NodeGrid::new(q);
    let vals = grid.values(orbit);
    let kk = cutoff as i64;
    let modes: Vec<i64> = (-kk..=kk).collect();
    let dim = d * modes.len();
    // Rows of B: the loop value at node j of a unit coefficient, so that
    // S_{kl} = (1/Q) B_k^T S_j B_l.
    let mut b = DMatrix::zeros(q * d, dim);
    for j in 0..q {
        let t = grid.time(j);
        for (i, &k) in modes.iter().enumerate() {
            let r = numerics::rotation_matrix(n, -2.0 * PI * k as f64 * t);
            b.view_mut((j * d, i * d), (d, d)).copy_from(&r);
        }
    }
    let mut sb = DMatrix::zeros(q * d, dim);
    for j in 0..q {
        let s = h.hess(grid.time(j), &vals[j * d..(j + 1) * d]);
        sb.rows_mut(j * d, d).copy_from(&(s * b.rows(j * d, d)));
    }
    let s = b.transpose() * sb / q as f64;
    let s = 0.5 * (&s + s.transpose());
    let chol = s.cholesky().ok_or(Error::ConvexityLoss { min_eigenvalue: f64::NAN })?;
    let l = chol.l();
    let linv = l.clone().try_inverse().ok_or(Error::ConvexityLoss { min_eigenvalue: f64::NAN })?;
    let dvec = DVector::from_iterator(dim, modes.iter().flat_map(|&k| std::iter::repeat_n(2.0 * PI * k as f64, d)));
    let m = &linv * DMatrix::from_diagonal(&dvec) * linv.transpose();
    Ok(numerics::symmetric_eigenvalues(&m))
}

fn spectrum_at(h: &HamiltonianModel, orbit: &FourierLoop, cutoff: usize, window: f64) -> Result<OrbitSpectrum> {
    let all = pencil_eigenvalues(h, orbit, cutoff)?;
    let count_eq_0 = all.iter().filter(|m| m.abs() < ZERO_TOL).count();
    let count_eq_1 = all.iter().filter(|m| (*m - 1.0).abs() < NULLITY_TOL).count();
    let count_in_unit = all.iter().filter(|&&m| (ZERO_TOL..1.0 - NULLITY_TOL).contains(&m)).count();
    let eigenvalues = all.into_iter().filter(|m| m.abs() <= window).collect();
    Ok(OrbitSpectrum { eigenvalues, window, count_in_unit, count_eq_1, count_eq_0, cutoff })
}

/// Spectrum of `J0 phi' = mu S phi` along `orbit` at Fourier cutoff
/// `cutoff`, audited against the doubled cutoff.
pub fn orbit_spectrum(h: &HamiltonianModel, orbit: &FourierLoop, cutoff: usize) -> Result<OrbitSpectrum> {
    let tag = |e: Error| e.at("spectral_index", "orbit_spectrum");
    let window = 2.0;
    let coarse = spectrum_at(h, orbit, cutoff, window).map_err(tag)?;
    let fine = spectrum_at(h, orbit, 2 * cutoff, window).map_err(tag)?;
    if coarse.counts() != fine.counts() {
        return Err(tag(Error::WindowTooSmall { coarse: coarse.counts(), fine: fine.counts() }));
    }
    Ok(coarse)
}

/// Dual index `#{mu in (0, 1)}`, relative index `dual + n` and nullity
/// `#{mu = 1}`.
pub fn morse_index_from_spectrum(spec: &OrbitSpectrum, n: usize) -> IndexTriple {
    IndexTriple { dual_index: spec.count_in_unit, relative_index: spec.count_in_unit + n, nullity: spec.count_eq_1 }
}

/// Samples of a path in `Sp(2n)` starting at the identity.
#[derive(Debug, Clone, Serialize)]
pub struct SymplecticPath {
    pub n: usize,
    pub times: Vec<f64>,
    /// `Z(t_j)` stored column-major.
    #[serde(skip)]
    pub samples: Vec<DMatrix<f64>>,
    /// Continuous lifts of the eigen-angles of the unitary chart at `t = 1`.
    pub final_phases: Vec<f64>,
    /// `|det(I - Z(1))|`.
    pub margin: f64,
    /// `max_j |Z^T J0 Z - J0|`.
    pub symplectic_drift: f64,
}

/// Eigen-angles of the unitary matrix
/// `W = [(Z + I) + i J0 (Z - I)] [(Z + I) - i J0 (Z - I)]^{-1}`, which has
/// eigenvalue 1 exactly when `Z` does and is defined for every symplectic
/// `Z`.
fn chart_angles(z: &DMatrix<f64>) -> Vec<f64> {
    let d = z.nrows();
    let j = numerics::j0_matrix(d / 2);
    let id = DMatrix::<f64>::identity(d, d);
    let p = z + &id;
    let m = &j * (z - &id);
    let to_c = |re: &DMatrix<f64>, im: &DMatrix<f64>, sign: f64| {
        DMatrix::from_fn(d, d, |r, c| Complex64::new(re[(r, c)], sign * im[(r, c)]))
    };
    let num = to_c(&p, &m, 1.0);
    let den = to_c(&p, &m, -1.0);
    let w = num * den.try_inverse().expect("chart denominator is invertible on Sp(2n)");
    unitary_angles(&w)
}

/// Eigen-angles in `(-pi, pi]` of a unitary matrix, sorted.
///
/// For `V = e^{i alpha} W` the matrix `K = i (I - V)(I + V)^{-1}` is
/// Hermitian with eigenvalues `tan(theta / 2)` where `e^{i theta}` runs over
/// the eigenvalues of `V`; the shift `alpha` keeps `-1` away from the
/// spectrum of `V`. Hermitian eigensolvers converge on the repeated
/// eigenvalues that symmetric orbits produce, unlike the complex Schur
/// iteration.
fn unitary_angles(w: &DMatrix<Complex64>) -> Vec<f64> {
    let d = w.nrows();
    let id = DMatrix::<Complex64>::identity(d, d);
    let (_, alpha, v) = (0..12)
        .map(|i| {
            let alpha = 0.37 + 0.5 * i as f64;
            let v = w * Complex64::from_polar(1.0, alpha);
            ((&id + &v).determinant().norm(), alpha, v)
        })
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .expect("candidate shifts are nonempty");
    let inv = (&id + &v).try_inverse().expect("shift keeps I + V invertible");
    let k = (&id - &v) * inv * Complex64::new(0.0, 1.0);
    let herm = (&k + k.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = herm.symmetric_eigenvalues();
    let wrap = |x: f64| -((PI - x).rem_euclid(2.0 * PI) - PI);
    let mut a: Vec<f64> = eig.iter().map(|&kappa| wrap(2.0 * kappa.atan() - alpha)).collect();
    a.sort_by(f64::total_cmp);
    a
}

/// Match new angles in `(-pi, pi]` to previous lifted phases, returning the
/// new lifts and the largest displacement.
fn match_phases(prev: &[f64], angles: &[f64]) -> (Vec<f64>, f64) {
    let k = prev.len();
    let wrap = |x: f64| (x + PI).rem_euclid(2.0 * PI) - PI;
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| wrap(prev[a]).total_cmp(&wrap(prev[b])));
    let mut best = (f64::INFINITY, 0usize);
    for shift in 0..k {
        let worst = (0..k).map(|i| wrap(angles[(i + shift) % k] - prev[order[i]]).abs()).fold(0.0, f64::max);
        if worst < best.0 {
            best = (worst, shift);
        }
    }
    let mut out = vec![0.0; k];
    for i in 0..k {
        let p = prev[order[i]];
        out[order[i]] = p + wrap(angles[(i + best.1) % k] - p);
    }
    (out, best.0)
}

impl SymplecticPath {
    /// Integrate `Z' = -J0 S(t) Z` on `[0, 1]` with the two-stage
    /// Gauss-Legendre scheme in `steps` base steps, refining a step whenever
    /// the chart angles move by more than `pi / 4`. The scheme is symplectic
    /// and fourth-order, which keeps `det(I - Z(1))` accurate enough to
    /// detect degenerate endpoints.
    pub fn integrate(n: usize, steps: usize, s_of_t: impl Fn(f64) -> DMatrix<f64>) -> Self {
        let d = 2 * n;
        let id = DMatrix::<f64>::identity(d, d);
        let j = numerics::j0_matrix(n);
        let r3 = 3f64.sqrt() / 6.0;
        let (c1, c2) = (0.5 - r3, 0.5 + r3);
        let (a11, a12, a21, a22) = (0.25, 0.25 - r3, 0.25 + r3, 0.25);
        let gauss = |t: f64, h: f64, z: &DMatrix<f64>| -> DMatrix<f64> {
            let m1 = -(&j * s_of_t(t + c1 * h));
            let m2 = -(&j * s_of_t(t + c2 * h));
            let mut lhs = DMatrix::<f64>::identity(2 * d, 2 * d);
            lhs.view_mut((0, 0), (d, d)).sub_assign(&m1 * (h * a11));
            lhs.view_mut((0, d), (d, d)).sub_assign(&m1 * (h * a12));
            lhs.view_mut((d, 0), (d, d)).sub_assign(&m2 * (h * a21));
            lhs.view_mut((d, d), (d, d)).sub_assign(&m2 * (h * a22));
            let mut rhs = DMatrix::<f64>::zeros(2 * d, d);
            rhs.view_mut((0, 0), (d, d)).copy_from(&(&m1 * z));
            rhs.view_mut((d, 0), (d, d)).copy_from(&(&m2 * z));
            let k = lhs.lu().solve(&rhs).expect("Gauss-Legendre stage system is invertible for small steps");
            z + (k.rows(0, d) + k.rows(d, d)) * (0.5 * h)
        };
        let mut z = id.clone();
        let mut phases = vec![0.0; d];
        let mut times = vec![0.0];
        let mut samples = vec![z.clone()];
        let mut drift: f64 = 0.0;
        let base = 1.0 / steps as f64;
        let mut t = 0.0;
        while t < 1.0 - 1e-15 {
            let mut h = base.min(1.0 - t);
            loop {
                let zn = gauss(t, h, &z);
                let (lifted, disp) = match_phases(&phases, &chart_angles(&zn));
                if disp < PI / 4.0 || h < 1e-9 {
                    z = zn;
                    phases = lifted;
                    t += h;
                    break;
                }
                h *= 0.5;
            }
            drift = drift.max((z.transpose() * &j * &z - &j).abs().max());
            times.push(t);
            samples.push(z.clone());
        }
        let margin = numerics::abs_det(&(&id - &z));
        Self { n, times, samples, final_phases: phases, margin, symplectic_drift: drift }
    }

    /// The linearized flow along `orbit`.
    pub fn along_orbit(h: &HamiltonianModel, orbit: &FourierLoop, steps: usize) -> Self {
        Self::integrate(h.n(), steps, |t| h.hess(t, &orbit.evaluate(t)))
    }

    /// `e^{-eps J0 t}` on `R^{2n}`.
    pub fn rotation(n: usize, eps: f64, steps: usize) -> Self {
        Self::integrate(n, steps, |_| DMatrix::identity(2 * n, 2 * n) * eps)
    }

    /// The endpoint `Z(1)`.
    pub fn endpoint(&self) -> &DMatrix<f64> {
        self.samples.last().expect("path has samples")
    }
}

/// Conley-Zehnder index of a nondegenerate path, normalized so that
/// `e^{-eps J0 t}` has index `n` for `eps` in `(0, 2 pi)`.
///
/// Every lifted eigen-angle starts at 0, leaves it upwards (the crossing
/// form at `t = 0` is `S(0)/2 > 0`) and can only cross multiples of `2 pi`
/// upwards, so a phase ending in `(2 pi m, 2 pi (m + 1))` contributes
/// `m + 1/2`.
pub fn conley_zehnder(path: &SymplecticPath) -> Result<i64> {
    if !(path.margin > 1e-8) {
        return Err(Error::DegeneratePath { margin: path.margin }.at("spectral_index", "conley_zehnder"));
    }
    let floors: i64 = path.final_phases.iter().map(|f| (f / (2.0 * PI)).floor() as i64).sum();
    Ok(floors + path.n as i64)
}

/// Index and nullity of one profile against the linear reference.
#[derive(Debug, Clone, Serialize)]
pub struct ProfileShiftEntry {
    pub profile: String,
    pub second_derivative_at_1: f64,
    pub dual_index: usize,
    pub nullity: usize,
    pub index_shift: i64,
    pub nullity_drop: i64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProfileShiftReport {
    pub period: f64,
    pub reference_dual_index: usize,
    pub reference_nullity: usize,
    pub entries: Vec<ProfileShiftEntry>,
}

/// Compare index and nullity of the characteristic loop `x_gamma` for
/// `T H_C` and for each profile `phi` with `phi'(1) = T`.
pub fn profile_index_shift(
    domain: &GaugeDomain,
    period: f64,
    x_gamma: &FourierLoop,
    profiles: &[ProfileKind],
) -> Result<ProfileShiftReport> {
    let tag = |e: Error| e.at("spectral_index", "profile_index_shift");
    let reference = profile_hamiltonian(domain, ProfileKind::Linear { eta: period, xi: 0.0 }).map_err(tag)?;
    let cutoff = default_spectrum_cutoff(&reference, x_gamma.cutoff());
    let n = domain.n();
    let base = morse_index_from_spectrum(&orbit_spectrum(&reference, x_gamma, cutoff)?, n);
    let mut entries = Vec::new();
    for kind in profiles {
        let (_, d1, d2) = kind.raw(1.0);
        if (d1 - period).abs() > 1e-9 * period {
            return Err(tag(Error::InvalidInput(format!("profile {kind:?} has phi'(1) = {d1}, expected {period}"))));
        }
        let h = profile_hamiltonian(domain, kind.clone()).map_err(tag)?;
        let cutoff = default_spectrum_cutoff(&h, x_gamma.cutoff()).max(cutoff);
        let idx = morse_index_from_spectrum(&orbit_spectrum(&h, x_gamma, cutoff)?, n);
        entries.push(ProfileShiftEntry {
            profile: kind.describe(),
            second_derivative_at_1: d2,
            dual_index: idx.dual_index,
            nullity: idx.nullity,
            index_shift: idx.dual_index as i64 - base.dual_index as i64,
            nullity_drop: base.nullity as i64 - idx.nullity as i64,
        });
    }
    Ok(ProfileShiftReport { period, reference_dual_index: base.dual_index, reference_nullity: base.nullity, entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convex_model::{ellipsoid_gauge, QuadraticHamiltonian};

    #[test]
    fn rotation_paths() {
        assert_eq!(conley_zehnder(&SymplecticPath::rotation(1, 1.0, 64)).unwrap(), 1);
        assert_eq!(conley_zehnder(&SymplecticPath::rotation(1, 8.0, 64)).unwrap(), 3);
        assert_eq!(conley_zehnder(&SymplecticPath::rotation(2, 8.0, 64)).unwrap(), 6);
        let deg = SymplecticPath::rotation(1, 2.0 * PI, 4096);
        assert!(matches!(conley_zehnder(&deg).unwrap_err().root(), Error::DegeneratePath { .. }));
    }

    #[test]
    fn chart_angles_of_rotation() {
        let z = numerics::rotation_matrix(1, -0.4);
        let a = chart_angles(&z);
        assert!((a[0] - 0.4).abs() < 1e-12 && (a[1] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn unitary_angles_with_repeated_eigenvalues() {
        let angles = [0.3, 0.3, -2.9, PI];
        let w = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(4, angles.iter().map(|&a| Complex64::from_polar(1.0, a))));
        let got = unitary_angles(&w);
        let mut want = angles.to_vec();
        want.sort_by(f64::total_cmp);
        for (g, e) in got.iter().zip(&want) {
            assert!((g - e).abs() < 1e-12, "{got:?}");
        }
    }

    #[test]
    fn quadratic_origin_spectrum() {
        let h = HamiltonianModel::new(QuadraticHamiltonian::scalar(1, 4.0)).unwrap();
        let s = orbit_spectrum(&h, &FourierLoop::zeros(1, 1), 10).unwrap();
        assert_eq!(s.count_eq_0, 2);
        assert_eq!(morse_index_from_spectrum(&s, 1), IndexTriple { dual_index: 2, relative_index: 3, nullity: 0 });
        for m in &s.eigenvalues {
            let k = m * 4.0 / PI;
            assert!((k - k.round()).abs() < 1e-10);
        }
    }

    #[test]
    fn linear_profile_circle_is_degenerate() {
        let disk = ellipsoid_gauge(&[1.0]).unwrap();
        let h = profile_hamiltonian(&disk, ProfileKind::Linear { eta: PI, xi: 0.0 }).unwrap();
        let x = FourierLoop::single_mode(1, 1, &[1.0, 0.0]);
        let idx = morse_index_from_spectrum(&orbit_spectrum(&h, &x, 10).unwrap(), 1);
        assert_eq!(idx, IndexTriple { dual_index: 0, relative_index: 1, nullity: 2 });
    }
}
