//! Location of critical points of the reduced dual functional, their lift
//! to periodic orbits with index data, and global minimization for the
//! minimal-action computation.
//!
//! All solvers work in `H1`-scaled head coordinates `u = W^{1/2} c` with
//! `W = diag(4 pi^2 k^2)`, where the reduced gradient is `F = W^{-1/2} g`
//! and its Jacobian `W^{-1/2} Hess W^{-1/2}` is symmetric.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::action_functionals::{palais_smale_audit, shooting_residual};
use crate::convex_model::{profile_hamiltonian, GaugeDomain, HamiltonianModel, ProfileKind};
use crate::error::{Error, Result};
use crate::loop_fourier::FourierLoop;
use crate::numerics;
use crate::reduction::{inertia, ReducedEval, ReducedManifold, HESSIAN_ZERO_TOL};
use crate::spectral_index::{conley_zehnder, default_spectrum_cutoff, morse_index_from_spectrum, orbit_spectrum, SymplecticPath};

/// Options of the multistart search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Number of random head points used as starts.
    pub random_seeds: usize,
    pub seed: u64,
    /// Seed with circles `e^{-2 pi k J0 t} v` in every symplectic plane.
    pub circle_seeds: bool,
    /// Phases per plane for circle seeds of time-dependent Hamiltonians.
    pub circle_phases: usize,
    /// Length scale of the seeds; defaults to the sampling scale of the
    /// Hamiltonian.
    pub seed_scale: Option<f64>,
    pub max_iterations: usize,
    /// `H1` norm of the reduced gradient that declares a critical point.
    pub gradient_tolerance: f64,
    /// `H1` distance modulo time shift under which two records merge.
    pub dedup_distance: f64,
    /// Action difference under which two records may merge.
    pub dedup_action: f64,
    /// Reject degenerate records with `DegenerateOrbit`.
    pub nondegenerate: bool,
    pub workers: Option<usize>,
    pub spectrum_cutoff: Option<usize>,
    pub cz_steps: usize,
    pub shooting_steps: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            random_seeds: 8,
            seed: 7,
            circle_seeds: true,
            circle_phases: 8,
            seed_scale: None,
            max_iterations: 80,
            gradient_tolerance: 1e-9,
            dedup_distance: 1e-5,
            dedup_action: 1e-9,
            nondegenerate: false,
            workers: None,
            spectrum_cutoff: None,
            cz_steps: 4096,
            shooting_steps: 4000,
        }
    }
}

/// Residuals attached to a record.
#[derive(Debug, Clone, Serialize)]
pub struct OrbitResiduals {
    pub reduced_gradient: f64,
    pub tail_gradient: f64,
    pub orbit: f64,
    pub lift_deviation: f64,
    pub shooting: f64,
    /// `|Psi(x) - Phi(x + v0)|`.
    pub action_gap: f64,
    pub symplectic_drift: f64,
}

/// A critical point of the reduced functional lifted to a periodic orbit.
#[derive(Debug, Clone, Serialize)]
pub struct OrbitRecord {
    /// Head coordinates of `x`.
    pub head: Vec<f64>,
    /// Tail coordinates of `Y(x)`.
    pub tail: Vec<f64>,
    pub v0: Vec<f64>,
    /// The periodic orbit `x + Y(x) + v0`.
    pub orbit: FourierLoop,
    /// Reduced value `psi(x)`, equal to the direct action of the orbit.
    pub action: f64,
    pub direct_action: f64,
    /// Morse index of the reduced Hessian.
    pub morse_index: usize,
    pub nullity: usize,
    /// Index and nullity of the full zero-mean Hessian.
    pub full_index: usize,
    pub full_nullity: usize,
    /// Dual index and nullity from the orbit spectrum.
    pub spectral_index: usize,
    pub spectral_nullity: usize,
    /// `spectral_index + n`.
    pub relative_index: usize,
    /// Conley-Zehnder index from the linearized flow, absent for degenerate
    /// paths.
    pub cz_index: Option<i64>,
    pub path_margin: f64,
    pub degenerate: bool,
    pub residuals: OrbitResiduals,
    /// Seed that produced the record.
    pub seed: usize,
}

impl OrbitRecord {
    pub fn head_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.head)
    }

    /// Whether the orbit is a constant loop.
    pub fn is_constant(&self) -> bool {
        self.orbit.zero_mean_part().h1_norm() < 1e-8
    }
}

/// Outcome of [`find_critical_points`].
#[derive(Debug, Clone, Serialize)]
pub struct SearchReport {
    pub records: Vec<OrbitRecord>,
    /// Seeds that failed, with the error text.
    pub failures: Vec<(usize, String)>,
    /// `(gradient norm, head H1 norm)` along all solver iterations.
    #[serde(skip)]
    pub trace: Vec<(f64, f64)>,
    pub palais_smale_bound: f64,
    pub palais_smale_ok: bool,
}

/// Scaled state at a head point.
struct Scaled {
    eval: ReducedEval,
    f: DVector<f64>,
    jac: Option<DMatrix<f64>>,
}

fn sqrt_weights(rm: &ReducedManifold) -> DVector<f64> {
    rm.head_weights().map(f64::sqrt)
}

fn scaled_eval(rm: &ReducedManifold, x: &DVector<f64>, hessian: bool, warm: Option<&ReducedEval>) -> Result<Scaled> {
    let sw = sqrt_weights(rm);
    let eval = rm.evaluate(x, hessian, warm.map(|w| &w.tail))?;
    let f = eval.gradient.component_div(&sw);
    let jac = eval.hessian.as_ref().map(|h| {
        let inv = DMatrix::from_diagonal(&sw.map(|v| 1.0 / v));
        &inv * h * &inv
    });
    Ok(Scaled { eval, f, jac })
}

/// Pseudo-inverse Newton step `-J^+ F` dropping eigenvalues below
/// `cut * max |lambda|`.
fn pseudo_newton(values: &[f64], vectors: &DMatrix<f64>, f: &DVector<f64>, cut: f64) -> DVector<f64> {
    let scale = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut p = DVector::zeros(f.len());
    for (i, &l) in values.iter().enumerate() {
        if l.abs() > cut * scale {
            let v = vectors.column(i);
            p -= v * (v.dot(f) / l);
        }
    }
    p
}

/// Powell dogleg on `F(u) = 0` with merit `|F|^2`, from head point `x0`.
fn newton_dogleg(
    rm: &ReducedManifold,
    x0: &DVector<f64>,
    cfg: &SearchConfig,
    trace: &mut Vec<(f64, f64)>,
) -> Result<(DVector<f64>, ReducedEval)> {
    let sw = sqrt_weights(rm);
    let mut x = x0.clone();
    let mut cur = scaled_eval(rm, &x, true, None)?;
    let mut radius = 0.5 * x.component_mul(&sw).norm().max(0.1);
    for _ in 0..cfg.max_iterations {
        let fnorm = cur.f.norm();
        trace.push((cur.eval.gradient_norm, x.component_mul(&sw).norm()));
        if cur.eval.gradient_norm < cfg.gradient_tolerance {
            return Ok((x, cur.eval));
        }
        let jac = cur.jac.as_ref().expect("hessian requested");
        let (vals, vecs) = numerics::sorted_symmetric_eigen(jac);
        let pn = pseudo_newton(&vals, &vecs, &cur.f, 1e-10);
        let mut accepted = false;
        for _ in 0..30 {
            let p = if pn.norm() <= radius {
                pn.clone()
            } else {
                let g = jac * &cur.f;
                let jg = jac * &g;
                let alpha = g.norm_squared() / jg.norm_squared().max(1e-300);
                let pc = -alpha * &g;
                if pc.norm() >= radius {
                    -radius * &g / g.norm()
                } else {
                    let dir = &pn - &pc;
                    let (a, b, c) = (dir.norm_squared(), 2.0 * pc.dot(&dir), pc.norm_squared() - radius * radius);
                    let tau = (-b + (b * b - 4.0 * a * c).max(0.0).sqrt()) / (2.0 * a);
                    &pc + tau * dir
                }
            };
            let pred = fnorm * fnorm - (&cur.f + jac * &p).norm_squared();
            let xt = &x + p.component_div(&sw);
            let trial = match scaled_eval(rm, &xt, true, Some(&cur.eval)) {
                Ok(t) => t,
                Err(e) if matches!(e.root(), Error::CoercivityViolation | Error::NewtonDivergence { .. } | Error::NoConvergence { .. }) => {
                    radius *= 0.25;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let actual = fnorm * fnorm - trial.f.norm_squared();
            let rho = if pred > 0.0 { actual / pred } else { -1.0 };
            let pnorm = p.norm();
            if rho < 0.25 {
                radius = 0.25 * pnorm;
            } else if rho > 0.75 && pnorm >= 0.9 * radius {
                radius *= 2.0;
            }
            if rho > 1e-4 || (actual >= 0.0 && trial.eval.gradient_norm < cfg.gradient_tolerance) {
                x = xt;
                cur = trial;
                accepted = true;
                break;
            }
            if radius < 1e-14 {
                break;
            }
        }
        if !accepted {
            break;
        }
    }
    Err(Error::NoConvergence { seed: 0, gradient: cur.eval.gradient_norm })
}

/// Exact trust-region step from the eigen-decomposition of the model
/// Hessian.
fn trust_region_step(values: &[f64], vectors: &DMatrix<f64>, f: &DVector<f64>, radius: f64) -> DVector<f64> {
    let coeffs: Vec<f64> = (0..values.len()).map(|i| vectors.column(i).dot(f)).collect();
    let lmin = values[0];
    let scale = values.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    let step_for = |sigma: f64| -> DVector<f64> {
        let mut p = DVector::zeros(f.len());
        for (i, &l) in values.iter().enumerate() {
            let den = l + sigma;
            if den.abs() > 1e-12 * scale {
                p -= vectors.column(i) * (coeffs[i] / den);
            }
        }
        p
    };
    if lmin > -1e-10 * scale {
        let p = step_for(0.0);
        if p.norm() <= radius {
            return p;
        }
    }
    let mut lo = (-lmin).max(0.0);
    let p_lo = step_for(lo + 1e-12 * scale);
    if p_lo.norm() <= radius {
        // Hard case: fill the remaining length along the lowest eigenvector.
        let extra = (radius * radius - p_lo.norm_squared()).max(0.0).sqrt();
        return p_lo + vectors.column(0) * extra;
    }
    let mut hi = lo + 1.0;
    while step_for(hi).norm() > radius {
        hi = lo + 2.0 * (hi - lo);
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if step_for(mid).norm() > radius {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    step_for(hi)
}

/// Trust-region minimization of `psi` from `x0`, escaping saddles along
/// negative curvature.
fn trust_region_minimize(
    rm: &ReducedManifold,
    x0: &DVector<f64>,
    cfg: &SearchConfig,
    trace: &mut Vec<(f64, f64)>,
) -> Result<(DVector<f64>, ReducedEval)> {
    let sw = sqrt_weights(rm);
    let mut x = x0.clone();
    let mut cur = scaled_eval(rm, &x, true, None)?;
    let mut radius = 0.5 * x.component_mul(&sw).norm().max(0.1);
    for _ in 0..4 * cfg.max_iterations {
        trace.push((cur.eval.gradient_norm, x.component_mul(&sw).norm()));
        let jac = cur.jac.clone().expect("hessian requested");
        let (vals, vecs) = numerics::sorted_symmetric_eigen(&jac);
        let scale = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let negative = vals.first().is_some_and(|&l| l < -HESSIAN_ZERO_TOL.max(1e-9 * scale));
        if cur.eval.gradient_norm < cfg.gradient_tolerance && !negative {
            return Ok((x, cur.eval));
        }
        // Close to a minimizer the decrease of psi drops below its rounding
        // level before the gradient is resolved; finish on the gradient.
        if cur.eval.gradient_norm < 1e-6 && vals.first().is_some_and(|&l| l > -1e-6 * scale) {
            return newton_dogleg(rm, &x, cfg, trace);
        }
        let p = if cur.eval.gradient_norm < cfg.gradient_tolerance {
            vecs.column(0) * radius.min(0.1)
        } else {
            trust_region_step(&vals, &vecs, &cur.f, radius)
        };
        let pred = -(cur.f.dot(&p) + 0.5 * p.dot(&(&jac * &p)));
        let xt = &x + p.component_div(&sw);
        let trial = match scaled_eval(rm, &xt, true, Some(&cur.eval)) {
            Ok(t) => t,
            Err(e) if matches!(e.root(), Error::CoercivityViolation | Error::NewtonDivergence { .. } | Error::NoConvergence { .. }) => {
                radius *= 0.25;
                continue;
            }
            Err(e) => return Err(e),
        };
        let actual = cur.eval.value - trial.eval.value;
        let rho = if pred > 0.0 { actual / pred } else if actual > 0.0 { 1.0 } else { -1.0 };
        let pnorm = p.norm();
        if rho < 0.25 {
            radius = 0.25 * pnorm;
        } else if rho > 0.75 && pnorm >= 0.9 * radius {
            radius *= 2.0;
        }
        let tiny = pred.abs() < 1e-15 * (1.0 + cur.eval.value.abs());
        if rho > 1e-4 || (tiny && trial.eval.gradient_norm <= cur.eval.gradient_norm) {
            x = xt;
            cur = trial;
        } else if radius < 1e-14 {
            break;
        }
    }
    if cur.eval.gradient_norm < 1e-6 {
        // Finish a slowly converging minimizer with Newton on the gradient.
        return newton_dogleg(rm, &x, cfg, trace);
    }
    Err(Error::NoConvergence { seed: 0, gradient: cur.eval.gradient_norm })
}

/// Head coordinates of the circle `e^{-2 pi k J0 t} v` with `v` the unit
/// vector at angle `phase` in plane `plane`.
pub fn circle_direction(rm: &ReducedManifold, k: usize, plane: usize, phase: f64) -> DVector<f64> {
    let mut v = vec![0.0; 2 * rm.n()];
    v[2 * plane] = phase.cos();
    v[2 * plane + 1] = phase.sin();
    rm.head_coords(&FourierLoop::single_mode(rm.m, k as i64, &v))
}

/// Scales `s` in `[s_min, s_max]` at which `d/ds psi(s v)` changes sign.
pub fn ray_critical_scales(rm: &ReducedManifold, v: &DVector<f64>, s_min: f64, s_max: f64, samples: usize) -> Vec<f64> {
    let slope = |s: f64, warm: Option<&ReducedEval>| rm.evaluate(&(v * s), false, warm.map(|w| &w.tail)).map(|e| (e.gradient.dot(v), e));
    let grid: Vec<f64> = (0..samples).map(|i| s_min * (s_max / s_min).powf(i as f64 / (samples - 1) as f64)).collect();
    let mut prev: Option<(f64, f64, ReducedEval)> = None;
    let mut out = Vec::new();
    for &s in &grid {
        let Ok((d, e)) = slope(s, prev.as_ref().map(|p| &p.2)) else { break };
        if let Some((sp, dp, ep)) = &prev {
            if dp.signum() != d.signum() {
                let (mut a, mut b, mut da) = (*sp, s, *dp);
                let mut warm = ep.clone();
                for _ in 0..30 {
                    let mid = 0.5 * (a + b);
                    let Ok((dm, em)) = slope(mid, Some(&warm)) else { break };
                    if dm.signum() == da.signum() {
                        a = mid;
                        da = dm;
                    } else {
                        b = mid;
                    }
                    warm = em;
                }
                out.push(0.5 * (a + b));
            }
        }
        prev = Some((s, d, e));
    }
    out
}

/// Scale minimizing `psi(s v)` over a logarithmic grid in
/// `[s_min, s_max]`, refined by golden-section search.
pub fn ray_minimum(rm: &ReducedManifold, v: &DVector<f64>, s_min: f64, s_max: f64, samples: usize) -> Option<f64> {
    let val = |s: f64| rm.evaluate(&(v * s), false, None).map(|e| e.value).ok();
    let grid: Vec<f64> = (0..samples).map(|i| s_min * (s_max / s_min).powf(i as f64 / (samples - 1) as f64)).collect();
    let vals: Vec<Option<f64>> = grid.iter().map(|&s| val(s)).collect();
    let (best, _) = vals.iter().enumerate().filter_map(|(i, v)| v.map(|v| (i, v))).min_by(|a, b| a.1.total_cmp(&b.1))?;
    let (mut a, mut b) = (grid[best.saturating_sub(1)], grid[(best + 1).min(samples - 1)]);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..40 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        match (val(c), val(d)) {
            (Some(fc), Some(fd)) if fc < fd => b = d,
            (Some(_), Some(_)) => a = c,
            _ => break,
        }
    }
    Some(0.5 * (a + b))
}

/// Shift head coordinates by `theta` in time.
fn shift_head(rm: &ReducedManifold, x: &DVector<f64>, theta: f64) -> DVector<f64> {
    rm.head_coords(&rm.head_loop(x).shift_time(theta))
}

/// Time shift normalizing the phase of the first coefficient plane whose
/// complex value is not negligible to be real and nonnegative.
fn normalize_phase(rm: &ReducedManifold, x: &DVector<f64>) -> DVector<f64> {
    let l = rm.head_loop(x);
    let scale = x.amax().max(1e-300);
    for k in 1..=rm.n_head as i64 {
        let c = l.coeff(k);
        for plane in 0..rm.n() {
            let (re, im) = (c[2 * plane], c[2 * plane + 1]);
            if re.hypot(im) > 1e-6 * scale {
                // The shift by theta multiplies the coefficient by e^{-2 pi i k theta}.
                let theta = im.atan2(re) / (2.0 * PI * k as f64);
                return shift_head(rm, x, theta);
            }
        }
    }
    x.clone()
}

/// `H1` distance between head points, modulo time shift when `autonomous`.
pub fn shift_distance(rm: &ReducedManifold, a: &DVector<f64>, b: &DVector<f64>, autonomous: bool) -> f64 {
    let sw = sqrt_weights(rm);
    let dist = |b: &DVector<f64>| (a - b).component_mul(&sw).norm();
    if !autonomous {
        return dist(b);
    }
    let samples = 360;
    let (mut best_t, mut best) = (0.0, f64::INFINITY);
    for i in 0..samples {
        let t = i as f64 / samples as f64;
        let d = dist(&shift_head(rm, b, t));
        if d < best {
            best = d;
            best_t = t;
        }
    }
    let (mut lo, mut hi) = (best_t - 1.0 / samples as f64, best_t + 1.0 / samples as f64);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let c = hi - g * (hi - lo);
        let d = lo + g * (hi - lo);
        if dist(&shift_head(rm, b, c)) < dist(&shift_head(rm, b, d)) {
            hi = d;
        } else {
            lo = c;
        }
    }
    best.min(dist(&shift_head(rm, b, 0.5 * (lo + hi))))
}

/// Lift a converged head point and attach indices and residuals.
pub fn build_record(rm: &ReducedManifold, eval: &ReducedEval, x: &DVector<f64>, cfg: &SearchConfig, seed: usize) -> Result<OrbitRecord> {
    let h = rm.h();
    let n = rm.n();
    let lift = rm.lift(eval)?;
    let hess = match &eval.hessian {
        Some(hs) => hs.clone(),
        None => rm.evaluate(x, true, Some(&eval.tail))?.hessian.expect("requested"),
    };
    let reduced = inertia(&rm.scaled_head_spectrum(&hess), HESSIAN_ZERO_TOL);
    let full = inertia(&rm.full_spectrum(&eval.tail), HESSIAN_ZERO_TOL);
    let cutoff = cfg.spectrum_cutoff.unwrap_or_else(|| default_spectrum_cutoff(h, rm.m));
    let spectrum = orbit_spectrum(h, &lift.orbit, cutoff)?;
    let idx = morse_index_from_spectrum(&spectrum, n);
    let path = SymplecticPath::along_orbit(h, &lift.orbit, cfg.cz_steps);
    let cz_index = conley_zehnder(&path).ok();
    let direct = rm.ctx.direct_action(&lift.orbit)?;
    let degenerate = idx.nullity > 0 || reduced.zero > 0 || cz_index.is_none();
    if cfg.nondegenerate && degenerate {
        return Err(Error::DegenerateOrbit { nullity: idx.nullity.max(reduced.zero) }.at("critical_points", "find_critical_points"));
    }
    let tail_coords = eval.tail.y.iter().copied().collect();
    Ok(OrbitRecord {
        head: x.iter().copied().collect(),
        tail: tail_coords,
        v0: lift.v0.clone(),
        orbit: lift.orbit.clone(),
        action: eval.value,
        direct_action: direct,
        morse_index: reduced.negative,
        nullity: reduced.zero,
        full_index: full.negative,
        full_nullity: full.zero,
        spectral_index: idx.dual_index,
        spectral_nullity: idx.nullity,
        relative_index: idx.relative_index,
        cz_index,
        path_margin: path.margin,
        degenerate,
        residuals: OrbitResiduals {
            reduced_gradient: eval.gradient_norm,
            tail_gradient: eval.tail.tail_residual,
            orbit: lift.orbit_residual,
            lift_deviation: lift.deviation,
            shooting: shooting_residual(h, &lift.orbit, cfg.shooting_steps),
            action_gap: (eval.value - direct).abs(),
            symplectic_drift: path.symplectic_drift,
        },
        seed,
    })
}

/// Seed head points: the origin, circles in every plane for every head
/// mode at the scales where the radial derivative of `psi` vanishes, and
/// random points.
pub fn search_seeds(rm: &ReducedManifold, cfg: &SearchConfig) -> Vec<DVector<f64>> {
    let dim = rm.head_dim();
    let scale = cfg.seed_scale.unwrap_or_else(|| rm.h().oracle().sample_scale());
    let mut seeds = vec![DVector::zeros(dim)];
    if dim == 0 {
        return seeds;
    }
    if cfg.circle_seeds {
        let phases = if rm.h().time_dependent { cfg.circle_phases.max(1) } else { 1 };
        let mut dirs = Vec::new();
        for k in 1..=rm.n_head {
            for plane in 0..rm.n() {
                for ph in 0..phases {
                    dirs.push(circle_direction(rm, k, plane, 2.0 * PI * ph as f64 / phases as f64));
                }
            }
        }
        let found: Vec<Vec<DVector<f64>>> = dirs
            .par_iter()
            .map(|v| ray_critical_scales(rm, v, 1e-3 * scale, 3.0 * scale, 28).into_iter().map(|s| v * s).collect())
            .collect();
        seeds.extend(found.into_iter().flatten());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let sw = sqrt_weights(rm);
    for _ in 0..cfg.random_seeds {
        let u = numerics::unit_vector(&mut rng, dim);
        let r: f64 = 2.0 * PI * scale * rng.random::<f64>().max(0.05);
        seeds.push(DVector::from_iterator(dim, u.iter().zip(sw.iter()).map(|(a, w)| r * a / w)));
    }
    seeds
}

fn with_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match workers {
        Some(w) if w > 0 => match rayon::ThreadPoolBuilder::new().num_threads(w).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        },
        _ => f(),
    }
}

type SeedOutcome = (usize, std::result::Result<(DVector<f64>, ReducedEval), Error>, Vec<(f64, f64)>);

/// Multistart Newton search for critical points of `psi`, deduplicated
/// modulo time shift for autonomous Hamiltonians.
pub fn find_critical_points(rm: &ReducedManifold, cfg: &SearchConfig) -> Result<SearchReport> {
    with_pool(cfg.workers, || find_inner(rm, cfg, &search_seeds(rm, cfg)))
}

/// [`find_critical_points`] from explicit seeds.
pub fn find_critical_points_from(rm: &ReducedManifold, cfg: &SearchConfig, seeds: &[DVector<f64>]) -> Result<SearchReport> {
    with_pool(cfg.workers, || find_inner(rm, cfg, seeds))
}

fn find_inner(rm: &ReducedManifold, cfg: &SearchConfig, seeds: &[DVector<f64>]) -> Result<SearchReport> {
    let autonomous = !rm.h().time_dependent;
    let outcomes: Vec<SeedOutcome> = seeds
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let mut trace = Vec::new();
            let r = newton_dogleg(rm, s, cfg, &mut trace).and_then(|(x, e)| {
                if autonomous {
                    let xn = normalize_phase(rm, &x);
                    let en = rm.evaluate(&xn, true, None)?;
                    if en.gradient_norm < cfg.gradient_tolerance {
                        return Ok((xn, en));
                    }
                    return newton_dogleg(rm, &xn, cfg, &mut trace);
                }
                Ok((x, e))
            });
            (i, r, trace)
        })
        .collect();
    let mut failures = Vec::new();
    let mut trace = Vec::new();
    let mut unique: Vec<(usize, DVector<f64>, ReducedEval)> = Vec::new();
    for (i, r, t) in outcomes {
        trace.extend(t);
        match r {
            Ok((x, e)) => {
                let dup = unique.iter().any(|(_, y, ey)| {
                    (ey.value - e.value).abs() < cfg.dedup_action.max(1e-12 * e.value.abs())
                        && shift_distance(rm, &x, y, autonomous) < cfg.dedup_distance
                });
                if !dup {
                    unique.push((i, x, e));
                }
            }
            Err(e) => failures.push((i, e.to_string())),
        }
    }
    let built: Vec<(usize, Result<OrbitRecord>)> =
        unique.par_iter().map(|(i, x, e)| (*i, build_record(rm, e, x, cfg, *i))).collect();
    let mut records = Vec::new();
    for (i, r) in built {
        match r {
            Ok(rec) => records.push(rec),
            Err(e) if matches!(e.root(), Error::DegenerateOrbit { .. }) => return Err(e),
            Err(e) => failures.push((i, e.to_string())),
        }
    }
    records.sort_by(|a, b| a.morse_index.cmp(&b.morse_index).then(a.action.total_cmp(&b.action)));
    let sw = sqrt_weights(rm);
    let largest = records.iter().map(|r| r.head_vector().component_mul(&sw).norm()).fold(1.0, f64::max);
    let bound = 10.0 * largest;
    let ok = palais_smale_audit(&trace, 1e-3, bound);
    Ok(SearchReport { records, failures, trace, palais_smale_bound: bound, palais_smale_ok: ok })
}

/// Period of the closed characteristic carried by a critical point of the
/// dual functional of `H_C^{p/2}` with value `psi_min`.
pub fn period_from_min(psi_min: f64, p: f64) -> Result<f64> {
    period_from_min_scaled(psi_min, p, 1.0)
}

/// [`period_from_min`] for the Hamiltonian `c H_C^{p/2}`:
/// `T = (p/2) c^{2/p} ((2/(p - 2)) psi)^{(p - 2)/p}`.
pub fn period_from_min_scaled(psi: f64, p: f64, c: f64) -> Result<f64> {
    if !(psi < 0.0) {
        return Err(Error::BadSign { value: psi }.at("critical_points", "period_from_min"));
    }
    if !(p > 1.0 && p < 2.0) {
        return Err(Error::InvalidInput(format!("p must lie in (1, 2), got {p}")).at("critical_points", "period_from_min"));
    }
    Ok(0.5 * p * c.powf(2.0 / p) * (2.0 / (p - 2.0) * psi).powf((p - 2.0) / p))
}

/// Settings for the dual minimization route.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct DualMinConfig {
    pub search: SearchConfig,
    /// Tail truncation; defaults to `max(2N + 4, 12)`.
    pub m: Option<usize>,
    /// Quadrature nodes; defaults to `4M`.
    pub q: Option<usize>,
}


/// The p-homogeneous Hamiltonian used for a domain, `c H_C^{p/2}` with `c`
/// chosen so that the minimal orbit of a ball-like body sits near the unit
/// level.
pub fn homogeneous_model(domain: &GaugeDomain, p: f64) -> Result<(HamiltonianModel, f64)> {
    let t_est = PI * domain.inradius().powi(2);
    let c = 2.0 * t_est / p;
    Ok((profile_hamiltonian(domain, ProfileKind::PHomogeneous { t: t_est, p })?, c))
}

/// Reduction for the p-homogeneous Hamiltonian of a domain.
pub fn homogeneous_reduction(domain: &GaugeDomain, p: f64, cfg: &DualMinConfig) -> Result<(ReducedManifold, f64)> {
    let (h, c) = homogeneous_model(domain, p)?;
    let (n_head, _) = crate::reduction::choose_n(&h);
    let m = cfg.m.unwrap_or((2 * n_head + 4).max(12));
    let q = cfg.q.unwrap_or(4 * m);
    Ok((ReducedManifold::with_head(h, n_head, m, q)?, c))
}

/// Outcome of the dual minimization.
#[derive(Debug, Clone, Serialize)]
pub struct GlobalMin {
    pub p: f64,
    pub psi_min: f64,
    /// Scale `c` of the Hamiltonian `c H_C^{p/2}`.
    pub scale: f64,
    pub period: f64,
    pub record: OrbitRecord,
    pub starts: usize,
}

/// Global minimum of the reduced dual functional of `c H_C^{p/2}` by
/// multistart trust-region minimization.
pub fn global_min_dual(domain: &GaugeDomain, p: f64, cfg: &DualMinConfig) -> Result<GlobalMin> {
    let tag = |e: Error| e.at("critical_points", "global_min_dual");
    let (rm, c) = homogeneous_reduction(domain, p, cfg).map_err(tag)?;
    let search = &cfg.search;
    let dim = rm.head_dim();
    let scale = search.seed_scale.unwrap_or_else(|| domain.inradius());
    let mut starts: Vec<DVector<f64>> = Vec::new();
    for plane in 0..rm.n() {
        let v = circle_direction(&rm, 1, plane, 0.0);
        if let Some(s) = ray_minimum(&rm, &v, 1e-2 * scale, 4.0 * scale, 24) {
            starts.push(v * s);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(search.seed);
    let sw = sqrt_weights(&rm);
    while starts.len() < search.random_seeds.max(8) + rm.n() {
        let u = numerics::unit_vector(&mut rng, dim);
        let r: f64 = 2.0 * PI * scale * (0.2 + rng.random::<f64>());
        starts.push(DVector::from_iterator(dim, u.iter().zip(sw.iter()).map(|(a, w)| r * a / w)));
    }
    let runs: Vec<Result<(DVector<f64>, ReducedEval)>> = with_pool(search.workers, || {
        starts.par_iter().map(|s| trust_region_minimize(&rm, s, search, &mut Vec::new())).collect()
    });
    let mut best: Option<(DVector<f64>, ReducedEval)> = None;
    for r in runs.into_iter().flatten() {
        if best.as_ref().is_none_or(|b| r.1.value < b.1.value) {
            best = Some(r);
        }
    }
    let (x, eval) = best.ok_or_else(|| tag(Error::OnlyConstantFound))?;
    if x.component_mul(&sw).norm() < 1e-6 * scale {
        return Err(tag(Error::OnlyConstantFound));
    }
    let record = build_record(&rm, &eval, &x, search, 0).map_err(tag)?;
    let period = period_from_min_scaled(eval.value, p, c).map_err(tag)?;
    Ok(GlobalMin { p, psi_min: eval.value, scale: c, period, record, starts: starts.len() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn period_formula_monotone_and_signed() {
        let mut last = 0.0;
        for i in 1..50 {
            let psi = -10.0 + 0.2 * i as f64;
            let t = period_from_min(psi, 1.5).unwrap();
            assert!(t > last);
            last = t;
        }
        assert!(matches!(period_from_min(0.0, 1.5).unwrap_err().root(), Error::BadSign { .. }));
    }

    #[test]
    fn period_of_unit_circle_value() {
        // c = 4 pi / 3, p = 3/2: the unit circle has psi = pi - c = -pi / 3.
        let t = period_from_min_scaled(-PI / 3.0, 1.5, 4.0 * PI / 3.0).unwrap();
        assert!((t - PI).abs() < 1e-12);
    }
}
