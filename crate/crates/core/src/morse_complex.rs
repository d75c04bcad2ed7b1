//! Filtered mod-2 Morse complex of the reduced dual functional.
//!
//! Connecting orbits are followed along the negative gradient flow of `psi`
//! for a seeded random perturbation of the `H1` metric on the head space.
//! Index-1 generators send their two unstable flow lines to their limits;
//! index-2 generators mesh the unstable circle, locate the boundaries
//! between endpoint basins by bisection and attribute each boundary to the
//! index-1 generator the separating trajectory runs into.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convex_model::{
    ellipsoid_gauge, DoubleWellToy, HamiltonianFn, HamiltonianModel, ProfileHamiltonian, ProfileKind, RotatingBump, ScaledHamiltonian,
    SumHamiltonian,
};
use crate::critical_points::OrbitRecord;
use crate::error::{Error, Result};
use crate::numerics;
use crate::reduction::{ReducedEval, ReducedManifold};

/// Parameters of the flow and of the Morse-Smale perturbation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ComplexConfig {
    pub metric_seed: u64,
    /// Size of the symmetric metric perturbation, `0 <= eps < 1`.
    pub metric_eps: f64,
    /// Re-seeds allowed after a basin instability.
    pub reseeds: usize,
    /// Capture radius around critical points, in scaled coordinates.
    pub capture_radius: f64,
    /// Initial displacement along unstable directions.
    pub offset: f64,
    /// Trajectories leaving this scaled radius raise `NonConvergentFlow`;
    /// defaults to `10 max(|critical point|, 1)`.
    pub bounding_radius: Option<f64>,
    /// A trajectory whose value drops this far below the lowest critical
    /// value is labelled as escaping to minus infinity.
    pub level_margin: f64,
    /// Points on the unstable circle of an index-2 generator.
    pub mesh: usize,
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    pub workers: Option<usize>,
}

impl Default for ComplexConfig {
    fn default() -> Self {
        Self {
            metric_seed: 11,
            metric_eps: 0.05,
            reseeds: 3,
            capture_radius: 1e-4,
            offset: 1e-3,
            bounding_radius: None,
            level_margin: 1.0,
            mesh: 16,
            rtol: 1e-8,
            atol: 1e-10,
            max_steps: 20_000,
            workers: None,
        }
    }
}

/// Where a flow line ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Endpoint {
    Critical(usize),
    MinusInfinity,
}

/// The complex: generators sorted by `(index, action)`, the mod-2 boundary
/// matrix and the action filtration.
#[derive(Debug, Clone, Serialize)]
pub struct MorseComplexData {
    pub generators: Vec<OrbitRecord>,
    /// `boundary[(i, j)] = n(x_j, x_i) mod 2`, the coefficient of generator
    /// `i` in the boundary of generator `j`.
    #[serde(serialize_with = "serialize_matrix")]
    pub boundary: DMatrix<u8>,
    pub filtration: Vec<f64>,
    /// Seed of the metric perturbation the counts were taken with.
    pub metric_perturbation_seed: u64,
    /// Raw connecting-orbit counts before reduction mod 2, as
    /// `(source, target, count)`.
    pub counts: Vec<(usize, usize, usize)>,
}

fn serialize_matrix<S: serde::Serializer>(m: &DMatrix<u8>, s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<u8>> = (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
    rows.serialize(s)
}

impl MorseComplexData {
    pub fn index(&self, i: usize) -> usize {
        self.generators[i].morse_index
    }

    pub fn max_index(&self) -> usize {
        self.generators.iter().map(|g| g.morse_index).max().unwrap_or(0)
    }

    /// Nonzero boundary entries as `(row, column)` pairs.
    pub fn triplets(&self) -> Vec<(usize, usize, u8)> {
        let mut out = Vec::new();
        for j in 0..self.boundary.ncols() {
            for i in 0..self.boundary.nrows() {
                if self.boundary[(i, j)] != 0 {
                    out.push((i, j, 1));
                }
            }
        }
        out
    }

    /// Generator table as CSV.
    pub fn generators_csv(&self) -> String {
        let mut s = String::from("generator,index,action,cz\n");
        for (i, g) in self.generators.iter().enumerate() {
            let cz = g.cz_index.map_or(String::new(), |c| c.to_string());
            s.push_str(&format!("{i},{},{:.12},{cz}\n", g.morse_index, g.action));
        }
        s
    }

    /// Boundary matrix as a sparse triplet CSV.
    pub fn boundary_csv(&self) -> String {
        let mut s = String::from("row,column,value\n");
        for (i, j, v) in self.triplets() {
            s.push_str(&format!("{i},{j},{v}\n"));
        }
        s
    }

    /// Euler characteristic `sum (-1)^ind` over generators.
    pub fn euler_characteristic(&self) -> i64 {
        self.generators.iter().map(|g| if g.morse_index % 2 == 0 { 1 } else { -1 }).sum()
    }

    /// Whether every nonzero entry lowers the index by one and strictly
    /// lowers the action by more than `margin`.
    pub fn respects_filtration(&self, margin: f64) -> bool {
        self.triplets().iter().all(|&(i, j, _)| self.index(i) + 1 == self.index(j) && self.filtration[i] < self.filtration[j] - margin)
    }
}

/// Rank over `Z/2` by Gaussian elimination.
pub fn rank_mod2(m: &DMatrix<u8>) -> usize {
    let mut a = m.map(|v| v & 1);
    let (rows, cols) = a.shape();
    let mut rank = 0;
    for c in 0..cols {
        let Some(p) = (rank..rows).find(|&r| a[(r, c)] == 1) else { continue };
        a.swap_rows(rank, p);
        for r in 0..rows {
            if r != rank && a[(r, c)] == 1 {
                for k in 0..cols {
                    a[(r, k)] ^= a[(rank, k)];
                }
            }
        }
        rank += 1;
        if rank == rows {
            break;
        }
    }
    rank
}

/// Whether `boundary * boundary = 0` over `Z/2`.
pub fn verify_d2(c: &MorseComplexData) -> bool {
    let d = c.boundary.map(u32::from);
    let dd = &d * &d;
    dd.iter().all(|v| v % 2 == 0)
}

/// Betti numbers over `Z/2`, in degrees `0..=max index`, of the subcomplex
/// spanned by generators with action below `a`.
pub fn filtered_betti(c: &MorseComplexData, a: f64) -> Vec<usize> {
    let top = c.max_index();
    let keep: Vec<usize> = (0..c.generators.len()).filter(|&i| c.filtration[i] < a).collect();
    let in_degree = |k: usize| keep.iter().copied().filter(|&i| c.index(i) == k).collect::<Vec<_>>();
    // Rank of the boundary from degree k to degree k - 1.
    let rank_d = |k: usize| -> usize {
        if k == 0 {
            return 0;
        }
        let (src, dst) = (in_degree(k), in_degree(k - 1));
        if src.is_empty() || dst.is_empty() {
            return 0;
        }
        rank_mod2(&DMatrix::from_fn(dst.len(), src.len(), |r, s| c.boundary[(dst[r], src[s])]))
    };
    (0..=top).map(|k| in_degree(k).len() - rank_d(k) - rank_d(k + 1)).collect()
}

/// Alternating sum of Betti numbers over the full filtration.
pub fn betti_euler(c: &MorseComplexData) -> i64 {
    filtered_betti(c, f64::INFINITY).iter().enumerate().map(|(k, &b)| if k % 2 == 0 { b as i64 } else { -(b as i64) }).sum()
}

/// Whether the class of the index-0 generator with action in `(-eps, eps)`
/// is a boundary in the subcomplex below `eta_level`.
pub fn capacity_vanishing_check(c: &MorseComplexData, eps: f64, eta_level: f64) -> Result<bool> {
    let z = minimum_generator(c, eps)?;
    Ok(dies_below(c, z, eta_level))
}

fn minimum_generator(c: &MorseComplexData, eps: f64) -> Result<usize> {
    (0..c.generators.len())
        .find(|&i| c.index(i) == 0 && c.filtration[i].abs() < eps)
        .ok_or(Error::MissingMinimum { epsilon: eps }.at("morse_complex", "capacity_vanishing_check"))
}

/// Whether generator `z` of degree 0 lies in the `Z/2` span of the
/// boundaries of index-1 generators with action below `level`.
fn dies_below(c: &MorseComplexData, z: usize, level: f64) -> bool {
    let cols: Vec<usize> = (0..c.generators.len()).filter(|&j| c.index(j) == 1 && c.filtration[j] < level).collect();
    let rows: Vec<usize> = (0..c.generators.len()).filter(|&i| c.index(i) == 0 && c.filtration[i] < level).collect();
    if cols.is_empty() || !rows.contains(&z) {
        return false;
    }
    let a = DMatrix::from_fn(rows.len(), cols.len(), |r, s| c.boundary[(rows[r], cols[s])]);
    let zr = rows.iter().position(|&r| r == z).expect("z is among the rows");
    let mut aug = a.clone().insert_column(cols.len(), 0);
    aug[(zr, cols.len())] = 1;
    rank_mod2(&aug) == rank_mod2(&a)
}

/// The filtration level at which the minimum dies and the killing
/// generator.
#[derive(Debug, Clone, Serialize)]
pub struct VanishingLevel {
    /// Generator index of the minimum.
    pub minimum: usize,
    /// Index-1 generator whose inclusion kills the minimum.
    pub killer: usize,
    /// Its action, the transition level of the filtration.
    pub level: f64,
    /// Action of the closed characteristic traced by the killer after
    /// radial projection to the boundary, `quadform / mean H_C`.
    pub characteristic_action: f64,
}

/// The smallest filtration level at which the minimum generator becomes a
/// boundary, with the characteristic action of the orbit that kills it.
pub fn vanishing_level(c: &MorseComplexData, eps: f64, gauge: &dyn Fn(&[f64]) -> f64) -> Result<VanishingLevel> {
    let z = minimum_generator(c, eps)?;
    let mut ones: Vec<usize> = (0..c.generators.len()).filter(|&j| c.index(j) == 1).collect();
    ones.sort_by(|&a, &b| c.filtration[a].total_cmp(&c.filtration[b]));
    for &j in &ones {
        if dies_below(c, z, c.filtration[j] * (1.0 + 1e-12) + 1e-12) {
            let orbit = &c.generators[j].orbit;
            let samples = 256;
            let mean_gauge = (0..samples).map(|s| gauge(&orbit.evaluate(s as f64 / samples as f64))).sum::<f64>() / samples as f64;
            let characteristic_action = orbit.zero_mean_part().symplectic_quadform() / mean_gauge;
            return Ok(VanishingLevel { minimum: z, killer: j, level: c.filtration[j], characteristic_action });
        }
    }
    Err(Error::Unsupported("the minimum survives at every filtration level".into()).at("morse_complex", "vanishing_level"))
}

/// Symmetric perturbation `G = I + eps P` with `|P| = 1`.
fn metric(dim: usize, seed: u64, eps: f64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::from_vec(dim, dim, numerics::normal_vector(&mut rng, dim * dim));
    let p = (&a + a.transpose()) * 0.5;
    let norm = numerics::symmetric_eigenvalues(&p).iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    DMatrix::identity(dim, dim) + p * (eps / norm)
}

/// Negative gradient flow of `psi` in scaled head coordinates for the
/// metric `W^{1/2} G W^{1/2}`.
struct Flow<'a> {
    rm: &'a ReducedManifold,
    sqrt_w: DVector<f64>,
    g_inv: DMatrix<f64>,
    g_inv_half: DMatrix<f64>,
    /// Critical points in scaled coordinates with their values.
    crit: Vec<(DVector<f64>, f64)>,
    cfg: &'a ComplexConfig,
    bound: f64,
    floor: f64,
}

/// Outcome of one trajectory.
#[derive(Debug, Clone)]
struct Trajectory {
    end: Endpoint,
    /// Closest approach to each critical point.
    closest: Vec<f64>,
}

impl<'a> Flow<'a> {
    fn new(rm: &'a ReducedManifold, gens: &[OrbitRecord], cfg: &'a ComplexConfig, seed: u64) -> Self {
        let sqrt_w = rm.head_weights().map(f64::sqrt);
        let dim = rm.head_dim();
        let g = metric(dim, seed, cfg.metric_eps);
        let (vals, vecs) = numerics::sorted_symmetric_eigen(&g);
        let g_inv_half = &vecs * DMatrix::from_diagonal(&DVector::from_iterator(dim, vals.iter().map(|v| 1.0 / v.sqrt()))) * vecs.transpose();
        let g_inv = &g_inv_half * &g_inv_half;
        let crit: Vec<(DVector<f64>, f64)> = gens.iter().map(|r| (r.head_vector().component_mul(&sqrt_w), r.action)).collect();
        let largest = crit.iter().map(|c| c.0.norm()).fold(1.0, f64::max);
        let bound = cfg.bounding_radius.unwrap_or(10.0 * largest);
        let floor = crit.iter().map(|c| c.1).fold(f64::INFINITY, f64::min) - cfg.level_margin;
        Self { rm, sqrt_w, g_inv, g_inv_half, crit, cfg, bound, floor }
    }

    fn eval(&self, u: &DVector<f64>, warm: Option<&ReducedEval>) -> Result<ReducedEval> {
        self.rm.evaluate(&u.component_div(&self.sqrt_w), false, warm.map(|w| &w.tail))
    }

    fn field(&self, e: &ReducedEval) -> DVector<f64> {
        -(&self.g_inv * e.gradient.component_div(&self.sqrt_w))
    }

    /// Unstable directions at a critical point: `G^{-1/2} v` for the
    /// eigenvectors `v` of `-G^{-1/2} J G^{-1/2}` with positive eigenvalue,
    /// where `J` is the scaled reduced Hessian.
    fn unstable_directions(&self, rec: &OrbitRecord) -> Result<Vec<DVector<f64>>> {
        let x = rec.head_vector();
        let e = self.rm.evaluate(&x, true, None)?;
        let inv = DMatrix::from_diagonal(&self.sqrt_w.map(|v| 1.0 / v));
        let j = &inv * e.hessian.as_ref().expect("requested") * &inv;
        let b = -(&self.g_inv_half * j * &self.g_inv_half);
        let (vals, vecs) = numerics::sorted_symmetric_eigen(&b);
        let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut out: Vec<DVector<f64>> = Vec::new();
        for i in (0..vals.len()).rev() {
            if vals[i] > 1e-7 * scale.max(1e-300) {
                let d = &self.g_inv_half * vecs.column(i);
                out.push(&d / d.norm());
            }
        }
        Ok(out)
    }

    /// Follow the flow from `u0` with an adaptive Dormand-Prince 5(4)
    /// scheme until it is captured by a critical point other than
    /// `source`, drops below the value floor or leaves the bounding ball.
    fn follow(&self, u0: DVector<f64>, source: usize) -> Result<Trajectory> {
        let tag = |e: Error| e.at("morse_complex", "count_connecting_orbits");
        let mut closest = vec![f64::INFINITY; self.crit.len()];
        let mut u = u0;
        let mut e = self.eval(&u, None).map_err(tag)?;
        let mut k1 = self.field(&e);
        let mut h = 1e-2 / (1.0 + k1.norm());
        for _ in 0..self.cfg.max_steps {
            for (i, (c, v)) in self.crit.iter().enumerate() {
                let d = (&u - c).norm();
                closest[i] = closest[i].min(d);
                if i != source && d < self.cfg.capture_radius && (e.value - v).abs() < 1e-4 * (1.0 + v.abs()) {
                    return Ok(Trajectory { end: Endpoint::Critical(i), closest });
                }
            }
            if e.value < self.floor {
                return Ok(Trajectory { end: Endpoint::MinusInfinity, closest });
            }
            if u.norm() > self.bound {
                return Err(tag(Error::NonConvergentFlow { radius: self.bound }));
            }
            let (un, en, kn, err) = self.dopri_step(&u, &e, &k1, h).map_err(tag)?;
            let scale = self.cfg.atol + self.cfg.rtol * u.norm().max(un.norm());
            let ratio = err / scale;
            if ratio <= 1.0 {
                u = un;
                e = en;
                k1 = kn;
            }
            let factor = if ratio == 0.0 { 5.0 } else { (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0) };
            h *= factor;
        }
        Err(tag(Error::NonConvergentFlow { radius: self.bound }))
    }

    /// The flow map over time `duration`.
    fn advance(&self, u0: &DVector<f64>, duration: f64) -> Result<DVector<f64>> {
        let tag = |e: Error| e.at("morse_complex", "count_connecting_orbits");
        let mut u = u0.clone();
        let mut e = self.eval(&u, None).map_err(tag)?;
        let mut k1 = self.field(&e);
        let mut h = (1e-2 / (1.0 + k1.norm())).min(duration);
        let mut elapsed = 0.0;
        for _ in 0..self.cfg.max_steps {
            if elapsed >= duration {
                return Ok(u);
            }
            if u.norm() > self.bound {
                break;
            }
            let step = h.min(duration - elapsed);
            let (un, en, kn, err) = self.dopri_step(&u, &e, &k1, step).map_err(tag)?;
            let ratio = err / (self.cfg.atol + self.cfg.rtol * u.norm().max(un.norm()));
            if ratio <= 1.0 {
                u = un;
                e = en;
                k1 = kn;
                elapsed += step;
            }
            h = step * if ratio == 0.0 { 5.0 } else { (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0) };
        }
        Err(tag(Error::NonConvergentFlow { radius: self.bound }))
    }

    #[allow(clippy::type_complexity)]
    fn dopri_step(&self, u: &DVector<f64>, e: &ReducedEval, k1: &DVector<f64>, h: f64) -> Result<(DVector<f64>, ReducedEval, DVector<f64>, f64)> {
        const A21: f64 = 1.0 / 5.0;
        const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
        const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
        const A5: [f64; 4] = [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0];
        const A6: [f64; 5] = [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0];
        const B: [f64; 6] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0];
        const E: [f64; 7] = [71.0 / 57600.0, 0.0, -71.0 / 16695.0, 71.0 / 1920.0, -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0];
        let stage = |v: DVector<f64>| -> Result<(DVector<f64>, ReducedEval)> {
            let ev = self.eval(&v, Some(e))?;
            Ok((self.field(&ev), ev))
        };
        let (k2, _) = stage(u + k1 * (h * A21))?;
        let (k3, _) = stage(u + (k1 * A3[0] + &k2 * A3[1]) * h)?;
        let (k4, _) = stage(u + (k1 * A4[0] + &k2 * A4[1] + &k3 * A4[2]) * h)?;
        let (k5, _) = stage(u + (k1 * A5[0] + &k2 * A5[1] + &k3 * A5[2] + &k4 * A5[3]) * h)?;
        let (k6, _) = stage(u + (k1 * A6[0] + &k2 * A6[1] + &k3 * A6[2] + &k4 * A6[3] + &k5 * A6[4]) * h)?;
        let un = u + (k1 * B[0] + &k3 * B[2] + &k4 * B[3] + &k5 * B[4] + &k6 * B[5]) * h;
        let (k7, en) = stage(un.clone())?;
        let err = ((k1 * E[0] + &k3 * E[2] + &k4 * E[3] + &k5 * E[4] + &k6 * E[5] + &k7 * E[6]) * h).amax();
        Ok((un, en, k7, err))
    }
}

/// Connecting-orbit counts from generator `src` to every generator of
/// index one lower.
fn counts_from(flow: &Flow, gens: &[OrbitRecord], src: usize) -> Result<Vec<usize>> {
    let k = gens[src].morse_index;
    let mut counts = vec![0usize; gens.len()];
    if k == 0 {
        return Ok(counts);
    }
    if k > 2 {
        return Err(Error::Unsupported(format!("connecting orbits from index {k} generators")).at("morse_complex", "count_connecting_orbits"));
    }
    let dirs = flow.unstable_directions(&gens[src]).map_err(|e| e.at("morse_complex", "count_connecting_orbits"))?;
    if dirs.len() != k {
        return Err(Error::DegenerateOrbit { nullity: k.abs_diff(dirs.len()) }.at("morse_complex", "count_connecting_orbits"));
    }
    let base = &flow.crit[src].0;
    let target = |e: Endpoint| match e {
        Endpoint::Critical(j) if gens[j].morse_index + 1 == k => Some(j),
        _ => None,
    };
    if k == 1 {
        for s in [1.0, -1.0] {
            let t = flow.follow(base + &dirs[0] * (s * flow.cfg.offset), src)?;
            if let Some(j) = target(t.end) {
                counts[j] += 1;
            }
        }
        return Ok(counts);
    }
    // Index 2: basin boundaries on the unstable circle. The circle is
    // meshed at twice the configured resolution; the configured mesh is its
    // even-numbered subset, and the counts seen by the two meshes must agree.
    let start = |theta: f64| {
        let d = &dirs[0] * theta.cos() + &dirs[1] * theta.sin();
        base + d.normalize() * flow.cfg.offset
    };
    let (coarse, fine) = circle_boundaries(flow, gens, src, &start, flow.cfg.mesh.max(4))?;
    if coarse != fine {
        return Err(Error::BasinInstability.at("morse_complex", "count_connecting_orbits"));
    }
    for (j, c) in fine.into_iter().enumerate() {
        if target(Endpoint::Critical(j)).is_some() {
            counts[j] = c;
        }
    }
    Ok(counts)
}

/// A boundary between endpoint basins located between two mesh angles.
struct Boundary {
    /// Index of the left fine-mesh point.
    left: usize,
    target: Option<usize>,
}

/// Locate and attribute basin boundaries on the unstable circle.
///
/// Returns per-generator boundary counts for the mesh with `mesh` points
/// and for its refinement with `2 mesh` points.
fn circle_boundaries(
    flow: &Flow,
    gens: &[OrbitRecord],
    src: usize,
    start: &(dyn Fn(f64) -> DVector<f64> + Sync),
    mesh: usize,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let k = gens[src].morse_index;
    let fine_n = 2 * mesh;
    let thetas: Vec<f64> = (0..=fine_n).map(|i| 2.0 * PI * i as f64 / fine_n as f64).collect();
    let ends: Vec<Result<Trajectory>> = (0..fine_n).into_par_iter().map(|i| flow.follow(start(thetas[i]), src)).collect();
    let ends: Vec<Trajectory> = ends.into_iter().collect::<Result<_>>()?;
    let lower: Vec<usize> = (0..gens.len()).filter(|&j| gens[j].morse_index + 1 == k && gens[j].action < gens[src].action).collect();
    let on_lower = |t: &Trajectory| match t.end {
        Endpoint::Critical(c) if lower.contains(&c) => Some(c),
        _ => None,
    };
    // Nearest lower-index generator, once the trajectory has passed it at a
    // small fraction of its distance from the source and well inside the
    // runner-up.
    let attribution = |t: &Trajectory| -> Option<usize> {
        let mut d: Vec<(f64, usize)> = lower.iter().map(|&j| (t.closest[j], j)).collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0));
        let near = |a: f64, j: usize| a < 0.05 * (&flow.crit[src].0 - &flow.crit[j].0).norm();
        match d.as_slice() {
            [] => None,
            [(a, j)] => near(*a, *j).then_some(*j),
            [(a, j), (b, _), ..] => (near(*a, *j) && *a < 0.1 * b).then_some(*j),
        }
    };
    // A boundary between two basins on the circle limits to a critical
    // point of index k - 1 below the source. With a single candidate the
    // attribution is forced; otherwise the edge trajectory is tracked by
    // alternately re-bisecting a straddling pair and advancing it.
    let track = |i: usize| -> Result<Option<usize>> {
        match lower.as_slice() {
            [] => return Ok(None),
            [j] => return Ok(Some(*j)),
            _ => {}
        }
        let label_a = ends[i].end;
        let (mut pa, mut pb) = (start(thetas[i]), start(thetas[i + 1]));
        let mut closest = vec![f64::INFINITY; gens.len()];
        let mut dt = 1.0;
        for _ in 0..24 {
            let tight = 1e-8 * (1.0 + pa.norm());
            while (&pa - &pb).norm() > tight {
                let mid = (&pa + &pb) * 0.5;
                let t = flow.follow(mid.clone(), src)?;
                if let Some(c) = on_lower(&t) {
                    return Ok(Some(c));
                }
                if t.end == label_a {
                    pa = mid;
                } else {
                    pb = mid;
                }
            }
            let loose = 1e-4 * (1.0 + pa.norm());
            let (na, nb) = loop {
                let na = flow.advance(&pa, dt)?;
                let nb = flow.advance(&pb, dt)?;
                if (&na - &nb).norm() <= loose || dt < 1e-6 {
                    break (na, nb);
                }
                dt *= 0.5;
            };
            if (&na - &nb).norm() < 1e-2 * loose {
                dt *= 2.0;
            }
            pa = na;
            pb = nb;
            for &j in &lower {
                closest[j] = closest[j].min((&pa - &flow.crit[j].0).norm());
            }
            let edge = Trajectory { end: label_a, closest: closest.clone() };
            if let Some(c) = attribution(&edge) {
                return Ok(Some(c));
            }
        }
        Ok(lower.iter().copied().min_by(|&x, &y| closest[x].total_cmp(&closest[y])))
    };
    // Boundaries between consecutive fine points. A mesh point captured
    // by a lower generator is itself a boundary and is counted once, from
    // the interval on its right.
    let candidates: Vec<usize> = (0..fine_n)
        .filter(|&i| {
            let j = (i + 1) % fine_n;
            on_lower(&ends[i]).is_some() || (ends[i].end != ends[j].end && on_lower(&ends[j]).is_none())
        })
        .collect();
    let found: Vec<Result<Boundary>> = candidates
        .par_iter()
        .map(|&i| {
            let target = match on_lower(&ends[i]) {
                Some(c) => Some(c),
                None => track(i)?,
            };
            Ok(Boundary { left: i, target })
        })
        .collect();
    let found: Vec<Boundary> = found.into_iter().collect::<Result<_>>()?;
    let mut fine = vec![0usize; gens.len()];
    for b in &found {
        if let Some(c) = b.target {
            fine[c] += 1;
        }
    }
    // The coarse mesh sees a boundary in the interval (2i, 2i + 2) when its
    // endpoints differ or the left endpoint is captured.
    let mut coarse = vec![0usize; gens.len()];
    for i in 0..mesh {
        let (l, r) = (2 * i, (2 * i + 2) % fine_n);
        let visible = on_lower(&ends[l]).is_some() || (ends[l].end != ends[r].end && on_lower(&ends[r]).is_none());
        if !visible {
            continue;
        }
        if let Some(b) = found.iter().find(|b| b.left == l || b.left == l + 1) {
            if let Some(c) = b.target {
                coarse[c] += 1;
            }
        }
    }
    Ok((coarse, fine))
}

/// Parity of the connecting orbits from `x` (index `k`) to `y` (index
/// `k - 1`) for the metric perturbation `seed`; structurally zero when `y`
/// does not lie strictly below `x`.
pub fn count_connecting_orbits(rm: &ReducedManifold, gens: &[OrbitRecord], x: usize, y: usize, cfg: &ComplexConfig) -> Result<u8> {
    if gens[y].morse_index + 1 != gens[x].morse_index || gens[y].action >= gens[x].action {
        return Ok(0);
    }
    let flow = Flow::new(rm, gens, cfg, cfg.metric_seed);
    Ok((counts_from(&flow, gens, x)?[y] % 2) as u8)
}

/// Assemble the complex from nondegenerate critical points, re-seeding the
/// metric perturbation after basin instabilities.
pub fn build_complex(rm: &ReducedManifold, records: &[OrbitRecord], cfg: &ComplexConfig) -> Result<MorseComplexData> {
    let tag = |e: Error| e.at("morse_complex", "build_complex");
    if records.len() > 30 {
        return Err(tag(Error::Unsupported(format!("{} generators exceed the limit of 30", records.len()))));
    }
    if let Some(r) = records.iter().find(|r| r.nullity > 0) {
        return Err(tag(Error::DegenerateOrbit { nullity: r.nullity }));
    }
    if let Some(r) = records.iter().find(|r| r.morse_index > 3) {
        return Err(tag(Error::Unsupported(format!("generator of index {}", r.morse_index))));
    }
    let mut gens = records.to_vec();
    gens.sort_by(|a, b| a.morse_index.cmp(&b.morse_index).then(a.action.total_cmp(&b.action)));
    let run = |seed: u64| -> Result<MorseComplexData> {
        let flow = Flow::new(rm, &gens, cfg, seed);
        let m = gens.len();
        let mut boundary = DMatrix::<u8>::zeros(m, m);
        let mut counts = Vec::new();
        for j in 0..m {
            let below = (0..m).any(|i| gens[i].morse_index + 1 == gens[j].morse_index && gens[i].action < gens[j].action);
            if !below {
                continue;
            }
            let c = counts_from(&flow, &gens, j)?;
            for (i, &n) in c.iter().enumerate() {
                if n > 0 && gens[i].action < gens[j].action {
                    counts.push((j, i, n));
                    boundary[(i, j)] = (n % 2) as u8;
                }
            }
        }
        let filtration = gens.iter().map(|g| g.action).collect();
        Ok(MorseComplexData { generators: gens.clone(), boundary, filtration, metric_perturbation_seed: seed, counts })
    };
    let go = || {
        let mut last = None;
        for attempt in 0..=cfg.reseeds {
            match run(cfg.metric_seed + attempt as u64) {
                Err(e) if matches!(e.root(), Error::BasinInstability) => last = Some(e),
                other => return other,
            }
        }
        Err(last.expect("at least one attempt ran"))
    };
    match cfg.workers {
        Some(w) if w > 0 => match rayon::ThreadPoolBuilder::new().num_threads(w).build() {
            Ok(pool) => pool.install(go),
            Err(_) => go(),
        },
        _ => go(),
    }
    .map_err(tag)
}

/// Hamiltonian on the disk of radius `lambda` whose reduced dual functional
/// has exactly three critical points: the origin (index 0, action
/// `-phi0`) and two circles on the boundary (indices 1 and 2) split by a
/// rotating bump of size `bump`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VanishingConfig {
    pub lambda: f64,
    /// Profile slope at the boundary level, the minimal action.
    pub a_min: f64,
    /// Asymptotic slope of the profile.
    pub eta: f64,
    pub c0: f64,
    pub phi0: f64,
    pub bump: f64,
    pub width: f64,
    pub theta0: f64,
}

impl Default for VanishingConfig {
    fn default() -> Self {
        Self { lambda: 1.0, a_min: PI, eta: 1.5 * PI, c0: 0.2, phi0: -0.05, bump: 0.05, width: 0.9, theta0: 0.0 }
    }
}

impl VanishingConfig {
    /// The Hamiltonian `lambda^2 (phi o H_D + bump)(t, z / lambda)` for the unit
    /// disk `D`.
    pub fn hamiltonian(&self) -> Result<HamiltonianModel> {
        let tag = |e: Error| e.at("morse_complex", "vanishing_configuration");
        let disk = ellipsoid_gauge(&[1.0]).map_err(tag)?;
        let profile = ProfileHamiltonian::new(disk.clone(), ProfileKind::FlatConvex { a_min: self.a_min, eta: self.eta, c0: self.c0, phi0: self.phi0 })
            .map_err(tag)?;
        let bump = RotatingBump { domain: disk, eps: self.bump, theta0: self.theta0, width: self.width };
        let terms: Vec<Arc<dyn HamiltonianFn>> = vec![Arc::new(profile), Arc::new(bump)];
        let base = HamiltonianModel::new(SumHamiltonian { terms, scale: 1.0 }).map_err(tag)?;
        if (self.lambda - 1.0).abs() < 1e-15 {
            return Ok(base);
        }
        HamiltonianModel::new(ScaledHamiltonian { base, lambda: self.lambda }).map_err(tag)
    }

    /// Gauge of the disk of radius `lambda`.
    pub fn gauge(&self) -> impl Fn(&[f64]) -> f64 {
        let l2 = self.lambda * self.lambda;
        move |z: &[f64]| (z[0] * z[0] + z[1] * z[1]) / l2
    }
}

/// The reduced double well: one head mode, two minima and a saddle.
pub fn double_well_toy() -> Result<HamiltonianModel> {
    HamiltonianModel::new(DoubleWellToy { n: 1, eta: 4.0, gamma: 0.05, kappa: 0.05 }).map_err(|e| e.at("morse_complex", "double_well_toy"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(index: usize, action: f64) -> OrbitRecord {
        use crate::critical_points::OrbitResiduals;
        OrbitRecord {
            head: vec![],
            tail: vec![],
            v0: vec![0.0, 0.0],
            orbit: crate::loop_fourier::FourierLoop::zeros(1, 1),
            action,
            direct_action: action,
            morse_index: index,
            nullity: 0,
            full_index: index,
            full_nullity: 0,
            spectral_index: index,
            spectral_nullity: 0,
            relative_index: index + 1,
            cz_index: Some(index as i64 + 1),
            path_margin: 1.0,
            degenerate: false,
            residuals: OrbitResiduals {
                reduced_gradient: 0.0,
                tail_gradient: 0.0,
                orbit: 0.0,
                lift_deviation: 0.0,
                shooting: 0.0,
                action_gap: 0.0,
                symplectic_drift: 0.0,
            },
            seed: 0,
        }
    }

    fn complex(gens: Vec<OrbitRecord>, entries: &[(usize, usize)]) -> MorseComplexData {
        let m = gens.len();
        let mut boundary = DMatrix::zeros(m, m);
        for &(i, j) in entries {
            boundary[(i, j)] = 1;
        }
        let filtration = gens.iter().map(|g| g.action).collect();
        MorseComplexData { generators: gens, boundary, filtration, metric_perturbation_seed: 0, counts: vec![] }
    }

    #[test]
    fn disk_pattern_homology() {
        // z, y-, y+ with d y- = z and d y+ = 0.
        let c = complex(vec![record(0, 0.05), record(1, 1.95), record(2, 2.05)], &[(0, 1)]);
        assert!(verify_d2(&c));
        assert_eq!(filtered_betti(&c, 1.0), vec![1, 0, 0]);
        assert_eq!(filtered_betti(&c, f64::INFINITY), vec![0, 0, 1]);
        assert!(capacity_vanishing_check(&c, 0.1, PI + 0.1).unwrap());
        assert!(!capacity_vanishing_check(&c, 0.1, 1.0).unwrap());
        assert!(matches!(capacity_vanishing_check(&c, 0.01, PI).unwrap_err().root(), Error::MissingMinimum { .. }));
        assert_eq!(c.euler_characteristic(), betti_euler(&c));
        assert!(c.respects_filtration(1e-9));
    }

    #[test]
    fn double_well_pattern_homology() {
        let c = complex(vec![record(0, -0.1), record(0, -0.1), record(1, 0.0)], &[(0, 2), (1, 2)]);
        assert!(verify_d2(&c));
        assert_eq!(filtered_betti(&c, 1.0), vec![1, 0]);
        assert_eq!(filtered_betti(&c, -0.05), vec![2, 0]);
    }

    #[test]
    fn rank_mod2_examples() {
        let m = DMatrix::from_row_slice(3, 3, &[1, 1, 0, 0, 1, 1, 1, 0, 1]);
        assert_eq!(rank_mod2(&m), 2);
        assert_eq!(rank_mod2(&DMatrix::<u8>::identity(4, 4)), 4);
    }
}
