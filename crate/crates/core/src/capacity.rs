//! Action spectrum and capacity of smooth convex bodies.
//!
//! Both operations work with the p-homogeneous Hamiltonian `c H_C^{p/2}`:
//! every nonconstant critical point of its reduced dual functional is a
//! reparametrized closed characteristic of the boundary, and its action
//! follows from the critical value through [`period_from_min_scaled`].

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convex_model::GaugeDomain;
use crate::critical_points::{
    find_critical_points, global_min_dual, homogeneous_reduction, period_from_min_scaled, DualMinConfig, GlobalMin, OrbitRecord,
};
use crate::error::{Error, Result};
use crate::loop_fourier::FourierLoop;

/// Settings of the capacity computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CapacityConfig {
    pub dual: DualMinConfig,
    /// Homogeneity exponents, each in `(1, 2)`.
    pub p_values: Vec<f64>,
    /// Relative agreement required between the runs.
    pub consensus: f64,
}

impl Default for CapacityConfig {
    fn default() -> Self {
        Self { dual: DualMinConfig::default(), p_values: vec![1.5, 4.0 / 3.0], consensus: 1e-6 }
    }
}

/// One dual-minimization run.
#[derive(Debug, Clone, Serialize)]
pub struct CapacityCandidate {
    pub p: f64,
    pub psi_min: f64,
    pub period: f64,
    pub relative_index: usize,
    pub starts: usize,
    pub orbit: FourierLoop,
}

/// Result of [`sh_capacity_with`].
#[derive(Debug, Clone, Serialize)]
pub struct CapacityRun {
    pub domain: String,
    pub capacity: f64,
    pub candidates: Vec<CapacityCandidate>,
    /// Largest relative disagreement between candidates.
    pub spread: f64,
}

impl From<&GlobalMin> for CapacityCandidate {
    fn from(g: &GlobalMin) -> Self {
        Self {
            p: g.p,
            psi_min: g.psi_min,
            period: g.period,
            relative_index: g.record.relative_index,
            starts: g.starts,
            orbit: g.record.orbit.clone(),
        }
    }
}

/// Capacity of a convex body with default settings.
pub fn sh_capacity(domain: &GaugeDomain) -> Result<f64> {
    sh_capacity_with(domain, &CapacityConfig::default()).map(|r| r.capacity)
}

/// Capacity as the consensus minimal period over several homogeneity
/// exponents, each from a multistart global minimization.
pub fn sh_capacity_with(domain: &GaugeDomain, cfg: &CapacityConfig) -> Result<CapacityRun> {
    let tag = |e: Error| e.at("capacity", "sh_capacity");
    if cfg.p_values.len() < 2 {
        return Err(tag(Error::InvalidInput("at least two homogeneity exponents are required".into())));
    }
    let runs: Vec<Result<GlobalMin>> = cfg.p_values.par_iter().map(|&p| global_min_dual(domain, p, &cfg.dual)).collect();
    let mut candidates = Vec::new();
    for r in runs {
        candidates.push(CapacityCandidate::from(&r?));
    }
    let periods: Vec<f64> = candidates.iter().map(|c| c.period).collect();
    let lo = periods.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = periods.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let spread = (hi - lo) / lo.abs();
    if !(spread <= cfg.consensus) {
        return Err(tag(Error::NoConsensus { candidates: periods }));
    }
    let capacity = periods.iter().sum::<f64>() / periods.len() as f64;
    Ok(CapacityRun { domain: domain.describe(), capacity, candidates, spread })
}

/// How a spectrum entry was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    /// A critical point found by the dual search.
    DualMin,
    /// An integer iterate of a found primitive characteristic.
    Iterate,
    /// A closed-form value.
    Oracle,
}

/// One action value with the number of distinct characteristics carrying
/// it.
#[derive(Debug, Clone, Serialize)]
pub struct SpectrumEntry {
    pub action: f64,
    pub multiplicity: usize,
    pub provenance: Vec<Provenance>,
}

/// Windowed action spectrum.
#[derive(Debug, Clone, Serialize)]
pub struct SpectrumReport {
    pub domain: String,
    pub t_max: f64,
    pub entries: Vec<SpectrumEntry>,
    pub min_action: f64,
    pub capacity: f64,
    /// Primitive characteristics found, by action.
    pub primitives: Vec<f64>,
    /// Critical points discarded because their orbit enters the smoothing
    /// cap.
    pub cap_artifacts: usize,
    pub search_failures: usize,
}

impl SpectrumReport {
    /// Distinct action values.
    pub fn actions(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.action).collect()
    }

    /// Actions repeated by multiplicity.
    pub fn actions_with_multiplicity(&self) -> Vec<f64> {
        self.entries.iter().flat_map(|e| std::iter::repeat_n(e.action, e.multiplicity)).collect()
    }

    /// Entries from the closed-form spectrum, when one is known.
    pub fn oracle(domain: &GaugeDomain, t_max: f64) -> Result<SpectrumReport> {
        let values = domain.known_spectrum(t_max).ok_or(Error::SpectrumUnavailable.at("capacity", "oracle_spectrum"))?;
        let entries = group(values.iter().map(|&a| (a, Provenance::Oracle)).collect(), 1e-7);
        let min_action = entries.first().map_or(f64::NAN, |e| e.action);
        Ok(SpectrumReport {
            domain: domain.describe(),
            t_max,
            entries,
            min_action,
            capacity: min_action,
            primitives: Vec::new(),
            cap_artifacts: 0,
            search_failures: 0,
        })
    }

    /// Comma-separated `action,multiplicity,provenance` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("action,multiplicity,provenance\n");
        for e in &self.entries {
            let prov: Vec<&str> = e
                .provenance
                .iter()
                .map(|p| match p {
                    Provenance::DualMin => "dual-min",
                    Provenance::Iterate => "iterate",
                    Provenance::Oracle => "oracle",
                })
                .collect();
            s.push_str(&format!("{:.12},{},{}\n", e.action, e.multiplicity, prov.join("|")));
        }
        s
    }
}

fn group(mut values: Vec<(f64, Provenance)>, tol: f64) -> Vec<SpectrumEntry> {
    values.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<SpectrumEntry> = Vec::new();
    for (a, p) in values {
        match out.last_mut() {
            Some(e) if (a - e.action).abs() < tol => {
                e.multiplicity += 1;
                if !e.provenance.contains(&p) {
                    e.provenance.push(p);
                }
            }
            _ => out.push(SpectrumEntry { action: a, multiplicity: 1, provenance: vec![p] }),
        }
    }
    out
}

/// Covering multiplicity of a loop: the gcd of its supported modes.
fn covering_degree(x: &FourierLoop) -> usize {
    let scale = x.raw().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut g = 0usize;
    for k in x.modes() {
        if k != 0 && x.coeff(k).iter().any(|v| v.abs() > 1e-8 * scale) {
            g = gcd(g, k.unsigned_abs() as usize);
        }
    }
    g.max(1)
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// The primitive loop `t -> x(t / d)` of a `d`-fold covered loop.
fn primitive_loop(x: &FourierLoop, d: usize) -> FourierLoop {
    let m = x.cutoff() / d;
    let mut out = FourierLoop::zeros(x.n(), m);
    for k in -(m as i64)..=m as i64 {
        out.coeff_mut(k).copy_from_slice(x.coeff(k * d as i64));
    }
    out
}

/// `L2` distance between loops modulo time shift.
fn loop_shift_distance(a: &FourierLoop, b: &FourierLoop) -> f64 {
    let m = a.cutoff().max(b.cutoff());
    let (a, b) = (a.with_cutoff(m), b.with_cutoff(m));
    let dist = |t: f64| a.sub(&b.shift_time(t)).l2_norm_sq().sqrt();
    let samples = 720;
    let best = (0..samples).map(|i| i as f64 / samples as f64).min_by(|&s, &t| dist(s).total_cmp(&dist(t))).unwrap_or(0.0);
    let (mut lo, mut hi) = (best - 1.0 / samples as f64, best + 1.0 / samples as f64);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let c = hi - g * (hi - lo);
        let d = lo + g * (hi - lo);
        if dist(c) < dist(d) {
            hi = d;
        } else {
            lo = c;
        }
    }
    dist(best).min(dist(0.5 * (lo + hi)))
}

/// Closed characteristics with action at most `t_max`, with default
/// settings.
pub fn action_spectrum_window(domain: &GaugeDomain, t_max: f64) -> Result<SpectrumReport> {
    action_spectrum_window_with(domain, t_max, &DualMinConfig::default())
}

/// Homogeneity used for the spectrum search.
pub const SPECTRUM_P: f64 = 1.5;

/// Enumerate closed characteristics with action at most `t_max` from the
/// critical points of the reduced dual functional of `c H_C^{3/4}`, seeded
/// with circles of every head mode, then append integer iterates and merge
/// actions closer than `1e-7`.
pub fn action_spectrum_window_with(domain: &GaugeDomain, t_max: f64, cfg: &DualMinConfig) -> Result<SpectrumReport> {
    let tag = |e: Error| e.at("capacity", "action_spectrum_window");
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(tag(Error::InvalidInput(format!("T_max must be positive, got {t_max}"))));
    }
    let p = SPECTRUM_P;
    let (rm, c) = homogeneous_reduction(domain, p, cfg).map_err(tag)?;
    let report = find_critical_points(&rm, &cfg.search).map_err(tag)?;
    let cap = domain.smoothing_radius.powi(2);
    let mut cap_artifacts = 0;
    // Primitive characteristics scaled to the boundary, with their actions.
    let mut primitives: Vec<(f64, FourierLoop)> = Vec::new();
    for rec in &report.records {
        if rec.is_constant() || rec.action >= 0.0 {
            continue;
        }
        let (lo, hi) = gauge_range(domain, rec);
        if lo <= cap * (1.0 + 1e-6) {
            cap_artifacts += 1;
            continue;
        }
        let level = 0.5 * (lo + hi);
        let action = period_from_min_scaled(rec.action, p, c).map_err(tag)?;
        let d = covering_degree(&rec.orbit.zero_mean_part());
        let prim_action = action / d as f64;
        let prim = primitive_loop(&rec.orbit.zero_mean_part(), d).scaled(1.0 / level.sqrt());
        let known = primitives.iter().any(|(a, l)| (a - prim_action).abs() < 1e-7 && loop_shift_distance(l, &prim) < 1e-4);
        if !known {
            primitives.push((prim_action, prim));
        }
    }
    let mut values = Vec::new();
    for (a, _) in &primitives {
        let mut j = 1.0;
        while j * a <= t_max * (1.0 + 1e-9) {
            values.push((j * a, if j == 1.0 { Provenance::DualMin } else { Provenance::Iterate }));
            j += 1.0;
        }
    }
    let entries = group(values, 1e-7);
    let min_action = entries.first().map(|e| e.action).ok_or_else(|| tag(Error::InvalidInput(format!("no closed characteristic with action below T_max = {t_max}"))))?;
    let mut prim_actions: Vec<f64> = primitives.iter().map(|p| p.0).collect();
    prim_actions.sort_by(f64::total_cmp);
    Ok(SpectrumReport {
        domain: domain.describe(),
        t_max,
        entries,
        min_action,
        capacity: min_action,
        primitives: prim_actions,
        cap_artifacts,
        search_failures: report.failures.len(),
    })
}

/// Smallest and largest gauge level along an orbit.
fn gauge_range(domain: &GaugeDomain, rec: &OrbitRecord) -> (f64, f64) {
    let samples = 64;
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for j in 0..samples {
        let g = domain.gauge_eval(&rec.orbit.evaluate(j as f64 / samples as f64));
        lo = lo.min(g);
        hi = hi.max(g);
    }
    (lo, hi)
}

/// Minimal action of an ellipsoid, `pi min r_i^2`.
pub fn ellipsoid_capacity(radii: &[f64]) -> f64 {
    PI * radii.iter().copied().fold(f64::INFINITY, f64::min).powi(2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn covering_degree_of_double_circle() {
        let x = FourierLoop::single_mode(6, 2, &[1.0, 0.0]).add(&FourierLoop::single_mode(6, 4, &[0.0, 0.3]));
        assert_eq!(covering_degree(&x), 2);
        let p = primitive_loop(&x, 2);
        assert_eq!(p.coeff(1), &[1.0, 0.0]);
        assert_eq!(p.coeff(2), &[0.0, 0.3]);
    }

    #[test]
    fn shift_distance_ignores_phase() {
        let x = FourierLoop::single_mode(4, 1, &[1.0, 0.0]).add(&FourierLoop::single_mode(4, 2, &[0.0, 0.2]));
        assert!(loop_shift_distance(&x, &x.shift_time(0.3137)) < 1e-9);
        assert!(loop_shift_distance(&x, &x.scaled(1.1)) > 1e-2);
    }

    #[test]
    fn grouping_counts_multiplicity() {
        let e = group(vec![(PI, Provenance::DualMin), (4.0 * PI, Provenance::Iterate), (4.0 * PI + 1e-9, Provenance::DualMin)], 1e-7);
        assert_eq!(e.len(), 2);
        assert_eq!(e[1].multiplicity, 2);
        assert_eq!(e[1].provenance.len(), 2);
    }
}
