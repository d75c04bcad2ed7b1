//! Run configuration: file format, flag overrides, validation and the
//! construction of domains and Hamiltonians from it.

use std::f64::consts::PI;
use std::path::PathBuf;

use clarke_core::convex_model::{
    ellipsoid_gauge, perturbed_ball_gauge, profile_hamiltonian, GaugeDomain, HamiltonianModel, ProfileKind, QuadraticHamiltonian,
};
use clarke_core::morse_complex::{double_well_toy, VanishingConfig};
use clarke_core::reduction::{choose_n, ReducedManifold, TruncationAudit};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum GaugeChoice {
    Ball,
    Ellipsoid,
    PerturbedBall,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileChoice {
    /// `eta H_C`; on the ball this is `eta |z|^2`.
    Quadratic,
    /// `eta H_C + xi`.
    Linear,
    /// `(2T/p) H_C^{p/2}`.
    PHomogeneous,
    /// Convex profile flat at the origin with slope `a_min` on the boundary.
    FlatConvex,
    /// Smoothed disk with a rotating bump, three critical points.
    Vanishing,
    /// Reduced double well with two minima and a saddle.
    DoubleWell,
}

/// Body, Hamiltonian and perturbation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    pub gauge: GaugeChoice,
    /// Number of degrees of freedom for the ball families.
    pub n: usize,
    /// Ellipsoid radii, one per plane.
    pub radii: Vec<f64>,
    /// Quartic perturbation amplitude of the perturbed ball.
    pub eps: f64,
    /// Relative cap radius of the gauge.
    pub smoothing_radius: Option<f64>,
    pub profile: ProfileChoice,
    pub eta: f64,
    pub xi: f64,
    /// Slope `phi'(1)` of the p-homogeneous profile.
    pub t: f64,
    pub p: f64,
    pub a_min: f64,
    pub c0: f64,
    pub phi0: f64,
    /// Parameters of the vanishing configuration.
    pub vanishing: VanishingConfig,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            gauge: GaugeChoice::Ball,
            n: 1,
            radii: vec![1.0],
            eps: 0.01,
            smoothing_radius: None,
            profile: ProfileChoice::Quadratic,
            eta: 4.0,
            xi: 0.0,
            t: PI,
            p: 3.0,
            a_min: PI,
            c0: 0.2,
            phi0: -0.05,
            vanishing: VanishingConfig::default(),
        }
    }
}

/// Discretization, tolerances and search effort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NumericsConfig {
    /// Head cutoff override; the default is the smallest admissible value.
    pub head_cutoff: Option<usize>,
    /// Tail truncation `M`; the default depends on the head cutoff.
    pub m: Option<usize>,
    /// Quadrature nodes `Q`, at least `4M`.
    pub q: Option<usize>,
    /// Largest tail truncation the doubling audit may grow `M` to.
    pub m_max: usize,
    /// Random head points of the truncation doubling audit.
    pub truncation_points: usize,
    /// `H1` radius of the truncation audit's head points.
    pub truncation_radius: f64,
    pub gradient_tolerance: f64,
    pub tail_tolerance: f64,
    /// Random multistart count.
    pub multistarts: usize,
    pub seed: u64,
    /// Radius of the ball that gradient-flow lines must stay in.
    pub bounding_radius: Option<f64>,
    pub metric_seed: u64,
    /// Upper end of the spectrum window.
    pub t_max: Option<f64>,
    /// Homogeneity exponents of the capacity runs.
    pub p_values: Vec<f64>,
    pub consensus: f64,
    /// Worker threads; defaults to the `CLARKE_WORKERS` environment variable.
    pub workers: Option<usize>,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        Self {
            head_cutoff: None,
            m: None,
            q: None,
            m_max: 64,
            truncation_points: 100,
            truncation_radius: 1.0,
            gradient_tolerance: 1e-9,
            tail_tolerance: 1e-10,
            multistarts: 8,
            seed: 7,
            bounding_radius: None,
            metric_seed: 11,
            t_max: None,
            p_values: vec![1.5, 4.0 / 3.0],
            consensus: 1e-6,
            workers: None,
        }
    }
}

/// Where reports go.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// JSON report path; standard output when absent.
    pub report: Option<PathBuf>,
    /// Directory for CSV exports.
    pub csv_dir: Option<PathBuf>,
    /// Emit loop traces and other plot data as CSV.
    pub plot_data: bool,
    /// Record wall-clock seconds per stage. Off by default so that equal
    /// configurations give byte-identical reports.
    pub wall_clock: bool,
}

/// Options of the `verify` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub suite: Suite,
    pub trials: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { suite: Suite::All, trials: 1000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    All,
    Conjugate,
    Duality,
    Derivatives,
    Reduction,
    Indices,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: String,
    pub problem: ProblemConfig,
    pub numerics: NumericsConfig,
    pub outputs: OutputConfig,
    pub verify: VerifyConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))
    }

    /// Check tolerances and discretization sizes, returning warnings.
    pub fn validate(&self) -> Result<Vec<String>, CliError> {
        let bad = |m: String| Err(CliError::Validation(m));
        let nm = &self.numerics;
        for (name, v) in [("gradient_tolerance", nm.gradient_tolerance), ("tail_tolerance", nm.tail_tolerance), ("consensus", nm.consensus)] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if let Some(r) = nm.bounding_radius {
            if !(r.is_finite() && r > 0.0) {
                return bad(format!("bounding_radius must be positive, got {r}"));
            }
        }
        if let (Some(m), Some(q)) = (nm.m, nm.q) {
            if q < 4 * m {
                return bad(format!("need Q >= 4M, got Q = {q}, M = {m}"));
            }
        }
        if !(nm.truncation_radius.is_finite() && nm.truncation_radius > 0.0) {
            return bad(format!("truncation_radius must be positive, got {}", nm.truncation_radius));
        }
        if let Some(t) = nm.t_max {
            if !(t.is_finite() && t > 0.0) {
                return bad(format!("t_max must be positive, got {t}"));
            }
        }
        let pr = &self.problem;
        if pr.n == 0 {
            return bad("n must be at least 1".into());
        }
        if pr.gauge == GaugeChoice::Ellipsoid && pr.radii.is_empty() {
            return bad("ellipsoid needs radii".into());
        }
        let mut warnings = Vec::new();
        if let Some(n_head) = nm.head_cutoff {
            if let Ok(h) = self.hamiltonian() {
                let (auto, _) = choose_n(&h);
                if n_head != auto {
                    warnings.push(format!("head cutoff {n_head} overrides the automatic choice {auto}"));
                }
            }
        }
        Ok(warnings)
    }

    pub fn domain(&self) -> Result<GaugeDomain, CliError> {
        let pr = &self.problem;
        let d = match pr.gauge {
            GaugeChoice::Ball => ellipsoid_gauge(&vec![1.0; pr.n]),
            GaugeChoice::Ellipsoid => ellipsoid_gauge(&pr.radii),
            GaugeChoice::PerturbedBall => perturbed_ball_gauge(pr.n, pr.eps),
        }?;
        Ok(match pr.smoothing_radius {
            Some(r) => d.with_smoothing_radius(r),
            None => d,
        })
    }

    pub fn hamiltonian(&self) -> Result<HamiltonianModel, CliError> {
        let pr = &self.problem;
        let profile = |kind: ProfileKind| -> Result<HamiltonianModel, CliError> { Ok(profile_hamiltonian(&self.domain()?, kind)?) };
        match pr.profile {
            ProfileChoice::Quadratic if pr.gauge == GaugeChoice::Ball => Ok(HamiltonianModel::new(QuadraticHamiltonian::scalar(pr.n, pr.eta))?),
            ProfileChoice::Quadratic => profile(ProfileKind::Linear { eta: pr.eta, xi: 0.0 }),
            ProfileChoice::Linear => profile(ProfileKind::Linear { eta: pr.eta, xi: pr.xi }),
            ProfileChoice::PHomogeneous => profile(ProfileKind::PHomogeneous { t: pr.t, p: pr.p }),
            ProfileChoice::FlatConvex => profile(ProfileKind::FlatConvex { a_min: pr.a_min, eta: pr.eta, c0: pr.c0, phi0: pr.phi0 }),
            ProfileChoice::Vanishing => Ok(pr.vanishing.hamiltonian()?),
            ProfileChoice::DoubleWell => Ok(double_well_toy()?),
        }
    }

    /// The reduction with the configured or default discretization.
    /// The reduced manifold and the doubling audit of its truncation. When
    /// neither `M` nor `Q` is given, `M` grows until the audit passes.
    pub fn reduction(&self) -> Result<(ReducedManifold, TruncationAudit), CliError> {
        let h = self.hamiltonian()?;
        let nm = &self.numerics;
        let n_head = nm.head_cutoff.unwrap_or_else(|| choose_n(&h).0);
        let audit_seed = nm.seed ^ 0x7275_6e63;
        if nm.m.is_none() && nm.q.is_none() {
            let m0 = (2 * n_head + 4).max(8);
            let (rm, audit) = ReducedManifold::with_audited_truncation(
                h,
                n_head,
                m0,
                nm.m_max.max(m0),
                nm.tail_tolerance,
                nm.truncation_points,
                nm.truncation_radius,
                audit_seed,
            )?;
            return Ok((rm, audit));
        }
        let m = nm.m.unwrap_or((2 * n_head + 4).max(8));
        let q = nm.q.unwrap_or(4 * m);
        let mut rm = ReducedManifold::with_head(h, n_head, m, q)?;
        rm.tail_tolerance = nm.tail_tolerance;
        let audit = rm.truncation_audit(nm.truncation_points, nm.truncation_radius, &[], audit_seed)?;
        Ok((rm, audit))
    }

    pub fn search(&self) -> clarke_core::critical_points::SearchConfig {
        clarke_core::critical_points::SearchConfig {
            random_seeds: self.numerics.multistarts,
            seed: self.numerics.seed,
            gradient_tolerance: self.numerics.gradient_tolerance,
            workers: self.numerics.workers,
            ..Default::default()
        }
    }

    pub fn capacity(&self) -> clarke_core::capacity::CapacityConfig {
        let mut cfg = clarke_core::capacity::CapacityConfig { p_values: self.numerics.p_values.clone(), consensus: self.numerics.consensus, ..Default::default() };
        cfg.dual.search = clarke_core::critical_points::SearchConfig { random_seeds: self.numerics.multistarts, seed: self.numerics.seed, ..cfg.dual.search };
        cfg
    }

    pub fn complex(&self) -> clarke_core::morse_complex::ComplexConfig {
        clarke_core::morse_complex::ComplexConfig {
            metric_seed: self.numerics.metric_seed,
            bounding_radius: self.numerics.bounding_radius,
            workers: self.numerics.workers,
            ..Default::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_rejects_unknown_keys() {
        let cfg = RunConfig::from_toml("[problem]\ngauge = \"ellipsoid\"\nradii = [1.0, 2.0]\n[numerics]\nm = 8\nq = 40\n").unwrap();
        assert_eq!(cfg.problem.radii, vec![1.0, 2.0]);
        assert_eq!(cfg.numerics.q, Some(40));
        assert!(RunConfig::from_toml("[problem]\ncolour = 3\n").is_err());
    }

    #[test]
    fn validation_catches_small_quadrature() {
        let mut cfg = RunConfig::default();
        cfg.numerics.m = Some(10);
        cfg.numerics.q = Some(30);
        assert!(matches!(cfg.validate(), Err(CliError::Validation(_))));
        cfg.numerics.q = Some(40);
        assert!(cfg.validate().unwrap().is_empty());
        cfg.numerics.gradient_tolerance = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn head_override_warns() {
        let mut cfg = RunConfig::default();
        cfg.numerics.head_cutoff = Some(3);
        assert_eq!(cfg.validate().unwrap().len(), 1);
    }
}
