//! The six pipeline commands.

use serde_json::json;

use clarke_core::capacity::{action_spectrum_window_with, sh_capacity_with, SpectrumReport};
use clarke_core::critical_points::{find_critical_points, OrbitRecord, SearchReport};
use clarke_core::morse_complex::{betti_euler, build_complex, capacity_vanishing_check, filtered_betti, vanishing_level, verify_d2};
use clarke_core::reduction::{ReducedManifold, TruncationAudit};
use clarke_core::loop_fourier::FourierLoop;

use crate::config::{ProfileChoice, RunConfig};
use crate::report::{csv_table, to_value, Report};
use crate::CliError;

pub fn dispatch(cfg: &RunConfig) -> Result<Report, CliError> {
    match cfg.command.as_str() {
        "capacity" => capacity(cfg),
        "spectrum" => spectrum(cfg),
        "orbits" => orbits(cfg),
        "index" => index(cfg),
        "complex" => complex(cfg),
        "verify" => crate::verify::run(cfg),
        other => Err(CliError::Validation(format!("unknown command {other:?}"))),
    }
}

/// Samples `(t, z(t))` of a loop for plotting.
fn trace_csv(x: &FourierLoop, samples: usize) -> String {
    let d = 2 * x.n();
    let mut header = vec!["t".to_string()];
    for i in 0..x.n() {
        header.push(format!("q{}", i + 1));
        header.push(format!("p{}", i + 1));
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = (0..=samples).map(|s| {
        let t = s as f64 / samples as f64;
        let z = x.evaluate(t);
        std::iter::once(t).chain(z.into_iter().take(d)).map(|v| format!("{v:.12e}")).collect::<Vec<_>>()
    });
    csv_table(&header, rows)
}

/// Audits shared by reports that carry a spectrum.
fn spectrum_audits(report: &mut Report, cfg: &RunConfig, s: &SpectrumReport) -> Result<(), CliError> {
    let scale = s.capacity.abs().max(1.0);
    report.audit("capacity equals minimal action", (s.capacity - s.min_action).abs() <= 1e-6 * scale, format!("{} vs {}", s.capacity, s.min_action));
    let actions = s.actions();
    let mut missing = Vec::new();
    for &a in &s.primitives {
        let mut k = 2.0;
        while k * a <= s.t_max * (1.0 - 1e-9) {
            if !actions.iter().any(|b| (b - k * a).abs() < 1e-7 * (1.0 + k * a)) {
                missing.push(k * a);
            }
            k += 1.0;
        }
    }
    report.audit("closed under iterates", missing.is_empty(), format!("missing iterates {missing:?}"));
    if let Ok(oracle) = SpectrumReport::oracle(&cfg.domain()?, s.t_max) {
        let want = oracle.actions();
        let ok = want.len() == actions.len() && want.iter().zip(&actions).all(|(a, b)| (a - b).abs() < 1e-6);
        report.audit("matches closed-form spectrum", ok, format!("expected {want:?}, found {actions:?}"));
    }
    Ok(())
}

fn capacity(cfg: &RunConfig) -> Result<Report, CliError> {
    let mut report = Report::new(cfg);
    let domain = cfg.domain()?;
    let ccfg = cfg.capacity();
    let run = report.stage("capacity", || sh_capacity_with(&domain, &ccfg))?;
    let t_max = cfg.numerics.t_max.unwrap_or(1.1 * run.capacity);
    let spectrum = report.stage("spectrum", || action_spectrum_window_with(&domain, t_max, &ccfg.dual))?;
    let n = domain.n();
    let indices: Vec<usize> = run.candidates.iter().map(|c| c.relative_index).collect();
    report.audit("runs agree", run.spread <= ccfg.consensus, format!("relative spread {:.3e}", run.spread));
    report.audit("minimal orbit has relative index n", indices.iter().all(|&i| i == n), format!("indices {indices:?}, n = {n}"));
    report.audit(
        "capacity in spectrum",
        spectrum.actions().iter().any(|a| (a - run.capacity).abs() <= 1e-6 * run.capacity),
        format!("capacity {} against {:?}", run.capacity, spectrum.actions()),
    );
    spectrum_audits(&mut report, cfg, &spectrum)?;
    report.csv.push(("spectrum.csv".into(), spectrum.to_csv()));
    if let Some(c) = run.candidates.first() {
        report.plots.push(("capacity_orbit.csv".into(), trace_csv(&c.orbit, 256)));
    }
    report.results = json!({ "capacity": run.capacity, "run": to_value(&run), "spectrum": to_value(&spectrum) });
    Ok(report)
}

fn spectrum(cfg: &RunConfig) -> Result<Report, CliError> {
    let mut report = Report::new(cfg);
    let domain = cfg.domain()?;
    let t_max = cfg.numerics.t_max.ok_or_else(|| CliError::Validation("spectrum needs --t-max".into()))?;
    let ccfg = cfg.capacity();
    let spectrum = report.stage("spectrum", || action_spectrum_window_with(&domain, t_max, &ccfg.dual))?;
    spectrum_audits(&mut report, cfg, &spectrum)?;
    report.csv.push(("spectrum.csv".into(), spectrum.to_csv()));
    let stems = spectrum.entries.iter().map(|e| vec![format!("{:.12}", e.action), e.multiplicity.to_string()]);
    report.plots.push(("spectrum_stems.csv".into(), csv_table(&["action", "multiplicity"], stems)));
    report.results = to_value(&spectrum);
    Ok(report)
}

/// Audit that the chosen tail truncation passes the doubling test.
pub fn truncation_audit(report: &mut Report, rm: &ReducedManifold, audit: &TruncationAudit) {
    report.audit(
        "tail truncation stable under doubling",
        audit.passed,
        format!("M = {}, max difference {:.3e} over {} head points", rm.m, audit.max_difference, audit.points),
    );
}

fn search(cfg: &RunConfig, report: &mut Report) -> Result<(ReducedManifold, SearchReport), CliError> {
    let (rm, audit) = report.stage("reduction", || cfg.reduction())?;
    truncation_audit(report, &rm, &audit);
    let scfg = cfg.search();
    let found = report.stage("search", || find_critical_points(&rm, &scfg))?;
    Ok((rm, found))
}

fn residual_audits(report: &mut Report, records: &[OrbitRecord], palais_smale_ok: bool) {
    let max = |f: fn(&OrbitRecord) -> f64| records.iter().map(f).fold(0.0, f64::max);
    let gap = max(|r| r.residuals.action_gap);
    let ode = max(|r| r.residuals.orbit);
    let shoot = max(|r| r.residuals.shooting);
    let tail = max(|r| r.residuals.tail_gradient);
    report.audit("dual and direct actions agree", gap < 1e-8, format!("max gap {gap:.3e}"));
    report.audit("orbit equation residual", ode < 1e-6, format!("max residual {ode:.3e}"));
    report.audit("shooting re-integration closes", shoot < 1e-6, format!("max residual {shoot:.3e}"));
    report.audit("tail gradient vanishes", tail < 1e-10, format!("max residual {tail:.3e}"));
    report.audit("Palais-Smale bound", palais_smale_ok, "small-gradient iterates stay bounded");
}

fn orbit_rows(records: &[OrbitRecord]) -> String {
    let rows = records.iter().enumerate().map(|(i, r)| {
        vec![
            i.to_string(),
            format!("{:.12}", r.action),
            r.morse_index.to_string(),
            r.nullity.to_string(),
            r.relative_index.to_string(),
            r.cz_index.map_or(String::new(), |c| c.to_string()),
            format!("{:.3e}", r.residuals.orbit),
            format!("{:.3e}", r.residuals.action_gap),
        ]
    });
    csv_table(&["orbit", "action", "morse_index", "nullity", "relative_index", "cz_index", "orbit_residual", "action_gap"], rows)
}

fn orbits(cfg: &RunConfig) -> Result<Report, CliError> {
    let mut report = Report::new(cfg);
    let (rm, found) = search(cfg, &mut report)?;
    residual_audits(&mut report, &found.records, found.palais_smale_ok);
    report.csv.push(("orbits.csv".into(), orbit_rows(&found.records)));
    for (i, r) in found.records.iter().enumerate() {
        report.plots.push((format!("orbit_{i}.csv"), trace_csv(&r.orbit, 256)));
    }
    report.results = json!({
        "head_cutoff": rm.n_head,
        "tail_truncation": rm.m,
        "nodes": rm.ctx.q(),
        "search": to_value(&found),
    });
    Ok(report)
}

fn index(cfg: &RunConfig) -> Result<Report, CliError> {
    let mut report = Report::new(cfg);
    let (rm, found) = search(cfg, &mut report)?;
    let n = rm.n();
    let mut all_agree = true;
    let entries: Vec<serde_json::Value> = found
        .records
        .iter()
        .map(|r| {
            let reduced_full = r.morse_index == r.full_index && r.nullity == r.full_nullity;
            let reduced_spectral = r.morse_index == r.spectral_index && r.nullity == r.spectral_nullity;
            let cz_relative = r.cz_index == Some(r.relative_index as i64);
            let agree = reduced_full && reduced_spectral && (r.degenerate || cz_relative);
            all_agree &= agree;
            json!({
                "action": r.action,
                "dual_index": r.morse_index,
                "nullity": r.nullity,
                "full_index": r.full_index,
                "spectral_index": r.spectral_index,
                "relative_index": r.relative_index,
                "cz_index": r.cz_index,
                "degenerate": r.degenerate,
                "agreement": agree,
                "flags": { "reduced_equals_full": reduced_full, "reduced_equals_spectral": reduced_spectral, "cz_equals_relative": cz_relative },
            })
        })
        .collect();
    report.audit("index methods agree", all_agree, format!("{} orbits, n = {n}", entries.len()));
    residual_audits(&mut report, &found.records, found.palais_smale_ok);
    report.csv.push(("index.csv".into(), orbit_rows(&found.records)));
    report.results = json!({ "n": n, "orbits": entries });
    Ok(report)
}

fn complex(cfg: &RunConfig) -> Result<Report, CliError> {
    let mut report = Report::new(cfg);
    let (rm, found) = search(cfg, &mut report)?;
    let ccfg = cfg.complex();
    let c = report.stage("complex", || build_complex(&rm, &found.records, &ccfg))?;
    let mut levels: Vec<f64> = c.filtration.clone();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let profile: Vec<serde_json::Value> = levels
        .iter()
        .map(|&a| {
            let level = a + 1e-9 * (1.0 + a.abs());
            json!({ "level": level, "betti": filtered_betti(&c, level) })
        })
        .collect();
    let betti = filtered_betti(&c, f64::INFINITY);
    let d2 = verify_d2(&c);
    report.audit("boundary squares to zero", d2, "mod 2");
    report.audit("Euler characteristic", c.euler_characteristic() == betti_euler(&c), format!("chain {} homology {}", c.euler_characteristic(), betti_euler(&c)));
    report.audit("boundary respects filtration", c.respects_filtration(0.0), "index drops by one and action decreases");
    let eps = 0.1;
    let vanishing = if cfg.problem.profile == ProfileChoice::Vanishing {
        let vc = &cfg.problem.vanishing;
        let level = vc.a_min * vc.lambda * vc.lambda + eps;
        let dies = capacity_vanishing_check(&c, eps, level)?;
        let v = vanishing_level(&c, eps, &vc.gauge())?;
        report.audit("minimum dies below A_min + eps", dies, format!("level {level}"));
        Some(to_value(&v))
    } else {
        None
    };
    report.csv.push(("generators.csv".into(), c.generators_csv()));
    report.csv.push(("boundary.csv".into(), c.boundary_csv()));
    let width = betti.len();
    let rows = profile.iter().map(|p| {
        let mut row = vec![format!("{:.12}", p["level"].as_f64().unwrap_or(f64::NAN))];
        row.extend(p["betti"].as_array().into_iter().flatten().map(|b| b.to_string()));
        row.resize(width + 1, "0".into());
        row
    });
    let mut header = vec!["level".to_string()];
    header.extend((0..width).map(|k| format!("b{k}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    report.plots.push(("betti_profile.csv".into(), csv_table(&header, rows)));
    report.results = json!({
        "complex": to_value(&c),
        "boundary_triplets": c.triplets(),
        "betti": betti,
        "betti_profile": profile,
        "vanishing": vanishing,
    });
    Ok(report)
}
