//! Acceptance checks against closed-form oracles and structural identities.
//!
//! Each criterion prints one `PASS` or `FAIL` line; the process exits with
//! status 1 if any criterion fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use clarke_core::action_functionals::ActionContext;
use clarke_core::capacity::{action_spectrum_window, sh_capacity_with, CapacityConfig, CapacityRun};
use clarke_core::convex_model::{
    audit_model, ellipsoid_gauge, perturbed_ball_gauge, HamiltonianModel, ProfileKind, QuadraticHamiltonian,
};
use clarke_core::critical_points::{build_record, find_critical_points, OrbitRecord, SearchConfig};
use clarke_core::loop_fourier::FourierLoop;
use clarke_core::morse_complex::{
    build_complex, capacity_vanishing_check, double_well_toy, vanishing_level, verify_d2, ComplexConfig, VanishingConfig,
};
use clarke_core::reduction::ReducedManifold;
use clarke_core::spectral_index::profile_index_shift;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(bool, String), String>;

/// A Hamiltonian, its reduction and the critical points found on it.
struct Case {
    label: String,
    rm: ReducedManifold,
    records: Vec<OrbitRecord>,
}

fn quadratic(n: usize, eta: f64) -> HamiltonianModel {
    HamiltonianModel::new(QuadraticHamiltonian::scalar(n, eta)).expect("quadratic model")
}

fn reduction_for(h: HamiltonianModel) -> ReducedManifold {
    let (big_n, _) = clarke_core::reduction::choose_n(&h);
    let m = (2 * big_n + 4).max(12);
    ReducedManifold::new(h, m, 4 * m).expect("reduction")
}

fn search(label: String, rm: ReducedManifold) -> Result<Case, String> {
    let report = find_critical_points(&rm, &SearchConfig::default()).map_err(|e| format!("{label}: {e}"))?;
    Ok(Case { label, rm, records: report.records })
}

/// Quadratic Hamiltonians, the smoothed-disk configurations and the toy.
fn orbit_cases() -> Result<Vec<Case>, String> {
    let mut cases = Vec::new();
    for eta in [1.0, 4.0, 7.0, 10.0] {
        cases.push(search(format!("quadratic eta={eta}"), reduction_for(quadratic(1, eta)))?);
    }
    for lambda in [1.0, 0.7] {
        for theta0 in [0.0, 1.0, 2.0] {
            let vc = VanishingConfig { lambda, theta0, ..VanishingConfig::default() };
            let h = vc.hamiltonian().map_err(|e| e.to_string())?;
            let rm = ReducedManifold::new(h, 8, 32).map_err(|e| e.to_string())?;
            cases.push(search(format!("smoothed disk lambda={lambda} theta0={theta0}"), rm)?);
        }
    }
    let toy = ReducedManifold::new(double_well_toy().map_err(|e| e.to_string())?, 8, 32).map_err(|e| e.to_string())?;
    cases.push(search("double well".into(), toy)?);
    Ok(cases)
}

fn capacity_run(radii: &[f64]) -> Result<CapacityRun, String> {
    let d = ellipsoid_gauge(radii).map_err(|e| e.to_string())?;
    sh_capacity_with(&d, &CapacityConfig::default()).map_err(|e| e.to_string())
}

fn c1_ball_capacity(runs: &[(usize, CapacityRun, f64)]) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (n, run, secs) in runs {
        let err = (run.capacity - PI).abs();
        ok &= err < 1e-6 && *secs < 30.0;
        parts.push(format!("n={n}: |c-pi|={err:.1e} in {secs:.1}s"));
    }
    Ok((ok, parts.join(", ")))
}

fn c2_ellipsoid_capacity() -> Outcome {
    let a = capacity_run(&[1.0, 2.0])?.capacity;
    let b = capacity_run(&[0.8, 1.3])?.capacity;
    let ea = (a - PI).abs();
    let eb = (b - PI * 0.64).abs();
    let base = perturbed_ball_gauge(1, 0.01).map_err(|e| e.to_string())?;
    let cfg = CapacityConfig::default();
    let c0 = sh_capacity_with(&base, &cfg).map_err(|e| e.to_string())?.capacity;
    let mut worst: f64 = 0.0;
    for lambda in [0.5, 2.0] {
        let c = sh_capacity_with(&base.scaled(lambda), &cfg).map_err(|e| e.to_string())?.capacity;
        worst = worst.max((c / (lambda * lambda * c0) - 1.0).abs());
    }
    Ok((ea < 1e-6 && eb < 1e-6 && worst < 1e-8, format!("(1,2): {ea:.1e}, (0.8,1.3): {eb:.1e}, scaling rel {worst:.1e}")))
}

fn c3_disk_spectrum() -> Outcome {
    let d = ellipsoid_gauge(&[1.0]).map_err(|e| e.to_string())?;
    let report = action_spectrum_window(&d, 7.0).map_err(|e| e.to_string())?;
    let actions = report.actions();
    let expected = [PI, 2.0 * PI];
    let ok = actions.len() == 2 && actions.iter().zip(expected).all(|(a, e)| (a - e).abs() < 1e-6);
    Ok((ok, format!("actions {actions:?}")))
}

fn c4_index_identities(cases: &[Case]) -> Outcome {
    let mut count = 0;
    let mut bad = Vec::new();
    for case in cases {
        let n = case.rm.n() as i64;
        for r in case.records.iter().filter(|r| !r.degenerate) {
            count += 1;
            let dual = r.morse_index as i64 + n;
            if r.cz_index != Some(dual) || r.relative_index as i64 != dual {
                bad.push(format!("{} action {:.4}: cz {:?} relative {} dual+n {dual}", case.label, r.action, r.cz_index, r.relative_index));
            }
        }
    }
    Ok((bad.is_empty() && count >= 20, format!("{count} nondegenerate orbits, {} mismatches {bad:?}", bad.len())))
}

fn c5_quadratic_origin() -> Outcome {
    let mut bad = Vec::new();
    for n in [1, 2] {
        for eta in [1.0, 4.0, 7.0, 10.0] {
            let rm = reduction_for(quadratic(n, eta));
            let x = DVector::zeros(rm.head_dim());
            let eval = rm.evaluate(&x, true, None).map_err(|e| e.to_string())?;
            let rec = build_record(&rm, &eval, &x, &SearchConfig::default(), 0).map_err(|e| e.to_string())?;
            let expected = 2 * n * (eta / PI).floor() as usize;
            if rec.morse_index != expected || rec.spectral_index != expected {
                bad.push(format!("n={n} eta={eta}: reduced {} spectral {} expected {expected}", rec.morse_index, rec.spectral_index));
            }
        }
    }
    Ok((bad.is_empty(), if bad.is_empty() { "8 cases exact".into() } else { bad.join("; ") }))
}

fn c6_profile_shift() -> Outcome {
    let disk = ellipsoid_gauge(&[1.0]).map_err(|e| e.to_string())?;
    let x = FourierLoop::single_mode(1, 1, &[1.0, 0.0]);
    let profiles = [
        ProfileKind::Linear { eta: PI, xi: 0.0 },
        ProfileKind::PHomogeneous { t: PI, p: 1.5 },
        ProfileKind::PHomogeneous { t: PI, p: 3.0 },
    ];
    let report = profile_index_shift(&disk, PI, &x, &profiles).map_err(|e| e.to_string())?;
    let got: Vec<(i64, i64)> = report.entries.iter().map(|e| (e.index_shift, e.nullity_drop)).collect();
    let ok = got == [(0, 0), (0, 1), (1, 1)];
    Ok((ok, format!("(shift, nullity drop) for phi''(1) = 0, <0, >0: {got:?}")))
}

fn c7_minimal_index(runs: &[(usize, CapacityRun, f64)]) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (n, run, _) in runs {
        let idx: Vec<usize> = run.candidates.iter().map(|c| c.relative_index).collect();
        ok &= idx.iter().all(|&i| i == *n);
        parts.push(format!("n={n}: {idx:?}"));
    }
    Ok((ok, parts.join(", ")))
}

fn random_loop(rng: &mut ChaCha8Rng, n: usize, m: usize, scale: f64, positive: bool, negative: bool, mean: bool) -> FourierLoop {
    let mut x = FourierLoop::zeros(n, m);
    for k in x.modes().collect::<Vec<_>>() {
        let keep = (k > 0 && positive) || (k < 0 && negative) || (k == 0 && mean);
        if keep {
            let s = scale / (1.0 + k.abs() as f64);
            for v in x.coeff_mut(k) {
                *v = s * (2.0 * rng.random::<f64>() - 1.0);
            }
        }
    }
    x
}

fn c8_duality(cases: &[Case]) -> Outcome {
    let models: Vec<(HamiltonianModel, f64)> = vec![
        (quadratic(1, 4.0), 1.0),
        (quadratic(2, 7.0), 0.5),
        (VanishingConfig::default().hamiltonian().map_err(|e| e.to_string())?, 1.5),
        (
            clarke_core::convex_model::profile_hamiltonian(
                &ellipsoid_gauge(&[1.0, 2.0]).map_err(|e| e.to_string())?,
                ProfileKind::PHomogeneous { t: 2.0, p: 3.0 },
            )
            .map_err(|e| e.to_string())?,
            1.0,
        ),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let trials = 10_000;
    let mut worst = f64::INFINITY;
    for i in 0..trials {
        let (h, scale) = &models[i % models.len()];
        let ctx = ActionContext::new(h.clone(), 32);
        let n = h.n();
        let (sx, sy) = (scale * rng.random::<f64>(), scale * rng.random::<f64>());
        let x = random_loop(&mut rng, n, 6, sx, true, true, false);
        let y = random_loop(&mut rng, n, 6, sy, false, true, true);
        let gap = ctx.duality_gap(&x, &y).map_err(|e| e.to_string())?;
        worst = worst.min(gap);
    }
    // Equality at lifted orbits, and the inequality in their neighbourhood
    // where the gap is second order in the perturbation.
    let mut equality: f64 = 0.0;
    let mut near = f64::INFINITY;
    let mut near_trials = 0;
    for case in cases {
        for r in case.records.iter().filter(|r| !r.is_constant()) {
            let x = r.orbit.zero_mean_part();
            let y = FourierLoop::constant(x.cutoff(), &r.v0);
            equality = equality.max(case.rm.ctx.duality_gap(&x, &y).map_err(|e| e.to_string())?.abs());
            for _ in 0..50 {
                let amp = 10f64.powf(-4.0 + 3.0 * rng.random::<f64>());
                let dx = random_loop(&mut rng, case.rm.n(), x.cutoff(), amp, true, true, false);
                let dy = random_loop(&mut rng, case.rm.n(), x.cutoff(), amp, false, true, true);
                near = near.min(case.rm.ctx.duality_gap(&x.add(&dx), &y.add(&dy)).map_err(|e| e.to_string())?);
                near_trials += 1;
            }
        }
    }
    let ok = worst >= -1e-9 && near >= -1e-9 && equality < 1e-8;
    Ok((
        ok,
        format!("min gap over {trials} random trials {worst:.3e}, over {near_trials} near-orbit trials {near:.3e}; max |gap| at orbits {equality:.1e}"),
    ))
}

fn c9_correspondence(cases: &[Case]) -> Outcome {
    let (mut gap, mut ode, mut shoot): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let mut count = 0;
    for case in cases {
        for r in &case.records {
            count += 1;
            gap = gap.max(r.residuals.action_gap);
            ode = ode.max(r.residuals.orbit);
            shoot = shoot.max(r.residuals.shooting);
        }
    }
    let ok = count > 0 && gap < 1e-8 && ode < 1e-6 && shoot < 1e-6;
    Ok((ok, format!("{count} orbits: action gap {gap:.1e}, ODE residual {ode:.1e}, shooting {shoot:.1e}")))
}

fn c10_reduction(cases: &[Case]) -> Outcome {
    let (mut tail, mut drift): (f64, f64) = (0.0, 0.0);
    let mut mismatches = 0;
    for case in cases {
        let fine = case.rm.doubled().map_err(|e| e.to_string())?;
        for r in &case.records {
            tail = tail.max(r.residuals.tail_gradient);
            if r.morse_index != r.full_index || r.nullity != r.full_nullity {
                mismatches += 1;
            }
            let x = r.head_vector();
            let coarse = case.rm.evaluate(&x, false, None).map_err(|e| e.to_string())?.value;
            let doubled = fine.evaluate(&x, false, None).map_err(|e| e.to_string())?.value;
            drift = drift.max((coarse - doubled).abs());
        }
    }
    let ok = tail < 1e-10 && mismatches == 0 && drift < 1e-8;
    Ok((ok, format!("tail gradient {tail:.1e}, index/nullity mismatches {mismatches}, truncation doubling {drift:.1e}")))
}

fn c11_complex(reference_capacity: f64) -> Outcome {
    let vc = VanishingConfig::default();
    let h = vc.hamiltonian().map_err(|e| e.to_string())?;
    let rm = ReducedManifold::new(h, 8, 32).map_err(|e| e.to_string())?;
    let records = find_critical_points(&rm, &SearchConfig::default()).map_err(|e| e.to_string())?.records;
    let c = build_complex(&rm, &records, &ComplexConfig::default()).map_err(|e| e.to_string())?;
    let eps = 0.1;
    let dies = capacity_vanishing_check(&c, eps, vc.a_min + eps).map_err(|e| e.to_string())?;
    let level = vanishing_level(&c, eps, &vc.gauge()).map_err(|e| e.to_string())?;
    let match_err = (level.characteristic_action - reference_capacity).abs();

    let toy = ReducedManifold::new(double_well_toy().map_err(|e| e.to_string())?, 8, 32).map_err(|e| e.to_string())?;
    let toy_records = find_critical_points(&toy, &SearchConfig::default()).map_err(|e| e.to_string())?.records;
    let tc = build_complex(&toy, &toy_records, &ComplexConfig::default()).map_err(|e| e.to_string())?;
    let ok = verify_d2(&c) && verify_d2(&tc) && dies && match_err < 1e-3;
    Ok((
        ok,
        format!(
            "d2=0 disk {} toy {}, minimum dies below A_min+eps {dies}, complex-route action {:.6} vs capacity (|diff| {match_err:.1e})",
            verify_d2(&c),
            verify_d2(&tc),
            level.characteristic_action
        ),
    ))
}

/// Relative error between an analytic vector and central differences.
fn rel_err(analytic: &DVector<f64>, fd: &DVector<f64>) -> f64 {
    (analytic - fd).norm() / analytic.norm().max(1e-12)
}

fn c12_derivatives(cases: &[Case]) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let models = [
        quadratic(2, 4.0),
        VanishingConfig::default().hamiltonian().map_err(|e| e.to_string())?,
        VanishingConfig { lambda: 0.7, theta0: 1.0, ..VanishingConfig::default() }.hamiltonian().map_err(|e| e.to_string())?,
        double_well_toy().map_err(|e| e.to_string())?,
    ];
    // Hamiltonian gradients and Hessians.
    let (mut h_grad, mut h_hess): (f64, f64) = (0.0, 0.0);
    for h in &models {
        let a = audit_model(h, 200, 2.0, 5);
        h_grad = h_grad.max(a.max_gradient_error);
        h_hess = h_hess.max(a.max_hessian_error);
    }
    // Dual functional: gradient and Hessian-vector products in H1.
    let (mut d_grad, mut d_hvp): (f64, f64) = (0.0, 0.0);
    for h in &models {
        let ctx = ActionContext::new(h.clone(), 32);
        for _ in 0..5 {
            let x = random_loop(&mut rng, h.n(), 4, 1.0, true, true, false);
            let u = random_loop(&mut rng, h.n(), 4, 1.0, true, true, false);
            let eps = 1e-5;
            let g = ctx.dual_gradient(&x).map_err(|e| e.to_string())?.gradient;
            let fp = ctx.dual_action(&x.add(&u.scaled(eps))).map_err(|e| e.to_string())?;
            let fm = ctx.dual_action(&x.sub(&u.scaled(eps))).map_err(|e| e.to_string())?;
            let fd = (fp - fm) / (2.0 * eps);
            let an = g.h1_inner(&u);
            d_grad = d_grad.max((an - fd).abs() / an.abs().max(1e-12));
            let hv = ctx.dual_hessian_apply(&x, &u).map_err(|e| e.to_string())?;
            let gp = ctx.dual_gradient(&x.add(&u.scaled(eps))).map_err(|e| e.to_string())?.gradient;
            let gm = ctx.dual_gradient(&x.sub(&u.scaled(eps))).map_err(|e| e.to_string())?.gradient;
            let fd_hv = gp.sub(&gm).scaled(1.0 / (2.0 * eps));
            d_hvp = d_hvp.max(hv.sub(&fd_hv).h1_norm() / hv.h1_norm().max(1e-12));
        }
    }
    // Reduced functional: gradient and Hessian at random head points.
    let (mut r_grad, mut r_hess): (f64, f64) = (0.0, 0.0);
    for case in cases.iter().step_by(2) {
        let rm = &case.rm;
        let w = rm.head_weights();
        for _ in 0..2 {
            let x = DVector::from_iterator(rm.head_dim(), w.iter().map(|wi| 0.5 * (2.0 * rng.random::<f64>() - 1.0) / wi.sqrt()));
            let eps = 1e-5;
            let g = rm.reduced_gradient(&x).map_err(|e| e.to_string())?;
            let hs = rm.reduced_hessian(&x).map_err(|e| e.to_string())?;
            let dim = rm.head_dim();
            let mut fd_g = DVector::zeros(dim);
            let v = DVector::from_iterator(dim, (0..dim).map(|_| 2.0 * rng.random::<f64>() - 1.0));
            for i in 0..dim {
                let s = eps / w[i].sqrt();
                let mut xp = x.clone();
                xp[i] += s;
                let mut xm = x.clone();
                xm[i] -= s;
                fd_g[i] = (rm.reduced_value(&xp).map_err(|e| e.to_string())? - rm.reduced_value(&xm).map_err(|e| e.to_string())?) / (2.0 * s);
            }
            r_grad = r_grad.max(rel_err(&g, &fd_g));
            let s = eps / v.norm();
            let gp = rm.reduced_gradient(&(&x + &v * s)).map_err(|e| e.to_string())?;
            let gm = rm.reduced_gradient(&(&x - &v * s)).map_err(|e| e.to_string())?;
            r_hess = r_hess.max(rel_err(&(&hs * &v), &((gp - gm) / (2.0 * s))));
        }
    }
    let drift = cases.iter().flat_map(|c| c.records.iter()).map(|r| r.residuals.symplectic_drift).fold(0.0, f64::max);
    let ok = h_grad < 1e-6 && d_grad < 1e-6 && r_grad < 1e-6 && h_hess < 1e-5 && d_hvp < 1e-5 && r_hess < 1e-5 && drift < 1e-8;
    Ok((
        ok,
        format!(
            "gradients H {h_grad:.1e} dual {d_grad:.1e} reduced {r_grad:.1e}; Hessians H {h_hess:.1e} dual {d_hvp:.1e} reduced {r_hess:.1e}; symplectic drift {drift:.1e}"
        ),
    ))
}

fn report(id: usize, name: &str, outcome: Outcome, secs: f64) -> bool {
    let (ok, detail) = match outcome {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    println!("{} criterion {id:>2} {name}: {detail} [{secs:.1}s]", if ok { "PASS" } else { "FAIL" });
    ok
}

fn main() -> ExitCode {
    let mut all = true;
    let timed = |f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let o = f();
        (o, t.elapsed().as_secs_f64())
    };

    let mut runs = Vec::new();
    let mut run_error = None;
    for (n, radii) in [(1usize, vec![1.0]), (2, vec![1.0, 1.0])] {
        let t = Instant::now();
        match capacity_run(&radii) {
            Ok(r) => runs.push((n, r, t.elapsed().as_secs_f64())),
            Err(e) => run_error = Some(e),
        }
    }
    let (o, s) = timed(&mut || match &run_error {
        Some(e) => Err(e.clone()),
        None => c1_ball_capacity(&runs),
    });
    all &= report(1, "ball capacity", o, s);
    let (o, s) = timed(&mut c2_ellipsoid_capacity);
    all &= report(2, "ellipsoid capacity and scaling", o, s);
    let (o, s) = timed(&mut c3_disk_spectrum);
    all &= report(3, "disk spectrum window", o, s);

    let t = Instant::now();
    let cases = orbit_cases();
    let search_secs = t.elapsed().as_secs_f64();
    let cases = match cases {
        Ok(c) => c,
        Err(e) => {
            println!("FAIL orbit search: {e}");
            Vec::new()
        }
    };
    let (o, s) = timed(&mut || c4_index_identities(&cases));
    all &= report(4, "index identities", o, s + search_secs);
    let (o, s) = timed(&mut c5_quadratic_origin);
    all &= report(5, "quadratic index formula", o, s);
    let (o, s) = timed(&mut c6_profile_shift);
    all &= report(6, "profile index shift", o, s);
    let (o, s) = timed(&mut || match &run_error {
        Some(e) => Err(e.clone()),
        None => c7_minimal_index(&runs),
    });
    all &= report(7, "minimal-orbit relative index", o, s);
    let (o, s) = timed(&mut || c8_duality(&cases));
    all &= report(8, "duality inequality", o, s);
    let (o, s) = timed(&mut || c9_correspondence(&cases));
    all &= report(9, "critical-point correspondence", o, s);
    let (o, s) = timed(&mut || c10_reduction(&cases));
    all &= report(10, "reduction correctness", o, s);
    let reference = runs.first().map(|r| r.1.capacity).unwrap_or(f64::NAN);
    let (o, s) = timed(&mut || c11_complex(reference));
    all &= report(11, "Morse complex", o, s);
    let (o, s) = timed(&mut || c12_derivatives(&cases));
    all &= report(12, "derivative audits", o, s);

    if all {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: some criteria failed");
        ExitCode::FAILURE
    }
}
