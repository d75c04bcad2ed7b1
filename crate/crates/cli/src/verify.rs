//! Property suites run by `clarke verify`.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use clarke_core::action_functionals::ActionContext;
use clarke_core::convex_model::{audit_model, HamiltonianModel};
use clarke_core::critical_points::find_critical_points;
use clarke_core::loop_fourier::FourierLoop;
use clarke_core::reduction::{ReducedManifold, TruncationAudit};

use crate::config::{RunConfig, Suite};
use crate::report::Report;
use crate::CliError;

const NODES: usize = 32;

fn random_loop(rng: &mut ChaCha8Rng, n: usize, m: usize, scale: f64, keep: impl Fn(i64) -> bool) -> FourierLoop {
    let mut x = FourierLoop::zeros(n, m);
    for k in x.modes().collect::<Vec<_>>() {
        if keep(k) {
            let s = scale / (1.0 + k.abs() as f64);
            for v in x.coeff_mut(k) {
                *v = s * (2.0 * rng.random::<f64>() - 1.0);
            }
        }
    }
    x
}

fn conjugate(h: &HamiltonianModel, trials: usize, rng: &mut ChaCha8Rng, report: &mut Report) -> Result<serde_json::Value, CliError> {
    let d = 2 * h.n();
    let scale = h.oracle().sample_scale() * h.h_hi;
    let (mut grad_err, mut young_err, mut inv_err): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..trials {
        let t: f64 = rng.random();
        let w: Vec<f64> = (0..d).map(|_| scale * (2.0 * rng.random::<f64>() - 1.0)).collect();
        let c = h.conjugate(t, &w, None)?;
        let y = c.argmax.as_slice();
        let g = h.grad(t, y);
        grad_err = grad_err.max((g - DVector::from_column_slice(&w)).norm() / (1.0 + clarke_core::numerics::norm(&w)));
        let young = clarke_core::numerics::dot(&w, y) - h.eval(t, y);
        young_err = young_err.max((c.value - young).abs() / (1.0 + young.abs()));
        inv_err = inv_err.max((&c.hessian * h.hess(t, y) - DMatrix::identity(d, d)).amax());
    }
    report.audit("conjugate: gradient inverts", grad_err < 1e-8, format!("{grad_err:.3e}"));
    report.audit("conjugate: Fenchel-Young equality", young_err < 1e-10, format!("{young_err:.3e}"));
    report.audit("conjugate: Hessians are inverse", inv_err < 1e-8, format!("{inv_err:.3e}"));
    Ok(json!({ "trials": trials, "gradient": grad_err, "young": young_err, "hessian_inverse": inv_err }))
}

fn duality(h: &HamiltonianModel, trials: usize, rng: &mut ChaCha8Rng, report: &mut Report) -> Result<serde_json::Value, CliError> {
    let ctx = ActionContext::new(h.clone(), NODES);
    let n = h.n();
    let scale = h.oracle().sample_scale();
    let mut worst = f64::INFINITY;
    for _ in 0..trials {
        let (sx, sy) = (scale * rng.random::<f64>(), scale * rng.random::<f64>());
        let x = random_loop(rng, n, 6, sx, |k| k != 0);
        let y = random_loop(rng, n, 6, sy, |k| k <= 0);
        worst = worst.min(ctx.duality_gap(&x, &y)?);
    }
    report.audit("duality gap is nonnegative", worst >= -1e-9, format!("minimum {worst:.3e} over {trials} trials"));
    Ok(json!({ "trials": trials, "min_gap": worst }))
}

fn derivatives(h: &HamiltonianModel, rm: &ReducedManifold, trials: usize, rng: &mut ChaCha8Rng, report: &mut Report) -> Result<serde_json::Value, CliError> {
    let audit = audit_model(h, trials.clamp(10, 500), 2.0 * h.oracle().sample_scale(), rng.random());
    report.audit("Hamiltonian derivatives", audit.max_gradient_error < 1e-6 && audit.max_hessian_error < 1e-5, format!("{audit:?}"));
    let ctx = ActionContext::new(h.clone(), NODES);
    let n = h.n();
    let eps = 1e-5;
    let (mut g_err, mut hv_err): (f64, f64) = (0.0, 0.0);
    for _ in 0..trials.clamp(2, 50) {
        let x = random_loop(rng, n, 4, 1.0, |k| k != 0);
        let u = random_loop(rng, n, 4, 1.0, |k| k != 0);
        let (xp, xm) = (x.add(&u.scaled(eps)), x.sub(&u.scaled(eps)));
        let an = ctx.dual_gradient(&x)?.gradient.h1_inner(&u);
        let fd = (ctx.dual_action(&xp)? - ctx.dual_action(&xm)?) / (2.0 * eps);
        g_err = g_err.max((an - fd).abs() / an.abs().max(1e-12));
        let hv = ctx.dual_hessian_apply(&x, &u)?;
        let fd_hv = ctx.dual_gradient(&xp)?.gradient.sub(&ctx.dual_gradient(&xm)?.gradient).scaled(0.5 / eps);
        hv_err = hv_err.max(hv.sub(&fd_hv).h1_norm() / hv.h1_norm().max(1e-12));
    }
    report.audit("dual gradient matches differences", g_err < 1e-6, format!("{g_err:.3e}"));
    report.audit("dual Hessian-vector products match differences", hv_err < 1e-5, format!("{hv_err:.3e}"));
    let w = rm.head_weights();
    let mut r_err: f64 = 0.0;
    for _ in 0..trials.clamp(1, 4) {
        let x = DVector::from_iterator(rm.head_dim(), w.iter().map(|wi| 0.5 * (2.0 * rng.random::<f64>() - 1.0) / wi.sqrt()));
        let g = rm.reduced_gradient(&x)?;
        let mut fd = DVector::zeros(rm.head_dim());
        for i in 0..rm.head_dim() {
            let s = eps / w[i].sqrt();
            let mut e = DVector::zeros(rm.head_dim());
            e[i] = s;
            fd[i] = (rm.reduced_value(&(&x + &e))? - rm.reduced_value(&(&x - &e))?) / (2.0 * s);
        }
        r_err = r_err.max((&g - fd).norm() / g.norm().max(1e-12));
    }
    report.audit("reduced gradient matches differences", r_err < 1e-6, format!("{r_err:.3e}"));
    Ok(json!({ "model": audit, "dual_gradient": g_err, "dual_hessian_vector": hv_err, "reduced_gradient": r_err }))
}

fn reduction(rm: &ReducedManifold, audit: &TruncationAudit, rng: &mut ChaCha8Rng, report: &mut Report) -> Result<serde_json::Value, CliError> {
    crate::commands::truncation_audit(report, rm, audit);
    let x = DVector::from_iterator(rm.head_dim(), rm.head_weights().iter().map(|wi| 0.3 * (2.0 * rng.random::<f64>() - 1.0) / wi.sqrt()));
    let graph = rm.graph_audit(&x, 0.1, rng.random())?;
    report.audit("tail minimizer independent of warm start", graph < 1e-8, format!("{graph:.3e}"));
    Ok(json!({ "tail_truncation": rm.m, "truncation": audit, "graph_distance": graph }))
}

fn indices(cfg: &RunConfig, rm: &ReducedManifold, report: &mut Report) -> Result<serde_json::Value, CliError> {
    let found = find_critical_points(rm, &cfg.search())?;
    let n = rm.n() as i64;
    let mut bad = Vec::new();
    for r in found.records.iter().filter(|r| !r.degenerate) {
        let dual = r.morse_index as i64 + n;
        if r.cz_index != Some(dual) || r.relative_index as i64 != dual || r.morse_index != r.full_index {
            bad.push(r.action);
        }
    }
    report.audit("CZ = relative index = dual index + n", bad.is_empty(), format!("{} orbits, mismatches at actions {bad:?}", found.records.len()));
    Ok(json!({ "orbits": found.records.len(), "mismatches": bad }))
}

pub fn run(cfg: &RunConfig) -> Result<Report, CliError> {
    let mut report = Report::new(cfg);
    let h = cfg.hamiltonian()?;
    let (rm, truncation) = cfg.reduction()?;
    let trials = cfg.verify.trials;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.numerics.seed);
    let suite = cfg.verify.suite;
    let wants = |s: Suite| suite == Suite::All || suite == s;
    let mut results = serde_json::Map::new();
    if wants(Suite::Conjugate) {
        let t = Instant::now();
        results.insert("conjugate".into(), conjugate(&h, trials, &mut rng, &mut report)?);
        report.record("conjugate", t);
    }
    if wants(Suite::Duality) {
        let t = Instant::now();
        results.insert("duality".into(), duality(&h, trials, &mut rng, &mut report)?);
        report.record("duality", t);
    }
    if wants(Suite::Derivatives) {
        let t = Instant::now();
        results.insert("derivatives".into(), derivatives(&h, &rm, trials, &mut rng, &mut report)?);
        report.record("derivatives", t);
    }
    if wants(Suite::Reduction) {
        let t = Instant::now();
        results.insert("reduction".into(), reduction(&rm, &truncation, &mut rng, &mut report)?);
        report.record("reduction", t);
    }
    if wants(Suite::Indices) {
        let t = Instant::now();
        results.insert("indices".into(), indices(cfg, &rm, &mut report)?);
        report.record("indices", t);
    }
    let passed = report.audits_passed();
    results.insert("passed".into(), json!(passed));
    report.results = serde_json::Value::Object(results);
    Ok(report)
}
