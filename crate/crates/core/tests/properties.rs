//! Invariants checked on randomly generated inputs.

use std::f64::consts::PI;

use clarke_core::action_functionals::ActionContext;
use clarke_core::convex_model::{ellipsoid_gauge, profile_hamiltonian, HamiltonianModel, ProfileKind, QuadraticHamiltonian};
use clarke_core::loop_fourier::{FourierLoop, NodeGrid};
use clarke_core::morse_complex::{rank_mod2, VanishingConfig};
use clarke_core::reduction::ReducedManifold;
use clarke_core::spectral_index::{conley_zehnder, SymplecticPath};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn models() -> Vec<HamiltonianModel> {
    vec![
        HamiltonianModel::new(QuadraticHamiltonian::scalar(1, 4.0)).unwrap(),
        profile_hamiltonian(&ellipsoid_gauge(&[1.0, 2.0]).unwrap(), ProfileKind::PHomogeneous { t: 2.0, p: 3.0 }).unwrap(),
        profile_hamiltonian(&ellipsoid_gauge(&[1.0]).unwrap(), ProfileKind::PHomogeneous { t: PI, p: 1.5 }).unwrap(),
        VanishingConfig::default().hamiltonian().unwrap(),
    ]
}

/// A loop with `n` planes and cutoff `m` filled from `raw`, with the
/// selected parts zeroed.
fn fill(n: usize, m: usize, raw: &[f64], keep: impl Fn(i64) -> bool) -> FourierLoop {
    let mut x = FourierLoop::zeros(n, m);
    let mut it = raw.iter().cycle();
    for k in x.modes().collect::<Vec<_>>() {
        let s = 1.0 / (1.0 + k.abs() as f64);
        let on = keep(k);
        for v in x.coeff_mut(k) {
            let r = *it.next().unwrap();
            *v = if on { s * r } else { 0.0 };
        }
    }
    x
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn fenchel_reciprocity(which in 0usize..4, t in 0.0f64..1.0, w in prop::collection::vec(-3.0f64..3.0, 4)) {
        let h = &models()[which];
        let d = 2 * h.n();
        let w = &w[..d];
        let c = h.conjugate(t, w, None).unwrap();
        let g = h.grad(t, c.argmax.as_slice());
        for i in 0..d {
            prop_assert!((g[i] - w[i]).abs() < 1e-8 * (1.0 + w[i].abs()));
        }
        let young = w.iter().zip(c.argmax.iter()).map(|(a, b)| a * b).sum::<f64>() - h.eval(t, c.argmax.as_slice());
        prop_assert!((c.value - young).abs() < 1e-10 * (1.0 + young.abs()));
        let prod = &c.hessian * h.hess(t, c.argmax.as_slice());
        prop_assert!((prod - DMatrix::identity(d, d)).amax() < 1e-8);
    }

    #[test]
    fn fenchel_young_inequality(which in 0usize..4, t in 0.0f64..1.0, w in prop::collection::vec(-3.0f64..3.0, 4), y in prop::collection::vec(-2.0f64..2.0, 4)) {
        let h = &models()[which];
        let d = 2 * h.n();
        let c = h.conjugate(t, &w[..d], None).unwrap();
        let wy: f64 = w[..d].iter().zip(&y[..d]).map(|(a, b)| a * b).sum();
        prop_assert!(h.eval(t, &y[..d]) + c.value >= wy - 1e-10 * (1.0 + wy.abs()));
    }

    #[test]
    fn parseval_and_grid_round_trip(raw in prop::collection::vec(-1.0f64..1.0, 36)) {
        let x = fill(1, 8, &raw, |_| true);
        let grid = NodeGrid::new(64);
        let vals = grid.values(&x);
        let back = grid.coefficients(&vals, 1, 8);
        prop_assert!(back.sub(&x).l2_norm_sq().sqrt() < 1e-12);
        let l2 = grid.l2_norm(&vals);
        prop_assert!((l2 * l2 - x.l2_norm_sq()).abs() < 1e-12 * (1.0 + x.l2_norm_sq()));
    }

    #[test]
    fn duality_gap_nonnegative(which in 0usize..4, raw in prop::collection::vec(-1.0f64..1.0, 52), scale in 0.01f64..1.5) {
        let h = models()[which].clone();
        let n = h.n();
        let ctx = ActionContext::new(h, 32);
        let x = fill(n, 6, &raw, |k| k != 0).scaled(scale);
        let y = fill(n, 6, &raw[7..], |k| k <= 0).scaled(scale);
        prop_assert!(ctx.duality_gap(&x, &y).unwrap() >= -1e-9);
    }

    /// Quadratic models integrate exactly on the grid, so shifting the loop
    /// relative to the nodes leaves the discrete value unchanged.
    #[test]
    fn dual_action_is_time_shift_invariant(anisotropic in any::<bool>(), raw in prop::collection::vec(-1.0f64..1.0, 40), theta in 0.0f64..1.0) {
        let h = if anisotropic {
            profile_hamiltonian(&ellipsoid_gauge(&[1.0, 2.0]).unwrap(), ProfileKind::PHomogeneous { t: 3.0, p: 2.0 }).unwrap()
        } else {
            models()[0].clone()
        };
        let n = h.n();
        let ctx = ActionContext::new(h, 32);
        let x = fill(n, 5, &raw, |k| k != 0);
        let a = ctx.dual_action(&x).unwrap();
        let b = ctx.dual_action(&x.shift_time(theta)).unwrap();
        prop_assert!((a - b).abs() < 1e-11 * (1.0 + a.abs()), "{a} {b}");
    }

    #[test]
    fn dual_gradient_matches_differences(which in 0usize..4, raw in prop::collection::vec(-1.0f64..1.0, 36), dir in prop::collection::vec(-1.0f64..1.0, 36)) {
        let h = models()[which].clone();
        let n = h.n();
        let ctx = ActionContext::new(h, 32);
        let x = fill(n, 4, &raw, |k| k != 0);
        let u = fill(n, 4, &dir, |k| k != 0);
        let eps = 1e-5;
        let g = ctx.dual_gradient(&x).unwrap().gradient;
        let fd = (ctx.dual_action(&x.add(&u.scaled(eps))).unwrap() - ctx.dual_action(&x.sub(&u.scaled(eps))).unwrap()) / (2.0 * eps);
        let an = g.h1_inner(&u);
        prop_assert!((an - fd).abs() < 1e-6 * (1.0 + an.abs()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, ..ProptestConfig::default() })]

    /// The reduced value is the minimum of the dual functional over the tail.
    #[test]
    fn reduced_value_minimizes_over_tail(raw in prop::collection::vec(-1.0f64..1.0, 64), scale in 0.0f64..0.3) {
        let h = VanishingConfig::default().hamiltonian().unwrap();
        let rm = ReducedManifold::new(h, 8, 32).unwrap();
        let w = rm.head_weights();
        let x = DVector::from_iterator(rm.head_dim(), (0..rm.head_dim()).map(|i| raw[i] / w[i].sqrt()));
        let psi = rm.reduced_value(&x).unwrap();
        let tw = rm.tail.h1_weights();
        let y = DVector::from_iterator(rm.tail.dim(), (0..rm.tail.dim()).map(|i| scale * raw[(i + 3) % raw.len()] / tw[i].sqrt()));
        let mut full = rm.head_loop(&x);
        rm.tail.add_into(&y, &mut full);
        let other = rm.ctx.dual_action(&full).unwrap();
        prop_assert!(other >= psi - 1e-10);
    }

    /// Conley-Zehnder indices add over symplectic direct sums.
    #[test]
    fn conley_zehnder_is_additive(a in 0.3f64..20.0, b in 0.3f64..20.0) {
        let off = |e: f64| (e / (2.0 * PI) - (e / (2.0 * PI)).round()).abs() > 0.02;
        prop_assume!(off(a) && off(b));
        let one = |e: f64| conley_zehnder(&SymplecticPath::integrate(1, 2048, move |_| DMatrix::identity(2, 2) * e)).unwrap();
        let both = SymplecticPath::integrate(2, 2048, move |_| {
            DMatrix::from_diagonal(&DVector::from_vec(vec![a, a, b, b]))
        });
        prop_assert_eq!(conley_zehnder(&both).unwrap(), one(a) + one(b));
        prop_assert_eq!(one(a), 1 + 2 * (a / (2.0 * PI)).floor() as i64);
    }

    /// Rank over Z/2 is invariant under transposition.
    #[test]
    fn rank_mod2_transpose(bits in prop::collection::vec(0u8..2, 30)) {
        let m = DMatrix::from_vec(5, 6, bits);
        prop_assert_eq!(rank_mod2(&m), rank_mod2(&m.transpose()));
    }
}
