mod common;

use common::{reference, solved};
use proptest::prelude::*;
use seqtrack_core::boundary::{h1, h2};
use seqtrack_core::{
    solve_phi, FitTolerances, ModelParams, PhiOptions, Regime, RootOptions, ValueFunction,
};

#[test]
fn fit_difference_has_a_single_sign_change() {
    let p = reference();
    let phi = solve_phi(&p, &PhiOptions::default()).unwrap();
    let lo = p.gamma() + 1e-6;
    let hi = (1.0 - phi.epsilon()).min(-phi.coverage().0);
    let n = 5000;
    let mut changes = 0;
    let mut prev = None;
    for i in 0..=n {
        let x = lo + (hi - lo) * i as f64 / n as f64;
        let d = h1(&p, &phi, x).unwrap() - h2(&p, &phi, x).unwrap();
        if let Some(q) = prev {
            if (q < 0.0) != (d < 0.0) {
                changes += 1;
            }
        }
        prev = Some(d);
    }
    assert_eq!(changes, 1);
}

#[test]
fn switching_gap_decreases_between_the_thresholds() {
    let vf = solved(reference());
    let (_, b) = vf.free_boundary().pair().unwrap();
    let g = |x: f64| vf.value_at(x, 1).unwrap() - vf.value_at(-x, 1).unwrap();
    let n = 400;
    let mut last = f64::INFINITY;
    for i in 1..n {
        let x = -b + 2.0 * b * i as f64 / n as f64;
        let v = g(x);
        assert!(v < last, "g not decreasing at {x}");
        last = v;
    }
    // g'(±B) = V'(±B) + V'(∓B), the smooth-fit quantity.
    let slope =
        |x: f64| vf.value_derivatives(x, 1).unwrap().1 + vf.value_derivatives(-x, 1).unwrap().1;
    assert!(slope(b).abs() < 1e-8 && slope(-b).abs() < 1e-8);
    assert!(slope(0.0) < 0.0);
}

#[test]
fn value_sits_below_the_never_switch_cost() {
    let p = reference();
    let vf = solved(p);
    let mut strictly_below = 0;
    for i in 0..=200 {
        let x = -0.999 + 1.998 * i as f64 / 200.0;
        let v = vf.value_at(x, 1).unwrap();
        let t = p.v_tilde(x).unwrap();
        assert!(v <= t + 1e-12, "x = {x}");
        if v < t {
            strictly_below += 1;
        }
    }
    assert_eq!(strictly_below, 201);
}

#[test]
fn renormalising_phi_halves_k_and_keeps_b() {
    let p = reference();
    let one = solved(p);
    let phi2 = solve_phi(
        &p,
        &PhiOptions {
            normalization: 2.0,
            ..PhiOptions::default()
        },
    )
    .unwrap();
    let two = ValueFunction::solve(p, phi2, &RootOptions::default()).unwrap();
    let (k1, b1) = one.free_boundary().pair().unwrap();
    let (k2, b2) = two.free_boundary().pair().unwrap();
    assert!((b1 - b2).abs() < 1e-9);
    assert!((k2 / k1 - 0.5).abs() < 1e-9);
    assert!((one.value_at(0.1, 1).unwrap() - two.value_at(0.1, 1).unwrap()).abs() < 1e-9);
}

#[test]
fn threshold_exactly_at_beta_does_not_switch() {
    let p = reference();
    let at = p.with_c1(p.beta()).unwrap();
    assert_eq!(at.regime(), Regime::NeverSwitch);
    assert_eq!(solved(at).free_boundary().regime, Regime::NeverSwitch);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn switching_solutions_verify(
        lambda in 0.1f64..1.0,
        mu in 0.6f64..2.0,
        alpha in 0.1f64..1.0,
        frac in 0.05f64..0.8,
        c2 in 0.0f64..0.5,
    ) {
        let beta = 1.0 / (2.0 * lambda + alpha);
        let c1 = frac * beta;
        prop_assume!(c1 + 0.5 * c2 < (beta + 0.5 * c2) * 0.95);
        let p = ModelParams::new(lambda, mu, alpha, c1, c2).unwrap();
        let vf = solved(p);
        let (k, b) = vf.free_boundary().pair().unwrap();
        prop_assert!(k > 0.0);
        prop_assert!(b > p.gamma() && b < 1.0);
        let rep = vf.verify_fit(&FitTolerances { grid_points: 200, ..FitTolerances::default() }).unwrap();
        prop_assert!(rep.continuous_fit_pass && rep.smooth_fit_pass, "{:?}", rep);
        prop_assert!(rep.stopping_excess_min > 0.0, "{:?}", rep);
    }
}
