use spinobs::criticality::*;
use spinobs::rational::{int, ratio};
use spinobs::Error;

#[test]
fn potts_critical_value_q3_delta3() {
    let expected = 1.0 / (2f64.cbrt() - 1.0);
    let got = potts_critical_beta(3, 3).unwrap();
    assert!((got - expected).abs() <= 1e-12, "{got} vs {expected}");
    assert!((got - 3.847).abs() < 1e-3);
}

#[test]
fn port_bias_is_exact_two_thirds() {
    let pb = potts_port_bias(3, 3, &int(4)).unwrap();
    assert_eq!(pb.exact_x, Some(int(4)));
    assert_eq!(pb.exact_p, Some(ratio(2, 3)));
    assert_eq!(pb.p, 2.0 / 3.0);
}

#[test]
fn subcritical_potts_is_rejected() {
    assert!(matches!(potts_port_bias(3, 3, &int(3)), Err(Error::Subcritical(_))));
}

/// Independent check: scan the polynomial form of the fixed-point equation.
#[test]
fn port_bias_is_the_largest_root() {
    for &(q, d, b) in &[(3u32, 3u32, 5.0f64), (4, 3, 7.5), (3, 4, 4.0), (5, 5, 6.0)] {
        let pb = potts_port_bias(q, d, &spinobs::rational::from_f64(b).unwrap()).unwrap();
        let poly = |x: f64| ((b * x + q as f64 - 1.0) / (x + b + q as f64 - 2.0)).powi(d as i32 - 1) - x;
        assert!(poly(pb.x).abs() < 1e-9 * pb.x, "residual at {}", pb.x);
        let mut x = pb.x * 1.0001;
        while x < 4.0 * b.powi(d as i32 - 1) {
            assert!(poly(x) < 0.0, "larger root near {x}");
            x *= 1.001;
        }
    }
}

#[test]
fn hard_core_threshold_matches_closed_form() {
    for delta in 3..=8 {
        let crossings = critical_activities(1.0, 0.0, delta).unwrap();
        assert_eq!(crossings.len(), 1, "delta {delta}: {crossings:?}");
        let lc = hard_core_critical_activity(delta);
        assert!((crossings[0] - lc).abs() <= 1e-9 * lc.max(1.0), "{} vs {lc}", crossings[0]);
        assert!(twospin_uniqueness(1.0, 0.0, lc * 1.001, delta).unwrap().in_nonuniqueness());
        assert_eq!(twospin_uniqueness(1.0, 0.0, lc * 0.999, delta).unwrap().region, Region::Uniqueness);
    }
    assert!(twospin_uniqueness(1.0, 0.0, 1.0, 6).unwrap().in_nonuniqueness());
    assert!(!twospin_uniqueness(1.0, 0.0, 1.0, 5).unwrap().in_nonuniqueness());
}

#[test]
fn constant_recursion_has_zero_derivative() {
    let u = twospin_uniqueness(1.0, 1.0, 2.5, 4).unwrap();
    assert_eq!(u.derivative, 0.0);
    assert_eq!(u.region, Region::Uniqueness);
    assert!(twospin_uniqueness(2.0, 1.0, 1.0, 3).is_err());
}

#[test]
fn two_cycle_solves_both_equations() {
    for &(b, g, l, d) in &[(1.0, 0.0, 1.0, 6u32), (0.1, 0.1, 1.0, 3), (0.2, 0.5, 1.3, 4), (1.0, 0.0, 2.0, 3)] {
        let u = twospin_uniqueness(b, g, l, d).unwrap();
        if !u.in_nonuniqueness() {
            assert!(matches!(twospin_branch_marginals(b, g, l, d), Err(Error::Degenerate(_))));
            continue;
        }
        let tc = twospin_branch_marginals(b, g, l, d).unwrap();
        let f = |x: f64| (1.0 / l) * ((b * x + 1.0) / (x + g)).powi(d as i32 - 1);
        assert!(tc.y > tc.x);
        assert!((f(tc.x) - tc.y).abs() <= 1e-10 * tc.y);
        assert!((f(tc.y) - tc.x).abs() <= 1e-10 * tc.x.max(1e-300));
        assert!((tc.q_plus - 1.0 / (1.0 + tc.x)).abs() < 1e-12);
    }
}

#[test]
fn symmetric_ising_cycle_is_reciprocal() {
    let tc = twospin_branch_marginals(0.1, 0.1, 1.0, 3).unwrap();
    assert!((tc.x * tc.y - 1.0).abs() < 1e-9);
    assert!((tc.q_plus + tc.q_minus - 1.0).abs() < 1e-9);
}

#[test]
fn uniqueness_region_has_no_cycle() {
    assert!(matches!(twospin_branch_marginals(1.0, 0.0, 0.5, 3), Err(Error::Degenerate(_))));
}
