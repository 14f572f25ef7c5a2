use num::{One, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spinobs::exact::Budget;
use spinobs::model::{Model, Potts, TwoSpin};
use spinobs::phase::*;
use spinobs::rational::{int, ratio, Rational};
use spinobs::Error;

#[test]
fn sampled_gadgets_pass_audits() {
    let g = sample_phase_gadget(4, 2, 3, 7, 10_000).unwrap();
    for side in 0..2 {
        let mut degs: Vec<usize> = (side * 6..side * 6 + 6).map(|v| g.graph.degree(v)).collect();
        degs.sort_unstable();
        assert_eq!(degs, vec![2, 2, 3, 3, 3, 3]);
    }
    assert!(g.graph.bipartition().is_some());
    assert!(g.graph.is_simple());
    let again = sample_phase_gadget(4, 2, 3, 7, 10_000).unwrap();
    assert_eq!(g.graph.edges(), again.graph.edges());
    for seed in 0..20 {
        sample_phase_gadget(6, 3, 4, seed, 100_000).unwrap().audit().unwrap();
    }
}

#[test]
fn infeasible_degrees_are_rejected() {
    assert!(matches!(sample_phase_gadget(1, 0, 3, 1, 100), Err(Error::Invalid(_))));
    assert!(!bipartite_degrees_feasible(&[3], &[3]));
    assert!(bipartite_degrees_feasible(&[3, 3, 3], &[3, 3, 3]));
    assert!(bipartite_degrees_feasible(&[3, 3, 2], &[3, 3, 2]));
    assert!(!bipartite_degrees_feasible(&[2, 2], &[3, 1]));
    assert!(!bipartite_degrees_feasible(&[4, 0], &[2, 2]));
}

#[test]
fn phase_labels() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    assert_eq!(argmax_phase(&[5, 2, 1], &mut rng), 0);
    let mut seen = [0; 3];
    for _ in 0..200 {
        seen[argmax_phase(&[3, 3, 0], &mut rng)] += 1;
    }
    assert!(seen[0] > 0 && seen[1] > 0 && seen[2] == 0);
    let g = sample_phase_gadget(6, 1, 3, 2, 10_000).unwrap();
    let m = Model::TwoSpin(TwoSpin::hard_core(int(6)));
    let mut sigma = vec![0u32; g.graph.n()];
    for v in g.interior(0).take(4) {
        sigma[v] = 1;
    }
    for v in g.interior(1).take(2) {
        sigma[v] = 1;
    }
    assert_eq!(phase_of(&g, &m, &sigma, &mut rng), 0);
}

#[test]
fn ideal_port_laws() {
    let m = Model::Potts(Potts::new(3, int(4)).unwrap());
    let law = phase_law(&m, 3).unwrap();
    assert_eq!(law, PhaseLaw::Potts { q: 3, p: ratio(2, 3), exact: true });
    let pl = law.port_law(0, 2, 0).unwrap();
    assert_eq!(pl.marginals[0], vec![ratio(2, 3), ratio(1, 6), ratio(1, 6)]);
    let mut total = Rational::zero();
    for a in 0..3 {
        for b in 0..3 {
            total += pl.prob(&[a, b]);
        }
    }
    assert_eq!(total, Rational::one());
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 100_000;
    let mut hits = 0;
    for _ in 0..n {
        if pl.sample(&mut rng)[0] == 0 {
            hits += 1;
        }
    }
    let p = 2.0 / 3.0;
    let sd = (p * (1.0 - p) / n as f64).sqrt();
    assert!((hits as f64 / n as f64 - p).abs() <= 3.0 * sd);
    let bad = PhaseLaw::Potts { q: 3, p: ratio(1, 4), exact: true };
    assert!(bad.port_law(0, 1, 0).is_err());
    let two = PhaseLaw::TwoSpin { q_plus: ratio(7, 10), q_minus: ratio(3, 10), exact: true };
    let l = two.port_law(1, 1, 1).unwrap();
    assert_eq!(l.marginals[0], vec![ratio(7, 10), ratio(3, 10)]);
    assert_eq!(l.marginals[1], vec![ratio(3, 10), ratio(7, 10)]);
}

#[test]
fn exact_assessment_of_a_tiny_potts_gadget() {
    let g = sample_phase_gadget(2, 1, 3, 11, 100_000).unwrap();
    let m = Model::Potts(Potts::new(3, int(5)).unwrap());
    let law = phase_law(&m, 3).unwrap();
    let a = assess_phase_gadget(&g, &m, &law, AssessMode::Exact(Budget::default())).unwrap();
    assert_eq!(a.exact_balance, Some(Rational::zero()));
    assert!(a.port >= 0.0 && a.port.is_finite());
    let b = assess_phase_gadget(&g, &m, &law, AssessMode::Exact(Budget::default())).unwrap();
    assert_eq!(a.port, b.port);
    for row in &a.port_probs {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn monte_carlo_assessment_tracks_exact() {
    let g = sample_phase_gadget(2, 1, 3, 11, 100_000).unwrap();
    let m = Model::Potts(Potts::new(3, int(4)).unwrap());
    let law = phase_law(&m, 3).unwrap();
    let exact = assess_phase_gadget(&g, &m, &law, AssessMode::Exact(Budget::default())).unwrap();
    assert!(exact.exact_port.is_some());
    let mc = assess_phase_gadget(
        &g,
        &m,
        &law,
        AssessMode::Mc { samples: 400_000, burn_in: 1000, seed: 3, chains: 8 },
    )
    .unwrap();
    let bse = mc.balance_se.unwrap();
    let pse = mc.port_se.unwrap();
    assert!((mc.balance - exact.balance).abs() <= 3.0 * bse, "{} vs {} (se {bse})", mc.balance, exact.balance);
    assert!((mc.port - exact.port).abs() <= 3.0 * pse, "{} vs {} (se {pse})", mc.port, exact.port);
    assert!(assess_phase_gadget(&g, &m, &law, AssessMode::Mc { samples: 0, burn_in: 0, seed: 1, chains: 1 }).is_err());
}

#[test]
fn monte_carlo_errors_shrink_with_samples() {
    let g = sample_phase_gadget(2, 1, 3, 11, 100_000).unwrap();
    let m = Model::Potts(Potts::new(3, int(4)).unwrap());
    let law = phase_law(&m, 3).unwrap();
    let se = |n| {
        assess_phase_gadget(&g, &m, &law, AssessMode::Mc { samples: n, burn_in: 1000, seed: 8, chains: 1 })
            .unwrap()
            .balance_se
            .unwrap()
    };
    let r = se(160_000) / se(40_000);
    assert!((r - 0.5).abs() <= 0.1, "ratio {r}");
}

#[test]
fn two_spin_assessment_runs_exactly() {
    let g = sample_phase_gadget(2, 1, 3, 5, 100_000).unwrap();
    let m = Model::TwoSpin(TwoSpin::hard_core(int(6)));
    let law = phase_law(&m, 3).unwrap();
    let a = assess_phase_gadget(&g, &m, &law, AssessMode::Exact(Budget::default())).unwrap();
    assert!((a.phase_probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(a.exact_port.is_none());
    let sub = Model::TwoSpin(TwoSpin::hard_core(int(1)));
    assert!(matches!(phase_law(&sub, 3), Err(Error::Degenerate(_))));
}
