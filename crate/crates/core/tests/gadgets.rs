mod common;

use std::sync::Arc;

use common::*;
use num::{One, Signed, Zero};
use rand::Rng;
use spinobs::exact::{observable_expectation, Budget};
use spinobs::gadgets::*;
use spinobs::graph::{Multigraph, Subgraph};
use spinobs::model::{Model, Observable, Potts, TwoSpin, VertexEdge};
use spinobs::rational::{int, pow, ratio, to_f64, Rational};
use spinobs::Error;

fn potts32() -> Potts {
    Potts::new(3, int(2)).unwrap()
}

fn hard_core() -> TwoSpin {
    TwoSpin::hard_core(int(1))
}

fn mag() -> VertexEdge {
    VertexEdge::magnetization()
}

fn edge_gadget(text: &str, rules: &Rules) -> Gadget {
    Gadget::from_recipe(parse_recipe(text).unwrap(), rules, Budget::default()).unwrap()
}

#[test]
fn worked_edge_values() {
    let p = potts32();
    let rules = Rules::potts(&p).unwrap();
    let single = edge_gadget("edge", &rules);
    assert_eq!(single.stats.value, int(2));
    assert_eq!(single.stats.gap, int(1));
    let two = Multigraph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
    let s = edge_gadget_stats(&two, (0, 2), &p, Budget::default()).unwrap();
    assert_eq!(s.value, ratio(6, 5));
    assert_eq!(s.gap, ratio(8, 15));
    assert_eq!((s.value.clone(), s.gap.clone()), brute_edge(&two, &[0, 2], &p));
    let three = edge_gadget("path 3", &rules);
    assert_eq!(three.stats.value, ratio(22, 21));
    let via_compose = edge_gadget("composeE(edge)", &rules);
    assert_eq!(via_compose.stats, three.stats);
    let parallel = edge_gadget("composeE(edge, edge)", &rules);
    assert_eq!(parallel.stats.value, ratio(34, 31));
    assert!(!parallel.graph.is_simple());
}

#[test]
fn edge_ports_must_have_degree_one() {
    let p = potts32();
    let g = Multigraph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
    assert!(matches!(edge_gadget_stats(&g, (0, 2), &p, Budget::default()), Err(Error::Invalid(_))));
}

#[test]
fn compose_rejects_empty() {
    let rules = Rules::potts(&potts32()).unwrap();
    assert!(compose(&[], &rules, Budget::default()).is_err());
    assert!(parse_recipe("composeE()").is_err());
}

#[test]
fn worked_field_values() {
    let t = hard_core();
    let rules = Rules::twospin(&t, &mag()).unwrap();
    let deg = Gadget::from_recipe(Arc::new(Recipe::Degenerate), &rules, Budget::default()).unwrap();
    assert_eq!(deg.stats.value, int(1));
    assert_eq!(deg.stats.gap, int(0));
    let leaf = Gadget::from_recipe(parse_recipe("composeF(degenerate)").unwrap(), &rules, Budget::default()).unwrap();
    assert_eq!(leaf.stats.value, ratio(1, 2));
    assert_eq!(leaf.stats.gap, ratio(-1, 2));
    assert_eq!(rules.omega.eval(&ratio(1, 2)), ratio(1, 2));
    assert_eq!(rules.theta.eval(&ratio(1, 2)), ratio(-1, 2));
    let two = compose(&[leaf.clone(), leaf.clone()], &rules, Budget::default()).unwrap();
    assert_eq!(two.stats.value, ratio(4, 5));
    assert_eq!(two.stats.gap, int(0));
    assert_eq!(rules.theta.eval(&ratio(4, 5)), ratio(-1, 5));
    assert_eq!(rules.omega.eval(&ratio(4, 5)), ratio(1, 5));
    assert_eq!((two.stats.value.clone(), two.stats.gap.clone()), brute_field(&two.graph, 0, &t, &mag()));

    let ising = TwoSpin::ising(ratio(1, 3), int(1));
    let obs = VertexEdge::new(int(0), int(1), int(1));
    let r = Rules::twospin(&ising, &obs).unwrap();
    let e = Gadget::from_recipe(parse_recipe("composeF(degenerate)").unwrap(), &r, Budget::default()).unwrap();
    assert_eq!(e.stats.value, int(1));
    assert_eq!(e.stats.gap, int(0));

    let zero = VertexEdge::new(int(0), int(0), int(0));
    let rz = Rules::twospin(&t, &zero).unwrap();
    let g = Gadget::from_recipe(parse_recipe("a = composeF(degenerate)\ncomposeF(a, composeF(a))").unwrap(), &rz, Budget::default()).unwrap();
    assert_eq!(g.stats.gap, int(0));
}

#[test]
fn build_path_examples() {
    let p = potts32();
    let g = build_path(&ratio(1, 20), &p, Budget::default()).unwrap();
    assert_eq!(g.graph.m(), 3);
    assert_eq!(&g.stats.value - int(1), ratio(1, 21));
    assert_eq!(path_length_bound(&ratio(1, 20), &p).unwrap(), 5);
    let g = build_path(&ratio(2, 5), &p, Budget::default()).unwrap();
    assert_eq!(g.graph.m(), 3);
    assert!(matches!(build_path(&ratio(3, 5), &p, Budget::default()), Err(Error::Invalid(_))));
}

#[test]
fn path_decay_and_step_ratio() {
    let p = potts32();
    let c = potts_constants(&p).unwrap();
    assert_eq!(c.beta_hat, ratio(11, 10));
    assert_eq!(c.gamma_hat, ratio(6, 5));
    assert_eq!(c.lambda_hat, ratio(1, 2));
    assert_eq!(c.kappa, ratio(1, 16));
    let rules = Rules::potts(&p).unwrap();
    let vals = path_values(&rules, 13);
    let mut prev_ratio = Rational::zero();
    for l in 0..13 {
        let excess = &vals[l] - int(1);
        assert!(excess.is_positive());
        assert!(excess <= pow(&c.kappa, l as i64) * (&p.beta - int(1)));
        if l > 0 {
            let r = &excess / (&vals[l - 1] - int(1));
            assert_eq!(r, path_step_ratio(&c, &vals[l - 1]));
            assert!(r > prev_ratio && r < c.kappa);
            prev_ratio = r;
        }
    }
}

#[test]
fn ranges_of_composed_values() {
    let p = potts32();
    let rules = Rules::potts(&p).unwrap();
    let c = potts_constants(&p).unwrap();
    for cand in search_pool(&rules, &PoolConfig { max_vertices: 12, per_size: 30, max_children: 2 }) {
        if matches!(*cand.recipe, Recipe::Edge) {
            continue;
        }
        assert!(cand.value > int(1) && cand.value < c.gamma_hat);
        let w = rules.omega.eval(&cand.value);
        assert!(w > int(-1) && w < int(0));
    }
    let t = hard_core();
    let rules = Rules::twospin(&t, &mag()).unwrap();
    for cand in search_pool(&rules, &PoolConfig { max_vertices: 12, per_size: 30, max_children: 2 }) {
        if matches!(*cand.recipe, Recipe::Degenerate) {
            continue;
        }
        assert!(cand.value > t.gamma && &cand.value * &t.beta < int(1));
        let w = rules.omega.eval(&cand.value);
        assert!(w > int(0) && w < int(1));
    }
}

#[test]
fn random_compositions_match_brute_force() {
    let mut rng = rng(11);
    let potts = [potts32(), Potts::new(2, ratio(3, 2)).unwrap(), Potts::new(4, int(3)).unwrap()];
    let spins = [
        (hard_core(), mag()),
        (TwoSpin::new(ratio(1, 2), ratio(1, 3), ratio(3, 2)).unwrap(), VertexEdge::new(int(1), int(2), int(-1))),
        (TwoSpin::ising(ratio(1, 2), ratio(2, 3)), VertexEdge::new(int(0), int(1), int(1))),
    ];
    let mut checked = 0;
    for i in 0..120 {
        let p = &potts[i % 3];
        let rules = Rules::potts(p).unwrap();
        let r = random_recipe(&mut rng, Kind::Edge, 9);
        let g = Gadget::from_recipe(r, &rules, Budget::default()).unwrap();
        assert!(g.vertex_count() <= 12);
        assert_eq!((g.stats.value.clone(), g.stats.gap.clone()), brute_edge(&g.graph, &g.ports, p));
        let (t, o) = &spins[i % 3];
        let rules = Rules::twospin(t, o).unwrap();
        let r = random_recipe(&mut rng, Kind::Field, 12);
        let g = Gadget::from_recipe(r, &rules, Budget::default()).unwrap();
        assert_eq!((g.stats.value.clone(), g.stats.gap.clone()), brute_field(&g.graph, 0, t, o));
        checked += 2;
    }
    assert_eq!(checked, 240);
}

#[test]
fn equal_port_baseline_is_susceptibility_of_identified_graph() {
    let p = potts32();
    let rules = Rules::potts(&p).unwrap();
    for text in ["path 3", "composeE(edge, edge)", "composeE(path 3, edge)"] {
        let g = edge_gadget(text, &rules);
        let (a, b) = (g.ports[0], g.ports[1]);
        let mut merged = Multigraph::new(g.graph.n() - 1);
        let relabel = |v: usize| {
            let v = if v == b { a } else { v };
            if v > b {
                v - 1
            } else {
                v
            }
        };
        for &(u, v) in g.graph.edges() {
            merged.add_edge(relabel(u), relabel(v)).unwrap();
        }
        let s = observable_expectation(
            &merged,
            &Model::Potts(p.clone()),
            &Observable::Monochromatic,
            None,
            &[],
            Budget::default(),
        )
        .unwrap();
        assert_eq!(s, g.stats.baseline, "{text}");
    }
}

#[test]
fn special_activity_allows_four_cycles() {
    // lambda = (1 - beta)/(1 - gamma)
    let t = TwoSpin::new(ratio(1, 2), ratio(1, 4), ratio(2, 3)).unwrap();
    let o = VertexEdge::new(int(1), int(1), int(0));
    let rules = Rules::twospin(&t, &o).unwrap();
    let g = Gadget::from_recipe(parse_recipe("composeF(cycle4, degenerate)").unwrap(), &rules, Budget::default()).unwrap();
    assert_eq!((g.stats.value.clone(), g.stats.gap.clone()), brute_field(&g.graph, 0, &t, &o));
    let plain = Rules::twospin(&hard_core(), &mag()).unwrap();
    assert!(Gadget::from_recipe(parse_recipe("composeF(cycle4)").unwrap(), &plain, Budget::default()).is_err());
}

#[test]
fn library_mesh_and_build_gadget_convergence() {
    let t = hard_core();
    let rules = Rules::twospin(&t, &mag()).unwrap();
    let x = rules.fixpoint();
    // root of x^3 + x - 1
    assert!((x * x * x + x - 1.0).abs() < 1e-12);
    assert!((x - 0.68233).abs() < 1e-5);
    let lib = build_library(&rules, &ratio(1, 20), &ratio(1, 10), &LibraryConfig::default()).unwrap();
    assert!(lib.certificate.ok);
    assert!(lib.certificate.max_distance <= ratio(1, 200));
    let consts = recursion_constants(&lib).unwrap();
    assert!(consts.c_max < 1.0 && consts.c_min > 0.0);
    let deg = build_gadget(&lib.center, 0, &lib).unwrap();
    assert_eq!(deg.value, int(1));
    let mut prev = f64::INFINITY;
    for tt in 1..=8 {
        let rep = build_gadget(&lib.center, tt, &lib).unwrap();
        let err = to_f64(&rep.error);
        assert!(err <= rep.envelope(tt), "t={tt}: {err} > {}", rep.envelope(tt));
        assert!(to_f64(&rep.ratio) < 1.0);
        assert!(err <= prev + 1e-300);
        prev = err;
    }
    let outside = &consts.i_hi + ratio(1, 10);
    assert!(matches!(build_gadget(&outside, 3, &lib), Err(Error::Invalid(_))));
}

#[test]
fn built_gadget_matches_exact_evaluation() {
    let t = hard_core();
    let rules = Rules::twospin(&t, &mag()).unwrap();
    let lib = build_library(&rules, &ratio(1, 20), &ratio(1, 10), &LibraryConfig::default()).unwrap();
    let rep = build_gadget(&lib.center, 2, &lib).unwrap();
    let g = Gadget::from_recipe(rep.recipe.clone(), &rules, Budget::default()).unwrap();
    assert_eq!(g.stats.value, rep.value);
    assert_eq!(g.stats.gap, rep.gap);
}

#[test]
fn gap_confinement_under_composition() {
    let t = hard_core();
    let rules = Rules::twospin(&t, &mag()).unwrap();
    let lib = build_library(&rules, &ratio(1, 20), &ratio(1, 4), &LibraryConfig::default()).unwrap();
    let c = recursion_constants(&lib).unwrap();
    assert!(c.t_bound.is_finite());
    for m in &lib.members {
        assert!(to_f64(&m.stats.gap).abs() <= c.t_bound);
    }
    let mut rng = rng(5);
    for _ in 0..200 {
        let v = to_f64(&c.i2_lo) + rng.gen::<f64>() * (to_f64(&c.i2_hi) - to_f64(&c.i2_lo));
        let g = (2.0 * rng.gen::<f64>() - 1.0) * c.t_bound;
        let m = &lib.members[rng.gen_range(0..lib.members.len())];
        let v = spinobs::rational::from_f64(v).unwrap();
        let g = spinobs::rational::from_f64(g).unwrap();
        let out = rules.gap_map(&v, &g, &(m.stats.value.clone(), m.stats.gap.clone()));
        assert!(to_f64(&out).abs() <= c.t_bound * (1.0 + 1e-12));
    }
}

#[test]
fn potts_library_covers_right_of_one() {
    let p = potts32();
    let rules = Rules::potts(&p).unwrap();
    let lib = build_library(&rules, &ratio(1, 10), &ratio(1, 2), &LibraryConfig::default()).unwrap();
    assert!(lib.certificate.ok);
    for m in &lib.members {
        assert!(m.stats.value > int(1) && m.stats.value <= ratio(11, 10));
    }
    let vacuous = build_library(&rules, &ratio(1, 10), &int(1), &LibraryConfig::default()).unwrap();
    assert_eq!(vacuous.members.len(), 1);
}

#[test]
fn pair_search_potts() {
    let p = potts32();
    let rules = Rules::potts(&p).unwrap();
    let cfg = LibraryConfig {
        pool: PoolConfig { max_vertices: 14, per_size: 40, max_children: 2 },
        budget: Budget::default(),
    };
    let rep = search_gadget_pair(&rules, &ratio(1, 100), &ratio(1, 1000), None, &cfg).unwrap();
    assert!(rep.value_diff <= ratio(1, 50));
    assert!(rep.gap_diff >= ratio(1, 1000));
    let (b1, s1) = brute_edge(&rep.first.graph, &rep.first.ports, &p);
    assert_eq!(b1, rep.first.stats.value);
    assert_eq!(s1, rep.first.stats.gap);
    let huge = &rep.gap_ceiling * int(2) + int(1);
    assert!(matches!(search_gadget_pair(&rules, &ratio(1, 100), &huge, None, &cfg), Err(Error::Invalid(_))));
    assert!(search_gadget_pair(&rules, &int(0), &ratio(1, 1000), None, &cfg).is_err());
    assert!(search_gadget_pair(&rules, &ratio(1, 2), &ratio(1, 1000), None, &cfg).is_err());
}

#[test]
fn recipe_text_round_trip() {
    let r = parse_recipe("# comment\na = path 3\nb = composeE(a, edge)\ncomposeE(b, a)").unwrap();
    let again = parse_recipe(&r.to_string()).unwrap();
    assert_eq!(r.to_string(), again.to_string());
    match parse_recipe("a = edge\ncomposeE(a, bogus)") {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
        other => panic!("unexpected {other:?}"),
    }
    assert!(parse_recipe("path 4").is_err());
    let _ = Subgraph::empty(&Multigraph::new(1));
    let _ = Rational::one();
}

