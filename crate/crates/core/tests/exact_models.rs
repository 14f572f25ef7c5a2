mod common;

use common::*;
use num::{One, Zero};
use proptest::prelude::*;
use rand::Rng;
use spinobs::exact::{gibbs_probability, observable_expectation, partition_function, Budget, Method, Query};
use spinobs::graph::{Multigraph, Subgraph};
use spinobs::model::{Model, Observable, Pin, Potts, TwoSpin, VertexEdge};
use spinobs::rational::{int, ratio, Rational};
use spinobs::Error;

fn potts(q: u32, beta: Rational) -> Model {
    Model::Potts(Potts::new(q, beta).unwrap())
}

#[test]
fn single_edge_potts_values() {
    let g = k2();
    let m = potts(3, int(2));
    let b = Budget::default();
    assert_eq!(partition_function(&g, &m, &[], b).unwrap(), int(12));
    assert_eq!(
        observable_expectation(&g, &m, &Observable::Monochromatic, None, &[], b).unwrap(),
        ratio(1, 2)
    );
    assert_eq!(gibbs_probability(&g, &m, &[Pin::Equal(0, 1)], b).unwrap(), ratio(1, 2));
}

#[test]
fn single_edge_hard_core_values() {
    let g = k2();
    let m = Model::TwoSpin(TwoSpin::hard_core(int(1)));
    let b = Budget::default();
    assert_eq!(partition_function(&g, &m, &[], b).unwrap(), int(3));
    let mag = Observable::VertexEdge(VertexEdge::magnetization());
    assert_eq!(observable_expectation(&g, &m, &mag, None, &[], b).unwrap(), ratio(2, 3));
}

#[test]
fn engines_agree_with_brute_force_on_cycles() {
    let g = cycle(5);
    for model in [potts(3, ratio(5, 2)), Model::TwoSpin(TwoSpin::new(ratio(1, 3), ratio(2, 1), ratio(3, 4)).unwrap())] {
        let (z, _) = brute_force(&g, &model, &[], |_| int(0));
        for method in [Method::Enumerate, Method::Eliminate, Method::Auto] {
            let got = Query::new(&g, &model).method(method).run().unwrap();
            assert_eq!(got.z, z, "{method:?}");
        }
    }
}

#[test]
fn budget_is_enforced() {
    let g = cycle(10);
    let m = potts(3, int(2));
    let err = Query::new(&g, &m)
        .method(Method::Enumerate)
        .budget(Budget { max_configs: 1000 })
        .run()
        .unwrap_err();
    assert!(matches!(err, Error::Budget { .. }));
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn series_parallel_fast_path_exceeds_enumeration_budget() {
    let g = path(60);
    let m = potts(3, int(2));
    let z = Query::new(&g, &m).budget(Budget { max_configs: 1000 }).run().unwrap().z;
    // Path: Z = q (beta + q - 1)^edges.
    assert_eq!(z, int(3) * num::pow(int(4), 60));
}

#[test]
fn zero_weight_pins_are_reported() {
    let g = k2();
    let m = Model::TwoSpin(TwoSpin::hard_core(int(1)));
    let err = observable_expectation(
        &g,
        &m,
        &Observable::VertexEdge(VertexEdge::magnetization()),
        None,
        &[Pin::Spin(0, 1), Pin::Spin(1, 1)],
        Budget::default(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::ZeroWeight));
}

#[test]
fn per_edge_and_per_vertex_activities() {
    let mut g = path(3);
    g.set_edge_activity(1, Some(ratio(7, 3)));
    let m = potts(3, int(2));
    let (z, o) = brute_force(&g, &m, &[], |s| count_mono(&g, s));
    let got = Query::new(&g, &m)
        .observable(&Observable::Monochromatic, &Subgraph::whole(&g))
        .method(Method::Enumerate)
        .run()
        .unwrap();
    assert_eq!((got.z, got.o), (z, o));

    let mut h = cycle(4);
    h.set_vertex_activity(2, Some(ratio(5, 2)));
    let t = Model::TwoSpin(TwoSpin::new(ratio(1, 2), ratio(1, 3), int(1)).unwrap());
    let (z, _) = brute_force(&h, &t, &[], |_| int(0));
    assert_eq!(partition_function(&h, &t, &[], Budget::default()).unwrap(), z);
}

#[test]
fn mismatched_activity_kind_rejected() {
    let mut g = k2();
    g.set_vertex_activity(0, Some(int(2)));
    assert!(partition_function(&g, &potts(3, int(2)), &[], Budget::default()).is_err());
}

fn pin_strategy(n: usize, d: u32) -> impl Strategy<Value = Vec<Pin>> {
    let one = (0..3u8, 0..n, 0..n, 0..d).prop_map(|(kind, u, v, s)| match kind {
        0 => Pin::Spin(u, s),
        1 => Pin::Equal(u, v),
        _ => Pin::Distinct(u, v),
    });
    prop::collection::vec(one, 0..3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn enumeration_elimination_and_brute_force_agree(
        seed in any::<u64>(),
        n in 2usize..7,
        extra in 0usize..5,
        pins in pin_strategy(6, 2),
        potts_model in any::<bool>(),
    ) {
        let mut r = rng(seed);
        let g = random_connected(&mut r, n, extra);
        let pins: Vec<Pin> = pins.into_iter().filter(|p| match *p {
            Pin::Spin(v, _) => v < n,
            Pin::Equal(u, v) | Pin::Distinct(u, v) => u < n && v < n,
        }).collect();
        let (model, obs) = if potts_model {
            (potts(3, ratio(r.gen_range(1..9), r.gen_range(1..4))), Observable::Monochromatic)
        } else {
            let t = TwoSpin::new(ratio(r.gen_range(0..5), 3), ratio(r.gen_range(1..5), 2), ratio(r.gen_range(1..6), 2)).unwrap();
            (Model::TwoSpin(t), Observable::VertexEdge(VertexEdge::new(int(1), ratio(-1, 2), int(2))))
        };
        let sub = Subgraph::from_edges(&g, &(0..g.m()).filter(|e| e % 2 == 0).collect::<Vec<_>>());
        let oracle = brute_force(&g, &model, &pins, |s| spinobs::model::observable_value(&g, &obs, &sub, s));
        for method in [Method::Enumerate, Method::Eliminate] {
            let got = Query::new(&g, &model).observable(&obs, &sub).pins(&pins).method(method).run().unwrap();
            prop_assert_eq!(&got.z, &oracle.0);
            prop_assert_eq!(&got.o, &oracle.1);
        }
    }

    #[test]
    fn potts_colour_symmetry(seed in any::<u64>(), n in 2usize..6, extra in 0usize..4) {
        let mut r = rng(seed);
        let g = random_connected(&mut r, n, extra);
        let m = potts(3, ratio(r.gen_range(2..7), 2));
        let z0 = partition_function(&g, &m, &[Pin::Spin(0, 0)], Budget::default()).unwrap();
        for c in 1..3 {
            prop_assert_eq!(&partition_function(&g, &m, &[Pin::Spin(0, c)], Budget::default()).unwrap(), &z0);
        }
    }

    #[test]
    fn probabilities_normalise(seed in any::<u64>(), n in 1usize..6) {
        let mut r = rng(seed);
        let g = random_connected(&mut r, n, 2);
        let m = Model::TwoSpin(TwoSpin::new(ratio(1, 2), ratio(r.gen_range(0..3), 1), ratio(3, 2)).unwrap());
        let mut total = Rational::zero();
        for s in 0..2 {
            total += gibbs_probability(&g, &m, &[Pin::Spin(0, s)], Budget::default()).unwrap();
        }
        prop_assert!(total.is_one());
    }

    #[test]
    fn expectation_is_sum_of_edge_marginals(seed in any::<u64>(), n in 2usize..6) {
        let mut r = rng(seed);
        let g = random_connected(&mut r, n, 2);
        let m = potts(3, ratio(r.gen_range(2..9), 3));
        let b = Budget::default();
        let whole = observable_expectation(&g, &m, &Observable::Monochromatic, None, &[], b).unwrap();
        let mut sum = Rational::zero();
        for e in 0..g.m() {
            let (u, v) = g.edge(e);
            sum += gibbs_probability(&g, &m, &[Pin::Equal(u, v)], b).unwrap();
        }
        prop_assert_eq!(whole, sum);
    }
}

#[test]
fn graph_file_round_trip_and_errors() {
    let g = Multigraph::parse("3 3\n0 1\n1 2 3/2\n0 2 0.5\n").unwrap();
    assert_eq!(g.edge_activity(2), Some(&ratio(1, 2)));
    assert_eq!(Multigraph::parse(&g.to_text()).unwrap(), g);
    let err = Multigraph::parse("2 1\n0 1 2//3\n").unwrap_err();
    assert!(err.to_string().contains("line 2"), "{err}");
    assert_eq!(err.exit_code(), 2);
}
