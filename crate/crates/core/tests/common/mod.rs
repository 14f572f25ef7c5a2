#![allow(dead_code)]

use std::sync::Arc;

use num::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spinobs::exact::{observable_expectation, Budget};
use spinobs::gadgets::{Kind, Recipe};
use spinobs::graph::{Multigraph, Subgraph};
use spinobs::model::{Model, Observable, Pin, Potts, TwoSpin, VertexEdge};
use spinobs::rational::{int, ratio, to_f64, Rational};
use spinobs::sampler::{mc_estimate, McConfig};

/// Brute force over all configurations, written independently of the library
/// engines: returns (Z, sum of weight * observable) where the observable is
/// supplied as a closure on configurations.
pub fn brute_force<F>(g: &Multigraph, model: &Model, pins: &[Pin], obs: F) -> (Rational, Rational)
where
    F: Fn(&[u32]) -> Rational,
{
    let d = match model {
        Model::Potts(p) => p.q,
        Model::TwoSpin(_) => 2,
    };
    let n = g.n();
    let mut sigma = vec![0u32; n];
    let mut z = Rational::zero();
    let mut o = Rational::zero();
    loop {
        if pins.iter().all(|p| p.holds(&sigma)) {
            let mut w = Rational::one();
            match model {
                Model::Potts(p) => {
                    for (e, &(a, b)) in g.edges().iter().enumerate() {
                        if sigma[a] == sigma[b] {
                            w *= g.edge_activity(e).cloned().unwrap_or_else(|| p.beta.clone());
                        }
                    }
                }
                Model::TwoSpin(t) => {
                    for v in 0..n {
                        if sigma[v] == 1 {
                            w *= g.vertex_activity(v).cloned().unwrap_or_else(|| t.lambda.clone());
                        }
                    }
                    for &(a, b) in g.edges() {
                        if sigma[a] == 0 && sigma[b] == 0 {
                            w *= &t.beta;
                        } else if sigma[a] == 1 && sigma[b] == 1 {
                            w *= &t.gamma;
                        }
                    }
                }
            }
            o += &w * obs(&sigma);
            z += w;
        }
        let mut i = 0;
        loop {
            if i == n {
                return (z, o);
            }
            sigma[i] += 1;
            if sigma[i] < d {
                break;
            }
            sigma[i] = 0;
            i += 1;
        }
    }
}

pub fn count_mono(g: &Multigraph, sigma: &[u32]) -> Rational {
    int(g.edges().iter().filter(|&&(a, b)| sigma[a] == sigma[b]).count() as i64)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random connected multigraph on `n` vertices: a random tree plus extras.
pub fn random_connected(rng: &mut ChaCha8Rng, n: usize, extra: usize) -> Multigraph {
    let mut g = Multigraph::new(n);
    for v in 1..n {
        let u = rng.gen_range(0..v);
        g.add_edge(u, v).unwrap();
    }
    if n >= 2 {
        for _ in 0..extra {
            let u = rng.gen_range(0..n);
            let mut v = rng.gen_range(0..n);
            while v == u {
                v = rng.gen_range(0..n);
            }
            g.add_edge(u, v).unwrap();
        }
    }
    g
}

pub fn k2() -> Multigraph {
    Multigraph::from_edges(2, &[(0, 1)]).unwrap()
}

pub fn path(edges: usize) -> Multigraph {
    let e: Vec<(usize, usize)> = (0..edges).map(|i| (i, i + 1)).collect();
    Multigraph::from_edges(edges + 1, &e).unwrap()
}

pub fn cycle(n: usize) -> Multigraph {
    let e: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    Multigraph::from_edges(n, &e).unwrap()
}

pub fn complete_bipartite(a: usize, b: usize) -> Multigraph {
    let mut e = Vec::new();
    for i in 0..a {
        for j in 0..b {
            e.push((i, a + j));
        }
    }
    Multigraph::from_edges(a + b, &e).unwrap()
}

fn invariant_key(n: usize, adj: &[Vec<usize>]) -> Vec<(usize, usize, Vec<usize>)> {
    let mut key: Vec<(usize, usize, Vec<usize>)> = (0..n)
        .map(|v| {
            let tri = adj[v]
                .iter()
                .flat_map(|&a| adj[v].iter().map(move |&b| (a, b)))
                .filter(|&(a, b)| a < b && adj[a].contains(&b))
                .count();
            let mut nd: Vec<usize> = adj[v].iter().map(|&u| adj[u].len()).collect();
            nd.sort_unstable();
            (adj[v].len(), tri, nd)
        })
        .collect();
    key.sort();
    key
}

/// All connected simple graphs on 1..=max_n vertices up to isomorphism,
/// grouped by vertex count. Each graph on n vertices arises from one on
/// n-1 vertices by adding a vertex joined to a nonempty subset.
pub fn connected_graphs(max_n: usize) -> Vec<Vec<Multigraph>> {
    use petgraph::graph::UnGraph;
    use std::collections::HashMap;
    let mut levels: Vec<Vec<Vec<(usize, usize)>>> = vec![vec![Vec::new()]];
    for n in 2..=max_n {
        let mut buckets: HashMap<Vec<(usize, usize, Vec<usize>)>, Vec<UnGraph<(), ()>>> = HashMap::new();
        let mut next = Vec::new();
        for g in &levels[n - 2] {
            for mask in 1u32..(1 << (n - 1)) {
                let mut edges = g.clone();
                edges.extend((0..n - 1).filter(|&v| mask >> v & 1 == 1).map(|v| (v, n - 1)));
                let mut adj = vec![Vec::new(); n];
                for &(a, b) in &edges {
                    adj[a].push(b);
                    adj[b].push(a);
                }
                let key = invariant_key(n, &adj);
                let pg = UnGraph::<(), ()>::from_edges(edges.iter().map(|&(a, b)| (a as u32, b as u32)));
                let bucket = buckets.entry(key).or_default();
                if bucket.iter().any(|h| petgraph::algo::is_isomorphic(h, &pg)) {
                    continue;
                }
                bucket.push(pg);
                next.push(edges);
            }
        }
        levels.push(next);
    }
    levels
        .iter()
        .enumerate()
        .map(|(i, gs)| gs.iter().map(|e| Multigraph::from_edges(i + 1, e).unwrap()).collect())
        .collect()
}

/// (B, S) from brute force over the materialised graph.
pub fn brute_edge(g: &Multigraph, ports: &[usize], p: &Potts) -> (Rational, Rational) {
    let m = Model::Potts(p.clone());
    let same = brute_force(g, &m, &[Pin::Spin(ports[0], 0), Pin::Spin(ports[1], 0)], |s| count_mono(g, s));
    let diff = brute_force(g, &m, &[Pin::Spin(ports[0], 0), Pin::Spin(ports[1], 1)], |s| count_mono(g, s));
    (&same.0 / &diff.0, &same.1 / &same.0 - &diff.1 / &diff.0)
}

/// (R, O) from brute force over the materialised graph.
pub fn brute_field(g: &Multigraph, root: usize, t: &TwoSpin, o: &VertexEdge) -> (Rational, Rational) {
    let m = Model::TwoSpin(t.clone());
    let obs = |s: &[u32]| {
        let ones = s.iter().filter(|&&x| x == 1).count() as i64;
        let m0 = g.edges().iter().filter(|&&(a, b)| s[a] == 0 && s[b] == 0).count() as i64;
        let m1 = g.edges().iter().filter(|&&(a, b)| s[a] == 1 && s[b] == 1).count() as i64;
        &o.a * int(ones) + &o.b * int(m0) + &o.c * int(m1)
    };
    let one = brute_force(g, &m, &[Pin::Spin(root, 1)], obs);
    let zero = brute_force(g, &m, &[Pin::Spin(root, 0)], obs);
    (
        &one.0 / (&zero.0 * &t.lambda),
        &one.1 / &one.0 - &o.a - &zero.1 / &zero.0,
    )
}

/// Random composition tree of at most `budget` vertices.
pub fn random_recipe<R: Rng>(rng: &mut R, kind: Kind, budget: usize) -> Arc<Recipe> {
    let leaf = || match kind {
        Kind::Edge => Arc::new(Recipe::Edge),
        Kind::Field => Arc::new(Recipe::Degenerate),
    };
    let overhead = match kind {
        Kind::Edge => 4,
        Kind::Field => 2,
    };
    let base = leaf().vertex_count(kind);
    if budget < overhead + base || rng.gen_bool(0.25) {
        return leaf();
    }
    let k = rng.gen_range(1..=3);
    let mut kids = Vec::new();
    let mut left = budget - overhead;
    let shared = if kind == Kind::Edge { 2 } else { 1 };
    for _ in 0..k {
        if left + shared < base {
            break;
        }
        let give = rng.gen_range(base..=left + shared);
        let child = random_recipe(rng, kind, give);
        left = (left + shared).saturating_sub(child.vertex_count(kind));
        kids.push(child);
    }
    if kids.is_empty() {
        kids.push(leaf());
    }
    Arc::new(match kind {
        Kind::Edge => Recipe::ComposeE(kids),
        Kind::Field => Recipe::ComposeF(kids),
    })
}

/// Twenty small instances; at least nineteen within four standard errors.
pub fn consistency_suite() -> usize {
    let mut rng = rng(2024);
    let mut pass = 0;
    for i in 0..20 {
        let g = random_connected(&mut rng, 3 + i % 4, i % 3);
        let (m, obs) = if i % 2 == 0 {
            (Model::Potts(Potts::new(3, ratio(3 + i as i64 % 3, 2)).unwrap()), Observable::Monochromatic)
        } else {
            (
                Model::TwoSpin(TwoSpin::new(ratio(1, 2), ratio(1, 3), ratio(2 + i as i64 % 3, 2)).unwrap()),
                Observable::VertexEdge(VertexEdge::new(int(1), int(1), int(-1))),
            )
        };
        let exact = to_f64(&observable_expectation(&g, &m, &obs, None, &[], Budget::default()).unwrap());
        let cfg = McConfig { samples: 20_000, burn_in: 500, thinning: 0, seed: 100 + i as u64, chains: 1 };
        let e = mc_estimate(&g, &m, &obs, Some(&Subgraph::whole(&g)), &cfg).unwrap();
        if (e.mean - exact).abs() <= 4.0 * e.std_error.unwrap() {
            pass += 1;
        }
    }
    pass
}

