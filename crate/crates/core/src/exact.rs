//! Exact partition functions and observable expectations.
//!
//! Two engines compute the same weighted sums: exhaustive enumeration, which
//! tallies integer exponent signatures per configuration, and variable
//! elimination over pairs `(Z, sum of weight * observable)`, used whenever the
//! interaction graph has treewidth at most two.

use std::collections::HashMap;

use num::{One, Zero};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{elimination_order, Multigraph, Subgraph};
use crate::model::{check_pins, local_activities, Model, Observable, Pin};
use crate::rational::{pow, Rational};

/// Limit on the number of configurations enumerated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Budget {
    pub max_configs: u64,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            max_configs: 1 << 24,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    /// Elimination when treewidth is at most two, enumeration otherwise.
    #[default]
    Auto,
    Enumerate,
    Eliminate,
}

/// `z` is the total weight, `o` the weighted observable sum.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSum {
    pub z: Rational,
    pub o: Rational,
}

impl WeightedSum {
    pub fn expectation(&self) -> Result<Rational> {
        if self.z.is_zero() {
            return Err(Error::ZeroWeight);
        }
        Ok(&self.o / &self.z)
    }
}

/// A fully specified exact computation.
#[derive(Debug, Clone)]
pub struct Query<'a> {
    pub graph: &'a Multigraph,
    pub model: &'a Model,
    pub observable: Option<(&'a Observable, &'a Subgraph)>,
    pub pins: &'a [Pin],
    pub method: Method,
    pub budget: Budget,
}

impl<'a> Query<'a> {
    pub fn new(graph: &'a Multigraph, model: &'a Model) -> Self {
        Query {
            graph,
            model,
            observable: None,
            pins: &[],
            method: Method::Auto,
            budget: Budget::default(),
        }
    }

    pub fn observable(mut self, obs: &'a Observable, sub: &'a Subgraph) -> Self {
        self.observable = Some((obs, sub));
        self
    }

    pub fn pins(mut self, pins: &'a [Pin]) -> Self {
        self.pins = pins;
        self
    }

    pub fn method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn budget(mut self, budget: Budget) -> Self {
        self.budget = budget;
        self
    }

    pub fn run(&self) -> Result<WeightedSum> {
        weighted_sum(self)
    }
}

/// Partition function restricted to configurations satisfying `pins`.
pub fn partition_function(
    g: &Multigraph,
    model: &Model,
    pins: &[Pin],
    budget: Budget,
) -> Result<Rational> {
    Ok(Query::new(g, model).pins(pins).budget(budget).run()?.z)
}

/// Gibbs expectation of `obs` over `sub` (the whole graph when `None`).
pub fn observable_expectation(
    g: &Multigraph,
    model: &Model,
    obs: &Observable,
    sub: Option<&Subgraph>,
    pins: &[Pin],
    budget: Budget,
) -> Result<Rational> {
    let whole;
    let sub = match sub {
        Some(s) => s,
        None => {
            whole = Subgraph::whole(g);
            &whole
        }
    };
    Query::new(g, model)
        .observable(obs, sub)
        .pins(pins)
        .budget(budget)
        .run()?
        .expectation()
}

/// Probability of the event described by `event`.
pub fn gibbs_probability(
    g: &Multigraph,
    model: &Model,
    event: &[Pin],
    budget: Budget,
) -> Result<Rational> {
    let z = partition_function(g, model, &[], budget)?;
    if z.is_zero() {
        return Err(Error::ZeroWeight);
    }
    Ok(partition_function(g, model, event, budget)? / z)
}

fn weighted_sum(query: &Query<'_>) -> Result<WeightedSum> {
    let g = query.graph;
    query.model.validate()?;
    query.model.check_graph(g)?;
    check_pins(g, query.model, query.pins)?;
    if let Some((obs, sub)) = query.observable {
        obs.check_model(query.model)?;
        sub.check(g)?;
    }
    let width = interaction_width(g, query.pins);
    match query.method {
        Method::Enumerate => Tallies::enumerate(query)?.evaluate(query),
        Method::Eliminate => eliminate(query),
        Method::Auto if width <= 2 => eliminate(query),
        Method::Auto => Tallies::enumerate(query)?.evaluate(query),
    }
}

fn relational_edges(pins: &[Pin]) -> impl Iterator<Item = (usize, usize)> + '_ {
    pins.iter().filter_map(|p| match *p {
        Pin::Equal(u, v) | Pin::Distinct(u, v) => Some((u, v)),
        Pin::Spin(..) => None,
    })
}

fn interaction_width(g: &Multigraph, pins: &[Pin]) -> usize {
    elimination_order(g.n(), g.edges().iter().copied().chain(relational_edges(pins))).1
}

/// Integer tallies of configurations grouped by exponent signature.
///
/// For Potts the signature counts monochromatic edges per distinct activity;
/// for 2-spin it counts spin-1 vertices per distinct activity followed by the
/// (0,0) and (1,1) edge counts.
#[derive(Debug, Clone)]
pub struct Tallies {
    /// Activity attached to each signature slot.
    pub activities: Vec<Rational>,
    /// (signature, number of configurations, observable sums).
    pub entries: Vec<(Vec<u32>, u64, [i64; 3])>,
}

struct Packing {
    class_of: Vec<usize>,
    offsets: Vec<u32>,
    widths: Vec<u32>,
}

fn bits_for(count: usize) -> u32 {
    usize::BITS - count.leading_zeros()
}

impl Tallies {
    /// Enumerates every configuration consistent with the spin pins.
    pub fn enumerate(query: &Query<'_>) -> Result<Tallies> {
        let g = query.graph;
        let model = query.model;
        let d = model.spins() as u64;
        let mut fixed: Vec<Option<u32>> = vec![None; g.n()];
        for pin in query.pins {
            if let Pin::Spin(v, s) = *pin {
                if let Some(prev) = fixed[v] {
                    if prev != s {
                        return Ok(Tallies {
                            activities: Vec::new(),
                            entries: Vec::new(),
                        });
                    }
                }
                fixed[v] = Some(s);
            }
        }
        let free: Vec<usize> = (0..g.n()).filter(|&v| fixed[v].is_none()).collect();
        let total = (d as u128).checked_pow(free.len() as u32);
        match total {
            Some(t) if t <= query.budget.max_configs as u128 => {}
            _ => {
                return Err(Error::Budget {
                    needed: format!("{}^{}", d, free.len()),
                    budget: query.budget.max_configs,
                })
            }
        }

        let acts = local_activities(g, model);
        let (activities, packing) = match model {
            Model::Potts(_) => Self::classes(&acts, &[]),
            Model::TwoSpin(t) => Self::classes(&acts, &[(t.beta.clone(), g.m()), (t.gamma.clone(), g.m())]),
        };
        let total_bits: u32 = packing.widths.iter().sum();
        if total_bits > 128 {
            return Err(Error::invalid("too many distinct activities for enumeration"));
        }

        let sub_edges: Vec<bool>;
        let sub_vertices: Vec<bool>;
        match query.observable {
            Some((_, sub)) => {
                sub_edges = sub.edges.clone();
                sub_vertices = sub.vertices.clone();
            }
            None => {
                sub_edges = vec![false; g.m()];
                sub_vertices = vec![false; g.n()];
            }
        }
        let relational: Vec<Pin> = query
            .pins
            .iter()
            .copied()
            .filter(|p| !matches!(p, Pin::Spin(..)))
            .collect();
        let is_potts = matches!(model, Model::Potts(_));
        let inc = |slot: usize| -> u128 { 1u128 << packing.offsets[slot] };
        let edge_inc: Vec<u128> = if is_potts {
            (0..g.m()).map(|e| inc(packing.class_of[e])).collect()
        } else {
            Vec::new()
        };
        let vertex_inc: Vec<u128> = if is_potts {
            Vec::new()
        } else {
            (0..g.n()).map(|v| inc(packing.class_of[v])).collect()
        };
        let nslots = packing.offsets.len();
        let (m0_inc, m1_inc) = if is_potts {
            (0, 0)
        } else {
            (inc(nslots - 2), inc(nslots - 1))
        };

        let base: Vec<u32> = fixed.iter().map(|f| f.unwrap_or(0)).collect();
        let split = if free.len() >= 8 && total.unwrap() >= 1 << 14 {
            let mut k = 0;
            while k < free.len() && d.pow(k as u32) < 64 {
                k += 1;
            }
            k
        } else {
            0
        };
        let chunks = d.pow(split as u32);
        let edges = g.edges();

        let run_chunk = |chunk: u64| -> HashMap<u128, (u64, [i64; 3])> {
            let mut map: HashMap<u128, (u64, [i64; 3])> = HashMap::new();
            let mut sigma = base.clone();
            let mut c = chunk;
            for &v in &free[..split] {
                sigma[v] = (c % d) as u32;
                c /= d;
            }
            let rest = &free[split..];
            loop {
                if relational.iter().all(|p| p.holds(&sigma)) {
                    let mut key = 0u128;
                    let mut obs = [0i64; 3];
                    if is_potts {
                        for (e, &(a, b)) in edges.iter().enumerate() {
                            if sigma[a] == sigma[b] {
                                key += edge_inc[e];
                                obs[0] += sub_edges[e] as i64;
                            }
                        }
                    } else {
                        for v in 0..sigma.len() {
                            if sigma[v] == 1 {
                                key += vertex_inc[v];
                                obs[0] += sub_vertices[v] as i64;
                            }
                        }
                        for (e, &(a, b)) in edges.iter().enumerate() {
                            if sigma[a] == sigma[b] {
                                if sigma[a] == 0 {
                                    key += m0_inc;
                                    obs[1] += sub_edges[e] as i64;
                                } else {
                                    key += m1_inc;
                                    obs[2] += sub_edges[e] as i64;
                                }
                            }
                        }
                    }
                    let slot = map.entry(key).or_insert((0, [0; 3]));
                    slot.0 += 1;
                    for i in 0..3 {
                        slot.1[i] += obs[i];
                    }
                }
                let mut i = 0;
                loop {
                    if i == rest.len() {
                        return map;
                    }
                    let v = rest[i];
                    sigma[v] += 1;
                    if (sigma[v] as u64) < d {
                        break;
                    }
                    sigma[v] = 0;
                    i += 1;
                }
            }
        };

        let merged = (0..chunks)
            .into_par_iter()
            .map(run_chunk)
            .reduce(HashMap::new, |mut a, b| {
                for (k, (n, o)) in b {
                    let slot = a.entry(k).or_insert((0, [0; 3]));
                    slot.0 += n;
                    for i in 0..3 {
                        slot.1[i] += o[i];
                    }
                }
                a
            });
        let mut entries: Vec<(Vec<u32>, u64, [i64; 3])> = merged
            .into_iter()
            .map(|(key, (n, o))| {
                let sig = packing
                    .offsets
                    .iter()
                    .zip(&packing.widths)
                    .map(|(&off, &w)| ((key >> off) & ((1u128 << w) - 1)) as u32)
                    .collect();
                (sig, n, o)
            })
            .collect();
        entries.sort();
        Ok(Tallies {
            activities,
            entries,
        })
    }

    /// Groups equal activities into classes and appends the fixed slots.
    fn classes(acts: &[Rational], extra: &[(Rational, usize)]) -> (Vec<Rational>, Packing) {
        let mut values: Vec<Rational> = Vec::new();
        let mut counts: Vec<usize> = Vec::new();
        let mut class_of = Vec::with_capacity(acts.len());
        for a in acts {
            match values.iter().position(|x| x == a) {
                Some(i) => {
                    counts[i] += 1;
                    class_of.push(i);
                }
                None => {
                    values.push(a.clone());
                    counts.push(1);
                    class_of.push(values.len() - 1);
                }
            }
        }
        for (value, count) in extra {
            values.push(value.clone());
            counts.push(*count);
        }
        let widths: Vec<u32> = counts.iter().map(|&c| bits_for(c).max(1)).collect();
        let mut offsets = Vec::with_capacity(widths.len());
        let mut off = 0;
        for &w in &widths {
            offsets.push(off);
            off += w;
        }
        (
            values,
            Packing {
                class_of,
                offsets,
                widths,
            },
        )
    }

    /// Exact weighted sums from the tallies.
    pub fn evaluate(&self, query: &Query<'_>) -> Result<WeightedSum> {
        let coeffs: [Rational; 3] = match query.observable {
            None => [Rational::zero(), Rational::zero(), Rational::zero()],
            Some((Observable::Monochromatic, _)) => [Rational::one(), Rational::zero(), Rational::zero()],
            Some((Observable::VertexEdge(o), _)) => [o.a.clone(), o.b.clone(), o.c.clone()],
        };
        let mut cache: Vec<HashMap<u32, Rational>> = vec![HashMap::new(); self.activities.len()];
        let mut z = Rational::zero();
        let mut o = Rational::zero();
        for (sig, n, sums) in &self.entries {
            let mut w = Rational::one();
            for (slot, &k) in sig.iter().enumerate() {
                if k == 0 {
                    continue;
                }
                let p = cache[slot]
                    .entry(k)
                    .or_insert_with(|| pow(&self.activities[slot], k as i64));
                w *= &*p;
            }
            if w.is_zero() {
                continue;
            }
            z += &w * Rational::from_integer((*n).into());
            let mut obs = Rational::zero();
            for i in 0..3 {
                if sums[i] != 0 {
                    obs += &coeffs[i] * Rational::from_integer(sums[i].into());
                }
            }
            o += w * obs;
        }
        Ok(WeightedSum { z, o })
    }
}

/// Factor over a few variables holding (weight, weighted observable) pairs.
#[derive(Debug, Clone)]
struct Factor {
    scope: Vec<usize>,
    table: Vec<(Rational, Rational)>,
}

fn pair_mul(a: &(Rational, Rational), b: &(Rational, Rational)) -> (Rational, Rational) {
    (&a.0 * &b.0, &a.0 * &b.1 + &a.1 * &b.0)
}

fn eliminate(query: &Query<'_>) -> Result<WeightedSum> {
    let g = query.graph;
    let model = query.model;
    let d = model.spins() as usize;
    let acts = local_activities(g, model);
    let (order, width) = elimination_order(
        g.n(),
        g.edges().iter().copied().chain(relational_edges(query.pins)),
    );
    let table_size = (d as u128).checked_pow(width as u32 + 1);
    match table_size {
        Some(t) if t <= query.budget.max_configs as u128 => {}
        _ => {
            return Err(Error::Budget {
                needed: format!("{}^{}", d, width + 1),
                budget: query.budget.max_configs,
            })
        }
    }
    let (coeffs, sub) = match query.observable {
        None => ([Rational::zero(), Rational::zero(), Rational::zero()], None),
        Some((Observable::Monochromatic, s)) => ([Rational::one(), Rational::zero(), Rational::zero()], Some(s)),
        Some((Observable::VertexEdge(o), s)) => ([o.a.clone(), o.b.clone(), o.c.clone()], Some(s)),
    };
    let in_v = |v: usize| sub.map(|s| s.vertices[v]).unwrap_or(false);
    let in_e = |e: usize| sub.map(|s| s.edges[e]).unwrap_or(false);

    let mut factors: Vec<Factor> = Vec::new();
    for v in 0..g.n() {
        let mut table = Vec::with_capacity(d);
        for s in 0..d as u32 {
            let allowed = query.pins.iter().all(|p| match *p {
                Pin::Spin(u, t) => u != v || t == s,
                _ => true,
            });
            if !allowed {
                table.push((Rational::zero(), Rational::zero()));
                continue;
            }
            let (w, o) = match model {
                Model::Potts(_) => (Rational::one(), Rational::zero()),
                Model::TwoSpin(_) => {
                    if s == 1 {
                        let o = if in_v(v) { coeffs[0].clone() } else { Rational::zero() };
                        (acts[v].clone(), &acts[v] * o)
                    } else {
                        (Rational::one(), Rational::zero())
                    }
                }
            };
            table.push((w, o));
        }
        factors.push(Factor {
            scope: vec![v],
            table,
        });
    }
    for (e, &(a, b)) in g.edges().iter().enumerate() {
        let mut table = Vec::with_capacity(d * d);
        for sb in 0..d {
            for sa in 0..d {
                let (w, o) = match model {
                    Model::Potts(_) => {
                        if sa == sb {
                            let o = if in_e(e) { coeffs[0].clone() } else { Rational::zero() };
                            (acts[e].clone(), &acts[e] * o)
                        } else {
                            (Rational::one(), Rational::zero())
                        }
                    }
                    Model::TwoSpin(t) => {
                        if sa == sb {
                            let (act, c) = if sa == 0 { (&t.beta, &coeffs[1]) } else { (&t.gamma, &coeffs[2]) };
                            let o = if in_e(e) { c.clone() } else { Rational::zero() };
                            (act.clone(), act * o)
                        } else {
                            (Rational::one(), Rational::zero())
                        }
                    }
                };
                table.push((w, o));
            }
        }
        factors.push(Factor {
            scope: vec![a, b],
            table,
        });
    }
    for pin in query.pins {
        let (u, v, equal) = match *pin {
            Pin::Equal(u, v) => (u, v, true),
            Pin::Distinct(u, v) => (u, v, false),
            Pin::Spin(..) => continue,
        };
        let mut table = Vec::with_capacity(d * d);
        for sv in 0..d {
            for su in 0..d {
                let ok = (su == sv) == equal;
                let w = if ok { Rational::one() } else { Rational::zero() };
                table.push((w, Rational::zero()));
            }
        }
        factors.push(Factor {
            scope: vec![u, v],
            table,
        });
    }

    for &x in &order {
        let (touching, rest): (Vec<Factor>, Vec<Factor>) =
            factors.into_iter().partition(|f| f.scope.contains(&x));
        factors = rest;
        factors.push(sum_out(&touching, x, d));
    }
    let mut total = (Rational::one(), Rational::zero());
    for f in &factors {
        debug_assert!(f.scope.is_empty());
        total = pair_mul(&total, &f.table[0]);
    }
    Ok(WeightedSum {
        z: total.0,
        o: total.1,
    })
}

fn sum_out(factors: &[Factor], x: usize, d: usize) -> Factor {
    let mut scope: Vec<usize> = factors.iter().flat_map(|f| f.scope.iter().copied()).collect();
    scope.sort_unstable();
    scope.dedup();
    let out_scope: Vec<usize> = scope.iter().copied().filter(|&v| v != x).collect();
    let pos = |v: usize| scope.iter().position(|&s| s == v).unwrap();
    let strides: Vec<Vec<usize>> = factors
        .iter()
        .map(|f| {
            let mut st = vec![0; scope.len()];
            let mut mult = 1;
            for &v in &f.scope {
                st[pos(v)] += mult;
                mult *= d;
            }
            st
        })
        .collect();
    let xi = pos(x);
    let out_size = d.pow(out_scope.len() as u32);
    let mut table = Vec::with_capacity(out_size);
    let mut assign = vec![0usize; scope.len()];
    for out_idx in 0..out_size {
        let mut rem = out_idx;
        for (i, slot) in assign.iter_mut().enumerate() {
            if i == xi {
                continue;
            }
            *slot = rem % d;
            rem /= d;
        }
        let mut acc = (Rational::zero(), Rational::zero());
        for s in 0..d {
            assign[xi] = s;
            let mut prod = (Rational::one(), Rational::zero());
            for (f, st) in factors.iter().zip(&strides) {
                let idx: usize = assign.iter().zip(st).map(|(a, m)| a * m).sum();
                let entry = &f.table[idx];
                if entry.0.is_zero() && entry.1.is_zero() {
                    prod = (Rational::zero(), Rational::zero());
                    break;
                }
                prod = pair_mul(&prod, entry);
            }
            acc.0 += prod.0;
            acc.1 += prod.1;
        }
        table.push(acc);
    }
    Factor {
        scope: out_scope,
        table,
    }
}

impl Tallies {
    /// Configuration counts by number of monochromatic edges, for a Potts
    /// model without per-edge overrides.
    pub fn monochromatic_counts(&self) -> Vec<u64> {
        let top = self.entries.iter().map(|(s, _, _)| s.first().copied().unwrap_or(0)).max().unwrap_or(0);
        let mut counts = vec![0u64; top as usize + 1];
        for (sig, n, _) in &self.entries {
            counts[sig.first().copied().unwrap_or(0) as usize] += n;
        }
        counts
    }
}

/// Number of configurations enumeration would visit.
pub fn enumeration_size(g: &Multigraph, model: &Model) -> Option<u64> {
    (model.spins() as u64).checked_pow(g.n() as u32)
}
