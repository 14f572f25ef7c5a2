//! Near-regular bipartite phase gadgets: generation, phase labels, ideal
//! port laws and exact or Monte Carlo quality assessment.
//!
//! Vertex layout: side `+` holds interior vertices `0..n` and ports
//! `n..n+t`; side `-` holds interior `n+t..2n+t` and ports `2n+t..2n+2t`.

use std::collections::HashMap;

use num::{One, Signed, Zero};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::criticality::{potts_port_bias, twospin_branch_marginals};
use crate::error::{Error, Result};
use crate::exact::Budget;
use crate::graph::Multigraph;
use crate::model::Model;
use crate::rational::{from_f64, int, pow, to_f64, Rational};
use crate::sampler::{batch_means, Chain};

#[derive(Debug, Clone)]
pub struct PhaseGadget {
    pub graph: Multigraph,
    pub n: usize,
    pub t: usize,
    pub delta: usize,
}

impl PhaseGadget {
    /// Wraps an existing graph, auditing the layout.
    pub fn from_graph(graph: Multigraph, n: usize, t: usize, delta: usize) -> Result<PhaseGadget> {
        let g = PhaseGadget { graph, n, t, delta };
        g.audit()?;
        Ok(g)
    }

    pub fn side_len(&self) -> usize {
        self.n + self.t
    }

    /// Interior vertices of side 0 (`+`) or 1 (`-`).
    pub fn interior(&self, side: usize) -> std::ops::Range<usize> {
        let s = side * self.side_len();
        s..s + self.n
    }

    pub fn side_ports(&self, side: usize) -> std::ops::Range<usize> {
        let s = side * self.side_len() + self.n;
        s..s + self.t
    }

    /// All ports, `+` side first.
    pub fn ports(&self) -> Vec<usize> {
        self.side_ports(0).chain(self.side_ports(1)).collect()
    }

    /// Checks bipartiteness across the sides, simplicity and degrees.
    pub fn audit(&self) -> Result<()> {
        let g = &self.graph;
        let half = self.side_len();
        if g.n() != 2 * half {
            return Err(Error::invalid("phase gadget has the wrong number of vertices"));
        }
        if !g.is_simple() {
            return Err(Error::invalid("phase gadget is not simple"));
        }
        for &(a, b) in g.edges() {
            if (a < half) == (b < half) {
                return Err(Error::invalid("phase gadget edge inside one side"));
            }
        }
        for side in 0..2 {
            for v in self.interior(side) {
                if g.degree(v) != self.delta {
                    return Err(Error::invalid(format!("interior vertex {v} does not have degree {}", self.delta)));
                }
            }
            for v in self.side_ports(side) {
                if g.degree(v) + 1 != self.delta {
                    return Err(Error::invalid(format!("port {v} does not have degree {}", self.delta - 1)));
                }
            }
        }
        Ok(())
    }
}

/// Gale-Ryser test for a simple bipartite graph with the given degrees.
pub fn bipartite_degrees_feasible(a: &[usize], b: &[usize]) -> bool {
    if a.iter().sum::<usize>() != b.iter().sum::<usize>() {
        return false;
    }
    let mut a = a.to_vec();
    a.sort_unstable_by(|x, y| y.cmp(x));
    let mut lhs = 0;
    for (k, &d) in a.iter().enumerate() {
        lhs += d;
        let rhs: usize = b.iter().map(|&x| x.min(k + 1)).sum();
        if lhs > rhs {
            return false;
        }
    }
    true
}

/// Samples a phase gadget from the configuration model, rejecting until
/// the pairing is simple.
pub fn sample_phase_gadget(n: usize, t: usize, delta: usize, seed: u64, attempts: u64) -> Result<PhaseGadget> {
    if delta < 2 {
        return Err(Error::invalid("delta must be at least 2"));
    }
    let degrees: Vec<usize> = std::iter::repeat(delta).take(n).chain(std::iter::repeat(delta - 1).take(t)).collect();
    if n + t == 0 || !bipartite_degrees_feasible(&degrees, &degrees) {
        return Err(Error::invalid(format!(
            "no simple bipartite graph has {n} vertices of degree {delta} and {t} of degree {} per side",
            delta - 1
        )));
    }
    let half = n + t;
    let stubs: Vec<usize> = degrees.iter().enumerate().flat_map(|(v, &d)| std::iter::repeat(v).take(d)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..attempts {
        let mut right = stubs.clone();
        right.shuffle(&mut rng);
        let mut seen = std::collections::HashSet::new();
        if stubs.iter().zip(&right).all(|(&a, &b)| seen.insert((a, b))) {
            let edges: Vec<(usize, usize)> = stubs.iter().zip(&right).map(|(&a, &b)| (a, half + b)).collect();
            let graph = Multigraph::from_edges(2 * half, &edges)?;
            return PhaseGadget::from_graph(graph, n, t, delta);
        }
    }
    Err(Error::Budget {
        needed: "a simple pairing".into(),
        budget: attempts,
    })
}

/// Phases tied for the maximum: colour counts on the interior (Potts) or
/// occupied interior counts per side (2-spin; 0 = `+`, 1 = `-`).
pub fn tied_phases(g: &PhaseGadget, model: &Model, sigma: &[u32]) -> Vec<usize> {
    let counts: Vec<usize> = match model {
        Model::Potts(p) => {
            let mut c = vec![0; p.q as usize];
            for side in 0..2 {
                for v in g.interior(side) {
                    c[sigma[v] as usize] += 1;
                }
            }
            c
        }
        Model::TwoSpin(_) => (0..2).map(|s| g.interior(s).filter(|&v| sigma[v] == 1).count()).collect(),
    };
    argmax_all(&counts)
}

fn argmax_all(counts: &[usize]) -> Vec<usize> {
    let m = counts.iter().copied().max().unwrap_or(0);
    (0..counts.len()).filter(|&i| counts[i] == m).collect()
}

/// Argmax of `counts` with uniform tie-breaking.
pub fn argmax_phase<R: Rng>(counts: &[usize], rng: &mut R) -> usize {
    let tied = argmax_all(counts);
    tied[rng.gen_range(0..tied.len())]
}

/// Phase of `sigma` with uniform tie-breaking.
pub fn phase_of<R: Rng>(g: &PhaseGadget, model: &Model, sigma: &[u32], rng: &mut R) -> usize {
    let tied = tied_phases(g, model, sigma);
    tied[rng.gen_range(0..tied.len())]
}

/// Independent per-port laws.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductLaw {
    /// `marginals[k][s]` = probability that port k has spin s.
    pub marginals: Vec<Vec<Rational>>,
    /// False when a marginal is a binary approximation of an irrational.
    pub exact: bool,
}

impl ProductLaw {
    pub fn prob(&self, tau: &[u32]) -> Rational {
        self.marginals.iter().zip(tau).fold(Rational::one(), |a, (m, &s)| a * &m[s as usize])
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<u32> {
        self.marginals
            .iter()
            .map(|m| {
                let mut u = rng.gen::<f64>();
                for (s, p) in m.iter().enumerate() {
                    let p = to_f64(p);
                    if u < p {
                        return s as u32;
                    }
                    u -= p;
                }
                (m.len() - 1) as u32
            })
            .collect()
    }
}

/// Bias parameters of the ordered phases.
#[derive(Debug, Clone, PartialEq)]
pub enum PhaseLaw {
    /// Probability `p` of the dominant colour at each port.
    Potts { q: u32, p: Rational, exact: bool },
    /// Occupation probabilities of the more and less occupied sides.
    TwoSpin { q_plus: Rational, q_minus: Rational, exact: bool },
}

/// Ordered-phase bias for the model on Δ-regular trees.
pub fn phase_law(model: &Model, delta: u32) -> Result<PhaseLaw> {
    match model {
        Model::Potts(p) => {
            let b = potts_port_bias(p.q, delta, &p.beta)?;
            let (pv, exact) = match b.exact_p {
                Some(x) => (x, true),
                None => (from_f64(b.p).ok_or_else(|| Error::numerical("port bias is not finite"))?, false),
            };
            Ok(PhaseLaw::Potts { q: p.q, p: pv, exact })
        }
        Model::TwoSpin(t) => {
            let c = twospin_branch_marginals(to_f64(&t.beta), to_f64(&t.gamma), to_f64(&t.lambda), delta)?;
            Ok(PhaseLaw::TwoSpin {
                q_plus: from_f64(c.q_plus).unwrap(),
                q_minus: from_f64(c.q_minus).unwrap(),
                exact: false,
            })
        }
    }
}

impl PhaseLaw {
    pub fn phases(&self) -> usize {
        match self {
            PhaseLaw::Potts { q, .. } => *q as usize,
            PhaseLaw::TwoSpin { .. } => 2,
        }
    }

    /// Product law on `plus` ports of side `+` followed by `minus` ports of
    /// side `-` (Potts ignores the split).
    pub fn port_law(&self, phase: usize, plus: usize, minus: usize) -> Result<ProductLaw> {
        match self {
            PhaseLaw::Potts { q, p, exact } => {
                let qr = int(*q as i64);
                if *p <= qr.recip() || *p >= Rational::one() {
                    return Err(Error::invalid("port bias must lie in (1/q, 1)"));
                }
                if phase >= *q as usize {
                    return Err(Error::invalid("phase out of range"));
                }
                let other = (Rational::one() - p) / (qr - Rational::one());
                let m: Vec<Rational> = (0..*q as usize).map(|s| if s == phase { p.clone() } else { other.clone() }).collect();
                Ok(ProductLaw {
                    marginals: vec![m; plus + minus],
                    exact: *exact,
                })
            }
            PhaseLaw::TwoSpin { q_plus, q_minus, exact } => {
                let ok = |x: &Rational| x.is_positive() && *x < Rational::one();
                if !ok(q_plus) || !ok(q_minus) || q_plus == q_minus {
                    return Err(Error::invalid("side occupation probabilities must be distinct and in (0, 1)"));
                }
                let (a, b) = match phase {
                    0 => (q_plus, q_minus),
                    1 => (q_minus, q_plus),
                    _ => return Err(Error::invalid("phase out of range")),
                };
                let law = |x: &Rational| vec![Rational::one() - x, x.clone()];
                let mut marginals = vec![law(a); plus];
                marginals.extend(vec![law(b); minus]);
                Ok(ProductLaw {
                    marginals,
                    exact: *exact,
                })
            }
        }
    }
}

/// Ideal port law of a gadget in a given phase.
pub fn ideal_port_distribution(law: &PhaseLaw, phase: usize, g: &PhaseGadget) -> Result<ProductLaw> {
    law.port_law(phase, g.t, g.t)
}

#[derive(Debug, Clone, Copy)]
pub enum AssessMode {
    Exact(Budget),
    Mc { samples: u64, burn_in: u64, seed: u64, chains: u64 },
}

/// Deviations from balanced phases and ideal port laws.
#[derive(Debug, Clone)]
pub struct Assessment {
    /// max_i |P(phase = i) - 1/phases|.
    pub balance: f64,
    /// max over phases and port configurations of |P(tau | phase)/Q(tau) - 1|.
    pub port: f64,
    pub balance_se: Option<f64>,
    pub port_se: Option<f64>,
    pub exact_balance: Option<Rational>,
    /// Present when both the Gibbs side and the ideal law are exact.
    pub exact_port: Option<Rational>,
    pub phase_probs: Vec<f64>,
    /// `port_probs[i][tau]` = P(ports = tau | phase = i), tau in base-spins
    /// order with the first port least significant.
    pub port_probs: Vec<Vec<f64>>,
}

fn decode(mut idx: usize, q: usize, len: usize) -> Vec<u32> {
    (0..len)
        .map(|_| {
            let s = (idx % q) as u32;
            idx /= q;
            s
        })
        .collect()
}

fn port_index(sigma: &[u32], ports: &[usize], q: usize) -> usize {
    ports.iter().rev().fold(0, |acc, &v| acc * q + sigma[v] as usize)
}

pub fn assess_phase_gadget(g: &PhaseGadget, model: &Model, law: &PhaseLaw, mode: AssessMode) -> Result<Assessment> {
    model.validate()?;
    model.check_graph(&g.graph)?;
    let q = model.spins() as usize;
    if law.phases() != match model {
        Model::Potts(p) => p.q as usize,
        Model::TwoSpin(_) => 2,
    } {
        return Err(Error::invalid("phase law does not match the model"));
    }
    let ports = g.ports();
    let cells = q.checked_pow(ports.len() as u32).filter(|c| *c <= 1 << 20).ok_or_else(|| Error::Budget {
        needed: format!("{q}^{} port configurations", ports.len()),
        budget: 1 << 20,
    })?;
    let laws: Vec<ProductLaw> = (0..law.phases()).map(|i| ideal_port_distribution(law, i, g)).collect::<Result<_>>()?;
    let ideal: Vec<Vec<Rational>> = laws
        .iter()
        .map(|l| (0..cells).map(|c| l.prob(&decode(c, q, ports.len()))).collect())
        .collect();
    match mode {
        AssessMode::Exact(budget) => assess_exact(g, model, &ports, &ideal, law, budget),
        AssessMode::Mc {
            samples,
            burn_in,
            seed,
            chains,
        } => assess_mc(g, model, &ports, &ideal, samples, burn_in, seed, chains),
    }
}

type Key = (u32, usize, u32, u32, u32);

fn assess_exact(
    g: &PhaseGadget,
    model: &Model,
    ports: &[usize],
    ideal: &[Vec<Rational>],
    law: &PhaseLaw,
    budget: Budget,
) -> Result<Assessment> {
    let q = model.spins() as usize;
    let nv = g.graph.n();
    let total = (q as u64).checked_pow(nv as u32).filter(|c| *c <= budget.max_configs).ok_or_else(|| Error::Budget {
        needed: format!("{q}^{nv} configurations"),
        budget: budget.max_configs,
    })?;
    let edges = g.graph.edges().to_vec();
    let chunk = 1u64 << 14;
    let nchunks = total.div_ceil(chunk);
    // key: (tie mask, port cell, count, m0, m1)
    let maps: Vec<HashMap<Key, u64>> = (0..nchunks)
        .into_par_iter()
        .map(|c| {
            let mut map = HashMap::new();
            for idx in c * chunk..((c + 1) * chunk).min(total) {
                let sigma = decode(idx as usize, q, nv);
                let tied = tied_phases(g, model, &sigma);
                let mask = tied.iter().fold(0u32, |m, &i| m | (1 << i));
                let cell = port_index(&sigma, ports, q);
                let key = match model {
                    Model::Potts(_) => {
                        let mono = edges.iter().filter(|&&(a, b)| sigma[a] == sigma[b]).count() as u32;
                        (mask, cell, mono, 0, 0)
                    }
                    Model::TwoSpin(_) => {
                        let ones = sigma.iter().filter(|&&s| s == 1).count() as u32;
                        let m0 = edges.iter().filter(|&&(a, b)| sigma[a] == 0 && sigma[b] == 0).count() as u32;
                        let m1 = edges.iter().filter(|&&(a, b)| sigma[a] == 1 && sigma[b] == 1).count() as u32;
                        (mask, cell, ones, m0, m1)
                    }
                };
                *map.entry(key).or_insert(0u64) += 1;
            }
            map
        })
        .collect();
    let mut merged: HashMap<Key, u64> = HashMap::new();
    for m in maps {
        for (k, v) in m {
            *merged.entry(k).or_insert(0) += v;
        }
    }
    let mut keys: Vec<_> = merged.into_iter().collect();
    keys.sort_unstable();
    let phases = ideal.len();
    let cells = ideal[0].len();
    let mut joint = vec![vec![Rational::zero(); cells]; phases];
    let mut z = Rational::zero();
    for ((mask, cell, a, b, c), count) in keys {
        let w = match model {
            Model::Potts(p) => pow(&p.beta, a as i64),
            Model::TwoSpin(t) => {
                pow(&t.lambda, a as i64) * pow(&t.beta, b as i64) * pow(&t.gamma, c as i64)
            }
        } * int(count as i64);
        let share = &w / int(mask.count_ones() as i64);
        for (i, row) in joint.iter_mut().enumerate() {
            if mask & (1 << i) != 0 {
                row[cell] += &share;
            }
        }
        z += w;
    }
    if z.is_zero() {
        return Err(Error::ZeroWeight);
    }
    let target = int(phases as i64).recip();
    let phase_w: Vec<Rational> = joint.iter().map(|r| r.iter().fold(Rational::zero(), |a, b| a + b)).collect();
    let mut balance = Rational::zero();
    for w in &phase_w {
        let d = (w / &z - &target).abs();
        if d > balance {
            balance = d;
        }
    }
    let mut port = Rational::zero();
    let mut port_probs = Vec::with_capacity(phases);
    for i in 0..phases {
        if phase_w[i].is_zero() {
            return Err(Error::Degenerate(format!("phase {i} has probability zero")));
        }
        let mut row = Vec::with_capacity(cells);
        for c in 0..cells {
            let cond = &joint[i][c] / &phase_w[i];
            row.push(to_f64(&cond));
            let d = (cond / &ideal[i][c] - Rational::one()).abs();
            if d > port {
                port = d;
            }
        }
        port_probs.push(row);
    }
    let exact_law = match law {
        PhaseLaw::Potts { exact, .. } | PhaseLaw::TwoSpin { exact, .. } => *exact,
    };
    Ok(Assessment {
        balance: to_f64(&balance),
        port: to_f64(&port),
        balance_se: None,
        port_se: None,
        exact_balance: Some(balance),
        exact_port: if exact_law { Some(port) } else { None },
        phase_probs: phase_w.iter().map(|w| to_f64(&(w / &z))).collect(),
        port_probs,
    })
}

#[allow(clippy::too_many_arguments)]
fn assess_mc(
    g: &PhaseGadget,
    model: &Model,
    ports: &[usize],
    ideal: &[Vec<Rational>],
    samples: u64,
    burn_in: u64,
    seed: u64,
    chains: u64,
) -> Result<Assessment> {
    if samples == 0 {
        return Err(Error::invalid("Monte Carlo assessment needs at least one sample"));
    }
    let q = model.spins() as usize;
    let chains = chains.max(1).min(samples);
    let per = samples / chains;
    let extra = samples % chains;
    let thin = g.graph.n().max(1) as u64;
    let runs: Vec<Result<Vec<(usize, usize)>>> = (0..chains)
        .into_par_iter()
        .map(|c| {
            let mut chain = Chain::new(&g.graph, model, seed, c, None)?;
            let mut ties = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
            ties.set_stream(c);
            chain.run(burn_in);
            let n = per + u64::from(c < extra);
            let mut out = Vec::with_capacity(n as usize);
            for _ in 0..n {
                chain.run(thin);
                let s = chain.state();
                out.push((phase_of(g, model, s, &mut ties), port_index(s, ports, q)));
            }
            Ok(out)
        })
        .collect();
    let mut obs = Vec::with_capacity(samples as usize);
    for r in runs {
        obs.extend(r?);
    }
    let phases = ideal.len();
    let cells = ideal[0].len();
    let n = obs.len() as f64;
    let mut phase_count = vec![0f64; phases];
    let mut joint = vec![vec![0f64; cells]; phases];
    for &(i, c) in &obs {
        phase_count[i] += 1.0;
        joint[i][c] += 1.0;
    }
    let target = 1.0 / phases as f64;
    let (bi, balance) = (0..phases)
        .map(|i| (i, (phase_count[i] / n - target).abs()))
        .fold((0, -1.0), |a, b| if b.1 > a.1 { b } else { a });
    let indicator: Vec<f64> = obs.iter().map(|&(i, _)| f64::from(u8::from(i == bi))).collect();
    let balance_se = batch_means(&indicator).1;
    let mut port = -1.0f64;
    let mut arg = (0, 0);
    let mut port_probs = vec![vec![0f64; cells]; phases];
    for i in 0..phases {
        for c in 0..cells {
            let cond = if phase_count[i] > 0.0 { joint[i][c] / phase_count[i] } else { 0.0 };
            port_probs[i][c] = cond;
            let d = (cond / to_f64(&ideal[i][c]) - 1.0).abs();
            if d > port {
                port = d;
                arg = (i, c);
            }
        }
    }
    // Linearised ratio estimator for the maximising cell.
    let (i, c) = arg;
    let pi = phase_count[i] / n;
    let cond = port_probs[i][c];
    let qv = to_f64(&ideal[i][c]);
    let port_se = if pi > 0.0 {
        let lin: Vec<f64> = obs
            .iter()
            .map(|&(a, b)| {
                let hit = f64::from(u8::from(a == i && b == c));
                let ph = f64::from(u8::from(a == i));
                (hit - cond * ph) / (pi * qv)
            })
            .collect();
        batch_means(&lin).1
    } else {
        None
    };
    Ok(Assessment {
        balance,
        port,
        balance_se,
        port_se,
        exact_balance: None,
        exact_port: None,
        phase_probs: phase_count.iter().map(|x| x / n).collect(),
        port_probs,
    })
}
