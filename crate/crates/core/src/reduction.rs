//! Composite graphs built from phase gadgets, the effective-parameter
//! algebra they induce, reduction plans, subtraction estimators, idealized
//! phase-marginal checks and activity-perturbation bounds.
//!
//! Potts composites replace every vertex of H by a copy of a phase gadget
//! and join neighbouring copies with `ell` odd paths plus one edge gadget.
//! 2-spin composites join the `+` sides and the `-` sides of neighbouring
//! copies by single edges and hang field gadgets off the ports.

use std::collections::HashMap;
use std::fmt::Write as _;

use num::{One, Signed, Zero};
use rayon::prelude::*;

use crate::criticality::{potts_critical_beta, twospin_uniqueness};
use crate::error::{Error, Result};
use crate::exact::{observable_expectation, Budget};
use crate::gadgets::{build_path, search_gadget_pair, search_pool, Gadget, LibraryConfig, PoolConfig, Rules};
use crate::graph::{Multigraph, Subgraph};
use crate::model::{Model, Observable, Potts, TwoSpin, VertexEdge};
use crate::phase::{phase_law, PhaseGadget, PhaseLaw};
use crate::rational::{fmt_rational, int, pow, to_f64, Rational};

/// What a connector or attachment inside a composite stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Path,
    EdgeGadget,
    PlusEdge,
    MinusEdge,
    Field,
    PlusSide,
    MinusSide,
}

/// A gadget (or plain edge) joining two phase-gadget copies.
#[derive(Debug, Clone, PartialEq)]
pub struct Connector {
    pub h_edge: usize,
    pub role: Role,
    /// Composite vertices identified with the gadget terminals.
    pub ends: (usize, usize),
    pub vertices: usize,
}

/// A field gadget whose root is identified with a port.
#[derive(Debug, Clone, PartialEq)]
pub struct Attachment {
    pub h_vertex: usize,
    pub role: Role,
    pub port: usize,
    pub vertices: usize,
}

/// Gadgets and multiplicities used to assemble a composite.
#[derive(Debug, Clone)]
pub enum Bundle {
    Potts {
        phase: PhaseGadget,
        path: Gadget,
        edge: Gadget,
        ell: usize,
    },
    TwoSpin {
        phase: PhaseGadget,
        field: Gadget,
        /// Attached `ell_plus` times on each `+` side.
        plus_side: Gadget,
        ell_plus: usize,
        /// Attached `ell_minus` times on each `-` side.
        minus_side: Gadget,
        ell_minus: usize,
    },
}

impl Bundle {
    fn phase(&self) -> &PhaseGadget {
        match self {
            Bundle::Potts { phase, .. } | Bundle::TwoSpin { phase, .. } => phase,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CompositeInstance {
    pub graph: Multigraph,
    pub delta: usize,
    /// First vertex of each phase-gadget copy, indexed by H-vertex.
    pub copies: Vec<usize>,
    pub copy_size: usize,
    pub connectors: Vec<Connector>,
    pub attachments: Vec<Attachment>,
}

impl CompositeInstance {
    /// Expected vertex count from the parts.
    pub fn expected_vertices(&self) -> usize {
        self.copies.len() * self.copy_size
            + self.connectors.iter().map(|c| c.vertices.saturating_sub(2)).sum::<usize>()
            + self.attachments.iter().map(|a| a.vertices - 1).sum::<usize>()
    }

    /// Bipartiteness, maximum degree, port uniqueness and vertex count.
    pub fn audit(&self) -> Result<()> {
        if self.graph.bipartition().is_none() {
            return Err(Error::invalid("composite is not bipartite"));
        }
        if self.graph.max_degree() > self.delta {
            return Err(Error::invalid(format!(
                "composite has degree {} above {}",
                self.graph.max_degree(),
                self.delta
            )));
        }
        let mut used: Vec<usize> = self
            .connectors
            .iter()
            .flat_map(|c| [c.ends.0, c.ends.1])
            .chain(self.attachments.iter().map(|a| a.port))
            .collect();
        let total = used.len();
        used.sort_unstable();
        used.dedup();
        if used.len() != total {
            return Err(Error::invalid("a port is used more than once"));
        }
        if self.graph.n() != self.expected_vertices() {
            return Err(Error::invalid("composite vertex count does not match its parts"));
        }
        Ok(())
    }
}

/// Copies `g` into `out`, identifying the listed terminals with given vertices.
fn splice(out: &mut Multigraph, g: &Multigraph, terminals: &[(usize, usize)]) -> Result<()> {
    let mut map = vec![usize::MAX; g.n()];
    for &(t, v) in terminals {
        map[t] = v;
    }
    for m in map.iter_mut() {
        if *m == usize::MAX {
            *m = out.add_vertex();
        }
    }
    for &(a, b) in g.edges() {
        out.add_edge(map[a], map[b])?;
    }
    Ok(())
}

/// Whether the two ports of an edge gadget lie in different colour classes.
fn odd_terminals(g: &Gadget) -> Result<bool> {
    let colours = g
        .graph
        .bipartition()
        .ok_or_else(|| Error::invalid("connector gadget is not bipartite"))?;
    Ok(colours[g.ports[0]] != colours[g.ports[1]])
}

struct Ports {
    next: Vec<[usize; 2]>,
    t: usize,
}

impl Ports {
    fn take(&mut self, copies: &[usize], g: &PhaseGadget, v: usize, side: usize) -> Result<usize> {
        let k = self.next[v][side];
        if k >= self.t {
            return Err(Error::invalid(format!("port budget exceeded at H-vertex {v}, side {side}")));
        }
        self.next[v][side] += 1;
        Ok(copies[v] + g.side_ports(side).start + k)
    }

    fn free(&self, v: usize, side: usize) -> bool {
        self.next[v][side] < self.t
    }
}

/// Assembles the composite for `h`. Ports are allocated in H-edge order.
pub fn build_composite(h: &Multigraph, bundle: &Bundle) -> Result<CompositeInstance> {
    if h.bipartition().is_none() {
        return Err(Error::invalid("H must be bipartite"));
    }
    if h.max_degree() > 3 {
        return Err(Error::invalid("H must have maximum degree at most 3"));
    }
    let g = bundle.phase();
    g.audit()?;
    match bundle {
        Bundle::Potts { ell, .. } => {
            if g.t < 3 * (ell + 1) {
                return Err(Error::invalid(format!("port count t = {} is below 3(ell+1) = {}", g.t, 3 * (ell + 1))));
            }
        }
        Bundle::TwoSpin { ell_plus, ell_minus, .. } => {
            if g.t < 5 + ell_plus.max(ell_minus) {
                return Err(Error::invalid(format!(
                    "port count t = {} is below 5 + max(ell+, ell-) = {}",
                    g.t,
                    5 + ell_plus.max(ell_minus)
                )));
            }
        }
    }
    let mut graph = Multigraph::new(0);
    let mut copies = Vec::with_capacity(h.n());
    for _ in 0..h.n() {
        copies.push(graph.append(&g.graph));
    }
    let mut ports = Ports {
        next: vec![[0, 0]; h.n()],
        t: g.t,
    };
    let mut connectors = Vec::new();
    let mut attachments = Vec::new();
    match bundle {
        Bundle::Potts { path, edge, ell, .. } => {
            for (e, &(u, v)) in h.edges().iter().enumerate() {
                let items = std::iter::repeat((path, Role::Path)).take(*ell).chain([(edge, Role::EdgeGadget)]);
                for (gad, role) in items {
                    // Copies of G over the two colour classes of H take opposite
                    // colourings: odd connectors join equal sides, even ones opposite sides.
                    let odd = odd_terminals(gad)?;
                    let options: [(usize, usize); 2] = if odd { [(0, 0), (1, 1)] } else { [(0, 1), (1, 0)] };
                    let (su, sv) = options
                        .into_iter()
                        .find(|&(a, b)| ports.free(u, a) && ports.free(v, b))
                        .ok_or_else(|| Error::invalid(format!("port budget exceeded on H-edge {e}")))?;
                    let a = ports.take(&copies, g, u, su)?;
                    let b = ports.take(&copies, g, v, sv)?;
                    splice(&mut graph, &gad.graph, &[(gad.ports[0], a), (gad.ports[1], b)])?;
                    connectors.push(Connector {
                        h_edge: e,
                        role,
                        ends: (a, b),
                        vertices: gad.graph.n(),
                    });
                }
            }
        }
        Bundle::TwoSpin {
            field,
            plus_side,
            ell_plus,
            minus_side,
            ell_minus,
            ..
        } => {
            for (e, &(u, v)) in h.edges().iter().enumerate() {
                for (side, role) in [(0, Role::PlusEdge), (1, Role::MinusEdge)] {
                    let a = ports.take(&copies, g, u, side)?;
                    let b = ports.take(&copies, g, v, side)?;
                    graph.add_edge(a, b)?;
                    connectors.push(Connector {
                        h_edge: e,
                        role,
                        ends: (a, b),
                        vertices: 2,
                    });
                }
            }
            for x in 0..h.n() {
                let items = [(field, Role::Field, 0)]
                    .into_iter()
                    .chain(std::iter::repeat((plus_side, Role::PlusSide, 0)).take(*ell_plus))
                    .chain(std::iter::repeat((minus_side, Role::MinusSide, 1)).take(*ell_minus));
                for (gad, role, side) in items {
                    let port = ports.take(&copies, g, x, side)?;
                    splice(&mut graph, &gad.graph, &[(gad.ports[0], port)])?;
                    attachments.push(Attachment {
                        h_vertex: x,
                        role,
                        port,
                        vertices: gad.graph.n(),
                    });
                }
            }
        }
    }
    let out = CompositeInstance {
        graph,
        delta: g.delta,
        copies,
        copy_size: g.graph.n(),
        connectors,
        attachments,
    };
    out.audit()?;
    Ok(out)
}

/// Numbers that determine the idealized composite algebra.
#[derive(Debug, Clone, PartialEq)]
pub enum Spec {
    Potts {
        q: u32,
        /// Probability of the phase colour at a port.
        p: Rational,
        edge: Rational,
        path: Rational,
        ell: usize,
    },
    TwoSpin {
        beta: Rational,
        gamma: Rational,
        q_plus: Rational,
        q_minus: Rational,
        field: Rational,
        plus_side: Rational,
        ell_plus: usize,
        minus_side: Rational,
        ell_minus: usize,
    },
}

impl Spec {
    /// Spec of a concrete bundle under the given port law.
    pub fn of_bundle(bundle: &Bundle, model: &Model, law: &PhaseLaw) -> Result<Spec> {
        match (bundle, model, law) {
            (Bundle::Potts { path, edge, ell, .. }, Model::Potts(_), PhaseLaw::Potts { q, p, .. }) => Ok(Spec::Potts {
                q: *q,
                p: p.clone(),
                edge: edge.stats.value.clone(),
                path: path.stats.value.clone(),
                ell: *ell,
            }),
            (
                Bundle::TwoSpin {
                    field,
                    plus_side,
                    ell_plus,
                    minus_side,
                    ell_minus,
                    ..
                },
                Model::TwoSpin(t),
                PhaseLaw::TwoSpin { q_plus, q_minus, .. },
            ) => Ok(Spec::TwoSpin {
                beta: t.beta.clone(),
                gamma: t.gamma.clone(),
                q_plus: q_plus.clone(),
                q_minus: q_minus.clone(),
                field: field.stats.value.clone(),
                plus_side: plus_side.stats.value.clone(),
                ell_plus: *ell_plus,
                minus_side: minus_side.stats.value.clone(),
                ell_minus: *ell_minus,
            }),
            _ => Err(Error::invalid("bundle, model and port law disagree on the model family")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PottsEffective {
    pub r0: Rational,
    pub r1: Rational,
    pub a0: Rational,
    pub a1: Rational,
    pub edge_factor: Rational,
    pub path_factor: Rational,
    pub beta_hat: Rational,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoSpinEffective {
    pub q_plus: Rational,
    pub q_minus: Rational,
    /// Indexed by phase, `+` first.
    pub matrix: [[Rational; 2]; 2],
    pub alpha: Rational,
    pub field_factor: Rational,
    pub lambda_hat: Rational,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EffectiveParams {
    Potts(PottsEffective),
    TwoSpin(TwoSpinEffective),
}

impl EffectiveParams {
    /// The effective activity of H: β̂ or λ̂.
    pub fn target(&self) -> &Rational {
        match self {
            EffectiveParams::Potts(p) => &p.beta_hat,
            EffectiveParams::TwoSpin(t) => &t.lambda_hat,
        }
    }
}

/// Probabilities that two independent ports agree, in equal and in
/// different phases.
pub fn collision_probs(q: u32, p: &Rational) -> Result<(Rational, Rational)> {
    let qr = int(q as i64);
    let one = Rational::one();
    if q < 2 || *p <= qr.recip() || *p >= one {
        return Err(Error::invalid("port bias must lie in (1/q, 1) with q >= 2"));
    }
    let miss = &one - p;
    let qm = &qr - &one;
    let r0 = p * p + &miss * &miss / &qm;
    let r1 = int(2) * p * &miss / &qm + (&qr - int(2)) * &miss * &miss / (&qm * &qm);
    Ok((r0, r1))
}

/// (1 + (B-1)R0) / (1 + (B-1)R1).
pub fn interaction_factor(b: &Rational, r0: &Rational, r1: &Rational) -> Rational {
    let x = b - Rational::one();
    (Rational::one() + &x * r0) / (Rational::one() + &x * r1)
}

/// (q+ R + 1 - q+) / (q- R + 1 - q-).
pub fn field_factor(q_plus: &Rational, q_minus: &Rational, r: &Rational) -> Rational {
    let one = Rational::one();
    (q_plus * r + &one - q_plus) / (q_minus * r + &one - q_minus)
}

/// Edge weight matrix averaged over port laws, indexed by phase (`+` first).
pub fn phase_matrix(beta: &Rational, gamma: &Rational, q_plus: &Rational, q_minus: &Rational) -> [[Rational; 2]; 2] {
    let one = Rational::one();
    let q = [q_plus, q_minus];
    let entry = |i: usize, j: usize| {
        let (a, b) = (q[i], q[j]);
        (&one - a) * (&one - b) * beta + (&one - a) * b + a * (&one - b) + a * b * gamma
    };
    [[entry(0, 0), entry(0, 1)], [entry(1, 0), entry(1, 1)]]
}

pub fn effective_params(spec: &Spec) -> Result<EffectiveParams> {
    match spec {
        Spec::Potts { q, p, edge, path, ell } => {
            let (r0, r1) = collision_probs(*q, p)?;
            if !edge.is_positive() || !path.is_positive() {
                return Err(Error::invalid("interactions must be positive"));
            }
            let a = |r: &Rational| edge / (edge + (Rational::one() - r) / r);
            let edge_factor = interaction_factor(edge, &r0, &r1);
            let path_factor = interaction_factor(path, &r0, &r1);
            let beta_hat = pow(&path_factor, *ell as i64) * &edge_factor;
            Ok(EffectiveParams::Potts(PottsEffective {
                a0: a(&r0),
                a1: a(&r1),
                r0,
                r1,
                edge_factor,
                path_factor,
                beta_hat,
            }))
        }
        Spec::TwoSpin {
            beta,
            gamma,
            q_plus,
            q_minus,
            field,
            plus_side,
            ell_plus,
            minus_side,
            ell_minus,
        } => {
            if q_plus == q_minus {
                return Err(Error::Degenerate("side occupation probabilities coincide".into()));
            }
            let ok = |x: &Rational| x.is_positive() && *x < Rational::one();
            if !ok(q_plus) || !ok(q_minus) {
                return Err(Error::invalid("side occupation probabilities must lie in (0, 1)"));
            }
            let matrix = phase_matrix(beta, gamma, q_plus, q_minus);
            if matrix.iter().flatten().any(|m| !m.is_positive()) {
                return Err(Error::Degenerate("phase matrix has a zero entry".into()));
            }
            let alpha = &matrix[0][0] * &matrix[1][1] / (&matrix[0][1] * &matrix[1][0]);
            let ff = field_factor(q_plus, q_minus, field);
            let lambda_hat = &ff * pow(&field_factor(q_plus, q_minus, plus_side), *ell_plus as i64)
                / pow(&field_factor(q_plus, q_minus, minus_side), *ell_minus as i64);
            Ok(EffectiveParams::TwoSpin(TwoSpinEffective {
                q_plus: q_plus.clone(),
                q_minus: q_minus.clone(),
                matrix,
                alpha,
                field_factor: ff,
                lambda_hat,
            }))
        }
    }
}

/// Oracle readings on the two composites and their probe gadgets.
///
/// Potts: `composite` are susceptibilities, `offset` the expected
/// monochromatic edges of each edge gadget given different ports, `gap` the
/// susceptibility gaps. 2-spin: observables, baselines given root spin 0
/// and observable gaps.
#[derive(Debug, Clone, PartialEq)]
pub struct Readings {
    pub composite: [Rational; 2],
    pub offset: [Rational; 2],
    pub gap: [Rational; 2],
}

/// (slope, intercept, count) of the affine link between the H-quantity and
/// the composite reading.
fn link(eff: &EffectiveParams, h_vertices: usize, h_edges: usize) -> (Rational, Rational, Rational) {
    match eff {
        EffectiveParams::Potts(p) => (&p.a0 - &p.a1, p.a1.clone(), int(h_edges as i64)),
        EffectiveParams::TwoSpin(t) => (&t.q_plus - &t.q_minus, t.q_minus.clone(), int(h_vertices as i64)),
    }
}

/// Composite reading implied by an H-quantity (susceptibility at β̂ or
/// magnetization at (α, λ̂)) with no phase error. `bulk` is the contribution
/// of everything outside the probe gadgets.
pub fn forward_reading(
    eff: &EffectiveParams,
    h_vertices: usize,
    h_edges: usize,
    h_value: &Rational,
    bulk: &Rational,
    offset: &Rational,
    gap: &Rational,
) -> Rational {
    let (slope, icept, count) = link(eff, h_vertices, h_edges);
    offset * &count + bulk + gap * (slope * h_value + icept * &count)
}

/// Recovers the H-quantity from two composite readings whose probes share
/// the effective parameter but differ in gap.
pub fn subtraction_estimate(
    eff: &EffectiveParams,
    h_vertices: usize,
    h_edges: usize,
    readings: &Readings,
    min_gap: &Rational,
) -> Result<Rational> {
    let dg = &readings.gap[0] - &readings.gap[1];
    if dg.is_zero() || dg.abs() < *min_gap {
        return Err(Error::Degenerate(format!("probe gap difference {} is below {}", dg, min_gap)));
    }
    let (slope, icept, count) = link(eff, h_vertices, h_edges);
    if slope.is_zero() {
        return Err(Error::Degenerate("effective slope vanishes".into()));
    }
    let ds = &readings.composite[0] - &readings.composite[1];
    let doff = &readings.offset[0] - &readings.offset[1];
    Ok(((ds - &count * doff) / dg - icept * &count) / slope)
}

/// Result of the idealized phase-marginal comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalReport {
    pub max_deviation: Rational,
    /// Upper bound on the deviation caused by `perturb`, if any.
    pub sensitivity: Option<Rational>,
    pub phase_vectors: u64,
}

fn potts_connector_factor(law: &[Rational], other: &[Rational], b: &Rational) -> Rational {
    let mut s = Rational::zero();
    for (x, px) in law.iter().enumerate() {
        for (y, py) in other.iter().enumerate() {
            let w = if x == y { b.clone() } else { Rational::one() };
            s += px * py * w;
        }
    }
    s
}

fn binary_law(q1: &Rational) -> [Rational; 2] {
    [Rational::one() - q1, q1.clone()]
}

/// Per H-edge table of factors by (phase(u), phase(v)) and per H-vertex
/// factors by phase, computed by summing port spins explicitly.
fn factor_tables(spec: &Spec, h: &Multigraph) -> Result<(Vec<Vec<Vec<Rational>>>, Vec<Rational>)> {
    match spec {
        Spec::Potts { q, p, edge, path, ell } => {
            let qn = *q as usize;
            let miss = (Rational::one() - p) / int(*q as i64 - 1);
            let laws: Vec<Vec<Rational>> = (0..qn)
                .map(|ph| (0..qn).map(|s| if s == ph { p.clone() } else { miss.clone() }).collect())
                .collect();
            let mut table = vec![vec![Rational::one(); qn]; qn];
            for (a, row) in table.iter_mut().enumerate() {
                for (b, cell) in row.iter_mut().enumerate() {
                    let fp = potts_connector_factor(&laws[a], &laws[b], path);
                    let fe = potts_connector_factor(&laws[a], &laws[b], edge);
                    *cell = pow(&fp, *ell as i64) * fe;
                }
            }
            Ok((vec![table; h.m()], vec![Rational::one(); qn]))
        }
        Spec::TwoSpin {
            beta,
            gamma,
            q_plus,
            q_minus,
            field,
            plus_side,
            ell_plus,
            minus_side,
            ell_minus,
        } => {
            // Phase 0 is `+`: its `+` ports are occupied with probability q+.
            let side_q = |phase: usize, side: usize| if phase == side { q_plus } else { q_minus };
            let edge_w = |x: usize, y: usize| match (x, y) {
                (0, 0) => beta.clone(),
                (1, 1) => gamma.clone(),
                _ => Rational::one(),
            };
            let mut table = vec![vec![Rational::zero(); 2]; 2];
            for (a, row) in table.iter_mut().enumerate() {
                for (b, cell) in row.iter_mut().enumerate() {
                    let mut f = Rational::one();
                    for side in 0..2 {
                        let (la, lb) = (binary_law(side_q(a, side)), binary_law(side_q(b, side)));
                        let mut s = Rational::zero();
                        for x in 0..2 {
                            for y in 0..2 {
                                s += &la[x] * &lb[y] * edge_w(x, y);
                            }
                        }
                        f *= s;
                    }
                    *cell = f;
                }
            }
            let attach = |law: &[Rational; 2], r: &Rational| &law[0] + &law[1] * r;
            let vertex: Vec<Rational> = (0..2)
                .map(|ph| {
                    let plus = binary_law(side_q(ph, 0));
                    let minus = binary_law(side_q(ph, 1));
                    attach(&plus, field)
                        * pow(&attach(&plus, plus_side), *ell_plus as i64)
                        * pow(&attach(&minus, minus_side), *ell_minus as i64)
                })
                .collect();
            Ok((vec![table; h.m()], vertex))
        }
    }
}

fn perturbed(spec: &Spec, d: &Rational) -> Spec {
    let mut s = spec.clone();
    match &mut s {
        Spec::Potts { p, .. } => *p += d,
        Spec::TwoSpin { q_plus, .. } => *q_plus += d,
    }
    s
}

fn decode(mut i: u64, k: usize, n: usize) -> Vec<usize> {
    (0..n)
        .map(|_| {
            let s = (i % k as u64) as usize;
            i /= k as u64;
            s
        })
        .collect()
}

/// Compares the phase-vector law induced on H by idealized port laws with
/// the Potts law at β̂ (or the Ising law at (α, λ̂)). With `perturb`, the
/// port laws use p + d (or q+ + d) while the reference keeps the
/// unperturbed parameters, and a sensitivity bound is reported.
pub fn idealized_phase_marginal_check(
    h: &Multigraph,
    spec: &Spec,
    perturb: Option<&Rational>,
    budget: Budget,
) -> Result<MarginalReport> {
    if h.n() > 12 {
        return Err(Error::Budget {
            needed: format!("phase vectors on {} H-vertices", h.n()),
            budget: 12,
        });
    }
    let eff = effective_params(spec)?;
    let k = match spec {
        Spec::Potts { q, .. } => *q as usize,
        Spec::TwoSpin { .. } => 2,
    };
    let count = (k as u64)
        .checked_pow(h.n() as u32)
        .filter(|c| *c <= budget.max_configs)
        .ok_or_else(|| Error::Budget {
            needed: format!("{k}^{}", h.n()),
            budget: budget.max_configs,
        })?;
    let actual = match perturb {
        Some(d) => perturbed(spec, d),
        None => spec.clone(),
    };
    effective_params(&actual)?;
    let (edges, verts) = factor_tables(&actual, h)?;
    // Weights are products of a few distinct factors, so phase vectors are
    // tallied by integer exponent signatures and the rationals are combined
    // once per signature.
    let mut values: Vec<Rational> = Vec::new();
    let mut id_of = |x: &Rational| match values.iter().position(|v| v == x) {
        Some(i) => i,
        None => {
            values.push(x.clone());
            values.len() - 1
        }
    };
    let edge_ids: Vec<Vec<Vec<usize>>> = edges
        .iter()
        .map(|t| t.iter().map(|row| row.iter().map(&mut id_of).collect()).collect())
        .collect();
    let vert_ids: Vec<usize> = verts.iter().map(&mut id_of).collect();
    let slots = values.len();
    let signature = |i: u64| -> Vec<u32> {
        let y = decode(i, k, h.n());
        let mut key = vec![0u32; slots + 2];
        for (e, &(a, b)) in h.edges().iter().enumerate() {
            key[edge_ids[e][y[a]][y[b]]] += 1;
            key[slots] += (y[a] == y[b]) as u32;
        }
        for &s in &y {
            key[vert_ids[s]] += 1;
            key[slots + 1] += (s == 0) as u32;
        }
        key
    };
    let tally: HashMap<Vec<u32>, u64> = (0..count)
        .into_par_iter()
        .fold(HashMap::new, |mut map: HashMap<Vec<u32>, u64>, i| {
            *map.entry(signature(i)).or_default() += 1;
            map
        })
        .reduce(HashMap::new, |mut a, b| {
            for (key, c) in b {
                *a.entry(key).or_default() += c;
            }
            a
        });
    let mut classes: Vec<(Vec<u32>, u64)> = tally.into_iter().collect();
    classes.sort();
    let weights: Vec<(Rational, Rational, u64)> = classes
        .iter()
        .map(|(key, c)| {
            let w = (0..slots).fold(Rational::one(), |acc, j| acc * pow(&values[j], key[j] as i64));
            let (m, plus) = (key[slots] as i64, key[slots + 1] as i64);
            let r = match &eff {
                EffectiveParams::Potts(p) => pow(&p.beta_hat, m),
                EffectiveParams::TwoSpin(t) => pow(&t.alpha, m) * pow(&t.lambda_hat, plus),
            };
            (w, r, *c)
        })
        .collect();
    let zw = weights.iter().fold(Rational::zero(), |s, (w, _, c)| s + w * int(*c as i64));
    let zr = weights.iter().fold(Rational::zero(), |s, (_, r, c)| s + r * int(*c as i64));
    let mut dev = Rational::zero();
    for (w, r, _) in &weights {
        let d = (w * &zr / (r * &zw) - Rational::one()).abs();
        if d > dev {
            dev = d;
        }
    }
    let sensitivity = match perturb {
        None => None,
        Some(_) => {
            let (base_e, base_v) = factor_tables(spec, h)?;
            let mut lo: Option<Rational> = None;
            let mut hi: Option<Rational> = None;
            let mut upd = |x: Rational| {
                if lo.as_ref().map_or(true, |l| x < *l) {
                    lo = Some(x.clone());
                }
                if hi.as_ref().map_or(true, |m| x > *m) {
                    hi = Some(x);
                }
            };
            if let Some((e0, b0)) = edges.first().zip(base_e.first()) {
                for a in 0..k {
                    for b in 0..k {
                        upd(&e0[a][b] / &b0[a][b]);
                    }
                }
            }
            let mut vlo = Rational::one();
            let mut vhi = Rational::one();
            if verts.iter().zip(&base_v).any(|(x, y)| x != y) {
                let rs: Vec<Rational> = verts.iter().zip(&base_v).map(|(x, y)| x / y).collect();
                vlo = rs.iter().min().unwrap().clone();
                vhi = rs.iter().max().unwrap().clone();
            }
            let (elo, ehi) = match (lo, hi) {
                (Some(l), Some(m)) => (l, m),
                _ => (Rational::one(), Rational::one()),
            };
            let spread = pow(&(ehi / elo), h.m() as i64) * pow(&(vhi / vlo), h.n() as i64);
            Some(spread - Rational::one())
        }
    };
    Ok(MarginalReport {
        max_deviation: dev,
        sensitivity,
        phase_vectors: count,
    })
}

/// A pair of activity vectors differing off a fixed part of the graph.
#[derive(Debug, Clone)]
pub enum Perturbation {
    /// Edges of `f` keep the model's β; all other edges get β0 or β1.
    Edges {
        potts: Potts,
        f: Vec<usize>,
        beta0: Rational,
        beta1: Rational,
    },
    /// Vertices of `s` get λ1 or λ2, all others keep λ; the observable is
    /// read on `f`.
    Fields {
        model: TwoSpin,
        obs: VertexEdge,
        s: Vec<usize>,
        lambda1: Rational,
        lambda2: Rational,
        f: Subgraph,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationReport {
    pub bound: Rational,
    pub measured: Rational,
}

pub fn perturbation_bound(g: &Multigraph, pert: &Perturbation, budget: Budget) -> Result<PerturbationReport> {
    match pert {
        Perturbation::Edges { potts, f, beta0, beta1 } => {
            if f.iter().any(|&e| e >= g.m()) {
                return Err(Error::invalid("subgraph edge out of range"));
            }
            let mut inside = vec![false; g.m()];
            for &e in f {
                inside[e] = true;
            }
            let with = |b: &Rational| {
                let mut h = g.clone();
                for (e, &fe) in inside.iter().enumerate() {
                    h.set_edge_activity(e, Some(if fe { potts.beta.clone() } else { b.clone() }));
                }
                h
            };
            let model = Model::Potts(potts.clone());
            let sub = Subgraph::from_edges(g, f);
            let e0 = observable_expectation(&with(beta0), &model, &Observable::Monochromatic, Some(&sub), &[], budget)?;
            let e1 = observable_expectation(&with(beta1), &model, &Observable::Monochromatic, Some(&sub), &[], budget)?;
            let m = int(g.m() as i64);
            Ok(PerturbationReport {
                bound: &m * &m * (beta0 - beta1).abs(),
                measured: (e0 - e1).abs(),
            })
        }
        Perturbation::Fields {
            model,
            obs,
            s,
            lambda1,
            lambda2,
            f,
        } => {
            if s.iter().any(|&v| v >= g.n()) {
                return Err(Error::invalid("vertex out of range"));
            }
            if !lambda1.is_positive() || !lambda2.is_positive() {
                return Err(Error::invalid("activities must be positive"));
            }
            f.check(g)?;
            let with = |l: &Rational| {
                let mut h = g.clone();
                for &v in s {
                    h.set_vertex_activity(v, Some(l.clone()));
                }
                h
            };
            let m = Model::TwoSpin(model.clone());
            let o = Observable::VertexEdge(obs.clone());
            let e1 = observable_expectation(&with(lambda1), &m, &o, Some(f), &[], budget)?;
            let e2 = observable_expectation(&with(lambda2), &m, &o, Some(f), &[], budget)?;
            let k = obs.a.abs() + obs.b.abs() + obs.c.abs();
            let (n, e) = (int(g.n() as i64), int(g.m() as i64));
            Ok(PerturbationReport {
                bound: int(2) * k * (&n * &n + &e * &e) * (lambda2 / lambda1 - Rational::one()).abs(),
                measured: (e2 - e1).abs(),
            })
        }
    }
}

/// Desk-scale settings for [`plan_reduction`].
#[derive(Debug, Clone)]
pub struct PlanConfig {
    /// Requested relative error; drives the reported paper-scale values.
    pub eta: Rational,
    /// Odd paths are built with 0 < B - 1 < `path_tol` (Potts).
    pub path_tol: Rational,
    /// Probe gadgets agree to within 2r.
    pub pair_r: Rational,
    pub pair_gap: Rational,
    pub delta: u32,
    pub pool: PoolConfig,
    pub budget: Budget,
    /// Largest multiplicity tried before giving up.
    pub max_ell: usize,
}

impl Default for PlanConfig {
    fn default() -> Self {
        PlanConfig {
            eta: Rational::new(1.into(), 10.into()),
            path_tol: Rational::new(1.into(), 100.into()),
            pair_r: Rational::new(1.into(), 100.into()),
            pair_gap: Rational::new(1.into(), 1000.into()),
            delta: 3,
            pool: PoolConfig {
                max_vertices: 18,
                per_size: 60,
                max_children: 2,
            },
            budget: Budget::default(),
            max_ell: 100_000,
        }
    }
}

/// Which tuning gadget sits on the `+` sides (2-spin).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// Λ̂ ≥ 1: the larger-field gadget goes on the `+` sides.
    Raise,
    /// Λ̂ < 1: roles swapped.
    Lower,
}

/// Values the asymptotic construction would prescribe, for comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PaperScale {
    pub eps: f64,
    pub t: f64,
    pub r: f64,
}

#[derive(Debug, Clone)]
pub struct ReductionPlan {
    pub model: Model,
    pub target: Rational,
    pub eta: Rational,
    pub law: PhaseLaw,
    pub r: Rational,
    pub eps: Rational,
    pub t: usize,
    /// Potts: number of paths per H-edge; 2-spin: ell+ = ell- = ell.
    pub ell: usize,
    pub branch: Option<Branch>,
    /// The two probe gadgets (edge gadgets or field gadgets).
    pub probes: [Gadget; 2],
    /// Potts: the path. 2-spin: gadgets on the `+` and `-` sides.
    pub tuning: Vec<Gadget>,
    /// Common probe value used for the crossing (B or R̂).
    pub common: Rational,
    /// Effective product at `ell` and at `ell - 1` (when ell > 1).
    pub crossing: (Rational, Option<Rational>),
    pub effective: [EffectiveParams; 2],
    pub paper: PaperScale,
    /// Target below the threshold where Glauber dynamics is known to mix.
    pub fast_mixing: bool,
    pub schedule: Vec<String>,
}

impl ReductionPlan {
    pub fn spec(&self, probe: usize) -> Spec {
        match (&self.model, &self.law) {
            (Model::Potts(_), PhaseLaw::Potts { q, p, .. }) => Spec::Potts {
                q: *q,
                p: p.clone(),
                edge: self.probes[probe].stats.value.clone(),
                path: self.tuning[0].stats.value.clone(),
                ell: self.ell,
            },
            (Model::TwoSpin(t), PhaseLaw::TwoSpin { q_plus, q_minus, .. }) => Spec::TwoSpin {
                beta: t.beta.clone(),
                gamma: t.gamma.clone(),
                q_plus: q_plus.clone(),
                q_minus: q_minus.clone(),
                field: self.probes[probe].stats.value.clone(),
                plus_side: self.tuning[0].stats.value.clone(),
                ell_plus: self.ell,
                minus_side: self.tuning[1].stats.value.clone(),
                ell_minus: self.ell,
            },
            _ => unreachable!("plans pair models with matching laws"),
        }
    }

    /// Bundle for probe 0 or 1 around a phase gadget.
    pub fn bundle(&self, phase: PhaseGadget, probe: usize) -> Bundle {
        match self.model {
            Model::Potts(_) => Bundle::Potts {
                phase,
                path: self.tuning[0].clone(),
                edge: self.probes[probe].clone(),
                ell: self.ell,
            },
            Model::TwoSpin(_) => Bundle::TwoSpin {
                phase,
                field: self.probes[probe].clone(),
                plus_side: self.tuning[0].clone(),
                ell_plus: self.ell,
                minus_side: self.tuning[1].clone(),
                ell_minus: self.ell,
            },
        }
    }

    /// key=value rendering; identical inputs give identical text.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        match &self.model {
            Model::Potts(p) => {
                kv("model", "potts".into());
                kv("q", p.q.to_string());
                kv("beta", fmt_rational(&p.beta));
            }
            Model::TwoSpin(t) => {
                kv("model", "twospin".into());
                kv("beta", fmt_rational(&t.beta));
                kv("gamma", fmt_rational(&t.gamma));
                kv("lambda", fmt_rational(&t.lambda));
            }
        }
        kv("target", fmt_rational(&self.target));
        kv("eta", fmt_rational(&self.eta));
        match &self.law {
            PhaseLaw::Potts { p, exact, .. } => {
                kv("port_bias", fmt_rational(p));
                kv("port_bias_exact", exact.to_string());
            }
            PhaseLaw::TwoSpin { q_plus, q_minus, exact } => {
                kv("q_plus", fmt_rational(q_plus));
                kv("q_minus", fmt_rational(q_minus));
                kv("port_bias_exact", exact.to_string());
            }
        }
        kv("r", fmt_rational(&self.r));
        kv("eps", fmt_rational(&self.eps));
        kv("t", self.t.to_string());
        kv("ell", self.ell.to_string());
        if let Some(b) = self.branch {
            kv("branch", if b == Branch::Raise { "raise" } else { "lower" }.into());
        }
        kv("common", fmt_rational(&self.common));
        kv("crossing_at_ell", fmt_rational(&self.crossing.0));
        kv(
            "crossing_at_ell_minus_1",
            self.crossing.1.as_ref().map(fmt_rational).unwrap_or_else(|| "none".into()),
        );
        for (i, g) in self.probes.iter().enumerate() {
            kv(&format!("probe{}_recipe", i + 1), g.recipe.to_string().replace('\n', "; "));
            kv(&format!("probe{}_value", i + 1), fmt_rational(&g.stats.value));
            kv(&format!("probe{}_gap", i + 1), fmt_rational(&g.stats.gap));
            kv(&format!("probe{}_effective", i + 1), fmt_rational(self.effective[i].target()));
        }
        for (i, g) in self.tuning.iter().enumerate() {
            kv(&format!("tuning{}_recipe", i + 1), g.recipe.to_string().replace('\n', "; "));
            kv(&format!("tuning{}_value", i + 1), fmt_rational(&g.stats.value));
        }
        kv("paper_eps", format!("{:.16e}", self.paper.eps));
        kv("paper_t", format!("{:.16e}", self.paper.t));
        kv("paper_r", format!("{:.16e}", self.paper.r));
        kv("fast_mixing_regime", self.fast_mixing.to_string());
        for (i, c) in self.schedule.iter().enumerate() {
            kv(&format!("call{}", i + 1), c.clone());
        }
        s
    }
}

/// Smallest positive `ell` with `start * step^ell` beyond `target`
/// (above when `up`, at or below otherwise). Returns the products at ell and ell-1.
fn smallest_crossing(
    start: &Rational,
    step: &Rational,
    target: &Rational,
    up: bool,
    strict: bool,
    max_ell: usize,
) -> Result<(usize, Rational, Option<Rational>)> {
    let crossed = |x: &Rational| match (up, strict) {
        (true, true) => x > target,
        (true, false) => x >= target,
        (false, true) => x < target,
        (false, false) => x <= target,
    };
    let mut prev = start.clone();
    for ell in 1..=max_ell {
        let cur = &prev * step;
        if crossed(&cur) {
            let before = if ell > 1 { Some(prev) } else { None };
            return Ok((ell, cur, before));
        }
        prev = cur;
    }
    Err(Error::Budget {
        needed: format!("more than {max_ell} tuning gadgets"),
        budget: max_ell as u64,
    })
}

/// Chooses probes, tuning gadgets and multiplicities so the idealized
/// composite realises `target` on H.
pub fn plan_reduction(
    model: &Model,
    obs: Option<&VertexEdge>,
    h: &Multigraph,
    target: &Rational,
    config: &PlanConfig,
) -> Result<ReductionPlan> {
    if h.bipartition().is_none() || h.max_degree() > 3 {
        return Err(Error::invalid("H must be bipartite with maximum degree at most 3"));
    }
    if !config.eta.is_positive() || config.eta >= Rational::one() {
        return Err(Error::invalid("eta must lie in (0, 1)"));
    }
    let lib = LibraryConfig {
        pool: config.pool,
        budget: config.budget,
    };
    let (nv, ne) = (h.n().max(1) as f64, h.m().max(1) as f64);
    let eta = to_f64(&config.eta);
    match model {
        Model::Potts(p) => {
            if *target <= Rational::one() {
                return Err(Error::invalid("target interaction must exceed 1"));
            }
            let bc = potts_critical_beta(p.q, config.delta)?;
            if to_f64(&p.beta) <= bc {
                return Err(Error::Subcritical(format!("beta = {} is not above {bc:.6}", p.beta)));
            }
            let law = phase_law(model, config.delta)?;
            let PhaseLaw::Potts { q, p: bias, .. } = &law else { unreachable!() };
            let (r0, r1) = collision_probs(*q, bias)?;
            let rules = Rules::potts(p)?;
            // Probe window: edge factor stays below the target, so at least one path is needed.
            let room = &rules.mg - Rational::one();
            let solve = if &r0 > &(target * &r1) {
                let x = (target - Rational::one()) / (&r0 - target * &r1);
                if x < room {
                    x
                } else {
                    room.clone()
                }
            } else {
                room.clone()
            };
            let hi = Rational::one() + solve / int(2);
            let pair = search_gadget_pair(&rules, &config.pair_r, &config.pair_gap, Some((Rational::one(), hi.clone())), &lib)?;
            let common = (&pair.first.stats.value + &pair.second.stats.value) / int(2);
            let path = build_path(&config.path_tol, p, config.budget)?;
            let ef = interaction_factor(&common, &r0, &r1);
            let pf = interaction_factor(&path.stats.value, &r0, &r1);
            let (ell, at, before) = smallest_crossing(&ef, &pf, target, true, true, config.max_ell)?;
            let probes = [pair.first, pair.second];
            let effective = [0, 1].map(|i| {
                effective_params(&Spec::Potts {
                    q: *q,
                    p: bias.clone(),
                    edge: probes[i].stats.value.clone(),
                    path: path.stats.value.clone(),
                    ell,
                })
            });
            let [e0, e1] = effective;
            let effective = [e0?, e1?];
            let eps_p = eta / ne.powi(5);
            let db = to_f64(&(&common - Rational::one()));
            let dl = to_f64(&(&hi - Rational::one()));
            let beta0 = ((p.q as f64 - 1.0) / 3.0).powf(1.0 / config.delta as f64);
            let paper = PaperScale {
                eps: eps_p,
                t: (ne * to_f64(target).ln() / (eps_p * dl * db)).powi(4).ceil(),
                r: eps_p.powi(4) / (10.0 * dl * to_f64(&(&r0 - &r1)) * beta0),
            };
            let schedule = vec![
                "susceptibility(composite with probe1)".into(),
                "susceptibility(composite with probe2)".into(),
                "offset(probe1)".into(),
                "offset(probe2)".into(),
                "gap(probe1)".into(),
                "gap(probe2)".into(),
            ];
            Ok(ReductionPlan {
                model: model.clone(),
                target: target.clone(),
                eta: config.eta.clone(),
                law: law.clone(),
                r: config.pair_r.clone(),
                eps: config.eta.clone(),
                t: 3 * (ell + 1),
                ell,
                branch: None,
                probes,
                tuning: vec![path],
                common,
                crossing: (at, before),
                effective,
                paper,
                fast_mixing: to_f64(target) < beta0,
                schedule,
            })
        }
        Model::TwoSpin(t) => {
            if !target.is_positive() {
                return Err(Error::invalid("target activity must be positive"));
            }
            let u = twospin_uniqueness(to_f64(&t.beta), to_f64(&t.gamma), to_f64(&t.lambda), config.delta)?;
            if !t.is_antiferromagnetic() || !u.in_nonuniqueness() {
                return Err(Error::Subcritical("parameters are not in the non-uniqueness region".into()));
            }
            let obs = obs.cloned().unwrap_or_else(VertexEdge::magnetization);
            let law = phase_law(model, config.delta)?;
            let PhaseLaw::TwoSpin { q_plus, q_minus, .. } = &law else { unreachable!() };
            let rules = Rules::twospin(t, &obs)?;
            let pair = search_gadget_pair(&rules, &config.pair_r, &config.pair_gap, None, &lib)?;
            let common = (&pair.first.stats.value + &pair.second.stats.value) / int(2);
            let (hi_g, lo_g) = tuning_pair(&rules, &config.pair_r, &lib)?;
            let f = |r: &Rational| field_factor(q_plus, q_minus, r);
            let base = f(&common);
            let big_lambda = target / &base;
            let (branch, plus, minus) = if big_lambda >= Rational::one() {
                (Branch::Raise, hi_g, lo_g)
            } else {
                (Branch::Lower, lo_g, hi_g)
            };
            let step = f(&plus.stats.value) / f(&minus.stats.value);
            let (ell, at, before) =
                smallest_crossing(&base, &step, target, branch == Branch::Raise, false, config.max_ell)?;
            let probes = [pair.first, pair.second];
            let mk = |i: usize| {
                effective_params(&Spec::TwoSpin {
                    beta: t.beta.clone(),
                    gamma: t.gamma.clone(),
                    q_plus: q_plus.clone(),
                    q_minus: q_minus.clone(),
                    field: probes[i].stats.value.clone(),
                    plus_side: plus.stats.value.clone(),
                    ell_plus: ell,
                    minus_side: minus.stats.value.clone(),
                    ell_minus: ell,
                })
            };
            let effective = [mk(0)?, mk(1)?];
            let eps_p = eta / nv.powi(8);
            let tilde = to_f64(&((&plus.stats.value + &minus.stats.value) / int(2)));
            let paper = PaperScale {
                eps: eps_p,
                t: (nv * nv * to_f64(target).ln().abs() / eps_p).powi(6).ceil(),
                r: (tilde - 1.0).abs() / 10.0 * eps_p.powi(4),
            };
            let schedule = vec![
                "observable(composite with probe1)".into(),
                "observable(composite with probe2)".into(),
                "baseline(probe1) by exact tree evaluation".into(),
                "baseline(probe2) by exact tree evaluation".into(),
            ];
            Ok(ReductionPlan {
                model: model.clone(),
                target: target.clone(),
                eta: config.eta.clone(),
                law: law.clone(),
                r: config.pair_r.clone(),
                eps: config.eta.clone(),
                t: 5 + ell,
                ell,
                branch: Some(branch),
                probes,
                tuning: vec![plus, minus],
                common,
                crossing: (at, before),
                effective,
                paper,
                fast_mixing: false,
                schedule,
            })
        }
    }
}

/// Two field gadgets with distinct values away from 1 whose difference is
/// as close to `r` as the pool allows; larger value first.
fn tuning_pair(rules: &Rules, r: &Rational, lib: &LibraryConfig) -> Result<(Gadget, Gadget)> {
    let mut pool = search_pool(rules, &lib.pool);
    pool.retain(|c| c.value != Rational::one());
    pool.sort_by(|a, b| a.value.cmp(&b.value).then(a.size.cmp(&b.size)));
    let two_r = r * int(2);
    let mut best: Option<(Rational, usize, usize, usize)> = None;
    for i in 0..pool.len() {
        for j in i + 1..pool.len() {
            let d = &pool[j].value - &pool[i].value;
            if d > two_r {
                break;
            }
            if d.is_zero() {
                continue;
            }
            let score = (&d - r).abs();
            let size = pool[i].size + pool[j].size;
            if best.as_ref().map_or(true, |(s, z, _, _)| score < *s || (score == *s && size < *z)) {
                best = Some((score, size, i, j));
            }
        }
    }
    let (_, _, i, j) = best.ok_or_else(|| Error::numerical("no two distinct field values within 2r"))?;
    let hi = Gadget::from_recipe(pool[j].recipe.clone(), rules, lib.budget)?;
    let lo = Gadget::from_recipe(pool[i].recipe.clone(), rules, lib.budget)?;
    Ok((hi, lo))
}
