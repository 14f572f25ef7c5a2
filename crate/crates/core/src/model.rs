//! Spin-system parameters, observables and pins.

use num::{One, Signed, Zero};

use crate::error::{Error, Result};
use crate::graph::{Multigraph, Subgraph};
use crate::rational::{pow, Rational};

/// q-state Potts model with edge activity `beta` on monochromatic edges.
#[derive(Debug, Clone, PartialEq)]
pub struct Potts {
    pub q: u32,
    pub beta: Rational,
}

/// Two-spin system: `lambda` per spin-1 vertex, `beta` per (0,0) edge,
/// `gamma` per (1,1) edge.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoSpin {
    pub beta: Rational,
    pub gamma: Rational,
    pub lambda: Rational,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Potts(Potts),
    TwoSpin(TwoSpin),
}

impl Potts {
    pub fn new(q: u32, beta: Rational) -> Result<Self> {
        let p = Potts { q, beta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.q < 2 {
            return Err(Error::invalid("Potts model needs q >= 2"));
        }
        if !self.beta.is_positive() {
            return Err(Error::invalid("Potts edge activity must be positive"));
        }
        Ok(())
    }

    pub fn is_ferromagnetic(&self) -> bool {
        self.beta > Rational::one()
    }
}

impl TwoSpin {
    pub fn new(beta: Rational, gamma: Rational, lambda: Rational) -> Result<Self> {
        let t = TwoSpin { beta, gamma, lambda };
        t.validate()?;
        Ok(t)
    }

    pub fn hard_core(lambda: Rational) -> Self {
        TwoSpin {
            beta: Rational::one(),
            gamma: Rational::zero(),
            lambda,
        }
    }

    pub fn ising(b: Rational, lambda: Rational) -> Self {
        TwoSpin {
            beta: b.clone(),
            gamma: b,
            lambda,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta.is_negative() || self.gamma.is_negative() {
            return Err(Error::invalid("edge activities must be nonnegative"));
        }
        if self.beta.is_zero() && self.gamma.is_zero() {
            return Err(Error::invalid("beta and gamma cannot both vanish"));
        }
        if !self.lambda.is_positive() {
            return Err(Error::invalid("vertex activity must be positive"));
        }
        Ok(())
    }

    pub fn is_antiferromagnetic(&self) -> bool {
        &self.beta * &self.gamma < Rational::one()
    }

    pub fn is_hard_core(&self) -> bool {
        self.beta.is_one() && self.gamma.is_zero()
    }

    pub fn is_ising(&self) -> bool {
        self.beta == self.gamma
    }
}

impl Model {
    pub fn validate(&self) -> Result<()> {
        match self {
            Model::Potts(p) => p.validate(),
            Model::TwoSpin(t) => t.validate(),
        }
    }

    /// Number of spin values.
    pub fn spins(&self) -> u32 {
        match self {
            Model::Potts(p) => p.q,
            Model::TwoSpin(_) => 2,
        }
    }

    /// Checks that the graph's activity overrides make sense for this model.
    pub fn check_graph(&self, g: &Multigraph) -> Result<()> {
        match self {
            Model::Potts(_) => {
                if g.has_vertex_activities() {
                    return Err(Error::invalid("Potts model takes edge activities only"));
                }
                for e in 0..g.m() {
                    if let Some(b) = g.edge_activity(e) {
                        if !b.is_positive() {
                            return Err(Error::invalid(format!("edge {e} has nonpositive activity")));
                        }
                    }
                }
            }
            Model::TwoSpin(_) => {
                if g.has_edge_activities() {
                    return Err(Error::invalid("2-spin model takes vertex activities only"));
                }
                for v in 0..g.n() {
                    if let Some(l) = g.vertex_activity(v) {
                        if !l.is_positive() {
                            return Err(Error::invalid(format!("vertex {v} has nonpositive activity")));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Linear vertex-edge observable `a|sigma| + b m0 + c m1`.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexEdge {
    pub a: Rational,
    pub b: Rational,
    pub c: Rational,
}

impl VertexEdge {
    pub fn new(a: Rational, b: Rational, c: Rational) -> Self {
        VertexEdge { a, b, c }
    }

    /// Number of spin-1 vertices.
    pub fn magnetization() -> Self {
        VertexEdge::new(Rational::one(), Rational::zero(), Rational::zero())
    }

    pub fn is_zero(&self) -> bool {
        self.a.is_zero() && self.b.is_zero() && self.c.is_zero()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Observable {
    /// Number of monochromatic edges (Potts).
    Monochromatic,
    /// Vertex-edge observable (2-spin).
    VertexEdge(VertexEdge),
}

impl Observable {
    pub fn check_model(&self, model: &Model) -> Result<()> {
        match (self, model) {
            (Observable::Monochromatic, Model::Potts(_)) => Ok(()),
            (Observable::VertexEdge(_), Model::TwoSpin(_)) => Ok(()),
            _ => Err(Error::invalid("observable does not match the model")),
        }
    }
}

/// Why a vertex-edge observable is trivial for a 2-spin system, if it is.
pub fn triviality(t: &TwoSpin, o: &VertexEdge, bipartite_only: bool) -> Option<&'static str> {
    if o.is_zero() {
        return Some("observable is identically zero");
    }
    if t.beta.is_zero() && o.a.is_zero() && o.c.is_zero() {
        return Some("beta = 0 and a = c = 0");
    }
    if t.gamma.is_zero() && o.a.is_zero() && o.b.is_zero() {
        return Some("gamma = 0 and a = b = 0");
    }
    let symmetric = t.beta == t.gamma && t.lambda.is_one();
    if symmetric && (&o.b + &o.c).is_zero() {
        return Some("beta = gamma, lambda = 1 and b + c = 0");
    }
    if bipartite_only && symmetric {
        return Some("beta = gamma and lambda = 1 on bipartite graphs");
    }
    None
}

/// A restriction on configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pin {
    Spin(usize, u32),
    Equal(usize, usize),
    Distinct(usize, usize),
}

impl Pin {
    pub fn holds(&self, sigma: &[u32]) -> bool {
        match *self {
            Pin::Spin(v, s) => sigma[v] == s,
            Pin::Equal(u, v) => sigma[u] == sigma[v],
            Pin::Distinct(u, v) => sigma[u] != sigma[v],
        }
    }
}

pub(crate) fn check_pins(g: &Multigraph, model: &Model, pins: &[Pin]) -> Result<()> {
    let q = model.spins();
    for pin in pins {
        let ok = match *pin {
            Pin::Spin(v, s) => v < g.n() && s < q,
            Pin::Equal(u, v) | Pin::Distinct(u, v) => u < g.n() && v < g.n(),
        };
        if !ok {
            return Err(Error::invalid(format!("pin {pin:?} is out of range")));
        }
    }
    Ok(())
}

/// Resolved activity of each edge (Potts) or vertex (2-spin).
pub(crate) fn local_activities(g: &Multigraph, model: &Model) -> Vec<Rational> {
    match model {
        Model::Potts(p) => (0..g.m())
            .map(|e| g.edge_activity(e).cloned().unwrap_or_else(|| p.beta.clone()))
            .collect(),
        Model::TwoSpin(t) => (0..g.n())
            .map(|v| g.vertex_activity(v).cloned().unwrap_or_else(|| t.lambda.clone()))
            .collect(),
    }
}

/// Weight and observable of a single configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigStats {
    pub weight: Rational,
    /// Monochromatic edges (Potts) or spin-1 vertices (2-spin).
    pub count: usize,
    pub m0: usize,
    pub m1: usize,
}

pub fn config_stats(g: &Multigraph, model: &Model, sigma: &[u32]) -> Result<ConfigStats> {
    model.validate()?;
    model.check_graph(g)?;
    if sigma.len() != g.n() || sigma.iter().any(|&s| s >= model.spins()) {
        return Err(Error::invalid("configuration does not match the graph"));
    }
    let acts = local_activities(g, model);
    let mut weight = Rational::one();
    match model {
        Model::Potts(_) => {
            let mut mono = 0;
            for (e, &(a, b)) in g.edges().iter().enumerate() {
                if sigma[a] == sigma[b] {
                    mono += 1;
                    weight *= &acts[e];
                }
            }
            Ok(ConfigStats {
                weight,
                count: mono,
                m0: 0,
                m1: 0,
            })
        }
        Model::TwoSpin(t) => {
            let ones = sigma.iter().filter(|&&s| s == 1).count();
            for v in 0..g.n() {
                if sigma[v] == 1 {
                    weight *= &acts[v];
                }
            }
            let m0 = g.edges().iter().filter(|&&(a, b)| sigma[a] == 0 && sigma[b] == 0).count();
            let m1 = g.edges().iter().filter(|&&(a, b)| sigma[a] == 1 && sigma[b] == 1).count();
            weight *= pow(&t.beta, m0 as i64) * pow(&t.gamma, m1 as i64);
            Ok(ConfigStats {
                weight,
                count: ones,
                m0,
                m1,
            })
        }
    }
}

/// Observable value of one configuration restricted to `sub`.
pub fn observable_value(
    g: &Multigraph,
    obs: &Observable,
    sub: &Subgraph,
    sigma: &[u32],
) -> Rational {
    match obs {
        Observable::Monochromatic => {
            let k = g
                .edges()
                .iter()
                .enumerate()
                .filter(|&(e, &(a, b))| sub.edges[e] && sigma[a] == sigma[b])
                .count();
            Rational::from_integer(k.into())
        }
        Observable::VertexEdge(o) => {
            let ones = (0..g.n()).filter(|&v| sub.vertices[v] && sigma[v] == 1).count();
            let mut m0 = 0;
            let mut m1 = 0;
            for (e, &(a, b)) in g.edges().iter().enumerate() {
                if sub.edges[e] && sigma[a] == sigma[b] {
                    if sigma[a] == 0 {
                        m0 += 1;
                    } else {
                        m1 += 1;
                    }
                }
            }
            let k = |x: usize| Rational::from_integer(x.into());
            &o.a * k(ones) + &o.b * k(m0) + &o.c * k(m1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, ratio};

    #[test]
    fn zero_power_convention() {
        let g = Multigraph::from_edges(2, &[(0, 1)]).unwrap();
        let hc = Model::TwoSpin(TwoSpin::hard_core(int(1)));
        assert_eq!(config_stats(&g, &hc, &[0, 0]).unwrap().weight, int(1));
        assert_eq!(config_stats(&g, &hc, &[1, 1]).unwrap().weight, int(0));
    }

    #[test]
    fn trivial_observables() {
        let ising = TwoSpin::ising(ratio(1, 2), int(1));
        let o = VertexEdge::new(int(0), int(1), int(-1));
        assert!(triviality(&ising, &o, false).is_some());
        let o2 = VertexEdge::new(int(0), int(1), int(0));
        assert!(triviality(&ising, &o2, false).is_none());
        assert!(triviality(&ising, &o2, true).is_some());
        let hc = TwoSpin::hard_core(int(1));
        assert!(triviality(&hc, &VertexEdge::new(int(0), int(0), int(1)), false).is_some());
        assert!(triviality(&hc, &VertexEdge::new(int(0), int(1), int(0)), false).is_none());
    }
}
