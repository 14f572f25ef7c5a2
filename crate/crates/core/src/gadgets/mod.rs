//! Edge gadgets (two ports, Potts) and field gadgets (one root, 2-spin):
//! exact characteristics, composition with recursion cross-checks, odd
//! paths, dense libraries and targeted construction.

mod library;
mod recipe;
mod rules;

pub use library::{
    build_gadget, build_library, recursion_constants, search_gadget_pair, search_pool, BuildReport, Candidate,
    Library, LibraryConfig, MeshCertificate, PairReport, PoolConfig, RecursionConstants,
};
pub use recipe::{parse_recipe, Recipe};
pub use rules::{potts_constants, AffineInverse, Kind, PottsConstants, Rules};

use std::sync::Arc;

use num::{One, Zero};

use crate::error::{Error, Result};
use crate::exact::{Budget, Query};
use crate::graph::{Multigraph, Subgraph};
use crate::model::{Model, Observable, Pin, Potts, TwoSpin, VertexEdge};
use crate::rational::Rational;

/// Exact characteristics of a gadget.
///
/// For edge gadgets `value` is the effective interaction B, `gap` the
/// same-minus-different observable gap S and `baseline` the expected number of
/// monochromatic edges given equal ports. For field gadgets `value` is the
/// effective field R, `gap` the observable gap O and `baseline` the expected
/// observable given root spin 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Stats {
    pub value: Rational,
    pub gap: Rational,
    pub baseline: Rational,
}

/// A materialised gadget with exactly computed characteristics.
#[derive(Debug, Clone)]
pub struct Gadget {
    pub kind: Kind,
    pub recipe: Arc<Recipe>,
    pub graph: Multigraph,
    /// Two ports for edge gadgets, the root for field gadgets.
    pub ports: Vec<usize>,
    pub stats: Stats,
}

fn lambda_is_special(t: &TwoSpin) -> bool {
    t.gamma != Rational::one() && t.lambda == (Rational::one() - &t.beta) / (Rational::one() - &t.gamma)
}

/// Exact (B, S, A) of an edge gadget with ports `(rho, rho2)`.
pub fn edge_gadget_stats(g: &Multigraph, ports: (usize, usize), p: &Potts, budget: Budget) -> Result<Stats> {
    let (rho, rho2) = ports;
    if rho == rho2 || rho >= g.n() || rho2 >= g.n() {
        return Err(Error::invalid("edge gadget needs two distinct ports"));
    }
    let degenerate = g.n() == 2 && g.m() == 0;
    if !degenerate {
        if g.degree(rho) != 1 || g.degree(rho2) != 1 {
            return Err(Error::invalid("edge gadget ports must have degree one"));
        }
        if !g.is_connected() {
            return Err(Error::invalid("edge gadget must be connected"));
        }
        if !g.is_series_parallel() {
            return Err(Error::invalid("edge gadget must be series-parallel"));
        }
    }
    let model = Model::Potts(p.clone());
    let whole = Subgraph::whole(g);
    let obs = Observable::Monochromatic;
    let same = Query::new(g, &model)
        .observable(&obs, &whole)
        .pins(&[Pin::Spin(rho, 0), Pin::Spin(rho2, 0)])
        .budget(budget)
        .run()?;
    let diff = Query::new(g, &model)
        .observable(&obs, &whole)
        .pins(&[Pin::Spin(rho, 0), Pin::Spin(rho2, 1)])
        .budget(budget)
        .run()?;
    let a = same.expectation()?;
    let s = &a - diff.expectation()?;
    Ok(Stats {
        value: &same.z / &diff.z,
        gap: s,
        baseline: a,
    })
}

/// Exact (R, O, A) of a field gadget rooted at `root`.
pub fn field_gadget_stats(
    g: &Multigraph,
    root: usize,
    t: &TwoSpin,
    obs: &VertexEdge,
    budget: Budget,
) -> Result<Stats> {
    if root >= g.n() {
        return Err(Error::invalid("root out of range"));
    }
    if g.n() > 1 {
        if !g.is_connected() {
            return Err(Error::invalid("field gadget must be connected"));
        }
        let tree = g.m() + 1 == g.n();
        if tree {
            if g.degree(root) != 1 {
                return Err(Error::invalid("field gadget root must have degree one"));
            }
        } else if !(lambda_is_special(t) && g.is_series_parallel() && g.degree(root) <= 2) {
            return Err(Error::invalid(
                "field gadget must be a tree unless lambda = (1-beta)/(1-gamma) permits attached 4-cycles",
            ));
        }
    }
    let model = Model::TwoSpin(t.clone());
    let whole = Subgraph::whole(g);
    let o = Observable::VertexEdge(obs.clone());
    let one = Query::new(g, &model)
        .observable(&o, &whole)
        .pins(&[Pin::Spin(root, 1)])
        .budget(budget)
        .run()?;
    let zero = Query::new(g, &model)
        .observable(&o, &whole)
        .pins(&[Pin::Spin(root, 0)])
        .budget(budget)
        .run()?;
    let lam = g.vertex_activity(root).cloned().unwrap_or_else(|| t.lambda.clone());
    let base = zero.expectation()?;
    Ok(Stats {
        value: &one.z / (&zero.z * lam),
        gap: one.expectation()? - &obs.a - &base,
        baseline: base,
    })
}

/// Exact characteristics under `rules` of a materialised gadget.
pub fn measure(kind: Kind, g: &Multigraph, ports: &[usize], rules: &Rules, budget: Budget) -> Result<Stats> {
    if kind != rules.kind {
        return Err(Error::invalid("gadget kind does not match the rules"));
    }
    match kind {
        Kind::Edge => {
            let p = rules.potts.as_ref().expect("edge rules carry a Potts model");
            if ports.len() != 2 {
                return Err(Error::invalid("edge gadget needs two ports"));
            }
            edge_gadget_stats(g, (ports[0], ports[1]), p, budget)
        }
        Kind::Field => {
            let (t, o) = rules.twospin.as_ref().expect("field rules carry a 2-spin model");
            if ports.len() != 1 {
                return Err(Error::invalid("field gadget needs one root"));
            }
            field_gadget_stats(g, ports[0], t, o, budget)
        }
    }
}

/// Value and gap of a recipe from the composition rules alone.
pub fn predict(recipe: &Recipe, rules: &Rules) -> Result<(Rational, Rational)> {
    recipe.check(rules.kind)?;
    predict_unchecked(recipe, rules)
}

fn predict_unchecked(recipe: &Recipe, rules: &Rules) -> Result<(Rational, Rational)> {
    match recipe {
        Recipe::Degenerate => Ok((Rational::one(), Rational::zero())),
        Recipe::Edge => Ok((rules.potts.as_ref().unwrap().beta.clone(), Rational::one())),
        Recipe::Path(k) => {
            let mut cur = predict_unchecked(&Recipe::Edge, rules)?;
            for _ in 0..(k - 1) / 2 {
                cur = rules.compose(&[cur]);
            }
            Ok(cur)
        }
        Recipe::Cycle4 => {
            let (t, _) = rules.twospin.as_ref().unwrap();
            if !lambda_is_special(t) {
                return Err(Error::invalid("cycle4 needs lambda = (1-beta)/(1-gamma)"));
            }
            let (g, ports) = recipe.materialize(Kind::Field)?;
            let s = measure(Kind::Field, &g, &ports, rules, Budget::default())?;
            Ok((s.value, s.gap))
        }
        Recipe::ComposeE(cs) | Recipe::ComposeF(cs) => {
            let kids = cs
                .iter()
                .map(|c| predict_unchecked(c, rules))
                .collect::<Result<Vec<_>>>()?;
            Ok(rules.compose(&kids))
        }
    }
}

impl Gadget {
    /// Materialises a recipe, computes its characteristics exactly and checks
    /// them against the composition rules.
    pub fn from_recipe(recipe: Arc<Recipe>, rules: &Rules, budget: Budget) -> Result<Gadget> {
        let (value, gap) = predict(&recipe, rules)?;
        let (graph, ports) = recipe.materialize(rules.kind)?;
        let stats = measure(rules.kind, &graph, &ports, rules, budget)?;
        if stats.value != value || stats.gap != gap {
            return Err(Error::numerical(format!(
                "recursion disagrees with exact evaluation for '{recipe}': predicted ({value}, {gap}), exact ({}, {})",
                stats.value, stats.gap
            )));
        }
        Ok(Gadget {
            kind: rules.kind,
            recipe,
            graph,
            ports,
            stats,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.graph.n()
    }
}

/// Composes children in parallel (edge) or at a common vertex (field).
pub fn compose(children: &[Gadget], rules: &Rules, budget: Budget) -> Result<Gadget> {
    if children.is_empty() {
        return Err(Error::invalid("composition needs at least one child"));
    }
    if children.iter().any(|c| c.kind != rules.kind) {
        return Err(Error::invalid("children must match the rules' gadget kind"));
    }
    let recipes: Vec<Arc<Recipe>> = children.iter().map(|c| c.recipe.clone()).collect();
    let recipe = Arc::new(match rules.kind {
        Kind::Edge => Recipe::ComposeE(recipes),
        Kind::Field => Recipe::ComposeF(recipes),
    });
    let (graph, ports) = recipe.materialize(rules.kind)?;
    let stats = measure(rules.kind, &graph, &ports, rules, budget)?;
    let kids: Vec<(Rational, Rational)> = children.iter().map(|c| (c.stats.value.clone(), c.stats.gap.clone())).collect();
    let (value, gap) = rules.compose(&kids);
    if stats.value != value || stats.gap != gap {
        return Err(Error::numerical(format!(
            "composition disagrees with exact evaluation: predicted ({value}, {gap}), exact ({}, {})",
            stats.value, stats.gap
        )));
    }
    Ok(Gadget {
        kind: rules.kind,
        recipe,
        graph,
        ports,
        stats,
    })
}

/// Interaction of the odd path with `2l + 1` edges, for l = 0, 1, ...
pub fn path_values(rules: &Rules, count: usize) -> Vec<Rational> {
    let mut out = Vec::with_capacity(count);
    let mut cur = (rules.potts.as_ref().unwrap().beta.clone(), Rational::one());
    for _ in 0..count {
        out.push(cur.0.clone());
        cur = rules.compose(&[cur]);
    }
    out
}

/// Exact contraction ratio (B_l - 1)/(B_{l-1} - 1) given B_{l-1}.
pub fn path_step_ratio(c: &PottsConstants, prev: &Rational) -> Rational {
    &c.lambda_hat * (&c.gamma_hat - Rational::one()) / (&c.beta_hat + &c.lambda_hat * prev)
}

/// Number of edges guaranteed sufficient by the geometric decay bound.
pub fn path_length_bound(r: &Rational, p: &Potts) -> Result<usize> {
    let c = potts_constants(p)?;
    let excess = crate::rational::to_f64(&(&p.beta - Rational::one()));
    let l = ((crate::rational::to_f64(r) / excess).ln() / crate::rational::to_f64(&c.kappa).ln())
        .ceil()
        .max(0.0) as usize;
    Ok(2 * l + 1)
}

/// Shortest odd path whose interaction B satisfies 0 < B - 1 < r.
pub fn build_path(r: &Rational, p: &Potts, budget: Budget) -> Result<Gadget> {
    if !(r > &Rational::zero() && r < &crate::rational::ratio(1, 2)) {
        return Err(Error::invalid("path tolerance must lie in (0, 1/2)"));
    }
    let rules = Rules::potts(p)?;
    let bound = path_length_bound(r, p)?;
    let mut cur = (p.beta.clone(), Rational::one());
    let mut k = 1;
    while &cur.0 - Rational::one() >= *r {
        if k > bound {
            return Err(Error::numerical("path decay bound violated"));
        }
        cur = rules.compose(&[cur]);
        k += 2;
    }
    Gadget::from_recipe(Arc::new(Recipe::Path(k)), &rules, budget)
}
