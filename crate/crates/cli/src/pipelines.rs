use std::path::PathBuf;

use num::{BigUint, One, Signed, Zero};
use spinobs::criticality::{
    critical_activities, hard_core_critical_activity, potts_critical_beta, potts_port_bias, twospin_branch_marginals,
    twospin_uniqueness, Region,
};
use spinobs::exact::{enumeration_size, Budget, Method, Query};
use spinobs::gadgets::{
    build_gadget, build_library, build_path, parse_recipe, search_gadget_pair, Gadget, Library, LibraryConfig,
    PoolConfig, Rules,
};
use spinobs::graph::{parse_graph, Multigraph, Subgraph};
use spinobs::interpolation::{
    executable, grid_for_error, grid_point, integrate_log_partition, GridMode, OracleHandle, OracleKind,
    PartitionCurve,
};
use spinobs::model::{observable_value, Model, Observable, Pin, Potts, TwoSpin, VertexEdge};
use spinobs::phase::{assess_phase_gadget, phase_law, sample_phase_gadget, AssessMode, PhaseGadget};
use spinobs::rational::{ln, parse_rational, to_f64, Rational};
use spinobs::reduction::{idealized_phase_marginal_check, plan_reduction, Branch, PlanConfig};
use spinobs::sampler::{batch_means, chain_samples, McConfig};
use spinobs::Error;

use crate::config::ExperimentConfig;
use crate::report::{f, q, Outcome, Table};
use crate::{read_input, Result};

const MODEL_KEYS: &[&str] = &["model", "q", "beta", "gamma", "lambda"];
const POOL_KEYS: &[&str] = &["max_vertices", "per_size", "max_children"];

/// Command-specific keys.
pub(crate) fn keys(command: &str) -> Vec<&'static str> {
    let own: &[&str] = match command {
        "exact" => &["graph", "observable", "pins", "method"],
        "critical" => &["delta"],
        "gadget" => &[
            "action", "observable", "recipe", "expr", "graph_out", "r", "gap", "radius", "mesh", "target", "levels",
            "window_lo", "window_hi",
        ],
        "phase" => &[
            "action", "n", "t", "delta", "out", "attempts", "graph", "mode", "samples", "burn_in", "chains",
        ],
        "reduce" => &[
            "graph", "target", "base", "observable", "eta", "path_tol", "pair_r", "pair_gap", "delta", "max_ell",
            "plan_out", "check",
        ],
        "interpolate" => &["graph", "target", "grid", "eps", "grid_mode", "oracle", "max_grid"],
        "sample" => &["graph", "observable", "steps", "burn_in", "thinning", "exact"],
        _ => &[],
    };
    let mut out: Vec<&str> = own.to_vec();
    out.extend(MODEL_KEYS);
    if matches!(command, "gadget" | "reduce") {
        out.extend(POOL_KEYS);
    }
    out
}

pub(crate) fn run(command: &str, cfg: &ExperimentConfig) -> Result<Outcome> {
    match command {
        "exact" => exact(cfg),
        "critical" => critical(cfg),
        "gadget" => gadget(cfg),
        "phase" => phase(cfg),
        "reduce" => reduce(cfg),
        "interpolate" => interpolate(cfg),
        "sample" => sample(cfg),
        other => Err(cfg.err("command", format!("unknown command '{other}'")).into()),
    }
}

fn budget(cfg: &ExperimentConfig) -> Result<Budget> {
    Ok(Budget {
        max_configs: cfg.num_or("budget", Budget::default().max_configs)?,
    })
}

fn seed(cfg: &ExperimentConfig) -> Result<u64> {
    Ok(cfg.num_or("seed", 1u64)?)
}

fn graph(cfg: &ExperimentConfig) -> Result<Multigraph> {
    let path = cfg.require("graph")?;
    Ok(parse_graph(&read_input(path)?)?)
}

fn reject_unused(cfg: &ExperimentConfig, family: &str, unused: &[&str]) -> Result<()> {
    for k in unused {
        if cfg.str(k).is_some() {
            return Err(cfg.err(k, format!("key '{k}' does not apply to model '{family}'")).into());
        }
    }
    Ok(())
}

/// Builds the model. With `free_activity`, the activity that interpolation
/// varies may be omitted and defaults to 1.
fn model(cfg: &ExperimentConfig, free_activity: bool) -> Result<Model> {
    let family = cfg.choice("model", &["potts", "twospin", "hardcore", "ising"], None)?;
    let activity = |key: &str| -> Result<Rational> {
        match cfg.rational(key)? {
            Some(v) => Ok(v),
            None if free_activity => Ok(Rational::one()),
            None => Ok(cfg.require_rational(key)?),
        }
    };
    let m = match family {
        "potts" => {
            reject_unused(cfg, family, &["gamma", "lambda"])?;
            Model::Potts(Potts::new(cfg.require_num("q")?, activity("beta")?)?)
        }
        "twospin" => {
            reject_unused(cfg, family, &["q"])?;
            Model::TwoSpin(TwoSpin::new(cfg.require_rational("beta")?, cfg.require_rational("gamma")?, activity("lambda")?)?)
        }
        "hardcore" => {
            reject_unused(cfg, family, &["q", "beta", "gamma"])?;
            let t = TwoSpin::hard_core(activity("lambda")?);
            t.validate()?;
            Model::TwoSpin(t)
        }
        _ => {
            reject_unused(cfg, family, &["q", "gamma"])?;
            let t = TwoSpin::ising(cfg.require_rational("beta")?, activity("lambda")?);
            t.validate()?;
            Model::TwoSpin(t)
        }
    };
    Ok(m)
}

/// `susceptibility`, `magnetization`, `vertex-edge:a,b,c` or (when
/// allowed) `partition` for none.
fn observable(cfg: &ExperimentConfig, model: &Model, allow_none: bool) -> Result<Option<Observable>> {
    let bad = |msg: String| -> crate::CliError { cfg.err("observable", format!("key 'observable': {msg}")).into() };
    let raw = match cfg.str("observable") {
        Some(s) => s,
        None => return Ok(Some(default_observable(model))),
    };
    let obs = match raw {
        "partition" if allow_none => return Ok(None),
        "susceptibility" | "monochromatic" => Observable::Monochromatic,
        "magnetization" => Observable::VertexEdge(VertexEdge::magnetization()),
        _ => {
            let coeffs = raw
                .strip_prefix("vertex-edge:")
                .ok_or_else(|| bad(format!("unknown observable '{raw}'")))?;
            let parts: Vec<&str> = coeffs.split(',').collect();
            if parts.len() != 3 {
                return Err(bad("vertex-edge needs three coefficients a,b,c".into()));
            }
            let mut v = Vec::with_capacity(3);
            for p in parts {
                v.push(parse_rational(p.trim()).map_err(|e| bad(format!("malformed coefficient '{p}': {}", e.message)))?);
            }
            let c = v.pop().unwrap();
            let b = v.pop().unwrap();
            let a = v.pop().unwrap();
            Observable::VertexEdge(VertexEdge::new(a, b, c))
        }
    };
    if obs.check_model(model).is_err() {
        return Err(bad(format!("'{raw}' does not match the model family")));
    }
    Ok(Some(obs))
}

fn default_observable(model: &Model) -> Observable {
    match model {
        Model::Potts(_) => Observable::Monochromatic,
        Model::TwoSpin(_) => Observable::VertexEdge(VertexEdge::magnetization()),
    }
}

fn vertex_edge(cfg: &ExperimentConfig, model: &Model) -> Result<Option<VertexEdge>> {
    match observable(cfg, model, false)? {
        Some(Observable::VertexEdge(o)) => Ok(Some(o)),
        _ => Ok(None),
    }
}

/// Comma-separated `v:s` (spin), `u=v` (equal) and `u!v` (distinct).
fn pins(cfg: &ExperimentConfig) -> Result<Vec<Pin>> {
    let Some(raw) = cfg.str("pins") else {
        return Ok(Vec::new());
    };
    let bad = |p: &str| -> crate::CliError {
        cfg.err("pins", format!("key 'pins': malformed pin '{p}'; use v:s, u=v or u!v")).into()
    };
    let mut out = Vec::new();
    for p in raw.split(',').map(str::trim) {
        let num = |s: &str| s.trim().parse::<usize>().map_err(|_| bad(p));
        let pin = if let Some((a, b)) = p.split_once(':') {
            Pin::Spin(num(a)?, num(b)? as u32)
        } else if let Some((a, b)) = p.split_once('=') {
            Pin::Equal(num(a)?, num(b)?)
        } else if let Some((a, b)) = p.split_once('!') {
            Pin::Distinct(num(a)?, num(b)?)
        } else {
            return Err(bad(p));
        };
        out.push(pin);
    }
    Ok(out)
}

fn flag(cfg: &ExperimentConfig, key: &str, default: bool) -> Result<bool> {
    Ok(cfg.choice(key, &["true", "false"], Some(if default { "true" } else { "false" }))? == "true")
}

fn summary_table(out: &Outcome) -> Table {
    let mut t = Table::new(&["quantity", "value"]);
    for (k, v) in &out.summary {
        t.push(vec![k.clone(), v.clone()]);
    }
    t
}

fn exact(cfg: &ExperimentConfig) -> Result<Outcome> {
    let g = graph(cfg)?;
    let model = model(cfg, false)?;
    model.check_graph(&g)?;
    let obs = observable(cfg, &model, true)?;
    let pins = pins(cfg)?;
    let method = match cfg.choice("method", &["auto", "enumerate", "eliminate"], Some("auto"))? {
        "enumerate" => Method::Enumerate,
        "eliminate" => Method::Eliminate,
        _ => Method::Auto,
    };
    let whole = Subgraph::whole(&g);
    let mut query = Query::new(&g, &model).pins(&pins).method(method).budget(budget(cfg)?);
    if let Some(o) = &obs {
        query = query.observable(o, &whole);
    }
    let ws = query.run()?;
    let mut out = Outcome::default();
    out.kv("z", q(&ws.z));
    if ws.z.is_positive() {
        out.kv("ln_z", ln(&ws.z));
    }
    if obs.is_some() {
        let e = ws.expectation()?;
        out.kv("expectation", q(&e));
        out.kv("expectation_real", to_f64(&e));
    }
    let mut t = Table::new(&["quantity", "value", "value_real"]);
    t.push(vec!["z".into(), q(&ws.z), f(to_f64(&ws.z))]);
    if obs.is_some() {
        let e = ws.expectation()?;
        t.push(vec!["expectation".into(), q(&e), f(to_f64(&e))]);
    }
    out.table = Some(t);
    Ok(out)
}

fn region_name(r: Region) -> &'static str {
    match r {
        Region::Uniqueness => "uniqueness",
        Region::NonUniqueness => "non-uniqueness",
        Region::Boundary => "boundary",
    }
}

fn critical(cfg: &ExperimentConfig) -> Result<Outcome> {
    let family = cfg.choice("model", &["potts", "twospin", "hardcore"], None)?;
    let delta: u32 = cfg.require_num("delta")?;
    let mut out = Outcome::default();
    match family {
        "potts" => {
            reject_unused(cfg, family, &["gamma", "lambda"])?;
            let qn: u32 = cfg.require_num("q")?;
            out.kv("beta_c", potts_critical_beta(qn, delta)?);
            if let Some(beta) = cfg.rational("beta")? {
                let b = potts_port_bias(qn, delta, &beta)?;
                out.kv("port_root", b.x);
                out.kv("port_bias", b.p);
                if let (Some(x), Some(p)) = (&b.exact_x, &b.exact_p) {
                    out.kv("port_root_exact", q(x));
                    out.kv("port_bias_exact", q(p));
                }
            }
        }
        "twospin" => {
            reject_unused(cfg, family, &["q"])?;
            let beta = to_f64(&cfg.require_rational("beta")?);
            let gamma = to_f64(&cfg.require_rational("gamma")?);
            let lambda = to_f64(&cfg.require_rational("lambda")?);
            let u = twospin_uniqueness(beta, gamma, lambda, delta)?;
            out.kv("fixpoint", u.fixpoint);
            out.kv("derivative", u.derivative);
            out.kv("region", region_name(u.region));
            let crit = critical_activities(beta, gamma, delta)?;
            out.kv("critical_activities", crit.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(";"));
            if u.in_nonuniqueness() {
                let c = twospin_branch_marginals(beta, gamma, lambda, delta)?;
                out.kv("branch_x", c.x);
                out.kv("branch_y", c.y);
                out.kv("q_plus", c.q_plus);
                out.kv("q_minus", c.q_minus);
                out.kv("residual", c.residual);
            }
        }
        _ => {
            reject_unused(cfg, family, &["q", "beta", "gamma"])?;
            out.kv("lambda_c", hard_core_critical_activity(delta));
            if let Some(l) = cfg.rational("lambda")? {
                let u = twospin_uniqueness(1.0, 0.0, to_f64(&l), delta)?;
                out.kv("fixpoint", u.fixpoint);
                out.kv("derivative", u.derivative);
                out.kv("region", region_name(u.region));
            }
        }
    }
    out.table = Some(summary_table(&out));
    Ok(out)
}

fn rules(cfg: &ExperimentConfig, model: &Model) -> Result<Rules> {
    Ok(match model {
        Model::Potts(p) => Rules::potts(p)?,
        Model::TwoSpin(t) => Rules::twospin(t, &vertex_edge(cfg, model)?.expect("2-spin observable"))?,
    })
}

fn pool(cfg: &ExperimentConfig, default: PoolConfig) -> Result<PoolConfig> {
    Ok(PoolConfig {
        max_vertices: cfg.num_or("max_vertices", default.max_vertices)?,
        per_size: cfg.num_or("per_size", default.per_size)?,
        max_children: cfg.num_or("max_children", default.max_children)?,
    })
}

const GADGET_HEADER: &[&str] = &[
    "name", "recipe", "kind", "vertices", "edges", "value", "gap", "baseline", "value_real", "gap_real",
];

fn gadget_row(name: &str, g: &Gadget) -> Vec<String> {
    vec![
        name.to_string(),
        g.recipe.to_string(),
        g.kind.name().to_string(),
        g.graph.n().to_string(),
        g.graph.m().to_string(),
        q(&g.stats.value),
        q(&g.stats.gap),
        q(&g.stats.baseline),
        f(to_f64(&g.stats.value)),
        f(to_f64(&g.stats.gap)),
    ]
}

fn describe_gadget(out: &mut Outcome, prefix: &str, g: &Gadget) {
    out.kv(&format!("{prefix}recipe"), &g.recipe);
    out.kv(&format!("{prefix}vertices"), g.graph.n());
    out.kv(&format!("{prefix}value"), q(&g.stats.value));
    out.kv(&format!("{prefix}gap"), q(&g.stats.gap));
    out.kv(&format!("{prefix}baseline"), q(&g.stats.baseline));
    out.kv(&format!("{prefix}value_real"), to_f64(&g.stats.value));
}

fn single_gadget(cfg: &ExperimentConfig, g: &Gadget) -> Outcome {
    let mut out = Outcome::default();
    out.kv("kind", g.kind.name());
    describe_gadget(&mut out, "", g);
    let mut t = Table::new(GADGET_HEADER);
    t.push(gadget_row("gadget", g));
    out.table = Some(t);
    if let Some(path) = cfg.str("graph_out") {
        let ports: Vec<String> = g.ports.iter().map(|p| p.to_string()).collect();
        let text = format!("# ports {}\n{}", ports.join(" "), g.graph.to_text());
        out.files.push((PathBuf::from(path), text.into_bytes()));
    }
    out
}

fn library(cfg: &ExperimentConfig, rules: &Rules) -> Result<Library> {
    let lc = LibraryConfig {
        pool: pool(cfg, PoolConfig::default())?,
        budget: budget(cfg)?,
    };
    Ok(build_library(rules, &cfg.require_rational("radius")?, &cfg.require_rational("mesh")?, &lc)?)
}

fn gadget(cfg: &ExperimentConfig) -> Result<Outcome> {
    let action = cfg.choice("action", &["stats", "build-path", "library", "build", "pair"], None)?;
    let model = model(cfg, false)?;
    let rules = rules(cfg, &model)?;
    match action {
        "stats" => {
            let text = match (cfg.str("recipe"), cfg.str("expr")) {
                (Some(path), None) => read_input(path)?,
                (None, Some(e)) => e.to_string(),
                _ => return Err(cfg.err("recipe", "gadget stats needs exactly one of 'recipe' or 'expr'").into()),
            };
            let recipe = parse_recipe(&text)?;
            let g = Gadget::from_recipe(recipe, &rules, budget(cfg)?)?;
            Ok(single_gadget(cfg, &g))
        }
        "build-path" => {
            let Model::Potts(p) = &model else {
                return Err(cfg.err("model", "build-path needs a Potts model").into());
            };
            let g = build_path(&cfg.require_rational("r")?, p, budget(cfg)?)?;
            Ok(single_gadget(cfg, &g))
        }
        "library" => {
            let lib = library(cfg, &rules)?;
            let mut out = Outcome::default();
            out.kv("center", q(&lib.center));
            out.kv("lo", q(&lib.lo));
            out.kv("hi", q(&lib.hi));
            out.kv("members", lib.members.len());
            out.kv("mesh_distance", q(&lib.certificate.max_distance));
            out.kv("mesh_bound", q(&lib.certificate.bound));
            out.kv("mesh_ok", lib.certificate.ok);
            let mut t = Table::new(GADGET_HEADER);
            for (i, m) in lib.members.iter().enumerate() {
                t.push(gadget_row(&format!("member{i}"), m));
            }
            out.table = Some(t);
            Ok(out)
        }
        "build" => {
            let lib = library(cfg, &rules)?;
            let levels: usize = cfg.require_num("levels")?;
            let rep = build_gadget(&cfg.require_rational("target")?, levels, &lib)?;
            let mut out = Outcome::default();
            out.kv("recipe", &rep.recipe);
            out.kv("value", q(&rep.value));
            out.kv("gap", q(&rep.gap));
            out.kv("error", q(&rep.error));
            out.kv("error_real", to_f64(&rep.error));
            out.kv("envelope", rep.envelope(levels));
            out.kv("ratio", q(&rep.ratio));
            out.kv("scale", q(&rep.scale));
            let mut t = Table::new(&["level", "member", "member_recipe", "member_value"]);
            for (lvl, &i) in rep.choices.iter().enumerate() {
                let m = &lib.members[i];
                t.push(vec![lvl.to_string(), i.to_string(), m.recipe.to_string(), q(&m.stats.value)]);
            }
            out.table = Some(t);
            Ok(out)
        }
        _ => {
            let window = match (cfg.rational("window_lo")?, cfg.rational("window_hi")?) {
                (Some(lo), Some(hi)) => Some((lo, hi)),
                (None, None) => None,
                _ => return Err(cfg.err("window_lo", "set both 'window_lo' and 'window_hi' or neither").into()),
            };
            let gap = cfg.rational("gap")?.unwrap_or_else(|| Rational::new(1.into(), 1000.into()));
            let lc = LibraryConfig {
                pool: pool(cfg, PoolConfig::default())?,
                budget: budget(cfg)?,
            };
            let rep = search_gadget_pair(&rules, &cfg.require_rational("r")?, &gap, window, &lc)?;
            let mut out = Outcome::default();
            describe_gadget(&mut out, "first_", &rep.first);
            describe_gadget(&mut out, "second_", &rep.second);
            out.kv("value_diff", q(&rep.value_diff));
            out.kv("gap_diff", q(&rep.gap_diff));
            out.kv("gap_ceiling", q(&rep.gap_ceiling));
            let mut t = Table::new(GADGET_HEADER);
            t.push(gadget_row("first", &rep.first));
            t.push(gadget_row("second", &rep.second));
            out.table = Some(t);
            Ok(out)
        }
    }
}

/// Reads `# phase-gadget n=.. t=.. delta=..` from a graph file header.
fn phase_header(text: &str) -> Option<(usize, usize, usize)> {
    let line = text.lines().next()?.strip_prefix("# phase-gadget ")?;
    let mut vals = [None; 3];
    for part in line.split_whitespace() {
        let (k, v) = part.split_once('=')?;
        let idx = ["n", "t", "delta"].iter().position(|x| *x == k)?;
        vals[idx] = Some(v.parse().ok()?);
    }
    Some((vals[0]?, vals[1]?, vals[2]?))
}

fn phase(cfg: &ExperimentConfig) -> Result<Outcome> {
    let action = cfg.choice("action", &["sample", "assess"], None)?;
    let mut out = Outcome::default();
    if action == "sample" {
        let (n, t, delta): (usize, usize, usize) =
            (cfg.require_num("n")?, cfg.require_num("t")?, cfg.require_num("delta")?);
        let path = cfg.require("out")?;
        let g = sample_phase_gadget(n, t, delta, seed(cfg)?, cfg.num_or("attempts", 1_000_000)?)?;
        out.kv("vertices", g.graph.n());
        out.kv("edges", g.graph.m());
        out.kv("ports", g.ports().len());
        out.kv("out", path);
        let mut table = Table::new(&["vertex", "side", "role", "degree"]);
        for side in 0..2 {
            for v in g.interior(side) {
                table.push(vec![v.to_string(), side.to_string(), "interior".into(), g.graph.degree(v).to_string()]);
            }
            for v in g.side_ports(side) {
                table.push(vec![v.to_string(), side.to_string(), "port".into(), g.graph.degree(v).to_string()]);
            }
        }
        out.table = Some(table);
        let text = format!("# phase-gadget n={n} t={t} delta={delta}\n{}", g.graph.to_text());
        out.files.push((PathBuf::from(path), text.into_bytes()));
        return Ok(out);
    }
    let path = cfg.require("graph")?;
    let text = read_input(path)?;
    let header = phase_header(&text);
    let dim = |key: &str, idx: usize| -> Result<usize> {
        match (cfg.parse_num::<usize>(key)?, header) {
            (Some(v), _) => Ok(v),
            (None, Some(h)) => Ok([h.0, h.1, h.2][idx]),
            (None, None) => Err(cfg
                .err(key, format!("key '{key}' is required when the graph file has no phase-gadget header"))
                .into()),
        }
    };
    let (n, t, delta) = (dim("n", 0)?, dim("t", 1)?, dim("delta", 2)?);
    let g = PhaseGadget::from_graph(parse_graph(&text)?, n, t, delta)?;
    let model = model(cfg, false)?;
    let law = phase_law(&model, delta as u32)?;
    let mode = match cfg.choice("mode", &["exact", "mc"], Some("exact"))? {
        "mc" => AssessMode::Mc {
            samples: cfg.num_or("samples", 10_000)?,
            burn_in: cfg.num_or("burn_in", 1_000)?,
            seed: seed(cfg)?,
            chains: cfg.num_or("chains", 1)?,
        },
        _ => AssessMode::Exact(budget(cfg)?),
    };
    let a = assess_phase_gadget(&g, &model, &law, mode)?;
    out.kv("phases", law.phases());
    out.kv("balance", a.balance);
    out.kv("port", a.port);
    if let Some(se) = a.balance_se {
        out.kv("balance_se", se);
    }
    if let Some(se) = a.port_se {
        out.kv("port_se", se);
    }
    if let Some(x) = &a.exact_balance {
        out.kv("balance_exact", q(x));
    }
    if let Some(x) = &a.exact_port {
        out.kv("port_exact", q(x));
    }
    let mut table = Table::new(&["phase", "phase_prob", "port_config", "port_prob"]);
    for (i, probs) in a.port_probs.iter().enumerate() {
        for (tau, p) in probs.iter().enumerate() {
            table.push(vec![i.to_string(), f(a.phase_probs[i]), tau.to_string(), f(*p)]);
        }
    }
    out.table = Some(table);
    Ok(out)
}

fn reduce(cfg: &ExperimentConfig) -> Result<Outcome> {
    let h = graph(cfg)?;
    let model = model(cfg, false)?;
    let obs = match &model {
        Model::TwoSpin(_) => vertex_edge(cfg, &model)?,
        Model::Potts(_) => None,
    };
    let d = PlanConfig::default();
    let pc = PlanConfig {
        eta: cfg.rational("eta")?.unwrap_or(d.eta),
        path_tol: cfg.rational("path_tol")?.unwrap_or(d.path_tol),
        pair_r: cfg.rational("pair_r")?.unwrap_or(d.pair_r),
        pair_gap: cfg.rational("pair_gap")?.unwrap_or(d.pair_gap),
        delta: cfg.num_or("delta", d.delta)?,
        pool: pool(cfg, d.pool)?,
        budget: budget(cfg)?,
        max_ell: cfg.num_or("max_ell", d.max_ell)?,
    };
    let target = cfg.require_rational("target")?;
    let plan = plan_reduction(&model, obs.as_ref(), &h, &target, &pc)?;
    let mut out = Outcome::default();
    out.kv("target", q(&plan.target));
    out.kv("ell", plan.ell);
    out.kv("t", plan.t);
    out.kv("r", q(&plan.r));
    out.kv("eps", q(&plan.eps));
    if let Some(b) = plan.branch {
        out.kv("branch", if b == Branch::Raise { "raise" } else { "lower" });
    }
    out.kv("common", q(&plan.common));
    out.kv("crossing", q(&plan.crossing.0));
    if let Some(c) = &plan.crossing.1 {
        out.kv("crossing_previous", q(c));
    }
    for (i, e) in plan.effective.iter().enumerate() {
        out.kv(&format!("effective_{i}"), q(e.target()));
        out.kv(&format!("effective_{i}_real"), to_f64(e.target()));
    }
    out.kv("paper_eps", plan.paper.eps);
    out.kv("paper_t", plan.paper.t);
    out.kv("paper_r", plan.paper.r);
    out.kv("fast_mixing", plan.fast_mixing);
    if flag(cfg, "check", true)? && h.n() <= 8 {
        for i in 0..2 {
            let rep = idealized_phase_marginal_check(&h, &plan.spec(i), None, budget(cfg)?)?;
            out.kv(&format!("idealized_deviation_{i}"), q(&rep.max_deviation));
        }
    }
    let mut t = Table::new(&["role", "recipe", "vertices", "value", "gap", "effective", "effective_real"]);
    for (i, g) in plan.probes.iter().enumerate() {
        let e = plan.effective[i].target();
        t.push(vec![
            format!("probe{i}"),
            g.recipe.to_string(),
            g.graph.n().to_string(),
            q(&g.stats.value),
            q(&g.stats.gap),
            q(e),
            f(to_f64(e)),
        ]);
    }
    for (i, g) in plan.tuning.iter().enumerate() {
        t.push(vec![
            format!("tuning{i}"),
            g.recipe.to_string(),
            g.graph.n().to_string(),
            q(&g.stats.value),
            q(&g.stats.gap),
            String::new(),
            String::new(),
        ]);
    }
    out.table = Some(t);
    if let Some(path) = cfg.str("plan_out") {
        out.files.push((PathBuf::from(path), plan.to_text().into_bytes()));
    }
    Ok(out)
}

/// `exact`, `float`, `mc[:k=v,...]` or `noise:rel=x`.
fn oracle(cfg: &ExperimentConfig) -> Result<OracleKind> {
    let raw = cfg.str("oracle").unwrap_or("exact");
    let bad = |msg: String| -> crate::CliError { cfg.err("oracle", format!("key 'oracle': {msg}")).into() };
    let (name, args) = raw.split_once(':').unwrap_or((raw, ""));
    let mut kv = Vec::new();
    for part in args.split(',').filter(|p| !p.trim().is_empty()) {
        let (k, v) = part.split_once('=').ok_or_else(|| bad(format!("expected name=value, found '{part}'")))?;
        kv.push((k.trim(), v.trim()));
    }
    let get = |key: &str| kv.iter().find(|(k, _)| *k == key).map(|(_, v)| *v);
    let num = |key: &str, default: f64| -> Result<f64> {
        match get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| bad(format!("'{key}' must be a number, found '{v}'"))),
        }
    };
    let allow = |names: &[&str]| -> Result<()> {
        match kv.iter().find(|(k, _)| !names.contains(k)) {
            Some((k, _)) => Err(bad(format!("unknown oracle setting '{k}'"))),
            None => Ok(()),
        }
    };
    let seed = seed(cfg)?;
    match name {
        "exact" | "float" => {
            allow(&[])?;
            Ok(if name == "exact" { OracleKind::Exact } else { OracleKind::ExactFloat })
        }
        "mc" => {
            allow(&["samples", "burn_in", "thinning", "chains", "z"])?;
            let d = McConfig::default();
            let config = McConfig {
                samples: num("samples", d.samples as f64)? as u64,
                burn_in: num("burn_in", d.burn_in as f64)? as u64,
                thinning: num("thinning", d.thinning as f64)? as u64,
                chains: num("chains", d.chains as f64)? as u64,
                seed,
            };
            Ok(OracleKind::Mc {
                config,
                z: num("z", 3.0)?,
            })
        }
        "noise" => {
            allow(&["rel"])?;
            Ok(OracleKind::Noise {
                rel: num("rel", 0.0)?,
                seed,
            })
        }
        other => Err(bad(format!("unknown oracle '{other}'; use exact, float, mc or noise"))),
    }
}

fn interpolate(cfg: &ExperimentConfig) -> Result<Outcome> {
    let g = graph(cfg)?;
    let model = model(cfg, true)?;
    model.check_graph(&g)?;
    let target = cfg.require_rational("target")?;
    let budget = budget(cfg)?;
    let mut out = Outcome::default();
    let m: BigUint = match (cfg.parse_num::<u64>("grid")?, cfg.rational("eps")?) {
        (Some(m), None) => BigUint::from(m),
        (None, Some(eps)) => {
            let tight = grid_for_error(&model, &g, &target, &eps, GridMode::Tight)?;
            let paper = grid_for_error(&model, &g, &target, &eps, GridMode::Paper)?;
            out.kv("grid_tight", &tight);
            out.kv("grid_paper", &paper);
            match cfg.choice("grid_mode", &["tight", "paper"], Some("tight"))? {
                "paper" => paper,
                _ => tight,
            }
        }
        _ => return Err(cfg.err("grid", "set exactly one of 'grid' or 'eps'").into()),
    };
    if cfg.str("grid_mode").is_some() && cfg.str("eps").is_none() {
        return Err(cfg.err("grid_mode", "key 'grid_mode' needs 'eps'").into());
    }
    let max_grid: u64 = cfg.num_or("max_grid", 1_000_000)?;
    if m > BigUint::from(max_grid) {
        return Err(crate::CliError::Budget(format!("grid needs {m} points, 'max_grid' allows {max_grid}")));
    }
    let m = executable(&m)?;
    let kind = oracle(cfg)?;
    let mut handle = OracleHandle::new(kind, budget)?;
    let res = integrate_log_partition(&model, &g, &mut handle, &target, m)?;
    out.kv("grid", m);
    out.kv("oracle", cfg.str("oracle").unwrap_or("exact"));
    out.kv("calls", res.calls);
    out.kv("base", res.base);
    out.kv("lower", res.bracket.lower);
    out.kv("upper", res.bracket.upper);
    out.kv("width", res.bracket.width);
    out.kv("estimate", res.estimate);
    out.kv("non_monotone", res.non_monotone.len());
    match PartitionCurve::new(&model, &g, budget) {
        Ok(curve) => {
            let exact = curve.ln_z(&target);
            out.kv("ln_z_exact", exact);
            out.kv("contains", res.bracket.contains(exact));
        }
        Err(Error::Budget { .. }) => {}
        Err(e) => return Err(e.into()),
    }
    let mut t = Table::new(&[
        "i",
        "x",
        "x_real",
        "reading",
        "reading_lower",
        "reading_upper",
        "lower_partial",
        "upper_partial",
    ]);
    for p in &res.points {
        t.push(vec![
            p.i.to_string(),
            q(&grid_point(&target, m, p.i)),
            f(p.x),
            match &p.reading.exact {
                Some(x) => q(x),
                None => f(p.reading.value),
            },
            f(p.reading.lower),
            f(p.reading.upper),
            f(p.lower_partial),
            f(p.upper_partial),
        ]);
    }
    out.table = Some(t);
    Ok(out)
}

fn sample(cfg: &ExperimentConfig) -> Result<Outcome> {
    let g = graph(cfg)?;
    let model = model(cfg, false)?;
    model.check_graph(&g)?;
    let obs = observable(cfg, &model, false)?.expect("observable required");
    let steps: u64 = cfg.require_num("steps")?;
    let thin: u64 = cfg.num_or("thinning", g.n().max(1) as u64)?;
    if thin == 0 || steps < thin {
        return Err(cfg.err("steps", "key 'steps' must be at least the thinning interval (one sweep by default)").into());
    }
    let burn_in = cfg.num_or("burn_in", 1_000u64)?;
    let mc = McConfig {
        samples: steps / thin,
        burn_in,
        thinning: thin,
        seed: seed(cfg)?,
        chains: 1,
    };
    let whole = Subgraph::whole(&g);
    let xs = chain_samples(&g, &model, &mc, 0, |s| to_f64(&observable_value(&g, &obs, &whole, s)))?;
    let (mean, se) = batch_means(&xs);
    let mut out = Outcome::default();
    out.kv("samples", mc.samples);
    out.kv("burn_in", burn_in);
    out.kv("thinning", thin);
    out.kv("seed", mc.seed);
    out.kv("mean", mean);
    if let Some(se) = se {
        out.kv("std_error", se);
    }
    let budget = budget(cfg)?;
    let want = match cfg.choice("exact", &["auto", "true", "false"], Some("auto"))? {
        "true" => true,
        "false" => false,
        _ => enumeration_size(&g, &model).map(|n| n <= budget.max_configs).unwrap_or(false),
    };
    if want {
        let e = spinobs::exact::observable_expectation(&g, &model, &obs, None, &[], budget)?;
        let ef = to_f64(&e);
        out.kv("exact", q(&e));
        out.kv("exact_real", ef);
        if let Some(se) = se.filter(|s| *s > 0.0) {
            out.kv("z_score", (mean - ef) / se);
        } else if (mean - ef).is_zero() {
            out.kv("z_score", 0.0);
        }
    }
    let mut t = Table::new(&["sample", "step", "value"]);
    for (k, x) in xs.iter().enumerate() {
        t.push(vec![k.to_string(), (burn_in + (k as u64 + 1) * thin).to_string(), f(*x)]);
    }
    out.table = Some(t);
    Ok(out)
}
