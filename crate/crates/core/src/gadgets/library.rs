use std::collections::HashSet;
use std::sync::Arc;

use num::{One, Signed, Zero};

use crate::error::{Error, Result};
use crate::exact::Budget;
use crate::gadgets::recipe::Recipe;
use crate::gadgets::rules::{Kind, Rules};
use crate::gadgets::Gadget;
use crate::rational::{from_f64, max, min, to_f64, Rational};

/// A gadget known only through its recipe and predicted characteristics.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub recipe: Arc<Recipe>,
    pub value: Rational,
    pub gap: Rational,
    pub size: usize,
}

/// Limits for the enumeration of compositions.
#[derive(Debug, Clone, Copy)]
pub struct PoolConfig {
    pub max_vertices: usize,
    /// Distinct values retained per vertex count.
    pub per_size: usize,
    /// Children per composition (2 keeps the maximum degree at 3).
    pub max_children: usize,
}

impl Default for PoolConfig {
    fn default() -> Self {
        PoolConfig {
            max_vertices: 24,
            per_size: 120,
            max_children: 2,
        }
    }
}

#[derive(Clone, Copy)]
struct FastRules {
    mb: f64,
    mg: f64,
    ml: f64,
    om: [f64; 3],
    th: [f64; 3],
}

impl FastRules {
    fn new(r: &Rules) -> Self {
        let f = |a: &crate::gadgets::rules::AffineInverse| [to_f64(&a.c0), to_f64(&a.c1), to_f64(&a.cm1)];
        FastRules {
            mb: to_f64(&r.mb),
            mg: to_f64(&r.mg),
            ml: to_f64(&r.ml),
            om: f(&r.omega),
            th: f(&r.theta),
        }
    }

    fn compose(&self, kids: &[(f64, f64)]) -> (f64, f64) {
        let p: f64 = kids.iter().map(|k| k.0).product();
        let s: f64 = kids.iter().map(|k| k.1).sum();
        let v = (1.0 + self.mg * self.ml * p) / (self.mb + self.ml * p);
        let om = self.om[0] + self.om[1] * v + self.om[2] / v;
        let th = self.th[0] + self.th[1] * v + self.th[2] / v;
        (v, th - om * s)
    }
}

struct Entry {
    cand: Candidate,
    fast: (f64, f64),
}

/// Enumerates compositions by increasing vertex count, keeping at most
/// `per_size` distinct values per count spread evenly over the value range,
/// with half of the slots reserved for values in `focus`.
fn grow_pool(rules: &Rules, config: &PoolConfig, focus: Option<(f64, f64)>, mut stop: impl FnMut(&[Candidate]) -> bool) -> Vec<Candidate> {
    let fast = FastRules::new(rules);
    let kind = rules.kind;
    let mut by_size: Vec<Vec<Entry>> = (0..=config.max_vertices).map(|_| Vec::new()).collect();
    let mut seen: HashSet<u64> = HashSet::new();
    let mut all: Vec<Candidate> = Vec::new();
    let seeds: Vec<Arc<Recipe>> = match kind {
        Kind::Edge => vec![Arc::new(Recipe::Edge)],
        Kind::Field => {
            let mut s = vec![Arc::new(Recipe::Degenerate)];
            if crate::gadgets::predict(&Recipe::Cycle4, rules).is_ok() {
                s.push(Arc::new(Recipe::Cycle4));
            }
            s
        }
    };
    for r in seeds {
        let (value, gap) = crate::gadgets::predict(&r, rules).expect("seed prediction");
        let size = r.vertex_count(kind);
        if size > config.max_vertices {
            continue;
        }
        let fv = (to_f64(&value), to_f64(&gap));
        seen.insert(fv.0.to_bits());
        let cand = Candidate { recipe: r, value, gap, size };
        all.push(cand.clone());
        by_size[size].push(Entry { cand, fast: fv });
    }
    if stop(&all) {
        return all;
    }
    // Vertex overhead of a composition beyond its children.
    let (overhead, shared) = match kind {
        Kind::Edge => (4usize, 2usize),
        Kind::Field => (2, 1),
    };
    for size in 1..=config.max_vertices {
        let mut fresh: Vec<(f64, f64, Vec<(usize, usize)>)> = Vec::new();
        let mut local: HashSet<u64> = HashSet::new();
        // one child
        if size >= overhead {
            let a = size + shared - overhead;
            if a < size {
                for (i, e) in by_size[a].iter().enumerate() {
                    if kind == Kind::Field && matches!(*e.cand.recipe, Recipe::Degenerate) && size != 2 {
                        continue;
                    }
                    let (v, g) = fast.compose(&[e.fast]);
                    if v.is_finite() && !seen.contains(&v.to_bits()) && local.insert(v.to_bits()) {
                        fresh.push((v, g, vec![(a, i)]));
                    }
                }
            }
        }
        // two children
        if config.max_children >= 2 && size + 2 * shared >= overhead {
            let total = size + 2 * shared - overhead;
            for a in 1..=total / 2 {
                let b = total - a;
                if b >= size || a >= size {
                    continue;
                }
                for (i, ea) in by_size[a].iter().enumerate() {
                    let start = if a == b { i } else { 0 };
                    for (j, eb) in by_size[b].iter().enumerate().skip(start) {
                        let (v, g) = fast.compose(&[ea.fast, eb.fast]);
                        if v.is_finite() && !seen.contains(&v.to_bits()) && local.insert(v.to_bits()) {
                            fresh.push((v, g, vec![(a, i), (b, j)]));
                        }
                    }
                }
            }
        }
        if fresh.is_empty() {
            continue;
        }
        fresh.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
        let chosen = subsample(&fresh, config.per_size, focus);
        for idx in chosen {
            let (fv, fg, kids) = &fresh[idx];
            let recipes: Vec<Arc<Recipe>> = kids.iter().map(|&(s, i)| by_size[s][i].cand.recipe.clone()).collect();
            let exact: Vec<(Rational, Rational)> = kids
                .iter()
                .map(|&(s, i)| (by_size[s][i].cand.value.clone(), by_size[s][i].cand.gap.clone()))
                .collect();
            let (value, gap) = rules.compose(&exact);
            let recipe = Arc::new(match kind {
                Kind::Edge => Recipe::ComposeE(recipes),
                Kind::Field => Recipe::ComposeF(recipes),
            });
            seen.insert(fv.to_bits());
            let cand = Candidate { recipe, value, gap, size };
            all.push(cand.clone());
            by_size[size].push(Entry { cand, fast: (*fv, *fg) });
        }
        if stop(&all) {
            break;
        }
    }
    all
}

fn subsample(sorted: &[(f64, f64, Vec<(usize, usize)>)], k: usize, focus: Option<(f64, f64)>) -> Vec<usize> {
    let pick = |idx: &[usize], k: usize| -> Vec<usize> {
        if idx.len() <= k {
            return idx.to_vec();
        }
        let mut out: Vec<usize> = (0..k).map(|j| idx[j * (idx.len() - 1) / (k - 1).max(1)]).collect();
        out.dedup();
        out
    };
    match focus {
        None => pick(&(0..sorted.len()).collect::<Vec<_>>(), k),
        Some((lo, hi)) => {
            let (inside, outside): (Vec<usize>, Vec<usize>) =
                (0..sorted.len()).partition(|&i| sorted[i].0 >= lo && sorted[i].0 <= hi);
            let mut out = pick(&inside, k / 2);
            out.extend(pick(&outside, k - out.len().min(k)));
            out.sort_unstable();
            out
        }
    }
}

/// All compositions found within the limits, with exact predicted values.
pub fn search_pool(rules: &Rules, config: &PoolConfig) -> Vec<Candidate> {
    grow_pool(rules, config, None, |_| false)
}

/// Largest distance from a point of `[lo, hi]` to the nearest member value.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshCertificate {
    pub max_distance: Rational,
    /// tau * delta.
    pub bound: Rational,
    pub ok: bool,
}

fn mesh(values: &[Rational], lo: &Rational, hi: &Rational, bound: &Rational) -> MeshCertificate {
    let mut inside: Vec<&Rational> = values.iter().filter(|v| *v >= lo && *v <= hi).collect();
    inside.sort();
    let max_distance = if inside.is_empty() {
        hi - lo
    } else {
        let mut d = max(&(inside[0] - lo), &(hi - inside[inside.len() - 1]));
        for w in inside.windows(2) {
            d = max(&d, &((w[1] - w[0]) / Rational::from_integer(2.into())));
        }
        d
    };
    MeshCertificate {
        ok: !inside.is_empty() && &max_distance <= bound,
        max_distance,
        bound: bound.clone(),
    }
}

/// Limits for library construction.
#[derive(Debug, Clone, Copy)]
pub struct LibraryConfig {
    pub pool: PoolConfig,
    pub budget: Budget,
}

impl Default for LibraryConfig {
    fn default() -> Self {
        LibraryConfig {
            pool: PoolConfig::default(),
            budget: Budget::default(),
        }
    }
}

/// Gadgets whose values are dense in an interval around the fixpoint.
#[derive(Debug, Clone)]
pub struct Library {
    pub rules: Rules,
    pub tau: Rational,
    pub delta: Rational,
    /// Rational stand-in for the fixpoint x*.
    pub center: Rational,
    pub lo: Rational,
    pub hi: Rational,
    pub members: Vec<Gadget>,
    pub certificate: MeshCertificate,
}

/// Builds a library covering `[x* - tau, x* + tau]` (field gadgets) or
/// `(1, 1 + tau]` (edge gadgets) with mesh `tau * delta`.
pub fn build_library(rules: &Rules, tau: &Rational, delta: &Rational, config: &LibraryConfig) -> Result<Library> {
    if !tau.is_positive() {
        return Err(Error::invalid("tau must be positive"));
    }
    if !delta.is_positive() || delta > &Rational::one() {
        return Err(Error::invalid("delta must lie in (0, 1]"));
    }
    let center = from_f64(rules.fixpoint()).ok_or_else(|| Error::numerical("fixpoint is not finite"))?;
    let (lo, hi) = match rules.kind {
        Kind::Edge => {
            if tau >= &(&rules.mg - Rational::one()) {
                return Err(Error::invalid("tau must be below gamma_hat - 1 for edge gadgets"));
            }
            (Rational::one(), Rational::one() + tau)
        }
        Kind::Field => {
            let lo = &center - tau;
            let hi = &center + tau;
            let upper = if rules.mb.is_zero() { None } else { Some(rules.mb.recip()) };
            if lo <= rules.mg || upper.map(|u| hi >= u).unwrap_or(false) {
                return Err(Error::invalid("tau too large: interval leaves (gamma, 1/beta)"));
            }
            (lo, hi)
        }
    };
    let bound = tau * delta;
    let focus = Some((to_f64(&lo), to_f64(&hi)));
    let mut cert = None;
    let pool = grow_pool(rules, &config.pool, focus, |all| {
        let values: Vec<Rational> = all.iter().map(|c| c.value.clone()).collect();
        let m = mesh(&values, &lo, &hi, &bound);
        let ok = m.ok;
        cert = Some(m);
        ok
    });
    let cert = cert.unwrap();
    if !cert.ok {
        return Err(Error::Budget {
            needed: format!(
                "mesh {} not reached (best {}) within {} vertices",
                bound, cert.max_distance, config.pool.max_vertices
            ),
            budget: config.pool.max_vertices as u64,
        });
    }
    // Greedy minimum cover of [lo, hi] by balls of radius tau*delta.
    let mut inside: Vec<&Candidate> = pool.iter().filter(|c| c.value >= lo && c.value <= hi).collect();
    inside.sort_by(|a, b| a.value.cmp(&b.value).then(a.size.cmp(&b.size)));
    let mut chosen: Vec<&Candidate> = Vec::new();
    let mut covered = lo.clone();
    let mut idx = 0;
    while covered < hi {
        let mut best: Option<&Candidate> = None;
        while idx < inside.len() && &inside[idx].value - &bound <= covered {
            if best.map(|b| inside[idx].value >= b.value).unwrap_or(true) {
                best = Some(inside[idx]);
            }
            idx += 1;
        }
        let b = best.ok_or_else(|| Error::numerical("mesh certificate inconsistent with cover"))?;
        chosen.push(b);
        covered = &b.value + &bound;
    }
    let members = chosen
        .into_iter()
        .map(|c| Gadget::from_recipe(c.recipe.clone(), rules, config.budget))
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<Rational> = members.iter().map(|g| g.stats.value.clone()).collect();
    let certificate = mesh(&values, &lo, &hi, &bound);
    Ok(Library {
        rules: rules.clone(),
        tau: tau.clone(),
        delta: delta.clone(),
        center,
        lo,
        hi,
        members,
        certificate,
    })
}

/// Intervals and contraction bounds derived from a library.
#[derive(Debug, Clone)]
pub struct RecursionConstants {
    pub x_star: f64,
    pub omega_star: f64,
    /// Target interval for construction.
    pub i_lo: Rational,
    pub i_hi: Rational,
    /// Wider interval on which omega and theta are bounded.
    pub i2_lo: Rational,
    pub i2_hi: Rational,
    pub theta_sup: f64,
    /// Gap bound: gaps stay in [-t_bound, t_bound].
    pub t_bound: f64,
    pub c_min: f64,
    pub c_max: f64,
}

pub fn recursion_constants(lib: &Library) -> Result<RecursionConstants> {
    let rules = &lib.rules;
    let x_star = rules.fixpoint();
    let w = rules.omega_star().abs();
    if w >= 1.0 {
        return Err(Error::numerical("|omega*| is not below 1"));
    }
    let tau = to_f64(&lib.tau);
    let half = tau * w / 2.0;
    let wide = tau * 2.0 * w / (1.0 - w);
    let q = |x: f64| from_f64(x).unwrap();
    let i_lo = if rules.kind == Kind::Edge { Rational::one() } else { q(x_star - half) };
    let i_hi = q(x_star + half);
    let i2_lo = q((x_star - wide).max(1e-12));
    let i2_hi = q(x_star + wide);
    let mut slope_max = Rational::zero();
    let mut slope_min: Option<Rational> = None;
    let mut gap_max = 0.0f64;
    for m in &lib.members {
        let v = &m.stats.value;
        slope_max = max(&slope_max, &rules.map_slope(&i_lo, v));
        let lo_slope = rules.map_slope(&i_hi, v);
        slope_min = Some(match slope_min {
            None => lo_slope,
            Some(s) => min(&s, &lo_slope),
        });
        gap_max = gap_max.max(to_f64(&m.stats.gap).abs());
    }
    let (l2, h2) = (to_f64(&i2_lo), to_f64(&i2_hi));
    let c_max = to_f64(&slope_max).max(rules.omega.sup_abs(l2, h2));
    let c_min = to_f64(&slope_min.unwrap_or_else(Rational::zero)).min(rules.omega.inf_abs(l2, h2));
    let theta_sup = rules.theta.sup_abs(l2, h2);
    let t_bound = if c_max < 1.0 { (theta_sup + gap_max) / (1.0 - c_max) } else { f64::INFINITY };
    Ok(RecursionConstants {
        x_star,
        omega_star: rules.omega_star(),
        i_lo,
        i_hi,
        i2_lo,
        i2_hi,
        theta_sup,
        t_bound,
        c_min,
        c_max,
    })
}

/// Result of targeted construction.
#[derive(Debug, Clone)]
pub struct BuildReport {
    pub recipe: Arc<Recipe>,
    pub value: Rational,
    pub gap: Rational,
    /// Library member index used at each level, outermost first.
    pub choices: Vec<usize>,
    /// |value - target|.
    pub error: Rational,
    /// Certified envelope constants: error <= scale * ratio^t.
    pub scale: Rational,
    pub ratio: Rational,
}

impl BuildReport {
    pub fn envelope(&self, t: usize) -> f64 {
        to_f64(&self.scale) * to_f64(&self.ratio).powi(t as i32)
    }
}

/// Smallest interval containing the target interval and 1 that is mapped
/// into itself by every library map; returned with an exact check.
fn invariant_hull(lib: &Library, consts: &RecursionConstants) -> Result<(Rational, Rational)> {
    let rules = &lib.rules;
    let mut lo = to_f64(&consts.i_lo).min(1.0);
    let mut hi = to_f64(&consts.i_hi).max(1.0);
    let fast: Vec<f64> = lib.members.iter().map(|m| to_f64(&m.stats.value)).collect();
    let (mb, mg, ml) = (to_f64(&rules.mb), to_f64(&rules.mg), to_f64(&rules.ml));
    let phi = |v: f64, m: f64| (1.0 + mg * ml * v * m) / (mb + ml * v * m);
    for _ in 0..500 {
        let (mut nlo, mut nhi) = (lo, hi);
        for &m in &fast {
            for v in [lo, hi] {
                let y = phi(v, m);
                nlo = nlo.min(y);
                nhi = nhi.max(y);
            }
        }
        if nlo == lo && nhi == hi {
            break;
        }
        lo = nlo;
        hi = nhi;
    }
    let pad = 1e-9 * (hi - lo).max(1e-9);
    let lo = from_f64((lo - pad).max(lo * 0.5)).unwrap();
    let hi = from_f64(hi + pad).unwrap();
    for m in &lib.members {
        for v in [&lo, &hi] {
            let y = rules.map(v, &m.stats.value);
            if y < lo || y > hi {
                return Err(Error::numerical("library maps do not preserve the certified hull"));
            }
        }
    }
    Ok((lo, hi))
}

/// Builds a gadget whose value approximates `x` by pulling `x` back through
/// library maps `t` times and composing from the degenerate gadget.
pub fn build_gadget(x: &Rational, t: usize, lib: &Library) -> Result<BuildReport> {
    let consts = recursion_constants(lib)?;
    if x < &consts.i_lo || x > &consts.i_hi {
        return Err(Error::invalid(format!(
            "target {} outside the construction interval [{}, {}]",
            crate::rational::to_f64(x),
            to_f64(&consts.i_lo),
            to_f64(&consts.i_hi)
        )));
    }
    let rules = &lib.rules;
    let mid = (&consts.i_lo + &consts.i_hi) / Rational::from_integer(2.into());
    let mut choices = Vec::with_capacity(t);
    let mut y = x.clone();
    for _ in 0..t {
        let mut best: Option<(usize, Rational, Rational)> = None;
        for (i, m) in lib.members.iter().enumerate() {
            if let Some(p) = rules.pullback(&y, &m.stats.value) {
                if p >= consts.i_lo && p <= consts.i_hi {
                    let d = (&p - &mid).abs();
                    if best.as_ref().map(|b| d < b.2).unwrap_or(true) {
                        best = Some((i, p, d));
                    }
                }
            }
        }
        let (i, p, _) = best.ok_or_else(|| {
            Error::invalid(format!(
                "no library map covers {}; the library is not dense enough",
                to_f64(&y)
            ))
        })?;
        choices.push(i);
        y = p;
    }
    let mut recipe = Arc::new(Recipe::Degenerate);
    let mut value = Rational::one();
    let mut gap = Rational::zero();
    for &i in choices.iter().rev() {
        let m = &lib.members[i];
        gap = rules.gap_map(&value, &gap, &(m.stats.value.clone(), m.stats.gap.clone()));
        value = rules.map(&value, &m.stats.value);
        let kids = vec![recipe, m.recipe.clone()];
        recipe = Arc::new(match rules.kind {
            Kind::Edge => Recipe::ComposeE(kids),
            Kind::Field => Recipe::ComposeF(kids),
        });
    }
    let (hlo, hhi) = invariant_hull(lib, &consts)?;
    let mut ratio = Rational::zero();
    for m in &lib.members {
        ratio = max(&ratio, &rules.map_slope(&hlo, &m.stats.value));
    }
    Ok(BuildReport {
        recipe,
        error: (&value - x).abs(),
        value,
        gap,
        choices,
        scale: &hhi - &hlo,
        ratio,
    })
}

/// Two gadgets with nearly equal values and separated gaps.
#[derive(Debug, Clone)]
pub struct PairReport {
    pub first: Gadget,
    pub second: Gadget,
    pub value_diff: Rational,
    pub gap_diff: Rational,
    /// Largest |gap| among the searched compositions.
    pub gap_ceiling: Rational,
}

/// Searches compositions for a pair with |v1 - v2| <= 2r and
/// |g1 - g2| >= gap_min, optionally with both values inside `window`.
pub fn search_gadget_pair(
    rules: &Rules,
    r: &Rational,
    gap_min: &Rational,
    window: Option<(Rational, Rational)>,
    config: &LibraryConfig,
) -> Result<PairReport> {
    if !r.is_positive() || r >= &crate::rational::ratio(1, 2) {
        return Err(Error::invalid("r must lie in (0, 1/2)"));
    }
    let pool = search_pool(rules, &config.pool);
    let ceiling = pool.iter().map(|c| c.gap.abs()).max().unwrap_or_else(Rational::zero);
    if gap_min > &(&ceiling * Rational::from_integer(2.into())) {
        return Err(Error::invalid(format!(
            "requested gap {} exceeds twice the largest attainable gap {}",
            gap_min, ceiling
        )));
    }
    let mut cands: Vec<&Candidate> = pool
        .iter()
        .filter(|c| window.as_ref().map(|(lo, hi)| &c.value >= lo && &c.value <= hi).unwrap_or(true))
        .collect();
    cands.sort_by(|a, b| a.value.cmp(&b.value).then(a.size.cmp(&b.size)));
    let two_r = r * Rational::from_integer(2.into());
    let mut best: Option<(Rational, usize, usize, usize)> = None;
    for i in 0..cands.len() {
        for j in i + 1..cands.len() {
            if &cands[j].value - &cands[i].value > two_r {
                break;
            }
            let d = (&cands[j].gap - &cands[i].gap).abs();
            let size = cands[i].size + cands[j].size;
            let better = match &best {
                None => true,
                Some((bd, bs, _, _)) => d > *bd || (d == *bd && size < *bs),
            };
            if better {
                best = Some((d, size, i, j));
            }
        }
    }
    let (d, _, i, j) = best.ok_or_else(|| Error::numerical("no two compositions lie within 2r of each other"))?;
    if &d < gap_min || d.is_zero() {
        return Err(Error::numerical(format!(
            "best gap separation {} falls short of the requested {}",
            d, gap_min
        )));
    }
    let first = Gadget::from_recipe(cands[i].recipe.clone(), rules, config.budget)?;
    let second = Gadget::from_recipe(cands[j].recipe.clone(), rules, config.budget)?;
    let value_diff = (&first.stats.value - &second.stats.value).abs();
    let gap_diff = (&first.stats.gap - &second.stats.gap).abs();
    if value_diff > two_r || &gap_diff < gap_min {
        return Err(Error::numerical("pair failed exact verification"));
    }
    Ok(PairReport {
        first,
        second,
        value_diff,
        gap_diff,
        gap_ceiling: ceiling,
    })
}
