//! Log-partition functions recovered from observable readings on a grid of
//! parameter values between 1 and a target.
//!
//! The varying parameter is the edge activity β for Potts and the vertex
//! activity λ for 2-spin models. Writing u = log x, the derivative of log Z
//! in u is the expected monochromatic-edge count (Potts) or spin-1 count
//! (2-spin), and this is nondecreasing in u because its own derivative is a
//! variance. Left and right rectangle sums in u therefore bracket log Z.

use std::sync::atomic::{AtomicU64, Ordering};

use num::{BigUint, One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exact::{partition_function, Budget, Query, Tallies};
use crate::graph::Multigraph;
use crate::model::{Model, Observable, Potts, TwoSpin, VertexEdge};
use crate::rational::{int, ln, pow, to_f64, Rational};
use crate::sampler::{mc_estimate, McConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridMode {
    Paper,
    Tight,
}

/// The model with its varying parameter set to `x`.
pub fn model_at(model: &Model, x: &Rational) -> Result<Model> {
    match model {
        Model::Potts(p) => Ok(Model::Potts(Potts::new(p.q, x.clone())?)),
        Model::TwoSpin(t) => Ok(Model::TwoSpin(TwoSpin::new(t.beta.clone(), t.gamma.clone(), x.clone())?)),
    }
}

/// Observable whose expectation is the log-derivative of Z.
pub fn derivative_observable(model: &Model) -> Observable {
    match model {
        Model::Potts(_) => Observable::Monochromatic,
        Model::TwoSpin(_) => Observable::VertexEdge(VertexEdge::magnetization()),
    }
}

/// Z as a polynomial in the varying parameter: Z(x) = Σ_k c_k x^k.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionCurve {
    pub coeffs: Vec<Rational>,
    coeffs_f64: Vec<f64>,
}

impl PartitionCurve {
    pub fn new(model: &Model, g: &Multigraph, budget: Budget) -> Result<Self> {
        if g.has_edge_activities() || g.has_vertex_activities() {
            return Err(Error::invalid("interpolation needs uniform activities"));
        }
        let tallies = Tallies::enumerate(&Query::new(g, model).budget(budget))?;
        let coeffs: Vec<Rational> = match model {
            Model::Potts(_) => tallies.monochromatic_counts().into_iter().map(|c| Rational::from_integer(c.into())).collect(),
            Model::TwoSpin(t) => {
                let mut c = vec![Rational::zero(); g.n() + 1];
                for (sig, count, _) in &tallies.entries {
                    let k = sig.len();
                    let ones = if k == 3 { sig[0] as usize } else { 0 };
                    let w = pow(&t.beta, sig[k - 2] as i64) * pow(&t.gamma, sig[k - 1] as i64);
                    c[ones] += w * int(*count as i64);
                }
                c
            }
        };
        let coeffs_f64 = coeffs.iter().map(to_f64).collect();
        Ok(PartitionCurve { coeffs, coeffs_f64 })
    }

    pub fn z(&self, x: &Rational) -> Rational {
        self.coeffs.iter().rev().fold(Rational::zero(), |acc, c| acc * x + c)
    }

    pub fn ln_z(&self, x: &Rational) -> f64 {
        ln(&self.z(x))
    }

    /// Expected exponent at x, i.e. x Z'(x)/Z(x).
    pub fn reading(&self, x: &Rational) -> Result<Rational> {
        let mut num = Rational::zero();
        let mut den = Rational::zero();
        for (k, c) in self.coeffs.iter().enumerate().rev() {
            num = num * x + c * int(k as i64);
            den = den * x + c;
        }
        if den.is_zero() {
            return Err(Error::ZeroWeight);
        }
        Ok(num / den)
    }

    pub fn reading_f64(&self, x: f64) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (k, c) in self.coeffs_f64.iter().enumerate().rev() {
            num = num * x + c * k as f64;
            den = den * x + c;
        }
        num / den
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OracleKind {
    /// Exact rational readings.
    Exact,
    /// The exact polynomial evaluated in f64.
    ExactFloat,
    /// Glauber estimates; the reading interval is `z` standard errors wide
    /// on each side. Grid point i uses seed `config.seed + i`.
    Mc { config: McConfig, z: f64 },
    /// Exact readings multiplied by 1 + rel·u with u uniform on [-1, 1].
    Noise { rel: f64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reading {
    pub value: f64,
    pub exact: Option<Rational>,
    pub std_error: Option<f64>,
    /// Interval known to contain the true expectation.
    pub lower: f64,
    pub upper: f64,
}

/// An observable oracle with a call counter.
#[derive(Debug)]
pub struct OracleHandle {
    pub kind: OracleKind,
    pub budget: Budget,
    calls: AtomicU64,
    curve: Option<(Model, Multigraph, PartitionCurve)>,
}

impl OracleHandle {
    pub fn new(kind: OracleKind, budget: Budget) -> Result<Self> {
        match &kind {
            OracleKind::Noise { rel, .. } if !(0.0..1.0).contains(rel) => {
                return Err(Error::invalid("noise level must lie in [0, 1)"))
            }
            OracleKind::Mc { z, .. } if !(*z >= 0.0) => return Err(Error::invalid("z must be nonnegative")),
            _ => {}
        }
        Ok(OracleHandle {
            kind,
            budget,
            calls: AtomicU64::new(0),
            curve: None,
        })
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    fn prepare(&mut self, model: &Model, g: &Multigraph) -> Result<()> {
        if matches!(self.kind, OracleKind::Mc { .. }) {
            return Ok(());
        }
        let fresh = match &self.curve {
            Some((m, h, _)) => m != model || h != g,
            None => true,
        };
        if fresh {
            let curve = PartitionCurve::new(model, g, self.budget)?;
            self.curve = Some((model.clone(), g.clone(), curve));
        }
        Ok(())
    }

    /// Reading at grid point `i` with parameter `x`; `prepare` must have run.
    fn read(&self, model: &Model, g: &Multigraph, i: u64, x: &Rational, xf: f64) -> Result<Reading> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let curve = self.curve.as_ref().map(|c| &c.2);
        match &self.kind {
            OracleKind::Exact => {
                let r = curve.expect("prepared").reading(x)?;
                let v = to_f64(&r);
                Ok(Reading { value: v, exact: Some(r), std_error: None, lower: v, upper: v })
            }
            OracleKind::ExactFloat => {
                let v = curve.expect("prepared").reading_f64(xf);
                let slack = 1e-12 * (1.0 + v.abs());
                Ok(Reading { value: v, exact: None, std_error: None, lower: v - slack, upper: v + slack })
            }
            OracleKind::Noise { rel, seed } => {
                let truth = to_f64(&curve.expect("prepared").reading(x)?);
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                rng.set_stream(i);
                let u: f64 = rng.gen_range(-1.0..=1.0);
                let v = truth * (1.0 + rel * u);
                let (a, b) = (v / (1.0 + rel), v / (1.0 - rel));
                Ok(Reading { value: v, exact: None, std_error: None, lower: a.min(b), upper: a.max(b) })
            }
            OracleKind::Mc { config, z } => {
                let at = model_at(model, x)?;
                let cfg = McConfig { seed: config.seed.wrapping_add(i), ..*config };
                let e = mc_estimate(g, &at, &derivative_observable(model), None, &cfg)?;
                let half = z * e.std_error.unwrap_or(0.0);
                Ok(Reading {
                    value: e.mean,
                    exact: None,
                    std_error: e.std_error,
                    lower: e.mean - half,
                    upper: e.mean + half,
                })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket {
    pub lower: f64,
    pub upper: f64,
    pub midpoint: f64,
    pub width: f64,
}

impl Bracket {
    fn new(lower: f64, upper: f64) -> Self {
        Bracket { lower, upper, midpoint: 0.5 * (lower + upper), width: upper - lower }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub i: u64,
    pub x: f64,
    pub reading: Reading,
    /// Bracket ends after integrating up to this point, base included.
    pub lower_partial: f64,
    pub upper_partial: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Integration {
    pub bracket: Bracket,
    /// Base plus the trapezoid sum in log x.
    pub estimate: f64,
    pub base: f64,
    pub points: Vec<GridPoint>,
    /// Indices i where reading i+1 falls short of reading i beyond tolerance.
    pub non_monotone: Vec<u64>,
    pub calls: u64,
}

/// Grid point i of M between 1 and `target`.
pub fn grid_point(target: &Rational, m: u64, i: u64) -> Rational {
    Rational::one() + (target - Rational::one()) * int(i as i64) / int(m as i64)
}

/// log Z at parameter value 1, exact up to the final logarithm.
pub fn base_log_partition(model: &Model, g: &Multigraph, budget: Budget) -> Result<f64> {
    match model {
        Model::Potts(p) => Ok(g.n() as f64 * (p.q as f64).ln()),
        Model::TwoSpin(_) => {
            let z = partition_function(g, &model_at(model, &Rational::one())?, &[], budget)?;
            if !z.is_positive() {
                return Err(Error::ZeroWeight);
            }
            Ok(ln(&z))
        }
    }
}

fn check_target(model: &Model, target: &Rational) -> Result<()> {
    match model {
        Model::Potts(_) if *target < Rational::one() => Err(Error::invalid("Potts target must be at least 1")),
        Model::TwoSpin(_) if !target.is_positive() => Err(Error::invalid("2-spin target must be positive")),
        _ => Ok(()),
    }
}

pub fn integrate_log_partition(
    model: &Model,
    g: &Multigraph,
    oracle: &mut OracleHandle,
    target: &Rational,
    m: u64,
) -> Result<Integration> {
    model.validate()?;
    check_target(model, target)?;
    if m == 0 {
        return Err(Error::invalid("grid size must be at least 1"));
    }
    oracle.prepare(model, g)?;
    let base = base_log_partition(model, g, oracle.budget)?;
    let step = to_f64(&((target - Rational::one()) / int(m as i64)));
    let xs: Vec<f64> = (0..=m).map(|i| 1.0 + step * i as f64).collect();
    // ln_1p keeps the log accurate near x = 1.
    let us: Vec<f64> = (0..=m).map(|i| (step * i as f64).ln_1p()).collect();
    let handle = &*oracle;
    let exact_x = !matches!(handle.kind, OracleKind::ExactFloat);
    let readings: Vec<Reading> = (0..=m)
        .into_par_iter()
        .map(|i| {
            let x = if exact_x { grid_point(target, m, i) } else { Rational::zero() };
            handle.read(model, g, i, &x, xs[i as usize])
        })
        .collect::<Result<_>>()?;

    let rising = *target >= Rational::one();
    let (mut lo, mut hi, mut trap) = (0.0, 0.0, 0.0);
    let mut non_monotone = Vec::new();
    let mut points = Vec::with_capacity(readings.len());
    for (i, r) in readings.iter().enumerate() {
        if i > 0 {
            let prev = &readings[i - 1];
            let du = us[i] - us[i - 1];
            trap += 0.5 * (prev.value + r.value) * du;
            if rising {
                lo += prev.lower * du;
                hi += r.upper * du;
                if prev.lower > r.upper {
                    non_monotone.push(i as u64 - 1);
                }
            } else {
                lo += prev.upper * du;
                hi += r.lower * du;
                if r.lower > prev.upper {
                    non_monotone.push(i as u64 - 1);
                }
            }
        }
        points.push(GridPoint {
            i: i as u64,
            x: xs[i],
            reading: r.clone(),
            lower_partial: base + lo,
            upper_partial: base + hi,
        });
    }
    Ok(Integration {
        bracket: Bracket::new(base + lo, base + hi),
        estimate: base + trap,
        base,
        points,
        non_monotone,
        calls: oracle.calls(),
    })
}

/// Range of the reading over parameters between 1 and the target.
fn reading_range(model: &Model, g: &Multigraph, target: &Rational) -> (f64, f64) {
    match model {
        Model::Potts(p) => {
            let m = g.m() as f64;
            (m / p.q as f64, m)
        }
        Model::TwoSpin(t) => {
            let n = g.n() as f64;
            let cubic = g.n() > 0 && g.degrees().iter().all(|&d| d == 3);
            if t.is_ising() && t.beta <= Rational::one() && cubic && *target >= Rational::one() {
                let a3 = to_f64(&t.beta).powi(3);
                (a3 / (1.0 + a3) * n, n)
            } else {
                (0.0, n)
            }
        }
    }
}

/// Largest step in log x on a grid of size m.
fn max_log_step(target: f64, m: u64) -> f64 {
    if target >= 1.0 {
        ((target - 1.0) / m as f64).ln_1p()
    } else {
        ((1.0 - target) / (m as f64 * target)).ln_1p()
    }
}

/// Grid size for a bracket of width at most `eps`.
pub fn grid_for_error(model: &Model, g: &Multigraph, target: &Rational, eps: &Rational, mode: GridMode) -> Result<BigUint> {
    if !eps.is_positive() {
        return Err(Error::invalid("eps must be positive"));
    }
    match model {
        Model::Potts(_) if *target <= Rational::one() => return Err(Error::invalid("Potts target must exceed 1")),
        _ => check_target(model, target)?,
    }
    match mode {
        GridMode::Paper => {
            let base = match model {
                Model::Potts(p) => int(10 * p.q as i64) * target * int(g.m() as i64) / eps,
                Model::TwoSpin(t) => {
                    let alpha = if t.beta < t.gamma { &t.beta } else { &t.gamma };
                    if !alpha.is_positive() {
                        return Err(Error::invalid("paper grid needs positive interactions"));
                    }
                    int(10) * target * int(g.n() as i64) / (eps * alpha)
                }
            };
            let m = pow(&base, 4).ceil().to_integer();
            Ok(m.to_biguint().unwrap_or_default().max(BigUint::one()))
        }
        GridMode::Tight => {
            let (lo, hi) = reading_range(model, g, target);
            let spread = hi - lo;
            let t = to_f64(target);
            let e = to_f64(eps);
            if spread <= 0.0 || t == 1.0 {
                return Ok(BigUint::one());
            }
            let width = |m: u64| spread * max_log_step(t, m);
            let c = if t >= 1.0 { t - 1.0 } else { (1.0 - t) / t };
            let guess = (c / (e / spread).exp_m1()).ceil();
            if !guess.is_finite() || guess > 1e18 {
                return Err(Error::numerical("grid size overflows"));
            }
            let mut m = (guess as u64).max(1);
            while m > 1 && width(m - 1) <= e {
                m -= 1;
            }
            while width(m) > e {
                m += 1;
            }
            Ok(BigUint::from(m))
        }
    }
}

/// Grid size as an executable count.
pub fn executable(m: &BigUint) -> Result<u64> {
    m.to_u64().ok_or_else(|| Error::Budget { needed: m.to_string(), budget: u64::MAX })
}
