//! Critical thresholds, ordered-phase port bias for Potts, and uniqueness
//! analysis of the tree recursion for antiferromagnetic 2-spin systems.

use crate::error::{Error, Result};
use crate::rational::{approximate, int, pow, to_f64, Rational};

/// Tolerance band around |f'(x*)| = 1 reported as the boundary.
pub const BOUNDARY_BAND: f64 = 1e-9;

/// Critical edge activity of the q-state Potts model on Δ-regular trees.
/// For q = 2 this is the continuous limit Δ/(Δ-2).
pub fn potts_critical_beta(q: u32, delta: u32) -> Result<f64> {
    if q < 2 || delta < 3 {
        return Err(Error::invalid("need q >= 2 and delta >= 3"));
    }
    if q == 2 {
        return Ok(delta as f64 / (delta as f64 - 2.0));
    }
    let q = q as f64;
    let e = 1.0 - 2.0 / delta as f64;
    Ok((q - 2.0) / ((q - 1.0).powf(e) - 1.0))
}

/// Bias of the dominant colour in the ordered phase.
#[derive(Debug, Clone, PartialEq)]
pub struct PortBias {
    /// Largest root x > 1 of the tree recursion.
    pub x: f64,
    /// x / (x + q - 1).
    pub p: f64,
    /// Exact values when the root is a small-denominator rational.
    pub exact_x: Option<Rational>,
    pub exact_p: Option<Rational>,
}

fn potts_map_log_gap(q: f64, delta: f64, beta: f64, x: f64) -> f64 {
    (delta - 1.0) * ((beta * x + q - 1.0) / (x + beta + q - 2.0)).ln() - x.ln()
}

fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    let flo = f(lo);
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Port bias p = x/(x+q-1) where x > 1 is the largest root of
/// x = ((beta x + q - 1)/(x + beta + q - 2))^(Δ-1).
pub fn potts_port_bias(q: u32, delta: u32, beta: &Rational) -> Result<PortBias> {
    let bc = potts_critical_beta(q, delta)?;
    let b = to_f64(beta);
    if b <= bc {
        return Err(Error::Subcritical(format!(
            "beta = {b} does not exceed the critical value {bc} for q = {q}, delta = {delta}"
        )));
    }
    let (qf, df) = (q as f64, delta as f64);
    let gap = |x: f64| potts_map_log_gap(qf, df, b, x);
    let hi = 2.0 * b.powf(df - 1.0) + 2.0;
    let steps = 20_000;
    let ratio = hi.ln() / steps as f64;
    let mut bracket = None;
    let mut prev_x = hi;
    let mut prev = gap(hi);
    for k in (0..steps).rev() {
        let x = (k as f64 * ratio).exp();
        if x <= 1.0 + 1e-12 {
            break;
        }
        let v = gap(x);
        if v > 0.0 && prev <= 0.0 {
            bracket = Some((x, prev_x));
            break;
        }
        prev = v;
        prev_x = x;
    }
    let (lo, hi) = bracket.ok_or_else(|| {
        Error::Subcritical(format!("no root above 1 for q = {q}, delta = {delta}, beta = {b}"))
    })?;
    let x = bisect(gap, lo, hi);
    let mut out = PortBias {
        x,
        p: x / (x + qf - 1.0),
        exact_x: None,
        exact_p: None,
    };
    if let Some(cand) = approximate(x, 1_000_000) {
        let lhs = &cand * pow(&(&cand + beta + int(q as i64 - 2)), delta as i64 - 1);
        let rhs = pow(&(beta * &cand + int(q as i64 - 1)), delta as i64 - 1);
        if lhs == rhs && cand > int(1) {
            let p = &cand / (&cand + int(q as i64 - 1));
            out.x = to_f64(&cand);
            out.p = to_f64(&p);
            out.exact_p = Some(p);
            out.exact_x = Some(cand);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Uniqueness,
    NonUniqueness,
    Boundary,
}

/// Fixpoint and contraction of the 2-spin tree recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct Uniqueness {
    pub fixpoint: f64,
    /// |f'(x*)|.
    pub derivative: f64,
    pub region: Region,
}

impl Uniqueness {
    pub fn in_nonuniqueness(&self) -> bool {
        self.region == Region::NonUniqueness
    }
}

/// Parameters of an antiferromagnetic 2-spin system in f64.
#[derive(Debug, Clone, Copy)]
struct Recursion {
    ln_beta: f64,
    ln_gamma: f64,
    ln_lambda: f64,
    beta_gamma: f64,
    d1: f64,
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

impl Recursion {
    fn new(beta: f64, gamma: f64, lambda: f64, delta: u32) -> Result<Self> {
        if !(beta >= 0.0 && gamma >= 0.0) || (beta == 0.0 && gamma == 0.0) {
            return Err(Error::invalid("need beta, gamma >= 0, not both zero"));
        }
        if !(lambda > 0.0) {
            return Err(Error::invalid("need lambda > 0"));
        }
        if beta * gamma > 1.0 {
            return Err(Error::invalid("parameters are not antiferromagnetic (beta*gamma > 1)"));
        }
        if delta < 3 {
            return Err(Error::invalid("need delta >= 3"));
        }
        Ok(Recursion {
            ln_beta: beta.ln(),
            ln_gamma: gamma.ln(),
            ln_lambda: lambda.ln(),
            beta_gamma: beta * gamma,
            d1: delta as f64 - 1.0,
        })
    }

    /// ln f(e^u) with f(x) = (1/λ)((βx+1)/(x+γ))^(Δ-1).
    fn log_f(&self, u: f64) -> f64 {
        -self.ln_lambda + self.d1 * (log_add_exp(self.ln_beta + u, 0.0) - log_add_exp(u, self.ln_gamma))
    }

    /// |f'(x)| at x = e^u, using f(x) = e^{log_f(u)}.
    fn abs_derivative(&self, u: f64) -> f64 {
        // |f'(x)| = f(x) (Δ-1)(1-βγ) / ((βx+1)(x+γ))
        let ln = self.log_f(u) + self.d1.ln() + (1.0 - self.beta_gamma).ln()
            - log_add_exp(self.ln_beta + u, 0.0)
            - log_add_exp(u, self.ln_gamma);
        if self.beta_gamma >= 1.0 {
            0.0
        } else {
            ln.exp()
        }
    }

    /// Unique fixpoint of f, as ln x*.
    fn log_fixpoint(&self) -> f64 {
        bisect(|u| self.log_f(u) - u, -745.0, 709.0)
    }
}

/// Uniqueness classification of an antiferromagnetic 2-spin system.
pub fn twospin_uniqueness(beta: f64, gamma: f64, lambda: f64, delta: u32) -> Result<Uniqueness> {
    let r = Recursion::new(beta, gamma, lambda, delta)?;
    let u = r.log_fixpoint();
    let derivative = r.abs_derivative(u);
    let region = if (derivative - 1.0).abs() <= BOUNDARY_BAND {
        Region::Boundary
    } else if derivative > 1.0 {
        Region::NonUniqueness
    } else {
        Region::Uniqueness
    };
    Ok(Uniqueness {
        fixpoint: u.exp(),
        derivative,
        region,
    })
}

/// Activities λ at which |f'(x*)| crosses 1, for fixed β, γ, Δ.
pub fn critical_activities(beta: f64, gamma: f64, delta: u32) -> Result<Vec<f64>> {
    Recursion::new(beta, gamma, 1.0, delta)?;
    let excess = |ln_lambda: f64| -> f64 {
        let r = Recursion::new(beta, gamma, ln_lambda.exp(), delta).unwrap();
        r.abs_derivative(r.log_fixpoint()) - 1.0
    };
    let (lo, hi, steps) = (-40.0, 40.0, 4000);
    let h = (hi - lo) / steps as f64;
    let mut out = Vec::new();
    let mut prev = excess(lo);
    for k in 1..=steps {
        let t = lo + k as f64 * h;
        let v = excess(t);
        if (v > 0.0) != (prev > 0.0) {
            out.push(bisect(excess, t - h, t).exp());
        }
        prev = v;
    }
    Ok(out)
}

/// Closed-form uniqueness threshold of the hard-core model.
pub fn hard_core_critical_activity(delta: u32) -> f64 {
    let d = delta as f64;
    (d - 1.0).powf(d - 1.0) / (d - 2.0).powf(d)
}

/// Solution of x = f(y), y = f(x) with y > x.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoCycle {
    pub x: f64,
    pub y: f64,
    /// 1/(1+x).
    pub q_plus: f64,
    /// 1/(1+y).
    pub q_minus: f64,
    /// Relative residual of x = f(y).
    pub residual: f64,
}

fn sigmoid_neg(u: f64) -> f64 {
    // 1/(1+e^u)
    if u > 0.0 {
        let e = (-u).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + u.exp())
    }
}

/// Marginals of the two semi-translation-invariant branches.
pub fn twospin_branch_marginals(beta: f64, gamma: f64, lambda: f64, delta: u32) -> Result<TwoCycle> {
    let report = twospin_uniqueness(beta, gamma, lambda, delta)?;
    if report.region != Region::NonUniqueness {
        return Err(Error::Degenerate(format!(
            "no two-cycle: |f'(x*)| = {} is not above 1",
            report.derivative
        )));
    }
    let r = Recursion::new(beta, gamma, lambda, delta)?;
    let us = r.log_fixpoint();
    let h = |u: f64| r.log_f(r.log_f(u)) - u;
    let mut step = 1e-6;
    let mut hi = us - step;
    while h(hi) >= 0.0 {
        step *= 0.5;
        hi = us - step;
        if step < 1e-14 {
            return Err(Error::numerical("two-cycle bracket collapsed near the fixpoint"));
        }
    }
    let mut lo = hi - 1.0;
    while h(lo) <= 0.0 {
        lo -= 2.0 * (hi - lo);
        if lo < -1e6 {
            return Err(Error::numerical("two-cycle bracket not found"));
        }
    }
    let ux = bisect(h, lo, hi);
    let uy = r.log_f(ux);
    let back = r.log_f(uy);
    let residual = (back - ux).abs();
    Ok(TwoCycle {
        x: ux.exp(),
        y: uy.exp(),
        q_plus: sigmoid_neg(ux),
        q_minus: sigmoid_neg(uy),
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_add_exp_handles_infinities() {
        assert_eq!(log_add_exp(f64::NEG_INFINITY, 1.5), 1.5);
        assert!((log_add_exp(0.0, 0.0) - 2f64.ln()).abs() < 1e-15);
    }
}
