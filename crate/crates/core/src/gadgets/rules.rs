//! Composition rules shared by edge and field gadgets.
//!
//! Both kinds compose the same way: a new value is a Möbius image of the
//! product of the children's values, and the new observable gap is an affine
//! function of the sum of the children's gaps.

use num::{One, Signed, Zero};

use crate::error::{Error, Result};
use crate::model::{Potts, TwoSpin, VertexEdge};
use crate::rational::{int, to_f64, Rational};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Kind {
    /// Two-port gadgets for the Potts model, characterised by (B, S).
    Edge,
    /// Rooted gadgets for 2-spin systems, characterised by (R, O).
    Field,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Edge => "edge",
            Kind::Field => "field",
        }
    }
}

/// `c0 + c1 v + cm1 / v`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineInverse {
    pub c0: Rational,
    pub c1: Rational,
    pub cm1: Rational,
}

impl AffineInverse {
    pub fn eval(&self, v: &Rational) -> Rational {
        &self.c0 + &self.c1 * v + &self.cm1 / v
    }

    pub fn eval_f64(&self, v: f64) -> f64 {
        to_f64(&self.c0) + to_f64(&self.c1) * v + to_f64(&self.cm1) / v
    }

    /// Largest |value| over `[lo, hi]` with `0 < lo <= hi`.
    pub fn sup_abs(&self, lo: f64, hi: f64) -> f64 {
        let mut best = self.eval_f64(lo).abs().max(self.eval_f64(hi).abs());
        let (c1, cm1) = (to_f64(&self.c1), to_f64(&self.cm1));
        if c1 != 0.0 && cm1 / c1 > 0.0 {
            let v = (cm1 / c1).sqrt();
            if v > lo && v < hi {
                best = best.max(self.eval_f64(v).abs());
            }
        }
        best
    }

    /// Smallest |value| over `[lo, hi]`, assuming no sign change inside.
    pub fn inf_abs(&self, lo: f64, hi: f64) -> f64 {
        let mut best = self.eval_f64(lo).abs().min(self.eval_f64(hi).abs());
        let (c1, cm1) = (to_f64(&self.c1), to_f64(&self.cm1));
        if c1 != 0.0 && cm1 / c1 > 0.0 {
            let v = (cm1 / c1).sqrt();
            if v > lo && v < hi {
                best = best.min(self.eval_f64(v).abs());
            }
        }
        best
    }
}

/// Recursion data for one kind of gadget under fixed model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Rules {
    pub kind: Kind,
    /// Möbius map v -> (1 + g l P)/(b + l P) applied to the product P.
    pub mb: Rational,
    pub mg: Rational,
    pub ml: Rational,
    pub omega: AffineInverse,
    pub theta: AffineInverse,
    pub potts: Option<Potts>,
    pub twospin: Option<(TwoSpin, VertexEdge)>,
}

/// Effective constants of the Potts edge recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct PottsConstants {
    pub beta_hat: Rational,
    pub gamma_hat: Rational,
    pub lambda_hat: Rational,
    /// Decay factor of odd paths.
    pub kappa: Rational,
}

pub fn potts_constants(p: &Potts) -> Result<PottsConstants> {
    p.validate()?;
    if p.beta <= Rational::one() {
        return Err(Error::invalid("edge gadgets need a ferromagnetic Potts model (beta > 1)"));
    }
    let q = int(p.q as i64);
    let one = Rational::one();
    let b1 = &p.beta - &one;
    let denom = int(2) * &p.beta + &q - int(2);
    let beta_hat = &one + &b1 * &b1 / ((&q - &one) * &denom);
    let gamma_hat = &one + &b1 * &b1 / &denom;
    let lambda_hat = (&q - &one).recip();
    let kappa = (&beta_hat - &one) * (&gamma_hat - &one) / (&beta_hat * &gamma_hat - &one);
    Ok(PottsConstants {
        beta_hat,
        gamma_hat,
        lambda_hat,
        kappa,
    })
}

fn omega_form(b: &Rational, g: &Rational) -> AffineInverse {
    let d = Rational::one() - b * g;
    AffineInverse {
        c0: (Rational::one() + b * g) / &d,
        c1: -b / &d,
        cm1: -g / &d,
    }
}

impl Rules {
    pub fn potts(p: &Potts) -> Result<Rules> {
        let c = potts_constants(p)?;
        let q = int(p.q as i64);
        let one = Rational::one();
        // theta(B) = k (B - 1)(B + q - 1) / B
        let k = int(2) * &p.beta / ((&p.beta - &one) * (&p.beta + &q - &one));
        let theta = AffineInverse {
            c0: &k * (&q - int(2)),
            c1: k.clone(),
            cm1: -(&k * (&q - &one)),
        };
        Ok(Rules {
            kind: Kind::Edge,
            omega: omega_form(&c.beta_hat, &c.gamma_hat),
            mb: c.beta_hat,
            mg: c.gamma_hat,
            ml: c.lambda_hat,
            theta,
            potts: Some(p.clone()),
            twospin: None,
        })
    }

    pub fn twospin(t: &TwoSpin, obs: &VertexEdge) -> Result<Rules> {
        t.validate()?;
        if !t.is_antiferromagnetic() {
            return Err(Error::invalid("field gadgets need an antiferromagnetic system (beta*gamma < 1)"));
        }
        let (b, g) = (&t.beta, &t.gamma);
        let d = Rational::one() - b * g;
        let bg = b * g;
        let theta = AffineInverse {
            c0: (-(&obs.a) * (Rational::one() + &bg) + &obs.b * &bg - &obs.c * &bg) / &d,
            c1: (&obs.a * b - &obs.b * b) / &d,
            cm1: (&obs.a * g + &obs.c * g) / &d,
        };
        Ok(Rules {
            kind: Kind::Field,
            omega: omega_form(b, g),
            mb: b.clone(),
            mg: g.clone(),
            ml: t.lambda.clone(),
            theta,
            potts: None,
            twospin: Some((t.clone(), obs.clone())),
        })
    }

    /// Value of the degenerate gadget.
    pub fn unit() -> Rational {
        Rational::one()
    }

    /// Möbius image of a product of child values.
    pub fn merge(&self, product: &Rational) -> Rational {
        let lp = &self.ml * product;
        (Rational::one() + &self.mg * &lp) / (&self.mb + lp)
    }

    /// Value and gap of a composition of children given as (value, gap).
    pub fn compose(&self, children: &[(Rational, Rational)]) -> (Rational, Rational) {
        let mut product = Rational::one();
        let mut gaps = Rational::zero();
        for (v, g) in children {
            product *= v;
            gaps += g;
        }
        let v = self.merge(&product);
        let g = self.theta.eval(&v) - self.omega.eval(&v) * gaps;
        (v, g)
    }

    /// The one-child merge map v -> merge(v * member).
    pub fn map(&self, v: &Rational, member: &Rational) -> Rational {
        self.merge(&(v * member))
    }

    /// Gap map (v, g) -> theta(phi) - omega(phi)(g + member_gap).
    pub fn gap_map(&self, v: &Rational, g: &Rational, member: &(Rational, Rational)) -> Rational {
        let phi = self.map(v, &member.0);
        self.theta.eval(&phi) - self.omega.eval(&phi) * (g + &member.1)
    }

    /// Preimage of `x` under the map for `member`, if it is positive.
    pub fn pullback(&self, x: &Rational, member: &Rational) -> Option<Rational> {
        let denom = &self.ml * (x - &self.mg) * member;
        if denom.is_zero() {
            return None;
        }
        let y = (Rational::one() - &self.mb * x) / denom;
        if y.is_positive() {
            Some(y)
        } else {
            None
        }
    }

    /// |d/dv merge(v * member)|, decreasing in v > 0.
    pub fn map_slope(&self, v: &Rational, member: &Rational) -> Rational {
        let s = &self.mb + &self.ml * v * member;
        (member * &self.ml * (&self.mb * &self.mg - Rational::one())).abs() / (&s * &s)
    }

    /// Fixed point of the binary recursion x = merge(x^2); 1 for edges.
    pub fn fixpoint(&self) -> f64 {
        if self.kind == Kind::Edge {
            return 1.0;
        }
        let (b, g, l) = (to_f64(&self.mb), to_f64(&self.mg), to_f64(&self.ml));
        // h(x) = merge(x^2) - x is decreasing on (0, inf).
        let h = |x: f64| (1.0 + g * l * x * x) / (b + l * x * x) - x;
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        while h(hi) > 0.0 {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if h(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// omega at the fixpoint.
    pub fn omega_star(&self) -> f64 {
        self.omega.eval_f64(self.fixpoint())
    }
}
