//! Exact rational helpers: parsing, printing and conversions.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, ToPrimitive, Zero};

pub type Rational = BigRational;

/// Failure to parse a rational literal; `column` is 1-based within the literal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LiteralError {
    pub column: usize,
    pub message: String,
}

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

pub fn ratio(p: i64, q: i64) -> Rational {
    Rational::new(BigInt::from(p), BigInt::from(q))
}

/// Parses `p/q`, an integer, or a decimal literal with optional exponent.
pub fn parse_rational(s: &str) -> Result<Rational, LiteralError> {
    let err = |column: usize, message: &str| LiteralError {
        column,
        message: message.to_string(),
    };
    if s.is_empty() {
        return Err(err(1, "empty literal"));
    }
    if let Some(slash) = s.find('/') {
        let num = parse_integer(&s[..slash]).map_err(|c| err(c, "malformed numerator"))?;
        let rest = &s[slash + 1..];
        let den = parse_unsigned(rest).map_err(|c| err(slash + 1 + c, "malformed denominator"))?;
        if den.is_zero() {
            return Err(err(slash + 2, "zero denominator"));
        }
        return Ok(Rational::new(num, den));
    }
    parse_decimal(s).map_err(|(c, m)| err(c, m))
}

fn parse_unsigned(s: &str) -> Result<BigInt, usize> {
    if s.is_empty() {
        return Err(1);
    }
    for (i, ch) in s.chars().enumerate() {
        if !ch.is_ascii_digit() {
            return Err(i + 1);
        }
    }
    s.parse::<BigInt>().map_err(|_| 1)
}

fn parse_integer(s: &str) -> Result<BigInt, usize> {
    match s.strip_prefix('-') {
        Some(rest) => parse_unsigned(rest).map(|v| -v).map_err(|c| c + 1),
        None => match s.strip_prefix('+') {
            Some(rest) => parse_unsigned(rest).map_err(|c| c + 1),
            None => parse_unsigned(s),
        },
    }
}

fn parse_decimal(s: &str) -> Result<Rational, (usize, &'static str)> {
    let bytes = s.as_bytes();
    let mut i = 0;
    let mut negative = false;
    if bytes[0] == b'-' || bytes[0] == b'+' {
        negative = bytes[0] == b'-';
        i = 1;
    }
    let mut digits = String::new();
    let mut frac_len: i64 = 0;
    let mut seen_dot = false;
    while i < bytes.len() {
        let ch = bytes[i];
        if ch.is_ascii_digit() {
            digits.push(ch as char);
            if seen_dot {
                frac_len += 1;
            }
        } else if ch == b'.' && !seen_dot {
            seen_dot = true;
        } else {
            break;
        }
        i += 1;
    }
    if digits.is_empty() {
        return Err((i + 1, "expected digits"));
    }
    let mut exponent: i64 = 0;
    if i < bytes.len() {
        if bytes[i] != b'e' && bytes[i] != b'E' {
            return Err((i + 1, "unexpected character"));
        }
        let start = i + 1;
        let exp = parse_integer(&s[start..]).map_err(|c| (start + c, "malformed exponent"))?;
        exponent = exp
            .to_i64()
            .filter(|e| e.abs() <= 4096)
            .ok_or((start + 1, "exponent out of range"))?;
    }
    let mantissa: BigInt = digits.parse().map_err(|_| (1, "malformed digits"))?;
    let shift = exponent - frac_len;
    let ten = BigInt::from(10);
    let mut value = if shift >= 0 {
        Rational::from_integer(mantissa * num::pow(ten, shift as usize))
    } else {
        Rational::new(mantissa, num::pow(ten, (-shift) as usize))
    };
    if negative {
        value = -value;
    }
    Ok(value)
}

/// Prints as `p/q`, or `p` for integers.
pub fn fmt_rational(r: &Rational) -> String {
    r.to_string()
}

/// Prints a real with 17 significant digits.
pub fn fmt_real(x: f64) -> String {
    if x.is_finite() {
        format!("{:.16e}", x)
    } else {
        format!("{}", x)
    }
}

pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Natural logarithm of a positive rational, safe for values beyond the
/// f64 range.
pub fn ln(r: &Rational) -> f64 {
    fn ln_int(n: &num::BigInt) -> f64 {
        let bits = n.bits();
        if bits <= 1000 {
            return n.to_f64().unwrap_or(f64::NAN).ln();
        }
        let shift = bits - 64;
        (n >> shift as usize).to_f64().unwrap_or(f64::NAN).ln() + shift as f64 * std::f64::consts::LN_2
    }
    if !r.is_positive() {
        return f64::NAN;
    }
    ln_int(r.numer()) - ln_int(r.denom())
}

/// Exact binary value of a finite float.
pub fn from_f64(x: f64) -> Option<Rational> {
    Rational::from_float(x)
}

/// Integer power with negative exponents allowed for nonzero bases.
pub fn pow(base: &Rational, exp: i64) -> Rational {
    if exp >= 0 {
        num::pow(base.clone(), exp as usize)
    } else {
        num::pow(base.recip(), (-exp) as usize)
    }
}

/// Best rational approximation with denominator at most `max_den`.
pub fn approximate(x: f64, max_den: u64) -> Option<Rational> {
    if !x.is_finite() {
        return None;
    }
    let exact = from_f64(x)?;
    let max_den = BigInt::from(max_den);
    let (mut p0, mut q0) = (BigInt::zero(), BigInt::one());
    let (mut p1, mut q1) = (BigInt::one(), BigInt::zero());
    let mut rest = exact;
    loop {
        let a = rest.floor().to_integer();
        let p2 = &a * &p1 + &p0;
        let q2 = &a * &q1 + &q0;
        if q2 > max_den {
            break;
        }
        p0 = std::mem::replace(&mut p1, p2);
        q0 = std::mem::replace(&mut q1, q2);
        let frac = &rest - Rational::from_integer(a);
        if frac.is_zero() {
            break;
        }
        rest = frac.recip();
    }
    if q1.is_zero() {
        return None;
    }
    Some(Rational::new(p1, q1))
}

pub fn abs(r: &Rational) -> Rational {
    r.abs()
}

pub fn max(a: &Rational, b: &Rational) -> Rational {
    if a >= b {
        a.clone()
    } else {
        b.clone()
    }
}

pub fn min(a: &Rational, b: &Rational) -> Rational {
    if a <= b {
        a.clone()
    } else {
        b.clone()
    }
}
