//! Exact rational constants.
//!
//! Literals written in a property file and every constant derived from them
//! are carried as arbitrary-precision rationals, so that emitted SMT-LIB and
//! VNN-LIB text states exactly the numbers the user wrote. Binary64 values
//! (weights, dataset cells) convert exactly into this representation.

use num::bigint::Sign;
use num::{BigInt, BigRational, One, Signed, ToPrimitive, Zero};

pub type Rational = BigRational;

/// Parses `[-]digits[.digits]` exactly.
pub fn parse_decimal(text: &str) -> Option<Rational> {
    let (negative, body) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text),
    };
    let (int_part, frac_part) = match body.split_once('.') {
        Some((i, f)) => (i, f),
        None => (body, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.bytes().all(|b| b.is_ascii_digit()) || !frac_part.bytes().all(|b| b.is_ascii_digit())
    {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let numer: BigInt = if digits.is_empty() { BigInt::zero() } else { digits.parse().ok()? };
    let denom = num::pow(BigInt::from(10u32), frac_part.len());
    let value = Rational::new(numer, denom);
    Some(if negative { -value } else { value })
}

/// Exact conversion of a finite double.
pub fn from_f64(x: f64) -> Option<Rational> {
    Rational::from_float(x)
}

pub fn from_i64(x: i64) -> Rational {
    Rational::from_integer(BigInt::from(x))
}

/// Nearest double.
pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Largest double not above `r`.
pub fn to_f64_down(r: &Rational) -> f64 {
    let f = to_f64(r);
    match from_f64(f) {
        Some(back) if &back > r => f.next_down(),
        _ => f,
    }
}

/// Smallest double not below `r`.
pub fn to_f64_up(r: &Rational) -> f64 {
    let f = to_f64(r);
    match from_f64(f) {
        Some(back) if &back < r => f.next_up(),
        _ => f,
    }
}

/// Finite decimal expansion, when one exists (denominator of the form 2^a 5^b).
///
/// Always contains a decimal point: `3` renders as `3.0`.
pub fn format_decimal(r: &Rational) -> Option<String> {
    let denom = r.denom().clone();
    let mut rest = denom.clone();
    let two = BigInt::from(2u32);
    let five = BigInt::from(5u32);
    let (mut twos, mut fives) = (0usize, 0usize);
    while (&rest % &two).is_zero() {
        rest /= &two;
        twos += 1;
    }
    while (&rest % &five).is_zero() {
        rest /= &five;
        fives += 1;
    }
    if !rest.is_one() {
        return None;
    }
    let scale = twos.max(fives);
    let scaled = r.numer() * num::pow(BigInt::from(10u32), scale) / &denom;
    let negative = scaled.sign() == Sign::Minus;
    let mut digits = scaled.abs().to_string();
    if digits.len() <= scale {
        digits = format!("{}{}", "0".repeat(scale + 1 - digits.len()), digits);
    }
    let split = digits.len() - scale;
    let (int_part, frac_part) = digits.split_at(split);
    let frac = frac_part.trim_end_matches('0');
    let frac = if frac.is_empty() { "0" } else { frac };
    Some(format!("{}{}.{}", if negative { "-" } else { "" }, int_part, frac))
}

/// SMT-LIB real literal: `0.5`, `(- 0.5)`, `(/ 1.0 3.0)`, `(- (/ 1.0 3.0))`.
pub fn smt_literal(r: &Rational) -> String {
    let magnitude = r.abs();
    let body = match format_decimal(&magnitude) {
        Some(text) => text,
        None => format!("(/ {}.0 {}.0)", magnitude.numer(), magnitude.denom()),
    };
    if r.is_negative() {
        format!("(- {body})")
    } else {
        body
    }
}

/// Display form for reports and pretty-printing: decimal when finite, `n/d` otherwise.
pub fn display(r: &Rational) -> String {
    format_decimal(r).unwrap_or_else(|| format!("{}/{}", r.numer(), r.denom()))
}

pub fn is_integer(r: &Rational) -> bool {
    r.is_integer()
}

pub fn to_i64(r: &Rational) -> Option<i64> {
    if r.is_integer() {
        r.to_integer().to_i64()
    } else {
        None
    }
}
