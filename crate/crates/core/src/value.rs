//! Domain values and exact rational helpers.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Exact probability / numeric value.
pub type Rational = BigRational;

/// Builds `num/den` as an exact rational. Panics on a zero denominator.
pub fn rat(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Renders `n` or `n/d`, the literal form used by model files and CSV output.
pub fn fmt_rational(r: &Rational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// JSON number when the integer fits in `i64`, otherwise a decimal string.
pub fn json_int(n: &BigInt) -> serde_json::Value {
    match n.to_i64() {
        Some(i) => serde_json::Value::from(i),
        None => serde_json::Value::String(n.to_string()),
    }
}

/// Parses `n`, `-n`, `n/d` or `-n/d`.
pub fn parse_rational(text: &str) -> Option<Rational> {
    let (num, den) = match text.split_once('/') {
        Some((n, d)) => (n, Some(d)),
        None => (text, None),
    };
    let digits = num.strip_prefix('-').unwrap_or(num);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let num: BigInt = num.parse().ok()?;
    let den: BigInt = match den {
        Some(d) if !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()) => d.parse().ok()?,
        Some(_) => return None,
        None => BigInt::one(),
    };
    if den.is_zero() {
        return None;
    }
    Some(Rational::new(num, den))
}

/// One element of a finite variable domain: an exact number or a symbolic label.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Num(Rational),
    Sym(String),
}

impl Value {
    pub fn int(n: i64) -> Self {
        Value::Num(int(n))
    }

    pub fn sym(label: impl Into<String>) -> Self {
        Value::Sym(label.into())
    }

    pub fn zero() -> Self {
        Value::Num(Rational::zero())
    }

    pub fn one() -> Self {
        Value::Num(Rational::one())
    }

    pub fn bool(b: bool) -> Self {
        if b {
            Value::one()
        } else {
            Value::zero()
        }
    }

    /// `Some(b)` when the value is exactly 0 or 1.
    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Num(r) if r.is_zero() => Some(false),
            Value::Num(r) if r.is_one() => Some(true),
            _ => None,
        }
    }

    pub fn as_rational(&self) -> Option<&Rational> {
        match self {
            Value::Num(r) => Some(r),
            Value::Sym(_) => None,
        }
    }

    /// Parses the literal form: a rational, or otherwise a label.
    pub fn parse_literal(text: &str) -> Option<Self> {
        let text = text.trim();
        if text.is_empty() {
            return None;
        }
        if let Some(r) = parse_rational(text) {
            return Some(Value::Num(r));
        }
        let mut chars = text.chars();
        let first = chars.next()?;
        let ident = (first.is_alphabetic() || first == '_') && chars.all(|c| c.is_alphanumeric() || c == '_');
        ident.then(|| Value::Sym(text.to_string()))
    }

    pub fn is_negative(&self) -> bool {
        matches!(self, Value::Num(r) if r.is_negative())
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Num(r) => f.write_str(&fmt_rational(r)),
            Value::Sym(s) => f.write_str(s),
        }
    }
}

impl From<i64> for Value {
    fn from(n: i64) -> Self {
        Value::int(n)
    }
}

/// True iff `domain` is exactly the set {0, 1}.
pub fn is_binary_domain(domain: &[Value]) -> bool {
    domain.len() == 2 && domain.contains(&Value::zero()) && domain.contains(&Value::one())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literal_forms() {
        assert_eq!(Value::parse_literal("3/4"), Some(Value::Num(rat(3, 4))));
        assert_eq!(Value::parse_literal("-2"), Some(Value::int(-2)));
        assert_eq!(Value::parse_literal("2/4"), Some(Value::Num(rat(1, 2))));
        assert_eq!(Value::parse_literal("lean"), Some(Value::sym("lean")));
        assert_eq!(Value::parse_literal("1/0"), None);
        assert_eq!(Value::parse_literal("a-b"), None);
        assert_eq!(Value::Num(rat(-3, 6)).to_string(), "-1/2");
    }

    #[test]
    fn binary_domain() {
        assert!(is_binary_domain(&[Value::one(), Value::zero()]));
        assert!(!is_binary_domain(&[Value::zero(), Value::int(2)]));
        assert!(!is_binary_domain(&[Value::zero()]));
    }
}
