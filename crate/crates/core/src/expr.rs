//! Structural equation bodies.
//!
//! Boolean connectives (`and`, `or`, `xor`, `not`, and the condition of `if`)
//! only accept operands equal to 0 or 1. Other domains go through `eq`,
//! `if` branches or explicit lookup tables.

use std::fmt;

use thiserror::Error;

use crate::value::Value;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Lit(Value),
    Var(String),
    And(Vec<Expr>),
    Or(Vec<Expr>),
    Xor(Vec<Expr>),
    Not(Box<Expr>),
    Eq(Box<Expr>, Box<Expr>),
    If(Box<Expr>, Box<Expr>, Box<Expr>),
    Table(LookupTable),
}

/// Explicit lookup over a tuple of variables, with an optional fallback.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LookupTable {
    pub keys: Vec<String>,
    pub rows: Vec<(Vec<Value>, Value)>,
    pub default: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("`{op}` expects 0 or 1, got {value}")]
    NonBoolean { op: &'static str, value: Value },
    #[error("no table row matches ({})", join(.key))]
    NoTableRow { key: Vec<Value> },
    #[error("unbound variable `{0}`")]
    Unbound(String),
}

fn join(values: &[Value]) -> String {
    values.iter().map(Value::to_string).collect::<Vec<_>>().join(", ")
}

impl Expr {
    pub fn var(name: impl Into<String>) -> Self {
        Expr::Var(name.into())
    }

    pub fn lit(v: impl Into<Value>) -> Self {
        Expr::Lit(v.into())
    }

    pub fn and(args: Vec<Expr>) -> Self {
        Expr::And(args)
    }

    pub fn or(args: Vec<Expr>) -> Self {
        Expr::Or(args)
    }

    pub fn xor(args: Vec<Expr>) -> Self {
        Expr::Xor(args)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(arg: Expr) -> Self {
        Expr::Not(Box::new(arg))
    }

    pub fn eq(a: Expr, b: Expr) -> Self {
        Expr::Eq(Box::new(a), Box::new(b))
    }

    pub fn ite(c: Expr, t: Expr, e: Expr) -> Self {
        Expr::If(Box::new(c), Box::new(t), Box::new(e))
    }

    /// Free variables in order of first occurrence.
    pub fn free_vars(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut Vec<String>) {
        let mut push = |name: &String| {
            if !out.contains(name) {
                out.push(name.clone());
            }
        };
        match self {
            Expr::Lit(_) => {}
            Expr::Var(n) => push(n),
            Expr::Table(t) => t.keys.iter().for_each(push),
            Expr::And(args) | Expr::Or(args) | Expr::Xor(args) => args.iter().for_each(|a| a.collect_vars(out)),
            Expr::Not(a) => a.collect_vars(out),
            Expr::Eq(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Expr::If(c, t, e) => {
                c.collect_vars(out);
                t.collect_vars(out);
                e.collect_vars(out);
            }
        }
    }

    /// Variable operands that sit directly under a boolean connective.
    pub(crate) fn boolean_operands(&self, out: &mut Vec<String>) {
        let direct = |args: &[&Expr], out: &mut Vec<String>| {
            for a in args {
                if let Expr::Var(n) = a {
                    out.push(n.clone());
                }
            }
        };
        match self {
            Expr::Lit(_) | Expr::Var(_) | Expr::Table(_) => {}
            Expr::And(args) | Expr::Or(args) | Expr::Xor(args) => {
                direct(&args.iter().collect::<Vec<_>>(), out);
                args.iter().for_each(|a| a.boolean_operands(out));
            }
            Expr::Not(a) => {
                direct(&[a], out);
                a.boolean_operands(out);
            }
            Expr::Eq(a, b) => {
                a.boolean_operands(out);
                b.boolean_operands(out);
            }
            Expr::If(c, t, e) => {
                direct(&[c], out);
                c.boolean_operands(out);
                t.boolean_operands(out);
                e.boolean_operands(out);
            }
        }
    }

    pub(crate) fn tables(&self) -> Vec<&LookupTable> {
        let mut out = Vec::new();
        self.walk_tables(&mut out);
        out
    }

    fn walk_tables<'a>(&'a self, out: &mut Vec<&'a LookupTable>) {
        match self {
            Expr::Table(t) => out.push(t),
            Expr::Lit(_) | Expr::Var(_) => {}
            Expr::And(args) | Expr::Or(args) | Expr::Xor(args) => args.iter().for_each(|a| a.walk_tables(out)),
            Expr::Not(a) => a.walk_tables(out),
            Expr::Eq(a, b) => {
                a.walk_tables(out);
                b.walk_tables(out);
            }
            Expr::If(c, t, e) => {
                c.walk_tables(out);
                t.walk_tables(out);
                e.walk_tables(out);
            }
        }
    }

    pub fn eval<'v>(&self, env: &dyn Fn(&str) -> Option<&'v Value>) -> Result<Value, EvalError> {
        let boolean = |op: &'static str, e: &Expr| -> Result<bool, EvalError> {
            let v = e.eval(env)?;
            v.as_bool().ok_or(EvalError::NonBoolean { op, value: v })
        };
        Ok(match self {
            Expr::Lit(v) => v.clone(),
            Expr::Var(n) => env(n).cloned().ok_or_else(|| EvalError::Unbound(n.clone()))?,
            Expr::And(args) => {
                let mut acc = true;
                for a in args {
                    acc &= boolean("and", a)?;
                }
                Value::bool(acc)
            }
            Expr::Or(args) => {
                let mut acc = false;
                for a in args {
                    acc |= boolean("or", a)?;
                }
                Value::bool(acc)
            }
            Expr::Xor(args) => {
                let mut acc = false;
                for a in args {
                    acc ^= boolean("xor", a)?;
                }
                Value::bool(acc)
            }
            Expr::Not(a) => Value::bool(!boolean("not", a)?),
            Expr::Eq(a, b) => Value::bool(a.eval(env)? == b.eval(env)?),
            Expr::If(c, t, e) => {
                if boolean("if", c)? {
                    t.eval(env)?
                } else {
                    e.eval(env)?
                }
            }
            Expr::Table(t) => {
                let key = t
                    .keys
                    .iter()
                    .map(|k| env(k).cloned().ok_or_else(|| EvalError::Unbound(k.clone())))
                    .collect::<Result<Vec<_>, _>>()?;
                match t.rows.iter().find(|(k, _)| *k == key) {
                    Some((_, v)) => v.clone(),
                    None => t.default.clone().ok_or(EvalError::NoTableRow { key })?,
                }
            }
        })
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn list(f: &mut fmt::Formatter<'_>, op: &str, args: &[&Expr]) -> fmt::Result {
            write!(f, "{op}(")?;
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{a}")?;
            }
            f.write_str(")")
        }
        match self {
            Expr::Lit(v) => write!(f, "{v}"),
            Expr::Var(n) => f.write_str(n),
            Expr::And(a) => list(f, "and", &a.iter().collect::<Vec<_>>()),
            Expr::Or(a) => list(f, "or", &a.iter().collect::<Vec<_>>()),
            Expr::Xor(a) => list(f, "xor", &a.iter().collect::<Vec<_>>()),
            Expr::Not(a) => list(f, "not", &[a]),
            Expr::Eq(a, b) => list(f, "eq", &[a, b]),
            Expr::If(c, t, e) => list(f, "if", &[c, t, e]),
            Expr::Table(t) => {
                write!(f, "table({}) {{", t.keys.join(", "))?;
                let single = t.keys.len() == 1;
                let mut first = true;
                for (key, v) in &t.rows {
                    f.write_str(if first { " " } else { ", " })?;
                    first = false;
                    if single {
                        write!(f, "{}: {v}", key[0])?;
                    } else {
                        write!(f, "({}): {v}", join(key))?;
                    }
                }
                if let Some(d) = &t.default {
                    f.write_str(if first { " " } else { ", " })?;
                    first = false;
                    write!(f, "_: {d}")?;
                }
                f.write_str(if first { "}" } else { " }" })
            }
        }
    }
}
