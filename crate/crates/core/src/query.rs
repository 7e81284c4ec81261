//! Resolution and evaluation of parsed queries against a model.

use std::fmt;

use serde_json::json;
use thiserror::Error;

use crate::dsl::{parse_query, AssignAst, ParseError, QueryAst, RegimeAst};
use crate::identities::{
    self, decompose_effect, default_collection, verify_model, DecompositionResult, IdentityError, IdentityReport,
    Outcome,
};
use crate::inference::{
    ace, ace_mean, adjustment_ace, exact_query, monte_carlo, AdjustmentResult, Event, InferenceError, Query,
    QueryResult,
};
use crate::model::Scm;
use crate::value::{fmt_rational, is_binary_domain, json_int, to_f64, Rational, Value};
use crate::worlds::{make_dynamic_intervention, StaticIntervention, WorldError, WorldSpec};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QueryError {
    #[error("parse error at {0}")]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Identity(#[from] IdentityError),
    #[error("unknown identity `{0}`")]
    UnknownIdentity(String),
    #[error("identity `{identity}` does not take argument `{arg}`")]
    BadArgument { identity: String, arg: String },
    #[error("`{var}` can only be imported from `{var}` in the donor world, not `{donor_var}`")]
    ImportMismatch { var: String, donor_var: String },
    #[error("{0} is only available with exact evaluation")]
    ExactOnly(String),
}

impl From<WorldError> for QueryError {
    fn from(e: WorldError) -> Self {
        QueryError::Inference(e.into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Exact,
    MonteCarlo { samples: u64, seed: u64 },
}

/// Value of an evaluated query.
#[derive(Debug, Clone, PartialEq)]
pub enum Answer {
    Value(QueryResult),
    /// Adjusted contrast with the interventional ACE for comparison.
    Adjusted {
        query: String,
        result: AdjustmentResult,
        ace: Rational,
    },
    Decomposition {
        query: String,
        result: Box<DecompositionResult>,
    },
    Checks(Vec<Outcome>),
}

impl Answer {
    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Answer::Value(r) => r.to_json(),
            Answer::Adjusted { query, result, ace } => {
                let mut j = result.to_json(query);
                j["ace_num"] = json_int(ace.numer());
                j["ace_den"] = json_int(ace.denom());
                j
            }
            Answer::Decomposition { query, result } => {
                let r =
                    |x: &Rational| json!({"num": json_int(x.numer()), "den": json_int(x.denom()), "value": to_f64(x)});
                json!({
                    "query": query,
                    "method": "exact",
                    "total": r(&result.total),
                    "indirect": r(&result.indirect),
                    "direct": r(&result.direct),
                })
            }
            Answer::Checks(out) => json!(out.iter().map(Outcome::to_json).collect::<Vec<_>>()),
        }
    }

    /// `false` when an asserted identity failed.
    pub fn pass(&self) -> bool {
        match self {
            Answer::Checks(out) => out.iter().all(Outcome::pass),
            _ => true,
        }
    }

    /// Warning shown when the adjusted contrast differs from the ACE.
    pub fn warning(&self) -> Option<String> {
        match self {
            Answer::Adjusted { result, ace, .. } if result.value != *ace => Some(format!(
                "warning: adjusted contrast {} differs from the interventional ACE {}; the adjustment set does not remove confounding",
                fmt_rational(&result.value),
                fmt_rational(ace)
            )),
            _ => None,
        }
    }
}

fn exact_line(r: &Rational) -> String {
    format!("{} = {}", fmt_rational(r), to_f64(r))
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Answer::Value(r) => writeln!(f, "{r}"),
            Answer::Adjusted { result, .. } => {
                writeln!(f, "{}", exact_line(&result.value))?;
                for s in &result.skipped {
                    writeln!(f, "note: skipped empty stratum ({})", crate::inference::fmt_bindings(s))?;
                }
                Ok(())
            }
            Answer::Decomposition { result, .. } => {
                writeln!(f, "total    {}", exact_line(&result.total))?;
                writeln!(f, "indirect {}", exact_line(&result.indirect))?;
                writeln!(f, "direct   {}", exact_line(&result.direct))
            }
            Answer::Checks(out) => out.iter().try_for_each(|o| write!(f, "{o}")),
        }
    }
}

fn bindings(pairs: &[(String, Value)]) -> Event {
    Event { atoms: pairs.to_vec() }
}

/// Turns a parsed regime into a [`WorldSpec`], solving any dynamic assignments.
pub fn resolve_regime(scm: &Scm, regime: &RegimeAst) -> Result<WorldSpec, QueryError> {
    let assigns = match regime {
        RegimeAst::Observational => return Ok(WorldSpec::Observational),
        RegimeAst::Do(a) => a,
    };
    let mut fixed = StaticIntervention::default();
    let mut rules = Vec::new();
    let mut imports = Vec::new();
    for a in assigns {
        match a {
            AssignAst::Value { var, value } => fixed.assignments.push((var.clone(), value.clone())),
            AssignAst::Solve { vars, solve } => {
                let control: Vec<&str> = solve.control.as_ref().unwrap_or(vars).iter().map(String::as_str).collect();
                let index: Vec<&str> = solve.index.iter().map(String::as_str).collect();
                let rule =
                    make_dynamic_intervention(scm, &solve.target, &solve.value, &index, &control, solve.selector)?;
                let keep: Vec<&str> = vars.iter().map(String::as_str).collect();
                rules.push(rule.project(&keep));
            }
            AssignAst::Import { var, donor_var, donor } => {
                if var != donor_var {
                    return Err(QueryError::ImportMismatch { var: var.clone(), donor_var: donor_var.clone() });
                }
                imports.push((var.clone(), resolve_regime(scm, donor)?));
            }
        }
    }
    let base = if rules.is_empty() { WorldSpec::Static(fixed) } else { WorldSpec::Dynamic { rules, fixed } };
    Ok(if imports.is_empty() { base } else { WorldSpec::nested(base, imports) })
}

/// Resolves a probability or expectation query.
pub fn resolve_query(scm: &Scm, ast: &QueryAst) -> Result<Option<Query>, QueryError> {
    Ok(match ast {
        QueryAst::Prob { event, regime, given } => Some(Query {
            target: crate::inference::Target::Prob(bindings(event)),
            world: resolve_regime(scm, regime)?,
            given: given.as_deref().map(bindings),
        }),
        QueryAst::Expect { var, regime, given } => Some(Query {
            target: crate::inference::Target::Expect(var.clone()),
            world: resolve_regime(scm, regime)?,
            given: given.as_deref().map(bindings),
        }),
        _ => None,
    })
}

fn arg_x0(identity: &str, args: &[(String, Option<Value>)]) -> Result<(String, String, Option<Value>), QueryError> {
    let (mut x, mut y, mut x0) = ("X".to_string(), "Y".to_string(), None);
    for (k, v) in args {
        match (k.as_str(), v) {
            ("x0", Some(v)) => x0 = Some(v.clone()),
            ("x", Some(Value::Sym(s))) => x = s.clone(),
            ("y", Some(Value::Sym(s))) => y = s.clone(),
            _ => return Err(QueryError::BadArgument { identity: identity.into(), arg: k.clone() }),
        }
    }
    Ok((x, y, x0))
}

type PerX0 = fn(&Scm, &str, &str, &Value) -> Result<IdentityReport, IdentityError>;

fn run_identity(scm: &Scm, name: &str, args: &[(String, Option<Value>)]) -> Result<Vec<Outcome>, QueryError> {
    let (x, y, x0) = arg_x0(name, args)?;
    let per_x0: Option<PerX0> = match name {
        "dynamic_unconfounded" => Some(identities::check_dynamic_unconfounded),
        "type_i" => Some(identities::check_type_i),
        "type_ii" => Some(identities::check_type_ii),
        "type_iii" => Some(identities::check_type_iii),
        "modifiable_confounded" => Some(identities::check_modifiable_confounded),
        "version_irrelevance" => Some(identities::check_version_irrelevance),
        _ => None,
    };
    let wrap = |r: Result<IdentityReport, IdentityError>| r.map(Outcome::Report).map_err(QueryError::from);
    if let Some(f) = per_x0 {
        let values = match x0 {
            Some(v) => vec![v],
            None => vec![Value::zero(), Value::one()],
        };
        return values.iter().map(|v| wrap(f(scm, &x, &y, v))).collect();
    }
    if x0.is_some() && name != "all" {
        return Err(QueryError::BadArgument { identity: name.into(), arg: "x0".into() });
    }
    let one = match name {
        "unconfounded" => identities::check_unconfounded(scm, &x, &y),
        "adjustment" => identities::check_adjustment(scm, &x, &y),
        "ignorability" => identities::check_ignorability(scm, &x, &y),
        "decomposition" => identities::check_decomposition(scm, &x, &y),
        "all" => return Ok(verify_model(scm, "", &x, &y)),
        _ => return Err(QueryError::UnknownIdentity(name.into())),
    };
    Ok(vec![wrap(one)?])
}

/// Evaluates one parsed query.
pub fn evaluate(scm: &Scm, ast: &QueryAst, method: Method) -> Result<Answer, QueryError> {
    if let Some(q) = resolve_query(scm, ast)? {
        return Ok(Answer::Value(match method {
            Method::Exact => exact_query(scm, &q)?,
            Method::MonteCarlo { samples, seed } => monte_carlo(scm, &q, samples, seed)?,
        }));
    }
    let label = match ast {
        QueryAst::Ace { x, y } => format!("ace {x} -> {y}"),
        QueryAst::Adjust { x, y, adjust } => format!("ace {x} -> {y} adjust {{{}}}", adjust.join(", ")),
        QueryAst::Decompose { x, y, selector } => format!("decompose {x} -> {y} select {selector}"),
        QueryAst::Identity { name, .. } => format!("check {name}"),
        QueryAst::Prob { .. } | QueryAst::Expect { .. } => unreachable!("resolved above"),
    };
    if method != Method::Exact {
        return Err(QueryError::ExactOnly(label));
    }
    match ast {
        QueryAst::Ace { x, y } => {
            let binary_y = scm.variable(y).is_some_and(|d| is_binary_domain(&d.domain));
            Ok(Answer::Value(if binary_y { ace(scm, x, y)? } else { ace_mean(scm, x, y)? }))
        }
        QueryAst::Adjust { x, y, adjust } => {
            let adj: Vec<&str> = adjust.iter().map(String::as_str).collect();
            let result = adjustment_ace(scm, x, y, &adj)?;
            let truth = ace(scm, x, y)?.as_exact().cloned().expect("exact");
            Ok(Answer::Adjusted { query: label, result, ace: truth })
        }
        QueryAst::Decompose { x, y, selector } => {
            let w1 = default_collection(scm, x, &Value::one(), *selector)?;
            let w0 = default_collection(scm, x, &Value::zero(), *selector)?;
            Ok(Answer::Decomposition { query: label, result: Box::new(decompose_effect(scm, x, y, &w1, &w0)?) })
        }
        QueryAst::Identity { name, args } => Ok(Answer::Checks(run_identity(scm, name, args)?)),
        QueryAst::Prob { .. } | QueryAst::Expect { .. } => unreachable!("resolved above"),
    }
}

/// Parses and evaluates `text`.
pub fn eval_str(scm: &Scm, text: &str, method: Method) -> Result<Answer, QueryError> {
    evaluate(scm, &parse_query(text)?, method)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::value::rat;

    fn exact(scm: &Scm, q: &str) -> Rational {
        match eval_str(scm, q, Method::Exact).unwrap() {
            Answer::Value(r) => r.as_exact().unwrap().clone(),
            Answer::Adjusted { result, .. } => result.value,
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn static_and_conditional() {
        let m2 = fixtures::m2();
        assert_eq!(exact(&m2, "P(Y=1 | do(X=1))"), rat(5, 8));
        assert_eq!(exact(&m2, "P(Y=1 | given X=1)"), rat(13, 16));
        assert_eq!(exact(&m2, "P(Y=1 | do(X=0), given W=1)"), rat(1, 4));
        assert_eq!(exact(&m2, "E(Y | do(X=1))"), rat(5, 8));
        assert_eq!(exact(&m2, "ace X -> Y"), rat(3, 8));
        assert_eq!(exact(&m2, "ace X -> Y adjust {W}"), rat(3, 8));
        assert_eq!(exact(&m2, "ace X -> Y adjust {}"), rat(9, 16));
    }

    #[test]
    fn dynamic_and_nested() {
        let m2 = fixtures::m2();
        assert_eq!(exact(&m2, "P(Y=1 | do(U = solve(X=1; W)))"), rat(5, 8));
        assert_eq!(exact(&m2, "P(Y=1 | do(W = solve(X=1; U)))"), rat(13, 16));
        assert_eq!(exact(&m2, "P(Y=1 | do(W = solve(X=1; U), X = X@do(W = solve(X=0; U))))"), rat(1, 4));
        assert_eq!(exact(&fixtures::m1b(), "P(Y=1 | do(V = solve(X=0; ϑ)))"), rat(1, 4));
        let m3 = fixtures::m3();
        let a = exact(&m3, "P(Y=1 | do((V, W) = solve(X=1; ϑ, Z)))");
        let b = exact(&m3, "P(Y=1 | do(X=1, W = solve(X=1; ϑ, Z; V, W)))");
        assert_eq!(a, b);
    }

    #[test]
    fn warnings_and_checks() {
        let m2 = fixtures::m2();
        let a = eval_str(&m2, "ace X -> Y adjust {}", Method::Exact).unwrap();
        assert!(a.warning().unwrap().contains("3/8"));
        assert!(eval_str(&m2, "ace X -> Y adjust {W}", Method::Exact).unwrap().warning().is_none());
        let d = eval_str(&m2, "decompose X -> Y", Method::Exact).unwrap();
        assert!(d.to_string().contains("9/16"));
        let c = eval_str(&m2, "check type_ii x0=1", Method::Exact).unwrap();
        assert!(c.pass());
        assert!(c.to_string().contains("differs: 13/16 vs 5/8"));
        assert!(eval_str(&m2, "check all", Method::Exact).unwrap().pass());
        assert_eq!(eval_str(&m2, "check nope", Method::Exact), Err(QueryError::UnknownIdentity("nope".into())));
        assert!(matches!(eval_str(&m2, "check unconfounded x0=1", Method::Exact), Err(QueryError::BadArgument { .. })));
    }

    #[test]
    fn resolve_errors() {
        let m2 = fixtures::m2();
        assert!(matches!(eval_str(&m2, "P(Q=1)", Method::Exact), Err(QueryError::Inference(_))));
        assert!(matches!(eval_str(&m2, "P(Y=1 | do(X=1)", Method::Exact), Err(QueryError::Parse(_))));
        assert!(matches!(
            eval_str(&m2, "ace X -> Y", Method::MonteCarlo { samples: 10, seed: 0 }),
            Err(QueryError::ExactOnly(_))
        ));
    }
}
