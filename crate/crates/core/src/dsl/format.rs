use std::fmt::Write;

use crate::model::{Kind, Modifiability, Observability, Scm, VariableDecl};
use crate::value::{fmt_rational, Rational, Value};

fn dist(domain: &[Value], probs: &[Rational]) -> String {
    let entries: Vec<String> = domain.iter().zip(probs).map(|(v, p)| format!("{v}: {}", fmt_rational(p))).collect();
    format!("{{{}}}", entries.join(", "))
}

fn flags(v: &VariableDecl) -> String {
    let mut out = String::new();
    match (v.kind, v.observability, v.modifiability) {
        (Kind::Exogenous, o, m) => {
            if o == Observability::Observed {
                out.push_str(" observed");
            }
            if m == Modifiability::Modifiable {
                out.push_str(" modifiable");
            }
        }
        (Kind::Endogenous, o, m) => {
            if o == Observability::Latent {
                out.push_str(" latent");
            }
            if m == Modifiability::NonModifiable {
                out.push_str(" nonmodifiable");
            }
        }
    }
    out
}

/// Canonical text for a validated model, one declaration per line in
/// declaration order.
pub fn format_model(scm: &Scm) -> String {
    let mut out = String::new();
    for v in scm.variables() {
        match v.kind {
            Kind::Exogenous => {
                let t = scm.table(&v.name).expect("exogenous variable has a table");
                if t.conditioners.is_empty() {
                    let _ = write!(out, "exo {} ~ {}", v.name, dist(&v.domain, &t.rows[0].probs));
                } else {
                    let rows: Vec<String> = t
                        .rows
                        .iter()
                        .map(|r| {
                            let key = if r.given.len() == 1 {
                                r.given[0].to_string()
                            } else {
                                format!("({})", r.given.iter().map(Value::to_string).collect::<Vec<_>>().join(", "))
                            };
                            format!("{key}: {}", dist(&v.domain, &r.probs))
                        })
                        .collect();
                    let _ = write!(out, "exo {} given {} ~ {{{}}}", v.name, t.conditioners.join(", "), rows.join(", "));
                }
            }
            Kind::Endogenous => {
                let eq = scm.equation(&v.name).expect("endogenous variable has an equation");
                let domain: Vec<String> = v.domain.iter().map(Value::to_string).collect();
                let _ = write!(out, "var {} in {{{}}} := {}", v.name, domain.join(", "), eq.body);
            }
        }
        out.push_str(&flags(v));
        out.push('\n');
    }
    out
}
