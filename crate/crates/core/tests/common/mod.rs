//! Brute-force reference semantics, written against the public model data
//! only: exogenous tables are expanded row by row and equations are evaluated
//! by repeated sweeps until every variable is settled.

#![allow(dead_code)]

use std::collections::BTreeMap;

use doeng::model::ExogenousTable;
use doeng::worlds::DynamicIntervention;
use doeng::{Rational, Scm, Value, WorldSpec};
use num_traits::{One, Zero};

pub type Assignment = BTreeMap<String, Value>;

/// Every exogenous configuration with positive probability.
pub fn exogenous_joint(scm: &Scm) -> Vec<(Assignment, Rational)> {
    let mut pending: Vec<_> = scm.tables().iter().collect();
    let mut order = Vec::new();
    while !pending.is_empty() {
        let before = pending.len();
        pending.retain(|t| {
            let ready = t.conditioners.iter().all(|c| order.iter().any(|o: &&ExogenousTable| &o.variable == c));
            if ready {
                order.push(*t);
            }
            !ready
        });
        assert!(pending.len() < before, "cyclic exogenous tables");
    }
    let mut out = vec![(Assignment::new(), Rational::one())];
    for table in order {
        let domain = &scm.variable(&table.variable).unwrap().domain;
        let mut next = Vec::new();
        for (partial, p) in out {
            let given: Vec<Value> = table.conditioners.iter().map(|c| partial[c].clone()).collect();
            let row = table.rows.iter().find(|r| r.given == given).expect("table row");
            for (v, q) in domain.iter().zip(&row.probs) {
                if q.is_zero() {
                    continue;
                }
                let mut a = partial.clone();
                a.insert(table.variable.clone(), v.clone());
                next.push((a, &p * q));
            }
        }
        out = next;
    }
    out
}

enum Override {
    Fixed(Value),
    Rule(DynamicIntervention, usize),
    Imported(Value),
}

fn overrides(scm: &Scm, exo: &Assignment, world: &WorldSpec) -> BTreeMap<String, Override> {
    let mut map = BTreeMap::new();
    match world {
        WorldSpec::Observational => {}
        WorldSpec::Static(s) => {
            for (n, v) in &s.assignments {
                map.insert(n.clone(), Override::Fixed(v.clone()));
            }
        }
        WorldSpec::Dynamic { rules, fixed } => {
            for (n, v) in &fixed.assignments {
                map.insert(n.clone(), Override::Fixed(v.clone()));
            }
            for r in rules {
                for (slot, t) in r.targets.iter().enumerate() {
                    map.insert(t.clone(), Override::Rule(r.clone(), slot));
                }
            }
        }
        WorldSpec::Nested { base, imports } => {
            map = overrides(scm, exo, base);
            for (var, donor) in imports {
                let v = realize(scm, exo, donor)[var].clone();
                map.insert(var.clone(), Override::Imported(v));
            }
        }
    }
    map
}

/// All variable values in `world` for one exogenous configuration.
pub fn realize(scm: &Scm, exo: &Assignment, world: &WorldSpec) -> Assignment {
    let ov = overrides(scm, exo, world);
    let mut vals = Assignment::new();
    let names: Vec<&str> = scm.variables().iter().map(|d| d.name.as_str()).collect();
    while vals.len() < names.len() {
        let before = vals.len();
        for &name in &names {
            if vals.contains_key(name) {
                continue;
            }
            let v = match ov.get(name) {
                Some(Override::Fixed(v)) | Some(Override::Imported(v)) => Some(v.clone()),
                Some(Override::Rule(r, slot)) => {
                    let key: Option<Vec<Value>> = r.index.iter().map(|i| vals.get(i).cloned()).collect();
                    key.map(|k| r.table[&k][*slot].clone())
                }
                None => match scm.equation(name) {
                    None => Some(exo[name].clone()),
                    Some(eq) => {
                        if eq.parents.iter().all(|p| vals.contains_key(p)) {
                            Some(eq.body.eval(&|n| vals.get(n)).expect("eval"))
                        } else {
                            None
                        }
                    }
                },
            };
            if let Some(v) = v {
                vals.insert(name.to_string(), v);
            }
        }
        assert!(vals.len() > before, "world cannot be realized");
    }
    vals
}

/// P(pred | cond) in `world`.
pub fn prob(
    scm: &Scm,
    world: &WorldSpec,
    pred: impl Fn(&Assignment) -> bool,
    cond: impl Fn(&Assignment) -> bool,
) -> Rational {
    let (mut num, mut den) = (Rational::zero(), Rational::zero());
    for (exo, p) in exogenous_joint(scm) {
        let vals = realize(scm, &exo, world);
        if cond(&vals) {
            den += &p;
            if pred(&vals) {
                num += &p;
            }
        }
    }
    num / den
}

pub fn p_is(scm: &Scm, world: &WorldSpec, var: &str, value: i64) -> Rational {
    let v = Value::int(value);
    prob(scm, world, |a| a[var] == v, |_| true)
}

/// Joint law of (var, world) pairs sharing exogenous configurations.
pub fn joint(scm: &Scm, pairs: &[(&str, WorldSpec)]) -> BTreeMap<Vec<Value>, Rational> {
    let mut out = BTreeMap::new();
    for (exo, p) in exogenous_joint(scm) {
        let key = pairs.iter().map(|(v, w)| realize(scm, &exo, w)[*v].clone()).collect();
        *out.entry(key).or_insert_with(Rational::zero) += p;
    }
    out
}
