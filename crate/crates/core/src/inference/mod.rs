//! Exact queries by enumeration of the exogenous support, plus sampling-based
//! estimators used to cross-check them.

mod adjust;
mod dataset;
mod montecarlo;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_traits::{One, Signed, Zero};
use serde_json::json;
use thiserror::Error;

use crate::model::{Scm, SupportError};
use crate::value::{is_binary_domain, to_f64, Rational, Value};
use crate::worlds::{Bindings, Plan, WorldError, WorldSpec};

pub use adjust::{
    adjustment_ace, adjustment_ace_data, bootstrap_stderr, positivity, AdjustmentResult, PositivityEntry,
    PositivityReport, StratumTerm,
};
pub use dataset::{sample_dataset, Dataset, DatasetError};
pub use montecarlo::monte_carlo;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InferenceError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Support(#[from] SupportError),
    #[error("conditioning event {0} has probability zero")]
    ZeroConditioningEvent(String),
    #[error("`{0}` must have domain {{0, 1}}")]
    NonBinaryVariable(String),
    #[error("`{0}` must have a numeric domain")]
    NonNumericVariable(String),
    #[error("positivity fails in stratum ({}): P(treated | stratum) = {}", fmt_bindings(.stratum), crate::value::fmt_rational(.p_treated))]
    PositivityViolation { stratum: Bindings, p_treated: Rational },
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("unknown label `{0}` in joint distribution")]
    UnknownLabel(String),
    #[error("sample count must be at least 1")]
    ZeroSamples,
}

pub(crate) fn fmt_bindings(b: &Bindings) -> String {
    b.iter().map(|(n, v)| format!("{n}={v}")).collect::<Vec<_>>().join(", ")
}

pub type Result<T> = std::result::Result<T, InferenceError>;

// ── Distributions and events ─────────────────────────────────────────

/// Exact law of a tuple of (labelled) variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Distribution {
    vars: Vec<String>,
    support: BTreeMap<Vec<Value>, Rational>,
}

impl Distribution {
    pub fn new(vars: Vec<String>, support: BTreeMap<Vec<Value>, Rational>) -> Self {
        Self { vars, support }
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn prob(&self, outcome: &[Value]) -> Rational {
        self.support.get(outcome).cloned().unwrap_or_else(Rational::zero)
    }

    /// Outcomes with positive probability, in value order.
    pub fn iter(&self) -> impl Iterator<Item = (&Vec<Value>, &Rational)> {
        self.support.iter()
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn total(&self) -> Rational {
        self.support.values().fold(Rational::zero(), |a, p| a + p)
    }

    fn positions(&self, names: &[&str]) -> Result<Vec<usize>> {
        names
            .iter()
            .map(|n| self.vars.iter().position(|v| v == n).ok_or_else(|| InferenceError::UnknownLabel(n.to_string())))
            .collect()
    }

    pub fn marginal(&self, names: &[&str]) -> Result<Distribution> {
        let pos = self.positions(names)?;
        let mut support = BTreeMap::new();
        for (k, p) in &self.support {
            let key: Vec<Value> = pos.iter().map(|&i| k[i].clone()).collect();
            *support.entry(key).or_insert_with(Rational::zero) += p;
        }
        Ok(Distribution { vars: names.iter().map(|s| s.to_string()).collect(), support })
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, p) in &self.support {
            let cells: Vec<String> = self.vars.iter().zip(k).map(|(n, v)| format!("{n}={v}")).collect();
            writeln!(f, "{}\t{}", cells.join(", "), crate::value::fmt_rational(p))?;
        }
        Ok(())
    }
}

/// Conjunction of equality atoms.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Event {
    pub atoms: Vec<(String, Value)>,
}

impl Event {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is(name: impl Into<String>, value: impl Into<Value>) -> Self {
        Self::new().and(name, value)
    }

    pub fn and(mut self, name: impl Into<String>, value: impl Into<Value>) -> Self {
        self.atoms.push((name.into(), value.into()));
        self
    }

    pub(crate) fn compile(&self, scm: &Scm) -> Result<Vec<(usize, u32)>> {
        self.atoms
            .iter()
            .map(|(n, v)| {
                let id = scm.id(n).ok_or_else(|| WorldError::UnknownVariable(n.clone()))?;
                let k = scm
                    .value_index(id, v)
                    .ok_or_else(|| WorldError::ValueNotInDomain { name: n.clone(), value: v.clone() })?;
                Ok((id, k))
            })
            .collect()
    }
}

pub(crate) fn holds(atoms: &[(usize, u32)], values: &[u32]) -> bool {
    atoms.iter().all(|&(id, k)| values[id] == k)
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.atoms.iter().map(|(n, v)| format!("{n}={v}")).collect();
        f.write_str(&parts.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Target {
    Prob(Event),
    Expect(String),
}

/// Probability of an event, or expectation of a numeric variable, within one
/// world, optionally conditioned on an event in the same world.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub target: Target,
    pub world: WorldSpec,
    pub given: Option<Event>,
}

impl Query {
    pub fn prob(event: Event, world: WorldSpec) -> Self {
        Self { target: Target::Prob(event), world, given: None }
    }

    pub fn expect(var: impl Into<String>, world: WorldSpec) -> Self {
        Self { target: Target::Expect(var.into()), world, given: None }
    }

    pub fn given(mut self, event: Event) -> Self {
        self.given = Some(event);
        self
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (head, inner) = match &self.target {
            Target::Prob(e) => ("P", e.to_string()),
            Target::Expect(v) => ("E", v.clone()),
        };
        let mut cond = Vec::new();
        if self.world != WorldSpec::Observational {
            cond.push(self.world.to_string());
        }
        if let Some(g) = &self.given {
            cond.push(format!("given {g}"));
        }
        if cond.is_empty() {
            write!(f, "{head}({inner})")
        } else {
            write!(f, "{head}({inner} | {})", cond.join(", "))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Estimate {
    Exact(Rational),
    MonteCarlo { value: f64, stderr: f64, n: u64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult {
    pub query: String,
    pub estimate: Estimate,
}

impl QueryResult {
    pub fn exact(query: impl Into<String>, value: Rational) -> Self {
        Self { query: query.into(), estimate: Estimate::Exact(value) }
    }

    pub fn method(&self) -> &'static str {
        match self.estimate {
            Estimate::Exact(_) => "exact",
            Estimate::MonteCarlo { .. } => "mc",
        }
    }

    pub fn value(&self) -> f64 {
        match &self.estimate {
            Estimate::Exact(r) => to_f64(r),
            Estimate::MonteCarlo { value, .. } => *value,
        }
    }

    pub fn as_exact(&self) -> Option<&Rational> {
        match &self.estimate {
            Estimate::Exact(r) => Some(r),
            Estimate::MonteCarlo { .. } => None,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match &self.estimate {
            Estimate::Exact(r) => json!({
                "query": self.query,
                "method": "exact",
                "num": crate::value::json_int(r.numer()),
                "den": crate::value::json_int(r.denom()),
                "value": to_f64(r),
            }),
            Estimate::MonteCarlo { value, stderr, n, seed } => json!({
                "query": self.query,
                "method": "mc",
                "value": value,
                "stderr": stderr,
                "n": n,
                "seed": seed,
            }),
        }
    }
}

impl fmt::Display for QueryResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.estimate {
            Estimate::Exact(r) => write!(f, "{} = {}", crate::value::fmt_rational(r), to_f64(r)),
            Estimate::MonteCarlo { value, stderr, n, seed } => {
                write!(f, "{value:.6} ± {stderr:.6} (n={n}, seed={seed})")
            }
        }
    }
}

// ── Exact enumeration ────────────────────────────────────────────────

/// Calls `visit` with each positive-probability configuration's realizations
/// under every plan.
pub(crate) fn enumerate(scm: &Scm, plans: &[Plan], mut visit: impl FnMut(&[Vec<u32>], &Rational)) -> Result<()> {
    let mut bufs = vec![vec![0u32; scm.len()]; plans.len()];
    for (cfg, p) in scm.exogenous_support()? {
        for (plan, buf) in plans.iter().zip(bufs.iter_mut()) {
            plan.run(scm, cfg.raw(), buf)?;
        }
        visit(&bufs, &p);
    }
    Ok(())
}

pub(crate) fn var_id(scm: &Scm, name: &str) -> Result<usize> {
    scm.id(name).ok_or_else(|| WorldError::UnknownVariable(name.to_string()).into())
}

pub fn exact_distribution(scm: &Scm, vars: &[&str], world: &WorldSpec) -> Result<Distribution> {
    let ids = vars.iter().map(|v| var_id(scm, v)).collect::<Result<Vec<_>>>()?;
    let plan = Plan::compile(scm, world)?;
    let mut support: BTreeMap<Vec<Value>, Rational> = BTreeMap::new();
    enumerate(scm, std::slice::from_ref(&plan), |vals, p| {
        let key = ids.iter().map(|&i| scm.value(i, vals[0][i]).clone()).collect();
        *support.entry(key).or_insert_with(Rational::zero) += p;
    })?;
    Ok(Distribution::new(vars.iter().map(|s| s.to_string()).collect(), support))
}

/// P(event | given) within `world`.
pub fn exact_probability(scm: &Scm, event: &Event, world: &WorldSpec, given: Option<&Event>) -> Result<Rational> {
    let ev = event.compile(scm)?;
    let gv = given.map(|g| g.compile(scm)).transpose()?.unwrap_or_default();
    let plan = Plan::compile(scm, world)?;
    let (mut num, mut den) = (Rational::zero(), Rational::zero());
    enumerate(scm, std::slice::from_ref(&plan), |vals, p| {
        if holds(&gv, &vals[0]) {
            den += p;
            if holds(&ev, &vals[0]) {
                num += p;
            }
        }
    })?;
    if den.is_zero() {
        return Err(InferenceError::ZeroConditioningEvent(given.map(Event::to_string).unwrap_or_default()));
    }
    Ok(num / den)
}

pub(crate) fn numeric_domain(scm: &Scm, id: usize) -> Result<Vec<Rational>> {
    scm.decl(id)
        .domain
        .iter()
        .map(|v| v.as_rational().cloned())
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| InferenceError::NonNumericVariable(scm.name(id).to_string()))
}

/// E(var | given) within `world`; `var` must have a numeric domain.
pub fn expectation(scm: &Scm, var: &str, world: &WorldSpec, given: Option<&Event>) -> Result<Rational> {
    let id = var_id(scm, var)?;
    let nums = numeric_domain(scm, id)?;
    let gv = given.map(|g| g.compile(scm)).transpose()?.unwrap_or_default();
    let plan = Plan::compile(scm, world)?;
    let (mut num, mut den) = (Rational::zero(), Rational::zero());
    enumerate(scm, std::slice::from_ref(&plan), |vals, p| {
        if holds(&gv, &vals[0]) {
            den += p;
            num += p * &nums[vals[0][id] as usize];
        }
    })?;
    if den.is_zero() {
        return Err(InferenceError::ZeroConditioningEvent(given.map(Event::to_string).unwrap_or_default()));
    }
    Ok(num / den)
}

pub fn exact_query(scm: &Scm, query: &Query) -> Result<QueryResult> {
    let value = match &query.target {
        Target::Prob(e) => exact_probability(scm, e, &query.world, query.given.as_ref())?,
        Target::Expect(v) => expectation(scm, v, &query.world, query.given.as_ref())?,
    };
    Ok(QueryResult::exact(query.to_string(), value))
}

pub(crate) fn require_binary(scm: &Scm, name: &str) -> Result<usize> {
    let id = var_id(scm, name)?;
    if !is_binary_domain(&scm.decl(id).domain) {
        return Err(InferenceError::NonBinaryVariable(name.to_string()));
    }
    Ok(id)
}

/// P(y=1 | do(x=1)) - P(y=1 | do(x=0)).
pub fn ace(scm: &Scm, x: &str, y: &str) -> Result<QueryResult> {
    require_binary(scm, x)?;
    require_binary(scm, y)?;
    let p = |xv: i64| exact_probability(scm, &Event::is(y, 1), &WorldSpec::set(x, xv), None);
    Ok(QueryResult::exact(format!("ace {x} -> {y}"), p(1)? - p(0)?))
}

/// E(y | do(x=1)) - E(y | do(x=0)) for a numeric, not necessarily binary, outcome.
pub fn ace_mean(scm: &Scm, x: &str, y: &str) -> Result<QueryResult> {
    require_binary(scm, x)?;
    let e = |xv: i64| expectation(scm, y, &WorldSpec::set(x, xv), None);
    Ok(QueryResult::exact(format!("E({y} | do({x}=1)) - E({y} | do({x}=0))"), e(1)? - e(0)?))
}

fn world_label(var: &str, world: &WorldSpec) -> String {
    match world {
        WorldSpec::Observational => var.to_string(),
        w => format!("{var}@{w}"),
    }
}

/// Joint law of counterfactual variables evaluated on a shared exogenous
/// configuration. Columns are labelled `var` (observational) or `var@world`.
pub fn counterfactual_joint(scm: &Scm, pairs: &[(&str, WorldSpec)]) -> Result<Distribution> {
    let ids = pairs.iter().map(|(v, _)| var_id(scm, v)).collect::<Result<Vec<_>>>()?;
    let plans = pairs.iter().map(|(_, w)| Plan::compile(scm, w)).collect::<std::result::Result<Vec<_>, _>>()?;
    let mut labels: Vec<String> = Vec::with_capacity(pairs.len());
    for (v, w) in pairs {
        let base = world_label(v, w);
        let mut label = base.clone();
        let mut k = 2;
        while labels.contains(&label) {
            label = format!("{base}#{k}");
            k += 1;
        }
        labels.push(label);
    }
    let mut support: BTreeMap<Vec<Value>, Rational> = BTreeMap::new();
    enumerate(scm, &plans, |vals, p| {
        let key = ids.iter().enumerate().map(|(j, &i)| scm.value(i, vals[j][i]).clone()).collect();
        *support.entry(key).or_insert_with(Rational::zero) += p;
    })?;
    Ok(Distribution::new(labels, support))
}

/// Tests `a ⊥ b | c` exactly; returns the flag and the largest absolute
/// deviation |P(a,b|c) - P(a|c)P(b|c)| over strata with P(c) > 0.
pub fn cond_indep(joint: &Distribution, a: &[&str], b: &[&str], c: &[&str]) -> Result<(bool, Rational)> {
    let (pa, pb, pc) = (joint.positions(a)?, joint.positions(b)?, joint.positions(c)?);
    let key = |k: &[Value], pos: &[usize]| pos.iter().map(|&i| k[i].clone()).collect::<Vec<_>>();
    let mut p_c: BTreeMap<Vec<Value>, Rational> = BTreeMap::new();
    type Key = Vec<Value>;
    let mut p_ac: BTreeMap<(Key, Key), Rational> = BTreeMap::new();
    let mut p_bc: BTreeMap<(Key, Key), Rational> = BTreeMap::new();
    let mut p_abc: BTreeMap<(Key, Key, Key), Rational> = BTreeMap::new();
    let (mut a_vals, mut b_vals) = (BTreeSet::new(), BTreeSet::new());
    for (k, p) in joint.iter() {
        let (ka, kb, kc) = (key(k, &pa), key(k, &pb), key(k, &pc));
        *p_c.entry(kc.clone()).or_insert_with(Rational::zero) += p;
        *p_ac.entry((ka.clone(), kc.clone())).or_insert_with(Rational::zero) += p;
        *p_bc.entry((kb.clone(), kc.clone())).or_insert_with(Rational::zero) += p;
        *p_abc.entry((ka.clone(), kb.clone(), kc)).or_insert_with(Rational::zero) += p;
        a_vals.insert(ka);
        b_vals.insert(kb);
    }
    let zero = Rational::zero();
    let mut worst = Rational::zero();
    for (kc, pcv) in &p_c {
        if pcv.is_zero() {
            continue;
        }
        for ka in &a_vals {
            let pac = p_ac.get(&(ka.clone(), kc.clone())).unwrap_or(&zero);
            for kb in &b_vals {
                let pbc = p_bc.get(&(kb.clone(), kc.clone())).unwrap_or(&zero);
                let pabc = p_abc.get(&(ka.clone(), kb.clone(), kc.clone())).unwrap_or(&zero);
                let dev = (pabc / pcv - (pac / pcv) * (pbc / pcv)).abs();
                if dev > worst {
                    worst = dev;
                }
            }
        }
    }
    Ok((worst.is_zero(), worst))
}

/// Sum of a distribution's probabilities, for invariant checks.
pub fn is_normalized(d: &Distribution) -> bool {
    d.total().is_one()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::value::rat;

    fn p_y1(scm: &Scm, world: WorldSpec, given: Option<Event>) -> Rational {
        exact_probability(scm, &Event::is("Y", 1), &world, given.as_ref()).unwrap()
    }

    #[test]
    fn interventional_distributions() {
        let m1 = fixtures::m1();
        let d = exact_distribution(&m1, &["Y"], &WorldSpec::set("X", 1)).unwrap();
        assert_eq!(d.prob(&[Value::one()]), Rational::one());
        assert_eq!(d.len(), 1);
        let d = exact_distribution(&m1, &["Y"], &WorldSpec::set("X", 0)).unwrap();
        assert_eq!(d.prob(&[Value::one()]), rat(1, 4));
        assert_eq!(d.prob(&[Value::zero()]), rat(3, 4));
        let m2 = fixtures::m2();
        assert_eq!(p_y1(&m2, WorldSpec::set("X", 1), None), rat(5, 8));
    }

    #[test]
    fn conditional_queries() {
        let m2 = fixtures::m2();
        assert_eq!(p_y1(&m2, WorldSpec::Observational, Some(Event::is("X", 1))), rat(13, 16));
        assert_eq!(p_y1(&m2, WorldSpec::Observational, Some(Event::is("X", 0))), rat(1, 4));
        let m1 = fixtures::m1();
        assert_eq!(p_y1(&m1, WorldSpec::set("X", 0), Some(Event::is("X", 0))), rat(1, 4));
        assert_eq!(
            exact_probability(&m1, &Event::is("Y", 1), &WorldSpec::set("X", 0), Some(&Event::is("X", 1))),
            Err(InferenceError::ZeroConditioningEvent("X=1".into()))
        );
    }

    #[test]
    fn ace_values() {
        assert_eq!(ace(&fixtures::m1(), "X", "Y").unwrap().as_exact(), Some(&rat(3, 4)));
        assert_eq!(ace(&fixtures::m2(), "X", "Y").unwrap().as_exact(), Some(&rat(3, 8)));
        let no_edge = crate::dsl::parse_model(
            "exo U ~ {0: 1/2, 1: 1/2}\nexo ξ ~ {0: 3/4, 1: 1/4}\nvar X in {0, 1} := U\nvar Y in {0, 1} := ξ\n",
        )
        .unwrap();
        assert_eq!(ace(&no_edge, "X", "Y").unwrap().as_exact(), Some(&Rational::zero()));
        assert_eq!(ace(&fixtures::versions(), "W", "Y"), Err(InferenceError::NonBinaryVariable("W".into())));
    }

    #[test]
    fn counterfactual_joints() {
        let m1 = fixtures::m1();
        let j = counterfactual_joint(&m1, &[("Y", WorldSpec::set("X", 1)), ("X", WorldSpec::Observational)]).unwrap();
        assert!(is_normalized(&j));
        let (indep, dev) = cond_indep(&j, &[&j.vars()[0]], &["X"], &[]).unwrap();
        assert!(indep && dev.is_zero());

        let j = counterfactual_joint(&m1, &[("X", WorldSpec::set("X", 1))]).unwrap();
        assert_eq!(j.len(), 1);
        assert_eq!(j.prob(&[Value::one()]), Rational::one());

        let m2 = fixtures::m2();
        let j = counterfactual_joint(
            &m2,
            &[("Y", WorldSpec::set("X", 1)), ("X", WorldSpec::Observational), ("W", WorldSpec::Observational)],
        )
        .unwrap();
        let y = j.vars()[0].clone();
        assert!(cond_indep(&j, &[&y], &["X"], &["W"]).unwrap().0);
        // Without conditioning on W the counterfactual outcome depends on X.
        assert!(!cond_indep(&j, &[&y], &["X"], &[]).unwrap().0);
    }

    #[test]
    fn cond_indep_cases() {
        let m2 = fixtures::m2();
        let j = exact_distribution(&m2, &["X", "W"], &WorldSpec::Observational).unwrap();
        let (indep, dev) = cond_indep(&j, &["X"], &["W"], &[]).unwrap();
        assert!(!indep);
        assert!(dev > Rational::zero());
        let (indep, dev) = cond_indep(&j, &["X"], &["W"], &["X", "W"]).unwrap();
        assert!(indep && dev.is_zero());
        assert!(matches!(cond_indep(&j, &["Q"], &["W"], &[]), Err(InferenceError::UnknownLabel(_))));
    }

    #[test]
    fn query_json_shape() {
        let r = exact_query(&fixtures::m2(), &Query::prob(Event::is("Y", 1), WorldSpec::set("X", 1))).unwrap();
        assert_eq!(r.query, "P(Y=1 | do(X=1))");
        let j = r.to_json();
        assert_eq!(j["method"], "exact");
        assert_eq!(j["num"], 5);
        assert_eq!(j["den"], 8);
        assert_eq!(r.to_string(), "5/8 = 0.625");
    }

    #[test]
    fn expectation_of_ternary() {
        let v = fixtures::versions();
        assert_eq!(expectation(&v, "W", &WorldSpec::Observational, None).unwrap(), Rational::one());
    }
}
