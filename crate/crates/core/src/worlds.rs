//! Intervention regimes and per-configuration realization.
//!
//! A [`WorldSpec`] is compiled into a [`Plan`]: an evaluation order over the
//! mutilated graph plus one action per variable. Dynamic interventions read
//! their stratum from values realized earlier in the same world, so the plan
//! order puts index variables before the targets they drive.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use num_traits::Zero;
use thiserror::Error;

use crate::model::{for_each_tuple, topo_sort, ExogenousConfig, Scm, SupportError};
use crate::value::Value;

/// Named values, in a meaningful order (parent order, index order, ...).
pub type Bindings = Vec<(String, Value)>;

fn fmt_bindings(b: &[(String, Value)]) -> String {
    b.iter().map(|(n, v)| format!("{n}={v}")).collect::<Vec<_>>().join(", ")
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WorldError {
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("value {value} is not in the domain of `{name}`")]
    ValueNotInDomain { name: String, value: Value },
    #[error("`{0}` is exogenous; preimages are defined for endogenous variables")]
    NotEndogenous(String),
    #[error("`{name}` is not a parent of `{target}`")]
    FixedNotParent { target: String, name: String },
    #[error("parent `{parent}` of `{target}` is neither in the index nor controlled")]
    UncontrolledParent { target: String, parent: String },
    #[error("`{0}` is both an index and a controlled variable")]
    IndexOverlapsControl(String),
    #[error("no value of the controlled variables yields the target in stratum ({})", fmt_bindings(.stratum))]
    UnattainableStratum { stratum: Bindings },
    #[error("dynamic index cannot be realized before its target: {}", .0.join(" -> "))]
    IndexUnrealized(Vec<String>),
    #[error("`{0}` is set by more than one mechanism")]
    ConflictingMechanisms(String),
    #[error("dynamic intervention on {targets:?} has no entry for stratum ({})", fmt_bindings(.stratum))]
    UncoveredStratum { targets: Vec<String>, stratum: Bindings },
    #[error("dynamic intervention table is malformed: {0}")]
    MalformedTable(String),
    #[error(transparent)]
    Support(#[from] SupportError),
}

// ── Regimes ──────────────────────────────────────────────────────────

/// `do(A=a, B=b, ...)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StaticIntervention {
    pub assignments: Bindings,
}

impl StaticIntervention {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(mut self, name: impl Into<String>, value: impl Into<Value>) -> Self {
        self.assignments.push((name.into(), value.into()));
        self
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }
}

/// Stratum-indexed assignment of target variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DynamicIntervention {
    pub targets: Vec<String>,
    pub index: Vec<String>,
    /// Index-value tuple to target-value tuple.
    pub table: BTreeMap<Vec<Value>, Vec<Value>>,
}

impl DynamicIntervention {
    pub fn new(targets: Vec<String>, index: Vec<String>) -> Self {
        Self { targets, index, table: BTreeMap::new() }
    }

    pub fn entry(mut self, stratum: Vec<Value>, assignment: Vec<Value>) -> Self {
        self.table.insert(stratum, assignment);
        self
    }

    /// Restricts the rule to a subset of its targets.
    pub fn project(&self, keep: &[&str]) -> DynamicIntervention {
        let slots: Vec<usize> =
            self.targets.iter().enumerate().filter(|(_, t)| keep.contains(&t.as_str())).map(|(i, _)| i).collect();
        DynamicIntervention {
            targets: slots.iter().map(|&i| self.targets[i].clone()).collect(),
            index: self.index.clone(),
            table: self.table.iter().map(|(k, v)| (k.clone(), slots.iter().map(|&i| v[i].clone()).collect())).collect(),
        }
    }

    pub fn lookup(&self, stratum: &[Value]) -> Option<&[Value]> {
        self.table.get(stratum).map(Vec::as_slice)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WorldSpec {
    Observational,
    Static(StaticIntervention),
    Dynamic {
        rules: Vec<DynamicIntervention>,
        fixed: StaticIntervention,
    },
    /// `base` with some variables replaced by their value in a donor world
    /// evaluated on the same exogenous configuration.
    Nested {
        base: Box<WorldSpec>,
        imports: Vec<(String, WorldSpec)>,
    },
}

impl WorldSpec {
    pub fn observational() -> Self {
        WorldSpec::Observational
    }

    /// `do(name=value)`.
    pub fn set(name: impl Into<String>, value: impl Into<Value>) -> Self {
        WorldSpec::Static(StaticIntervention::new().set(name, value))
    }

    pub fn static_(assignments: Bindings) -> Self {
        WorldSpec::Static(StaticIntervention { assignments })
    }

    pub fn dynamic(rule: DynamicIntervention) -> Self {
        WorldSpec::Dynamic { rules: vec![rule], fixed: StaticIntervention::new() }
    }

    /// Adds a static assignment to this regime (not valid for nested worlds'
    /// imports; those are left untouched).
    pub fn and_set(self, name: impl Into<String>, value: impl Into<Value>) -> Self {
        match self {
            WorldSpec::Observational => WorldSpec::set(name, value),
            WorldSpec::Static(s) => WorldSpec::Static(s.set(name, value)),
            WorldSpec::Dynamic { rules, fixed } => WorldSpec::Dynamic { rules, fixed: fixed.set(name, value) },
            WorldSpec::Nested { base, imports } => {
                WorldSpec::Nested { base: Box::new(base.and_set(name, value)), imports }
            }
        }
    }

    pub fn nested(base: WorldSpec, imports: Vec<(String, WorldSpec)>) -> Self {
        WorldSpec::Nested { base: Box::new(base), imports }
    }
}

impl fmt::Display for WorldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn parts(w: &WorldSpec, out: &mut Vec<String>) {
            match w {
                WorldSpec::Observational => {}
                WorldSpec::Static(s) => out.extend(s.assignments.iter().map(|(n, v)| format!("{n}={v}"))),
                WorldSpec::Dynamic { rules, fixed } => {
                    out.extend(fixed.assignments.iter().map(|(n, v)| format!("{n}={v}")));
                    for r in rules {
                        let entries = r
                            .table
                            .iter()
                            .map(|(k, v)| {
                                let k = k.iter().map(Value::to_string).collect::<Vec<_>>().join(",");
                                let v = v.iter().map(Value::to_string).collect::<Vec<_>>().join(",");
                                format!("{k}->{v}")
                            })
                            .collect::<Vec<_>>()
                            .join("; ");
                        out.push(format!("({})=rule[{}]{{{entries}}}", r.targets.join(","), r.index.join(",")));
                    }
                }
                WorldSpec::Nested { base, imports } => {
                    parts(base, out);
                    for (n, donor) in imports {
                        out.push(format!("{n}={n}@{donor}"));
                    }
                }
            }
        }
        let mut out = Vec::new();
        parts(self, &mut out);
        if out.is_empty() {
            f.write_str("obs")
        } else {
            write!(f, "do({})", out.join(", "))
        }
    }
}

/// Tie-break among preimage elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Selector {
    #[default]
    First,
    Last,
    /// The n-th element, clamped to the last one.
    Nth(usize),
}

impl Selector {
    pub fn pick<'a, T>(&self, candidates: &'a [T]) -> Option<&'a T> {
        match self {
            Selector::First => candidates.first(),
            Selector::Last => candidates.last(),
            Selector::Nth(n) => candidates.get((*n).min(candidates.len().saturating_sub(1))),
        }
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Selector::First => f.write_str("first"),
            Selector::Last => f.write_str("last"),
            Selector::Nth(n) => write!(f, "nth({n})"),
        }
    }
}

// ── Preimages ────────────────────────────────────────────────────────

fn resolve(scm: &Scm, name: &str) -> Result<usize, WorldError> {
    scm.id(name).ok_or_else(|| WorldError::UnknownVariable(name.to_string()))
}

fn resolve_value(scm: &Scm, id: usize, v: &Value) -> Result<u32, WorldError> {
    scm.value_index(id, v)
        .ok_or_else(|| WorldError::ValueNotInDomain { name: scm.name(id).to_string(), value: v.clone() })
}

/// Parent tuples mapped to `value` by the equation of `target`, in domain order.
pub fn preimage(scm: &Scm, target: &str, value: &Value) -> Result<Vec<Bindings>, WorldError> {
    conditional_preimage(scm, target, value, &[])
}

/// Completions of the non-fixed parents of `target` that yield `value`.
pub fn conditional_preimage(
    scm: &Scm,
    target: &str,
    value: &Value,
    fixed: &[(&str, Value)],
) -> Result<Vec<Bindings>, WorldError> {
    let tid = resolve(scm, target)?;
    if scm.decl(tid).is_exogenous() {
        return Err(WorldError::NotEndogenous(target.to_string()));
    }
    let want = resolve_value(scm, tid, value)?;
    let parents = scm.parent_ids(tid).to_vec();
    let mut pinned: Vec<Option<u32>> = vec![None; parents.len()];
    for (name, v) in fixed {
        let id = resolve(scm, name)?;
        let slot = parents
            .iter()
            .position(|&p| p == id)
            .ok_or_else(|| WorldError::FixedNotParent { target: target.to_string(), name: name.to_string() })?;
        pinned[slot] = Some(resolve_value(scm, id, v)?);
    }
    let free: Vec<usize> = (0..parents.len()).filter(|&i| pinned[i].is_none()).collect();
    let sizes: Vec<usize> = free.iter().map(|&i| scm.domain_size(parents[i])).collect();
    let mut out = Vec::new();
    let mut full: Vec<u32> = pinned.iter().map(|p| p.unwrap_or(0)).collect();
    for_each_tuple(&sizes, |tuple| {
        for (&slot, &v) in free.iter().zip(tuple) {
            full[slot] = v;
        }
        if scm.eval_on_parents(tid, &full) == want {
            out.push(
                free.iter()
                    .zip(tuple)
                    .map(|(&slot, &v)| (scm.name(parents[slot]).to_string(), scm.value(parents[slot], v).clone()))
                    .collect(),
            );
        }
    });
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StratumEntry {
    /// Values of the index variables.
    pub stratum: Vec<Value>,
    /// Control-variable tuples achieving the target in this stratum.
    pub preimage: Vec<Vec<Value>>,
    pub attainable: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttainabilityReport {
    pub target: (String, Value),
    pub index: Vec<String>,
    pub control: Vec<String>,
    /// One entry per positive-probability stratum of the index.
    pub strata: Vec<StratumEntry>,
}

impl AttainabilityReport {
    pub fn attainable_strata(&self) -> Vec<&[Value]> {
        self.strata.iter().filter(|s| s.attainable).map(|s| s.stratum.as_slice()).collect()
    }

    pub fn unattainable_strata(&self) -> Vec<&[Value]> {
        self.strata.iter().filter(|s| !s.attainable).map(|s| s.stratum.as_slice()).collect()
    }

    pub fn all_attainable(&self) -> bool {
        self.strata.iter().all(|s| s.attainable)
    }

    pub fn stratum_bindings(&self, stratum: &[Value]) -> Bindings {
        self.index.iter().cloned().zip(stratum.iter().cloned()).collect()
    }
}

/// Positive-probability tuples of `vars` under the observational law, in
/// domain order.
pub(crate) fn observational_strata(scm: &Scm, vars: &[usize]) -> Result<Vec<Vec<u32>>, WorldError> {
    let plan = Plan::compile(scm, &WorldSpec::Observational)?;
    let mut seen = std::collections::BTreeSet::new();
    let mut buf = vec![0u32; scm.len()];
    for (cfg, p) in scm.exogenous_support()? {
        if p.is_zero() {
            continue;
        }
        plan.run(scm, cfg.raw(), &mut buf)?;
        seen.insert(vars.iter().map(|&v| buf[v]).collect::<Vec<_>>());
    }
    Ok(seen.into_iter().collect())
}

/// For each positive-probability stratum of `index`, the conditional preimage
/// of `target = value` over `control`.
pub fn attainability(
    scm: &Scm,
    target: &str,
    value: &Value,
    index: &[&str],
    control: &[&str],
) -> Result<AttainabilityReport, WorldError> {
    let tid = resolve(scm, target)?;
    if scm.decl(tid).is_exogenous() {
        return Err(WorldError::NotEndogenous(target.to_string()));
    }
    resolve_value(scm, tid, value)?;
    let parents: Vec<&str> = scm.parent_ids(tid).iter().map(|&p| scm.name(p)).collect();
    let index_ids = index.iter().map(|n| resolve(scm, n)).collect::<Result<Vec<_>, _>>()?;
    for c in control {
        resolve(scm, c)?;
        if index.contains(c) {
            return Err(WorldError::IndexOverlapsControl(c.to_string()));
        }
        if !parents.contains(c) {
            return Err(WorldError::FixedNotParent { target: target.to_string(), name: c.to_string() });
        }
    }
    if let Some(p) = parents.iter().find(|p| !index.contains(p) && !control.contains(p)) {
        return Err(WorldError::UncontrolledParent { target: target.to_string(), parent: p.to_string() });
    }

    let mut strata = Vec::new();
    for tuple in observational_strata(scm, &index_ids)? {
        let stratum: Vec<Value> = index_ids.iter().zip(&tuple).map(|(&i, &v)| scm.value(i, v).clone()).collect();
        let fixed: Vec<(&str, Value)> =
            index.iter().zip(&stratum).filter(|(n, _)| parents.contains(n)).map(|(n, v)| (*n, v.clone())).collect();
        let completions = conditional_preimage(scm, target, value, &fixed)?;
        // Reorder each completion into `control` order.
        let preimage: Vec<Vec<Value>> = completions
            .into_iter()
            .map(|b| {
                control
                    .iter()
                    .map(|c| b.iter().find(|(n, _)| n == c).map(|(_, v)| v.clone()).expect("control is a free parent"))
                    .collect()
            })
            .collect();
        strata.push(StratumEntry { attainable: !preimage.is_empty(), stratum, preimage });
    }
    Ok(AttainabilityReport {
        target: (target.to_string(), value.clone()),
        index: index.iter().map(|s| s.to_string()).collect(),
        control: control.iter().map(|s| s.to_string()).collect(),
        strata,
    })
}

/// Builds `do(control = solve(target=value; index))`, picking one preimage
/// element per stratum with `selector`.
pub fn make_dynamic_intervention(
    scm: &Scm,
    target: &str,
    value: &Value,
    index: &[&str],
    control: &[&str],
    selector: Selector,
) -> Result<DynamicIntervention, WorldError> {
    let report = attainability(scm, target, value, index, control)?;
    dynamic_from_report(&report, selector)
}

pub fn dynamic_from_report(
    report: &AttainabilityReport,
    selector: Selector,
) -> Result<DynamicIntervention, WorldError> {
    let mut rule = DynamicIntervention::new(report.control.clone(), report.index.clone());
    for s in &report.strata {
        let choice = selector
            .pick(&s.preimage)
            .ok_or_else(|| WorldError::UnattainableStratum { stratum: report.stratum_bindings(&s.stratum) })?;
        rule.table.insert(s.stratum.clone(), choice.clone());
    }
    Ok(rule)
}

// ── Realization ──────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Action {
    Natural,
    Fixed(u32),
    Dynamic { rule: usize, slot: usize },
    Import { donor: usize },
}

#[derive(Debug, Clone)]
struct Rule {
    index: Vec<usize>,
    targets: Vec<usize>,
    table: HashMap<Vec<u32>, Vec<u32>>,
}

/// A compiled regime.
#[derive(Debug, Clone)]
pub(crate) struct Plan {
    order: Vec<usize>,
    actions: Vec<Action>,
    rules: Vec<Rule>,
    /// (imported variable, donor plan)
    donors: Vec<(usize, Plan)>,
}

impl Plan {
    pub(crate) fn compile(scm: &Scm, world: &WorldSpec) -> Result<Plan, WorldError> {
        let mut plan = Plan {
            order: Vec::new(),
            actions: vec![Action::Natural; scm.len()],
            rules: Vec::new(),
            donors: Vec::new(),
        };
        plan.apply(scm, world)?;
        plan.order = plan.evaluation_order(scm)?;
        Ok(plan)
    }

    fn claim(&mut self, scm: &Scm, id: usize, action: Action) -> Result<(), WorldError> {
        if self.actions[id] != Action::Natural {
            return Err(WorldError::ConflictingMechanisms(scm.name(id).to_string()));
        }
        self.actions[id] = action;
        Ok(())
    }

    fn apply_static(&mut self, scm: &Scm, s: &StaticIntervention) -> Result<(), WorldError> {
        for (name, v) in &s.assignments {
            let id = resolve(scm, name)?;
            let k = resolve_value(scm, id, v)?;
            self.claim(scm, id, Action::Fixed(k))?;
        }
        Ok(())
    }

    fn apply(&mut self, scm: &Scm, world: &WorldSpec) -> Result<(), WorldError> {
        match world {
            WorldSpec::Observational => Ok(()),
            WorldSpec::Static(s) => self.apply_static(scm, s),
            WorldSpec::Dynamic { rules, fixed } => {
                self.apply_static(scm, fixed)?;
                for r in rules {
                    let rule = self.compile_rule(scm, r)?;
                    let rid = self.rules.len();
                    for (slot, &t) in rule.targets.iter().enumerate() {
                        self.claim(scm, t, Action::Dynamic { rule: rid, slot })?;
                    }
                    self.rules.push(rule);
                }
                Ok(())
            }
            WorldSpec::Nested { base, imports } => {
                self.apply(scm, base)?;
                for (name, donor) in imports {
                    let id = resolve(scm, name)?;
                    let donor_plan = Plan::compile(scm, donor)?;
                    self.claim(scm, id, Action::Import { donor: self.donors.len() })?;
                    self.donors.push((id, donor_plan));
                }
                Ok(())
            }
        }
    }

    fn compile_rule(&self, scm: &Scm, r: &DynamicIntervention) -> Result<Rule, WorldError> {
        let index = r.index.iter().map(|n| resolve(scm, n)).collect::<Result<Vec<_>, _>>()?;
        let targets = r.targets.iter().map(|n| resolve(scm, n)).collect::<Result<Vec<_>, _>>()?;
        if let Some(t) = r.targets.iter().find(|t| r.index.contains(t)) {
            return Err(WorldError::IndexOverlapsControl(t.clone()));
        }
        let mut table = HashMap::with_capacity(r.table.len());
        for (k, v) in &r.table {
            if k.len() != index.len() || v.len() != targets.len() {
                return Err(WorldError::MalformedTable(format!(
                    "entry arity ({}, {}) does not match ({}, {})",
                    k.len(),
                    v.len(),
                    index.len(),
                    targets.len()
                )));
            }
            let key = index.iter().zip(k).map(|(&i, x)| resolve_value(scm, i, x)).collect::<Result<Vec<_>, _>>()?;
            let val = targets.iter().zip(v).map(|(&i, x)| resolve_value(scm, i, x)).collect::<Result<Vec<_>, _>>()?;
            table.insert(key, val);
        }
        Ok(Rule { index, targets, table })
    }

    fn evaluation_order(&self, scm: &Scm) -> Result<Vec<usize>, WorldError> {
        let deps: Vec<Vec<usize>> = (0..scm.len())
            .map(|id| match self.actions[id] {
                Action::Natural if scm.decl(id).is_exogenous() => Vec::new(),
                Action::Natural => scm.parent_ids(id).to_vec(),
                Action::Fixed(_) | Action::Import { .. } => Vec::new(),
                Action::Dynamic { rule, .. } => self.rules[rule].index.clone(),
            })
            .collect();
        topo_sort(scm.len(), |id| deps[id].as_slice())
            .map_err(|cycle| WorldError::IndexUnrealized(cycle.iter().map(|&i| scm.name(i).to_string()).collect()))
    }

    /// Realizes every variable for one exogenous configuration into `out`.
    pub(crate) fn run(&self, scm: &Scm, config: &[u32], out: &mut [u32]) -> Result<(), WorldError> {
        let mut imported = Vec::with_capacity(self.donors.len());
        if !self.donors.is_empty() {
            let mut scratch = vec![0u32; scm.len()];
            for (var, donor) in &self.donors {
                donor.run(scm, config, &mut scratch)?;
                imported.push(scratch[*var]);
            }
        }
        for &id in &self.order {
            out[id] = match self.actions[id] {
                Action::Natural if scm.decl(id).is_exogenous() => config[id],
                Action::Natural => scm.eval_equation(id, out),
                Action::Fixed(k) => k,
                Action::Import { donor } => imported[donor],
                Action::Dynamic { rule, slot } => {
                    let r = &self.rules[rule];
                    let key: Vec<u32> = r.index.iter().map(|&i| out[i]).collect();
                    match r.table.get(&key) {
                        Some(vals) => vals[slot],
                        None => {
                            return Err(WorldError::UncoveredStratum {
                                targets: r.targets.iter().map(|&t| scm.name(t).to_string()).collect(),
                                stratum: r
                                    .index
                                    .iter()
                                    .zip(&key)
                                    .map(|(&i, &k)| (scm.name(i).to_string(), scm.value(i, k).clone()))
                                    .collect(),
                            })
                        }
                    }
                }
            };
        }
        Ok(())
    }
}

/// A full variable assignment produced by [`realize_world`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Realization<'a> {
    scm: &'a Scm,
    values: Vec<u32>,
}

impl<'a> Realization<'a> {
    pub fn get(&self, name: &str) -> Option<&'a Value> {
        let id = self.scm.id(name)?;
        Some(self.scm.value(id, self.values[id]))
    }

    /// All variables in declaration order.
    pub fn bindings(&self) -> Bindings {
        (0..self.scm.len())
            .map(|id| (self.scm.name(id).to_string(), self.scm.value(id, self.values[id]).clone()))
            .collect()
    }
}

pub fn realize_world<'a>(
    scm: &'a Scm,
    config: &ExogenousConfig,
    world: &WorldSpec,
) -> Result<Realization<'a>, WorldError> {
    let plan = Plan::compile(scm, world)?;
    let mut values = vec![0u32; scm.len()];
    plan.run(scm, config.raw(), &mut values)?;
    Ok(Realization { scm, values })
}
