//! Finite structural causal models: declarations, validation, ordering and
//! the exogenous joint support.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use num_traits::{One, Zero};
use thiserror::Error;

use crate::expr::{EvalError, Expr};
use crate::value::{fmt_rational, is_binary_domain, Rational, Value};

/// Default cap on the number of positive-probability exogenous configurations.
pub const DEFAULT_SUPPORT_CAP: u64 = 1 << 24;

/// Cap on parent-value combinations tabulated for a single equation.
const MAX_PARENT_COMBOS: u64 = 1 << 22;

/// 1-based source position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Position {
    pub line: u32,
    pub column: u32,
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Kind {
    Exogenous,
    Endogenous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Observability {
    Observed,
    Latent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Modifiability {
    Modifiable,
    NonModifiable,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariableDecl {
    pub name: String,
    pub domain: Vec<Value>,
    pub kind: Kind,
    pub observability: Observability,
    pub modifiability: Modifiability,
}

impl VariableDecl {
    pub fn is_observed(&self) -> bool {
        self.observability == Observability::Observed
    }

    pub fn is_modifiable(&self) -> bool {
        self.modifiability == Modifiability::Modifiable
    }

    pub fn is_exogenous(&self) -> bool {
        self.kind == Kind::Exogenous
    }
}

/// One conditional distribution of an exogenous table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableRow {
    /// Values of the conditioners, in conditioner order.
    pub given: Vec<Value>,
    /// Probabilities aligned with the variable's domain.
    pub probs: Vec<Rational>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExogenousTable {
    pub variable: String,
    pub conditioners: Vec<String>,
    /// Dense: one row per conditioner-value tuple, in mixed-radix order.
    pub rows: Vec<TableRow>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructuralEquation {
    pub target: String,
    /// Free variables of `body`, in order of first occurrence.
    pub parents: Vec<String>,
    pub body: Expr,
}

// ── Raw descriptions ─────────────────────────────────────────────────

/// Unvalidated model description, as produced by the parser or by hand.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelDraft {
    pub decls: Vec<DraftDecl>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DraftDecl {
    pub name: String,
    pub pos: Option<Position>,
    pub observability: Option<Observability>,
    pub modifiability: Option<Modifiability>,
    pub body: DraftBody,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DraftBody {
    Exogenous {
        /// Explicit domain; when absent it is the union of listed values in
        /// first-appearance order.
        domain: Option<Vec<Value>>,
        conditioners: Vec<String>,
        rows: Vec<DraftRow>,
    },
    Endogenous {
        domain: Vec<Value>,
        body: Expr,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DraftRow {
    pub given: Vec<Value>,
    pub probs: Vec<(Value, Rational)>,
}

impl ModelDraft {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds an unconditioned exogenous variable.
    pub fn exo(mut self, name: &str, probs: Vec<(Value, Rational)>) -> Self {
        self.decls.push(DraftDecl {
            name: name.into(),
            pos: None,
            observability: None,
            modifiability: None,
            body: DraftBody::Exogenous {
                domain: None,
                conditioners: vec![],
                rows: vec![DraftRow { given: vec![], probs }],
            },
        });
        self
    }

    /// Adds an exogenous variable conditioned on earlier exogenous ones.
    pub fn exo_given(mut self, name: &str, conditioners: &[&str], rows: Vec<DraftRow>) -> Self {
        self.decls.push(DraftDecl {
            name: name.into(),
            pos: None,
            observability: None,
            modifiability: None,
            body: DraftBody::Exogenous {
                domain: None,
                conditioners: conditioners.iter().map(|s| s.to_string()).collect(),
                rows,
            },
        });
        self
    }

    pub fn var(mut self, name: &str, domain: Vec<Value>, body: Expr) -> Self {
        self.decls.push(DraftDecl {
            name: name.into(),
            pos: None,
            observability: None,
            modifiability: None,
            body: DraftBody::Endogenous { domain, body },
        });
        self
    }

    /// Overrides the flags of the most recently added declaration.
    pub fn flags(mut self, obs: Option<Observability>, modi: Option<Modifiability>) -> Self {
        if let Some(d) = self.decls.last_mut() {
            if obs.is_some() {
                d.observability = obs;
            }
            if modi.is_some() {
                d.modifiability = modi;
            }
        }
        self
    }

    pub fn validate(&self) -> Result<Scm, ValidationErrors> {
        Scm::validate(self)
    }
}

// ── Errors ───────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ViolationKind {
    #[error("cycle: {}", .0.join(" -> "))]
    Cycle(Vec<String>),
    #[error("equation for `{target}` is not total: no value for ({})", fmt_tuple(.parents, .values))]
    PartialFunction { target: String, parents: Vec<String>, values: Vec<Value> },
    #[error("table of `{variable}`{} sums to {}, expected 1", fmt_given(.given), fmt_rational(.sum))]
    BadTable { variable: String, given: Vec<Value>, sum: Rational },
    #[error("probability {} for `{variable}` is outside [0, 1]", fmt_rational(.prob))]
    ProbabilityOutOfRange { variable: String, prob: Rational },
    #[error("table of `{variable}` has no row for{}", fmt_given(.given))]
    MissingRow { variable: String, given: Vec<Value> },
    #[error("table of `{variable}` lists{} twice", fmt_given(.given))]
    DuplicateRow { variable: String, given: Vec<Value> },
    #[error("`{0}` is declared more than once")]
    DuplicateDeclaration(String),
    #[error("`{0}` has an empty domain")]
    EmptyDomain(String),
    #[error("domain of `{name}` lists {value} twice")]
    DuplicateValue { name: String, value: Value },
    #[error("unknown variable `{name}` referenced by `{by}`")]
    UnknownVariable { name: String, by: String },
    #[error("`{conditioner}` cannot condition `{variable}`: conditioners must be exogenous and declared earlier")]
    BadConditioner { variable: String, conditioner: String },
    #[error("value {value} is not in the domain of `{name}`")]
    ValueNotInDomain { name: String, value: Value },
    #[error("equation for `{target}` yields {value} at ({}), outside its domain", fmt_tuple(.parents, .values))]
    ResultOutOfDomain { target: String, parents: Vec<String>, values: Vec<Value>, value: Value },
    #[error("boolean connective in `{target}` applied to `{operand}`, whose domain is not {{0, 1}}")]
    NonBooleanDomain { target: String, operand: String },
    #[error("equation for `{target}` fails at ({}): {error}", fmt_tuple(.parents, .values))]
    Evaluation { target: String, parents: Vec<String>, values: Vec<Value>, error: EvalError },
    #[error("lookup table in `{target}` has a key of arity {got}, expected {expected}")]
    TableArity { target: String, expected: usize, got: usize },
    #[error("equation for `{target}` has too many parent combinations to tabulate")]
    TooManyCombinations { target: String },
}

fn fmt_tuple(names: &[String], values: &[Value]) -> String {
    names.iter().zip(values).map(|(n, v)| format!("{n}={v}")).collect::<Vec<_>>().join(", ")
}

fn fmt_given(given: &[Value]) -> String {
    if given.is_empty() {
        String::new()
    } else {
        format!(" given ({})", given.iter().map(Value::to_string).collect::<Vec<_>>().join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub pos: Option<Position>,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.pos {
            Some(p) => write!(f, "{p}: {}", self.kind),
            None => write!(f, "{}", self.kind),
        }
    }
}

/// Every violation found while validating a model.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{}", .0.iter().map(Violation::to_string).collect::<Vec<_>>().join("\n"))]
pub struct ValidationErrors(pub Vec<Violation>);

impl ValidationErrors {
    pub fn kinds(&self) -> impl Iterator<Item = &ViolationKind> {
        self.0.iter().map(|v| &v.kind)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SupportError {
    #[error("exogenous support exceeds the cap of {cap} configurations")]
    SupportTooLarge { cap: u64 },
}

// ── Validated model ──────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub(crate) enum Mechanism {
    Exo {
        table: usize,
        conditioners: Vec<usize>,
    },
    Endo {
        equation: usize,
        parents: Vec<usize>,
        strides: Vec<usize>,
        /// Target domain index for every parent combination (mixed radix, first
        /// parent most significant).
        lookup: Vec<u32>,
    },
}

/// A validated, immutable structural causal model.
#[derive(Debug, Clone)]
pub struct Scm {
    variables: Vec<VariableDecl>,
    tables: Vec<ExogenousTable>,
    equations: Vec<StructuralEquation>,
    index: HashMap<String, usize>,
    mechanisms: Vec<Mechanism>,
    topo: Vec<usize>,
    exogenous: Vec<usize>,
    support_cap: u64,
}

impl PartialEq for Scm {
    fn eq(&self, other: &Self) -> bool {
        self.variables == other.variables && self.tables == other.tables && self.equations == other.equations
    }
}

impl Eq for Scm {}

/// One joint value of the exogenous block. Endogenous slots are unused.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ExogenousConfig {
    pub(crate) values: Vec<u32>,
}

impl ExogenousConfig {
    /// Builds a configuration from named values; every exogenous variable must be given.
    pub fn from_values(scm: &Scm, values: &[(&str, Value)]) -> Option<Self> {
        let mut out = vec![u32::MAX; scm.len()];
        for (name, v) in values {
            let id = scm.id(name)?;
            out[id] = scm.value_index(id, v)?;
        }
        if scm.exogenous.iter().any(|&e| out[e] == u32::MAX) {
            return None;
        }
        for slot in out.iter_mut() {
            if *slot == u32::MAX {
                *slot = 0;
            }
        }
        Some(Self { values: out })
    }

    pub fn get<'a>(&self, scm: &'a Scm, name: &str) -> Option<&'a Value> {
        let id = scm.id(name)?;
        scm.variables[id].is_exogenous().then(|| &scm.variables[id].domain[self.values[id] as usize])
    }

    pub(crate) fn raw(&self) -> &[u32] {
        &self.values
    }
}

fn mixed_radix(values: &[u32], strides: &[usize]) -> usize {
    values.iter().zip(strides).map(|(&v, &s)| v as usize * s).sum()
}

fn strides_for(sizes: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; sizes.len()];
    for i in (0..sizes.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * sizes[i + 1];
    }
    strides
}

/// Iterates every tuple of domain indices for the given sizes, in mixed-radix order.
pub(crate) fn for_each_tuple(sizes: &[usize], mut f: impl FnMut(&[u32])) {
    if sizes.contains(&0) {
        return;
    }
    let mut cur = vec![0u32; sizes.len()];
    loop {
        f(&cur);
        let mut i = sizes.len();
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            cur[i] += 1;
            if (cur[i] as usize) < sizes[i] {
                break;
            }
            cur[i] = 0;
        }
    }
}

impl Scm {
    pub fn validate(draft: &ModelDraft) -> Result<Scm, ValidationErrors> {
        Validator::default().run(draft)
    }

    /// Rebuilds a raw description that validates back to this model.
    pub fn to_draft(&self) -> ModelDraft {
        let decls = self
            .variables
            .iter()
            .enumerate()
            .map(|(id, v)| {
                let body = match &self.mechanisms[id] {
                    Mechanism::Exo { table, .. } => {
                        let t = &self.tables[*table];
                        DraftBody::Exogenous {
                            domain: Some(v.domain.clone()),
                            conditioners: t.conditioners.clone(),
                            rows: t
                                .rows
                                .iter()
                                .map(|r| DraftRow {
                                    given: r.given.clone(),
                                    probs: v.domain.iter().cloned().zip(r.probs.iter().cloned()).collect(),
                                })
                                .collect(),
                        }
                    }
                    Mechanism::Endo { equation, .. } => {
                        DraftBody::Endogenous { domain: v.domain.clone(), body: self.equations[*equation].body.clone() }
                    }
                };
                DraftDecl {
                    name: v.name.clone(),
                    pos: None,
                    observability: Some(v.observability),
                    modifiability: Some(v.modifiability),
                    body,
                }
            })
            .collect();
        ModelDraft { decls }
    }

    pub fn with_support_cap(mut self, cap: u64) -> Self {
        self.support_cap = cap;
        self
    }

    pub fn support_cap(&self) -> u64 {
        self.support_cap
    }

    pub fn variables(&self) -> &[VariableDecl] {
        &self.variables
    }

    pub fn variable(&self, name: &str) -> Option<&VariableDecl> {
        self.id(name).map(|id| &self.variables[id])
    }

    pub fn tables(&self) -> &[ExogenousTable] {
        &self.tables
    }

    pub fn equations(&self) -> &[StructuralEquation] {
        &self.equations
    }

    pub fn table(&self, name: &str) -> Option<&ExogenousTable> {
        match &self.mechanisms[self.id(name)?] {
            Mechanism::Exo { table, .. } => Some(&self.tables[*table]),
            Mechanism::Endo { .. } => None,
        }
    }

    pub fn equation(&self, name: &str) -> Option<&StructuralEquation> {
        match &self.mechanisms[self.id(name)?] {
            Mechanism::Endo { equation, .. } => Some(&self.equations[*equation]),
            Mechanism::Exo { .. } => None,
        }
    }

    /// Parents of an endogenous variable, or conditioners of an exogenous one.
    pub fn parents(&self, name: &str) -> Option<Vec<&str>> {
        let id = self.id(name)?;
        Some(self.parent_ids(id).iter().map(|&p| self.name(p)).collect())
    }

    pub fn children(&self, name: &str) -> Option<Vec<&str>> {
        let id = self.id(name)?;
        Some((0..self.len()).filter(|&c| self.parent_ids(c).contains(&id)).map(|c| self.name(c)).collect())
    }

    /// All variables in an order where parents and conditioners come first;
    /// ties broken by declaration order.
    pub fn topological_order(&self) -> Vec<&str> {
        self.topo.iter().map(|&i| self.name(i)).collect()
    }

    pub fn exogenous_names(&self) -> Vec<&str> {
        self.exogenous.iter().map(|&i| self.name(i)).collect()
    }

    pub fn observed_names(&self) -> Vec<&str> {
        self.variables.iter().filter(|v| v.is_observed()).map(|v| v.name.as_str()).collect()
    }

    /// Every positive-probability exogenous configuration exactly once, with its
    /// exact joint probability.
    pub fn exogenous_support(&self) -> Result<Vec<(ExogenousConfig, Rational)>, SupportError> {
        let mut out = Vec::new();
        let mut cur = vec![0u32; self.len()];
        self.support_rec(0, Rational::one(), &mut cur, &mut out)?;
        Ok(out)
    }

    fn support_rec(
        &self,
        depth: usize,
        prob: Rational,
        cur: &mut Vec<u32>,
        out: &mut Vec<(ExogenousConfig, Rational)>,
    ) -> Result<(), SupportError> {
        if depth == self.exogenous.len() {
            if out.len() as u64 >= self.support_cap {
                return Err(SupportError::SupportTooLarge { cap: self.support_cap });
            }
            out.push((ExogenousConfig { values: cur.clone() }, prob));
            return Ok(());
        }
        let id = self.exogenous[depth];
        let row = self.exo_row(id, cur);
        for (k, p) in row.probs.iter().enumerate() {
            if p.is_zero() {
                continue;
            }
            cur[id] = k as u32;
            self.support_rec(depth + 1, &prob * p, cur, out)?;
        }
        cur[id] = 0;
        Ok(())
    }

    // ── crate-internal accessors ──

    pub(crate) fn len(&self) -> usize {
        self.variables.len()
    }

    pub(crate) fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub(crate) fn name(&self, id: usize) -> &str {
        &self.variables[id].name
    }

    pub(crate) fn decl(&self, id: usize) -> &VariableDecl {
        &self.variables[id]
    }

    pub(crate) fn value_index(&self, id: usize, v: &Value) -> Option<u32> {
        self.variables[id].domain.iter().position(|d| d == v).map(|i| i as u32)
    }

    pub(crate) fn value(&self, id: usize, idx: u32) -> &Value {
        &self.variables[id].domain[idx as usize]
    }

    pub(crate) fn domain_size(&self, id: usize) -> usize {
        self.variables[id].domain.len()
    }

    pub(crate) fn exogenous_ids(&self) -> &[usize] {
        &self.exogenous
    }

    pub(crate) fn parent_ids(&self, id: usize) -> &[usize] {
        match &self.mechanisms[id] {
            Mechanism::Exo { conditioners, .. } => conditioners,
            Mechanism::Endo { parents, .. } => parents,
        }
    }

    /// Conditional distribution row of exogenous `id` given realized conditioners.
    pub(crate) fn exo_row(&self, id: usize, assignment: &[u32]) -> &TableRow {
        let Mechanism::Exo { table, conditioners } = &self.mechanisms[id] else {
            panic!("exo_row on endogenous variable");
        };
        let sizes: Vec<usize> = conditioners.iter().map(|&c| self.domain_size(c)).collect();
        let vals: Vec<u32> = conditioners.iter().map(|&c| assignment[c]).collect();
        &self.tables[*table].rows[mixed_radix(&vals, &strides_for(&sizes))]
    }

    /// Evaluates the structural equation of `id` on a full assignment.
    pub(crate) fn eval_equation(&self, id: usize, assignment: &[u32]) -> u32 {
        let Mechanism::Endo { parents, strides, lookup, .. } = &self.mechanisms[id] else {
            panic!("eval_equation on exogenous variable");
        };
        let mut k = 0;
        for (p, s) in parents.iter().zip(strides) {
            k += assignment[*p] as usize * s;
        }
        lookup[k]
    }

    /// Evaluates the equation of `id` on parent domain indices (parent order).
    pub(crate) fn eval_on_parents(&self, id: usize, parent_values: &[u32]) -> u32 {
        let Mechanism::Endo { strides, lookup, .. } = &self.mechanisms[id] else {
            panic!("eval_on_parents on exogenous variable");
        };
        lookup[mixed_radix(parent_values, strides)]
    }

    /// Transitive parents of `id` (not including `id`).
    pub(crate) fn ancestors(&self, id: usize) -> BTreeSet<usize> {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<usize> = self.parent_ids(id).to_vec();
        while let Some(p) = stack.pop() {
            if seen.insert(p) {
                stack.extend_from_slice(self.parent_ids(p));
            }
        }
        seen
    }
}

// ── Validation ───────────────────────────────────────────────────────

#[derive(Default)]
struct Validator {
    violations: Vec<Violation>,
}

impl Validator {
    fn push(&mut self, kind: ViolationKind, pos: Option<Position>) {
        self.violations.push(Violation { kind, pos });
    }

    fn run(mut self, draft: &ModelDraft) -> Result<Scm, ValidationErrors> {
        // Names and domains.
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut variables = Vec::new();
        let mut decl_of = Vec::new();
        for d in &draft.decls {
            if index.contains_key(&d.name) {
                self.push(ViolationKind::DuplicateDeclaration(d.name.clone()), d.pos);
                continue;
            }
            let (kind, domain) = match &d.body {
                DraftBody::Exogenous { domain: Some(dom), .. } => (Kind::Exogenous, dom.clone()),
                DraftBody::Exogenous { domain: None, rows, .. } => {
                    let mut dom: Vec<Value> = Vec::new();
                    for r in rows {
                        for (v, _) in &r.probs {
                            if !dom.contains(v) {
                                dom.push(v.clone());
                            }
                        }
                    }
                    (Kind::Exogenous, dom)
                }
                DraftBody::Endogenous { domain, .. } => (Kind::Endogenous, domain.clone()),
            };
            if domain.is_empty() {
                self.push(ViolationKind::EmptyDomain(d.name.clone()), d.pos);
            }
            for (i, v) in domain.iter().enumerate() {
                if domain[..i].contains(v) {
                    self.push(ViolationKind::DuplicateValue { name: d.name.clone(), value: v.clone() }, d.pos);
                }
            }
            let (obs_default, mod_default) = match kind {
                Kind::Exogenous => (Observability::Latent, Modifiability::NonModifiable),
                Kind::Endogenous => (Observability::Observed, Modifiability::Modifiable),
            };
            index.insert(d.name.clone(), variables.len());
            variables.push(VariableDecl {
                name: d.name.clone(),
                domain,
                kind,
                observability: d.observability.unwrap_or(obs_default),
                modifiability: d.modifiability.unwrap_or(mod_default),
            });
            decl_of.push(d);
        }

        let mut tables = Vec::new();
        let mut equations = Vec::new();
        let mut mechanisms = Vec::with_capacity(variables.len());
        for (id, d) in decl_of.iter().enumerate() {
            let mech = match &d.body {
                DraftBody::Exogenous { conditioners, rows, .. } => {
                    let (table, conds) = self.exo_table(id, d, conditioners, rows, &variables, &index);
                    tables.push(table);
                    Mechanism::Exo { table: tables.len() - 1, conditioners: conds }
                }
                DraftBody::Endogenous { body, .. } => {
                    let (eq, parents, lookup) = self.equation(id, d, body, &variables, &index);
                    let sizes: Vec<usize> = parents.iter().map(|&p| variables[p].domain.len()).collect();
                    equations.push(eq);
                    Mechanism::Endo { equation: equations.len() - 1, strides: strides_for(&sizes), parents, lookup }
                }
            };
            mechanisms.push(mech);
        }

        let parent_ids = |id: usize| -> &[usize] {
            match &mechanisms[id] {
                Mechanism::Exo { conditioners, .. } => conditioners,
                Mechanism::Endo { parents, .. } => parents,
            }
        };
        let topo = match topo_sort(variables.len(), parent_ids) {
            Ok(order) => order,
            Err(cycle) => {
                let names = cycle.iter().map(|&i| variables[i].name.clone()).collect();
                self.push(ViolationKind::Cycle(names), decl_of.get(cycle[0]).and_then(|d| d.pos));
                Vec::new()
            }
        };

        if !self.violations.is_empty() {
            return Err(ValidationErrors(self.violations));
        }
        let exogenous = (0..variables.len()).filter(|&i| variables[i].is_exogenous()).collect();
        Ok(Scm { variables, tables, equations, index, mechanisms, topo, exogenous, support_cap: DEFAULT_SUPPORT_CAP })
    }

    fn exo_table(
        &mut self,
        id: usize,
        d: &DraftDecl,
        conditioners: &[String],
        rows: &[DraftRow],
        variables: &[VariableDecl],
        index: &HashMap<String, usize>,
    ) -> (ExogenousTable, Vec<usize>) {
        let name = &d.name;
        let mut conds = Vec::new();
        let mut conds_ok = true;
        for c in conditioners {
            match index.get(c) {
                Some(&cid) if cid < id && variables[cid].is_exogenous() => conds.push(cid),
                Some(_) => {
                    conds_ok = false;
                    self.push(ViolationKind::BadConditioner { variable: name.clone(), conditioner: c.clone() }, d.pos);
                }
                None => {
                    conds_ok = false;
                    self.push(ViolationKind::UnknownVariable { name: c.clone(), by: name.clone() }, d.pos);
                }
            }
        }
        let domain = &variables[id].domain;
        let empty = ExogenousTable { variable: name.clone(), conditioners: conditioners.to_vec(), rows: vec![] };
        if !conds_ok {
            return (empty, conds);
        }

        let sizes: Vec<usize> = conds.iter().map(|&c| variables[c].domain.len()).collect();
        let mut dense: Vec<Option<TableRow>> = vec![None; sizes.iter().product()];
        let strides = strides_for(&sizes);
        for r in rows {
            if r.given.len() != conds.len() {
                self.push(
                    ViolationKind::TableArity { target: name.clone(), expected: conds.len(), got: r.given.len() },
                    d.pos,
                );
                continue;
            }
            let mut key = Vec::with_capacity(conds.len());
            for (&c, v) in conds.iter().zip(&r.given) {
                match variables[c].domain.iter().position(|x| x == v) {
                    Some(k) => key.push(k as u32),
                    None => self.push(
                        ViolationKind::ValueNotInDomain { name: variables[c].name.clone(), value: v.clone() },
                        d.pos,
                    ),
                }
            }
            if key.len() != conds.len() {
                continue;
            }
            let mut probs = vec![Rational::zero(); domain.len()];
            let mut sum = Rational::zero();
            for (v, p) in &r.probs {
                if *p < Rational::zero() || *p > Rational::one() {
                    self.push(ViolationKind::ProbabilityOutOfRange { variable: name.clone(), prob: p.clone() }, d.pos);
                }
                match domain.iter().position(|x| x == v) {
                    Some(k) => probs[k] += p,
                    None => self.push(ViolationKind::ValueNotInDomain { name: name.clone(), value: v.clone() }, d.pos),
                }
                sum += p;
            }
            if !sum.is_one() {
                self.push(ViolationKind::BadTable { variable: name.clone(), given: r.given.clone(), sum }, d.pos);
            }
            let slot = mixed_radix(&key, &strides);
            if dense[slot].is_some() {
                self.push(ViolationKind::DuplicateRow { variable: name.clone(), given: r.given.clone() }, d.pos);
            } else {
                dense[slot] = Some(TableRow { given: r.given.clone(), probs });
            }
        }
        let mut out_rows = Vec::with_capacity(dense.len());
        let mut k = 0;
        for_each_tuple(&sizes, |tuple| {
            match dense[k].take() {
                Some(row) => out_rows.push(row),
                None => {
                    let given =
                        conds.iter().zip(tuple).map(|(&c, &t)| variables[c].domain[t as usize].clone()).collect();
                    self.push(ViolationKind::MissingRow { variable: name.clone(), given }, d.pos);
                }
            }
            k += 1;
        });
        (ExogenousTable { variable: name.clone(), conditioners: conditioners.to_vec(), rows: out_rows }, conds)
    }

    fn equation(
        &mut self,
        id: usize,
        d: &DraftDecl,
        body: &Expr,
        variables: &[VariableDecl],
        index: &HashMap<String, usize>,
    ) -> (StructuralEquation, Vec<usize>, Vec<u32>) {
        let name = &d.name;
        let parent_names = body.free_vars();
        let eq = StructuralEquation { target: name.clone(), parents: parent_names.clone(), body: body.clone() };
        let mut parents = Vec::new();
        for p in &parent_names {
            match index.get(p) {
                Some(&pid) => parents.push(pid),
                None => self.push(ViolationKind::UnknownVariable { name: p.clone(), by: name.clone() }, d.pos),
            }
        }
        if parents.len() != parent_names.len() {
            return (eq, parents, vec![]);
        }

        let before = self.violations.len();
        let mut bool_ops = Vec::new();
        body.boolean_operands(&mut bool_ops);
        bool_ops.dedup();
        for op in bool_ops {
            let pid = index[&op];
            if !is_binary_domain(&variables[pid].domain) {
                self.push(ViolationKind::NonBooleanDomain { target: name.clone(), operand: op }, d.pos);
            }
        }
        for t in body.tables() {
            for (key, _) in &t.rows {
                if key.len() != t.keys.len() {
                    self.push(
                        ViolationKind::TableArity { target: name.clone(), expected: t.keys.len(), got: key.len() },
                        d.pos,
                    );
                    continue;
                }
                for (k, v) in t.keys.iter().zip(key) {
                    if !variables[index[k]].domain.contains(v) {
                        self.push(ViolationKind::ValueNotInDomain { name: k.clone(), value: v.clone() }, d.pos);
                    }
                }
            }
        }
        if self.violations.len() > before {
            return (eq, parents, vec![]);
        }

        let sizes: Vec<usize> = parents.iter().map(|&p| variables[p].domain.len()).collect();
        let combos = sizes.iter().try_fold(1u64, |acc, &s| acc.checked_mul(s as u64));
        if combos.is_none_or(|c| c > MAX_PARENT_COMBOS) {
            self.push(ViolationKind::TooManyCombinations { target: name.clone() }, d.pos);
            return (eq, parents, vec![]);
        }
        let target_domain = &variables[id].domain;
        let mut lookup = Vec::with_capacity(combos.unwrap_or(0) as usize);
        let mut first_error: Option<ViolationKind> = None;
        for_each_tuple(&sizes, |tuple| {
            let env_vals: Vec<&Value> =
                parents.iter().zip(tuple).map(|(&p, &t)| &variables[p].domain[t as usize]).collect();
            let env = |n: &str| parent_names.iter().position(|p| p == n).map(|i| env_vals[i]);
            let values = || env_vals.iter().map(|v| (*v).clone()).collect::<Vec<_>>();
            match body.eval(&env) {
                Ok(v) => match target_domain.iter().position(|x| *x == v) {
                    Some(k) => lookup.push(k as u32),
                    None => {
                        lookup.push(0);
                        first_error.get_or_insert_with(|| ViolationKind::ResultOutOfDomain {
                            target: name.clone(),
                            parents: parent_names.clone(),
                            values: values(),
                            value: v,
                        });
                    }
                },
                Err(EvalError::NoTableRow { .. }) => {
                    lookup.push(0);
                    first_error.get_or_insert_with(|| ViolationKind::PartialFunction {
                        target: name.clone(),
                        parents: parent_names.clone(),
                        values: values(),
                    });
                }
                Err(error) => {
                    lookup.push(0);
                    first_error.get_or_insert_with(|| ViolationKind::Evaluation {
                        target: name.clone(),
                        parents: parent_names.clone(),
                        values: values(),
                        error,
                    });
                }
            }
        });
        if let Some(kind) = first_error {
            self.push(kind, d.pos);
        }
        (eq, parents, lookup)
    }
}

/// Kahn's algorithm picking the lowest declaration index among ready nodes.
/// On failure returns one cycle, closed (first node repeated at the end).
pub(crate) fn topo_sort<'a>(n: usize, parents: impl Fn(usize) -> &'a [usize]) -> Result<Vec<usize>, Vec<usize>> {
    let mut indeg = vec![0usize; n];
    let mut children = vec![Vec::new(); n];
    for (c, deg) in indeg.iter_mut().enumerate() {
        for &p in parents(c) {
            *deg += 1;
            children[p].push(c);
        }
    }
    let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(i) = ready.pop_first() {
        order.push(i);
        for &c in &children[i] {
            indeg[c] -= 1;
            if indeg[c] == 0 {
                ready.insert(c);
            }
        }
    }
    if order.len() == n {
        return Ok(order);
    }
    // Walk parents among the unresolved nodes until a node repeats.
    let stuck: Vec<bool> = (0..n).map(|i| indeg[i] > 0).collect();
    let start = (0..n).find(|&i| stuck[i]).expect("unresolved node");
    let mut path = vec![start];
    let mut cur = start;
    loop {
        let next = *parents(cur).iter().find(|&&p| stuck[p]).expect("stuck node has stuck parent");
        if let Some(pos) = path.iter().position(|&x| x == next) {
            let mut cycle: Vec<usize> = path[pos..].to_vec();
            cycle.reverse();
            cycle.push(cycle[0]);
            return Err(cycle);
        }
        path.push(next);
        cur = next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::value::rat;

    fn bern(p1: Rational) -> Vec<(Value, Rational)> {
        vec![(Value::zero(), Rational::one() - &p1), (Value::one(), p1)]
    }

    fn bin() -> Vec<Value> {
        vec![Value::zero(), Value::one()]
    }

    #[test]
    fn two_node_cycle_is_named() {
        let draft = ModelDraft::new().var("X", bin(), Expr::var("Y")).var("Y", bin(), Expr::var("X"));
        let err = draft.validate().unwrap_err();
        let cycle = err
            .kinds()
            .find_map(|k| match k {
                ViolationKind::Cycle(c) => Some(c.clone()),
                _ => None,
            })
            .unwrap();
        assert_eq!(cycle.first(), cycle.last());
        assert_eq!(cycle.len(), 3);
        assert!(cycle.contains(&"X".to_string()) && cycle.contains(&"Y".to_string()));
    }

    #[test]
    fn mis_summing_table() {
        let draft = ModelDraft::new().exo("U", vec![(Value::zero(), rat(1, 2)), (Value::one(), rat(1, 3))]);
        let err = draft.validate().unwrap_err();
        assert!(err.kinds().any(|k| matches!(k, ViolationKind::BadTable { sum, .. } if *sum == rat(5, 6))));
    }

    #[test]
    fn partial_table_names_tuple() {
        let body = Expr::Table(crate::expr::LookupTable {
            keys: vec!["U".into()],
            rows: vec![(vec![Value::zero()], Value::one())],
            default: None,
        });
        let draft = ModelDraft::new().exo("U", bern(rat(1, 2))).var("X", bin(), body);
        let err = draft.validate().unwrap_err();
        assert!(err.kinds().any(|k| matches!(k,
            ViolationKind::PartialFunction { target, values, .. }
                if target == "X" && values == &vec![Value::one()])));
    }

    #[test]
    fn reports_all_violations() {
        let draft = ModelDraft::new().exo("U", vec![(Value::zero(), rat(1, 2))]).var("X", bin(), Expr::var("Q")).var(
            "X",
            bin(),
            Expr::var("U"),
        );
        let err = draft.validate().unwrap_err();
        assert_eq!(err.0.len(), 3, "{err}");
    }

    #[test]
    fn boolean_connective_needs_binary_domain() {
        let draft = ModelDraft::new().exo("A", vec![(Value::zero(), rat(1, 2)), (Value::int(2), rat(1, 2))]).var(
            "X",
            bin(),
            Expr::not(Expr::var("A")),
        );
        let err = draft.validate().unwrap_err();
        assert!(err.kinds().any(|k| matches!(k, ViolationKind::NonBooleanDomain { .. })));
    }

    #[test]
    fn conditioner_must_precede() {
        let draft = ModelDraft::new()
            .exo_given(
                "V",
                &["T"],
                vec![
                    DraftRow { given: vec![Value::zero()], probs: bern(rat(1, 2)) },
                    DraftRow { given: vec![Value::one()], probs: bern(rat(1, 2)) },
                ],
            )
            .exo("T", bern(rat(1, 2)));
        let err = draft.validate().unwrap_err();
        assert!(err.kinds().any(|k| matches!(k, ViolationKind::BadConditioner { .. })));
    }

    #[test]
    fn single_variable_order() {
        let scm = ModelDraft::new().exo("U", bern(rat(1, 3))).validate().unwrap();
        assert_eq!(scm.topological_order(), vec!["U"]);
        let support = scm.exogenous_support().unwrap();
        assert_eq!(support.len(), 2);
    }

    #[test]
    fn topological_order_respects_edges_not_declaration() {
        let scm = ModelDraft::new()
            .var("Y", bin(), Expr::var("X"))
            .var("X", bin(), Expr::var("U"))
            .exo("U", bern(rat(1, 2)))
            .validate()
            .unwrap();
        assert_eq!(scm.topological_order(), vec!["U", "X", "Y"]);
    }

    #[test]
    fn support_cap_enforced() {
        let scm = ModelDraft::new()
            .exo("A", bern(rat(1, 2)))
            .exo("B", bern(rat(1, 2)))
            .validate()
            .unwrap()
            .with_support_cap(3);
        assert_eq!(scm.exogenous_support(), Err(SupportError::SupportTooLarge { cap: 3 }));
    }

    #[test]
    fn zero_probability_values_are_skipped() {
        let scm = ModelDraft::new()
            .exo("A", vec![(Value::zero(), Rational::one()), (Value::one(), Rational::zero())])
            .validate()
            .unwrap();
        assert_eq!(scm.exogenous_support().unwrap().len(), 1);
    }
}
