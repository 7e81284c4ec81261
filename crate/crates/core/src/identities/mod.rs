//! Mechanical checks of the equalities relating `do(X=x0)` to interventions
//! on the causes of `X`, over fixtures and randomly generated models.
//!
//! Every check first classifies the model's graph around `X` and `Y` (see
//! [`detect_shape`]) and refuses graphs it was not written for.

mod checks;
mod decompose;
mod random;
mod suite;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde_json::json;
use thiserror::Error;

use crate::inference::InferenceError;
use crate::model::Scm;
use crate::value::{fmt_rational, is_binary_domain, json_int, Rational};
use crate::worlds::{Bindings, WorldError};

pub use checks::{
    check_adjustment, check_dynamic_unconfounded, check_ignorability, check_modifiable_confounded, check_type_i,
    check_type_ii, check_type_iii, check_unconfounded, check_version_irrelevance, version_relevance_gap,
};
pub use decompose::{
    check_decomposition, check_linear, decompose_effect, default_collection, interaction_witness, DecompositionResult,
    LinearModelSpec,
};
pub use random::{random_scm, RandomConfig};
pub use suite::{verify_model, verify_random, Outcome};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IdentityError {
    #[error("graph does not have the required shape: {0}")]
    ShapeMismatch(String),
    #[error("stratum ({}) is unattainable", crate::inference::fmt_bindings(.stratum))]
    UnattainableStratum { stratum: Bindings },
    #[error("`{0}` has an empty preimage")]
    EmptyPreimage(String),
    #[error("the conditional preimage has fewer than two elements")]
    NeedTwoVersions,
    #[error("invalid collection: {0}")]
    InvalidCollection(String),
    #[error(transparent)]
    Inference(#[from] InferenceError),
}

impl From<WorldError> for IdentityError {
    fn from(e: WorldError) -> Self {
        match e {
            WorldError::UnattainableStratum { stratum } => IdentityError::UnattainableStratum { stratum },
            other => IdentityError::Inference(other.into()),
        }
    }
}

pub type Result<T> = std::result::Result<T, IdentityError>;

/// One left/right comparison.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    pub model: String,
    pub case: String,
    pub lhs: Rational,
    pub rhs: Rational,
    /// Asserted instances decide `pass`; the others are informational.
    pub asserted: bool,
}

impl Instance {
    pub fn equal(&self) -> bool {
        self.lhs == self.rhs
    }

    pub fn difference(&self) -> Rational {
        &self.lhs - &self.rhs
    }

    fn to_json(&self) -> serde_json::Value {
        json!({
            "model": self.model,
            "case": self.case,
            "lhs_num": json_int(self.lhs.numer()),
            "lhs_den": json_int(self.lhs.denom()),
            "rhs_num": json_int(self.rhs.numer()),
            "rhs_den": json_int(self.rhs.denom()),
            "equal": self.equal(),
            "difference": fmt_rational(&self.difference()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdentityReport {
    pub identity: String,
    pub instances: Vec<Instance>,
}

impl IdentityReport {
    pub fn new(identity: impl Into<String>) -> Self {
        Self { identity: identity.into(), instances: Vec::new() }
    }

    pub fn assert_eq(&mut self, case: impl Into<String>, lhs: Rational, rhs: Rational) {
        self.instances.push(Instance { model: String::new(), case: case.into(), lhs, rhs, asserted: true });
    }

    pub fn report(&mut self, case: impl Into<String>, lhs: Rational, rhs: Rational) {
        self.instances.push(Instance { model: String::new(), case: case.into(), lhs, rhs, asserted: false });
    }

    /// Labels every instance with `model`.
    pub fn for_model(mut self, model: &str) -> Self {
        for i in &mut self.instances {
            i.model = model.to_string();
        }
        self
    }

    pub fn extend(&mut self, other: IdentityReport) {
        self.instances.extend(other.instances);
    }

    pub fn asserted(&self) -> impl Iterator<Item = &Instance> {
        self.instances.iter().filter(|i| i.asserted)
    }

    pub fn reported(&self) -> impl Iterator<Item = &Instance> {
        self.instances.iter().filter(|i| !i.asserted)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Instance> {
        self.asserted().filter(|i| !i.equal())
    }

    pub fn pass(&self) -> bool {
        self.failures().next().is_none()
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "identity": self.identity,
            "instances": self.asserted().map(Instance::to_json).collect::<Vec<_>>(),
            "reported": self.reported().map(Instance::to_json).collect::<Vec<_>>(),
            "pass": self.pass(),
        })
    }
}

impl fmt::Display for IdentityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.asserted().count();
        let verdict = if self.pass() { "PASS" } else { "FAIL" };
        let noun = if n == 1 { "equality" } else { "equalities" };
        writeln!(f, "{}: {verdict} ({n} {noun} checked)", self.identity)?;
        for i in self.failures() {
            writeln!(
                f,
                "  FAILED {}{}: {} vs {}",
                model_prefix(&i.model),
                i.case,
                fmt_rational(&i.lhs),
                fmt_rational(&i.rhs)
            )?;
        }
        for i in self.reported() {
            let verdict = if i.equal() {
                format!("equal: {}", fmt_rational(&i.lhs))
            } else {
                format!("differs: {} vs {}", fmt_rational(&i.lhs), fmt_rational(&i.rhs))
            };
            writeln!(f, "  {}{}: {verdict}", model_prefix(&i.model), i.case)?;
        }
        Ok(())
    }
}

fn model_prefix(model: &str) -> String {
    if model.is_empty() {
        String::new()
    } else {
        format!("[{model}] ")
    }
}

// ── Shapes ───────────────────────────────────────────────────────────

/// Graph families the checks are written for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Shape {
    /// `X` reads only exogenous causes; `Y` reads `X` and independent noise.
    Fig1a,
    /// As `Fig1a` with a modifiable exogenous cause and a non-modifiable stratum.
    Fig1b,
    /// `X` reads exogenous `U` and endogenous modifiable `W`; `Y` may read `W`.
    Fig2a,
    /// `X` reads modifiable and non-modifiable causes, exogenous and endogenous.
    Fig2b,
}

impl Shape {
    pub const ALL: [Shape; 4] = [Shape::Fig1a, Shape::Fig1b, Shape::Fig2a, Shape::Fig2b];
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Shape::Fig1a => "fig1a",
            Shape::Fig1b => "fig1b",
            Shape::Fig2a => "fig2a",
            Shape::Fig2b => "fig2b",
        })
    }
}

impl FromStr for Shape {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Shape::ALL
            .into_iter()
            .find(|sh| sh.to_string() == s)
            .ok_or_else(|| format!("unknown shape `{s}` (expected fig1a, fig1b, fig2a or fig2b)"))
    }
}

/// Roles of the variables around `X` and `Y`. Lists are in `X`'s parent order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeInfo {
    pub shape: Shape,
    pub x: String,
    pub y: String,
    pub exo_modifiable: Vec<String>,
    pub exo_fixed: Vec<String>,
    pub endo_modifiable: Vec<String>,
    pub endo_fixed: Vec<String>,
    /// Exogenous parents of `Y`.
    pub noise: Vec<String>,
    parents: Vec<String>,
}

impl ShapeInfo {
    fn filter<'a>(&'a self, lists: &[&'a Vec<String>]) -> Vec<&'a str> {
        self.parents.iter().filter(|p| lists.iter().any(|l| l.contains(p))).map(String::as_str).collect()
    }

    /// Exogenous parents of `X`.
    pub fn exogenous_causes(&self) -> Vec<&str> {
        self.filter(&[&self.exo_modifiable, &self.exo_fixed])
    }

    /// Endogenous parents of `X`.
    pub fn endogenous_causes(&self) -> Vec<&str> {
        self.filter(&[&self.endo_modifiable, &self.endo_fixed])
    }

    pub fn modifiable_causes(&self) -> Vec<&str> {
        self.filter(&[&self.exo_modifiable, &self.endo_modifiable])
    }

    pub fn fixed_causes(&self) -> Vec<&str> {
        self.filter(&[&self.exo_fixed, &self.endo_fixed])
    }
}

fn require(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(IdentityError::ShapeMismatch(msg()))
    }
}

/// Exogenous components under `given` chaining.
fn exogenous_blocks(scm: &Scm) -> Vec<usize> {
    let mut root: Vec<usize> = (0..scm.len()).collect();
    fn find(root: &mut [usize], mut i: usize) -> usize {
        while root[i] != i {
            root[i] = root[root[i]];
            i = root[i];
        }
        i
    }
    for &e in scm.exogenous_ids() {
        for &c in scm.parent_ids(e) {
            let (a, b) = (find(&mut root, e), find(&mut root, c));
            root[a] = b;
        }
    }
    (0..scm.len()).map(|i| find(&mut root, i)).collect()
}

/// Classifies the graph around `x` and `y`.
pub fn detect_shape(scm: &Scm, x: &str, y: &str) -> Result<ShapeInfo> {
    let var = |n: &str| scm.id(n).ok_or_else(|| IdentityError::from(WorldError::UnknownVariable(n.to_string())));
    let (xid, yid) = (var(x)?, var(y)?);
    for (id, n) in [(xid, x), (yid, y)] {
        require(!scm.decl(id).is_exogenous(), || format!("`{n}` must be endogenous"))?;
        require(is_binary_domain(&scm.decl(id).domain), || format!("`{n}` must have domain {{0, 1}}"))?;
    }
    let mut info = ShapeInfo {
        shape: Shape::Fig1a,
        x: x.to_string(),
        y: y.to_string(),
        exo_modifiable: vec![],
        exo_fixed: vec![],
        endo_modifiable: vec![],
        endo_fixed: vec![],
        noise: vec![],
        parents: vec![],
    };
    for &p in scm.parent_ids(xid) {
        let d = scm.decl(p);
        let name = d.name.clone();
        info.parents.push(name.clone());
        match (d.is_exogenous(), d.is_modifiable()) {
            (true, true) => info.exo_modifiable.push(name),
            (true, false) => info.exo_fixed.push(name),
            (false, true) => info.endo_modifiable.push(name),
            (false, false) => info.endo_fixed.push(name),
        }
    }

    let blocks = exogenous_blocks(scm);
    let x_anc = scm.ancestors(xid);
    let x_blocks: BTreeSet<usize> = x_anc.iter().filter(|&&a| scm.decl(a).is_exogenous()).map(|&a| blocks[a]).collect();
    for &p in scm.parent_ids(yid) {
        let name = scm.name(p);
        if p == xid || info.endogenous_causes().contains(&name) {
            continue;
        }
        require(scm.decl(p).is_exogenous() && !x_blocks.contains(&blocks[p]), || {
            format!("`{y}` reads `{name}`, which is neither `{x}`, a cause of `{x}`, nor independent noise")
        })?;
        info.noise.push(name.to_string());
    }

    let exo_cause_blocks: BTreeSet<usize> =
        info.exogenous_causes().iter().map(|n| blocks[scm.id(n).expect("parent")]).collect();
    for w in info.endogenous_causes() {
        let wid = scm.id(w).expect("parent");
        let shared = scm
            .ancestors(wid)
            .into_iter()
            .find(|&a| scm.decl(a).is_exogenous() && exo_cause_blocks.contains(&blocks[a]));
        require(shared.is_none(), || {
            format!("`{w}` depends on `{}`, which is tied to the exogenous causes of `{x}`", scm.name(shared.unwrap()))
        })?;
    }

    let mixed_exo = !info.exo_modifiable.is_empty() && !info.exo_fixed.is_empty();
    info.shape = match (info.endo_modifiable.is_empty() && info.endo_fixed.is_empty(), mixed_exo) {
        (true, false) => Shape::Fig1a,
        (true, true) => Shape::Fig1b,
        (false, _) if mixed_exo || !info.endo_fixed.is_empty() => Shape::Fig2b,
        (false, _) => Shape::Fig2a,
    };
    Ok(info)
}

pub(crate) fn expect_shape(scm: &Scm, x: &str, y: &str, allowed: &[Shape]) -> Result<ShapeInfo> {
    let info = detect_shape(scm, x, y)?;
    require(allowed.contains(&info.shape), || {
        let names: Vec<String> = allowed.iter().map(Shape::to_string).collect();
        format!("graph around `{x}` is {}, expected {}", info.shape, names.join(" or "))
    })?;
    Ok(info)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn fixture_shapes() {
        let cases = [
            (fixtures::m1(), Shape::Fig1a),
            (fixtures::m1b(), Shape::Fig1b),
            (fixtures::m2(), Shape::Fig2a),
            (fixtures::m3(), Shape::Fig2b),
            (fixtures::versions(), Shape::Fig2a),
        ];
        for (scm, shape) in cases {
            assert_eq!(detect_shape(&scm, "X", "Y").unwrap().shape, shape);
        }
        let m3 = detect_shape(&fixtures::m3(), "X", "Y").unwrap();
        assert_eq!(m3.modifiable_causes(), ["V", "W"]);
        assert_eq!(m3.fixed_causes(), ["ϑ", "Z"]);
        assert_eq!(m3.noise, ["ξ"]);
    }

    #[test]
    fn rejects_confounded_outcome() {
        let scm =
            crate::dsl::parse_model("exo U ~ {0: 1/2, 1: 1/2}\nvar X in {0, 1} := U\nvar Y in {0, 1} := and(X, U)\n")
                .unwrap();
        assert!(matches!(detect_shape(&scm, "X", "Y"), Err(IdentityError::ShapeMismatch(_))));
        let scm = crate::dsl::parse_model(
            "exo U ~ {0: 1/2, 1: 1/2}\nexo N given U ~ {0: {0: 1, 1: 0}, 1: {0: 1/2, 1: 1/2}}\nvar X in {0, 1} := U\nvar Y in {0, 1} := or(X, N)\n",
        )
        .unwrap();
        assert!(matches!(detect_shape(&scm, "X", "Y"), Err(IdentityError::ShapeMismatch(_))));
    }

    #[test]
    fn shape_names_parse() {
        for s in Shape::ALL {
            assert_eq!(s.to_string().parse::<Shape>(), Ok(s));
        }
        assert!("fig3".parse::<Shape>().is_err());
    }

    #[test]
    fn report_json_and_pass() {
        let mut r = IdentityReport::new("demo");
        r.assert_eq("a", crate::rat(1, 2), crate::rat(1, 2));
        r.report("b", crate::rat(13, 16), crate::rat(5, 8));
        let r = r.for_model("m");
        assert!(r.pass());
        let j = r.to_json();
        assert_eq!(j["instances"][0]["lhs_num"], 1);
        assert_eq!(j["reported"][0]["equal"], false);
        assert!(r.to_string().contains("differs: 13/16 vs 5/8"));
    }
}
