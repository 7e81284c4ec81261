use num_traits::{One, Zero};

use super::checks::{p_one, support_of};
use super::{expect_shape, IdentityError, IdentityReport, Result, Shape};
use crate::inference::{numeric_domain, InferenceError};
use crate::model::Scm;
use crate::value::{fmt_rational, is_binary_domain, rat, Rational, Value};
use crate::worlds::{
    attainability, dynamic_from_report, Bindings, DynamicIntervention, Plan, Selector, StaticIntervention, WorldSpec,
};

/// Split of the effect of moving the causes of `X` from `w0(U)` to `w1(U)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecompositionResult {
    pub total: Rational,
    pub indirect: Rational,
    pub direct: Rational,
    pub w1: DynamicIntervention,
    pub w0: DynamicIntervention,
    /// `Σ_u P(U=u) P(Y^{(w1(u), x0)}=1)` from static interventions.
    pub middle: Rational,
    /// The same quantity from the nested world `Y^{(w1(U), X^{(w0(U))})}`.
    pub middle_nested: Rational,
}

/// `w(u)` for every support `u` of the exogenous causes, chosen by `selector`
/// among the values of the endogenous causes that yield `X = x_value`.
pub fn default_collection(scm: &Scm, x: &str, x_value: &Value, selector: Selector) -> Result<DynamicIntervention> {
    let (u, w) = causes(scm, x)?;
    let att = attainability(scm, x, x_value, &u, &w)?;
    Ok(dynamic_from_report(&att, selector)?)
}

/// Exogenous and endogenous parents of `x`, in parent order.
fn causes<'a>(scm: &'a Scm, x: &str) -> Result<(Vec<&'a str>, Vec<&'a str>)> {
    let parents =
        scm.parents(x).ok_or_else(|| IdentityError::from(crate::worlds::WorldError::UnknownVariable(x.to_string())))?;
    let (u, w): (Vec<&str>, Vec<&str>) =
        parents.into_iter().partition(|p| scm.variable(p).expect("parent").kind == crate::model::Kind::Exogenous);
    Ok((u, w))
}

/// Checks that `coll` maps every support value of the exogenous causes of `x`
/// to values of its endogenous causes producing `x = x_value`.
fn validate_collection(scm: &Scm, x: &str, x_value: &Value, coll: &DynamicIntervention) -> Result<()> {
    let (u, w) = causes(scm, x)?;
    let names = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    if coll.index != names(&u) || coll.targets != names(&w) {
        return Err(IdentityError::InvalidCollection(format!(
            "expected a rule on ({}) indexed by ({})",
            w.join(", "),
            u.join(", ")
        )));
    }
    let att = attainability(scm, x, x_value, &u, &w)?;
    for s in &att.strata {
        match coll.lookup(&s.stratum) {
            Some(v) if s.preimage.iter().any(|p| p.as_slice() == v) => {}
            Some(v) => {
                let shown: Vec<String> = v.iter().map(Value::to_string).collect();
                return Err(IdentityError::InvalidCollection(format!(
                    "({}) does not give {x}={x_value} in stratum ({})",
                    shown.join(", "),
                    crate::inference::fmt_bindings(&att.stratum_bindings(&s.stratum))
                )));
            }
            None => {
                return Err(IdentityError::InvalidCollection(format!(
                    "no entry for stratum ({})",
                    crate::inference::fmt_bindings(&att.stratum_bindings(&s.stratum))
                )))
            }
        }
    }
    Ok(())
}

fn with_static(rule: &DynamicIntervention, fixed: Bindings) -> WorldSpec {
    WorldSpec::Dynamic { rules: vec![rule.clone()], fixed: StaticIntervention { assignments: fixed } }
}

fn static_for(coll: &DynamicIntervention, u: &Bindings, extra: Option<(&str, Value)>) -> WorldSpec {
    let key: Vec<Value> = u.iter().map(|(_, v)| v.clone()).collect();
    let vals = coll.lookup(&key).expect("validated collection");
    let mut b: Bindings = coll.targets.iter().cloned().zip(vals.iter().cloned()).collect();
    if let Some((n, v)) = extra {
        b.push((n.to_string(), v));
    }
    WorldSpec::static_(b)
}

/// Total, indirect and direct effect of moving the endogenous causes of `X`
/// from `w0(U)` (giving `X=0`) to `w1(U)` (giving `X=1`).
pub fn decompose_effect(
    scm: &Scm,
    x: &str,
    y: &str,
    w1: &DynamicIntervention,
    w0: &DynamicIntervention,
) -> Result<DecompositionResult> {
    let info = expect_shape(scm, x, y, &[Shape::Fig2a])?;
    validate_collection(scm, x, &Value::one(), w1)?;
    validate_collection(scm, x, &Value::zero(), w0)?;
    let total =
        p_one(scm, y, &WorldSpec::dynamic(w1.clone()), None)? - p_one(scm, y, &WorldSpec::dynamic(w0.clone()), None)?;
    let (mut top, mut middle, mut bottom) = (Rational::zero(), Rational::zero(), Rational::zero());
    for (u, pu) in support_of(scm, &info.exogenous_causes())? {
        top += &pu * p_one(scm, y, &static_for(w1, &u, Some((x, Value::one()))), None)?;
        middle += &pu * p_one(scm, y, &static_for(w1, &u, Some((x, Value::zero()))), None)?;
        bottom += &pu * p_one(scm, y, &static_for(w0, &u, Some((x, Value::zero()))), None)?;
    }
    let nested =
        WorldSpec::nested(WorldSpec::dynamic(w1.clone()), vec![(x.to_string(), WorldSpec::dynamic(w0.clone()))]);
    let middle_nested = p_one(scm, y, &nested, None)?;
    Ok(DecompositionResult {
        total,
        indirect: &top - &middle,
        direct: &middle - &bottom,
        w1: w1.clone(),
        w0: w0.clone(),
        middle,
        middle_nested,
    })
}

/// `total = indirect + direct` and the nested cross-check, for two selector
/// choices of each collection.
pub fn check_decomposition(scm: &Scm, x: &str, y: &str) -> Result<IdentityReport> {
    expect_shape(scm, x, y, &[Shape::Fig2a])?;
    let mut report = IdentityReport::new("decomposition");
    for s1 in super::checks::SELECTORS {
        for s0 in super::checks::SELECTORS {
            let w1 = default_collection(scm, x, &Value::one(), s1)?;
            let w0 = default_collection(scm, x, &Value::zero(), s0)?;
            let d = decompose_effect(scm, x, y, &w1, &w0)?;
            let case = format!("w1 {s1}, w0 {s0}");
            report.assert_eq(format!("{case}: total = indirect + direct"), d.total.clone(), &d.indirect + &d.direct);
            report.assert_eq(format!("{case}: nested middle term"), d.middle_nested, d.middle);
            report.report(format!("{case}: indirect vs total"), d.indirect, d.total);
        }
    }
    Ok(report)
}

// ── Linear outcome ───────────────────────────────────────────────────

/// `Y = α·W + β·X + γ·(W·X) + ξ` over the discrete block of `scm`, with `ξ`
/// an independent finite-support real variable. `Y` is not part of `scm`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinearModelSpec {
    pub scm: Scm,
    pub x: String,
    pub w: Vec<String>,
    pub alpha: Vec<Rational>,
    pub beta: Rational,
    pub gamma: Vec<Rational>,
    /// `(value, probability)` pairs.
    pub xi: Vec<(Rational, Rational)>,
}

impl LinearModelSpec {
    pub fn new(
        scm: Scm,
        x: &str,
        w: &[&str],
        alpha: Vec<Rational>,
        beta: Rational,
        gamma: Vec<Rational>,
        xi: Vec<(Rational, Rational)>,
    ) -> Result<Self> {
        let bad = |m: String| Err(IdentityError::InvalidCollection(m));
        let xd = scm
            .variable(x)
            .ok_or_else(|| InferenceError::World(crate::worlds::WorldError::UnknownVariable(x.into())))?;
        if !is_binary_domain(&xd.domain) {
            return Err(InferenceError::NonBinaryVariable(x.to_string()).into());
        }
        let (_, causes_w) = causes(&scm, x)?;
        if causes_w != w {
            return bad(format!("W must list the endogenous causes of {x}: ({})", causes_w.join(", ")));
        }
        let gamma = if gamma.is_empty() { vec![Rational::zero(); w.len()] } else { gamma };
        if alpha.len() != w.len() || gamma.len() != w.len() {
            return bad(format!("expected {} coefficients in α and γ", w.len()));
        }
        for n in w {
            numeric_domain(&scm, scm.id(n).expect("parent"))?;
        }
        let mass = xi.iter().fold(Rational::zero(), |a, (_, p)| a + p);
        if !mass.is_one() || xi.iter().any(|(_, p)| *p < Rational::zero()) {
            return bad(format!("ξ probabilities must be nonnegative and sum to 1, got {}", fmt_rational(&mass)));
        }
        Ok(Self { x: x.to_string(), w: w.iter().map(|s| s.to_string()).collect(), scm, alpha, beta, gamma, xi })
    }

    /// `E(Y)` in `world`.
    pub fn mean(&self, world: &WorldSpec) -> Result<Rational> {
        let scm = &self.scm;
        let plan = Plan::compile(scm, world)?;
        let xid = scm.id(&self.x).expect("validated");
        let wids: Vec<usize> = self.w.iter().map(|n| scm.id(n).expect("validated")).collect();
        let mut buf = vec![0u32; scm.len()];
        let mut acc = Rational::zero();
        for (cfg, p) in scm.exogenous_support().map_err(InferenceError::from)? {
            plan.run(scm, cfg.raw(), &mut buf)?;
            let xv = scm.value(xid, buf[xid]).as_rational().expect("binary").clone();
            let mut y = &self.beta * &xv;
            for (k, &wid) in wids.iter().enumerate() {
                let wv = scm.value(wid, buf[wid]).as_rational().expect("numeric").clone();
                y += &self.alpha[k] * &wv + &self.gamma[k] * &wv * &xv;
            }
            acc += p * y;
        }
        let e_xi = self.xi.iter().fold(Rational::zero(), |a, (v, p)| a + v * p);
        Ok(acc + e_xi)
    }

    pub fn ace(&self) -> Result<Rational> {
        Ok(self.mean(&WorldSpec::set(&self.x, 1))? - self.mean(&WorldSpec::set(&self.x, 0))?)
    }

    /// `Σ_u P(U=u) E(Y^{(w1(u), 1)} - Y^{(w1(u), 0)})`.
    pub fn indirect(&self, w1: &DynamicIntervention) -> Result<Rational> {
        validate_collection(&self.scm, &self.x, &Value::one(), w1)?;
        let at = |xv: i64| self.mean(&with_static(w1, vec![(self.x.clone(), Value::int(xv))]));
        Ok(at(1)? - at(0)?)
    }

    pub fn direct(&self, w1: &DynamicIntervention, w0: &DynamicIntervention) -> Result<Rational> {
        validate_collection(&self.scm, &self.x, &Value::zero(), w0)?;
        let zero = vec![(self.x.clone(), Value::zero())];
        Ok(self.mean(&with_static(w1, zero.clone()))? - self.mean(&with_static(w0, zero))?)
    }

    pub fn total(&self, w1: &DynamicIntervention, w0: &DynamicIntervention) -> Result<Rational> {
        Ok(self.mean(&WorldSpec::dynamic(w1.clone()))? - self.mean(&WorldSpec::dynamic(w0.clone()))?)
    }

    fn has_interaction(&self) -> bool {
        self.gamma.iter().any(|g| !g.is_zero())
    }
}

/// Without interaction, indirect effect = ACE = β. With interaction both are
/// reported and the decomposition is still asserted.
pub fn check_linear(
    spec: &LinearModelSpec,
    w1: &DynamicIntervention,
    w0: &DynamicIntervention,
) -> Result<IdentityReport> {
    let indirect = spec.indirect(w1)?;
    let direct = spec.direct(w1, w0)?;
    let total = spec.total(w1, w0)?;
    let ace = spec.ace()?;
    let mut report = IdentityReport::new("linear");
    if spec.has_interaction() {
        report.report("indirect vs ace", indirect.clone(), ace.clone());
        report.report("ace vs beta", ace, spec.beta.clone());
    } else {
        report.assert_eq("indirect vs ace", indirect.clone(), ace.clone());
        report.assert_eq("ace vs beta", ace, spec.beta.clone());
    }
    report.assert_eq("total = indirect + direct", total, indirect + direct);
    Ok(report)
}

/// Linear outcome on the fixture block `W := η, X := xor(U, W)` with
/// α=1, β=2, γ=3; the indirect effect (17/4) differs from the ACE (7/2).
pub fn interaction_witness() -> LinearModelSpec {
    linear_on_m2(rat(1, 1), rat(2, 1), rat(3, 1))
}

pub(crate) fn linear_on_m2(alpha: Rational, beta: Rational, gamma: Rational) -> LinearModelSpec {
    LinearModelSpec::new(
        crate::fixtures::m2(),
        "X",
        &["W"],
        vec![alpha],
        beta,
        vec![gamma],
        vec![(rat(0, 1), rat(3, 4)), (rat(1, 1), rat(1, 4))],
    )
    .expect("fixture block is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn m2_collections() -> (DynamicIntervention, DynamicIntervention) {
        let v = Value::int;
        let w1 = DynamicIntervention::new(vec!["W".into()], vec!["U".into()])
            .entry(vec![v(0)], vec![v(1)])
            .entry(vec![v(1)], vec![v(0)]);
        let w0 = DynamicIntervention::new(vec!["W".into()], vec!["U".into()])
            .entry(vec![v(0)], vec![v(0)])
            .entry(vec![v(1)], vec![v(1)]);
        (w1, w0)
    }

    #[test]
    fn m2_decomposition() {
        let (w1, w0) = m2_collections();
        let d = decompose_effect(&fixtures::m2(), "X", "Y", &w1, &w0).unwrap();
        assert_eq!((d.total.clone(), d.indirect.clone(), d.direct.clone()), (rat(9, 16), rat(9, 16), rat(0, 1)));
        assert_eq!(d.middle, d.middle_nested);
        assert!(check_decomposition(&fixtures::m2(), "X", "Y").unwrap().pass());
        assert_eq!(default_collection(&fixtures::m2(), "X", &Value::one(), Selector::First).unwrap(), w1);
    }

    #[test]
    fn invalid_collection() {
        let (w1, w0) = m2_collections();
        assert!(matches!(
            decompose_effect(&fixtures::m2(), "X", "Y", &w0, &w1),
            Err(IdentityError::InvalidCollection(_))
        ));
        let partial = DynamicIntervention::new(vec!["W".into()], vec!["U".into()])
            .entry(vec![Value::int(0)], vec![Value::int(1)]);
        assert!(matches!(
            decompose_effect(&fixtures::m2(), "X", "Y", &partial, &w0),
            Err(IdentityError::InvalidCollection(_))
        ));
    }

    #[test]
    fn linear_cases() {
        let (w1, w0) = m2_collections();
        for beta in [0, 2, -1] {
            let spec = linear_on_m2(rat(1, 1), rat(beta, 1), rat(0, 1));
            let r = check_linear(&spec, &w1, &w0).unwrap();
            assert!(r.pass());
            assert_eq!(spec.ace().unwrap(), rat(beta, 1));
            assert_eq!(spec.indirect(&w1).unwrap(), rat(beta, 1));
        }
        let zero = linear_on_m2(rat(0, 1), rat(0, 1), rat(0, 1));
        assert_eq!(zero.total(&w1, &w0).unwrap(), rat(0, 1));
        let wit = interaction_witness();
        assert_eq!(wit.ace().unwrap(), rat(7, 2));
        assert_eq!(wit.indirect(&w1).unwrap(), rat(17, 4));
        let r = check_linear(&wit, &w1, &w0).unwrap();
        assert!(r.pass());
        assert!(r.reported().any(|i| !i.equal()));
    }
}
