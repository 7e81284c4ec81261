use num_traits::Zero;

use super::{expect_shape, IdentityError, IdentityReport, Result, Shape, ShapeInfo};
use crate::inference::{
    ace, adjustment_ace, cond_indep, counterfactual_joint, exact_distribution, exact_probability, positivity, Event,
    InferenceError,
};
use crate::model::Scm;
use crate::value::{Rational, Value};
use crate::worlds::{
    attainability, conditional_preimage, dynamic_from_report, preimage, AttainabilityReport, Bindings,
    DynamicIntervention, Selector, StaticIntervention, WorldSpec,
};

pub(crate) const SELECTORS: [Selector; 2] = [Selector::First, Selector::Last];

pub(crate) fn p_one(scm: &Scm, y: &str, world: &WorldSpec, given: Option<&Event>) -> Result<Rational> {
    Ok(exact_probability(scm, &Event::is(y, 1), world, given)?)
}

fn event(b: &Bindings) -> Event {
    Event { atoms: b.clone() }
}

fn label(b: &Bindings) -> String {
    b.iter().map(|(n, v)| format!("{n}={v}")).collect::<Vec<_>>().join(",")
}

fn dynamic(rule: DynamicIntervention, fixed: Bindings) -> WorldSpec {
    WorldSpec::Dynamic { rules: vec![rule], fixed: StaticIntervention { assignments: fixed } }
}

fn require_attainable(report: &AttainabilityReport) -> Result<()> {
    match report.unattainable_strata().first() {
        Some(s) => Err(IdentityError::UnattainableStratum { stratum: report.stratum_bindings(s) }),
        None => Ok(()),
    }
}

/// Positive-probability joint values of `vars`.
pub(crate) fn support_of(scm: &Scm, vars: &[&str]) -> Result<Vec<(Bindings, Rational)>> {
    let d = exact_distribution(scm, vars, &WorldSpec::Observational)?;
    Ok(d.iter()
        .map(|(k, p)| (vars.iter().map(|s| s.to_string()).zip(k.iter().cloned()).collect(), p.clone()))
        .collect())
}

/// `P(Y=1 | do(U=u)) = P(Y=1 | do(X=f_X(u)))` for every support value `u` of
/// the exogenous causes.
pub fn check_unconfounded(scm: &Scm, x: &str, y: &str) -> Result<IdentityReport> {
    let info = expect_shape(scm, x, y, &[Shape::Fig1a, Shape::Fig1b])?;
    let u = info.exogenous_causes();
    let mut report = IdentityReport::new("unconfounded");
    let xid = scm.id(x).expect("checked");
    for (ub, _) in support_of(scm, &u)? {
        let idx: Vec<u32> = ub
            .iter()
            .map(|(n, v)| {
                let id = scm.id(n).expect("parent");
                scm.value_index(id, v).expect("support value")
            })
            .collect();
        let x0 = scm.value(xid, scm.eval_on_parents(xid, &idx)).clone();
        let lhs = p_one(scm, y, &WorldSpec::static_(ub.clone()), None)?;
        let rhs = p_one(scm, y, &WorldSpec::set(x, x0.clone()), None)?;
        report.assert_eq(format!("do({}) vs do({x}={x0})", label(&ub)), lhs, rhs);
    }
    Ok(report)
}

/// `P(Y=1 | do(V=v(ϑ))) = P(Y=1 | do(X=x0))` for two selectors when every
/// stratum is attainable; otherwise `P(Y=1 | do(X=x0), ϑ=ν) = P(Y=1 | do(X=x0))`
/// in each unattainable stratum ν.
pub fn check_dynamic_unconfounded(scm: &Scm, x: &str, y: &str, x0: &Value) -> Result<IdentityReport> {
    let info = expect_shape(scm, x, y, &[Shape::Fig1b])?;
    let (index, control) = (info.fixed_causes(), info.modifiable_causes());
    let att = attainability(scm, x, x0, &index, &control)?;
    let do_x = WorldSpec::set(x, x0.clone());
    let rhs = p_one(scm, y, &do_x, None)?;
    let mut report = IdentityReport::new("dynamic unconfounded");
    if att.all_attainable() {
        for sel in SELECTORS {
            let rule = dynamic_from_report(&att, sel)?;
            let lhs = p_one(scm, y, &WorldSpec::dynamic(rule), None)?;
            report.assert_eq(format!("{x0}, select {sel}"), lhs, rhs.clone());
        }
    } else {
        for s in att.unattainable_strata() {
            let b = att.stratum_bindings(s);
            let lhs = p_one(scm, y, &do_x, Some(&event(&b)))?;
            report.assert_eq(format!("{x0}, unattainable {}", label(&b)), lhs, rhs.clone());
        }
    }
    Ok(report)
}

/// Type (i): `do(U=u_{x0}(W))` against `do(X=x0)`, in aggregate and per
/// stratum of `W`, for two selectors.
pub fn check_type_i(scm: &Scm, x: &str, y: &str, x0: &Value) -> Result<IdentityReport> {
    let info = expect_shape(scm, x, y, &[Shape::Fig2a])?;
    let (w, u) = (info.endogenous_causes(), info.exogenous_causes());
    let att = attainability(scm, x, x0, &w, &u)?;
    require_attainable(&att)?;
    let do_x = WorldSpec::set(x, x0.clone());
    let mut report = IdentityReport::new("type i");
    let rhs = p_one(scm, y, &do_x, None)?;
    for sel in SELECTORS {
        let world = WorldSpec::dynamic(dynamic_from_report(&att, sel)?);
        report.assert_eq(format!("{x0}, select {sel}"), p_one(scm, y, &world, None)?, rhs.clone());
        for s in att.attainable_strata() {
            let given = event(&att.stratum_bindings(s));
            let lhs = p_one(scm, y, &world, Some(&given))?;
            let rhs = p_one(scm, y, &do_x, Some(&given))?;
            report.assert_eq(format!("{x0}, select {sel}, {given}"), lhs, rhs);
        }
    }
    Ok(report)
}

/// Type (ii): per stratum `u0`, `P(Y=1 | do(W=w(U)), U=u0) = P(Y^{(X=x0, W=w(u0))}=1)`.
/// The aggregate is asserted equal to `do(X=x0, W=w(U))` and only reported
/// against `do(X=x0)`.
pub fn check_type_ii(scm: &Scm, x: &str, y: &str, x0: &Value) -> Result<IdentityReport> {
    let info = expect_shape(scm, x, y, &[Shape::Fig2a])?;
    let (w, u) = (info.endogenous_causes(), info.exogenous_causes());
    let att = attainability(scm, x, x0, &u, &w)?;
    require_attainable(&att)?;
    let mut report = IdentityReport::new("type ii");
    let do_x = p_one(scm, y, &WorldSpec::set(x, x0.clone()), None)?;
    for sel in SELECTORS {
        let rule = dynamic_from_report(&att, sel)?;
        let world = WorldSpec::dynamic(rule.clone());
        for (stratum, wv) in &rule.table {
            let given = event(&att.stratum_bindings(stratum));
            let lhs = p_one(scm, y, &world, Some(&given))?;
            let mut fixed: Bindings = vec![(x.to_string(), x0.clone())];
            fixed.extend(w.iter().map(|s| s.to_string()).zip(wv.iter().cloned()));
            let rhs = p_one(scm, y, &WorldSpec::static_(fixed), None)?;
            report.assert_eq(format!("{x0}, select {sel}, {given}"), lhs, rhs);
        }
        let agg = p_one(scm, y, &world, None)?;
        let with_x = p_one(scm, y, &dynamic(rule, vec![(x.to_string(), x0.clone())]), None)?;
        report.assert_eq(
            format!("{x0}, select {sel}, aggregate vs do({x}={x0}, {})", w.join(",")),
            agg.clone(),
            with_x,
        );
        report.report(format!("{x0}, select {sel}, aggregate vs do({x}={x0})"), agg, do_x.clone());
    }
    Ok(report)
}

/// Type (iii): `P(Y=1 | do(W=w0, U=u0)) = P(Y^{(W=w0, X=x0)}=1)` for every
/// `(w0, u0)` in the preimage of `x0`.
pub fn check_type_iii(scm: &Scm, x: &str, y: &str, x0: &Value) -> Result<IdentityReport> {
    let info = expect_shape(scm, x, y, &[Shape::Fig2a])?;
    let w = info.endogenous_causes();
    let pre = preimage(scm, x, x0)?;
    if pre.is_empty() {
        return Err(IdentityError::EmptyPreimage(format!("{x}={x0}")));
    }
    let mut report = IdentityReport::new("type iii");
    for b in pre {
        let lhs = p_one(scm, y, &WorldSpec::static_(b.clone()), None)?;
        let mut fixed: Bindings = b.iter().filter(|(n, _)| w.contains(&n.as_str())).cloned().collect();
        fixed.push((x.to_string(), x0.clone()));
        let rhs = p_one(scm, y, &WorldSpec::static_(fixed), None)?;
        report.assert_eq(format!("{x0}, do({})", label(&b)), lhs, rhs);
    }
    Ok(report)
}

fn versions(scm: &Scm, info: &ShapeInfo, u0: &Bindings, x0: &Value) -> Result<Vec<Bindings>> {
    let fixed: Vec<(&str, Value)> = u0.iter().map(|(n, v)| (n.as_str(), v.clone())).collect();
    let u = info.exogenous_causes();
    if u0.len() != u.len() || u0.iter().any(|(n, _)| !u.contains(&n.as_str())) {
        return Err(IdentityError::InvalidCollection(format!("expected values for exactly {}", u.join(", "))));
    }
    Ok(conditional_preimage(scm, &info.x, x0, &fixed)?)
}

/// `|P(Y^{(W=w_a, X=x0)}=1) - P(Y^{(W=w_b, X=x0)}=1)|` for two elements of the
/// conditional preimage of `x0` given `U=u0`.
pub fn version_relevance_gap(
    scm: &Scm,
    x: &str,
    y: &str,
    u0: &Bindings,
    x0: &Value,
    a: Selector,
    b: Selector,
) -> Result<Rational> {
    let info = expect_shape(scm, x, y, &[Shape::Fig2a])?;
    let vs = versions(scm, &info, u0, x0)?;
    if vs.len() < 2 {
        return Err(IdentityError::NeedTwoVersions);
    }
    let p = |w: &Bindings| {
        let mut fixed = w.clone();
        fixed.push((x.to_string(), x0.clone()));
        p_one(scm, y, &WorldSpec::static_(fixed), None)
    };
    let (wa, wb) = (a.pick(&vs).expect("nonempty"), b.pick(&vs).expect("nonempty"));
    let d = p(wa)? - p(wb)?;
    Ok(if d < Rational::zero() { -d } else { d })
}

/// When no cause of `X` in `W` is read by `Y`, every version of `x0` gives the
/// same outcome law.
pub fn check_version_irrelevance(scm: &Scm, x: &str, y: &str, x0: &Value) -> Result<IdentityReport> {
    let info = expect_shape(scm, x, y, &[Shape::Fig2a])?;
    let y_parents = scm.parents(y).expect("checked");
    if info.endogenous_causes().iter().any(|w| y_parents.contains(w)) {
        return Err(IdentityError::ShapeMismatch(format!("`{y}` reads a cause of `{x}` directly")));
    }
    let mut report = IdentityReport::new("version irrelevance");
    for (u0, _) in support_of(scm, &info.exogenous_causes())? {
        let vs = versions(scm, &info, &u0, x0)?;
        let p = |w: &Bindings| {
            let mut fixed = w.clone();
            fixed.push((x.to_string(), x0.clone()));
            p_one(scm, y, &WorldSpec::static_(fixed), None)
        };
        if let Some(first) = vs.first() {
            let base = p(first)?;
            for v in &vs[1..] {
                report.assert_eq(
                    format!("{x0}, {} : {} vs {}", label(&u0), label(v), label(first)),
                    p(v)?,
                    base.clone(),
                );
            }
        }
    }
    Ok(report)
}

/// Modifiable causes under confounding: `do(V=v(ϑ,Z), W=w(ϑ,Z))` against
/// `do(X=x0, W=w(ϑ,Z))`; the difference from `do(X=x0)` is reported.
pub fn check_modifiable_confounded(scm: &Scm, x: &str, y: &str, x0: &Value) -> Result<IdentityReport> {
    let info = expect_shape(scm, x, y, &[Shape::Fig2b])?;
    let (index, control) = (info.fixed_causes(), info.modifiable_causes());
    let att = attainability(scm, x, x0, &index, &control)?;
    require_attainable(&att)?;
    let endo: Vec<&str> = control.iter().copied().filter(|c| info.endo_modifiable.iter().any(|e| e == c)).collect();
    let do_x = p_one(scm, y, &WorldSpec::set(x, x0.clone()), None)?;
    let mut report = IdentityReport::new("modifiable confounded");
    for sel in SELECTORS {
        let rule = dynamic_from_report(&att, sel)?;
        let lhs = p_one(scm, y, &WorldSpec::dynamic(rule.clone()), None)?;
        let rhs = p_one(scm, y, &dynamic(rule.project(&endo), vec![(x.to_string(), x0.clone())]), None)?;
        report.assert_eq(format!("{x0}, select {sel}"), lhs.clone(), rhs);
        report.report(format!("{x0}, select {sel}, vs do({x}={x0})"), lhs, do_x.clone());
    }
    Ok(report)
}

/// Back-door adjustment over the endogenous causes of `X` equals the ACE.
pub fn check_adjustment(scm: &Scm, x: &str, y: &str) -> Result<IdentityReport> {
    let info = super::detect_shape(scm, x, y)?;
    let adjust = info.endogenous_causes();
    let pos = positivity(scm, x, &adjust)?;
    if !pos.pass {
        let bad = pos.entries.iter().find(|e| !e.pass).expect("some entry fails");
        return Err(InferenceError::PositivityViolation {
            stratum: bad.stratum.clone(),
            p_treated: bad.p_treated.clone(),
        }
        .into());
    }
    let adjusted = adjustment_ace(scm, x, y, &adjust)?.value;
    let exact = ace(scm, x, y)?.as_exact().expect("exact").clone();
    let mut report = IdentityReport::new("adjustment");
    report.assert_eq(format!("adjust {{{}}} vs ace", adjust.join(", ")), adjusted, exact.clone());
    let naive = adjustment_ace(scm, x, y, &[])?.value;
    report.report("naive contrast vs ace", naive, exact);
    Ok(report)
}

/// `Y^{(x)} ⊥ X | W` with `W` the endogenous causes of `X`, for both `x`.
/// Instances compare the largest deviation from independence with zero.
pub fn check_ignorability(scm: &Scm, x: &str, y: &str) -> Result<IdentityReport> {
    let info = super::detect_shape(scm, x, y)?;
    let w = info.endogenous_causes();
    let mut report = IdentityReport::new("ignorability");
    for xv in [0, 1] {
        let mut pairs = vec![(y, WorldSpec::set(x, xv)), (x, WorldSpec::Observational)];
        pairs.extend(w.iter().map(|n| (*n, WorldSpec::Observational)));
        let joint = counterfactual_joint(scm, &pairs)?;
        let yl = joint.vars()[0].clone();
        let (_, dev) = cond_indep(&joint, &[&yl], &[x], &w)?;
        report.assert_eq(format!("{yl} ⊥ {x} | {{{}}}", w.join(", ")), dev, Rational::zero());
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::value::rat;

    fn v(n: i64) -> Value {
        Value::int(n)
    }

    #[test]
    fn unconfounded_m1() {
        let r = check_unconfounded(&fixtures::m1(), "X", "Y").unwrap();
        assert!(r.pass());
        let vals: Vec<_> = r.instances.iter().map(|i| i.lhs.clone()).collect();
        assert_eq!(vals, [rat(1, 4), rat(1, 1)]);
        assert!(matches!(check_unconfounded(&fixtures::m2(), "X", "Y"), Err(IdentityError::ShapeMismatch(_))));
    }

    #[test]
    fn dynamic_unconfounded_m1b() {
        let m = fixtures::m1b();
        let r = check_dynamic_unconfounded(&m, "X", "Y", &v(0)).unwrap();
        assert!(r.pass());
        assert_eq!(r.instances.len(), 2);
        assert_eq!(r.instances[0].rhs, rat(1, 4));
        let r = check_dynamic_unconfounded(&m, "X", "Y", &v(1)).unwrap();
        assert!(r.pass());
        assert_eq!(r.instances.len(), 1);
        assert!(r.instances[0].case.contains("ϑ=0"));
    }

    #[test]
    fn type_i_m2() {
        let m = fixtures::m2();
        let r = check_type_i(&m, "X", "Y", &v(1)).unwrap();
        assert!(r.pass());
        assert_eq!(r.instances[0].lhs, rat(5, 8));
        let r = check_type_i(&m, "X", "Y", &v(0)).unwrap();
        assert!(r.pass());
        assert_eq!(r.instances[0].lhs, rat(1, 4));
    }

    #[test]
    fn type_ii_m2() {
        let m = fixtures::m2();
        let r = check_type_ii(&m, "X", "Y", &v(1)).unwrap();
        assert!(r.pass());
        let agg: Vec<_> = r.reported().collect();
        assert_eq!((agg[0].lhs.clone(), agg[0].rhs.clone()), (rat(13, 16), rat(5, 8)));
        let r = check_type_ii(&m, "X", "Y", &v(0)).unwrap();
        let agg: Vec<_> = r.reported().collect();
        assert_eq!((agg[0].lhs.clone(), agg[0].rhs.clone()), (rat(1, 4), rat(1, 4)));
    }

    #[test]
    fn type_iii_m2() {
        let r = check_type_iii(&fixtures::m2(), "X", "Y", &v(1)).unwrap();
        assert!(r.pass());
        let by_case = |c: &str| r.instances.iter().find(|i| i.case.contains(c)).unwrap().lhs.clone();
        assert_eq!(by_case("U=0,W=1"), rat(1, 1));
        assert_eq!(by_case("U=1,W=0"), rat(1, 4));
    }

    #[test]
    fn version_gaps() {
        let u0 = vec![("U".to_string(), v(0))];
        let gap = version_relevance_gap(&fixtures::versions(), "X", "Y", &u0, &v(1), Selector::First, Selector::Last);
        assert_eq!(gap.unwrap(), rat(3, 4));
        let gap = version_relevance_gap(
            &fixtures::versions_indirect(),
            "X",
            "Y",
            &u0,
            &v(1),
            Selector::First,
            Selector::Last,
        );
        assert_eq!(gap.unwrap(), Rational::zero());
        let gap = version_relevance_gap(&fixtures::m2(), "X", "Y", &u0, &v(1), Selector::First, Selector::Last);
        assert_eq!(gap, Err(IdentityError::NeedTwoVersions));
        assert!(check_version_irrelevance(&fixtures::versions_indirect(), "X", "Y", &v(1)).unwrap().pass());
        assert!(check_version_irrelevance(&fixtures::versions(), "X", "Y", &v(1)).is_err());
    }

    #[test]
    fn modifiable_confounded_m3() {
        for x0 in [0, 1] {
            let r = check_modifiable_confounded(&fixtures::m3(), "X", "Y", &v(x0)).unwrap();
            assert!(r.pass(), "{r}");
            assert!(r.asserted().all(|i| i.difference().is_zero()));
        }
    }

    #[test]
    fn adjustment_and_ignorability() {
        for (name, scm) in [("m2", fixtures::m2()), ("m3", fixtures::m3())] {
            assert!(check_adjustment(&scm, "X", "Y").unwrap().pass(), "{name}");
            assert!(check_ignorability(&scm, "X", "Y").unwrap().pass(), "{name}");
        }
        let r = check_adjustment(&fixtures::m2(), "X", "Y").unwrap();
        let naive = r.reported().next().unwrap();
        assert_eq!((naive.lhs.clone(), naive.rhs.clone()), (rat(9, 16), rat(3, 8)));
    }
}
