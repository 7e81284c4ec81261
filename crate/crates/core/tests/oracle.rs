mod common;

use doeng::identities::{random_scm, RandomConfig};
use doeng::inference::{ace, counterfactual_joint, exact_distribution, exact_probability};
use doeng::worlds::{make_dynamic_intervention, DynamicIntervention, Selector};
use doeng::{fixtures, rat, Event, Rational, Scm, Shape, Value, WorldSpec};

fn v(n: i64) -> Value {
    Value::int(n)
}

/// Every single-variable static intervention, plus the observational world.
fn static_worlds(scm: &Scm) -> Vec<WorldSpec> {
    let mut out = vec![WorldSpec::observational()];
    for d in scm.variables() {
        for val in &d.domain {
            out.push(WorldSpec::set(d.name.clone(), val.clone()));
        }
    }
    out
}

fn assert_matches_oracle(name: &str, scm: &Scm, world: &WorldSpec) {
    for d in scm.variables() {
        for val in &d.domain {
            let engine = exact_probability(scm, &Event::is(d.name.clone(), val.clone()), world, None).unwrap();
            let oracle = common::prob(scm, world, |a| a[&d.name] == *val, |_| true);
            assert_eq!(engine, oracle, "{name}: P({}={val}) in {world}", d.name);
        }
    }
}

#[test]
fn fixtures_match_enumeration_under_static_interventions() {
    for (name, scm) in fixtures::all() {
        for w in static_worlds(&scm) {
            assert_matches_oracle(name, &scm, &w);
        }
    }
}

#[test]
fn random_models_match_enumeration() {
    let cfg = RandomConfig::default();
    for shape in Shape::ALL {
        for seed in 0..25 {
            let scm = random_scm(seed, shape, &cfg);
            for w in static_worlds(&scm) {
                assert_matches_oracle(&format!("{shape}/{seed}"), &scm, &w);
            }
        }
    }
}

#[test]
fn observational_joint_matches_enumeration() {
    for (name, scm) in fixtures::all() {
        let names: Vec<&str> = scm.variables().iter().map(|d| d.name.as_str()).collect();
        let dist = exact_distribution(&scm, &names, &WorldSpec::observational()).unwrap();
        let pairs: Vec<(&str, WorldSpec)> = names.iter().map(|n| (*n, WorldSpec::observational())).collect();
        let oracle = common::joint(&scm, &pairs);
        assert_eq!(dist.len(), oracle.len(), "{name}");
        for (k, p) in &oracle {
            assert_eq!(&dist.prob(k), p, "{name}: {k:?}");
        }
    }
}

#[test]
fn m2_reference_values() {
    let m2 = fixtures::m2();
    let obs = WorldSpec::observational();
    let y1 = |a: &common::Assignment| a["Y"] == v(1);
    assert_eq!(common::p_is(&m2, &WorldSpec::set("X", 1), "Y", 1), rat(5, 8));
    assert_eq!(common::p_is(&m2, &WorldSpec::set("X", 0), "Y", 1), rat(1, 4));
    assert_eq!(common::prob(&m2, &obs, y1, |a| a["X"] == v(1)), rat(13, 16));
    assert_eq!(common::prob(&m2, &obs, y1, |a| a["X"] == v(0)), rat(1, 4));
    assert_eq!(ace(&m2, "X", "Y").unwrap().as_exact().unwrap(), &rat(3, 8));
    let given = Event::is("X", 1);
    assert_eq!(exact_probability(&m2, &Event::is("Y", 1), &obs, Some(&given)).unwrap(), rat(13, 16));
}

#[test]
fn dynamic_interventions_match_enumeration() {
    let m2 = fixtures::m2();
    for sel in [Selector::First, Selector::Last] {
        for target in [0, 1] {
            for (index, control) in [("W", "U"), ("U", "W")] {
                let rule = make_dynamic_intervention(&m2, "X", &v(target), &[index], &[control], sel).unwrap();
                let world = WorldSpec::dynamic(rule);
                assert_matches_oracle("m2", &m2, &world);
                let forced = common::prob(&m2, &world, |a| a["X"] == v(target), |_| true);
                assert_eq!(forced, rat(1, 1));
            }
        }
    }
    let m3 = fixtures::m3();
    let rule = make_dynamic_intervention(&m3, "X", &v(0), &["ϑ", "W", "Z"], &["V"], Selector::First).unwrap();
    assert_matches_oracle("m3", &m3, &WorldSpec::dynamic(rule));
}

#[test]
fn nested_world_matches_enumeration() {
    let m2 = fixtures::m2();
    // w1(u) = 1 xor u gives X = 1; w0(u) = u gives X = 0.
    let w1 = DynamicIntervention::new(vec!["W".into()], vec!["U".into()])
        .entry(vec![v(0)], vec![v(1)])
        .entry(vec![v(1)], vec![v(0)]);
    let w0 = DynamicIntervention::new(vec!["W".into()], vec!["U".into()])
        .entry(vec![v(0)], vec![v(0)])
        .entry(vec![v(1)], vec![v(1)]);
    let nested = WorldSpec::nested(WorldSpec::dynamic(w1.clone()), vec![("X".into(), WorldSpec::dynamic(w0.clone()))]);
    assert_matches_oracle("m2", &m2, &nested);
    let p = |w: &WorldSpec| common::p_is(&m2, w, "Y", 1);
    let total = p(&WorldSpec::dynamic(w1.clone())) - p(&WorldSpec::dynamic(w0.clone()));
    let direct = p(&nested) - p(&WorldSpec::dynamic(w0));
    assert_eq!(total, rat(9, 16));
    assert_eq!(direct, Rational::from_integer(0.into()));
}

#[test]
fn counterfactual_joint_matches_enumeration() {
    let m2 = fixtures::m2();
    let pairs = [
        ("Y", WorldSpec::set("X", 1)),
        ("Y", WorldSpec::set("X", 0)),
        ("X", WorldSpec::observational()),
        ("W", WorldSpec::observational()),
    ];
    let dist = counterfactual_joint(&m2, &pairs).unwrap();
    let oracle = common::joint(&m2, &pairs);
    for (k, p) in &oracle {
        assert_eq!(&dist.prob(k), p, "{k:?}");
    }
    assert_eq!(dist.len(), oracle.len());
}

#[test]
fn intervened_exogenous_keeps_natural_conditioning() {
    let m3 = fixtures::m3();
    let world = WorldSpec::set("ϑ", 1);
    assert_matches_oracle("m3", &m3, &world);
    let p_v = common::p_is(&m3, &world, "V", 1);
    assert_eq!(p_v, rat(1, 2));
}
