use std::fmt;

use rayon::prelude::*;
use serde_json::json;

use super::checks::{
    check_adjustment, check_dynamic_unconfounded, check_ignorability, check_modifiable_confounded, check_type_i,
    check_type_ii, check_type_iii, check_unconfounded, check_version_irrelevance,
};
use super::decompose::check_decomposition;
use super::{detect_shape, random_scm, IdentityError, IdentityReport, RandomConfig, Shape};
use crate::inference::InferenceError;
use crate::model::Scm;
use crate::value::Value;

/// Result of one check on one model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Report(IdentityReport),
    /// The check does not apply (wrong shape, unattainable stratum, ...).
    Skipped {
        identity: String,
        model: String,
        reason: String,
    },
    /// The check could not be evaluated.
    Error {
        identity: String,
        model: String,
        reason: String,
    },
}

impl Outcome {
    fn from_result(identity: &str, model: &str, r: Result<IdentityReport, IdentityError>) -> Self {
        match r {
            Ok(mut rep) => {
                rep.identity = identity.to_string();
                Outcome::Report(rep.for_model(model))
            }
            Err(
                e @ (IdentityError::ShapeMismatch(_)
                | IdentityError::UnattainableStratum { .. }
                | IdentityError::EmptyPreimage(_)
                | IdentityError::NeedTwoVersions
                | IdentityError::Inference(InferenceError::PositivityViolation { .. })),
            ) => Outcome::Skipped { identity: identity.into(), model: model.into(), reason: e.to_string() },
            Err(e) => Outcome::Error { identity: identity.into(), model: model.into(), reason: e.to_string() },
        }
    }

    pub fn pass(&self) -> bool {
        match self {
            Outcome::Report(r) => r.pass(),
            Outcome::Skipped { .. } => true,
            Outcome::Error { .. } => false,
        }
    }

    pub fn report(&self) -> Option<&IdentityReport> {
        match self {
            Outcome::Report(r) => Some(r),
            _ => None,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Outcome::Report(r) => r.to_json(),
            Outcome::Skipped { identity, model, reason } => {
                json!({"identity": identity, "model": model, "skipped": reason, "pass": true})
            }
            Outcome::Error { identity, model, reason } => {
                json!({"identity": identity, "model": model, "error": reason, "pass": false})
            }
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Report(r) => write!(f, "{r}"),
            Outcome::Skipped { identity, model, reason } => writeln!(f, "{identity}: skipped [{model}] ({reason})"),
            Outcome::Error { identity, model, reason } => writeln!(f, "{identity}: ERROR [{model}] ({reason})"),
        }
    }
}

/// Runs every check that applies to the graph around `x` and `y`.
pub fn verify_model(scm: &Scm, model: &str, x: &str, y: &str) -> Vec<Outcome> {
    let info = match detect_shape(scm, x, y) {
        Ok(i) => i,
        Err(e) => return vec![Outcome::from_result("shape", model, Err(e))],
    };
    let mut out = Vec::new();
    let mut run =
        |name: String, r: Result<IdentityReport, IdentityError>| out.push(Outcome::from_result(&name, model, r));
    let per_x0 = |name: &str, f: fn(&Scm, &str, &str, &Value) -> Result<IdentityReport, IdentityError>| {
        [0, 1].map(|x0| (format!("{name} ({x}={x0})"), f(scm, x, y, &Value::int(x0))))
    };
    match info.shape {
        Shape::Fig1a => run("unconfounded".into(), check_unconfounded(scm, x, y)),
        Shape::Fig1b => {
            run("unconfounded".into(), check_unconfounded(scm, x, y));
            for (n, r) in per_x0("dynamic unconfounded", check_dynamic_unconfounded) {
                run(n, r);
            }
        }
        Shape::Fig2a => {
            for f in [
                ("type i", check_type_i as fn(&Scm, &str, &str, &Value) -> _),
                ("type ii", check_type_ii),
                ("type iii", check_type_iii),
            ] {
                for (n, r) in per_x0(f.0, f.1) {
                    run(n, r);
                }
            }
            let y_reads_w = scm.parents(y).expect("checked").iter().any(|p| info.endogenous_causes().contains(p));
            if !y_reads_w {
                for (n, r) in per_x0("version irrelevance", check_version_irrelevance) {
                    run(n, r);
                }
            }
            run("decomposition".into(), check_decomposition(scm, x, y));
        }
        Shape::Fig2b => {
            for (n, r) in per_x0("modifiable confounded", check_modifiable_confounded) {
                run(n, r);
            }
        }
    }
    run("ignorability".into(), check_ignorability(scm, x, y));
    run("adjustment".into(), check_adjustment(scm, x, y));
    out
}

/// [`verify_model`] on `count` random models with seeds `seed..seed+count`,
/// in seed order.
pub fn verify_random(shape: Shape, count: u64, seed: u64, config: &RandomConfig) -> Vec<(u64, Vec<Outcome>)> {
    (seed..seed + count)
        .into_par_iter()
        .map(|s| {
            let scm = random_scm(s, shape, config);
            (s, verify_model(&scm, &format!("{shape}#{s}"), "X", "Y"))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn fixtures_verify() {
        for (name, scm) in fixtures::all() {
            for o in verify_model(&scm, name, "X", "Y") {
                assert!(o.pass(), "{name}: {o}");
            }
        }
    }

    #[test]
    fn m2_reports_aggregate_difference() {
        let out = verify_model(&fixtures::m2(), "m2", "X", "Y");
        let text: String = out.iter().map(ToString::to_string).collect();
        assert!(text.contains("differs: 13/16 vs 5/8"), "{text}");
    }

    #[test]
    fn random_runs_ordered() {
        let runs = verify_random(Shape::Fig2a, 5, 3, &RandomConfig::default());
        assert_eq!(runs.iter().map(|r| r.0).collect::<Vec<_>>(), [3, 4, 5, 6, 7]);
        assert!(runs.iter().all(|(_, o)| o.iter().all(Outcome::pass)));
    }
}
