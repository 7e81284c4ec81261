//! Models shipped with the crate, one per causal layout the engine targets.

use crate::dsl::parse_model;
use crate::model::Scm;

pub const M1_SRC: &str = include_str!("../fixtures/m1.scm");
pub const M1B_SRC: &str = include_str!("../fixtures/m1b.scm");
pub const M2_SRC: &str = include_str!("../fixtures/m2.scm");
pub const M3_SRC: &str = include_str!("../fixtures/m3.scm");
pub const VERSIONS_SRC: &str = include_str!("../fixtures/versions.scm");
pub const VERSIONS_INDIRECT_SRC: &str = include_str!("../fixtures/versions_indirect.scm");

fn load(name: &str, src: &str) -> Scm {
    parse_model(src).unwrap_or_else(|e| panic!("fixture {name} is invalid: {e}"))
}

/// Unconfounded: `X := U`, `Y := or(X, ξ)`.
pub fn m1() -> Scm {
    load("m1", M1_SRC)
}

/// Unconfounded with modifiable `V` and non-modifiable `ϑ`.
pub fn m1b() -> Scm {
    load("m1b", M1B_SRC)
}

/// Confounded by `W`.
pub fn m2() -> Scm {
    load("m2", M2_SRC)
}

/// Confounded, with modifiable and non-modifiable causes on both sides.
pub fn m3() -> Scm {
    load("m3", M3_SRC)
}

/// Ternary `W` with two versions of `X=1` and a direct `W -> Y` arrow.
pub fn versions() -> Scm {
    load("versions", VERSIONS_SRC)
}

/// As [`versions`] without the direct arrow.
pub fn versions_indirect() -> Scm {
    load("versions_indirect", VERSIONS_INDIRECT_SRC)
}

pub fn by_name(name: &str) -> Option<Scm> {
    Some(match name {
        "m1" => m1(),
        "m1b" => m1b(),
        "m2" => m2(),
        "m3" => m3(),
        "versions" => versions(),
        "versions_indirect" => versions_indirect(),
        _ => return None,
    })
}

pub fn all() -> Vec<(&'static str, Scm)> {
    ["m1", "m1b", "m2", "m3", "versions", "versions_indirect"]
        .into_iter()
        .map(|n| (n, by_name(n).expect("known fixture")))
        .collect()
}
