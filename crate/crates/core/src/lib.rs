//! Exact inference for finite structural causal models.
//!
//! Models are finite: every variable has a finite domain, exogenous variables
//! carry exact rational probability tables, and endogenous variables are
//! deterministic functions of their parents. Queries under observational,
//! static, dynamic (stratum-indexed) and nested counterfactual regimes are
//! answered by enumerating the exogenous support with exact rationals.

pub mod dsl;
pub mod expr;
pub mod fixtures;
pub mod identities;
pub mod inference;
pub mod model;
pub mod query;
pub mod value;
pub mod worlds;

pub use expr::Expr;
pub use identities::{IdentityReport, Shape};
pub use inference::{Distribution, Event, Query, QueryResult};
pub use model::{ExogenousConfig, ModelDraft, Scm};
pub use query::{eval_str, evaluate, Answer, Method};
pub use value::{rat, Rational, Value};
pub use worlds::{DynamicIntervention, Selector, StaticIntervention, WorldSpec};
