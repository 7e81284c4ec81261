//! Text format for models and queries.
//!
//! ```text
//! exo U ~ {0: 1/2, 1: 1/2}
//! exo V given ϑ ~ {0: {0: 1/4, 1: 3/4}, 1: {0: 3/4, 1: 1/4}} modifiable
//! var X in {0, 1} := and(V, ϑ)
//! ```
//!
//! Queries: `P(Y=1 | do(X=1))`, `P(Y=1 | do(U = solve(X=1; W)))`,
//! `E(Y | do(X=0))`, `ace X -> Y adjust {W}`, `decompose X -> Y`,
//! `check type_i x0=1`. The full grammar lives in `docs/grammar.md`.

mod format;
mod lexer;
mod parser;

use std::fmt;

use thiserror::Error;

use crate::model::{Position, Scm, ValidationErrors};

pub use format::format_model;
pub use lexer::{tokenize, Token, TokenKind};
pub use parser::{parse_model_draft, parse_query, AssignAst, QueryAst, RegimeAst, SolveAst};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ParseError {
    pub message: String,
    pub line: u32,
    pub column: u32,
    /// Token kinds or lexemes that would have been accepted.
    pub expected: Vec<String>,
}

impl ParseError {
    pub fn position(&self) -> Position {
        Position { line: self.line, column: self.column }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.column, self.message)?;
        if !self.expected.is_empty() {
            write!(f, " (expected {})", self.expected.join(" or "))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("parse error at {0}")]
    Parse(#[from] ParseError),
    #[error("invalid model:\n{0}")]
    Invalid(#[from] ValidationErrors),
}

/// Parses and validates a model file.
pub fn parse_model(text: &str) -> Result<Scm, ModelError> {
    let draft = parse_model_draft(text)?;
    Ok(Scm::validate(&draft)?)
}
