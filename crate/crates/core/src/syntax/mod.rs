//! Object language: syntax tree, surface parser, printer and well-formedness.

pub mod ast;
pub mod lexer;
pub mod ops;
pub mod parser;
pub mod printer;
pub mod types;
pub mod wellformed;

use std::fmt;

use serde::Serialize;

pub use ast::*;
pub use ops::{and_all, call_free, conjuncts, fv, fv_effects_regions, pure, same_conjuncts, subst};
pub use parser::{parse_cmd, parse_expr, parse_program};
pub use printer::{print_cmd, print_expr, print_program};
pub use wellformed::check_wellformed;

/// A diagnostic produced by parsing, well-formedness or certificate checking.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Diagnostic {
    pub code: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub col: Option<usize>,
}

impl Diagnostic {
    pub fn new(code: impl Into<String>, message: impl Into<String>) -> Self {
        Diagnostic {
            code: code.into(),
            message: message.into(),
            line: None,
            col: None,
        }
    }

    pub fn at(code: impl Into<String>, message: impl Into<String>, pos: Pos) -> Self {
        let mut d = Diagnostic::new(code, message);
        d.line = Some(pos.line);
        d.col = Some(pos.col);
        d
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, self.col) {
            (Some(l), Some(c)) => write!(f, "{l}:{c}: [{}] {}", self.code, self.message),
            _ => write!(f, "[{}] {}", self.code, self.message),
        }
    }
}

impl std::error::Error for Diagnostic {}
