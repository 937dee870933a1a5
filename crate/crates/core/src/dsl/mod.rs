//! Template language: parameters, scales and render directives evaluated
//! against a marked-up reference SVG.

pub mod ast;
pub mod eval;
pub mod parser;
pub mod printer;
pub mod scale;
pub mod validate;

pub use ast::*;
pub use eval::{evaluate, resolve_params, EvalCause, EvalError, Val};
pub use parser::{parse_program, DslError};
pub use printer::print_program;
pub(crate) use printer::quote;
pub use scale::{Scale, ScaleError};
pub use validate::validate_program;
