//! TwinQL, a small deterministic query language over digital twins.
//!
//! Programs are single Python-flavoured expressions evaluated against a
//! [`VideoTwin`]. There are no assignments, no I/O and no unbounded loops:
//! comprehensions iterate finite lists and every evaluation step is charged
//! against [`EvalLimits`].
//!
//! ```text
//! count(objects(frame=0))
//! leftmost(filter(objects(frame=2), lambda o: category(o) == "dog"))
//! [id(o) for o in objects(0) if distance(o, obj(0, 3)) < 0.2]
//! ```

mod ast;
mod eval;
mod parser;
mod value;

use thiserror::Error;

pub use ast::{Arg, BinaryOp, Expr, ExprKind, Pos, UnaryOp};
pub use eval::{builtin_names, evaluate, EvalError, EvalLimits};
pub use parser::{parse_program, SyntaxError, MAX_DEPTH};
pub use value::{render_value, Value};

use crate::twin::VideoTwin;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TwinqlError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Parses and evaluates `source` in one go.
pub fn run(source: &str, twin: &VideoTwin, limits: &EvalLimits) -> Result<Value, TwinqlError> {
    let ast = parse_program(source)?;
    Ok(evaluate(&ast, twin, limits)?)
}
