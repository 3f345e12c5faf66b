use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use crate::sdp::SolveStatus;
use crate::sim::SimTrace;
use crate::synthesis::RungOutcome;

/// Errors produced by the core library.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error(transparent)]
    Expr(#[from] ExprError),

    #[error("non-affine construction: {0}")]
    NonAffine(String),

    #[error("strict substitution already applied to this problem")]
    SubstitutionApplied,

    #[error("missing value for decision variable `{0}`")]
    MissingVariable(String),

    #[error("certification unavailable: solver status is {0:?}")]
    CertificationUnavailable(SolveStatus),

    #[error("synthesis infeasible on every attempted rung")]
    SynthesisInfeasible(Vec<RungOutcome>),

    #[error("no consistent initial point found (final algebraic residual {residual:e})")]
    NoConsistentPoint { residual: f64 },

    #[error("simulation aborted at t = {time}: Newton residual {residual:e}")]
    SimulationAborted {
        time: f64,
        residual: f64,
        partial: Box<SimTrace>,
    },

    #[error("internal error: {0}")]
    Internal(String),
}

/// Errors from parsing or evaluating nonlinearity expressions.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExprError {
    #[error("syntax error at {line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },

    #[error("unknown identifier `{name}` at {line}:{col}")]
    UnknownIdentifier { name: String, line: usize, col: usize },

    #[error("`{func}` expects {expected} argument(s), got {found} (at {line}:{col})")]
    Arity {
        func: String,
        expected: usize,
        found: usize,
        line: usize,
        col: usize,
    },

    #[error("expression too large: {0}")]
    TooLarge(String),

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
