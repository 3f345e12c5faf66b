//! Affine matrix expressions, constraint problems and the synthesis constraint builder.

mod build;
mod expr;
mod problem;

pub use build::{apply_strict_substitution, build_problem, names, BuildOptions, Coupling, DissipationForm, PeakMode};
pub use expr::{sym_packed_index, AffineImage, DecisionVar, MatExpr, Term, VarKind};
pub use problem::{
    BlockInfo, Constraint, ConstraintMargin, ConstraintRole, LmiProblem, MarginsReport, Objective, Sense,
};
