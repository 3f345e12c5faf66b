use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::{self, Write};

use super::expr::{DecisionVar, MatExpr, VarKind};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    /// ≺ 0 (with shift: ⪯ −δI).
    NegDef,
    /// ⪯ 0.
    NegSemi,
    /// ≻ 0 (with shift: ⪰ δI).
    PosDef,
    /// ⪰ 0.
    PosSemi,
    /// = 0 entrywise.
    Zero,
}

impl Sense {
    pub fn is_strict(self) -> bool {
        matches!(self, Sense::NegDef | Sense::PosDef)
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Sense::NegDef => "<0",
            Sense::NegSemi => "<=0",
            Sense::PosDef => ">0",
            Sense::PosSemi => ">=0",
            Sense::Zero => "=0",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Self> {
        Some(match s {
            "<0" => Sense::NegDef,
            "<=0" => Sense::NegSemi,
            ">0" => Sense::PosDef,
            ">=0" => Sense::PosSemi,
            "=0" => Sense::Zero,
            _ => return None,
        })
    }
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// Why a constraint exists; used by the strict substitution to drop the ones it makes redundant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintRole {
    Main,
    /// EᵀP = PᵀE.
    Symmetry,
    /// EᵀP ⪰ 0.
    Coupling,
}

/// A named sub-block of a constraint matrix (diagonal block range).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockInfo {
    pub name: String,
    pub offset: usize,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub expr: MatExpr,
    pub sense: Sense,
    pub shift: f64,
    pub role: ConstraintRole,
    pub blocks: Vec<BlockInfo>,
}

/// Linear objective, minimized.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Objective {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl Objective {
    pub fn value(&self, x: &[f64]) -> f64 {
        self.terms.iter().fold(self.constant, |acc, &(i, c)| acc + c * x[i])
    }

    pub fn dense(&self, len: usize) -> Vec<f64> {
        let mut c = vec![0.0; len];
        for &(i, v) in &self.terms {
            c[i] += v;
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LmiProblem {
    pub vars: Vec<DecisionVar>,
    pub constraints: Vec<Constraint>,
    pub objective: Objective,
    /// Named matrices expressed in the decision variables (e.g. the Lyapunov factors).
    pub derived: Vec<(String, MatExpr)>,
    pub substituted: bool,
}

impl LmiProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_scalars(&self) -> usize {
        self.vars.iter().map(DecisionVar::len).sum()
    }

    pub fn add_var(&mut self, name: &str, kind: VarKind) -> DecisionVar {
        let v = DecisionVar { name: String::from(name), kind, offset: self.num_scalars() };
        self.vars.push(v.clone());
        v
    }

    pub fn var(&self, name: &str) -> Option<&DecisionVar> {
        self.vars.iter().find(|v| v.name == name)
    }

    pub fn derived(&self, name: &str) -> Option<&MatExpr> {
        self.derived.iter().find(|(n, _)| n == name).map(|(_, e)| e)
    }

    pub fn constraint(&self, name: &str) -> Option<&Constraint> {
        self.constraints.iter().find(|c| c.name == name)
    }

    /// Adds a constraint, checking squareness and (for inequalities) structural symmetry.
    pub fn add_constraint(
        &mut self,
        name: &str,
        expr: MatExpr,
        sense: Sense,
        shift: f64,
        role: ConstraintRole,
        blocks: Vec<BlockInfo>,
    ) -> Result<()> {
        if expr.rows() != expr.cols() {
            return Err(Error::DimensionMismatch(format!(
                "constraint `{name}` is {}x{}, not square",
                expr.rows(),
                expr.cols()
            )));
        }
        if sense != Sense::Zero && !expr.is_structurally_symmetric() {
            return Err(Error::Internal(format!("constraint `{name}` is not structurally symmetric")));
        }
        if let Some(t) = expr.terms().last() {
            if t.var >= self.num_scalars() {
                return Err(Error::Internal(format!("constraint `{name}` references an undeclared variable")));
            }
        }
        self.constraints.push(Constraint { name: String::from(name), expr, sense, shift, role, blocks });
        Ok(())
    }

    /// Value of every variable as a named matrix.
    pub fn named_values(&self, x: &[f64]) -> Result<Vec<(String, Mat)>> {
        if x.len() < self.num_scalars() {
            return Err(Error::MissingVariable(format!(
                "assignment has {} scalars, problem needs {}",
                x.len(),
                self.num_scalars()
            )));
        }
        Ok(self.vars.iter().map(|v| (v.name.clone(), v.value(x))).collect())
    }

    /// Builds a decision vector from named matrices.
    pub fn assignment_from_named(&self, values: &BTreeMap<String, Mat>) -> Result<Vec<f64>> {
        let mut x = vec![0.0; self.num_scalars()];
        for v in &self.vars {
            let m = values.get(&v.name).ok_or_else(|| Error::MissingVariable(v.name.clone()))?;
            if m.shape() != v.kind.shape() {
                return Err(Error::DimensionMismatch(format!(
                    "`{}` must be {}x{}, got {}x{}",
                    v.name,
                    v.kind.shape().0,
                    v.kind.shape().1,
                    m.nrows(),
                    m.ncols()
                )));
            }
            let (r, c) = v.kind.shape();
            for i in 0..r {
                for j in 0..c {
                    if matches!(v.kind, VarKind::Sym { .. }) && j < i {
                        continue;
                    }
                    x[v.index_of(i, j)] = m[(i, j)];
                }
            }
        }
        Ok(x)
    }

    /// Numeric check of every constraint at `x`.
    pub fn evaluate_at(&self, x: &[f64]) -> Result<MarginsReport> {
        if x.len() < self.num_scalars() {
            let missing = self
                .vars
                .iter()
                .find(|v| v.offset + v.len() > x.len())
                .map(|v| v.name.clone())
                .unwrap_or_default();
            return Err(Error::MissingVariable(missing));
        }
        let mut entries = Vec::with_capacity(self.constraints.len());
        for c in &self.constraints {
            let value = c.expr.evaluate(x)?;
            entries.push(ConstraintMargin::measure(c, value));
        }
        Ok(MarginsReport::from_entries(entries))
    }

    /// Plain-text listing: one line per affine triple in (variable, row, column) order.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "scalars {}", self.num_scalars());
        for v in &self.vars {
            let kind = match v.kind {
                VarKind::Scalar => String::from("scalar"),
                VarKind::Rect { rows, cols } => format!("rect {rows} {cols}"),
                VarKind::Sym { n } => format!("sym {n}"),
            };
            let _ = writeln!(s, "var {} {} {} {}", v.name, v.offset, v.len(), kind);
        }
        let _ = writeln!(s, "objective {:.16e}", self.objective.constant);
        let mut obj = self.objective.terms.clone();
        obj.sort_by_key(|t| t.0);
        for (i, c) in obj {
            let _ = writeln!(s, "obj {i} {c:.16e}");
        }
        for c in &self.constraints {
            let _ = writeln!(
                s,
                "constraint {} {} {:.16e} {}x{}",
                c.name,
                c.sense,
                c.shift,
                c.expr.rows(),
                c.expr.cols()
            );
            for b in &c.blocks {
                let _ = writeln!(s, "block {} {} {}", b.name, b.offset, b.size);
            }
            for i in 0..c.expr.rows() {
                for j in 0..c.expr.cols() {
                    let v = c.expr.constant[(i, j)];
                    if v != 0.0 {
                        let _ = writeln!(s, "const {i} {j} {v:.16e}");
                    }
                }
            }
            for t in c.expr.terms() {
                let _ = writeln!(s, "term {} {} {} {:.16e}", t.var, t.row, t.col, t.coef);
            }
        }
        s
    }
}

/// Numeric status of one constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintMargin {
    pub name: String,
    pub sense: Sense,
    pub shift: f64,
    /// λmax for ≺/⪯, λmin for ≻/⪰, max |entry| for equalities.
    pub extreme: f64,
    /// Signed distance to violation: positive means satisfied (for equalities, minus the residual).
    pub margin: f64,
    pub passed: bool,
    pub value: Mat,
}

/// Rounding allowance relative to the constraint's magnitude.
const ROUND_SLACK: f64 = 1e-11;
/// Residual accepted on equalities.
const EQ_TOL: f64 = 1e-8;

impl ConstraintMargin {
    fn measure(c: &Constraint, value: Mat) -> Self {
        let scale = value.amax().max(1.0);
        let slack = ROUND_SLACK * scale;
        let (extreme, margin, passed) = match c.sense {
            Sense::Zero => {
                let r = value.amax();
                (r, -r, r <= EQ_TOL * scale)
            }
            Sense::NegDef | Sense::NegSemi => {
                let lmax = linalg::max_sym_eigenvalue(&value);
                let m = -lmax;
                let ok = if c.sense.is_strict() { m > 0.0 && m >= c.shift - slack } else { m >= -slack };
                (lmax, m, ok)
            }
            Sense::PosDef | Sense::PosSemi => {
                let lmin = linalg::min_sym_eigenvalue(&value);
                let ok = if c.sense.is_strict() { lmin > 0.0 && lmin >= c.shift - slack } else { lmin >= -slack };
                (lmin, lmin, ok)
            }
        };
        Self { name: c.name.clone(), sense: c.sense, shift: c.shift, extreme, margin, passed, value }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginsReport {
    pub entries: Vec<ConstraintMargin>,
    /// Smallest margin over the inequality constraints.
    pub radius: f64,
}

impl MarginsReport {
    fn from_entries(entries: Vec<ConstraintMargin>) -> Self {
        let radius = entries
            .iter()
            .filter(|e| e.sense != Sense::Zero)
            .map(|e| e.margin)
            .fold(f64::INFINITY, f64::min);
        Self { entries, radius }
    }

    pub fn all_passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed)
    }

    pub fn get(&self, name: &str) -> Option<&ConstraintMargin> {
        self.entries.iter().find(|e| e.name == name)
    }
}
