use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Scalar,
    Rect { rows: usize, cols: usize },
    Sym { n: usize },
}

impl VarKind {
    /// Number of scalar unknowns.
    pub fn len(self) -> usize {
        match self {
            VarKind::Scalar => 1,
            VarKind::Rect { rows, cols } => rows * cols,
            VarKind::Sym { n } => n * (n + 1) / 2,
        }
    }

    pub fn is_empty(self) -> bool {
        self.len() == 0
    }

    pub fn shape(self) -> (usize, usize) {
        match self {
            VarKind::Scalar => (1, 1),
            VarKind::Rect { rows, cols } => (rows, cols),
            VarKind::Sym { n } => (n, n),
        }
    }
}

/// A named block of the global decision vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionVar {
    pub name: String,
    pub kind: VarKind,
    pub offset: usize,
}

impl DecisionVar {
    pub fn len(&self) -> usize {
        self.kind.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Global scalar index of matrix entry (i, j).
    pub fn index_of(&self, i: usize, j: usize) -> usize {
        match self.kind {
            VarKind::Scalar => self.offset,
            VarKind::Rect { cols, .. } => self.offset + i * cols + j,
            VarKind::Sym { n } => {
                let (r, c) = if i <= j { (i, j) } else { (j, i) };
                self.offset + sym_packed_index(n, r, c)
            }
        }
    }

    /// Matrix value of this variable inside a full decision vector.
    pub fn value(&self, x: &[f64]) -> Mat {
        let (r, c) = self.kind.shape();
        Mat::from_fn(r, c, |i, j| x[self.index_of(i, j)])
    }
}

/// Offset of upper-triangular entry (r, c), r ≤ c, in row-major packing of an n × n matrix.
pub fn sym_packed_index(n: usize, r: usize, c: usize) -> usize {
    r * n - r * (r + 1) / 2 + c
}

/// One coefficient of an affine matrix map: `coef · x[var]` added at (row, col).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Term {
    pub var: usize,
    pub row: usize,
    pub col: usize,
    pub coef: f64,
}

/// Affine map from the decision vector to a real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MatExpr {
    pub constant: Mat,
    terms: Vec<Term>,
}

fn mismatch(op: &str, a: (usize, usize), b: (usize, usize)) -> Error {
    Error::DimensionMismatch(format!("{op}: {}x{} vs {}x{}", a.0, a.1, b.0, b.1))
}

impl MatExpr {
    fn from_parts(constant: Mat, mut terms: Vec<Term>) -> Self {
        terms.sort_by_key(|t| (t.var, t.row, t.col));
        let mut merged: Vec<Term> = Vec::with_capacity(terms.len());
        for t in terms {
            match merged.last_mut() {
                Some(last) if (last.var, last.row, last.col) == (t.var, t.row, t.col) => last.coef += t.coef,
                _ => merged.push(t),
            }
        }
        merged.retain(|t| t.coef != 0.0);
        Self { constant, terms: merged }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { constant: Mat::zeros(rows, cols), terms: Vec::new() }
    }

    pub fn constant(m: Mat) -> Self {
        Self { constant: m, terms: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        Self::constant(Mat::identity(n, n))
    }

    /// The full matrix of a decision variable.
    pub fn var(v: &DecisionVar) -> Self {
        let (r, c) = v.kind.shape();
        let mut terms = Vec::with_capacity(r * c);
        for i in 0..r {
            for j in 0..c {
                terms.push(Term { var: v.index_of(i, j), row: i, col: j, coef: 1.0 });
            }
        }
        Self::from_parts(Mat::zeros(r, c), terms)
    }

    /// `x[v] · m` for a scalar variable `v`.
    pub fn scalar_times(v: &DecisionVar, m: &Mat) -> Result<Self> {
        if v.kind != VarKind::Scalar {
            return Err(Error::InvalidInput(format!("`{}` is not a scalar variable", v.name)));
        }
        let mut terms = Vec::new();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                terms.push(Term { var: v.offset, row: i, col: j, coef: m[(i, j)] });
            }
        }
        Ok(Self::from_parts(Mat::zeros(m.nrows(), m.ncols()), terms))
    }

    pub fn rows(&self) -> usize {
        self.constant.nrows()
    }

    pub fn cols(&self) -> usize {
        self.constant.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.constant.shape()
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add(&self, other: &MatExpr) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(mismatch("add", self.shape(), other.shape()));
        }
        let mut terms = self.terms.clone();
        terms.extend_from_slice(&other.terms);
        Ok(Self::from_parts(&self.constant + &other.constant, terms))
    }

    pub fn sub(&self, other: &MatExpr) -> Result<Self> {
        self.add(&other.neg())
    }

    pub fn add_const(&self, m: &Mat) -> Result<Self> {
        self.add(&MatExpr::constant(m.clone()))
    }

    pub fn neg(&self) -> Self {
        self.scale(-1.0)
    }

    pub fn scale(&self, s: f64) -> Self {
        let terms = self.terms.iter().map(|t| Term { coef: t.coef * s, ..*t }).collect();
        Self::from_parts(&self.constant * s, terms)
    }

    pub fn transpose(&self) -> Self {
        let terms = self.terms.iter().map(|t| Term { row: t.col, col: t.row, ..*t }).collect();
        Self::from_parts(self.constant.transpose(), terms)
    }

    /// (X + Xᵀ) / 2.
    pub fn sym(&self) -> Result<Self> {
        Ok(self.add(&self.transpose())?.scale(0.5))
    }

    /// `m · X`.
    pub fn lmul(&self, m: &Mat) -> Result<Self> {
        if m.ncols() != self.rows() {
            return Err(mismatch("left multiply", m.shape(), self.shape()));
        }
        let mut terms = Vec::with_capacity(self.terms.len() * m.nrows());
        for t in &self.terms {
            for r in 0..m.nrows() {
                let c = m[(r, t.row)];
                if c != 0.0 {
                    terms.push(Term { var: t.var, row: r, col: t.col, coef: c * t.coef });
                }
            }
        }
        Ok(Self::from_parts(m * &self.constant, terms))
    }

    /// `X · m`.
    pub fn rmul(&self, m: &Mat) -> Result<Self> {
        if self.cols() != m.nrows() {
            return Err(mismatch("right multiply", self.shape(), m.shape()));
        }
        let mut terms = Vec::with_capacity(self.terms.len() * m.ncols());
        for t in &self.terms {
            for c in 0..m.ncols() {
                let k = m[(t.col, c)];
                if k != 0.0 {
                    terms.push(Term { var: t.var, row: t.row, col: c, coef: t.coef * k });
                }
            }
        }
        Ok(Self::from_parts(&self.constant * m, terms))
    }

    /// Product of two expressions; one side must be constant.
    pub fn mul(&self, other: &MatExpr) -> Result<Self> {
        if self.cols() != other.rows() {
            return Err(mismatch("multiply", self.shape(), other.shape()));
        }
        match (self.is_constant(), other.is_constant()) {
            (true, _) => other.lmul(&self.constant),
            (_, true) => self.rmul(&other.constant),
            _ => Err(Error::NonAffine(String::from("product of two decision-dependent expressions"))),
        }
    }

    /// Assembles a block matrix; `entries` are (block row, block col, expr), missing blocks are zero.
    pub fn blocks(row_sizes: &[usize], col_sizes: &[usize], entries: Vec<(usize, usize, MatExpr)>) -> Result<Self> {
        let roff: Vec<usize> = prefix(row_sizes);
        let coff: Vec<usize> = prefix(col_sizes);
        let mut constant = Mat::zeros(roff[row_sizes.len()], coff[col_sizes.len()]);
        let mut terms = Vec::new();
        for (bi, bj, e) in entries {
            if bi >= row_sizes.len() || bj >= col_sizes.len() {
                return Err(Error::DimensionMismatch(format!("block ({bi}, {bj}) out of range")));
            }
            if e.shape() != (row_sizes[bi], col_sizes[bj]) {
                return Err(mismatch(
                    &format!("block ({bi}, {bj})"),
                    (row_sizes[bi], col_sizes[bj]),
                    e.shape(),
                ));
            }
            constant.view_mut((roff[bi], coff[bj]), e.shape()).copy_from(&e.constant);
            terms.extend(e.terms.iter().map(|t| Term { row: t.row + roff[bi], col: t.col + coff[bj], ..*t }));
        }
        Ok(Self::from_parts(constant, terms))
    }

    /// Symmetric block matrix from its upper-triangular blocks (bi ≤ bj).
    ///
    /// Diagonal blocks are symmetrized; off-diagonal blocks are mirrored.
    pub fn sym_blocks(sizes: &[usize], upper: Vec<(usize, usize, MatExpr)>) -> Result<Self> {
        let mut entries = Vec::with_capacity(2 * upper.len());
        for (bi, bj, e) in upper {
            if bi > bj {
                return Err(Error::InvalidInput(format!("block ({bi}, {bj}) is below the diagonal")));
            }
            if bi == bj {
                entries.push((bi, bj, e.sym()?));
            } else {
                entries.push((bj, bi, e.transpose()));
                entries.push((bi, bj, e));
            }
        }
        Self::blocks(sizes, sizes, entries)
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<Mat> {
        let mut out = self.constant.clone();
        for t in &self.terms {
            let v = *x.get(t.var).ok_or_else(|| Error::MissingVariable(format!("scalar #{}", t.var)))?;
            out[(t.row, t.col)] += t.coef * v;
        }
        Ok(out)
    }

    /// Coefficient matrix of one scalar unknown.
    pub fn coefficient(&self, var: usize) -> Mat {
        let mut m = Mat::zeros(self.rows(), self.cols());
        for t in self.terms.iter().filter(|t| t.var == var) {
            m[(t.row, t.col)] += t.coef;
        }
        m
    }

    /// Sorted list of scalar unknowns referenced.
    pub fn variables(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.terms.iter().map(|t| t.var).collect();
        v.dedup();
        v
    }

    /// True when the constant and every coefficient matrix are exactly symmetric.
    pub fn is_structurally_symmetric(&self) -> bool {
        if self.rows() != self.cols() || self.constant != self.constant.transpose() {
            return false;
        }
        self.terms.iter().all(|t| {
            t.row == t.col
                || self
                    .terms
                    .binary_search_by(|o| (o.var, o.row, o.col).cmp(&(t.var, t.col, t.row)))
                    .map(|k| self.terms[k].coef == t.coef)
                    .unwrap_or(false)
        })
    }

    /// Largest coefficient magnitude including the constant.
    pub fn max_abs_coefficient(&self) -> f64 {
        self.terms.iter().fold(self.constant.amax(), |acc, t| acc.max(t.coef.abs()))
    }

    /// Rewrites every scalar unknown through `map` (old index → affine image).
    pub fn substitute(&self, map: &[AffineImage]) -> Self {
        let mut constant = self.constant.clone();
        let mut terms = Vec::with_capacity(self.terms.len());
        for t in &self.terms {
            let img = &map[t.var];
            constant[(t.row, t.col)] += t.coef * img.constant;
            for &(v, c) in &img.terms {
                terms.push(Term { var: v, row: t.row, col: t.col, coef: t.coef * c });
            }
        }
        Self::from_parts(constant, terms)
    }

    /// Drops terms whose magnitude is at most `tol`.
    pub fn prune(&self, tol: f64) -> Self {
        let terms = self.terms.iter().copied().filter(|t| t.coef.abs() > tol).collect();
        Self::from_parts(self.constant.clone(), terms)
    }
}

fn prefix(sizes: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(sizes.len() + 1);
    let mut acc = 0;
    out.push(0);
    for s in sizes {
        acc += s;
        out.push(acc);
    }
    out
}

/// Image of one old scalar unknown under a change of variables.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineImage {
    pub constant: f64,
    pub terms: Vec<(usize, f64)>,
}

impl AffineImage {
    pub fn identity(index: usize) -> Self {
        Self { constant: 0.0, terms: alloc::vec![(index, 1.0)] }
    }
}
