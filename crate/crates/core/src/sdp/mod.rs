//! Standard-form semidefinite programs and a dense interior-point solver.
//!
//! A [`ConicProgram`] minimizes `cᵀv + c0` subject to PSD blocks
//! `F_j(v) = F_j0 + Σ vᵢ F_ji ⪰ 0` (stored as scaled vectors, see [`svec`]) and
//! linear equality rows. [`solve`] eliminates the equalities, drops directions
//! that no block sees, finds a strictly feasible point (phase I) and then
//! optimizes (phase II).
//!
//! # Dump format
//!
//! [`ConicProgram::dump`] writes one record per line:
//!
//! ```text
//! vars <m>
//! objective <c0>
//! c <i> <value>                     nonzero objective coefficients
//! block <name> <side>
//! f <var> <k> <value>               svec entry k of F_j,var; var = -1 for the constant
//! eq <rhs>
//! a <var> <value>                   coefficients of the preceding equality row
//! ```
//! Values use 17 significant digits.

mod ipm;
mod svec;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

pub use svec::{smat, svec, svec_index, svec_len};

use crate::error::{Error, Result};
use crate::lmi::{LmiProblem, MarginsReport, Sense};
use crate::linalg::{self, Mat, Vector};

/// Affine map from the decision vector to a symmetric matrix, in svec form.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineBlock {
    pub name: String,
    pub side: usize,
    pub constant: Vec<f64>,
    /// Coefficient vectors, sorted by variable index, one per variable that appears.
    pub coeffs: Vec<(usize, Vec<f64>)>,
}

impl AffineBlock {
    pub fn evaluate(&self, v: &[f64]) -> Mat {
        let mut acc = self.constant.clone();
        for (i, c) in &self.coeffs {
            for (a, b) in acc.iter_mut().zip(c) {
                *a += v[*i] * b;
            }
        }
        smat(&acc, self.side)
    }
}

/// `Σ coeffs · v = rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct EqualityRow {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicProgram {
    pub num_vars: usize,
    pub objective: Vec<f64>,
    pub objective_constant: f64,
    pub blocks: Vec<AffineBlock>,
    pub equalities: Vec<EqualityRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalTrouble,
    IterationLimit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Relative tolerance on the duality gap and on the multiplier residual.
    pub tol: f64,
    pub max_iter: usize,
    /// Every decision variable is confined to `[-r, r]` during the solve. Problems whose
    /// infimum is approached only as some variable diverges then have an attained optimum;
    /// if the bound carries a multiplier that changes the objective, the status is Unbounded.
    pub box_radius: Option<f64>,
    /// Fraction of the distance to the cone boundary taken per step.
    pub step_fraction: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 100, box_radius: Some(1e4), step_fraction: 0.98 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Residuals {
    /// Largest violation of a block or equality row, relative to the data scale.
    pub primal: f64,
    /// Relative residual of the multiplier equations.
    pub dual: f64,
    /// Relative duality gap.
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub dual_objective: f64,
    pub iterations: usize,
    pub residuals: Residuals,
    /// Largest eigenvalue margin found by phase I (before any optimization).
    pub phase1_margin: f64,
    /// Box radius times the total box multiplier: an estimate of how much the objective
    /// would still improve if the box were removed.
    pub box_sensitivity: f64,
}

impl Solution {
    fn failed(status: SolveStatus, num_vars: usize, iterations: usize, phase1_margin: f64) -> Self {
        Self {
            status,
            x: vec![0.0; num_vars],
            objective: f64::NAN,
            dual_objective: f64::NAN,
            iterations,
            residuals: Residuals { primal: f64::INFINITY, dual: f64::INFINITY, gap: f64::INFINITY },
            phase1_margin,
            box_sensitivity: 0.0,
        }
    }
}

/// Each inequality becomes one PSD block: ≺ and ⪯ on the negation, strict senses with
/// their shift subtracted. Equalities become one row per matrix entry.
pub fn lower(problem: &LmiProblem) -> ConicProgram {
    let m = problem.num_scalars();
    let mut blocks = Vec::new();
    let mut equalities = Vec::new();
    for c in &problem.constraints {
        let n = c.expr.rows();
        if c.sense == Sense::Zero {
            let mut rows: Vec<EqualityRow> = (0..n * c.expr.cols())
                .map(|k| EqualityRow { coeffs: Vec::new(), rhs: -c.expr.constant[(k / c.expr.cols(), k % c.expr.cols())] })
                .collect();
            for t in c.expr.terms() {
                rows[t.row * c.expr.cols() + t.col].coeffs.push((t.var, t.coef));
            }
            equalities.extend(rows.into_iter().filter(|r| !r.coeffs.is_empty() || r.rhs != 0.0));
            continue;
        }
        let sign = match c.sense {
            Sense::NegDef | Sense::NegSemi => -1.0,
            _ => 1.0,
        };
        let shift = if c.sense.is_strict() { c.shift } else { 0.0 };
        let constant = svec(&(&c.expr.constant * sign - Mat::identity(n, n) * shift));
        let mut coeffs: Vec<(usize, Vec<f64>)> = Vec::new();
        for t in c.expr.terms() {
            if t.row < t.col {
                continue;
            }
            let k = svec_index(n, t.row, t.col);
            let scale = if t.row == t.col { 1.0 } else { core::f64::consts::SQRT_2 };
            match coeffs.last_mut() {
                Some((v, vec)) if *v == t.var => vec[k] += sign * scale * t.coef,
                _ => {
                    let mut vec = vec![0.0; svec_len(n)];
                    vec[k] = sign * scale * t.coef;
                    coeffs.push((t.var, vec));
                }
            }
        }
        blocks.push(AffineBlock { name: c.name.clone(), side: n, constant, coeffs });
    }
    ConicProgram {
        num_vars: m,
        objective: problem.objective.dense(m),
        objective_constant: problem.objective.constant,
        blocks,
        equalities,
    }
}

impl ConicProgram {
    pub fn objective_value(&self, v: &[f64]) -> f64 {
        self.objective.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() + self.objective_constant
    }

    /// Largest violation at `v`: max of −λmin over blocks and |row residual| over equalities.
    pub fn violation(&self, v: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for b in &self.blocks {
            if b.side > 0 {
                worst = worst.max(-linalg::min_sym_eigenvalue(&b.evaluate(v)));
            }
        }
        for r in &self.equalities {
            let lhs: f64 = r.coeffs.iter().map(|(i, a)| a * v[*i]).sum();
            worst = worst.max((lhs - r.rhs).abs());
        }
        worst
    }

    fn data_scale(&self) -> f64 {
        let mut s: f64 = 1.0;
        for b in &self.blocks {
            for v in &b.constant {
                s = s.max(v.abs());
            }
        }
        for r in &self.equalities {
            s = s.max(r.rhs.abs());
        }
        s
    }

    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "vars {}", self.num_vars);
        let _ = writeln!(s, "objective {:.16e}", self.objective_constant);
        for (i, c) in self.objective.iter().enumerate() {
            if *c != 0.0 {
                let _ = writeln!(s, "c {i} {c:.16e}");
            }
        }
        for b in &self.blocks {
            let _ = writeln!(s, "block {} {}", b.name, b.side);
            for (k, v) in b.constant.iter().enumerate() {
                if *v != 0.0 {
                    let _ = writeln!(s, "f -1 {k} {v:.16e}");
                }
            }
            for (i, c) in &b.coeffs {
                for (k, v) in c.iter().enumerate() {
                    if *v != 0.0 {
                        let _ = writeln!(s, "f {i} {k} {v:.16e}");
                    }
                }
            }
        }
        for r in &self.equalities {
            let _ = writeln!(s, "eq {:.16e}", r.rhs);
            for (i, a) in &r.coeffs {
                let _ = writeln!(s, "a {i} {a:.16e}");
            }
        }
        s
    }

    fn check(&self) -> Result<()> {
        if self.objective.len() != self.num_vars {
            return Err(Error::DimensionMismatch(format!(
                "objective has {} entries for {} variables",
                self.objective.len(),
                self.num_vars
            )));
        }
        let finite = |v: f64| v.is_finite();
        if !self.objective.iter().copied().all(finite) || !self.objective_constant.is_finite() {
            return Err(Error::InvalidInput(String::from("objective has non-finite entries")));
        }
        for b in &self.blocks {
            if b.constant.len() != svec_len(b.side) || b.coeffs.iter().any(|(_, c)| c.len() != b.constant.len()) {
                return Err(Error::DimensionMismatch(format!("block `{}` has inconsistent lengths", b.name)));
            }
            if b.coeffs.iter().any(|(i, _)| *i >= self.num_vars) {
                return Err(Error::DimensionMismatch(format!("block `{}` references an unknown variable", b.name)));
            }
            if !b.constant.iter().copied().all(finite) || !b.coeffs.iter().all(|(_, c)| c.iter().copied().all(finite)) {
                return Err(Error::InvalidInput(format!("block `{}` has non-finite data", b.name)));
            }
        }
        for r in &self.equalities {
            if r.coeffs.iter().any(|(i, a)| *i >= self.num_vars || !a.is_finite()) || !r.rhs.is_finite() {
                return Err(Error::InvalidInput(String::from("malformed equality row")));
            }
        }
        Ok(())
    }
}

/// Affine reparametrization v = v0 + T r of the feasible affine set, restricted to
/// directions that at least one block sees.
struct Reduction {
    v0: Vector,
    t: Mat,
}

fn reduce(p: &ConicProgram, tol: f64) -> core::result::Result<Reduction, SolveStatus> {
    let m = p.num_vars;
    let (v0, z) = if p.equalities.is_empty() {
        (Vector::zeros(m), Mat::identity(m, m))
    } else {
        let r = p.equalities.len();
        let mut a = Mat::zeros(r, m);
        let mut rhs = Vector::zeros(r);
        for (k, row) in p.equalities.iter().enumerate() {
            for (i, c) in &row.coeffs {
                a[(k, *i)] += c;
            }
            rhs[k] = row.rhs;
        }
        let (u, sig, v) = linalg::full_svd(&a);
        let top = sig.first().copied().unwrap_or(0.0);
        let rank = sig.iter().filter(|s| **s > linalg::DEFAULT_RANK_TOL * top && **s > 0.0).count();
        let mut v0 = Vector::zeros(m);
        for (k, s) in sig.iter().enumerate().take(rank) {
            let coef = u.column(k).dot(&rhs) / s;
            v0 += v.column(k) * coef;
        }
        let resid = (&a * &v0 - &rhs).amax();
        if resid > tol * (1.0 + rhs.amax()) * 10.0 {
            return Err(SolveStatus::Infeasible);
        }
        (v0, v.columns(rank, m - rank).into_owned())
    };
    let dz = z.ncols();
    let rows: usize = p.blocks.iter().map(|b| b.constant.len()).sum();
    let mut k = Mat::zeros(rows, dz);
    let mut off = 0;
    for b in &p.blocks {
        for (i, c) in &b.coeffs {
            for (e, val) in c.iter().enumerate() {
                if *val != 0.0 {
                    for j in 0..dz {
                        k[(off + e, j)] += val * z[(*i, j)];
                    }
                }
            }
        }
        off += b.constant.len();
    }
    let c = Vector::from_column_slice(&p.objective);
    let cz = z.transpose() * &c;
    let (w, rank) = if rows == 0 || dz == 0 {
        (Mat::zeros(dz, 0), 0)
    } else {
        let (_, sig, v) = linalg::full_svd(&k);
        let top = sig.first().copied().unwrap_or(0.0);
        let rank = sig.iter().filter(|s| **s > linalg::DEFAULT_RANK_TOL * top && **s > 0.0).count();
        (v.columns(0, rank).into_owned(), rank)
    };
    let seen = &w * (w.transpose() * &cz);
    if (&cz - seen).norm() > 1e-9 * c.norm().max(1.0) {
        return Err(SolveStatus::Unbounded);
    }
    let t = if rank == 0 { Mat::zeros(m, 0) } else { z * w };
    Ok(Reduction { v0, t })
}

fn standard_form(p: &ConicProgram, red: &Reduction, radius: Option<f64>, phase1: bool) -> ipm::Standard {
    let d = red.t.ncols();
    let dim = if phase1 { d + 1 } else { d };
    let mut blocks = Vec::with_capacity(p.blocks.len());
    for b in &p.blocks {
        let n = b.side;
        let mut c = b.constant.clone();
        let mut coef_r = vec![vec![0.0; c.len()]; d];
        for (i, cv) in &b.coeffs {
            let vi = red.v0[*i];
            for (e, val) in cv.iter().enumerate() {
                c[e] += vi * val;
                for (j, row) in coef_r.iter_mut().enumerate() {
                    row[e] += val * red.t[(*i, j)];
                }
            }
        }
        let mut a: Vec<(usize, Mat)> = coef_r
            .into_iter()
            .enumerate()
            .filter(|(_, v)| v.iter().any(|x| *x != 0.0))
            .map(|(j, v)| (j, -smat(&v, n)))
            .collect();
        if phase1 {
            a.push((d, Mat::identity(n, n)));
        }
        blocks.push(ipm::Block { c: smat(&c, n), a });
    }
    let mut lp_c = Vec::new();
    let mut lp_rows: Vec<Vec<f64>> = Vec::new();
    if let Some(r) = radius {
        for i in 0..p.num_vars {
            let row: Vec<f64> = (0..d).map(|j| red.t[(i, j)]).collect();
            if row.iter().all(|x| *x == 0.0) {
                continue;
            }
            // r − v_i ≥ 0 and r + v_i ≥ 0 with v_i = v0_i + T_i r.
            for sgn in [1.0, -1.0] {
                lp_c.push(r - sgn * red.v0[i]);
                let mut a: Vec<f64> = row.iter().map(|x| sgn * x).collect();
                if phase1 {
                    a.push(1.0);
                }
                lp_rows.push(a);
            }
        }
    }
    if phase1 {
        lp_c.push(1.0);
        let mut a = vec![0.0; dim];
        a[d] = 1.0;
        lp_rows.push(a);
    }
    let lp_a = Mat::from_fn(lp_rows.len(), dim, |r, c| lp_rows[r][c]);
    let b = if phase1 {
        let mut b = Vector::zeros(dim);
        b[d] = 1.0;
        b
    } else {
        -(red.t.transpose() * Vector::from_column_slice(&p.objective))
    };
    ipm::Standard { d: dim, b, blocks, lp_c: Vector::from_vec(lp_c), lp_a }
}

/// Solves the program. Deterministic; never panics on finite, well-shaped input.
pub fn solve(program: &ConicProgram, opts: &SolveOptions) -> Result<Solution> {
    program.check()?;
    if !(opts.tol > 0.0) || !(opts.step_fraction > 0.0 && opts.step_fraction < 1.0) {
        return Err(Error::InvalidInput(String::from("solver tolerance and step fraction must be in range")));
    }
    if let Some(r) = opts.box_radius {
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::InvalidInput(String::from("box radius must be positive and finite")));
        }
    }
    let m = program.num_vars;
    let red = match reduce(program, opts.tol) {
        Ok(r) => r,
        Err(status) => return Ok(Solution::failed(status, m, 0, f64::NAN)),
    };
    let d = red.t.ncols();
    let scale = program.data_scale();
    let params = ipm::Params { tol: opts.tol, max_iter: opts.max_iter, step_fraction: opts.step_fraction };

    // Phase I: maximize t subject to every cone ⪰ t·I and t ≤ 1.
    let p1 = standard_form(program, &red, opts.box_radius, true);
    let mut y0 = Vector::zeros(d + 1);
    let start = p1.min_slack(&y0);
    y0[d] = start.min(1.0) - 1.0;
    let ph1 = ipm::run(&p1, y0, &params);
    let margin = ph1.y[d];
    let mut iterations = ph1.iterations;
    let feas_tol = opts.tol * scale;
    if ph1.exit != ipm::Exit::Converged && margin <= feas_tol {
        // Could not certify either way.
        let status = if ph1.exit == ipm::Exit::IterationLimit {
            SolveStatus::IterationLimit
        } else if ph1.pobj < -feas_tol && ph1.rp_rel <= opts.tol {
            SolveStatus::Infeasible
        } else {
            SolveStatus::NumericalTrouble
        };
        return Ok(Solution::failed(status, m, iterations, margin));
    }
    if margin < -feas_tol {
        return Ok(Solution::failed(SolveStatus::Infeasible, m, iterations, margin));
    }
    if margin <= feas_tol {
        return Ok(Solution::failed(SolveStatus::NumericalTrouble, m, iterations, margin));
    }

    // Phase II from the phase I point.
    let p2 = standard_form(program, &red, opts.box_radius, false);
    let y_start = ph1.y.rows(0, d).into_owned();
    let ph2 = ipm::run(&p2, y_start, &params);
    iterations += ph2.iterations;
    let v = &red.v0 + &red.t * &ph2.y;
    let x: Vec<f64> = v.iter().copied().collect();
    let base = program.objective_constant + program.objective.iter().zip(red.v0.iter()).map(|(a, b)| a * b).sum::<f64>();
    let objective = program.objective_value(&x);
    let dual_objective = base - ph2.pobj;
    let box_sensitivity = match opts.box_radius {
        Some(r) => r * ph2.x_lp.sum(),
        None => 0.0,
    };
    let residuals = Residuals { primal: program.violation(&x) / scale, dual: ph2.rp_rel, gap: ph2.gap_rel };
    let status = match ph2.exit {
        ipm::Exit::Converged if box_sensitivity > 1e-3 * objective.abs().max(1.0) => SolveStatus::Unbounded,
        ipm::Exit::Converged => SolveStatus::Optimal,
        ipm::Exit::IterationLimit => SolveStatus::IterationLimit,
        ipm::Exit::Stalled => SolveStatus::NumericalTrouble,
    };
    Ok(Solution { status, x, objective, dual_objective, iterations, residuals, phase1_margin: margin, box_sensitivity })
}

/// Numeric check of the original constraints at the solution.
pub fn certify(problem: &LmiProblem, solution: &Solution) -> Result<MarginsReport> {
    if solution.status != SolveStatus::Optimal {
        return Err(Error::CertificationUnavailable(solution.status));
    }
    problem.evaluate_at(&solution.x)
}
