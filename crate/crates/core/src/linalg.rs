//! Dense matrix utilities for descriptor systems.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
#[allow(unused_imports)] // float methods come from here when std is not linked
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative singular-value cutoff used when no tolerance is supplied.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

const PENCIL_SEED: u64 = 0x5eed_0e11;

pub fn ensure_finite(m: &Mat, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} contains non-finite entries")))
    }
}

pub fn ensure_square(m: &Mat, what: &str) -> Result<()> {
    if m.nrows() == m.ncols() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )))
    }
}

/// Parses a row-major slice into a matrix.
pub fn mat_from_rows(rows: usize, cols: usize, data: &[f64]) -> Mat {
    Mat::from_row_slice(rows, cols, data)
}

/// Thin singular value decomposition `m = u · diag(sigma) · vᵀ` with `sigma` descending.
///
/// Computed by one-sided Jacobi rotations rather than nalgebra's bidiagonal QR iteration,
/// which can return factors that do not reproduce a rank-deficient input.
#[derive(Debug, Clone, PartialEq)]
pub struct Svd {
    /// r × k with orthonormal columns, k = min(r, c).
    pub u: Mat,
    pub sigma: Vec<f64>,
    /// c × k with orthonormal columns.
    pub v: Mat,
}

impl Svd {
    /// Minimum-norm least-squares solution of m·x = b, ignoring singular values ≤ `cutoff`.
    pub fn solve(&self, b: &Vector, cutoff: f64) -> Vector {
        let mut x = Vector::zeros(self.v.nrows());
        for (k, &s) in self.sigma.iter().enumerate() {
            if s > cutoff {
                x += self.v.column(k) * (self.u.column(k).dot(b) / s);
            }
        }
        x
    }
}

pub fn svd(m: &Mat) -> Svd {
    let (r, c) = m.shape();
    if r < c {
        let t = svd(&m.transpose());
        return Svd { u: t.v, sigma: t.sigma, v: t.u };
    }
    let mut a = m.clone();
    let mut v = Mat::identity(c, c);
    for _ in 0..80 {
        let mut rotated = false;
        for i in 0..c {
            for j in (i + 1)..c {
                let alpha = a.column(i).norm_squared();
                let beta = a.column(j).norm_squared();
                let gamma = a.column(i).dot(&a.column(j));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * Float::sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = Float::signum(zeta) / (Float::abs(zeta) + Float::hypot(1.0, zeta));
                let cs = 1.0 / Float::sqrt(1.0 + t * t);
                let sn = cs * t;
                for mat in [&mut a, &mut v] {
                    for k in 0..mat.nrows() {
                        let (x, y) = (mat[(k, i)], mat[(k, j)]);
                        mat[(k, i)] = cs * x - sn * y;
                        mat[(k, j)] = sn * x + cs * y;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = (0..c).map(|j| a.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&x, &y| norms[y].partial_cmp(&norms[x]).unwrap_or(core::cmp::Ordering::Equal).then(x.cmp(&y)));
    let mut u = Mat::zeros(r, c);
    let mut vs = Mat::zeros(c, c);
    let mut sigma = Vec::with_capacity(c);
    for (dst, &src) in order.iter().enumerate() {
        if norms[src] > 0.0 {
            u.set_column(dst, &(a.column(src) / norms[src]));
        }
        vs.set_column(dst, &v.column(src));
        sigma.push(norms[src]);
    }
    // Columns belonging to negligible singular values carry only rounding noise; rebuild them
    // as an orthonormal completion of the leading ones.
    let top = sigma.first().copied().unwrap_or(0.0);
    let keep = sigma.iter().take_while(|&&s| s > 1e-14 * top).count();
    let u = complete_basis(&u.columns(0, keep).into_owned(), r).columns(0, c).into_owned();
    Svd { u, sigma, v: vs }
}

/// Singular values sorted in descending order.
pub fn singular_values(m: &Mat) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    svd(m).sigma
}

/// Largest singular value (0 for empty matrices).
pub fn spectral_norm(m: &Mat) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

pub fn sym_part(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Eigenvalues of the symmetric part, ascending.
pub fn sym_eigenvalues(m: &Mat) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(sym_part(m)).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    ev
}

pub fn min_sym_eigenvalue(m: &Mat) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(f64::INFINITY)
}

pub fn max_sym_eigenvalue(m: &Mat) -> f64 {
    sym_eigenvalues(m).last().copied().unwrap_or(f64::NEG_INFINITY)
}

/// Number of singular values above `tol` times the largest one.
pub fn rank_of(m: &Mat, tol: f64) -> Result<usize> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("rank tolerance must be positive, got {tol}")));
    }
    ensure_finite(m, "matrix")?;
    let sv = singular_values(m);
    let Some(&top) = sv.first() else { return Ok(0) };
    if top == 0.0 {
        return Ok(0);
    }
    Ok(sv.iter().filter(|&&s| s > tol * top).count())
}

/// Full SVD factors with singular values sorted descending: (U, sigma, V), both U and V square.
pub fn full_svd(m: &Mat) -> (Mat, Vec<f64>, Mat) {
    let (r, c) = m.shape();
    let s = svd(m);
    (complete_basis(&s.u, r), s.sigma, complete_basis(&s.v, c))
}

/// Given `b` (dim x k) whose columns span the dimension, return an orthonormal dim x dim basis
/// whose leading columns come from Gram-Schmidt on `b` in order.
fn complete_basis(b: &Mat, dim: usize) -> Mat {
    let mut cols: Vec<Vector> = Vec::with_capacity(dim);
    let candidates = (0..b.ncols())
        .map(|j| b.column(j).into_owned())
        .chain((0..dim).map(|i| {
            let mut e = Vector::zeros(dim);
            e[i] = 1.0;
            e
        }));
    for mut v in candidates {
        if cols.len() == dim {
            break;
        }
        for _ in 0..2 {
            for c in &cols {
                let d = c.dot(&v);
                v -= c * d;
            }
        }
        let nv = v.norm();
        if nv > 1e-8 {
            cols.push(v / nv);
        }
    }
    let mut out = Mat::zeros(dim, dim);
    for (j, c) in cols.iter().enumerate() {
        out.set_column(j, c);
    }
    out
}

fn fix_row_sign(row: &mut [f64]) {
    if let Some(&last) = row.iter().rev().find(|v| v.abs() > 1e-12) {
        if last < 0.0 {
            row.iter_mut().for_each(|v| *v = -*v);
        }
    }
}

/// Orthonormal basis of the left null space of `e`, one basis vector per row.
///
/// Rows come from the trailing left singular vectors of `e`; each row is
/// sign-normalized so that its last significant entry is positive.
pub fn orthogonal_complement(e: &Mat, tol: f64) -> Result<Mat> {
    ensure_square(e, "E")?;
    let n = e.nrows();
    let s = rank_of(e, tol)?;
    if s == n {
        return Ok(Mat::zeros(0, n));
    }
    let (u, _, _) = full_svd(e);
    let mut out = Mat::zeros(n - s, n);
    for (r, j) in (s..n).enumerate() {
        let mut row: Vec<f64> = u.column(j).iter().copied().collect();
        fix_row_sign(&mut row);
        for (c, v) in row.into_iter().enumerate() {
            out[(r, c)] = v;
        }
    }
    Ok(out)
}

/// Orthonormal basis of the right null space of `e`, one basis vector per column.
pub fn right_null_space(e: &Mat, tol: f64) -> Result<Mat> {
    ensure_finite(e, "matrix")?;
    let c = e.ncols();
    let s = rank_of(e, tol)?;
    let (_, _, v) = full_svd(e);
    let mut out = Mat::zeros(c, c - s);
    for (k, j) in (s..c).enumerate() {
        let mut col: Vec<f64> = v.column(j).iter().copied().collect();
        fix_row_sign(&mut col);
        for (r, x) in col.into_iter().enumerate() {
            out[(r, k)] = x;
        }
    }
    Ok(out)
}

/// Orthonormal basis of the column space of `m` (columns).
pub fn range_basis(m: &Mat, tol: f64) -> Result<Mat> {
    ensure_finite(m, "matrix")?;
    let s = rank_of(m, tol)?;
    let (u, _, _) = full_svd(m);
    Ok(u.columns(0, s).into_owned())
}

/// A factorization E = S · diag(I_s, 0) · T with S, T invertible.
#[derive(Debug, Clone, PartialEq)]
pub struct SemiExplicitWitness {
    pub s: Mat,
    pub t: Mat,
    pub rank: usize,
}

impl SemiExplicitWitness {
    pub fn reconstruct(&self) -> Mat {
        let n = self.s.nrows();
        let mut mid = Mat::zeros(n, n);
        for i in 0..self.rank.min(n) {
            mid[(i, i)] = 1.0;
        }
        &self.s * mid * &self.t
    }

    /// Relative Frobenius reconstruction error against `e`.
    pub fn residual(&self, e: &Mat) -> f64 {
        let diff = (self.reconstruct() - e).norm();
        let scale = e.norm();
        if scale == 0.0 {
            diff
        } else {
            diff / scale
        }
    }

    /// Reconstruction within `tol` and both factors invertible.
    pub fn is_valid_for(&self, e: &Mat, tol: f64) -> bool {
        let n = e.nrows();
        self.s.shape() == (n, n)
            && self.t.shape() == (n, n)
            && rank_of(&self.s, DEFAULT_RANK_TOL).map(|r| r == n).unwrap_or(false)
            && rank_of(&self.t, DEFAULT_RANK_TOL).map(|r| r == n).unwrap_or(false)
            && self.residual(e) <= tol
    }
}

/// Semi-explicit decomposition from the SVD: S = U·diag(σ_1..σ_s, 1..1), T = Vᵀ.
pub fn semi_explicit_decompose(e: &Mat, tol: f64) -> Result<SemiExplicitWitness> {
    ensure_square(e, "E")?;
    let n = e.nrows();
    let s = rank_of(e, tol)?;
    let (u, sig, v) = full_svd(e);
    let mut scale = Mat::identity(n, n);
    for i in 0..s {
        scale[(i, i)] = sig[i];
    }
    Ok(SemiExplicitWitness { s: u * scale, t: v.transpose(), rank: s })
}

/// Coefficients (ascending powers of s) of det(sE − A), via cofactor expansion.
///
/// Intended for small n; cost grows factorially.
pub fn pencil_determinant_poly(e: &Mat, a: &Mat) -> Result<Vec<f64>> {
    ensure_square(e, "E")?;
    if e.shape() != a.shape() {
        return Err(Error::DimensionMismatch(format!(
            "E is {}x{} but A is {}x{}",
            e.nrows(),
            e.ncols(),
            a.nrows(),
            a.ncols()
        )));
    }
    let n = e.nrows();
    let entries: Vec<Vec<[f64; 2]>> = (0..n)
        .map(|i| (0..n).map(|j| [-a[(i, j)], e[(i, j)]]).collect())
        .collect();
    let cols: Vec<usize> = (0..n).collect();
    Ok(cofactor_det(&entries, 0, &cols))
}

fn poly_mul_linear(p: &[f64], lin: [f64; 2]) -> Vec<f64> {
    let mut out = vec![0.0; p.len() + 1];
    for (i, &c) in p.iter().enumerate() {
        out[i] += c * lin[0];
        out[i + 1] += c * lin[1];
    }
    out
}

fn cofactor_det(entries: &[Vec<[f64; 2]>], row: usize, cols: &[usize]) -> Vec<f64> {
    if cols.is_empty() {
        return vec![1.0];
    }
    let mut acc: Vec<f64> = vec![0.0];
    for (k, &c) in cols.iter().enumerate() {
        let rest: Vec<usize> = cols.iter().copied().filter(|&x| x != c).collect();
        let minor = cofactor_det(entries, row + 1, &rest);
        let term = poly_mul_linear(&minor, entries[row][c]);
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        if acc.len() < term.len() {
            acc.resize(term.len(), 0.0);
        }
        for (i, v) in term.into_iter().enumerate() {
            acc[i] += sign * v;
        }
    }
    acc
}

fn pencil_samples(n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(PENCIL_SEED);
    let mut pts: Vec<f64> = Vec::with_capacity(n + 1);
    while pts.len() < n + 1 {
        let s: f64 = rng.random_range(-10.0..10.0);
        if pts.iter().all(|&p| (p - s).abs() > 1e-3) {
            pts.push(s);
        }
    }
    pts
}

fn full_rank_at(m: &Mat) -> bool {
    let sv = singular_values(m);
    match (sv.first(), sv.last()) {
        (Some(&top), Some(&bottom)) => top > 0.0 && bottom > 1e-10 * top,
        _ => true,
    }
}

/// True iff det(sE − A) is not the zero polynomial.
pub fn pencil_regular(e: &Mat, a: &Mat) -> Result<bool> {
    ensure_square(e, "E")?;
    ensure_finite(e, "E")?;
    ensure_finite(a, "A")?;
    let n = e.nrows();
    if a.shape() != e.shape() {
        return Err(Error::DimensionMismatch(format!(
            "E is {n}x{n} but A is {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if n == 0 {
        return Ok(true);
    }
    if n <= 4 {
        let poly = pencil_determinant_poly(e, a)?;
        let scale = (e.norm() + a.norm()).max(1.0).powi(n as i32);
        return Ok(poly.iter().any(|c| c.abs() > 1e-12 * scale));
    }
    Ok(pencil_samples(n).into_iter().any(|s| full_rank_at(&(e * s - a))))
}

/// Finite generalized eigenvalues (re, im) of the regular pencil (E, A).
pub fn finite_generalized_eigenvalues(e: &Mat, a: &Mat) -> Result<Vec<(f64, f64)>> {
    if !pencil_regular(e, a)? {
        return Err(Error::Precondition("pencil (E, A) is not regular".into()));
    }
    let n = e.nrows();
    // Shift to a point where sE - A is invertible; eigenvalues λ of K = (s0 E - A)^{-1} E
    // map to finite pencil eigenvalues s = s0 - 1/λ.
    let s0 = pencil_samples(n)
        .into_iter()
        .map(|s| {
            let sv = singular_values(&(e * s - a));
            let cond = sv.last().copied().unwrap_or(0.0) / sv.first().copied().unwrap_or(1.0).max(1e-300);
            (s, cond)
        })
        .fold((0.0, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best })
        .0;
    let shifted = e * s0 - a;
    let lu = shifted.lu();
    let k = lu
        .solve(e)
        .ok_or_else(|| Error::Internal("shifted pencil unexpectedly singular".into()))?;
    let lambdas = k.complex_eigenvalues();
    let max_mag = lambdas.iter().map(|l| (l.re * l.re + l.im * l.im).sqrt()).fold(0.0, f64::max);
    let mut out = Vec::new();
    for l in lambdas.iter() {
        let mag2 = l.re * l.re + l.im * l.im;
        if max_mag == 0.0 || mag2.sqrt() <= 1e-10 * max_mag {
            continue;
        }
        // s0 - 1/λ
        out.push((s0 - l.re / mag2, l.im / mag2));
    }
    Ok(out)
}

/// rank [sE − A; C] = n for complex s, via the real 2n-dimensional embedding.
fn pbh_full_rank(e: &Mat, a: &Mat, c: &Mat, s: (f64, f64), tol: f64) -> bool {
    let n = e.nrows();
    let p = c.nrows();
    let re_top = e * s.0 - a;
    let im_top = e * s.1;
    let rows = n + p;
    let mut big = Mat::zeros(2 * rows, 2 * n);
    let mut re = Mat::zeros(rows, n);
    let mut im = Mat::zeros(rows, n);
    re.view_mut((0, 0), (n, n)).copy_from(&re_top);
    re.view_mut((n, 0), (p, n)).copy_from(c);
    im.view_mut((0, 0), (n, n)).copy_from(&im_top);
    big.view_mut((0, 0), (rows, n)).copy_from(&re);
    big.view_mut((0, n), (rows, n)).copy_from(&(-&im));
    big.view_mut((rows, 0), (rows, n)).copy_from(&im);
    big.view_mut((rows, n), (rows, n)).copy_from(&re);
    rank_of(&big, tol).map(|r| r == 2 * n).unwrap_or(false)
}

/// PBH-type observability test on finite eigenvalues and random sample points.
pub fn observable(e: &Mat, a: &Mat, c: &Mat, tol: f64) -> Result<bool> {
    if c.ncols() != e.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "C has {} columns, expected {}",
            c.ncols(),
            e.ncols()
        )));
    }
    ensure_finite(c, "C")?;
    let eigs = finite_generalized_eigenvalues(e, a)?;
    let samples = pencil_samples(e.nrows()).into_iter().map(|s| (s, 0.0));
    Ok(eigs.into_iter().chain(samples).all(|s| pbh_full_rank(e, a, c, s, tol)))
}

/// Symmetric within `tol` (relative Frobenius) and PSD within `tol` scaled by max(1, ‖M‖₂).
pub fn is_symmetric_psd(m: &Mat, tol: f64) -> Result<bool> {
    ensure_square(m, "matrix")?;
    ensure_finite(m, "matrix")?;
    let asym = (m - m.transpose()).norm();
    if asym > tol * m.norm() {
        return Ok(false);
    }
    let scale = spectral_norm(m).max(1.0);
    Ok(min_sym_eigenvalue(m) >= -tol * scale)
}

/// Block-diagonal concatenation.
pub fn block_diag(blocks: &[&Mat]) -> Mat {
    let r: usize = blocks.iter().map(|b| b.nrows()).sum();
    let c: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(r, c);
    let (mut i, mut j) = (0, 0);
    for b in blocks {
        out.view_mut((i, j), b.shape()).copy_from(*b);
        i += b.nrows();
        j += b.ncols();
    }
    out
}

/// Horizontal concatenation; all blocks must have `rows` rows.
pub fn hcat(rows: usize, blocks: &[&Mat]) -> Mat {
    let c: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(rows, c);
    let mut j = 0;
    for b in blocks {
        out.view_mut((0, j), b.shape()).copy_from(*b);
        j += b.ncols();
    }
    out
}

/// Vertical concatenation; all blocks must have `cols` columns.
pub fn vcat(cols: usize, blocks: &[&Mat]) -> Mat {
    let r: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Mat::zeros(r, cols);
    let mut i = 0;
    for b in blocks {
        out.view_mut((i, 0), b.shape()).copy_from(*b);
        i += b.nrows();
    }
    out
}

/// Inverse through LU, `None` when numerically singular.
pub fn inverse(m: &Mat) -> Option<Mat> {
    if m.nrows() == 0 {
        return Some(m.clone());
    }
    let sv = singular_values(m);
    if sv.last().copied().unwrap_or(0.0) <= 1e-14 * sv[0] {
        return None;
    }
    m.clone().try_inverse()
}
