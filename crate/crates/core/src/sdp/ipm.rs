//! Dense primal-dual path following (Nesterov-Todd direction, Mehrotra
//! predictor-corrector) for `max bᵀy  s.t.  S = C − Σ yᵢAᵢ ⪰ 0` with an optional
//! nonnegative orthant part `s = c − A y ≥ 0`.
//!
//! The dual iterate stays feasible: S is recomputed from y after every step and
//! checked by Cholesky. The primal X starts at the identity and is driven to
//! A(X) = b along the way. The Newton system is solved through a QR factorization
//! of the scaled constraint matrix rather than by forming the Schur complement,
//! which keeps the directions accurate when the optimal face is not a single point.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Cholesky, Dyn};
#[allow(unused_imports)] // float methods come from here when std is not linked
use num_traits::Float;

use crate::linalg::{self, Mat, Vector};

pub(crate) struct Block {
    pub c: Mat,
    /// Nonzero coefficient matrices, sorted by variable index.
    pub a: Vec<(usize, Mat)>,
}

pub(crate) struct Standard {
    pub d: usize,
    pub b: Vector,
    pub blocks: Vec<Block>,
    pub lp_c: Vector,
    pub lp_a: Mat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Exit {
    Converged,
    IterationLimit,
    Stalled,
}

pub(crate) struct Outcome {
    pub exit: Exit,
    pub y: Vector,
    pub x_lp: Vector,
    pub iterations: usize,
    pub pobj: f64,
    pub rp_rel: f64,
    pub gap_rel: f64,
}

pub(crate) struct Params {
    pub tol: f64,
    pub max_iter: usize,
    pub step_fraction: f64,
}

type Chol = Cholesky<f64, Dyn>;

fn chol(m: &Mat) -> Option<Chol> {
    if !m.iter().all(|v| v.is_finite()) {
        return None;
    }
    Cholesky::new(m.clone())
}

fn sym(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

impl Standard {
    pub fn slacks(&self, y: &Vector) -> (Vec<Mat>, Vector) {
        let s = self
            .blocks
            .iter()
            .map(|blk| {
                let mut s = blk.c.clone();
                for (i, a) in &blk.a {
                    if y[*i] != 0.0 {
                        s -= a * y[*i];
                    }
                }
                s
            })
            .collect();
        let s_lp = &self.lp_c - &self.lp_a * y;
        (s, s_lp)
    }

    /// Smallest eigenvalue over all cones at y.
    pub fn min_slack(&self, y: &Vector) -> f64 {
        let (s, s_lp) = self.slacks(y);
        let mut m = f64::INFINITY;
        for b in &s {
            if b.nrows() > 0 {
                m = m.min(crate::linalg::min_sym_eigenvalue(b));
            }
        }
        for v in s_lp.iter() {
            m = m.min(*v);
        }
        m
    }

    /// A(X)ᵢ = Σ ⟨Aᵢ, X⟩.
    fn apply(&self, x: &[Mat], x_lp: &Vector) -> Vector {
        let mut out = self.lp_a.transpose() * x_lp;
        for (blk, xb) in self.blocks.iter().zip(x) {
            for (i, a) in &blk.a {
                out[*i] += a.dot(xb);
            }
        }
        out
    }

    /// A*(y) per cone.
    fn adjoint(&self, y: &Vector) -> (Vec<Mat>, Vector) {
        let m = self
            .blocks
            .iter()
            .map(|blk| {
                let n = blk.c.nrows();
                let mut out = Mat::zeros(n, n);
                for (i, a) in &blk.a {
                    if y[*i] != 0.0 {
                        out += a * y[*i];
                    }
                }
                out
            })
            .collect();
        (m, &self.lp_a * y)
    }

    fn primal_objective(&self, x: &[Mat], x_lp: &Vector) -> f64 {
        self.blocks.iter().zip(x).map(|(b, xb)| b.c.dot(xb)).sum::<f64>() + self.lp_c.dot(x_lp)
    }

    fn cone_dim(&self) -> usize {
        self.blocks.iter().map(|b| b.c.nrows()).sum::<usize>() + self.lp_c.len()
    }
}

/// Largest α with M + αΔ ⪰ 0 given a Cholesky factor of M.
fn max_step_psd(ch: &Chol, delta: &Mat) -> f64 {
    if delta.nrows() == 0 {
        return f64::INFINITY;
    }
    let l = ch.l();
    let Some(t) = l.solve_lower_triangular(delta) else { return 0.0 };
    let Some(w) = l.solve_lower_triangular(&t.transpose()) else { return 0.0 };
    let lmin = crate::linalg::min_sym_eigenvalue(&sym(&w));
    if lmin < 0.0 {
        -1.0 / lmin
    } else {
        f64::INFINITY
    }
}

fn max_step_lp(x: &Vector, dx: &Vector) -> f64 {
    x.iter()
        .zip(dx.iter())
        .filter(|(_, d)| **d < 0.0)
        .map(|(v, d)| -v / d)
        .fold(f64::INFINITY, f64::min)
}

/// Nesterov-Todd scaling of one cone: Gᵀ S G = G⁻¹ X G⁻ᵀ = diag(λ).
struct Scaling {
    g: Mat,
    g_inv: Mat,
    lambda: Vec<f64>,
}

fn nt_scaling(x: &Chol, s: &Chol) -> Option<Scaling> {
    let n = x.l().nrows();
    if n == 0 {
        return Some(Scaling { g: Mat::zeros(0, 0), g_inv: Mat::zeros(0, 0), lambda: Vec::new() });
    }
    let lx = x.l();
    let ls = s.l();
    let svd = linalg::svd(&(ls.transpose() * &lx));
    let v = svd.v;
    let lambda = svd.sigma;
    if lambda.iter().any(|l| !(*l > 0.0)) {
        return None;
    }
    let mut g = &lx * &v;
    // G⁻¹ = D^{1/2} Vᵀ L_X⁻¹.
    let lx_inv = lx.solve_lower_triangular(&Mat::identity(n, n))?;
    let mut g_inv = v.transpose() * lx_inv;
    for (j, l) in lambda.iter().enumerate() {
        let r = l.sqrt();
        for i in 0..n {
            g[(i, j)] /= r;
            g_inv[(j, i)] *= r;
        }
    }
    Some(Scaling { g, g_inv, lambda })
}

struct State<'a> {
    x_lp: &'a Vector,
    s_lp: &'a Vector,
    scal: &'a [Scaling],
    rp: &'a Vector,
}

struct Direction {
    dy: Vector,
    ds: Vec<Mat>,
    ds_lp: Vector,
    dx: Vec<Mat>,
    dx_lp: Vector,
}

/// Upper-triangular factor R of the scaled constraint matrix, with RᵀR = Schur complement.
fn schur_factor(std: &Standard, st: &State<'_>) -> Option<Mat> {
    let rows: usize = std.blocks.iter().map(|b| b.c.nrows() * b.c.nrows()).sum::<usize>() + std.lp_c.len();
    let mut at = Mat::zeros(rows.max(std.d), std.d);
    let mut off = 0;
    for (k, blk) in std.blocks.iter().enumerate() {
        let n = blk.c.nrows();
        let g = &st.scal[k].g;
        for (i, a) in &blk.a {
            let t = g.transpose() * a * g;
            for (e, v) in t.iter().enumerate() {
                at[(off + e, *i)] = *v;
            }
        }
        off += n * n;
    }
    for l in 0..std.lp_c.len() {
        let w = (st.x_lp[l] / st.s_lp[l]).sqrt();
        for i in 0..std.d {
            at[(off + l, i)] = std.lp_a[(l, i)] * w;
        }
    }
    if !at.iter().all(|v| v.is_finite()) {
        return None;
    }
    let r = at.qr().r();
    Some(r.rows(0, std.d).into_owned())
}

fn solve_factor(r: &Mat, rhs: &Vector) -> Option<Vector> {
    let d = r.nrows();
    let mut r = r.clone();
    let top = (0..d).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if top == 0.0 {
        return if d == 0 { Some(Vector::zeros(0)) } else { None };
    }
    for i in 0..d {
        if r[(i, i)].abs() < 1e-15 * top {
            r[(i, i)] = if r[(i, i)] < 0.0 { -1e-15 * top } else { 1e-15 * top };
        }
    }
    let z = r.transpose().solve_lower_triangular(rhs)?;
    r.solve_upper_triangular(&z)
}

/// Builds (ΔX, ΔS) from Δy: ΔS = −A*Δy, ΔX = R_c + W A*(Δy) W.
fn expand(std: &Standard, st: &State<'_>, rc: &[Mat], rc_lp: &Vector, dy: Vector) -> Direction {
    let (ady, ady_lp) = std.adjoint(&dy);
    let mut dx = Vec::with_capacity(rc.len());
    for (k, r) in rc.iter().enumerate() {
        let g = &st.scal[k].g;
        let inner = g.transpose() * &ady[k] * g;
        dx.push(sym(&(r + g * inner * g.transpose())));
    }
    let ds: Vec<Mat> = ady.into_iter().map(|m| -m).collect();
    let ds_lp = -ady_lp.clone();
    let dx_lp = Vector::from_iterator(
        rc_lp.len(),
        (0..rc_lp.len()).map(|l| rc_lp[l] + st.x_lp[l] / st.s_lp[l] * ady_lp[l]),
    );
    Direction { dy, ds, ds_lp, dx, dx_lp }
}

/// Direction for the scaled complementarity target `λ ∘ (ΔX̃ + ΔS̃) = rhs`.
fn direction(std: &Standard, st: &State<'_>, r: &Mat, rhs: &[Mat], rhs_lp: &Vector) -> Option<Direction> {
    // R_c = G Y Gᵀ with Y the solution of the Lyapunov equation λ∘Y = rhs.
    let mut rc = Vec::with_capacity(rhs.len());
    for (k, h) in rhs.iter().enumerate() {
        let sc = &st.scal[k];
        let n = sc.lambda.len();
        let y = Mat::from_fn(n, n, |i, j| 2.0 * h[(i, j)] / (sc.lambda[i] + sc.lambda[j]));
        rc.push(sym(&(&sc.g * y * sc.g.transpose())));
    }
    let rc_lp = Vector::from_iterator(
        rhs_lp.len(),
        (0..rhs_lp.len()).map(|l| rhs_lp[l] / st.s_lp[l]),
    );
    // M Δy = rp − A(R_c)
    let target = st.rp - std.apply(&rc, &rc_lp);
    let dy = solve_factor(r, &target)?;
    if !dy.iter().all(|v| v.is_finite()) {
        return None;
    }
    let mut dir = expand(std, st, &rc, &rc_lp, dy);
    for _ in 0..2 {
        let miss = st.rp - std.apply(&dir.dx, &dir.dx_lp);
        if miss.norm() <= 1e-15 * (1.0 + st.rp.norm()) {
            break;
        }
        let Some(fix) = solve_factor(r, &miss) else { break };
        if !fix.iter().all(|v| v.is_finite()) {
            break;
        }
        dir = expand(std, st, &rc, &rc_lp, dir.dy + fix);
    }
    Some(dir)
}

fn step_limits(xch: &[Chol], sch: &[Chol], x_lp: &Vector, s_lp: &Vector, d: &Direction) -> (f64, f64) {
    let mut ap = max_step_lp(x_lp, &d.dx_lp);
    let mut ad = max_step_lp(s_lp, &d.ds_lp);
    for (k, ch) in xch.iter().enumerate() {
        ap = ap.min(max_step_psd(ch, &d.dx[k]));
    }
    for (k, ch) in sch.iter().enumerate() {
        ad = ad.min(max_step_psd(ch, &d.ds[k]));
    }
    (ap, ad)
}

/// Rescales every cone to unit magnitude and every variable so that its largest
/// coefficient is one, runs the method from the strictly dual-feasible `y0`, and maps
/// the result back.
pub(crate) fn run(std: &Standard, y0: Vector, p: &Params) -> Outcome {
    let mut col = vec![0.0f64; std.d];
    let mut blocks = Vec::with_capacity(std.blocks.len());
    for blk in &std.blocks {
        let mag = blk.a.iter().map(|(_, a)| a.amax()).fold(blk.c.amax(), f64::max);
        let w = if mag > 0.0 { 1.0 / mag } else { 1.0 };
        for (i, a) in &blk.a {
            col[*i] = col[*i].max(a.amax() * w);
        }
        blocks.push(Block { c: &blk.c * w, a: blk.a.iter().map(|(i, a)| (*i, a * w)).collect() });
    }
    let mut lp_w = Vector::zeros(std.lp_c.len());
    let mut lp_a = std.lp_a.clone();
    for r in 0..std.lp_c.len() {
        let mag = std.lp_a.row(r).amax().max(std.lp_c[r].abs());
        let w = if mag > 0.0 { 1.0 / mag } else { 1.0 };
        lp_w[r] = w;
        for i in 0..std.d {
            lp_a[(r, i)] *= w;
            col[i] = col[i].max(lp_a[(r, i)].abs());
        }
    }
    let dvar: Vec<f64> = col.iter().map(|c| if *c > 0.0 { 1.0 / c } else { 1.0 }).collect();
    for blk in &mut blocks {
        for (i, a) in &mut blk.a {
            *a *= dvar[*i];
        }
    }
    for i in 0..std.d {
        for r in 0..std.lp_c.len() {
            lp_a[(r, i)] *= dvar[i];
        }
    }
    let scaled = Standard {
        d: std.d,
        b: Vector::from_iterator(std.d, std.b.iter().zip(&dvar).map(|(b, d)| b * d)),
        blocks,
        lp_c: std.lp_c.component_mul(&lp_w),
        lp_a,
    };
    let y0s = Vector::from_iterator(std.d, y0.iter().zip(&dvar).map(|(y, d)| y / d));
    let metric: Vec<f64> = dvar.iter().map(|d| 1.0 / d).collect();
    let mut out = run_scaled(&scaled, y0s, p, &metric, std.b.norm());
    for (y, d) in out.y.iter_mut().zip(&dvar) {
        *y *= d;
    }
    out.x_lp = out.x_lp.component_mul(&lp_w);
    out
}

fn run_scaled(std: &Standard, y0: Vector, p: &Params, metric: &[f64], bnorm: f64) -> Outcome {
    let nb = std.blocks.len();
    let mut y = y0;
    let mut x: Vec<Mat> = std.blocks.iter().map(|b| Mat::identity(b.c.nrows(), b.c.nrows())).collect();
    let mut x_lp = Vector::from_element(std.lp_c.len(), 1.0);
    let cone_dim = std.cone_dim().max(1) as f64;
    let (mut s, mut s_lp) = std.slacks(&y);
    let mut stalls = 0;
    let mut exit = Exit::IterationLimit;
    let mut iterations = 0;
    let (mut pobj, mut rp_rel, mut gap_rel);

    loop {
        pobj = std.primal_objective(&x, &x_lp);
        let dobj = std.b.dot(&y);
        let rp = &std.b - std.apply(&x, &x_lp);
        rp_rel = rp.iter().zip(metric).map(|(r, m)| (r * m) * (r * m)).sum::<f64>().sqrt() / (1.0 + bnorm);
        gap_rel = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        if rp_rel <= p.tol && gap_rel <= p.tol {
            exit = Exit::Converged;
            break;
        }
        if iterations >= p.max_iter {
            break;
        }
        iterations += 1;

        let sch: Option<Vec<_>> = s.iter().map(chol).collect();
        let xch: Option<Vec<_>> = x.iter().map(chol).collect();
        let (Some(sch), Some(xch)) = (sch, xch) else {
            exit = Exit::Stalled;
            break;
        };
        let scal: Option<Vec<_>> = xch.iter().zip(&sch).map(|(a, b)| nt_scaling(a, b)).collect();
        let Some(scal) = scal else {
            exit = Exit::Stalled;
            break;
        };
        let mu = (scal.iter().flat_map(|sc| sc.lambda.iter()).map(|l| l * l).sum::<f64>() + x_lp.dot(&s_lp)) / cone_dim;
        let st = State { x_lp: &x_lp, s_lp: &s_lp, scal: &scal, rp: &rp };
        let Some(r) = schur_factor(std, &st) else {
            exit = Exit::Stalled;
            break;
        };

        // Predictor: λ∘(ΔX̃ + ΔS̃) = −λ².
        let pred_rhs: Vec<Mat> = scal.iter().map(|sc| -Mat::from_diagonal(&Vector::from_iterator(sc.lambda.len(), sc.lambda.iter().map(|l| l * l)))).collect();
        let pred_lp = -x_lp.component_mul(&s_lp);
        let Some(pred) = direction(std, &st, &r, &pred_rhs, &pred_lp) else {
            exit = Exit::Stalled;
            break;
        };
        let (ap, ad) = step_limits(&xch, &sch, &x_lp, &s_lp, &pred);
        let (ap, ad) = (ap.min(1.0), ad.min(1.0));
        let mut mu_aff = 0.0;
        for k in 0..nb {
            mu_aff += (&x[k] + &pred.dx[k] * ap).dot(&(&s[k] + &pred.ds[k] * ad));
        }
        mu_aff += (&x_lp + &pred.dx_lp * ap).dot(&(&s_lp + &pred.ds_lp * ad));
        mu_aff /= cone_dim;
        let sigma = if mu > 0.0 { (mu_aff / mu).max(0.0).powi(3).min(1.0) } else { 0.0 };

        // Corrector: λ∘(ΔX̃ + ΔS̃) = σμI − λ² − ΔX̃ₐ∘ΔS̃ₐ.
        let mut corr_rhs = Vec::with_capacity(nb);
        for (k, sc) in scal.iter().enumerate() {
            let dxt = &sc.g_inv * &pred.dx[k] * sc.g_inv.transpose();
            let dst = sc.g.transpose() * &pred.ds[k] * &sc.g;
            let mut h = -sym(&(dxt * dst));
            for (i, l) in sc.lambda.iter().enumerate() {
                h[(i, i)] += sigma * mu - l * l;
            }
            corr_rhs.push(h);
        }
        let corr_lp = Vector::from_iterator(
            x_lp.len(),
            (0..x_lp.len()).map(|l| sigma * mu - x_lp[l] * s_lp[l] - pred.dx_lp[l] * pred.ds_lp[l]),
        );
        let Some(dir) = direction(std, &st, &r, &corr_rhs, &corr_lp) else {
            exit = Exit::Stalled;
            break;
        };
        let (ap, ad) = step_limits(&xch, &sch, &x_lp, &s_lp, &dir);
        let mut ap = (p.step_fraction * ap).min(1.0);
        let mut ad = (p.step_fraction * ad).min(1.0);

        // Dual step, with S recomputed exactly from y.
        let mut accepted = false;
        for _ in 0..60 {
            let y_new = &y + &dir.dy * ad;
            let (s_new, s_lp_new) = std.slacks(&y_new);
            if s_lp_new.iter().all(|v| *v > 0.0) && s_new.iter().all(|b| chol(b).is_some()) {
                y = y_new;
                s = s_new;
                s_lp = s_lp_new;
                accepted = true;
                break;
            }
            ad *= 0.7;
        }
        if !accepted {
            ad = 0.0;
        }
        let mut x_ok = false;
        for _ in 0..60 {
            let cand: Vec<Mat> = (0..nb).map(|k| sym(&(&x[k] + &dir.dx[k] * ap))).collect();
            let cand_lp = &x_lp + &dir.dx_lp * ap;
            if cand_lp.iter().all(|v| *v > 0.0) && cand.iter().all(|b| chol(b).is_some()) {
                x = cand;
                x_lp = cand_lp;
                x_ok = true;
                break;
            }
            ap *= 0.7;
        }
        if !x_ok {
            ap = 0.0;
        }
        if ap.max(ad) < 1e-10 {
            stalls += 1;
            if stalls >= 3 {
                exit = Exit::Stalled;
                break;
            }
        } else {
            stalls = 0;
        }
    }
    Outcome { exit, y, x_lp, iterations, pobj, rp_rel, gap_rel }
}
