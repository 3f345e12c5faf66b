//! Reference solver: a primal log-det barrier method with equality-constrained Newton steps.
//!
//! Slow and simple. It needs a strictly feasible starting point and is only meant for
//! the small random programs used to cross-check the interior-point solver.

use nalgebra::{DMatrix, DVector};
use peakfilter_core::sdp::{AffineBlock, ConicProgram, EqualityRow};
use rand::Rng;

use crate::numeric::{random_matrix, random_spd, random_symmetric};

type Mat = DMatrix<f64>;

/// Scaled lower-triangular vector, column by column, off-diagonals times √2.
pub fn encode(m: &Mat) -> Vec<f64> {
    let n = m.nrows();
    let mut out = Vec::new();
    for c in 0..n {
        out.push(m[(c, c)]);
        for r in c + 1..n {
            out.push(m[(r, c)] * std::f64::consts::SQRT_2);
        }
    }
    out
}

pub fn decode(v: &[f64], n: usize) -> Mat {
    let mut m = Mat::zeros(n, n);
    let mut k = 0;
    for c in 0..n {
        m[(c, c)] = v[k];
        k += 1;
        for r in c + 1..n {
            m[(r, c)] = v[k] / std::f64::consts::SQRT_2;
            m[(c, r)] = m[(r, c)];
            k += 1;
        }
    }
    m
}

struct Dense {
    constant: Mat,
    coeffs: Vec<Mat>,
}

fn densify(p: &ConicProgram) -> Vec<Dense> {
    p.blocks
        .iter()
        .map(|b| {
            let mut coeffs = vec![Mat::zeros(b.side, b.side); p.num_vars];
            for (i, c) in &b.coeffs {
                coeffs[*i] = decode(c, b.side);
            }
            Dense { constant: decode(&b.constant, b.side), coeffs }
        })
        .collect()
}

fn value(block: &Dense, v: &DVector<f64>) -> Mat {
    let mut m = block.constant.clone();
    for (i, c) in block.coeffs.iter().enumerate() {
        m += c * v[i];
    }
    m
}

/// t·cᵀv − Σ log det F_j(v), or None outside the cone.
fn merit(blocks: &[Dense], c: &DVector<f64>, t: f64, v: &DVector<f64>) -> Option<f64> {
    let mut acc = t * c.dot(v);
    for b in blocks {
        let ch = value(b, v).cholesky()?;
        acc -= 2.0 * ch.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    }
    Some(acc)
}

#[derive(Debug, Clone)]
pub struct BarrierResult {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Barrier parameter bound on the suboptimality: total cone dimension / t.
    pub gap_bound: f64,
}

/// Minimizes the program from a strictly feasible `start` that satisfies the equalities.
pub fn solve(p: &ConicProgram, start: &[f64], gap: f64) -> Result<BarrierResult, String> {
    let m = p.num_vars;
    let blocks = densify(p);
    let c = DVector::from_column_slice(&p.objective);
    let a = Mat::from_fn(p.equalities.len(), m, |r, col| {
        p.equalities[r].coeffs.iter().filter(|(i, _)| *i == col).map(|(_, v)| v).sum()
    });
    let mut v = DVector::from_column_slice(start);
    let nu: usize = p.blocks.iter().map(|b| b.side).sum();
    let scale = 1.0 + c.norm();
    let mut t = 1.0 / scale;
    if merit(&blocks, &c, t, &v).is_none() {
        return Err("start is not strictly feasible".into());
    }
    for _outer in 0..200 {
        for _newton in 0..100 {
            let mut g = &c * t;
            let mut h = Mat::zeros(m, m);
            let mut parts = Vec::with_capacity(blocks.len());
            for b in &blocks {
                let inv = value(b, &v).try_inverse().ok_or("singular block")?;
                let prods: Vec<Mat> = b.coeffs.iter().map(|f| &inv * f).collect();
                for i in 0..m {
                    g[i] -= prods[i].trace();
                }
                parts.push(prods);
            }
            for prods in &parts {
                for i in 0..m {
                    for j in i..m {
                        let s = (&prods[i] * &prods[j]).trace();
                        h[(i, j)] += s;
                        if i != j {
                            h[(j, i)] += s;
                        }
                    }
                }
            }
            let r = a.nrows();
            let mut kkt = Mat::zeros(m + r, m + r);
            kkt.view_mut((0, 0), (m, m)).copy_from(&h);
            kkt.view_mut((m, 0), (r, m)).copy_from(&a);
            kkt.view_mut((0, m), (m, r)).copy_from(&a.transpose());
            let mut rhs = DVector::zeros(m + r);
            rhs.rows_mut(0, m).copy_from(&(-&g));
            let sol = kkt.lu().solve(&rhs).ok_or("singular Newton system")?;
            let dv = sol.rows(0, m).into_owned();
            let decrement = -g.dot(&dv);
            if decrement < 1e-14 {
                break;
            }
            let f0 = merit(&blocks, &c, t, &v).ok_or("left the cone")?;
            let mut s = 1.0;
            loop {
                let cand = &v + &dv * s;
                if let Some(f1) = merit(&blocks, &c, t, &cand) {
                    if f1 <= f0 - 0.25 * s * decrement {
                        v = cand;
                        break;
                    }
                }
                s *= 0.5;
                if s < 1e-14 {
                    return Err("line search failed".into());
                }
            }
        }
        let bound = nu as f64 / t;
        let obj = c.dot(&v) + p.objective_constant;
        if bound <= gap * (1.0 + obj.abs()) {
            return Ok(BarrierResult { x: v.iter().copied().collect(), objective: obj, gap_bound: bound });
        }
        t *= 6.0;
    }
    Err("barrier parameter limit reached".into())
}

/// A random program with a strictly feasible primal point and a strictly feasible dual
/// point, so the optimum is attained and there is no duality gap.
#[derive(Debug, Clone)]
pub struct RandomInstance {
    pub program: ConicProgram,
    pub start: Vec<f64>,
}

pub fn random_instance(rng: &mut impl Rng, num_vars: usize, sides: &[usize], equalities: usize) -> RandomInstance {
    let v0: Vec<f64> = (0..num_vars).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut objective = vec![0.0; num_vars];
    let mut blocks = Vec::new();
    for (bi, &side) in sides.iter().enumerate() {
        let coeffs: Vec<Mat> = (0..num_vars).map(|_| random_symmetric(rng, side)).collect();
        let slack = random_spd(rng, side, 0.5);
        let mut constant = slack;
        for (i, f) in coeffs.iter().enumerate() {
            constant -= f * v0[i];
        }
        let dual = random_spd(rng, side, 0.5);
        for (i, f) in coeffs.iter().enumerate() {
            objective[i] += (f * &dual).trace();
        }
        blocks.push(AffineBlock {
            name: format!("b{bi}"),
            side,
            constant: encode(&constant),
            coeffs: coeffs.iter().enumerate().map(|(i, f)| (i, encode(f))).collect(),
        });
    }
    let rows = random_matrix(rng, equalities, num_vars);
    let equalities = (0..equalities)
        .map(|r| EqualityRow {
            coeffs: (0..num_vars).map(|i| (i, rows[(r, i)])).collect(),
            rhs: (0..num_vars).map(|i| rows[(r, i)] * v0[i]).sum(),
        })
        .collect();
    RandomInstance {
        program: ConicProgram { num_vars, objective, objective_constant: 0.0, blocks, equalities },
        start: v0,
    }
}
