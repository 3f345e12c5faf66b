//! Scaled lower-triangular vectorization, column by column, off-diagonals times √2.

use alloc::vec::Vec;

use crate::linalg::Mat;

pub fn svec_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Position of entry (i, j) or (j, i) in the svec of an n × n matrix.
pub fn svec_index(n: usize, i: usize, j: usize) -> usize {
    let (r, c) = if i >= j { (i, j) } else { (j, i) };
    c * n - c * (c + 1) / 2 + r
}

pub fn svec(m: &Mat) -> Vec<f64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(svec_len(n));
    for c in 0..n {
        out.push(m[(c, c)]);
        for r in (c + 1)..n {
            out.push(0.5 * (m[(r, c)] + m[(c, r)]) * core::f64::consts::SQRT_2);
        }
    }
    out
}

pub fn smat(v: &[f64], n: usize) -> Mat {
    let mut m = Mat::zeros(n, n);
    let mut k = 0;
    for c in 0..n {
        m[(c, c)] = v[k];
        k += 1;
        for r in (c + 1)..n {
            let x = v[k] / core::f64::consts::SQRT_2;
            m[(r, c)] = x;
            m[(c, r)] = x;
            k += 1;
        }
    }
    m
}
