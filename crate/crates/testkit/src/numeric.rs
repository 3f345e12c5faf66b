//! Finite differences and random matrices.

use nalgebra::DMatrix;
use rand::Rng;

pub type Mat = DMatrix<f64>;

/// Central-difference Jacobian of `f` at `x` with step `h`.
pub fn jacobian_fd(f: impl Fn(&[f64]) -> Vec<f64>, x: &[f64], h: f64) -> Mat {
    let m = f(x).len();
    let mut j = Mat::zeros(m, x.len());
    let mut xp = x.to_vec();
    for c in 0..x.len() {
        xp[c] = x[c] + h;
        let fp = f(&xp);
        xp[c] = x[c] - h;
        let fm = f(&xp);
        xp[c] = x[c];
        for r in 0..m {
            j[(r, c)] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    j
}

/// Entries uniform in [−1, 1].
pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

pub fn random_symmetric(rng: &mut impl Rng, n: usize) -> Mat {
    let a = random_matrix(rng, n, n);
    (&a + a.transpose()) * 0.5
}

/// B Bᵀ + floor·I.
pub fn random_spd(rng: &mut impl Rng, n: usize, floor: f64) -> Mat {
    let b = random_matrix(rng, n, n);
    &b * b.transpose() + Mat::identity(n, n) * floor
}

/// Q factor of a random square matrix, with column signs fixed by R's diagonal.
pub fn random_orthogonal(rng: &mut impl Rng, n: usize) -> Mat {
    loop {
        let a = random_matrix(rng, n, n);
        let qr = a.qr();
        let r = qr.r();
        if (0..n).all(|i| r[(i, i)].abs() > 1e-3) {
            let mut q = qr.q();
            for i in 0..n {
                if r[(i, i)] < 0.0 {
                    q.column_mut(i).neg_mut();
                }
            }
            return q;
        }
    }
}

/// Smallest eigenvalue of the symmetric part.
pub fn min_eig(m: &Mat) -> f64 {
    let s = (m + m.transpose()) * 0.5;
    s.symmetric_eigenvalues().min()
}

pub fn max_eig(m: &Mat) -> f64 {
    let s = (m + m.transpose()) * 0.5;
    s.symmetric_eigenvalues().max()
}

/// Largest singular value.
pub fn norm2(m: &Mat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}
