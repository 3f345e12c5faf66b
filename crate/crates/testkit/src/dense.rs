//! Constraint matrices written out directly from the plant and numeric decision values.

use nalgebra::DMatrix;
use peakfilter_core::model::DescriptorPlant;

type Mat = DMatrix<f64>;

/// Numeric values of the decision variables.
#[derive(Debug, Clone)]
pub struct Values {
    pub zeta: f64,
    pub eps: f64,
    pub alpha: f64,
    pub p1: Mat,
    pub p2: Mat,
    pub g1: Mat,
    pub g2: Mat,
    pub cf: Mat,
    pub feed: Mat,
}

fn sym(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Fills the upper blocks and mirrors them.
fn assemble(sizes: &[usize], upper: &[(usize, usize, Mat)]) -> Mat {
    let mut off = vec![0];
    for s in sizes {
        off.push(off.last().unwrap() + s);
    }
    let side = *off.last().unwrap();
    let mut m = Mat::zeros(side, side);
    for (i, j, b) in upper {
        assert_eq!(b.shape(), (sizes[*i], sizes[*j]), "block ({i},{j})");
        m.view_mut((off[*i], off[*j]), b.shape()).copy_from(b);
        if i != j {
            m.view_mut((off[*j], off[*i]), (b.ncols(), b.nrows())).copy_from(&b.transpose());
        }
    }
    m
}

/// The four-column dissipation matrix, with block sizes n, n, k, 2n + 2p, w.
pub fn dissipation(plant: &DescriptorPlant, nl_state: &Mat, nl_output: &Mat, v: &Values) -> Mat {
    let n = plant.e.nrows();
    let p = plant.c.nrows();
    let w = plant.b.ncols();
    let k = if plant.unc_state.ncols() > 0 && plant.unc_right.nrows() > 0 { plant.unc_state.ncols() } else { 0 };
    let g2 = plant.lip_state.powi(2) + plant.lip_output.powi(2);
    let id = Mat::identity(n, n);
    let mut nl_f = Mat::zeros(n, 2 * n + 2 * p);
    nl_f.view_mut((0, n), (n, p)).copy_from(&v.g2);
    nl_f.view_mut((0, n + p), (n, n)).copy_from(&(&v.p1 * nl_state));
    nl_f.view_mut((0, 2 * n + p), (n, p)).copy_from(&(&v.p1 * nl_output));
    let mut nl_p = Mat::zeros(n, 2 * n + 2 * p);
    nl_p.view_mut((0, 0), (n, n)).copy_from(&v.p2);
    let mut plant_diag = sym(&(plant.a.transpose() * &v.p2 + &v.p2 * &plant.a)) + &id * g2;
    if k > 0 {
        plant_diag += plant.unc_right.transpose() * &plant.unc_right * v.eps;
    }
    let mut upper = vec![
        (0, 0, &v.g1 + v.g1.transpose() + &id * g2),
        (0, 1, &v.g2 * &plant.c),
        (1, 1, plant_diag),
        (0, 3, nl_f),
        (1, 3, nl_p),
        (3, 3, -Mat::identity(2 * n + 2 * p, 2 * n + 2 * p)),
        (0, 4, &v.g2 * &plant.d),
        (1, 4, &v.p2 * &plant.b),
        (4, 4, -Mat::identity(w, w) * v.zeta),
    ];
    if k > 0 {
        upper.push((0, 2, &v.g2 * &plant.unc_output));
        upper.push((1, 2, &v.p2 * &plant.unc_state));
        upper.push((2, 2, -Mat::identity(k, k) * v.eps));
    }
    assemble(&[n, n, k, 2 * n + 2 * p, w], &upper)
}

/// The peak-output matrix, with block sizes n, q, n, n, n.
pub fn peak(plant: &DescriptorPlant, v: &Values) -> Mat {
    let n = plant.e.nrows();
    let q = plant.target.nrows();
    let gamma = (plant.lip_state.powi(2) + plant.lip_output.powi(2)).sqrt();
    let ag = Mat::identity(n, n) * (v.alpha * gamma);
    let third = |s: usize| -Mat::identity(s, s) / 3.0;
    let h = &plant.target;
    let et = plant.e.transpose();
    let upper = vec![
        (0, 0, -sym(&(&et * &v.p1))),
        (0, 1, v.cf.transpose()),
        (0, 2, ag.clone()),
        (0, 3, -(v.cf.transpose() * h)),
        (1, 1, third(q)),
        (2, 2, third(n)),
        (3, 3, h.transpose() * h - sym(&(&et * &v.p2))),
        (3, 4, ag),
        (4, 4, third(n)),
    ];
    assemble(&[n, q, n, n, n], &upper)
}

/// [αI, K3; K3ᵀ, αI].
pub fn feedthrough(v: &Values) -> Mat {
    let (q, p) = v.feed.shape();
    assemble(&[q, p], &[(0, 0, Mat::identity(q, q) * v.alpha), (0, 1, v.feed.clone()), (1, 1, Mat::identity(p, p) * v.alpha)])
}

/// [I, (I − P1)ᵀ; I − P1, I].
pub fn invertibility(p1: &Mat) -> Mat {
    let n = p1.nrows();
    let id = Mat::identity(n, n);
    assemble(&[n, n], &[(0, 0, id.clone()), (0, 1, (&id - p1).transpose()), (1, 1, id)])
}
