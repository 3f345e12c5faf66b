//! Augmented filter-error system over ξ = [x_F; x].
//!
//! ```text
//! Ẽ ξ' = (Ã + ΔÃ) ξ + S1 Ω(ξ, u) + B̃ w
//!    e = C̃ ξ + S2 Ω(ξ, u)
//! ```
//! with Ω = [f(x); g(x); f(x_F); g(x_F)] and ΔÃ = M̃1 F(t) Ñ.

use alloc::format;

use crate::error::{Error, Result};
use crate::linalg::{block_diag, hcat, vcat, Mat, Vector};
use crate::model::{combined_gamma, DescriptorPlant, FilterRealization};

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedErrorSystem {
    /// Ẽ = diag(E, E).
    pub e: Mat,
    /// Ã = [A_F, B_F C; 0, A].
    pub a: Mat,
    /// B̃ = [B_F D; B].
    pub b: Mat,
    /// C̃ = [−C_F, H].
    pub c: Mat,
    /// S1 = [0, B_F, K1, K2; I, 0, 0, 0].
    pub nl_in: Mat,
    /// S2 = [0, 0, 0, −K3].
    pub nl_out: Mat,
    /// M̃1 = [B_F M2; M1].
    pub unc_left: Mat,
    /// Ñ = [0, N].
    pub unc_right: Mat,
    /// Γ with ‖Γ‖ equal to the combined Lipschitz constant.
    pub lip_map: Mat,
    pub lip: f64,
}

/// Γ = [0, γ1 I; 0, γ2 J; γ1 I, 0; γ2 J, 0] with J the p × n rectangular identity.
pub fn gamma_matrix(n: usize, p: usize, lip_state: f64, lip_output: f64) -> Mat {
    let id = Mat::identity(n, n);
    let j = Mat::identity(p, n);
    let zn = Mat::zeros(n, n);
    let zp = Mat::zeros(p, n);
    vcat(
        2 * n,
        &[
            &hcat(n, &[&zn, &(&id * lip_state)]),
            &hcat(p, &[&zp, &(&j * lip_output)]),
            &hcat(n, &[&(&id * lip_state), &zn]),
            &hcat(p, &[&(&j * lip_output), &zp]),
        ],
    )
}

pub fn assemble(plant: &DescriptorPlant, filter: &FilterRealization) -> Result<AugmentedErrorSystem> {
    let dims = plant.dims()?;
    filter.check(&dims)?;
    let (n, p, q, k) = (dims.n, dims.outputs, dims.targets, dims.unc_cols);
    let e = block_diag(&[&plant.e, &plant.e]);
    let a = vcat(
        2 * n,
        &[
            &hcat(n, &[&filter.a, &(&filter.b * &plant.c)]),
            &hcat(n, &[&Mat::zeros(n, n), &plant.a]),
        ],
    );
    let b = vcat(dims.dist, &[&(&filter.b * &plant.d), &plant.b]);
    let c = hcat(q, &[&(-&filter.c), &plant.target]);
    let nl_in = vcat(
        2 * n + 2 * p,
        &[
            &hcat(n, &[&Mat::zeros(n, n), &filter.b, &filter.nl_state, &filter.nl_output]),
            &hcat(n, &[&Mat::identity(n, n), &Mat::zeros(n, p), &Mat::zeros(n, n), &Mat::zeros(n, p)]),
        ],
    );
    let nl_out = hcat(q, &[&Mat::zeros(q, 2 * n + p), &(-&filter.feed)]);
    let unc_left = vcat(k, &[&(&filter.b * &plant.unc_output), &plant.unc_state]);
    let unc_right = hcat(dims.unc_rows, &[&Mat::zeros(dims.unc_rows, n), &plant.unc_right]);
    let lip = combined_gamma(plant.lip_state, plant.lip_output)?;
    Ok(AugmentedErrorSystem {
        e,
        a,
        b,
        c,
        nl_in,
        nl_out,
        unc_left,
        unc_right,
        lip_map: gamma_matrix(n, p, plant.lip_state, plant.lip_output),
        lip,
    })
}

/// Stacks [f(x); g(x); f(x_F); g(x_F)].
pub fn omega_stack(phi_x: &[f64], psi_x: &[f64], phi_xf: &[f64], psi_xf: &[f64]) -> Result<Vector> {
    if phi_x.len() != phi_xf.len() || psi_x.len() != psi_xf.len() {
        return Err(Error::DimensionMismatch(format!(
            "plant and filter nonlinearity values differ in length ({}/{} vs {}/{})",
            phi_x.len(),
            psi_x.len(),
            phi_xf.len(),
            psi_xf.len()
        )));
    }
    Ok(Vector::from_iterator(
        2 * (phi_x.len() + psi_x.len()),
        phi_x.iter().chain(psi_x).chain(phi_xf).chain(psi_xf).copied(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::spectral_norm;
    use crate::model::tests::example_plant;

    fn reported_filter() -> FilterRealization {
        FilterRealization {
            a: Mat::from_row_slice(2, 2, &[-34.4678, -19.7142, 2.0046, -28.9571]),
            b: Mat::from_row_slice(2, 1, &[0.3, -0.1]),
            c: Mat::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.5]),
            nl_state: Mat::identity(2, 2),
            nl_output: Mat::zeros(2, 1),
            feed: Mat::zeros(2, 1),
            mu_star: 0.1453,
        }
    }

    #[test]
    fn block_placement() {
        let plant = example_plant();
        let f = reported_filter();
        let aug = assemble(&plant, &f).unwrap();
        assert_eq!(aug.a.view((0, 0), (2, 2)), f.a);
        assert_eq!(aug.a.view((0, 2), (2, 2)), &f.b * &plant.c);
        assert_eq!(aug.a.view((2, 0), (2, 2)), Mat::zeros(2, 2));
        assert_eq!(aug.e, block_diag(&[&plant.e, &plant.e]));
        assert_eq!(aug.nl_in.shape(), (4, 6));
        assert_eq!(aug.nl_out.shape(), (2, 6));
        assert_eq!(aug.unc_left.shape(), (4, 2));
        assert_eq!(aug.unc_right.shape(), (2, 4));
        assert!((spectral_norm(&aug.lip_map) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn zero_filter_gives_block_diagonal() {
        let plant = example_plant();
        let f = FilterRealization {
            a: Mat::zeros(2, 2),
            b: Mat::zeros(2, 1),
            c: Mat::zeros(2, 2),
            nl_state: Mat::zeros(2, 2),
            nl_output: Mat::zeros(2, 1),
            feed: Mat::zeros(2, 1),
            mu_star: 0.0,
        };
        let aug = assemble(&plant, &f).unwrap();
        assert_eq!(aug.a, block_diag(&[&Mat::zeros(2, 2), &plant.a]));
    }

    #[test]
    fn observer_error_output() {
        let mut plant = example_plant();
        plant.target = Mat::identity(2, 2);
        let l = Mat::from_row_slice(2, 1, &[0.7, -0.4]);
        let f = FilterRealization::static_gain(&plant, &l).unwrap();
        let aug = assemble(&plant, &f).unwrap();
        let expect = hcat(2, &[&(-Mat::identity(2, 2)), &Mat::identity(2, 2)]);
        assert_eq!(aug.c, expect);
    }

    #[test]
    fn gamma_norm_identity() {
        for &(g1, g2, n, p) in &[(0.5, 0.0, 2, 1), (3.0, 4.0, 3, 2), (1.0, 2.0, 2, 4), (0.0, 0.0, 1, 1)] {
            let g = gamma_matrix(n, p, g1, g2);
            assert_eq!(g.shape(), (2 * n + 2 * p, 2 * n));
            let want = combined_gamma(g1, g2).unwrap();
            assert!((spectral_norm(&g) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn omega_ordering() {
        let v = omega_stack(&[1.0], &[2.0], &[3.0], &[4.0]).unwrap();
        assert_eq!(v.as_slice(), &[1.0, 2.0, 3.0, 4.0]);
        let z = omega_stack(&[0.0, 0.0], &[0.0], &[0.0, 0.0], &[0.0]).unwrap();
        assert_eq!(z.len(), 6);
        assert!(omega_stack(&[1.0], &[2.0], &[3.0, 4.0], &[5.0]).is_err());
    }
}
