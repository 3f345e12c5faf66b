use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::ExprAst;
use crate::error::ExprError;
use crate::linalg::spectral_norm;

/// Grid-sampled Lipschitz estimate: a lower bound on the constant over `bounds`.
#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzEstimate {
    pub gamma_hat: f64,
    pub bounds: Vec<(f64, f64)>,
    pub samples: usize,
}

/// Maximum spectral norm of the x-Jacobian over a uniform grid on `bounds`.
///
/// Inputs are held at zero and time at 0.
pub fn estimate_lipschitz(
    ast: &ExprAst,
    bounds: &[(f64, f64)],
    grid_per_dim: usize,
) -> Result<LipschitzEstimate, ExprError> {
    let n = ast.state_dim();
    if bounds.len() != n {
        return Err(ExprError::Dimension(format!(
            "box has {} intervals but the expression has {n} state variables",
            bounds.len()
        )));
    }
    if grid_per_dim < 2 {
        return Err(ExprError::Eval(format!("grid_per_dim must be at least 2, got {grid_per_dim}")));
    }
    if bounds.iter().any(|&(lo, hi)| !lo.is_finite() || !hi.is_finite() || lo > hi) {
        return Err(ExprError::Eval("box bounds must be finite with lower <= upper".into()));
    }
    let u = vec![0.0; ast.input_dim()];
    let mut idx = vec![0usize; n];
    let mut x = vec![0.0; n];
    let mut gamma_hat: f64 = 0.0;
    let mut samples = 0usize;
    loop {
        for j in 0..n {
            let (lo, hi) = bounds[j];
            x[j] = lo + (hi - lo) * idx[j] as f64 / (grid_per_dim - 1) as f64;
        }
        let jac = ast.jacobian_x(&x, &u, 0.0)?;
        gamma_hat = gamma_hat.max(spectral_norm(&jac));
        samples += 1;
        // Odometer increment over the grid.
        let mut k = 0;
        while k < n {
            idx[k] += 1;
            if idx[k] < grid_per_dim {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == n {
            break;
        }
    }
    Ok(LipschitzEstimate { gamma_hat, bounds: bounds.to_vec(), samples })
}
