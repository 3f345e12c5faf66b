//! The two-state descriptor example and the values reported for it.

use peakfilter_core::expr::ExprAst;
use peakfilter_core::model::DescriptorPlant;
use peakfilter_core::Mat;

/// w(t) used for the disturbed run.
pub const DISTURBANCE: &str = "30*exp(-t/3)*cos(7*t)";
/// Reported guaranteed bound.
pub const REPORTED_MU: f64 = 0.1453;
pub const REPORTED_EPSILON: f64 = 1.6437;
pub const REPORTED_ALPHA: f64 = 4.9876;
/// Reported ‖e‖∞ / ‖w‖₂ of the disturbed run.
pub const REPORTED_RATIO: f64 = 0.0313;
/// Reported consistent initial state of the plant.
pub const REPORTED_X0: [f64; 2] = [-14.7020, 3.0014];
/// Reported z(0) = H x(0).
pub const REPORTED_Z0: [f64; 2] = [-7.3510, 1.5007];
/// Closed form of ∫₀^∞ ‖w‖² dt for [`DISTURBANCE`]: 675 + 450·(2/3)/((2/3)² + 196).
pub fn disturbance_energy() -> f64 {
    let a = 2.0 / 3.0;
    675.0 + 450.0 * a / (a * a + 196.0)
}

pub fn reported_af() -> Mat {
    Mat::from_row_slice(2, 2, &[-34.4678, -19.7142, 2.0046, -28.9571])
}

pub fn reported_bf() -> Mat {
    Mat::from_row_slice(2, 1, &[1.9586, 0.7948])
}

pub fn reported_cf() -> Mat {
    Mat::from_row_slice(2, 2, &[-0.0111, -0.0071, -0.0018, -0.0197])
}

/// Rank-one descriptor plant with γ1 = 0.5 and no output nonlinearity.
pub fn example_plant() -> DescriptorPlant {
    example_plant_with(0.5)
}

/// The example plant with a different state Lipschitz constant.
pub fn example_plant_with(lip_state: f64) -> DescriptorPlant {
    DescriptorPlant {
        e: Mat::from_row_slice(2, 2, &[2.0, 3.0, 4.0, 6.0]),
        a: Mat::from_row_slice(2, 2, &[1.0, 12.0, -6.0, -15.0]),
        b: Mat::from_row_slice(2, 1, &[1.0, 1.0]),
        c: Mat::from_row_slice(1, 2, &[1.0, 0.0]),
        d: Mat::from_row_slice(1, 1, &[0.2]),
        unc_state: Mat::from_row_slice(2, 2, &[0.1, 0.1, -0.2, 0.15]),
        unc_output: Mat::from_row_slice(1, 2, &[-0.25, 0.25]),
        unc_right: Mat::from_row_slice(2, 2, &[0.1, 0.0, 0.0, 0.1]),
        target: Mat::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.5]),
        state_nl: ExprAst::parse("0.5*sin(x2); 0.5*sin(x1)", 2, 0).expect("fixture expression"),
        output_nl: ExprAst::parse("0", 2, 0).expect("fixture expression"),
        lip_state,
        lip_output: 0.0,
    }
}

/// The example plant with E = I (A is Hurwitz, so the plant stays stable).
pub fn nonsingular_variant() -> DescriptorPlant {
    DescriptorPlant { e: Mat::identity(2, 2), ..example_plant() }
}

/// Linear version of the example plant: no nonlinearity and no uncertainty.
pub fn linear_variant() -> DescriptorPlant {
    DescriptorPlant {
        state_nl: ExprAst::zeros(2, 2, 0),
        lip_state: 0.0,
        unc_state: Mat::zeros(2, 0),
        unc_output: Mat::zeros(1, 0),
        unc_right: Mat::zeros(0, 2),
        ..example_plant()
    }
}

/// The implicit constraint in the transformed coordinates x̄ = T x, T = [3 2; 0 1]:
/// −(8/3)x̄1 − (101/3)x̄2 − sin x̄2 + ½ sin(x̄1/3 − 2x̄2/3).
pub fn transformed_constraint(x: &[f64]) -> f64 {
    let xb1 = 3.0 * x[0] + 2.0 * x[1];
    let xb2 = x[1];
    -(8.0 / 3.0) * xb1 - (101.0 / 3.0) * xb2 - xb2.sin() + 0.5 * (xb1 / 3.0 - 2.0 * xb2 / 3.0).sin()
}

/// The same constraint with sin x̄1 in place of sin x̄2, as it is sometimes printed.
pub fn transformed_constraint_printed(x: &[f64]) -> f64 {
    let xb1 = 3.0 * x[0] + 2.0 * x[1];
    let xb2 = x[1];
    -(8.0 / 3.0) * xb1 - (101.0 / 3.0) * xb2 - xb1.sin() + 0.5 * (xb1 / 3.0 - 2.0 * xb2 / 3.0).sin()
}
