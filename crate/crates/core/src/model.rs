//! Plant, filter structure and filter realization.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use crate::error::{Error, Result};
use crate::expr::ExprAst;
use crate::linalg::{self, Mat, DEFAULT_RANK_TOL};

/// Dimensions of a descriptor plant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlantDims {
    /// States.
    pub n: usize,
    /// Known inputs.
    pub inputs: usize,
    /// Measured outputs.
    pub outputs: usize,
    /// Rows of the estimated signal.
    pub targets: usize,
    /// Columns of the uncertainty block.
    pub unc_cols: usize,
    /// Rows of the uncertainty block.
    pub unc_rows: usize,
    /// Disturbance channels.
    pub dist: usize,
}

/// Uncertain Lipschitz descriptor plant
///
/// ```text
/// E x' = (A + U_x F(t) R) x + f(x, u) + B w
///    y = (C + U_y F(t) R) x + g(x, u) + D w
///    z = H x
/// ```
///
/// with `‖F(t)‖ ≤ 1`, `f` Lipschitz with constant `lip_state` and `g` with `lip_output`.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorPlant {
    pub e: Mat,
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub d: Mat,
    /// Left uncertainty factor entering the state equation (n × k).
    pub unc_state: Mat,
    /// Left uncertainty factor entering the output equation (p × k).
    pub unc_output: Mat,
    /// Right uncertainty factor (l × n).
    pub unc_right: Mat,
    /// Estimated signal map H (q × n).
    pub target: Mat,
    pub state_nl: ExprAst,
    pub output_nl: ExprAst,
    pub lip_state: f64,
    pub lip_output: f64,
}

fn shape_err(name: &str, want: (usize, usize), got: (usize, usize)) -> Error {
    Error::DimensionMismatch(format!(
        "{name} must be {}x{}, got {}x{}",
        want.0, want.1, got.0, got.1
    ))
}

fn expect_shape(name: &str, m: &Mat, want: (usize, usize)) -> Result<()> {
    if m.shape() == want {
        Ok(())
    } else {
        Err(shape_err(name, want, m.shape()))
    }
}

impl DescriptorPlant {
    /// Dimensions inferred from the matrices, after checking they agree.
    pub fn dims(&self) -> Result<PlantDims> {
        let n = self.e.nrows();
        let outputs = self.c.nrows();
        let dist = self.b.ncols();
        let unc_cols = self.unc_state.ncols();
        let unc_rows = self.unc_right.nrows();
        let targets = self.target.nrows();
        let inputs = self.state_nl.input_dim();
        expect_shape("E", &self.e, (n, n))?;
        expect_shape("A", &self.a, (n, n))?;
        expect_shape("B", &self.b, (n, dist))?;
        expect_shape("C", &self.c, (outputs, n))?;
        expect_shape("D", &self.d, (outputs, dist))?;
        expect_shape("M1", &self.unc_state, (n, unc_cols))?;
        expect_shape("M2", &self.unc_output, (outputs, unc_cols))?;
        expect_shape("N", &self.unc_right, (unc_rows, n))?;
        expect_shape("H", &self.target, (targets, n))?;
        if self.state_nl.len() != n || self.state_nl.state_dim() != n {
            return Err(Error::DimensionMismatch(format!(
                "phi must have {n} components over {n} states, got {} over {}",
                self.state_nl.len(),
                self.state_nl.state_dim()
            )));
        }
        if self.output_nl.len() != outputs || self.output_nl.state_dim() != n {
            return Err(Error::DimensionMismatch(format!(
                "psi must have {outputs} components over {n} states, got {} over {}",
                self.output_nl.len(),
                self.output_nl.state_dim()
            )));
        }
        if self.output_nl.input_dim() != inputs {
            return Err(Error::DimensionMismatch(format!(
                "phi declares {inputs} inputs but psi declares {}",
                self.output_nl.input_dim()
            )));
        }
        Ok(PlantDims { n, inputs, outputs, targets, unc_cols, unc_rows, dist })
    }

    /// Combined Lipschitz constant of the stacked nonlinearity.
    pub fn lipschitz(&self) -> Result<f64> {
        combined_gamma(self.lip_state, self.lip_output)
    }
}

/// √(γ1² + γ2²).
pub fn combined_gamma(lip_state: f64, lip_output: f64) -> Result<f64> {
    if !(lip_state >= 0.0) || !(lip_output >= 0.0) || !lip_state.is_finite() || !lip_output.is_finite() {
        return Err(Error::InvalidInput(format!(
            "Lipschitz constants must be finite and nonnegative, got {lip_state} and {lip_output}"
        )));
    }
    Ok(Float::hypot(lip_state, lip_output))
}

/// Which filter family a structure belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Full-order dynamic filter with nonlinear copy of the plant.
    Dynamic,
    /// Observer with gain L: A_F = A − LC, B_F = L, C_F = I.
    StaticGain,
    Custom,
}

/// How the output-nonlinearity feedthrough of the filter is treated.
#[derive(Debug, Clone, PartialEq)]
pub enum FeedMode {
    Fixed(Mat),
    Decision,
}

/// Structural (non-synthesized) matrices of the filter
///
/// ```text
/// E x_F' = A_F x_F + B_F y + K1 f(x_F, u) + K2 g(x_F, u)
///    z_F = C_F x_F + K3 g(x_F, u)
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct FilterStructure {
    pub preset: Preset,
    /// K1 (n × n).
    pub nl_state: Mat,
    /// K2 (n × p). Ignored by synthesis for the static-gain preset, where it equals −L.
    pub nl_output: Mat,
    /// K3 (q × p).
    pub feed: FeedMode,
}

impl FilterStructure {
    pub fn dynamic(dims: &PlantDims) -> Self {
        Self {
            preset: Preset::Dynamic,
            nl_state: Mat::identity(dims.n, dims.n),
            nl_output: Mat::zeros(dims.n, dims.outputs),
            feed: FeedMode::Fixed(Mat::zeros(dims.targets, dims.outputs)),
        }
    }

    /// Static-gain observer; the gain is found by synthesis.
    pub fn static_gain(dims: &PlantDims) -> Self {
        Self {
            preset: Preset::StaticGain,
            nl_state: Mat::identity(dims.n, dims.n),
            nl_output: Mat::zeros(dims.n, dims.outputs),
            feed: FeedMode::Fixed(Mat::zeros(dims.targets, dims.outputs)),
        }
    }

    pub fn custom(nl_state: Mat, nl_output: Mat, feed: FeedMode) -> Self {
        Self { preset: Preset::Custom, nl_state, nl_output, feed }
    }

    pub fn check(&self, dims: &PlantDims) -> Result<()> {
        expect_shape("e1", &self.nl_state, (dims.n, dims.n))?;
        expect_shape("e2", &self.nl_output, (dims.n, dims.outputs))?;
        if let FeedMode::Fixed(f) = &self.feed {
            expect_shape("e3", f, (dims.targets, dims.outputs))?;
        }
        linalg::ensure_finite(&self.nl_state, "e1")?;
        linalg::ensure_finite(&self.nl_output, "e2")?;
        if self.preset == Preset::StaticGain && !matches!(&self.feed, FeedMode::Fixed(f) if f.amax() == 0.0) {
            return Err(Error::InvalidInput("static-gain preset requires a fixed zero e3".into()));
        }
        Ok(())
    }
}

/// A concrete filter.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterRealization {
    /// A_F (n × n).
    pub a: Mat,
    /// B_F (n × p).
    pub b: Mat,
    /// C_F (q × n).
    pub c: Mat,
    pub nl_state: Mat,
    pub nl_output: Mat,
    pub feed: Mat,
    /// Guaranteed energy-to-peak bound.
    pub mu_star: f64,
}

impl FilterRealization {
    /// The static-gain observer for a given gain `l` (n × p).
    pub fn static_gain(plant: &DescriptorPlant, l: &Mat) -> Result<Self> {
        let dims = plant.dims()?;
        expect_shape("L", l, (dims.n, dims.outputs))?;
        Ok(Self {
            a: &plant.a - l * &plant.c,
            b: l.clone(),
            c: Mat::identity(dims.targets, dims.n),
            nl_state: Mat::identity(dims.n, dims.n),
            nl_output: -l,
            feed: Mat::zeros(dims.targets, dims.outputs),
            mu_star: f64::INFINITY,
        })
    }

    pub fn check(&self, dims: &PlantDims) -> Result<()> {
        expect_shape("A_F", &self.a, (dims.n, dims.n))?;
        expect_shape("B_F", &self.b, (dims.n, dims.outputs))?;
        expect_shape("C_F", &self.c, (dims.targets, dims.n))?;
        expect_shape("e1", &self.nl_state, (dims.n, dims.n))?;
        expect_shape("e2", &self.nl_output, (dims.n, dims.outputs))?;
        expect_shape("e3", &self.feed, (dims.targets, dims.outputs))?;
        for (m, name) in [
            (&self.a, "A_F"),
            (&self.b, "B_F"),
            (&self.c, "C_F"),
            (&self.nl_state, "e1"),
            (&self.nl_output, "e2"),
            (&self.feed, "e3"),
        ] {
            linalg::ensure_finite(m, name)?;
        }
        Ok(())
    }
}

/// Outcome of one modelling assumption.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    /// Rank of E when it could be computed.
    pub rank: Option<usize>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

fn vanishes_at_origin(ast: &ExprAst, n: usize) -> core::result::Result<f64, String> {
    let x = vec![0.0; n];
    let u = vec![0.0; ast.input_dim()];
    let mut worst: f64 = 0.0;
    for &t in &[0.0, 1.0, 10.0] {
        let v = ast.eval(&x, &u, t).map_err(|e| format!("{e}"))?;
        worst = v.iter().fold(worst, |acc, c| acc.max(c.abs()));
    }
    Ok(worst)
}

/// Checks every modelling assumption; never fails, failures are in the report.
pub fn validate(plant: &DescriptorPlant) -> ValidationReport {
    let mut checks = Vec::new();
    let dims = match plant.dims() {
        Ok(d) => {
            checks.push(check("dimensions", true, format!("n = {}, p = {}, q = {}", d.n, d.outputs, d.targets)));
            d
        }
        Err(e) => {
            checks.push(check("dimensions", false, format!("{e}")));
            return ValidationReport { checks, rank: None };
        }
    };
    let mats = [
        (&plant.e, "E"),
        (&plant.a, "A"),
        (&plant.b, "B"),
        (&plant.c, "C"),
        (&plant.d, "D"),
        (&plant.unc_state, "M1"),
        (&plant.unc_output, "M2"),
        (&plant.unc_right, "N"),
        (&plant.target, "H"),
    ];
    let bad: Vec<&str> = mats.iter().filter(|(m, _)| linalg::ensure_finite(m, "").is_err()).map(|(_, n)| *n).collect();
    if !bad.is_empty() {
        checks.push(check("finite", false, format!("non-finite entries in {}", bad.join(", "))));
        return ValidationReport { checks, rank: None };
    }
    checks.push(check("finite", true, String::from("all entries finite")));
    if dims.dist == 0 {
        checks.push(check("disturbance", false, String::from("at least one disturbance channel is required")));
    }

    let rank = linalg::rank_of(&plant.e, DEFAULT_RANK_TOL).ok();
    let s = rank.unwrap_or(0);
    checks.push(check("rank", s > 0, format!("rank(E) = {s} of {}", dims.n)));

    let regular = linalg::pencil_regular(&plant.e, &plant.a).unwrap_or(false);
    checks.push(check(
        "regular",
        regular,
        if regular { String::from("det(sE - A) is not identically zero") } else { String::from("det(sE - A) vanishes identically") },
    ));
    let observable = if regular {
        linalg::observable(&plant.e, &plant.a, &plant.c, DEFAULT_RANK_TOL).unwrap_or(false)
    } else {
        false
    };
    checks.push(check(
        "observable",
        observable,
        if !regular {
            String::from("not tested: pencil is not regular")
        } else if observable {
            String::from("rank [sE - A; C] = n at every finite eigenvalue")
        } else {
            String::from("rank [sE - A; C] < n at some finite eigenvalue")
        },
    ));

    for (ast, name) in [(&plant.state_nl, "phi-origin"), (&plant.output_nl, "psi-origin")] {
        match vanishes_at_origin(ast, dims.n) {
            Ok(worst) => checks.push(check(name, worst <= 1e-12, format!("max |value at x = 0| = {worst:e}"))),
            Err(e) => checks.push(check(name, false, e)),
        }
    }
    let lip_ok = combined_gamma(plant.lip_state, plant.lip_output).is_ok();
    checks.push(check(
        "lipschitz",
        lip_ok,
        format!("gamma1 = {}, gamma2 = {}", plant.lip_state, plant.lip_output),
    ));
    ValidationReport { checks, rank }
}
