//! Fixed-step implicit Euler simulation of the plant and filter descriptor systems.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use crate::error::{Error, Result};
use crate::expr::ExprAst;
use crate::linalg::{self, Mat, Vector, DEFAULT_RANK_TOL};
use crate::model::{DescriptorPlant, FilterRealization};

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub t_end: f64,
    pub dt: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// w(t), one component per disturbance channel, over `t` only.
    pub disturbance: ExprAst,
    /// u(t), one component per plant input, over `t` only.
    pub input: Option<ExprAst>,
    /// F(t) entries in row-major order (k·l components), over `t` only.
    pub uncertainty: Option<ExprAst>,
}

impl SimConfig {
    /// Defaults: dt = 1e−3, Newton tolerance 1e−10 with at most 50 iterations.
    pub fn new(t_end: f64, disturbance: ExprAst) -> Self {
        Self { t_end, dt: 1e-3, newton_tol: 1e-10, newton_max_iter: 50, disturbance, input: None, uncertainty: None }
    }

    pub fn steps(&self) -> usize {
        Float::round(self.t_end / self.dt) as usize
    }

    fn check(&self, plant: &DescriptorPlant) -> Result<()> {
        let dims = plant.dims()?;
        if !(self.dt > 0.0) || !(self.t_end >= self.dt) || !self.t_end.is_finite() {
            return Err(Error::InvalidInput(format!("need dt > 0 and t_end ≥ dt, got dt = {}, t_end = {}", self.dt, self.t_end)));
        }
        if !(self.newton_tol > 0.0) || self.newton_max_iter == 0 {
            return Err(Error::InvalidInput(String::from("Newton tolerance and iteration limit must be positive")));
        }
        if self.disturbance.len() != dims.dist {
            return Err(Error::DimensionMismatch(format!(
                "w has {} components, plant has {} disturbance channels",
                self.disturbance.len(),
                dims.dist
            )));
        }
        if let Some(u) = &self.input {
            if u.len() != dims.inputs {
                return Err(Error::DimensionMismatch(format!("u has {} components, plant has {} inputs", u.len(), dims.inputs)));
            }
        } else if dims.inputs > 0 {
            return Err(Error::InvalidInput(format!("plant has {} inputs but no u(t) is given", dims.inputs)));
        }
        if let Some(f) = &self.uncertainty {
            if f.len() != dims.unc_cols * dims.unc_rows {
                return Err(Error::DimensionMismatch(format!(
                    "F has {} entries, expected {}x{}",
                    f.len(),
                    dims.unc_cols,
                    dims.unc_rows
                )));
            }
        }
        for e in [Some(&self.disturbance), self.input.as_ref(), self.uncertainty.as_ref()].into_iter().flatten() {
            if e.state_dim() != 0 || e.input_dim() != 0 {
                return Err(Error::InvalidInput(format!("`{}` may depend on t only", e.source())));
            }
        }
        Ok(())
    }
}

/// Signals sampled on the time grid.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimTrace {
    pub t: Vec<f64>,
    pub x: Vec<Vector>,
    pub xf: Vec<Vector>,
    pub z: Vec<Vector>,
    pub zf: Vec<Vector>,
    pub e: Vec<Vector>,
    pub w: Vec<Vector>,
    /// Largest scaled Newton residual of the plant and filter steps (0 at t = 0).
    pub newton_residual: Vec<f64>,
    /// Largest |E⊥ · right-hand side| of the plant and filter at each stored point.
    pub algebraic_residual: Vec<f64>,
}

impl SimTrace {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalNorms {
    pub e_inf: f64,
    pub w_l2: f64,
    /// e_inf / w_l2; ∞ for zero w with nonzero e, 0 when both vanish.
    pub ratio: f64,
}

/// Peak error norm, disturbance energy (trapezoidal rule) and their ratio.
pub fn norms(trace: &SimTrace) -> Result<SignalNorms> {
    if trace.is_empty() {
        return Err(Error::InvalidInput(String::from("empty trace")));
    }
    let e_inf = trace.e.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let mut energy = 0.0;
    for i in 1..trace.len() {
        let h = trace.t[i] - trace.t[i - 1];
        energy += 0.5 * h * (trace.w[i].norm_squared() + trace.w[i - 1].norm_squared());
    }
    let w_l2 = energy.sqrt();
    let ratio = if w_l2 > 0.0 {
        e_inf / w_l2
    } else if e_inf > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    Ok(SignalNorms { e_inf, w_l2, ratio })
}

fn eval_t(e: &ExprAst, t: f64) -> Result<Vector> {
    Ok(Vector::from_vec(e.eval(&[], &[], t)?))
}

fn input_at(cfg: &SimConfig, t: f64) -> Result<Vec<f64>> {
    match &cfg.input {
        Some(u) => Ok(u.eval(&[], &[], t)?),
        None => Ok(Vec::new()),
    }
}

/// F(t) as a k × l matrix, checked against ‖F‖ ≤ 1.
fn uncertainty_at(cfg: &SimConfig, k: usize, l: usize, t: f64) -> Result<Option<Mat>> {
    let Some(f) = &cfg.uncertainty else { return Ok(None) };
    let v = f.eval(&[], &[], t)?;
    let m = Mat::from_row_slice(k, l, &v);
    let nrm = linalg::spectral_norm(&m);
    if nrm > 1.0 + 1e-12 {
        return Err(Error::InvalidInput(format!("‖F({t})‖ = {nrm} exceeds 1")));
    }
    Ok(Some(m))
}

/// Right-hand side f(x) of E ẋ = f(x) and its Jacobian.
type Rhs<'a> = dyn Fn(&[f64]) -> Result<(Vector, Mat)> + 'a;

fn plant_rhs<'a>(plant: &'a DescriptorPlant, delta: Option<&'a Mat>, w: &'a Vector, u: &'a [f64], t: f64) -> impl Fn(&[f64]) -> Result<(Vector, Mat)> + 'a {
    move |x: &[f64]| {
        let xv = Vector::from_column_slice(x);
        let mut a = plant.a.clone();
        if let Some(d) = delta {
            a += d;
        }
        let phi = Vector::from_vec(plant.state_nl.eval(x, u, t)?);
        let f = &a * &xv + phi + &plant.b * w;
        let j = a + plant.state_nl.jacobian_x(x, u, t)?;
        Ok((f, j))
    }
}

/// y = (C + M2 F N) x + Ψ(x, u) + D w.
fn measurement(plant: &DescriptorPlant, f: Option<&Mat>, x: &Vector, w: &Vector, u: &[f64], t: f64) -> Result<Vector> {
    let mut c = plant.c.clone();
    if let Some(f) = f {
        c += &plant.unc_output * f * &plant.unc_right;
    }
    Ok(&c * x + Vector::from_vec(plant.output_nl.eval(x.as_slice(), u, t)?) + &plant.d * w)
}

fn filter_rhs<'a>(
    plant: &'a DescriptorPlant,
    filter: &'a FilterRealization,
    y: &'a Vector,
    u: &'a [f64],
    t: f64,
) -> impl Fn(&[f64]) -> Result<(Vector, Mat)> + 'a {
    move |x: &[f64]| {
        let xv = Vector::from_column_slice(x);
        let phi = Vector::from_vec(plant.state_nl.eval(x, u, t)?);
        let psi = Vector::from_vec(plant.output_nl.eval(x, u, t)?);
        let f = &filter.a * &xv + &filter.b * y + &filter.nl_state * phi + &filter.nl_output * psi;
        let j = &filter.a
            + &filter.nl_state * plant.state_nl.jacobian_x(x, u, t)?
            + &filter.nl_output * plant.output_nl.jacobian_x(x, u, t)?;
        Ok((f, j))
    }
}

fn algebraic_residual(eperp: &Mat, f: &Vector) -> f64 {
    if eperp.nrows() == 0 {
        0.0
    } else {
        (eperp * f).amax()
    }
}

/// Which directions consistent initialization may move the guess along.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InitMotion {
    /// Any direction (minimum-norm corrections in the full space).
    Free,
    /// Every coordinate except the listed ones.
    Hold(Vec<usize>),
    /// Only along ker E, so the differential part E·x of the guess is kept.
    KeepDifferential,
}

fn motion_basis(e: &Mat, motion: &InitMotion) -> Result<Mat> {
    let n = e.nrows();
    match motion {
        InitMotion::Free => Ok(Mat::identity(n, n)),
        InitMotion::Hold(hold) => {
            if hold.iter().any(|&i| i >= n) {
                return Err(Error::InvalidInput(String::from("held coordinate out of range")));
            }
            let free: Vec<usize> = (0..n).filter(|i| !hold.contains(i)).collect();
            Ok(Mat::from_fn(n, free.len(), |r, c| if r == free[c] { 1.0 } else { 0.0 }))
        }
        InitMotion::KeepDifferential => linalg::right_null_space(e, DEFAULT_RANK_TOL),
    }
}

/// A consistent initial state and how it was found.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsistentPoint {
    pub x: Vector,
    /// Accepted Newton steps.
    pub iterations: usize,
    /// Final ‖E⊥ f(x)‖∞.
    pub residual: f64,
}

/// Damped minimum-norm Newton on E⊥ f(x) = 0 within the span of the motion basis.
fn solve_consistent(e: &Mat, rhs: &Rhs<'_>, guess: &[f64], tol: f64, motion: &InitMotion, max_iter: usize) -> Result<ConsistentPoint> {
    let n = e.nrows();
    if guess.len() != n {
        return Err(Error::DimensionMismatch(format!("guess has length {}, expected {n}", guess.len())));
    }
    let basis = motion_basis(e, motion)?;
    let eperp = linalg::orthogonal_complement(e, DEFAULT_RANK_TOL)?;
    let mut x = Vector::from_column_slice(guess);
    if eperp.nrows() == 0 {
        return Ok(ConsistentPoint { x, iterations: 0, residual: 0.0 });
    }
    let (f, j) = rhs(x.as_slice())?;
    let mut r = &eperp * f;
    let mut jr = &eperp * j;
    for it in 0..max_iter {
        if r.amax() <= tol {
            return Ok(ConsistentPoint { x, iterations: it, residual: r.amax() });
        }
        let jb = &jr * &basis;
        let cutoff = 1e-14 * linalg::spectral_norm(&jb).max(f64::MIN_POSITIVE);
        let coef = linalg::svd(&jb).solve(&(-&r), cutoff);
        let step = &basis * coef;
        let mut lambda = 1.0;
        let base = r.norm();
        let mut accepted = false;
        for _ in 0..30 {
            let cand = &x + &step * lambda;
            if let Ok((f2, j2)) = rhs(cand.as_slice()) {
                let r2 = &eperp * f2;
                if r2.norm() < base || r2.amax() <= tol {
                    x = cand;
                    r = r2;
                    jr = &eperp * j2;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if r.amax() <= tol {
        Ok(ConsistentPoint { x, iterations: max_iter, residual: r.amax() })
    } else {
        Err(Error::NoConsistentPoint { residual: r.amax() })
    }
}

/// Consistent plant state: ‖E⊥(A x0 + Φ(x0, u0) + B w0)‖∞ ≤ tol, by Newton from `guess`.
pub fn consistent_init(plant: &DescriptorPlant, guess: &[f64], w0: &[f64], u0: &[f64], tol: f64) -> Result<Vector> {
    Ok(consistent_init_with(plant, guess, w0, u0, None, tol, &InitMotion::Free)?.x)
}

/// As [`consistent_init`], with an uncertainty value F(0) and a restricted motion.
pub fn consistent_init_with(
    plant: &DescriptorPlant,
    guess: &[f64],
    w0: &[f64],
    u0: &[f64],
    f0: Option<&Mat>,
    tol: f64,
    motion: &InitMotion,
) -> Result<ConsistentPoint> {
    let dims = plant.dims()?;
    if w0.len() != dims.dist || u0.len() != dims.inputs {
        return Err(Error::DimensionMismatch(String::from("w0 or u0 has the wrong length")));
    }
    let w = Vector::from_column_slice(w0);
    let delta = f0.map(|f| &plant.unc_state * f * &plant.unc_right);
    let rhs = plant_rhs(plant, delta.as_ref(), &w, u0, 0.0);
    solve_consistent(&plant.e, &rhs, guess, tol, motion, 50)
}

/// Consistent filter state for the measurement `y0`.
pub fn consistent_filter_init(
    plant: &DescriptorPlant,
    filter: &FilterRealization,
    guess: &[f64],
    y0: &[f64],
    u0: &[f64],
    tol: f64,
    motion: &InitMotion,
) -> Result<ConsistentPoint> {
    let y = Vector::from_column_slice(y0);
    let rhs = filter_rhs(plant, filter, &y, u0, 0.0);
    solve_consistent(&plant.e, &rhs, guess, tol, motion, 50)
}

/// One implicit Euler step: E(x₊ − x) = dt·f(x₊), by Newton from x.
/// Returns the new state and the final residual scaled by 1 + ‖x₊‖∞.
///
/// After the tolerance is met one more Newton step is taken when it lowers the residual:
/// the algebraic part of the residual is divided by dt, so the extra accuracy is not wasted.
fn euler_step(e: &Mat, rhs: &Rhs<'_>, x: &Vector, dt: f64, tol: f64, max_iter: usize) -> core::result::Result<(Vector, f64), f64> {
    let residual = |xn: &Vector| -> Option<(Vector, Mat, f64)> {
        let (f, j) = rhs(xn.as_slice()).ok()?;
        let g = e * (xn - x) - &f * dt;
        let scaled = g.amax() / (1.0 + xn.amax());
        Some((g, e - j * dt, scaled))
    };
    let newton = |xn: &Vector, g: &Vector, jac: Mat| -> Option<Vector> {
        let d = jac.lu().solve(&(-g))?;
        d.iter().all(|v| v.is_finite()).then(|| xn + d)
    };
    let mut xn = x.clone();
    let mut last = f64::INFINITY;
    for _ in 0..=max_iter {
        let Some((g, jac, scaled)) = residual(&xn) else { return Err(last) };
        last = scaled;
        if scaled <= tol {
            if let Some(polished) = newton(&xn, &g, jac) {
                if let Some((_, _, s2)) = residual(&polished) {
                    if s2 < scaled {
                        return Ok((polished, s2));
                    }
                }
            }
            return Ok((xn, scaled));
        }
        let Some(next) = newton(&xn, &g, jac) else { return Err(last) };
        xn = next;
    }
    Err(last)
}

/// Simulates plant and filter from consistent initial states.
pub fn simulate(
    plant: &DescriptorPlant,
    filter: &FilterRealization,
    cfg: &SimConfig,
    x0: &[f64],
    xf0: &[f64],
) -> Result<SimTrace> {
    cfg.check(plant)?;
    let dims = plant.dims()?;
    filter.check(&dims)?;
    if x0.len() != dims.n || xf0.len() != dims.n {
        return Err(Error::DimensionMismatch(format!("initial states must have length {}", dims.n)));
    }
    let eperp = linalg::orthogonal_complement(&plant.e, DEFAULT_RANK_TOL)?;
    let (k, l) = (dims.unc_cols, dims.unc_rows);
    let steps = cfg.steps();
    let mut tr = SimTrace::default();
    let mut x = Vector::from_column_slice(x0);
    let mut xf = Vector::from_column_slice(xf0);

    let record = |tr: &mut SimTrace, t: f64, x: &Vector, xf: &Vector, newton: f64| -> Result<()> {
        let w = eval_t(&cfg.disturbance, t)?;
        let u = input_at(cfg, t)?;
        let f = uncertainty_at(cfg, k, l, t)?;
        let delta = f.as_ref().map(|f| &plant.unc_state * f * &plant.unc_right);
        let y = measurement(plant, f.as_ref(), x, &w, &u, t)?;
        let (fp, _) = plant_rhs(plant, delta.as_ref(), &w, &u, t)(x.as_slice())?;
        let (ff, _) = filter_rhs(plant, filter, &y, &u, t)(xf.as_slice())?;
        let z = &plant.target * x;
        let psi_f = Vector::from_vec(plant.output_nl.eval(xf.as_slice(), &u, t)?);
        let zf = &filter.c * xf + &filter.feed * psi_f;
        tr.t.push(t);
        tr.x.push(x.clone());
        tr.xf.push(xf.clone());
        tr.e.push(&z - &zf);
        tr.z.push(z);
        tr.zf.push(zf);
        tr.w.push(w);
        tr.newton_residual.push(newton);
        tr.algebraic_residual.push(algebraic_residual(&eperp, &fp).max(algebraic_residual(&eperp, &ff)));
        Ok(())
    };

    record(&mut tr, 0.0, &x, &xf, 0.0)?;
    for i in 1..=steps {
        let t = i as f64 * cfg.dt;
        let w = eval_t(&cfg.disturbance, t)?;
        let u = input_at(cfg, t)?;
        let f = uncertainty_at(cfg, k, l, t)?;
        let delta = f.as_ref().map(|f| &plant.unc_state * f * &plant.unc_right);
        let rhs = plant_rhs(plant, delta.as_ref(), &w, &u, t);
        let (xn, rp) = match euler_step(&plant.e, &rhs, &x, cfg.dt, cfg.newton_tol, cfg.newton_max_iter) {
            Ok(v) => v,
            Err(residual) => return Err(Error::SimulationAborted { time: t, residual, partial: Box::new(tr) }),
        };
        let y = measurement(plant, f.as_ref(), &xn, &w, &u, t)?;
        let rhs_f = filter_rhs(plant, filter, &y, &u, t);
        let (xfn, rf) = match euler_step(&plant.e, &rhs_f, &xf, cfg.dt, cfg.newton_tol, cfg.newton_max_iter) {
            Ok(v) => v,
            Err(residual) => return Err(Error::SimulationAborted { time: t, residual, partial: Box::new(tr) }),
        };
        x = xn;
        xf = xfn;
        record(&mut tr, t, &x, &xf, rp.max(rf))?;
    }
    Ok(tr)
}

/// Initial states for a scenario: the plant from `x_guess` with w(0), u(0), F(0), then
/// the filter from `xf_guess` with the resulting y(0). Both move only as `motion` allows.
pub fn scenario_init(
    plant: &DescriptorPlant,
    filter: &FilterRealization,
    cfg: &SimConfig,
    x_guess: &[f64],
    xf_guess: &[f64],
    tol: f64,
    motion: &InitMotion,
) -> Result<(Vector, Vector)> {
    cfg.check(plant)?;
    let dims = plant.dims()?;
    let w0 = eval_t(&cfg.disturbance, 0.0)?;
    let u0 = input_at(cfg, 0.0)?;
    let f0 = uncertainty_at(cfg, dims.unc_cols, dims.unc_rows, 0.0)?;
    let x0 = consistent_init_with(plant, x_guess, w0.as_slice(), &u0, f0.as_ref(), tol, motion)?.x;
    let y0 = measurement(plant, f0.as_ref(), &x0, &w0, &u0, 0.0)?;
    let xf0 = consistent_filter_init(plant, filter, xf_guess, y0.as_slice(), &u0, tol, motion)?.x;
    Ok((x0, xf0))
}

/// One named disturbance or uncertainty scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    /// Scalar w(t), applied to every disturbance channel.
    pub disturbance: String,
    /// Scalar f(t); the uncertainty is f(t) times the k × l identity pattern.
    pub uncertainty: Option<String>,
}

/// Five L2 disturbances, the zero disturbance, and two uncertainty realizations.
pub fn standard_battery() -> Vec<Scenario> {
    let d = |name: &str, w: &str| Scenario { name: name.into(), disturbance: w.into(), uncertainty: None };
    let mut out = vec![
        d("decaying-cosine", "30*exp(-t/3)*cos(7*t)"),
        d("exponential", "10*exp(-t)"),
        d("damped-sine", "5*sin(2*t)*exp(-t/4)"),
        d("gaussian-pulse", "8*exp(-(t-5)^2)"),
        d("tanh-burst", "3*tanh(t)*exp(-t/6)*sin(t)"),
        d("zero", "0"),
    ];
    for (name, f) in [("uncertain-identity", "1"), ("uncertain-sine", "sin(t)")] {
        out.push(Scenario { name: name.into(), disturbance: "30*exp(-t/3)*cos(7*t)".into(), uncertainty: Some(f.into()) });
    }
    out
}

impl Scenario {
    /// Simulation settings for this scenario on `plant`.
    pub fn config(&self, plant: &DescriptorPlant, t_end: f64, dt: f64) -> Result<SimConfig> {
        let dims = plant.dims()?;
        let w = vec![self.disturbance.as_str(); dims.dist].join("; ");
        let mut cfg = SimConfig::new(t_end, ExprAst::parse(&w, 0, 0)?);
        cfg.dt = dt;
        if dims.inputs > 0 {
            cfg.input = Some(ExprAst::zeros(dims.inputs, 0, 0));
        }
        if let Some(f) = &self.uncertainty {
            let (k, l) = (dims.unc_cols, dims.unc_rows);
            let entries: Vec<String> = (0..k * l)
                .map(|i| if i / l == i % l { format!("({f})") } else { String::from("0") })
                .collect();
            if k * l > 0 {
                cfg.uncertainty = Some(ExprAst::parse(&entries.join("; "), 0, 0)?);
            }
        }
        Ok(cfg)
    }
}
