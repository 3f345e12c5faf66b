//! End-to-end filter synthesis: build, solve, certify, recover.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector, DEFAULT_RANK_TOL};
use crate::lmi::{
    apply_strict_substitution, build_problem, names, BuildOptions, Coupling, DissipationForm, LmiProblem, MarginsReport,
    PeakMode,
};
use crate::model::{validate, DescriptorPlant, FeedMode, FilterRealization, FilterStructure, Preset};
use crate::sdp::{self, SolveOptions, SolveStatus};

/// How the Lyapunov factors are parameterized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthesisMode {
    /// P_i = X_i E + E⊥ᵀ Y_i with X_i ≻ 0; every constraint is a strict LMI.
    Strict,
    /// P_i free, with EᵀP_i = P_iᵀE as equalities and EᵀP_i ⪰ 0 as extra cones.
    Sdp,
}

impl SynthesisMode {
    pub fn label(self) -> &'static str {
        match self {
            SynthesisMode::Strict => "strict-lmi",
            SynthesisMode::Sdp => "sdp",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        match s {
            "strict-lmi" | "strict" => Some(SynthesisMode::Strict),
            "sdp" => Some(SynthesisMode::Sdp),
            _ => None,
        }
    }
}

pub fn peak_label(p: PeakMode) -> &'static str {
    match p {
        PeakMode::Strict => "strict",
        PeakMode::Nonstrict => "nonstrict",
        PeakMode::Off => "off",
    }
}

pub fn peak_from_label(s: &str) -> Option<PeakMode> {
    match s {
        "strict" => Some(PeakMode::Strict),
        "nonstrict" => Some(PeakMode::Nonstrict),
        "off" => Some(PeakMode::Off),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisOptions {
    pub mode: SynthesisMode,
    /// Rungs tried in order until one is solved and certified.
    pub ladder: Vec<PeakMode>,
    pub form: DissipationForm,
    pub coupling: Coupling,
    /// Weight λ on α in the objective ζ + λα.
    pub weight: f64,
    pub strict_shift: f64,
    pub solver: SolveOptions,
    /// Left null-space basis to use instead of the default one.
    pub eperp: Option<Mat>,
    /// Replace the solver's G1 by a well-conditioned point of the same feasible slice.
    pub recenter: bool,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            mode: SynthesisMode::Strict,
            ladder: vec![PeakMode::Strict, PeakMode::Nonstrict, PeakMode::Off],
            form: DissipationForm::Full,
            coupling: Coupling::Plain,
            weight: 0.0,
            strict_shift: 1e-9,
            solver: SolveOptions::default(),
            eperp: None,
            recenter: true,
        }
    }
}

impl SynthesisOptions {
    fn build_options(&self, peak: PeakMode) -> BuildOptions {
        BuildOptions { peak, form: self.form, coupling: self.coupling, weight: self.weight, strict_shift: self.strict_shift }
    }
}

/// What happened on one rung of the ladder.
#[derive(Debug, Clone, PartialEq)]
pub struct RungOutcome {
    pub peak: PeakMode,
    pub status: SolveStatus,
    pub objective: f64,
    pub certified: bool,
    pub iterations: usize,
}

/// Solved decision variables together with the checks they pass.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisCertificate {
    pub mode: SynthesisMode,
    pub peak: PeakMode,
    pub form: DissipationForm,
    pub coupling: Coupling,
    pub strict_shift: f64,
    pub weight: f64,
    /// Descriptor matrix of the plant, kept for the Lyapunov function.
    pub e: Mat,
    /// Null-space basis used by the strict parameterization, when it was not the default one.
    pub eperp: Option<Mat>,
    pub p1: Mat,
    pub p2: Mat,
    /// Full-size positive definite weights with P_i − X_i E ∈ range(E⊥ᵀ) (strict mode only).
    pub x1: Option<Mat>,
    pub x2: Option<Mat>,
    pub y1: Option<Mat>,
    pub y2: Option<Mat>,
    pub g1: Mat,
    pub g2: Mat,
    pub epsilon: f64,
    pub alpha: Option<f64>,
    pub zeta: f64,
    /// Raw decision variables of the solved problem, by name.
    pub values: Vec<(String, Mat)>,
    pub margins: MarginsReport,
    pub rungs: Vec<RungOutcome>,
}

impl SynthesisCertificate {
    pub fn mu_star(&self) -> f64 {
        Float::sqrt(self.zeta.max(0.0))
    }

    /// True when the peak bound is certified by the LMIs rather than only by the dissipation inequality.
    pub fn peak_certified(&self) -> bool {
        self.peak != PeakMode::Off
    }

    pub fn value(&self, name: &str) -> Option<&Mat> {
        self.values.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }
}

fn scalar(values: &[(String, Mat)], name: &str) -> Option<f64> {
    values.iter().find(|(n, _)| n == name).map(|(_, m)| m[(0, 0)])
}

fn matrix(values: &[(String, Mat)], name: &str) -> Result<Mat> {
    values
        .iter()
        .find(|(n, _)| n == name)
        .map(|(_, m)| m.clone())
        .ok_or_else(|| Error::Internal(format!("solved problem has no `{name}`")))
}

/// The problem for one rung, in the requested parameterization.
pub fn rung_problem(plant: &DescriptorPlant, structure: &FilterStructure, opts: &SynthesisOptions, peak: PeakMode) -> Result<LmiProblem> {
    let prob = build_problem(plant, structure, &opts.build_options(peak))?;
    match opts.mode {
        SynthesisMode::Sdp => Ok(prob),
        SynthesisMode::Strict => {
            let eperp = match &opts.eperp {
                Some(m) => m.clone(),
                None => linalg::orthogonal_complement(&plant.e, DEFAULT_RANK_TOL)?,
            };
            apply_strict_substitution(&prob, &plant.e, &eperp, opts.strict_shift)
        }
    }
}

/// Runs the ladder and returns the first certified filter.
pub fn synthesize(
    plant: &DescriptorPlant,
    structure: &FilterStructure,
    opts: &SynthesisOptions,
) -> Result<(FilterRealization, SynthesisCertificate)> {
    let report = validate(plant);
    if !report.passed() {
        let why: Vec<String> = report.failures().map(|c| format!("{}: {}", c.name, c.detail)).collect();
        return Err(Error::Precondition(why.join("; ")));
    }
    if opts.ladder.is_empty() {
        return Err(Error::InvalidInput(String::from("empty ladder")));
    }
    let mut rungs = Vec::new();
    for &peak in &opts.ladder {
        let prob = rung_problem(plant, structure, opts, peak)?;
        let sol = sdp::solve(&sdp::lower(&prob), &opts.solver)?;
        let mut outcome = RungOutcome {
            peak,
            status: sol.status,
            objective: sol.objective,
            certified: false,
            iterations: sol.iterations,
        };
        if sol.status != SolveStatus::Optimal {
            rungs.push(outcome);
            continue;
        }
        let mut x = sol.x.clone();
        let mut margins = sdp::certify(&prob, &sol)?;
        if margins.all_passed() && opts.recenter && structure.preset != Preset::StaticGain {
            if let Some((y, m)) = recenter(&prob, &x, plant.lipschitz()?)? {
                x = y;
                margins = m;
            }
        }
        outcome.certified = margins.all_passed();
        rungs.push(outcome);
        if !margins.all_passed() {
            continue;
        }
        let cert = certificate(&prob, &x, margins, plant, opts, peak, rungs)?;
        let filter = recover(plant, structure, &cert)?;
        return Ok((filter, cert));
    }
    Err(Error::SynthesisInfeasible(rungs))
}

/// Re-places G1 at ½[B(R + δI)⁻¹Bᵀ − (γ² + 2δ)I], where B and R are the
/// off-diagonal and trailing blocks of the dissipation matrix. With this choice the
/// Schur complement of R + δI equals −δI, so the matrix stays below −δI.
fn recenter(prob: &LmiProblem, x: &[f64], gamma: f64) -> Result<Option<(Vec<f64>, MarginsReport)>> {
    let (Some(g1), Some(c)) = (prob.var(names::G1), prob.constraint(names::DISSIPATION)) else {
        return Ok(None);
    };
    let n = g1.kind.shape().0;
    let m = c.expr.evaluate(x)?;
    let side = m.nrows();
    let b = m.view((0, n), (n, side - n)).into_owned();
    let r = m.view((n, n), (side - n, side - n)).into_owned();
    let top = linalg::max_sym_eigenvalue(&r);
    let delta = -0.5 * top;
    if !(delta > c.shift) {
        return Ok(None);
    }
    let shifted = &r + Mat::identity(side - n, side - n) * delta;
    let Some(inv) = linalg::inverse(&shifted) else { return Ok(None) };
    let target = linalg::sym_part(&(&b * inv * b.transpose())) - Mat::identity(n, n) * (gamma * gamma + 2.0 * delta);
    let mut y = x.to_vec();
    for i in 0..n {
        for j in 0..n {
            y[g1.index_of(i, j)] = 0.5 * target[(i, j)];
        }
    }
    let margins = prob.evaluate_at(&y)?;
    Ok(margins.all_passed().then_some((y, margins)))
}

fn certificate(
    prob: &LmiProblem,
    x: &[f64],
    margins: MarginsReport,
    plant: &DescriptorPlant,
    opts: &SynthesisOptions,
    peak: PeakMode,
    rungs: Vec<RungOutcome>,
) -> Result<SynthesisCertificate> {
    let values = prob.named_values(x)?;
    let derived = |name: &str| -> Result<Mat> {
        prob.derived(name)
            .ok_or_else(|| Error::Internal(format!("problem has no derived `{name}`")))?
            .evaluate(x)
    };
    let strict = opts.mode == SynthesisMode::Strict;
    let opt_derived = |name: &str| -> Result<Option<Mat>> { if strict { derived(name).map(Some) } else { Ok(None) } };
    let opt_value = |name: &str| -> Result<Option<Mat>> { if strict { matrix(&values, name).map(Some) } else { Ok(None) } };
    Ok(SynthesisCertificate {
        mode: opts.mode,
        peak,
        form: opts.form,
        coupling: opts.coupling,
        strict_shift: opts.strict_shift,
        weight: opts.weight,
        e: plant.e.clone(),
        eperp: opts.eperp.clone(),
        p1: derived(names::P1)?,
        p2: derived(names::P2)?,
        x1: opt_derived(names::X1)?,
        x2: opt_derived(names::X2)?,
        y1: opt_value(names::Y1)?,
        y2: opt_value(names::Y2)?,
        g1: matrix(&values, names::G1)?,
        g2: matrix(&values, names::G2)?,
        epsilon: scalar(&values, names::EPS).unwrap_or(0.0),
        alpha: scalar(&values, names::ALPHA),
        zeta: scalar(&values, names::ZETA).ok_or_else(|| Error::Internal(String::from("no ζ")))?,
        values,
        margins,
        rungs,
    })
}

/// A_F = P1⁻¹G1 and B_F = P1⁻¹G2.
pub fn recover_filter(cert: &SynthesisCertificate) -> Result<(Mat, Mat)> {
    let n = cert.p1.nrows();
    let gap = linalg::spectral_norm(&(Mat::identity(n, n) - &cert.p1));
    if !(gap < 1.0) {
        return Err(Error::Internal(format!("‖I − P1‖ = {gap} is not below 1")));
    }
    let lu = cert.p1.clone().lu();
    let af = lu.solve(&cert.g1).ok_or_else(|| Error::Internal(String::from("P1 is singular")))?;
    let bf = lu.solve(&cert.g2).ok_or_else(|| Error::Internal(String::from("P1 is singular")))?;
    Ok((af, bf))
}

fn recover(plant: &DescriptorPlant, structure: &FilterStructure, cert: &SynthesisCertificate) -> Result<FilterRealization> {
    let dims = plant.dims()?;
    let (af, bf) = recover_filter(cert)?;
    let mut filter = if structure.preset == Preset::StaticGain {
        FilterRealization::static_gain(plant, &bf)?
    } else {
        let c = match cert.value(names::CF) {
            Some(cf) => cf.clone(),
            None => plant.target.clone(),
        };
        let feed = match (&structure.feed, cert.value(names::E3)) {
            (_, Some(e3)) => e3.clone(),
            (FeedMode::Fixed(m), None) => m.clone(),
            (FeedMode::Decision, None) => Mat::zeros(dims.targets, dims.outputs),
        };
        FilterRealization {
            a: af,
            b: bf,
            c,
            nl_state: structure.nl_state.clone(),
            nl_output: structure.nl_output.clone(),
            feed,
            mu_star: 0.0,
        }
    };
    filter.mu_star = cert.mu_star();
    filter.check(&dims)?;
    Ok(filter)
}

/// V(ξ) = ξᵀ diag(E, E)ᵀ diag(P1, P2) ξ for ξ = (x_F, x).
pub fn lyapunov_value(cert: &SynthesisCertificate, xi: &[f64]) -> Result<f64> {
    let n = cert.e.nrows();
    if xi.len() != 2 * n {
        return Err(Error::DimensionMismatch(format!("state has length {}, expected {}", xi.len(), 2 * n)));
    }
    let xf = Vector::from_column_slice(&xi[..n]);
    let x = Vector::from_column_slice(&xi[n..]);
    let et = cert.e.transpose();
    Ok(xf.dot(&(&et * &cert.p1 * &xf)) + x.dot(&(&et * &cert.p2 * &x)))
}

/// Whether the peak-output constraint can hold at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Obstruction {
    None,
    /// Fails for every α > 0 and every output matrix.
    Unconditional,
    /// Fails only if the output matrix has a component along ker E.
    Conditional,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Xi2Diagnosis {
    pub rank: usize,
    pub n: usize,
    pub obstruction: Obstruction,
    /// Unit vector v with E v = 0, so vᵀEᵀP v = 0 for every P.
    pub witness: Option<Vector>,
    /// Unit vector u with Eᵀu = 0 (a row of E⊥).
    pub left_witness: Option<Vector>,
    /// Whether every row of H lies in the row space of E (the output matrix can then avoid ker E).
    pub target_in_row_space: bool,
    pub message: String,
}

/// Explains why the peak-output constraint is infeasible for singular E.
///
/// Eliminating the −⅓I blocks leaves 3α²γ²I + 3C_FᵀC_F − EᵀP1 ≺ 0. Along any
/// v ∈ ker E the last term vanishes, leaving 3α²γ²‖v‖² + 3‖C_F v‖² < 0.
pub fn diagnose_xi2(plant: &DescriptorPlant, gamma: f64) -> Result<Xi2Diagnosis> {
    let n = plant.e.nrows();
    let rank = linalg::rank_of(&plant.e, DEFAULT_RANK_TOL)?;
    let kernel = linalg::right_null_space(&plant.e, DEFAULT_RANK_TOL)?;
    let hk = &plant.target * &kernel;
    let target_in_row_space = kernel.ncols() == 0 || hk.amax() <= 1e-10 * plant.target.amax().max(1.0);
    if rank == n {
        return Ok(Xi2Diagnosis {
            rank,
            n,
            obstruction: Obstruction::None,
            witness: None,
            left_witness: None,
            target_in_row_space,
            message: String::from("E is nonsingular: no structural obstruction"),
        });
    }
    let witness: Vector = kernel.column(0).into_owned();
    let left_witness: Vector = linalg::orthogonal_complement(&plant.e, DEFAULT_RANK_TOL)?.row(0).transpose();
    let (obstruction, message) = if gamma > 0.0 {
        (
            Obstruction::Unconditional,
            format!(
                "E has rank {rank} < {n}: along v ∈ ker E the reduced condition reads 3α²γ²‖v‖² + 3‖C_F v‖² < 0, \
                 impossible for γ = {gamma} and any α > 0"
            ),
        )
    } else {
        (
            Obstruction::Conditional,
            format!(
                "E has rank {rank} < {n} and γ = 0: the condition fails exactly when C_F has a component along ker E \
                 (H rows {} the row space of E)",
                if target_in_row_space { "lie in" } else { "leave" }
            ),
        )
    };
    Ok(Xi2Diagnosis { rank, n, obstruction, witness: Some(witness), left_witness: Some(left_witness), target_in_row_space, message })
}

/// Builds and solves a single rung without certification or recovery.
pub fn solve_rung(
    plant: &DescriptorPlant,
    structure: &FilterStructure,
    opts: &SynthesisOptions,
    peak: PeakMode,
) -> Result<(LmiProblem, sdp::Solution)> {
    let prob = rung_problem(plant, structure, opts, peak)?;
    let sol = sdp::solve(&sdp::lower(&prob), &opts.solver)?;
    Ok((prob, sol))
}

/// Re-evaluates a certificate's decision variables against a freshly built problem.
pub fn recertify(plant: &DescriptorPlant, structure: &FilterStructure, cert: &SynthesisCertificate) -> Result<MarginsReport> {
    let opts = SynthesisOptions {
        mode: cert.mode,
        form: cert.form,
        coupling: cert.coupling,
        weight: cert.weight,
        strict_shift: cert.strict_shift,
        eperp: cert.eperp.clone(),
        ..SynthesisOptions::default()
    };
    let prob = rung_problem(plant, structure, &opts, cert.peak)?;
    let named: BTreeMap<String, Mat> = cert.values.iter().cloned().collect();
    let x = prob.assignment_from_named(&named)?;
    prob.evaluate_at(&x)
}
