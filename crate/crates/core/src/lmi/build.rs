//! Constraint system for robust energy-to-peak filter synthesis.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::expr::{AffineImage, DecisionVar, MatExpr, VarKind};
use super::problem::{BlockInfo, ConstraintRole, LmiProblem, Objective, Sense};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat, DEFAULT_RANK_TOL};
use crate::model::{DescriptorPlant, FeedMode, FilterStructure, Preset};

/// Treatment of the peak-output constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeakMode {
    Strict,
    Nonstrict,
    /// Omitted, together with the feedthrough bound and its multiplier.
    Off,
}

/// Layout of the dissipation inequality.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DissipationForm {
    /// Four block columns including the disturbance column and the −I block for the nonlinearity.
    Full,
    /// Three block columns, −ζI paired with the nonlinearity column, no disturbance column.
    Compact,
}

/// How the Lyapunov factors enter the off-diagonal blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coupling {
    /// P appears as written (P·S1, P2·M1, ...); diagonal blocks are symmetrized.
    Plain,
    /// Pᵀ appears in its place, the exact form of the generalized Lyapunov derivative.
    Transposed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildOptions {
    pub peak: PeakMode,
    pub form: DissipationForm,
    pub coupling: Coupling,
    /// Weight on the output bound multiplier in the objective.
    pub weight: f64,
    /// Strictness shift δ, scaled by each constraint's constant magnitude.
    pub strict_shift: f64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            peak: PeakMode::Strict,
            form: DissipationForm::Full,
            coupling: Coupling::Plain,
            weight: 0.0,
            strict_shift: 1e-9,
        }
    }
}

/// Variable labels.
pub mod names {
    pub const ZETA: &str = "zeta";
    pub const EPS: &str = "eps";
    pub const ALPHA: &str = "alpha";
    pub const P1: &str = "P1";
    pub const P2: &str = "P2";
    pub const G1: &str = "G1";
    pub const G2: &str = "G2";
    pub const CF: &str = "CF";
    pub const E3: &str = "E3";
    pub const X1: &str = "X1";
    pub const X2: &str = "X2";
    pub const Y1: &str = "Y1";
    pub const Y2: &str = "Y2";

    pub const DISSIPATION: &str = "dissipation";
    pub const PEAK: &str = "peak";
    pub const FEEDTHROUGH: &str = "feedthrough";
    pub const INVERTIBILITY: &str = "invertibility";
    pub const STATIC_COUPLING: &str = "static-gain";
}

fn shift_for(expr: &MatExpr, delta: f64) -> f64 {
    delta * expr.constant.amax().max(1.0)
}

fn blocks_meta(prefix: &str, parts: &[(&str, usize)]) -> Vec<BlockInfo> {
    let mut off = 0;
    parts
        .iter()
        .filter(|(_, s)| *s > 0)
        .map(|&(name, size)| {
            let b = BlockInfo { name: format!("{prefix}/{name}"), offset: off, size };
            off += size;
            b
        })
        .collect()
}

struct Vars {
    zeta: DecisionVar,
    eps: Option<DecisionVar>,
    alpha: Option<DecisionVar>,
    p1: DecisionVar,
    p2: DecisionVar,
    g1: DecisionVar,
    g2: DecisionVar,
    cf: Option<DecisionVar>,
    e3: Option<DecisionVar>,
}

/// Builds the synthesis problem with explicit Lyapunov factors P1, P2 and the
/// equality and coupling constraints that make V = ξᵀẼᵀPξ a generalized Lyapunov function.
pub fn build_problem(plant: &DescriptorPlant, structure: &FilterStructure, opts: &BuildOptions) -> Result<LmiProblem> {
    let dims = plant.dims()?;
    structure.check(&dims)?;
    let (n, p, q, w) = (dims.n, dims.outputs, dims.targets, dims.dist);
    if w == 0 {
        return Err(Error::InvalidInput(String::from("plant has no disturbance channel")));
    }
    let gamma = plant.lipschitz()?;
    let uncertain = dims.unc_cols > 0 && dims.unc_rows > 0;
    let k = if uncertain { dims.unc_cols } else { 0 };
    let peak_on = opts.peak != PeakMode::Off;
    let static_gain = structure.preset == Preset::StaticGain;

    let mut prob = LmiProblem::new();
    let vars = Vars {
        zeta: prob.add_var(names::ZETA, VarKind::Scalar),
        eps: uncertain.then(|| prob.add_var(names::EPS, VarKind::Scalar)),
        alpha: peak_on.then(|| prob.add_var(names::ALPHA, VarKind::Scalar)),
        p1: prob.add_var(names::P1, VarKind::Rect { rows: n, cols: n }),
        p2: prob.add_var(names::P2, VarKind::Rect { rows: n, cols: n }),
        g1: prob.add_var(names::G1, VarKind::Rect { rows: n, cols: n }),
        g2: prob.add_var(names::G2, VarKind::Rect { rows: n, cols: p }),
        cf: (peak_on && !static_gain).then(|| prob.add_var(names::CF, VarKind::Rect { rows: q, cols: n })),
        e3: (peak_on && structure.feed == FeedMode::Decision)
            .then(|| prob.add_var(names::E3, VarKind::Rect { rows: q, cols: p })),
    };

    let p1 = MatExpr::var(&vars.p1);
    let p2 = MatExpr::var(&vars.p2);
    let (q1, q2) = match opts.coupling {
        Coupling::Plain => (p1.clone(), p2.clone()),
        Coupling::Transposed => (p1.transpose(), p2.transpose()),
    };
    let g1 = MatExpr::var(&vars.g1);
    let g2 = MatExpr::var(&vars.g2);
    let id_n = Mat::identity(n, n);
    let gamma_sq = gamma * gamma;

    // Dissipation inequality.
    let filter_diag = g1.add(&g1.transpose())?.add_const(&(&id_n * gamma_sq))?;
    let mut plant_diag = p2.lmul(&plant.a.transpose())?.add(&q2.rmul(&plant.a)?)?.add_const(&(&id_n * gamma_sq))?;
    if let Some(eps) = &vars.eps {
        let ntn = plant.unc_right.transpose() * &plant.unc_right;
        plant_diag = plant_diag.add(&MatExpr::scalar_times(eps, &ntn)?)?;
    }
    let nl_cols = 2 * n + 2 * p;
    let last_filter = if static_gain { g2.neg() } else { q1.rmul(&structure.nl_output)? };
    let filter_nl = MatExpr::blocks(
        &[n],
        &[n, p, n, p],
        vec![(0, 1, g2.clone()), (0, 2, q1.rmul(&structure.nl_state)?), (0, 3, last_filter)],
    )?;
    let plant_nl = MatExpr::blocks(&[n], &[n, p, n, p], vec![(0, 0, q2.clone())])?;

    let zeta_i = |size: usize| MatExpr::scalar_times(&vars.zeta, &(-Mat::identity(size, size)));
    let mut upper = vec![(0, 0, filter_diag), (0, 1, g2.rmul(&plant.c)?), (1, 1, plant_diag)];
    let (sizes, meta) = match opts.form {
        DissipationForm::Full => {
            let sizes = vec![n, n, k, nl_cols, w];
            if let Some(eps) = &vars.eps {
                upper.push((0, 2, g2.rmul(&plant.unc_output)?));
                upper.push((1, 2, q2.rmul(&plant.unc_state)?));
                upper.push((2, 2, MatExpr::scalar_times(eps, &(-Mat::identity(k, k)))?));
            }
            upper.push((0, 3, filter_nl));
            upper.push((1, 3, plant_nl));
            upper.push((3, 3, MatExpr::constant(-Mat::identity(nl_cols, nl_cols))));
            upper.push((0, 4, g2.rmul(&plant.d)?));
            upper.push((1, 4, q2.rmul(&plant.b)?));
            upper.push((4, 4, zeta_i(w)?));
            let meta = blocks_meta(
                names::DISSIPATION,
                &[("filter", n), ("plant", n), ("uncertainty", k), ("nonlinearity", nl_cols), ("disturbance", w)],
            );
            (sizes, meta)
        }
        DissipationForm::Compact => {
            let sizes = vec![n, n, k, nl_cols];
            if let Some(eps) = &vars.eps {
                upper.push((0, 2, g2.rmul(&plant.unc_output)?));
                upper.push((1, 2, q2.rmul(&plant.unc_state)?));
                upper.push((2, 2, MatExpr::scalar_times(eps, &(-Mat::identity(k, k)))?));
            }
            upper.push((0, 3, filter_nl));
            upper.push((1, 3, plant_nl));
            upper.push((3, 3, zeta_i(nl_cols)?));
            let meta = blocks_meta(
                names::DISSIPATION,
                &[("filter", n), ("plant", n), ("uncertainty", k), ("nonlinearity", nl_cols)],
            );
            (sizes, meta)
        }
    };
    let dissipation = MatExpr::sym_blocks(&sizes, upper)?;
    let shift = shift_for(&dissipation, opts.strict_shift);
    prob.add_constraint(names::DISSIPATION, dissipation, Sense::NegDef, shift, ConstraintRole::Main, meta)?;

    // Peak-output bound and feedthrough bound.
    if let Some(alpha) = &vars.alpha {
        let cf_t = match &vars.cf {
            Some(cf) => MatExpr::var(cf).transpose(),
            None => MatExpr::constant(Mat::identity(n, q)),
        };
        let third = |s: usize| MatExpr::constant(Mat::identity(s, s) * (-1.0 / 3.0));
        let ag = MatExpr::scalar_times(alpha, &(&id_n * gamma))?;
        let ep1 = p1.lmul(&plant.e.transpose())?;
        let ep2 = p2.lmul(&plant.e.transpose())?;
        let h = &plant.target;
        let upper = vec![
            (0, 0, ep1.neg()),
            (0, 1, cf_t.clone()),
            (0, 2, ag.clone()),
            (0, 3, cf_t.rmul(h)?.neg()),
            (1, 1, third(q)),
            (2, 2, third(n)),
            (3, 3, MatExpr::constant(h.transpose() * h).sub(&ep2)?),
            (3, 4, ag),
            (4, 4, third(n)),
        ];
        let peak = MatExpr::sym_blocks(&[n, q, n, n, n], upper)?;
        let meta = blocks_meta(
            names::PEAK,
            &[("filter", n), ("output", q), ("filter-lip", n), ("plant", n), ("plant-lip", n)],
        );
        match opts.peak {
            PeakMode::Strict => {
                let shift = shift_for(&peak, opts.strict_shift);
                prob.add_constraint(names::PEAK, peak, Sense::NegDef, shift, ConstraintRole::Main, meta)?;
            }
            _ => prob.add_constraint(names::PEAK, peak, Sense::NegSemi, 0.0, ConstraintRole::Main, meta)?,
        }

        let feed = match (&vars.e3, &structure.feed) {
            (Some(e3), _) => MatExpr::var(e3),
            (None, FeedMode::Fixed(m)) => MatExpr::constant(m.clone()),
            (None, FeedMode::Decision) => return Err(Error::Internal(String::from("feedthrough variable missing"))),
        };
        let upper = vec![
            (0, 0, MatExpr::scalar_times(alpha, &Mat::identity(q, q))?),
            (0, 1, feed),
            (1, 1, MatExpr::scalar_times(alpha, &Mat::identity(p, p))?),
        ];
        let fb = MatExpr::sym_blocks(&[q, p], upper)?;
        let shift = shift_for(&fb, opts.strict_shift);
        prob.add_constraint(
            names::FEEDTHROUGH,
            fb,
            Sense::PosDef,
            shift,
            ConstraintRole::Main,
            blocks_meta(names::FEEDTHROUGH, &[("output", q), ("measurement", p)]),
        )?;
    }

    // ‖I − P1‖ < 1, which keeps P1 invertible.
    let i_minus_p1 = MatExpr::constant(id_n.clone()).sub(&p1)?;
    let inv = MatExpr::sym_blocks(
        &[n, n],
        vec![(0, 0, MatExpr::identity(n)), (0, 1, i_minus_p1.transpose()), (1, 1, MatExpr::identity(n))],
    )?;
    let shift = shift_for(&inv, opts.strict_shift);
    prob.add_constraint(
        names::INVERTIBILITY,
        inv,
        Sense::PosDef,
        shift,
        ConstraintRole::Main,
        blocks_meta(names::INVERTIBILITY, &[("left", n), ("right", n)]),
    )?;

    // EᵀP = PᵀE and EᵀP ⪰ 0, the latter restricted to range(Eᵀ) where it is not trivially singular.
    let range = linalg::range_basis(&plant.e.transpose(), DEFAULT_RANK_TOL)?;
    for (pv, label) in [(&p1, names::P1), (&p2, names::P2)] {
        let etp = pv.lmul(&plant.e.transpose())?;
        prob.add_constraint(
            &format!("{label}/sym"),
            etp.sub(&etp.transpose())?,
            Sense::Zero,
            0.0,
            ConstraintRole::Symmetry,
            vec![],
        )?;
        let reduced = etp.sym()?.lmul(&range.transpose())?.rmul(&range)?.sym()?;
        prob.add_constraint(&format!("{label}/psd"), reduced, Sense::PosSemi, 0.0, ConstraintRole::Coupling, vec![])?;
    }

    if static_gain {
        // G1 = Q1 A − G2 C.
        let resid = g1.sub(&q1.rmul(&plant.a)?)?.add(&g2.rmul(&plant.c)?)?;
        prob.add_constraint(names::STATIC_COUPLING, resid, Sense::Zero, 0.0, ConstraintRole::Main, vec![])?;
    }

    let mut obj = vec![(vars.zeta.offset, 1.0)];
    if let Some(alpha) = &vars.alpha {
        if opts.weight != 0.0 {
            obj.push((alpha.offset, opts.weight));
        }
    }
    prob.objective = Objective { terms: obj, constant: 0.0 };
    prob.derived = vec![(String::from(names::P1), p1), (String::from(names::P2), p2)];
    Ok(prob)
}

/// Replaces P_i by X_i E + E⊥ᵀ Y_i with X_i ≻ 0, dropping the equality and coupling
/// constraints that then hold by construction.
pub fn apply_strict_substitution(problem: &LmiProblem, e: &Mat, eperp: &Mat, strict_shift: f64) -> Result<LmiProblem> {
    if problem.substituted {
        return Err(Error::SubstitutionApplied);
    }
    linalg::ensure_square(e, "E")?;
    let n = e.nrows();
    let s = linalg::rank_of(e, DEFAULT_RANK_TOL)?;
    if eperp.shape() != (n - s, n) {
        return Err(Error::DimensionMismatch(format!(
            "E⊥ must be {}x{n}, got {}x{}",
            n - s,
            eperp.nrows(),
            eperp.ncols()
        )));
    }
    let p_vars: Vec<DecisionVar> = [names::P1, names::P2]
        .iter()
        .map(|name| {
            problem
                .var(name)
                .cloned()
                .ok_or_else(|| Error::InvalidInput(format!("problem has no variable `{name}`")))
        })
        .collect::<Result<_>>()?;
    for pv in &p_vars {
        if pv.kind.shape() != (n, n) {
            return Err(Error::DimensionMismatch(format!("`{}` is not {n}x{n}", pv.name)));
        }
    }

    let mut out = LmiProblem::new();
    let mut map: Vec<AffineImage> = vec![AffineImage { constant: 0.0, terms: vec![] }; problem.num_scalars()];
    for v in &problem.vars {
        if p_vars.iter().any(|p| p.name == v.name) {
            continue;
        }
        let nv = out.add_var(&v.name, v.kind);
        for k in 0..v.len() {
            map[v.offset + k] = AffineImage::identity(nv.offset + k);
        }
    }
    // Only X·range(E) enters P = X E + E⊥ᵀ Y, so X is kept on range(E) alone.
    let basis = if s == n { Mat::identity(n, n) } else { linalg::range_basis(e, DEFAULT_RANK_TOL)? };
    let reach = basis.transpose() * e;
    let x_vars = [out.add_var(names::X1, VarKind::Sym { n: s }), out.add_var(names::X2, VarKind::Sym { n: s })];
    let y_vars = [
        out.add_var(names::Y1, VarKind::Rect { rows: n - s, cols: n }),
        out.add_var(names::Y2, VarKind::Rect { rows: n - s, cols: n }),
    ];
    for ((pv, xv), yv) in p_vars.iter().zip(&x_vars).zip(&y_vars) {
        for i in 0..n {
            for j in 0..n {
                let mut terms = Vec::new();
                for a in 0..s {
                    for b in 0..s {
                        let c = basis[(i, a)] * reach[(b, j)];
                        if c != 0.0 {
                            terms.push((xv.index_of(a, b), c));
                        }
                    }
                }
                for r in 0..(n - s) {
                    let c = eperp[(r, i)];
                    if c != 0.0 {
                        terms.push((yv.index_of(r, j), c));
                    }
                }
                map[pv.index_of(i, j)] = AffineImage { constant: 0.0, terms: merge_terms(terms) };
            }
        }
    }

    for c in &problem.constraints {
        if c.role != ConstraintRole::Main {
            continue;
        }
        let mut expr = c.expr.substitute(&map);
        if c.sense != Sense::Zero {
            expr = expr.sym()?;
        }
        out.add_constraint(&c.name, expr, c.sense, c.shift, c.role, c.blocks.clone())?;
    }
    for xv in &x_vars {
        let expr = MatExpr::var(xv);
        let shift = shift_for(&expr, strict_shift);
        out.add_constraint(&format!("{}/pd", xv.name), expr, Sense::PosDef, shift, ConstraintRole::Main, vec![])?;
    }
    let mut obj = Vec::new();
    for &(i, c) in &problem.objective.terms {
        for &(j, k) in &map[i].terms {
            obj.push((j, c * k));
        }
    }
    out.objective = Objective { terms: merge_terms(obj), constant: problem.objective.constant };
    out.derived = problem.derived.iter().map(|(name, e)| (name.clone(), e.substitute(&map))).collect();
    // A full positive definite weight with the same X E: basis·X·basisᵀ + E⊥ᵀE⊥.
    let pad = eperp.transpose() * eperp;
    for xv in &x_vars {
        let full = MatExpr::var(xv).lmul(&basis)?.rmul(&basis.transpose())?.add_const(&pad)?;
        out.derived.push((xv.name.clone(), full));
    }
    out.substituted = true;
    Ok(out)
}

fn merge_terms(mut terms: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    terms.sort_by_key(|t| t.0);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(terms.len());
    for (v, c) in terms {
        match out.last_mut() {
            Some(last) if last.0 == v => last.1 += c,
            _ => out.push((v, c)),
        }
    }
    out.retain(|t| t.1 != 0.0);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::example_plant;

    #[test]
    fn full_form_side_and_counts() {
        let plant = example_plant();
        let dims = plant.dims().unwrap();
        let prob = build_problem(&plant, &FilterStructure::dynamic(&dims), &BuildOptions::default()).unwrap();
        let d = prob.constraint(names::DISSIPATION).unwrap();
        assert_eq!(d.expr.rows(), 13);
        let main = prob.constraints.iter().filter(|c| c.role == ConstraintRole::Main).count();
        let sym = prob.constraints.iter().filter(|c| c.role == ConstraintRole::Symmetry).count();
        let cpl = prob.constraints.iter().filter(|c| c.role == ConstraintRole::Coupling).count();
        assert_eq!((main, sym, cpl), (4, 2, 2));
        let names: Vec<&str> = d.blocks.iter().map(|b| b.name.as_str()).collect();
        assert_eq!(
            names,
            ["dissipation/filter", "dissipation/plant", "dissipation/uncertainty", "dissipation/nonlinearity", "dissipation/disturbance"]
        );
        assert_eq!(prob.constraint(names::PEAK).unwrap().expr.rows(), 4 * 2 + 2);
    }

    #[test]
    fn compact_form_side() {
        let plant = example_plant();
        let dims = plant.dims().unwrap();
        let opts = BuildOptions { form: DissipationForm::Compact, ..BuildOptions::default() };
        let prob = build_problem(&plant, &FilterStructure::dynamic(&dims), &opts).unwrap();
        assert_eq!(prob.constraint(names::DISSIPATION).unwrap().expr.rows(), 12);
    }

    #[test]
    fn peak_off_drops_multiplier() {
        let plant = example_plant();
        let dims = plant.dims().unwrap();
        let opts = BuildOptions { peak: PeakMode::Off, ..BuildOptions::default() };
        let prob = build_problem(&plant, &FilterStructure::dynamic(&dims), &opts).unwrap();
        assert!(prob.var(names::ALPHA).is_none());
        assert!(prob.var(names::CF).is_none());
        assert!(prob.constraint(names::PEAK).is_none());
        assert!(prob.constraint(names::FEEDTHROUGH).is_none());
    }

    #[test]
    fn no_uncertainty_no_lipschitz_reduces_leading_block() {
        let mut plant = example_plant();
        plant.unc_state = Mat::zeros(2, 0);
        plant.unc_output = Mat::zeros(1, 0);
        plant.unc_right = Mat::zeros(0, 2);
        plant.lip_state = 0.0;
        let dims = plant.dims().unwrap();
        let prob = build_problem(&plant, &FilterStructure::dynamic(&dims), &BuildOptions::default()).unwrap();
        assert!(prob.var(names::EPS).is_none());
        let d = prob.constraint(names::DISSIPATION).unwrap();
        assert_eq!(d.expr.rows(), 2 + 2 + 6 + 1);
        // With every variable zero the leading 4x4 block vanishes.
        let x = vec![0.0; prob.num_scalars()];
        let m = d.expr.evaluate(&x).unwrap();
        assert_eq!(m.view((0, 0), (4, 4)).amax(), 0.0);
    }

    #[test]
    fn substitution_shapes_and_twice() {
        let plant = example_plant();
        let dims = plant.dims().unwrap();
        let prob = build_problem(&plant, &FilterStructure::dynamic(&dims), &BuildOptions::default()).unwrap();
        let ep = linalg::orthogonal_complement(&plant.e, DEFAULT_RANK_TOL).unwrap();
        let sub = apply_strict_substitution(&prob, &plant.e, &ep, 1e-9).unwrap();
        assert_eq!(sub.var(names::Y1).unwrap().kind, VarKind::Rect { rows: 1, cols: 2 });
        assert_eq!(sub.var(names::X1).unwrap().kind, VarKind::Sym { n: 1 });
        assert!(sub.var(names::P1).is_none());
        assert!(sub.constraints.iter().all(|c| c.role == ConstraintRole::Main));
        assert!(matches!(apply_strict_substitution(&sub, &plant.e, &ep, 1e-9), Err(Error::SubstitutionApplied)));
        let bad = Mat::zeros(2, 2);
        assert!(matches!(apply_strict_substitution(&prob, &plant.e, &bad, 1e-9), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn substitution_makes_symmetry_structural() {
        let plant = example_plant();
        let dims = plant.dims().unwrap();
        let prob = build_problem(&plant, &FilterStructure::dynamic(&dims), &BuildOptions::default()).unwrap();
        let ep = linalg::orthogonal_complement(&plant.e, DEFAULT_RANK_TOL).unwrap();
        let sub = apply_strict_substitution(&prob, &plant.e, &ep, 1e-9).unwrap();
        let p1 = sub.derived(names::P1).unwrap();
        let etp = p1.lmul(&plant.e.transpose()).unwrap();
        let diff = etp.sub(&etp.transpose()).unwrap();
        assert!(diff.max_abs_coefficient() < 1e-14);
    }

    #[test]
    fn nonsingular_e_has_empty_null_variables() {
        let mut plant = example_plant();
        plant.e = Mat::identity(2, 2);
        let dims = plant.dims().unwrap();
        let prob = build_problem(&plant, &FilterStructure::dynamic(&dims), &BuildOptions::default()).unwrap();
        let ep = linalg::orthogonal_complement(&plant.e, DEFAULT_RANK_TOL).unwrap();
        let sub = apply_strict_substitution(&prob, &plant.e, &ep, 1e-9).unwrap();
        assert_eq!(sub.var(names::Y1).unwrap().len(), 0);
        // P1 = X1 exactly.
        let x: Vec<f64> = (0..sub.num_scalars()).map(|i| 0.1 * i as f64).collect();
        let p1 = sub.derived(names::P1).unwrap().evaluate(&x).unwrap();
        assert_eq!(p1, sub.var(names::X1).unwrap().value(&x));
    }
}
