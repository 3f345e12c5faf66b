//! System configuration files.
//!
//! ```text
//! [dims]          n, m (inputs, default 0), p, q, qw
//! [matrices]      E, A, B, C, D; optionally H (default I with q = n) and M1, M2, N (all three or none)
//! [nonlinearity]  phi, psi (expressions in x1.., u1..), gamma1, gamma2, box = lo, hi
//! [filter]        preset = dynamic | static-gain | custom, e1, e2, e3 (e3 may be `decision`),
//!                 lambda, xi2_mode = ladder | strict | nonstrict | off, mode = strict | sdp,
//!                 xi1_form = full | printed
//! [simulation]    t_end, dt, w, u, F (expressions in t), x0_guess, xF0_guess,
//!                 init = keep-differential | free | hold <i, ...> (1-based coordinates)
//! ```
//!
//! Matrices are written row by row, rows separated by `;` and entries by `,`.
//!
//! A missing gamma1 or gamma2 for a nonzero nonlinearity is estimated on a grid over
//! `box` (each coordinate; default [−10, 10] widened to cover the initial guesses) and
//! inflated by 1 %, since grid sampling only bounds the constant from below.

use std::path::Path;

use peakfilter_core::expr::{estimate_lipschitz, ExprAst, LipschitzEstimate};
use peakfilter_core::lmi::{DissipationForm, PeakMode};
use peakfilter_core::model::{DescriptorPlant, FeedMode, FilterStructure, Preset};
use peakfilter_core::sim::{InitMotion, SimConfig};
use peakfilter_core::synthesis::{peak_from_label, SynthesisMode, SynthesisOptions};
use peakfilter_core::Mat;

use crate::doc::{Document, Entry, InputError};

const KNOWN: &[(&str, &[&str])] = &[
    ("dims", &["n", "m", "p", "q", "qw"]),
    ("matrices", &["E", "A", "B", "C", "D", "H", "M1", "M2", "N"]),
    ("nonlinearity", &["phi", "psi", "gamma1", "gamma2", "box"]),
    ("filter", &["preset", "e1", "e2", "e3", "lambda", "xi2_mode", "mode", "xi1_form"]),
    ("simulation", &["t_end", "dt", "w", "u", "F", "x0_guess", "xF0_guess", "init"]),
];

#[derive(Debug, Clone)]
pub struct SimulationSettings {
    pub t_end: f64,
    pub dt: f64,
    pub disturbance: String,
    pub input: Option<String>,
    pub uncertainty: Option<String>,
    pub x0_guess: Vec<f64>,
    pub xf0_guess: Vec<f64>,
    pub init: InitMotion,
}

/// Inflation applied to grid estimates of a Lipschitz constant.
pub const LIPSCHITZ_SAFETY: f64 = 1.01;
/// Upper limit on grid points used by one estimate.
const ESTIMATE_BUDGET: f64 = 1e5;

#[derive(Debug, Clone)]
pub struct Config {
    pub file: String,
    /// Lipschitz constants that were estimated rather than given, by key.
    pub estimated: Vec<(String, LipschitzEstimate)>,
    pub plant: DescriptorPlant,
    pub structure: FilterStructure,
    pub options: SynthesisOptions,
    pub simulation: SimulationSettings,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, InputError> {
        let file = path.display().to_string();
        let text = std::fs::read_to_string(path)
            .map_err(|e| InputError { file: file.clone(), line: 0, message: format!("cannot read: {e}") })?;
        Self::parse(&text, &file)
    }

    pub fn parse(text: &str, file: &str) -> Result<Self, InputError> {
        let doc = Document::parse(text, file)?;
        doc.check_known(KNOWN)?;
        for name in ["dims", "matrices"] {
            doc.require_section(name)?;
        }
        let dim = |key: &str| -> Result<usize, InputError> { doc.count(doc.require("dims", key)?) };
        let n = dim("n")?;
        let m = doc.get("dims", "m").map_or(Ok(0), |e| doc.count(e))?;
        let (p, qw) = (dim("p")?, dim("qw")?);
        let q = match doc.get("dims", "q") {
            Some(e) => doc.count(e)?,
            None if doc.get("matrices", "H").is_none() => n,
            None => return Err(doc.error(doc.require("dims", "p")?.line, "missing `q` in [dims]")),
        };
        if n == 0 {
            return Err(doc.error(doc.require("dims", "n")?.line, "n must be positive"));
        }

        let mat = |key: &str, shape: (usize, usize)| -> Result<Mat, InputError> {
            doc.shaped_matrix(doc.require("matrices", key)?, key, shape)
        };
        let e = mat("E", (n, n))?;
        let a = mat("A", (n, n))?;
        let b = mat("B", (n, qw))?;
        let c = mat("C", (p, n))?;
        let d = mat("D", (p, qw))?;
        let h = match doc.get("matrices", "H") {
            Some(e) => doc.shaped_matrix(e, "H", (q, n))?,
            None if q == n => Mat::identity(n, n),
            None => return Err(doc.error(doc.require_section("matrices")?.line, format!("H may be omitted only when q = n = {n}"))),
        };
        let unc = ["M1", "M2", "N"].map(|k| doc.get("matrices", k));
        let (m1, m2, nn) = match unc {
            [None, None, None] => (Mat::zeros(n, 0), Mat::zeros(p, 0), Mat::zeros(0, n)),
            [Some(e1), Some(e2), Some(e3)] => {
                let m1 = doc.matrix(e1)?;
                if m1.nrows() != n {
                    return Err(doc.error(e1.line, format!("M1 must have {n} rows, got {}", m1.nrows())));
                }
                let m2 = doc.shaped_matrix(e2, "M2", (p, m1.ncols()))?;
                let nm = doc.matrix(e3)?;
                if nm.ncols() != n {
                    return Err(doc.error(e3.line, format!("N must have {n} columns, got {}", nm.ncols())));
                }
                (m1, m2, nm)
            }
            _ => {
                let line = unc.iter().flatten().map(|e| e.line).next().unwrap_or(0);
                return Err(doc.error(line, "M1, M2 and N must be given together"));
            }
        };

        let expr = |key: &str, count: usize| -> Result<ExprAst, InputError> {
            match doc.get("nonlinearity", key) {
                None => Ok(ExprAst::zeros(count, n, m)),
                Some(entry) => {
                    let ast = ExprAst::parse(&entry.value, n, m).map_err(|err| doc.error(entry.line, format!("{key}: {err}")))?;
                    if ast.len() != count {
                        return Err(doc.error(entry.line, format!("{key} needs {count} components, got {}", ast.len())));
                    }
                    Ok(ast)
                }
            }
        };
        let phi = expr("phi", n)?;
        let psi = expr("psi", p)?;
        let simulation = parse_simulation(&doc, n, m)?;
        let bounds = estimation_box(&doc, n, &simulation)?;
        let mut estimated = Vec::new();
        let mut lip = |key: &str, ast: &ExprAst| -> Result<f64, InputError> {
            match doc.get("nonlinearity", key) {
                Some(entry) => {
                    let v = doc.number(entry)?;
                    if v < 0.0 {
                        return Err(doc.error(entry.line, format!("{key} must be non-negative")));
                    }
                    Ok(v)
                }
                None if ast.is_identically_zero() => Ok(0.0),
                None => {
                    let grid = (ESTIMATE_BUDGET.powf(1.0 / n as f64).floor() as usize).clamp(2, 101);
                    let est = estimate_lipschitz(ast, &bounds, grid).map_err(|e| doc.error(0, format!("estimating {key}: {e}")))?;
                    let value = est.gamma_hat * LIPSCHITZ_SAFETY;
                    estimated.push((key.to_string(), est));
                    Ok(value)
                }
            }
        };
        let plant = DescriptorPlant {
            e,
            a,
            b,
            c,
            d,
            unc_state: m1,
            unc_output: m2,
            unc_right: nn,
            target: h,
            lip_state: lip("gamma1", &phi)?,
            lip_output: lip("gamma2", &psi)?,
            state_nl: phi,
            output_nl: psi,
        };

        let structure = parse_structure(&doc, n, p, q)?;
        let options = parse_options(&doc)?;
        Ok(Config { file: file.to_string(), estimated, plant, structure, options, simulation })
    }

    /// Simulation settings for one disturbance, optionally overriding the step and horizon.
    pub fn sim_config(&self, disturbance: &str, dt: Option<f64>, t_end: Option<f64>) -> Result<SimConfig, String> {
        let s = &self.simulation;
        let qw = self.plant.b.ncols();
        let w = ExprAst::parse(disturbance, 0, 0).map_err(|e| format!("w: {e}"))?;
        let w = if w.len() == 1 && qw > 1 {
            ExprAst::parse(&vec![disturbance; qw].join("; "), 0, 0).map_err(|e| format!("w: {e}"))?
        } else {
            w
        };
        let mut cfg = SimConfig::new(t_end.unwrap_or(s.t_end), w);
        cfg.dt = dt.unwrap_or(s.dt);
        let m = self.plant.state_nl.input_dim();
        cfg.input = match &s.input {
            Some(u) => Some(ExprAst::parse(u, 0, 0).map_err(|e| format!("u: {e}"))?),
            None if m > 0 => Some(ExprAst::zeros(m, 0, 0)),
            None => None,
        };
        cfg.uncertainty = match &s.uncertainty {
            Some(f) => Some(ExprAst::parse(f, 0, 0).map_err(|e| format!("F: {e}"))?),
            None => None,
        };
        Ok(cfg)
    }
}

fn parse_structure(doc: &Document, n: usize, p: usize, q: usize) -> Result<FilterStructure, InputError> {
    let preset = doc.get("filter", "preset");
    let overrides = ["e1", "e2", "e3"].map(|k| doc.get("filter", k));
    let mat = |entry: Option<&Entry>, name: &str, shape: (usize, usize), default: Mat| -> Result<Mat, InputError> {
        entry.map_or(Ok(default), |e| doc.shaped_matrix(e, name, shape))
    };
    match preset.map(|e| e.value.as_str()).unwrap_or("dynamic") {
        "static-gain" => {
            if let Some(e) = overrides.iter().flatten().next() {
                return Err(doc.error(e.line, "the static-gain preset fixes e1, e2 and e3"));
            }
            let mut s = FilterStructure::static_gain(&dims(n, p, q));
            s.preset = Preset::StaticGain;
            Ok(s)
        }
        name @ ("dynamic" | "custom") => {
            let base = FilterStructure::dynamic(&dims(n, p, q));
            let e1 = mat(overrides[0], "e1", (n, n), base.nl_state)?;
            let e2 = mat(overrides[1], "e2", (n, p), base.nl_output)?;
            let feed = match overrides[2] {
                Some(e) if e.value == "decision" => FeedMode::Decision,
                Some(e) => FeedMode::Fixed(doc.shaped_matrix(e, "e3", (q, p))?),
                None => base.feed,
            };
            if name == "dynamic" && overrides.iter().all(Option::is_none) {
                Ok(FilterStructure::dynamic(&dims(n, p, q)))
            } else {
                Ok(FilterStructure::custom(e1, e2, feed))
            }
        }
        other => Err(doc.error(
            preset.map_or(0, |e| e.line),
            format!("unknown preset `{other}` (expected dynamic, static-gain or custom)"),
        )),
    }
}

fn dims(n: usize, p: usize, q: usize) -> peakfilter_core::model::PlantDims {
    peakfilter_core::model::PlantDims { n, inputs: 0, outputs: p, targets: q, unc_cols: 0, unc_rows: 0, dist: 0 }
}

/// Parses a peak-constraint choice: one rung or the full ladder.
pub fn parse_ladder(value: &str) -> Option<Vec<PeakMode>> {
    match value {
        "ladder" => Some(vec![PeakMode::Strict, PeakMode::Nonstrict, PeakMode::Off]),
        other => peak_from_label(other).map(|p| vec![p]),
    }
}

fn parse_options(doc: &Document) -> Result<SynthesisOptions, InputError> {
    let mut opts = SynthesisOptions::default();
    if let Some(e) = doc.get("filter", "lambda") {
        opts.weight = doc.number(e)?;
        if opts.weight < 0.0 {
            return Err(doc.error(e.line, "lambda must be non-negative"));
        }
    }
    if let Some(e) = doc.get("filter", "xi2_mode") {
        opts.ladder = parse_ladder(&e.value)
            .ok_or_else(|| doc.error(e.line, format!("unknown xi2_mode `{}` (expected ladder, strict, nonstrict or off)", e.value)))?;
    }
    if let Some(e) = doc.get("filter", "mode") {
        opts.mode = SynthesisMode::from_label(&e.value)
            .ok_or_else(|| doc.error(e.line, format!("unknown mode `{}` (expected strict or sdp)", e.value)))?;
    }
    if let Some(e) = doc.get("filter", "xi1_form") {
        opts.form = parse_form(&e.value).ok_or_else(|| doc.error(e.line, format!("unknown xi1_form `{}` (expected full or printed)", e.value)))?;
    }
    Ok(opts)
}

/// `full` keeps the disturbance column; `printed` is the three-column compact form.
pub fn parse_form(value: &str) -> Option<DissipationForm> {
    match value.trim() {
        "full" => Some(DissipationForm::Full),
        "printed" => Some(DissipationForm::Compact),
        _ => None,
    }
}

fn parse_simulation(doc: &Document, n: usize, m: usize) -> Result<SimulationSettings, InputError> {
    let sec = "simulation";
    let t_end = doc.number_or(sec, "t_end", 30.0)?;
    let dt = doc.number_or(sec, "dt", 1e-3)?;
    if !(dt > 0.0) || !(t_end >= dt) {
        let line = doc.get(sec, "dt").or(doc.get(sec, "t_end")).map_or(0, |e| e.line);
        return Err(doc.error(line, format!("need dt > 0 and t_end ≥ dt, got dt = {dt}, t_end = {t_end}")));
    }
    let text = |key: &str| doc.get(sec, key).map(|e| e.value.clone()).filter(|v| !v.is_empty());
    if m > 0 && text("u").is_none() && doc.section(sec).is_some() && doc.get(sec, "u").is_some() {
        return Err(doc.error(doc.get(sec, "u").unwrap().line, "u is empty"));
    }
    let guess = |key: &str| -> Result<Vec<f64>, InputError> {
        match doc.get(sec, key) {
            None => Ok(vec![0.0; n]),
            Some(e) => {
                let v = doc.list(e)?;
                if v.len() != n {
                    return Err(doc.error(e.line, format!("{key} needs {n} entries, got {}", v.len())));
                }
                Ok(v)
            }
        }
    };
    let init = match doc.get(sec, "init") {
        None => InitMotion::KeepDifferential,
        Some(e) => parse_init(&e.value, n).ok_or_else(|| {
            doc.error(e.line, format!("bad init `{}` (expected keep-differential, free or hold <i, ...>)", e.value))
        })?,
    };
    Ok(SimulationSettings {
        t_end,
        dt,
        disturbance: text("w").unwrap_or_else(|| String::from("0")),
        input: text("u"),
        uncertainty: text("F"),
        x0_guess: guess("x0_guess")?,
        xf0_guess: guess("xF0_guess")?,
        init,
    })
}

fn estimation_box(doc: &Document, n: usize, sim: &SimulationSettings) -> Result<Vec<(f64, f64)>, InputError> {
    match doc.get("nonlinearity", "box") {
        Some(e) => {
            let v = doc.list(e)?;
            match v[..] {
                [lo, hi] if lo < hi => Ok(vec![(lo, hi); n]),
                _ => Err(doc.error(e.line, "box needs two numbers lo, hi with lo < hi")),
            }
        }
        None => {
            let reach = sim.x0_guess.iter().chain(&sim.xf0_guess).fold(10.0_f64, |r, v| r.max(v.abs()));
            Ok(vec![(-reach, reach); n])
        }
    }
}

fn parse_init(value: &str, n: usize) -> Option<InitMotion> {
    match value {
        "keep-differential" => Some(InitMotion::KeepDifferential),
        "free" => Some(InitMotion::Free),
        other => {
            let rest = other.strip_prefix("hold")?.trim();
            let idx: Option<Vec<usize>> = rest
                .split(',')
                .map(|s| s.trim().parse::<usize>().ok().filter(|&i| i >= 1 && i <= n).map(|i| i - 1))
                .collect();
            idx.filter(|v| !v.is_empty()).map(InitMotion::Hold)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[dims]\nn = 1\np = 1\nq = 1\nqw = 1\n[matrices]\nE = 1\nA = -1\nB = 1\nC = 1\nD = 0\nH = 1\n";

    #[test]
    fn defaults() {
        let c = Config::parse(MINIMAL, "min.cfg").unwrap();
        assert_eq!(c.plant.unc_state.shape(), (1, 0));
        assert_eq!(c.plant.lip_state, 0.0);
        assert_eq!(c.structure.preset, Preset::Dynamic);
        assert_eq!(c.simulation.init, InitMotion::KeepDifferential);
        assert_eq!((c.simulation.t_end, c.simulation.dt), (30.0, 1e-3));
    }

    #[test]
    fn errors_point_at_lines() {
        let bad = MINIMAL.replace("A = -1", "A = -1, 2");
        let e = Config::parse(&bad, "x.cfg").unwrap_err();
        assert_eq!(e.line, 8);
        assert!(e.message.contains("A must be 1x1"), "{e}");
        let bad = format!("{MINIMAL}[nonlinearity]\nphi = sin(x1\n");
        let e = Config::parse(&bad, "x.cfg").unwrap_err();
        assert_eq!(e.line, 14);
        let bad = format!("{MINIMAL}[nonlinearity]\nphi = sin(x1)\nbox = 1, -1\n");
        assert_eq!(Config::parse(&bad, "x.cfg").unwrap_err().line, 15);
        let bad = format!("{MINIMAL}[filter]\ncolour = red\n");
        assert_eq!(Config::parse(&bad, "x.cfg").unwrap_err().line, 14);
        let bad = MINIMAL.replace("[dims]\n", "[dims]\nm = x\n");
        assert_eq!(Config::parse(&bad, "x.cfg").unwrap_err().line, 2);
    }

    #[test]
    fn missing_gamma_is_estimated_and_inflated() {
        let c = Config::parse(&format!("{MINIMAL}[nonlinearity]\nphi = 0.5*sin(x1)\n"), "x.cfg").unwrap();
        assert!((c.plant.lip_state - 0.5 * LIPSCHITZ_SAFETY).abs() < 1e-12, "{}", c.plant.lip_state);
        assert_eq!(c.estimated.len(), 1);
        assert_eq!(c.estimated[0].1.bounds, vec![(-10.0, 10.0)]);
        let c = Config::parse(&format!("{MINIMAL}[nonlinearity]\nphi = x1*x1*x1\nbox = -1, 1\n"), "x.cfg").unwrap();
        assert!((c.plant.lip_state - 3.0 * LIPSCHITZ_SAFETY).abs() < 1e-9, "{}", c.plant.lip_state);
        let c = Config::parse(&format!("{MINIMAL}[nonlinearity]\nphi = sin(x1)\ngamma1 = 2\n"), "x.cfg").unwrap();
        assert_eq!(c.plant.lip_state, 2.0);
        assert!(c.estimated.is_empty());
    }

    #[test]
    fn h_defaults_to_identity() {
        let text = MINIMAL.replace("q = 1\n", "").replace("H = 1\n", "");
        let c = Config::parse(&text, "x.cfg").unwrap();
        assert_eq!(c.plant.target.shape(), (1, 1));
        assert_eq!(c.plant.target[(0, 0)], 1.0);
        let text = MINIMAL.replace("q = 1", "q = 2").replace("H = 1\n", "");
        assert!(Config::parse(&text, "x.cfg").unwrap_err().message.contains("H may be omitted"));
    }

    #[test]
    fn dissipation_forms() {
        assert_eq!(parse_form("full"), Some(DissipationForm::Full));
        assert_eq!(parse_form("printed"), Some(DissipationForm::Compact));
        assert_eq!(parse_form("compact"), None);
        let c = Config::parse(&format!("{MINIMAL}[filter]\nxi1_form = printed\n"), "x.cfg").unwrap();
        assert_eq!(c.options.form, DissipationForm::Compact);
    }

    #[test]
    fn init_policies() {
        assert_eq!(parse_init("hold 2", 2), Some(InitMotion::Hold(vec![1])));
        assert_eq!(parse_init("hold 1, 2", 2), Some(InitMotion::Hold(vec![0, 1])));
        assert_eq!(parse_init("hold 3", 2), None);
        assert_eq!(parse_init("free", 2), Some(InitMotion::Free));
    }
}
