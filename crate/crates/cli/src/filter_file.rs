//! Synthesized filters on disk.
//!
//! ```text
//! [filter]       preset, mu_star, A_F, B_F, C_F, E1, E2, E3
//! [certificate]  mode, xi2_mode, form, coupling, strict_shift, lambda, zeta, epsilon, alpha, eperp, rungs
//! [values]       every decision variable of the solved problem
//! [margins]      per-constraint margin at the solution
//! ```
//!
//! Numbers are written with 17 significant digits so a file read back reproduces the
//! solver's values bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use peakfilter_core::lmi::{Coupling, DissipationForm, PeakMode};
use peakfilter_core::model::{FilterRealization, Preset};
use peakfilter_core::synthesis::{peak_from_label, peak_label, SynthesisCertificate, SynthesisMode};
use peakfilter_core::Mat;

use crate::doc::{self, Document, InputError};

#[derive(Debug, Clone, PartialEq)]
pub struct StoredCertificate {
    pub mode: SynthesisMode,
    pub peak: PeakMode,
    pub form: DissipationForm,
    pub coupling: Coupling,
    pub strict_shift: f64,
    pub weight: f64,
    pub zeta: f64,
    pub epsilon: f64,
    pub alpha: Option<f64>,
    pub eperp: Option<Mat>,
    /// Ladder history, e.g. `strict Infeasible, off Optimal`.
    pub rungs: String,
    pub values: Vec<(String, Mat)>,
    pub margins: Vec<(String, f64)>,
}

impl StoredCertificate {
    pub fn from_certificate(cert: &SynthesisCertificate) -> Self {
        Self {
            mode: cert.mode,
            peak: cert.peak,
            form: cert.form,
            coupling: cert.coupling,
            strict_shift: cert.strict_shift,
            weight: cert.weight,
            zeta: cert.zeta,
            epsilon: cert.epsilon,
            alpha: cert.alpha,
            eperp: cert.eperp.clone(),
            rungs: rung_summary(cert),
            values: cert.values.clone(),
            margins: cert.margins.entries.iter().map(|m| (m.name.clone(), m.margin)).collect(),
        }
    }

    pub fn peak_certified(&self) -> bool {
        self.peak != PeakMode::Off
    }

    pub fn value(&self, name: &str) -> Option<&Mat> {
        self.values.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }
}

pub fn rung_summary(cert: &SynthesisCertificate) -> String {
    let parts: Vec<String> = cert.rungs.iter().map(|r| format!("{} {:?}", peak_label(r.peak), r.status)).collect();
    parts.join(", ")
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterFile {
    pub preset: Preset,
    pub filter: FilterRealization,
    pub certificate: Option<StoredCertificate>,
}

pub fn preset_label(p: Preset) -> &'static str {
    match p {
        Preset::Dynamic => "dynamic",
        Preset::StaticGain => "static-gain",
        Preset::Custom => "custom",
    }
}

fn preset_from_label(s: &str) -> Option<Preset> {
    match s {
        "dynamic" => Some(Preset::Dynamic),
        "static-gain" => Some(Preset::StaticGain),
        "custom" => Some(Preset::Custom),
        _ => None,
    }
}

fn form_label(f: DissipationForm) -> &'static str {
    match f {
        DissipationForm::Full => "full",
        DissipationForm::Compact => "compact",
    }
}

fn coupling_label(c: Coupling) -> &'static str {
    match c {
        Coupling::Plain => "plain",
        Coupling::Transposed => "transposed",
    }
}

impl FilterFile {
    pub fn to_text(&self) -> String {
        let f = &self.filter;
        let mut s = String::new();
        let _ = writeln!(s, "[filter]");
        let _ = writeln!(s, "preset = {}", preset_label(self.preset));
        let _ = writeln!(s, "mu_star = {}", doc::number(f.mu_star));
        for (key, m) in [("A_F", &f.a), ("B_F", &f.b), ("C_F", &f.c), ("E1", &f.nl_state), ("E2", &f.nl_output), ("E3", &f.feed)] {
            let _ = writeln!(s, "{key} = {}", doc::matrix(m));
        }
        if let Some(c) = &self.certificate {
            let _ = writeln!(s, "\n[certificate]");
            let _ = writeln!(s, "mode = {}", c.mode.label());
            let _ = writeln!(s, "xi2_mode = {}", peak_label(c.peak));
            let _ = writeln!(s, "form = {}", form_label(c.form));
            let _ = writeln!(s, "coupling = {}", coupling_label(c.coupling));
            let _ = writeln!(s, "strict_shift = {}", doc::number(c.strict_shift));
            let _ = writeln!(s, "lambda = {}", doc::number(c.weight));
            let _ = writeln!(s, "zeta = {}", doc::number(c.zeta));
            let _ = writeln!(s, "epsilon = {}", doc::number(c.epsilon));
            if let Some(a) = c.alpha {
                let _ = writeln!(s, "alpha = {}", doc::number(a));
            }
            if let Some(e) = &c.eperp {
                let _ = writeln!(s, "eperp = {}", doc::matrix(e));
            }
            let _ = writeln!(s, "rungs = {}", c.rungs);
            let _ = writeln!(s, "\n[values]");
            for (name, m) in &c.values {
                let _ = writeln!(s, "{name} = {}", doc::matrix(m));
            }
            let _ = writeln!(s, "\n[margins]");
            for (name, m) in &c.margins {
                let _ = writeln!(s, "{name} = {}", doc::number(*m));
            }
        }
        s
    }

    pub fn load(path: &Path) -> Result<Self, InputError> {
        let file = path.display().to_string();
        let text = std::fs::read_to_string(path)
            .map_err(|e| InputError { file: file.clone(), line: 0, message: format!("cannot read: {e}") })?;
        Self::parse(&text, &file)
    }

    pub fn parse(text: &str, file: &str) -> Result<Self, InputError> {
        let d = Document::parse(text, file)?;
        for (name, sec) in &d.sections {
            if !["filter", "certificate", "values", "margins"].contains(&name.as_str()) {
                return Err(d.error(sec.line, format!("unknown section [{name}]")));
            }
        }
        d.check_keys("filter", &["preset", "mu_star", "A_F", "B_F", "C_F", "E1", "E2", "E3"])?;
        d.check_keys(
            "certificate",
            &["mode", "xi2_mode", "form", "coupling", "strict_shift", "lambda", "zeta", "epsilon", "alpha", "eperp", "rungs"],
        )?;

        let preset_entry = d.require("filter", "preset")?;
        let preset = preset_from_label(&preset_entry.value)
            .ok_or_else(|| d.error(preset_entry.line, format!("unknown preset `{}`", preset_entry.value)))?;
        let m = |key: &str| d.matrix(d.require("filter", key)?);
        let filter = FilterRealization {
            a: m("A_F")?,
            b: m("B_F")?,
            c: m("C_F")?,
            nl_state: m("E1")?,
            nl_output: m("E2")?,
            feed: m("E3")?,
            mu_star: d.number(d.require("filter", "mu_star")?)?,
        };
        let n = filter.a.nrows();
        let shapes = [
            ("A_F", &filter.a, (n, n)),
            ("B_F", &filter.b, (n, filter.nl_output.ncols())),
            ("C_F", &filter.c, (filter.c.nrows(), n)),
            ("E1", &filter.nl_state, (n, n)),
            ("E2", &filter.nl_output, (n, filter.b.ncols())),
            ("E3", &filter.feed, (filter.c.nrows(), filter.b.ncols())),
        ];
        for (key, mat, shape) in shapes {
            if mat.shape() != shape {
                let line = d.require("filter", key)?.line;
                return Err(d.error(line, format!("{key} must be {}x{}, got {}x{}", shape.0, shape.1, mat.nrows(), mat.ncols())));
            }
        }

        let certificate = match d.section("certificate") {
            None => None,
            Some(_) => Some(parse_certificate(&d)?),
        };
        Ok(FilterFile { preset, filter, certificate })
    }
}

fn parse_certificate(d: &Document) -> Result<StoredCertificate, InputError> {
    let sec = "certificate";
    let label = |key: &str| d.require(sec, key);
    let bad = |key: &str, e: &crate::doc::Entry| d.error(e.line, format!("unknown {key} `{}`", e.value));

    let e = label("mode")?;
    let mode = SynthesisMode::from_label(&e.value).ok_or_else(|| bad("mode", e))?;
    let e = label("xi2_mode")?;
    let peak = peak_from_label(&e.value).ok_or_else(|| bad("xi2_mode", e))?;
    let e = label("form")?;
    let form = match e.value.as_str() {
        "full" => DissipationForm::Full,
        "compact" => DissipationForm::Compact,
        _ => return Err(bad("form", e)),
    };
    let e = label("coupling")?;
    let coupling = match e.value.as_str() {
        "plain" => Coupling::Plain,
        "transposed" => Coupling::Transposed,
        _ => return Err(bad("coupling", e)),
    };
    let num = |key: &str| -> Result<f64, InputError> { d.number(label(key)?) };
    let values_sec = d.require_section("values")?;
    let mut values = Vec::new();
    for (name, entry) in &values_sec.entries {
        values.push((name.clone(), d.matrix(entry)?));
    }
    let mut margins = Vec::new();
    if let Some(m) = d.section("margins") {
        for (name, entry) in &m.entries {
            margins.push((name.clone(), d.number(entry)?));
        }
    }
    Ok(StoredCertificate {
        mode,
        peak,
        form,
        coupling,
        strict_shift: num("strict_shift")?,
        weight: num("lambda")?,
        zeta: num("zeta")?,
        epsilon: num("epsilon")?,
        alpha: d.get(sec, "alpha").map(|e| d.number(e)).transpose()?,
        eperp: d.get(sec, "eperp").map(|e| d.matrix(e)).transpose()?,
        rungs: d.get(sec, "rungs").map(|e| e.value.clone()).unwrap_or_default(),
        values,
        margins,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> FilterFile {
        let filter = FilterRealization {
            a: Mat::from_row_slice(2, 2, &[-1.0, 0.1, 1.0 / 3.0, -2.0]),
            b: Mat::from_row_slice(2, 1, &[0.5, -0.25]),
            c: Mat::from_row_slice(1, 2, &[1.0, 0.0]),
            nl_state: Mat::identity(2, 2),
            nl_output: Mat::zeros(2, 1),
            feed: Mat::zeros(1, 1),
            mu_star: 0.151_004_2,
        };
        let cert = StoredCertificate {
            mode: SynthesisMode::Strict,
            peak: PeakMode::Off,
            form: DissipationForm::Full,
            coupling: Coupling::Plain,
            strict_shift: 1e-9,
            weight: 0.0,
            zeta: 0.0228,
            epsilon: 0.7,
            alpha: None,
            eperp: Some(Mat::from_row_slice(1, 2, &[0.0, 1.0])),
            rungs: String::from("strict Infeasible, off Optimal"),
            values: vec![(String::from("zeta"), Mat::from_element(1, 1, 0.0228)), (String::from("Y1"), Mat::zeros(1, 2))],
            margins: vec![(String::from("dissipation"), 1.25e-7)],
        };
        FilterFile { preset: Preset::Dynamic, filter, certificate: Some(cert) }
    }

    #[test]
    fn round_trip_is_exact() {
        let f = sample();
        let back = FilterFile::parse(&f.to_text(), "f.filter").unwrap();
        let mut expected = f.clone();
        // sections come back in key order
        expected.certificate.as_mut().unwrap().values.sort_by(|a, b| a.0.cmp(&b.0));
        assert_eq!(back, expected);
    }

    #[test]
    fn certificate_is_optional() {
        let mut f = sample();
        f.certificate = None;
        let back = FilterFile::parse(&f.to_text(), "f.filter").unwrap();
        assert!(back.certificate.is_none());
        assert_eq!(back.filter, f.filter);
    }

    #[test]
    fn bad_shapes_are_reported() {
        let text = sample().to_text();
        let b_line = text.lines().find(|l| l.starts_with("B_F = ")).unwrap();
        let e = FilterFile::parse(&text.replace(b_line, "B_F = 1, 2, 3"), "f.filter").unwrap_err();
        assert_eq!(e.line, 5);
        assert!(e.message.contains("B_F must be 2x1, got 1x3"), "{e}");
        let e = FilterFile::parse(&text.replace(b_line, "B_F = 2x1: 1, 2"), "f.filter").unwrap_err();
        assert!(e.message.contains("declared 2x1"), "{e}");
    }
}
