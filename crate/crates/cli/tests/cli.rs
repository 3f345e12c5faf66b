use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use peakfilter::config::Config;
use peakfilter::filter_file::FilterFile;
use peakfilter_core::synthesis::{rung_problem, synthesize, SynthesisOptions};
use peakfilter_core::Mat;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_peakfilter"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn example() -> PathBuf {
    config("descriptor_example.cfg")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Value after `key = ` on a line of the report.
fn field(text: &str, key: &str) -> f64 {
    let prefix = format!("{key} = ");
    let line = text.lines().find_map(|l| l.strip_prefix(&prefix)).unwrap_or_else(|| panic!("no `{key}` in\n{text}"));
    line.split_whitespace().next().unwrap().parse().unwrap()
}

fn synthesized(dir: &TempDir, cfg: &Path) -> PathBuf {
    let out = dir.path().join("filter.txt");
    let o = run(&["synthesize", cfg.to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    out
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn synthesize_example_is_optimal() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("f.txt");
    let o = run(&["synthesize", example().to_str().unwrap(), "-o", out.to_str().unwrap()]);
    let text = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{text}{}", stderr(&o));
    assert!(text.contains("status: optimal"));
    let mu = field(&text, "mu_star");
    assert!(mu.is_finite() && mu > 0.0 && mu <= 0.16, "{mu}");
    field(&text, "epsilon");
    assert!(text.contains("xi2_mode = "));
    assert!(text.lines().any(|l| l.trim_start().starts_with("dissipation") && l.ends_with("ok")), "{text}");
    let file = FilterFile::load(&out).unwrap();
    assert!((file.filter.mu_star - mu).abs() <= 1e-9);
    assert!(file.certificate.is_some());
}

#[test]
fn large_lipschitz_constant_is_infeasible() {
    let o = run(&["synthesize", config("descriptor_example_gamma100.cfg").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("status: infeasible"));
    assert!(stdout(&o).contains("diagnosis:"));
}

#[test]
fn malformed_matrix_reports_line() {
    let dir = TempDir::new().unwrap();
    let text = std::fs::read_to_string(example()).unwrap();
    let line = text.lines().position(|l| l.starts_with("A = ")).unwrap() + 1;
    let bad = write(&dir, "bad.cfg", &text.replace("A = 1, 12; -6, -15", "A = 1, 12; -6"));
    let o = run(&["synthesize", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains(&format!("bad.cfg:{line}:")), "{err}");
    assert!(err.contains("row 2"), "{err}");
}

#[test]
fn input_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    let o = run(&["synthesize", dir.path().join("missing.cfg").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["synthesize", example().to_str().unwrap(), "--mode", "fastest"]);
    assert_eq!(o.status.code(), Some(1));
    let text = std::fs::read_to_string(example()).unwrap().replace("q = 2", "q = 3");
    let o = run(&["synthesize", write(&dir, "q.cfg", &text).to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("H must be 3x2"), "{}", stderr(&o));
}

#[test]
fn missing_certificate_exits_one() {
    let dir = TempDir::new().unwrap();
    let f = synthesized(&dir, &example());
    let text = std::fs::read_to_string(&f).unwrap();
    let bare = write(&dir, "bare.txt", &text[..text.find("[certificate]").unwrap()]);
    let o = run(&["verify", example().to_str().unwrap(), bare.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no [certificate]"), "{}", stderr(&o));
    // The bare filter still simulates.
    let o = run(&["simulate", example().to_str().unwrap(), bare.to_str().unwrap(), "--nominal", "--t-end", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn nominal_simulation_converges() {
    let dir = TempDir::new().unwrap();
    let f = synthesized(&dir, &example());
    let csv_path = dir.path().join("trace.csv");
    let o = run(&["simulate", example().to_str().unwrap(), f.to_str().unwrap(), "--nominal", "-o", csv_path.to_str().unwrap()]);
    let text = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{text}{}", stderr(&o));
    let (e0, e_end) = (field(&text, "|e(0)|"), field(&text, "|e(t_end)|"));
    assert!(e_end <= 1e-3 * e0, "{e_end} vs {e0}");

    let mut rdr = csv::Reader::from_path(&csv_path).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["t", "x1", "x2", "xF1", "xF2", "z1", "z2", "zF1", "zF2", "e1", "e2", "w1"]);
    let rows: Vec<Vec<f64>> = rdr.records().map(|r| r.unwrap().iter().map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 30_001);
    assert!(rows.iter().all(|r| r[11] == 0.0));
    let last = &rows[30_000];
    assert!((last[0] - 30.0).abs() < 1e-9);
    assert!((last[9].hypot(last[10]) - e_end).abs() <= 1e-6 * (1.0 + e_end));
    // e = z − zF column by column
    for r in rows.iter().step_by(997) {
        assert!((r[9] - (r[5] - r[7])).abs() <= 1e-12 * (1.0 + r[5].abs()));
    }
    let raw = std::fs::read_to_string(&csv_path).unwrap();
    assert!(!raw.contains('\r'));
}

#[test]
fn disturbed_simulation_prints_ratio() {
    let dir = TempDir::new().unwrap();
    let f = synthesized(&dir, &example());
    let o = run(&["simulate", example().to_str().unwrap(), f.to_str().unwrap()]);
    let text = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{text}");
    let ratio = field(&text, "ratio");
    let w_l2 = field(&text, "w_l2");
    assert!(ratio.is_finite() && ratio > 0.0);
    assert!((w_l2 - peakfilter_testkit::fixtures::disturbance_energy().sqrt()).abs() <= 1e-2 * w_l2);
}

#[test]
fn dt_override_halves_the_step() {
    let dir = TempDir::new().unwrap();
    let f = synthesized(&dir, &example());
    let csv_path = dir.path().join("fine.csv");
    let o = run(&[
        "simulate",
        example().to_str().unwrap(),
        f.to_str().unwrap(),
        "--nominal",
        "--dt",
        "5e-4",
        "--t-end",
        "2",
        "-o",
        csv_path.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let mut rdr = csv::Reader::from_path(&csv_path).unwrap();
    let t: Vec<f64> = rdr.records().map(|r| r.unwrap()[0].parse().unwrap()).collect();
    assert_eq!(t.len(), 4001);
    assert!((t[1] - 5e-4).abs() < 1e-15);
    let o = run(&["simulate", example().to_str().unwrap(), f.to_str().unwrap(), "--dt=-1"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let o = run(&["simulate", example().to_str().unwrap(), f.to_str().unwrap(), "--step", "1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn stored_margins_round_trip() {
    let cfg = Config::load(&example()).unwrap();
    let (_, cert) = synthesize(&cfg.plant, &cfg.structure, &cfg.options).unwrap();
    let dir = TempDir::new().unwrap();
    let f = synthesized(&dir, &example());
    let file = FilterFile::load(&f).unwrap();
    let stored = file.certificate.unwrap();

    for (name, m) in &cert.values {
        assert_eq!(stored.value(name), Some(m), "{name}");
    }
    let opts = SynthesisOptions {
        mode: stored.mode,
        form: stored.form,
        coupling: stored.coupling,
        weight: stored.weight,
        strict_shift: stored.strict_shift,
        eperp: stored.eperp.clone(),
        ..SynthesisOptions::default()
    };
    let prob = rung_problem(&cfg.plant, &cfg.structure, &opts, stored.peak).unwrap();
    let named: BTreeMap<String, Mat> = stored.values.iter().cloned().collect();
    let report = prob.evaluate_at(&prob.assignment_from_named(&named).unwrap()).unwrap();
    assert_eq!(report.entries.len(), cert.margins.entries.len());
    for (fresh, original) in report.entries.iter().zip(&cert.margins.entries) {
        assert_eq!(fresh.name, original.name);
        assert!((fresh.margin - original.margin).abs() <= 1e-12 * (1.0 + original.margin.abs()), "{}", fresh.name);
        let (_, on_disk) = stored.margins.iter().find(|(n, _)| *n == fresh.name).unwrap();
        assert!((fresh.margin - on_disk).abs() <= 1e-12 * (1.0 + on_disk.abs()), "{}", fresh.name);
    }
}

#[test]
fn corrupted_certificate_fails_verification() {
    let dir = TempDir::new().unwrap();
    let f = synthesized(&dir, &example());
    let text = std::fs::read_to_string(&f).unwrap();
    let start = text.find("\nX1 = ").expect("strict certificate stores X1") + 1;
    let line = &text[start..start + text[start..].find('\n').unwrap()];
    let (head, body) = line.split_once(": ").unwrap();
    let (first, rest) = body.split_once([',', ';']).map_or((body, ""), |(a, _)| (a, &body[a.len()..]));
    let first: f64 = first.trim().parse().unwrap();
    let corrupted_line = format!("{head}: {}{rest}", first * 0.5);
    let bad = write(&dir, "bad.txt", &text.replace(line, &corrupted_line));
    let o = run(&["verify", example().to_str().unwrap(), bad.to_str().unwrap(), "--t-end", "1"]);
    let out = stdout(&o);
    assert_eq!(o.status.code(), Some(3), "{out}{}", stderr(&o));
    assert!(out.contains("MISMATCH") || out.contains("FAILED"), "{out}");
    assert!(out.contains("DIFFERS"), "{out}");
}

#[test]
fn verify_exit_code_tracks_the_battery() {
    let dir = TempDir::new().unwrap();
    let f = synthesized(&dir, &example());
    let o = run(&["verify", example().to_str().unwrap(), f.to_str().unwrap()]);
    let out = stdout(&o);
    eprintln!("{out}");
    let battery: Vec<&str> = out.lines().skip_while(|l| !l.starts_with("battery")).skip(1).filter(|l| l.starts_with("  ")).collect();
    assert_eq!(battery.len(), 8, "{out}");
    let zero = battery.iter().find(|l| l.trim_start().starts_with("zero")).unwrap();
    assert!(zero.contains("n/a"));
    let margins_ok = out.lines().take_while(|l| !l.starts_with("battery")).all(|l| !l.contains("FAILED") && !l.contains("MISMATCH") && !l.contains("DIFFERS"));
    assert!(margins_ok, "{out}");
    let all_pass = battery.iter().all(|l| l.ends_with(" ok") || l.contains("n/a"));
    assert_eq!(o.status.code(), Some(if all_pass { 0 } else { 3 }), "{out}");
    // The decaying cosine from rest stays under the bound.
    let cosine = battery.iter().find(|l| l.trim_start().starts_with("decaying-cosine")).unwrap();
    assert!(cosine.ends_with(" ok"), "{cosine}");
}

#[test]
fn verify_passes_on_a_nonsingular_plant() {
    let dir = TempDir::new().unwrap();
    let text = std::fs::read_to_string(example()).unwrap().replace("E = 2, 3; 4, 6", "E = 1, 0; 0, 1");
    let cfg = write(&dir, "regular.cfg", &text);
    let f = synthesized(&dir, &cfg);
    let o = run(&["verify", cfg.to_str().unwrap(), f.to_str().unwrap()]);
    let out = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{out}{}", stderr(&o));
    assert!(out.contains("verification passed"));
    assert!(!out.contains("note: solved without"), "{out}");
}

#[test]
fn commands_are_deterministic() {
    let dir = TempDir::new().unwrap();
    let outputs: Vec<(String, String, Vec<u8>)> = (0..2)
        .map(|i| {
            let f = dir.path().join(format!("f{i}.txt"));
            let c = dir.path().join(format!("t{i}.csv"));
            let s = run(&["synthesize", example().to_str().unwrap(), "-o", f.to_str().unwrap()]);
            let o = run(&["simulate", example().to_str().unwrap(), f.to_str().unwrap(), "--t-end", "3", "-o", c.to_str().unwrap()]);
            assert_eq!(o.status.code(), Some(0));
            let report = stdout(&s).replace(f.to_str().unwrap(), "");
            (report, std::fs::read_to_string(&f).unwrap(), std::fs::read(&c).unwrap())
        })
        .collect();
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn sdp_mode_from_the_command_line() {
    let o = run(&["synthesize", example().to_str().unwrap(), "--mode", "sdp", "--xi2", "off"]);
    let text = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{text}");
    assert!(text.contains("mode = sdp"));
    let strict = stdout(&run(&["synthesize", example().to_str().unwrap(), "--xi2", "off"]));
    assert!((field(&text, "mu_star") - field(&strict, "mu_star")).abs() <= 1e-6);
}

#[test]
fn missing_gamma_is_estimated_and_reported() {
    let dir = TempDir::new().unwrap();
    let text = std::fs::read_to_string(example()).unwrap().replace("gamma1 = 0.5\n", "");
    let cfg = write(&dir, "est.cfg", &text);
    let o = run(&["synthesize", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let text = stdout(&o);
    assert!((field(&text, "gamma1 estimated") - 0.505).abs() < 1e-9, "{text}");
    assert!(text.contains("inflated by 1.01"), "{text}");
}

#[test]
fn printed_dissipation_form_round_trips() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("printed.txt");
    let o = run(&["synthesize", example().to_str().unwrap(), "--xi1", "printed", "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let file = FilterFile::load(&out).unwrap();
    assert_eq!(file.certificate.unwrap().form, peakfilter_core::lmi::DissipationForm::Compact);
    let o = run(&["verify", example().to_str().unwrap(), out.to_str().unwrap(), "--t-end", "2"]);
    let text = stdout(&o);
    assert!(!text.contains("MISMATCH") && !text.contains("DIFFERS"), "{text}");
    let o = run(&["synthesize", example().to_str().unwrap(), "--xi1", "bogus"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("full or printed"));
}
