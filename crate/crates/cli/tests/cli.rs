use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const IDEAL: &str = r#"
[experiment]
p_exc = 1.0
eta = 1.0

[errors]
p_multi = 0.0
p_dark = 0.0
e_prep = 0.0
e_meas = 0.0
pol_misalign = 0.0
biref_phase = 0.0
phi_jitter_sigma = 0.0
"#;

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        Self { dir: tempfile::tempdir().unwrap() }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn manifest(&self, name: &str, text: &str) -> PathBuf {
        let p = self.path(name);
        fs::write(&p, text).unwrap();
        p
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_scatrev"))
            .args(args)
            .current_dir(self.dir.path())
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert!(
            out.status.success(),
            "scatrev {args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        assert!(out.stderr.is_empty());
        String::from_utf8(out.stdout).unwrap()
    }

    fn fails(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert!(!out.status.success(), "scatrev {args:?} unexpectedly succeeded");
        let err = String::from_utf8(out.stderr).unwrap();
        assert!(err.starts_with("error"), "{err}");
        err
    }
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn overlap(summary: &Value) -> f64 {
    summary["tomography"]["identity_overlap"].as_f64().unwrap()
}

fn ideal_manifest(sequence: &str, analyses: &str) -> String {
    format!("sequence = \"{sequence}\"\nanalyses = [{analyses}]\n{IDEAL}")
}

#[test]
fn simulate_is_reproducible_byte_for_byte() {
    let ws = Workspace::new();
    let m = ws.manifest("m.toml", "sequence = \"corrected_45\"\n[experiment]\nshots = 10\nseed = 42");
    let m = m.to_str().unwrap();
    ws.ok(&["simulate", "--manifest", m, "--out", "a"]);
    ws.ok(&["simulate", "--manifest", m, "--out", "b"]);
    let a = fs::read(ws.path("a/records.csv")).unwrap();
    assert_eq!(a, fs::read(ws.path("b/records.csv")).unwrap());
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().count(), 11, "header plus 10 records");
    assert!(text.starts_with("shot_id,setting_id,branch,phi_tac,outcome,n_attempts,is_dark,corrected"));
    let s = json(&ws.path("a/summary.json"));
    assert_eq!(s["seed"], 42);
    assert_eq!(s["version"], env!("CARGO_PKG_VERSION"));
}

#[test]
fn overrides_apply() {
    let ws = Workspace::new();
    let m = ws.manifest("m.toml", "sequence = \"scatter_HV\"\n[experiment]\nshots = 10\nseed = 1");
    ws.ok(&["simulate", "--manifest", m.to_str().unwrap(), "--shots", "7", "--seed", "3", "--out", "o"]);
    assert_eq!(fs::read_to_string(ws.path("o/records.csv")).unwrap().lines().count(), 8);
    assert_eq!(json(&ws.path("o/summary.json"))["config"]["seed"], 3);
}

#[test]
fn unknown_sequence_is_a_named_error() {
    let ws = Workspace::new();
    let m = ws.manifest("m.toml", "sequence = \"corrected_XY\"");
    let err = ws.fails(&["simulate", "--manifest", m.to_str().unwrap()]);
    assert!(err.contains("corrected_XY") && err.contains("corrected_HV"), "{err}");
}

#[test]
fn malformed_manifest_reports_location() {
    let ws = Workspace::new();
    let m = ws.manifest("m.toml", "sequence = \"no_scatter\"\n[experiment]\nshots = \"many\"\n");
    let err = ws.fails(&["simulate", "--manifest", m.to_str().unwrap()]);
    assert!(err.contains("m.toml") && err.contains("line 3") && err.contains("shots"), "{err}");
    let err = ws.fails(&["simulate", "--manifest", "missing.toml"]);
    assert!(err.contains("missing.toml"), "{err}");
}

#[test]
fn nominal_corrected_summary_has_overlap() {
    let ws = Workspace::new();
    let m = ws.manifest(
        "m.toml",
        "sequence = \"corrected_HV\"\nanalyses = [\"tomography\"]\n[experiment]\nshots = 2000",
    );
    ws.ok(&["simulate", "--manifest", m.to_str().unwrap(), "--out", "o"]);
    let o = overlap(&json(&ws.path("o/summary.json")));
    assert!((0.0..=1.0).contains(&o));
}

#[test]
fn tomography_examples() {
    let ws = Workspace::new();
    let id = ws.manifest("id.toml", &ideal_manifest("no_scatter", "\"tomography\""));
    ws.ok(&["tomo", "--manifest", id.to_str().unwrap(), "--shots", "100000", "--out", "id"]);
    assert!(overlap(&json(&ws.path("id/tomo_unconditioned.json"))) >= 0.99);

    let sc = ws.manifest("sc.toml", &ideal_manifest("scatter_HV", "\"tomography\""));
    let sc = sc.to_str().unwrap();
    ws.ok(&["simulate", "--manifest", sc, "--shots", "100000", "--out", "sc"]);
    let records = ws.path("sc/records.csv");
    let records = records.to_str().unwrap();
    ws.ok(&["tomo", "--manifest", sc, "--records", records, "--out", "sc"]);
    let unc = overlap(&json(&ws.path("sc/tomo_unconditioned.json")));
    assert!((unc - 0.5).abs() <= 0.02, "{unc}");
    ws.ok(&["tomo", "--manifest", sc, "--records", records, "--filter", "V", "--out", "sc"]);
    assert!(overlap(&json(&ws.path("sc/tomo_v.json"))) >= 0.99);

    // analysis is a pure function of the records file
    let simulated = json(&ws.path("sc/summary.json"));
    let replayed = json(&ws.path("sc/tomo_unconditioned.json"));
    assert_eq!(simulated["tomography"], replayed["tomography"]);
}

#[test]
fn incomplete_records_list_missing_settings() {
    let ws = Workspace::new();
    let m = ws.manifest("m.toml", &ideal_manifest("no_scatter", "\"tomography\""));
    let m = m.to_str().unwrap();
    ws.ok(&["simulate", "--manifest", m, "--shots", "20", "--out", "o"]);
    let text = fs::read_to_string(ws.path("o/records.csv")).unwrap();
    let kept: Vec<&str> = text
        .lines()
        .filter(|l| !(l.split(',').nth(1) == Some("5") || l.split(',').nth(1) == Some("9")))
        .collect();
    fs::write(ws.path("cut.csv"), kept.join("\n") + "\n").unwrap();
    let err = ws.fails(&["tomo", "--manifest", m, "--records", "cut.csv", "--out", "o"]);
    assert!(err.contains("[5, 9]"), "{err}");
}

#[test]
fn ramsey_examples() {
    let ws = Workspace::new();
    let hv = ws.manifest("hv.toml", &ideal_manifest("ramsey_HV", ""));
    let out = ws.ok(&["ramsey", "--manifest", hv.to_str().unwrap(), "--shots", "100000", "--out", "hv"]);
    assert!(out.contains("branch H"));
    let s = json(&ws.path("hv/summary.json"));
    let fits = s["fringes"].as_array().unwrap();
    let fit = |b: &str| fits.iter().find(|f| f["branch"] == b).unwrap()["fit"].clone();
    assert_eq!(fit("H")["harmonic"], 2);
    assert!(fit("V")["amplitude"].as_f64().unwrap() <= 0.03);
    assert!(fit("H")["contrast"].as_f64().unwrap() >= 0.97);
    let table = fs::read_to_string(ws.path("hv/fringes.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 2 * 20);

    let d = ws.manifest("d.toml", &ideal_manifest("ramsey_45", ""));
    ws.ok(&["ramsey", "--manifest", d.to_str().unwrap(), "--shots", "100000", "--out", "d"]);
    let s = json(&ws.path("d/summary.json"));
    let fits = s["fringes"].as_array().unwrap();
    let phase = |b: &str| {
        let f = fits.iter().find(|f| f["branch"] == b).unwrap();
        assert_eq!(f["fit"]["harmonic"], 1);
        f["fit"]["phase"].as_f64().unwrap()
    };
    let split = ((phase("H") - phase("V")).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI).abs();
    assert!(split <= 0.05, "phase split off π by {split}");

    let wrong = ws.manifest("w.toml", "sequence = \"scatter_HV\"");
    let err = ws.fails(&["ramsey", "--manifest", wrong.to_str().unwrap()]);
    assert!(err.contains("Ramsey"), "{err}");
}

#[test]
fn single_point_sweep_matches_simulate() {
    let ws = Workspace::new();
    let m = ws.manifest(
        "m.toml",
        "sequence = \"corrected_HV\"\nanalyses = [\"tomography\", \"ellipsoid\"]\n[experiment]\nshots = 500\nseed = 8",
    );
    let m = m.to_str().unwrap();
    ws.ok(&["simulate", "--manifest", m, "--out", "sim"]);
    ws.ok(&["sweep", "--manifest", m, "--param", "seed", "--grid", "8", "--out", "sw"]);
    let sim = json(&ws.path("sim/summary.json"));
    let sweep = json(&ws.path("sw/sweep.json"));
    assert_eq!(sweep[0]["tomography"], sim["tomography"]);
    assert_eq!(sweep[0]["ellipsoid"], sim["ellipsoid"]);
}

#[test]
fn p_multi_sweep_lowers_corrected_overlap() {
    let ws = Workspace::new();
    let m = ws.manifest(
        "m.toml",
        "sequence = \"corrected_HV\"\nanalyses = [\"tomography\"]\n[experiment]\nshots = 100000\nseed = 12",
    );
    ws.ok(&["sweep", "--manifest", m.to_str().unwrap(), "--param", "p_multi", "--grid", "0,0.05,0.10", "--out", "o"]);
    let mut r = csv::Reader::from_path(ws.path("o/sweep.csv")).unwrap();
    let overlaps: Vec<f64> = r
        .deserialize::<std::collections::HashMap<String, String>>()
        .map(|row| row.unwrap()["identity_overlap"].parse().unwrap())
        .collect();
    assert_eq!(overlaps.len(), 3);
    assert!(overlaps[0] >= overlaps[1] && overlaps[1] >= overlaps[2], "{overlaps:?}");
}

#[test]
fn ellipticity_sweep_purifies_post_states() {
    let ws = Workspace::new();
    let m = ws.manifest("m.toml", "sequence = \"scatter_45\"\n[experiment]\nshots = 100");
    ws.ok(&[
        "sweep", "--manifest", m.to_str().unwrap(), "--param", "ellipticity",
        "--grid", "0,0.39269908169872414,0.7853981633974483", "--out", "o",
    ]);
    let s = json(&ws.path("o/sweep.json"));
    let purity: Vec<f64> = (0..3).map(|k| s[k]["post_state_purity"]["v"].as_f64().unwrap()).collect();
    assert!(purity[0] < purity[1] && purity[1] < purity[2], "{purity:?}");
    assert!((purity[2] - 1.0).abs() < 1e-9);
}

#[test]
fn sweep_errors() {
    let ws = Workspace::new();
    let m = ws.manifest("m.toml", "sequence = \"scatter_45\"\n[experiment]\nshots = 10");
    let m = m.to_str().unwrap();
    let err = ws.fails(&["sweep", "--manifest", m, "--param", "temperature", "--grid", "1"]);
    assert!(err.contains("p_multi") && err.contains("phi_jitter_sigma"), "{err}");
    let out = ws.run(&["sweep", "--manifest", m, "--param", "p_multi"]);
    assert!(!out.status.success());
}
