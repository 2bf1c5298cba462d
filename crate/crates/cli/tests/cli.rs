use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use jforms::grid::io::read_form;
use serde_json::Value;
use tempfile::TempDir;

fn jforms(dir: &Path, cmd: &str, config: &str, extra: &[&str]) -> Output {
    let cfg = dir.join("config.json");
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_jforms"))
        .arg(cmd)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .args(extra)
        .output()
        .unwrap()
}

fn report(dir: &Path) -> Value {
    serde_json::from_slice(&fs::read(dir.join("out/report.json")).unwrap()).unwrap()
}

const FLAT5: &str = r#"{"grid": {"n": [5, 5, 5, 5]}}"#;
const FLAT3: &str = r#"{"grid": {"n": [3, 3, 3, 3]}}"#;

#[test]
fn betti_on_flat_torus() {
    let dir = TempDir::new().unwrap();
    let out = jforms(dir.path(), "betti", FLAT5, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(dir.path());
    assert_eq!(r["result"]["b"], serde_json::json!([1, 4, 6, 4, 1]));
    assert_eq!(r["result"]["bplus"], 3);
    assert_eq!(r["result"]["bminus"], 3);
    assert_eq!(r["tool"], "jforms");
    assert_eq!(r["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn invariants_on_flat_torus() {
    let dir = TempDir::new().unwrap();
    let out = jforms(dir.path(), "invariants", FLAT5, &[]);
    assert_eq!(out.status.code(), Some(0));
    let r = &report(dir.path())["result"];
    assert_eq!(r["h_minus"], 2);
    assert_eq!(r["h_plus"], 4);
    assert_eq!(r["dim_T_g"], 1);
}

#[test]
fn even_grid_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let out = jforms(dir.path(), "betti", r#"{"grid": {"n": [4, 5, 5, 5]}}"#, &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("odd"), "{err}");
    assert!(!dir.path().join("out/report.json").exists());
}

#[test]
fn all_config_violations_are_listed() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"{"grid": {"n": [4, 3, 3, 3]}, "solver": {"epsilon": -1}, "j": {"type": "conjugated", "amplitude": 0.1, "modes": 0, "seed": 1}}"#;
    let out = jforms(dir.path(), "tame", cfg, &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("3 problems"), "{err}");
}

#[test]
fn unknown_command_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    assert_eq!(jforms(dir.path(), "frobnicate", FLAT3, &[]).status.code(), Some(2));
}

#[test]
fn hodge_parts_written_as_containers_sum_to_input() {
    let dir = TempDir::new().unwrap();
    let out = jforms(dir.path(), "hodge-decompose", FLAT3, &["--seed", "9"]);
    assert_eq!(out.status.code(), Some(0));
    let forms = dir.path().join("out/forms");
    let (_, input) = read_form(&forms.join("input.json")).unwrap();
    let mut sum = read_form(&forms.join("exact.json")).unwrap().1;
    sum.axpy(1.0, &read_form(&forms.join("coexact.json")).unwrap().1);
    sum.axpy(1.0, &read_form(&forms.join("harmonic.json")).unwrap().1);
    assert!(sum.sub(&input).max_abs() < 1e-10);
    assert_eq!(report(dir.path())["seed"], 9);
}

#[test]
fn partner_of_a_supplied_form() {
    let dir = TempDir::new().unwrap();
    let first = jforms(dir.path(), "asd-partner", FLAT3, &[]);
    assert_eq!(first.status.code(), Some(0));
    assert_eq!(report(dir.path())["result"]["input"], "self_dual");
    // feed the anti-self-dual partner back in: the mirrored map applies
    let partner = dir.path().join("partner.json");
    fs::copy(dir.path().join("out/forms/partner.json"), &partner).unwrap();
    let cfg = format!(r#"{{"grid": {{"n": [3, 3, 3, 3]}}, "options": {{"input": "{}"}}}}"#, partner.display());
    let second = jforms(dir.path(), "asd-partner", &cfg, &[]);
    assert_eq!(second.status.code(), Some(0));
    let r = report(dir.path());
    assert_eq!(r["result"]["input"], "anti_self_dual");
    assert!(r["result"]["d_defect"].as_f64().unwrap() < 1e-8);
}

#[test]
fn input_on_the_wrong_grid_is_rejected() {
    let dir = TempDir::new().unwrap();
    assert_eq!(jforms(dir.path(), "hodge-decompose", FLAT3, &[]).status.code(), Some(0));
    let input = dir.path().join("input.json");
    fs::copy(dir.path().join("out/forms/input.json"), &input).unwrap();
    let cfg = format!(r#"{{"grid": {{"n": [5, 5, 5, 5]}}, "options": {{"input": "{}"}}}}"#, input.display());
    assert_eq!(jforms(dir.path(), "hodge-decompose", &cfg, &[]).status.code(), Some(2));
}

#[test]
fn budget_exhaustion_exits_with_undetermined() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"{"grid": {"n": [5, 5, 5, 5]}, "solver": {"budget": 1},
                  "options": {"alpha": {"type": "band_limited", "amplitude": 50, "modes": 4, "seed": 3}}}"#;
    let out = jforms(dir.path(), "tame", cfg, &[]);
    assert_eq!(out.status.code(), Some(3));
    let r = report(dir.path());
    assert_eq!(r["status"], "undetermined");
    assert_eq!(r["result"]["solve"]["status"], "Undetermined");
    assert!(!r["result"]["solve"]["history"].as_array().unwrap().is_empty());
}

#[test]
fn tame_then_compatible() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"{"grid": {"n": [5, 5, 5, 5]},
                  "options": {"alpha": {"type": "constant", "direction": 0, "amplitude": 0.5}}}"#;
    let out = jforms(dir.path(), "tamed-to-compatible", cfg, &[]);
    assert_eq!(out.status.code(), Some(0));
    let r = &report(dir.path())["result"];
    assert_eq!(r["tame"]["status"], "Feasible");
    assert_eq!(r["compatible"]["status"], "Feasible");
    assert!(r["compatible"]["validation"]["passed"].as_bool().unwrap());
    assert!(dir.path().join("out/forms/compatible.json").exists());
}

#[test]
fn sweep_tables_and_fiber_dump() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"{"grid": {"n": [3, 3, 3, 3]}, "options": {"sweep": [3, 5]}, "output": {"fiber_dump": true}}"#;
    assert_eq!(jforms(dir.path(), "betti", cfg, &[]).status.code(), Some(0));
    let table = fs::read_to_string(dir.path().join("out/tables/betti.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("3,1,4,6,4,1,3,3"), "{table}");
    let dump: Value = serde_json::from_slice(&fs::read(dir.path().join("out/fiber_dump.json")).unwrap()).unwrap();
    for key in ["basis", "inputs", "outputs"] {
        assert!(dump.get(key).is_some());
    }
}

#[test]
fn reports_are_reproducible_apart_from_timing() {
    let strip = |dir: &Path| {
        let mut r = report(dir);
        r.as_object_mut().unwrap().remove("timing");
        r
    };
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let cfg = r#"{"grid": {"n": [3, 3, 3, 3]}, "j": {"type": "conjugated", "amplitude": 0.3, "modes": 2, "seed": 4}}"#;
    for d in [&a, &b] {
        assert_eq!(jforms(d.path(), "rank-identity", cfg, &["--seed", "5"]).status.code(), Some(0));
    }
    assert_eq!(strip(a.path()), strip(b.path()));
}

#[test]
fn binary_form_output() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"{"grid": {"n": [3, 3, 3, 3]}, "output": {"form_format": "binary"}}"#;
    assert_eq!(jforms(dir.path(), "compat", cfg, &[]).status.code(), Some(0));
    let (grid, omega) = read_form(&dir.path().join("out/forms/omega.jfrm")).unwrap();
    assert_eq!(grid.n(), [3; 4]);
    assert_eq!(omega.degree(), 2);
}
