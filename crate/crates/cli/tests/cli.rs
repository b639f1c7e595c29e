use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const HEADER: &str = "t,dt,length,max_kappa,max_kappa_sqrt_T_minus_t,boundary_dist,boundary_angle,phi_main";

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(format!("{name}.json"))
}

fn fbcsf(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fbcsf")).args(args).env("FBCSF_OUT", out).output().unwrap()
}

fn run_config(config: &Path, out: &Path) -> Output {
    fbcsf(&["run", config.to_str().unwrap()], out)
}

fn write_config(dir: &TempDir, text: &str) -> PathBuf {
    let p = dir.path().join("config.json");
    std::fs::write(&p, text).unwrap();
    p
}

fn report(out: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

#[test]
fn chord_run_writes_outputs() {
    let dir = TempDir::new().unwrap();
    let out = run_config(&scenario("chord"), dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("timeseries.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(HEADER));
    let rows: Vec<&str> = lines.collect();
    assert!(rows.len() >= 2);
    assert!(rows.iter().all(|r| r.split(',').count() == 8));
    let states = std::fs::read_dir(dir.path().join("states")).unwrap().count();
    assert_eq!(states, rows.len());
    let first: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("states/0000.json")).unwrap()).unwrap();
    assert_eq!(first["ambient_dim"], 2);
    assert_eq!(first["nodes"].as_array().unwrap().len(), 64);
    let r = report(dir.path());
    assert!(r["max_displacement"].as_f64().unwrap() <= 1e-10);
    assert_eq!(r["passed"], true);
}

#[test]
fn semicircle_singular_time() {
    let dir = TempDir::new().unwrap();
    let out = run_config(&scenario("semicircle"), dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let t = report(dir.path())["singularity"]["t_est"].as_f64().unwrap();
    assert!((0.49..=0.51).contains(&t), "{t}");
    let csv = std::fs::read_to_string(dir.path().join("timeseries.csv")).unwrap();
    let ratio: f64 = csv.lines().nth(1).unwrap().split(',').nth(4).unwrap().parse().unwrap();
    assert!((ratio - 0.5f64.sqrt()).abs() < 1e-2);
}

#[test]
fn shipped_scenarios_pass() {
    for name in ["orthogonal_arc_3d", "helix", "circle"] {
        let dir = TempDir::new().unwrap();
        let out = run_config(&scenario(name), dir.path());
        assert_eq!(out.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&out.stdout));
    }
}

#[test]
fn reports_are_deterministic() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    for d in [&a, &b] {
        assert_eq!(run_config(&scenario("orthogonal_arc_3d"), d.path()).status.code(), Some(0));
    }
    let read = |d: &TempDir| std::fs::read(d.path().join("report.json")).unwrap();
    assert_eq!(read(&a), read(&b));
    let csv = |d: &TempDir| std::fs::read(d.path().join("timeseries.csv")).unwrap();
    assert_eq!(csv(&a), csv(&b));
}

const CHORD_BODY: &str = r#"
  "initial": { "model": { "kind": "chord", "p": [-2.0, 0.0], "q": [2.0, 0.0] } },
  "flow": { "node_count": NODES, "t_end": 0.1, "output_every": 50 },
  "analyses": [ { "check": "max_displacement", "tol": TOL } ]
"#;

fn chord_config(barrier: Option<&str>, nodes: usize, tol: &str) -> String {
    let body = CHORD_BODY.replace("NODES", &nodes.to_string()).replace("TOL", tol);
    match barrier {
        Some(b) => format!("{{ \"name\": \"c\", \"barrier\": {b}, {body} }}"),
        None => format!("{{ \"name\": \"c\", {body} }}"),
    }
}

const BALL: &str = r#"{ "kind": "sphere", "center": [0.0, 0.0], "radius": 2.0 }"#;

#[test]
fn config_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    for text in [
        chord_config(None, 32, "1e-8"),
        chord_config(Some(BALL), 8, "1e-8"),
        chord_config(Some(BALL), 32, "-1.0"),
        chord_config(Some(BALL), 32, "1e-8").replace("\"flow\"", "\"flwo\""),
        "{ \"name\": ".to_string(),
    ] {
        let out = run_config(&write_config(&dir, &text), &dir.path().join("out"));
        assert_eq!(out.status.code(), Some(2), "{text}");
    }
    let missing = run_config(&dir.path().join("nope.json"), dir.path());
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn well_formed_chord_config_passes() {
    let dir = TempDir::new().unwrap();
    let out = run_config(&write_config(&dir, &chord_config(Some(BALL), 32, "1e-8")), &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn tolerance_failure_exits_1() {
    let dir = TempDir::new().unwrap();
    let text = std::fs::read_to_string(scenario("semicircle")).unwrap().replace("\"tol\": 0.01", "\"tol\": 1e-9");
    let out = run_config(&write_config(&dir, &text), &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("[FAIL] singular_time"));
    assert_eq!(report(&dir.path().join("out"))["passed"], false);
}

#[test]
fn verify_filter_passes() {
    let dir = TempDir::new().unwrap();
    let out = fbcsf(&["verify", "--filter", "semicircle_collapse"], dir.path());
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{text}");
    assert!(text.contains("[PASS]") && text.contains("semicircle_collapse"));
    assert_eq!(text.lines().filter(|l| l.starts_with('[')).count(), 1);
}

#[test]
fn injected_torsion_sign_error_is_caught() {
    let dir = TempDir::new().unwrap();
    let out = fbcsf(&["verify", "--filter", "evolution", "--inject-torsion-sign-error"], dir.path());
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(1), "{text}");
    assert!(text.contains("FAIL residual_evolution_kappa"), "{text}");
}

#[test]
fn models_are_listed() {
    let dir = TempDir::new().unwrap();
    let out = fbcsf(&["models", "--list"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for name in ["chord", "semicircle", "grim_reaper", "orthogonal_arc", "helix"] {
        assert!(text.lines().any(|l| l == name), "{name}");
    }
}

#[test]
fn entropy_command_reports_the_sup() {
    let dir = TempDir::new().unwrap();
    let out = fbcsf(&["entropy", scenario("chord").to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let sup = report(dir.path())["entropy"]["entropy_sup"].as_f64().unwrap();
    // the chord is a flat disk section meeting the ball orthogonally
    assert!((sup - 1.0).abs() <= 1e-3, "{sup}");
}
