use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use liftlab::report::Report;
use tempfile::TempDir;

fn liftlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_liftlab")).args(args).output().unwrap()
}

fn write_config(dir: &TempDir, body: &str) -> PathBuf {
    let p = dir.path().join("config.json");
    std::fs::write(&p, body).unwrap();
    p
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn report(dir: &Path) -> Report {
    Report::read(&dir.join("report.json")).unwrap()
}

const SPHERE_ROTATION: &str = r#"{
    "manifold": {"catalog": "sphere2"},
    "fields": [{"kind": "complete", "catalog": "rotation"}],
    "metric_coeffs": {"a": 1, "b": 0.5, "c": 1},
    "grid": {"count": 30, "seed": 1},
    "outputs": {"report_path": "report.json", "csv_path": "samples.csv"}
}"#;

#[test]
fn sphere_rotation_is_killing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, SPHERE_ROTATION);
    let out = liftlab(&["analyze", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let r = report(dir.path());
    assert_eq!(r.schema, 1);
    assert!(r.passed);
    assert_eq!(r.analyses.len(), 1);
    assert_eq!(r.analyses[0].classification.label(), "killing");
    assert_eq!(r.analyses[0].samples.len(), 30);
    assert_eq!(r.analyses[0].base_rho.unwrap().max_abs(), 0.0);
    let csv = std::fs::read_to_string(dir.path().join("samples.csv")).unwrap();
    assert_eq!(csv.lines().count(), 31);
    assert!(csv.starts_with("manifold,field,kind,a,b,c,point,x,y,omega,residual"));
}

#[test]
fn singular_coefficients_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, &SPHERE_ROTATION.replace(r#""b": 0.5"#, r#""b": 1"#));
    let out = liftlab(&["analyze", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("singular coefficients: ac − b² = 0"), "{}", stderr(&out));
    assert!(!dir.path().join("report.json").exists());
}

#[test]
fn bad_configs_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.json");
    assert_eq!(code(&liftlab(&["analyze", missing.to_str().unwrap()])), 1);
    for body in [
        "{not json",
        r#"{"grid": {"count": 3}}"#,
        r#"{"manifold": {"catalog": "euclidean2"}, "fields": [{"kind": "complete", "V": ["x1", "x2 +"]}]}"#,
        r#"{"manifold": {"dim": 2, "metric": [["1", "0"], ["1", "1"]]}}"#,
    ] {
        let cfg = write_config(&dir, body);
        let out = liftlab(&["analyze", cfg.to_str().unwrap()]);
        assert_eq!(code(&out), 1, "{body}: {}", stderr(&out));
    }
}

#[test]
fn perturbation_exits_2_and_still_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, SPHERE_ROTATION);
    let out = liftlab(&["analyze", cfg.to_str().unwrap(), "--perturb-closed-form"]);
    assert_eq!(code(&out), 2);
    let r = report(dir.path());
    assert!(!r.passed);
    assert!(r.perturb_closed_form);
    assert_eq!(r.exit_code, 2);
    assert_eq!(r.cross_check_failures.len(), 1);
    assert!(r.analyses[0].cross_check_failed());
}

#[test]
fn verify_lemma_suites_on_full_catalog() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, r#"{"grid": {"count": 8, "seed": 2}, "outputs": {"report_path": "report.json"}}"#);
    let out = liftlab(&["verify", cfg.to_str().unwrap(), "--suite", "lemma1", "--suite", "lemma4"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let r = report(dir.path());
    assert_eq!(r.command, "verify");
    assert!(r.analyses.is_empty());
    assert_eq!(r.suites.len(), 2 * 7);
    assert!(r.suites.iter().all(|s| s.passed && s.checks > 0));
    assert!(r.suites.iter().all(|s| s.notes[0].contains("not a proof")));
}

#[test]
fn verify_with_perturbation_fails_lemma4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, SPHERE_ROTATION);
    let out = liftlab(&["verify", cfg.to_str().unwrap(), "--suite", "lemma4-oracle", "--perturb-closed-form"]);
    assert_eq!(code(&out), 2);
    assert!(!report(dir.path()).suites[0].violations.is_empty());
}

#[test]
fn unknown_suite_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, SPHERE_ROTATION);
    let out = liftlab(&["verify", cfg.to_str().unwrap(), "--suite", "lemma9"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("unknown suite `lemma9`"));
    let out = liftlab(&["verify", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
}

#[test]
fn theorem1_with_conformal_field_is_vacuous() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        &dir,
        r#"{"manifold": {"catalog": "euclidean2"},
            "fields": [{"kind": "complete", "name": "z2", "V": ["x1^2 - x2^2", "2*x1*x2"]},
                       {"kind": "complete", "catalog": "dilation"}],
            "grid": {"count": 10, "seed": 3},
            "outputs": {"report_path": "report.json"}}"#,
    );
    let out = liftlab(&["verify", cfg.to_str().unwrap(), "--suite", "theorem1"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let s = &report(dir.path()).suites[0];
    assert!(s.passed);
    assert!(s.notes.iter().any(|n| n.starts_with("z2^C") && n.contains("vacuous instance")), "{:?}", s.notes);
    assert!(s.instances.iter().any(|i| i.field == "dilation^C" && i.classification.label() == "homothetic"));
}

#[test]
fn analyze_runs_configured_suites() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        &dir,
        r#"{"manifold": {"catalog": "torus_flat2"},
            "fields": [{"kind": "vertical", "catalog": "constant"},
                       {"kind": "base", "catalog": "wave"},
                       {"kind": "fiber_preserving", "catalog": "vertical_constant"}],
            "grid": {"mode": "lattice", "count": 9},
            "suites": ["theorem1", "theorem2", "eq1", "lemma3"],
            "outputs": {"report_path": "report.json"}}"#,
    );
    let out = liftlab(&["analyze", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let r = report(dir.path());
    assert_eq!(r.analyses.len(), 3 + 1 + 3);
    let names: Vec<&str> = r.suites.iter().map(|s| s.suite.as_str()).collect();
    assert_eq!(names, ["theorem1", "theorem2", "eq1", "lemma3-duality"]);
    let v = r.analyses.iter().find(|a| a.field == "constant^V").unwrap();
    assert_eq!(v.base_rho.unwrap().max_abs(), 0.0);
    let t1 = &r.suites[0];
    assert!(t1.instances.iter().any(|i| i.field == "constant^C") && t1.instances.iter().any(|i| i.field == "wave^C"));
    let base = r.analyses.iter().find(|a| a.field == "wave").unwrap();
    assert!(base.coeffs.is_none() && base.kind.is_none());
}

#[test]
fn catalog_lists_json_lines() {
    let out = liftlab(&["catalog"]);
    assert_eq!(code(&out), 0);
    let lines: Vec<serde_json::Value> =
        String::from_utf8(out.stdout).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(lines.iter().any(|l| l["type"] == "manifold" && l["name"] == "sphere2"));
    assert!(lines.iter().any(|l| l["type"] == "field" && l["name"] == "dilation"));
    assert!(lines.iter().any(|l| l["type"] == "suite" && l["name"] == "theorem2"));
    assert_eq!(liftlab(&["catalog"]).stdout, liftlab(&["catalog"]).stdout);
}

#[test]
fn reports_are_deterministic_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, SPHERE_ROTATION);
    let run = |threads: &str| {
        let out = Command::new(env!("CARGO_BIN_EXE_liftlab"))
            .args(["analyze", cfg.to_str().unwrap()])
            .env("LIFTLAB_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        let text = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
        text.lines().filter(|l| !l.trim_start().starts_with("\"wall_time_s\"")).collect::<Vec<_>>().join("\n")
    };
    let a = run("1");
    assert_eq!(a, run("1"));
    assert_eq!(a, run("3"));
    let out = Command::new(env!("CARGO_BIN_EXE_liftlab"))
        .args(["analyze", cfg.to_str().unwrap()])
        .env("LIFTLAB_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
}

#[test]
fn report_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        &dir,
        r#"{"manifold": {"catalog": "euclidean2"},
            "fields": [{"kind": "complete", "catalog": "conformal_z2"},
                       {"kind": "fiber_preserving", "name": "fd", "alpha": [["1", "0"], ["0", "1"]]},
                       {"kind": "base", "catalog": "dilation"}],
            "grid": {"count": 8},
            "suites": ["theorem2"],
            "outputs": {"report_path": "report.json"}}"#,
    );
    assert_eq!(code(&liftlab(&["analyze", cfg.to_str().unwrap()])), 0);
    let path = dir.path().join("report.json");
    let r = Report::read(&path).unwrap();
    let again = dir.path().join("again.json");
    r.write(&again).unwrap();
    assert_eq!(Report::read(&again).unwrap(), r);
    assert_eq!(std::fs::read_to_string(&again).unwrap(), std::fs::read_to_string(&path).unwrap());
}

#[test]
fn relative_outputs_follow_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let sub = dir.path().join("runs");
    std::fs::create_dir(&sub).unwrap();
    let cfg = sub.join("c.json");
    std::fs::write(&cfg, SPHERE_ROTATION.replace("\"report.json\"", "\"out/r.json\"")).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_liftlab"))
        .args(["analyze", "runs/c.json"])
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(sub.join("out/r.json").exists());
    assert!(sub.join("samples.csv").exists());
}
