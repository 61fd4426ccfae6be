use osgood::cli::{run, EXIT_CERTIFICATION, EXIT_INVALID, EXIT_OK, EXIT_STAGE};
use osgood::fields::FieldSpec;
use osgood::flow::{FlowResult, MapGrid};
use std::path::{Path, PathBuf};

fn osgood(args: &[&str]) -> i32 {
    run(std::iter::once("osgood").chain(args.iter().copied()))
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

fn read(p: &str) -> String {
    std::fs::read_to_string(PathBuf::from(p)).unwrap()
}

#[test]
fn construct_writes_loadable_specs() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [(&str, &[&str]); 5] = [
        ("zero.json", &["construct", "zero"]),
        ("drift.json", &["construct", "drift", "--velocity", "1,0"]),
        ("bump.json", &["construct", "bump", "--center", "0.2,-0.1", "--rho", "0.4", "--eta", "0.5"]),
        ("h3.json", &["construct", "horseshoe", "--N", "3", "--eps", "0.5"]),
        ("ladder.json", &["construct", "example32", "--nmax", "4"]),
    ];
    for (name, args) in cases {
        let out = path(dir.path(), name);
        let mut full = args.to_vec();
        full.extend(["--out", out.as_str()]);
        assert_eq!(osgood(&full), EXIT_OK, "{args:?}");
        FieldSpec::from_json(&read(&out)).unwrap();
    }
    let ladder = FieldSpec::from_json(&read(&path(dir.path(), "ladder.json"))).unwrap();
    assert_eq!(ladder.blocks.len(), 3);
}

#[test]
fn bad_arguments_exit_with_the_input_code() {
    assert_eq!(osgood(&["construct", "horseshoe", "--N", "1"]), EXIT_INVALID);
    assert_eq!(osgood(&["construct", "bump", "--center", "0.2", "--rho", "0.4", "--eta", "0.5"]), EXIT_INVALID);
    assert_eq!(osgood(&["construct", "drift", "--velocity", "1,0", "--tol=-1"]), EXIT_INVALID);
    assert_eq!(osgood(&["frobnicate"]), EXIT_INVALID);
    assert_eq!(osgood(&["flow", "--spec", "/nonexistent/spec.json", "--point", "0,0"]), EXIT_INVALID);
    assert_eq!(osgood(&["--help"]), EXIT_OK);
}

#[test]
fn flow_point_grid_and_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let spec = path(dir.path(), "drift.json");
    assert_eq!(osgood(&["construct", "drift", "--velocity", "0.5,0.25", "--out", &spec]), EXIT_OK);

    let point = path(dir.path(), "point.json");
    assert_eq!(osgood(&["flow", "--spec", &spec, "--point", "0,0", "--time", "2", "--out", &point]), EXIT_OK);
    let r: FlowResult = serde_json::from_str(&read(&point)).unwrap();
    assert!((r.point.x() - 1.0).abs() < 1e-12 || (r.point.x() + 1.0).abs() < 1e-12);
    assert!((r.point.y() - 0.5).abs() < 1e-12);

    let grid = path(dir.path(), "grid.json");
    assert_eq!(osgood(&["flow", "--spec", &spec, "--grid", "8", "--out", &grid]), EXIT_OK);
    let g: MapGrid = serde_json::from_str(&read(&grid)).unwrap();
    assert_eq!(g.images.len(), 64);
    let csv = path(dir.path(), "grid.csv");
    assert_eq!(osgood(&["export", "--input", &grid, "--format", "csv", "--out", &csv]), EXIT_OK);
    assert_eq!(read(&csv).lines().count(), 65);
    assert_eq!(osgood(&["export", "--input", &grid, "--format", "xml"]), EXIT_INVALID);

    let traj = path(dir.path(), "traj.csv");
    assert_eq!(osgood(&["flow", "--spec", &spec, "--point", "0,0", "--trajectory", "--out", &traj]), EXIT_OK);
    assert!(read(&traj).starts_with("t,x,y\n"));

    assert_eq!(osgood(&["flow", "--spec", &spec]), EXIT_INVALID);
}

#[test]
fn entropy_methods_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let h2 = path(dir.path(), "h2.json");
    let zero = path(dir.path(), "zero.json");
    assert_eq!(osgood(&["construct", "horseshoe", "--N", "2", "--out", &h2]), EXIT_OK);
    assert_eq!(osgood(&["construct", "zero", "--out", &zero]), EXIT_OK);

    let cert = path(dir.path(), "cert.json");
    assert_eq!(osgood(&["entropy", "--spec", &h2, "--method", "certify", "--exact", "--out", &cert]), EXIT_OK);
    let v: serde_json::Value = serde_json::from_str(&read(&cert)).unwrap();
    assert_eq!(v["method"], "certify");
    assert_eq!(v["bound"].as_f64().unwrap(), 2f64.ln());
    assert_eq!(osgood(&["entropy", "--spec", &h2, "--method", "certify", "--exact", "--bits", "--out", &cert]), EXIT_OK);
    let v: serde_json::Value = serde_json::from_str(&read(&cert)).unwrap();
    assert!((v["bound"].as_f64().unwrap() - 1.0).abs() < 1e-15);

    // the identity is not a horseshoe
    assert_eq!(osgood(&["entropy", "--spec", &zero, "--method", "certify", "--N", "2", "--frame-scale", "0.3"]), EXIT_CERTIFICATION);
    assert_eq!(osgood(&["certify", "--spec", &zero, "--N", "2", "--frame-scale", "0.3"]), EXIT_CERTIFICATION);
    assert_eq!(osgood(&["entropy", "--spec", &zero, "--method", "certify"]), EXIT_INVALID);

    let cyl = path(dir.path(), "cyl.json");
    let args = ["entropy", "--spec", &h2, "--method", "cylinders", "--exact", "--depth", "3", "--witnesses", "--out", &cyl];
    assert_eq!(osgood(&args), EXIT_OK);
    let v: serde_json::Value = serde_json::from_str(&read(&cyl)).unwrap();
    assert_eq!(v["cylinders"]["realized"], 8);
    let csv = path(dir.path(), "cyl.csv");
    assert_eq!(osgood(&["export", "--input", &cyl, "--out", &csv]), EXIT_OK);
    let text = read(&csv);
    assert!(text.starts_with("word,vertex,x,y\n"));
    assert!(text.lines().any(|l| l.starts_with("1-0-1,0,")));

    let bowen = path(dir.path(), "bowen.json");
    let args = ["entropy", "--spec", &zero, "--method", "bowen", "--n", "200", "--bowen-eps", "0.125", "--samples", "500", "--out", &bowen];
    assert_eq!(osgood(&args), EXIT_OK);
    let v: serde_json::Value = serde_json::from_str(&read(&bowen)).unwrap();
    assert!(v["estimate"].as_f64().unwrap() <= 0.05);
}

#[test]
fn pipeline_round_trip_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(osgood(&["construct", "zero", "--out", &path(dir.path(), "zero.json")]), EXIT_OK);
    let config = serde_json::json!({
        "base_field": "zero.json",
        "eps_budget": 0.5,
        "K": 4f64.ln(),
        "candidates": [5],
        "density": { "per_segment": 200, "square": 41 },
        "profile_grid": { "resolution": 24, "fine": 600, "per_interval": 2 },
        "perturbations": 1
    });
    let cfg = path(dir.path(), "cfg.json");
    std::fs::write(&cfg, config.to_string()).unwrap();
    let report = path(dir.path(), "report.json");
    assert_eq!(osgood(&["generic-perturb", "--config", &cfg, "--out", &report]), EXIT_OK);

    let rows = path(dir.path(), "rows.json");
    assert_eq!(osgood(&["certify", "--report", &report, "--perturbation", "0", "--out", &rows]), EXIT_OK);
    let v: serde_json::Value = serde_json::from_str(&read(&rows)).unwrap();
    assert_eq!(v[0]["above_target"], true);
    assert_eq!(osgood(&["certify", "--report", &report, "--perturbation", "3"]), EXIT_INVALID);

    let csv = path(dir.path(), "report.csv");
    assert_eq!(osgood(&["export", "--input", &report, "--format", "csv", "--out", &csv]), EXIT_OK);
    assert!(read(&csv).lines().any(|l| l == "success,true"));

    // unreachable target: the horseshoe cannot be certified above K
    let mut hard = config.clone();
    hard["K"] = serde_json::json!(100.0);
    hard["candidates"] = serde_json::json!([2, 3]);
    std::fs::write(&cfg, hard.to_string()).unwrap();
    assert_eq!(osgood(&["generic-perturb", "--config", &cfg]), EXIT_STAGE);

    // an irrational translation has no recurrence at this resolution
    let drift = path(dir.path(), "drift.json");
    assert_eq!(osgood(&["construct", "drift", "--velocity", "0.8284271247461903,0", "--out", &drift]), EXIT_OK);
    let mut lost = config.clone();
    lost["base_field"] = serde_json::json!("drift.json");
    lost["rho0"] = serde_json::json!(1e-6);
    lost["seeds"] = serde_json::json!(1);
    lost["m_max"] = serde_json::json!(4);
    std::fs::write(&cfg, lost.to_string()).unwrap();
    assert_eq!(osgood(&["generic-perturb", "--config", &cfg]), EXIT_STAGE);

    let mut broken = config;
    broken["eps_budget"] = serde_json::json!(0.0);
    std::fs::write(&cfg, broken.to_string()).unwrap();
    assert_eq!(osgood(&["generic-perturb", "--config", &cfg]), EXIT_INVALID);
}
