use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn mwtunnel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mwtunnel"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = mwtunnel(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn bics_writes_tables_with_sidecars() {
    let dir = TempDir::new().unwrap();
    ok(&["bics", "--out", arg(dir.path())]);
    assert_eq!(
        header(&dir.path().join("bics.csv")),
        "n,branch,varpi,omega0_exact,residual,exact,reZ,imZ,method"
    );
    let rows: Vec<String> = fs::read_to_string(dir.path().join("bics.csv"))
        .unwrap()
        .lines()
        .map(String::from)
        .collect();
    assert_eq!(rows.len(), 4);
    let first: Vec<&str> = rows[1].split(',').collect();
    let varpi: f64 = first[2].parse().unwrap();
    assert!((varpi - std::f64::consts::PI.powi(2) / 50.0).abs() < 1e-10);
    let side = json(&dir.path().join("bics.csv.json"));
    assert_eq!(side["scenario"], "bics");
    assert_eq!(side["rows"], 3);
    let manifest = json(&dir.path().join("run_manifest.json"));
    assert_eq!(manifest["resolved"]["thresholds"]["eps_edge"], 1e-4);
    assert_eq!(
        manifest["resolved"]["config"]["positions_zbar"],
        serde_json::json!([0.0, 5.0])
    );
}

#[test]
fn spectrum_output_is_deterministic() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    ok(&["spectrum", "--range", "-0.1:0.4:11", "--out", arg(a.path())]);
    ok(&[
        "spectrum",
        "--range",
        "-0.1:0.4:11",
        "--threads",
        "1",
        "--out",
        arg(b.path()),
    ]);
    for f in ["spectrum_scan.csv", "spectrum_scan.csv.json", "run_manifest.json"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
    assert_eq!(
        header(&a.path().join("spectrum_scan.csv")),
        "param,branch,kind,varpi,reZ,imZ"
    );
}

#[test]
fn scenario_file_with_overrides() {
    let dir = TempDir::new().unwrap();
    let scen = dir.path().join("two_site.json");
    fs::write(
        &scen,
        r#"{
  "kind": "dynamics",
  "n_sites": 2,
  "positions_zbar": [0.0, 5.0],
  "omega0_wtilde": 0.3,
  "omega_rabi_wtilde": 0.13,
  "initial_site": 1,
  "units": {"trap_frequency_hz": 40000.0, "oscillator_length_m": 6.5e-11},
  "t_max": 10.0,
  "h": 0.05
}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    ok(&["run", arg(&scen), "--omega0", "-0.02", "--out", arg(&out)]);
    assert_eq!(
        header(&out.join("trajectory.csv")),
        "t,re_c1,im_c1,re_c2,im_c2,abs_c1,abs_c2,trapped_norm"
    );
    assert_eq!(header(&out.join("asymptotic.csv")), "varpi,site,re_coeff,im_coeff");
    assert_eq!(json(&out.join("trajectory.csv.json"))["rows"], 201);
    let m = json(&out.join("run_manifest.json"));
    assert_eq!(m["resolved"]["scenario"], "two_site");
    assert_eq!(m["resolved"]["config"]["omega0_wtilde"], -0.02);
    assert_eq!(m["resolved"]["h"], 0.05);
    let summary = json(&out.join("dynamics_summary.json"));
    assert_eq!(summary["bound_states"].as_array().unwrap().len(), 2);
}

#[test]
fn phase_diagram_csv_schemas() {
    let dir = TempDir::new().unwrap();
    ok(&[
        "phase-diagram",
        "--d-range",
        "4:10:4",
        "--omega0-range",
        "-0.05:0.3:5",
        "--n-max",
        "1",
        "--out",
        arg(dir.path()),
    ]);
    let phase = fs::read_to_string(dir.path().join("phase_diagram.csv")).unwrap();
    assert_eq!(phase.lines().next().unwrap(), "d,omega0,n_boc");
    assert_eq!(phase.lines().count(), 21);
    assert!(phase
        .lines()
        .skip(1)
        .all(|l| l.split(',').nth(2).unwrap().parse::<usize>().unwrap() <= 2));
    assert_eq!(header(&dir.path().join("bic_curves.csv")), "n,d,omega0_exact,varpi");
}

#[test]
fn reproduce_fig2_writes_scan_and_three_trajectories() {
    let dir = TempDir::new().unwrap();
    ok(&["reproduce", "fig2", "--t-max", "5", "--out", arg(dir.path())]);
    for f in [
        "spectrum_scan.csv",
        "w0_m0.02_trajectory.csv",
        "w0_0.06_trajectory.csv",
        "w0_bic_trajectory.csv",
    ] {
        assert!(dir.path().join(f).exists(), "{f}");
        assert!(dir.path().join(format!("{f}.json")).exists(), "{f} sidecar");
    }
    assert_eq!(
        json(&dir.path().join("run_manifest.json"))["resolved"]["target"],
        "fig2"
    );
}

#[test]
fn schema_errors_exit_1() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"kind": "dynamics", "omega0": 0.1}"#).unwrap();
    let out = mwtunnel(&["run", arg(&bad), "--out", arg(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown keys"));

    fs::write(&bad, "{ not json").unwrap();
    assert_eq!(mwtunnel(&["run", arg(&bad)]).status.code(), Some(1));

    let out = mwtunnel(&["dynamics", "--omega-rabi", "-1", "--out", arg(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("drive must be non-negative"));

    assert_eq!(mwtunnel(&["dynamics", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(
        mwtunnel(&["spectrum", "--range", "0.4:0.1:5", "--out", arg(dir.path())])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn numerical_failure_exits_2_with_module() {
    let dir = TempDir::new().unwrap();
    // Too few modes for the box: the Nyquist mode still couples.
    let out = mwtunnel(&[
        "verify",
        "--oracle-L",
        "400",
        "--oracle-K",
        "64",
        "--t-max",
        "5",
        "--out",
        arg(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("[oracle]"));
}

#[test]
fn verify_reports_agreement() {
    let dir = TempDir::new().unwrap();
    ok(&[
        "verify",
        "--omega0",
        "0.4",
        "--n-sites",
        "1",
        "--t-max",
        "30",
        "--out",
        arg(dir.path()),
    ]);
    let r = json(&dir.path().join("verify_report.json"));
    assert_eq!(r["passed"], true);
    assert!(r["trajectory_deviation"].as_f64().unwrap() < 2e-3);
    assert_eq!(
        header(&dir.path().join("verify_oracle.csv")),
        "t,re_c1,im_c1,abs_c1,trapped_norm"
    );
}

#[test]
fn shipped_scenarios_run() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let dir = TempDir::new().unwrap();
    for name in [
        "two_site_dynamics",
        "three_site_spectrum",
        "oracle_verify",
        "phase_diagram",
    ] {
        let mut scen = json(&root.join(format!("{name}.json")));
        if name == "phase_diagram" {
            scen["d_grid"]["points"] = 3.into();
            scen["omega0_grid"]["points"] = 3.into();
        }
        let path = dir.path().join(format!("{name}.json"));
        fs::write(&path, serde_json::to_string(&scen).unwrap()).unwrap();
        let out = dir.path().join(name);
        ok(&["run", arg(&path), "--t-max", "5", "--out", arg(&out)]);
        assert_eq!(json(&out.join("run_manifest.json"))["resolved"]["scenario"], name);
    }
}
