use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use miscible_core::mesh::{generate_disk_mesh, load_mesh, mesh_from_json};

fn miscible(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_miscible"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, json: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, json).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn run_writes_report_and_fields() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{"case": "section6", "mesh_m": [16], "tau": [0.03125]}"#,
    );
    let out = dir.path().join("out");
    let output = miscible(&[
        "run",
        "--config",
        &config,
        "--out",
        out.to_str().unwrap(),
        "--dump-fields",
    ]);
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );

    let stdout: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    assert_eq!(stdout["converged"], true);
    assert_eq!(stdout["steps"], 32);
    for key in ["c_l2", "u_l2", "c_linf", "u_linf"] {
        let v = stdout["errors"][key].as_f64().unwrap();
        assert!(v.is_finite() && v > 0.0, "{key} = {v}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report, stdout);
    assert!(out.join("config-echo.json").exists());

    let vtk = fs::read_to_string(out.join("fields_step32.vtk")).unwrap();
    assert_eq!(vtk.lines().next(), Some("# vtk DataFile Version 3.0"));
    assert!(vtk.contains("DATASET UNSTRUCTURED_GRID"));
}

#[test]
fn invalid_time_step_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), r#"{"tau": [0.3]}"#);
    let output = miscible(&[
        "run",
        "--config",
        &config,
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("tau[0]"), "{stderr}");
}

#[test]
fn malformed_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), r#"{"mesh_m": [16, "x"]}"#);
    let output = miscible(&["run", "--config", &config]);
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("mesh_m[1]"));
}

#[test]
fn spatial_study_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{"mesh_m": [8, 12], "tau": [0.125], "t_final": 0.25}"#,
    );
    let out = dir.path().join("study");
    let output = miscible(&[
        "study-spatial",
        "--config",
        &config,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    let csv = fs::read_to_string(out.join("report.csv")).unwrap();
    assert_eq!(String::from_utf8_lossy(&output.stdout), csv);
    assert!(csv.starts_with("h,c_L2,u_L2,c_Linf,u_Linf,c_H1,p_L2,p_grad_L4\n"));
    assert!(csv.lines().last().unwrap().starts_with("order,"));
    assert!(out.join("report.json").exists() && out.join("config-echo.json").exists());
}

#[test]
fn conflicting_protocol_flags_are_rejected() {
    let output = miscible(&["study-temporal", "--fast", "--paper-exact"]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn mesh_gen_to_stdout_and_file() {
    let output = miscible(&["mesh-gen", "--m", "16"]);
    assert!(output.status.success());
    let mesh = mesh_from_json(&String::from_utf8(output.stdout).unwrap()).unwrap();
    let expected = generate_disk_mesh([0.5, 0.5], 0.5, 16).unwrap();
    assert_eq!(mesh.n_vertices(), expected.n_vertices());
    assert_eq!(mesh.n_triangles(), expected.n_triangles());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mesh.json");
    let output = miscible(&[
        "mesh-gen",
        "--m",
        "24",
        "--center",
        "0",
        "0",
        "--radius",
        "2",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    assert!(output.stdout.is_empty());
    let mesh = load_mesh(&path).unwrap();
    let expected = generate_disk_mesh([0.0, 0.0], 2.0, 24).unwrap();
    assert_eq!(mesh.n_triangles(), expected.n_triangles());
    assert!((mesh.total_area() - expected.total_area()).abs() < 1e-12);

    let bad = miscible(&["mesh-gen", "--m", "3"]);
    assert_eq!(bad.status.code(), Some(1));
}
