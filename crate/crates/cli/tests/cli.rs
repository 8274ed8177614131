use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use shapeopt::mesh::gmsh::{load_gmsh, MarkerMap};
use shapeopt_cli::{EXIT_CONFIG, EXIT_CONVERGED, EXIT_ITERATION_CAP, EXIT_MESH_INVALID};
use tempfile::TempDir;

const COARSE: &str = r#"
[mesh.geometry]
obstacle_segments = 48
far_field_size = 0.6
"#;

fn shapeopt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shapeopt"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn gen_mesh_writes_loadable_msh() {
    let tmp = TempDir::new().unwrap();
    let file = tmp.path().join("m64.msh");
    let o = shapeopt(&["gen-mesh", "-n", "64", "--output", file.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(EXIT_CONVERGED), "{}", stderr(&o));
    let mesh = load_gmsh(&file, &MarkerMap::default()).unwrap();
    assert_eq!(mesh.obstacle_loop().unwrap().len(), 64);
    assert!(mesh.element_quality().worst.is_finite());
}

#[test]
fn gen_mesh_with_633_obstacle_edges() {
    let tmp = TempDir::new().unwrap();
    let file = tmp.path().join("m633.msh");
    let o = shapeopt(&["gen-mesh", "-n", "633", "--output", file.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(EXIT_CONVERGED), "{}", stderr(&o));
    assert!(stdout(&o).contains("633 obstacle edges"));
    let mesh = load_gmsh(&file, &MarkerMap::default()).unwrap();
    assert_eq!(mesh.obstacle_loop().unwrap().len(), 633);
}

#[test]
fn gen_mesh_rejects_infeasible_radius() {
    let tmp = TempDir::new().unwrap();
    let file = tmp.path().join("bad.msh");
    let o = shapeopt(&[
        "gen-mesh",
        "--radius",
        "3",
        "--output",
        file.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(EXIT_CONFIG));
    assert!(stderr(&o).contains("infeasible geometry"));
    assert!(!file.exists());
}

#[test]
fn malformed_config_reports_line_and_writes_nothing() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let cfg = write_config(tmp.path(), "bad.toml", "seed = 1\n[optimizer]\nmemry = 3\n");
    let o = shapeopt(&["run", "--config", &cfg, "--output", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(EXIT_CONFIG));
    let err = stderr(&o);
    assert!(err.contains("line 3") && err.contains("memry"), "{err}");
    assert!(!out.exists());

    let cfg = write_config(tmp.path(), "neg.toml", "[optimizer]\ndelta_j = -1.0\n");
    let o = shapeopt(&["run", "--config", &cfg, "--output", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(EXIT_CONFIG));
    assert!(stderr(&o).contains("`optimizer`"));
    assert!(!out.exists());
}

#[test]
fn run_writes_all_outputs_and_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let text =
        format!("{COARSE}\n[optimizer]\nmax_inner_iterations = 2\nmax_outer_iterations = 1\n");
    let cfg = write_config(tmp.path(), "run.toml", &text);
    let mut runs = Vec::new();
    for name in ["a", "b"] {
        let out = tmp.path().join(name);
        let o = shapeopt(&[
            "run",
            "--config",
            &cfg,
            "--output",
            out.to_str().unwrap(),
            "--snapshots",
            "1",
        ]);
        assert_eq!(o.status.code(), Some(EXIT_ITERATION_CAP), "{}", stderr(&o));
        runs.push(out);
    }
    let a = &runs[0];
    for f in [
        "run.csv",
        "multipliers.csv",
        "final.vtu",
        "summary.json",
        "config.toml",
    ] {
        assert!(a.join(f).exists(), "missing {f}");
    }
    for i in 0..=2 {
        assert!(a.join(format!("snapshots/iter_{i:05}.vtu")).exists());
    }
    let csv = fs::read_to_string(a.join("run.csv")).unwrap();
    assert!(csv.starts_with("iter,J,L_A,c_norm,worst_quality,step_norm,scale,seconds,"));
    assert_eq!(csv.lines().count(), 3);

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["status"], "iteration-cap");
    assert_eq!(summary["exit_code"], EXIT_ITERATION_CAP);
    assert_eq!(summary["inner_iterations"], 2);
    assert!(summary["J"].as_f64().unwrap() > 0.0);
    assert!(summary["worst_quality"].as_f64().unwrap() >= 1.0);

    let echo = fs::read_to_string(a.join("config.toml")).unwrap();
    assert!(echo.starts_with(&format!("# shapeopt {}", shapeopt_cli::VERSION)));
    // the echo is itself a valid configuration of the same run
    let reparsed = shapeopt_cli::ExperimentConfig::parse(&echo).unwrap();
    assert_eq!(reparsed.optimizer.max_inner_iterations, 2);
    assert_eq!(reparsed.snapshot_every, 1);
    assert!(!echo.contains("[optimizer.metric]"));

    for f in ["run.csv", "multipliers.csv", "summary.json", "final.vtu"] {
        assert_eq!(
            fs::read(runs[0].join(f)).unwrap(),
            fs::read(runs[1].join(f)).unwrap(),
            "{f} differs between identical runs"
        );
    }
}

#[test]
fn mesh_invalid_termination_has_its_own_exit_code() {
    let tmp = TempDir::new().unwrap();
    // no trial mesh can meet a quality cap of 1
    let text = format!("{COARSE}\n[optimizer.step]\nquality_cap = 1.0\n");
    let cfg = write_config(tmp.path(), "cap.toml", &text);
    let out = tmp.path().join("out");
    let o = shapeopt(&["run", "--config", &cfg, "--output", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(EXIT_MESH_INVALID), "{}", stderr(&o));
    let summary = fs::read_to_string(out.join("summary.json")).unwrap();
    assert!(summary.contains("\"mesh-invalid\""));
}

#[test]
fn mesh_file_source_is_resolved_next_to_the_config() {
    let tmp = TempDir::new().unwrap();
    let o = shapeopt(&[
        "gen-mesh",
        "-n",
        "40",
        "--far-field-size",
        "0.7",
        "--output",
        tmp.path().join("m.msh").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(EXIT_CONVERGED));
    let text = "[mesh]\nsource = \"file\"\npath = \"m.msh\"\n[optimizer]\nmax_inner_iterations = 1\nmax_outer_iterations = 1\n";
    let cfg = write_config(tmp.path(), "file.toml", text);
    let out = tmp.path().join("out");
    let o = shapeopt(&["run", "--config", &cfg, "--output", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(EXIT_ITERATION_CAP), "{}", stderr(&o));
    let summary = fs::read_to_string(out.join("summary.json")).unwrap();
    assert!(summary.contains("\"obstacle_edges\": 40"));
}

fn compare_columns(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn compare_with_cap_one_gives_one_row_per_run() {
    let tmp = TempDir::new().unwrap();
    let text = format!(
        "fixed_multipliers = [-0.9, 0.0, -26.5]\n{COARSE}\n[optimizer]\nmax_inner_iterations = 1\n"
    );
    let cfg = write_config(tmp.path(), "cmp.toml", &text);
    let out = tmp.path().join("out");
    let o = shapeopt(&[
        "compare",
        "--config",
        &cfg,
        "--output",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(EXIT_CONVERGED), "{}", stderr(&o));
    let rows = compare_columns(&fs::read_to_string(out.join("compare.csv")).unwrap());
    assert_eq!(
        rows[0],
        [
            "iter",
            "steklov-poincare_J",
            "steklov-poincare_worst_quality",
            "laplace-beltrami_J",
            "laplace-beltrami_worst_quality"
        ]
    );
    assert_eq!(rows.len(), 2);
    assert!(rows[1].iter().all(|c| !c.is_empty()));
    for leg in ["steklov-poincare", "laplace-beltrami"] {
        assert!(out.join(leg).join("summary.json").exists());
    }
}

#[test]
fn compare_of_identical_legs_gives_identical_columns() {
    let tmp = TempDir::new().unwrap();
    let text = format!(
        "fixed_multipliers = [-0.9, 0.0, -26.5]\n{COARSE}\n[optimizer]\nmax_inner_iterations = 4\n\n\
         [[compare.legs]]\nname = \"first\"\n\n[[compare.legs]]\nname = \"second\"\n"
    );
    let cfg = write_config(tmp.path(), "same.toml", &text);
    let out = tmp.path().join("out");
    let o = shapeopt(&[
        "compare",
        "--config",
        &cfg,
        "--output",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(EXIT_CONVERGED), "{}", stderr(&o));
    let rows = compare_columns(&fs::read_to_string(out.join("compare.csv")).unwrap());
    assert!(rows.len() > 2);
    for row in &rows[1..] {
        assert_eq!(row[1], row[3]);
        assert_eq!(row[2], row[4]);
    }
}

#[test]
fn compare_continues_when_one_leg_fails() {
    let tmp = TempDir::new().unwrap();
    // the second leg cannot write its output directory
    let text = format!(
        "fixed_multipliers = [-0.9, 0.0, -26.5]\n{COARSE}\n[optimizer]\nmax_inner_iterations = 2\n\n\
         [[compare.legs]]\nname = \"good\"\n\n[[compare.legs]]\nname = \"blocked\"\n"
    );
    let cfg = write_config(tmp.path(), "fail.toml", &text);
    let out = tmp.path().join("out");
    fs::create_dir_all(&out).unwrap();
    fs::write(out.join("blocked"), "not a directory").unwrap();
    let o = shapeopt(&[
        "compare",
        "--config",
        &cfg,
        "--output",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(shapeopt_cli::EXIT_FAILURE));
    assert!(stderr(&o).contains("blocked: error"));
    assert!(out.join("good").join("summary.json").exists());
    let rows = compare_columns(&fs::read_to_string(out.join("compare.csv")).unwrap());
    assert_eq!(rows.len(), 3);
    for row in &rows[1..] {
        assert!(!row[1].is_empty() && row[3].is_empty());
    }
}

#[test]
fn verify_passes_on_default_mesh() {
    let o = shapeopt(&["verify"]);
    let text = stdout(&o);
    assert_eq!(o.status.code(), Some(EXIT_CONVERGED), "{text}");
    assert!(!text.contains("FAIL"));
    for name in [
        "convergence-orders",
        "fd-hadamard",
        "shoelace-obstacle",
        "riesz-laplace-beltrami",
    ] {
        assert!(text.contains(&format!("PASS {name}")), "{text}");
    }
}

#[test]
fn verify_detects_flipped_derivative_sign() {
    let o = shapeopt(&["verify", "--flip-derivative-sign"]);
    let text = stdout(&o);
    assert_ne!(o.status.code(), Some(EXIT_CONVERGED));
    assert!(text.contains("FAIL fd-hadamard"), "{text}");
    assert!(text.contains("PASS riesz-steklov-poincare"), "{text}");
}
