use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use serde_json::Value;
use tempfile::TempDir;

fn rhotraj(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rhotraj"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

struct Solved {
    _dir: TempDir,
    scenario: PathBuf,
    out: PathBuf,
}

/// One short RHO solve shared by the tests that only read its files.
fn solved() -> &'static Solved {
    static CELL: OnceLock<Solved> = OnceLock::new();
    CELL.get_or_init(|| {
        let dir = TempDir::new().unwrap();
        let scenario = dir.path().join("scenario.json");
        let out = dir.path().join("run");
        let g = rhotraj(&[
            "generate", "--nodes", "2", "--side", "600", "--period", "90", "--seed", "3",
            "--delta1", "30", "--delta2", "60", "--window", "45", "--te", "30",
            "--out", scenario.to_str().unwrap(),
        ]);
        assert!(g.status.success(), "{}", stdout(&g));
        let s = rhotraj(&[
            "solve", "--scenario", scenario.to_str().unwrap(), "--method", "rho",
            "--out", out.to_str().unwrap(),
        ]);
        assert!(s.status.success(), "{}", stdout(&s));
        Solved { _dir: dir, scenario, out }
    })
}

fn validate(scenario: &Path, traj: &Path, sched: &Path) -> Output {
    rhotraj(&[
        "validate",
        "--scenario", scenario.to_str().unwrap(),
        "--trajectory", traj.to_str().unwrap(),
        "--schedule", sched.to_str().unwrap(),
    ])
}

#[test]
fn solve_writes_the_three_files() {
    let s = solved();
    for f in ["trajectory.csv", "schedule.csv", "report.json"] {
        assert!(s.out.join(f).exists(), "{f}");
    }
    let report: Value = serde_json::from_str(&fs::read_to_string(s.out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["method"], "rho");
    assert!(report["ee_bpj"].as_f64().unwrap() > 0.0);
    assert_eq!(report["windows"].as_array().unwrap().len(), 3);
    assert_eq!(report["config_echo"]["execute_s"], 30.0);
    let traj = fs::read_to_string(s.out.join("trajectory.csv")).unwrap();
    assert!(traj.starts_with("t_s,dt_s,qx_m,qy_m,vx_mps,vy_mps,ax_mps2,ay_mps2\n"));
}

#[test]
fn solver_output_validates() {
    let s = solved();
    let o = validate(&s.scenario, &s.out.join("trajectory.csv"), &s.out.join("schedule.csv"));
    let text = stdout(&o);
    assert!(o.status.success(), "{text}");
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS ")).count(), 8, "{text}");
    assert!(!text.contains("FAIL"));
}

#[test]
fn corrupted_speed_fails_validation() {
    let s = solved();
    let dir = TempDir::new().unwrap();
    let traj = fs::read_to_string(s.out.join("trajectory.csv")).unwrap();
    // push one knot's vx far beyond the speed limit
    let mut lines: Vec<String> = traj.lines().map(String::from).collect();
    let mut cols: Vec<String> = lines[3].split(',').map(String::from).collect();
    cols[4] = "90".into();
    lines[3] = cols.join(",");
    let bad = dir.path().join("trajectory.csv");
    fs::write(&bad, lines.join("\n") + "\n").unwrap();
    let o = validate(&s.scenario, &bad, &s.out.join("schedule.csv"));
    let text = stdout(&o);
    assert_eq!(o.status.code(), Some(1), "{text}");
    assert!(text.contains("FAIL speed_max"), "{text}");
    assert!(text.contains("FAIL dynamics"), "{text}");
}

#[test]
fn overfull_schedule_fails_validation() {
    let s = solved();
    let dir = TempDir::new().unwrap();
    let sched = fs::read_to_string(s.out.join("schedule.csv")).unwrap();
    let mut lines: Vec<String> = sched.lines().map(String::from).collect();
    lines[1] = "0,0.7,0.7".into();
    let bad = dir.path().join("schedule.csv");
    fs::write(&bad, lines.join("\n") + "\n").unwrap();
    let o = validate(&s.scenario, &s.out.join("trajectory.csv"), &bad);
    let text = stdout(&o);
    assert_eq!(o.status.code(), Some(1), "{text}");
    assert!(text.contains("FAIL schedule_simplex"), "{text}");
    assert!(text.contains("PASS schedule_nonneg"), "{text}");
}

#[test]
fn missing_scenario_is_a_structured_error() {
    let dir = TempDir::new().unwrap();
    let o = rhotraj(&[
        "solve", "--scenario", "/nonexistent/scenario.json", "--method", "conventional",
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let doc: Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(doc["error"], "scenario_not_found");
    assert!(doc["message"].as_str().unwrap().contains("nonexistent"));
}

#[test]
fn bad_parameters_are_rejected() {
    let s = solved();
    let dir = TempDir::new().unwrap();
    // the executed part cannot exceed the window
    let o = rhotraj(&[
        "solve", "--scenario", s.scenario.to_str().unwrap(), "--method", "rho",
        "--te", "60", "--window", "45", "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let doc: Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(doc["error"], "invalid_parameter");
}

#[test]
fn montecarlo_is_reproducible() {
    let s = solved();
    let args = |seed: &str| {
        rhotraj(&[
            "montecarlo",
            "--scenario", s.scenario.to_str().unwrap(),
            "--trajectory", s.out.join("trajectory.csv").to_str().unwrap(),
            "--schedule", s.out.join("schedule.csv").to_str().unwrap(),
            "--samples", "2000", "--seed", seed,
        ])
    };
    let (a, b, c) = (args("5"), args("5"), args("6"));
    assert!(a.status.success(), "{}", stdout(&a));
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
    let doc: Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(doc["pass"], true);
    assert_eq!(doc["nodes"].as_array().unwrap().len(), 2);
}

#[test]
fn solve_is_deterministic_apart_from_timing() {
    let s = solved();
    let dir = TempDir::new().unwrap();
    let again = dir.path().join("again");
    let o = rhotraj(&[
        "solve", "--scenario", s.scenario.to_str().unwrap(), "--method", "rho",
        "--out", again.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    for f in ["trajectory.csv", "schedule.csv"] {
        assert_eq!(fs::read(s.out.join(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f}");
    }
    let strip = |p: &Path| {
        let mut v: Value = serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("timing");
        v
    };
    assert_eq!(strip(&s.out.join("report.json")), strip(&again.join("report.json")));
}

#[test]
fn bench_writes_one_row_per_cell() {
    let s = solved();
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("bench.csv");
    let o = rhotraj(&[
        "bench", "--scenario", s.scenario.to_str().unwrap(), "--t-list", "60",
        "--methods", "conventional,rho", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stdout(&o));
    let text = fs::read_to_string(out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t_s,method,te_s,window_s,wall_s,ee_bpj,iters,status");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].contains(",conventional,") && lines[2].contains(",rho,"));
    assert!(lines[1..].iter().all(|l| l.ends_with(",ok")));
}
