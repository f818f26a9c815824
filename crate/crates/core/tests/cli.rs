use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use vumps::cli::{RunResult, CHECKPOINT, RESULT, STATE, TRAJECTORY};
use vumps::optimizer::ConvergenceReport;

fn vumps(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vumps"))
        .args(args)
        .env("VUMPS_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn result(dir: &Path) -> RunResult {
    serde_json::from_str(&std::fs::read_to_string(dir.join(RESULT)).unwrap()).unwrap()
}

fn trajectory(dir: &Path) -> Vec<ConvergenceReport> {
    std::fs::read_to_string(dir.join(TRAJECTORY))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).expect("telemetry line parses"))
        .collect()
}

/// Gapped enough to converge in a few dozen iterations at D = 8.
fn tfi(out: &Path, max_iterations: usize) -> String {
    format!(
        r#"
bond_dim = 8
output = "{}"
seed = 3
checkpoint_interval = 4
[model]
name = "tfi"
h = 0.9
[tolerances]
target = 1e-8
max_iterations = {max_iterations}
"#,
        out.display()
    )
}

#[test]
fn tfi_run_converges_and_writes_all_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("tfi");
    let cfg = write_config(
        tmp.path(),
        "tfi.toml",
        &format!(
            "bond_dim = 16\noutput = \"{}\"\n[model]\nname = \"tfi\"\nh = 0.48\n\
             [tolerances]\ntarget = 1e-10\n[measure]\nobservables = [\"x\", \"z\"]\nschmidt_every = 2\n",
            out.display()
        ),
    );
    let run = vumps(&["run", cfg.to_str().unwrap()]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    for f in [TRAJECTORY, RESULT, STATE, CHECKPOINT] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let res = result(&out);
    assert!(res.converged);
    assert!(res.grad_norm < 1e-9);
    assert!(res.delta_e.unwrap().abs() < 1e-8, "{:?}", res.delta_e);
    assert!(res.reference.is_some());
    assert_eq!(res.observables["z"].len(), 1);
    let lines = trajectory(&out);
    assert_eq!(lines.len(), res.iterations);
    for r in &lines {
        assert_eq!(r.schmidt.is_empty(), r.iteration % 2 != 0);
    }
    let state = vumps::umps::read_state(&out.join(STATE)).unwrap();
    assert_eq!(state.bond_dim(), 16);
}

#[test]
fn invalid_model_exits_with_config_code_and_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("never");
    let cfg = write_config(
        tmp.path(),
        "bad.toml",
        &format!("bond_dim = 4\noutput = \"{}\"\n[model]\nname = \"ising\"\n", out.display()),
    );
    let run = vumps(&["run", cfg.to_str().unwrap()]);
    assert_eq!(code(&run), 2);
    assert!(!out.exists());
    assert_eq!(code(&vumps(&["validate", cfg.to_str().unwrap()])), 2);
    let unknown_key = write_config(
        tmp.path(),
        "extra.toml",
        &format!("bond_dim = 4\nspeed = 2\noutput = \"{}\"\n[model]\nname = \"tfi\"\nh = 1.0\n", out.display()),
    );
    assert_eq!(code(&vumps(&["run", unknown_key.to_str().unwrap()])), 2);
    assert!(!out.exists());
}

#[test]
fn validate_accepts_a_good_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "ok.toml", &tfi(&tmp.path().join("x"), 10));
    let v = vumps(&["validate", cfg.to_str().unwrap()]);
    assert_eq!(code(&v), 0);
    assert!(!tmp.path().join("x").exists());
}

#[test]
fn io_failures_use_their_own_code() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&vumps(&["run", tmp.path().join("missing.toml").to_str().unwrap()])), 4);
    let blocker = tmp.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let cfg = write_config(tmp.path(), "c.toml", &tfi(&blocker.join("sub"), 5));
    assert_eq!(code(&vumps(&["run", cfg.to_str().unwrap()])), 4);
}

#[test]
fn iteration_limit_exits_with_not_converged() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("short");
    let cfg = write_config(tmp.path(), "c.toml", &tfi(&out, 3));
    assert_eq!(code(&vumps(&["run", cfg.to_str().unwrap()])), 1);
    let res = result(&out);
    assert!(!res.converged);
    assert_eq!(res.iterations, 3);
}

#[test]
fn resume_reproduces_the_uninterrupted_run() {
    let tmp = tempfile::tempdir().unwrap();
    let full = tmp.path().join("full");
    let split = tmp.path().join("split");
    let c_full = write_config(tmp.path(), "full.toml", &tfi(&full, 400));
    let c_split = write_config(tmp.path(), "split.toml", &tfi(&split, 15));
    assert_eq!(code(&vumps(&["run", c_full.to_str().unwrap()])), 0);
    assert_eq!(code(&vumps(&["run", c_split.to_str().unwrap()])), 1);
    assert_eq!(trajectory(&split).len(), 15);
    // Lines written after the snapshot are dropped on resume.
    let log = split.join(TRAJECTORY);
    let mut text = std::fs::read_to_string(&log).unwrap();
    text.push_str("{\"stale\": true}\n");
    std::fs::write(&log, text).unwrap();
    let ck = split.join(CHECKPOINT);
    let resumed = vumps(&["resume", ck.to_str().unwrap(), "--max-iterations", "400"]);
    assert_eq!(code(&resumed), 0, "{}", String::from_utf8_lossy(&resumed.stderr));
    let (a, b) = (result(&full), result(&split));
    assert_eq!(a.iterations, b.iterations);
    assert!((a.energy - b.energy).abs() < 1e-10, "{} vs {}", a.energy, b.energy);
    let (ta, tb) = (trajectory(&full), trajectory(&split));
    assert_eq!(ta.len(), tb.len());
    for (x, y) in ta.iter().zip(&tb) {
        assert_eq!(x.iteration, y.iteration);
        assert!((x.energy - y.energy).abs() < 1e-10);
    }
}

#[test]
fn extrapolate_needs_three_bond_dimensions() {
    let tmp = tempfile::tempdir().unwrap();
    let mut dims = Vec::new();
    for dim in [4usize, 6, 8] {
        let out = tmp.path().join(format!("d{dim}"));
        let cfg = write_config(
            tmp.path(),
            &format!("d{dim}.toml"),
            &format!(
                "bond_dim = {dim}\noutput = \"{}\"\n[model]\nname = \"tfi\"\nh = 0.9\n\
                 [tolerances]\ntarget = 1e-7\n",
                out.display()
            ),
        );
        assert_eq!(code(&vumps(&["run", cfg.to_str().unwrap()])), 0);
        dims.push(dim);
        let pattern = tmp.path().join("d*/result.json");
        let ex = vumps(&["extrapolate", pattern.to_str().unwrap()]);
        if dims.len() < 3 {
            assert_eq!(code(&ex), 2);
        } else {
            assert_eq!(code(&ex), 0, "{}", String::from_utf8_lossy(&ex.stderr));
            let fit: vumps::cli::Extrapolation = serde_json::from_slice(&ex.stdout).unwrap();
            assert_eq!(fit.points.len(), 3);
            assert!(fit.reference.is_some());
            assert!(fit.power_law.exponent > 0.0 && fit.power_law.exponent <= 8.0);
        }
    }
}
