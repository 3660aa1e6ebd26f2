use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_switchpdmp"))
        .args(args)
        .env_remove("SWITCHPDMP_OUT")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn classify2d_case_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["classify2d", "--b", "2,0", "--c", "5,-3", "--d", "-1,-1", "--out", path(dir.path())]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v = read_json(&dir.path().join("classify2d.json"));
    assert_eq!(v["verdict"]["case_id"], 1);
    assert_eq!(v["verdict"]["lambda_plus"], 1.0);
    assert_eq!(v["verdict"]["lambda_minus"], -1.0);
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn invalid_inputs_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = path(dir.path());
    assert_eq!(code(&run(&["simulate", "--model", "no-such-model", "--out", d])), 1);
    assert_eq!(code(&run(&["simulate", "--T", "-5", "--out", d])), 1);
    assert_eq!(code(&run(&["classify2d", "--b", "1,2", "--c", "0,0", "--d", "0", "--out", d])), 1);
    assert_eq!(code(&run(&["lyapunov", "--set", "q=[[-1,1],[0,0]]", "--out", d])), 1);
    assert_eq!(code(&run(&["simulate", "--init", "1,2", "--out", d])), 1);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "command = \"simulate\"\nhorizn = 10\n").unwrap();
    let out = run(&["simulate", "--config", path(&cfg), "--out", path(dir.path())]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("horizn"));
}

#[test]
fn empty_sweep_grid_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.toml");
    std::fs::write(&cfg, "model = \"sirs\"\n[options]\nsweep_param = \"beta1\"\nsweep_values = []\n").unwrap();
    let out = run(&["sweep", "--config", path(&cfg), "--out", path(&dir.path().join("o"))]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty"));
}

#[test]
fn numeric_blow_up_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "simulate", "--model", "linear-2d", "--set", "b=900,900", "--T", "10", "--out", path(dir.path()),
    ]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn failed_check_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["bracket", "--point", "0,0,3", "--out", path(dir.path())]);
    assert_eq!(code(&out), 3);
    let v = read_json(&dir.path().join("bracket.json"));
    assert_eq!(v["pass"], false);
    let ok = run(&["bracket", "--point", "1,2,3", "--out", path(dir.path())]);
    assert_eq!(code(&ok), 0);
    assert_eq!(read_json(&dir.path().join("bracket.json"))["result"]["rank"], 3);
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "model = \"lorenz-switch\"\n[plan]\nhorizon = 5.0\nseed = 3\nsample_dt = 0.5\n").unwrap();
    let out = dir.path().join("o");
    assert_eq!(code(&run(&["simulate", "--config", path(&cfg), "--T", "2", "--out", path(&out)])), 0);
    let m = read_json(&out.join("manifest.json"));
    assert_eq!(m["config"]["plan"]["horizon"], 2.0);
    assert_eq!(m["config"]["plan"]["seed"], 3);
    let traj = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let last = traj.lines().last().unwrap();
    assert!(last.starts_with("2.0000000000000000e0,"), "{last}");
}

#[test]
fn output_dir_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from-env");
    let out = Command::new(env!("CARGO_BIN_EXE_switchpdmp"))
        .args(["simulate", "--T", "1"])
        .env("SWITCHPDMP_OUT", &target)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert!(target.join("trajectory.csv").exists());
}

#[test]
fn sweep_crosses_threshold_once_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let args = |o: &str| {
        vec![
            "sweep".to_string(), "--model".into(), "sirs".into(), "--param".into(), "beta2".into(),
            "--values".into(), "0.1,0.3,0.5,0.7,0.9".into(), "--sub".into(), "extinction".into(),
            "--T".into(), "40".into(), "--replicates".into(), "2".into(), "--seed".into(), "5".into(),
            "--out".into(), o.to_string(),
        ]
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let argv = args(path(d));
        let out = run(&argv.iter().map(String::as_str).collect::<Vec<_>>());
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    let csv = std::fs::read_to_string(a.join("sweep.csv")).unwrap();
    assert_eq!(csv, std::fs::read_to_string(b.join("sweep.csv")).unwrap());
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "index,beta2,seed,r0,estimate,std_error,pass,error");
    let r0: Vec<f64> = lines.map(|l| l.split(',').nth(3).unwrap().parse().unwrap()).collect();
    assert_eq!(r0.len(), 5);
    let crossings = r0.windows(2).filter(|w| (w[0] - 1.0).signum() != (w[1] - 1.0).signum()).count();
    assert_eq!(crossings, 1, "{r0:?}");
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for w in ["1", "3"] {
        let out = dir.path().join(w);
        let status = run(&[
            "lyapunov", "--model", "linear-block", "--T", "200", "--replicates", "6", "--workers", w, "--out", path(&out),
        ]);
        assert_eq!(code(&status), 0);
        files.push(std::fs::read(out.join("lyapunov.json")).unwrap());
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn rerun_reproduces_every_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("first");
    let status = run(&["occupation", "--T", "50", "--bins", "4", "--seed", "9", "--out", path(&out)]);
    assert!(matches!(code(&status), 0 | 3));
    let again = dir.path().join("second");
    assert!(matches!(code(&run(&["rerun", path(&out.join("manifest.json")), "--out", path(&again)])), 0 | 3));
    let manifest = read_json(&out.join("manifest.json"));
    let outputs = manifest["outputs"].as_array().unwrap();
    assert_eq!(outputs.len(), 2);
    for name in outputs {
        let name = name.as_str().unwrap();
        assert_eq!(std::fs::read(out.join(name)).unwrap(), std::fs::read(again.join(name)).unwrap(), "{name}");
    }
}
