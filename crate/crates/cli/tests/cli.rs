use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn nsched(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nsched"))
        .args(args)
        .env_remove("NSCHED_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn input(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("specs/inputs")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout_json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).expect("stdout is JSON")
}

#[test]
fn usage_errors_exit_64() {
    assert_eq!(code(&nsched(&["lambda", "--n", "10"])), 64);
    assert_eq!(code(&nsched(&["lambda", "--K", "-1", "--n", "10"])), 64);
    assert_eq!(code(&nsched(&["no-such-command"])), 64);
    assert_eq!(code(&nsched(&["--jobs", "0", "lambda", "--K", "1", "--n", "1"])), 64);
    assert_eq!(code(&nsched(&["--version"])), 0);
}

#[test]
fn lambda_at_k_n_equal_e_is_one() {
    let o = nsched(&["lambda", "--K", &std::f64::consts::E.to_string(), "--n", "1"]);
    assert_eq!(code(&o), 0);
    let v = stdout_json(&o);
    assert!((v["lambda_n"].as_f64().unwrap() - 1.0).abs() < 1e-14);
    assert!((v["e_n"].as_f64().unwrap() - 0.5).abs() < 1e-14);
}

#[test]
fn schedule_show_csv() {
    let o = nsched(&["schedule", "show", "--config", &input("ou.json"), "--grid", "5", "--format", "csv"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,f,g,alpha,sigma2,snr");
    assert_eq!(lines.len(), 6);
    assert!(lines[1].ends_with(",inf"));
}

#[test]
fn acs_feasible_and_infeasible() {
    let ok = nsched(&[
        "schedule", "acs", "--theta", "0.5", "--omega-frac", "0.2", "--gamma", "2", "--K", "10", "--n", "50", "--grid", "3",
    ]);
    assert_eq!(code(&ok), 0);
    let v = stdout_json(&ok);
    assert_eq!(v["rows"].as_array().unwrap().len(), 3);
    assert_eq!(v["hparams"]["n"], 50);

    let bad = nsched(&[
        "schedule", "acs", "--theta", "0.5", "--omega-frac", "0.2", "--gamma", "0.5", "--K", "10", "--n", "50",
    ]);
    assert_eq!(code(&bad), 2);
    assert!(String::from_utf8_lossy(&bad.stderr).contains("gamma"));
}

fn simulate(out: &Path, seed: &str, extra: &[&str]) -> Output {
    let mut args = vec![
        "simulate".to_string(),
        "--schedule".into(),
        input("ou.json"),
        "--target".into(),
        input("bimodal.json"),
        "--n".into(),
        "20".into(),
        "--paths".into(),
        "64".into(),
        "--seed".into(),
        seed.into(),
        "--out".into(),
        out.to_string_lossy().into_owned(),
    ];
    args.extend(extra.iter().map(|s| s.to_string()));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    nsched(&refs)
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c): (PathBuf, PathBuf, PathBuf) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    assert_eq!(code(&simulate(&a, "7", &["--binary"])), 0);
    assert_eq!(code(&simulate(&b, "7", &["--binary"])), 0);
    assert_eq!(code(&simulate(&c, "8", &["--binary"])), 0);
    let read = |p: &Path| std::fs::read(p.join("samples.bin")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
}

#[test]
fn exact_law_needs_gaussian_target() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    let o = simulate(&out, "0", &["--exact-law"]);
    assert_eq!(code(&o), 2);
    assert!(!out.exists());
}

#[test]
fn malformed_spec_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("bad.json");
    std::fs::write(&spec, r#"{"kind":"u-curve","energies":[1,0.5]}"#).unwrap();
    let out = dir.path().join("out");
    let o = nsched(&["experiment", "--spec", spec.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(!out.exists());

    std::fs::write(&spec, r#"{"kind":"u-curve","energy":[1]}"#).unwrap();
    assert_eq!(code(&nsched(&["experiment", "--spec", spec.to_str().unwrap(), "--out", out.to_str().unwrap()])), 2);
    assert!(!out.exists());
}

#[test]
fn experiment_output_ignores_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("audit.json");
    std::fs::write(
        &spec,
        r#"{"kind":"bound-audit",
            "target":{"mean":[0.5,-0.5],"cov_diag":[0.01,1.0]},
            "cases":[{"family":{"kind":"fixed","schedule":{"kind":"ou","T":3.0}},"n":20}],
            "acs_draws":{"count":2,"n":16},"seed":4}"#,
    )
    .unwrap();
    let run = |jobs: &str, sub: &str| {
        let out = dir.path().join(sub);
        let o = nsched(&["--jobs", jobs, "experiment", "--spec", spec.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(out.join("bound-audit.csv")).unwrap()
    };
    assert_eq!(run("1", "one"), run("4", "four"));
}
