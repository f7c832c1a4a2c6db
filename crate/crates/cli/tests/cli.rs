use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mbsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mbsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn fig2_writes_fringes_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = mbsim(&["fig2", "--engine", "both", "--trials", "2000", "--out", s(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let names: Vec<String> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names.iter().filter(|n| n.starts_with("fringe_")).count(), 10);
    assert!(names.iter().any(|n| n == "provenance.json"));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("scenario fig2"));
}

#[test]
fn replay_reproduces_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let run = mbsim(&["fig5a", "--engine", "both", "--trials", "5000", "--seed", "3", "--out", s(a.path())]);
    assert!(run.status.success());
    let sidecar = a.path().join("provenance.json");
    let rep = mbsim(&["replay", s(&sidecar), "--out", s(b.path()), "--serial"]);
    assert!(rep.status.success(), "{}", String::from_utf8_lossy(&rep.stderr));
    for e in fs::read_dir(a.path()).unwrap() {
        let e = e.unwrap();
        assert_eq!(fs::read(e.path()).unwrap(), fs::read(b.path().join(e.file_name())).unwrap());
    }
}

#[test]
fn run_with_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "[run]\nscenario = \"fig3\"\n[run.sweep]\nparameter = \"eta2\"\nvalues = [0.331, 0.0]\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = mbsim(&["run", "--config", s(&cfg), "--out", s(&out_dir), "--qrng-mode", "ensemble"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = fs::read_to_string(out_dir.join("visibility.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);
    let sidecar = fs::read_to_string(out_dir.join("provenance.json")).unwrap();
    assert!(sidecar.contains("\"mode\": \"ensemble\""));
}

#[test]
fn errors_carry_a_category_and_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[run]\nscenario = \"fig2\"\n[mbs1]\neta_con = 1.5\n").unwrap();
    let out = mbsim(&["run", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[validation]"));

    let out = mbsim(&["run", "--config", s(&dir.path().join("missing.toml"))]);
    assert_eq!(out.status.code(), Some(9));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[io]"));

    let out = mbsim(&["fig2", "--engine", "monte-carlo", "--trials", "0", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[input]"));

    fs::write(&cfg, "[run]\nscenario = \"fig9\"\n").unwrap();
    let out = mbsim(&["run", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(5));

    let out = mbsim(&["fig7"]);
    assert!(!out.status.success());
}
