use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn regpath(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_regpath"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn regpath")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

const SMALL: &[&str] = &["--n-per-side", "9", "--time-steps", "64"];

#[test]
fn single_level_has_no_rate() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["path", "--kappa", "1", "--levels", "1", "--output", "out"];
    args.extend_from_slice(SMALL);
    let out = regpath(&args, dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("out/eoc.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[1].starts_with("1,0.5,") && rows[1].ends_with(",,"), "{}", rows[1]);
    let md = fs::read_to_string(dir.path().join("out/eoc.md")).unwrap();
    assert!(md.contains("| 1 | 0.50000000 |") && md.contains("| / | / |"), "{md}");
}

#[test]
fn verify_passes_and_detects_faults() {
    let dir = tempfile::tempdir().unwrap();
    let ok = regpath(&["verify"], dir.path());
    assert!(ok.status.success(), "{}", stdout(&ok));
    assert!(!stdout(&ok).contains("FAIL"));

    let bad = regpath(&["verify", "--inject-adjoint-fault"], dir.path());
    assert_eq!(bad.status.code(), Some(1));
    assert!(stdout(&bad).contains("FAIL adjointness"));

    let poisson = regpath(&["verify", "--example", "poisson"], dir.path());
    assert!(poisson.status.success(), "{}", stdout(&poisson));
}

#[test]
fn invalid_configuration_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let negative = regpath(&["path", "--kappa=-1"], dir.path());
    assert_eq!(negative.status.code(), Some(2));
    fs::write(dir.path().join("bad.cfg"), "kappa = 1\nno_such_key = 3\n").unwrap();
    let unknown = regpath(&["path", "--config", "bad.cfg"], dir.path());
    assert_eq!(unknown.status.code(), Some(2));
    let usage = regpath(&["path", "--levels", "x"], dir.path());
    assert_eq!(usage.status.code(), Some(2));
}

#[test]
fn outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let mut args = vec!["path", "--kappa", "0.5", "--levels", "1..3", "--output", out];
        args.extend_from_slice(SMALL);
        assert!(regpath(&args, dir.path()).status.success());
    }
    for name in ["eoc.csv", "eoc.md", "records.jsonl"] {
        let strip = |s: String| s.lines().filter(|l| !l.contains("output")).collect::<Vec<_>>().join("\n");
        let a = fs::read_to_string(dir.path().join("a").join(name)).unwrap();
        let b = fs::read_to_string(dir.path().join("b").join(name)).unwrap();
        assert_eq!(strip(a), strip(b), "{name}");
    }
}

#[test]
fn config_file_is_honored_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("run.cfg"),
        "# toy run\nkappa = 0.3\nlevels = 1..2\nn-per-side = 9\ntime_steps = 32\noutput = cfgout\nformat = csv\n",
    )
    .unwrap();
    let out = regpath(&["path", "--config", "run.cfg", "--levels", "2,3"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("cfgout/eoc.csv")).unwrap();
    assert!(csv.contains("# kappa=0.3") && csv.contains("# time_steps=32") && csv.contains("# levels=2..3"), "{csv}");
    assert!(!dir.path().join("cfgout/eoc.md").exists());
}

#[test]
fn solve_writes_control_samples() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["solve", "--kappa", "1", "--alpha", "0.01", "--output", "s"];
    args.extend_from_slice(SMALL);
    assert!(regpath(&args, dir.path()).status.success());
    let samples = fs::read_to_string(dir.path().join("s/control.csv")).unwrap();
    let values: Vec<f64> = samples
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with('t'))
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(values.iter().all(|v| (-0.2..=0.2).contains(v)));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("s/solve.json")).unwrap()).unwrap();
    assert_eq!(summary["alpha"], 0.01);
}
