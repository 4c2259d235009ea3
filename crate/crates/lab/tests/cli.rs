use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(format!("{name}.toml"))
}

fn mbsde(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mbsde"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

#[test]
fn passing_check_exits_zero_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario("radial-check");
    let o = mbsde(
        &["check-drift", "--scenario", s.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("check-drift      PASS"), "{stdout}");
    for f in [
        "conditions.json",
        "conditions.csv",
        "conditions.schema.json",
        "meta.json",
    ] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
}

#[test]
fn inward_drift_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario("inward-check");
    let o = mbsde(
        &["check-drift", "--scenario", s.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8(o.stdout).unwrap().contains("FAIL"));
}

#[test]
fn configuration_problems_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    let o = mbsde(
        &["solve", "--scenario", missing.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(code(&o), 2);

    let o = mbsde(&["solve"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8(o.stderr).unwrap().contains("--scenario"));

    let bad = dir.path().join("bad.toml");
    let text = std::fs::read_to_string(scenario("radial-check")).unwrap();
    std::fs::write(&bad, text.replace("[check]", "[check]\nbogus = 1")).unwrap();
    let o = mbsde(
        &["check-drift", "--scenario", bad.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8(o.stderr).unwrap().contains("bogus"));

    let o = mbsde(
        &[
            "cascade",
            "--scenario",
            scenario("radial-check").to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 2);
}

#[test]
fn format_flag_limits_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario("zero-check");
    let o = mbsde(
        &[
            "check-drift",
            "--scenario",
            s.to_str().unwrap(),
            "--format",
            "json",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    assert!(dir.path().join("conditions.json").is_file());
    assert!(!dir.path().join("conditions.csv").exists());
}

#[test]
fn seed_override_is_recorded_in_the_hash() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let s = scenario("radial-check");
    let s = s.to_str().unwrap();
    mbsde(&["check-drift", "--scenario", s], a.path());
    mbsde(
        &["check-drift", "--scenario", s, "--seed-override", "5"],
        b.path(),
    );
    let read = |d: &Path| std::fs::read_to_string(d.join("conditions.json")).unwrap();
    let hash = |t: &str| {
        t.lines()
            .find(|l| l.contains("scenario_hash"))
            .unwrap()
            .to_string()
    };
    assert_ne!(hash(&read(a.path())), hash(&read(b.path())));
}
