use std::path::{Path, PathBuf};

use mbsde_lab::scenario::{sub_seed, Loaded, PairCfg};
use mbsde_lab::{setup, ConfigError, RunError};

fn dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

fn text(name: &str) -> String {
    std::fs::read_to_string(dir().join(format!("{name}.toml"))).unwrap()
}

#[test]
fn bundled_scenarios_load_and_build() {
    let mut seen = 0;
    for entry in std::fs::read_dir(dir()).unwrap() {
        let path = entry.unwrap().path();
        let loaded =
            Loaded::from_path(&path, None).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(loaded.hash.len(), 64);
        setup::build(&loaded.scenario).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        seen += 1;
    }
    assert!(seen >= 9);
}

#[test]
fn unknown_keys_are_rejected() {
    let base = text("radial-check");
    for extra in [
        "colour = 1\n".to_string(),
        base.replace("[check]", "[check]\nsamplez = 3"),
        base.replace("kappa = 1.0", "kappa = 1.0\nkapa = 2.0"),
        base.replace("[forward]", "[forward]\nlength = 2"),
    ] {
        let src = if extra.starts_with("colour") {
            format!("{extra}{base}")
        } else {
            extra
        };
        match Loaded::from_str(&src, None) {
            Err(ConfigError::Parse(_)) => {}
            other => panic!("expected a parse error, got {other:?}"),
        }
    }
}

#[test]
fn schema_version_is_checked() {
    let src = text("radial-check").replace("schema = 1", "schema = 2");
    match Loaded::from_str(&src, None) {
        Err(ConfigError::Invalid { field, .. }) => assert_eq!(field, "schema"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn out_of_range_values_are_invalid() {
    let base = text("radial-check");
    for src in [
        base.replace("level = 1.0", "level = -1.0"),
        base.replace("steps = 20", "steps = 0"),
        base.replace("paths = 2000", "paths = 0"),
    ] {
        let err = Loaded::from_str(&src, None)
            .map(|l| setup::build(&l.scenario).map(|_| ()))
            .and_then(|r| r);
        assert!(err.is_err(), "{src}");
        assert_eq!(RunError::from(err.unwrap_err()).exit_code(), 2);
    }
}

#[test]
fn seed_override_changes_seed_and_hash() {
    let src = text("sphere-cap");
    let a = Loaded::from_str(&src, None).unwrap();
    let b = Loaded::from_str(&src, Some(7)).unwrap();
    let c = Loaded::from_str(&src, Some(7)).unwrap();
    assert_eq!(b.scenario.seed, 7);
    assert_ne!(a.hash, b.hash);
    assert_eq!(b.hash, c.hash);
}

#[test]
fn hash_follows_the_source_text() {
    let src = text("sphere-cap");
    let a = Loaded::from_str(&src, None).unwrap();
    let b = Loaded::from_str(&format!("{src}\n# comment\n"), None).unwrap();
    assert_eq!(a.scenario, b.scenario);
    assert_ne!(a.hash, b.hash);
}

#[test]
fn pair_kinds_parse() {
    let shift = Loaded::from_path(&dir().join("sphere-cap-shift.toml"), None).unwrap();
    assert!(matches!(
        shift.scenario.diagnostics.pair,
        PairCfg::TerminalShift { .. }
    ));
    let src = text("sphere-cap").replace(
        "pair = { kind = \"picard-inits\" }",
        "pair = { kind = \"files\", first = \"a.mbsd\", second = \"b.mbsd\" }",
    );
    let files = Loaded::from_str(&src, None).unwrap();
    assert_eq!(
        files.scenario.diagnostics.pair,
        PairCfg::Files {
            first: "a.mbsd".into(),
            second: "b.mbsd".into()
        }
    );
}

#[test]
fn sub_seeds_are_distinct() {
    let seeds: Vec<u64> = (0..6).map(|k| sub_seed(31, k)).collect();
    for i in 0..seeds.len() {
        for j in 0..i {
            assert_ne!(seeds[i], seeds[j]);
        }
    }
    assert_eq!(sub_seed(31, 0), 31);
}
