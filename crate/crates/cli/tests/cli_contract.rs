//! CLI contract: the documented defaults match the methodology's fixed
//! values, and failures map to the documented exit codes.

use std::process::Command;

fn gwprof() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gwprof"))
}

fn help_for(subcommand: &str) -> String {
    let output = gwprof().arg(subcommand).arg("--help").output().unwrap();
    assert!(output.status.success());
    String::from_utf8(output.stdout).unwrap()
}

/// The default shown for a given long flag in a help text.
fn default_of(help: &str, flag: &str) -> String {
    let start = help.find(flag).unwrap_or_else(|| panic!("{flag} not in help"));
    let section = &help[start..];
    let marker = "[default: ";
    let from = section
        .find(marker)
        .unwrap_or_else(|| panic!("{flag} has no default"));
    let rest = &section[from + marker.len()..];
    rest[..rest.find(']').unwrap()].to_string()
}

#[test]
fn help_defaults_match_methodology_constants() {
    assert_eq!(default_of(&help_for("ingest"), "--min-days"), "3");
    assert_eq!(default_of(&help_for("extract"), "--session-gap-mins"), "15");
    assert_eq!(default_of(&help_for("analyze"), "--evf"), "6");
    assert_eq!(default_of(&help_for("train"), "--folds"), "10");
    assert_eq!(default_of(&help_for("sweep"), "--folds"), "10");
    assert_eq!(default_of(&help_for("synth"), "--homes"), "240");
    assert_eq!(default_of(&help_for("synth"), "--days"), "90");
    assert_eq!(default_of(&help_for("synth"), "--seed"), "7");
}

#[test]
fn missing_input_is_a_stage_failure() {
    let dir = tempfile::tempdir().unwrap();
    let status = gwprof()
        .args([
            "train",
            "--features",
            dir.path().join("missing.csv").to_str().unwrap(),
            "--labels",
            dir.path().join("missing.json").to_str().unwrap(),
            "--report",
            dir.path().join("eval.json").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&status.stderr).contains("stage train"));
}

#[test]
fn bad_flag_values_are_config_failures() {
    let dir = tempfile::tempdir().unwrap();
    let status = gwprof()
        .args([
            "sweep",
            "--timelines",
            dir.path().join("t.bin").to_str().unwrap(),
            "--labels",
            dir.path().join("l.json").to_str().unwrap(),
            "--thresholds",
            "bogus",
            "--out",
            dir.path().join("s.json").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(2));
}
