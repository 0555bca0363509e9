//! End-to-end runs of the `cgtrack` binary.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cgtrack"))
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
}

fn stdout_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn stderr_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

#[test]
fn track_gold_log_resolves_every_block() {
    let output = bin()
        .args(["track", data("gold_multi.jsonl").to_str().unwrap()])
        .output()
        .unwrap();
    assert!(output.status.success(), "stderr: {}", stderr_of(&output));
    let lines: Vec<serde_json::Value> = stdout_of(&output)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 27); // 10 + 7 + 10 moves
    let final_g1 = lines
        .iter()
        .filter(|v| v["group_id"] == "g1")
        .next_back()
        .unwrap();
    let fbank: BTreeSet<&str> = final_g1["fbank"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    for fact in [
        "red = 10",
        "blue = 10",
        "green = 20",
        "purple = 30",
        "yellow = 50",
    ] {
        assert!(fbank.contains(fact), "missing `{fact}` in {fbank:?}");
    }
    let final_g1_qbank = final_g1["qbank"].as_array().unwrap();
    assert!(final_g1_qbank.is_empty());
}

#[test]
fn track_empty_log_succeeds_with_no_snapshots() {
    let empty = tempfile::NamedTempFile::new().unwrap();
    let output = bin()
        .args(["track", empty.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert!(output.status.success());
    assert!(stdout_of(&output).is_empty());
}

#[test]
fn track_reports_unknown_block_with_location() {
    let mut log = tempfile::NamedTempFile::new().unwrap();
    writeln!(
        log,
        r#"{{"utterance_id":"u1","group_id":"g1","start_s":0.0,"end_s":1.0,"participant":"P1","text":"","label":"STATEMENT","prop_text":"mauve = 10"}}"#
    )
    .unwrap();
    let output = bin()
        .args(["track", log.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!output.status.success());
    let err = stderr_of(&output);
    assert!(err.contains("line 1"), "stderr: {err}");
    assert!(err.contains("u1"), "stderr: {err}");
    assert!(err.contains("unknown block"), "stderr: {err}");
}

#[test]
fn track_flags_skipped_moves_in_exit_code() {
    let mut log = tempfile::NamedTempFile::new().unwrap();
    // A STATEMENT with no proposition anywhere is skipped, not fatal.
    writeln!(
        log,
        r#"{{"utterance_id":"u1","group_id":"g1","start_s":0.0,"end_s":1.0,"participant":"P1","text":"mumble","label":"STATEMENT"}}"#
    )
    .unwrap();
    let output = bin()
        .args(["track", log.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!output.status.success());
    assert!(stderr_of(&output).contains("skipped"));
    // The snapshot for the skipped move is still emitted.
    assert_eq!(stdout_of(&output).lines().count(), 1);
}

#[test]
fn eval_gold_against_itself_is_all_ones() {
    let gold = data("gold_multi.jsonl");
    let output = bin()
        .args(["eval", gold.to_str().unwrap(), gold.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(output.status.success(), "stderr: {}", stderr_of(&output));
    let table = stdout_of(&output);
    assert!(table.contains("| QBank |"));
    assert!(table.contains("| F ∪ E |"));
    for line in table.lines().skip(2) {
        for cell in line
            .split('|')
            .map(str::trim)
            .filter(|c| !c.is_empty())
            .skip(1)
        {
            assert_eq!(cell, "1.000", "table row: {line}");
        }
    }
}

#[test]
fn eval_rejects_disjoint_groups() {
    let mut other = tempfile::NamedTempFile::new().unwrap();
    writeln!(
        other,
        r#"{{"utterance_id":"u1","group_id":"zz","start_s":0.0,"end_s":1.0,"participant":"P1","text":"","label":"STATEMENT","prop_text":"blue = 10"}}"#
    )
    .unwrap();
    let output = bin()
        .args([
            "eval",
            other.path().to_str().unwrap(),
            data("gold_multi.jsonl").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(!output.status.success());
    assert!(stderr_of(&output).contains("group ids differ"));
}

#[test]
fn eval_csv_format_emits_series() {
    let gold = data("golden_moves.jsonl");
    let output = bin()
        .args([
            "eval",
            gold.to_str().unwrap(),
            gold.to_str().unwrap(),
            "--format",
            "csv",
        ])
        .output()
        .unwrap();
    assert!(output.status.success());
    let csv = stdout_of(&output);
    assert!(csv.starts_with("index,bank,dsc\n"));
    // 4 moves x 4 banks + header.
    assert_eq!(csv.lines().count(), 17);
    assert!(csv.contains("4,f_union_e,1.000000"));
}

fn small_config() -> tempfile::NamedTempFile {
    let mut config = tempfile::NamedTempFile::new().unwrap();
    writeln!(
        config,
        "blocks = [\"x\", \"y\"]\nweights = [10, 20, 30]\nseed_facts = []\n"
    )
    .unwrap();
    config
}

#[test]
fn oracle_check_is_deterministic_and_clean() {
    let config = small_config();
    let run = || {
        bin()
            .args([
                "oracle-check",
                "--config",
                config.path().to_str().unwrap(),
                "--trials",
                "200",
                "--seed",
                "11",
            ])
            .output()
            .unwrap()
    };
    let first = run();
    let second = run();
    assert!(first.status.success(), "stdout: {}", stdout_of(&first));
    assert_eq!(stdout_of(&first), stdout_of(&second));
    assert!(stdout_of(&first).contains("passed=200 violations=0"));
}

#[test]
fn oracle_check_guards_large_domains() {
    let output = bin()
        .args(["oracle-check", "--trials", "1"])
        .env("CGT_BLOCKS", "a,b,c,d,e,f")
        .output()
        .unwrap();
    assert!(!output.status.success());
    assert!(stderr_of(&output).contains("limited to"));
}

#[test]
fn repl_applies_moves_and_undoes_them() {
    let mut child = bin()
        .arg("repl")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .as_mut()
        .unwrap()
        .write_all(b"statement red = blue\naccept red = blue\nundo\nbanks\nquit\n")
        .unwrap();
    let output = child.wait_with_output().unwrap();
    assert!(output.status.success());
    let text = stdout_of(&output);
    assert!(text.contains("+red = blue"), "out: {text}");
    assert!(text.contains("+blue = 10"), "out: {text}");
    // The undo diff walks the acceptance back out of FBank.
    assert!(text.contains("-blue = 10"), "out: {text}");
}

#[test]
fn env_overrides_change_the_task() {
    let mut log = tempfile::NamedTempFile::new().unwrap();
    writeln!(
        log,
        r#"{{"utterance_id":"u1","group_id":"g1","start_s":0.0,"end_s":1.0,"participant":"P1","text":"","label":"ACCEPT","prop_text":"x = 10"}}"#
    )
    .unwrap();
    let output = bin()
        .args(["track", log.path().to_str().unwrap()])
        .env("CGT_BLOCKS", "x,y")
        .env("CGT_WEIGHTS", "10,20")
        .env("CGT_SEED_FACTS", "")
        .output()
        .unwrap();
    assert!(output.status.success(), "stderr: {}", stderr_of(&output));
    let snapshot: serde_json::Value =
        serde_json::from_str(stdout_of(&output).lines().next().unwrap()).unwrap();
    assert_eq!(snapshot["fbank"][0], "x = 10");
}
