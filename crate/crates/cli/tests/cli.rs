use std::path::Path;
use std::process::{Command, Output};

fn sotkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sotkit"))
        .args(args)
        .current_dir(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures"))
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn help_lists_formats_and_exit_codes() {
    let o = sotkit(&["--help"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("File formats:"));
    assert!(text.contains("Exit codes:"));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    assert_eq!(sotkit(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn zero_jobs_is_rejected() {
    assert_eq!(sotkit(&["--jobs", "0", "knn", "--train", "emb_train.csv", "--test", "emb_test.csv"]).status.code(), Some(2));
}

#[test]
fn mismatched_ref_hyp_counts_fail_with_json() {
    let o = sotkit(&["score-asr", "--ref", "fig_ref.jsonl", "--ref", "fig_ref.jsonl", "--hyp", "fig_hyp.jsonl"]);
    assert_eq!(o.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert!(err["error"].is_string());
}

#[test]
fn out_of_range_timestamp_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"[{"class":"header"},{"class":"ts","value":1501},{"class":"eot"}]"#).unwrap();
    let o = sotkit(&["validate", "--tokens", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(o.stdout.is_empty());
}

#[test]
fn parse_then_serialize_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let transcript = dir.path().join("t.jsonl");
    let tokens = dir.path().join("t.json");
    let parsed = sotkit(&["parse", "--tokens", "tokens_valid.json", "-o", transcript.to_str().unwrap()]);
    assert!(parsed.status.success());
    let ser = sotkit(&["serialize", "--transcript", transcript.to_str().unwrap(), "-o", tokens.to_str().unwrap()]);
    assert!(ser.status.success());
    let again = sotkit(&["parse", "--tokens", tokens.to_str().unwrap()]);
    assert_eq!(stdout(&again), std::fs::read_to_string(&transcript).unwrap());
}

#[test]
fn raw_der_is_a_ratio() {
    let o = sotkit(&["--raw", "score-der", "--ref", "der_ref.rttm", "--hyp", "der_hyp.rttm"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().nth(1).unwrap().rsplit(',').next(), Some("0.2"));
}
