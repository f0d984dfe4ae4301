use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &str = r#"
method = "lfm"
seed = 4
[env]
family = "house-v0"
count = 24
[budget]
tokens = 3000
window_count = 60
[policy]
steps = 300
eval_every = 100
[collect]
rollouts = 2
annotation_rollouts = 2
[eval]
train = false
"#;

fn lfm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lfm"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn bad_configs_exit_with_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "bad.toml", &format!("{TINY}bogus = 1\n"));
    let out = lfm(&[
        "run",
        "--config",
        s(&cfg),
        "--out",
        s(&tmp.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));

    let adapt = write(
        tmp.path(),
        "adapt.toml",
        &TINY.replace("method = \"lfm\"", "method = \"lfm_adapt\""),
    );
    let out = lfm(&[
        "run",
        "--config",
        s(&adapt),
        "--out",
        s(&tmp.path().join("a")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("from_run"));
}

#[test]
fn empty_budgets_exit_with_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "c.toml",
        &TINY.replace("tokens = 3000", "tokens = 1"),
    );
    let out = lfm(&[
        "run",
        "--config",
        s(&cfg),
        "--out",
        s(&tmp.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn unreachable_endpoints_exit_with_4() {
    let tmp = tempfile::tempdir().unwrap();
    let remote = TINY.to_string()
        + r#"[annotator]
kind = "remote"
[annotator.endpoint]
id = "local"
url = "http://127.0.0.1:9/v1/chat/completions"
model = "m"
max_tokens = 64
timeout_secs = 2
max_attempts = 1
backoff_ms = 0
"#;
    let cfg = write(tmp.path(), "c.toml", &remote);
    let out = lfm(&[
        "run",
        "--config",
        s(&cfg),
        "--out",
        s(&tmp.path().join("o")),
    ]);
    assert_eq!(
        out.status.code(),
        Some(4),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn runs_compare_and_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", TINY);
    let bc = write(tmp.path(), "bc.toml", &TINY.replace("\"lfm\"", "\"bc\""));
    let (a, b) = (tmp.path().join("lfm"), tmp.path().join("bc"));
    assert!(lfm(&["run", "--config", s(&cfg), "--out", s(&a)])
        .status
        .success());
    assert!(
        lfm(&["run", "--config", s(&bc), "--out", s(&b), "--seed", "4"])
            .status
            .success()
    );
    for f in [
        "config.snapshot",
        "report.json",
        "ledger.json",
        "fmodel.json",
    ] {
        assert!(a.join(f).exists(), "{f}");
    }

    let cmp = tmp.path().join("cmp");
    let out = lfm(&["compare", s(&a), s(&b), "--out", s(&cmp)]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = std::fs::read_to_string(cmp.join("compare.txt")).unwrap();
    assert!(text.contains("bc") && text.contains("lfm beats bc"));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(cmp.join("compare.json")).unwrap()).unwrap();
    assert_eq!(json["rows"].as_array().unwrap().len(), 2);

    let score = tmp.path().join("f1.json");
    let out = lfm(&[
        "eval-fmodel",
        "--fmodel",
        s(&a.join("fmodel.json")),
        "--examples",
        s(&a.join("feedback_examples.jsonl")),
        "--out",
        s(&score),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let f1: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(score).unwrap()).unwrap();
    assert!(f1["f1"].as_f64().unwrap() > 0.5);

    std::fs::write(b.join("report.json"), "{ truncated").unwrap();
    let out = lfm(&["compare", s(&a), s(&b), "--out", s(&cmp)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains(s(&b.join("report.json"))));
}

#[test]
fn preview_shows_prompt_response_and_labels() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", TINY);
    let out = lfm(&["annotate-preview", "--config", s(&cfg)]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8_lossy(&out.stdout);
    for part in [
        "## Prompt",
        "## Response",
        "## Parsed",
        "step 1:",
        "tokens charged",
    ] {
        assert!(text.contains(part), "{part} missing from\n{text}");
    }
    let out = lfm(&["annotate-preview", "--config", s(&cfg), "--start", "100000"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn gen_writes_instances_and_demos() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", TINY);
    let dir = tmp.path().join("g");
    assert!(lfm(&["gen", "--config", s(&cfg), "--out", s(&dir)])
        .status
        .success());
    let lines = |f: &str| {
        std::fs::read_to_string(dir.join(f))
            .unwrap()
            .lines()
            .count()
    };
    assert_eq!(lines("instances.jsonl"), 24);
    assert!(lines("demos.jsonl") > 0);
}
