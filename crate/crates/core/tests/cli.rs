use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_ctxprobe"));
    c.env("RUST_LOG", "warn").env_remove("CTXPROBE_SEED").env_remove("CTXPROBE_ENDPOINT");
    c
}

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/synthetic").join(name)
}

fn ok(out: Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn index_build_then_query() {
    let dir = tempfile::tempdir().unwrap();
    let idx = dir.path().join("c.idx");
    ok(bin().args(["index", "build", "--corpus", p(&data("corpus.jsonl")), "--out", p(&idx), "--hash-bits", "20"]).output().unwrap());
    let hits = ok(bin()
        .args(["index", "query", "--index", p(&idx), "--text", "Where was Katja Kessler born?", "-k", "3"])
        .args(["--corpus", p(&data("corpus.jsonl"))])
        .output()
        .unwrap());
    let first = hits.lines().next().unwrap();
    assert!(first.contains("p-syn-011") && first.contains("Paris"), "{hits}");
    assert_eq!(hits.lines().count(), 3);
}

#[test]
fn contexts_build_writes_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("adv.jsonl");
    ok(bin()
        .args(["contexts", "build", "--facts", p(&data("facts.jsonl")), "--strategy", "adversarial", "--seed", "4"])
        .args(["--out", p(&out)])
        .output()
        .unwrap());
    let lines: Vec<serde_json::Value> = std::fs::read_to_string(&out)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 50);
    for l in &lines {
        assert_eq!(l["strategy"], "adversarial");
        assert_eq!(l["answer_present"], false);
        assert!(l["uuid"].as_str().unwrap().starts_with("syn-"));
    }
}

#[test]
fn retrieved_contexts_need_a_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["contexts", "build", "--facts", p(&data("facts.jsonl")), "--strategy", "retrieved"])
        .args(["--out", p(&dir.path().join("r.jsonl"))])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let stdout = ok(bin()
        .args(["run", "--config", p(&data("run.json")), "--set"])
        .arg(format!("out_dir={}", out_dir.display()))
        .args(["--set", "strategies=[\"oracle\",\"adversarial\"]"])
        .output()
        .unwrap());
    assert!(stdout.contains("complete"), "{stdout}");
    for f in ["manifest.json", "predictions/none.jsonl", "predictions/oracle.jsonl", "report/precision.tsv", "report/examples.tsv", "report/recall.csv"] {
        assert!(out_dir.join(f).is_file(), "{f}");
    }

    let rep = dir.path().join("rep");
    ok(bin()
        .args(["report", "--baseline", p(&out_dir.join("predictions/none.jsonl"))])
        .args(["--preds", p(&out_dir.join("predictions/oracle.jsonl"))])
        .args(["--preds", p(&out_dir.join("predictions/adversarial.jsonl"))])
        .args(["--facts", p(&data("facts.jsonl")), "--out", p(&rep)])
        .output()
        .unwrap());
    assert_eq!(
        std::fs::read_to_string(rep.join("precision.tsv")).unwrap(),
        std::fs::read_to_string(out_dir.join("report/precision.tsv")).unwrap()
    );
}

#[test]
fn seed_env_is_applied_and_set_wins() {
    let dir = tempfile::tempdir().unwrap();
    let run_with = |name: &str, env_seed: &str, extra: &[&str]| {
        let out_dir = dir.path().join(name);
        ok(bin()
            .env("CTXPROBE_SEED", env_seed)
            .args(["run", "--config", p(&data("run.json")), "--set"])
            .arg(format!("out_dir={}", out_dir.display()))
            .args(["--set", "strategies=[\"adversarial\"]"])
            .args(extra)
            .output()
            .unwrap());
        let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
        m["seed"].as_u64().unwrap()
    };
    assert_eq!(run_with("a", "99", &[]), 99);
    assert_eq!(run_with("b", "99", &["--set", "seed=5"]), 5);
}

#[test]
fn validation_failures_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing_index = bin()
        .args(["run", "--config", p(&data("run.json"))])
        .args(["--set", &format!("index={}", dir.path().join("missing.idx").display())])
        .args(["--set", &format!("out_dir={}", dir.path().join("out").display())])
        .output()
        .unwrap();
    assert_eq!(missing_index.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing_index.stderr).contains("missing.idx"));
    assert!(!dir.path().join("out").exists());

    let no_config = bin().args(["run", "--config", "/nonexistent/run.json"]).output().unwrap();
    assert_eq!(no_config.status.code(), Some(2));

    let bad_flag = bin().args(["index", "build"]).output().unwrap();
    assert_eq!(bad_flag.status.code(), Some(2));
}

#[test]
fn global_failure_exits_1() {
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .env("CTXPROBE_ENDPOINT", format!("http://127.0.0.1:{port}"))
        .args(["run", "--config", p(&data("run.json"))])
        .args(["--set", "scorer={\"kind\":\"remote\"}", "--set", "strategies=[\"oracle\"]", "--set", "concurrency=32"])
        .args(["--set", &format!("out_dir={}", dir.path().display())])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn serve_mock_answers_health_and_score() {
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut child = bin()
        .args(["serve-mock", "--port", &port.to_string(), "--scorer", "copy", "--lambda", "0.8"])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    assert!(line.contains(&port.to_string()), "{line}");

    let client = reqwest::blocking::Client::new();
    let base = format!("http://127.0.0.1:{port}");
    let health: serde_json::Value = client.get(format!("{base}/v1/health")).send().unwrap().json().unwrap();
    assert!(health["model"].as_str().unwrap().contains("0.8"));
    let resp: serde_json::Value = client
        .post(format!("{base}/v1/score"))
        .json(&serde_json::json!({
            "id": "q1", "query": "Ada Lovelace was born in [MASK] .",
            "context": "Ada Lovelace was born in London.", "mode": "two_segment",
            "candidates": ["Paris", "London"], "top_k": 1
        }))
        .send()
        .unwrap()
        .json()
        .unwrap();
    assert_eq!(resp["id"], "q1");
    assert_eq!(resp["top_k"][0]["token"], "London");
    child.kill().unwrap();
    child.wait().unwrap();
}
