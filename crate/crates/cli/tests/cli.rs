use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

use serde_json::{json, Value};
use tempfile::TempDir;

fn paraseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_paraseg"))
        .args(args)
        .env_remove("PARASEG_LM_URL")
        .env_remove("PARASEG_STORE")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = paraseg(args);
    assert!(
        out.status.success(),
        "paraseg {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    paraseg(args).status.code().expect("exit code")
}

fn jsonl(text: &str) -> Vec<Value> {
    text.lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Chapters of paragraphs with the given sentence counts.
fn dataset_line(id: &str, chapters: &[&[usize]]) -> Value {
    let mut n = 0;
    let chapters: Vec<Value> = chapters
        .iter()
        .map(|paras| {
            let paragraphs: Vec<Vec<String>> = paras
                .iter()
                .map(|&len| {
                    (0..len)
                        .map(|_| {
                            n += 1;
                            format!("Sentence number {n}.")
                        })
                        .collect()
                })
                .collect();
            json!({ "paragraphs": paragraphs })
        })
        .collect();
    json!({ "id": id, "chapters": chapters })
}

fn write_jsonl(dir: &Path, name: &str, lines: &[Value]) -> PathBuf {
    let text: String = lines.iter().map(|v| format!("{v}\n")).collect();
    write(dir, name, &text)
}

fn positions(labels: &Value, positive: &[u64]) -> Vec<usize> {
    labels["labels"]
        .as_array()
        .unwrap()
        .iter()
        .enumerate()
        .filter(|(_, l)| positive.contains(&l.as_u64().unwrap()))
        .map(|(i, _)| i)
        .collect()
}

#[test]
fn ingest_and_tokenize() {
    let dir = TempDir::new().unwrap();
    let text = write(dir.path(), "talk.txt", "Hello there. How are you?\n\nFine, thanks.\n");
    let out = jsonl(&ok(&["ingest", s(&text)]));
    assert_eq!(out.len(), 1);
    assert_eq!(out[0]["id"], "talk");
    assert_eq!(
        out[0]["chapters"][0]["paragraphs"],
        json!([["Hello there.", "How are you?"], ["Fine, thanks."]])
    );

    let lines = ok(&["tokenize", s(&text)]);
    assert_eq!(lines, "Hello there.\nHow are you?\nFine, thanks.\n");
    let array: Value = serde_json::from_str(&ok(&["tokenize", s(&text), "--format", "json"])).unwrap();
    assert_eq!(array.as_array().unwrap().len(), 3);
}

#[test]
fn rule_baseline_places_every_nth_boundary() {
    let dir = TempDir::new().unwrap();
    let data = write_jsonl(dir.path(), "gold.jsonl", &[dataset_line("doc", &[&[5, 5, 2]])]);
    let out = jsonl(&ok(&["baseline", "--kind", "rule", "--period", "5", s(&data)]));
    assert_eq!(positions(&out[0], &[1]), vec![4, 9]);
    assert_eq!(out[0]["doc_id"], "doc");

    // Default period: mean paragraph length 4 -> breaks at 3, 7.
    let meta = dir.path().join("meta.json");
    let out = jsonl(&ok(&["baseline", "--kind", "rule", s(&data), "--meta", s(&meta)]));
    assert_eq!(positions(&out[0], &[1]), vec![3, 7]);
    let meta: Value = serde_json::from_str(&std::fs::read_to_string(meta).unwrap()).unwrap();
    assert_eq!(meta["period"], 4);
}

#[test]
fn random_baseline_is_reproducible_and_keeps_counts() {
    let dir = TempDir::new().unwrap();
    let data = write_jsonl(
        dir.path(),
        "gold.jsonl",
        &[dataset_line("a", &[&[3, 4, 2], &[5]]), dataset_line("b", &[&[6, 6]])],
    );
    let meta = dir.path().join("meta.json");
    let args = ["baseline", "--kind", "random", "--seed", "7", s(&data), "--meta", s(&meta)];
    let first = ok(&args);
    assert_eq!(first, ok(&args));
    let out = jsonl(&first);
    assert_eq!(positions(&out[0], &[1]).len(), 3);
    assert_eq!(positions(&out[1], &[1]).len(), 1);
    let meta: Value = serde_json::from_str(&std::fs::read_to_string(meta).unwrap()).unwrap();
    assert_eq!(meta["rng"], "chacha8");
    assert_eq!(meta["seed"], 7);

    let other = ok(&["baseline", "--kind", "random", "--seed", "8", s(&data)]);
    assert_ne!(first, other);

    let hier = jsonl(&ok(&["baseline", "--kind", "random", "--level", "hierarchical", s(&data)]));
    assert_eq!(positions(&hier[0], &[2]).len(), 1);
    assert_eq!(positions(&hier[1], &[2]).len(), 0);
}

#[test]
fn pbr_and_threshold_baselines() {
    let dir = TempDir::new().unwrap();
    let record = json!({"id": "d", "chapters": [{"paragraphs": [[
        "We begin.", "(Laughter)", "Then we go on.", "And on.", "(Applause)"
    ]]}]});
    let data = write_jsonl(dir.path(), "gold.jsonl", &[record]);
    let labels = write_jsonl(
        dir.path(),
        "hyp.jsonl",
        &[json!({"doc_id": "d", "level": "paragraph", "labels": [0, 0, 0, 0]})],
    );
    let out = jsonl(&ok(&["baseline", "--kind", "pbr", "--labels", s(&labels), s(&data)]));
    assert_eq!(out[0]["labels"], json!([1, 1, 0, 1]));

    let scores = write_jsonl(
        dir.path(),
        "scores.jsonl",
        &[json!({"id": "d", "level": "paragraph", "scores": [0.1, 0.6, 0.5, 0.9]})],
    );
    let out = jsonl(&ok(&["baseline", "--kind", "threshold", "--scores", s(&scores), "--tau", "0.5"]));
    assert_eq!(out[0]["labels"], json!([0, 1, 1, 1]));

    let tuned: Value = serde_json::from_str(&ok(&["tune-threshold", "--scores", s(&scores), "--gold", s(&data)])).unwrap();
    // Gold has no breaks: only a threshold above every score is perfect.
    assert_eq!(tuned["f1"], 1.0);
    assert!(tuned["tau"].as_f64().unwrap() > 0.9);
}

#[test]
fn evaluate_reports_documents_and_mean() {
    let dir = TempDir::new().unwrap();
    let gold = write_jsonl(dir.path(), "gold.jsonl", &[dataset_line("doc", &[&[5, 5, 2]])]);
    let hyp = write_jsonl(
        dir.path(),
        "hyp.jsonl",
        &[json!({"doc_id": "doc", "level": "paragraph", "labels": [0,0,0,0,1,0,0,0,0,1,0]})],
    );
    let report: Value = serde_json::from_str(&ok(&["evaluate", "--ref", s(&gold), "--hyp", s(&hyp)])).unwrap();
    assert_eq!(report["mean"]["f1"], 1.0);
    assert_eq!(report["mean"]["pk"], 0.0);
    assert_eq!(report["mean"]["boundary_similarity"], 1.0);
    assert_eq!(report["documents"][0]["doc_id"], "doc");

    let table = ok(&["evaluate", "--ref", s(&gold), "--hyp", s(&hyp), "--format", "table"]);
    assert!(table.contains("mean (1 documents)"), "{table}");

    // Missing hypothesis is a schema error; a hierarchical level is a usage error.
    let empty = write(dir.path(), "empty.jsonl", "");
    assert_eq!(code(&["evaluate", "--ref", s(&gold), "--hyp", s(&empty)]), 4);
    assert_eq!(code(&["evaluate", "--ref", s(&gold), "--hyp", s(&hyp), "--level", "hierarchical"]), 2);
}

#[test]
fn evaluate_within_chapters() {
    let dir = TempDir::new().unwrap();
    let gold = write_jsonl(dir.path(), "gold.jsonl", &[dataset_line("doc", &[&[2, 2], &[3], &[1]])]);
    let report: Value = serde_json::from_str(&ok(&[
        "evaluate", "--ref", s(&gold), "--hyp", s(&gold), "--within-chapters",
    ]))
    .unwrap();
    let ids: Vec<&str> = report["documents"]
        .as_array()
        .unwrap()
        .iter()
        .map(|d| d["doc_id"].as_str().unwrap())
        .collect();
    assert_eq!(ids, ["doc#0", "doc#1"]);
    assert_eq!(report["mean"]["f1"], 1.0);
}

#[test]
fn segment_with_scripted_mock() {
    let dir = TempDir::new().unwrap();
    let text = write(dir.path(), "talk.txt", "One. Two. Three. Four.");
    let mock = write(dir.path(), "mock.json", r#"{"boundaries": {"1": "break"}}"#);
    let labels = dir.path().join("labels.jsonl");
    let out = ok(&["segment", "constrained", s(&text), "--mock", s(&mock), "--labels", s(&labels)]);
    assert_eq!(out, "One. Two.\n\nThree. Four.\n");
    let labels = jsonl(&std::fs::read_to_string(labels).unwrap());
    assert_eq!(labels[0]["labels"], json!([0, 1, 0]));
    assert_eq!(labels[0]["doc_id"], "talk");

    // Dataset in, dataset out, and the output keeps every sentence.
    let data = write_jsonl(dir.path(), "gold.jsonl", &[dataset_line("a", &[&[2, 2]]), dataset_line("b", &[&[3]])]);
    let out = jsonl(&ok(&["segment", "constrained", s(&data), "--mock", s(&mock), "-j", "2"]));
    assert_eq!(out.len(), 2);
    assert_eq!(out[0]["id"], "a");
    assert_eq!(out[0]["chapters"][0]["paragraphs"][0].as_array().unwrap().len(), 2);

    let seg = dir.path().join("seg.jsonl");
    ok(&["segment", "constrained", s(&data), "--mock-random", "3", "--out", s(&seg)]);
    let fid: Value = serde_json::from_str(&ok(&["fidelity", "--source", s(&data), "--output", s(&seg)])).unwrap();
    assert_eq!(fid["summary"]["whitespace"], 1.0);
    assert_eq!(fid["summary"]["documents"], 2);
}

#[test]
fn segment_sectionwise_marks_chapters() {
    let dir = TempDir::new().unwrap();
    let data = write_jsonl(dir.path(), "gold.jsonl", &[dataset_line("a", &[&[2], &[2]])]);
    let mock = write(dir.path(), "mock.json", r#"{"default": "continue"}"#);
    let labels = dir.path().join("labels.jsonl");
    ok(&["segment", "constrained", s(&data), "--mock", s(&mock), "--sectionwise", "--labels", s(&labels)]);
    let labels = jsonl(&std::fs::read_to_string(labels).unwrap());
    assert_eq!(labels[0]["level"], "hierarchical");
    assert_eq!(labels[0]["labels"], json!([0, 2, 0]));
}

#[test]
fn segment_without_model_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let text = write(dir.path(), "talk.txt", "One. Two.");
    assert_eq!(code(&["segment", "constrained", s(&text)]), 2);
    assert_eq!(code(&["segment", "constrained", "/nonexistent/x.txt", "--mock-random", "1"]), 3);
    let bad = write(dir.path(), "bad.jsonl", "{\"id\": 3}\n");
    assert_eq!(code(&["segment", "constrained", s(&bad), "--mock-random", "1"]), 4);
    let template = write(dir.path(), "t.toml", "system = \"s\"\nuser = \"no slot\"\nprefill = \"x\\n\\n\"\n");
    assert_eq!(
        code(&["segment", "constrained", s(&text), "--mock-random", "1", "--template", s(&template)]),
        4
    );
}

/// A scoring server that breaks where `break_at` says and fails with 503
/// at boundary `fail_at` while `failures` is positive.
fn score_server(break_at: usize, fail_at: Option<usize>, failures: usize) -> (String, Arc<AtomicUsize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let remaining = Arc::new(AtomicUsize::new(failures));
    let calls = Arc::new(AtomicUsize::new(0));
    let counter = calls.clone();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut length = 0;
            let mut boundary = None;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 {
                    break;
                }
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                if let Some((name, value)) = line.split_once(':') {
                    match name.to_ascii_lowercase().as_str() {
                        "content-length" => length = value.trim().parse().unwrap(),
                        "x-boundary-index" => boundary = value.trim().parse::<usize>().ok(),
                        _ => {}
                    }
                }
            }
            let mut body = vec![0; length];
            reader.read_exact(&mut body).unwrap();
            counter.fetch_add(1, Ordering::SeqCst);
            let request: Value = serde_json::from_slice(&body).unwrap();
            let (status, reply) = if fail_at == boundary && remaining.load(Ordering::SeqCst) > 0 {
                remaining.fetch_sub(1, Ordering::SeqCst);
                ("503 Service Unavailable", "busy".to_string())
            } else {
                let scores: serde_json::Map<String, Value> = request["candidates"]
                    .as_array()
                    .unwrap()
                    .iter()
                    .map(|c| {
                        let c = c.as_str().unwrap();
                        let brk = c.ends_with("\n\n");
                        let good = brk == (boundary == Some(break_at));
                        (c.to_string(), json!(if good { -0.1 } else { -3.0 }))
                    })
                    .collect();
                ("200 OK", json!({ "scores": scores }).to_string())
            };
            let _ = write!(
                stream,
                "HTTP/1.1 {status}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{reply}",
                reply.len()
            );
        }
    });
    (url, calls)
}

#[test]
fn segment_over_http() {
    let dir = TempDir::new().unwrap();
    let text = write(dir.path(), "talk.txt", "One. Two. Three. Four.");
    let (url, calls) = score_server(2, None, 0);
    let out = ok(&["segment", "constrained", s(&text), "--lm", &url]);
    assert_eq!(out, "One. Two. Three.\n\nFour.\n");
    assert_eq!(calls.load(Ordering::SeqCst), 3);
}

#[test]
fn aborted_documents_can_be_resumed() {
    let dir = TempDir::new().unwrap();
    let data = write_jsonl(dir.path(), "gold.jsonl", &[dataset_line("a", &[&[5]])]);
    // Boundary 2 fails more often than the retry budget allows.
    let (url, calls) = score_server(0, Some(2), 3);
    let state = dir.path().join("state.jsonl");
    let out = paraseg(&[
        "segment", "constrained", s(&data), "--lm", &url, "--retries", "3", "--state", s(&state),
    ]);
    assert_eq!(out.status.code(), Some(5), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(calls.load(Ordering::SeqCst), 2 + 3);
    let saved = jsonl(&std::fs::read_to_string(&state).unwrap());
    assert_eq!(saved[0]["id"], "a");
    assert_eq!(saved[0]["state"]["next_index"], 2);

    // The server now answers; only the two remaining boundaries are queried.
    let labels = dir.path().join("labels.jsonl");
    let before = calls.load(Ordering::SeqCst);
    ok(&[
        "segment", "constrained", s(&data), "--lm", &url, "--resume", s(&state), "--labels", s(&labels),
        "--out", s(&dir.path().join("out.jsonl")),
    ]);
    assert_eq!(calls.load(Ordering::SeqCst) - before, 2);
    let labels = jsonl(&std::fs::read_to_string(labels).unwrap());
    assert_eq!(labels[0]["labels"], json!([1, 0, 0, 0]));
}

#[test]
fn naive_rewrite_uses_generation() {
    let dir = TempDir::new().unwrap();
    let text = write(dir.path(), "talk.txt", "One. Two.");
    let mock = write(dir.path(), "mock.json", r#"{"generate": "One.\n\nTwo."}"#);
    let out = ok(&["segment", "naive", s(&text), "--mock", s(&mock)]);
    assert_eq!(out, "One.\n\nTwo.\n");
    let rewritten = write(dir.path(), "out.txt", &out);
    let fid: Value =
        serde_json::from_str(&ok(&["fidelity", "--source", s(&text), "--output", s(&rewritten)])).unwrap();
    assert_eq!(fid["documents"][0]["exact"], true);

    // A doubled space inside a paragraph is only whitespace-faithful.
    let spaced = write(dir.path(), "spaced.txt", "One.  Two.");
    let fid: Value =
        serde_json::from_str(&ok(&["fidelity", "--source", s(&text), "--output", s(&spaced)])).unwrap();
    assert_eq!(fid["documents"][0]["exact"], false);
    assert_eq!(fid["documents"][0]["whitespace"], true);
}

#[test]
fn results_from_a_judgment_store() {
    let dir = TempDir::new().unwrap();
    let judgment = json!({
        "trial_id": "t1", "participant": "p", "mode": "ab", "doc_id": "d",
        "systems": ["x", "y"], "response": "A", "timestamp": "2024-01-01T00:00:00Z"
    });
    let store = write_jsonl(dir.path(), "store.jsonl", &[judgment]);
    let elo: Value = serde_json::from_str(&ok(&["results", "elo", "--store", s(&store)])).unwrap();
    assert_eq!(elo["systems"][0]["system"], "x");
    assert_eq!(elo["systems"][0]["rating"], 1016.0);
    assert_eq!(elo["systems"][1]["rating"], 984.0);
    let likert: Value = serde_json::from_str(&ok(&["results", "likert", "--store", s(&store)])).unwrap();
    assert_eq!(likert["systems"], json!([]));
    let table = ok(&["results", "elo", "--store", s(&store), "--format", "table"]);
    assert!(table.contains("1016.0"), "{table}");
    assert_eq!(code(&["results", "elo", "--store", s(&dir.path().join("missing.jsonl"))]), 3);
}

#[test]
fn unknown_arguments_exit_with_usage_code() {
    assert_eq!(code(&["segment"]), 2);
    assert_eq!(code(&["no-such-command"]), 2);
}
