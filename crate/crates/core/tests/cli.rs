mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nilc::encoder::{write_embedding_file, MockEncoder};
use nilc::EmbeddingMatrix;
use serde_json::Value;

fn nilc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nilc"))
        .args(args)
        .output()
        .expect("spawn nilc")
}

fn toy() -> String {
    common::toy_dataset().to_string_lossy().into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn mock_run_on_toy_data_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = nilc(&["run", "--dataset", &toy(), "--k", "3", "--mock-llm", "--mock-encoder", "--output", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let lines = std::fs::read_to_string(out.join("assignments.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 30);
    let first: Value = serde_json::from_str(lines.lines().next().unwrap()).unwrap();
    assert_eq!(first["id"], 0);
    assert!(first["cluster"].as_u64().unwrap() < 3);
    let summaries: Value = serde_json::from_str(&std::fs::read_to_string(out.join("summaries.json")).unwrap()).unwrap();
    assert_eq!(summaries.as_array().unwrap().len(), 3);
    assert!(summaries[0]["summary"].is_string());
    let r = report(&out);
    assert_eq!(r["iterations"].as_array().unwrap().len(), 3);
    assert!(r["metrics"]["nmi"].is_number());
    assert!(r["timings"]["total_ms"].is_number());
}

#[test]
fn missing_k_is_usage_error() {
    let o = nilc(&["run", "--dataset", &toy(), "--mock-llm", "--mock-encoder"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("K is required"));
}

#[test]
fn unknown_flag_is_usage_error() {
    let o = nilc(&["run", "--dataset", &toy(), "--k", "3", "--frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    let o = nilc(&["run", "--dataset", &toy(), "--k", "3", "--ablate", "no-everything"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_embedding_source_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = nilc(&["run", "--dataset", &toy(), "--k", "3", "--mock-llm", "--output", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("embedding source"));
}

#[test]
fn missing_dataset_is_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = nilc(&[
        "run", "--dataset", "/nonexistent/x.jsonl", "--k", "3", "--mock-llm", "--mock-encoder", "--output", s(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn semi_supervised_needs_labels() {
    let dir = tempfile::tempdir().unwrap();
    let o = nilc(&[
        "run", "--dataset", &toy(), "--k", "3", "--mock-llm", "--mock-encoder", "--mode", "semi-supervised", "--output",
        s(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn ablating_dcs_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let o = nilc(&[
        "run", "--dataset", &toy(), "--k", "3", "--mock-llm", "--mock-encoder", "--ablate", "no-dcs", "--output",
        s(dir.path()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = report(dir.path());
    assert_eq!(r["mechanisms"]["dcs"], false);
    assert_eq!(r["config"]["mechanisms"]["dcs"], false);
}

#[test]
fn config_file_supplies_k_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    std::fs::write(&cfg, "k = 4\nt_macro = 1\nencoder.mock = true\nllm.mock = true\n").unwrap();
    let out = dir.path().join("out");
    let o = nilc(&["run", "--dataset", &toy(), "--config", s(&cfg), "--iterations", "2", "--output", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = report(&out);
    assert_eq!(r["config"]["k"], 4);
    assert_eq!(r["iterations"].as_array().unwrap().len(), 2);
}

fn write_toy_embeddings(dir: &Path) -> PathBuf {
    let texts: Vec<String> = std::fs::read_to_string(common::toy_dataset())
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap()["text"].as_str().unwrap().to_string())
        .collect();
    let enc = MockEncoder::new(12, 3);
    let rows: Vec<Vec<f64>> = texts.iter().map(|t| enc.embed(t)).collect();
    let path = dir.join("toy.emb");
    write_embedding_file(&path, &EmbeddingMatrix::from_rows(&rows).unwrap()).unwrap();
    path
}

#[test]
fn precomputed_embeddings_with_echo_model_need_no_encoder() {
    let dir = tempfile::tempdir().unwrap();
    let emb = write_toy_embeddings(dir.path());
    let out = dir.path().join("out");
    let o = nilc(&["run", "--dataset", &toy(), "--embeddings", s(&emb), "--k", "3", "--mock-llm", "--output", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(report(&out)["dim"], 12);
}

#[test]
fn new_text_without_encoder_fails_with_partial_report() {
    let dir = tempfile::tempdir().unwrap();
    let emb = write_toy_embeddings(dir.path());
    let script = dir.path().join("script.json");
    std::fs::write(&script, r#"[{"kind": "summary", "response": "a brand new summary"}]"#).unwrap();
    let out = dir.path().join("out");
    let o = nilc(&[
        "run", "--dataset", &toy(), "--embeddings", s(&emb), "--k", "3", "--mock-llm", s(&script), "--output", s(&out),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let r = report(&out);
    assert!(r["error"].as_str().unwrap().contains("no embedding"));
    assert!(!out.join("assignments.jsonl").exists());
}

#[test]
fn mismatched_embedding_count_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("short.emb");
    write_embedding_file(&path, &EmbeddingMatrix::from_rows(&[vec![1.0, 0.0]]).unwrap()).unwrap();
    let o = nilc(&[
        "run", "--dataset", &toy(), "--embeddings", s(&path), "--k", "3", "--mock-llm", "--output", s(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("30 texts but 1 embedding rows"), "{}", stderr(&o));
}

#[test]
fn semi_supervised_run_records_seeding_and_mapping() {
    let dir = tempfile::tempdir().unwrap();
    let labeled = dir.path().join("labeled.jsonl");
    std::fs::write(
        &labeled,
        "{\"text\": \"what is my balance\", \"label\": \"check_balance\"}\n{\"text\": \"i lost my card\", \"label\": \"lost_card\"}\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = nilc(&[
        "run", "--dataset", &toy(), "--k", "3", "--mock-llm", "--mock-encoder", "--mode", "semi-supervised", "--labeled",
        s(&labeled), "--mapping", "llm", "--cluster-labeled", "--output", s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = report(&out);
    assert_eq!(r["n"], 32);
    assert_eq!(r["seeding"]["known_intents"], serde_json::json!(["check_balance", "lost_card"]));
    let mapping = &r["iterations"][0]["mapping"];
    assert_eq!(mapping["strategy"], "llm");
    assert_eq!(mapping["pairs"].as_array().unwrap().len(), 2);
}

fn write_lines(path: &Path, lines: &[String]) {
    std::fs::write(path, lines.join("\n") + "\n").unwrap();
}

fn six_point_files(dir: &Path, order: &[usize]) -> (PathBuf, PathBuf) {
    let pred = [0, 0, 1, 1, 2, 2];
    let labels = ["a", "a", "a", "b", "b", "b"];
    let data = dir.join("data.jsonl");
    write_lines(&data, &labels.iter().enumerate().map(|(i, l)| format!(r#"{{"text": "t{i}", "label": "{l}"}}"#)).collect::<Vec<_>>());
    let p = dir.join("pred.jsonl");
    write_lines(&p, &order.iter().map(|&i| format!(r#"{{"id": {i}, "cluster": {}}}"#, pred[i])).collect::<Vec<_>>());
    (p, data)
}

fn eval_json(pred: &Path, data: &Path) -> Value {
    let o = nilc(&["eval", "--pred", s(pred), "--dataset", s(data)]);
    assert!(o.status.success(), "{}", stderr(&o));
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn eval_fixture_values() {
    let dir = tempfile::tempdir().unwrap();
    let (p, d) = six_point_files(dir.path(), &[0, 1, 2, 3, 4, 5]);
    let m = eval_json(&p, &d);
    assert!((m["nmi"].as_f64().unwrap() - 0.5158037429793889).abs() < 1e-12);
    assert!((m["ari"].as_f64().unwrap() - 0.24242424242424243).abs() < 1e-12);
    assert!((m["acc"].as_f64().unwrap() - 4.0 / 6.0).abs() < 1e-12);
}

#[test]
fn eval_joins_by_id() {
    let dir = tempfile::tempdir().unwrap();
    let (p, d) = six_point_files(dir.path(), &[0, 1, 2, 3, 4, 5]);
    let a = eval_json(&p, &d);
    let (p, d) = six_point_files(dir.path(), &[4, 2, 5, 0, 3, 1]);
    assert_eq!(eval_json(&p, &d), a);
}

#[test]
fn eval_perfect_prediction_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = common::toy_dataset();
    let labels: Vec<String> = std::fs::read_to_string(&data)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap()["label"].as_str().unwrap().to_string())
        .collect();
    let mut names: Vec<&String> = labels.iter().collect();
    names.dedup();
    let pred = dir.path().join("pred.jsonl");
    write_lines(
        &pred,
        &labels
            .iter()
            .enumerate()
            .map(|(i, l)| format!(r#"{{"id": {i}, "cluster": {}}}"#, names.iter().position(|n| *n == l).unwrap()))
            .collect::<Vec<_>>(),
    );
    let out = dir.path().join("metrics.json");
    let o = nilc(&["eval", "--pred", s(&pred), "--dataset", s(&data), "--output", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m: Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    for key in ["nmi", "ari", "acc", "ana"] {
        assert!((m[key].as_f64().unwrap() - 1.0).abs() < 1e-12, "{key}");
    }
}

#[test]
fn eval_names_first_bad_id() {
    let dir = tempfile::tempdir().unwrap();
    let (p, d) = six_point_files(dir.path(), &[0, 1, 2, 4, 5]);
    let o = nilc(&["eval", "--pred", s(&p), "--dataset", s(&d)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("id 3 has no prediction"), "{}", stderr(&o));

    let mut lines: Vec<String> = std::fs::read_to_string(&p).unwrap().lines().map(str::to_string).collect();
    lines.push(r#"{"id": 3, "cluster": 1}"#.into());
    lines.push(r#"{"id": 9, "cluster": 0}"#.into());
    lines.push(r#"{"id": 7, "cluster": 0}"#.into());
    write_lines(&p, &lines);
    let o = nilc(&["eval", "--pred", s(&p), "--dataset", s(&d)]);
    assert!(stderr(&o).contains("id 7 is not in the dataset"), "{}", stderr(&o));
}
