use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use autonlu_core::corpus::write_classification_jsonl;
use autonlu_core::synthetic::{intent_corpus, plant_label_noise, separable_corpus};
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_autonlu"))
}

fn run(args: &[&str], stdin: Option<&str>) -> Output {
    let mut cmd = bin();
    cmd.args(args).stdin(Stdio::piped()).stdout(Stdio::piped()).stderr(Stdio::piped());
    let mut child = cmd.spawn().unwrap();
    let mut pipe = child.stdin.take().unwrap();
    pipe.write_all(stdin.unwrap_or("").as_bytes()).unwrap();
    drop(pipe);
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json_lines(o: &Output) -> Vec<Value> {
    stdout(o).lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn setup(dir: &Path, per_class: usize, extra: &str) -> PathBuf {
    let data = dir.join("train.jsonl");
    write_classification_jsonl(&data, intent_corpus(per_class, 3).unwrap().samples()).unwrap();
    let cfg = dir.join("config.json");
    fs::write(&cfg, format!(r#"{{"dataset": {{"train": "train.jsonl"}}{extra}}}"#)).unwrap();
    cfg
}

#[test]
fn train_then_predict_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), 30, "");
    let out = dir.path().join("out");
    let o = run(&["train", "-c", cfg.to_str().unwrap(), "-o", out.to_str().unwrap()], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let lines = json_lines(&o);
    assert_eq!(lines[0]["regime"]["method"], "full_train");
    assert!(out.join("metrics.json").exists());

    let model = out.join("model");
    let o = run(&["predict", "-b", model.to_str().unwrap()], Some("set an alarm for noon\n\nplay some jazz music\n"));
    assert!(o.status.success());
    let preds = json_lines(&o);
    assert_eq!(preds.len(), 2);
    assert_eq!(preds[0]["label"], "set_alarm");
    assert_eq!(preds[1]["label"], "play_music");
    for p in &preds {
        for k in ["label", "confidence", "ood", "ood_score"] {
            assert!(p.get(k).is_some(), "missing {k}");
        }
    }

    let o = run(&["predict", "-b", model.to_str().unwrap()], Some(""));
    assert!(o.status.success());
    assert!(o.stdout.is_empty());

    let weights = model.join("weights.bin");
    let mut bytes = fs::read(&weights).unwrap();
    bytes[10] ^= 0xff;
    fs::write(&weights, bytes).unwrap();
    let o = run(&["predict", "-b", model.to_str().unwrap()], Some("hello\n"));
    assert_eq!(o.status.code(), Some(1));
    let err: Value = serde_json::from_slice(o.stderr.trim_ascii()).unwrap();
    assert_eq!(err["error"], "integrity");
}

#[test]
fn dry_run_and_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), 10, r#", "method": {"upsample": false}"#);
    let out = dir.path().join("out");
    let o = run(&["train", "-c", cfg.to_str().unwrap(), "-o", out.to_str().unwrap(), "--dry-run"], None);
    assert!(o.status.success());
    let lines = json_lines(&o);
    assert_eq!(lines.len(), 1);
    assert_eq!(lines[0]["regime"]["method"], "contrastive_few_shot");
    assert!(!out.exists());

    let o = run(&["train", "-c", cfg.to_str().unwrap(), "--ood-method", "energy"], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("ood_method"));

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"ood": {"ood_method": "knn"}}"#).unwrap();
    let o = run(&["train", "-c", bad.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("ood.ood_method"));

    let missing = dir.path().join("none.json");
    let o = run(&["train", "-c", missing.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn diagnose_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let clean = separable_corpus(3, 30, 1).unwrap();
    let (noisy, _) = plant_label_noise(&clean, 0.1, 4).unwrap();
    write_classification_jsonl(dir.path().join("train.jsonl"), noisy.samples()).unwrap();
    let cfg = dir.path().join("config.json");
    fs::write(&cfg, r#"{"dataset": {"train": "train.jsonl"}}"#).unwrap();
    let out = dir.path().join("diag");
    let o = run(&["diagnose", "-c", cfg.to_str().unwrap(), "-o", out.to_str().unwrap()], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = &json_lines(&o)[0];
    let flagged = summary["flagged"].as_u64().unwrap() as usize;
    assert!(flagged > 0);

    let map = fs::read_to_string(out.join("data_map.csv")).unwrap();
    assert_eq!(map.lines().next().unwrap(), "id,confidence,variability,region");
    assert_eq!(map.lines().count(), noisy.len() + 1);
    assert!(out.join("data_map.svg").exists());
    let filtered = fs::read_to_string(out.join("filtered.jsonl")).unwrap();
    assert_eq!(filtered.lines().count(), noisy.len() - flagged);
    let scores = fs::read_to_string(out.join("scores.csv")).unwrap();
    assert_eq!(scores.lines().next().unwrap(), "id,text,label,retag,uncertainty,pvi,cartography,flags");
}

#[test]
fn diagnose_rejects_cartography_on_ner() {
    let dir = tempfile::tempdir().unwrap();
    let lines: Vec<String> = (0..12).map(|i| format!("fly to [paris](CITY) on day {i}")).collect();
    fs::write(dir.path().join("ner.txt"), lines.join("\n")).unwrap();
    let cfg = dir.path().join("config.json");
    fs::write(&cfg, r#"{"dataset": {"train": "ner.txt", "format": "bracket"}}"#).unwrap();
    let o = run(&["diagnose", "-c", cfg.to_str().unwrap(), "--evaluators", "cartography"], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cartography"));
}

#[test]
fn bench_is_deterministic_and_replayable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), 120, "");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = run(&["--seed", "5", "bench", "-c", cfg.to_str().unwrap(), "-o", out.to_str().unwrap()], None);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["manifest.json", "report.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let c = dir.path().join("c");
    let manifest = a.join("manifest.json");
    let o = run(
        &["--seed", "5", "bench", "-c", cfg.to_str().unwrap(), "-o", c.to_str().unwrap(), "--replay", manifest.to_str().unwrap()],
        None,
    );
    assert!(o.status.success());
    assert_eq!(fs::read(a.join("report.json")).unwrap(), fs::read(c.join("report.json")).unwrap());

    let unknown = dir.path().join("unknown.json");
    fs::write(&unknown, r#"{"dataset": {"train": "train.jsonl", "name": "no_such_set"}}"#).unwrap();
    let o = run(&["bench", "-c", unknown.to_str().unwrap(), "-o", c.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no_such_set"));
}

#[test]
fn augment_raises_small_classes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), 5, "");
    let out = dir.path().join("aug.jsonl");
    for extra in [&[][..], &["--llm"][..]] {
        let mut args = vec!["augment", "-c", cfg.to_str().unwrap(), "-o", out.to_str().unwrap(), "--target", "12"];
        args.extend_from_slice(extra);
        let o = run(&args, None);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let corpus = autonlu_core::corpus::load_classification(&out).unwrap();
        assert!(corpus.class_counts().values().all(|&n| n == 12));
    }
}

#[test]
fn gen_test_requires_credentials_for_http() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), 10, "");
    let o = bin()
        .args(["gen-test", "-c", cfg.to_str().unwrap(), "--transport", "http"])
        .env_remove("AUTONLU_LLM_BASE_URL")
        .env_remove("AUTONLU_LLM_API_KEY")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("AUTONLU_LLM_BASE_URL"));
}
