use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;
use verbalize::cli::{
    composed_path, dataset_path, descriptions_path, predictions_path, report_path,
    resume_marker_path, scores_path, splits_path, ComposedRow, EvaluationReport, ExportRow,
    PredictionRow, SplitPlan,
};
use verbalize::jsonl;
use verbalize::llm::Provenance;
use verbalize::SentimentClass;

fn verbalize(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_verbalize"))
        .args(args)
        .env_remove("OPENAI_API_KEY")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = verbalize(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Setup {
    _tmp: TempDir,
    fixture: PathBuf,
    out: PathBuf,
    root: PathBuf,
}

fn described() -> Setup {
    let tmp = TempDir::new().unwrap();
    let root = tmp.path().to_path_buf();
    let fixture = root.join("fx");
    let out = root.join("out");
    ok(&["gen-fixture", "--dir", s(&fixture)]);
    ok(&[
        "describe",
        "--manifest",
        s(&fixture.join("manifest.csv")),
        "--out",
        s(&out),
    ]);
    Setup {
        _tmp: tmp,
        fixture,
        out,
        root,
    }
}

fn write_script(dir: &Path, name: &str, json: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, json).unwrap();
    path
}

fn rows<T: serde::de::DeserializeOwned>(path: &Path) -> Vec<T> {
    jsonl::read(path).unwrap().rows
}

#[test]
fn describe_compose_export_on_fixture() {
    let st = described();
    let desc = jsonl::read::<Value>(&descriptions_path(&st.out)).unwrap();
    assert_eq!(desc.rows.len(), 60);
    assert_eq!(desc.header.as_ref().unwrap()["command"], "describe");
    assert!(desc.rows[0]["audio"]["pitch"]["averages"]["n_used"].is_array());
    assert!(desc.rows[0]["facial"]["appeared"].is_array());

    ok(&["compose", "--out", s(&st.out)]);
    let composed: Vec<ComposedRow> = rows(&composed_path(&st.out));
    let got: String = composed
        .iter()
        .map(|r| serde_json::to_string(r).unwrap() + "\n")
        .collect();
    let golden = include_str!("golden/composed_paragraph_afl.jsonl");
    assert_eq!(got, golden);

    ok(&["export", "--out", s(&st.out), "--method", "separator", "--modalities", "A"]);
    let exported: Vec<ExportRow> = rows(&dataset_path(&st.out));
    assert_eq!(exported.len(), 60);
    for r in &exported {
        // Pitch and energy units only.
        assert_eq!(r.text.matches("[SEP]").count(), 1);
        assert!(r.text.starts_with("pitch "));
    }
    let plan: SplitPlan =
        serde_json::from_str(&fs::read_to_string(splits_path(&st.out)).unwrap()).unwrap();
    assert_eq!(plan.splits.len(), 5);
    assert_eq!(plan.fold_plan.fold_sizes().iter().sum::<usize>(), 6);
    for split in &plan.splits {
        assert_eq!(split.train.len() + split.validation.len() + split.test.len(), 60);
    }
}

#[test]
fn export_labels_are_binarized() {
    let st = described();
    ok(&["export", "--out", s(&st.out)]);
    let truth: Vec<Value> = rows(&st.fixture.join("truth.jsonl"));
    let exported: Vec<ExportRow> = rows(&dataset_path(&st.out));
    for (t, e) in truth.iter().zip(&exported) {
        let third = t["third_label"].as_u64().unwrap();
        let expect = if third >= 5 { SentimentClass::High } else { SentimentClass::Low };
        assert_eq!(e.third_label, expect);
    }
}

#[test]
fn empty_manifest_gives_empty_output() {
    let tmp = TempDir::new().unwrap();
    let manifest = tmp.path().join("m.csv");
    fs::write(
        &manifest,
        "participant_id,exchange_id,transcript,audio_path,au_path,self_label,third_label\n",
    )
    .unwrap();
    let out = tmp.path().join("out");
    ok(&["describe", "--manifest", s(&manifest), "--out", s(&out)]);
    let f = jsonl::read::<Value>(&descriptions_path(&out)).unwrap();
    assert!(f.header.is_some());
    assert!(f.rows.is_empty());
}

#[test]
fn bad_audio_path_is_dropped_and_reported() {
    let tmp = TempDir::new().unwrap();
    let fixture = tmp.path().join("fx");
    ok(&["gen-fixture", "--dir", s(&fixture), "--participants", "2", "--utterances", "3"]);
    let manifest = fixture.join("manifest.csv");
    let text = fs::read_to_string(&manifest)
        .unwrap()
        .replace("audio/p01_e02.wav", "audio/missing.wav");
    fs::write(&manifest, text).unwrap();
    let out = tmp.path().join("out");
    ok(&["describe", "--manifest", s(&manifest), "--out", s(&out)]);
    assert_eq!(rows::<Value>(&descriptions_path(&out)).len(), 5);
    let dropped: Vec<Value> = rows(&out.join("clean_report.jsonl"));
    assert_eq!(dropped.len(), 1);
    assert_eq!(dropped[0]["exchange_id"], "e02");
    assert_eq!(dropped[0]["reason"], "MissingAudio");
}

#[test]
fn usage_errors_exit_1() {
    let out = verbalize(&["compose", "--modalities", ""]);
    assert_eq!(out.status.code(), Some(1));
    let out = verbalize(&["compose", "--modalities", "X"]);
    assert_eq!(out.status.code(), Some(1));
    let out = verbalize(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    let out = verbalize(&["describe"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(verbalize(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_inputs_exit_2() {
    let tmp = TempDir::new().unwrap();
    let out = verbalize(&["compose", "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    let out = verbalize(&["evaluate", "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_credential_exits_3() {
    let st = described();
    let out = verbalize(&["predict", "--out", s(&st.out), "--runs", "1"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("OPENAI_API_KEY"));
}

#[test]
fn always_high_predicts_high() {
    let st = described();
    let script = write_script(&st.root, "s.json", r#"{"default_reply": "high"}"#);
    ok(&["predict", "--out", s(&st.out), "--runs", "1", "--stand-in", s(&script)]);
    let preds: Vec<PredictionRow> = rows(&predictions_path(&st.out, 0));
    assert_eq!(preds.len(), 60);
    assert!(preds
        .iter()
        .all(|p| p.predicted == SentimentClass::High && p.provenance == Provenance::Extracted));
}

#[test]
fn refusals_always_score_zero() {
    let st = described();
    let script = write_script(&st.root, "s.json", r#"{"default_reply": "I cannot determine that."}"#);
    ok(&["predict", "--out", s(&st.out), "--stand-in", s(&script)]);
    for run in 0..3 {
        let preds: Vec<PredictionRow> = rows(&predictions_path(&st.out, run));
        assert!(preds
            .iter()
            .all(|p| p.provenance == Provenance::FallbackIncorrect && p.predicted != p.gold));
    }
    ok(&["evaluate", "--out", s(&st.out)]);
    let report: EvaluationReport =
        serde_json::from_str(&fs::read_to_string(report_path(&st.out)).unwrap()).unwrap();
    assert_eq!(report.metrics.final_f1, 0.0);
    assert!(report.metrics.scores.iter().flatten().all(|&f| f == 0.0));
    assert_eq!(report.fallback_rate, vec![1.0; 3]);
}

#[test]
fn resume_appends_remaining_rows() {
    let st = described();
    let config = st.root.join("cfg.toml");
    fs::write(
        &config,
        "[llm]\nmax_in_flight = 1\nmax_retries = 0\nbackoff_base_ms = 1\n[eval]\nruns = 1\n",
    )
    .unwrap();
    let failing = write_script(&st.root, "fail.json", r#"{"default_reply": "low", "fail_from": 30}"#);
    let good = write_script(&st.root, "good.json", r#"{"default_reply": "low"}"#);
    let args = |script: &Path| {
        vec![
            "predict".to_string(),
            "--config".into(),
            s(&config).into(),
            "--out".into(),
            s(&st.out).into(),
            "--stand-in".into(),
            s(script).into(),
        ]
    };

    let a = args(&failing);
    let out = verbalize(&a.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(out.status.code(), Some(3));
    let partial: Vec<PredictionRow> = rows(&predictions_path(&st.out, 0));
    assert_eq!(partial.len(), 30);
    let marker: Value =
        serde_json::from_str(&fs::read_to_string(resume_marker_path(&st.out, 0)).unwrap()).unwrap();
    assert_eq!(marker["completed"], 30);
    let ev = verbalize(&["evaluate", "--config", s(&config), "--out", s(&st.out)]);
    assert_eq!(ev.status.code(), Some(2));

    let mut a = args(&good);
    a.push("--resume".into());
    ok(&a.iter().map(String::as_str).collect::<Vec<_>>());
    let full: Vec<PredictionRow> = rows(&predictions_path(&st.out, 0));
    assert_eq!(full.len(), 60);
    assert_eq!(&full[..30], &partial[..]);
    let desc: Vec<Value> = rows(&descriptions_path(&st.out));
    for (p, d) in full.iter().zip(&desc) {
        assert_eq!(p.participant_id, d["participant_id"].as_str().unwrap());
        assert_eq!(p.exchange_id, d["exchange_id"].as_str().unwrap());
    }
    assert!(!resume_marker_path(&st.out, 0).exists());

    // Same rows as an uninterrupted run.
    ok(&args(&good).iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(rows::<PredictionRow>(&predictions_path(&st.out, 0)), full);
}

fn write_predictions(out: &Path, run: usize, rows: &[(&str, &str, SentimentClass, SentimentClass)]) {
    fs::create_dir_all(out).unwrap();
    let mut w = jsonl::JsonlWriter::create(&predictions_path(out, run)).unwrap();
    for &(p, e, gold, predicted) in rows {
        w.row(&PredictionRow {
            participant_id: p.into(),
            exchange_id: e.into(),
            gold,
            predicted,
            provenance: Provenance::Extracted,
            raw_answer: predicted.as_str().into(),
        })
        .unwrap();
    }
    w.flush().unwrap();
}

#[test]
fn evaluate_hand_fixture() {
    use SentimentClass::{High as H, Low as L};
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    write_predictions(
        &out,
        0,
        &[("p1", "1", H, H), ("p1", "2", H, H), ("p1", "3", L, H), ("p1", "4", L, H)],
    );
    ok(&["evaluate", "--out", s(&out), "--k", "1", "--runs", "1"]);
    let report: EvaluationReport =
        serde_json::from_str(&fs::read_to_string(report_path(&out)).unwrap()).unwrap();
    assert!((report.metrics.final_f1 - 1.0 / 3.0).abs() < 1e-9);
    let csv = fs::read_to_string(scores_path(&out)).unwrap();
    assert_eq!(csv.lines().next(), Some("run,fold,f1"));
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn evaluate_all_correct_and_deterministic() {
    use SentimentClass::{High as H, Low as L};
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let ids: Vec<(String, String, SentimentClass)> = (0..10)
        .flat_map(|p| (0..4).map(move |u| (format!("p{p}"), format!("e{u}"), if (p + u) % 2 == 0 { H } else { L })))
        .collect();
    let table: Vec<(&str, &str, SentimentClass, SentimentClass)> =
        ids.iter().map(|(p, e, g)| (p.as_str(), e.as_str(), *g, *g)).collect();
    for run in 0..3 {
        write_predictions(&out, run, &table);
    }
    ok(&["evaluate", "--out", s(&out)]);
    let first = (fs::read(report_path(&out)).unwrap(), fs::read(scores_path(&out)).unwrap());
    let report: EvaluationReport = serde_json::from_slice(&first.0).unwrap();
    assert_eq!(report.metrics.final_f1, 1.0);
    for _ in 0..2 {
        ok(&["evaluate", "--out", s(&out)]);
        assert_eq!(fs::read(report_path(&out)).unwrap(), first.0);
        assert_eq!(fs::read(scores_path(&out)).unwrap(), first.1);
    }
}

#[test]
fn runs_over_different_utterances_rejected() {
    use SentimentClass::High as H;
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    write_predictions(&out, 0, &[("p1", "1", H, H), ("p2", "1", H, H)]);
    write_predictions(&out, 1, &[("p1", "1", H, H), ("p3", "1", H, H)]);
    let r = verbalize(&["evaluate", "--out", s(&out), "--k", "2", "--runs", "2"]);
    assert_eq!(r.status.code(), Some(2));
}
