use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CliError, PipelineConfig};
use crate::compose::{combine, CombinationMethod, CompositionConfig, ModalitySet};
use crate::corpus::{binarize, clean, load_manifest, LabelKind, SentimentClass, UtteranceKey};
use crate::eval::{aggregate, macro_f1, make_folds, make_split, FoldPlan, MetricsReport, SplitSpec};
use crate::fixture;
use crate::jsonl::{self, JsonlWriter};
use crate::llm::{
    build_prompt, finalize_prediction, parse_answer_with, Provenance, RefusalList, ServiceClient,
    ServiceError, StandInScript, StandInServer,
};
use crate::locale::LocaleTable;
use crate::pipeline::{describe_record, UtteranceDescription};

pub fn descriptions_path(out: &Path) -> PathBuf {
    out.join("descriptions.jsonl")
}

pub fn clean_report_path(out: &Path) -> PathBuf {
    out.join("clean_report.jsonl")
}

pub fn composed_path(out: &Path) -> PathBuf {
    out.join("composed.jsonl")
}

pub fn dataset_path(out: &Path) -> PathBuf {
    out.join("dataset.jsonl")
}

pub fn splits_path(out: &Path) -> PathBuf {
    out.join("splits.json")
}

pub fn predictions_path(out: &Path, run: usize) -> PathBuf {
    out.join(format!("predictions_run{run}.jsonl"))
}

pub fn resume_marker_path(out: &Path, run: usize) -> PathBuf {
    out.join(format!("predictions_run{run}.jsonl.resume"))
}

pub fn report_path(out: &Path) -> PathBuf {
    out.join("report.json")
}

pub fn scores_path(out: &Path) -> PathBuf {
    out.join("scores.csv")
}

/// Seed for the fallback draw of utterance `index` in `run`.
pub fn prediction_seed(base: u64, run: usize, index: usize) -> u64 {
    base.wrapping_add((run as u64) << 32).wrapping_add(index as u64)
}

#[derive(Debug, Serialize)]
struct Header<'a> {
    command: &'a str,
    version: &'a str,
    config: &'a PipelineConfig,
}

fn header<'a>(command: &'a str, cfg: &'a PipelineConfig) -> Header<'a> {
    Header {
        command,
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComposedRow {
    pub participant_id: String,
    pub exchange_id: String,
    pub text: String,
    pub method: CombinationMethod,
    pub modalities: ModalitySet,
}

/// One row of the labelled dataset consumed by model training.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportRow {
    pub participant_id: String,
    pub exchange_id: String,
    pub text: String,
    pub method: CombinationMethod,
    pub modalities: ModalitySet,
    pub self_label: SentimentClass,
    pub third_label: SentimentClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub header: serde_json::Value,
    pub fold_plan: FoldPlan,
    pub splits: Vec<SplitSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub participant_id: String,
    pub exchange_id: String,
    pub gold: SentimentClass,
    pub predicted: SentimentClass,
    pub provenance: Provenance,
    pub raw_answer: String,
}

impl PredictionRow {
    fn key(&self) -> UtteranceKey {
        UtteranceKey {
            participant_id: self.participant_id.clone(),
            exchange_id: self.exchange_id.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub header: serde_json::Value,
    pub label: LabelKind,
    pub fold_plan: FoldPlan,
    pub metrics: MetricsReport,
    /// Macro-F1 over all utterances of each run, ignoring folds.
    pub pooled_f1: Vec<f64>,
    /// Share of answers per run that needed the fallback.
    pub fallback_rate: Vec<f64>,
}

fn data<E: std::fmt::Display>(context: &str) -> impl FnOnce(E) -> CliError + '_ {
    move |e| CliError::Data(format!("{context}: {e}"))
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", path.display()))
}

fn create_out_dir(cfg: &PipelineConfig) -> Result<(), CliError> {
    fs::create_dir_all(&cfg.out_dir).map_err(io_err(&cfg.out_dir))
}

fn locale(cfg: &PipelineConfig) -> Result<LocaleTable, CliError> {
    match &cfg.locale {
        Some(path) => LocaleTable::load(path).map_err(|e| CliError::Usage(e.to_string())),
        None => Ok(LocaleTable::english()),
    }
}

fn thread_pool(cfg: &PipelineConfig) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| CliError::Usage(format!("worker pool: {e}")))
}

fn composition(cfg: &PipelineConfig) -> Result<CompositionConfig, CliError> {
    Ok(CompositionConfig {
        separator: cfg.separator.clone(),
        paragraph_template: cfg.paragraph_template.clone(),
        locale: locale(cfg)?,
    })
}

fn read_descriptions(cfg: &PipelineConfig) -> Result<Vec<UtteranceDescription>, CliError> {
    let path = descriptions_path(&cfg.out_dir);
    Ok(jsonl::read(&path).map_err(io_err(&path))?.rows)
}

pub fn describe(cfg: &PipelineConfig) -> Result<(), CliError> {
    let manifest = cfg
        .manifest
        .as_ref()
        .ok_or_else(|| CliError::Usage("describe needs --manifest or `manifest` in the config".into()))?;
    let locale = locale(cfg)?;
    let corpus = load_manifest(manifest).map_err(data("manifest"))?;
    let pool = thread_pool(cfg)?;
    let (kept, report) = pool.install(|| clean(&corpus));
    let described: Vec<UtteranceDescription> = pool.install(|| {
        kept.records()
            .par_iter()
            .map(|r| {
                describe_record(r, &cfg.audio, &locale).map_err(|e| {
                    CliError::Data(format!("{}/{}: {e}", r.participant_id, r.exchange_id))
                })
            })
            .collect::<Result<_, _>>()
    })?;

    create_out_dir(cfg)?;
    let path = descriptions_path(&cfg.out_dir);
    let mut out = JsonlWriter::create(&path).map_err(io_err(&path))?;
    out.header(&header("describe", cfg)).map_err(io_err(&path))?;
    for d in &described {
        out.row(d).map_err(io_err(&path))?;
    }
    out.flush().map_err(io_err(&path))?;

    let path = clean_report_path(&cfg.out_dir);
    let mut out = JsonlWriter::create(&path).map_err(io_err(&path))?;
    out.header(&header("describe", cfg)).map_err(io_err(&path))?;
    for d in &report.dropped {
        out.row(d).map_err(io_err(&path))?;
    }
    out.flush().map_err(io_err(&path))?;

    println!(
        "described {} utterances, dropped {}",
        described.len(),
        report.dropped.len()
    );
    Ok(())
}

fn compose_all(
    cfg: &PipelineConfig,
    rows: &[UtteranceDescription],
    method: CombinationMethod,
) -> Result<Vec<crate::compose::CombinedInput>, CliError> {
    let subset = cfg.modality_set()?;
    let comp = composition(cfg)?;
    thread_pool(cfg)?.install(|| {
        rows.par_iter()
            .map(|d| {
                combine(&d.restricted(subset), method, &comp).map_err(|e| {
                    CliError::Data(format!("{}/{}: {e}", d.participant_id, d.exchange_id))
                })
            })
            .collect()
    })
}

pub fn compose(cfg: &PipelineConfig) -> Result<(), CliError> {
    let rows = read_descriptions(cfg)?;
    let combined = compose_all(cfg, &rows, cfg.method)?;
    let path = composed_path(&cfg.out_dir);
    let mut out = JsonlWriter::create(&path).map_err(io_err(&path))?;
    out.header(&header("compose", cfg)).map_err(io_err(&path))?;
    for (d, c) in rows.iter().zip(combined) {
        out.row(&ComposedRow {
            participant_id: d.participant_id.clone(),
            exchange_id: d.exchange_id.clone(),
            text: c.text,
            method: c.method,
            modalities: c.modalities,
        })
        .map_err(io_err(&path))?;
    }
    out.flush().map_err(io_err(&path))?;
    println!("composed {} utterances", rows.len());
    Ok(())
}

fn fold_plan(cfg: &PipelineConfig, keys: &[UtteranceKey]) -> Result<FoldPlan, CliError> {
    let participants =
        crate::corpus::first_appearance(keys.iter().map(|k| k.participant_id.as_str()));
    make_folds(&participants, cfg.eval.k, cfg.eval.fold_seed).map_err(data("folds"))
}

pub fn export(cfg: &PipelineConfig) -> Result<(), CliError> {
    let rows = read_descriptions(cfg)?;
    let combined = compose_all(cfg, &rows, cfg.method)?;
    let path = dataset_path(&cfg.out_dir);
    let mut out = JsonlWriter::create(&path).map_err(io_err(&path))?;
    out.header(&header("export", cfg)).map_err(io_err(&path))?;
    for (d, c) in rows.iter().zip(combined) {
        out.row(&ExportRow {
            participant_id: d.participant_id.clone(),
            exchange_id: d.exchange_id.clone(),
            text: c.text,
            method: c.method,
            modalities: c.modalities,
            self_label: binarize(d.self_label),
            third_label: binarize(d.third_label),
        })
        .map_err(io_err(&path))?;
    }
    out.flush().map_err(io_err(&path))?;

    let keys: Vec<UtteranceKey> = rows
        .iter()
        .map(|d| UtteranceKey {
            participant_id: d.participant_id.clone(),
            exchange_id: d.exchange_id.clone(),
        })
        .collect();
    let plan = fold_plan(cfg, &keys)?;
    let splits = (0..plan.k)
        .map(|f| make_split(&keys, &plan, f))
        .collect::<Result<Vec<_>, _>>()
        .map_err(data("splits"))?;
    let doc = SplitPlan {
        header: serde_json::to_value(header("export", cfg)).expect("config serializes"),
        fold_plan: plan,
        splits,
    };
    let path = splits_path(&cfg.out_dir);
    write_json(&path, &doc)?;
    println!("exported {} utterances in {} folds", rows.len(), doc.fold_plan.k);
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(data("json"))?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

fn gold(d: &UtteranceDescription, kind: LabelKind) -> SentimentClass {
    binarize(match kind {
        LabelKind::SelfReported => d.self_label,
        LabelKind::Third => d.third_label,
    })
}

/// Progress recorded next to an interrupted prediction file.
#[derive(Debug, Serialize, Deserialize)]
struct ResumeMarker {
    run: usize,
    completed: usize,
    total: usize,
    error: String,
}

pub fn predict(cfg: &PipelineConfig, only_run: Option<usize>, resume: bool) -> Result<(), CliError> {
    let runs: Vec<usize> = match only_run {
        Some(r) if r >= cfg.eval.runs => {
            return Err(CliError::Usage(format!(
                "run {r} out of range for {} runs",
                cfg.eval.runs
            )))
        }
        Some(r) => vec![r],
        None => (0..cfg.eval.runs).collect(),
    };
    let rows = read_descriptions(cfg)?;
    let combined = compose_all(cfg, &rows, CombinationMethod::Paragraph)?;
    let prompts = rows
        .iter()
        .zip(&combined)
        .map(|(d, c)| {
            let key = UtteranceKey {
                participant_id: d.participant_id.clone(),
                exchange_id: d.exchange_id.clone(),
            };
            build_prompt(c, &cfg.llm.categories, Some(key))
                .map(|p| p.prompt_text)
                .map_err(|e| CliError::Usage(e.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let refusals = match &cfg.llm.refusals {
        Some(path) => RefusalList::parse(&fs::read_to_string(path).map_err(io_err(path))?),
        None => RefusalList::default(),
    };

    // The stand-in lives for the duration of the command.
    let mut service = cfg.llm.service.clone();
    let (_server, client) = match &cfg.llm.stand_in {
        Some(script) => {
            let script = StandInScript::load(script).map_err(io_err(script))?;
            let server = StandInServer::start(script)
                .map_err(|e| CliError::Service(format!("stand-in: {e}")))?;
            service.endpoint = server.endpoint();
            let client = ServiceClient::with_credential(service, "stand-in".into());
            (Some(server), client)
        }
        None => (None, ServiceClient::from_env(service)),
    };
    let client = client.map_err(|e| CliError::Service(e.to_string()))?;

    create_out_dir(cfg)?;
    for run in runs {
        let ctx = RunContext {
            cfg,
            rows: &rows,
            prompts: &prompts,
            refusals: &refusals,
            client: &client,
            run,
        };
        ctx.execute(resume)?;
    }
    Ok(())
}

struct RunContext<'a> {
    cfg: &'a PipelineConfig,
    rows: &'a [UtteranceDescription],
    prompts: &'a [String],
    refusals: &'a RefusalList,
    client: &'a ServiceClient,
    run: usize,
}

impl RunContext<'_> {
    fn execute(&self, resume: bool) -> Result<(), CliError> {
        let out_dir = &self.cfg.out_dir;
        let path = predictions_path(out_dir, self.run);
        let marker = resume_marker_path(out_dir, self.run);

        let start = if resume && path.exists() {
            let done: Vec<PredictionRow> = jsonl::read(&path).map_err(io_err(&path))?.rows;
            for (i, row) in done.iter().enumerate() {
                let expected = self.rows.get(i).map(|d| (&d.participant_id, &d.exchange_id));
                if expected != Some((&row.participant_id, &row.exchange_id)) {
                    return Err(CliError::Data(format!(
                        "{}: row {} ({}/{}) does not match the descriptions",
                        path.display(),
                        i + 1,
                        row.participant_id,
                        row.exchange_id
                    )));
                }
            }
            done.len()
        } else {
            0
        };

        let mut out = if start > 0 {
            JsonlWriter::append(&path).map_err(io_err(&path))?
        } else {
            let mut w = JsonlWriter::create(&path).map_err(io_err(&path))?;
            w.header(&header("predict", self.cfg)).map_err(io_err(&path))?;
            w
        };

        let (written, failure) = self.query_all(start, &mut out, &path)?;
        out.flush().map_err(io_err(&path))?;

        match failure {
            None => {
                if marker.exists() {
                    fs::remove_file(&marker).map_err(io_err(&marker))?;
                }
                println!(
                    "run {}: {} predictions ({} resumed)",
                    self.run,
                    self.rows.len(),
                    start
                );
                Ok(())
            }
            Some((index, error)) => {
                let m = ResumeMarker {
                    run: self.run,
                    completed: written,
                    total: self.rows.len(),
                    error: error.to_string(),
                };
                write_json(&marker, &m)?;
                Err(CliError::Service(format!(
                    "run {}: utterance {} failed: {error}; {} of {} rows written, rerun with --resume",
                    self.run,
                    index + 1,
                    written,
                    self.rows.len()
                )))
            }
        }
    }

    /// Queries utterances `start..` with a bounded worker pool and writes
    /// rows in corpus order. After the first failure no new queries start;
    /// only the contiguous prefix of answers is written.
    fn query_all<W: Write>(
        &self,
        start: usize,
        out: &mut JsonlWriter<W>,
        path: &Path,
    ) -> Result<(usize, Option<(usize, ServiceError)>), CliError> {
        let n = self.rows.len();
        let workers = self.client.config().max_in_flight.max(1).min(n.saturating_sub(start).max(1));
        let next = AtomicUsize::new(start);
        let stop = AtomicBool::new(false);
        let (tx, rx) = mpsc::channel::<(usize, Result<String, ServiceError>)>();

        thread::scope(|s| {
            for _ in 0..workers {
                let tx = tx.clone();
                let (next, stop) = (&next, &stop);
                s.spawn(move || loop {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= n {
                        break;
                    }
                    let reply = self.client.query(&self.prompts[i]);
                    if reply.is_err() {
                        stop.store(true, Ordering::SeqCst);
                    }
                    if tx.send((i, reply)).is_err() {
                        break;
                    }
                });
            }
            drop(tx);

            let mut pending = BTreeMap::new();
            let mut want = start;
            let mut failure: Option<(usize, ServiceError)> = None;
            for (i, reply) in rx {
                match reply {
                    Ok(text) => {
                        pending.insert(i, text);
                    }
                    Err(e) => {
                        if failure.as_ref().is_none_or(|(f, _)| i < *f) {
                            failure = Some((i, e));
                        }
                    }
                }
                while let Some(text) = pending.remove(&want) {
                    out.row(&self.prediction(want, text)?).map_err(io_err(path))?;
                    want += 1;
                }
            }
            Ok((want, failure))
        })
    }

    fn prediction(&self, i: usize, raw: String) -> Result<PredictionRow, CliError> {
        let d = &self.rows[i];
        let gold = gold(d, self.cfg.label);
        let parsed = parse_answer_with(&raw, &self.cfg.llm.categories, self.refusals);
        let seed = prediction_seed(self.cfg.llm.seed, self.run, i);
        let p = finalize_prediction(&parsed, gold, seed).map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(PredictionRow {
            participant_id: d.participant_id.clone(),
            exchange_id: d.exchange_id.clone(),
            gold,
            predicted: p.predicted,
            provenance: p.provenance,
            raw_answer: raw,
        })
    }
}

pub fn evaluate(cfg: &PipelineConfig) -> Result<(), CliError> {
    let mut runs: Vec<Vec<PredictionRow>> = Vec::new();
    for run in 0..cfg.eval.runs {
        let marker = resume_marker_path(&cfg.out_dir, run);
        if marker.exists() {
            return Err(CliError::Data(format!(
                "run {run} is incomplete ({} exists)",
                marker.display()
            )));
        }
        let path = predictions_path(&cfg.out_dir, run);
        runs.push(jsonl::read(&path).map_err(io_err(&path))?.rows);
    }
    let keys: Vec<UtteranceKey> = runs[0].iter().map(PredictionRow::key).collect();
    if keys.is_empty() {
        return Err(CliError::Data("no predictions to evaluate".into()));
    }
    for (r, rows) in runs.iter().enumerate().skip(1) {
        if rows.iter().map(PredictionRow::key).ne(keys.iter().cloned()) {
            return Err(CliError::Data(format!(
                "run {r} covers different utterances than run 0"
            )));
        }
    }
    let plan = fold_plan(cfg, &keys)?;

    let mut matrix = Vec::new();
    let mut pooled = Vec::new();
    let mut fallback = Vec::new();
    for rows in &runs {
        let mut scores = Vec::new();
        for fold in 0..plan.k {
            let (preds, golds): (Vec<_>, Vec<_>) = rows
                .iter()
                .filter(|r| plan.fold_of(&r.participant_id) == Some(fold))
                .map(|r| (r.predicted, r.gold))
                .unzip();
            scores.push(Some(macro_f1(&preds, &golds).map_err(data("scoring"))?));
        }
        matrix.push(scores);
        let (preds, golds): (Vec<_>, Vec<_>) = rows.iter().map(|r| (r.predicted, r.gold)).unzip();
        pooled.push(macro_f1(&preds, &golds).map_err(data("scoring"))?);
        let n_fallback = rows
            .iter()
            .filter(|r| r.provenance == Provenance::FallbackIncorrect)
            .count();
        fallback.push(n_fallback as f64 / rows.len() as f64);
    }
    let metrics = aggregate(&matrix).map_err(data("aggregate"))?;
    let report = EvaluationReport {
        header: serde_json::to_value(header("evaluate", cfg)).expect("config serializes"),
        label: cfg.label,
        fold_plan: plan,
        metrics,
        pooled_f1: pooled,
        fallback_rate: fallback,
    };

    write_json(&report_path(&cfg.out_dir), &report)?;
    let path = scores_path(&cfg.out_dir);
    let mut csv = csv::Writer::from_path(&path).map_err(data("scores.csv"))?;
    csv.write_record(["run", "fold", "f1"]).map_err(data("scores.csv"))?;
    for (r, row) in report.metrics.scores.iter().enumerate() {
        for (f, score) in row.iter().enumerate() {
            csv.write_record([r.to_string(), f.to_string(), score.to_string()])
                .map_err(data("scores.csv"))?;
        }
    }
    csv.flush().map_err(io_err(&path))?;
    print!("{}", summary_table(&report.metrics));
    Ok(())
}

/// Runs as rows, folds as columns, with the per-run mean on the right.
pub fn summary_table(m: &MetricsReport) -> String {
    let k = m.per_fold_f1.len();
    let mut cols: Vec<String> = (0..k).map(|f| format!("fold {f}")).collect();
    cols.push("mean".into());
    let width = 8;
    let rule = format!("+{}+\n", vec!["-".repeat(width + 2); k + 2].join("+"));
    let mut s = String::new();
    s.push_str(&rule);
    let _ = writeln!(
        s,
        "| {:<width$} | {} |",
        "run",
        cols.iter().map(|c| format!("{c:>width$}")).collect::<Vec<_>>().join(" | ")
    );
    s.push_str(&rule);
    for (r, row) in m.scores.iter().enumerate() {
        let cells: Vec<String> = row
            .iter()
            .chain(std::iter::once(&m.per_run_mean[r]))
            .map(|v| format!("{v:>width$.4}"))
            .collect();
        let _ = writeln!(s, "| {:<width$} | {} |", r, cells.join(" | "));
    }
    s.push_str(&rule);
    let cells: Vec<String> = m
        .per_fold_f1
        .iter()
        .chain(std::iter::once(&m.final_f1))
        .map(|v| format!("{v:>width$.4}"))
        .collect();
    let _ = writeln!(s, "| {:<width$} | {} |", "mean", cells.join(" | "));
    s.push_str(&rule);
    s
}

pub fn gen_fixture(dir: &Path, participants: usize, utterances: usize) -> Result<(), CliError> {
    let plans = fixture::generate(dir, participants, utterances).map_err(data("fixture"))?;
    println!("wrote {} utterances to {}", plans.len(), dir.display());
    Ok(())
}
