//! Corpus evaluation: region scores for grounded records, text scores for
//! free-text records, aggregated per task kind and per record task.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use regalign_core::{
    aggregate, eval_sample, extract_pairs, parse_grounded_text, score_text, EvalError, EvalOptions,
    GroundedDocument, MarkupError, MetricMeans, ParseMode, SampleMetrics, TextNormalizer,
    TextScores,
};
use serde::Serialize;

use crate::config::TaskArg;
use crate::corpus::{read_corpus, write_jsonl, CorpusRecord, LineError, RecordTask};
use crate::Error;

#[derive(Debug, Clone)]
pub struct EvalSettings {
    pub iou_threshold: f64,
    pub mode: ParseMode,
    pub task: TaskArg,
    pub jobs: usize,
    pub normalizer: TextNormalizer,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            iou_threshold: regalign_core::DEFAULT_IOU_THRESHOLD,
            mode: ParseMode::Lenient,
            task: TaskArg::Auto,
            jobs: 1,
            normalizer: TextNormalizer::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecordOutcome {
    pub line: usize,
    pub id: String,
    pub task: RecordTask,
    /// Issues recovered from while parsing the prediction leniently.
    pub prediction_issues: usize,
    pub region: Option<SampleMetrics>,
    pub text: Option<TextScores>,
}

fn markup_kind(e: &MarkupError) -> &'static str {
    match e {
        MarkupError::MalformedBox { .. } => "malformed_box",
        MarkupError::DanglingBox { .. } => "dangling_box",
        MarkupError::UnclosedTag { .. } => "unclosed_tag",
        MarkupError::RefWithoutBox { .. } => "ref_without_box",
        MarkupError::EmptyObject { .. } => "empty_object",
        MarkupError::InvalidObject(_) => "invalid_object",
        MarkupError::NoRegions => "no_regions",
    }
}

fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn text_of(task: RecordTask, doc: &GroundedDocument) -> String {
    match task {
        RecordTask::GroundedReport => collapse_whitespace(&doc.plain_text()),
        _ => collapse_whitespace(&doc.visible_text()),
    }
}

/// Scores one record. References must be well-formed markup; predictions
/// are parsed with the configured mode.
pub fn evaluate_record(
    line: usize,
    record: &CorpusRecord,
    settings: &EvalSettings,
) -> Result<RecordOutcome, LineError> {
    let task = settings.task.resolve(record.task);
    let fail = |kind: &'static str, message: String| LineError {
        line,
        id: Some(record.id.clone()),
        kind,
        message,
    };

    let reference = parse_grounded_text(&record.reference, ParseMode::Strict)
        .map_err(|e| fail("malformed_reference", format!("{}: {e}", markup_kind(&e))))?
        .document;
    let prediction = parse_grounded_text(&record.prediction, settings.mode)
        .map_err(|e| fail("malformed_prediction", format!("{}: {e}", markup_kind(&e))))?;

    let options = EvalOptions {
        iou_threshold: settings.iou_threshold,
        normalizer: settings.normalizer.clone(),
    };
    let ref_pairs = extract_pairs(&reference);
    let region = if task == RecordTask::T2r
        || (task == RecordTask::GroundedReport && !ref_pairs.is_empty())
    {
        let pred_pairs = extract_pairs(&prediction.document);
        match eval_sample(&pred_pairs, &ref_pairs, &options) {
            Ok(m) => Some(m),
            Err(EvalError::EmptyReference) => {
                return Err(fail(
                    "empty_reference",
                    "reference has no regions to score".into(),
                ))
            }
            Err(e) => return Err(fail("evaluation_failed", e.to_string())),
        }
    } else {
        None
    };

    let text = task.scores_text().then(|| {
        let closed = (task == RecordTask::Vqa).then_some(record.closed.unwrap_or(false));
        score_text(
            &text_of(task, &prediction.document),
            &text_of(task, &reference),
            record.language.tokenizer_language(),
            closed,
        )
    });

    Ok(RecordOutcome {
        line,
        id: record.id.clone(),
        task,
        prediction_issues: prediction.issues.len(),
        region,
        text,
    })
}

/// Scores every record; order follows the input regardless of `jobs`.
pub fn evaluate_records(
    records: &[(usize, CorpusRecord)],
    settings: &EvalSettings,
) -> (Vec<RecordOutcome>, Vec<LineError>) {
    let run = || -> Vec<Result<RecordOutcome, LineError>> {
        records
            .par_iter()
            .map(|(line, rec)| evaluate_record(*line, rec, settings))
            .collect()
    };
    let results = if settings.jobs <= 1 {
        records
            .iter()
            .map(|(line, rec)| evaluate_record(*line, rec, settings))
            .collect()
    } else {
        match rayon::ThreadPoolBuilder::new()
            .num_threads(settings.jobs)
            .build()
        {
            Ok(pool) => pool.install(run),
            Err(_) => run(),
        }
    };
    let mut ok = Vec::with_capacity(results.len());
    let mut bad = Vec::new();
    for r in results {
        match r {
            Ok(o) => ok.push(o),
            Err(e) => bad.push(e),
        }
    }
    (ok, bad)
}

/// Unweighted means of text scores, in percent.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct TextMeans {
    pub samples: usize,
    pub bleu1: f64,
    pub bleu4: f64,
    pub rouge_l: f64,
    pub meteor: f64,
    pub token_f1: f64,
    pub token_recall: f64,
    /// Mean over closed questions, if any.
    pub close_accuracy: Option<f64>,
}

impl TextMeans {
    fn from_scores<'a>(scores: impl Iterator<Item = &'a TextScores>) -> Self {
        let mut m = TextMeans::default();
        let (mut closed_sum, mut closed_n) = (0.0, 0usize);
        for s in scores {
            m.samples += 1;
            m.bleu1 += s.bleu1;
            m.bleu4 += s.bleu4;
            m.rouge_l += s.rouge_l;
            m.meteor += s.meteor;
            m.token_f1 += s.token_f1;
            m.token_recall += s.token_recall;
            if let Some(a) = s.close_accuracy {
                closed_sum += a;
                closed_n += 1;
            }
        }
        if m.samples > 0 {
            let k = m.samples as f64;
            for f in [
                &mut m.bleu1,
                &mut m.bleu4,
                &mut m.rouge_l,
                &mut m.meteor,
                &mut m.token_f1,
                &mut m.token_recall,
            ] {
                *f /= k;
            }
        }
        if closed_n > 0 {
            m.close_accuracy = Some(closed_sum / closed_n as f64);
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionSection {
    pub overall: MetricMeans,
    pub by_kind: BTreeMap<&'static str, MetricMeans>,
    pub by_task: BTreeMap<&'static str, MetricMeans>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TextSection {
    pub overall: TextMeans,
    pub by_task: BTreeMap<&'static str, TextMeans>,
}

/// Machine-readable result. Region figures are ratios in [0, 1], text
/// figures are percentages.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub records: usize,
    pub scored: usize,
    pub errors: usize,
    pub iou_threshold: f64,
    pub region: Option<RegionSection>,
    pub text: Option<TextSection>,
}

pub fn build_report(outcomes: &[RecordOutcome], errors: usize, iou_threshold: f64) -> EvalReport {
    let samples: Vec<SampleMetrics> = outcomes.iter().filter_map(|o| o.region.clone()).collect();
    let region = aggregate(&samples).ok().map(|corpus| {
        let mut by_task = BTreeMap::new();
        for task in [RecordTask::T2r, RecordTask::GroundedReport] {
            let subset: Vec<SampleMetrics> = outcomes
                .iter()
                .filter(|o| o.task == task)
                .filter_map(|o| o.region.clone())
                .collect();
            if let Ok(c) = aggregate(&subset) {
                by_task.insert(task.as_str(), c.overall);
            }
        }
        RegionSection {
            overall: corpus.overall,
            by_kind: corpus
                .by_task
                .into_iter()
                .map(|(k, m)| (k.as_str(), m))
                .collect(),
            by_task,
        }
    });

    let texts: Vec<(RecordTask, &TextScores)> = outcomes
        .iter()
        .filter_map(|o| o.text.as_ref().map(|t| (o.task, t)))
        .collect();
    let text = (!texts.is_empty()).then(|| {
        let mut by_task = BTreeMap::new();
        for task in [
            RecordTask::R2t,
            RecordTask::GroundedReport,
            RecordTask::Vqa,
            RecordTask::Report,
        ] {
            let m =
                TextMeans::from_scores(texts.iter().filter(|(t, _)| *t == task).map(|(_, s)| *s));
            if m.samples > 0 {
                by_task.insert(task.as_str(), m);
            }
        }
        TextSection {
            overall: TextMeans::from_scores(texts.iter().map(|(_, s)| *s)),
            by_task,
        }
    });

    EvalReport {
        records: outcomes.len() + errors,
        scored: outcomes.len(),
        errors,
        iou_threshold,
        region,
        text,
    }
}

fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

fn opt(v: Option<f64>, scale: f64) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{:.2}", scale * x))
}

/// Human-readable table: percentages with two decimals, mean IoU as a ratio.
pub fn render_table(report: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "records {}  scored {}  errors {}  iou-threshold {}",
        report.records, report.scored, report.errors, report.iou_threshold
    );
    if let Some(region) = &report.region {
        let _ = writeln!(
            out,
            "\n{:<34} {:>6} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7}",
            "region",
            "n",
            "obj-P",
            "obj-R",
            "obj-F1",
            "reg-P",
            "reg-R",
            "reg-F1",
            "aln-P",
            "aln-R",
            "aln-F1",
            "mIoU",
            "acc"
        );
        let mut rows: Vec<(String, &MetricMeans)> = vec![("overall".into(), &region.overall)];
        rows.extend(region.by_kind.iter().map(|(k, m)| (format!("kind:{k}"), m)));
        rows.extend(region.by_task.iter().map(|(k, m)| (format!("task:{k}"), m)));
        for (name, m) in rows {
            let _ = writeln!(
                out,
                "{:<34} {:>6} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7}",
                name,
                m.samples,
                pct(m.object_precision),
                pct(m.object_recall),
                pct(m.object_f1),
                pct(m.region_precision),
                pct(m.region_recall),
                pct(m.region_f1),
                pct(m.alignment_precision),
                pct(m.alignment_recall),
                pct(m.alignment_f1),
                format!("{:.4}", m.mean_iou),
                opt(m.region_accuracy, 100.0),
            );
        }
    }
    if let Some(text) = &report.text {
        let _ = writeln!(
            out,
            "\n{:<34} {:>6} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7}",
            "text", "n", "BLEU-1", "BLEU-4", "ROUGE-L", "METEOR", "tok-F1", "tok-R", "closed"
        );
        let mut rows: Vec<(String, &TextMeans)> = vec![("overall".into(), &text.overall)];
        rows.extend(text.by_task.iter().map(|(k, m)| (format!("task:{k}"), m)));
        for (name, m) in rows {
            let _ = writeln!(
                out,
                "{:<34} {:>6} {:>7.2} {:>7.2} {:>7.2} {:>7.2} {:>7.2} {:>7.2} {:>7}",
                name,
                m.samples,
                m.bleu1,
                m.bleu4,
                m.rouge_l,
                m.meteor,
                m.token_f1,
                m.token_recall,
                opt(m.close_accuracy, 1.0),
            );
        }
    }
    out
}

pub fn errors_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".errors.jsonl");
    PathBuf::from(name)
}

#[derive(Debug)]
pub struct EvalRun {
    pub report: EvalReport,
    pub errors: Vec<LineError>,
}

/// Reads a corpus, scores it, and writes the report (and error list, when
/// non-empty) next to `output`.
pub fn run_eval(
    input: &Path,
    output: Option<&Path>,
    settings: &EvalSettings,
) -> Result<EvalRun, Error> {
    if let Some(out) = output {
        crate::ensure_distinct(out, &[input])?;
    }
    let (records, mut errors) = read_corpus(input)?;
    let (outcomes, record_errors) = evaluate_records(&records, settings);
    errors.extend(record_errors);
    errors.sort_by_key(|e| e.line);
    let report = build_report(&outcomes, errors.len(), settings.iou_threshold);

    if let Some(out) = output {
        let mut json = serde_json::to_string_pretty(&report)?;
        json.push('\n');
        std::fs::write(out, json).map_err(|e| Error::io(out, e))?;
        let err_path = errors_path(out);
        if errors.is_empty() {
            if err_path.exists() {
                std::fs::remove_file(&err_path).map_err(|e| Error::io(&err_path, e))?;
            }
        } else {
            let mut f = std::fs::File::create(&err_path).map_err(|e| Error::io(&err_path, e))?;
            write_jsonl(&mut f, &errors)?;
        }
    }
    Ok(EvalRun { report, errors })
}
