//! Two-stage, region-first inference: ask the model for regions, then ask
//! the question again with the detected regions in the prompt.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use regalign_core::{
    compose_answer_prompt, compose_detect_prompt, extract_pairs, parse_lenient, render_regions,
    ObjectRegionPair, PromptTemplates,
};
use serde::{Deserialize, Serialize};

use crate::corpus::{read_jsonl, Lang, LineError, RecordTask};
use crate::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ModelRequest {
    pub prompt: String,
    pub image_ref: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct ModelResponse {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    #[error("request timed out")]
    Timeout,
    #[error("endpoint unavailable: {0}")]
    Unavailable(String),
    #[error("bad response: {0}")]
    Protocol(String),
}

pub trait ModelTransport: Sync {
    fn send(&self, request: &ModelRequest) -> Result<ModelResponse, TransportError>;
}

/// JSON over HTTP: POST `{"prompt", "image_ref"}`, expect `{"text"}`.
pub struct HttpTransport {
    agent: ureq::Agent,
    url: String,
}

impl HttpTransport {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self {
            agent,
            url: url.into(),
        }
    }
}

impl ModelTransport for HttpTransport {
    fn send(&self, request: &ModelRequest) -> Result<ModelResponse, TransportError> {
        let map_err = |e: ureq::Error| match e {
            ureq::Error::Timeout(_) => TransportError::Timeout,
            ureq::Error::StatusCode(code) if code < 500 => {
                TransportError::Protocol(format!("http status {code}"))
            }
            ureq::Error::Json(e) => TransportError::Protocol(e.to_string()),
            other => TransportError::Unavailable(other.to_string()),
        };
        let mut resp = self
            .agent
            .post(&self.url)
            .send_json(request)
            .map_err(map_err)?;
        resp.body_mut()
            .read_json::<ModelResponse>()
            .map_err(map_err)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScriptRule {
    prompt_contains: Option<String>,
    image_contains: Option<String>,
    reply: Option<String>,
    /// `"timeout"`, `"unavailable"` or `"protocol"`.
    fail: Option<String>,
    /// Fail only the first N matches, then reply.
    fail_times: Option<usize>,
}

/// Offline transport that answers from a rule list; the first matching rule
/// wins. Used for tests and `--mock` runs.
pub struct ScriptedTransport {
    rules: Vec<ScriptRule>,
    hits: Mutex<Vec<usize>>,
    calls: AtomicUsize,
}

impl ScriptedTransport {
    pub fn parse(source: &Path, text: &str) -> Result<Self, Error> {
        let mut rules = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rule: ScriptRule = serde_json::from_str(line)
                .map_err(|e| Error::data(source, idx + 1, e.to_string()))?;
            if rule.reply.is_none() && rule.fail.is_none() {
                return Err(Error::data(source, idx + 1, "rule needs a reply or a fail"));
            }
            if let Some(kind) = &rule.fail {
                if !matches!(kind.as_str(), "timeout" | "unavailable" | "protocol") {
                    return Err(Error::data(
                        source,
                        idx + 1,
                        format!("unknown fail kind {kind:?}"),
                    ));
                }
            }
            rules.push(rule);
        }
        let hits = Mutex::new(vec![0; rules.len()]);
        Ok(Self {
            rules,
            hits,
            calls: AtomicUsize::new(0),
        })
    }

    pub fn bundled() -> Self {
        Self::parse(
            Path::new("mock_script.jsonl"),
            crate::data::DEFAULT_MOCK_SCRIPT,
        )
        .expect("bundled script is valid")
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(path, &text)
    }

    /// Number of requests answered so far, failures included.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ModelTransport for ScriptedTransport {
    fn send(&self, request: &ModelRequest) -> Result<ModelResponse, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let matches = |r: &ScriptRule| {
            r.prompt_contains
                .as_ref()
                .is_none_or(|p| request.prompt.contains(p.as_str()))
                && r.image_contains
                    .as_ref()
                    .is_none_or(|i| request.image_ref.contains(i.as_str()))
        };
        let Some(idx) = self.rules.iter().position(matches) else {
            return Err(TransportError::Unavailable(
                "no scripted rule matches".into(),
            ));
        };
        let rule = &self.rules[idx];
        let hit = {
            let mut hits = self.hits.lock().unwrap_or_else(|p| p.into_inner());
            hits[idx] += 1;
            hits[idx]
        };
        let failing = rule
            .fail
            .as_deref()
            .filter(|_| rule.fail_times.is_none_or(|n| hit <= n));
        match (failing, &rule.reply) {
            (Some("timeout"), _) => Err(TransportError::Timeout),
            (Some("unavailable"), _) => Err(TransportError::Unavailable("scripted failure".into())),
            (Some(_), _) => Err(TransportError::Protocol("scripted failure".into())),
            (None, Some(reply)) => Ok(ModelResponse {
                text: reply.clone(),
            }),
            (None, None) => Err(TransportError::Protocol(
                "scripted rule has no reply".into(),
            )),
        }
    }
}

pub trait Clock: Sync {
    fn now(&self) -> Duration;
}

pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        Self {
            origin: Instant::now(),
        }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }
}

/// Always reports zero elapsed time, for reproducible traces.
pub struct ZeroClock;

impl Clock for ZeroClock {
    fn now(&self) -> Duration {
        Duration::ZERO
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Detect,
    Answer,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CotError {
    #[error("{stage:?} stage timed out after {attempts} attempt(s)")]
    TransportTimeout { stage: Stage, attempts: u32 },
    #[error("{stage:?} stage failed after {attempts} attempt(s): {message}")]
    TransportUnavailable {
        stage: Stage,
        attempts: u32,
        message: String,
    },
    #[error("{stage:?} stage got a bad response: {message}")]
    ProtocolError { stage: Stage, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CotTrace {
    pub detect_prompt: String,
    pub detect_response: Option<String>,
    pub parsed_regions: Vec<ObjectRegionPair>,
    /// No regions were found, so the answer stage saw the bare question.
    pub fallback: bool,
    pub final_prompt: Option<String>,
    pub final_response: Option<String>,
    /// Transport calls made, retries included.
    pub attempts: u32,
    pub timing_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CotFailure {
    pub error: CotError,
    pub trace: CotTrace,
}

fn call_with_retries(
    transport: &dyn ModelTransport,
    request: &ModelRequest,
    stage: Stage,
    retries: u32,
    attempts: &mut u32,
) -> Result<String, CotError> {
    let mut stage_attempts = 0;
    loop {
        stage_attempts += 1;
        *attempts += 1;
        match transport.send(request) {
            Ok(r) => return Ok(r.text),
            Err(TransportError::Protocol(message)) => {
                return Err(CotError::ProtocolError { stage, message })
            }
            Err(e) if stage_attempts > retries => {
                return Err(match e {
                    TransportError::Timeout => CotError::TransportTimeout {
                        stage,
                        attempts: stage_attempts,
                    },
                    other => CotError::TransportUnavailable {
                        stage,
                        attempts: stage_attempts,
                        message: other.to_string(),
                    },
                });
            }
            Err(e) => log::debug!("{stage:?} attempt {stage_attempts} failed: {e}"),
        }
    }
}

/// Runs both stages for one question. Each stage is tried at most
/// `1 + retries` times.
pub fn run_regional_cot(
    question: &str,
    image_ref: &str,
    transport: &dyn ModelTransport,
    templates: &PromptTemplates,
    retries: u32,
    clock: &dyn Clock,
) -> Result<CotTrace, Box<CotFailure>> {
    let start = clock.now();
    let mut trace = CotTrace {
        detect_prompt: compose_detect_prompt(question, templates),
        ..CotTrace::default()
    };
    let finish = |mut trace: CotTrace, error: Option<CotError>| {
        trace.timing_ms = clock.now().saturating_sub(start).as_millis() as u64;
        match error {
            Some(error) => Err(Box::new(CotFailure { error, trace })),
            None => Ok(trace),
        }
    };

    let detect = ModelRequest {
        prompt: trace.detect_prompt.clone(),
        image_ref: image_ref.to_string(),
    };
    let detected = match call_with_retries(
        transport,
        &detect,
        Stage::Detect,
        retries,
        &mut trace.attempts,
    ) {
        Ok(text) => text,
        Err(e) => return finish(trace, Some(e)),
    };
    trace.parsed_regions = extract_pairs(&parse_lenient(&detected).document);
    trace.detect_response = Some(detected);
    trace.fallback = trace.parsed_regions.is_empty();

    let final_prompt = compose_answer_prompt(question, &trace.parsed_regions, templates);
    trace.final_prompt = Some(final_prompt.clone());
    let answer = ModelRequest {
        prompt: final_prompt,
        image_ref: image_ref.to_string(),
    };
    match call_with_retries(
        transport,
        &answer,
        Stage::Answer,
        retries,
        &mut trace.attempts,
    ) {
        Ok(text) => {
            trace.final_response = Some(text);
            finish(trace, None)
        }
        Err(e) => finish(trace, Some(e)),
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct QuestionRow {
    pub id: String,
    pub question: String,
    #[serde(default)]
    pub image: String,
    pub reference: Option<String>,
    pub task: Option<RecordTask>,
    pub language: Option<Lang>,
    pub closed: Option<bool>,
}

/// One line of trace output; readable back as a corpus record, with the
/// final response as the prediction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceRecord {
    pub id: String,
    pub task: RecordTask,
    pub language: Lang,
    pub image: String,
    pub question: String,
    pub prediction: String,
    pub reference: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub closed: Option<bool>,
    pub status: &'static str,
    pub fallback: bool,
    pub error: Option<String>,
    pub detect_prompt: String,
    pub detect_response: Option<String>,
    pub parsed_regions: String,
    pub final_prompt: Option<String>,
    pub final_response: Option<String>,
    pub attempts: u32,
    pub timing_ms: u64,
}

pub struct CotSettings<'a> {
    pub transport: &'a dyn ModelTransport,
    pub clock: &'a dyn Clock,
    pub retries: u32,
    /// Used for rows without a `language`.
    pub lang: Lang,
}

#[derive(Debug, Default)]
pub struct CotRun {
    pub traces: Vec<TraceRecord>,
    /// Unreadable question lines.
    pub errors: Vec<LineError>,
}

impl CotRun {
    pub fn failed(&self) -> usize {
        self.traces.iter().filter(|t| t.status != "ok").count()
    }
}

pub fn trace_question(row: &QuestionRow, settings: &CotSettings<'_>) -> TraceRecord {
    let lang = row.language.unwrap_or(settings.lang);
    let templates = PromptTemplates::for_language(lang.tokenizer_language());
    let (trace, error) = match run_regional_cot(
        &row.question,
        &row.image,
        settings.transport,
        &templates,
        settings.retries,
        settings.clock,
    ) {
        Ok(t) => (t, None),
        Err(f) => (f.trace, Some(f.error)),
    };
    TraceRecord {
        id: row.id.clone(),
        task: row.task.unwrap_or(RecordTask::Vqa),
        language: lang,
        image: row.image.clone(),
        question: row.question.clone(),
        prediction: trace.final_response.clone().unwrap_or_default(),
        reference: row.reference.clone().unwrap_or_default(),
        closed: row.closed,
        status: if error.is_none() { "ok" } else { "failed" },
        fallback: trace.fallback,
        error: error.map(|e| e.to_string()),
        parsed_regions: render_regions(&trace.parsed_regions),
        detect_prompt: trace.detect_prompt,
        detect_response: trace.detect_response,
        final_prompt: trace.final_prompt,
        final_response: trace.final_response,
        attempts: trace.attempts,
        timing_ms: trace.timing_ms,
    }
}

pub fn run_cot(questions: &Path, settings: &CotSettings<'_>) -> Result<CotRun, Error> {
    let (rows, errors) = read_jsonl::<QuestionRow>(questions)?;
    let traces = rows
        .iter()
        .map(|(_, row)| trace_question(row, settings))
        .collect();
    Ok(CotRun { traces, errors })
}
