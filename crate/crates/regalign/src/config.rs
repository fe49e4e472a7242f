//! Run settings. Precedence: command-line flag, then `REGALIGN_*`
//! environment variable, then the `--config` TOML file, then defaults.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use regalign_core::{ParseMode, DEFAULT_IOU_THRESHOLD};
use serde::Deserialize;

use crate::corpus::{Lang, RecordTask};
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Strict,
    #[default]
    Lenient,
}

impl From<ModeArg> for ParseMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Strict => ParseMode::Strict,
            ModeArg::Lenient => ParseMode::Lenient,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum TaskArg {
    /// Use each record's own `task` field.
    #[default]
    Auto,
    R2t,
    T2r,
    GroundedReport,
    Vqa,
    Report,
}

impl TaskArg {
    pub fn resolve(self, record: RecordTask) -> RecordTask {
        match self {
            TaskArg::Auto => record,
            TaskArg::R2t => RecordTask::R2t,
            TaskArg::T2r => RecordTask::T2r,
            TaskArg::GroundedReport => RecordTask::GroundedReport,
            TaskArg::Vqa => RecordTask::Vqa,
            TaskArg::Report => RecordTask::Report,
        }
    }
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct CommonArgs {
    /// Flat TOML file whose keys match the long flag names.
    #[arg(long, env = "REGALIGN_CONFIG", global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, env = "REGALIGN_IOU_THRESHOLD", global = true)]
    pub iou_threshold: Option<f64>,
    #[arg(long, env = "REGALIGN_MODE", value_enum, global = true)]
    pub mode: Option<ModeArg>,
    #[arg(long, env = "REGALIGN_LANG", value_enum, global = true)]
    pub lang: Option<Lang>,
    #[arg(long, env = "REGALIGN_JOBS", global = true)]
    pub jobs: Option<usize>,
    #[arg(long, env = "REGALIGN_SEED", global = true)]
    pub seed: Option<u64>,
    /// Tab-separated `variant<TAB>canonical` object-name synonyms.
    #[arg(long, env = "REGALIGN_SYNONYMS", global = true)]
    pub synonyms: Option<PathBuf>,
    /// Directory of template `.jsonl` files.
    #[arg(long, env = "REGALIGN_TEMPLATES", global = true)]
    pub templates: Option<PathBuf>,
    /// Tab-separated organ lexicon.
    #[arg(long, env = "REGALIGN_LEXICON", global = true)]
    pub lexicon: Option<PathBuf>,
    /// Model endpoint (cot) or segmenter endpoint (forge).
    #[arg(long, env = "REGALIGN_ENDPOINT", global = true)]
    pub endpoint: Option<String>,
    /// Answer from a scripted transport instead of a network endpoint.
    #[arg(long, env = "REGALIGN_MOCK", global = true)]
    pub mock: Option<bool>,
    /// Mock script to use instead of the bundled one.
    #[arg(long, env = "REGALIGN_MOCK_SCRIPT", global = true)]
    pub mock_script: Option<PathBuf>,
    #[arg(long, env = "REGALIGN_TIMEOUT_MS", global = true)]
    pub timeout_ms: Option<u64>,
    #[arg(long, env = "REGALIGN_RETRIES", global = true)]
    pub retries: Option<u32>,
    #[arg(long, env = "REGALIGN_TASK", value_enum, global = true)]
    pub task: Option<TaskArg>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct FileConfig {
    iou_threshold: Option<f64>,
    mode: Option<ModeArg>,
    lang: Option<Lang>,
    jobs: Option<usize>,
    seed: Option<u64>,
    synonyms: Option<PathBuf>,
    templates: Option<PathBuf>,
    lexicon: Option<PathBuf>,
    endpoint: Option<String>,
    mock: Option<bool>,
    mock_script: Option<PathBuf>,
    timeout_ms: Option<u64>,
    retries: Option<u32>,
    task: Option<TaskArg>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub iou_threshold: f64,
    pub mode: ModeArg,
    pub lang: Lang,
    pub jobs: usize,
    pub seed: u64,
    pub synonyms: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub mock: bool,
    pub mock_script: Option<PathBuf>,
    pub timeout_ms: u64,
    pub retries: u32,
    pub task: TaskArg,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            mode: ModeArg::Lenient,
            lang: Lang::En,
            jobs: std::thread::available_parallelism().map_or(1, |n| n.get()),
            seed: 0,
            synonyms: None,
            templates: None,
            lexicon: None,
            endpoint: None,
            mock: false,
            mock_script: None,
            timeout_ms: 30_000,
            retries: 2,
            task: TaskArg::Auto,
        }
    }
}

fn load_file(path: &Path) -> Result<FileConfig, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut cfg: FileConfig =
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    // Relative paths in a config file are relative to the file.
    let base = path.parent().unwrap_or(Path::new(""));
    for p in [
        &mut cfg.synonyms,
        &mut cfg.templates,
        &mut cfg.lexicon,
        &mut cfg.mock_script,
    ]
    .into_iter()
    .flatten()
    {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
    Ok(cfg)
}

impl RunConfig {
    pub fn resolve(args: &CommonArgs) -> Result<Self, Error> {
        let file = match &args.config {
            Some(path) => load_file(path)?,
            None => FileConfig::default(),
        };
        let d = RunConfig::default();
        let cfg = RunConfig {
            iou_threshold: args
                .iou_threshold
                .or(file.iou_threshold)
                .unwrap_or(d.iou_threshold),
            mode: args.mode.or(file.mode).unwrap_or(d.mode),
            lang: args.lang.or(file.lang).unwrap_or(d.lang),
            jobs: args.jobs.or(file.jobs).unwrap_or(d.jobs),
            seed: args.seed.or(file.seed).unwrap_or(d.seed),
            synonyms: args.synonyms.clone().or(file.synonyms),
            templates: args.templates.clone().or(file.templates),
            lexicon: args.lexicon.clone().or(file.lexicon),
            endpoint: args.endpoint.clone().or(file.endpoint),
            mock: args.mock.or(file.mock).unwrap_or(d.mock),
            mock_script: args.mock_script.clone().or(file.mock_script),
            timeout_ms: args.timeout_ms.or(file.timeout_ms).unwrap_or(d.timeout_ms),
            retries: args.retries.or(file.retries).unwrap_or(d.retries),
            task: args.task.or(file.task).unwrap_or(d.task),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "iou-threshold must be in (0, 1], got {}",
                self.iou_threshold
            )));
        }
        if self.jobs == 0 {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        if self.timeout_ms == 0 {
            return Err(Error::Config("timeout-ms must be positive".into()));
        }
        Ok(())
    }
}
