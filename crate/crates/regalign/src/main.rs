use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use regalign::config::{CommonArgs, RunConfig};
use regalign::corpus::{write_jsonl, LineError};
use regalign::cot::{
    run_cot, Clock, CotSettings, HttpTransport, ModelTransport, ScriptedTransport, SystemClock,
    ZeroClock,
};
use regalign::data::{bundled_lexicon, load_lexicon, load_synonyms, TemplateLibrary};
use regalign::ensure_distinct;
use regalign::eval::{errors_path, render_table, run_eval, EvalSettings};
use regalign::forge::{run_forge, ForgeSettings};
use regalign::segmenter::{FallbackSegmenter, HttpSegmenter, RuleSegmenter, SegmenterClient};
use regalign_core::{extract_pairs, parse_grounded_text, ParseMode, TextNormalizer};
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "regalign",
    version,
    about = "Region-aligned evaluation, dataset forging and region-first inference"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Subcommand)]
enum Command {
    /// Score a prediction corpus against its references.
    Eval {
        #[arg(long)]
        input: PathBuf,
        /// Machine-readable JSON report; errors go to `<output>.errors.jsonl`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Parse grounded markup, one document per input line.
    Parse {
        /// Defaults to standard input.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Build r2t/t2r and grounded-report records from a manifest.
    Forge {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Run two-stage region-first inference over a question file.
    Cot {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
}

fn report_line_errors(errors: &[LineError]) {
    for e in errors {
        match &e.id {
            Some(id) => eprintln!("line {} ({id}): {}: {}", e.line, e.kind, e.message),
            None => eprintln!("line {}: {}: {}", e.line, e.kind, e.message),
        }
    }
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(io::stdout().lock()),
    })
}

fn cmd_eval(cfg: &RunConfig, input: &Path, output: Option<&Path>) -> Result<bool> {
    let normalizer = match &cfg.synonyms {
        Some(p) => load_synonyms(p)?,
        None => TextNormalizer::new(),
    };
    let settings = EvalSettings {
        iou_threshold: cfg.iou_threshold,
        mode: cfg.mode.into(),
        task: cfg.task,
        jobs: cfg.jobs,
        normalizer,
    };
    let run = run_eval(input, output, &settings)?;
    print!("{}", render_table(&run.report));
    report_line_errors(&run.errors);
    if let (Some(out), false) = (output, run.errors.is_empty()) {
        eprintln!(
            "{} error(s) written to {}",
            run.errors.len(),
            errors_path(out).display()
        );
    }
    Ok(run.errors.is_empty())
}

#[derive(Serialize)]
struct ParsedLine {
    line: usize,
    pairs: Vec<regalign_core::ObjectRegionPair>,
    issues: Vec<String>,
}

fn cmd_parse(cfg: &RunConfig, input: Option<&Path>, output: Option<&Path>) -> Result<bool> {
    let reader: Box<dyn BufRead> = match input {
        Some(p) => {
            if let Some(out) = output {
                ensure_distinct(out, &[p])?;
            }
            Box::new(BufReader::new(
                File::open(p).with_context(|| format!("opening {}", p.display()))?,
            ))
        }
        None => Box::new(io::stdin().lock()),
    };
    let mode: ParseMode = cfg.mode.into();
    let mut out = open_output(output)?;
    let mut ok = true;
    for (idx, line) in reader.lines().enumerate() {
        let line = line.context("reading input")?;
        match parse_grounded_text(&line, mode) {
            Ok(parsed) => {
                let rec = ParsedLine {
                    line: idx + 1,
                    pairs: extract_pairs(&parsed.document),
                    issues: parsed.issues.iter().map(ToString::to_string).collect(),
                };
                serde_json::to_writer(&mut out, &rec)?;
                out.write_all(b"\n")?;
            }
            Err(e) => {
                eprintln!("line {}: {e}", idx + 1);
                ok = false;
            }
        }
    }
    out.flush()?;
    Ok(ok)
}

fn cmd_forge(cfg: &RunConfig, input: &Path, output: &Path) -> Result<bool> {
    ensure_distinct(output, &[input])?;
    let templates = match &cfg.templates {
        Some(dir) => TemplateLibrary::load_dir(dir)?,
        None => TemplateLibrary::bundled(),
    };
    let lexicon = match &cfg.lexicon {
        Some(p) => load_lexicon(p)?,
        None => bundled_lexicon(),
    };
    let rules = RuleSegmenter::new(lexicon);
    let remote;
    let segmenter: &dyn SegmenterClient = match &cfg.endpoint {
        Some(url) if !cfg.mock => {
            remote = FallbackSegmenter::new(
                HttpSegmenter::new(
                    url.clone(),
                    Duration::from_millis(cfg.timeout_ms),
                    cfg.retries,
                ),
                rules,
            );
            &remote
        }
        _ => &rules,
    };
    let run = run_forge(input, &ForgeSettings::new(&templates, segmenter, cfg.seed))?;
    let mut out = File::create(output).with_context(|| format!("creating {}", output.display()))?;
    write_jsonl(&mut out, &run.records)?;
    report_line_errors(&run.errors);
    let counts: Vec<String> = run.counts.iter().map(|(k, v)| format!("{k}={v}")).collect();
    eprintln!(
        "forged {} record(s) [{}], {} row error(s)",
        run.records.len(),
        counts.join(" "),
        run.errors.len()
    );
    Ok(run.errors.is_empty())
}

fn cmd_cot(cfg: &RunConfig, input: &Path, output: &Path) -> Result<bool> {
    ensure_distinct(output, &[input])?;
    let transport: Box<dyn ModelTransport> = if cfg.mock {
        Box::new(match &cfg.mock_script {
            Some(p) => ScriptedTransport::load(p)?,
            None => ScriptedTransport::bundled(),
        })
    } else {
        let url = cfg
            .endpoint
            .clone()
            .context("cot needs --endpoint, or --mock true for the scripted transport")?;
        Box::new(HttpTransport::new(
            url,
            Duration::from_millis(cfg.timeout_ms),
        ))
    };
    let clock: Box<dyn Clock> = if cfg.mock {
        Box::new(ZeroClock)
    } else {
        Box::new(SystemClock::default())
    };
    let settings = CotSettings {
        transport: transport.as_ref(),
        clock: clock.as_ref(),
        retries: cfg.retries,
        lang: cfg.lang,
    };
    let run = run_cot(input, &settings)?;
    let mut out = File::create(output).with_context(|| format!("creating {}", output.display()))?;
    write_jsonl(&mut out, &run.traces)?;
    report_line_errors(&run.errors);
    for t in run.traces.iter().filter(|t| t.status != "ok") {
        eprintln!("{}: {}", t.id, t.error.as_deref().unwrap_or("failed"));
    }
    let fallbacks = run.traces.iter().filter(|t| t.fallback).count();
    eprintln!(
        "{} question(s), {} failed, {} fell back to the plain question",
        run.traces.len(),
        run.failed(),
        fallbacks
    );
    Ok(run.errors.is_empty() && run.failed() == 0)
}

fn run(cli: Cli) -> Result<bool> {
    let cfg = RunConfig::resolve(&cli.common)?;
    match &cli.command {
        Command::Eval { input, output } => cmd_eval(&cfg, input, output.as_deref()),
        Command::Parse { input, output } => cmd_parse(&cfg, input.as_deref(), output.as_deref()),
        Command::Forge { input, output } => cmd_forge(&cfg, input, output),
        Command::Cot { input, output } => cmd_cot(&cfg, input, output),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
