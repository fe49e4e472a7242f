//! One-record-per-line JSON corpora.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use regalign_core::Language;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordTask {
    R2t,
    T2r,
    GroundedReport,
    Vqa,
    Report,
}

impl RecordTask {
    pub fn as_str(self) -> &'static str {
        match self {
            RecordTask::R2t => "r2t",
            RecordTask::T2r => "t2r",
            RecordTask::GroundedReport => "grounded_report",
            RecordTask::Vqa => "vqa",
            RecordTask::Report => "report",
        }
    }

    pub fn scores_regions(self) -> bool {
        matches!(self, RecordTask::T2r | RecordTask::GroundedReport)
    }

    pub fn scores_text(self) -> bool {
        !matches!(self, RecordTask::T2r)
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Default, Hash, Serialize, Deserialize, clap::ValueEnum,
)]
#[serde(rename_all = "lowercase")]
pub enum Lang {
    #[default]
    En,
    Zh,
}

impl Lang {
    pub fn tokenizer_language(self) -> Language {
        match self {
            Lang::En => Language::English,
            Lang::Zh => Language::Chinese,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    pub task: RecordTask,
    #[serde(default)]
    pub language: Lang,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<String>,
    #[serde(default)]
    pub prediction: String,
    pub reference: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closed: Option<bool>,
}

/// A line that could not be turned into a record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LineError {
    pub line: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub kind: &'static str,
    pub message: String,
}

/// Parsed values with their 1-based line numbers, plus the lines that failed.
pub type Lines<T> = (Vec<(usize, T)>, Vec<LineError>);

/// Reads every non-blank line as JSON. Bad lines are returned separately with
/// their 1-based line number; blank lines are skipped.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Lines<T>, Error> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut ok = Vec::new();
    let mut bad = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<T>(&line) {
            Ok(v) => ok.push((idx + 1, v)),
            Err(e) => bad.push(LineError {
                line: idx + 1,
                id: None,
                kind: "unreadable_record",
                message: e.to_string(),
            }),
        }
    }
    Ok((ok, bad))
}

/// Reads a corpus and rejects records whose id repeats an earlier one.
pub fn read_corpus(path: &Path) -> Result<Lines<CorpusRecord>, Error> {
    let (records, mut errors) = read_jsonl::<CorpusRecord>(path)?;
    let mut seen = HashSet::new();
    let mut unique = Vec::with_capacity(records.len());
    for (line, rec) in records {
        if seen.insert(rec.id.clone()) {
            unique.push((line, rec));
        } else {
            errors.push(LineError {
                line,
                id: Some(rec.id),
                kind: "duplicate_id",
                message: "id already used earlier in the corpus".into(),
            });
        }
    }
    errors.sort_by_key(|e| e.line);
    Ok((unique, errors))
}

pub fn write_jsonl<T: Serialize>(out: &mut dyn Write, items: &[T]) -> Result<(), Error> {
    let mut w = BufWriter::new(out);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(Error::Json)?;
        w.write_all(b"\n").map_err(Error::Write)?;
    }
    w.flush().map_err(Error::Write)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_round_trips_through_json() {
        let line = r#"{"id":"a","task":"grounded_report","language":"zh","prediction":"p","reference":"r"}"#;
        let rec: CorpusRecord = serde_json::from_str(line).unwrap();
        assert_eq!(rec.task, RecordTask::GroundedReport);
        assert_eq!(rec.language, Lang::Zh);
        assert_eq!(serde_json::to_string(&rec).unwrap(), line);
    }

    #[test]
    fn defaults_and_extra_fields() {
        let rec: CorpusRecord = serde_json::from_str(
            r#"{"id":"a","task":"vqa","reference":"yes","closed":true,"extra":1}"#,
        )
        .unwrap();
        assert_eq!(rec.language, Lang::En);
        assert_eq!(rec.prediction, "");
        assert_eq!(rec.closed, Some(true));
        assert!(
            serde_json::from_str::<CorpusRecord>(r#"{"id":"a","task":"nope","reference":""}"#)
                .is_err()
        );
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        std::fs::write(
            &path,
            "{\"id\":\"a\",\"task\":\"vqa\",\"reference\":\"x\"}\n\nnot json\n{\"id\":\"a\",\"task\":\"vqa\",\"reference\":\"y\"}\n",
        )
        .unwrap();
        let (ok, bad) = read_corpus(&path).unwrap();
        assert_eq!(ok.len(), 1);
        assert_eq!(bad.len(), 2);
        assert_eq!((bad[0].line, bad[0].kind), (3, "unreadable_record"));
        assert_eq!((bad[1].line, bad[1].kind), (4, "duplicate_id"));
    }
}
