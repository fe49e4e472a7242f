//! Builds training/evaluation records from a manifest of masks and reports.
//!
//! Manifest rows (JSON lines), told apart by their fields:
//! * mask row: `{"id", "image", "label", "mask", "language"?}`; `mask` is a
//!   path relative to the manifest.
//! * report row: `{"id", "image", "report", "regions": {organ: [[x1, y1, x2, y2], ...]},
//!   "language"?}` with normalized coordinates.

use std::collections::BTreeMap;
use std::path::Path;

use regalign_core::{
    assemble_grounded_report, forge_region_samples, serialize_grounded_text, BBox, Direction,
    RegionSource, DEFAULT_MIN_AREA,
};
use serde::{Deserialize, Serialize};

use crate::corpus::{read_jsonl, CorpusRecord, Lang, LineError, RecordTask};
use crate::data::TemplateLibrary;
use crate::masks::load_mask;
use crate::segmenter::SegmenterClient;
use crate::Error;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestRow {
    id: String,
    #[serde(default)]
    image: String,
    #[serde(default)]
    language: Lang,
    label: Option<String>,
    mask: Option<String>,
    report: Option<String>,
    regions: Option<BTreeMap<String, Vec<[u32; 4]>>>,
}

/// A corpus record plus where it came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ForgedRecord {
    #[serde(flatten)]
    pub record: CorpusRecord,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub template_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

pub struct ForgeSettings<'a> {
    pub templates: &'a TemplateLibrary,
    pub segmenter: &'a dyn SegmenterClient,
    pub seed: u64,
    pub min_area: usize,
}

impl<'a> ForgeSettings<'a> {
    pub fn new(
        templates: &'a TemplateLibrary,
        segmenter: &'a dyn SegmenterClient,
        seed: u64,
    ) -> Self {
        Self {
            templates,
            segmenter,
            seed,
            min_area: DEFAULT_MIN_AREA,
        }
    }
}

#[derive(Debug, Default)]
pub struct ForgeRun {
    pub records: Vec<ForgedRecord>,
    pub errors: Vec<LineError>,
    /// Output records per task name.
    pub counts: BTreeMap<&'static str, usize>,
}

/// Per-row seed, so a row's samples do not depend on the rows before it.
pub fn row_seed(seed: u64, row: usize) -> u64 {
    seed ^ (row as u64)
        .wrapping_add(1)
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn report_question(lang: Lang) -> &'static str {
    match lang {
        Lang::En => "Write a report for this image and ground each finding to its region.",
        Lang::Zh => "请为这张图像撰写报告，并为每条所见标注对应区域。",
    }
}

fn forge_mask_row(
    base: &Path,
    row: &ManifestRow,
    index: usize,
    label: &str,
    mask: &str,
    settings: &ForgeSettings<'_>,
) -> Result<Vec<ForgedRecord>, String> {
    let grid = load_mask(&base.join(mask)).map_err(|e| e.to_string())?;
    let templates = settings.templates.for_language(row.language);
    let source = RegionSource {
        id: &row.id,
        image_ref: &row.image,
        label,
        mask: &grid,
    };
    let samples = forge_region_samples(
        &source,
        &templates,
        row_seed(settings.seed, index),
        settings.min_area,
    )
    .map_err(|e| e.to_string())?;
    Ok(samples
        .into_iter()
        .map(|s| ForgedRecord {
            record: CorpusRecord {
                id: s.id,
                task: match s.direction {
                    Direction::RegionToText => RecordTask::R2t,
                    Direction::TextToRegion => RecordTask::T2r,
                },
                language: row.language,
                image: Some(s.image_ref),
                question: Some(s.question),
                prediction: String::new(),
                reference: s.answer,
                closed: None,
            },
            template_id: Some(s.template_id),
            label: Some(s.label),
        })
        .collect())
}

fn forge_report_row(
    row: &ManifestRow,
    report: &str,
    regions: &BTreeMap<String, Vec<[u32; 4]>>,
    settings: &ForgeSettings<'_>,
) -> Result<ForgedRecord, String> {
    let mut boxes: BTreeMap<String, Vec<BBox>> = BTreeMap::new();
    for (organ, list) in regions {
        let parsed = list
            .iter()
            .map(|&c| BBox::try_from(c))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| format!("region of {organ:?}: {e}"))?;
        boxes.insert(organ.clone(), parsed);
    }
    let organs: Vec<String> = boxes.keys().cloned().collect();
    let descriptions = settings
        .segmenter
        .segment(report, &organs)
        .map_err(|e| e.to_string())?;
    if descriptions.is_empty() {
        return Err("report has no sentences".into());
    }
    let assembled = assemble_grounded_report(&descriptions, &boxes, None);
    if !assembled.unmatched_regions.is_empty() {
        log::warn!(
            "{}: no description for region(s) {}",
            row.id,
            assembled.unmatched_regions.join(", ")
        );
    }
    Ok(ForgedRecord {
        record: CorpusRecord {
            id: format!("{}/report", row.id),
            task: RecordTask::GroundedReport,
            language: row.language,
            image: Some(row.image.clone()),
            question: Some(report_question(row.language).to_string()),
            prediction: String::new(),
            reference: serialize_grounded_text(&assembled.document),
            closed: None,
        },
        template_id: None,
        label: None,
    })
}

/// Forges every manifest row. Rows that fail are reported and skipped.
pub fn run_forge(manifest: &Path, settings: &ForgeSettings<'_>) -> Result<ForgeRun, Error> {
    let base = manifest.parent().unwrap_or(Path::new(""));
    let (rows, mut errors) = read_jsonl::<ManifestRow>(manifest)?;
    let mut run = ForgeRun::default();
    for (index, (line, row)) in rows.iter().enumerate() {
        let result = match (&row.label, &row.mask, &row.report, &row.regions) {
            (Some(label), Some(mask), None, None) => {
                forge_mask_row(base, row, index, label, mask, settings)
            }
            (None, None, Some(report), Some(regions)) => {
                forge_report_row(row, report, regions, settings).map(|r| vec![r])
            }
            _ => Err("row needs either label+mask or report+regions".into()),
        };
        match result {
            Ok(records) => {
                for r in &records {
                    *run.counts.entry(r.record.task.as_str()).or_default() += 1;
                }
                run.records.extend(records);
            }
            Err(message) => errors.push(LineError {
                line: *line,
                id: Some(row.id.clone()),
                kind: "forge_failed",
                message,
            }),
        }
    }
    errors.sort_by_key(|e| e.line);
    run.errors = errors;
    Ok(run)
}
