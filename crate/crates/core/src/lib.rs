//! Region-centric building blocks for grounded medical reports.
//!
//! This crate is `no_std` (it needs `alloc`). It holds the pure parts of the
//! toolkit: box geometry and mask-to-box extraction, the `<ref>`/`<box>`
//! markup grammar, optimal IoU assignment, region-aligned metrics, classical
//! text metrics, sample forging, and prompt composition for two-stage
//! region-first inference. File formats, the CLI and model transports live
//! in the `regalign` crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod assignment;
pub mod forge;
pub mod geometry;
pub mod markup;
pub mod prompt;
pub mod region_eval;
pub mod text_metrics;

pub use assignment::{hungarian_match, Assignment, Match, ScoreMatrix};
pub use forge::{
    assemble_grounded_report, fill_template, forge_region_samples, segment_report, Direction,
    ForgeError, ForgedSample, OrganDescriptions, OrganLexicon, RegionSource, Template, OTHER_KEY,
};
pub use geometry::{
    iou, mask_to_boxes, normalize_box, BBox, GeometryError, MaskGrid, PixelBox, DEFAULT_MIN_AREA,
};
pub use markup::{
    extract_pairs, parse_grounded_text, parse_lenient, parse_strict, serialize_grounded_text,
    Annotation, GroundedDocument, MarkupError, ObjectRegionPair, ParseMode, ParseOutput, Segment,
};
pub use prompt::{compose_answer_prompt, compose_detect_prompt, render_regions, PromptTemplates};
pub use region_eval::{
    aggregate, classify_task, eval_sample, CorpusMetrics, EvalError, EvalOptions, MetricMeans,
    SampleMetrics, TaskKind, TextNormalizer, DEFAULT_IOU_THRESHOLD,
};
pub use text_metrics::{score_text, tokenize, Language, TextScores, TokenSequence};
