//! Prompt composition for two-stage, region-first inference: ask the model
//! for regions, then ask the real question with those regions spelled out.

use alloc::string::String;
use alloc::vec::Vec;

use crate::markup::ObjectRegionPair;
use crate::text_metrics::Language;

/// Prompt wording. `{question}` and `{regions}` are substituted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    /// Detection instruction used when there is a question.
    pub detect: String,
    /// Detection instruction used for an empty question.
    pub detect_bare: String,
    /// Second-stage prompt; `{regions}` receives the canonical pairs.
    pub answer: String,
}

impl PromptTemplates {
    pub fn english() -> Self {
        Self {
            detect: String::from(
                "Identify the critical and abnormal regions in this image. \
                 Output each region as <ref>name</ref><box>[x1, y1, x2, y2]</box> \
                 with coordinates normalized to integers in [0, 1000). Output nothing else.\n\
                 Question: {question}",
            ),
            detect_bare: String::from(
                "Identify the critical and abnormal regions in this image. \
                 Output each region as <ref>name</ref><box>[x1, y1, x2, y2]</box> \
                 with coordinates normalized to integers in [0, 1000). Output nothing else.",
            ),
            answer: String::from("Detected regions: {regions}\n{question}"),
        }
    }

    pub fn chinese() -> Self {
        Self {
            detect: String::from(
                "请识别图像中的关键区域和异常区域，每个区域按 <ref>名称</ref><box>[x1, y1, x2, y2]</box> \
                 的格式输出，坐标归一化为 [0, 1000) 内的整数。不要输出其他内容。\n问题：{question}",
            ),
            detect_bare: String::from(
                "请识别图像中的关键区域和异常区域，每个区域按 <ref>名称</ref><box>[x1, y1, x2, y2]</box> \
                 的格式输出，坐标归一化为 [0, 1000) 内的整数。不要输出其他内容。",
            ),
            answer: String::from("检测到的区域：{regions}\n{question}"),
        }
    }

    pub fn for_language(language: Language) -> Self {
        match language {
            Language::Chinese => Self::chinese(),
            Language::English | Language::Mixed => Self::english(),
        }
    }
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self::english()
    }
}

pub fn compose_detect_prompt(question: &str, templates: &PromptTemplates) -> String {
    if question.trim().is_empty() {
        templates.detect_bare.clone()
    } else {
        templates.detect.replace("{question}", question)
    }
}

/// Canonical markup for each pair, space separated.
pub fn render_regions(pairs: &[ObjectRegionPair]) -> String {
    pairs
        .iter()
        .map(ObjectRegionPair::to_markup)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Second-stage prompt; with no regions this is the bare question.
pub fn compose_answer_prompt(
    question: &str,
    pairs: &[ObjectRegionPair],
    templates: &PromptTemplates,
) -> String {
    if pairs.is_empty() {
        return String::from(question);
    }
    templates
        .answer
        .replace("{regions}", &render_regions(pairs))
        .replace("{question}", question)
}
