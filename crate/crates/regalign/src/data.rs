//! Template, lexicon and synonym files, plus the bundled defaults.
//!
//! * templates: JSON lines with `id`, `direction` (`r2t` / `t2r`),
//!   `question_pattern`, `answer_pattern` and an optional `language`.
//! * lexicon: tab-separated `organ<TAB>form<TAB>form...`, `#` comments.
//! * synonyms: tab-separated `variant<TAB>canonical`, `#` comments.

use std::path::{Path, PathBuf};

use regalign_core::{Direction, OrganLexicon, Template, TextNormalizer};
use serde::Deserialize;

use crate::corpus::Lang;
use crate::Error;

const DEFAULT_TEMPLATES: &[(&str, &str)] = &[
    (
        "templates/en.jsonl",
        include_str!("../data/templates/en.jsonl"),
    ),
    (
        "templates/zh.jsonl",
        include_str!("../data/templates/zh.jsonl"),
    ),
];
const DEFAULT_LEXICON: &str = include_str!("../data/chest_lexicon.tsv");
pub const DEFAULT_MOCK_SCRIPT: &str = include_str!("../data/mock_script.jsonl");

#[derive(Debug, Deserialize)]
struct TemplateLine {
    id: String,
    direction: String,
    question_pattern: String,
    answer_pattern: String,
    #[serde(default)]
    language: Lang,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalizedTemplate {
    pub language: Lang,
    pub template: Template,
}

#[derive(Debug, Clone, Default)]
pub struct TemplateLibrary {
    templates: Vec<LocalizedTemplate>,
}

fn parse_direction(s: &str) -> Option<Direction> {
    match s {
        "r2t" | "region_to_text" | "region-to-text" => Some(Direction::RegionToText),
        "t2r" | "text_to_region" | "text-to-region" => Some(Direction::TextToRegion),
        _ => None,
    }
}

impl TemplateLibrary {
    pub fn parse(source: &Path, text: &str) -> Result<Self, Error> {
        let mut lib = TemplateLibrary::default();
        lib.extend_from(source, text)?;
        Ok(lib)
    }

    fn extend_from(&mut self, source: &Path, text: &str) -> Result<(), Error> {
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let raw: TemplateLine = serde_json::from_str(line)
                .map_err(|e| Error::data(source, idx + 1, e.to_string()))?;
            let direction = parse_direction(&raw.direction).ok_or_else(|| {
                Error::data(
                    source,
                    idx + 1,
                    format!("unknown direction {:?}", raw.direction),
                )
            })?;
            let template =
                Template::new(raw.id, direction, raw.question_pattern, raw.answer_pattern)
                    .map_err(|e| Error::data(source, idx + 1, e.to_string()))?;
            if self
                .templates
                .iter()
                .any(|t| t.template.id() == template.id())
            {
                return Err(Error::data(
                    source,
                    idx + 1,
                    format!("duplicate template id {}", template.id()),
                ));
            }
            self.templates.push(LocalizedTemplate {
                language: raw.language,
                template,
            });
        }
        Ok(())
    }

    pub fn bundled() -> Self {
        let mut lib = TemplateLibrary::default();
        for (name, text) in DEFAULT_TEMPLATES {
            lib.extend_from(Path::new(name), text)
                .expect("bundled templates are valid");
        }
        lib
    }

    /// Loads every `*.jsonl` file of a directory, in file-name order.
    pub fn load_dir(dir: &Path) -> Result<Self, Error> {
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        files.sort();
        let mut lib = TemplateLibrary::default();
        for f in files {
            let text = std::fs::read_to_string(&f).map_err(|e| Error::io(&f, e))?;
            lib.extend_from(&f, &text)?;
        }
        if lib.templates.is_empty() {
            return Err(Error::Config(format!(
                "no templates found in {}",
                dir.display()
            )));
        }
        Ok(lib)
    }

    /// Templates for a language, or every template when that language has none.
    pub fn for_language(&self, lang: Lang) -> Vec<Template> {
        let own: Vec<Template> = self
            .templates
            .iter()
            .filter(|t| t.language == lang)
            .map(|t| t.template.clone())
            .collect();
        if own.is_empty() {
            self.templates.iter().map(|t| t.template.clone()).collect()
        } else {
            own
        }
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }
}

fn tsv_rows(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(idx, line)| {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            return None;
        }
        Some((idx + 1, line.split('\t').map(str::trim).collect()))
    })
}

pub fn parse_lexicon(source: &Path, text: &str) -> Result<OrganLexicon, Error> {
    let mut lex = OrganLexicon::new();
    for (line, cols) in tsv_rows(text) {
        let (organ, forms) = cols
            .split_first()
            .filter(|(o, _)| !o.is_empty())
            .ok_or_else(|| Error::data(source, line, "missing organ name"))?;
        lex.insert(organ, forms.iter().copied())
            .map_err(|e| Error::data(source, line, e.to_string()))?;
    }
    Ok(lex)
}

pub fn bundled_lexicon() -> OrganLexicon {
    parse_lexicon(Path::new("chest_lexicon.tsv"), DEFAULT_LEXICON)
        .expect("bundled lexicon is valid")
}

pub fn load_lexicon(path: &Path) -> Result<OrganLexicon, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_lexicon(path, &text)
}

pub fn parse_synonyms(source: &Path, text: &str) -> Result<TextNormalizer, Error> {
    let mut pairs = Vec::new();
    for (line, cols) in tsv_rows(text) {
        match cols.as_slice() {
            [variant, canonical] if !variant.is_empty() && !canonical.is_empty() => {
                pairs.push((variant.to_string(), canonical.to_string()));
            }
            _ => return Err(Error::data(source, line, "expected variant<TAB>canonical")),
        }
    }
    Ok(TextNormalizer::with_synonyms(pairs))
}

pub fn load_synonyms(path: &Path) -> Result<TextNormalizer, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_synonyms(path, &text)
}
