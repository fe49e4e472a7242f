//! Turning masks, labels and reports into region-centric samples.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{mask_to_boxes, normalize_box, BBox, MaskGrid};
use crate::markup::{parse_strict, Annotation, GroundedDocument, MarkupError};

/// Key collecting report sentences that mention no known organ.
pub const OTHER_KEY: &str = "other";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ForgeError {
    #[error("mask has no component large enough to box")]
    EmptyMask,
    #[error("no {0} template available")]
    NoTemplates(Direction),
    #[error("no value for the {{{0}}} placeholder")]
    MissingPlaceholderValue(&'static str),
    #[error("template {id}: {reason}")]
    TemplateDirectionMismatch { id: String, reason: &'static str },
    #[error("unknown placeholder {{{0}}}")]
    UnknownPlaceholder(String),
    #[error("filled answer is not well-formed markup: {0}")]
    AnswerNotWellFormed(MarkupError),
    #[error("organ {0:?} has no surface forms")]
    EmptySurfaceForms(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Direction {
    /// The box is given, the answer names it.
    RegionToText,
    /// The name is given, the answer locates it.
    TextToRegion,
}

impl Direction {
    pub fn short_name(self) -> &'static str {
        match self {
            Direction::RegionToText => "r2t",
            Direction::TextToRegion => "t2r",
        }
    }
}

impl core::fmt::Display for Direction {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            Direction::RegionToText => "region-to-text",
            Direction::TextToRegion => "text-to-region",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Placeholder {
    Object,
    Box,
}

fn placeholders(pattern: &str) -> Result<Vec<Placeholder>, ForgeError> {
    let mut found = Vec::new();
    let mut rest = pattern;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let Some(close) = after.find('}') else {
            return Err(ForgeError::UnknownPlaceholder(after.to_string()));
        };
        match &after[..close] {
            "object" => found.push(Placeholder::Object),
            "box" => found.push(Placeholder::Box),
            other => return Err(ForgeError::UnknownPlaceholder(other.to_string())),
        }
        rest = &after[close + 1..];
    }
    Ok(found)
}

/// An instruction/answer pattern with `{object}` and `{box}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    id: String,
    direction: Direction,
    question: String,
    answer: String,
}

impl Template {
    pub fn new(
        id: impl Into<String>,
        direction: Direction,
        question: impl Into<String>,
        answer: impl Into<String>,
    ) -> Result<Self, ForgeError> {
        let id = id.into();
        let question = question.into();
        let answer = answer.into();
        let q = placeholders(&question)?;
        let a = placeholders(&answer)?;
        let mismatch = |reason| ForgeError::TemplateDirectionMismatch {
            id: id.clone(),
            reason,
        };
        match direction {
            Direction::RegionToText if !q.contains(&Placeholder::Box) => {
                return Err(mismatch("region-to-text question must contain {box}"));
            }
            Direction::TextToRegion if !a.contains(&Placeholder::Box) => {
                return Err(mismatch("text-to-region answer must contain {box}"));
            }
            _ => {}
        }
        // Reject answers that cannot yield well-formed markup for any input.
        let unit = BBox::new(0, 0, 1, 1).expect("unit box is valid");
        let probe = substitute(&answer, "x", &Annotation::render_boxes(&[unit]));
        parse_strict(&probe).map_err(ForgeError::AnswerNotWellFormed)?;
        Ok(Self {
            id,
            direction,
            question,
            answer,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn question_pattern(&self) -> &str {
        &self.question
    }

    pub fn answer_pattern(&self) -> &str {
        &self.answer
    }
}

fn substitute(pattern: &str, object: &str, boxes: &str) -> String {
    pattern.replace("{object}", object).replace("{box}", boxes)
}

/// Fills both patterns. `{box}` becomes the canonical `<box>` elements of all
/// boxes; the answer must then parse in strict mode.
pub fn fill_template(
    template: &Template,
    object: &str,
    boxes: &[BBox],
) -> Result<(String, String), ForgeError> {
    let uses = |p: Placeholder| {
        template.question.contains(match p {
            Placeholder::Object => "{object}",
            Placeholder::Box => "{box}",
        }) || template.answer.contains(match p {
            Placeholder::Object => "{object}",
            Placeholder::Box => "{box}",
        })
    };
    if uses(Placeholder::Box) && boxes.is_empty() {
        return Err(ForgeError::MissingPlaceholderValue("box"));
    }
    if uses(Placeholder::Object) && object.trim().is_empty() {
        return Err(ForgeError::MissingPlaceholderValue("object"));
    }
    let rendered = Annotation::render_boxes(boxes);
    let question = substitute(&template.question, object, &rendered);
    let answer = substitute(&template.answer, object, &rendered);
    parse_strict(&answer).map_err(ForgeError::AnswerNotWellFormed)?;
    Ok((question, answer))
}

/// Region-text source: one labelled binary mask of an image.
#[derive(Debug, Clone, Copy)]
pub struct RegionSource<'a> {
    pub id: &'a str,
    pub image_ref: &'a str,
    pub label: &'a str,
    pub mask: &'a MaskGrid,
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ForgedSample {
    pub id: String,
    pub image_ref: String,
    pub question: String,
    pub answer: String,
    pub direction: Direction,
    pub template_id: String,
    pub label: String,
    pub regions: Vec<BBox>,
}

/// One region-to-text and one text-to-region sample from a mask. Template
/// choice is driven by `seed` alone, so equal inputs give equal samples.
pub fn forge_region_samples(
    source: &RegionSource<'_>,
    templates: &[Template],
    seed: u64,
    min_area: usize,
) -> Result<Vec<ForgedSample>, ForgeError> {
    let regions: Vec<BBox> = mask_to_boxes(source.mask, min_area)
        .iter()
        .filter_map(|p| normalize_box(p, source.mask.width(), source.mask.height()).ok())
        .collect();
    if regions.is_empty() {
        return Err(ForgeError::EmptyMask);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(2);
    for direction in [Direction::RegionToText, Direction::TextToRegion] {
        let pool: Vec<&Template> = templates
            .iter()
            .filter(|t| t.direction == direction)
            .collect();
        if pool.is_empty() {
            return Err(ForgeError::NoTemplates(direction));
        }
        let template = pool[rng.random_range(0..pool.len())];
        let (question, answer) = fill_template(template, source.label, &regions)?;
        samples.push(ForgedSample {
            id: format!("{}/{}", source.id, direction.short_name()),
            image_ref: source.image_ref.to_string(),
            question,
            answer,
            direction,
            template_id: template.id.clone(),
            label: source.label.to_string(),
            regions: regions.clone(),
        });
    }
    Ok(samples)
}

/// Organ name to its surface forms, in insertion order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OrganLexicon {
    entries: Vec<(String, Vec<String>)>,
}

impl OrganLexicon {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds (or extends) an organ. Forms are trimmed and lowercased.
    pub fn insert<I, S>(&mut self, organ: &str, forms: I) -> Result<(), ForgeError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let forms: Vec<String> = forms
            .into_iter()
            .map(|f| f.as_ref().trim().to_lowercase())
            .filter(|f| !f.is_empty())
            .collect();
        if forms.is_empty() {
            return Err(ForgeError::EmptySurfaceForms(organ.to_string()));
        }
        match self.entries.iter_mut().find(|(name, _)| name == organ) {
            Some((_, existing)) => existing.extend(forms),
            None => self.entries.push((organ.to_string(), forms)),
        }
        Ok(())
    }

    pub fn organs(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(o, _)| o.as_str())
    }

    pub fn forms(&self, organ: &str) -> Option<&[String]> {
        self.entries
            .iter()
            .find(|(o, _)| o == organ)
            .map(|(_, f)| f.as_slice())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Ordered organ -> description map.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct OrganDescriptions {
    entries: Vec<(String, String)>,
}

impl OrganDescriptions {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a sentence to an organ's description, creating it if needed.
    pub fn append(&mut self, organ: &str, sentence: &str) {
        match self.entries.iter_mut().find(|(o, _)| o == organ) {
            Some((_, text)) => {
                if text.ends_with('.') {
                    text.push(' ');
                }
                text.push_str(sentence);
            }
            None => self.entries.push((organ.to_string(), sentence.to_string())),
        }
    }

    pub fn get(&self, organ: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(o, _)| o == organ)
            .map(|(_, d)| d.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(o, d)| (o.as_str(), d.as_str()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl<K: AsRef<str>, V: AsRef<str>> FromIterator<(K, V)> for OrganDescriptions {
    fn from_iter<T: IntoIterator<Item = (K, V)>>(iter: T) -> Self {
        let mut d = OrganDescriptions::new();
        for (k, v) in iter {
            d.append(k.as_ref(), v.as_ref());
        }
        d
    }
}

/// Splits on `.` and `。`, keeping the delimiter. A `.` between two digits is
/// a decimal point, not a sentence end.
pub fn split_sentences(report: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut prev: Option<char> = None;
    let mut iter = report.char_indices().peekable();
    while let Some((i, c)) = iter.next() {
        let next = iter.peek().map(|&(_, n)| n);
        let ends = match c {
            '。' => true,
            '.' => {
                !(prev.is_some_and(|p| p.is_ascii_digit())
                    && next.is_some_and(|n| n.is_ascii_digit()))
            }
            _ => false,
        };
        if ends {
            let end = i + c.len_utf8();
            let s = report[start..end].trim();
            if !s.is_empty() {
                out.push(s);
            }
            start = end;
        }
        prev = Some(c);
    }
    let tail = report[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

/// Rule-based report segmentation: every sentence goes to each organ whose
/// surface form it contains (case-insensitively), or to [`OTHER_KEY`].
/// Organs appear in lexicon order, with `other` last.
pub fn segment_report(report: &str, lexicon: &OrganLexicon) -> OrganDescriptions {
    let sentences = split_sentences(report);
    let lowered: Vec<String> = sentences.iter().map(|s| s.to_lowercase()).collect();
    let mut out = OrganDescriptions::new();
    let mut claimed = alloc::vec![false; sentences.len()];
    for (organ, forms) in &lexicon.entries {
        for (idx, sentence) in sentences.iter().enumerate() {
            if forms.iter().any(|f| lowered[idx].contains(f.as_str())) {
                out.append(organ, sentence);
                claimed[idx] = true;
            }
        }
    }
    for (idx, sentence) in sentences.iter().enumerate() {
        if !claimed[idx] {
            out.append(OTHER_KEY, sentence);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AssembledReport {
    pub document: GroundedDocument,
    /// Organs that have regions but no description (or an unusable name).
    pub unmatched_regions: Vec<String>,
}

/// Interleaves each organ's boxes with its description. Organs named in
/// `order` come first in that order, the rest follow in description order.
pub fn assemble_grounded_report(
    descriptions: &OrganDescriptions,
    regions: &BTreeMap<String, Vec<BBox>>,
    order: Option<&[String]>,
) -> AssembledReport {
    let mut organs: Vec<&str> = Vec::new();
    if let Some(order) = order {
        for o in order {
            if descriptions.get(o).is_some() && !organs.contains(&o.as_str()) {
                organs.push(o);
            }
        }
    }
    for (o, _) in descriptions.iter() {
        if !organs.contains(&o) {
            organs.push(o);
        }
    }

    let mut out = AssembledReport::default();
    for (i, organ) in organs.iter().enumerate() {
        let description = descriptions.get(organ).unwrap_or_default();
        if i > 0 {
            out.document.push_text(" ");
        }
        let annotation = regions
            .get(*organ)
            .and_then(|boxes| Annotation::new(*organ, boxes.clone()).ok());
        match annotation {
            Some(a) => {
                out.document.push_annotation(a);
                out.document.push_text(" ");
                out.document.push_text(description);
            }
            None => out.document.push_text(description),
        }
    }
    for (organ, boxes) in regions {
        let placed = descriptions.get(organ).is_some()
            && Annotation::new(organ.as_str(), boxes.clone()).is_ok();
        if !placed {
            out.unmatched_regions.push(organ.clone());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markup::extract_pairs;
    use alloc::vec;

    fn bb(x1: u32, y1: u32, x2: u32, y2: u32) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    fn t2r() -> Template {
        Template::new(
            "t2r-1",
            Direction::TextToRegion,
            "Where is {object}?",
            "<ref>{object}</ref>{box}",
        )
        .unwrap()
    }

    fn r2t() -> Template {
        Template::new(
            "r2t-1",
            Direction::RegionToText,
            "What is in {box}?",
            "It is the {object}.",
        )
        .unwrap()
    }

    #[test]
    fn fill_examples() {
        let (q, a) = fill_template(&t2r(), "liver", &[bb(0, 0, 10, 10)]).unwrap();
        assert_eq!(q, "Where is liver?");
        assert_eq!(a, "<ref>liver</ref><box>[0, 0, 10, 10]</box>");
        let (_, a) =
            fill_template(&t2r(), "liver", &[bb(0, 0, 10, 10), bb(20, 20, 30, 30)]).unwrap();
        assert_eq!(
            a,
            "<ref>liver</ref><box>[0, 0, 10, 10]</box><box>[20, 20, 30, 30]</box>"
        );
        let (q, a) = fill_template(&r2t(), "spleen", &[bb(1, 2, 3, 4)]).unwrap();
        assert_eq!(q, "What is in <box>[1, 2, 3, 4]</box>?");
        assert_eq!(a, "It is the spleen.");
    }

    #[test]
    fn fill_errors() {
        assert_eq!(
            fill_template(&t2r(), "liver", &[]),
            Err(ForgeError::MissingPlaceholderValue("box"))
        );
        assert_eq!(
            fill_template(&t2r(), " ", &[bb(0, 0, 1, 1)]),
            Err(ForgeError::MissingPlaceholderValue("object"))
        );
        assert!(matches!(
            fill_template(&t2r(), "a<b", &[bb(0, 0, 1, 1)]),
            Err(ForgeError::AnswerNotWellFormed(_))
        ));
    }

    #[test]
    fn template_validation() {
        assert!(matches!(
            Template::new(
                "x",
                Direction::TextToRegion,
                "Where is {object}?",
                "{object}"
            ),
            Err(ForgeError::TemplateDirectionMismatch { .. })
        ));
        assert!(matches!(
            Template::new("x", Direction::RegionToText, "Name it", "{object}"),
            Err(ForgeError::TemplateDirectionMismatch { .. })
        ));
        assert_eq!(
            Template::new("x", Direction::RegionToText, "{box} {organ}", "{object}"),
            Err(ForgeError::UnknownPlaceholder("organ".into()))
        );
        assert!(matches!(
            Template::new(
                "x",
                Direction::TextToRegion,
                "Find {object}",
                "{object}: {box}"
            ),
            Err(ForgeError::AnswerNotWellFormed(
                MarkupError::DanglingBox { .. }
            ))
        ));
    }

    #[test]
    fn forge_cardinality_and_determinism() {
        let mut mask = MaskGrid::empty(20, 20);
        mask.fill(&crate::geometry::PixelBox::new(2, 2, 8, 8));
        let src = RegionSource {
            id: "m1",
            image_ref: "img.png",
            label: "liver",
            mask: &mask,
        };
        let templates = vec![t2r(), r2t()];
        let a = forge_region_samples(&src, &templates, 7, 4).unwrap();
        assert_eq!(a.len(), 2);
        assert_eq!(a[0].direction, Direction::RegionToText);
        assert_eq!(
            a[1].answer,
            "<ref>liver</ref><box>[100, 100, 400, 400]</box>"
        );
        assert_eq!(a, forge_region_samples(&src, &templates, 7, 4).unwrap());

        let empty = MaskGrid::empty(20, 20);
        let src = RegionSource {
            mask: &empty,
            ..src
        };
        assert_eq!(
            forge_region_samples(&src, &templates, 7, 4),
            Err(ForgeError::EmptyMask)
        );
    }

    #[test]
    fn forge_needs_both_directions() {
        let mut mask = MaskGrid::empty(4, 4);
        mask.fill(&crate::geometry::PixelBox::new(0, 0, 2, 2));
        let src = RegionSource {
            id: "m",
            image_ref: "i",
            label: "x",
            mask: &mask,
        };
        assert_eq!(
            forge_region_samples(&src, &[r2t()], 0, 1),
            Err(ForgeError::NoTemplates(Direction::TextToRegion))
        );
    }

    fn zh_lexicon() -> OrganLexicon {
        let mut lex = OrganLexicon::new();
        lex.insert("liver", ["肝脏"]).unwrap();
        lex.insert("spleen", ["脾"]).unwrap();
        lex
    }

    #[test]
    fn segment_examples() {
        let d = segment_report("肝脏大小正常。脾不大。", &zh_lexicon());
        assert_eq!(
            d.iter().collect::<Vec<_>>(),
            vec![("liver", "肝脏大小正常。"), ("spleen", "脾不大。")]
        );

        let d = segment_report("肝脏与脾未见异常。", &zh_lexicon());
        assert_eq!(d.get("liver"), Some("肝脏与脾未见异常。"));
        assert_eq!(d.get("spleen"), Some("肝脏与脾未见异常。"));

        let d = segment_report("No acute findings. Bones intact.", &zh_lexicon());
        assert_eq!(
            d.iter().collect::<Vec<_>>(),
            vec![(OTHER_KEY, "No acute findings. Bones intact.")]
        );
    }

    #[test]
    fn segment_latin_is_case_insensitive() {
        let mut lex = OrganLexicon::new();
        lex.insert("left lung", ["Left Lung"]).unwrap();
        let d = segment_report("The LEFT LUNG shows a 2.5 cm nodule. Heart normal.", &lex);
        assert_eq!(
            d.get("left lung"),
            Some("The LEFT LUNG shows a 2.5 cm nodule.")
        );
        assert_eq!(d.get(OTHER_KEY), Some("Heart normal."));
        assert!(lex.clone().insert("x", [" "]).is_err());
    }

    #[test]
    fn assemble_examples() {
        let descs: OrganDescriptions = [("liver", "Liver is normal.")].into_iter().collect();
        let mut regions = BTreeMap::new();
        regions.insert("liver".to_string(), vec![bb(0, 0, 10, 10)]);
        let r = assemble_grounded_report(&descs, &regions, None);
        assert_eq!(
            r.document.to_string(),
            "<ref>liver</ref><box>[0, 0, 10, 10]</box> Liver is normal."
        );
        assert!(r.unmatched_regions.is_empty());
        let pairs = extract_pairs(&parse_strict(&r.document.to_string()).unwrap());
        assert_eq!(pairs[0].description.as_deref(), Some("Liver is normal."));

        let r = assemble_grounded_report(&descs, &BTreeMap::new(), None);
        assert_eq!(r.document.to_string(), "Liver is normal.");

        let mut other = BTreeMap::new();
        other.insert("spleen".to_string(), vec![bb(0, 0, 10, 10)]);
        let r = assemble_grounded_report(&descs, &other, None);
        assert_eq!(r.document.annotation_count(), 0);
        assert_eq!(r.unmatched_regions, vec!["spleen".to_string()]);
    }

    #[test]
    fn assemble_respects_order() {
        let descs: OrganDescriptions = [("b", "B."), ("a", "A."), ("c", "C.")]
            .into_iter()
            .collect();
        let order = vec!["c".to_string(), "a".to_string(), "zzz".to_string()];
        let r = assemble_grounded_report(&descs, &BTreeMap::new(), Some(&order));
        assert_eq!(r.document.to_string(), "C. A. B.");
    }
}
