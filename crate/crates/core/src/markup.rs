//! The grounded-text grammar.
//!
//! An annotation is a `<ref>NAME</ref>` immediately followed by one or more
//! `<box>[x1, y1, x2, y2]</box>` elements. Whitespace may separate the ref
//! from its boxes and the boxes from each other; everything else in the
//! input is plain text and is preserved verbatim.
//!
//! Serialization is canonical: no whitespace between tags, one space after
//! each comma, no space inside the brackets.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::geometry::{BBox, GeometryError};

const REF_OPEN: &str = "<ref>";
const REF_CLOSE: &str = "</ref>";
const BOX_OPEN: &str = "<box>";
const BOX_CLOSE: &str = "</box>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    /// The first problem aborts the parse.
    Strict,
    /// Problems are collected; offending fragments are kept as plain text.
    #[default]
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BoxFault {
    MissingBrackets,
    NotInteger(String),
    Arity(usize),
    Geometry(GeometryError),
}

impl fmt::Display for BoxFault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoxFault::MissingBrackets => f.write_str("expected [x1, y1, x2, y2]"),
            BoxFault::NotInteger(s) => write!(f, "{s:?} is not a non-negative integer"),
            BoxFault::Arity(n) => write!(f, "expected 4 coordinates, found {n}"),
            BoxFault::Geometry(e) => write!(f, "{e}"),
        }
    }
}

/// Parse problems. `offset` is a byte offset into the parsed text.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MarkupError {
    #[error("malformed box at byte {offset}: {fault}")]
    MalformedBox { offset: usize, fault: BoxFault },
    #[error("<box> at byte {offset} has no preceding <ref>")]
    DanglingBox { offset: usize },
    #[error("unclosed {tag} at byte {offset}")]
    UnclosedTag { offset: usize, tag: &'static str },
    #[error("<ref> at byte {offset} is not followed by any <box>")]
    RefWithoutBox { offset: usize },
    #[error("empty object name at byte {offset}")]
    EmptyObject { offset: usize },
    #[error("invalid object name {0:?}")]
    InvalidObject(String),
    #[error("annotation needs at least one region")]
    NoRegions,
}

impl MarkupError {
    pub fn offset(&self) -> Option<usize> {
        match self {
            MarkupError::MalformedBox { offset, .. }
            | MarkupError::DanglingBox { offset }
            | MarkupError::UnclosedTag { offset, .. }
            | MarkupError::RefWithoutBox { offset }
            | MarkupError::EmptyObject { offset } => Some(*offset),
            MarkupError::InvalidObject(_) | MarkupError::NoRegions => None,
        }
    }
}

/// A `<ref>` together with the boxes bound to it.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct Annotation {
    object: String,
    regions: Vec<BBox>,
}

impl Annotation {
    /// The object name is stored verbatim; it must be non-blank and free of
    /// `<`, which would collide with the tag syntax.
    pub fn new(object: impl Into<String>, regions: Vec<BBox>) -> Result<Self, MarkupError> {
        let object = object.into();
        if object.trim().is_empty() || object.contains('<') {
            return Err(MarkupError::InvalidObject(object));
        }
        if regions.is_empty() {
            return Err(MarkupError::NoRegions);
        }
        Ok(Self { object, regions })
    }

    pub fn object(&self) -> &str {
        &self.object
    }

    pub fn regions(&self) -> &[BBox] {
        &self.regions
    }

    /// Canonical rendering of the boxes alone, e.g. `<box>[0, 0, 9, 9]</box>`.
    pub fn render_boxes(regions: &[BBox]) -> String {
        let mut out = String::new();
        for b in regions {
            out.push_str(BOX_OPEN);
            out.push_str(&b.to_string());
            out.push_str(BOX_CLOSE);
        }
        out
    }
}

impl fmt::Display for Annotation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{REF_OPEN}{}{REF_CLOSE}", self.object)?;
        for b in &self.regions {
            write!(f, "{BOX_OPEN}{b}{BOX_CLOSE}")?;
        }
        Ok(())
    }
}

/// An object name bound to one or more boxes, optionally with the prose that
/// follows it in a grounded report.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ObjectRegionPair {
    pub object: String,
    pub regions: Vec<BBox>,
    pub description: Option<String>,
}

impl ObjectRegionPair {
    pub fn new(object: impl Into<String>, regions: Vec<BBox>) -> Self {
        Self {
            object: object.into(),
            regions,
            description: None,
        }
    }

    /// Canonical markup of the pair without its description.
    pub fn to_markup(&self) -> String {
        let mut out = String::new();
        out.push_str(REF_OPEN);
        out.push_str(&self.object);
        out.push_str(REF_CLOSE);
        out.push_str(&Annotation::render_boxes(&self.regions));
        out
    }
}

impl From<&Annotation> for ObjectRegionPair {
    fn from(a: &Annotation) -> Self {
        ObjectRegionPair::new(a.object.clone(), a.regions.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub enum Segment {
    Text(String),
    Annotation(Annotation),
}

/// Alternating plain text and annotations. Text segments are never empty and
/// never adjacent, so equal markup always yields equal documents.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct GroundedDocument {
    segments: Vec<Segment>,
}

impl GroundedDocument {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn push_text(&mut self, text: &str) {
        if text.is_empty() {
            return;
        }
        if let Some(Segment::Text(prev)) = self.segments.last_mut() {
            prev.push_str(text);
        } else {
            self.segments.push(Segment::Text(text.to_string()));
        }
    }

    pub fn push_annotation(&mut self, annotation: Annotation) {
        self.segments.push(Segment::Annotation(annotation));
    }

    pub fn annotations(&self) -> impl Iterator<Item = &Annotation> {
        self.segments.iter().filter_map(|s| match s {
            Segment::Annotation(a) => Some(a),
            Segment::Text(_) => None,
        })
    }

    pub fn annotation_count(&self) -> usize {
        self.annotations().count()
    }

    /// All plain-text segments concatenated, markup removed.
    pub fn plain_text(&self) -> String {
        let mut out = String::new();
        for s in &self.segments {
            if let Segment::Text(t) = s {
                out.push_str(t);
            }
        }
        out
    }

    /// Plain text with each annotation replaced by its object name.
    pub fn visible_text(&self) -> String {
        let mut out = String::new();
        for s in &self.segments {
            match s {
                Segment::Text(t) => out.push_str(t),
                Segment::Annotation(a) => out.push_str(&a.object),
            }
        }
        out
    }
}

impl fmt::Display for GroundedDocument {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.segments {
            match s {
                Segment::Text(t) => f.write_str(t)?,
                Segment::Annotation(a) => write!(f, "{a}")?,
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ParseOutput {
    pub document: GroundedDocument,
    /// Problems recovered from in lenient mode; always empty in strict mode.
    pub issues: Vec<MarkupError>,
}

pub fn parse_grounded_text(text: &str, mode: ParseMode) -> Result<ParseOutput, MarkupError> {
    let mut parser = Parser {
        src: text,
        mode,
        out: ParseOutput::default(),
    };
    parser.run()?;
    Ok(parser.out)
}

/// Strict parse returning only the document.
pub fn parse_strict(text: &str) -> Result<GroundedDocument, MarkupError> {
    parse_grounded_text(text, ParseMode::Strict).map(|o| o.document)
}

/// Lenient parse; never fails.
pub fn parse_lenient(text: &str) -> ParseOutput {
    match parse_grounded_text(text, ParseMode::Lenient) {
        Ok(out) => out,
        Err(_) => unreachable!("lenient parsing records errors instead of returning them"),
    }
}

pub fn serialize_grounded_text(doc: &GroundedDocument) -> String {
    doc.to_string()
}

/// Annotations in document order, each carrying the prose that follows it
/// (up to the next annotation) as its description.
pub fn extract_pairs(doc: &GroundedDocument) -> Vec<ObjectRegionPair> {
    let segs = doc.segments();
    let mut pairs = Vec::new();
    for (i, seg) in segs.iter().enumerate() {
        if let Segment::Annotation(a) = seg {
            let mut pair = ObjectRegionPair::from(a);
            if let Some(Segment::Text(t)) = segs.get(i + 1) {
                let d = t
                    .trim_start_matches(|c: char| c.is_whitespace() || is_joining_punct(c))
                    .trim_end();
                if !d.is_empty() {
                    pair.description = Some(d.to_string());
                }
            }
            pairs.push(pair);
        }
    }
    pairs
}

fn is_joining_punct(c: char) -> bool {
    matches!(c, '.' | ',' | ';' | ':' | '。' | '，' | '；' | '：' | '、')
}

fn parse_box_content(content: &str) -> Result<BBox, BoxFault> {
    let inner = content
        .trim()
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or(BoxFault::MissingBrackets)?;
    let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
    if parts.len() != 4 {
        return Err(BoxFault::Arity(parts.len()));
    }
    let mut coords = [0u32; 4];
    for (slot, part) in coords.iter_mut().zip(&parts) {
        if part.is_empty() || !part.bytes().all(|b| b.is_ascii_digit()) {
            return Err(BoxFault::NotInteger(part.to_string()));
        }
        *slot = part
            .parse()
            .map_err(|_| BoxFault::Geometry(GeometryError::OutOfRange(u32::MAX)))?;
    }
    BBox::try_from(coords).map_err(BoxFault::Geometry)
}

struct Parser<'a> {
    src: &'a str,
    mode: ParseMode,
    out: ParseOutput,
}

struct BoxElement {
    start: usize,
    end: usize,
    parsed: Result<BBox, BoxFault>,
}

impl Parser<'_> {
    fn report(&mut self, err: MarkupError) -> Result<(), MarkupError> {
        match self.mode {
            ParseMode::Strict => Err(err),
            ParseMode::Lenient => {
                self.out.issues.push(err);
                Ok(())
            }
        }
    }

    fn skip_ws(&self, mut pos: usize) -> usize {
        while let Some(c) = self.src[pos..].chars().next() {
            if !c.is_whitespace() {
                break;
            }
            pos += c.len_utf8();
        }
        pos
    }

    fn run(&mut self) -> Result<(), MarkupError> {
        let src = self.src;
        let mut text_start = 0;
        let mut pos = 0;
        while let Some(rel) = src[pos..].find('<') {
            let at = pos + rel;
            let rest = &src[at..];
            if rest.starts_with(REF_OPEN) {
                self.out.document.push_text(&src[text_start..at]);
                let (resume_text, resume_scan) = self.group(at)?;
                text_start = resume_text;
                pos = resume_scan;
            } else if rest.starts_with(BOX_OPEN) {
                self.report(MarkupError::DanglingBox { offset: at })?;
                pos = match src[at..].find(BOX_CLOSE) {
                    Some(c) => at + c + BOX_CLOSE.len(),
                    None => at + BOX_OPEN.len(),
                };
            } else {
                pos = at + 1;
            }
        }
        self.out.document.push_text(&src[text_start..]);
        Ok(())
    }

    /// Parses one ref group starting at `start`. Returns where plain text
    /// resumes and where tag scanning resumes; they differ only when an
    /// unclosed `<box>` trails the group.
    fn group(&mut self, start: usize) -> Result<(usize, usize), MarkupError> {
        let src = self.src;
        let name_start = start + REF_OPEN.len();
        let name_end = match src[name_start..].find('<') {
            Some(rel) if src[name_start + rel..].starts_with(REF_CLOSE) => name_start + rel,
            _ => {
                self.report(MarkupError::UnclosedTag {
                    offset: start,
                    tag: "<ref>",
                })?;
                self.out.document.push_text(REF_OPEN);
                return Ok((name_start, name_start));
            }
        };
        let name = &src[name_start..name_end];

        let mut boxes: Vec<BoxElement> = Vec::new();
        let mut end = name_end + REF_CLOSE.len();
        let mut scan_from = None;
        loop {
            let next = self.skip_ws(end);
            if !src[next..].starts_with(BOX_OPEN) {
                break;
            }
            let content_start = next + BOX_OPEN.len();
            let closed = src[content_start..]
                .find(BOX_CLOSE)
                // a box body never legitimately holds another tag
                .filter(|&rel| !src[content_start..content_start + rel].contains('<'));
            let Some(rel) = closed else {
                self.report(MarkupError::UnclosedTag {
                    offset: next,
                    tag: "<box>",
                })?;
                scan_from = Some(content_start);
                break;
            };
            let content = &src[content_start..content_start + rel];
            end = content_start + rel + BOX_CLOSE.len();
            boxes.push(BoxElement {
                start: next,
                end,
                parsed: parse_box_content(content),
            });
        }

        let resume = (end, scan_from.unwrap_or(end));
        if name.trim().is_empty() {
            self.report(MarkupError::EmptyObject { offset: start })?;
            self.out.document.push_text(&src[start..end]);
            return Ok(resume);
        }
        if boxes.is_empty() {
            self.report(MarkupError::RefWithoutBox { offset: start })?;
            self.out.document.push_text(&src[start..end]);
            return Ok(resume);
        }

        let mut regions = Vec::with_capacity(boxes.len());
        let mut rejected = Vec::new();
        for b in boxes {
            match b.parsed {
                Ok(bbox) => regions.push(bbox),
                Err(fault) => {
                    self.report(MarkupError::MalformedBox {
                        offset: b.start,
                        fault,
                    })?;
                    rejected.push((b.start, b.end));
                }
            }
        }
        if regions.is_empty() {
            self.out.document.push_text(&src[start..end]);
            return Ok(resume);
        }
        let annotation = Annotation::new(name, regions)?;
        self.out.document.push_annotation(annotation);
        for (s, e) in rejected {
            self.out.document.push_text(&src[s..e]);
        }
        Ok(resume)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn bb(x1: u32, y1: u32, x2: u32, y2: u32) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    #[test]
    fn single_annotation() {
        let doc = parse_strict("<ref>left lung</ref><box>[10, 20, 400, 800]</box>").unwrap();
        let pairs = extract_pairs(&doc);
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].object, "left lung");
        assert_eq!(pairs[0].regions, vec![bb(10, 20, 400, 800)]);
        assert_eq!(pairs[0].description, None);
    }

    #[test]
    fn consecutive_boxes_bind_to_one_ref() {
        let doc =
            parse_strict("<ref>lesion</ref><box>[1,2,3,4]</box><box>[5,6,9,9]</box>").unwrap();
        assert_eq!(doc.segments().len(), 1);
        let a = doc.annotations().next().unwrap();
        assert_eq!(a.regions(), &[bb(1, 2, 3, 4), bb(5, 6, 9, 9)]);
    }

    #[test]
    fn whitespace_between_tokens() {
        let doc =
            parse_strict("<ref>x</ref> <box>[ 1 ,2,  3, 4 ]</box>\n<box>[5, 6, 9, 9]</box> tail")
                .unwrap();
        assert_eq!(
            doc.to_string(),
            "<ref>x</ref><box>[1, 2, 3, 4]</box><box>[5, 6, 9, 9]</box> tail"
        );
    }

    #[test]
    fn prose_only() {
        let doc = parse_strict("normal text only").unwrap();
        assert_eq!(doc.segments(), &[Segment::Text("normal text only".into())]);
        assert!(extract_pairs(&doc).is_empty());
        assert_eq!(parse_strict("").unwrap(), GroundedDocument::new());
    }

    #[test]
    fn lone_angle_brackets_are_text() {
        let s = "size < 3 cm, </box> stray and a <b> tag";
        let doc = parse_strict(s).unwrap();
        assert_eq!(doc.to_string(), s);
        assert_eq!(doc.segments().len(), 1);
    }

    #[test]
    fn serialize_examples() {
        let mut doc = GroundedDocument::new();
        doc.push_annotation(Annotation::new("liver", vec![bb(0, 0, 10, 10)]).unwrap());
        assert_eq!(
            serialize_grounded_text(&doc),
            "<ref>liver</ref><box>[0, 0, 10, 10]</box>"
        );
        assert_eq!(serialize_grounded_text(&GroundedDocument::new()), "");
    }

    #[test]
    fn description_attachment() {
        let doc = parse_strict(
            "Findings: <ref>heart</ref><box>[1, 1, 5, 5]</box>. The heart size is normal. <ref>lung</ref><box>[5, 5, 9, 9]</box>",
        )
        .unwrap();
        let pairs = extract_pairs(&doc);
        assert_eq!(pairs.len(), 2);
        assert_eq!(
            pairs[0].description.as_deref(),
            Some("The heart size is normal.")
        );
        assert_eq!(pairs[1].description, None);
    }

    #[test]
    fn strict_errors() {
        type Case = (&'static str, fn(&MarkupError) -> bool);
        let cases: [Case; 7] = [
            ("<ref>a</ref><box>[1, 2, x, 4]</box>", |e| {
                matches!(
                    e,
                    MarkupError::MalformedBox {
                        fault: BoxFault::NotInteger(_),
                        ..
                    }
                )
            }),
            ("<ref>a</ref><box>[1, 2, 3]</box>", |e| {
                matches!(
                    e,
                    MarkupError::MalformedBox {
                        fault: BoxFault::Arity(3),
                        ..
                    }
                )
            }),
            ("<ref>a</ref><box>[1, 2, 3, 1000]</box>", |e| {
                matches!(
                    e,
                    MarkupError::MalformedBox {
                        fault: BoxFault::Geometry(GeometryError::OutOfRange(1000)),
                        ..
                    }
                )
            }),
            ("<ref>a</ref><box>[5, 2, 5, 4]</box>", |e| {
                matches!(
                    e,
                    MarkupError::MalformedBox {
                        fault: BoxFault::Geometry(GeometryError::Degenerate { .. }),
                        ..
                    }
                )
            }),
            ("see <box>[1, 2, 3, 4]</box>", |e| {
                matches!(e, MarkupError::DanglingBox { offset: 4 })
            }),
            ("<ref>a</ref><box>[1, 2, 3, 4]", |e| {
                matches!(e, MarkupError::UnclosedTag { tag: "<box>", .. })
            }),
            ("<ref>a <box>[1, 2, 3, 4]</box>", |e| {
                matches!(
                    e,
                    MarkupError::UnclosedTag {
                        tag: "<ref>",
                        offset: 0
                    }
                )
            }),
        ];
        for (input, check) in cases {
            let err = parse_strict(input).unwrap_err();
            assert!(check(&err), "{input}: {err:?}");
        }
        assert!(matches!(
            parse_strict("<ref>a</ref> then text"),
            Err(MarkupError::RefWithoutBox { offset: 0 })
        ));
        assert!(matches!(
            parse_strict("<ref>  </ref><box>[1, 2, 3, 4]</box>"),
            Err(MarkupError::EmptyObject { .. })
        ));
    }

    #[test]
    fn lenient_keeps_valid_boxes_and_all_text() {
        let input = "A <ref>a</ref><box>[1, 2, 3, 4]</box><box>[9, 9, 1, 1]</box> B <box>[0, 0, 1, 1]</box> C";
        let out = parse_lenient(input);
        assert_eq!(out.issues.len(), 2);
        let pairs = extract_pairs(&out.document);
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].regions, vec![bb(1, 2, 3, 4)]);
        let rendered = out.document.to_string();
        for frag in ["[9, 9, 1, 1]", "<box>[0, 0, 1, 1]</box>", " C", "A "] {
            assert!(rendered.contains(frag), "{rendered}");
        }
    }

    #[test]
    fn lenient_unclosed_ref_continues_scanning() {
        let out = parse_lenient("<ref>oops <ref>b</ref><box>[1, 1, 2, 2]</box>");
        assert_eq!(out.issues.len(), 1);
        assert_eq!(out.document.annotation_count(), 1);
        assert_eq!(
            out.document.to_string(),
            "<ref>oops <ref>b</ref><box>[1, 1, 2, 2]</box>"
        );
    }

    #[test]
    fn annotation_validation() {
        assert!(Annotation::new(" ", vec![bb(0, 0, 1, 1)]).is_err());
        assert!(Annotation::new("a<b", vec![bb(0, 0, 1, 1)]).is_err());
        assert_eq!(Annotation::new("a", vec![]), Err(MarkupError::NoRegions));
    }
}
