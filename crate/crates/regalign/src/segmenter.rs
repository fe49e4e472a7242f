//! Report segmentation by organ: an optional remote service with the
//! lexicon-based splitter as fallback.

use std::collections::BTreeMap;
use std::time::Duration;

use regalign_core::{segment_report, OrganDescriptions, OrganLexicon, OTHER_KEY};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum SegmentError {
    #[error("segmenter request failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("segmenter returned no descriptions")]
    Empty,
}

pub trait SegmenterClient: Sync {
    fn segment(&self, report: &str, organs: &[String]) -> Result<OrganDescriptions, SegmentError>;
}

pub struct RuleSegmenter {
    lexicon: OrganLexicon,
}

impl RuleSegmenter {
    pub fn new(lexicon: OrganLexicon) -> Self {
        Self { lexicon }
    }
}

impl SegmenterClient for RuleSegmenter {
    fn segment(&self, report: &str, _organs: &[String]) -> Result<OrganDescriptions, SegmentError> {
        Ok(segment_report(report, &self.lexicon))
    }
}

#[derive(Serialize)]
struct SegmentRequest<'a> {
    report: &'a str,
    organ_list: &'a [String],
}

#[derive(Deserialize)]
struct SegmentResponse {
    descriptions: BTreeMap<String, String>,
}

/// POSTs `{"report", "organ_list"}` and expects `{"descriptions": {organ: text}}`.
pub struct HttpSegmenter {
    agent: ureq::Agent,
    url: String,
    retries: u32,
}

impl HttpSegmenter {
    pub fn new(url: impl Into<String>, timeout: Duration, retries: u32) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self {
            agent,
            url: url.into(),
            retries,
        }
    }
}

/// Keeps the requested organ order; anything else follows, `other` last.
fn order_descriptions(map: BTreeMap<String, String>, organs: &[String]) -> OrganDescriptions {
    let mut out = OrganDescriptions::new();
    for organ in organs {
        if let Some(text) = map.get(organ) {
            out.append(organ, text);
        }
    }
    for (organ, text) in &map {
        if organ != OTHER_KEY && !organs.contains(organ) {
            out.append(organ, text);
        }
    }
    if let Some(text) = map.get(OTHER_KEY) {
        if !organs.iter().any(|o| o == OTHER_KEY) {
            out.append(OTHER_KEY, text);
        }
    }
    out
}

impl SegmenterClient for HttpSegmenter {
    fn segment(&self, report: &str, organs: &[String]) -> Result<OrganDescriptions, SegmentError> {
        let body = SegmentRequest {
            report,
            organ_list: organs,
        };
        let mut last = String::new();
        for attempt in 0..=self.retries {
            let result = self
                .agent
                .post(&self.url)
                .send_json(&body)
                .and_then(|mut r| r.body_mut().read_json::<SegmentResponse>());
            match result {
                Ok(resp) => {
                    let map: BTreeMap<String, String> = resp
                        .descriptions
                        .into_iter()
                        .filter(|(_, v)| !v.trim().is_empty())
                        .collect();
                    if map.is_empty() {
                        return Err(SegmentError::Empty);
                    }
                    return Ok(order_descriptions(map, organs));
                }
                Err(e) => {
                    log::debug!("segmenter attempt {} failed: {e}", attempt + 1);
                    last = e.to_string();
                }
            }
        }
        Err(SegmentError::Transport {
            attempts: self.retries + 1,
            message: last,
        })
    }
}

/// Tries `primary`, and on failure logs a warning and uses the rules.
pub struct FallbackSegmenter<P> {
    primary: P,
    rules: RuleSegmenter,
}

impl<P: SegmenterClient> FallbackSegmenter<P> {
    pub fn new(primary: P, rules: RuleSegmenter) -> Self {
        Self { primary, rules }
    }
}

impl<P: SegmenterClient> SegmenterClient for FallbackSegmenter<P> {
    fn segment(&self, report: &str, organs: &[String]) -> Result<OrganDescriptions, SegmentError> {
        match self.primary.segment(report, organs) {
            Ok(d) => Ok(d),
            Err(e) => {
                log::warn!("{e}; falling back to lexicon segmentation");
                self.rules.segment(report, organs)
            }
        }
    }
}
