//! Sentence-level text similarity: BLEU, ROUGE-L, a lexical METEOR and
//! token-overlap scores for question answering. Every score is a percentage.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Language {
    #[default]
    English,
    Chinese,
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenSequence {
    tokens: Vec<String>,
    language: Language,
}

impl TokenSequence {
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn language(&self) -> Language {
        self.language
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Tokens joined by single spaces.
    pub fn joined(&self) -> String {
        self.tokens.join(" ")
    }
}

/// CJK ideographs, kana and hangul syllables each form a token of their own.
pub fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30FF
        | 0x3400..=0x4DBF
        | 0x4E00..=0x9FFF
        | 0xAC00..=0xD7AF
        | 0xF900..=0xFAFF
        | 0x20000..=0x2EBEF
        | 0x30000..=0x3134F)
}

/// Lowercases, treats punctuation as a separator and splits on whitespace.
/// For Chinese and mixed text every CJK character is its own token while
/// runs of Latin letters and digits stay whole.
pub fn tokenize(text: &str, language: Language) -> TokenSequence {
    let split_cjk = language != Language::English;
    let mut tokens = Vec::new();
    let mut current = String::new();
    for c in text.chars() {
        if split_cjk && is_cjk(c) {
            if !current.is_empty() {
                tokens.push(core::mem::take(&mut current));
            }
            tokens.push(String::from(c));
        } else if c.is_alphanumeric() {
            current.extend(c.to_lowercase());
        } else if !current.is_empty() {
            tokens.push(core::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    TokenSequence { tokens, language }
}

fn ngram_counts(tokens: &[String], n: usize) -> BTreeMap<&[String], usize> {
    let mut counts = BTreeMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram matches and candidate n-gram total.
fn clipped_matches(candidate: &[String], reference: &[String], n: usize) -> (usize, usize) {
    let cand = ngram_counts(candidate, n);
    let refc = ngram_counts(reference, n);
    let matched = cand
        .iter()
        .map(|(g, &c)| c.min(refc.get(g).copied().unwrap_or(0)))
        .sum();
    (matched, candidate.len().saturating_sub(n - 1))
}

/// Sentence BLEU with uniform weights over 1..=`max_n`, add-one smoothing for
/// n >= 2, and the brevity penalty `exp(1 - |ref| / |cand|)` for short
/// candidates.
pub fn bleu(candidate: &TokenSequence, reference: &TokenSequence, max_n: usize) -> f64 {
    let max_n = max_n.max(1);
    let (c, r) = (candidate.len(), reference.len());
    if c == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let (matched, total) = clipped_matches(&candidate.tokens, &reference.tokens, n);
        let p = if n == 1 {
            if matched == 0 {
                return 0.0;
            }
            matched as f64 / total as f64
        } else {
            (matched as f64 + 1.0) / (total as f64 + 1.0)
        };
        log_sum += libm::log(p);
    }
    let bp = if c < r {
        libm::exp(1.0 - r as f64 / c as f64)
    } else {
        1.0
    };
    100.0 * bp * libm::exp(log_sum / max_n as f64)
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS-based F1 (beta = 1).
pub fn rouge_l(candidate: &TokenSequence, reference: &TokenSequence) -> f64 {
    if candidate.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let lcs = lcs_len(&candidate.tokens, &reference.tokens);
    if lcs == 0 {
        return 0.0;
    }
    let p = lcs as f64 / candidate.len() as f64;
    let r = lcs as f64 / reference.len() as f64;
    100.0 * 2.0 * p * r / (p + r)
}

pub const METEOR_ALPHA: f64 = 0.9;
pub const METEOR_BETA: f64 = 3.0;
pub const METEOR_GAMMA: f64 = 0.5;

/// Exact-match unigram alignment. Candidate tokens are aligned left to right;
/// each takes the reference position right after the previous alignment when
/// that continues a chunk, otherwise the leftmost unused equal token.
fn align_unigrams(candidate: &[String], reference: &[String]) -> Vec<(usize, usize)> {
    let mut used = vec![false; reference.len()];
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for (i, tok) in candidate.iter().enumerate() {
        let continued = pairs
            .last()
            .filter(|&&(pi, _)| pi + 1 == i)
            .map(|&(_, pj)| pj + 1)
            .filter(|&j| j < reference.len() && !used[j] && &reference[j] == tok);
        let chosen =
            continued.or_else(|| (0..reference.len()).find(|&j| !used[j] && &reference[j] == tok));
        if let Some(j) = chosen {
            used[j] = true;
            pairs.push((i, j));
        }
    }
    pairs
}

fn count_chunks(pairs: &[(usize, usize)]) -> usize {
    if pairs.is_empty() {
        return 0;
    }
    1 + pairs
        .windows(2)
        .filter(|w| !(w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1))
        .count()
}

/// METEOR without stemming or synonymy: harmonic F-mean weighted towards
/// recall, discounted by a fragmentation penalty.
pub fn meteor_lite(candidate: &TokenSequence, reference: &TokenSequence) -> f64 {
    if candidate.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let pairs = align_unigrams(&candidate.tokens, &reference.tokens);
    let matches = pairs.len();
    if matches == 0 {
        return 0.0;
    }
    let p = matches as f64 / candidate.len() as f64;
    let r = matches as f64 / reference.len() as f64;
    let f_mean = p * r / (METEOR_ALPHA * p + (1.0 - METEOR_ALPHA) * r);
    let frag = count_chunks(&pairs) as f64 / matches as f64;
    let penalty = METEOR_GAMMA * libm::pow(frag, METEOR_BETA);
    100.0 * f_mean * (1.0 - penalty)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct VqaScores {
    /// Present for closed questions only.
    pub close_accuracy: Option<f64>,
    pub token_recall: f64,
    pub token_f1: f64,
}

fn multiset_overlap(a: &[String], b: &[String]) -> usize {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for t in b {
        *counts.entry(t.as_str()).or_insert(0) += 1;
    }
    let mut overlap = 0;
    for t in a {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    overlap
}

pub fn vqa_scores(candidate: &TokenSequence, reference: &TokenSequence, closed: bool) -> VqaScores {
    if reference.is_empty() {
        return VqaScores {
            close_accuracy: closed.then_some(0.0),
            ..VqaScores::default()
        };
    }
    let overlap = multiset_overlap(&candidate.tokens, &reference.tokens) as f64;
    let recall = overlap / reference.len() as f64;
    let precision = if candidate.is_empty() {
        0.0
    } else {
        overlap / candidate.len() as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    let close_accuracy = closed.then(|| {
        if candidate.tokens == reference.tokens {
            100.0
        } else {
            0.0
        }
    });
    VqaScores {
        close_accuracy,
        token_recall: 100.0 * recall,
        token_f1: 100.0 * f1,
    }
}

/// All text scores for one candidate/reference pair, as percentages.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct TextScores {
    pub bleu1: f64,
    pub bleu4: f64,
    pub rouge_l: f64,
    pub meteor: f64,
    pub token_f1: f64,
    pub token_recall: f64,
    pub close_accuracy: Option<f64>,
}

/// `closed` is `Some` for question answering records; it selects whether an
/// exact-match accuracy is reported.
pub fn score_text(
    candidate: &str,
    reference: &str,
    language: Language,
    closed: Option<bool>,
) -> TextScores {
    let cand = tokenize(candidate, language);
    let refs = tokenize(reference, language);
    let vqa = vqa_scores(&cand, &refs, closed.unwrap_or(false));
    TextScores {
        bleu1: bleu(&cand, &refs, 1),
        bleu4: bleu(&cand, &refs, 4),
        rouge_l: rouge_l(&cand, &refs),
        meteor: meteor_lite(&cand, &refs),
        token_f1: vqa.token_f1,
        token_recall: vqa.token_recall,
        close_accuracy: vqa.close_accuracy,
    }
}
