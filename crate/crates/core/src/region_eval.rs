//! Region-aligned evaluation of predicted object-region pairs.
//!
//! Both sides are flattened into unit pairs (one object name, one box), the
//! unit pairs are matched by IoU with [`hungarian_match`], and each matched
//! pair is checked for a correct object name, a correct region, and both.
//! Precision divides by the number of predicted unit pairs, recall by the
//! number of reference unit pairs.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::assignment::{hungarian_match, ScoreMatrix};
use crate::geometry::{iou, BBox};
use crate::markup::ObjectRegionPair;

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("reference holds no object-region pairs")]
    EmptyReference,
    #[error("no samples to aggregate")]
    EmptyCorpus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum TaskKind {
    SingleObjectSingleRegion,
    SingleObjectMultiRegion,
    MultiObjectSingleRegion,
    MultiObjectMultiRegion,
}

impl TaskKind {
    pub const ALL: [TaskKind; 4] = [
        TaskKind::SingleObjectSingleRegion,
        TaskKind::SingleObjectMultiRegion,
        TaskKind::MultiObjectSingleRegion,
        TaskKind::MultiObjectMultiRegion,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::SingleObjectSingleRegion => "single_object_single_region",
            TaskKind::SingleObjectMultiRegion => "single_object_multi_region",
            TaskKind::MultiObjectSingleRegion => "multi_object_single_region",
            TaskKind::MultiObjectMultiRegion => "multi_object_multi_region",
        }
    }
}

/// Object-name normalization: lowercase, trim, collapse internal whitespace,
/// then map through an optional synonym table (keys are normalized too).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TextNormalizer {
    synonyms: BTreeMap<String, String>,
}

impl TextNormalizer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_synonyms<I, K, V>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let synonyms = pairs
            .into_iter()
            .map(|(k, v)| (Self::basic(k.as_ref()), Self::basic(v.as_ref())))
            .collect();
        Self { synonyms }
    }

    fn basic(text: &str) -> String {
        let mut out = String::with_capacity(text.len());
        for word in text.split_whitespace() {
            if !out.is_empty() {
                out.push(' ');
            }
            for c in word.chars() {
                out.extend(c.to_lowercase());
            }
        }
        out
    }

    pub fn normalize(&self, text: &str) -> String {
        let base = Self::basic(text);
        match self.synonyms.get(&base) {
            Some(canonical) => canonical.clone(),
            None => base,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    /// A matched region counts as detected when its IoU is at least this.
    pub iou_threshold: f64,
    pub normalizer: TextNormalizer,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            normalizer: TextNormalizer::default(),
        }
    }
}

/// Three-dimensional scores for one sample.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct SampleMetrics {
    pub task: TaskKind,
    pub object_precision: f64,
    pub object_recall: f64,
    pub object_f1: f64,
    pub region_precision: f64,
    pub region_recall: f64,
    pub region_f1: f64,
    pub alignment_precision: f64,
    pub alignment_recall: f64,
    pub alignment_f1: f64,
    pub mean_iou: f64,
    /// Only set for single-object single-region references.
    pub region_accuracy: Option<f64>,
    pub predicted: usize,
    pub reference: usize,
    pub detected_objects: usize,
    pub detected_regions: usize,
    pub aligned_pairs: usize,
}

fn ratio(count: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        count as f64 / total as f64
    }
}

fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

pub fn classify_task(
    reference: &[ObjectRegionPair],
    normalizer: &TextNormalizer,
) -> Result<TaskKind, EvalError> {
    if reference.iter().all(|p| p.regions.is_empty()) {
        return Err(EvalError::EmptyReference);
    }
    let mut regions_per_object: BTreeMap<String, usize> = BTreeMap::new();
    for pair in reference {
        *regions_per_object
            .entry(normalizer.normalize(&pair.object))
            .or_default() += pair.regions.len();
    }
    let single_object = regions_per_object.len() == 1;
    let single_region = regions_per_object.values().all(|&n| n == 1);
    Ok(match (single_object, single_region) {
        (true, true) => TaskKind::SingleObjectSingleRegion,
        (true, false) => TaskKind::SingleObjectMultiRegion,
        (false, true) => TaskKind::MultiObjectSingleRegion,
        (false, false) => TaskKind::MultiObjectMultiRegion,
    })
}

fn flatten(pairs: &[ObjectRegionPair], normalizer: &TextNormalizer) -> Vec<(String, BBox)> {
    pairs
        .iter()
        .flat_map(|p| {
            let name = normalizer.normalize(&p.object);
            p.regions.iter().map(move |b| (name.clone(), *b))
        })
        .collect()
}

pub fn eval_sample(
    prediction: &[ObjectRegionPair],
    reference: &[ObjectRegionPair],
    options: &EvalOptions,
) -> Result<SampleMetrics, EvalError> {
    let task = classify_task(reference, &options.normalizer)?;
    let pred = flatten(prediction, &options.normalizer);
    let gt = flatten(reference, &options.normalizer);
    let (n, m) = (pred.len(), gt.len());

    let scores = ScoreMatrix::from_fn(n, m, |r, c| iou(&pred[r].1, &gt[c].1));
    let assignment = hungarian_match(&scores);

    let (mut objects, mut regions, mut aligned) = (0, 0, 0);
    let mut iou_sum = 0.0;
    for mt in &assignment.matches {
        let name_ok = pred[mt.prediction].0 == gt[mt.ground_truth].0;
        let region_ok = mt.score >= options.iou_threshold;
        objects += usize::from(name_ok);
        regions += usize::from(region_ok);
        aligned += usize::from(name_ok && region_ok);
        iou_sum += mt.score;
    }

    let region_accuracy = (task == TaskKind::SingleObjectSingleRegion).then(|| {
        let hit = assignment
            .matches
            .first()
            .is_some_and(|mt| mt.score >= options.iou_threshold);
        if hit {
            1.0
        } else {
            0.0
        }
    });

    let (op, or) = (ratio(objects, n), ratio(objects, m));
    let (rp, rr) = (ratio(regions, n), ratio(regions, m));
    let (ap, ar) = (ratio(aligned, n), ratio(aligned, m));
    let mean_iou = if n == 0 {
        0.0
    } else {
        iou_sum / n.max(m) as f64
    };

    Ok(SampleMetrics {
        task,
        object_precision: op,
        object_recall: or,
        object_f1: f1(op, or),
        region_precision: rp,
        region_recall: rr,
        region_f1: f1(rp, rr),
        alignment_precision: ap,
        alignment_recall: ar,
        alignment_f1: f1(ap, ar),
        mean_iou,
        region_accuracy,
        predicted: n,
        reference: m,
        detected_objects: objects,
        detected_regions: regions,
        aligned_pairs: aligned,
    })
}

/// Unweighted means over a set of samples.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct MetricMeans {
    pub samples: usize,
    pub object_precision: f64,
    pub object_recall: f64,
    pub object_f1: f64,
    pub region_precision: f64,
    pub region_recall: f64,
    pub region_f1: f64,
    pub alignment_precision: f64,
    pub alignment_recall: f64,
    pub alignment_f1: f64,
    pub mean_iou: f64,
    /// Mean over the samples that carry an accuracy, if any do.
    pub region_accuracy: Option<f64>,
}

impl MetricMeans {
    fn from_samples<'a>(samples: impl Iterator<Item = &'a SampleMetrics>) -> Self {
        let mut acc = MetricMeans::default();
        let mut accuracy_sum = 0.0;
        let mut accuracy_count = 0usize;
        for s in samples {
            acc.samples += 1;
            acc.object_precision += s.object_precision;
            acc.object_recall += s.object_recall;
            acc.object_f1 += s.object_f1;
            acc.region_precision += s.region_precision;
            acc.region_recall += s.region_recall;
            acc.region_f1 += s.region_f1;
            acc.alignment_precision += s.alignment_precision;
            acc.alignment_recall += s.alignment_recall;
            acc.alignment_f1 += s.alignment_f1;
            acc.mean_iou += s.mean_iou;
            if let Some(a) = s.region_accuracy {
                accuracy_sum += a;
                accuracy_count += 1;
            }
        }
        if acc.samples > 0 {
            let k = acc.samples as f64;
            for field in [
                &mut acc.object_precision,
                &mut acc.object_recall,
                &mut acc.object_f1,
                &mut acc.region_precision,
                &mut acc.region_recall,
                &mut acc.region_f1,
                &mut acc.alignment_precision,
                &mut acc.alignment_recall,
                &mut acc.alignment_f1,
                &mut acc.mean_iou,
            ] {
                *field /= k;
            }
        }
        if accuracy_count > 0 {
            acc.region_accuracy = Some(accuracy_sum / accuracy_count as f64);
        }
        acc
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct CorpusMetrics {
    pub overall: MetricMeans,
    /// Only task kinds with at least one sample, in [`TaskKind::ALL`] order.
    pub by_task: Vec<(TaskKind, MetricMeans)>,
}

/// Macro average, summed in slice order.
pub fn aggregate(samples: &[SampleMetrics]) -> Result<CorpusMetrics, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let overall = MetricMeans::from_samples(samples.iter());
    let by_task = TaskKind::ALL
        .iter()
        .filter_map(|&kind| {
            let means = MetricMeans::from_samples(samples.iter().filter(|s| s.task == kind));
            (means.samples > 0).then_some((kind, means))
        })
        .collect();
    Ok(CorpusMetrics { overall, by_task })
}
