//! Detection to ground-truth matching and average precision.
//!
//! Keypoint metrics follow the COCO-style protocol: per image, detections are matched
//! greedily in descending score order, AP is computed per similarity threshold, and
//! mAP averages AP over the thresholds (0.50:0.05:0.95 by default). Oriented boxes use
//! the VOC protocol at a single IoU threshold.
//!
//! Ground-truth objects whose similarity is undefined for a metric (e.g. a leaf without
//! an annotated stem under the stem subset) act as ignore regions: they are not counted
//! as positives, and a detection that finds no regular match in an image that contains
//! such an object is dropped instead of being scored as a false positive.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{rotated_iou, OrientedBox, Point2};
use crate::metrics::{object_scale, KeypointSimilarity, OksParams, PolylinePrediction, Subset};
use crate::par;
use crate::polyline::GuidedPolyline;

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub image_id: String,
    /// Confidence in `[0, 1]`.
    pub score: f64,
    pub keypoints: Option<PolylinePrediction>,
    pub obb: Option<OrientedBox>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthObject {
    pub image_id: String,
    pub polyline: GuidedPolyline,
    /// `None` when no box could be derived; such objects are ignored by the box metric.
    pub obb: Option<OrientedBox>,
    pub blade_polygon: Vec<Point2>,
}

/// Ground truth for a whole dataset, including images without any object.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruthSet {
    pub image_ids: Vec<String>,
    pub objects: Vec<GroundTruthObject>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    /// Area under the interpolated precision envelope (VOC 2010+).
    AllPoint,
    /// Mean of the envelope at recall 0, 0.1, ..., 1 (VOC 2007, DOTA devkit option).
    ElevenPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub thresholds: Vec<f64>,
    pub subsets: Vec<Subset>,
    pub oks_params: OksParams,
    pub obb_iou_threshold: f64,
    pub voc_interpolation: Interpolation,
}

/// `0.50, 0.55, ..., 0.95`, built from integer percentages so that every value is the
/// closest double to its decimal.
pub fn coco_thresholds() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            thresholds: coco_thresholds(),
            subsets: Subset::EVERY.to_vec(),
            oks_params: OksParams::default(),
            obb_iou_threshold: 0.5,
            voc_interpolation: Interpolation::AllPoint,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thresholds.is_empty() {
            return Err(Error::InvalidConfig("threshold list is empty".into()));
        }
        if let Some(t) = self.thresholds.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
            return Err(Error::InvalidConfig(format!(
                "threshold {t} outside (0, 1)"
            )));
        }
        if self.thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig(
                "thresholds must be strictly increasing".into(),
            ));
        }
        if !(self.obb_iou_threshold > 0.0 && self.obb_iou_threshold <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "box IoU threshold {} outside (0, 1]",
                self.obb_iou_threshold
            )));
        }
        self.oks_params.validate()
    }
}

/// Matching result for one detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchOutcome {
    TruePositive(usize),
    FalsePositive,
    /// Dropped from scoring because it could only correspond to an ignore region.
    Ignored,
}

/// Greedy matching on a precomputed similarity matrix (`similarity[det][gt]`).
///
/// Detections are visited by descending score, ties by ascending index. Each takes the
/// unmatched ground truth with the highest defined similarity (ties by lower index) if
/// that similarity reaches `threshold`. Outcomes are returned in detection order.
pub fn greedy_match(
    scores: &[f64],
    similarity: &[Vec<Option<f64>>],
    threshold: f64,
) -> Vec<MatchOutcome> {
    debug_assert_eq!(scores.len(), similarity.len());
    let n_gt = similarity.first().map_or(0, Vec::len);
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut taken = vec![false; n_gt];
    let mut outcomes = vec![MatchOutcome::FalsePositive; scores.len()];
    for d in order {
        let row = &similarity[d];
        let mut best: Option<(usize, f64)> = None;
        for (g, sim) in row.iter().enumerate() {
            if taken[g] {
                continue;
            }
            if let Some(s) = *sim {
                if best.is_none_or(|(_, b)| s > b) {
                    best = Some((g, s));
                }
            }
        }
        outcomes[d] = match best {
            Some((g, s)) if s >= threshold => {
                taken[g] = true;
                MatchOutcome::TruePositive(g)
            }
            _ if row.iter().any(Option::is_none) => MatchOutcome::Ignored,
            _ => MatchOutcome::FalsePositive,
        };
    }
    outcomes
}

/// Greedy matching of the detections and ground truth of a single image.
pub fn match_detections<F>(
    dets: &[Detection],
    gts: &[GroundTruthObject],
    sim: F,
    threshold: f64,
) -> Result<Vec<MatchOutcome>>
where
    F: Fn(&Detection, &GroundTruthObject) -> Option<f64>,
{
    let mut ids = dets
        .iter()
        .map(|d| &d.image_id)
        .chain(gts.iter().map(|g| &g.image_id));
    if let Some(first) = ids.next() {
        if let Some(other) = ids.find(|id| *id != first) {
            return Err(Error::MixedImageIds(first.clone(), other.clone()));
        }
    }
    let scores: Vec<f64> = dets.iter().map(|d| d.score).collect();
    let matrix: Vec<Vec<Option<f64>>> = dets
        .iter()
        .map(|d| gts.iter().map(|g| sim(d, g)).collect())
        .collect();
    Ok(greedy_match(&scores, &matrix, threshold))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredLabel {
    pub score: f64,
    pub true_positive: bool,
}

/// VOC average precision of scored TP/FP labels against `num_gt` positives.
///
/// Labels are sorted by descending score; equal scores keep their input order.
/// Returns `None` when there are neither positives nor detections. The value is the
/// correctly rounded result of exact rational arithmetic whenever the intermediate
/// fractions fit in 128 bits, and a plain floating-point sum beyond that.
pub fn average_precision(
    labels: &[ScoredLabel],
    num_gt: usize,
    interpolation: Interpolation,
) -> Option<f64> {
    if num_gt == 0 {
        return if labels.is_empty() { None } else { Some(0.0) };
    }
    let mut sorted = labels.to_vec();
    sorted.sort_by(|a, b| b.score.total_cmp(&a.score));
    let tp: Vec<usize> = sorted
        .iter()
        .scan(0, |acc, l| {
            *acc += usize::from(l.true_positive);
            Some(*acc)
        })
        .collect();
    Some(
        exact_ap(&sorted, &tp, num_gt, interpolation)
            .unwrap_or_else(|| float_ap(&sorted, &tp, num_gt, interpolation)),
    )
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Non-negative fraction in lowest terms; arithmetic returns `None` on overflow.
#[derive(Clone, Copy)]
struct Frac {
    num: u128,
    den: u128,
}

impl Frac {
    const ZERO: Frac = Frac { num: 0, den: 1 };

    fn new(num: u128, den: u128) -> Frac {
        let g = gcd(num, den).max(1);
        Frac {
            num: num / g,
            den: den / g,
        }
    }

    fn add(self, o: Frac) -> Option<Frac> {
        let g = gcd(self.den, o.den);
        let num = self
            .num
            .checked_mul(o.den / g)?
            .checked_add(o.num.checked_mul(self.den / g)?)?;
        Some(Frac::new(num, self.den.checked_mul(o.den / g)?))
    }

    fn max(self, o: Frac) -> Frac {
        // Operands are precisions tp / rank with both parts below 2^64.
        if self.num * o.den >= o.num * self.den {
            self
        } else {
            o
        }
    }

    fn div_int(self, k: u128) -> Option<Frac> {
        Some(Frac::new(self.num, self.den.checked_mul(k)?))
    }

    fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

fn exact_ap(
    sorted: &[ScoredLabel],
    tp: &[usize],
    num_gt: usize,
    interpolation: Interpolation,
) -> Option<f64> {
    let n = sorted.len();
    // Precision envelope: best precision at this rank or any later one.
    let mut envelope = vec![Frac::ZERO; n + 1];
    for i in (0..n).rev() {
        envelope[i] = Frac::new(tp[i] as u128, (i + 1) as u128).max(envelope[i + 1]);
    }
    let sum = match interpolation {
        Interpolation::AllPoint => {
            let mut acc = Frac::ZERO;
            for i in (0..n).filter(|&i| sorted[i].true_positive) {
                acc = acc.add(envelope[i])?;
            }
            acc.div_int(num_gt as u128)?
        }
        Interpolation::ElevenPoint => {
            let mut acc = Frac::ZERO;
            for k in 0..=10u128 {
                // First rank whose recall tp / num_gt reaches k / 10.
                if let Some(i) = (0..n).find(|&i| tp[i] as u128 * 10 >= k * num_gt as u128) {
                    acc = acc.add(envelope[i])?;
                }
            }
            acc.div_int(11)?
        }
    };
    Some(sum.to_f64())
}

fn float_ap(
    sorted: &[ScoredLabel],
    tp: &[usize],
    num_gt: usize,
    interpolation: Interpolation,
) -> f64 {
    let recall: Vec<f64> = tp.iter().map(|&t| t as f64 / num_gt as f64).collect();
    let precision: Vec<f64> = tp
        .iter()
        .enumerate()
        .map(|(i, &t)| t as f64 / (i + 1) as f64)
        .collect();
    let mut envelope = precision.clone();
    envelope.push(0.0);
    for i in (0..sorted.len()).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    match interpolation {
        Interpolation::AllPoint => {
            (0..sorted.len())
                .filter(|&i| sorted[i].true_positive)
                .map(|i| envelope[i])
                .sum::<f64>()
                / num_gt as f64
        }
        Interpolation::ElevenPoint => {
            (0..=10)
                .map(|k| {
                    let t = k as f64 / 10.0;
                    recall
                        .iter()
                        .position(|&r| r >= t)
                        .map_or(0.0, |i| envelope[i])
                })
                .sum::<f64>()
                / 11.0
        }
    }
}

/// A single metric evaluated by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MetricKey {
    Keypoint(KeypointSimilarity, Subset),
    Obb,
}

impl MetricKey {
    pub fn metric_name(self) -> &'static str {
        match self {
            MetricKey::Keypoint(sim, _) => sim.name(),
            MetricKey::Obb => "obb",
        }
    }

    pub fn subset(self) -> Subset {
        match self {
            MetricKey::Keypoint(_, s) => s,
            MetricKey::Obb => Subset::All,
        }
    }
}

/// AP per threshold for one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApTable {
    pub metric: String,
    pub subset: Subset,
    pub thresholds: Vec<f64>,
    /// `null` where AP is undefined (no positives and no detections).
    pub ap: Vec<Option<f64>>,
    pub mean: Option<f64>,
    pub num_gt: usize,
    pub num_scored_detections: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SubsetScores {
    pub all: Option<f64>,
    pub stem: Option<f64>,
    pub vein: Option<f64>,
    #[serde(rename = "true")]
    pub true_: Option<f64>,
    pub pseudo: Option<f64>,
}

impl SubsetScores {
    pub fn get(&self, subset: Subset) -> Option<f64> {
        match subset {
            Subset::All => self.all,
            Subset::Stem => self.stem,
            Subset::Vein => self.vein,
            Subset::True => self.true_,
            Subset::Pseudo => self.pseudo,
        }
    }

    fn set(&mut self, subset: Subset, value: Option<f64>) {
        let slot = match subset {
            Subset::All => &mut self.all,
            Subset::Stem => &mut self.stem,
            Subset::Vein => &mut self.vein,
            Subset::True => &mut self.true_,
            Subset::Pseudo => &mut self.pseudo,
        };
        *slot = value;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EvalCounts {
    pub images: usize,
    pub gt_objects: usize,
    pub detections: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub map_poks: SubsetScores,
    pub map_oks: Option<f64>,
    pub map50_obb: Option<f64>,
    pub ap_tables: Vec<ApTable>,
    pub counts: EvalCounts,
}

struct ImageBucket<'a> {
    gts: Vec<&'a GroundTruthObject>,
    dets: Vec<&'a Detection>,
}

/// Labels of one metric in one image: per threshold, in detection input order.
struct ImageMetric {
    labels: Vec<Vec<ScoredLabel>>,
    num_gt: usize,
}

fn validate_detections(gt: &GroundTruthSet, dets: &[Detection]) -> Result<()> {
    for (i, d) in dets.iter().enumerate() {
        if !(d.score.is_finite() && (0.0..=1.0).contains(&d.score)) {
            return Err(Error::Validation {
                file: "<predictions>".into(),
                path: format!("[{i}].score"),
                message: format!("score {} outside [0, 1]", d.score),
            });
        }
        if d.keypoints.is_none() && d.obb.is_none() {
            return Err(Error::Validation {
                file: "<predictions>".into(),
                path: format!("[{i}]"),
                message: "detection has neither keypoints nor a box".into(),
            });
        }
    }
    let known: BTreeSet<&str> = gt
        .image_ids
        .iter()
        .map(String::as_str)
        .chain(gt.objects.iter().map(|o| o.image_id.as_str()))
        .collect();
    let unknown: BTreeSet<&str> = dets
        .iter()
        .map(|d| d.image_id.as_str())
        .filter(|id| !known.contains(id))
        .collect();
    if !unknown.is_empty() {
        return Err(Error::UnknownImages(
            unknown.into_iter().map(str::to_owned).collect(),
        ));
    }
    Ok(())
}

fn buckets<'a>(gt: &'a GroundTruthSet, dets: &'a [Detection]) -> Vec<ImageBucket<'a>> {
    let mut map: BTreeMap<&str, ImageBucket<'a>> = BTreeMap::new();
    for id in &gt.image_ids {
        map.entry(id).or_insert_with(|| ImageBucket {
            gts: vec![],
            dets: vec![],
        });
    }
    for o in &gt.objects {
        map.entry(&o.image_id)
            .or_insert_with(|| ImageBucket {
                gts: vec![],
                dets: vec![],
            })
            .gts
            .push(o);
    }
    for d in dets {
        map.entry(&d.image_id)
            .or_insert_with(|| ImageBucket {
                gts: vec![],
                dets: vec![],
            })
            .dets
            .push(d);
    }
    map.into_values().collect()
}

fn thresholds_for(key: MetricKey, config: &EvalConfig) -> Vec<f64> {
    match key {
        MetricKey::Keypoint(..) => config.thresholds.clone(),
        MetricKey::Obb => vec![config.obb_iou_threshold],
    }
}

fn evaluate_image(
    bucket: &ImageBucket<'_>,
    keys: &[MetricKey],
    config: &EvalConfig,
) -> Result<Vec<ImageMetric>> {
    let scales: Vec<f64> = bucket
        .gts
        .iter()
        .map(|g| object_scale(&g.polyline, g.obb.as_ref(), &config.oks_params))
        .collect();

    let mut out = Vec::with_capacity(keys.len());
    for &key in keys {
        let (rows, matrix, num_gt): (Vec<&Detection>, Vec<Vec<Option<f64>>>, usize) = match key {
            MetricKey::Keypoint(sim, subset) => {
                let rows: Vec<&Detection> = bucket
                    .dets
                    .iter()
                    .copied()
                    .filter(|d| d.keypoints.is_some())
                    .collect();
                let mut matrix = Vec::with_capacity(rows.len());
                for d in &rows {
                    let pred = d.keypoints.as_ref().expect("filtered above");
                    let row = bucket
                        .gts
                        .iter()
                        .zip(&scales)
                        .map(|(g, &s)| sim.score(pred, &g.polyline, subset, &config.oks_params, s))
                        .collect::<Result<Vec<_>>>()?;
                    matrix.push(row);
                }
                let num_gt = bucket
                    .gts
                    .iter()
                    .filter(|g| subset.is_defined_for(&g.polyline))
                    .count();
                (rows, matrix, num_gt)
            }
            MetricKey::Obb => {
                let rows: Vec<&Detection> = bucket
                    .dets
                    .iter()
                    .copied()
                    .filter(|d| d.obb.is_some())
                    .collect();
                let mut matrix = Vec::with_capacity(rows.len());
                for d in &rows {
                    let pred = d.obb.as_ref().expect("filtered above");
                    let row = bucket
                        .gts
                        .iter()
                        .map(|g| g.obb.as_ref().map(|b| rotated_iou(pred, b)).transpose())
                        .collect::<Result<Vec<_>>>()?;
                    matrix.push(row);
                }
                let num_gt = bucket.gts.iter().filter(|g| g.obb.is_some()).count();
                (rows, matrix, num_gt)
            }
        };
        let scores: Vec<f64> = rows.iter().map(|d| d.score).collect();
        let labels = thresholds_for(key, config)
            .into_iter()
            .map(|t| {
                greedy_match(&scores, &matrix, t)
                    .into_iter()
                    .zip(&scores)
                    .filter_map(|(outcome, &score)| match outcome {
                        MatchOutcome::TruePositive(_) => Some(ScoredLabel {
                            score,
                            true_positive: true,
                        }),
                        MatchOutcome::FalsePositive => Some(ScoredLabel {
                            score,
                            true_positive: false,
                        }),
                        MatchOutcome::Ignored => None,
                    })
                    .collect()
            })
            .collect();
        out.push(ImageMetric { labels, num_gt });
    }
    Ok(out)
}

fn run(
    gt: &GroundTruthSet,
    dets: &[Detection],
    config: &EvalConfig,
    keys: &[MetricKey],
) -> Result<Vec<ApTable>> {
    config.validate()?;
    validate_detections(gt, dets)?;
    let buckets = buckets(gt, dets);
    let per_image = par::map(&buckets, |b| evaluate_image(b, keys, config))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let tables = keys
        .iter()
        .enumerate()
        .map(|(k, &key)| {
            let thresholds = thresholds_for(key, config);
            let num_gt: usize = per_image.iter().map(|img| img[k].num_gt).sum();
            let mut ap = Vec::with_capacity(thresholds.len());
            let mut scored = Vec::with_capacity(thresholds.len());
            for t in 0..thresholds.len() {
                // Concatenated in image order, then detection order: the tie-break for equal scores.
                let labels: Vec<ScoredLabel> = per_image
                    .iter()
                    .flat_map(|img| img[k].labels[t].iter().copied())
                    .collect();
                scored.push(labels.len());
                ap.push(average_precision(&labels, num_gt, config.voc_interpolation));
            }
            let defined: Vec<f64> = ap.iter().flatten().copied().collect();
            let mean =
                (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
            ApTable {
                metric: key.metric_name().to_owned(),
                subset: key.subset(),
                thresholds,
                ap,
                mean,
                num_gt,
                num_scored_detections: scored,
            }
        })
        .collect();
    Ok(tables)
}

/// mAP of a keypoint similarity over the configured thresholds for one subset.
pub fn map_over_thresholds(
    gt: &GroundTruthSet,
    dets: &[Detection],
    sim: KeypointSimilarity,
    subset: Subset,
    config: &EvalConfig,
) -> Result<Option<f64>> {
    let tables = run(gt, dets, config, &[MetricKey::Keypoint(sim, subset)])?;
    Ok(tables[0].mean)
}

/// VOC AP of oriented boxes at `config.obb_iou_threshold` (0.5 by default).
pub fn obb_map50(
    gt: &GroundTruthSet,
    dets: &[Detection],
    config: &EvalConfig,
) -> Result<Option<f64>> {
    let tables = run(gt, dets, config, &[MetricKey::Obb])?;
    Ok(tables[0].mean)
}

/// POKS mAP for every configured subset, OKS mAP on all keypoints, and box mAP.
pub fn evaluate_dataset(
    gt: &GroundTruthSet,
    dets: &[Detection],
    config: &EvalConfig,
) -> Result<EvalReport> {
    let mut keys: Vec<MetricKey> = config
        .subsets
        .iter()
        .map(|&s| MetricKey::Keypoint(KeypointSimilarity::Poks, s))
        .collect();
    keys.push(MetricKey::Keypoint(KeypointSimilarity::Oks, Subset::All));
    keys.push(MetricKey::Obb);

    let tables = run(gt, dets, config, &keys)?;
    let mut map_poks = SubsetScores::default();
    for (key, table) in keys.iter().zip(&tables) {
        if let MetricKey::Keypoint(KeypointSimilarity::Poks, s) = key {
            map_poks.set(*s, table.mean);
        }
    }
    let n = tables.len();
    let images: BTreeSet<&str> = gt
        .image_ids
        .iter()
        .map(String::as_str)
        .chain(gt.objects.iter().map(|o| o.image_id.as_str()))
        .collect();
    Ok(EvalReport {
        map_poks,
        map_oks: tables[n - 2].mean,
        map50_obb: tables[n - 1].mean,
        ap_tables: tables,
        counts: EvalCounts {
            images: images.len(),
            gt_objects: gt.objects.len(),
            detections: dets.len(),
        },
    })
}
