//! File formats: annotations, predictions, reports and raw tensors; splits and statistics.
//!
//! Annotation files look like
//!
//! ```json
//! {
//!   "images": [{"image_id": "a", "width": 640, "height": 480,
//!               "source": "inaturalist", "file_name": "a.jpg"}],
//!   "annotations": [{"image_id": "a",
//!                    "keypoints": [x0, y0, v0, x1, y1, v1, ...],
//!                    "blade_polygon": [x0, y0, x1, y1, ...],
//!                    "obb": [cx, cy, w_tl, w_br, h_tl, h_br, beta]}]
//! }
//! ```
//!
//! with 8 keypoint triplets for a leaf with visible stem and 5 otherwise, `v` being 1
//! for visible and 0 for absent. `blade_polygon` and `obb` are optional. Fields this
//! module does not know are kept and written back unchanged.
//!
//! Prediction files hold `{"predictions": [{"image_id", "score", "keypoints", "obb"}]}`
//! where `keypoints` lists eight `[x, y]` pairs or `null`s in full-layout slot order.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::codec::derive_leaf_obb;
use crate::error::{Error, Result};
use crate::eval::{
    evaluate_dataset, Detection, EvalConfig, EvalReport, GroundTruthObject, GroundTruthSet,
};
use crate::geometry::{OrientedBox, Point2};
use crate::heatmap::Heatmap;
use crate::metrics::PolylinePrediction;
use crate::polyline::{GuidedPolyline, Layout, NUM_SLOTS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Inaturalist,
    Roborumex,
}

impl Source {
    pub fn name(self) -> &'static str {
        match self {
            Source::Inaturalist => "inaturalist",
            Source::Roborumex => "roborumex",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    pub source: Source,
    pub file_name: String,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeafAnnotation {
    pub image_id: String,
    pub blade_polygon: Vec<Point2>,
    pub polyline: GuidedPolyline,
    pub obb: Option<OrientedBox>,
    pub extra: Map<String, Value>,
}

impl LeafAnnotation {
    pub fn stem_visible(&self) -> bool {
        self.polyline.layout() == Layout::Full8
    }

    /// The annotated box, or one derived from the polyline and blade.
    pub fn box_or_derived(&self) -> Option<OrientedBox> {
        self.obb
            .or_else(|| derive_leaf_obb(&self.polyline, &self.blade_polygon).ok())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub images: Vec<ImageRecord>,
    pub annotations: Vec<LeafAnnotation>,
    pub extra: Map<String, Value>,
}

impl Dataset {
    pub fn ground_truth(&self) -> GroundTruthSet {
        GroundTruthSet {
            image_ids: self.images.iter().map(|i| i.image_id.clone()).collect(),
            objects: self
                .annotations
                .iter()
                .map(|a| GroundTruthObject {
                    image_id: a.image_id.clone(),
                    polyline: a.polyline.clone(),
                    obb: a.box_or_derived(),
                    blade_polygon: a.blade_polygon.clone(),
                })
                .collect(),
        }
    }

    pub fn image(&self, image_id: &str) -> Option<&ImageRecord> {
        self.images.iter().find(|i| i.image_id == image_id)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RawDataset {
    images: Vec<ImageRecord>,
    annotations: Vec<RawAnnotation>,
    #[serde(flatten)]
    extra: Map<String, Value>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawAnnotation {
    image_id: String,
    keypoints: Vec<f64>,
    #[serde(default)]
    blade_polygon: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    obb: Option<OrientedBox>,
    #[serde(flatten)]
    extra: Map<String, Value>,
}

fn file_label(path: &Path) -> String {
    path.display().to_string()
}

fn invalid(path: &Path, at: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Validation {
        file: file_label(path),
        path: at.into(),
        message: message.into(),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Parses JSON, reporting schema errors with the JSON path of the offending value.
fn parse_json<T: DeserializeOwned>(path: &Path, text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let at = e.path().to_string();
        invalid(path, at, e.into_inner().to_string())
    })
}

fn to_json_pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("in-memory serialization cannot fail");
    s.push('\n');
    s
}

fn polyline_from_triplets(values: &[f64]) -> std::result::Result<GuidedPolyline, String> {
    if !values.len().is_multiple_of(3) {
        return Err(format!(
            "keypoint array length {} is not a multiple of 3",
            values.len()
        ));
    }
    let n = values.len() / 3;
    let layout = Layout::from_len(n).ok_or_else(|| {
        format!("{n} keypoints; a leaf has 8 keypoints when its stem is visible and 5 (vein only) otherwise")
    })?;
    let mut points = Vec::with_capacity(n);
    for (i, t) in values.chunks_exact(3).enumerate() {
        let visible = match t[2] {
            0.0 => false,
            1.0 => true,
            v => return Err(format!("keypoint {i} has visibility {v}, expected 0 or 1")),
        };
        points.push((Point2::new(t[0], t[1]), visible));
    }
    GuidedPolyline::new(layout, points).map_err(|e| e.to_string())
}

fn polyline_to_triplets(polyline: &GuidedPolyline) -> Vec<f64> {
    polyline
        .keypoints()
        .iter()
        .flat_map(|k| {
            [
                k.position.x,
                k.position.y,
                if k.visible { 1.0 } else { 0.0 },
            ]
        })
        .collect()
}

fn validate_dataset(raw: RawDataset, path: &Path) -> Result<Dataset> {
    let mut dims = BTreeMap::new();
    for (i, img) in raw.images.iter().enumerate() {
        if img.width == 0 || img.height == 0 {
            return Err(invalid(
                path,
                format!("images[{i}]"),
                "image dimensions must be positive",
            ));
        }
        if dims
            .insert(img.image_id.as_str(), (img.width, img.height))
            .is_some()
        {
            return Err(invalid(
                path,
                format!("images[{i}].image_id"),
                format!("duplicate image_id {:?}", img.image_id),
            ));
        }
    }

    let mut annotations = Vec::with_capacity(raw.annotations.len());
    for (i, a) in raw.annotations.iter().enumerate() {
        let &(w, h) = dims.get(a.image_id.as_str()).ok_or_else(|| {
            invalid(
                path,
                format!("annotations[{i}].image_id"),
                format!("unknown image_id {:?}", a.image_id),
            )
        })?;
        let polyline = polyline_from_triplets(&a.keypoints)
            .map_err(|m| invalid(path, format!("annotations[{i}].keypoints"), m))?;
        if a.blade_polygon.len() % 2 != 0 {
            return Err(invalid(
                path,
                format!("annotations[{i}].blade_polygon"),
                "polygon array must hold x, y pairs",
            ));
        }
        let blade_polygon: Vec<Point2> = a
            .blade_polygon
            .chunks_exact(2)
            .map(|c| Point2::new(c[0], c[1]))
            .collect();
        if let Some(j) = blade_polygon
            .iter()
            .position(|p| !(p.x >= 0.0 && p.y >= 0.0 && p.x <= w as f64 && p.y <= h as f64))
        {
            return Err(invalid(
                path,
                format!("annotations[{i}].blade_polygon[{}]", 2 * j),
                format!("vertex {j} lies outside the {w}x{h} image"),
            ));
        }
        annotations.push(LeafAnnotation {
            image_id: a.image_id.clone(),
            blade_polygon,
            polyline,
            obb: a.obb,
            extra: a.extra.clone(),
        });
    }
    Ok(Dataset {
        images: raw.images,
        annotations,
        extra: raw.extra,
    })
}

/// Reads any JSON document, reporting schema errors with their JSON path.
pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    parse_json(path, &read_text(path)?)
}

pub fn load_annotations(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let raw: RawDataset = parse_json(path, &read_text(path)?)?;
    validate_dataset(raw, path)
}

pub fn dataset_to_json(dataset: &Dataset) -> String {
    let raw = RawDataset {
        images: dataset.images.clone(),
        annotations: dataset
            .annotations
            .iter()
            .map(|a| RawAnnotation {
                image_id: a.image_id.clone(),
                keypoints: polyline_to_triplets(&a.polyline),
                blade_polygon: a.blade_polygon.iter().flat_map(|p| [p.x, p.y]).collect(),
                obb: a.obb,
                extra: a.extra.clone(),
            })
            .collect(),
        extra: dataset.extra.clone(),
    };
    to_json_pretty(&raw)
}

pub fn write_annotations(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &dataset_to_json(dataset))
}

#[derive(Debug, Serialize, Deserialize)]
struct RawPredictions {
    predictions: Vec<RawPrediction>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawPrediction {
    image_id: String,
    score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    keypoints: Option<Vec<Option<[f64; 2]>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    obb: Option<OrientedBox>,
}

/// Reads a prediction file. Image ids are checked against the ground truth at evaluation.
pub fn load_predictions(path: impl AsRef<Path>) -> Result<Vec<Detection>> {
    let path = path.as_ref();
    let raw: RawPredictions = parse_json(path, &read_text(path)?)?;
    raw.predictions
        .into_iter()
        .enumerate()
        .map(|(i, p)| {
            if !(0.0..=1.0).contains(&p.score) {
                return Err(invalid(
                    path,
                    format!("predictions[{i}].score"),
                    format!("score {} outside [0, 1]", p.score),
                ));
            }
            let keypoints = match p.keypoints {
                None => None,
                Some(k) if k.len() == NUM_SLOTS => {
                    Some(PolylinePrediction(std::array::from_fn(|s| {
                        k[s].map(|[x, y]| Point2::new(x, y))
                    })))
                }
                Some(k) => {
                    return Err(invalid(
                        path,
                        format!("predictions[{i}].keypoints"),
                        format!("expected {NUM_SLOTS} slots, got {}", k.len()),
                    ))
                }
            };
            if keypoints.is_none() && p.obb.is_none() {
                return Err(invalid(
                    path,
                    format!("predictions[{i}]"),
                    "needs keypoints or obb",
                ));
            }
            Ok(Detection {
                image_id: p.image_id,
                score: p.score,
                keypoints,
                obb: p.obb,
            })
        })
        .collect()
}

pub fn predictions_to_json(dets: &[Detection]) -> String {
    let raw = RawPredictions {
        predictions: dets
            .iter()
            .map(|d| RawPrediction {
                image_id: d.image_id.clone(),
                score: d.score,
                keypoints: d
                    .keypoints
                    .as_ref()
                    .map(|k| k.0.iter().map(|p| p.map(|p| [p.x, p.y])).collect()),
                obb: d.obb,
            })
            .collect(),
    };
    to_json_pretty(&raw)
}

pub fn write_predictions(dets: &[Detection], path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &predictions_to_json(dets))
}

/// One detection per ground-truth object with score 1 and the exact annotation.
pub fn predictions_from_ground_truth(gt: &GroundTruthSet) -> Vec<Detection> {
    gt.objects
        .iter()
        .map(|o| Detection {
            image_id: o.image_id.clone(),
            score: 1.0,
            keypoints: Some(PolylinePrediction::from_ground_truth(&o.polyline)),
            obb: o.obb,
        })
        .collect()
}

#[derive(Debug, Deserialize)]
struct CocoFile {
    images: Vec<CocoImage>,
    annotations: Vec<CocoAnnotation>,
}

#[derive(Debug, Deserialize)]
struct CocoImage {
    id: Value,
    width: u32,
    height: u32,
    file_name: String,
    #[serde(default)]
    source: Option<Source>,
}

#[derive(Debug, Deserialize)]
struct CocoAnnotation {
    image_id: Value,
    keypoints: Vec<f64>,
    #[serde(default)]
    segmentation: Value,
}

fn coco_id(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Converts a COCO-keypoint file (`images[].id`, `annotations[].keypoints` as
/// `[x, y, v]` with `v` in {0, 1, 2}, polygon `segmentation`).
///
/// Visibility 1 and 2 both count as visible. The first segmentation polygon becomes the
/// blade polygon, clamped to the image; RLE masks are dropped. Images without a
/// `source` field get `default_source`.
pub fn import_coco(path: impl AsRef<Path>, default_source: Source) -> Result<Dataset> {
    let path = path.as_ref();
    let coco: CocoFile = parse_json(path, &read_text(path)?)?;
    let mut dims = BTreeMap::new();
    let images: Vec<ImageRecord> = coco
        .images
        .into_iter()
        .map(|img| {
            let image_id = coco_id(&img.id);
            dims.insert(image_id.clone(), (img.width as f64, img.height as f64));
            ImageRecord {
                image_id,
                width: img.width,
                height: img.height,
                source: img.source.unwrap_or(default_source),
                file_name: img.file_name,
                extra: Map::new(),
            }
        })
        .collect();
    let annotations = coco
        .annotations
        .into_iter()
        .map(|a| {
            let image_id = coco_id(&a.image_id);
            let (w, h) = dims
                .get(&image_id)
                .copied()
                .unwrap_or((f64::INFINITY, f64::INFINITY));
            let keypoints = a
                .keypoints
                .chunks(3)
                .flat_map(|t| match t {
                    [x, y, v] => [*x, *y, if *v > 0.0 { 1.0 } else { 0.0 }],
                    _ => [f64::NAN; 3],
                })
                .collect();
            let blade_polygon = a
                .segmentation
                .as_array()
                .and_then(|polys| polys.first())
                .and_then(Value::as_array)
                .map(|flat| {
                    flat.iter()
                        .filter_map(Value::as_f64)
                        .enumerate()
                        .map(|(i, v)| v.clamp(0.0, if i % 2 == 0 { w } else { h }))
                        .collect()
                })
                .unwrap_or_default();
            RawAnnotation {
                image_id,
                keypoints,
                blade_polygon,
                obb: None,
                extra: Map::new(),
            }
        })
        .collect();
    validate_dataset(
        RawDataset {
            images,
            annotations,
            extra: Map::new(),
        },
        path,
    )
}

/// Shuffles `ids` with a seeded generator and cuts them into three parts.
///
/// Part sizes start at `floor(n * ratio)`; leftover ids go one each to the parts with the
/// largest fractional remainder, earlier parts first on ties. The result does not depend
/// on the input order of `ids`.
pub fn split_dataset(ids: &[String], ratios: [f64; 3], seed: u64) -> Result<[Vec<String>; 3]> {
    if ratios.iter().any(|r| !(r.is_finite() && *r >= 0.0))
        || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(Error::InvalidConfig(format!(
            "split ratios {ratios:?} must be non-negative and sum to 1"
        )));
    }
    let mut sorted: Vec<String> = ids.to_vec();
    sorted.sort();
    if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::InvalidConfig(format!("duplicate id {:?}", w[0])));
    }
    sorted.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let sizes = split_sizes(sorted.len(), ratios);
    let mut rest = sorted.into_iter();
    Ok(sizes.map(|n| rest.by_ref().take(n).collect()))
}

fn split_sizes(n: usize, ratios: [f64; 3]) -> [usize; 3] {
    let exact = ratios.map(|r| n as f64 * r);
    let mut sizes = exact.map(|x| (x + 1e-9).floor() as usize);
    let frac = std::array::from_fn::<f64, 3, _>(|i| (exact[i] - sizes[i] as f64).max(0.0));
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        if (frac[a] - frac[b]).abs() <= 1e-9 {
            a.cmp(&b)
        } else {
            frac[b].total_cmp(&frac[a])
        }
    });
    let assigned: usize = sizes.iter().sum();
    for k in 0..n.saturating_sub(assigned) {
        sizes[order[k % 3]] += 1;
    }
    sizes
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SourceCounts {
    pub images: usize,
    pub leaves: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_images: usize,
    pub n_leaves: usize,
    pub n_stem_visible: usize,
    /// Fraction of leaves annotated with eight keypoints; 0 for an empty dataset.
    pub stem_visible_fraction: f64,
    pub per_source: BTreeMap<Source, SourceCounts>,
}

pub fn dataset_stats(dataset: &Dataset) -> DatasetStats {
    let mut per_source: BTreeMap<Source, SourceCounts> = BTreeMap::new();
    let mut source_of = BTreeMap::new();
    for img in &dataset.images {
        per_source.entry(img.source).or_default().images += 1;
        source_of.insert(img.image_id.as_str(), img.source);
    }
    for a in &dataset.annotations {
        if let Some(&s) = source_of.get(a.image_id.as_str()) {
            per_source.entry(s).or_default().leaves += 1;
        }
    }
    let n_leaves = dataset.annotations.len();
    let n_stem_visible = dataset
        .annotations
        .iter()
        .filter(|a| a.stem_visible())
        .count();
    DatasetStats {
        n_images: dataset.images.len(),
        n_leaves,
        n_stem_visible,
        stem_visible_fraction: if n_leaves == 0 {
            0.0
        } else {
            n_stem_visible as f64 / n_leaves as f64
        },
        per_source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
}

pub fn report_to_json(report: &EvalReport) -> String {
    to_json_pretty(report)
}

/// One row per (metric, subset): mean, positives, and `;`-joined thresholds and APs
/// (empty where undefined).
pub fn report_to_csv(report: &EvalReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    w.write_record(["metric", "subset", "mean", "num_gt", "thresholds", "ap"])
        .expect("in-memory csv write");
    for t in &report.ap_tables {
        let thresholds: Vec<String> = t.thresholds.iter().map(f64::to_string).collect();
        let ap: Vec<String> = t.ap.iter().map(|&a| fmt(a)).collect();
        w.write_record([
            t.metric.clone(),
            t.subset.name().to_string(),
            fmt(t.mean),
            t.num_gt.to_string(),
            thresholds.join(";"),
            ap.join(";"),
        ])
        .expect("in-memory csv write");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv output is utf-8")
}

pub fn write_report(
    report: &EvalReport,
    path: impl AsRef<Path>,
    format: ReportFormat,
) -> Result<()> {
    let text = match format {
        ReportFormat::Json => report_to_json(report),
        ReportFormat::Csv => report_to_csv(report),
    };
    write_text(path.as_ref(), &text)
}

/// Reads a JSON report.
pub fn read_report(path: impl AsRef<Path>) -> Result<EvalReport> {
    let path = path.as_ref();
    parse_json(path, &read_text(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorHeader {
    dtype: String,
    shape: [usize; 3],
    order: String,
    endianness: String,
    payload: String,
}

/// Payload path belonging to a tensor sidecar: the sidecar path with extension `bin`.
pub fn tensor_payload_path(sidecar: &Path) -> PathBuf {
    sidecar.with_extension("bin")
}

/// Writes `hm` as a JSON sidecar at `path` plus a raw little-endian f32 payload.
pub fn write_tensor(hm: &Heatmap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let payload = tensor_payload_path(path);
    let header = TensorHeader {
        dtype: "f32".into(),
        shape: hm.shape(),
        order: "row_major".into(),
        endianness: "little".into(),
        payload: payload
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
    };
    let bytes: Vec<u8> = hm.data().iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(&payload, bytes).map_err(|e| Error::io(&payload, e))?;
    write_text(path, &to_json_pretty(&header))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Heatmap> {
    let path = path.as_ref();
    let header: TensorHeader = parse_json(path, &read_text(path)?)?;
    if header.dtype != "f32" || header.order != "row_major" || header.endianness != "little" {
        return Err(invalid(
            path,
            ".",
            format!(
                "unsupported tensor layout {} / {} / {}",
                header.dtype, header.order, header.endianness
            ),
        ));
    }
    let payload = path.parent().unwrap_or(Path::new("")).join(&header.payload);
    let bytes = fs::read(&payload).map_err(|e| Error::io(&payload, e))?;
    if bytes.len() % 4 != 0 {
        return Err(invalid(
            &payload,
            ".",
            "payload length is not a multiple of 4",
        ));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let [c, h, w] = header.shape;
    Heatmap::from_raw(c, h, w, data)
}

/// Loads both files and evaluates them.
pub fn evaluate_files(
    gt_path: impl AsRef<Path>,
    pred_path: impl AsRef<Path>,
    config: &EvalConfig,
) -> Result<EvalReport> {
    config.validate()?;
    let gt = load_annotations(gt_path)?.ground_truth();
    let dets = load_predictions(pred_path)?;
    evaluate_dataset(&gt, &dets, config)
}

/// Ids of all images referenced by a set of detections but absent from the dataset.
pub fn unknown_image_ids(dataset: &Dataset, dets: &[Detection]) -> Vec<String> {
    let known: BTreeSet<&str> = dataset.images.iter().map(|i| i.image_id.as_str()).collect();
    let unknown: BTreeSet<&str> = dets
        .iter()
        .map(|d| d.image_id.as_str())
        .filter(|id| !known.contains(id))
        .collect();
    unknown.into_iter().map(String::from).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn write_json(dir: &Path, name: &str, v: &Value) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, serde_json::to_string(v).unwrap()).unwrap();
        p
    }

    fn minimal() -> Value {
        json!({
            "images": [{"image_id": "a", "width": 100, "height": 80,
                        "source": "roborumex", "file_name": "a.png",
                        "gnss": {"lat": 1.5}}],
            "annotations": [{"image_id": "a",
                             "keypoints": [10, 10, 1, 20, 10, 1, 30, 10, 0, 40, 10, 1, 50, 12, 1],
                             "blade_polygon": [5, 5, 60, 5, 60, 20, 5, 20],
                             "depth_ref": "d.npy"}]
        })
    }

    #[test]
    fn minimal_vein_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_json(dir.path(), "gt.json", &minimal());
        let ds = load_annotations(&path).unwrap();
        assert_eq!((ds.images.len(), ds.annotations.len()), (1, 1));
        assert!(!ds.annotations[0].stem_visible());
        assert_eq!(ds.annotations[0].polyline.layout(), Layout::Vein5);
        assert!(!ds.annotations[0].polyline.keypoints()[2].visible);
        assert!(ds.images[0].extra.contains_key("gnss"));

        let gt = ds.ground_truth();
        assert!(gt.objects[0].obb.is_some());

        let out = dir.path().join("out.json");
        write_annotations(&ds, &out).unwrap();
        let again = load_annotations(&out).unwrap();
        assert_eq!(again, ds);
        assert_eq!(again.annotations[0].extra["depth_ref"], json!("d.npy"));
    }

    #[test]
    fn rejections_carry_json_paths() {
        let dir = tempfile::tempdir().unwrap();
        let mut bad = minimal();
        bad["annotations"][0]["keypoints"] =
            json!([0, 0, 1, 1, 1, 1, 2, 2, 1, 3, 3, 1, 4, 4, 1, 5, 5, 1]);
        let err = load_annotations(write_json(dir.path(), "a.json", &bad)).unwrap_err();
        assert!(matches!(&err, Error::Validation { path, message, .. }
            if path == "annotations[0].keypoints" && message.contains("6 keypoints")));

        let mut bad = minimal();
        bad["images"][0]["width"] = json!("wide");
        let err = load_annotations(write_json(dir.path(), "b.json", &bad)).unwrap_err();
        assert!(matches!(&err, Error::Validation { path, .. } if path == "images[0].width"));

        let mut bad = minimal();
        bad["annotations"][0]["blade_polygon"] = json!([5, 5, 160, 5, 60, 20]);
        let err = load_annotations(write_json(dir.path(), "c.json", &bad)).unwrap_err();
        assert!(
            matches!(&err, Error::Validation { path, .. } if path == "annotations[0].blade_polygon[2]")
        );

        let mut bad = minimal();
        bad["images"] = json!([bad["images"][0].clone(), bad["images"][0].clone()]);
        assert!(load_annotations(write_json(dir.path(), "d.json", &bad)).is_err());

        let err = load_annotations(dir.path().join("missing.json")).unwrap_err();
        assert!(err.is_io());
    }

    #[test]
    fn predictions() {
        let dir = tempfile::tempdir().unwrap();
        let only_box = json!({"predictions": [{"image_id": "a", "score": 0.5,
                                               "obb": [10, 10, 2, 2, 1, 1, 30]}]});
        let dets = load_predictions(write_json(dir.path(), "p.json", &only_box)).unwrap();
        assert!(dets[0].keypoints.is_none() && dets[0].obb.is_some());

        let too_high = json!({"predictions": [{"image_id": "a", "score": 1.5,
                                               "obb": [10, 10, 2, 2, 1, 1, 30]}]});
        let err = load_predictions(write_json(dir.path(), "q.json", &too_high)).unwrap_err();
        assert!(matches!(&err, Error::Validation { path, .. } if path == "predictions[0].score"));

        let kp = json!({"predictions": [{"image_id": "a", "score": 1.0,
            "keypoints": [null, null, null, [1, 2], [3, 4], [5, 6], [7, 8], [9, 10]]}]});
        let dets = load_predictions(write_json(dir.path(), "r.json", &kp)).unwrap();
        assert_eq!(
            dets[0].keypoints.as_ref().unwrap().get(3),
            Some(Point2::new(1.0, 2.0))
        );
        let out = dir.path().join("s.json");
        write_predictions(&dets, &out).unwrap();
        assert_eq!(load_predictions(&out).unwrap(), dets);
    }

    #[test]
    fn identity_evaluation() {
        let dir = tempfile::tempdir().unwrap();
        let gt_path = write_json(dir.path(), "gt.json", &minimal());
        let gt = load_annotations(&gt_path).unwrap().ground_truth();
        let pred_path = dir.path().join("pred.json");
        write_predictions(&predictions_from_ground_truth(&gt), &pred_path).unwrap();
        let report = evaluate_files(&gt_path, &pred_path, &EvalConfig::default()).unwrap();
        assert_eq!(report.map_poks.all, Some(1.0));
        assert_eq!(report.map_oks, Some(1.0));
        assert_eq!(report.map50_obb, Some(1.0));
    }

    #[test]
    fn split_sizes_and_determinism() {
        let ids = |n: usize| (0..n).map(|i| format!("img{i:03}")).collect::<Vec<_>>();
        let r = [0.7, 0.15, 0.15];
        let s = split_dataset(&ids(100), r, 0).unwrap();
        assert_eq!(s.each_ref().map(Vec::len), [70, 15, 15]);
        let s = split_dataset(&ids(10), r, 0).unwrap();
        assert_eq!(s.each_ref().map(Vec::len), [7, 2, 1]);
        assert_eq!(split_dataset(&ids(10), r, 0).unwrap(), s);

        let mut reversed = ids(10);
        reversed.reverse();
        assert_eq!(split_dataset(&reversed, r, 0).unwrap(), s);

        let all: BTreeSet<String> = s.iter().flatten().cloned().collect();
        assert_eq!(all.len(), 10);
        assert!(split_dataset(&ids(10), [0.7, 0.2, 0.2], 0).is_err());
        assert!(split_dataset(&["x".into(), "x".into()], r, 0).is_err());
    }

    #[test]
    fn stats() {
        assert_eq!(
            dataset_stats(&Dataset::default()).stem_visible_fraction,
            0.0
        );
        let dir = tempfile::tempdir().unwrap();
        let mut v = minimal();
        let vein = v["annotations"][0].clone();
        let mut full = vein.clone();
        full["keypoints"] =
            json!([0, 0, 1, 1, 1, 1, 2, 2, 1, 3, 3, 1, 4, 4, 1, 5, 5, 1, 6, 6, 1, 7, 7, 1]);
        v["annotations"] = json!([vein.clone(), full.clone(), vein, full]);
        let ds = load_annotations(write_json(dir.path(), "s.json", &v)).unwrap();
        let st = dataset_stats(&ds);
        assert_eq!((st.n_images, st.n_leaves, st.n_stem_visible), (1, 4, 2));
        assert_eq!(st.stem_visible_fraction, 0.5);
        assert_eq!(
            st.per_source[&Source::Roborumex],
            SourceCounts {
                images: 1,
                leaves: 4
            }
        );
    }

    #[test]
    fn tensor_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let data: Vec<f32> = (0..24).map(|i| (i as f32 / 23.0).powf(1.7)).collect();
        let hm = Heatmap::from_raw(2, 3, 4, data).unwrap();
        let path = dir.path().join("hm.json");
        write_tensor(&hm, &path).unwrap();
        assert!(dir.path().join("hm.bin").exists());
        let back = read_tensor(&path).unwrap();
        assert_eq!(back.shape(), hm.shape());
        assert!(back
            .data()
            .iter()
            .zip(hm.data())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn coco_import() {
        let dir = tempfile::tempdir().unwrap();
        let coco = json!({
            "images": [{"id": 7, "width": 50, "height": 50, "file_name": "x.jpg"}],
            "annotations": [{"image_id": 7, "category_id": 1,
                             "keypoints": [1, 1, 2, 2, 2, 2, 3, 3, 0, 4, 4, 1, 5, 5, 2],
                             "segmentation": [[0, 0, 55, 0, 55, 10, 0, 10]]}],
            "categories": []
        });
        let ds = import_coco(write_json(dir.path(), "c.json", &coco), Source::Inaturalist).unwrap();
        assert_eq!(ds.images[0].image_id, "7");
        assert_eq!(ds.annotations[0].blade_polygon[1], Point2::new(50.0, 0.0));
        assert_eq!(ds.annotations[0].polyline.vein_points().len(), 4);
    }
}
