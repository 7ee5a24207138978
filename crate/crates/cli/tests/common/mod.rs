#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use poks::eval::{Detection, EvalConfig, GroundTruthSet, MetricKey};
use poks::geometry::rotated_iou;
use poks::metrics::object_scale;
use poks_testkit::{brute_force_labels, ratio_to_f64, rational_ap, Label};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn poks_cmd() -> Command {
    Command::new(env!("CARGO_BIN_EXE_poks"))
}

pub fn run<S: AsRef<std::ffi::OsStr>>(args: &[S]) -> Output {
    poks_cmd().args(args).output().expect("spawn poks")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Similarity of every detection of one image to every ground truth of that image.
pub fn similarity_matrix(
    gt: &[&poks::eval::GroundTruthObject],
    dets: &[&Detection],
    key: MetricKey,
    config: &EvalConfig,
) -> Vec<Vec<Option<f64>>> {
    dets.iter()
        .map(|d| {
            gt.iter()
                .map(|g| match key {
                    MetricKey::Keypoint(sim, subset) => {
                        let s = object_scale(&g.polyline, g.obb.as_ref(), &config.oks_params);
                        sim.score(
                            d.keypoints.as_ref().unwrap(),
                            &g.polyline,
                            subset,
                            &config.oks_params,
                            s,
                        )
                        .unwrap()
                    }
                    MetricKey::Obb => g
                        .obb
                        .as_ref()
                        .map(|b| rotated_iou(d.obb.as_ref().unwrap(), b).unwrap()),
                })
                .collect()
        })
        .collect()
}

/// AP per threshold from exhaustive matching and exact rational AP.
pub fn oracle_ap(
    gt: &GroundTruthSet,
    dets: &[Detection],
    key: MetricKey,
    config: &EvalConfig,
) -> Vec<Option<f64>> {
    let mut images: BTreeMap<&str, (Vec<_>, Vec<_>)> = BTreeMap::new();
    for id in &gt.image_ids {
        images.entry(id).or_default();
    }
    for o in &gt.objects {
        images.entry(&o.image_id).or_default().0.push(o);
    }
    for d in dets {
        let usable = match key {
            MetricKey::Keypoint(..) => d.keypoints.is_some(),
            MetricKey::Obb => d.obb.is_some(),
        };
        if usable {
            images.entry(&d.image_id).or_default().1.push(d);
        }
    }
    let thresholds = match key {
        MetricKey::Keypoint(..) => config.thresholds.clone(),
        MetricKey::Obb => vec![config.obb_iou_threshold],
    };
    let num_gt: usize = gt
        .objects
        .iter()
        .filter(|o| match key {
            MetricKey::Keypoint(_, subset) => subset.is_defined_for(&o.polyline),
            MetricKey::Obb => o.obb.is_some(),
        })
        .count();
    let eleven = config.voc_interpolation == poks::eval::Interpolation::ElevenPoint;

    thresholds
        .iter()
        .map(|&t| {
            let mut labels = Vec::new();
            for (objs, ds) in images.values() {
                let sim = similarity_matrix(objs, ds, key, config);
                let scores: Vec<f64> = ds.iter().map(|d| d.score).collect();
                for (label, &score) in brute_force_labels(&scores, &sim, objs.len(), t)
                    .iter()
                    .zip(&scores)
                {
                    match label {
                        Label::Tp(_) => labels.push((score, true)),
                        Label::Fp => labels.push((score, false)),
                        Label::Ignored => {}
                    }
                }
            }
            rational_ap(&labels, num_gt, eleven).map(ratio_to_f64)
        })
        .collect()
}

/// Every metric the harness reports, in report order.
pub fn report_keys(config: &EvalConfig) -> Vec<MetricKey> {
    use poks::metrics::{KeypointSimilarity, Subset};
    let mut keys: Vec<MetricKey> = config
        .subsets
        .iter()
        .map(|&s| MetricKey::Keypoint(KeypointSimilarity::Poks, s))
        .collect();
    keys.push(MetricKey::Keypoint(KeypointSimilarity::Oks, Subset::All));
    keys.push(MetricKey::Obb);
    keys
}

pub fn close(a: Option<f64>, b: Option<f64>, tol: f64) -> bool {
    match (a, b) {
        (Some(a), Some(b)) => (a - b).abs() <= tol,
        (None, None) => true,
        _ => false,
    }
}
