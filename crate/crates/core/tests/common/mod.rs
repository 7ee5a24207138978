#![allow(dead_code)]

use poks::eval::{Detection, GroundTruthObject, GroundTruthSet};
use poks::metrics::PolylinePrediction;
use poks::{GuidedPolyline, OrientedBox, Point2};
use poks_testkit::Rng64;
use rand::Rng;

pub fn pt(p: [f64; 2]) -> Point2 {
    Point2::new(p[0], p[1])
}

pub fn polyline(rng: &mut Rng64) -> GuidedPolyline {
    let pts: Vec<Point2> = poks_testkit::random_polyline(rng)
        .iter()
        .map(|&p| pt(p))
        .collect();
    GuidedPolyline::from_points(&pts).unwrap()
}

pub fn obb(b: [f64; 7]) -> OrientedBox {
    OrientedBox::try_from(b).unwrap()
}

/// Image `i` holds `per_image` leaves spread along a row, far apart from each other.
pub fn separated_scene(rng: &mut Rng64, images: usize, per_image: usize) -> GroundTruthSet {
    let mut gt = GroundTruthSet::default();
    for i in 0..images {
        let id = format!("img{i:02}");
        gt.image_ids.push(id.clone());
        for k in 0..per_image {
            let base = polyline(rng);
            let first = base.keypoints()[0].position;
            let shift = Point2::new(400.0 * k as f64, 0.0) - first + Point2::new(200.0, 200.0);
            let pl = base.map_points(|p| p + shift);
            let pl = if rng.gen_bool(0.3) {
                let vein: Vec<Point2> = pl.keypoints()[3..].iter().map(|k| k.position).collect();
                GuidedPolyline::from_points(&vein).unwrap()
            } else {
                pl
            };
            let obb = poks::codec::derive_leaf_obb(&pl, &[]).ok();
            gt.objects.push(GroundTruthObject {
                image_id: id.clone(),
                polyline: pl,
                obb,
                blade_polygon: Vec::new(),
            });
        }
    }
    gt
}

/// One detection per object with every visible keypoint jittered by up to `noise` px.
pub fn jittered_detections(rng: &mut Rng64, gt: &GroundTruthSet, noise: f64) -> Vec<Detection> {
    gt.objects
        .iter()
        .map(|o| {
            let mut pred = PolylinePrediction::from_ground_truth(&o.polyline);
            for p in pred.0.iter_mut().flatten() {
                *p = *p + Point2::new(rng.gen_range(-noise..=noise), rng.gen_range(-noise..=noise));
            }
            Detection {
                image_id: o.image_id.clone(),
                score: rng.gen_range(0.0..=1.0),
                keypoints: Some(pred),
                obb: o.obb,
            }
        })
        .collect()
}
