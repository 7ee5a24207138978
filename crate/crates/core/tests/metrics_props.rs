mod common;

use poks::metrics::{object_scale, oks, poks, OksParams, PolylinePrediction, Subset};
use poks::polyline::NUM_SLOTS;
use poks::{GuidedPolyline, Layout, Point2};
use proptest::prelude::*;
use rand::Rng;

/// Random FULL8 or VEIN5 polyline with some hidden pseudo keypoints, and a prediction
/// with per-slot noise and occasional missing slots.
fn scene(seed: u64) -> (GuidedPolyline, PolylinePrediction) {
    let mut rng = poks_testkit::rng(seed);
    let full = common::polyline(&mut rng);
    let layout = if rng.gen_bool(0.5) {
        Layout::Full8
    } else {
        Layout::Vein5
    };
    let start = layout.first_slot();
    let pts: Vec<(Point2, bool)> = full.keypoints()[start..]
        .iter()
        .enumerate()
        .map(|(i, k)| {
            (
                k.position,
                layout.role(i) == poks::Role::True || rng.gen_bool(0.8),
            )
        })
        .collect();
    let gt = GuidedPolyline::new(layout, pts).unwrap();
    let mut pred = PolylinePrediction::from_ground_truth(&gt);
    for p in pred.0.iter_mut() {
        if rng.gen_bool(0.05) {
            *p = None;
        } else if let Some(q) = p {
            *q = *q + Point2::new(rng.gen_range(-15.0..15.0), rng.gen_range(-15.0..15.0));
        }
    }
    (gt, pred)
}

fn shift(pred: &PolylinePrediction, f: impl Fn(Point2) -> Point2) -> PolylinePrediction {
    PolylinePrediction(pred.0.map(|p| p.map(&f)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn poks_dominates_oks(seed in any::<u64>()) {
        let (gt, pred) = scene(seed);
        let params = OksParams::default();
        let s = object_scale(&gt, None, &params);
        for subset in Subset::EVERY {
            let p = poks(&pred, &gt, subset, &params, s).unwrap();
            let o = oks(&pred, &gt, subset, &params, s).unwrap();
            prop_assert_eq!(p.is_some(), o.is_some());
            if let (Some(p), Some(o)) = (p, o) {
                prop_assert!(p >= o - 1e-15, "{subset:?}: poks {p} < oks {o}");
                prop_assert!((0.0..=1.0).contains(&p));
            }
        }
    }

    #[test]
    fn translation_and_scale_invariance(seed in any::<u64>(), dx in -500.0..500.0f64, dy in -500.0..500.0f64, k in 0.1..10.0f64) {
        let (gt, pred) = scene(seed);
        let params = OksParams::default();
        let s = object_scale(&gt, None, &params).max(10.0);
        let delta = Point2::new(dx, dy);
        let gt_t = gt.map_points(|p| p + delta);
        let pred_t = shift(&pred, |p| p + delta);
        let gt_k = gt.map_points(|p| p * k);
        let pred_k = shift(&pred, |p| p * k);
        for subset in Subset::EVERY {
            for f in [oks, poks] {
                let base = f(&pred, &gt, subset, &params, s).unwrap();
                let moved = f(&pred_t, &gt_t, subset, &params, s).unwrap();
                let scaled = f(&pred_k, &gt_k, subset, &params, s * k).unwrap();
                match base {
                    None => prop_assert!(moved.is_none() && scaled.is_none()),
                    Some(b) => {
                        prop_assert!((moved.unwrap() - b).abs() < 1e-9);
                        prop_assert!((scaled.unwrap() - b).abs() < 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn perpendicular_motion_strictly_lowers_score(
        slot in 0usize..NUM_SLOTS,
        t1 in 0.0..3.0f64,
        gap in 0.05..3.0f64,
        angle in 0.0..std::f64::consts::TAU,
    ) {
        let dir = Point2::new(angle.cos(), angle.sin());
        let normal = Point2::new(-dir.y, dir.x);
        let pts: Vec<Point2> = (0..NUM_SLOTS).map(|i| dir * (20.0 * i as f64)).collect();
        let gt = GuidedPolyline::from_points(&pts).unwrap();
        let params = OksParams::default();
        let s = 40.0;
        let at = |t: f64| {
            let mut pred = PolylinePrediction::from_ground_truth(&gt);
            pred.0[slot] = Some(pts[slot] + normal * t);
            pred
        };
        for f in [oks, poks] {
            let near = f(&at(t1), &gt, Subset::All, &params, s).unwrap().unwrap();
            let far = f(&at(t1 + gap), &gt, Subset::All, &params, s).unwrap().unwrap();
            prop_assert!(far < near, "{far} !< {near}");
        }
    }

    #[test]
    fn larger_sigma_never_lowers_score(seed in any::<u64>(), slot in 0usize..NUM_SLOTS, grow in 1.0..4.0f64) {
        let (gt, pred) = scene(seed);
        let params = OksParams::default();
        let mut wider = params.clone();
        wider.sigmas[slot] *= grow;
        let s = object_scale(&gt, None, &params);
        for subset in Subset::EVERY {
            for f in [oks, poks] {
                if let Some(a) = f(&pred, &gt, subset, &params, s).unwrap() {
                    let b = f(&pred, &gt, subset, &wider, s).unwrap().unwrap();
                    prop_assert!(b >= a);
                }
            }
        }
    }
}
