//! Random scene generators and brute-force oracles for the test suites.
//!
//! Nothing here calls into the library under test: oracles work on plain arrays so that
//! they stay independent of the implementation they check.

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Rng64 = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng64 {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Eight points of a gently bending polyline with segment lengths in `[10, 40]`.
pub fn random_polyline(rng: &mut Rng64) -> [[f64; 2]; 8] {
    let mut p = [rng.gen_range(100.0..900.0), rng.gen_range(100.0..900.0)];
    let mut heading: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let mut out = [[0.0; 2]; 8];
    for slot in &mut out {
        *slot = p;
        let len = rng.gen_range(10.0..40.0);
        heading += rng.gen_range(-0.4..0.4);
        p = [p[0] + len * heading.cos(), p[1] + len * heading.sin()];
    }
    out
}

/// `[cx, cy, w_tl, w_br, h_tl, h_br, beta_deg]` with extents in `[0.5, 30]`.
pub fn random_box(rng: &mut Rng64) -> [f64; 7] {
    [
        rng.gen_range(0.0..100.0),
        rng.gen_range(0.0..100.0),
        rng.gen_range(0.5..30.0),
        rng.gen_range(0.5..30.0),
        rng.gen_range(0.5..30.0),
        rng.gen_range(0.5..30.0),
        rng.gen_range(0.0..360.0),
    ]
}

/// A box and a second one whose center lies within 20 px of the first.
pub fn random_box_pair(rng: &mut Rng64) -> ([f64; 7], [f64; 7]) {
    let a = random_box(rng);
    let mut b = random_box(rng);
    b[0] = a[0] + rng.gen_range(-20.0..20.0);
    b[1] = a[1] + rng.gen_range(-20.0..20.0);
    (a, b)
}

fn box_to_world(b: &[f64; 7], u: f64, v: f64) -> [f64; 2] {
    let (s, c) = b[6].to_radians().sin_cos();
    [b[0] + c * u - s * v, b[1] + s * u + c * v]
}

fn world_in_box(b: &[f64; 7], p: [f64; 2]) -> bool {
    let (s, c) = b[6].to_radians().sin_cos();
    let (dx, dy) = (p[0] - b[0], p[1] - b[1]);
    let u = c * dx + s * dy;
    let v = -s * dx + c * dy;
    u >= -b[2] && u <= b[3] && v >= -b[4] && v <= b[5]
}

/// Corners of a box in counter-clockwise order.
pub fn box_corners(b: &[f64; 7]) -> [[f64; 2]; 4] {
    [
        box_to_world(b, -b[2], -b[4]),
        box_to_world(b, b[3], -b[4]),
        box_to_world(b, b[3], b[5]),
        box_to_world(b, -b[2], b[5]),
    ]
}

/// Monte-Carlo IoU: the intersection area is estimated from `samples` uniform points
/// inside `a`; box areas are exact.
pub fn monte_carlo_iou(a: &[f64; 7], b: &[f64; 7], samples: usize, rng: &mut Rng64) -> f64 {
    let area_a = (a[2] + a[3]) * (a[4] + a[5]);
    let area_b = (b[2] + b[3]) * (b[4] + b[5]);
    let hits = (0..samples)
        .filter(|_| {
            let u = rng.gen_range(-a[2]..=a[3]);
            let v = rng.gen_range(-a[4]..=a[5]);
            world_in_box(b, box_to_world(a, u, v))
        })
        .count();
    let inter = area_a * hits as f64 / samples as f64;
    inter / (area_a + area_b - inter)
}

/// IoU of axis-aligned boxes given as `[x0, y0, x1, y1]`.
pub fn axis_aligned_iou(a: [f64; 4], b: [f64; 4]) -> f64 {
    let w = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let h = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = w * h;
    let union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter;
    inter / union
}

/// Convex polygon with `n` vertices on a jittered ellipse, counter-clockwise.
pub fn random_convex_polygon(rng: &mut Rng64, n: usize) -> Vec<[f64; 2]> {
    let c = [rng.gen_range(0.0..50.0), rng.gen_range(0.0..50.0)];
    let (rx, ry) = (rng.gen_range(5.0..30.0), rng.gen_range(5.0..30.0));
    let tilt: f64 = rng.gen_range(0.0..std::f64::consts::PI);
    let mut angles: Vec<f64> = (0..n)
        .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
        .collect();
    angles.sort_by(f64::total_cmp);
    angles.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
    angles
        .into_iter()
        .map(|t| {
            let (x, y) = (rx * t.cos(), ry * t.sin());
            let (s, co) = tilt.sin_cos();
            [c[0] + co * x - s * y, c[1] + s * x + co * y]
        })
        .collect()
}

fn inside_convex(poly: &[[f64; 2]], p: [f64; 2]) -> bool {
    (0..poly.len()).all(|i| {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) >= 0.0
    })
}

fn bbox(poly: &[[f64; 2]]) -> [f64; 4] {
    poly.iter()
        .fold([f64::MAX, f64::MAX, f64::MIN, f64::MIN], |acc, p| {
            [
                acc[0].min(p[0]),
                acc[1].min(p[1]),
                acc[2].max(p[0]),
                acc[3].max(p[1]),
            ]
        })
}

/// Monte-Carlo intersection area of two counter-clockwise convex polygons, sampled over
/// the overlap of their bounding boxes.
pub fn monte_carlo_intersection(
    a: &[[f64; 2]],
    b: &[[f64; 2]],
    samples: usize,
    rng: &mut Rng64,
) -> f64 {
    let (ba, bb) = (bbox(a), bbox(b));
    let bb = [
        ba[0].max(bb[0]),
        ba[1].max(bb[1]),
        ba[2].min(bb[2]),
        ba[3].min(bb[3]),
    ];
    if bb[0] >= bb[2] || bb[1] >= bb[3] {
        return 0.0;
    }
    let hits = (0..samples)
        .filter(|_| {
            let p = [rng.gen_range(bb[0]..=bb[2]), rng.gen_range(bb[1]..=bb[3])];
            inside_convex(a, p) && inside_convex(b, p)
        })
        .count();
    (bb[2] - bb[0]) * (bb[3] - bb[1]) * hits as f64 / samples as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Tp(usize),
    Fp,
    Ignored,
}

/// Processing order of the protocol: score descending, then input index.
pub fn protocol_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// Greedy labeling found by exhaustive search.
///
/// Every partial injective detection-to-GT assignment is enumerated and checked against
/// the protocol: in processing order, a detection takes the most similar GT (lowest index
/// on ties) among those it reaches at `threshold` that no earlier detection took, and
/// stays unmatched only if there is none. Exactly one assignment passes; unmatched
/// detections become ignored when the image holds a GT with undefined similarity
/// (`None` entries in `sim`, indexed `[det][gt]`).
pub fn brute_force_labels(
    scores: &[f64],
    sim: &[Vec<Option<f64>>],
    n_gt: usize,
    threshold: f64,
) -> Vec<Label> {
    let n_det = scores.len();
    let order = protocol_order(scores);
    let mut valid = Vec::new();
    let choices = n_gt + 1;
    let total = choices.pow(n_det as u32);
    for code in 0..total {
        let assign: Vec<Option<usize>> = (0..n_det)
            .map(|d| {
                let c = code / choices.pow(d as u32) % choices;
                (c < n_gt).then_some(c)
            })
            .collect();
        let mut taken = vec![false; n_gt];
        let mut ok = true;
        for &d in &order {
            let reachable: Vec<usize> = (0..n_gt)
                .filter(|&g| !taken[g] && sim[d][g].is_some_and(|s| s >= threshold))
                .collect();
            let expected = reachable
                .iter()
                .copied()
                .fold(None::<usize>, |best, g| match best {
                    Some(b) if sim[d][b].unwrap() >= sim[d][g].unwrap() => Some(b),
                    _ => Some(g),
                });
            if assign[d] != expected {
                ok = false;
                break;
            }
            if let Some(g) = expected {
                taken[g] = true;
            }
        }
        if ok {
            valid.push(assign);
        }
    }
    assert_eq!(valid.len(), 1, "protocol must admit exactly one assignment");
    let has_ignore = (0..n_gt).any(|g| (0..n_det).any(|d| sim[d][g].is_none()));
    valid[0]
        .iter()
        .map(|a| match a {
            Some(g) => Label::Tp(*g),
            None if has_ignore => Label::Ignored,
            None => Label::Fp,
        })
        .collect()
}

/// AP in exact rational arithmetic from `(score, is_tp)` pairs (ignored detections
/// already removed).
///
/// All-point AP is `1/num_gt` times the sum, over true positives, of the best precision
/// at that rank or below. Eleven-point AP averages the best precision at recall at least
/// `t` for `t = 0, 0.1, ..., 1`. `None` when there are neither positives nor detections.
pub fn rational_ap(
    labels: &[(f64, bool)],
    num_gt: usize,
    eleven_point: bool,
) -> Option<Ratio<i64>> {
    if num_gt == 0 {
        return if labels.is_empty() {
            None
        } else {
            Some(Ratio::from_integer(0))
        };
    }
    let scores: Vec<f64> = labels.iter().map(|l| l.0).collect();
    let order = protocol_order(&scores);
    let mut precision = Vec::new();
    let mut recall = Vec::new();
    let mut tp = 0i64;
    for (k, &i) in order.iter().enumerate() {
        if labels[i].1 {
            tp += 1;
        }
        precision.push(Ratio::new(tp, k as i64 + 1));
        recall.push(Ratio::new(tp, num_gt as i64));
    }
    let best_from = |k: usize| precision[k..].iter().copied().max().unwrap_or_default();
    if eleven_point {
        let sum: Ratio<i64> = (0..=10)
            .map(|t| {
                let t = Ratio::new(t, 10);
                recall
                    .iter()
                    .position(|&r| r >= t)
                    .map(best_from)
                    .unwrap_or_default()
            })
            .sum();
        Some(sum / 11)
    } else {
        let sum: Ratio<i64> = order
            .iter()
            .enumerate()
            .filter(|(_, &i)| labels[i].1)
            .map(|(k, _)| best_from(k))
            .sum();
        Some(sum / num_gt as i64)
    }
}

pub fn ratio_to_f64(r: Ratio<i64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}
