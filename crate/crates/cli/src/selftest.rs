use poks::codec::{decode_keypoints, decode_offset, encode_keypoints, encode_offset};
use poks::eval::{average_precision, Interpolation, ScoredLabel};
use poks::geometry::rotated_iou;
use poks::metrics::{oks, poks, OksParams, PolylinePrediction, Subset};
use poks::{GuidedPolyline, Layout, OrientedBox, Point2};

use crate::Failure;

struct Check {
    name: &'static str,
    got: f64,
    want: f64,
    tol: f64,
}

fn checks() -> poks::Result<Vec<Check>> {
    let mut out = Vec::new();
    let p = Point2::new;

    let square = OrientedBox::centered(p(0.0, 0.0), 2.0, 2.0, 0.0)?;
    let turned = OrientedBox::centered(p(0.0, 0.0), 2.0, 2.0, 45.0)?;
    out.push(Check {
        name: "octagon rotated IoU",
        got: rotated_iou(&square, &turned)?,
        want: std::f64::consts::FRAC_1_SQRT_2,
        tol: 1e-9,
    });

    // 3-4-5 triangle from a center at (100, 100).
    let center = p(100.0, 100.0);
    let mut pts = vec![(p(0.0, 0.0), false); 5];
    pts[0] = (p(103.0, 104.0), true);
    let pl = GuidedPolyline::new(Layout::Vein5, pts)?;
    let targets = encode_keypoints(&pl, center, 1)?;
    let t = targets[3].ok_or(poks::Error::InvisibleKeypoint(3))?;
    out.push(Check {
        name: "3-4-5 distance",
        got: t.d,
        want: 5.0,
        tol: 1e-12,
    });
    out.push(Check {
        name: "3-4-5 cosine",
        got: t.cos_a,
        want: 0.6,
        tol: 1e-12,
    });
    out.push(Check {
        name: "3-4-5 sine",
        got: t.sin_a,
        want: 0.8,
        tol: 1e-12,
    });
    let back = decode_keypoints(&targets, center, 1)?[3].unwrap_or(center);
    out.push(Check {
        name: "3-4-5 roundtrip",
        got: back.distance(p(103.0, 104.0)),
        want: 0.0,
        tol: 1e-6,
    });

    let (cell, offset) = encode_offset(p(101.0, 100.0), 4)?;
    out.push(Check {
        name: "offset x",
        got: offset[0],
        want: 0.25,
        tol: 0.0,
    });
    out.push(Check {
        name: "offset roundtrip",
        got: decode_offset(cell, offset, 4)?.distance(p(101.0, 100.0)),
        want: 0.0,
        tol: 1e-12,
    });

    let labels = [
        ScoredLabel {
            score: 0.9,
            true_positive: false,
        },
        ScoredLabel {
            score: 0.4,
            true_positive: true,
        },
    ];
    out.push(Check {
        name: "AP with a leading false positive",
        got: average_precision(&labels, 1, Interpolation::AllPoint).unwrap_or(f64::NAN),
        want: 0.5,
        tol: 0.0,
    });

    // Corner polyline: a pseudo keypoint displaced off its segments.
    let corner: Vec<Point2> = [
        (0.0, 0.0),
        (2.0, 0.0),
        (2.0, 2.0),
        (2.0, 4.0),
        (2.0, 6.0),
        (2.0, 8.0),
        (2.0, 10.0),
        (2.0, 12.0),
    ]
    .iter()
    .map(|&(x, y)| p(x, y))
    .collect();
    let gt = GuidedPolyline::from_points(&corner)?;
    let mut pred = PolylinePrediction::from_ground_truth(&gt);
    pred.0[1] = Some(p(3.0, 1.0));
    let unit = OksParams {
        sigmas: [1.0; 8],
        ..OksParams::default()
    };
    let n = 8.0;
    out.push(Check {
        name: "POKS corner example",
        got: poks(&pred, &gt, Subset::All, &unit, 1.0)?.unwrap_or(f64::NAN),
        want: (7.0 + (-0.5f64).exp()) / n,
        tol: 1e-12,
    });
    out.push(Check {
        name: "OKS corner example",
        got: oks(&pred, &gt, Subset::All, &unit, 1.0)?.unwrap_or(f64::NAN),
        want: (7.0 + (-1.0f64).exp()) / n,
        tol: 1e-12,
    });
    Ok(out)
}

pub fn run() -> Result<(), Failure> {
    let checks = checks()?;
    let mut failed = 0;
    for c in &checks {
        let ok = (c.got - c.want).abs() <= c.tol;
        if !ok {
            failed += 1;
        }
        println!(
            "{} {}: got {} want {}",
            if ok { "PASS" } else { "FAIL" },
            c.name,
            c.got,
            c.want
        );
    }
    if failed > 0 {
        return Err(Failure::invalid(format!(
            "{failed} of {} self-checks failed",
            checks.len()
        )));
    }
    println!("all {} checks passed", checks.len());
    Ok(())
}
