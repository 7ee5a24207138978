//! Regression targets expressed relative to an object's center point.
//!
//! Keypoints are encoded in polar form (distance plus a continuous `(cos, sin)` angle
//! pair) on the output grid, which is the input image downscaled by an integer ratio
//! `r`. The center itself is split into an integer grid cell and a sub-cell offset.
//! Oriented boxes are encoded with either three `(w, h, beta)` or five
//! `(w_tl, w_br, h_tl, h_br, beta)` values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::GroundTruthObject;
use crate::geometry::{normalize_degrees, principal_axis, OrientedBox, Point2};
use crate::polyline::{GuidedPolyline, NUM_SLOTS, SLOT_APEX, SLOT_BASAL, SLOT_STEM};

/// Default output stride.
pub const DEFAULT_DOWNSCALE: u32 = 4;

/// Which point of an object anchors its targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CenterSpec {
    /// Geometric center of the oriented box.
    ObbCenter,
    KStem,
    #[default]
    KBasal,
    KApex,
}

/// Anchor point of `gt` under `spec`.
pub fn select_center(gt: &GroundTruthObject, spec: CenterSpec) -> Result<Point2> {
    let slot = match spec {
        CenterSpec::ObbCenter => {
            return gt
                .obb
                .map(|b| b.geometric_center())
                .ok_or_else(|| Error::InvalidCenter("object has no oriented box".into()));
        }
        CenterSpec::KStem => {
            if !gt.polyline.stem_visible() {
                return Err(Error::InvalidCenter(
                    "k_stem requested on a vein-only polyline".into(),
                ));
            }
            SLOT_STEM
        }
        CenterSpec::KBasal => SLOT_BASAL,
        CenterSpec::KApex => SLOT_APEX,
    };
    gt.polyline.visible_slot(slot).ok_or_else(|| {
        Error::InvalidCenter(format!("center keypoint (slot {slot}) is not visible"))
    })
}

fn check_ratio(r: u32) -> Result<f64> {
    if r == 0 {
        Err(Error::InvalidConfig(
            "downscale ratio must be at least 1".into(),
        ))
    } else {
        Ok(r as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarTarget {
    /// Distance to the center in output-grid pixels.
    pub d: f64,
    pub cos_a: f64,
    pub sin_a: f64,
}

impl PolarTarget {
    pub fn angle_radians(&self) -> f64 {
        self.sin_a.atan2(self.cos_a)
    }

    /// Alternative single-value angle code in `[0, 1)`; discontinuous at 0/360 degrees.
    pub fn normalized_angle(&self) -> f64 {
        normalize_degrees(self.angle_radians().to_degrees()) / 360.0
    }

    /// Inverse of [`normalized_angle`](Self::normalized_angle).
    pub fn from_normalized_angle(d: f64, code: f64) -> Self {
        let a = (code * 360.0).to_radians();
        PolarTarget {
            d,
            cos_a: a.cos(),
            sin_a: a.sin(),
        }
    }
}

/// Rescales a regressed angle pair to unit length. Norms outside `[0.5, 2]` are rejected.
pub fn normalize_angle_pair(cos_a: f64, sin_a: f64) -> Result<(f64, f64)> {
    let norm = cos_a.hypot(sin_a);
    if !(0.5..=2.0).contains(&norm) {
        return Err(Error::InvalidTarget(format!(
            "angle vector norm {norm} outside [0.5, 2]"
        )));
    }
    Ok((cos_a / norm, sin_a / norm))
}

/// Polar targets for every visible keypoint, indexed by full-layout slot.
pub fn encode_keypoints(
    polyline: &GuidedPolyline,
    center: Point2,
    r: u32,
) -> Result<[Option<PolarTarget>; NUM_SLOTS]> {
    let r = check_ratio(r)?;
    center.ensure_finite("center")?;
    Ok(polyline.slots().map(|kp| {
        kp.map(|k| {
            let v = k - center;
            let len = v.norm();
            if len == 0.0 {
                PolarTarget {
                    d: 0.0,
                    cos_a: 1.0,
                    sin_a: 0.0,
                }
            } else {
                PolarTarget {
                    d: len / r,
                    cos_a: v.x / len,
                    sin_a: v.y / len,
                }
            }
        })
    }))
}

/// Inverse of [`encode_keypoints`]; angle pairs are renormalized first.
pub fn decode_keypoints(
    targets: &[Option<PolarTarget>; NUM_SLOTS],
    center: Point2,
    r: u32,
) -> Result<[Option<Point2>; NUM_SLOTS]> {
    let r = check_ratio(r)?;
    let mut out = [None; NUM_SLOTS];
    for (slot, t) in targets.iter().enumerate() {
        let Some(t) = t else { continue };
        if !t.d.is_finite() || t.d < 0.0 {
            return Err(Error::InvalidTarget(format!(
                "slot {slot}: distance {}",
                t.d
            )));
        }
        out[slot] = Some(if t.d == 0.0 {
            center
        } else {
            let (c, s) = normalize_angle_pair(t.cos_a, t.sin_a)?;
            center + Point2::new(c, s) * (r * t.d)
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObbParamMode {
    Three,
    #[default]
    Five,
}

/// Box regression target in output-grid pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum ObbTarget {
    Three {
        w: f64,
        h: f64,
        cos_b: f64,
        sin_b: f64,
    },
    Five {
        w_tl: f64,
        w_br: f64,
        h_tl: f64,
        h_br: f64,
        cos_b: f64,
        sin_b: f64,
    },
}

pub fn encode_obb(bx: &OrientedBox, mode: ObbParamMode, r: u32) -> Result<ObbTarget> {
    let r = check_ratio(r)?;
    let beta = bx.beta().to_radians();
    let (cos_b, sin_b) = (beta.cos(), beta.sin());
    Ok(match mode {
        ObbParamMode::Three => ObbTarget::Three {
            w: bx.width() / r,
            h: bx.height() / r,
            cos_b,
            sin_b,
        },
        ObbParamMode::Five => ObbTarget::Five {
            w_tl: bx.w_tl() / r,
            w_br: bx.w_br() / r,
            h_tl: bx.h_tl() / r,
            h_br: bx.h_br() / r,
            cos_b,
            sin_b,
        },
    })
}

/// Inverse of [`encode_obb`]. Three-parameter targets come back with even splits.
pub fn decode_obb(target: &ObbTarget, center: Point2, r: u32) -> Result<OrientedBox> {
    let r = check_ratio(r)?;
    match *target {
        ObbTarget::Three { w, h, cos_b, sin_b } => {
            let (c, s) = normalize_angle_pair(cos_b, sin_b)?;
            let (w, h) = (w * r, h * r);
            OrientedBox::new(
                center,
                w / 2.0,
                w / 2.0,
                h / 2.0,
                h / 2.0,
                s.atan2(c).to_degrees(),
            )
        }
        ObbTarget::Five {
            w_tl,
            w_br,
            h_tl,
            h_br,
            cos_b,
            sin_b,
        } => {
            let (c, s) = normalize_angle_pair(cos_b, sin_b)?;
            OrientedBox::new(
                center,
                w_tl * r,
                w_br * r,
                h_tl * r,
                h_br * r,
                s.atan2(c).to_degrees(),
            )
        }
    }
}

/// Splits a point into its output-grid cell and the sub-cell offset in `[0, 1)`.
pub fn encode_offset(p: Point2, r: u32) -> Result<([u32; 2], [f64; 2])> {
    let rf = check_ratio(r)?;
    p.ensure_finite("offset point")?;
    if p.x < 0.0 || p.y < 0.0 {
        return Err(Error::InvalidTarget(format!(
            "negative coordinate ({}, {})",
            p.x, p.y
        )));
    }
    let (gx, gy) = (p.x / rf, p.y / rf);
    let cell = [gx.floor(), gy.floor()];
    Ok((
        [cell[0] as u32, cell[1] as u32],
        [gx - cell[0], gy - cell[1]],
    ))
}

pub fn decode_offset(cell: [u32; 2], offset: [f64; 2], r: u32) -> Result<Point2> {
    let r = check_ratio(r)?;
    Ok(Point2::new(
        r * (cell[0] as f64 + offset[0]),
        r * (cell[1] as f64 + offset[1]),
    ))
}

/// Oriented box of a leaf: orientation from PCA of the visible vein keypoints (signed
/// basal to apex), extents from the blade polygon and visible polyline in the rotated
/// frame, split about `anchor`.
pub fn derive_obb(
    polyline: &GuidedPolyline,
    blade_polygon: &[Point2],
    anchor: Point2,
) -> Result<OrientedBox> {
    anchor.ensure_finite("anchor")?;
    let vein = polyline.vein_points();
    if vein.len() < 2 {
        return Err(Error::Degenerate(
            "need at least two visible vein keypoints".into(),
        ));
    }
    let beta = principal_axis(&vein, vein[0], vein[vein.len() - 1])?;
    let theta = -beta.to_radians();
    let (mut min_x, mut max_x, mut min_y, mut max_y) = (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
    for p in blade_polygon
        .iter()
        .copied()
        .chain(polyline.visible_points())
    {
        let q = p.ensure_finite("blade vertex")?;
        let q = (q - anchor).rotate(theta);
        min_x = min_x.min(q.x);
        max_x = max_x.max(q.x);
        min_y = min_y.min(q.y);
        max_y = max_y.max(q.y);
    }
    OrientedBox::new(anchor, -min_x, max_x, -min_y, max_y, beta)
        .map_err(|e| Error::Degenerate(format!("leaf box collapses: {e}")))
}

/// Oriented box anchored at the basal keypoint, or at the first visible vein keypoint
/// when the basal is hidden.
pub fn derive_leaf_obb(polyline: &GuidedPolyline, blade_polygon: &[Point2]) -> Result<OrientedBox> {
    let anchor = polyline
        .visible_slot(SLOT_BASAL)
        .or_else(|| polyline.vein_points().first().copied())
        .ok_or_else(|| Error::Degenerate("no visible vein keypoint".into()))?;
    derive_obb(polyline, blade_polygon, anchor)
}

/// All regression targets for one object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedSample {
    pub downscale_r: u32,
    /// Anchor in input-image pixels.
    pub center: Point2,
    pub center_cell: [u32; 2],
    pub offset: [f64; 2],
    pub keypoints: [Option<PolarTarget>; NUM_SLOTS],
    pub obb: Option<ObbTarget>,
}

pub fn encode_sample(
    gt: &GroundTruthObject,
    spec: CenterSpec,
    r: u32,
    mode: ObbParamMode,
) -> Result<EncodedSample> {
    let center = select_center(gt, spec)?;
    let (center_cell, offset) = encode_offset(center, r)?;
    let keypoints = encode_keypoints(&gt.polyline, center, r)?;
    // Box extents are re-split about the chosen center.
    let obb = gt
        .obb
        .map(|b| {
            let moved = OrientedBox::from_corners(b.corners(), center).map_err(|e| match e {
                Error::InvalidBox(msg) => Error::InvalidCenter(msg),
                e => e,
            })?;
            encode_obb(&moved, mode, r)
        })
        .transpose()?;
    Ok(EncodedSample {
        downscale_r: r,
        center,
        center_cell,
        offset,
        keypoints,
        obb,
    })
}

/// Keypoints (image pixels) and box recovered from an [`EncodedSample`].
pub fn decode_sample(
    sample: &EncodedSample,
) -> Result<([Option<Point2>; NUM_SLOTS], Option<OrientedBox>)> {
    let center = decode_offset(sample.center_cell, sample.offset, sample.downscale_r)?;
    let kps = decode_keypoints(&sample.keypoints, center, sample.downscale_r)?;
    let obb = sample
        .obb
        .as_ref()
        .map(|t| decode_obb(t, center, sample.downscale_r))
        .transpose()?;
    Ok((kps, obb))
}

/// Mean absolute error over the entries selected by `mask`; 0 when nothing is selected.
pub fn l1_loss(pred: &[f64], target: &[f64], mask: &[bool]) -> Result<f64> {
    if target.len() != pred.len() {
        return Err(Error::LengthMismatch {
            expected: pred.len(),
            found: target.len(),
        });
    }
    if mask.len() != pred.len() {
        return Err(Error::LengthMismatch {
            expected: pred.len(),
            found: mask.len(),
        });
    }
    let (sum, n) = pred
        .iter()
        .zip(target)
        .zip(mask)
        .filter(|(_, m)| **m)
        .fold((0.0, 0usize), |(s, n), ((p, t), _)| {
            (s + (p - t).abs(), n + 1)
        });
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub w_cp: f64,
    pub w_off: f64,
    pub w_kp: f64,
    pub w_kphm: f64,
    pub w_obb: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            w_cp: 1.0,
            w_off: 1.0,
            w_kp: 20.0,
            w_kphm: 1.0,
            w_obb: 20.0,
        }
    }
}

/// Individual head losses combined by [`total_loss`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossComponents {
    /// Focal loss of the center heatmap.
    pub center: f64,
    /// L1 loss of the center offset.
    pub offset: f64,
    /// L1 loss of the keypoint regression.
    pub keypoints: f64,
    /// Focal loss of the keypoint heatmap.
    pub keypoint_heatmap: f64,
    /// L1 loss of the box regression.
    pub obb: f64,
}

pub fn total_loss(c: &LossComponents, w: &LossWeights) -> f64 {
    w.w_cp * c.center
        + w.w_off * c.offset
        + w.w_kp * c.keypoints
        + w.w_kphm * c.keypoint_heatmap
        + w.w_obb * c.obb
}
