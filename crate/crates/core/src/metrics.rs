//! Object keypoint similarity (OKS) and projected object keypoint similarity (POKS).
//!
//! Both scores average `exp(-d^2 / (2 s^2 sigma^2))` over the visible ground-truth
//! keypoints of a subset. POKS replaces `d` for pseudo keypoints with the distance to
//! the closest clamped projection onto the two ground-truth neighbor segments, so a
//! pseudo keypoint may slide along the line without penalty. True keypoints are
//! scored identically by both.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{min_projection_distance, OrientedBox, Point2};
use crate::polyline::{GuidedPolyline, Layout, Role, NUM_SLOTS};

/// Default sigma for true keypoints.
pub const DEFAULT_SIGMA_TRUE: f64 = 0.05;
/// Default sigma for pseudo keypoints.
pub const DEFAULT_SIGMA_PSEUDO: f64 = 0.10;
/// Default lower bound on the object scale, in pixels.
pub const DEFAULT_SCALE_FLOOR: f64 = 4.0;

/// Named keypoint subsets reported separately.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    All,
    Stem,
    Vein,
    True,
    Pseudo,
}

impl Subset {
    pub const EVERY: [Subset; 5] = [
        Subset::All,
        Subset::Stem,
        Subset::Vein,
        Subset::True,
        Subset::Pseudo,
    ];

    /// Member slots in the full eight-keypoint layout.
    pub fn members(self) -> &'static [usize] {
        match self {
            Subset::All => &[0, 1, 2, 3, 4, 5, 6, 7],
            Subset::Stem => &[0, 1, 2, 3],
            Subset::Vein => &[3, 4, 5, 6, 7],
            Subset::True => &[0, 3, 7],
            Subset::Pseudo => &[1, 2, 4, 5, 6],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Subset::All => "all",
            Subset::Stem => "stem",
            Subset::Vein => "vein",
            Subset::True => "true",
            Subset::Pseudo => "pseudo",
        }
    }

    /// True when the score is defined for `gt`: at least one member is visible and, for
    /// the stem subset, the stem was annotated at all. The basal keypoint alone does not
    /// make a vein-only leaf count towards the stem.
    pub fn is_defined_for(self, gt: &GuidedPolyline) -> bool {
        if self == Subset::Stem && !gt.stem_visible() {
            return false;
        }
        self.members().iter().any(|&s| gt.visible_slot(s).is_some())
    }
}

/// How the object scale `s` is derived from a ground-truth object.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleMode {
    /// `sqrt(w * h)` of the oriented box, falling back to the polyline bounds without one.
    ObbArea,
    /// `sqrt` of the area of the visible keypoints' axis-aligned bounding box.
    PolylineBboxArea,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OksParams {
    /// Per-slot sigma in the full layout; the vein-only layout uses the last five.
    pub sigmas: [f64; NUM_SLOTS],
    pub scale_mode: ScaleMode,
    /// Lower bound on `s` in pixels.
    pub scale_floor: f64,
}

impl Default for OksParams {
    fn default() -> Self {
        Self::with_role_sigmas(DEFAULT_SIGMA_TRUE, DEFAULT_SIGMA_PSEUDO)
    }
}

impl OksParams {
    pub fn with_role_sigmas(sigma_true: f64, sigma_pseudo: f64) -> Self {
        OksParams {
            sigmas: std::array::from_fn(|s| match Layout::role_of_slot(s) {
                Role::True => sigma_true,
                Role::Pseudo => sigma_pseudo,
            }),
            scale_mode: ScaleMode::ObbArea,
            scale_floor: DEFAULT_SCALE_FLOOR,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(s) = self.sigmas.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::InvalidConfig(format!(
                "sigma must be positive, got {s}"
            )));
        }
        if !(self.scale_floor.is_finite() && self.scale_floor > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "scale floor must be positive, got {}",
                self.scale_floor
            )));
        }
        Ok(())
    }
}

/// Object scale `s` used to normalize keypoint distances.
pub fn object_scale(gt: &GuidedPolyline, obb: Option<&OrientedBox>, params: &OksParams) -> f64 {
    let raw = match (params.scale_mode, obb) {
        (ScaleMode::ObbArea, Some(b)) => b.area().sqrt(),
        _ => {
            let (lo, hi) = gt.bounds();
            ((hi.x - lo.x) * (hi.y - lo.y)).max(0.0).sqrt()
        }
    };
    raw.max(params.scale_floor)
}

/// Keypoint prediction in the full eight-slot layout; `None` marks a missing slot.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PolylinePrediction(pub [Option<Point2>; NUM_SLOTS]);

impl From<[Point2; NUM_SLOTS]> for PolylinePrediction {
    fn from(points: [Point2; NUM_SLOTS]) -> Self {
        PolylinePrediction(points.map(Some))
    }
}

impl PolylinePrediction {
    /// Prediction that reproduces the visible keypoints of `gt` exactly.
    pub fn from_ground_truth(gt: &GuidedPolyline) -> Self {
        PolylinePrediction(gt.slots())
    }

    pub fn get(&self, slot: usize) -> Option<Point2> {
        self.0.get(slot).copied().flatten()
    }
}

/// Which distance a keypoint similarity uses for pseudo keypoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KeypointSimilarity {
    Oks,
    Poks,
}

impl KeypointSimilarity {
    pub fn score(
        self,
        pred: &PolylinePrediction,
        gt: &GuidedPolyline,
        subset: Subset,
        params: &OksParams,
        scale: f64,
    ) -> Result<Option<f64>> {
        similarity(
            pred,
            gt,
            subset,
            params,
            scale,
            self == KeypointSimilarity::Poks,
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            KeypointSimilarity::Oks => "oks",
            KeypointSimilarity::Poks => "poks",
        }
    }
}

/// Object keypoint similarity over the visible members of `subset`.
///
/// Returns `Ok(None)` when the subset is undefined for `gt` (see [`Subset::is_defined_for`]). A
/// visible ground-truth keypoint without a predicted counterpart scores zero.
pub fn oks(
    pred: &PolylinePrediction,
    gt: &GuidedPolyline,
    subset: Subset,
    params: &OksParams,
    scale: f64,
) -> Result<Option<f64>> {
    similarity(pred, gt, subset, params, scale, false)
}

/// Projected object keypoint similarity over the visible members of `subset`.
pub fn poks(
    pred: &PolylinePrediction,
    gt: &GuidedPolyline,
    subset: Subset,
    params: &OksParams,
    scale: f64,
) -> Result<Option<f64>> {
    similarity(pred, gt, subset, params, scale, true)
}

/// Per-keypoint distance used by POKS for slot `slot` of `gt`.
pub fn projected_distance(pred: Point2, gt: &GuidedPolyline, slot: usize) -> Result<f64> {
    let local = gt.local_index(slot).ok_or(Error::IndexOutOfRange {
        index: slot,
        len: NUM_SLOTS,
    })?;
    match min_projection_distance(pred, gt, local) {
        // An isolated pseudo keypoint has nothing to slide along.
        Err(Error::NoVisibleNeighbor(_)) => Ok(pred.distance(gt.keypoints()[local].position)),
        other => other,
    }
}

fn similarity(
    pred: &PolylinePrediction,
    gt: &GuidedPolyline,
    subset: Subset,
    params: &OksParams,
    scale: f64,
    projected: bool,
) -> Result<Option<f64>> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::InvalidScale(scale));
    }
    if !subset.is_defined_for(gt) {
        return Ok(None);
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for &slot in subset.members() {
        let Some(kp) = gt.slot(slot).filter(|k| k.visible) else {
            continue;
        };
        count += 1;
        let Some(p) = pred.get(slot) else { continue };
        let d = if projected && kp.role == Role::Pseudo {
            projected_distance(p, gt, slot)?
        } else {
            p.ensure_finite("prediction")?.distance(kp.position)
        };
        let sigma = params.sigmas[slot];
        sum += (-(d * d) / (2.0 * scale * scale * sigma * sigma)).exp();
    }
    Ok((count > 0).then(|| sum / count as f64))
}
