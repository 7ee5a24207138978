//! Keypoint-guided polylines: the stem/vein annotation unit.
//!
//! Slots are always addressed in the full eight-keypoint layout
//! `[k_stem, k2, k3, k_basal, k5, k6, k7, k_apex]`. A leaf whose stem is not visible is
//! annotated with the five vein keypoints only and occupies slots 3..=7.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point2;

pub const NUM_SLOTS: usize = 8;
pub const SLOT_STEM: usize = 0;
pub const SLOT_BASAL: usize = 3;
pub const SLOT_APEX: usize = 7;

/// Slot names in order, used for reports and error messages.
pub const SLOT_NAMES: [&str; NUM_SLOTS] =
    ["k_stem", "k2", "k3", "k_basal", "k5", "k6", "k7", "k_apex"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    True,
    Pseudo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Layout {
    /// Stem and vein, eight keypoints.
    #[serde(rename = "full8")]
    Full8,
    /// Vein only, five keypoints.
    #[serde(rename = "vein5")]
    Vein5,
}

#[allow(clippy::len_without_is_empty)]
impl Layout {
    pub fn len(self) -> usize {
        match self {
            Layout::Full8 => 8,
            Layout::Vein5 => 5,
        }
    }

    pub fn from_len(n: usize) -> Option<Layout> {
        match n {
            8 => Some(Layout::Full8),
            5 => Some(Layout::Vein5),
            _ => None,
        }
    }

    /// Full-layout slot of the first keypoint.
    pub fn first_slot(self) -> usize {
        match self {
            Layout::Full8 => 0,
            Layout::Vein5 => SLOT_BASAL,
        }
    }

    pub fn role_of_slot(slot: usize) -> Role {
        if matches!(slot, SLOT_STEM | SLOT_BASAL | SLOT_APEX) {
            Role::True
        } else {
            Role::Pseudo
        }
    }

    pub fn role(self, local: usize) -> Role {
        Self::role_of_slot(local + self.first_slot())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub position: Point2,
    pub role: Role,
    pub visible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GuidedPolyline {
    layout: Layout,
    keypoints: Vec<Keypoint>,
}

impl GuidedPolyline {
    /// Builds a polyline; roles follow from the layout.
    pub fn new(layout: Layout, points: Vec<(Point2, bool)>) -> Result<Self> {
        if points.len() != layout.len() {
            return Err(Error::InvalidPolyline(format!(
                "{:?} layout needs {} keypoints, got {}",
                layout,
                layout.len(),
                points.len()
            )));
        }
        let keypoints: Vec<Keypoint> = points
            .into_iter()
            .enumerate()
            .map(|(i, (position, visible))| Keypoint {
                position,
                role: layout.role(i),
                visible,
            })
            .collect();
        if keypoints
            .iter()
            .any(|k| k.visible && !k.position.is_finite())
        {
            return Err(Error::NonFinite("keypoint"));
        }
        if !keypoints.iter().any(|k| k.visible) {
            return Err(Error::InvalidPolyline("no visible keypoint".into()));
        }
        Ok(GuidedPolyline { layout, keypoints })
    }

    /// Fully visible polyline with the layout inferred from the number of points.
    pub fn from_points(points: &[Point2]) -> Result<Self> {
        let layout = Layout::from_len(points.len()).ok_or_else(|| {
            Error::InvalidPolyline(format!("expected 5 or 8 keypoints, got {}", points.len()))
        })?;
        Self::new(layout, points.iter().map(|&p| (p, true)).collect())
    }

    /// Builds a polyline from explicit roles, checking them against the inferred layout.
    pub fn from_parts(points: &[Point2], roles: &[Role], visible: &[bool]) -> Result<Self> {
        if roles.len() != points.len() {
            return Err(Error::LengthMismatch {
                expected: points.len(),
                found: roles.len(),
            });
        }
        if visible.len() != points.len() {
            return Err(Error::LengthMismatch {
                expected: points.len(),
                found: visible.len(),
            });
        }
        let layout = Layout::from_len(points.len()).ok_or_else(|| {
            Error::InvalidPolyline(format!("expected 5 or 8 keypoints, got {}", points.len()))
        })?;
        if let Some(i) = (0..points.len()).find(|&i| layout.role(i) != roles[i]) {
            return Err(Error::InvalidPolyline(format!(
                "keypoint {i} must be {:?} in the {:?} layout",
                layout.role(i),
                layout
            )));
        }
        Self::new(
            layout,
            points
                .iter()
                .copied()
                .zip(visible.iter().copied())
                .collect(),
        )
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn keypoints(&self) -> &[Keypoint] {
        &self.keypoints
    }

    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints.is_empty()
    }

    pub fn stem_visible(&self) -> bool {
        self.layout == Layout::Full8
    }

    /// Index into [`keypoints`](Self::keypoints) for a full-layout slot.
    pub fn local_index(&self, slot: usize) -> Option<usize> {
        slot.checked_sub(self.layout.first_slot())
            .filter(|&i| i < self.keypoints.len())
    }

    pub fn slot_of(&self, local: usize) -> usize {
        local + self.layout.first_slot()
    }

    pub fn slot(&self, slot: usize) -> Option<&Keypoint> {
        self.local_index(slot).map(|i| &self.keypoints[i])
    }

    /// Position of a slot if it exists and is visible.
    pub fn visible_slot(&self, slot: usize) -> Option<Point2> {
        self.slot(slot).filter(|k| k.visible).map(|k| k.position)
    }

    pub fn visible_points(&self) -> impl Iterator<Item = Point2> + '_ {
        self.keypoints
            .iter()
            .filter(|k| k.visible)
            .map(|k| k.position)
    }

    /// Visible keypoints on the vein (basal through apex), in order.
    pub fn vein_points(&self) -> Vec<Point2> {
        (SLOT_BASAL..NUM_SLOTS)
            .filter_map(|s| self.visible_slot(s))
            .collect()
    }

    /// Slot-indexed view; absent and invisible slots are `None`.
    pub fn slots(&self) -> [Option<Point2>; NUM_SLOTS] {
        std::array::from_fn(|s| self.visible_slot(s))
    }

    /// Applies `f` to every keypoint position.
    pub fn map_points(&self, f: impl Fn(Point2) -> Point2) -> GuidedPolyline {
        GuidedPolyline {
            layout: self.layout,
            keypoints: self
                .keypoints
                .iter()
                .map(|k| Keypoint {
                    position: f(k.position),
                    ..*k
                })
                .collect(),
        }
    }

    /// Axis-aligned bounds of the visible keypoints as `(min, max)`.
    pub fn bounds(&self) -> (Point2, Point2) {
        let mut lo = Point2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in self.visible_points() {
            lo = Point2::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Point2::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        (lo, hi)
    }
}
