//! Exact 2D primitives: projection, convex clipping, rotated boxes, principal axes.
//!
//! Angles are stored in degrees normalized to `[0, 360)`; all trigonometry is done in
//! radians. Image coordinates are used throughout (x to the right, y down), but
//! "counter-clockwise" always refers to positive shoelace area.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polyline::{GuidedPolyline, Role};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ORIGIN: Point2 = Point2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub(crate) fn ensure_finite(self, what: &'static str) -> Result<Self> {
        if self.is_finite() {
            Ok(self)
        } else {
            Err(Error::NonFinite(what))
        }
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, other: Point2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self - other).norm()
    }

    /// Rotates about the origin by `theta` radians.
    pub fn rotate(self, theta: f64) -> Point2 {
        let (s, c) = theta.sin_cos();
        Point2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn rotate_about(self, pivot: Point2, theta: f64) -> Point2 {
        pivot + (self - pivot).rotate(theta)
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, rhs: f64) -> Point2 {
        Point2::new(self.x * rhs, self.y * rhs)
    }
}

impl Neg for Point2 {
    type Output = Point2;
    fn neg(self) -> Point2 {
        Point2::new(-self.x, -self.y)
    }
}

impl From<(f64, f64)> for Point2 {
    fn from((x, y): (f64, f64)) -> Self {
        Point2::new(x, y)
    }
}

/// Normalizes an angle in degrees to `[0, 360)`.
pub fn normalize_degrees(deg: f64) -> f64 {
    let d = deg.rem_euclid(360.0);
    if d >= 360.0 {
        0.0
    } else {
        d
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: Point2,
    pub b: Point2,
}

impl Segment {
    pub const fn new(a: Point2, b: Point2) -> Self {
        Segment { a, b }
    }

    pub fn is_degenerate(&self) -> bool {
        self.a == self.b
    }

    pub fn length(&self) -> f64 {
        self.a.distance(self.b)
    }

    /// Point at parameter `t` (unclamped).
    pub fn at(&self, t: f64) -> Point2 {
        self.a + (self.b - self.a) * t
    }
}

/// Result of projecting a point onto a segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub point: Point2,
    /// Segment parameter, clamped to `[0, 1]`.
    pub t: f64,
}

/// Projects `p` onto `seg`, clamping the foot point to the segment.
///
/// A degenerate segment projects every point onto its first endpoint with `t = 0`.
pub fn project_point_to_segment(p: Point2, seg: Segment) -> Result<Projection> {
    p.ensure_finite("projected point")?;
    seg.a.ensure_finite("segment endpoint")?;
    seg.b.ensure_finite("segment endpoint")?;
    let dir = seg.b - seg.a;
    let len2 = dir.dot(dir);
    if len2 == 0.0 {
        return Ok(Projection {
            point: seg.a,
            t: 0.0,
        });
    }
    let t = ((p - seg.a).dot(dir) / len2).clamp(0.0, 1.0);
    let point = if t == 1.0 { seg.b } else { seg.a + dir * t };
    Ok(Projection { point, t })
}

/// Distance from `p` to the closest point of `seg`.
pub fn distance_to_segment(p: Point2, seg: Segment) -> Result<f64> {
    Ok(p.distance(project_point_to_segment(p, seg)?.point))
}

/// Projection distance of a predicted keypoint against the ground-truth polyline.
///
/// `index` addresses the polyline's own keypoint list. For a true keypoint this is the
/// Euclidean distance to the keypoint. For a pseudo keypoint the prediction is projected
/// onto each neighbor segment `[k_i, k_{i-1}]` and `[k_i, k_{i+1}]` whose far endpoint is
/// visible, and the smallest projection distance is returned.
pub fn min_projection_distance(
    pred: Point2,
    polyline: &GuidedPolyline,
    index: usize,
) -> Result<f64> {
    pred.ensure_finite("prediction")?;
    let kps = polyline.keypoints();
    let kp = kps.get(index).ok_or(Error::IndexOutOfRange {
        index,
        len: kps.len(),
    })?;
    if !kp.visible {
        return Err(Error::InvisibleKeypoint(index));
    }
    if kp.role == Role::True {
        return Ok(pred.distance(kp.position));
    }
    let neighbors = [index.checked_sub(1), Some(index + 1)];
    let mut best: Option<f64> = None;
    for n in neighbors.into_iter().flatten() {
        let Some(other) = kps.get(n) else { continue };
        if !other.visible {
            continue;
        }
        let d = distance_to_segment(pred, Segment::new(kp.position, other.position))?;
        best = Some(best.map_or(d, |b| b.min(d)));
    }
    best.ok_or(Error::NoVisibleNeighbor(index))
}

/// Signed shoelace area; positive for counter-clockwise vertex order.
pub fn signed_area(vertices: &[Point2]) -> f64 {
    if vertices.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for (i, &p) in vertices.iter().enumerate() {
        let q = vertices[(i + 1) % vertices.len()];
        acc += p.cross(q);
    }
    0.5 * acc
}

/// A convex polygon with counter-clockwise vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexPolygon {
    vertices: Vec<Point2>,
}

impl ConvexPolygon {
    /// Validates and stores a convex polygon. Clockwise input is reversed.
    pub fn new(mut vertices: Vec<Point2>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::InvalidPolygon(format!(
                "need at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if !vertices.iter().all(|p| p.is_finite()) {
            return Err(Error::NonFinite("polygon vertex"));
        }
        let n = vertices.len();
        for i in 0..n {
            if vertices[i] == vertices[(i + 1) % n] {
                return Err(Error::InvalidPolygon(format!("repeated vertex at {i}")));
            }
        }
        let area = signed_area(&vertices);
        let scale = vertices
            .iter()
            .map(|p| p.x.abs().max(p.y.abs()))
            .fold(1.0_f64, f64::max);
        let tol = 1e-12 * scale * scale;
        if area.abs() <= tol {
            return Err(Error::InvalidPolygon("zero area".into()));
        }
        if area < 0.0 {
            vertices.reverse();
        }
        for i in 0..n {
            let p = vertices[i];
            let q = vertices[(i + 1) % n];
            let r = vertices[(i + 2) % n];
            if (q - p).cross(r - q) < -tol {
                return Err(Error::InvalidPolygon(format!(
                    "not convex at vertex {}",
                    (i + 1) % n
                )));
            }
        }
        Ok(ConvexPolygon { vertices })
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    /// Point-in-polygon test, boundary inclusive.
    pub fn contains(&self, p: Point2) -> bool {
        let n = self.vertices.len();
        (0..n).all(|i| {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            (b - a).cross(p - a) >= 0.0
        })
    }
}

/// Area of the intersection of two convex polygons.
///
/// Clips `a` against every edge of `b` (Sutherland–Hodgman) and measures the result
/// with the shoelace formula.
pub fn polygon_intersection_area(a: &ConvexPolygon, b: &ConvexPolygon) -> f64 {
    let mut subject: Vec<Point2> = a.vertices.clone();
    let clip = &b.vertices;
    for i in 0..clip.len() {
        if subject.is_empty() {
            break;
        }
        let p = clip[i];
        let edge = clip[(i + 1) % clip.len()] - p;
        let side = |x: Point2| edge.cross(x - p);
        let input = std::mem::take(&mut subject);
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let (sc, sp) = (side(cur), side(prev));
            if sc >= 0.0 {
                if sp < 0.0 {
                    subject.push(prev + (cur - prev) * (sp / (sp - sc)));
                }
                subject.push(cur);
            } else if sp >= 0.0 {
                subject.push(prev + (cur - prev) * (sp / (sp - sc)));
            }
        }
    }
    signed_area(&subject).max(0.0)
}

/// Oriented box anchored at an object point rather than at its geometric center.
///
/// In the leaf frame (apex along +x) the box spans `x in [-w_tl, w_br]` and
/// `y in [-h_tl, h_br]` around `center`; the frame is rotated by `beta` degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 7]", into = "[f64; 7]")]
pub struct OrientedBox {
    center: Point2,
    w_tl: f64,
    w_br: f64,
    h_tl: f64,
    h_br: f64,
    beta: f64,
}

impl OrientedBox {
    pub fn new(
        center: Point2,
        w_tl: f64,
        w_br: f64,
        h_tl: f64,
        h_br: f64,
        beta_deg: f64,
    ) -> Result<Self> {
        center.ensure_finite("box center")?;
        let parts = [w_tl, w_br, h_tl, h_br, beta_deg];
        if !parts.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("box parameter"));
        }
        if [w_tl, w_br, h_tl, h_br].iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidBox("negative extent".into()));
        }
        if w_tl + w_br <= 0.0 || h_tl + h_br <= 0.0 {
            return Err(Error::InvalidBox("zero width or height".into()));
        }
        Ok(OrientedBox {
            center,
            w_tl,
            w_br,
            h_tl,
            h_br,
            beta: normalize_degrees(beta_deg),
        })
    }

    /// Box with its anchor at the geometric center.
    pub fn centered(center: Point2, width: f64, height: f64, beta_deg: f64) -> Result<Self> {
        Self::new(
            center,
            width / 2.0,
            width / 2.0,
            height / 2.0,
            height / 2.0,
            beta_deg,
        )
    }

    pub fn center(&self) -> Point2 {
        self.center
    }
    pub fn w_tl(&self) -> f64 {
        self.w_tl
    }
    pub fn w_br(&self) -> f64 {
        self.w_br
    }
    pub fn h_tl(&self) -> f64 {
        self.h_tl
    }
    pub fn h_br(&self) -> f64 {
        self.h_br
    }
    /// Orientation in degrees, `[0, 360)`.
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn width(&self) -> f64 {
        self.w_tl + self.w_br
    }
    pub fn height(&self) -> f64 {
        self.h_tl + self.h_br
    }
    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Center of the rectangle itself, which differs from the anchor for uneven splits.
    pub fn geometric_center(&self) -> Point2 {
        let local = Point2::new((self.w_br - self.w_tl) / 2.0, (self.h_br - self.h_tl) / 2.0);
        self.center + local.rotate(self.beta.to_radians())
    }

    /// Corners in counter-clockwise order starting at the top-left leaf-frame corner.
    pub fn corners(&self) -> [Point2; 4] {
        let theta = self.beta.to_radians();
        [
            Point2::new(-self.w_tl, -self.h_tl),
            Point2::new(self.w_br, -self.h_tl),
            Point2::new(self.w_br, self.h_br),
            Point2::new(-self.w_tl, self.h_br),
        ]
        .map(|p| self.center + p.rotate(theta))
    }

    /// Recovers a box from corners in [`OrientedBox::corners`] order and its anchor.
    pub fn from_corners(corners: [Point2; 4], center: Point2) -> Result<Self> {
        let u = corners[1] - corners[0];
        let v = corners[3] - corners[0];
        let (w, h) = (u.norm(), v.norm());
        if w == 0.0 || h == 0.0 {
            return Err(Error::InvalidBox("collapsed corners".into()));
        }
        let (ux, vy) = (u * (1.0 / w), v * (1.0 / h));
        let rel = center - corners[0];
        // Anchors on an edge may land a rounding error outside it.
        let tol = 1e-9 * w.max(h).max(1.0);
        let split = |t: f64, len: f64| {
            if t < -tol || t > len + tol {
                Err(Error::InvalidBox("anchor lies outside the box".into()))
            } else {
                Ok(t.clamp(0.0, len))
            }
        };
        let w_tl = split(rel.dot(ux), w)?;
        let h_tl = split(rel.dot(vy), h)?;
        let beta = u.y.atan2(u.x).to_degrees();
        Self::new(center, w_tl, w - w_tl, h_tl, h - h_tl, beta)
    }

    pub fn to_polygon(&self) -> ConvexPolygon {
        ConvexPolygon {
            vertices: self.corners().to_vec(),
        }
    }

    /// Boundary-inclusive containment test evaluated in the box frame.
    pub fn contains(&self, p: Point2) -> bool {
        let q = (p - self.center).rotate(-self.beta.to_radians());
        q.x >= -self.w_tl && q.x <= self.w_br && q.y >= -self.h_tl && q.y <= self.h_br
    }

    /// Same box with every length multiplied by `factor` and the anchor scaled about the origin.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.center * factor,
            self.w_tl * factor,
            self.w_br * factor,
            self.h_tl * factor,
            self.h_br * factor,
            self.beta,
        )
    }
}

impl TryFrom<[f64; 7]> for OrientedBox {
    type Error = Error;
    fn try_from(v: [f64; 7]) -> Result<Self> {
        OrientedBox::new(Point2::new(v[0], v[1]), v[2], v[3], v[4], v[5], v[6])
    }
}

impl From<OrientedBox> for [f64; 7] {
    fn from(b: OrientedBox) -> Self {
        [
            b.center.x, b.center.y, b.w_tl, b.w_br, b.h_tl, b.h_br, b.beta,
        ]
    }
}

/// Corners of `bx`, counter-clockwise.
pub fn obb_corners(bx: &OrientedBox) -> [Point2; 4] {
    bx.corners()
}

/// Intersection over union of two oriented boxes using exact convex clipping.
pub fn rotated_iou(a: &OrientedBox, b: &OrientedBox) -> Result<f64> {
    let (area_a, area_b) = (a.area(), b.area());
    if area_a <= 0.0 || area_b <= 0.0 {
        return Err(Error::InvalidBox("zero area".into()));
    }
    let inter = polygon_intersection_area(&a.to_polygon(), &b.to_polygon());
    let union = area_a + area_b - inter;
    Ok((inter / union).clamp(0.0, 1.0))
}

/// Orientation of the first principal component of `points`, in degrees `[0, 360)`.
///
/// The axis sign is chosen so that it points from `from_point` towards `to_point`.
/// If that chord is degenerate the first-to-last point chord is used instead. For an
/// isotropic point cloud the chord direction itself is returned.
pub fn principal_axis(points: &[Point2], from_point: Point2, to_point: Point2) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::Degenerate(format!(
            "principal axis needs at least 2 points, got {}",
            points.len()
        )));
    }
    if !points.iter().all(|p| p.is_finite()) {
        return Err(Error::NonFinite("principal axis point"));
    }
    from_point.ensure_finite("axis start")?;
    to_point.ensure_finite("axis end")?;

    let n = points.len() as f64;
    let mean = points.iter().fold(Point2::ORIGIN, |acc, &p| acc + p) * (1.0 / n);
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for &p in points {
        let d = p - mean;
        sxx += d.x * d.x;
        syy += d.y * d.y;
        sxy += d.x * d.y;
    }
    let scale = points
        .iter()
        .map(|p| p.x.abs().max(p.y.abs()))
        .fold(1.0_f64, f64::max);
    let spread = sxx + syy;
    if spread <= (1e-12 * scale).powi(2) * n {
        return Err(Error::Degenerate("all points coincide".into()));
    }

    let tiny = 1e-12 * scale;
    let mut chord = to_point - from_point;
    if chord.norm() <= tiny {
        chord = points[points.len() - 1] - points[0];
    }
    let chord_ok = chord.norm() > tiny;

    let isotropic = (2.0 * sxy).abs() <= 1e-12 * spread && (sxx - syy).abs() <= 1e-12 * spread;
    let theta = if isotropic {
        if !chord_ok {
            return Err(Error::Degenerate(
                "isotropic points without a direction chord".into(),
            ));
        }
        chord.y.atan2(chord.x)
    } else {
        if !chord_ok {
            return Err(Error::Degenerate(
                "axis direction cannot be resolved".into(),
            ));
        }
        let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
        let dir = Point2::new(theta.cos(), theta.sin());
        if dir.dot(chord) < 0.0 {
            theta + std::f64::consts::PI
        } else {
            theta
        }
    };
    Ok(normalize_degrees(theta.to_degrees()))
}
