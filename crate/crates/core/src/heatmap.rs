//! Gaussian heatmaps on the downscaled output grid.
//!
//! Anchors are quantized to their grid cell (`floor(p / r)`) before splatting, so every
//! rendered object peaks at exactly 1.0 in its cell; the sub-cell remainder is what the
//! offset target carries. Overlapping objects combine with a pixel-wise maximum.
//! Gaussians are truncated to a square window of radius `ceil(3 sigma)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{distance_to_segment, OrientedBox, Point2, Segment};
use crate::par;
use crate::polyline::{GuidedPolyline, NUM_SLOTS};

/// Number of polyline segments, one S-heatmap channel each.
pub const NUM_SEGMENTS: usize = NUM_SLOTS - 1;

/// Overlap used by the size-adaptive radius.
pub const ADAPTIVE_MIN_OVERLAP: f64 = 0.7;

#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Heatmap {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::InvalidConfig(format!(
                "heatmap dimensions must be positive, got {channels}x{height}x{width}"
            )));
        }
        Ok(Heatmap {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        })
    }

    /// Wraps row-major `[channel][row][col]` data, checking the `[0, 1]` value range.
    pub fn from_raw(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        let mut hm = Self::zeros(channels, height, width)?;
        if data.len() != hm.data.len() {
            return Err(Error::LengthMismatch {
                expected: hm.data.len(),
                found: data.len(),
            });
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidTarget(format!(
                "heatmap value {v} outside [0, 1]"
            )));
        }
        hm.data = data;
        Ok(hm)
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }
    pub fn channels(&self) -> usize {
        self.channels
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, channel: usize, row: usize, col: usize) -> f32 {
        self.data[(channel * self.height + row) * self.width + col]
    }

    pub fn channel(&self, channel: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[channel * n..(channel + 1) * n]
    }

    fn from_channels(height: usize, width: usize, planes: Vec<Vec<f32>>) -> Self {
        Heatmap {
            channels: planes.len(),
            height,
            width,
            data: planes.concat(),
        }
    }
}

/// Gaussian width, in output-grid pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum GaussianSpec {
    Fixed {
        sigma: f64,
    },
    /// `sigma = max(min_radius, gaussian_radius(h, w, 0.7)) / 3` from the object size.
    SizeAdaptive {
        min_radius: f64,
    },
}

impl Default for GaussianSpec {
    fn default() -> Self {
        GaussianSpec::SizeAdaptive { min_radius: 2.0 }
    }
}

impl GaussianSpec {
    pub fn validate(&self) -> Result<()> {
        let v = match *self {
            GaussianSpec::Fixed { sigma } => sigma,
            GaussianSpec::SizeAdaptive { min_radius } => min_radius,
        };
        if v.is_finite() && v > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "gaussian width must be positive, got {v}"
            )))
        }
    }

    /// Sigma for an object of `width` x `height` output-grid pixels.
    pub fn sigma_for(&self, width: f64, height: f64) -> f64 {
        match *self {
            GaussianSpec::Fixed { sigma } => sigma,
            GaussianSpec::SizeAdaptive { min_radius } => {
                min_radius.max(gaussian_radius(height, width, ADAPTIVE_MIN_OVERLAP)) / 3.0
            }
        }
    }
}

/// Largest corner displacement that keeps a box of `height` x `width` above
/// `min_overlap` IoU with the original (the CenterNet radius formula).
pub fn gaussian_radius(height: f64, width: f64, min_overlap: f64) -> f64 {
    let (h, w, o) = (height, width, min_overlap);

    let b1 = h + w;
    let c1 = w * h * (1.0 - o) / (1.0 + o);
    let r1 = (b1 + (b1 * b1 - 4.0 * c1).max(0.0).sqrt()) / 2.0;

    let b2 = 2.0 * (h + w);
    let c2 = (1.0 - o) * w * h;
    let r2 = (b2 + (b2 * b2 - 16.0 * c2).max(0.0).sqrt()) / 2.0;

    let a3 = 4.0 * o;
    let b3 = -2.0 * o * (h + w);
    let c3 = (o - 1.0) * w * h;
    let r3 = (b3 + (b3 * b3 - 4.0 * a3 * c3).max(0.0).sqrt()) / 2.0;

    r1.min(r2).min(r3)
}

/// Output grid for an input image downscaled by `r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridShape {
    pub height: usize,
    pub width: usize,
    pub r: u32,
}

impl GridShape {
    /// Grid covering an `image_width` x `image_height` image (dimensions rounded up).
    pub fn for_image(image_width: u32, image_height: u32, r: u32) -> Result<Self> {
        if r == 0 {
            return Err(Error::InvalidConfig(
                "downscale ratio must be at least 1".into(),
            ));
        }
        Ok(GridShape {
            height: image_height.div_ceil(r) as usize,
            width: image_width.div_ceil(r) as usize,
            r,
        })
    }

    /// Grid cell holding image point `p`, or `None` outside the grid.
    pub fn cell_of(&self, p: Point2) -> Option<(usize, usize)> {
        let (row, col) = self.unbounded_cell(p)?;
        let inside =
            (0..self.height as i64).contains(&row) && (0..self.width as i64).contains(&col);
        inside.then_some((row as usize, col as usize))
    }

    /// `(row, col)` of the cell holding `p`, which may lie beyond the grid.
    pub fn unbounded_cell(&self, p: Point2) -> Option<(i64, i64)> {
        if !p.is_finite() {
            return None;
        }
        let r = self.r as f64;
        Some(((p.y / r).floor() as i64, (p.x / r).floor() as i64))
    }
}

/// An object for the center heatmap: anchor and size in input-image pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CenterMark {
    pub center: Point2,
    pub width: f64,
    pub height: f64,
}

/// An object for the keypoint heatmaps: polyline and size in input-image pixels.
#[derive(Debug, Clone, Copy)]
pub struct PolylineMark<'a> {
    pub polyline: &'a GuidedPolyline,
    pub width: f64,
    pub height: f64,
}

impl<'a> PolylineMark<'a> {
    pub fn new(polyline: &'a GuidedPolyline, obb: Option<&OrientedBox>) -> Self {
        let (width, height) = obb.map_or_else(
            || {
                let (lo, hi) = polyline.bounds();
                (hi.x - lo.x, hi.y - lo.y)
            },
            |b| (b.width(), b.height()),
        );
        PolylineMark {
            polyline,
            width,
            height,
        }
    }
}

/// A rendered heatmap and the number of marks skipped for lying outside the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub heatmap: Heatmap,
    pub skipped: usize,
}

struct Plane<'a> {
    data: &'a mut [f32],
    height: usize,
    width: usize,
}

impl Plane<'_> {
    /// Splats `value(row, col)` over the window `[r0, r1] x [c0, c1]`, clipped to the plane.
    fn splat(&mut self, rows: (i64, i64), cols: (i64, i64), value: impl Fn(f64, f64) -> f64) {
        let r0 = rows.0.max(0);
        let r1 = rows.1.min(self.height as i64 - 1);
        let c0 = cols.0.max(0);
        let c1 = cols.1.min(self.width as i64 - 1);
        for row in r0..=r1 {
            for col in c0..=c1 {
                let v = value(row as f64, col as f64) as f32;
                let cell = &mut self.data[row as usize * self.width + col as usize];
                if v > *cell {
                    *cell = v;
                }
            }
        }
    }

    fn point(&mut self, cell: (usize, usize), sigma: f64) {
        let reach = (3.0 * sigma).ceil() as i64;
        let (cy, cx) = (cell.0 as i64, cell.1 as i64);
        let denom = 2.0 * sigma * sigma;
        self.splat(
            (cy - reach, cy + reach),
            (cx - reach, cx + reach),
            |row, col| {
                let (dy, dx) = (row - cy as f64, col - cx as f64);
                (-(dx * dx + dy * dy) / denom).exp()
            },
        );
    }

    fn segment(&mut self, a: (i64, i64), b: (i64, i64), sigma: f64) {
        let reach = (3.0 * sigma).ceil() as i64;
        let seg = Segment::new(
            Point2::new(a.1 as f64, a.0 as f64),
            Point2::new(b.1 as f64, b.0 as f64),
        );
        let denom = 2.0 * sigma * sigma;
        let rows = (a.0.min(b.0) - reach, a.0.max(b.0) + reach);
        let cols = (a.1.min(b.1) - reach, a.1.max(b.1) + reach);
        self.splat(rows, cols, |row, col| {
            let d = distance_to_segment(Point2::new(col, row), seg).unwrap_or(f64::INFINITY);
            (-(d * d) / denom).exp()
        });
    }
}

fn sigma_on_grid(spec: &GaussianSpec, grid: &GridShape, width: f64, height: f64) -> f64 {
    let r = grid.r as f64;
    spec.sigma_for(width / r, height / r)
}

/// One-channel heatmap with a Gaussian at each object's anchor cell.
pub fn render_center_heatmap(
    marks: &[CenterMark],
    grid: GridShape,
    spec: &GaussianSpec,
) -> Result<Rendered> {
    spec.validate()?;
    let mut hm = Heatmap::zeros(1, grid.height, grid.width)?;
    let mut skipped = 0;
    let mut plane = Plane {
        data: &mut hm.data,
        height: grid.height,
        width: grid.width,
    };
    for m in marks {
        match grid.cell_of(m.center) {
            Some(cell) => plane.point(cell, sigma_on_grid(spec, &grid, m.width, m.height)),
            None => skipped += 1,
        }
    }
    Ok(Rendered {
        heatmap: hm,
        skipped,
    })
}

/// Eight-channel heatmap, one channel per keypoint slot; invisible keypoints render nothing.
pub fn render_p_heatmap(
    marks: &[PolylineMark<'_>],
    grid: GridShape,
    spec: &GaussianSpec,
) -> Result<Rendered> {
    spec.validate()?;
    let planes = par::map_range(NUM_SLOTS, |slot| {
        let mut data = vec![0.0f32; grid.height * grid.width];
        let mut skipped = 0;
        let mut plane = Plane {
            data: &mut data,
            height: grid.height,
            width: grid.width,
        };
        for m in marks {
            let Some(p) = m.polyline.visible_slot(slot) else {
                continue;
            };
            match grid.cell_of(p) {
                Some(cell) => plane.point(cell, sigma_on_grid(spec, &grid, m.width, m.height)),
                None => skipped += 1,
            }
        }
        (data, skipped)
    });
    finish(grid, planes)
}

/// Seven-channel heatmap of distance to each polyline segment `[k_c, k_{c+1}]`.
///
/// A segment is drawn when both endpoints are visible. Segments reaching beyond the grid
/// are clipped to it and counted in `skipped`.
pub fn render_s_heatmap(
    marks: &[PolylineMark<'_>],
    grid: GridShape,
    spec: &GaussianSpec,
) -> Result<Rendered> {
    spec.validate()?;
    let planes = par::map_range(NUM_SEGMENTS, |c| {
        let mut data = vec![0.0f32; grid.height * grid.width];
        let mut skipped = 0;
        let mut plane = Plane {
            data: &mut data,
            height: grid.height,
            width: grid.width,
        };
        for m in marks {
            let (Some(a), Some(b)) = (m.polyline.visible_slot(c), m.polyline.visible_slot(c + 1))
            else {
                continue;
            };
            if grid.cell_of(a).is_none() || grid.cell_of(b).is_none() {
                skipped += 1;
            }
            if let (Some(ca), Some(cb)) = (grid.unbounded_cell(a), grid.unbounded_cell(b)) {
                plane.segment(ca, cb, sigma_on_grid(spec, &grid, m.width, m.height));
            }
        }
        (data, skipped)
    });
    finish(grid, planes)
}

fn finish(grid: GridShape, planes: Vec<(Vec<f32>, usize)>) -> Result<Rendered> {
    if grid.height == 0 || grid.width == 0 {
        return Err(Error::InvalidConfig("empty grid".into()));
    }
    let skipped = planes.iter().map(|(_, s)| s).sum();
    let heatmap = Heatmap::from_channels(
        grid.height,
        grid.width,
        planes.into_iter().map(|(d, _)| d).collect(),
    );
    Ok(Rendered { heatmap, skipped })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub channel: usize,
    pub row: usize,
    pub col: usize,
    pub score: f32,
}

impl Peak {
    /// Cell position in output-grid pixels (x = column, y = row).
    pub fn position(&self) -> Point2 {
        Point2::new(self.col as f64, self.row as f64)
    }
}

/// Local maxima of each channel's 3x3 neighborhood.
///
/// On plateaus only the lowest row-major cell counts. Peaks need a positive score of at
/// least `score_threshold`; at most `top_k` are kept per channel. The result is ordered
/// by channel, then by descending score, then by row-major index.
pub fn extract_peaks(hm: &Heatmap, top_k: usize, score_threshold: f32) -> Result<Vec<Peak>> {
    if top_k == 0 {
        return Err(Error::InvalidConfig("top_k must be at least 1".into()));
    }
    let (h, w) = (hm.height, hm.width);
    let per_channel = par::map_range(hm.channels, |c| {
        let plane = hm.channel(c);
        let mut found = Vec::new();
        for row in 0..h {
            for col in 0..w {
                let idx = row * w + col;
                let v = plane[idx];
                if v <= 0.0 || v < score_threshold {
                    continue;
                }
                let mut is_peak = true;
                'scan: for nr in row.saturating_sub(1)..=(row + 1).min(h - 1) {
                    for nc in col.saturating_sub(1)..=(col + 1).min(w - 1) {
                        let nidx = nr * w + nc;
                        if nidx == idx {
                            continue;
                        }
                        let nv = plane[nidx];
                        if nv > v || (nv == v && nidx < idx) {
                            is_peak = false;
                            break 'scan;
                        }
                    }
                }
                if is_peak {
                    found.push(Peak {
                        channel: c,
                        row,
                        col,
                        score: v,
                    });
                }
            }
        }
        found.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then((a.row, a.col).cmp(&(b.row, b.col)))
        });
        found.truncate(top_k);
        found
    });
    Ok(per_channel.concat())
}

/// Peak positions grouped by keypoint slot for an eight-channel P-heatmap.
///
/// `offsets`, when given, is a two-channel map of sub-cell `(dx, dy)` added to each peak.
pub fn candidates_from_p_heatmap(peaks: &[Peak], offsets: Option<&Heatmap>) -> Vec<Vec<Point2>> {
    let mut out = vec![Vec::new(); NUM_SLOTS];
    for p in peaks {
        if p.channel < NUM_SLOTS {
            out[p.channel].push(corrected(p, offsets));
        }
    }
    out
}

/// Peak positions grouped by keypoint slot for a seven-channel S-heatmap: slot `i`
/// collects the peaks of its adjacent segments `i - 1` and `i`.
pub fn candidates_from_s_heatmap(peaks: &[Peak], offsets: Option<&Heatmap>) -> Vec<Vec<Point2>> {
    let mut out = vec![Vec::new(); NUM_SLOTS];
    for p in peaks {
        if p.channel >= NUM_SEGMENTS {
            continue;
        }
        let pos = corrected(p, offsets);
        out[p.channel].push(pos);
        out[p.channel + 1].push(pos);
    }
    out
}

fn corrected(p: &Peak, offsets: Option<&Heatmap>) -> Point2 {
    match offsets {
        Some(o) if o.channels >= 2 && p.row < o.height && p.col < o.width => {
            p.position() + Point2::new(o.get(0, p.row, p.col) as f64, o.get(1, p.row, p.col) as f64)
        }
        _ => p.position(),
    }
}

/// Replaces each regressed keypoint with its nearest candidate within `search_radius`.
///
/// All positions are in output-grid pixels. Keypoints without a close enough candidate
/// keep their regressed position.
pub fn refine_keypoints(
    regressed: &[Option<Point2>; NUM_SLOTS],
    candidates: &[Vec<Point2>],
    search_radius: f64,
) -> Result<[Option<Point2>; NUM_SLOTS]> {
    if !(search_radius.is_finite() && search_radius > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "search radius must be positive, got {search_radius}"
        )));
    }
    let mut out = *regressed;
    for (slot, kp) in out.iter_mut().enumerate() {
        let Some(p) = *kp else { continue };
        let best = candidates
            .get(slot)
            .into_iter()
            .flatten()
            .map(|&c| (c.distance(p), c))
            .filter(|(d, _)| *d <= search_radius)
            .min_by(|a, b| a.0.total_cmp(&b.0));
        if let Some((_, c)) = best {
            *kp = Some(c);
        }
    }
    Ok(out)
}

/// Snap radius of a decoded box in output-grid pixels: a tenth of its diagonal.
pub fn default_search_radius(obb: &OrientedBox, r: u32) -> f64 {
    0.1 * obb.width().hypot(obb.height()) / r.max(1) as f64
}

/// Lower/upper clip applied to predictions inside [`focal_loss`].
pub const FOCAL_CLIP: f64 = 1e-6;

/// Penalty-reduced pixel-wise focal loss, normalized by the number of positive pixels
/// (ground truth exactly 1), or by 1 when there are none.
pub fn focal_loss(pred: &Heatmap, gt: &Heatmap, alpha: f64, beta: f64) -> Result<f64> {
    if pred.shape() != gt.shape() {
        return Err(Error::ShapeMismatch(pred.shape(), gt.shape()));
    }
    let mut loss = 0.0;
    let mut positives = 0usize;
    for (&p, &y) in pred.data.iter().zip(&gt.data) {
        let p = (p as f64).clamp(FOCAL_CLIP, 1.0 - FOCAL_CLIP);
        if y == 1.0 {
            positives += 1;
            loss -= (1.0 - p).powf(alpha) * p.ln();
        } else {
            loss -= (1.0 - y as f64).powf(beta) * p.powf(alpha) * (1.0 - p).ln();
        }
    }
    Ok(loss / positives.max(1) as f64)
}
