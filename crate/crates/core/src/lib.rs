//! Evaluation metrics and training-target codecs for keypoint-guided polylines.
//!
//! A keypoint-guided polyline describes the stem and primary vein of a leaf with
//! eight ordered keypoints. Three of them ("true" keypoints: stem base, leaf basal,
//! leaf apex) have a distinct anatomical position; the remaining "pseudo" keypoints
//! only guide the course of the line and may legitimately slide along it.
//!
//! The crate provides:
//!
//! * [`geometry`]: point/segment projection, convex clipping, rotated-box IoU, PCA axis.
//! * [`metrics`]: object keypoint similarity (OKS) and its projected variant (POKS).
//! * [`eval`]: greedy matching, VOC-style AP, mAP over thresholds, full reports.
//! * [`codec`]: polar keypoint, offset and oriented-box regression targets.
//! * [`heatmap`]: Gaussian heatmap rendering, peak extraction, focal loss.
//! * [`io`]: annotation/prediction/report/tensor file formats, splits and statistics.
//!
//! Data-parallel loops run on rayon when the `parallel` feature (default) is enabled
//! and fall back to plain iterators otherwise. Results never depend on the number of
//! worker threads.

pub mod codec;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod heatmap;
pub mod io;
pub mod metrics;
pub mod par;
pub mod polyline;

pub use error::{Error, Result};
pub use geometry::{ConvexPolygon, OrientedBox, Point2, Segment};
pub use polyline::{GuidedPolyline, Keypoint, Layout, Role};
