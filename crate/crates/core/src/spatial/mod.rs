//! Normalized image boxes to depth-resolved world anchors.
//!
//! Conventions: image/camera frame is +X right, +Y down, +Z forward. Depth is
//! metric Z-depth (distance along the camera's forward axis), not ray length.
//! The pose maps camera coordinates to world coordinates:
//! `p_world = R * p_cam + t`.

mod depth;
mod motion;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::Digest;

pub use depth::{DepthGrid, DepthMap};
pub use motion::{resolve_motion, Motion};

/// Upper bound of the normalized coordinate space used on the wire.
pub const NORM_MAX: i64 = 1000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpatialError {
    #[error("box coordinate {0} outside [0, 1000]")]
    CoordinateOutOfRange(i64),
    #[error("box is inverted: min {min} > max {max}")]
    InvertedBox { min: i64, max: i64 },
    #[error("invalid camera frame: {0}")]
    InvalidFrame(String),
    #[error("no valid depth inside box {0:?}")]
    NoDepthAvailable(NormBox),
    #[error("translation needs an end target")]
    MissingEndTarget,
    #[error("translation needs a start target")]
    MissingStartTarget,
    #[error("spec asks for neither translation nor rotation (or both)")]
    NoMotion,
    #[error("localization answer does not match the motion kind")]
    AnswerMismatch,
}

/// Axis-aligned box in normalized `[0, 1000]` image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[i64; 4]", into = "[i64; 4]")]
pub struct NormBox {
    x_min: u16,
    y_min: u16,
    x_max: u16,
    y_max: u16,
}

impl NormBox {
    pub fn new(x_min: i64, y_min: i64, x_max: i64, y_max: i64) -> Result<Self, SpatialError> {
        for c in [x_min, y_min, x_max, y_max] {
            if !(0..=NORM_MAX).contains(&c) {
                return Err(SpatialError::CoordinateOutOfRange(c));
            }
        }
        if x_min > x_max {
            return Err(SpatialError::InvertedBox { min: x_min, max: x_max });
        }
        if y_min > y_max {
            return Err(SpatialError::InvertedBox { min: y_min, max: y_max });
        }
        Ok(NormBox { x_min: x_min as u16, y_min: y_min as u16, x_max: x_max as u16, y_max: y_max as u16 })
    }

    pub fn full() -> Self {
        NormBox { x_min: 0, y_min: 0, x_max: 1000, y_max: 1000 }
    }

    pub fn coords(&self) -> [i64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max].map(i64::from)
    }

    /// Exact midpoint, no integer truncation.
    pub fn center(&self) -> (f64, f64) {
        ((f64::from(self.x_min) + f64::from(self.x_max)) / 2.0, (f64::from(self.y_min) + f64::from(self.y_max)) / 2.0)
    }

    pub fn is_degenerate(&self) -> bool {
        self.x_min == self.x_max || self.y_min == self.y_max
    }
}

impl TryFrom<[i64; 4]> for NormBox {
    type Error = SpatialError;
    fn try_from(c: [i64; 4]) -> Result<Self, Self::Error> {
        NormBox::new(c[0], c[1], c[2], c[3])
    }
}

impl From<NormBox> for [i64; 4] {
    fn from(b: NormBox) -> Self {
        b.coords()
    }
}

pub fn box_center(b: &NormBox) -> (f64, f64) {
    b.center()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

/// Camera-to-world rigid transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Pose { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    pub fn cam_to_world(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn world_to_cam(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (p - self.translation)
    }

    fn check(&self) -> Result<(), SpatialError> {
        let r = &self.rotation;
        let ortho = (r.transpose() * r - Matrix3::identity()).abs().max();
        let det = r.determinant();
        if !ortho.is_finite() || ortho > 1e-6 || (det - 1.0).abs() > 1e-6 {
            return Err(SpatialError::InvalidFrame(format!(
                "rotation is not proper orthonormal (|RᵀR−I|∞={ortho:.2e}, det={det:.6})"
            )));
        }
        if !self.translation.iter().all(|c| c.is_finite()) {
            return Err(SpatialError::InvalidFrame("non-finite translation".into()));
        }
        Ok(())
    }
}

/// Wire form: row-major rotation plus translation.
#[derive(Serialize, Deserialize)]
struct PoseWire {
    rotation: [f64; 9],
    translation: [f64; 3],
}

impl Serialize for Pose {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let r = &self.rotation;
        PoseWire {
            rotation: [
                r[(0, 0)],
                r[(0, 1)],
                r[(0, 2)],
                r[(1, 0)],
                r[(1, 1)],
                r[(1, 2)],
                r[(2, 0)],
                r[(2, 1)],
                r[(2, 2)],
            ],
            translation: [self.translation.x, self.translation.y, self.translation.z],
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let w = PoseWire::deserialize(d)?;
        Ok(Pose { rotation: Matrix3::from_row_slice(&w.rotation), translation: Vector3::from(w.translation) })
    }
}

/// An observed scene image with its camera model, pose and depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraFrame {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<Digest>,
    pub width: u32,
    pub height: u32,
    pub intrinsics: Intrinsics,
    pub pose: Pose,
    pub depth: DepthMap,
    #[serde(default)]
    pub timestamp: f64,
}

impl CameraFrame {
    pub fn validate(&self) -> Result<(), SpatialError> {
        let k = &self.intrinsics;
        let (w, h) = (f64::from(self.width), f64::from(self.height));
        if self.width == 0 || self.height == 0 {
            return Err(SpatialError::InvalidFrame("zero image size".into()));
        }
        if !(k.fx > 0.0 && k.fy > 0.0) {
            return Err(SpatialError::InvalidFrame("focal lengths must be positive".into()));
        }
        if !(0.0..w).contains(&k.cx) || !(0.0..h).contains(&k.cy) {
            return Err(SpatialError::InvalidFrame("principal point outside the image".into()));
        }
        self.pose.check()?;
        self.depth.check()
    }

    /// Pixel position of a normalized point.
    pub fn to_pixel(&self, u: f64, v: f64) -> (f64, f64) {
        (u / NORM_MAX as f64 * f64::from(self.width), v / NORM_MAX as f64 * f64::from(self.height))
    }

    /// Camera-space point at pixel `(px, py)` with Z-depth `depth`.
    pub fn back_project(&self, px: f64, py: f64, depth: f64) -> Vector3<f64> {
        let k = &self.intrinsics;
        Vector3::new((px - k.cx) / k.fx * depth, (py - k.cy) / k.fy * depth, depth)
    }

    /// Projects a world point to normalized `(u, v)` and its Z-depth; `None`
    /// for points behind the camera.
    pub fn project(&self, world: &Vector3<f64>) -> Option<(f64, f64, f64)> {
        let pc = self.pose.world_to_cam(world);
        if pc.z <= 0.0 {
            return None;
        }
        let k = &self.intrinsics;
        let px = k.fx * pc.x / pc.z + k.cx;
        let py = k.fy * pc.y / pc.z + k.cy;
        Some((px / f64::from(self.width) * NORM_MAX as f64, py / f64::from(self.height) * NORM_MAX as f64, pc.z))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AnchorConfidence {
    DepthHit,
    DepthFallback,
}

/// A resolved 3D world position for placing guidance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldAnchor {
    pub position: Vector3<f64>,
    pub source_box: NormBox,
    pub frame_timestamp: f64,
    pub confidence: AnchorConfidence,
}

/// World point for an explicit Z-depth, bypassing the depth map.
pub fn unproject_with_depth(frame: &CameraFrame, u: f64, v: f64, depth: f64) -> Vector3<f64> {
    let (px, py) = frame.to_pixel(u, v);
    frame.pose.cam_to_world(&frame.back_project(px, py, depth))
}

/// Unprojects normalized `(u, v)` through the frame's depth. An invalid depth
/// sample falls back to the median of valid depths inside `source_box`.
pub fn unproject(frame: &CameraFrame, u: f64, v: f64, source_box: NormBox) -> Result<WorldAnchor, SpatialError> {
    let (px, py) = frame.to_pixel(u, v);
    let (depth, confidence) = match frame.depth.sample(px, py, frame.width, frame.height) {
        Some(d) => (d, AnchorConfidence::DepthHit),
        None => {
            let d =
                frame.depth.fallback(frame, &source_box, px, py).ok_or(SpatialError::NoDepthAvailable(source_box))?;
            (d, AnchorConfidence::DepthFallback)
        }
    };
    let position = frame.pose.cam_to_world(&frame.back_project(px, py, depth));
    Ok(WorldAnchor { position, source_box, frame_timestamp: frame.timestamp, confidence })
}

/// Anchor at the center of a box.
pub fn anchor_box(frame: &CameraFrame, b: NormBox) -> Result<WorldAnchor, SpatialError> {
    let (u, v) = b.center();
    unproject(frame, u, v, b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GuidanceAxis {
    X,
    Y,
    Z,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RotationDirection {
    /// Clockwise, looking from the positive side of the axis.
    Positive,
    /// Counter-clockwise, looking from the positive side of the axis.
    Negative,
}

/// Maps a guidance-frame axis (X right, Y physically up, Z toward the viewer)
/// into a world-frame unit vector. Guidance axes are `(Xc, -Yc, -Zc)` in the
/// camera frame.
pub fn guidance_axis_to_world(frame: &CameraFrame, axis: GuidanceAxis) -> Vector3<f64> {
    let cam = match axis {
        GuidanceAxis::X => Vector3::new(1.0, 0.0, 0.0),
        GuidanceAxis::Y => Vector3::new(0.0, -1.0, 0.0),
        GuidanceAxis::Z => Vector3::new(0.0, 0.0, -1.0),
    };
    (frame.pose.rotation * cam).normalize()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationCue3D {
    pub pivot: WorldAnchor,
    pub axis: Vector3<f64>,
    pub direction: RotationDirection,
}
