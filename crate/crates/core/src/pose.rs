//! The optimizable 5-DoF object state.

use std::f64::consts::TAU;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::Vec3;

/// Uniform scale, yaw about +z, and world translation.
///
/// The transform is `W(x) = scale * R_z(yaw) * x + translation`, applied to
/// points in the object's normalized local frame (origin at the bottom
/// center of the mesh bounding box).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose5DoF {
    pub scale: f64,
    pub yaw: f64,
    pub translation: Vec3,
}

impl Default for Pose5DoF {
    fn default() -> Self {
        Self::identity()
    }
}

/// Wraps an angle into `[0, 2π)`.
pub fn normalize_yaw(yaw: f64) -> f64 {
    let y = yaw.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs.
    if y >= TAU {
        0.0
    } else {
        y
    }
}

/// Smallest absolute angular difference between two yaws, in `[0, π]`.
pub fn yaw_distance(a: f64, b: f64) -> f64 {
    let d = normalize_yaw(a - b);
    d.min(TAU - d)
}

impl Pose5DoF {
    pub fn identity() -> Self {
        Self { scale: 1.0, yaw: 0.0, translation: Vec3::zeros() }
    }

    /// Builds a pose with its yaw wrapped into `[0, 2π)`.
    pub fn new(scale: f64, yaw: f64, translation: Vec3) -> Self {
        Self { scale, yaw: normalize_yaw(yaw), translation }
    }

    pub fn is_finite(&self) -> bool {
        self.scale.is_finite() && self.yaw.is_finite() && self.translation.iter().all(|c| c.is_finite())
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        let (s, c) = self.yaw.sin_cos();
        Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
    }

    /// Derivative of the yaw rotation matrix with respect to yaw.
    pub fn rotation_derivative(&self) -> Matrix3<f64> {
        let (s, c) = self.yaw.sin_cos();
        Matrix3::new(-s, -c, 0.0, c, -s, 0.0, 0.0, 0.0, 0.0)
    }

    pub fn apply(&self, local: &Vec3) -> Vec3 {
        self.scale * (self.rotation() * local) + self.translation
    }

    /// Maps a world point back into the local frame.
    pub fn inverse_apply(&self, world: &Vec3) -> Vec3 {
        self.rotation().transpose() * (world - self.translation) / self.scale
    }

    pub fn apply_all(&self, local: &[Vec3]) -> Vec<Vec3> {
        let r = self.rotation();
        local.iter().map(|p| self.scale * (r * p) + self.translation).collect()
    }

    /// Jacobian columns `(∂W/∂s, ∂W/∂yaw)` of the transform at a local point.
    /// The translation block is the identity.
    pub fn point_jacobian(&self, local: &Vec3) -> (Vec3, Vec3) {
        (self.rotation() * local, self.scale * (self.rotation_derivative() * local))
    }

    /// Components as `[scale, yaw, tx, ty, tz]`.
    pub fn to_array(&self) -> [f64; 5] {
        let t = self.translation;
        [self.scale, self.yaw, t.x, t.y, t.z]
    }

    /// Inverse of [`Pose5DoF::to_array`]; yaw is not renormalized so that
    /// finite-difference stencils stay continuous across 0.
    pub fn from_array(a: [f64; 5]) -> Self {
        Self { scale: a[0], yaw: a[1], translation: Vec3::new(a[2], a[3], a[4]) }
    }

    /// Largest per-parameter difference, with yaw compared on the circle.
    pub fn max_abs_diff(&self, other: &Pose5DoF) -> f64 {
        let dt = (self.translation - other.translation).amax();
        (self.scale - other.scale).abs().max(yaw_distance(self.yaw, other.yaw)).max(dt)
    }
}
