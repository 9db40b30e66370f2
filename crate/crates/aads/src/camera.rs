//! Pinhole camera model and rigid poses.
//!
//! Conventions used throughout the crate: camera frame is +z forward,
//! +x right, +y down; pixel (0,0) sits at the top-left corner and pixel
//! centers lie on integer coordinates. Poses are camera-to-world.

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pinhole intrinsics plus raster size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = CameraIntrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64)
            || !(self.cy >= 0.0 && self.cy < self.height as f64)
        {
            return Err(Error::InvalidArgument(format!(
                "principal point ({}, {}) outside {}x{} raster",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    /// True when the continuous pixel coordinate falls inside the raster
    /// footprint (pixel centers on integers, so the footprint spans
    /// [-0.5, dim - 0.5)).
    pub fn contains(&self, pixel: Vector2<f64>) -> bool {
        pixel.x >= -0.5
            && pixel.x < self.width as f64 - 0.5
            && pixel.y >= -0.5
            && pixel.y < self.height as f64 - 0.5
    }
}

/// Rigid camera-to-world transform. `rotation` columns are the camera
/// axes expressed in world coordinates; `translation` is the camera
/// center in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

const ORTHONORMALITY_TOL: f64 = 1e-9;

impl Pose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let gram = rotation.transpose() * rotation;
        let dev = (gram - Matrix3::identity()).abs().max();
        if dev > ORTHONORMALITY_TOL {
            return Err(Error::InvalidArgument(format!(
                "rotation is not orthonormal (max deviation {dev:.3e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ORTHONORMALITY_TOL {
            return Err(Error::InvalidArgument(format!(
                "rotation determinant {det} is not +1"
            )));
        }
        Ok(Pose {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        self.translation
    }

    /// Optical axis (+z of the camera) in world coordinates.
    pub fn optical_axis(&self) -> Vector3<f64> {
        self.rotation.column(2).into()
    }

    pub fn world_to_camera(&self, point_world: Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (point_world - self.translation)
    }

    pub fn camera_to_world(&self, point_camera: Vector3<f64>) -> Vector3<f64> {
        self.rotation * point_camera + self.translation
    }

    /// `self` then `other`: maps a point from self's camera frame through
    /// self-to-world, then interprets the result in other's frame.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Angle in radians between the optical axes of two poses.
    pub fn axis_angle_to(&self, other: &Pose) -> f64 {
        angle_between(self.optical_axis(), other.optical_axis())
    }

    /// Camera at `center` looking toward `target`, with `up` fixing roll.
    /// Remember the camera frame is +z forward, +y down.
    pub fn look_at(center: Vector3<f64>, target: Vector3<f64>, up: Vector3<f64>) -> Result<Self> {
        let forward = (target - center)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::InvalidArgument("look_at target coincides with center".into()))?;
        let right = (-up)
            .cross(&forward)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::InvalidArgument("look_at up is parallel to view axis".into()))?;
        let down = forward.cross(&right);
        let rotation = Matrix3::from_columns(&[right, down, forward]);
        Pose::new(rotation, center)
    }
}

/// Angle between two direction vectors, radians in [0, pi].
pub fn angle_between(a: Vector3<f64>, b: Vector3<f64>) -> f64 {
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (a.dot(&b) / (na * nb)).clamp(-1.0, 1.0).acos()
}

/// Outcome of projecting a world point through a camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projection {
    /// In front of the camera and inside the raster.
    Visible { pixel: Vector2<f64>, depth: f64 },
    /// In front of the camera but outside the raster footprint.
    OutOfRaster { pixel: Vector2<f64>, depth: f64 },
    /// On or behind the camera plane (depth <= 0).
    Behind,
}

impl Projection {
    pub fn visible(self) -> Option<(Vector2<f64>, f64)> {
        match self {
            Projection::Visible { pixel, depth } => Some((pixel, depth)),
            _ => None,
        }
    }

    /// Pixel and depth regardless of raster containment; `None` if behind.
    pub fn in_front(self) -> Option<(Vector2<f64>, f64)> {
        match self {
            Projection::Visible { pixel, depth } | Projection::OutOfRaster { pixel, depth } => {
                Some((pixel, depth))
            }
            Projection::Behind => None,
        }
    }
}

/// Project a world point. Depth is the camera-frame z coordinate; an
/// out-of-frustum point is a normal outcome, not an error.
pub fn project(point_world: Vector3<f64>, intrinsics: &CameraIntrinsics, pose: &Pose) -> Projection {
    let pc = pose.world_to_camera(point_world);
    if pc.z <= 0.0 {
        return Projection::Behind;
    }
    let pixel = Vector2::new(
        intrinsics.fx * pc.x / pc.z + intrinsics.cx,
        intrinsics.fy * pc.y / pc.z + intrinsics.cy,
    );
    if intrinsics.contains(pixel) {
        Projection::Visible { pixel, depth: pc.z }
    } else {
        Projection::OutOfRaster { pixel, depth: pc.z }
    }
}

/// Inverse of [`project`] for in-frustum points. `depth` is camera-frame z.
pub fn unproject(
    pixel: Vector2<f64>,
    depth: f64,
    intrinsics: &CameraIntrinsics,
    pose: &Pose,
) -> Result<Vector3<f64>> {
    if !(depth > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "unproject requires positive depth, got {depth}"
        )));
    }
    let pc = Vector3::new(
        (pixel.x - intrinsics.cx) / intrinsics.fx * depth,
        (pixel.y - intrinsics.cy) / intrinsics.fy * depth,
        depth,
    );
    Ok(pose.camera_to_world(pc))
}
