//! Pinhole cameras, rigid transforms and the retraction used by the pose solver.
//!
//! Poses are world-to-camera: a world point `p` lands at `R·p + T` in the
//! camera frame, whose third component is the depth. Pixel coordinates are
//! continuous with `(0, 0)` at the center of the top-left pixel.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Depths with magnitude below this are neither in front of nor behind the camera.
pub const Z_EPS: f64 = 1e-6;

/// Tolerance used when validating rotation matrices.
pub const ROTATION_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("rotation is not orthonormal with det +1 (deviation {0:e})")]
    InvalidRotation(f64),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self, GeometryError> {
        let k = Self { fx, fy, cx, cy, width, height };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let finite = [self.fx, self.fy, self.cx, self.cy].iter().all(|v| v.is_finite());
        if !finite {
            return Err(GeometryError::InvalidIntrinsics("non-finite parameter".into()));
        }
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(GeometryError::InvalidIntrinsics("zero image size".into()));
        }
        if !(0.0..f64::from(self.width)).contains(&self.cx) || !(0.0..f64::from(self.height)).contains(&self.cy) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    /// Squared image diagonal, `width² + height²`.
    pub fn diagonal_sq(&self) -> f64 {
        let w = f64::from(self.width);
        let h = f64::from(self.height);
        w * w + h * h
    }

    /// Rescale to a new image size, keeping the pixel-center convention.
    pub fn scaled_to(&self, width: u32, height: u32) -> Result<Self, GeometryError> {
        let sx = f64::from(width) / f64::from(self.width);
        let sy = f64::from(height) / f64::from(self.height);
        Self::new(
            self.fx * sx,
            self.fy * sy,
            (self.cx + 0.5) * sx - 0.5,
            (self.cy + 0.5) * sy - 0.5,
            width,
            height,
        )
    }

    pub fn contains(&self, px: &Pixel) -> bool {
        px.u >= -0.5 && px.v >= -0.5 && px.u < f64::from(self.width) - 0.5 && px.v < f64::from(self.height) - 0.5
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pixel {
    pub u: f64,
    pub v: f64,
}

impl Pixel {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn dist_sq(&self, other: &Pixel) -> f64 {
        let du = self.u - other.u;
        let dv = self.v - other.v;
        du * du + dv * dv
    }

    /// Integer pixel whose cell contains this coordinate, rounding halves up.
    pub fn lattice(&self) -> (i64, i64) {
        ((self.u + 0.5).floor() as i64, (self.v + 0.5).floor() as i64)
    }
}

/// A scene point with an optional color in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point3 {
    pub position: Vec3,
    pub rgb: Option<[f64; 3]>,
}

impl Point3 {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { position: Vec3::new(x, y, z), rgb: None }
    }

    pub fn colored(x: f64, y: f64, z: f64, rgb: [f64; 3]) -> Self {
        Self { position: Vec3::new(x, y, z), rgb: Some(rgb) }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|c| c.is_finite())
    }
}

/// Tangent vector on SO(3)×R³: axis-angle rotation then translation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Twist6 {
    pub omega: Vec3,
    pub tau: Vec3,
}

impl Twist6 {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self {
            omega: Vec3::new(a[0], a[1], a[2]),
            tau: Vec3::new(a[3], a[4], a[5]),
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.omega.x, self.omega.y, self.omega.z, self.tau.x, self.tau.y, self.tau.z]
    }

    pub fn norm(&self) -> f64 {
        (self.omega.norm_squared() + self.tau.norm_squared()).sqrt()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { omega: self.omega * s, tau: self.tau * s }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Rigid world-to-camera transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseSE3 {
    rotation: Mat3,
    translation: Vec3,
}

impl Default for PoseSE3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl PoseSE3 {
    pub fn identity() -> Self {
        Self { rotation: Mat3::identity(), translation: Vec3::zeros() }
    }

    /// Build a pose, rejecting rotations that are not in SO(3) within [`ROTATION_TOL`].
    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self, GeometryError> {
        if !rotation.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite("rotation"));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite("translation"));
        }
        let dev = rotation_deviation(&rotation);
        if dev > ROTATION_TOL {
            return Err(GeometryError::InvalidRotation(dev));
        }
        Ok(Self { rotation, translation })
    }

    /// Build a pose from an approximately orthonormal matrix by projecting it onto SO(3).
    pub fn from_approx(rotation: Mat3, translation: Vec3) -> Result<Self, GeometryError> {
        if !rotation.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite("rotation"));
        }
        Self::new(polar_orthonormalize(&rotation), translation)
    }

    /// Camera at `eye` looking at `target`; image `y` points along `-up` projected.
    pub fn look_at(eye: &Vec3, target: &Vec3, up: &Vec3) -> Result<Self, GeometryError> {
        let forward = target - eye;
        if forward.norm() < 1e-12 {
            return Err(GeometryError::NonFinite("look_at direction"));
        }
        let z = forward.normalize();
        let x = z.cross(up);
        if x.norm() < 1e-9 {
            return Err(GeometryError::NonFinite("look_at up vector parallel to view"));
        }
        let x = x.normalize();
        let y = z.cross(&x);
        let r = Mat3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        let r = polar_orthonormalize(&r);
        Self::new(r, -(r * eye))
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    pub fn transform(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// `compose(a, b)` applies `b` first, then `a`.
    pub fn compose(&self, b: &PoseSE3) -> PoseSE3 {
        PoseSE3 {
            rotation: self.rotation * b.rotation,
            translation: self.rotation * b.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> PoseSE3 {
        let rt = self.rotation.transpose();
        PoseSE3 { rotation: rt, translation: -(rt * self.translation) }
    }

    /// Camera center in world coordinates, `-Rᵀ·T`.
    pub fn center(&self) -> Vec3 {
        -(self.rotation.transpose() * self.translation)
    }

    /// Re-project the rotation block onto SO(3).
    pub fn reorthonormalized(&self) -> PoseSE3 {
        PoseSE3 { rotation: polar_orthonormalize(&self.rotation), translation: self.translation }
    }

    pub fn is_finite(&self) -> bool {
        self.rotation.iter().chain(self.translation.iter()).all(|v| v.is_finite())
    }

    /// Rotation row-major followed by translation.
    pub fn to_array(&self) -> [f64; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)], r[(0, 1)], r[(0, 2)],
            r[(1, 0)], r[(1, 1)], r[(1, 2)],
            r[(2, 0)], r[(2, 1)], r[(2, 2)],
            t.x, t.y, t.z,
        ]
    }

    pub fn from_array(a: &[f64; 12]) -> Result<Self, GeometryError> {
        let r = Mat3::new(a[0], a[1], a[2], a[3], a[4], a[5], a[6], a[7], a[8]);
        Self::new(r, Vec3::new(a[9], a[10], a[11]))
    }
}

/// Max-abs deviation of `RᵀR` from identity, combined with `|det R − 1|`.
pub fn rotation_deviation(r: &Mat3) -> f64 {
    let gram = r.transpose() * r - Mat3::identity();
    let ortho = gram.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    ortho.max((r.determinant() - 1.0).abs())
}

pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rotation matrix for an axis-angle vector.
pub fn rodrigues(omega: &Vec3) -> Mat3 {
    let theta_sq = omega.norm_squared();
    let k = skew(omega);
    if theta_sq < 1e-16 {
        // second-order Taylor; error O(θ³) is below 1e-24 here
        return polar_orthonormalize(&(Mat3::identity() + k + 0.5 * k * k));
    }
    let theta = theta_sq.sqrt();
    let a = theta.sin() / theta;
    let b = (1.0 - theta.cos()) / theta_sq;
    Mat3::identity() + a * k + b * k * k
}

/// Retraction from the tangent space: rotation by Rodrigues, translation taken as-is.
pub fn se3_exp(t: &Twist6) -> PoseSE3 {
    PoseSE3 { rotation: rodrigues(&t.omega), translation: t.tau }
}

/// Nearest rotation matrix in the Frobenius sense (polar factor with det +1).
pub fn polar_orthonormalize(m: &Mat3) -> Mat3 {
    let svd = m.svd(true, true);
    let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else {
        return Mat3::identity();
    };
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * v_t;
    }
    r
}

pub fn transform_to_camera(pose: &PoseSE3, p: &Vec3) -> Vec3 {
    pose.transform(p)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub pixel: Pixel,
    pub depth: f64,
    /// False when `|depth| < Z_EPS`; the pixel is then meaningless.
    pub valid: bool,
}

impl Projection {
    pub fn in_front(&self) -> bool {
        self.depth > Z_EPS
    }
}

/// Project a camera-frame point with the pinhole model.
pub fn project_camera_point(k: &Intrinsics, q: &Vec3) -> Projection {
    let depth = q.z;
    if depth.abs() < Z_EPS {
        return Projection { pixel: Pixel::new(k.cx, k.cy), depth, valid: false };
    }
    Projection {
        pixel: Pixel::new(k.fx * q.x / depth + k.cx, k.fy * q.y / depth + k.cy),
        depth,
        valid: true,
    }
}

pub fn project(k: &Intrinsics, pose: &PoseSE3, p: &Vec3) -> Projection {
    project_camera_point(k, &pose.transform(p))
}

/// Inverse of [`project`] for a known depth.
pub fn unproject(k: &Intrinsics, pose: &PoseSE3, px: &Pixel, depth: f64) -> Vec3 {
    let q = Vec3::new((px.u - k.cx) / k.fx * depth, (px.v - k.cy) / k.fy * depth, depth);
    pose.rotation.transpose() * (q - pose.translation)
}
