//! Scalar-first attitude quaternion and its kinematics.

use std::ops::{Add, Mul};

use nalgebra::{Matrix3, Vector3};

use crate::error::DomainError;

/// Largest deviation from unit norm accepted by [`Quaternion::to_rotation_matrix`].
pub const UNIT_TOLERANCE: f64 = 1e-6;

/// Quaternion `[r, i, j, k]` with the scalar part first.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct Quaternion {
    pub r: f64,
    pub i: f64,
    pub j: f64,
    pub k: f64,
}

impl From<[f64; 4]> for Quaternion {
    fn from(q: [f64; 4]) -> Self {
        Self::new(q[0], q[1], q[2], q[3])
    }
}

impl From<Quaternion> for [f64; 4] {
    fn from(q: Quaternion) -> Self {
        [q.r, q.i, q.j, q.k]
    }
}

impl Default for Quaternion {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion { r: 1.0, i: 0.0, j: 0.0, k: 0.0 };
    pub const ZERO: Quaternion = Quaternion { r: 0.0, i: 0.0, j: 0.0, k: 0.0 };

    pub const fn new(r: f64, i: f64, j: f64, k: f64) -> Self {
        Self { r, i, j, k }
    }

    /// Rotation of `angle` radians about `axis` (normalized internally).
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 {
            return Self::IDENTITY;
        }
        let a = axis / n;
        let (s, c) = (0.5 * angle).sin_cos();
        Self::new(c, s * a.x, s * a.y, s * a.z)
    }

    /// Heading rotation about world +z.
    pub fn from_yaw(yaw: f64) -> Self {
        Self::from_axis_angle(&Vector3::z(), yaw)
    }

    /// Builds the quaternion of a proper rotation matrix (Shepperd's method).
    pub fn from_rotation_matrix(m: &Matrix3<f64>) -> Self {
        let trace = m[(0, 0)] + m[(1, 1)] + m[(2, 2)];
        let q = if trace > 0.0 {
            let s = (trace + 1.0).sqrt() * 2.0;
            Self::new(
                0.25 * s,
                (m[(2, 1)] - m[(1, 2)]) / s,
                (m[(0, 2)] - m[(2, 0)]) / s,
                (m[(1, 0)] - m[(0, 1)]) / s,
            )
        } else if m[(0, 0)] > m[(1, 1)] && m[(0, 0)] > m[(2, 2)] {
            let s = (1.0 + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]).sqrt() * 2.0;
            Self::new(
                (m[(2, 1)] - m[(1, 2)]) / s,
                0.25 * s,
                (m[(0, 1)] + m[(1, 0)]) / s,
                (m[(0, 2)] + m[(2, 0)]) / s,
            )
        } else if m[(1, 1)] > m[(2, 2)] {
            let s = (1.0 + m[(1, 1)] - m[(0, 0)] - m[(2, 2)]).sqrt() * 2.0;
            Self::new(
                (m[(0, 2)] - m[(2, 0)]) / s,
                (m[(0, 1)] + m[(1, 0)]) / s,
                0.25 * s,
                (m[(1, 2)] + m[(2, 1)]) / s,
            )
        } else {
            let s = (1.0 + m[(2, 2)] - m[(0, 0)] - m[(1, 1)]).sqrt() * 2.0;
            Self::new(
                (m[(1, 0)] - m[(0, 1)]) / s,
                (m[(0, 2)] + m[(2, 0)]) / s,
                (m[(1, 2)] + m[(2, 1)]) / s,
                0.25 * s,
            )
        };
        let q = q.normalized();
        if q.r < 0.0 {
            -1.0 * q
        } else {
            q
        }
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dot(&self, o: &Quaternion) -> f64 {
        self.r * o.r + self.i * o.i + self.j * o.j + self.k * o.k
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        Self::new(self.r / n, self.i / n, self.j / n, self.k / n)
    }

    pub fn conjugate(&self) -> Self {
        Self::new(self.r, -self.i, -self.j, -self.k)
    }

    pub fn vector(&self) -> Vector3<f64> {
        Vector3::new(self.i, self.j, self.k)
    }

    pub fn is_finite(&self) -> bool {
        self.r.is_finite() && self.i.is_finite() && self.j.is_finite() && self.k.is_finite()
    }

    /// Hamilton product `self ∘ rhs`.
    pub fn compose(&self, rhs: &Quaternion) -> Self {
        let (a, b) = (self, rhs);
        Self::new(
            a.r * b.r - a.i * b.i - a.j * b.j - a.k * b.k,
            a.r * b.i + a.i * b.r + a.j * b.k - a.k * b.j,
            a.r * b.j - a.i * b.k + a.j * b.r + a.k * b.i,
            a.r * b.k + a.i * b.j - a.j * b.i + a.k * b.r,
        )
    }

    /// Body-to-world rotation matrix of a unit quaternion.
    pub fn to_rotation_matrix(&self) -> Result<Matrix3<f64>, DomainError> {
        let n = self.norm();
        if !n.is_finite() || (n - 1.0).abs() > UNIT_TOLERANCE {
            return Err(DomainError::NonUnitQuaternion(n));
        }
        Ok(self.rotation_matrix_unchecked())
    }

    pub(crate) fn rotation_matrix_unchecked(&self) -> Matrix3<f64> {
        let Quaternion { r, i, j, k } = *self;
        Matrix3::new(
            1.0 - 2.0 * (j * j + k * k),
            2.0 * (i * j - k * r),
            2.0 * (i * k + j * r),
            2.0 * (i * j + k * r),
            1.0 - 2.0 * (i * i + k * k),
            2.0 * (j * k - i * r),
            2.0 * (i * k - j * r),
            2.0 * (j * k + i * r),
            1.0 - 2.0 * (i * i + j * j),
        )
    }

    /// Rotates a body-frame vector into the world frame.
    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation_matrix_unchecked() * v
    }

    /// Attitude rate `½ q ∘ Ω` for body rates `omega` (rad/s).
    pub fn derivative(&self, omega: &Vector3<f64>) -> Quaternion {
        let Quaternion { r, i, j, k } = *self;
        let (p, q, w) = (omega.x, omega.y, omega.z);
        Quaternion::new(
            0.5 * (-i * p - j * q - k * w),
            0.5 * (r * p - k * q + j * w),
            0.5 * (k * p + r * q - i * w),
            0.5 * (-j * p + i * q + r * w),
        )
    }

    /// Rotation angle in `[0, π]` between this attitude and `other`.
    pub fn angle_to(&self, other: &Quaternion) -> f64 {
        let d = self.dot(other).abs().min(1.0);
        2.0 * d.acos()
    }

    /// Tilt of the body z axis away from world +z, in radians.
    pub fn tilt(&self) -> f64 {
        let z = self.rotate(&Vector3::z());
        z.z.clamp(-1.0, 1.0).acos()
    }

    /// Heading of the body x axis projected on the world xy-plane.
    pub fn yaw(&self) -> f64 {
        let x = self.rotate(&Vector3::x());
        x.y.atan2(x.x)
    }
}

impl Add for Quaternion {
    type Output = Quaternion;
    fn add(self, o: Quaternion) -> Quaternion {
        Quaternion::new(self.r + o.r, self.i + o.i, self.j + o.j, self.k + o.k)
    }
}

impl Mul<Quaternion> for f64 {
    type Output = Quaternion;
    fn mul(self, q: Quaternion) -> Quaternion {
        Quaternion::new(self * q.r, self * q.i, self * q.j, self * q.k)
    }
}
