//! Geometric exteroceptive sensors: pinhole stereo camera poses, an IR
//! beacon detector with occlusion and a single-ray range finder.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::rng::Rng;
use crate::scene::Scene;
use crate::serde_mat3;
use crate::vehicle::VehicleState;

type V3 = Vector3<f64>;

/// Rigid transform mapping points from a child frame to a parent frame:
/// `p_parent = rotation · p_child + translation`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigidTransform {
    #[serde(with = "serde_mat3")]
    pub rotation: Matrix3<f64>,
    pub translation: V3,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: V3::zeros() }
    }

    pub fn apply(&self, p: &V3) -> V3 {
        self.rotation * p + self.translation
    }

    /// Maps a parent-frame point into the child frame.
    pub fn inverse_apply(&self, p: &V3) -> V3 {
        self.rotation.transpose() * (p - self.translation)
    }

    pub fn compose(&self, child: &RigidTransform) -> RigidTransform {
        RigidTransform { rotation: self.rotation * child.rotation, translation: self.apply(&child.translation) }
    }

    pub fn is_proper(&self) -> bool {
        let r = self.rotation;
        self.translation.iter().all(|x| x.is_finite())
            && (r.transpose() * r - Matrix3::identity()).abs().max() < 1e-9
            && (r.determinant() - 1.0).abs() < 1e-9
    }
}

/// Optical frame axes (x right, y down, z forward) expressed in body axes
/// (x forward, y left, z up).
pub fn body_to_optical_rotation() -> Matrix3<f64> {
    Matrix3::from_columns(&[-V3::y(), -V3::z(), V3::x()])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraParams {
    /// Vertical field of view, degrees.
    pub vertical_fov: f64,
    pub width: u32,
    pub height: u32,
    /// Distance between the left and right optical centres, m.
    pub stereo_baseline: f64,
    /// Left camera pose in the body frame.
    pub extrinsics_body_to_camera: RigidTransform,
    pub frame_rate: u32,
}

impl Default for CameraParams {
    fn default() -> Self {
        Self {
            vertical_fov: 70.0,
            width: 1024,
            height: 768,
            stereo_baseline: 0.32,
            extrinsics_body_to_camera: RigidTransform {
                rotation: body_to_optical_rotation(),
                translation: V3::new(0.0, 0.16, 0.0),
            },
            frame_rate: 60,
        }
    }
}

impl CameraParams {
    /// Focal length in pixels, `(h/2) / tan(fov/2)`.
    pub fn focal_length(&self) -> f64 {
        0.5 * self.height as f64 / (0.5 * self.vertical_fov.to_radians()).tan()
    }

    pub fn principal_point(&self) -> (f64, f64) {
        (0.5 * self.width as f64, 0.5 * self.height as f64)
    }

    pub fn validate(&self, physics_rate: u32) -> Result<(), ConfigError> {
        if !(self.vertical_fov > 0.0 && self.vertical_fov < 180.0) {
            return Err(ConfigError::invalid("camera.vertical_fov", "must lie in (0, 180) degrees"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(ConfigError::invalid("camera", "image size must be positive"));
        }
        if !(self.stereo_baseline >= 0.0) {
            return Err(ConfigError::invalid("camera.stereo_baseline", "must be non-negative"));
        }
        if !self.extrinsics_body_to_camera.is_proper() {
            return Err(ConfigError::invalid("camera.extrinsics_body_to_camera", "rotation must be proper"));
        }
        if self.frame_rate == 0 || !physics_rate.is_multiple_of(self.frame_rate) {
            return Err(ConfigError::invalid(
                "camera.frame_rate",
                format!("{} Hz does not divide the {physics_rate} Hz physics rate", self.frame_rate),
            ));
        }
        Ok(())
    }

    /// Left camera pose in the world for the given vehicle state.
    pub fn left_pose(&self, state: &VehicleState) -> RigidTransform {
        body_pose(state).compose(&self.extrinsics_body_to_camera)
    }

    /// Right camera pose: the left pose shifted by the baseline along its own x axis.
    pub fn right_pose(&self, state: &VehicleState) -> RigidTransform {
        stereo_partner(&self.left_pose(state), self.stereo_baseline)
    }
}

pub fn body_pose(state: &VehicleState) -> RigidTransform {
    RigidTransform { rotation: state.attitude.rotation_matrix_unchecked(), translation: state.position }
}

pub fn stereo_partner(left: &RigidTransform, baseline: f64) -> RigidTransform {
    RigidTransform {
        rotation: left.rotation,
        translation: left.translation + left.rotation.column(0).into_owned() * baseline,
    }
}

/// Pinhole projection of a world point. `None` when the point is at or
/// behind the image plane or lands outside `[0, w] × [0, h]`.
pub fn project_point(point_world: &V3, camera_pose_world: &RigidTransform, intr: &CameraParams) -> Option<(f64, f64)> {
    let p = camera_pose_world.inverse_apply(point_world);
    if !(p.z > 0.0) {
        return None;
    }
    let f = intr.focal_length();
    let (cx, cy) = intr.principal_point();
    let u = cx + f * p.x / p.z;
    let v = cy + f * p.y / p.z;
    let inside = (0.0..=intr.width as f64).contains(&u) && (0.0..=intr.height as f64).contains(&v);
    inside.then_some((u, v))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeaconObservation {
    #[serde(rename = "id")]
    pub beacon_id: u32,
    pub u: f64,
    pub v: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IrParams {
    /// Gaussian pixel noise standard deviation; zero gives exact reprojections.
    pub pixel_noise_sigma: f64,
    /// An occluder must be at least this much closer than the beacon, m.
    pub occlusion_tolerance: f64,
}

impl Default for IrParams {
    fn default() -> Self {
        Self { pixel_noise_sigma: 0.0, occlusion_tolerance: 0.01 }
    }
}

/// Visible, unoccluded beacons sorted by ID. `rng` is only drawn from when
/// pixel noise is enabled.
pub fn sense_ir_beacons(
    camera_pose_world: &RigidTransform,
    scene: &Scene,
    intr: &CameraParams,
    ir: &IrParams,
    rng: &mut Rng,
) -> Vec<BeaconObservation> {
    let origin = camera_pose_world.translation;
    let mut out: Vec<BeaconObservation> = scene
        .all_beacons()
        .filter_map(|b| {
            let (u, v) = project_point(&b.position, camera_pose_world, intr)?;
            let offset = b.position - origin;
            let dist = offset.norm();
            let dir = offset / dist;
            let blocked = scene
                .ray_cast(&origin, &dir, dist)
                .ok()?
                .is_some_and(|hit| hit.distance < dist - ir.occlusion_tolerance);
            (!blocked).then_some(BeaconObservation { beacon_id: b.id, u, v })
        })
        .collect();
    out.sort_by_key(|o| o.beacon_id);
    if ir.pixel_noise_sigma > 0.0 {
        for o in &mut out {
            o.u = (o.u + ir.pixel_noise_sigma * rng.standard_normal()).clamp(0.0, intr.width as f64);
            o.v = (o.v + ir.pixel_noise_sigma * rng.standard_normal()).clamp(0.0, intr.height as f64);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangerParams {
    pub direction_body: V3,
    /// m
    pub noise_sigma: f64,
    /// m
    pub max_range: f64,
    /// Hz
    pub rate: u32,
}

impl Default for RangerParams {
    fn default() -> Self {
        Self { direction_body: V3::new(0.0, 0.0, -1.0), noise_sigma: 0.1, max_range: 120.0, rate: 20 }
    }
}

impl RangerParams {
    pub fn validate(&self, physics_rate: u32) -> Result<(), ConfigError> {
        if (self.direction_body.norm() - 1.0).abs() > 1e-9 {
            return Err(ConfigError::invalid("ranger.direction_body", "must be a unit vector"));
        }
        if !(self.noise_sigma >= 0.0) || !(self.max_range > 0.0) {
            return Err(ConfigError::invalid("ranger", "need noise_sigma >= 0 and max_range > 0"));
        }
        if self.rate == 0 || !physics_rate.is_multiple_of(self.rate) {
            return Err(ConfigError::invalid(
                "ranger.rate",
                format!("{} Hz does not divide the {physics_rate} Hz physics rate", self.rate),
            ));
        }
        Ok(())
    }
}

/// Distance along the body-fixed ranger ray plus Gaussian noise, clamped at
/// zero. `None` when nothing lies within `max_range`.
pub fn sense_range(state: &VehicleState, scene: &Scene, params: &RangerParams, rng: &mut Rng) -> Option<f64> {
    let dir = state.attitude.rotation_matrix_unchecked() * params.direction_body;
    let dir = dir.normalize();
    let hit = scene.ray_cast(&state.position, &dir, params.max_range).ok()??;
    let noise = if params.noise_sigma > 0.0 { params.noise_sigma * rng.standard_normal() } else { 0.0 };
    Some((hit.distance + noise).max(0.0))
}
