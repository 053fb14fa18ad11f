//! Onboard state estimate built only from messages a client receives.
//!
//! Attitude comes from gyro integration with two slow corrections: the
//! specific-force direction (valid when the vehicle is not accelerating)
//! and the vertical edges of gates seen in stereo. Position and velocity are
//! dead-reckoned from the accelerometer and pulled toward beacon landmarks
//! and ranger altitude with fixed alpha-beta gains.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, UnitQuaternion, Vector3};

use crate::protocol::{CameraSide, Message, Payload, SessionInfo};
use crate::sensors::{BeaconObservation, RigidTransform};

type V3 = Vector3<f64>;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Landmark {
    pub position: V3,
    /// Surveyed position that is never re-estimated.
    pub fixed: bool,
    /// Accumulated sighting weight; zero means only the nominal guess is known.
    pub weight: f64,
    /// Sim time of the latest sighting.
    pub last_seen: Option<f64>,
}

impl Landmark {
    pub fn known(&self) -> bool {
        self.fixed || self.weight > 0.0
    }
}

#[derive(Clone, Debug)]
pub struct Estimator {
    imu_rot: Matrix3<f64>,
    gravity: V3,
    imu_dt: f64,
    camera_dt: f64,
    ranger_dt: f64,
    focal: f64,
    principal: (f64, f64),
    baseline: f64,
    ranger_dir: V3,
    gate_pairs: Vec<([u32; 4], f64)>,

    pub time: f64,
    pub attitude: UnitQuaternion<f64>,
    pub gyro_bias: V3,
    pub position: V3,
    pub velocity: V3,
    /// Bias-corrected gyro, body frame.
    pub body_rate: V3,
    landmarks: BTreeMap<u32, Landmark>,
    extrinsics: [Option<RigidTransform>; 2],
    pending_left: Option<(u64, Vec<BeaconObservation>)>,
    ranger_rejects: u32,
}

const ACCEL_KP: f64 = 0.3;
const ACCEL_KI: f64 = 0.02;
const GATE_UP_GAIN: f64 = 0.1;
const GATE_UP_BIAS_GAIN: f64 = 0.005;
const FIX_ALPHA: f64 = 0.2;
const RANGE_ALPHA: f64 = 0.3;
const MAX_FIX_DEPTH: f64 = 30.0;

fn beta(alpha: f64) -> f64 {
    alpha * alpha / (2.0 - alpha)
}

impl Estimator {
    pub fn new(info: &SessionInfo) -> Self {
        let start = &info.course.start;
        let mut landmarks = BTreeMap::new();
        for b in &info.course.static_beacons {
            landmarks.insert(b.id, Landmark { position: b.position, fixed: true, weight: 0.0, last_seen: None });
        }
        for g in &info.course.gates {
            for b in &g.beacons {
                landmarks.insert(b.id, Landmark { position: b.position, fixed: false, weight: 0.0, last_seen: None });
            }
        }
        let gate_pairs = info
            .course
            .gates
            .iter()
            .filter(|g| g.beacons.len() == 4)
            .map(|g| ([g.beacons[0].id, g.beacons[1].id, g.beacons[2].id, g.beacons[3].id], g.height))
            .collect();
        Self {
            imu_rot: crate::mat3_from_rows(info.imu_rot_body_to_imu),
            gravity: info.gravity,
            imu_dt: 1.0 / f64::from(info.imu_rate),
            camera_dt: 1.0 / f64::from(info.camera_rate),
            ranger_dt: 1.0 / f64::from(info.ranger_rate),
            focal: info.camera.focal_length(),
            principal: info.camera.principal_point(),
            baseline: info.camera.stereo_baseline,
            ranger_dir: info.ranger.direction_body,
            gate_pairs,
            time: 0.0,
            attitude: UnitQuaternion::from_axis_angle(&V3::z_axis(), start.yaw),
            gyro_bias: V3::zeros(),
            position: start.position,
            velocity: V3::zeros(),
            body_rate: V3::zeros(),
            landmarks,
            extrinsics: [None, None],
            pending_left: None,
            ranger_rejects: 0,
        }
    }

    pub fn landmark(&self, id: u32) -> Option<&Landmark> {
        self.landmarks.get(&id)
    }

    pub fn yaw(&self) -> f64 {
        let x = self.attitude * V3::x();
        x.y.atan2(x.x)
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.attitude.to_rotation_matrix().into_inner()
    }

    pub fn observe(&mut self, msg: &Message) {
        match &msg.payload {
            Payload::Imu { accel, gyro } => {
                self.time = msg.sim_time;
                self.predict(accel, gyro);
            }
            Payload::Range { distance: Some(d) } => self.correct_altitude(*d),
            Payload::CameraPose { camera, extrinsics, .. } => {
                self.extrinsics[*camera as usize] = Some(*extrinsics);
            }
            Payload::IrBeacons { camera: CameraSide::Left, frame, beacons } => {
                self.pending_left = Some((*frame, beacons.clone()));
            }
            Payload::IrBeacons { camera: CameraSide::Right, frame, beacons } => {
                if let Some((f, left)) = self.pending_left.take() {
                    if f == *frame {
                        self.correct_from_stereo(&left, beacons);
                    }
                }
            }
            _ => {}
        }
    }

    fn predict(&mut self, accel: &V3, gyro: &V3) {
        let dt = self.imu_dt;
        let to_body = self.imu_rot.transpose();
        let f_body = to_body * accel;
        let gyro_body = to_body * gyro;
        let g = self.gravity.norm();

        let mut omega = gyro_body - self.gyro_bias;
        self.body_rate = omega;
        let f_norm = f_body.norm();
        let w = (1.0 - (f_norm - g).abs() / (0.1 * g)).max(0.0);
        if w > 0.0 {
            let predicted_up = self.attitude.inverse() * V3::z();
            let e = (f_body / f_norm).cross(&predicted_up);
            omega += ACCEL_KP * w * e;
            self.gyro_bias -= ACCEL_KI * w * e * dt;
        }
        self.attitude *= UnitQuaternion::from_scaled_axis(omega * dt);

        let a = self.attitude * f_body + self.gravity;
        self.position += self.velocity * dt + 0.5 * a * dt * dt;
        self.velocity += a * dt;
    }

    fn correct_altitude(&mut self, distance: f64) {
        let dir = self.attitude * self.ranger_dir;
        if dir.z > -0.7 {
            return;
        }
        let delta = -distance * dir.z - self.position.z;
        if delta.abs() > 1.0 && self.ranger_rejects < 10 {
            self.ranger_rejects += 1;
            return;
        }
        self.ranger_rejects = 0;
        self.position.z += RANGE_ALPHA * delta;
        self.velocity.z += beta(RANGE_ALPHA) / self.ranger_dt * delta;
    }

    /// Beacon positions in the left camera body frame, keyed by id.
    fn triangulate(&self, left: &[BeaconObservation], right: &[BeaconObservation]) -> BTreeMap<u32, (V3, f64)> {
        let mut out = BTreeMap::new();
        let Some(ext) = self.extrinsics[0] else { return out };
        let (cx, cy) = self.principal;
        for l in left {
            let Some(r) = right.iter().find(|r| r.beacon_id == l.beacon_id) else { continue };
            let disparity = l.u - r.u;
            if disparity < 0.5 {
                continue;
            }
            let z = self.focal * self.baseline / disparity;
            if z > MAX_FIX_DEPTH {
                continue;
            }
            let p_cam = V3::new((l.u - cx) * z / self.focal, (l.v - cy) * z / self.focal, z);
            out.insert(l.beacon_id, (ext.apply(&p_cam), z));
        }
        out
    }

    fn correct_from_stereo(&mut self, left: &[BeaconObservation], right: &[BeaconObservation]) {
        let seen = self.triangulate(left, right);
        if seen.is_empty() {
            return;
        }

        let mut up = V3::zeros();
        for (ids, height) in &self.gate_pairs {
            for (top, bottom) in [(ids[0], ids[3]), (ids[1], ids[2])] {
                if let (Some((t, _)), Some((b, _))) = (seen.get(&top), seen.get(&bottom)) {
                    let edge = t - b;
                    if (edge.norm() - height).abs() < 0.2 * height {
                        up += edge.normalize();
                    }
                }
            }
        }
        if up.norm() > 0.5 {
            let e = up.normalize().cross(&(self.attitude.inverse() * V3::z()));
            self.attitude *= UnitQuaternion::from_scaled_axis(GATE_UP_GAIN * e);
            self.gyro_bias -= GATE_UP_BIAS_GAIN * e;
        }

        let rot = self.rotation();
        let mut delta = V3::zeros();
        let mut total = 0.0;
        for (id, (p_body, depth)) in &seen {
            let Some(lm) = self.landmarks.get(id) else { continue };
            if lm.known() {
                let w = 1.0 / depth.max(1.0).powi(2);
                delta += w * (lm.position - rot * p_body - self.position);
                total += w;
            }
        }
        if total > 0.0 {
            let d = delta / total;
            self.position += FIX_ALPHA * d;
            self.velocity += beta(FIX_ALPHA) / self.camera_dt * d;
        }

        for (id, (p_body, depth)) in &seen {
            let estimate = self.position + rot * p_body;
            let Some(lm) = self.landmarks.get_mut(id) else { continue };
            lm.last_seen = Some(self.time);
            if lm.fixed {
                continue;
            }
            let w = 1.0 / depth.max(1.0).powi(2);
            lm.position = (lm.position * lm.weight + estimate * w) / (lm.weight + w);
            lm.weight += w;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;
    use crate::sim::{Sequencer, Simulator};

    fn sim_with(f: impl FnOnce(&mut Config)) -> Simulator {
        let mut c = Config::builtin();
        f(&mut c);
        Simulator::from_config(&c, 3).unwrap()
    }

    #[test]
    fn starts_at_the_course_start_pose() {
        let sim = sim_with(|_| {});
        let e = Estimator::new(&sim.session_info());
        assert_eq!(e.position, sim.scene().start.position);
        assert!((e.yaw() - sim.scene().start.yaw).abs() < 1e-12);
    }

    #[test]
    fn tracks_truth_while_hovering_in_view_of_the_first_gate() {
        let mut sim = sim_with(|_| {});
        let mut est = Estimator::new(&sim.session_info());
        let mut seq = Sequencer::default();
        let mut s = sim.state().clone();
        s.motor_speeds = vec![1133.0; 4];
        sim.set_state(s);
        sim.arm();
        let hover = crate::control::RateCommand::new(V3::zeros(), 9.81);
        sim.apply_command(hover);
        for _ in 0..960 {
            let t = sim.sim_time();
            for p in sim.publish() {
                est.observe(&seq.stamp(t, p));
            }
            sim.step();
        }
        let truth = sim.state();
        assert!((est.position - truth.position).norm() < 0.1, "{} vs {}", est.position, truth.position);
        assert!((est.velocity - truth.velocity).norm() < 0.1);
        let q = &truth.attitude;
        let q_true = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q.r, q.i, q.j, q.k));
        assert!(est.attitude.angle_to(&q_true) < 0.01);
    }
}
