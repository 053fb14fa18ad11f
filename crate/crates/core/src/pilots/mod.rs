//! Bundled pilots. They see only what a remote client sees and are used by
//! the CLI `controller` subcommand, the examples and the evaluation tests.

pub mod estimator;
pub mod gate_follower;
pub mod hover;
pub mod scripted;

use nalgebra::{Matrix3, Vector3};

use crate::client::Pilot;
use crate::control::RateCommand;
use crate::protocol::SessionInfo;

pub use estimator::Estimator;
pub use gate_follower::GateFollower;
pub use hover::HoverPilot;
pub use scripted::ScriptedPilot;

type V3 = Vector3<f64>;

pub const PILOT_NAMES: [&str; 3] = ["hover", "gate-follower", "scripted"];

pub fn by_name(name: &str) -> Option<Box<dyn Pilot + Send>> {
    match name {
        "hover" => Some(Box::new(HoverPilot::default())),
        "gate-follower" | "gate_follower" => Some(Box::new(GateFollower::default())),
        "scripted" => Some(Box::new(ScriptedPilot::default())),
        _ => None,
    }
}

pub fn wrap_angle(a: f64) -> f64 {
    let t = (a + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU);
    t - std::f64::consts::PI
}

/// Turns a velocity setpoint into a body-rate and collective-thrust command
/// through a tilt-limited thrust vector and a geometric attitude loop.
#[derive(Clone, Debug)]
pub struct VelocityController {
    pub kv: V3,
    pub ki: f64,
    pub integral_limit: f64,
    pub max_tilt: f64,
    pub attitude_gain: V3,
    pub max_rate: f64,
    pub max_yaw_step: f64,
    mass: f64,
    gravity: V3,
    max_thrust: f64,
    integral: V3,
}

impl Default for VelocityController {
    fn default() -> Self {
        Self {
            kv: V3::new(2.0, 2.0, 3.0),
            ki: 0.5,
            integral_limit: 2.5,
            max_tilt: 30f64.to_radians(),
            attitude_gain: V3::new(8.0, 8.0, 3.0),
            max_rate: 4.0,
            max_yaw_step: 0.6,
            mass: 1.0,
            gravity: V3::new(0.0, 0.0, -9.81),
            max_thrust: f64::INFINITY,
            integral: V3::zeros(),
        }
    }
}

impl VelocityController {
    pub fn configure(&mut self, info: &SessionInfo) {
        self.mass = info.vehicle_mass;
        self.gravity = info.gravity;
        self.max_thrust = info.max_thrust;
        self.integral = V3::zeros();
    }

    /// `hold_horizontal = false` keeps the thrust vector vertical and only
    /// regulates vertical speed.
    pub fn command(&mut self, est: &Estimator, v_des: &V3, yaw_des: f64, hold_horizontal: bool, dt: f64) -> RateCommand {
        let err = v_des - est.velocity;
        let mut accel = err.component_mul(&self.kv) + self.integral;
        self.integral += self.ki * err * dt;
        if !hold_horizontal {
            accel.x = 0.0;
            accel.y = 0.0;
            self.integral.x = 0.0;
            self.integral.y = 0.0;
        }
        let n = self.integral.norm();
        if n > self.integral_limit {
            self.integral *= self.integral_limit / n;
        }

        let mut t = accel - self.gravity;
        t.z = t.z.max(0.2 * self.gravity.norm());
        let horizontal = (t.x * t.x + t.y * t.y).sqrt();
        let max_h = t.z * self.max_tilt.tan();
        if horizontal > max_h {
            t.x *= max_h / horizontal;
            t.y *= max_h / horizontal;
        }

        let yaw_now = est.yaw();
        let yaw = yaw_now + wrap_angle(yaw_des - yaw_now).clamp(-self.max_yaw_step, self.max_yaw_step);
        let z_b = t.normalize();
        let heading = V3::new(yaw.cos(), yaw.sin(), 0.0);
        let y_b = z_b.cross(&heading).normalize();
        let x_b = y_b.cross(&z_b);
        let r_des = Matrix3::from_columns(&[x_b, y_b, z_b]);
        let r = est.rotation();
        let m = r_des.transpose() * r - r.transpose() * r_des;
        let e = 0.5 * V3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)]);
        let mut rate = -e.component_mul(&self.attitude_gain);
        let rn = rate.norm();
        if rn > self.max_rate {
            rate *= self.max_rate / rn;
        }

        let thrust = (self.mass * t.dot(&(r * V3::z()))).clamp(0.0, 0.95 * self.max_thrust);
        RateCommand::new(rate, thrust)
    }
}
