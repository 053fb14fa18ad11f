//! Station keeping over the start pose at a fixed height. It never heads
//! for a gate, so every episode ends without a score.

use nalgebra::Vector3;

use super::{Estimator, VelocityController};
use crate::client::Pilot;
use crate::control::RateCommand;
use crate::protocol::{Message, SessionInfo};

#[derive(Clone, Debug)]
pub struct HoverPilot {
    pub altitude: f64,
    est: Option<Estimator>,
    ctrl: VelocityController,
    yaw: f64,
    hold: Vector3<f64>,
    dt: f64,
}

impl Default for HoverPilot {
    fn default() -> Self {
        Self::new(1.5)
    }
}

impl HoverPilot {
    pub fn new(altitude: f64) -> Self {
        Self { altitude, est: None, ctrl: VelocityController::default(), yaw: 0.0, hold: Vector3::zeros(), dt: 1.0 / 240.0 }
    }

    pub fn estimator(&self) -> Option<&Estimator> {
        self.est.as_ref()
    }
}

impl Pilot for HoverPilot {
    fn on_session(&mut self, info: &SessionInfo) {
        self.est = Some(Estimator::new(info));
        self.ctrl.configure(info);
        self.yaw = info.course.start.yaw;
        self.hold = info.course.start.position;
        self.dt = 1.0 / f64::from(info.imu_rate);
    }

    fn observe(&mut self, msg: &Message) {
        if let Some(e) = self.est.as_mut() {
            e.observe(msg);
        }
    }

    fn command(&mut self) -> RateCommand {
        let Some(est) = self.est.as_ref() else { return RateCommand::new(Vector3::zeros(), 0.0) };
        let mut v = 0.8 * (self.hold - est.position);
        v.z = 0.0;
        if v.norm() > 1.0 {
            v /= v.norm();
        }
        v.z = (1.5 * (self.altitude - est.position.z)).clamp(-1.5, 1.5);
        self.ctrl.command(est, &v, self.yaw, true, self.dt)
    }
}
