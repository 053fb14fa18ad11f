//! Open-loop command timeline. Its output depends only on the IMU message
//! timestamps, which makes whole sessions reproducible byte for byte.

use nalgebra::Vector3;

use crate::client::Pilot;
use crate::control::RateCommand;
use crate::protocol::{Message, Payload, SessionInfo};

#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    /// Segment end, s since the first IMU message.
    pub until: f64,
    pub command: RateCommand,
}

#[derive(Clone, Debug)]
pub struct ScriptedPilot {
    /// Thrust fields are multiples of the hover thrust.
    pub segments: Vec<Segment>,
    hover_thrust: f64,
    start: Option<f64>,
    now: f64,
}

impl Default for ScriptedPilot {
    fn default() -> Self {
        let seg = |until, rate: [f64; 3], thrust| Segment { until, command: RateCommand::new(Vector3::from(rate), thrust) };
        Self::new(vec![
            seg(0.8, [0.0, 0.0, 0.0], 1.25),
            seg(1.0, [0.0, 0.3, 0.0], 1.0),
            seg(2.5, [0.0, 0.0, 0.0], 1.02),
            seg(2.7, [0.0, -0.3, 0.2], 1.0),
            seg(f64::INFINITY, [0.0, 0.0, 0.0], 1.0),
        ])
    }
}

impl ScriptedPilot {
    pub fn new(segments: Vec<Segment>) -> Self {
        Self { segments, hover_thrust: 9.81, start: None, now: 0.0 }
    }
}

impl Pilot for ScriptedPilot {
    fn on_session(&mut self, info: &SessionInfo) {
        self.hover_thrust = info.vehicle_mass * info.gravity.norm();
        self.start = None;
    }

    fn observe(&mut self, msg: &Message) {
        if let Payload::Imu { .. } = msg.payload {
            let start = *self.start.get_or_insert(msg.sim_time);
            self.now = msg.sim_time - start;
        }
    }

    fn command(&mut self) -> RateCommand {
        let seg = self.segments.iter().find(|s| self.now < s.until).or(self.segments.last());
        match seg {
            Some(s) => RateCommand::new(s.command.body_rate, s.command.thrust * self.hover_thrust),
            None => RateCommand::new(Vector3::zeros(), self.hover_thrust),
        }
    }
}
