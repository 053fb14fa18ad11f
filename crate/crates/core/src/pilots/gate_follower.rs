//! Beacon-guided gate follower. It flies along the normal of the armed gate
//! while steering out the lateral offset measured from that gate's IR
//! beacons, and falls back to hold-and-search when the beacons are lost.

use nalgebra::Vector3;

use super::{wrap_angle, Estimator, VelocityController};
use crate::client::Pilot;
use crate::control::RateCommand;
use crate::protocol::{GateInfo, Message, Payload, SessionInfo};

type V3 = Vector3<f64>;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Mode {
    Track,
    Search { since: f64, hold: V3 },
    Done,
}

#[derive(Clone, Debug)]
pub struct GateFollower {
    /// Cruise speed, m/s.
    pub speed: f64,
    /// Beacon silence that triggers a search, s.
    pub lost_after: f64,
    est: Option<Estimator>,
    ctrl: VelocityController,
    gates: Vec<GateInfo>,
    target: usize,
    mode: Mode,
    dt: f64,
    start_time: Option<f64>,
}

impl Default for GateFollower {
    fn default() -> Self {
        Self {
            speed: 4.0,
            lost_after: 1.0,
            est: None,
            ctrl: VelocityController::default(),
            gates: Vec::new(),
            target: 0,
            mode: Mode::Track,
            dt: 1.0 / 240.0,
            start_time: None,
        }
    }
}

impl GateFollower {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn estimator(&self) -> Option<&Estimator> {
        self.est.as_ref()
    }

    /// Centre and horizontal normal of gate `k` from its beacon landmarks,
    /// falling back to the nominal layout for beacons never seen.
    pub fn gate_estimate(&self, k: usize) -> (V3, V3) {
        let g = &self.gates[k];
        let Some(est) = self.est.as_ref() else { return (g.center, g.normal) };
        let lms: Vec<_> = g.beacons.iter().map(|b| est.landmark(b.id).copied()).collect();
        let mut n = g.normal;
        if lms.len() == 4 && lms.iter().all(|l| l.is_some_and(|l| l.known())) {
            let p: Vec<V3> = lms.iter().map(|l| l.unwrap().position).collect();
            let left = (p[0] + p[3]) - (p[1] + p[2]);
            let up = (p[0] + p[1]) - (p[2] + p[3]);
            let measured = left.cross(&up);
            if measured.norm() > 1e-6 {
                n = measured.normalize();
            }
        }
        let mut offset = V3::zeros();
        let mut count = 0.0;
        for (b, l) in g.beacons.iter().zip(&lms) {
            if let Some(l) = l.filter(|l| l.known()) {
                offset += l.position - b.position;
                count += 1.0;
            }
        }
        if count > 0.0 {
            offset /= count;
        }
        n.z = 0.0;
        let n = if n.norm() > 1e-6 { n.normalize() } else { g.normal };
        (g.center + offset, n)
    }

    fn last_seen(&self, k: usize) -> Option<f64> {
        let est = self.est.as_ref()?;
        self.gates[k].beacons.iter().filter_map(|b| est.landmark(b.id)?.last_seen).reduce(f64::max)
    }

    fn setpoint(&mut self) -> (V3, f64) {
        let est = self.est.as_ref().expect("session started");
        let p = est.position;
        let now = est.time;
        if self.target >= self.gates.len() {
            self.mode = Mode::Done;
            return (V3::zeros(), est.yaw());
        }
        let (c, n) = self.gate_estimate(self.target);
        let r = p - c;
        let s = n.dot(&r);
        let lateral = r - n * s;
        let to_gate = c - p;
        let bearing = to_gate.y.atan2(to_gate.x);

        let seen = self.last_seen(self.target).or(self.start_time).unwrap_or(now);
        let close = s > -3.0 && s < 1.0 && lateral.norm() < 2.0;
        let lost = !close && now - seen > self.lost_after;
        self.mode = match (self.mode, lost) {
            (Mode::Search { since, hold }, true) => Mode::Search { since, hold },
            (_, true) => Mode::Search { since: now, hold: p },
            (_, false) => Mode::Track,
        };

        match self.mode {
            Mode::Search { since, hold } => {
                let mut v = 1.0 * (hold - p);
                v.z += 1.0 * (c.z - p.z).clamp(-1.0, 1.0);
                let sweep = 0.9 * (0.6 * (now - since)).sin();
                (v, bearing + sweep)
            }
            _ if s < 0.0 => {
                let mut v_lat = -1.2 * lateral;
                if v_lat.norm() > 3.0 {
                    v_lat *= 3.0 / v_lat.norm();
                }
                let aligned = lateral.norm() < 0.4 + 0.25 * (-s);
                let forward = if aligned { self.speed } else { 1.0 };
                let yaw = if -s > 3.0 { bearing } else { n.y.atan2(n.x) };
                (n * forward + v_lat, yaw)
            }
            _ => {
                // past the plane without credit: come back round to the approach side
                let approach = c - 4.0 * n + V3::new(0.0, 0.0, 1.5);
                let mut v = approach - p;
                if v.norm() > 1.5 {
                    v *= 1.5 / v.norm();
                }
                (v, wrap_angle(bearing))
            }
        }
    }
}

impl Pilot for GateFollower {
    fn on_session(&mut self, info: &SessionInfo) {
        self.est = Some(Estimator::new(info));
        self.ctrl.configure(info);
        self.gates = info.course.gates.clone();
        self.target = 0;
        self.mode = Mode::Track;
        self.dt = 1.0 / f64::from(info.imu_rate);
        self.start_time = None;
    }

    fn observe(&mut self, msg: &Message) {
        if let Some(e) = self.est.as_mut() {
            e.observe(msg);
        }
        match &msg.payload {
            Payload::Imu { .. } => {
                self.start_time.get_or_insert(msg.sim_time);
            }
            Payload::GatePassed { gate_id, .. } => {
                if let Some(i) = self.gates.iter().position(|g| g.id == *gate_id) {
                    self.target = self.target.max(i + 1);
                }
            }
            _ => {}
        }
    }

    fn command(&mut self) -> RateCommand {
        if self.est.is_none() {
            return RateCommand::new(V3::zeros(), 0.0);
        }
        let (mut v, yaw) = self.setpoint();
        let est = self.est.as_ref().expect("session started");
        if est.position.z < 0.7 {
            v.z = v.z.max(1.0);
        }
        self.ctrl.command(est, &v, yaw, true, self.dt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::client::fly_local;
    use crate::config::Config;
    use crate::sim::Simulator;

    #[test]
    fn passes_gates_on_the_unperturbed_course() {
        let c = Config::builtin();
        let mut sim = Simulator::from_config(&c, 11).unwrap();
        let mut pilot = GateFollower::default();
        let summary = fly_local(&mut sim, &mut pilot);
        eprintln!("{summary:?} pos {:?}", sim.state().position);
        assert!(summary.record.gates_passed >= 1);
    }
}
