//! Single-vehicle episode engine. Each physics step first publishes the
//! sensor outputs due at that step, then accepts at most one command, then
//! integrates. Everything is keyed to the integer step count.

use nalgebra::Vector3;

use crate::clock::SimClock;
use crate::config::Config;
use crate::control::{RateCommand, RateController};
use crate::error::ConfigError;
use crate::imu::{measure_imu, propagate_bias, ImuRng, ImuState};
use crate::protocol::{CameraSide, CourseInfo, Message, Payload, SessionInfo, PROTOCOL_VERSION};
use crate::quaternion::Quaternion;
use crate::race::{Outcome, RaceEvent, RaceRecord, RaceTracker};
use crate::rng::{Rng, Stream};
use crate::runlog::LogHeader;
use crate::scene::Scene;
use crate::sensors::{sense_ir_beacons, sense_range, stereo_partner, RigidTransform};
use crate::vehicle::{aero_drag, step_with_disturbance, thrust_and_moment, Disturbance, DisturbanceRng, VehicleState};

type V3 = Vector3<f64>;

/// Phase of an episode.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Idle,
    Armed,
    Running,
    Ended,
}

/// Summary of one physics step.
#[derive(Clone, Debug, Default)]
pub struct StepReport {
    /// Step index of the state produced.
    pub step: u64,
    pub events: Vec<RaceEvent>,
}

pub struct Simulator {
    config: Config,
    scene: Scene,
    nominal: CourseInfo,
    seed: u64,
    clock: SimClock,
    state: VehicleState,
    controller: RateController,
    imu: ImuState,
    imu_rng: ImuRng,
    dist_rng: DisturbanceRng,
    ranger_rng: Rng,
    pixel_rng: Rng,
    held_gyro: V3,
    command: RateCommand,
    disturbance: Option<Disturbance>,
    race: Option<RaceTracker>,
    pending: Vec<Payload>,
    phase: Phase,
}

impl Simulator {
    /// `scene` is the course actually flown; `nominal` is the layout the
    /// client is told about.
    pub fn new(config: &Config, scene: Scene, nominal: &Scene, seed: u64) -> Result<Self, ConfigError> {
        config.validate()?;
        scene.validate().map_err(|m| ConfigError::invalid("course", m))?;
        let controller = RateController::new(&config.controller, &config.vehicle, config.physics.integrator)?;
        let start = scene.start;
        let state = VehicleState::at_rest(start.position, Quaternion::from_yaw(start.yaw), config.vehicle.motors.len());
        Ok(Self {
            clock: SimClock::new(config.physics.rate_hz, config.service.rate_scaling),
            imu: ImuState::initial(&config.imu, seed),
            imu_rng: ImuRng::new(seed),
            dist_rng: DisturbanceRng::new(seed),
            ranger_rng: Rng::stream(seed, Stream::Ranger),
            pixel_rng: Rng::stream(seed, Stream::PixelNoise),
            nominal: CourseInfo::from(nominal),
            config: config.clone(),
            scene,
            seed,
            state,
            controller,
            held_gyro: V3::zeros(),
            command: RateCommand::default(),
            disturbance: None,
            race: None,
            pending: Vec::new(),
            phase: Phase::Idle,
        })
    }

    /// Flies the configured course (perturbed when `course.perturb` is set).
    pub fn from_config(config: &Config, seed: u64) -> Result<Self, ConfigError> {
        let nominal = config.load_course()?;
        let flown = if config.course.perturb {
            crate::scene::perturb_course(&nominal, seed, config.course.translation_sigma, config.course.yaw_sigma)
        } else {
            nominal.clone()
        };
        Self::new(config, flown, &nominal, seed)
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn state(&self) -> &VehicleState {
        &self.state
    }

    /// Overrides the vehicle state, e.g. to start from hover.
    pub fn set_state(&mut self, state: VehicleState) {
        self.state = state;
    }

    pub fn clock(&self) -> &SimClock {
        &self.clock
    }

    pub fn clock_mut(&mut self) -> &mut SimClock {
        &mut self.clock
    }

    pub fn step_index(&self) -> u64 {
        self.clock.step_index()
    }

    pub fn sim_time(&self) -> f64 {
        self.clock.sim_time()
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn command(&self) -> RateCommand {
        self.command
    }

    pub fn imu_state(&self) -> &ImuState {
        &self.imu
    }

    pub fn record(&self) -> RaceRecord {
        self.race.as_ref().map(|r| r.record).unwrap_or_default()
    }

    pub fn outcome(&self) -> Option<Outcome> {
        self.race.as_ref().and_then(RaceTracker::outcome)
    }

    pub fn is_over(&self) -> bool {
        self.phase == Phase::Ended
    }

    pub fn hello(&self) -> Payload {
        Payload::Hello {
            protocol_version: PROTOCOL_VERSION,
            server: "raceforge".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            session_id: format!("{:016x}", self.seed),
        }
    }

    pub fn session_info(&self) -> SessionInfo {
        let c = &self.config;
        let max_thrust = c.vehicle.motors.iter().map(|m| m.k_thrust * m.omega_max * m.omega_max).sum();
        SessionInfo {
            seed: self.seed,
            physics_rate: c.physics.rate_hz,
            imu_rate: c.imu.publish_rate,
            camera_rate: c.camera.frame_rate,
            ranger_rate: c.ranger.rate,
            lockstep: c.service.lockstep,
            ground_truth: c.service.ground_truth,
            time_limit: c.race.time_limit,
            vehicle_mass: c.vehicle.mass,
            max_thrust,
            gravity: c.world.gravity,
            imu_rot_body_to_imu: crate::mat3_to_rows(&c.imu.rot_body_to_imu),
            camera: c.camera.clone(),
            ranger: c.ranger.clone(),
            course: self.nominal.clone(),
        }
    }

    /// Starts the episode; the time limit runs from here until the first command.
    pub fn arm(&mut self) {
        if self.phase == Phase::Idle {
            let v = &self.config.vehicle;
            self.race = Some(RaceTracker::new(
                self.clock.rate_hz(),
                self.config.race.time_limit,
                v.collider_radius,
                self.clock.step_index(),
            ));
            self.phase = Phase::Armed;
        }
    }

    /// Latches a command for the coming steps. Returns true when this
    /// command started the race clock.
    pub fn apply_command(&mut self, cmd: RateCommand) -> bool {
        if !cmd.is_valid() || matches!(self.phase, Phase::Idle | Phase::Ended) {
            return false;
        }
        self.command = cmd;
        let step = self.clock.step_index();
        let race = self.race.as_mut().expect("armed");
        if race.started() {
            return false;
        }
        race.start(step);
        self.phase = Phase::Running;
        true
    }

    fn due(&self, hz: u32) -> bool {
        self.clock.is_due(hz)
    }

    fn disturbance(&mut self) -> Disturbance {
        if let Some(d) = self.disturbance {
            return d;
        }
        let d = Disturbance::sample(&self.config.vehicle, self.clock.dt(), &mut self.dist_rng).expect("dt is positive");
        self.disturbance = Some(d);
        d
    }

    /// Run-log header describing this episode and the course actually flown.
    pub fn log_header(&self, timestamp: Option<u64>) -> LogHeader {
        LogHeader {
            version: env!("CARGO_PKG_VERSION").into(),
            config_hash: self.config.hash(),
            seed: self.seed,
            rate_hz: self.clock.rate_hz(),
            time_limit: self.config.race.time_limit,
            collider_radius: self.config.vehicle.collider_radius,
            motor_count: self.config.vehicle.motors.len(),
            course_json: serde_json::to_string(&self.scene).expect("scene serializes"),
            timestamp,
        }
    }

    pub fn left_camera_pose(&self) -> RigidTransform {
        self.config.camera.left_pose(&self.state)
    }

    /// Sensor outputs due at the current step followed by pending race
    /// events. Order: IMU, range, camera poses and beacons, state, events.
    pub fn publish(&mut self) -> Vec<Payload> {
        let mut out = Vec::new();
        if self.phase != Phase::Ended {
            let d = self.disturbance();
            let cfg = &self.config;
            if self.due(cfg.imu.publish_rate) {
                let (thrust, _) = thrust_and_moment(&self.state.motor_speeds, &cfg.vehicle);
                let (drag, _) = aero_drag(&self.state.velocity, &self.state.body_rate, &cfg.vehicle);
                let s = measure_imu(
                    &self.state,
                    &thrust,
                    &drag,
                    &d.force,
                    &self.imu,
                    &cfg.imu,
                    cfg.vehicle.mass,
                    &mut self.imu_rng,
                );
                self.held_gyro = s.gyro;
                out.push(Payload::Imu { accel: s.accel, gyro: s.gyro });
            }
            if self.due(cfg.ranger.rate) {
                let distance = sense_range(&self.state, &self.scene, &cfg.ranger, &mut self.ranger_rng);
                out.push(Payload::Range { distance });
            }
            if self.due(cfg.camera.frame_rate) {
                let frame = self.clock.step_index() / u64::from(self.clock.rate_hz() / cfg.camera.frame_rate);
                let cam = &cfg.camera;
                let left = cam.left_pose(&self.state);
                let right = stereo_partner(&left, cam.stereo_baseline);
                let ext_left = cam.extrinsics_body_to_camera;
                let ext_right = stereo_partner(&ext_left, cam.stereo_baseline);
                for (side, pose, ext) in [(CameraSide::Left, left, ext_left), (CameraSide::Right, right, ext_right)] {
                    let world = cfg.service.ground_truth.then_some(pose);
                    out.push(Payload::CameraPose { camera: side, frame, extrinsics: ext, world });
                    let beacons = sense_ir_beacons(&pose, &self.scene, cam, &cfg.ir, &mut self.pixel_rng);
                    out.push(Payload::IrBeacons { camera: side, frame, beacons });
                }
                if cfg.service.ground_truth {
                    let s = &self.state;
                    out.push(Payload::State {
                        position: s.position,
                        velocity: s.velocity,
                        attitude: s.attitude,
                        body_rate: s.body_rate,
                        motor_speeds: s.motor_speeds.clone(),
                        applied_command: self.command,
                    });
                }
            }
        }
        out.append(&mut self.pending);
        out
    }

    /// Controller update and one integration step with the latched command.
    pub fn step(&mut self) -> StepReport {
        if self.phase == Phase::Ended {
            return StepReport { step: self.clock.step_index(), events: Vec::new() };
        }
        let d = self.disturbance();
        self.disturbance = None;
        let dt = self.clock.dt();
        let cfg = &self.config;
        let motor_cmds = self.controller.update(&self.command, &self.held_gyro, dt);
        let prev = self.state.position;
        let this_step = self.clock.step_index();
        let result = step_with_disturbance(
            &self.state,
            &motor_cmds,
            dt,
            cfg.physics.integrator,
            &d,
            &cfg.vehicle,
            &cfg.world,
            this_step,
        );
        let mut events = Vec::new();
        match result {
            Ok(next) => {
                self.state = next;
                self.imu = propagate_bias(&self.imu, dt, &cfg.imu, &mut self.imu_rng).expect("dt is positive");
                self.clock.advance();
                if let Some(race) = self.race.as_mut() {
                    events = race.update(&prev, &self.state.position, self.clock.step_index(), &self.scene);
                }
            }
            Err(e) => {
                log::error!("integration failed at step {this_step}: {e}");
                events.extend(self.race.as_mut().and_then(|r| r.abort(Outcome::Error)));
            }
        }
        self.queue_events(&events);
        StepReport { step: self.clock.step_index(), events }
    }

    /// Ends the episode from outside (disconnect, internal failure).
    pub fn abort(&mut self, outcome: Outcome) -> Vec<RaceEvent> {
        if self.race.is_none() {
            self.arm();
        }
        let events: Vec<RaceEvent> = self.race.as_mut().and_then(|r| r.abort(outcome)).into_iter().collect();
        self.queue_events(&events);
        events
    }

    fn queue_events(&mut self, events: &[RaceEvent]) {
        for e in events {
            match e {
                RaceEvent::Collision { contact } => self.pending.push(Payload::Collision {
                    object_kind: contact.object_kind,
                    index: contact.index,
                    point: contact.point,
                }),
                RaceEvent::GatePassed { gate_id, gates_passed, elapsed } => self.pending.push(Payload::GatePassed {
                    gate_id: *gate_id,
                    gates_passed: *gates_passed,
                    elapsed: *elapsed,
                }),
                RaceEvent::Ended { outcome } => {
                    self.phase = Phase::Ended;
                    self.pending.push(Payload::RaceEnd { outcome: *outcome, record: self.record() });
                }
                RaceEvent::GatesForfeited { .. } => {}
            }
        }
    }
}

/// Stamps payloads with sim time and a per-type sequence number.
#[derive(Clone, Debug, Default)]
pub struct Sequencer {
    counters: std::collections::BTreeMap<&'static str, u64>,
}

impl Sequencer {
    pub fn stamp(&mut self, sim_time: f64, payload: Payload) -> Message {
        let n = self.counters.entry(payload.type_name()).or_insert(0);
        let seq = *n;
        *n += 1;
        Message::new(sim_time, seq, payload)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sim() -> Simulator {
        let mut cfg = Config::builtin();
        cfg.race.time_limit = 5.0;
        Simulator::from_config(&cfg, cfg.seed).unwrap()
    }

    #[test]
    fn cadences_are_integer_exact() {
        let mut s = sim();
        s.arm();
        let mut imu_times = Vec::new();
        let mut range_count = 0;
        for _ in 0..960 {
            let t = s.sim_time();
            for p in s.publish() {
                match p {
                    Payload::Imu { .. } => imu_times.push(t),
                    Payload::Range { .. } => range_count += 1,
                    _ => {}
                }
            }
            s.apply_command(RateCommand::new(V3::zeros(), 9.81));
            s.step();
        }
        assert_eq!(imu_times.len(), 240);
        for (k, t) in imu_times.iter().enumerate() {
            assert_eq!(*t, k as f64 / 240.0);
        }
        assert_eq!(range_count, 20);
    }

    #[test]
    fn publish_order_within_a_step() {
        let mut s = sim();
        s.arm();
        let kinds: Vec<&str> = s.publish().iter().map(Payload::type_name).collect();
        assert_eq!(kinds, ["imu", "range", "camera_pose", "ir_beacons", "camera_pose", "ir_beacons"]);
    }

    #[test]
    fn no_command_falls_to_the_floor() {
        let mut s = sim();
        s.arm();
        let mut end = None;
        for _ in 0..2000 {
            for p in s.publish() {
                if let Payload::RaceEnd { outcome, .. } = p {
                    end = Some(outcome);
                }
            }
            if s.is_over() {
                break;
            }
            s.step();
        }
        assert_eq!(end, Some(Outcome::Collision));
    }

    #[test]
    fn state_messages_need_ground_truth() {
        let mut cfg = Config::builtin();
        cfg.service.ground_truth = true;
        let mut s = Simulator::from_config(&cfg, 1).unwrap();
        s.arm();
        assert!(s.publish().iter().any(|p| matches!(p, Payload::State { .. })));
        let mut s = sim();
        s.arm();
        assert!(!s.publish().iter().any(|p| matches!(p, Payload::State { .. })));
    }

    #[test]
    fn first_command_starts_clock_once() {
        let mut s = sim();
        s.arm();
        s.publish();
        assert!(s.apply_command(RateCommand::new(V3::zeros(), 9.81)));
        assert!(!s.apply_command(RateCommand::new(V3::zeros(), 9.81)));
        assert_eq!(s.phase(), Phase::Running);
        assert!(!s.apply_command(RateCommand::new(V3::zeros(), f64::NAN)));
    }

    #[test]
    fn sequence_numbers_are_per_type() {
        let mut q = Sequencer::default();
        let a = q.stamp(0.0, Payload::Arm {});
        let b = q.stamp(0.0, Payload::Range { distance: None });
        let c = q.stamp(0.0, Payload::Arm {});
        assert_eq!((a.seq, b.seq, c.seq), (0, 0, 1));
    }
}
