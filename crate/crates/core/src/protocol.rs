//! Newline-delimited JSON wire format. Every line is one object with a
//! `type` tag, the server `sim_time` in seconds, a per-type `seq` counter
//! and type-specific fields.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::control::RateCommand;
use crate::quaternion::Quaternion;
use crate::race::{Outcome, RaceRecord};
use crate::scene::{Gate, IrBeacon, ObjectKind, Scene, StartPose};
use crate::sensors::{BeaconObservation, CameraParams, RangerParams, RigidTransform};

type V3 = Vector3<f64>;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CameraSide {
    Left,
    Right,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateInfo {
    pub id: u32,
    pub center: V3,
    pub normal: V3,
    pub up: V3,
    pub width: f64,
    pub height: f64,
    pub beacons: Vec<IrBeacon>,
}

impl From<&Gate> for GateInfo {
    fn from(g: &Gate) -> Self {
        Self {
            id: g.id,
            center: g.center,
            normal: g.normal,
            up: g.up,
            width: g.width,
            height: g.height,
            beacons: g.beacons.to_vec(),
        }
    }
}

/// Nominal course layout handed to the client.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CourseInfo {
    pub name: String,
    pub start: StartPose,
    pub gates: Vec<GateInfo>,
    pub static_beacons: Vec<IrBeacon>,
}

impl From<&Scene> for CourseInfo {
    fn from(s: &Scene) -> Self {
        Self {
            name: s.name.clone(),
            start: s.start,
            gates: s.gates.iter().map(GateInfo::from).collect(),
            static_beacons: s.static_beacons.clone(),
        }
    }
}

/// Everything a client needs to fly: rates, vehicle constants, sensor
/// geometry and the nominal course.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub seed: u64,
    pub physics_rate: u32,
    pub imu_rate: u32,
    pub camera_rate: u32,
    pub ranger_rate: u32,
    pub lockstep: bool,
    pub ground_truth: bool,
    /// s
    pub time_limit: f64,
    /// kg
    pub vehicle_mass: f64,
    /// Largest collective thrust the motors can produce, N.
    pub max_thrust: f64,
    /// m/s², world frame
    pub gravity: V3,
    pub imu_rot_body_to_imu: [[f64; 3]; 3],
    pub camera: CameraParams,
    pub ranger: RangerParams,
    pub course: CourseInfo,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Payload {
    Hello {
        protocol_version: u32,
        server: String,
        version: String,
        session_id: String,
    },
    Config(Box<SessionInfo>),
    Arm {},
    RateCommand {
        /// rad/s, body frame
        body_rate: V3,
        /// N
        thrust: f64,
    },
    Imu {
        /// m/s², IMU frame
        accel: V3,
        /// rad/s, IMU frame
        gyro: V3,
    },
    Range {
        /// m, absent when nothing is within range
        distance: Option<f64>,
    },
    IrBeacons {
        camera: CameraSide,
        frame: u64,
        beacons: Vec<BeaconObservation>,
    },
    CameraPose {
        camera: CameraSide,
        frame: u64,
        /// Camera pose in the body frame.
        extrinsics: RigidTransform,
        /// Camera pose in the world, only with ground truth enabled.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        world: Option<RigidTransform>,
    },
    Collision {
        object_kind: ObjectKind,
        index: usize,
        point: V3,
    },
    GatePassed {
        gate_id: u32,
        gates_passed: u32,
        /// s since the race clock started
        elapsed: f64,
    },
    RaceEnd {
        outcome: Outcome,
        record: RaceRecord,
    },
    State {
        position: V3,
        velocity: V3,
        attitude: Quaternion,
        body_rate: V3,
        motor_speeds: Vec<f64>,
        applied_command: RateCommand,
    },
    ProtocolError {
        message: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        offset: Option<usize>,
    },
}

impl Payload {
    pub fn type_name(&self) -> &'static str {
        match self {
            Payload::Hello { .. } => "hello",
            Payload::Config(_) => "config",
            Payload::Arm {} => "arm",
            Payload::RateCommand { .. } => "rate_command",
            Payload::Imu { .. } => "imu",
            Payload::Range { .. } => "range",
            Payload::IrBeacons { .. } => "ir_beacons",
            Payload::CameraPose { .. } => "camera_pose",
            Payload::Collision { .. } => "collision",
            Payload::GatePassed { .. } => "gate_passed",
            Payload::RaceEnd { .. } => "race_end",
            Payload::State { .. } => "state",
            Payload::ProtocolError { .. } => "protocol_error",
        }
    }

    pub fn rate_command(cmd: &RateCommand) -> Self {
        Payload::RateCommand { body_rate: cmd.body_rate, thrust: cmd.thrust }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Message {
    pub sim_time: f64,
    pub seq: u64,
    pub payload: Payload,
}

impl Message {
    pub fn new(sim_time: f64, seq: u64, payload: Payload) -> Self {
        Self { sim_time, seq, payload }
    }

    /// A client-side message; the server ignores client timestamps.
    pub fn client(payload: Payload) -> Self {
        Self { sim_time: 0.0, seq: 0, payload }
    }
}

/// Malformed input. `offset` is the byte offset within the line where
/// parsing stopped, when known.
#[derive(Clone, Debug, PartialEq, thiserror::Error)]
#[error("protocol error{}: {message}", offset.map(|o| format!(" at byte {o}")).unwrap_or_default())]
pub struct ProtocolError {
    pub message: String,
    pub offset: Option<usize>,
}

impl ProtocolError {
    pub fn to_payload(&self) -> Payload {
        Payload::ProtocolError { message: self.message.clone(), offset: self.offset }
    }
}

/// One JSON object followed by `\n`. Field order: `type`, `sim_time`,
/// `seq`, then the payload fields in lexical order.
pub fn encode_message(msg: &Message) -> String {
    let body = serde_json::to_value(&msg.payload).expect("payload serializes");
    let Value::Object(fields) = body else { unreachable!("payloads are objects") };
    let mut out = String::with_capacity(128);
    out.push_str("{\"type\":");
    out.push_str(&serde_json::to_string(msg.payload.type_name()).expect("string"));
    out.push_str(",\"sim_time\":");
    out.push_str(&serde_json::to_string(&msg.sim_time).expect("finite time"));
    out.push_str(",\"seq\":");
    out.push_str(&msg.seq.to_string());
    for (k, v) in fields.iter().filter(|(k, _)| k.as_str() != "type") {
        out.push(',');
        out.push_str(&serde_json::to_string(k).expect("string"));
        out.push(':');
        out.push_str(&serde_json::to_string(v).expect("value"));
    }
    out.push_str("}\n");
    out
}

/// Parses one line (with or without its trailing newline).
pub fn decode_message(line: &str) -> Result<Message, ProtocolError> {
    let trimmed = line.trim_end_matches(['\n', '\r']);
    let value: Value = serde_json::from_str(trimmed).map_err(|e| ProtocolError {
        message: e.to_string(),
        offset: Some(if e.is_eof() { trimmed.len() } else { byte_offset(trimmed, e.line(), e.column()) }),
    })?;
    let Value::Object(mut map) = value else {
        return Err(ProtocolError { message: "message must be a JSON object".into(), offset: Some(0) });
    };
    let sim_time = take_number(&mut map, "sim_time")?.unwrap_or(0.0);
    let seq = match map.remove("seq") {
        None => 0,
        Some(v) => v.as_u64().ok_or_else(|| ProtocolError { message: "seq must be an unsigned integer".into(), offset: None })?,
    };
    let payload: Payload = serde_json::from_value(Value::Object(map))
        .map_err(|e| ProtocolError { message: e.to_string(), offset: None })?;
    if !payload_is_finite(&payload) {
        return Err(ProtocolError { message: "non-finite number in payload".into(), offset: None });
    }
    Ok(Message { sim_time, seq, payload })
}

fn take_number(map: &mut Map<String, Value>, key: &str) -> Result<Option<f64>, ProtocolError> {
    match map.remove(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => v
            .as_f64()
            .map(Some)
            .ok_or_else(|| ProtocolError { message: format!("{key} must be a number"), offset: None }),
    }
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let start: usize = text.split_inclusive('\n').take(line.saturating_sub(1)).map(str::len).sum();
    (start + column.saturating_sub(1)).min(text.len())
}

fn payload_is_finite(p: &Payload) -> bool {
    match p {
        Payload::RateCommand { body_rate, thrust } => body_rate.iter().all(|x| x.is_finite()) && thrust.is_finite(),
        _ => true,
    }
}
