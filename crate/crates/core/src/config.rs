//! Simulator configuration: one JSON document covering physics, vehicle,
//! sensors, controller, course, race rules and the network service.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::clock::{RateScaling, DEFAULT_RATE_HZ};
use crate::control::ControllerParams;
use crate::error::ConfigError;
use crate::imu::ImuParams;
use crate::integrate::Method;
use crate::race::DEFAULT_TIME_LIMIT;
use crate::scene::Scene;
use crate::sensors::{CameraParams, IrParams, RangerParams};
use crate::vehicle::{VehicleParams, WorldParams};

pub const DEFAULT_PORT: u16 = 10253;
pub const DEFAULT_CONFIG_JSON: &str = include_str!("../assets/default.json");
pub const DEFAULT_COURSE_JSON: &str = include_str!("../assets/courses/default.json");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsConfig {
    pub rate_hz: u32,
    pub integrator: Method,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        Self { rate_hz: DEFAULT_RATE_HZ, integrator: Method::Rk4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CourseConfig {
    /// Course file, relative to the config file. `None` uses the built-in course.
    pub path: Option<PathBuf>,
    /// Per-axis gate translation sigma, m (draws span ±2σ).
    pub translation_sigma: f64,
    /// Gate yaw sigma, rad (draws span ±2σ).
    pub yaw_sigma: f64,
    /// Perturb the course with the episode seed in single runs.
    pub perturb: bool,
}

impl Default for CourseConfig {
    fn default() -> Self {
        Self { path: None, translation_sigma: 0.5, yaw_sigma: 0.1, perturb: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RaceConfig {
    /// s
    pub time_limit: f64,
    /// One seed per evaluation course.
    pub seeds: Vec<u64>,
}

impl Default for RaceConfig {
    fn default() -> Self {
        Self { time_limit: DEFAULT_TIME_LIMIT, seeds: (1..=25).map(|k| 1000 + k).collect() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub host: String,
    pub port: u16,
    /// Disable wall-clock pacing.
    pub as_fast_as_possible: bool,
    /// After each IMU message, wait for one client message before stepping on.
    pub lockstep: bool,
    /// Wall seconds to wait for a lockstep reply before treating the client as gone.
    pub lockstep_timeout: f64,
    /// Publish `state` messages and world camera poses.
    pub ground_truth: bool,
    /// Outbound message queue bound.
    pub queue_capacity: usize,
    /// Wall seconds to wait for a client to connect.
    pub accept_timeout: f64,
    pub rate_scaling: RateScaling,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: DEFAULT_PORT,
            as_fast_as_possible: false,
            lockstep: true,
            lockstep_timeout: 10.0,
            ground_truth: false,
            queue_capacity: 4096,
            accept_timeout: 30.0,
            rate_scaling: RateScaling::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub physics: PhysicsConfig,
    pub vehicle: VehicleParams,
    pub world: WorldParams,
    pub imu: ImuParams,
    pub controller: ControllerParams,
    pub camera: CameraParams,
    pub ir: IrParams,
    pub ranger: RangerParams,
    pub course: CourseConfig,
    pub race: RaceConfig,
    pub service: ServiceConfig,
    #[serde(skip)]
    base_dir: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 7,
            physics: PhysicsConfig::default(),
            vehicle: VehicleParams::default_quad(),
            world: WorldParams::default(),
            imu: ImuParams::default(),
            controller: ControllerParams::default(),
            camera: CameraParams::default(),
            ir: IrParams::default(),
            ranger: RangerParams::default(),
            course: CourseConfig::default(),
            race: RaceConfig::default(),
            service: ServiceConfig::default(),
            base_dir: None,
        }
    }
}

impl Config {
    /// The shipped default configuration, flying the embedded default course.
    pub fn builtin() -> Self {
        let mut cfg = Self::from_json_str(DEFAULT_CONFIG_JSON, "<builtin>", &[]).expect("built-in config is valid");
        cfg.course.path = None;
        cfg
    }

    /// [`Config::builtin`] with `key=value` overrides applied.
    pub fn builtin_with(overrides: &[String]) -> Result<Self, ConfigError> {
        let mut value = serde_json::to_value(Self::builtin()).expect("config serializes");
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg: Config = serde_path_to_error::deserialize(value).map_err(|e| parse_error("--set", e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        let mut cfg = Self::from_json_str(&text, &path.display().to_string(), overrides)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    /// Parses `text`, applies `key=value` overrides and validates. `origin`
    /// names the source in diagnostics.
    pub fn from_json_str(text: &str, origin: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let mut cfg: Config = serde_path_to_error::deserialize(de).map_err(|e| parse_error(origin, e))?;
        if !overrides.is_empty() {
            let mut value: Value = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
                path: origin.into(),
                line: e.line(),
                column: e.column(),
                field: String::new(),
                message: e.to_string(),
            })?;
            for o in overrides {
                apply_override(&mut value, o)?;
            }
            cfg = serde_path_to_error::deserialize(value).map_err(|e| parse_error("--set", e))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_base_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.base_dir = Some(dir.into());
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let rate = self.physics.rate_hz;
        if rate == 0 {
            return Err(ConfigError::invalid("physics.rate_hz", "must be positive"));
        }
        self.vehicle.validate()?;
        self.world.validate()?;
        self.imu.validate(rate)?;
        self.controller.validate()?;
        self.camera.validate(rate)?;
        self.ranger.validate(rate)?;
        if !(self.ir.pixel_noise_sigma >= 0.0 && self.ir.occlusion_tolerance >= 0.0) {
            return Err(ConfigError::invalid("ir", "noise and tolerance must be non-negative"));
        }
        if !(self.course.translation_sigma >= 0.0 && self.course.yaw_sigma >= 0.0) {
            return Err(ConfigError::invalid("course", "perturbation sigmas must be non-negative"));
        }
        if !(self.race.time_limit > 0.0 && self.race.time_limit.is_finite()) {
            return Err(ConfigError::invalid("race.time_limit", "must be positive"));
        }
        if self.race.seeds.is_empty() {
            return Err(ConfigError::invalid("race.seeds", "need at least one evaluation seed"));
        }
        if self.service.queue_capacity == 0 {
            return Err(ConfigError::invalid("service.queue_capacity", "must be positive"));
        }
        if !(self.service.lockstep_timeout > 0.0 && self.service.accept_timeout > 0.0) {
            return Err(ConfigError::invalid("service", "timeouts must be positive"));
        }
        Ok(())
    }

    /// Resolved course path, or `None` for the built-in course.
    pub fn course_path(&self) -> Option<PathBuf> {
        let p = self.course.path.as_ref()?;
        Some(match &self.base_dir {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p.clone(),
        })
    }

    pub fn load_course(&self) -> Result<Scene, ConfigError> {
        match self.course_path() {
            Some(p) => Scene::load(&p),
            None => Ok(Scene::from_json(DEFAULT_COURSE_JSON).expect("built-in course is valid")),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 over the canonical JSON encoding, hex encoded.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

fn parse_error(origin: &str, e: serde_path_to_error::Error<serde_json::Error>) -> ConfigError {
    ConfigError::Parse {
        path: origin.to_string(),
        line: e.inner().line(),
        column: e.inner().column(),
        field: e.path().to_string(),
        message: e.inner().to_string(),
    }
}

/// Sets a dotted path (`service.port=9000`, `race.seeds.0=5`) inside a JSON
/// value. The right-hand side is read as JSON, falling back to a string.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<(), ConfigError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| ConfigError::invalid(assignment, "override must look like key=value"))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(ConfigError::invalid(assignment, "empty override key"));
    }
    let new: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        cur = match cur {
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), new);
                    return Ok(());
                }
                map.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize =
                    part.parse().map_err(|_| ConfigError::invalid(key, format!("`{part}` is not an array index")))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| ConfigError::invalid(key, format!("index {idx} out of range (len {len})")))?;
                if last {
                    *slot = new;
                    return Ok(());
                }
                slot
            }
            Value::Null => {
                *cur = Value::Object(Default::default());
                match cur {
                    Value::Object(map) => {
                        if last {
                            map.insert(part.to_string(), new);
                            return Ok(());
                        }
                        map.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()))
                    }
                    _ => unreachable!(),
                }
            }
            _ => return Err(ConfigError::invalid(key, format!("`{part}` does not address an object or array"))),
        };
    }
    Ok(())
}
