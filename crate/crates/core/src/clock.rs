//! Integer-stepped simulation clock with wall-clock rate scaling.

use serde::{Deserialize, Serialize};

pub const DEFAULT_RATE_HZ: u32 = 960;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateScaling {
    pub enabled: bool,
    pub min: f64,
    pub max: f64,
    /// Weight kept from the previous estimate at each update.
    pub smoothing: f64,
}

impl Default for RateScaling {
    fn default() -> Self {
        Self { enabled: true, min: 0.05, max: 1.0, smoothing: 0.9 }
    }
}

/// Simulation time is always `step_index / rate_hz`, computed from the
/// integer step count so replays are bit-exact.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimClock {
    step_index: u64,
    rate_hz: u32,
    rate_scale: f64,
    scaling: RateScaling,
}

impl SimClock {
    pub fn new(rate_hz: u32, scaling: RateScaling) -> Self {
        assert!(rate_hz > 0, "physics rate must be positive");
        Self { step_index: 0, rate_hz, rate_scale: 1.0_f64.clamp(scaling.min, scaling.max), scaling }
    }

    pub fn step_index(&self) -> u64 {
        self.step_index
    }

    pub fn rate_hz(&self) -> u32 {
        self.rate_hz
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.rate_hz as f64
    }

    pub fn sim_time(&self) -> f64 {
        self.time_at(self.step_index)
    }

    pub fn time_at(&self, step: u64) -> f64 {
        step as f64 / self.rate_hz as f64
    }

    /// Number of physics steps covering `seconds`, rounded to the nearest step.
    pub fn steps_for(&self, seconds: f64) -> u64 {
        (seconds * self.rate_hz as f64).round().max(0.0) as u64
    }

    /// True when a publisher running at `hz` is due at the current step.
    /// `hz` must divide the physics rate.
    pub fn is_due(&self, hz: u32) -> bool {
        hz > 0 && self.step_index.is_multiple_of(u64::from(self.rate_hz / hz))
    }

    pub fn advance(&mut self) {
        self.step_index += 1;
    }

    pub fn rate_scale(&self) -> f64 {
        self.rate_scale
    }

    /// Wall-clock seconds one physics step should take at the current scale.
    pub fn wall_step(&self) -> f64 {
        self.dt() / self.rate_scale
    }

    /// Folds one frame-time measurement into the rate scale. The sim step
    /// size is unchanged; only the pacing of steps against the wall clock moves.
    pub fn update_rate_scale(&mut self, measured_wall_frame_time: f64, nominal_frame_time: f64) {
        if !self.scaling.enabled || !(measured_wall_frame_time > 0.0) || !(nominal_frame_time > 0.0) {
            return;
        }
        let target = nominal_frame_time / measured_wall_frame_time;
        let a = self.scaling.smoothing;
        let smoothed = a * self.rate_scale + (1.0 - a) * target;
        self.rate_scale = smoothed.clamp(self.scaling.min, self.scaling.max);
    }
}

impl Default for SimClock {
    fn default() -> Self {
        Self::new(DEFAULT_RATE_HZ, RateScaling::default())
    }
}
