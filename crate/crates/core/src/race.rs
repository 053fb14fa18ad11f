//! Race rules: ordered gate arming, collisions, time limit, per-run score
//! and the top-five aggregate over an evaluation.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::scene::{gate_pass_check, Contact, Scene};

type V3 = Vector3<f64>;

pub const DEFAULT_TIME_LIMIT: f64 = 120.0;
pub const POINTS_PER_GATE: f64 = 10.0;
pub const TOP_K: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Finished,
    Collision,
    Timeout,
    Disconnected,
    Error,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RaceRecord {
    pub gates_passed: u32,
    /// Race time in seconds, from the first command to the last scoring event.
    pub elapsed: f64,
    pub collided: bool,
    pub finished: bool,
    pub score: f64,
}

/// `10·gates − time`, or zero after a collision or without finishing.
pub fn compute_score(record: &RaceRecord, time_limit: f64) -> f64 {
    if record.collided || !record.finished || record.elapsed > time_limit {
        0.0
    } else {
        POINTS_PER_GATE * f64::from(record.gates_passed) - record.elapsed
    }
}

/// Arithmetic mean of the `k` largest scores (all of them if fewer than `k`).
pub fn top_k_mean(scores: &[f64], k: usize) -> f64 {
    if scores.is_empty() || k == 0 {
        return 0.0;
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let n = k.min(sorted.len());
    sorted[..n].iter().sum::<f64>() / n as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum RaceEvent {
    GatePassed { gate_id: u32, gates_passed: u32, elapsed: f64 },
    GatesForfeited { gate_ids: Vec<u32> },
    Collision { contact: Contact },
    Ended { outcome: Outcome },
}

/// Per-episode race state advanced once per physics step.
#[derive(Clone, Debug)]
pub struct RaceTracker {
    pub record: RaceRecord,
    rate_hz: u32,
    time_limit: f64,
    limit_steps: u64,
    armed: usize,
    start_step: Option<u64>,
    fallback_start: u64,
    outcome: Option<Outcome>,
    collider_radius: f64,
}

impl RaceTracker {
    /// `armed_at` is the step at which the episode was armed; it anchors the
    /// time limit until the race clock starts.
    pub fn new(rate_hz: u32, time_limit: f64, collider_radius: f64, armed_at: u64) -> Self {
        Self {
            record: RaceRecord::default(),
            rate_hz,
            time_limit,
            limit_steps: (time_limit * f64::from(rate_hz)).round() as u64,
            armed: 0,
            start_step: None,
            fallback_start: armed_at,
            outcome: None,
            collider_radius,
        }
    }

    pub fn time_limit(&self) -> f64 {
        self.time_limit
    }

    pub fn armed_gate(&self) -> usize {
        self.armed
    }

    pub fn outcome(&self) -> Option<Outcome> {
        self.outcome
    }

    pub fn is_over(&self) -> bool {
        self.outcome.is_some()
    }

    pub fn started(&self) -> bool {
        self.start_step.is_some()
    }

    /// Starts the race clock; later calls are ignored.
    pub fn start(&mut self, step: u64) {
        self.start_step.get_or_insert(step);
    }

    pub fn elapsed_at(&self, step: u64) -> f64 {
        match self.start_step {
            Some(s) => step.saturating_sub(s) as f64 / f64::from(self.rate_hz),
            None => 0.0,
        }
    }

    /// Ends the episode from outside the physics loop (disconnects, errors).
    pub fn abort(&mut self, outcome: Outcome) -> Option<RaceEvent> {
        if self.outcome.is_some() {
            return None;
        }
        self.outcome = Some(outcome);
        self.record.score = compute_score(&self.record, self.time_limit);
        Some(RaceEvent::Ended { outcome })
    }

    /// Processes the motion from `prev` to `pos`, where `pos` is the state at
    /// integer step `step`.
    pub fn update(&mut self, prev: &V3, pos: &V3, step: u64, scene: &Scene) -> Vec<RaceEvent> {
        let mut events = Vec::new();
        if self.outcome.is_some() {
            return events;
        }
        let elapsed = self.elapsed_at(step);
        if self.started() {
            if let Some(j) = (self.armed..scene.gates.len()).find(|&j| gate_pass_check(prev, pos, &scene.gates[j])) {
                if j > self.armed {
                    let gate_ids = scene.gates[self.armed..j].iter().map(|g| g.id).collect();
                    events.push(RaceEvent::GatesForfeited { gate_ids });
                }
                self.record.gates_passed += 1;
                self.record.elapsed = elapsed;
                self.armed = j + 1;
                events.push(RaceEvent::GatePassed {
                    gate_id: scene.gates[j].id,
                    gates_passed: self.record.gates_passed,
                    elapsed,
                });
                if self.armed == scene.gates.len() {
                    self.record.finished = true;
                    events.extend(self.abort(Outcome::Finished));
                    return events;
                }
            }
        }
        if let Some(contact) = scene.check_collision(pos, self.collider_radius) {
            self.record.collided = true;
            self.record.elapsed = elapsed;
            events.push(RaceEvent::Collision { contact });
            events.extend(self.abort(Outcome::Collision));
            return events;
        }
        let since = step.saturating_sub(self.start_step.unwrap_or(self.fallback_start));
        if since >= self.limit_steps {
            self.record.elapsed = elapsed;
            events.extend(self.abort(Outcome::Timeout));
        }
        events
    }
}

/// Replays a position trace through the race rules. `positions[k]` is the
/// position at step `first_step + k`; the clock starts at `start_step`.
pub fn score_trajectory(
    positions: &[V3],
    first_step: u64,
    start_step: Option<u64>,
    scene: &Scene,
    rate_hz: u32,
    time_limit: f64,
    collider_radius: f64,
) -> (RaceRecord, Option<Outcome>) {
    let mut tracker = RaceTracker::new(rate_hz, time_limit, collider_radius, first_step);
    for (k, w) in positions.windows(2).enumerate() {
        let step = first_step + k as u64 + 1;
        if let Some(s) = start_step {
            if step > s {
                tracker.start(s);
            }
        }
        tracker.update(&w[0], &w[1], step, scene);
        if tracker.is_over() {
            break;
        }
    }
    (tracker.record, tracker.outcome())
}
