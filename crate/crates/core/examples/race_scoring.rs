//! Scoring rules: per-run score, the zero cases, a straight-line flight
//! through the first gate and the top-five aggregate.

use nalgebra::Vector3;
use raceforge::config::Config;
use raceforge::race::{compute_score, score_trajectory, top_k_mean, RaceRecord, TOP_K};

fn main() {
    let limit = 120.0;
    let full = RaceRecord { gates_passed: 11, elapsed: 30.0, collided: false, finished: true, score: 0.0 };
    println!("11 gates in 30 s: {}", compute_score(&full, limit));
    println!("same with a collision: {}", compute_score(&RaceRecord { collided: true, ..full }, limit));
    println!("not finished: {}", compute_score(&RaceRecord { finished: false, ..full }, limit));

    let cfg = Config::builtin();
    let scene = cfg.load_course().unwrap();
    let gate = &scene.gates[0];
    let start = scene.start.position;
    let rate = cfg.physics.rate_hz;
    // straight to the first gate centre and 1 m beyond at 5 m/s
    let end = gate.center + gate.normal;
    let steps = ((end - start).norm() / 5.0 * f64::from(rate)) as usize;
    let path: Vec<Vector3<f64>> = (0..=steps).map(|k| start + (end - start) * (k as f64 / steps as f64)).collect();
    let (rec, outcome) = score_trajectory(&path, 0, Some(0), &scene, rate, limit, cfg.vehicle.collider_radius);
    println!("straight line through gate {}: {rec:?} {outcome:?}", gate.id);

    let scores = [90.0, 80.0, 70.0, 60.0, 50.0, 0.0, 0.0, 40.0, 0.0, 20.0];
    println!("top-{TOP_K} mean of {scores:?} = {}", top_k_mean(&scores, TOP_K));
}
