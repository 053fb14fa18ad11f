//! The 25-course evaluation with the bundled gate follower, run through
//! TCP sessions as fast as the CPU allows.

use std::time::Instant;

use raceforge::config::Config;
use raceforge::evaluate::{evaluate, Controller, EvaluateOptions};

fn main() {
    let mut cfg = Config::builtin();
    cfg.service.as_fast_as_possible = true;
    let pilot = std::env::args().nth(1).unwrap_or_else(|| "gate-follower".into());
    let started = Instant::now();
    let result = evaluate(&cfg, &Controller::Builtin(pilot.clone()), &EvaluateOptions::default()).unwrap();
    println!("{pilot}: {} courses in {:.1} s", result.courses.len(), started.elapsed().as_secs_f64());
    for c in &result.courses {
        println!(
            "  course {:2} seed {}  {:>12}  gates {:2}  elapsed {:6.2}  score {:6.2}",
            c.index,
            c.seed,
            format!("{:?}", c.outcome),
            c.record.gates_passed,
            c.record.elapsed,
            c.score
        );
    }
    println!("final score (top-5 mean): {:.3}", result.final_score);
}
