//! Downward ranger readings at several heights over the floor.

use nalgebra::Vector3;
use raceforge::config::Config;
use raceforge::quaternion::Quaternion;
use raceforge::rng::{Rng, Stream};
use raceforge::sensors::sense_range;
use raceforge::vehicle::VehicleState;

fn main() {
    let cfg = Config::builtin();
    let scene = cfg.load_course().unwrap();
    let mut rng = Rng::stream(7, Stream::Ranger);
    println!("sigma = {} m, max range = {} m, {} Hz", cfg.ranger.noise_sigma, cfg.ranger.max_range, cfg.ranger.rate);
    for h in [0.5, 2.0, 5.0, 10.0, 150.0] {
        let s = VehicleState::at_rest(Vector3::new(-5.0, -5.0, h), Quaternion::IDENTITY, 4);
        let reads: Vec<String> = (0..5)
            .map(|_| match sense_range(&s, &scene, &cfg.ranger, &mut rng) {
                Some(d) => format!("{d:6.3}"),
                None => "  none".into(),
            })
            .collect();
        println!("height {h:6.1} m: {}", reads.join(" "));
    }
    let tilted = VehicleState::at_rest(
        Vector3::new(-5.0, -5.0, 4.0),
        Quaternion::from_axis_angle(&Vector3::x(), 0.5),
        4,
    );
    let mut ideal = cfg.ranger.clone();
    ideal.noise_sigma = 0.0;
    println!("tilted 0.5 rad at 4 m: {:.4} (4 / cos 0.5 = {:.4})", sense_range(&tilted, &scene, &ideal, &mut rng).unwrap(), 4.0 / 0.5f64.cos());
}
