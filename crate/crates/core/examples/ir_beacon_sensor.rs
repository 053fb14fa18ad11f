//! IR beacon observations from the start pose of the default course, then
//! the same view with a box placed in front of the camera.

use nalgebra::Vector3;
use raceforge::config::Config;
use raceforge::geometry::Aabb;
use raceforge::rng::{Rng, Stream};
use raceforge::sensors::{project_point, sense_ir_beacons};
use raceforge::sim::Simulator;

fn main() {
    let cfg = Config::builtin();
    let sim = Simulator::from_config(&cfg, 7).unwrap();
    let pose = sim.left_camera_pose();
    let mut rng = Rng::stream(7, Stream::PixelNoise);

    let seen = sense_ir_beacons(&pose, sim.scene(), &cfg.camera, &cfg.ir, &mut rng);
    println!("{} beacons visible from the start", seen.len());
    for obs in seen.iter().take(8) {
        let b = sim.scene().all_beacons().find(|b| b.id == obs.beacon_id).unwrap();
        let (u, v) = project_point(&b.position, &pose, &cfg.camera).unwrap();
        println!("  id {:3}  ({:8.3}, {:8.3})  reprojection ({u:8.3}, {v:8.3})", obs.beacon_id, obs.u, obs.v);
    }

    let mut blocked = sim.scene().clone();
    blocked.boxes.push(Aabb::from_center(pose.translation + Vector3::new(2.0, 0.0, 0.0), Vector3::new(0.1, 1.0, 1.0)));
    blocked.rebuild_frames();
    let after = sense_ir_beacons(&pose, &blocked, &cfg.camera, &cfg.ir, &mut rng);
    println!("with an occluder 2 m ahead: {} visible", after.len());
}
