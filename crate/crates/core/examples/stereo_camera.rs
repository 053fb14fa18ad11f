//! Pinhole stereo pair: focal length from the field of view, projection of
//! a point into both images and depth recovered from disparity.

use nalgebra::Vector3;
use raceforge::config::Config;
use raceforge::quaternion::Quaternion;
use raceforge::sensors::{project_point, stereo_partner};
use raceforge::vehicle::VehicleState;

fn main() {
    let cam = Config::builtin().camera;
    let f = cam.focal_length();
    println!("{}x{} px, vertical fov {} deg, baseline {} m", cam.width, cam.height, cam.vertical_fov, cam.stereo_baseline);
    println!("focal length {f:.4} px");

    let state = VehicleState::at_rest(Vector3::new(0.0, 0.0, 1.0), Quaternion::IDENTITY, 4);
    let left = cam.left_pose(&state);
    let right = stereo_partner(&left, cam.stereo_baseline);
    for depth in [2.0, 5.0, 10.0, 25.0] {
        let p = left.apply(&Vector3::new(0.4, -0.3, depth));
        let (ul, vl) = project_point(&p, &left, &cam).unwrap();
        let (ur, _) = project_point(&p, &right, &cam).unwrap();
        let d = ul - ur;
        println!("Z={depth:5.1}  left=({ul:8.3},{vl:8.3})  disparity={d:8.4}  f*b/d={:.9}", f * cam.stereo_baseline / d);
    }
}
