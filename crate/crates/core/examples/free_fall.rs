//! One second of drag-free fall with the motors off, against z = -g t²/2.

use nalgebra::Vector3;
use raceforge::integrate::Method;
use raceforge::quaternion::Quaternion;
use raceforge::vehicle::{step_vehicle, DisturbanceRng, VehicleParams, VehicleState, WorldParams};

fn main() {
    let mut params = VehicleParams::default_quad().without_noise();
    params.drag_force_coeff = 0.0;
    let world = WorldParams::default();
    let dt = 1.0 / 960.0;
    let mut rng = DisturbanceRng::new(0);

    for method in [Method::Rk4, Method::Euler] {
        let mut s = VehicleState::at_rest(Vector3::zeros(), Quaternion::IDENTITY, 4);
        println!("{method:?}");
        for k in 0..960u64 {
            s = step_vehicle(&s, &[0.0; 4], dt, method, &mut rng, &params, &world, k).unwrap().0;
            if (k + 1) % 192 == 0 {
                let t = (k + 1) as f64 * dt;
                let exact = -0.5 * 9.81 * t * t;
                println!("  t={t:.2}s  z={:+.9}  exact={exact:+.9}  err={:.2e}", s.position.z, (s.position.z - exact).abs());
            }
        }
    }
}
