//! First-order motor lag: a step command from rest against w_c (1 - exp(-t/tau)).

use nalgebra::Vector3;
use raceforge::integrate::Method;
use raceforge::quaternion::Quaternion;
use raceforge::vehicle::{step_vehicle, DisturbanceRng, VehicleParams, VehicleState, WorldParams};

fn main() {
    let params = VehicleParams::default_quad().without_noise();
    let world = WorldParams { gravity: Vector3::zeros() };
    let tau = params.motors[0].tau;
    let w_c = 1500.0;
    let dt = 1.0 / 960.0;
    let mut rng = DisturbanceRng::new(0);

    println!("tau = {tau} s, command = {w_c} rad/s");
    for method in [Method::Rk4, Method::Euler] {
        let mut s = VehicleState::at_rest(Vector3::zeros(), Quaternion::IDENTITY, 4);
        let mut worst: f64 = 0.0;
        for k in 0..96u64 {
            s = step_vehicle(&s, &[w_c; 4], dt, method, &mut rng, &params, &world, k).unwrap().0;
            let t = (k + 1) as f64 * dt;
            let exact = w_c * (1.0 - (-t / tau).exp());
            worst = worst.max((s.motor_speeds[0] - exact).abs() / exact);
            if (k + 1) % 24 == 0 {
                println!("  {method:?} t={t:.4}s  w={:.6}  exact={exact:.6}", s.motor_speeds[0]);
            }
        }
        println!("  {method:?} worst relative error over 0.1 s: {worst:.3e}");
    }
}
