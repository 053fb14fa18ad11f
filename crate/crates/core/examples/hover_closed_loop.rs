//! Rate controller holding zero body rate at hover thrust, first without
//! noise and then with the default disturbance and IMU noise.

use nalgebra::Vector3;
use raceforge::config::Config;
use raceforge::control::RateCommand;
use raceforge::sim::Simulator;
use raceforge::vehicle::VehicleState;

fn fly(cfg: &Config, seconds: f64) {
    let mut sim = Simulator::from_config(cfg, 7).unwrap();
    let start = Vector3::new(0.0, 0.0, 5.0);
    sim.set_state(VehicleState::hover_trim(start, &cfg.vehicle, &cfg.world));
    sim.arm();
    let thrust = cfg.vehicle.mass * cfg.world.gravity.norm();
    sim.apply_command(RateCommand::new(Vector3::zeros(), thrust));
    let steps = sim.clock().steps_for(seconds);
    let mut max_tilt: f64 = 0.0;
    for k in 1..=steps {
        sim.publish();
        sim.step();
        max_tilt = max_tilt.max(sim.state().attitude.tilt());
        if k % (steps / 5) == 0 {
            let s = sim.state();
            println!("  t={:5.1}s  tilt={:.3e} rad  dz={:+.2e} m", sim.sim_time(), s.attitude.tilt(), s.position.z - start.z);
        }
    }
    println!("  max tilt {:.3e} rad ({:.3} deg)", max_tilt, max_tilt.to_degrees());
}

fn main() {
    let mut quiet = Config::builtin();
    quiet.vehicle = quiet.vehicle.without_noise();
    quiet.imu = raceforge::imu::ImuParams::ideal();
    quiet.race.time_limit = 60.0;
    println!("noise off, 10 s");
    fly(&quiet, 10.0);

    let mut noisy = Config::builtin();
    noisy.race.time_limit = 60.0;
    println!("default noise, 30 s");
    fly(&noisy, 30.0);
}
