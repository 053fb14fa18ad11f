//! Ensemble of gyro bias random walks: the variance grows as W t.

use raceforge::imu::{propagate_bias, ImuParams, ImuRng, ImuState};
use raceforge::noise::NoiseSpec;

fn main() {
    let w = 1e-6;
    let mut params = ImuParams::ideal();
    params.gyro_bias_density = NoiseSpec::isotropic(w).unwrap();
    let dt = 1.0 / 960.0;
    let runs = 400;
    let checkpoints = [240usize, 960, 1920];
    let mut sums = vec![0.0; checkpoints.len()];
    for seed in 0..runs {
        let mut rng = ImuRng::new(seed);
        let mut s = ImuState::default();
        let mut next = 0;
        for k in 1..=*checkpoints.last().unwrap() {
            s = propagate_bias(&s, dt, &params, &mut rng).unwrap();
            if k == checkpoints[next] {
                sums[next] += s.gyro_bias.x * s.gyro_bias.x;
                next += 1;
            }
        }
    }
    for (k, sum) in checkpoints.iter().zip(sums) {
        let t = *k as f64 * dt;
        println!("t={t:.2}s  var={:.3e}  W*t={:.3e}", sum / runs as f64, w * t);
    }
}
