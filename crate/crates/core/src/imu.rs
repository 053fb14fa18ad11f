//! Accelerometer and gyroscope model: specific force and body rate seen
//! through a mounting rotation, plus white measurement noise and
//! random-walk biases.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, DomainError};
use crate::noise::{Covariance, NoiseSpec};
use crate::rng::{Rng, Stream};
use crate::serde_mat3;
use crate::vehicle::VehicleState;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImuParams {
    #[serde(with = "serde_mat3")]
    pub rot_body_to_imu: Matrix3<f64>,
    /// Per-sample accelerometer noise covariance, (m/s²)².
    pub accel_noise_cov: Covariance,
    /// Per-sample gyroscope noise covariance, (rad/s)².
    pub gyro_noise_cov: Covariance,
    /// Accelerometer bias random-walk density, (m/s²)²/s.
    pub accel_bias_density: NoiseSpec,
    /// Gyroscope bias random-walk density, (rad/s)²/s.
    pub gyro_bias_density: NoiseSpec,
    /// Output rate, Hz. Must divide the physics rate.
    pub publish_rate: u32,
    /// Standard deviation of the turn-on accelerometer bias, m/s².
    pub initial_accel_bias_sigma: f64,
    /// Standard deviation of the turn-on gyroscope bias, rad/s.
    pub initial_gyro_bias_sigma: f64,
}

impl Default for ImuParams {
    fn default() -> Self {
        Self {
            rot_body_to_imu: Matrix3::identity(),
            accel_noise_cov: Covariance::isotropic(0.005f64.powi(2)).expect("valid"),
            gyro_noise_cov: Covariance::isotropic(0.001f64.powi(2)).expect("valid"),
            accel_bias_density: NoiseSpec::isotropic(1e-4f64.powi(2)).expect("valid"),
            gyro_bias_density: NoiseSpec::isotropic(1e-5f64.powi(2)).expect("valid"),
            publish_rate: 240,
            initial_accel_bias_sigma: 0.02,
            initial_gyro_bias_sigma: 0.002,
        }
    }
}

impl ImuParams {
    /// A perfect IMU: no noise and no bias.
    pub fn ideal() -> Self {
        Self {
            accel_noise_cov: Covariance::zero(),
            gyro_noise_cov: Covariance::zero(),
            accel_bias_density: NoiseSpec::zero(),
            gyro_bias_density: NoiseSpec::zero(),
            initial_accel_bias_sigma: 0.0,
            initial_gyro_bias_sigma: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self, physics_rate: u32) -> Result<(), ConfigError> {
        if self.publish_rate == 0 || !physics_rate.is_multiple_of(self.publish_rate) {
            return Err(ConfigError::invalid(
                "imu.publish_rate",
                format!("{} Hz does not divide the {physics_rate} Hz physics rate", self.publish_rate),
            ));
        }
        let r = self.rot_body_to_imu;
        if (r.transpose() * r - Matrix3::identity()).abs().max() > 1e-9 || (r.determinant() - 1.0).abs() > 1e-9 {
            return Err(ConfigError::invalid("imu.rot_body_to_imu", "must be a proper rotation"));
        }
        if !(self.initial_accel_bias_sigma >= 0.0 && self.initial_gyro_bias_sigma >= 0.0) {
            return Err(ConfigError::invalid("imu", "initial bias sigmas must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ImuState {
    pub accel_bias: Vector3<f64>,
    pub gyro_bias: Vector3<f64>,
}

/// One IMU output.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ImuSample {
    /// Specific force, m/s².
    pub accel: Vector3<f64>,
    /// Angular rate, rad/s.
    pub gyro: Vector3<f64>,
}

#[derive(Clone, Debug)]
pub struct ImuRng {
    pub accel_bias: Rng,
    pub gyro_bias: Rng,
    pub accel_noise: Rng,
    pub gyro_noise: Rng,
}

impl ImuRng {
    pub fn new(seed: u64) -> Self {
        Self {
            accel_bias: Rng::stream(seed, Stream::AccelBias),
            gyro_bias: Rng::stream(seed, Stream::GyroBias),
            accel_noise: Rng::stream(seed, Stream::AccelNoise),
            gyro_noise: Rng::stream(seed, Stream::GyroNoise),
        }
    }
}

impl ImuState {
    /// Turn-on biases drawn once per episode.
    pub fn initial(params: &ImuParams, seed: u64) -> Self {
        let mut rng = Rng::stream(seed, Stream::InitialBias);
        let mut draw = |sigma: f64| {
            let v = Vector3::new(rng.standard_normal(), rng.standard_normal(), rng.standard_normal());
            v * sigma
        };
        let accel_bias = draw(params.initial_accel_bias_sigma);
        let gyro_bias = draw(params.initial_gyro_bias_sigma);
        Self { accel_bias, gyro_bias }
    }
}

/// Produces one accelerometer/gyro reading. `thrust_body` is the propeller
/// force in body axes; `drag_world` and `noise_force_world` are the drag
/// and disturbance forces applied in the same step. Gravity does not appear:
/// the accelerometer senses specific force only.
#[allow(clippy::too_many_arguments)]
pub fn measure_imu(
    state: &VehicleState,
    thrust_body: &Vector3<f64>,
    drag_world: &Vector3<f64>,
    noise_force_world: &Vector3<f64>,
    imu: &ImuState,
    params: &ImuParams,
    mass: f64,
    rng: &mut ImuRng,
) -> ImuSample {
    let world_to_body = state.attitude.rotation_matrix_unchecked().transpose();
    let force_body = thrust_body + world_to_body * (drag_world + noise_force_world);
    let accel = params.rot_body_to_imu * force_body / mass
        + imu.accel_bias
        + params.accel_noise_cov.sample(&mut rng.accel_noise);
    let gyro =
        params.rot_body_to_imu * state.body_rate + imu.gyro_bias + params.gyro_noise_cov.sample(&mut rng.gyro_noise);
    ImuSample { accel, gyro }
}

/// Brownian bias update over `dt`: each increment is `N(0, W·dt)`.
pub fn propagate_bias(imu: &ImuState, dt: f64, params: &ImuParams, rng: &mut ImuRng) -> Result<ImuState, DomainError> {
    let da = params.accel_bias_density.sample(dt, &mut rng.accel_bias)? * dt;
    let dg = params.gyro_bias_density.sample(dt, &mut rng.gyro_bias)? * dt;
    Ok(ImuState { accel_bias: imu.accel_bias + da, gyro_bias: imu.gyro_bias + dg })
}
