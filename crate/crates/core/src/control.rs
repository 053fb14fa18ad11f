//! Onboard acro (rate-mode) controller: a second-order low-pass filter on
//! measured body rates, a PID law producing angular-acceleration demands,
//! and the inverse thrust/moment map that turns them into rotor speeds.

use nalgebra::{Matrix4, SVector, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::integrate::{integrate_step, Method};
use crate::vehicle::VehicleParams;

/// Body-rate (rad/s) and collective-thrust (N) demand from the pilot.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RateCommand {
    pub body_rate: Vector3<f64>,
    pub thrust: f64,
}

impl RateCommand {
    pub fn new(body_rate: Vector3<f64>, thrust: f64) -> Self {
        Self { body_rate, thrust }
    }

    pub fn is_valid(&self) -> bool {
        self.body_rate.iter().all(|x| x.is_finite()) && self.thrust.is_finite() && self.thrust >= 0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerParams {
    pub lpf_stiffness: f64,
    pub lpf_damping: f64,
    pub kp: Vector3<f64>,
    pub ki: Vector3<f64>,
    pub kd: Vector3<f64>,
    pub integral_limit: f64,
    /// Multiplies the thrust and torque coefficients the allocator believes
    /// in; 1.0 means the allocator knows the vehicle exactly.
    pub allocation_coeff_scale: f64,
    /// Multiplies the inertia the allocator believes in.
    pub allocation_inertia_scale: f64,
}

impl Default for ControllerParams {
    fn default() -> Self {
        Self {
            lpf_stiffness: 1600.0,
            lpf_damping: 80.0,
            kp: Vector3::repeat(40.0),
            ki: Vector3::repeat(10.0),
            kd: Vector3::repeat(1.0),
            integral_limit: 1.0,
            allocation_coeff_scale: 1.0,
            allocation_inertia_scale: 1.0,
        }
    }
}

impl ControllerParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.lpf_stiffness > 0.0 && self.lpf_damping > 0.0) {
            return Err(ConfigError::invalid("controller", "filter stiffness and damping must be positive"));
        }
        let gains = self.kp.iter().chain(self.ki.iter()).chain(self.kd.iter());
        if gains.copied().any(|g| !(g >= 0.0)) {
            return Err(ConfigError::invalid("controller", "PID gains must be non-negative"));
        }
        if !(self.integral_limit >= 0.0) {
            return Err(ConfigError::invalid("controller.integral_limit", "must be non-negative"));
        }
        if !(self.allocation_coeff_scale > 0.0 && self.allocation_inertia_scale > 0.0) {
            return Err(ConfigError::invalid("controller", "allocation scales must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LpfState {
    pub omega_filt: Vector3<f64>,
    pub omega_filt_rate: Vector3<f64>,
    pub stiffness: f64,
    pub damping: f64,
}

impl LpfState {
    pub fn new(stiffness: f64, damping: f64) -> Self {
        Self { omega_filt: Vector3::zeros(), omega_filt_rate: Vector3::zeros(), stiffness, damping }
    }
}

/// Advances the filter `Ω̈ = −q·Ω̇ + p·(Ω_imu − Ω)` by one step.
pub fn lpf_step(lpf: &LpfState, omega_imu: &Vector3<f64>, dt: f64, method: Method) -> LpfState {
    let (p, q) = (lpf.stiffness, lpf.damping);
    let x = SVector::<f64, 6>::from_iterator(lpf.omega_filt.iter().chain(lpf.omega_filt_rate.iter()).copied());
    let f = |s: &SVector<f64, 6>| {
        let w = s.fixed_rows::<3>(0);
        let wd = s.fixed_rows::<3>(3);
        let wdd = -wd * q + (omega_imu - w) * p;
        SVector::<f64, 6>::from_iterator(wd.iter().chain(wdd.iter()).copied())
    };
    // The filter field is linear and finite for finite inputs.
    let next = integrate_step(f, &x, dt, method, 0).unwrap_or(x);
    LpfState {
        omega_filt: next.fixed_rows::<3>(0).into(),
        omega_filt_rate: next.fixed_rows::<3>(3).into(),
        ..*lpf
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PidState {
    pub integral: Vector3<f64>,
    pub kp: Vector3<f64>,
    pub ki: Vector3<f64>,
    pub kd: Vector3<f64>,
    pub integral_limit: f64,
}

impl PidState {
    pub fn from_params(p: &ControllerParams) -> Self {
        Self { integral: Vector3::zeros(), kp: p.kp, ki: p.ki, kd: p.kd, integral_limit: p.integral_limit }
    }
}

/// PID on the filtered rate error. The derivative term acts on the filtered
/// measurement only. Returns the commanded angular acceleration (rad/s²).
pub fn pid_angular_accel(cmd: &RateCommand, lpf: &LpfState, pid: &PidState, dt: f64) -> (Vector3<f64>, PidState) {
    let err = cmd.body_rate - lpf.omega_filt;
    let lim = pid.integral_limit;
    let integral = (pid.integral + err * dt).map(|x| x.clamp(-lim, lim));
    let accel = pid.kp.component_mul(&err) + pid.ki.component_mul(&integral) - pid.kd.component_mul(&lpf.omega_filt_rate);
    (accel, PidState { integral, ..*pid })
}

/// Inverse of the map from squared rotor speeds to (thrust, body moment).
#[derive(Clone, Debug, PartialEq)]
pub struct Allocator {
    forward: Matrix4<f64>,
    inverse: Matrix4<f64>,
    inertia: nalgebra::Matrix3<f64>,
    omega_max: Vector4<f64>,
}

impl Allocator {
    pub fn new(params: &VehicleParams) -> Result<Self, ConfigError> {
        Self::with_model_error(params, 1.0, 1.0)
    }

    /// Builds the allocator from coefficients scaled by `coeff_scale` and an
    /// inertia scaled by `inertia_scale`, modelling imperfect knowledge.
    pub fn with_model_error(params: &VehicleParams, coeff_scale: f64, inertia_scale: f64) -> Result<Self, ConfigError> {
        if params.motors.len() != 4 {
            return Err(ConfigError::UnsupportedMotorCount(params.motors.len()));
        }
        let mut forward = Matrix4::zeros();
        for (i, m) in params.motors.iter().enumerate() {
            let f = m.rot_motor_to_body * Vector3::new(0.0, 0.0, m.k_thrust * coeff_scale);
            let sign = if m.spin_positive { -1.0 } else { 1.0 };
            let mu = m.rot_motor_to_body * Vector3::new(0.0, 0.0, sign * m.k_torque * coeff_scale)
                + m.position.cross(&f);
            forward.set_column(i, &Vector4::new(f.z, mu.x, mu.y, mu.z));
        }
        let sv = forward.singular_values();
        let (lo, hi) = (sv.min(), sv.max());
        if !(hi > 0.0) || lo / hi < 1e-12 {
            return Err(ConfigError::RankDeficientAllocation(lo));
        }
        let inverse = forward.try_inverse().ok_or(ConfigError::RankDeficientAllocation(lo))?;
        let omega_max = Vector4::from_iterator(params.motors.iter().map(|m| m.omega_max));
        Ok(Self { forward, inverse, inertia: params.inertia * inertia_scale, omega_max })
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.forward
    }

    /// Signed squared speeds `ω|ω|` realizing the thrust and moment, before clamping.
    pub fn squared_speeds(&self, angular_accel_cmd: &Vector3<f64>, thrust_cmd: f64) -> Vector4<f64> {
        let moment = self.inertia * angular_accel_cmd;
        self.inverse * Vector4::new(thrust_cmd, moment.x, moment.y, moment.z)
    }

    /// Rotor speed commands (rad/s). Negative solutions saturate at zero.
    pub fn allocate(&self, angular_accel_cmd: &Vector3<f64>, thrust_cmd: f64) -> [f64; 4] {
        let u = self.squared_speeds(angular_accel_cmd, thrust_cmd);
        std::array::from_fn(|i| u[i].max(0.0).sqrt().min(self.omega_max[i]))
    }
}

/// Free-function form of [`Allocator::allocate`]; builds the allocator on each call.
pub fn allocate_motors(
    angular_accel_cmd: &Vector3<f64>,
    thrust_cmd: f64,
    params: &VehicleParams,
) -> Result<[f64; 4], ConfigError> {
    Ok(Allocator::new(params)?.allocate(angular_accel_cmd, thrust_cmd))
}

/// The complete rate loop, run once per physics step on the latest gyro sample.
#[derive(Clone, Debug)]
pub struct RateController {
    pub lpf: LpfState,
    pub pid: PidState,
    allocator: Allocator,
    method: Method,
}

impl RateController {
    pub fn new(params: &ControllerParams, vehicle: &VehicleParams, method: Method) -> Result<Self, ConfigError> {
        params.validate()?;
        let allocator =
            Allocator::with_model_error(vehicle, params.allocation_coeff_scale, params.allocation_inertia_scale)?;
        Ok(Self {
            lpf: LpfState::new(params.lpf_stiffness, params.lpf_damping),
            pid: PidState::from_params(params),
            allocator,
            method,
        })
    }

    pub fn allocator(&self) -> &Allocator {
        &self.allocator
    }

    /// Filters `gyro`, runs the PID and returns rotor speed commands.
    pub fn update(&mut self, cmd: &RateCommand, gyro: &Vector3<f64>, dt: f64) -> [f64; 4] {
        self.lpf = lpf_step(&self.lpf, gyro, dt, self.method);
        let (accel, pid) = pid_angular_accel(cmd, &self.lpf, &self.pid, dt);
        self.pid = pid;
        self.allocator.allocate(&accel, cmd.thrust)
    }
}
