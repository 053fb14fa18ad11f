//! Multicopter rigid-body model: first-order motors, propeller thrust and
//! torque, quadratic drag, and the 6-DOF equations of motion.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, DomainError, IntegrationError};
use crate::integrate::{integrate_step, Method, StateVector};
use crate::noise::NoiseSpec;
use crate::quaternion::{Quaternion, UNIT_TOLERANCE};
use crate::rng::{Rng, Stream};
use crate::serde_mat3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotorParams {
    /// Motor time constant, s.
    pub tau: f64,
    /// Thrust coefficient, N·s²/rad².
    pub k_thrust: f64,
    /// Torque coefficient, N·m·s²/rad².
    pub k_torque: f64,
    /// True when positive rotor speed is a positive rotation about motor z.
    pub spin_positive: bool,
    #[serde(with = "serde_mat3", default = "identity3")]
    pub rot_motor_to_body: Matrix3<f64>,
    /// Motor position in the body frame, m.
    pub position: Vector3<f64>,
    /// Speed saturation, rad/s.
    pub omega_max: f64,
}

fn identity3() -> Matrix3<f64> {
    Matrix3::identity()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleParams {
    pub mass: f64,
    #[serde(with = "serde_mat3")]
    pub inertia: Matrix3<f64>,
    pub drag_force_coeff: f64,
    #[serde(with = "serde_mat3")]
    pub drag_moment_coeff: Matrix3<f64>,
    pub force_noise: NoiseSpec,
    pub moment_noise: NoiseSpec,
    pub motors: Vec<MotorParams>,
    pub collider_radius: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldParams {
    pub gravity: Vector3<f64>,
}

impl Default for WorldParams {
    fn default() -> Self {
        Self { gravity: Vector3::new(0.0, 0.0, -9.81) }
    }
}

impl WorldParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let g = self.gravity.norm();
        if !(g > 0.0 && g < 20.0) {
            return Err(ConfigError::invalid("world.gravity", format!("magnitude {g} outside (0, 20)")));
        }
        Ok(())
    }
}

impl VehicleParams {
    /// Symmetric X-quadcopter with alternating spin directions.
    pub fn default_quad() -> Self {
        let arm = 0.16 / std::f64::consts::SQRT_2;
        let layout = [(arm, arm, true), (-arm, arm, false), (-arm, -arm, true), (arm, -arm, false)];
        let motors = layout
            .iter()
            .map(|&(x, y, spin_positive)| MotorParams {
                tau: 0.02,
                k_thrust: 1.91e-6,
                k_torque: 2.6e-8,
                spin_positive,
                rot_motor_to_body: Matrix3::identity(),
                position: Vector3::new(x, y, 0.0),
                omega_max: 2200.0,
            })
            .collect();
        Self {
            mass: 1.0,
            inertia: Matrix3::from_diagonal(&Vector3::new(0.0049, 0.0049, 0.0069)),
            drag_force_coeff: 0.1,
            drag_moment_coeff: Matrix3::identity() * 0.003,
            force_noise: NoiseSpec::isotropic(1e-3).expect("valid density"),
            moment_noise: NoiseSpec::isotropic(1e-7).expect("valid density"),
            motors,
            collider_radius: 0.2,
        }
    }

    /// Same vehicle with every stochastic disturbance switched off.
    pub fn without_noise(mut self) -> Self {
        self.force_noise = NoiseSpec::zero();
        self.moment_noise = NoiseSpec::zero();
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |field: &str, msg: String| Err(ConfigError::invalid(format!("vehicle.{field}"), msg));
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return bad("mass", format!("must be positive, got {}", self.mass));
        }
        let sym = (self.inertia - self.inertia.transpose()).abs().max() <= 1e-12;
        if !sym || self.inertia.cholesky().is_none() {
            return bad("inertia", "must be symmetric positive definite".into());
        }
        if !(self.drag_force_coeff >= 0.0) {
            return bad("drag_force_coeff", "must be non-negative".into());
        }
        if !(self.collider_radius > 0.0) {
            return bad("collider_radius", "must be positive".into());
        }
        if self.motors.is_empty() {
            return bad("motors", "at least one motor is required".into());
        }
        for (i, m) in self.motors.iter().enumerate() {
            if !(m.tau > 0.0 && m.k_thrust > 0.0 && m.k_torque > 0.0) {
                return bad(&format!("motors[{i}]"), "tau, k_thrust and k_torque must be positive".into());
            }
            if !(m.omega_max > 0.0 && m.omega_max.is_finite()) {
                return bad(&format!("motors[{i}].omega_max"), "must be positive and finite".into());
            }
            let r = m.rot_motor_to_body;
            let orth = (r.transpose() * r - Matrix3::identity()).abs().max();
            if orth > 1e-9 || (r.determinant() - 1.0).abs() > 1e-9 {
                return bad(&format!("motors[{i}].rot_motor_to_body"), "must be a proper rotation".into());
            }
        }
        Ok(())
    }

    /// Rotor speed at which the summed body-z thrust balances gravity.
    pub fn hover_speed(&self, world: &WorldParams) -> f64 {
        let per_unit: f64 = self.motors.iter().map(|m| m.k_thrust * m.rot_motor_to_body[(2, 2)]).sum();
        (self.mass * world.gravity.norm() / per_unit).sqrt()
    }
}

/// Integrated vehicle state. Also used as the shape of its own time derivative.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub attitude: Quaternion,
    pub body_rate: Vector3<f64>,
    pub motor_speeds: Vec<f64>,
}

impl VehicleState {
    /// At rest with motors stopped.
    pub fn at_rest(position: Vector3<f64>, attitude: Quaternion, motor_count: usize) -> Self {
        Self {
            position,
            velocity: Vector3::zeros(),
            attitude,
            body_rate: Vector3::zeros(),
            motor_speeds: vec![0.0; motor_count],
        }
    }

    /// Level, stationary, with every motor at hover speed.
    pub fn hover_trim(position: Vector3<f64>, params: &VehicleParams, world: &WorldParams) -> Self {
        let w = params.hover_speed(world);
        Self { motor_speeds: vec![w; params.motors.len()], ..Self::at_rest(position, Quaternion::IDENTITY, 0) }
    }

    pub fn is_finite(&self) -> bool {
        self.all_finite()
    }
}

impl StateVector for VehicleState {
    fn add_scaled(&self, h: f64, d: &Self) -> Self {
        Self {
            position: self.position + d.position * h,
            velocity: self.velocity + d.velocity * h,
            attitude: self.attitude + h * d.attitude,
            body_rate: self.body_rate + d.body_rate * h,
            motor_speeds: self.motor_speeds.iter().zip(&d.motor_speeds).map(|(w, dw)| w + h * dw).collect(),
        }
    }

    fn all_finite(&self) -> bool {
        self.position.iter().all(|x| x.is_finite())
            && self.velocity.iter().all(|x| x.is_finite())
            && self.attitude.is_finite()
            && self.body_rate.iter().all(|x| x.is_finite())
            && self.motor_speeds.iter().all(|x| x.is_finite())
    }
}

/// Stochastic force (world frame, N) and moment (body frame, N·m) held over one step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Disturbance {
    pub force: Vector3<f64>,
    pub moment: Vector3<f64>,
}

/// The two random streams feeding [`Disturbance`].
#[derive(Clone, Debug)]
pub struct DisturbanceRng {
    pub force: Rng,
    pub moment: Rng,
}

impl DisturbanceRng {
    pub fn new(seed: u64) -> Self {
        Self { force: Rng::stream(seed, Stream::VehicleForce), moment: Rng::stream(seed, Stream::VehicleMoment) }
    }
}

impl Disturbance {
    pub fn sample(params: &VehicleParams, dt: f64, rng: &mut DisturbanceRng) -> Result<Self, DomainError> {
        Ok(Self {
            force: params.force_noise.sample(dt, &mut rng.force)?,
            moment: params.moment_noise.sample(dt, &mut rng.moment)?,
        })
    }
}

/// First-order motor lag toward the saturated command.
pub fn motor_derivative(omega: f64, omega_cmd: f64, params: &MotorParams) -> f64 {
    let cmd = omega_cmd.clamp(0.0, params.omega_max);
    (cmd - omega) / params.tau
}

/// Total propeller thrust and control moment in the body frame.
pub fn thrust_and_moment(motor_speeds: &[f64], params: &VehicleParams) -> (Vector3<f64>, Vector3<f64>) {
    let mut force = Vector3::zeros();
    let mut moment = Vector3::zeros();
    for (m, &w) in params.motors.iter().zip(motor_speeds) {
        let u = w * w.abs();
        let f_motor = m.rot_motor_to_body * Vector3::new(0.0, 0.0, m.k_thrust * u);
        let sign = if m.spin_positive { -1.0 } else { 1.0 };
        let mu_motor = m.rot_motor_to_body * Vector3::new(0.0, 0.0, sign * m.k_torque * u);
        force += f_motor;
        moment += mu_motor + m.position.cross(&f_motor);
    }
    (force, moment)
}

/// Quadratic aerodynamic drag (world-frame force) and moment (body frame).
pub fn aero_drag(velocity: &Vector3<f64>, body_rate: &Vector3<f64>, params: &VehicleParams) -> (Vector3<f64>, Vector3<f64>) {
    let force = -params.drag_force_coeff * velocity.norm() * velocity;
    let moment = -(params.drag_moment_coeff * body_rate) * body_rate.norm();
    (force, moment)
}

/// Time derivative of the full vehicle state.
pub fn state_derivative(
    state: &VehicleState,
    motor_cmds: &[f64],
    disturbance: &Disturbance,
    params: &VehicleParams,
    world: &WorldParams,
) -> Result<VehicleState, DomainError> {
    if !state.is_finite() || !motor_cmds.iter().all(|x| x.is_finite()) {
        return Err(DomainError::NonFinite("vehicle state or motor command"));
    }
    let n = state.attitude.norm();
    if (n - 1.0).abs() > UNIT_TOLERANCE {
        return Err(DomainError::NonUnitQuaternion(n));
    }
    Ok(derivative_unchecked(state, motor_cmds, disturbance, params, world))
}

// Derivative without the unit-norm precondition, for RK4 stage states.
fn derivative_unchecked(
    state: &VehicleState,
    motor_cmds: &[f64],
    disturbance: &Disturbance,
    params: &VehicleParams,
    world: &WorldParams,
) -> VehicleState {
    let rot = state.attitude.rotation_matrix_unchecked();
    let (thrust, control_moment) = thrust_and_moment(&state.motor_speeds, params);
    let (drag, drag_moment) = aero_drag(&state.velocity, &state.body_rate, params);
    let accel = world.gravity + (rot * thrust + drag + disturbance.force) / params.mass;
    let omega = state.body_rate;
    let gyro = omega.cross(&(params.inertia * omega));
    let inv = params.inertia.try_inverse().unwrap_or_else(Matrix3::zeros);
    let ang_accel = inv * (control_moment + drag_moment + disturbance.moment - gyro);
    let motor_rates = params
        .motors
        .iter()
        .zip(&state.motor_speeds)
        .zip(motor_cmds)
        .map(|((m, &w), &c)| motor_derivative(w, c, m))
        .collect();
    VehicleState {
        position: state.velocity,
        velocity: accel,
        attitude: state.attitude.derivative(&omega),
        body_rate: ang_accel,
        motor_speeds: motor_rates,
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StepError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Integration(#[from] IntegrationError),
}

/// Integrates one step with an already sampled disturbance, then
/// renormalizes the attitude and clamps motor speeds.
#[allow(clippy::too_many_arguments)]
pub fn step_with_disturbance(
    state: &VehicleState,
    motor_cmds: &[f64],
    dt: f64,
    method: Method,
    disturbance: &Disturbance,
    params: &VehicleParams,
    world: &WorldParams,
    step: u64,
) -> Result<VehicleState, StepError> {
    state_derivative(state, motor_cmds, disturbance, params, world)?;
    let deriv = |s: &VehicleState| derivative_unchecked(s, motor_cmds, disturbance, params, world);
    let mut next = integrate_step(deriv, state, dt, method, step)?;
    next.attitude = next.attitude.normalized();
    for (w, m) in next.motor_speeds.iter_mut().zip(&params.motors) {
        *w = w.clamp(0.0, m.omega_max);
    }
    Ok(next)
}

/// Samples the step disturbance and integrates one step. Returns the new
/// state and the disturbance that was applied.
#[allow(clippy::too_many_arguments)]
pub fn step_vehicle(
    state: &VehicleState,
    motor_cmds: &[f64],
    dt: f64,
    method: Method,
    rng: &mut DisturbanceRng,
    params: &VehicleParams,
    world: &WorldParams,
    step: u64,
) -> Result<(VehicleState, Disturbance), StepError> {
    let d = Disturbance::sample(params, dt, rng)?;
    let next = step_with_disturbance(state, motor_cmds, dt, method, &d, params, world, step)?;
    Ok((next, d))
}
