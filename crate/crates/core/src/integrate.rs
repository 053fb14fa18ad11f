//! Fixed-step explicit integrators.

use nalgebra::SVector;
use serde::{Deserialize, Serialize};

use crate::error::IntegrationError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Euler,
    #[default]
    Rk4,
}

/// A state that can be advanced along a derivative of the same shape.
pub trait StateVector: Clone {
    /// `self + h·d`
    fn add_scaled(&self, h: f64, d: &Self) -> Self;
    fn all_finite(&self) -> bool;
}

impl StateVector for f64 {
    fn add_scaled(&self, h: f64, d: &Self) -> Self {
        self + h * d
    }
    fn all_finite(&self) -> bool {
        self.is_finite()
    }
}

impl<const N: usize> StateVector for SVector<f64, N> {
    fn add_scaled(&self, h: f64, d: &Self) -> Self {
        self + d * h
    }
    fn all_finite(&self) -> bool {
        self.iter().all(|x| x.is_finite())
    }
}

impl StateVector for Vec<f64> {
    fn add_scaled(&self, h: f64, d: &Self) -> Self {
        self.iter().zip(d).map(|(x, dx)| x + h * dx).collect()
    }
    fn all_finite(&self) -> bool {
        self.iter().all(|x| x.is_finite())
    }
}

/// Advances `x` by one step of length `dt`. `step` is only used to label errors.
///
/// `deriv` must be deterministic over the step: any noise is drawn by the
/// caller beforehand and held across the RK4 stages.
pub fn integrate_step<S, F>(mut deriv: F, x: &S, dt: f64, method: Method, step: u64) -> Result<S, IntegrationError>
where
    S: StateVector,
    F: FnMut(&S) -> S,
{
    let mut eval = |s: &S| {
        let d = deriv(s);
        if d.all_finite() {
            Ok(d)
        } else {
            Err(IntegrationError::NonFiniteDerivative { step })
        }
    };
    let next = match method {
        Method::Euler => x.add_scaled(dt, &eval(x)?),
        Method::Rk4 => {
            let k1 = eval(x)?;
            let k2 = eval(&x.add_scaled(0.5 * dt, &k1))?;
            let k3 = eval(&x.add_scaled(0.5 * dt, &k2))?;
            let k4 = eval(&x.add_scaled(dt, &k3))?;
            x.add_scaled(dt / 6.0, &k1)
                .add_scaled(dt / 3.0, &k2)
                .add_scaled(dt / 3.0, &k3)
                .add_scaled(dt / 6.0, &k4)
        }
    };
    if next.all_finite() {
        Ok(next)
    } else {
        Err(IntegrationError::NonFiniteState { step })
    }
}
