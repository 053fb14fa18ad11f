//! Headless, deterministic multicopter racing simulator.
//!
//! A [`sim::Simulator`] steps rigid-body quadrotor dynamics at a fixed rate
//! with a rate controller in the loop and publishes the onboard sensor
//! streams. [`service`] serves one episode over TCP as
//! newline-delimited JSON, and [`evaluate`] scores a controller over a set
//! of perturbed courses.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod client;
pub mod cli;
pub mod clock;
pub mod config;
pub mod control;
pub mod error;
pub mod evaluate;
pub mod geometry;
pub mod imu;
pub mod integrate;
pub mod noise;
pub mod pilots;
pub mod protocol;
pub mod quaternion;
pub mod race;
pub mod rng;
pub mod runlog;
pub mod scene;
pub mod sensors;
pub(crate) mod serde_mat3;
pub mod service;
pub mod sim;
pub mod vehicle;

use nalgebra::Matrix3;

pub(crate) fn mat3_from_rows(r: [[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::new(r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2])
}

pub(crate) fn mat3_to_rows(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    [
        [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
        [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
        [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
    ]
}
