//! Discrete sampling of continuous white-noise processes.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::DomainError;
use crate::rng::Rng;

/// Spectral density `W` of a 3-axis continuous white-noise process, in
/// (unit)²·s. Holds a square-root factor `L` with `L·Lᵀ = W` for sampling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[f64; 3]; 3]", into = "[[f64; 3]; 3]")]
pub struct NoiseSpec {
    density: Matrix3<f64>,
    factor: Matrix3<f64>,
}

impl NoiseSpec {
    pub fn zero() -> Self {
        Self { density: Matrix3::zeros(), factor: Matrix3::zeros() }
    }

    pub fn isotropic(density: f64) -> Result<Self, DomainError> {
        Self::new(Matrix3::identity() * density)
    }

    pub fn diagonal(d: Vector3<f64>) -> Result<Self, DomainError> {
        Self::new(Matrix3::from_diagonal(&d))
    }

    pub fn new(density: Matrix3<f64>) -> Result<Self, DomainError> {
        if !density.iter().all(|x| x.is_finite()) {
            return Err(DomainError::NonFinite("noise spectral density"));
        }
        let asym = (density - density.transpose()).abs().max();
        let scale = density.abs().max().max(f64::MIN_POSITIVE);
        if asym > 1e-12 * scale {
            return Err(DomainError::NotPositiveSemidefinite("matrix is not symmetric".into()));
        }
        let off_diag_zero = (0..3).all(|r| (0..3).all(|c| r == c || density[(r, c)] == 0.0));
        let factor = if off_diag_zero {
            let d = density.diagonal();
            if d.iter().any(|&x| x < 0.0) {
                return Err(DomainError::NotPositiveSemidefinite(format!("negative diagonal {d:?}")));
            }
            Matrix3::from_diagonal(&d.map(f64::sqrt))
        } else {
            let eig = SymmetricEigen::new(density);
            let tol = 1e-12 * scale;
            if eig.eigenvalues.iter().any(|&l| l < -tol) {
                return Err(DomainError::NotPositiveSemidefinite(format!(
                    "eigenvalues {:?}",
                    eig.eigenvalues
                )));
            }
            let root = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
            eig.eigenvectors * Matrix3::from_diagonal(&root)
        };
        Ok(Self { density, factor })
    }

    pub fn density(&self) -> &Matrix3<f64> {
        &self.density
    }

    pub fn is_zero(&self) -> bool {
        self.density.iter().all(|&x| x == 0.0)
    }

    /// Draws one held sample `~ N(0, W/dt)` for a step of length `dt`.
    pub fn sample(&self, dt: f64, rng: &mut Rng) -> Result<Vector3<f64>, DomainError> {
        if !(dt > 0.0) {
            return Err(DomainError::NonPositiveTimeStep(dt));
        }
        if self.is_zero() {
            return Ok(Vector3::zeros());
        }
        let z = Vector3::new(rng.standard_normal(), rng.standard_normal(), rng.standard_normal());
        Ok(self.factor * z / dt.sqrt())
    }
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self::zero()
    }
}

impl TryFrom<[[f64; 3]; 3]> for NoiseSpec {
    type Error = DomainError;
    fn try_from(rows: [[f64; 3]; 3]) -> Result<Self, Self::Error> {
        Self::new(crate::mat3_from_rows(rows))
    }
}

impl From<NoiseSpec> for [[f64; 3]; 3] {
    fn from(n: NoiseSpec) -> Self {
        crate::mat3_to_rows(&n.density)
    }
}

/// Per-sample covariance of a discrete measurement noise (unit²), as
/// opposed to the spectral density of a continuous process.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[f64; 3]; 3]", into = "[[f64; 3]; 3]")]
pub struct Covariance(NoiseSpec);

impl Covariance {
    pub fn new(cov: Matrix3<f64>) -> Result<Self, DomainError> {
        NoiseSpec::new(cov).map(Covariance)
    }

    pub fn isotropic(variance: f64) -> Result<Self, DomainError> {
        NoiseSpec::isotropic(variance).map(Covariance)
    }

    pub fn zero() -> Self {
        Covariance(NoiseSpec::zero())
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        self.0.density()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn sample(&self, rng: &mut Rng) -> Vector3<f64> {
        if self.0.is_zero() {
            return Vector3::zeros();
        }
        let z = Vector3::new(rng.standard_normal(), rng.standard_normal(), rng.standard_normal());
        self.0.factor * z
    }
}

impl TryFrom<[[f64; 3]; 3]> for Covariance {
    type Error = DomainError;
    fn try_from(rows: [[f64; 3]; 3]) -> Result<Self, Self::Error> {
        Self::new(crate::mat3_from_rows(rows))
    }
}

impl From<Covariance> for [[f64; 3]; 3] {
    fn from(c: Covariance) -> Self {
        c.0.into()
    }
}

/// Convenience wrapper matching the free-function form of the sampler.
pub fn sample_white_noise(spec: &NoiseSpec, dt: f64, rng: &mut Rng) -> Result<Vector3<f64>, DomainError> {
    spec.sample(dt, rng)
}
