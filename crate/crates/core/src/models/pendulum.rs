//! 3D pendulum about a fixed frictionless pivot.
//!
//! `e3` is the gravity direction (pointing down), so `U = -m g e3^T R rho` and
//! the hanging equilibrium with `rho` along `e3` sits at `R = I`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::liegroup::{check_spd, hat, Mat3, Vec3};
use crate::scalar::{lift3, Real};

/// Standard gravity used by the pendulum and cart models.
pub const STANDARD_GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendulumParams {
    pub mass: f64,
    /// Inertia about the pivot.
    pub inertia: Mat3,
    /// Pivot to mass center, body frame.
    pub offset: Vec3,
    pub gravity: f64,
}

impl Default for PendulumParams {
    fn default() -> Self {
        PendulumParams {
            mass: 1.0,
            inertia: Mat3::from_diagonal(&Vec3::new(0.13, 0.28, 0.17)),
            offset: Vec3::new(0.0, 0.0, 0.3),
            gravity: STANDARD_GRAVITY,
        }
    }
}

impl PendulumParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0) || !self.gravity.is_finite() {
            return Err(Error::InvalidInput("pendulum mass must be positive".into()));
        }
        check_spd(&self.inertia, "pendulum inertia")
    }
}

#[inline]
pub fn e3<T: Real>() -> Vector3<T> {
    Vector3::new(T::zero(), T::zero(), T::one())
}

/// `-m g e3^T R rho`
pub fn pendulum_potential<T: Real>(p: &PendulumParams, r: &Matrix3<T>) -> T {
    -T::lit(p.mass * p.gravity) * e3::<T>().dot(&(r * lift3::<T>(&p.offset)))
}

/// Gravity moment `m g rho x R^T e3`.
pub fn gravity_moment<T: Real>(p: &PendulumParams, r: &Matrix3<T>) -> Vector3<T> {
    let a = r.transpose() * e3::<T>();
    lift3::<T>(&p.offset).cross(&a) * T::lit(p.mass * p.gravity)
}

/// Derivative of [`gravity_moment`] along `R exp(eta)`.
pub fn gravity_moment_eta<T: Real>(p: &PendulumParams, r: &Matrix3<T>) -> Matrix3<T> {
    let a = r.transpose() * e3::<T>();
    hat(&lift3::<T>(&p.offset)) * hat(&a) * T::lit(p.mass * p.gravity)
}

/// Control moment `R^T e3 x u`; it never has a component about the vertical.
pub fn pendulum_control_moment<T: Real>(r: &Matrix3<T>, u: &Vector3<T>) -> Vector3<T> {
    (r.transpose() * e3::<T>()).cross(u)
}

/// Angular momentum about the gravity direction, `e3^T R J Omega`.
pub fn vertical_momentum(p: &PendulumParams, r: &Mat3, omega: &Vec3) -> f64 {
    e3::<f64>().dot(&(r * p.inertia * omega))
}

pub fn pendulum_energy(p: &PendulumParams, r: &Mat3, omega: &Vec3) -> f64 {
    0.5 * omega.dot(&(p.inertia * omega)) + pendulum_potential(p, r)
}
