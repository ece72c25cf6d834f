//! 3D pendulum whose pivot rides on a cart moving in the horizontal plane.

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::liegroup::{check_spd, hat, Mat3, Vec3};
use crate::models::pendulum::{e3, STANDARD_GRAVITY};
use crate::scalar::{lift3, lift33, Real};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CartPendulumParams {
    pub cart_mass: f64,
    pub mass: f64,
    /// Pendulum inertia about the pivot.
    pub inertia: Mat3,
    /// Pivot to pendulum mass center, body frame.
    pub offset: Vec3,
    pub gravity: f64,
}

impl Default for CartPendulumParams {
    fn default() -> Self {
        CartPendulumParams {
            cart_mass: 1.0,
            mass: 1.0,
            inertia: Mat3::from_diagonal(&Vec3::new(1.03, 1.04, 0.03)),
            offset: Vec3::new(0.0, 0.0, 1.0),
            gravity: STANDARD_GRAVITY,
        }
    }
}

impl CartPendulumParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.cart_mass > 0.0) || !(self.mass > 0.0) {
            return Err(Error::InvalidInput("cart and pendulum masses must be positive".into()));
        }
        check_spd(&self.inertia, "cart pendulum inertia")
    }
}

pub type Mat5<T> = SMatrix<T, 5, 5>;
pub type Vec5<T> = SVector<T, 5>;

/// Momentum map `(p_Omega, p_x, p_y) = L(R) (Omega, xdot, ydot)`.
pub fn cart_mass_matrix<T: Real>(p: &CartPendulumParams, r: &Matrix3<T>) -> Mat5<T> {
    let m = T::lit(p.mass);
    let total = T::lit(p.mass + p.cart_mass);
    let d_hat = hat(&lift3::<T>(&p.offset));
    let e1 = Vector3::new(T::one(), T::zero(), T::zero());
    let e2 = Vector3::new(T::zero(), T::one(), T::zero());
    let c1 = d_hat * r.transpose() * e1 * m;
    let c2 = d_hat * r.transpose() * e2 * m;
    let mut l = Mat5::zeros();
    l.fixed_view_mut::<3, 3>(0, 0).copy_from(&lift33(&p.inertia));
    l.fixed_view_mut::<3, 1>(0, 3).copy_from(&c1);
    l.fixed_view_mut::<3, 1>(0, 4).copy_from(&c2);
    l.fixed_view_mut::<1, 3>(3, 0).copy_from(&c1.transpose());
    l.fixed_view_mut::<1, 3>(4, 0).copy_from(&c2.transpose());
    l[(3, 3)] = total;
    l[(4, 4)] = total;
    l
}

/// Continuous-time energy: kinetic (cart + pendulum + coupling) minus `m g e3^T R d`.
pub fn cart_energy(p: &CartPendulumParams, r: &Mat3, omega: &Vec3, xdot: f64, ydot: f64) -> f64 {
    let vel = Vec5::from_column_slice(&[omega[0], omega[1], omega[2], xdot, ydot]);
    let l = cart_mass_matrix(p, r);
    0.5 * vel.dot(&(l * vel)) - p.mass * p.gravity * e3::<f64>().dot(&(r * p.offset))
}

/// Momentum about the vertical: `e3^T R p_Omega + x p_y - y p_x`.
pub fn cart_vertical_momentum(
    p: &CartPendulumParams,
    r: &Mat3,
    x: f64,
    y: f64,
    omega: &Vec3,
    xdot: f64,
    ydot: f64,
) -> f64 {
    let vel = Vec5::from_column_slice(&[omega[0], omega[1], omega[2], xdot, ydot]);
    let mom = cart_mass_matrix(p, r) * vel;
    let p_omega = Vec3::new(mom[0], mom[1], mom[2]);
    e3::<f64>().dot(&(r * p_omega)) + x * mom[4] - y * mom[3]
}
