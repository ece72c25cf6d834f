//! Rigid dumbbell in a central gravity field, normalized units.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::liegroup::{check_spd, hat, vee, Mat3, Vec3};
use crate::scalar::{lift3, Real};

/// Below this distance from the attracting center the potential is rejected.
pub const COLLISION_RADIUS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumbbellParams {
    /// Gravitational parameter of the central body.
    pub gm: f64,
    pub mass: f64,
    pub inertia: Mat3,
    /// Sphere offsets from the mass center, body frame.
    pub offsets: [Vec3; 2],
}

/// Half-length of the default dumbbell rod.
pub const DEFAULT_HALF_LENGTH: f64 = 0.01;
/// Radius of each default sphere; keeps the inertia nonsingular about the rod.
pub const DEFAULT_SPHERE_RADIUS: f64 = 0.0025;
/// Speed of the reference circular orbit at unit radius.
pub const REFERENCE_ORBIT_SPEED: f64 = 0.9835;

impl Default for DumbbellParams {
    fn default() -> Self {
        let mass = 1.0;
        let l = DEFAULT_HALF_LENGTH;
        let own = 0.4 * mass * DEFAULT_SPHERE_RADIUS * DEFAULT_SPHERE_RADIUS;
        let inertia = Mat3::from_diagonal(&Vec3::new(own, mass * l * l + own, mass * l * l + own));
        DumbbellParams {
            gm: REFERENCE_ORBIT_SPEED * REFERENCE_ORBIT_SPEED,
            mass,
            inertia,
            offsets: [Vec3::new(l, 0.0, 0.0), Vec3::new(-l, 0.0, 0.0)],
        }
    }
}

impl DumbbellParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0) || !(self.gm > 0.0) {
            return Err(Error::InvalidInput("dumbbell mass and GM must be positive".into()));
        }
        check_spd(&self.inertia, "dumbbell inertia")?;
        if (self.offsets[0] - self.offsets[1]).norm() == 0.0 {
            return Err(Error::InvalidInput("dumbbell sphere offsets coincide".into()));
        }
        Ok(())
    }
}

/// Potential, its position gradient and the body-frame moment it produces.
#[derive(Debug, Clone, Copy)]
pub struct GravityTerms<T> {
    pub potential: T,
    /// dU/dx
    pub grad_x: Vector3<T>,
    pub moment: Vector3<T>,
}

fn sphere_vectors<T: Real>(
    p: &DumbbellParams,
    r: &Matrix3<T>,
    x: &Vector3<T>,
) -> Result<[(Vector3<T>, Vector3<T>, T); 2]> {
    let mut out = [(Vector3::zeros(), Vector3::zeros(), T::zero()); 2];
    for (q, rho) in p.offsets.iter().enumerate() {
        let rho = lift3::<T>(rho);
        let rv = x + r * rho;
        let d = rv.norm();
        if !(d.re() >= COLLISION_RADIUS) {
            return Err(Error::CollisionSingularity(d.re()));
        }
        out[q] = (rv, rho, d);
    }
    Ok(out)
}

pub fn dumbbell_gravity<T: Real>(
    p: &DumbbellParams,
    r: &Matrix3<T>,
    x: &Vector3<T>,
) -> Result<GravityTerms<T>> {
    let k = T::lit(0.5 * p.gm * p.mass);
    let mut terms = GravityTerms {
        potential: T::zero(),
        grad_x: Vector3::zeros(),
        moment: Vector3::zeros(),
    };
    for (rv, rho, d) in sphere_vectors(p, r, x)? {
        let c = k / (d * d * d);
        terms.potential -= k / d;
        terms.grad_x += rv * c;
        terms.moment += (r.transpose() * rv).cross(&rho) * c;
    }
    Ok(terms)
}

/// `U(R, x) = -(GM m / 2) sum_q 1 / |x + R rho_q|`.
pub fn dumbbell_potential(r: &Mat3, x: &Vec3, p: &DumbbellParams) -> Result<f64> {
    Ok(dumbbell_gravity(p, r, x)?.potential)
}

/// Element-wise derivative `[dU/dR]_ij`.
pub fn dumbbell_potential_dr(r: &Mat3, x: &Vec3, p: &DumbbellParams) -> Result<Mat3> {
    let k = 0.5 * p.gm * p.mass;
    let mut out = Mat3::zeros();
    for (rv, rho, d) in sphere_vectors(p, r, x)? {
        out += rv * rho.transpose() * (k / (d * d * d));
    }
    Ok(out)
}

/// Moment due to a potential with element-wise derivative `du_dr`:
/// `hat(M) = du_dr^T R - R^T du_dr`.
pub fn attitude_moment(r: &Mat3, du_dr: &Mat3) -> Result<Vec3> {
    vee(&(du_dr.transpose() * r - r.transpose() * du_dr))
}

/// Derivatives of the gravity terms, with rotations perturbed as `R exp(eta)`.
#[derive(Debug, Clone, Copy)]
pub struct GravityJacobians<T> {
    pub grad_x_x: Matrix3<T>,
    pub grad_x_eta: Matrix3<T>,
    pub moment_x: Matrix3<T>,
    pub moment_eta: Matrix3<T>,
}

pub fn dumbbell_gravity_jacobians<T: Real>(
    p: &DumbbellParams,
    r: &Matrix3<T>,
    x: &Vector3<T>,
) -> Result<GravityJacobians<T>> {
    let k = T::lit(0.5 * p.gm * p.mass);
    let mut jac = GravityJacobians {
        grad_x_x: Matrix3::zeros(),
        grad_x_eta: Matrix3::zeros(),
        moment_x: Matrix3::zeros(),
        moment_eta: Matrix3::zeros(),
    };
    let rt = r.transpose();
    for (rv, rho, d) in sphere_vectors(p, r, x)? {
        let d3 = d * d * d;
        let d5 = d3 * d * d;
        let hess = Matrix3::identity() * (k / d3) - rv * rv.transpose() * (T::lit(3.0) * k / d5);
        let g = rv * (k / d3);
        let rho_hat = hat(&rho);
        let dr_eta = -(r * rho_hat);
        jac.grad_x_x += hess;
        jac.grad_x_eta += hess * dr_eta;
        jac.moment_x -= rho_hat * rt * hess;
        jac.moment_eta -= rho_hat * (hat(&(rt * g)) + rt * hess * dr_eta);
    }
    Ok(jac)
}

/// Spatial angular momentum about the attracting center, `R J Omega + x x m v`.
pub fn dumbbell_angular_momentum(
    p: &DumbbellParams,
    r: &Mat3,
    x: &Vec3,
    omega: &Vec3,
    v: &Vec3,
) -> Vec3 {
    r * p.inertia * omega + x.cross(&(v * p.mass))
}
