//! Two rigid bodies joined by a ball joint, reduced by the translational
//! symmetry (zero linear momentum, fixed system mass center).

use nalgebra::{Matrix3, SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::liegroup::{check_spd, hat, Mat3, Vec3};
use crate::scalar::{lift3, lift33, Real};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectedParams {
    pub masses: [f64; 2],
    /// Inertias about the joint, body frames.
    pub inertias: [Mat3; 2],
    /// Joint to mass center of each body, body frames.
    pub offsets: [Vec3; 2],
}

impl Default for ConnectedParams {
    fn default() -> Self {
        ConnectedParams {
            masses: [1.5, 1.0],
            inertias: [
                Mat3::new(0.18, 0.32, 0.32, 0.32, 1.88, -0.06, 0.32, -0.06, 1.86),
                Mat3::new(0.11, -0.18, -0.18, -0.18, 0.89, -0.04, -0.18, -0.04, 0.88),
            ],
            offsets: [Vec3::new(-1.08, 0.20, 0.20), Vec3::new(0.9, 0.2, 0.2)],
        }
    }
}

impl ConnectedParams {
    /// `m1 / (m1 + m2)`
    pub fn alpha(&self) -> f64 {
        self.masses[0] / (self.masses[0] + self.masses[1])
    }

    /// `m2 / (m1 + m2)`
    pub fn beta(&self) -> f64 {
        self.masses[1] / (self.masses[0] + self.masses[1])
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.masses[0] > 0.0) || !(self.masses[1] > 0.0) {
            return Err(Error::InvalidInput("body masses must be positive".into()));
        }
        check_spd(&self.inertias[0], "first body inertia")?;
        check_spd(&self.inertias[1], "second body inertia")?;
        // reduced inertias must stay positive definite
        let r = Mat3::identity();
        if connected_mass_matrix(self, &r, &r).cholesky().is_none() {
            return Err(Error::NotPositiveDefinite("reduced connected-body inertia".into()));
        }
        Ok(())
    }
}

pub type Mat6<T> = SMatrix<T, 6, 6>;
pub type Vec6<T> = SVector<T, 6>;

/// Momentum map `(p1, p2) = L(R1, R2) (Omega1, Omega2)`.
pub fn connected_mass_matrix<T: Real>(
    p: &ConnectedParams,
    r1: &Matrix3<T>,
    r2: &Matrix3<T>,
) -> Mat6<T> {
    let (m1, m2) = (T::lit(p.masses[0]), T::lit(p.masses[1]));
    let (alpha, beta) = (T::lit(p.alpha()), T::lit(p.beta()));
    let d1 = hat(&lift3::<T>(&p.offsets[0]));
    let d2 = hat(&lift3::<T>(&p.offsets[1]));
    let rel = r1.transpose() * r2;
    let mut l = Mat6::zeros();
    l.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&(lift33::<T>(&p.inertias[0]) + d1 * d1 * (alpha * m1)));
    l.fixed_view_mut::<3, 3>(0, 3)
        .copy_from(&(d1 * rel * d2 * (beta * m1)));
    l.fixed_view_mut::<3, 3>(3, 0)
        .copy_from(&(d2 * rel.transpose() * d1 * (alpha * m2)));
    l.fixed_view_mut::<3, 3>(3, 3)
        .copy_from(&(lift33::<T>(&p.inertias[1]) + d2 * d2 * (beta * m2)));
    l
}

pub fn connected_momenta(
    p: &ConnectedParams,
    r1: &Mat3,
    r2: &Mat3,
    w1: &Vec3,
    w2: &Vec3,
) -> (Vec3, Vec3) {
    let v = Vec6::from_column_slice(&[w1[0], w1[1], w1[2], w2[0], w2[1], w2[2]]);
    let m = connected_mass_matrix(p, r1, r2) * v;
    (m.fixed_rows::<3>(0).into(), m.fixed_rows::<3>(3).into())
}

/// Total angular momentum in the inertial frame, `R1 p1 + R2 p2`.
pub fn total_angular_momentum(p: &ConnectedParams, r1: &Mat3, r2: &Mat3, w1: &Vec3, w2: &Vec3) -> Vec3 {
    let (p1, p2) = connected_momenta(p, r1, r2, w1, w2);
    r1 * p1 + r2 * p2
}

pub fn connected_energy(p: &ConnectedParams, r1: &Mat3, r2: &Mat3, w1: &Vec3, w2: &Vec3) -> f64 {
    let (p1, p2) = connected_momenta(p, r1, r2, w1, w2);
    0.5 * (w1.dot(&p1) + w2.dot(&p2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::liegroup::exp_so3;

    #[test]
    fn alpha_beta_partition_unity() {
        let p = ConnectedParams::default();
        assert!((p.alpha() + p.beta() - 1.0).abs() < 1e-15);
        assert!((p.alpha() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn default_parameters_are_valid() {
        ConnectedParams::default().validate().unwrap();
    }

    #[test]
    fn rest_has_zero_momentum() {
        let p = ConnectedParams::default();
        let r = exp_so3(&Vec3::new(0.3, 0.1, 0.2));
        assert_eq!(
            total_angular_momentum(&p, &r, &Mat3::identity(), &Vec3::zeros(), &Vec3::zeros()),
            Vec3::zeros()
        );
    }

    #[test]
    fn mass_matrix_is_symmetric() {
        let p = ConnectedParams::default();
        let r1 = exp_so3(&Vec3::new(0.3, 0.1, 0.2));
        let r2 = exp_so3(&Vec3::new(-1.3, 0.4, 0.9));
        let l = connected_mass_matrix(&p, &r1, &r2);
        assert!((l - l.transpose()).norm() < 1e-14);
        assert!(l.cholesky().is_some());
    }

    #[test]
    fn kinetic_energy_matches_mass_center_frame() {
        // KE = sum 1/2 w_i^T J_i w_i + 1/2 M |xdot|^2 + xdot . sum m_i R_i (w_i x d_i)
        // with the joint velocity chosen so that the total linear momentum vanishes.
        let p = ConnectedParams::default();
        let r1 = exp_so3(&Vec3::new(0.3, 0.1, 0.2));
        let r2 = exp_so3(&Vec3::new(-1.3, 0.4, 0.9));
        let w1 = Vec3::new(0.2, -0.7, 0.4);
        let w2 = Vec3::new(-0.5, 0.3, 1.2);
        let (m1, m2) = (p.masses[0], p.masses[1]);
        let a1 = r1 * w1.cross(&p.offsets[0]);
        let a2 = r2 * w2.cross(&p.offsets[1]);
        let xdot = -(a1 * m1 + a2 * m2) / (m1 + m2);
        let expected = 0.5 * w1.dot(&(p.inertias[0] * w1))
            + 0.5 * w2.dot(&(p.inertias[1] * w2))
            + 0.5 * (m1 + m2) * xdot.norm_squared()
            + xdot.dot(&(a1 * m1 + a2 * m2));
        assert!((connected_energy(&p, &r1, &r2, &w1, &w2) - expected).abs() < 1e-13);
    }

    #[test]
    fn single_body_limit() {
        let mut p = ConnectedParams::default();
        p.masses[1] = 1e-12;
        p.inertias[1] = Mat3::identity() * 1e-12;
        let r1 = exp_so3(&Vec3::new(0.3, 0.1, 0.2));
        let w1 = Vec3::new(0.2, -0.7, 0.4);
        let pi = total_angular_momentum(&p, &r1, &Mat3::identity(), &w1, &Vec3::zeros());
        // inertias are about the joint; alone, body 1 spins about its own mass center
        let d = hat(&p.offsets[0]);
        let single = r1 * (p.inertias[0] + d * d * p.masses[0]) * w1;
        assert!((pi - single).norm() <= 1e-10 * single.norm());
    }
}
