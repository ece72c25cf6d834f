use nalgebra::{Matrix3, SMatrix, Vector3};
use serde::{Deserialize, Serialize};

use super::{
    push3, push_rotation, rot_difference, rot_retract, rotation_labels, solve_momentum_map, to_vec3,
    vector_labels, Dynamics, StepStats,
};
use crate::error::{Error, Result};
use crate::liegroup::{exp_so3, hat, nonstandard_inertia, skew_vee, Mat3, Vec3};
use crate::models::connected::{
    connected_energy, connected_mass_matrix, total_angular_momentum, ConnectedParams, Vec6,
};
use crate::scalar::{lift3, lift33, re3, re33, Real};

/// Residual tolerance of the coupled implicit solve, scaled by `max(1, |h p|_inf)`.
pub const CONNECTED_RESIDUAL_TOLERANCE: f64 = 1e-13;
const CONNECTED_MAX_ITERATIONS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct ConnectedState<T: Real = f64> {
    pub r1: Matrix3<T>,
    pub r2: Matrix3<T>,
    pub omega1: Vector3<T>,
    pub omega2: Vector3<T>,
}

impl ConnectedState {
    pub fn rest(r1: Mat3, r2: Mat3) -> Self {
        ConnectedState {
            r1,
            r2,
            omega1: Vec3::zeros(),
            omega2: Vec3::zeros(),
        }
    }
}

/// The pair of implicit equations, split as `linear(F1, F2) + constant - h p`.
struct Implicit<T: Real> {
    a1: Matrix3<T>,
    a2: Matrix3<T>,
    q: Matrix3<T>,
    d1: Vector3<T>,
    d2: Vector3<T>,
    c1: T,
    c2: T,
}

impl<T: Real> Implicit<T> {
    fn linear(&self, g1: &Matrix3<T>, g2: &Matrix3<T>) -> (Vector3<T>, Vector3<T>) {
        let x1 = self.q * g2 * self.d2 * self.d1.transpose();
        let x2 = self.q.transpose() * g1 * self.d1 * self.d2.transpose();
        (
            skew_vee(&(g1 * self.a1 - self.a1 * g1.transpose() - (x1 - x1.transpose()) * self.c1)),
            skew_vee(&(g2 * self.a2 - self.a2 * g2.transpose() - (x2 - x2.transpose()) * self.c2)),
        )
    }
}

fn block_residual<T: Real>(r1: &Vector3<T>, r2: &Vector3<T>) -> SMatrix<T, 6, 1> {
    SMatrix::<T, 6, 1>::from_column_slice(&[r1[0], r1[1], r1[2], r2[0], r2[1], r2[2]])
}

/// One step of the two-body system with internal joint moment `u` (inertial frame).
pub fn step_connected<T: Real>(
    s: &ConnectedState<T>,
    u: &Vector3<T>,
    p: &ConnectedParams,
    h: f64,
) -> Result<(ConnectedState<T>, StepStats)> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidInput(format!("time step must be positive, got {h}")));
    }
    let ht = T::lit(h);
    let (m1, m2) = (T::lit(p.masses[0]), T::lit(p.masses[1]));
    let (alpha, beta) = (T::lit(p.alpha()), T::lit(p.beta()));
    let d1 = lift3::<T>(&p.offsets[0]);
    let d2 = lift3::<T>(&p.offsets[1]);
    let l = connected_mass_matrix(p, &s.r1, &s.r2);
    let mom = l * Vec6::from_column_slice(&[
        s.omega1[0], s.omega1[1], s.omega1[2], s.omega2[0], s.omega2[1], s.omega2[2],
    ]);
    let p1 = Vector3::new(mom[0], mom[1], mom[2]);
    let p2 = Vector3::new(mom[3], mom[4], mom[5]);

    let eq = Implicit {
        a1: lift33::<T>(&nonstandard_inertia(&p.inertias[0])?) - d1 * d1.transpose() * (alpha * m1),
        a2: lift33::<T>(&nonstandard_inertia(&p.inertias[1])?) - d2 * d2.transpose() * (beta * m2),
        q: s.r1.transpose() * s.r2,
        d1,
        d2,
        c1: beta * m1,
        c2: alpha * m2,
    };
    let eye = Matrix3::identity();
    // the constant coupling terms equal minus the coupling part at F = I
    let k1 = eq.linear(&Matrix3::zeros(), &eye).0;
    let k2 = eq.linear(&eye, &Matrix3::zeros()).1;
    let target1 = p1 * ht + k1;
    let target2 = p2 * ht + k2;
    let rhs = block_residual(&target1, &target2);

    let tol = CONNECTED_RESIDUAL_TOLERANCE
        * rhs.iter().fold(0.0f64, |a, x| a.max(x.mag())).max(1.0);
    let mut f1 = exp_so3(&(s.omega1 * ht));
    let mut f2 = exp_so3(&(s.omega2 * ht));
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    for it in 0..=CONNECTED_MAX_ITERATIONS {
        let (r1, r2) = eq.linear(&f1, &f2);
        let res = block_residual(&r1, &r2) - rhs;
        residual = res.iter().fold(0.0f64, |a, x| a.max(x.mag()));
        iterations = it;
        if residual <= tol || it == CONNECTED_MAX_ITERATIONS {
            break;
        }
        let mut jac = SMatrix::<T, 6, 6>::zeros();
        for i in 0..3 {
            let e = hat(&Vector3::ith(i, T::one()));
            let (a, b) = eq.linear(&(f1 * e), &Matrix3::zeros());
            jac.set_column(i, &block_residual(&a, &b));
            let (a, b) = eq.linear(&Matrix3::zeros(), &(f2 * e));
            jac.set_column(i + 3, &block_residual(&a, &b));
        }
        let delta = jac.lu().solve(&(-res)).ok_or(Error::NoConvergence {
            what: "connected-body Newton solve (singular Jacobian)",
            iterations: it,
            residual,
        })?;
        f1 *= exp_so3(&Vector3::new(delta[0], delta[1], delta[2]));
        f2 *= exp_so3(&Vector3::new(delta[3], delta[4], delta[5]));
    }
    if !(residual <= tol) {
        return Err(Error::NoConvergence {
            what: "connected-body implicit equations",
            iterations: CONNECTED_MAX_ITERATIONS,
            residual,
        });
    }

    let r1n = s.r1 * f1;
    let r2n = s.r2 * f2;
    let inv_h = T::lit(1.0 / h);
    let w = -(s.r1 * (f1 - eye) * d1) * alpha - (s.r2 * (f2 - eye) * d2) * beta;
    let b1 = (f1 - eye) * d1 * (w.transpose() * s.r1) * (m1 * inv_h);
    let b2 = (f2 - eye) * d2 * (w.transpose() * s.r2) * (m2 * inv_h);
    let two = T::lit(2.0);
    let p1n = f1.transpose() * (p1 - skew_vee(&b1) * two) + r1n.transpose() * u * ht;
    let p2n = f2.transpose() * (p2 - skew_vee(&b2) * two) - r2n.transpose() * u * ht;
    let vel = solve_momentum_map(
        &connected_mass_matrix(p, &r1n, &r2n),
        &Vec6::from_column_slice(&[p1n[0], p1n[1], p1n[2], p2n[0], p2n[1], p2n[2]]),
    )?;
    Ok((
        ConnectedState {
            r1: r1n,
            r2: r2n,
            omega1: Vector3::new(vel[0], vel[1], vel[2]),
            omega2: Vector3::new(vel[3], vel[4], vel[5]),
        },
        StepStats {
            attitude_iterations: iterations,
            sweeps: 1,
        },
    ))
}

impl Dynamics for ConnectedParams {
    type State<T: Real> = ConnectedState<T>;
    const NAME: &'static str = "connected";
    const DIM: usize = 12;
    const CONTROLS: usize = 3;

    fn validate(&self) -> Result<()> {
        ConnectedParams::validate(self)
    }

    fn step<T: Real>(&self, s: &ConnectedState<T>, u: &[T], h: f64) -> Result<(ConnectedState<T>, StepStats)> {
        step_connected(s, &to_vec3(u, 0), self, h)
    }

    fn lift<T: Real>(s: &ConnectedState) -> ConnectedState<T> {
        ConnectedState {
            r1: lift33(&s.r1),
            r2: lift33(&s.r2),
            omega1: lift3(&s.omega1),
            omega2: lift3(&s.omega2),
        }
    }

    fn primal<T: Real>(s: &ConnectedState<T>) -> ConnectedState {
        ConnectedState {
            r1: re33(&s.r1),
            r2: re33(&s.r2),
            omega1: re3(&s.omega1),
            omega2: re3(&s.omega2),
        }
    }

    fn retract<T: Real>(s: &ConnectedState<T>, z: &[T]) -> ConnectedState<T> {
        ConnectedState {
            r1: rot_retract(&s.r1, &to_vec3(z, 0)),
            r2: rot_retract(&s.r2, &to_vec3(z, 3)),
            omega1: s.omega1 + to_vec3(z, 6),
            omega2: s.omega2 + to_vec3(z, 9),
        }
    }

    fn difference<T: Real>(s: &ConnectedState<T>, base: &ConnectedState) -> Vec<T> {
        let mut out = Vec::with_capacity(12);
        out.extend(rot_difference(&s.r1, &base.r1).iter());
        out.extend(rot_difference(&s.r2, &base.r2).iter());
        out.extend((s.omega1 - lift3::<T>(&base.omega1)).iter());
        out.extend((s.omega2 - lift3::<T>(&base.omega2)).iter());
        out
    }

    fn energy(&self, s: &ConnectedState) -> f64 {
        connected_energy(self, &s.r1, &s.r2, &s.omega1, &s.omega2)
    }

    fn momentum(&self, s: &ConnectedState) -> Vec<f64> {
        total_angular_momentum(self, &s.r1, &s.r2, &s.omega1, &s.omega2)
            .iter()
            .copied()
            .collect()
    }

    fn momentum_labels() -> Vec<String> {
        vector_labels("angular_momentum")
    }

    fn flatten(s: &ConnectedState) -> Vec<f64> {
        let mut out = Vec::with_capacity(24);
        push_rotation(&mut out, &s.r1);
        push_rotation(&mut out, &s.r2);
        push3(&mut out, &s.omega1);
        push3(&mut out, &s.omega2);
        out
    }

    fn state_labels() -> Vec<String> {
        let mut v = rotation_labels("R1");
        v.extend(rotation_labels("R2"));
        v.extend(vector_labels("omega1"));
        v.extend(vector_labels("omega2"));
        v
    }

    fn control_labels() -> Vec<String> {
        vector_labels("u")
    }

    fn rotations(s: &ConnectedState) -> Vec<Mat3> {
        vec![s.r1, s.r2]
    }
}
