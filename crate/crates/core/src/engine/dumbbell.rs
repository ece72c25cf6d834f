use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{
    push3, push_rotation, rot_difference, rot_retract, rotation_labels, solve_attitude, to_vec3,
    vector_labels, Dynamics, StepStats,
};
use crate::error::Result;
use crate::liegroup::{nonstandard_inertia, Mat3, Vec3};
use crate::models::dumbbell::{
    dumbbell_angular_momentum, dumbbell_gravity, DumbbellParams,
};
use crate::scalar::{lift3, lift33, re3, re33, Real};

/// Attitude, position, body angular velocity and inertial velocity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct DumbbellState<T: Real = f64> {
    pub r: Matrix3<T>,
    pub x: Vector3<T>,
    pub omega: Vector3<T>,
    pub v: Vector3<T>,
}

/// One step of the dumbbell flow with force `uf` and moment `um` applied at the end of the step.
pub fn step_dumbbell<T: Real>(
    s: &DumbbellState<T>,
    uf: &Vector3<T>,
    um: &Vector3<T>,
    p: &DumbbellParams,
    h: f64,
) -> Result<(DumbbellState<T>, StepStats)> {
    let j = lift33::<T>(&p.inertia);
    let j_d = lift33::<T>(&nonstandard_inertia(&p.inertia)?);
    let pi = j * s.omega;
    let (f, iterations) = solve_attitude(&pi, &j_d, h)?;
    let r = s.r * f;
    let x = s.x + s.v * T::lit(h);
    let g = dumbbell_gravity(p, &r, &x)?;
    let pi_next = f.transpose() * pi + (g.moment + um) * T::lit(h);
    let omega = lift33::<T>(&inverse(&p.inertia)) * pi_next;
    let v = s.v + (uf - g.grad_x) * T::lit(h / p.mass);
    Ok((
        DumbbellState { r, x, omega, v },
        StepStats {
            attitude_iterations: iterations,
            sweeps: 1,
        },
    ))
}

pub(crate) fn inverse(m: &Mat3) -> Mat3 {
    m.try_inverse().expect("validated inertia is invertible")
}

impl Dynamics for DumbbellParams {
    type State<T: Real> = DumbbellState<T>;
    const NAME: &'static str = "dumbbell";
    const DIM: usize = 12;
    const CONTROLS: usize = 6;

    fn validate(&self) -> Result<()> {
        DumbbellParams::validate(self)
    }

    fn step<T: Real>(&self, s: &DumbbellState<T>, u: &[T], h: f64) -> Result<(DumbbellState<T>, StepStats)> {
        step_dumbbell(s, &to_vec3(u, 0), &to_vec3(u, 3), self, h)
    }

    fn lift<T: Real>(s: &DumbbellState) -> DumbbellState<T> {
        DumbbellState {
            r: lift33(&s.r),
            x: lift3(&s.x),
            omega: lift3(&s.omega),
            v: lift3(&s.v),
        }
    }

    fn primal<T: Real>(s: &DumbbellState<T>) -> DumbbellState {
        DumbbellState {
            r: re33(&s.r),
            x: re3(&s.x),
            omega: re3(&s.omega),
            v: re3(&s.v),
        }
    }

    fn retract<T: Real>(s: &DumbbellState<T>, z: &[T]) -> DumbbellState<T> {
        DumbbellState {
            r: rot_retract(&s.r, &to_vec3(z, 0)),
            x: s.x + to_vec3(z, 3),
            omega: s.omega + to_vec3(z, 6),
            v: s.v + to_vec3(z, 9),
        }
    }

    fn difference<T: Real>(s: &DumbbellState<T>, base: &DumbbellState) -> Vec<T> {
        let mut out = Vec::with_capacity(12);
        out.extend(rot_difference(&s.r, &base.r).iter());
        out.extend((s.x - lift3::<T>(&base.x)).iter());
        out.extend((s.omega - lift3::<T>(&base.omega)).iter());
        out.extend((s.v - lift3::<T>(&base.v)).iter());
        out
    }

    fn energy(&self, s: &DumbbellState) -> f64 {
        let kinetic = 0.5 * s.omega.dot(&(self.inertia * s.omega)) + 0.5 * self.mass * s.v.norm_squared();
        kinetic
            + dumbbell_gravity(self, &s.r, &s.x)
                .map(|g| g.potential)
                .unwrap_or(f64::NAN)
    }

    fn node_energy(&self, s: &DumbbellState, h: f64) -> f64 {
        let Ok(g) = dumbbell_gravity(self, &s.r, &s.x) else {
            return f64::NAN;
        };
        let omega = s.omega - inverse(&self.inertia) * g.moment * (0.5 * h);
        let v = s.v + g.grad_x * (0.5 * h / self.mass);
        0.5 * omega.dot(&(self.inertia * omega)) + 0.5 * self.mass * v.norm_squared() + g.potential
    }

    fn momentum(&self, s: &DumbbellState) -> Vec<f64> {
        dumbbell_angular_momentum(self, &s.r, &s.x, &s.omega, &s.v)
            .iter()
            .copied()
            .collect()
    }

    fn momentum_labels() -> Vec<String> {
        vector_labels("angular_momentum")
    }

    fn flatten(s: &DumbbellState) -> Vec<f64> {
        let mut out = Vec::with_capacity(18);
        push_rotation(&mut out, &s.r);
        push3(&mut out, &s.x);
        push3(&mut out, &s.omega);
        push3(&mut out, &s.v);
        out
    }

    fn state_labels() -> Vec<String> {
        let mut v = rotation_labels("R");
        v.extend(vector_labels("pos"));
        v.extend(vector_labels("omega"));
        v.extend(vector_labels("vel"));
        v
    }

    fn control_labels() -> Vec<String> {
        let mut v = vector_labels("uf");
        v.extend(vector_labels("um"));
        v
    }

    fn rotations(s: &DumbbellState) -> Vec<Mat3> {
        vec![s.r]
    }
}

impl DumbbellState {
    pub fn new(r: Mat3, x: Vec3, omega: Vec3, v: Vec3) -> Self {
        DumbbellState { r, x, omega, v }
    }
}
