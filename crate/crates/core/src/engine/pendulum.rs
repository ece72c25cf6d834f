use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::dumbbell::inverse;
use super::{
    push3, push_rotation, rot_difference, rot_retract, rotation_labels, solve_attitude, to_vec3,
    vector_labels, Dynamics, StepStats,
};
use crate::error::Result;
use crate::liegroup::{nonstandard_inertia, Mat3, Vec3};
use crate::models::pendulum::{
    e3, gravity_moment, pendulum_control_moment, pendulum_energy, vertical_momentum,
    PendulumParams,
};
use crate::scalar::{lift3, lift33, re3, re33, Real};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct PendulumState<T: Real = f64> {
    pub r: Matrix3<T>,
    pub omega: Vector3<T>,
}

impl PendulumState {
    pub fn new(r: Mat3, omega: Vec3) -> Self {
        PendulumState { r, omega }
    }
}

/// One step of the 3D pendulum with control moment `R_{k+1}^T e3 x u`.
pub fn step_pendulum<T: Real>(
    s: &PendulumState<T>,
    u: &Vector3<T>,
    p: &PendulumParams,
    h: f64,
) -> Result<(PendulumState<T>, StepStats)> {
    let j = lift33::<T>(&p.inertia);
    let j_d = lift33::<T>(&nonstandard_inertia(&p.inertia)?);
    let pi = j * s.omega;
    let (f, iterations) = solve_attitude(&pi, &j_d, h)?;
    let r = s.r * f;
    let pi_next = f.transpose() * pi
        + (gravity_moment(p, &r) + pendulum_control_moment(&r, u)) * T::lit(h);
    let omega = lift33::<T>(&inverse(&p.inertia)) * pi_next;
    Ok((
        PendulumState { r, omega },
        StepStats {
            attitude_iterations: iterations,
            sweeps: 1,
        },
    ))
}

impl Dynamics for PendulumParams {
    type State<T: Real> = PendulumState<T>;
    const NAME: &'static str = "pendulum";
    const DIM: usize = 6;
    const CONTROLS: usize = 3;

    fn validate(&self) -> Result<()> {
        PendulumParams::validate(self)
    }

    fn step<T: Real>(&self, s: &PendulumState<T>, u: &[T], h: f64) -> Result<(PendulumState<T>, StepStats)> {
        step_pendulum(s, &to_vec3(u, 0), self, h)
    }

    fn lift<T: Real>(s: &PendulumState) -> PendulumState<T> {
        PendulumState {
            r: lift33(&s.r),
            omega: lift3(&s.omega),
        }
    }

    fn primal<T: Real>(s: &PendulumState<T>) -> PendulumState {
        PendulumState {
            r: re33(&s.r),
            omega: re3(&s.omega),
        }
    }

    fn retract<T: Real>(s: &PendulumState<T>, z: &[T]) -> PendulumState<T> {
        PendulumState {
            r: rot_retract(&s.r, &to_vec3(z, 0)),
            omega: s.omega + to_vec3(z, 3),
        }
    }

    fn difference<T: Real>(s: &PendulumState<T>, base: &PendulumState) -> Vec<T> {
        let mut out = Vec::with_capacity(6);
        out.extend(rot_difference(&s.r, &base.r).iter());
        out.extend((s.omega - lift3::<T>(&base.omega)).iter());
        out
    }

    fn energy(&self, s: &PendulumState) -> f64 {
        pendulum_energy(self, &s.r, &s.omega)
    }

    fn node_energy(&self, s: &PendulumState, h: f64) -> f64 {
        let omega = s.omega - inverse(&self.inertia) * gravity_moment(self, &s.r) * (0.5 * h);
        pendulum_energy(self, &s.r, &omega)
    }

    fn momentum(&self, s: &PendulumState) -> Vec<f64> {
        vec![vertical_momentum(self, &s.r, &s.omega)]
    }

    fn momentum_labels() -> Vec<String> {
        vec!["vertical_momentum".into()]
    }

    fn flatten(s: &PendulumState) -> Vec<f64> {
        let mut out = Vec::with_capacity(12);
        push_rotation(&mut out, &s.r);
        push3(&mut out, &s.omega);
        out
    }

    fn state_labels() -> Vec<String> {
        let mut v = rotation_labels("R");
        v.extend(vector_labels("omega"));
        v
    }

    fn control_labels() -> Vec<String> {
        vector_labels("u")
    }

    fn rotations(s: &PendulumState) -> Vec<Mat3> {
        vec![s.r]
    }

    fn conserved<T: Real>(&self, s: &PendulumState<T>) -> Option<T> {
        Some(e3::<T>().dot(&(s.r * lift33::<T>(&self.inertia) * s.omega)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::propagate;
    use crate::liegroup::exp_so3;

    #[test]
    fn hanging_equilibrium_is_fixed() {
        let p = PendulumParams::default();
        let s0 = PendulumState::new(Mat3::identity(), Vec3::zeros());
        let traj = propagate(&p, &s0, None, 50, 0.001).unwrap();
        for s in &traj.states {
            assert_eq!(s.r, Mat3::identity());
            assert_eq!(s.omega, Vec3::zeros());
        }
    }

    #[test]
    fn vertical_momentum_conserved_under_control() {
        let p = PendulumParams::default();
        let s0 = PendulumState::new(exp_so3(&Vec3::new(0.4, -0.3, 0.2)), Vec3::new(0.5, -1.0, 2.0));
        let controls: Vec<Vec<f64>> = (0..1000)
            .map(|k| {
                let t = k as f64 * 0.001;
                vec![3.0 * (5.0 * t).sin(), -2.0 * (3.0 * t).cos(), 1.5]
            })
            .collect();
        let traj = propagate(&p, &s0, Some(&controls), 1000, 0.001).unwrap();
        let c0 = traj.diagnostics[0].momentum[0];
        for d in &traj.diagnostics {
            assert!((d.momentum[0] - c0).abs() <= 1e-12);
        }
    }
}
