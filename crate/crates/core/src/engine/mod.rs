//! Discrete flow maps for the four rigid-body systems.
//!
//! Every stepper is generic over [`Real`] so that the same code produces
//! trajectories (`f64`) and exact directional derivatives (`Dual`).

mod cart;
mod connected;
mod dumbbell;
mod pendulum;

pub use cart::{step_cart_pendulum, CartPendulumState, FIXED_POINT_MAX_SWEEPS, FIXED_POINT_TOLERANCE};
pub use connected::{step_connected, ConnectedState, CONNECTED_RESIDUAL_TOLERANCE};
pub use dumbbell::{step_dumbbell, DumbbellState};
pub(crate) use dumbbell::inverse;
pub use pendulum::{step_pendulum, PendulumState};

use nalgebra::{DMatrix, Matrix3, SMatrix, SVector, Vector3};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::liegroup::{exp_so3, hat, orthogonality_defect, skew_vee, Mat3, Rotation, Vec3};
use crate::scalar::{max_mag3, Real};

/// Newton iterations allowed for one implicit attitude solve.
pub const ATTITUDE_MAX_ITERATIONS: usize = 50;
/// Residual tolerance for the implicit attitude solve, scaled by `max(1, |h p|_inf)`.
pub const ATTITUDE_TOLERANCE: f64 = 1e-14;
/// Largest condition number accepted when inverting a momentum map.
pub const MASS_MATRIX_CONDITION_LIMIT: f64 = 1e12;

/// Result of [`solve_attitude_step`].
#[derive(Debug, Clone, PartialEq)]
pub struct AttitudeSolution {
    pub rotation: Rotation,
    pub iterations: usize,
    /// `|vee(F J_d - J_d F^T) - h p|_inf` at exit.
    pub residual: f64,
}

/// Solve `h hat(p) = F J_d - J_d F^T` for `F` in SO(3).
pub fn solve_attitude_step(p: &Vec3, j_d: &Mat3, h: f64) -> Result<AttitudeSolution> {
    let (f, iterations) = solve_attitude(p, j_d, h)?;
    let residual = (skew_vee(&(f * j_d - j_d * f.transpose())) - p * h).amax();
    Ok(AttitudeSolution {
        rotation: Rotation::from_matrix_unchecked(f),
        iterations,
        residual,
    })
}

/// Generic core of [`solve_attitude_step`]. For dual numbers the tangent
/// part is converged together with the primal part.
pub(crate) fn solve_attitude<T: Real>(
    p: &Vector3<T>,
    j_d: &Matrix3<T>,
    h: f64,
) -> Result<(Matrix3<T>, usize)> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidInput(format!("time step must be positive, got {h}")));
    }
    let hp = p * T::lit(h);
    let tol = ATTITUDE_TOLERANCE * max_mag3(&hp).max(1.0);
    let j = Matrix3::identity() * j_d.trace() - j_d;
    let f0 = j
        .lu()
        .solve(&hp)
        .ok_or_else(|| Error::NotPositiveDefinite("inertia recovered from J_d".into()))?;
    let mut f = exp_so3(&f0);
    let mut residual = f64::INFINITY;
    for it in 0..=ATTITUDE_MAX_ITERATIONS {
        let res = skew_vee(&(f * j_d - j_d * f.transpose())) - hp;
        residual = max_mag3(&res);
        if residual <= tol {
            return Ok((f, it));
        }
        if it == ATTITUDE_MAX_ITERATIONS {
            break;
        }
        let delta = attitude_jacobian(&f, j_d).lu().solve(&(-res)).ok_or(Error::NoConvergence {
            what: "attitude Newton solve (singular Jacobian)",
            iterations: it,
            residual,
        })?;
        f *= exp_so3(&delta);
    }
    Err(Error::NoConvergence {
        what: "implicit attitude equation",
        iterations: ATTITUDE_MAX_ITERATIONS,
        residual,
    })
}

/// Derivative of `vee(F J_d - J_d F^T)` along `F exp(zeta)`. The map is linear
/// in `F`, so column `i` is its value at `F hat(e_i)`.
pub(crate) fn attitude_jacobian<T: Real>(f: &Matrix3<T>, j_d: &Matrix3<T>) -> Matrix3<T> {
    let mut k = Matrix3::zeros();
    for i in 0..3 {
        let fe = f * hat(&Vector3::ith(i, T::one()));
        k.set_column(i, &skew_vee(&(fe * j_d - j_d * fe.transpose())));
    }
    k
}

/// Solve `m v = b` after checking the condition number of the primal part of `m`.
pub(crate) fn solve_momentum_map<T: Real, const D: usize>(
    m: &SMatrix<T, D, D>,
    b: &SVector<T, D>,
) -> Result<SVector<T, D>> {
    let re = DMatrix::from_fn(D, D, |i, j| m[(i, j)].re());
    let sv = re.singular_values();
    let smin = sv.min();
    let cond = if smin > 0.0 { sv.max() / smin } else { f64::INFINITY };
    if !(cond <= MASS_MATRIX_CONDITION_LIMIT) {
        return Err(Error::SingularMassMatrix(cond));
    }
    let dm = DMatrix::from_fn(D, D, |i, j| m[(i, j)]);
    let db = nalgebra::DVector::from_fn(D, |i, _| b[i]);
    let x = dm.lu().solve(&db).ok_or(Error::SingularMassMatrix(cond))?;
    Ok(SVector::from_fn(|i, _| x[i]))
}

/// Inner-solver effort for one step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct StepStats {
    /// Newton iterations of the implicit attitude solve (summed over sweeps).
    pub attitude_iterations: usize,
    /// Fixed-point sweeps (cart model; 1 otherwise).
    pub sweeps: usize,
}

/// Common interface of the four discrete flow maps.
///
/// Variations are written in the coordinates `z`: rotations are perturbed on
/// the right, `R exp(eta)`, everything else additively, in the order of the
/// state fields.
pub trait Dynamics: Send + Sync {
    type State<T: Real>: Clone + std::fmt::Debug + Send + Sync;
    const NAME: &'static str;
    /// Dimension of the variation `z`.
    const DIM: usize;
    const CONTROLS: usize;

    fn validate(&self) -> Result<()>;
    fn step<T: Real>(&self, s: &Self::State<T>, u: &[T], h: f64) -> Result<(Self::State<T>, StepStats)>;
    fn lift<T: Real>(s: &Self::State<f64>) -> Self::State<T>;
    fn primal<T: Real>(s: &Self::State<T>) -> Self::State<f64>;
    /// `s` moved along the variation `z`.
    fn retract<T: Real>(s: &Self::State<T>, z: &[T]) -> Self::State<T>;
    /// Variation coordinates of `s` relative to `base`; inverse of [`Dynamics::retract`].
    fn difference<T: Real>(s: &Self::State<T>, base: &Self::State<f64>) -> Vec<T>;
    fn energy(&self, s: &Self::State<f64>) -> f64;
    /// Energy at the node velocities of a flow with step `h`. Where the flow
    /// carries half-kicked momenta (`J Omega_k = Pi_k + (h/2) M_k`), [`Dynamics::energy`]
    /// of a raw state is off by O(h); this removes the half kick so the
    /// deviation is O(h^2).
    fn node_energy(&self, s: &Self::State<f64>, _h: f64) -> f64 {
        self.energy(s)
    }
    fn momentum(&self, s: &Self::State<f64>) -> Vec<f64>;
    fn momentum_labels() -> Vec<String>;
    fn flatten(s: &Self::State<f64>) -> Vec<f64>;
    fn state_labels() -> Vec<String>;
    fn control_labels() -> Vec<String>;
    fn rotations(s: &Self::State<f64>) -> Vec<Mat3>;
    /// Conserved momentum for symmetry-respecting controls, if the model has one.
    fn conserved<T: Real>(&self, _s: &Self::State<T>) -> Option<T> {
        None
    }
}

/// Per-state diagnostics recorded by [`propagate`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepDiagnostics {
    /// [`Dynamics::node_energy`]
    pub energy: f64,
    pub momentum: Vec<f64>,
    /// Largest `|R^T R - I|_F` over the rotations in the state.
    pub orthogonality_defect: f64,
    pub stats: StepStats,
}

#[derive(Debug, Clone)]
pub struct Trajectory<M: Dynamics> {
    pub h: f64,
    /// `N + 1` states.
    pub states: Vec<M::State<f64>>,
    /// `controls[k]` is applied on the step from `k` to `k + 1`.
    pub controls: Vec<Vec<f64>>,
    /// One entry per state; the initial entry has zero solver stats.
    pub diagnostics: Vec<StepDiagnostics>,
}

impl<M: Dynamics> Trajectory<M> {
    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn terminal(&self) -> &M::State<f64> {
        self.states.last().expect("trajectory has at least one state")
    }

    pub fn max_orthogonality_defect(&self) -> f64 {
        self.diagnostics
            .iter()
            .map(|d| d.orthogonality_defect)
            .fold(0.0, f64::max)
    }
}

fn diagnostics<M: Dynamics>(model: &M, s: &M::State<f64>, h: f64, stats: StepStats) -> StepDiagnostics {
    StepDiagnostics {
        energy: model.node_energy(s, h),
        momentum: model.momentum(s),
        orthogonality_defect: M::rotations(s)
            .iter()
            .map(orthogonality_defect)
            .fold(0.0, f64::max),
        stats,
    }
}

/// Propagate `n` steps. `controls` holds one vector per step; `None` means zero control.
pub fn propagate<M: Dynamics>(
    model: &M,
    s0: &M::State<f64>,
    controls: Option<&[Vec<f64>]>,
    n: usize,
    h: f64,
) -> Result<Trajectory<M>> {
    if n == 0 {
        return Err(Error::InvalidInput("propagation needs at least one step".into()));
    }
    let controls: Vec<Vec<f64>> = match controls {
        Some(c) => {
            if c.len() < n {
                return Err(Error::InvalidInput(format!(
                    "{} control vectors supplied for {n} steps",
                    c.len()
                )));
            }
            for u in &c[..n] {
                if u.len() != M::CONTROLS {
                    return Err(Error::InvalidInput(format!(
                        "{} model expects {} controls per step, got {}",
                        M::NAME,
                        M::CONTROLS,
                        u.len()
                    )));
                }
            }
            c[..n].to_vec()
        }
        None => vec![vec![0.0; M::CONTROLS]; n],
    };
    let mut states = Vec::with_capacity(n + 1);
    let mut diags = Vec::with_capacity(n + 1);
    states.push(s0.clone());
    diags.push(diagnostics(model, s0, h, StepStats::default()));
    for (k, u) in controls.iter().enumerate() {
        let (next, stats) = model.step(&states[k], u, h).map_err(|e| e.at_step(k))?;
        diags.push(diagnostics(model, &next, h, stats));
        states.push(next);
    }
    Ok(Trajectory {
        h,
        states,
        controls,
        diagnostics: diags,
    })
}

/// Terminal state only, for any scalar type.
pub fn rollout<M: Dynamics, T: Real>(
    model: &M,
    s0: &M::State<T>,
    controls: &[Vec<T>],
    h: f64,
) -> Result<M::State<T>> {
    let mut s = s0.clone();
    for (k, u) in controls.iter().enumerate() {
        s = model.step(&s, u, h).map_err(|e| e.at_step(k))?.0;
    }
    Ok(s)
}

/// Linearization of one step in the variation coordinates, by forward-mode
/// differentiation through the stepper with the control held fixed.
pub fn linearize_ad<M: Dynamics>(
    model: &M,
    s: &M::State<f64>,
    u: &[f64],
    h: f64,
) -> Result<DMatrix<f64>> {
    use crate::scalar::Dual;
    let nominal = model.step(s, u, h)?.0;
    let base: M::State<Dual> = M::lift(s);
    let ud: Vec<Dual> = u.iter().map(|&x| Dual::from_re(x)).collect();
    let mut a = DMatrix::zeros(M::DIM, M::DIM);
    for j in 0..M::DIM {
        let z: Vec<Dual> = (0..M::DIM)
            .map(|i| if i == j { Dual::new(0.0, 1.0) } else { Dual::from_re(0.0) })
            .collect();
        let next = model.step(&M::retract(&base, &z), &ud, h)?.0;
        for (i, d) in M::difference(&next, &nominal).iter().enumerate() {
            a[(i, j)] = d.eps;
        }
    }
    Ok(a)
}

/// Linearization of one step by central differences with step `eps`.
pub fn linearize_fd<M: Dynamics>(
    model: &M,
    s: &M::State<f64>,
    u: &[f64],
    h: f64,
    eps: f64,
) -> Result<DMatrix<f64>> {
    let nominal = model.step(s, u, h)?.0;
    let mut a = DMatrix::zeros(M::DIM, M::DIM);
    for j in 0..M::DIM {
        let mut z = vec![0.0; M::DIM];
        z[j] = eps;
        let plus = model.step(&M::retract(s, &z), u, h)?.0;
        z[j] = -eps;
        let minus = model.step(&M::retract(s, &z), u, h)?.0;
        let dp = M::difference(&plus, &nominal);
        let dm = M::difference(&minus, &nominal);
        for i in 0..M::DIM {
            a[(i, j)] = (dp[i] - dm[i]) / (2.0 * eps);
        }
    }
    Ok(a)
}

/// Largest entrywise difference relative to the largest entry of `reference`.
pub fn relative_difference(a: &DMatrix<f64>, reference: &DMatrix<f64>) -> f64 {
    (a - reference).amax() / reference.amax().max(f64::MIN_POSITIVE)
}

pub(crate) fn to_vec3<T: Real>(z: &[T], offset: usize) -> Vector3<T> {
    Vector3::new(z[offset], z[offset + 1], z[offset + 2])
}

pub(crate) fn rot_difference<T: Real>(r: &Matrix3<T>, base: &Mat3) -> Vector3<T> {
    crate::liegroup::log_so3(&(crate::scalar::lift33::<T>(&base.transpose()) * r))
}

pub(crate) fn rot_retract<T: Real>(r: &Matrix3<T>, eta: &Vector3<T>) -> Matrix3<T> {
    r * exp_so3(eta)
}

pub(crate) fn push3(out: &mut Vec<f64>, v: &Vec3) {
    out.extend_from_slice(v.as_slice());
}

/// Row-major entries of a rotation.
pub(crate) fn push_rotation(out: &mut Vec<f64>, r: &Mat3) {
    for i in 0..3 {
        for j in 0..3 {
            out.push(r[(i, j)]);
        }
    }
}

pub(crate) fn rotation_labels(name: &str) -> Vec<String> {
    let mut v = Vec::with_capacity(9);
    for i in 1..=3 {
        for j in 1..=3 {
            v.push(format!("{name}_{i}{j}"));
        }
    }
    v
}

pub(crate) fn vector_labels(name: &str) -> Vec<String> {
    ["x", "y", "z"].iter().map(|c| format!("{name}_{c}")).collect()
}
