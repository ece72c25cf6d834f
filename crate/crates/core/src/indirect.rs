//! Indirect optimal control by shooting on the initial multipliers.
//!
//! The multipliers pair with the variations `w = D z` of the quantities the
//! discrete equations of motion update: `(x, m v, attitude, J Omega)` for the
//! dumbbell and `(attitude, J Omega)` for the pendulum. With `A_k` the
//! linearization of the step leaving state `k` (control held at its
//! optimality-condition value) they obey `lambda_{k-1} = (D A_k D^-1)^T lambda_k`,
//! which the forward sweep solves for `lambda_k`.
//!
//! Sensitivities of the terminal state with respect to `lambda_0` are exact:
//! the whole extremal, including the multiplier recursion, is run on dual
//! numbers, one seeded column per unknown.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::engine::{
    attitude_jacobian, inverse, linearize_fd, propagate, relative_difference, solve_attitude, to_vec3,
    Dynamics, DumbbellState, PendulumState, Trajectory,
};
use crate::error::{Error, Result};
use crate::liegroup::{hat, nonstandard_inertia, Mat3};
use crate::models::dumbbell::dumbbell_gravity_jacobians;
use crate::models::pendulum::{e3, gravity_moment_eta};
use crate::models::{DumbbellParams, ManeuverSpec, PendulumParams};
use crate::scalar::{lift33, Dual, Real};

/// Relative tolerance of the implicit multiplier update when `A` depends on the control.
pub const MULTIPLIER_TOLERANCE: f64 = 1e-14;
const MULTIPLIER_MAX_ITERATIONS: usize = 50;
/// Central-difference step used to validate analytic linearizations.
pub const VALIDATION_STEP: f64 = 1e-6;
/// Largest accepted relative gap between analytic and finite-difference linearizations.
pub const VALIDATION_TOLERANCE: f64 = 1e-5;

/// A model with a derived indirect method.
pub trait Indirect: Dynamics {
    /// Controls respect a symmetry, so one momentum component of the terminal
    /// state does not depend on the multipliers.
    const SYMMETRIC: bool;
    /// The linearization depends on the control (and hence on the multiplier).
    const CONTROL_DEPENDENT: bool;

    /// `D` with `w = D z`.
    fn multiplier_scaling(&self) -> DMatrix<f64>;

    /// Control `u_{k+1}` from `lambda_k` and the state `x_k`.
    fn control_from_multiplier<T: Real>(
        &self,
        lambda: &DVector<T>,
        s: &Self::State<T>,
        w_inv: &DMatrix<T>,
        h: f64,
    ) -> Result<Vec<T>>;

    /// Analytic linearization of one step in `z` with `u` held fixed.
    fn step_linearization<T: Real>(&self, s: &Self::State<T>, u: &[T], h: f64) -> Result<DMatrix<T>>;
}

fn set_block<T: Real>(a: &mut DMatrix<T>, row: usize, col: usize, m: &Matrix3<T>) {
    a.fixed_view_mut::<3, 3>(row, col).copy_from(m);
}

fn lift_dm<T: Real>(m: &DMatrix<f64>) -> DMatrix<T> {
    m.map(T::lit)
}

fn max_mag<T: Real>(v: &DVector<T>) -> f64 {
    v.iter().fold(0.0f64, |a, x| a.max(x.mag()))
}

/// `F` and `Xi = h K^-1 J`, the response of the attitude increment to `delta Omega`.
fn attitude_variation<T: Real>(
    inertia: &Mat3,
    pi: &Vector3<T>,
    h: f64,
) -> Result<(Matrix3<T>, Matrix3<T>)> {
    let j_d = lift33::<T>(&nonstandard_inertia(inertia)?);
    let (f, _) = solve_attitude(pi, &j_d, h)?;
    let xi = attitude_jacobian(&f, &j_d)
        .lu()
        .solve(&(lift33::<T>(inertia) * T::lit(h)))
        .ok_or(Error::IllConditioned(f64::INFINITY))?;
    Ok((f, xi))
}

impl Indirect for DumbbellParams {
    const SYMMETRIC: bool = false;
    const CONTROL_DEPENDENT: bool = false;

    fn multiplier_scaling(&self) -> DMatrix<f64> {
        // w = [dx; m dv; eta; J dOmega], z = [eta; dx; dOmega; dv]
        let mut d = DMatrix::zeros(12, 12);
        set_block(&mut d, 0, 3, &Mat3::identity());
        set_block(&mut d, 3, 9, &(Mat3::identity() * self.mass));
        set_block(&mut d, 6, 0, &Mat3::identity());
        set_block(&mut d, 9, 6, &self.inertia);
        d
    }

    fn control_from_multiplier<T: Real>(
        &self,
        lambda: &DVector<T>,
        _s: &DumbbellState<T>,
        w_inv: &DMatrix<T>,
        _h: f64,
    ) -> Result<Vec<T>> {
        let g = DVector::from_iterator(6, lambda.rows(3, 3).iter().chain(lambda.rows(9, 3).iter()).copied());
        Ok((-(w_inv * g)).iter().copied().collect())
    }

    fn step_linearization<T: Real>(&self, s: &DumbbellState<T>, _u: &[T], h: f64) -> Result<DMatrix<T>> {
        let ht = T::lit(h);
        let j = lift33::<T>(&self.inertia);
        let j_inv = lift33::<T>(&inverse(&self.inertia));
        let pi = j * s.omega;
        let (f, xi) = attitude_variation(&self.inertia, &pi, h)?;
        let ft = f.transpose();
        let g = dumbbell_gravity_jacobians(self, &(s.r * f), &(s.x + s.v * ht))?;
        let i3 = Matrix3::identity();
        let scale = T::lit(h / self.mass);
        let mut a = DMatrix::zeros(12, 12);
        set_block(&mut a, 0, 0, &ft);
        set_block(&mut a, 0, 6, &xi);
        set_block(&mut a, 3, 3, &i3);
        set_block(&mut a, 3, 9, &(i3 * ht));
        set_block(&mut a, 6, 0, &(j_inv * g.moment_eta * ft * ht));
        set_block(&mut a, 6, 3, &(j_inv * g.moment_x * ht));
        let spin = hat(&(ft * pi)) * xi + ft * j + g.moment_eta * xi * ht;
        set_block(&mut a, 6, 6, &(j_inv * spin));
        set_block(&mut a, 6, 9, &(j_inv * g.moment_x * (ht * ht)));
        set_block(&mut a, 9, 0, &(-(g.grad_x_eta * ft) * scale));
        set_block(&mut a, 9, 3, &(-g.grad_x_x * scale));
        set_block(&mut a, 9, 6, &(-(g.grad_x_eta * xi) * scale));
        set_block(&mut a, 9, 9, &(i3 - g.grad_x_x * (scale * ht)));
        Ok(a)
    }
}

impl Indirect for PendulumParams {
    const SYMMETRIC: bool = true;
    const CONTROL_DEPENDENT: bool = true;

    fn multiplier_scaling(&self) -> DMatrix<f64> {
        // w = [eta; J dOmega]
        let mut d = DMatrix::identity(6, 6);
        set_block(&mut d, 3, 3, &self.inertia);
        d
    }

    fn control_from_multiplier<T: Real>(
        &self,
        lambda: &DVector<T>,
        s: &PendulumState<T>,
        w_inv: &DMatrix<T>,
        h: f64,
    ) -> Result<Vec<T>> {
        let j_d = lift33::<T>(&nonstandard_inertia(&self.inertia)?);
        let (f, _) = solve_attitude(&(lift33::<T>(&self.inertia) * s.omega), &j_d, h)?;
        let a = (s.r * f).transpose() * e3::<T>();
        let c = a.cross(&to_vec3(lambda.as_slice(), 3));
        Ok((w_inv * DVector::from_column_slice(c.as_slice())).iter().copied().collect())
    }

    fn step_linearization<T: Real>(&self, s: &PendulumState<T>, u: &[T], h: f64) -> Result<DMatrix<T>> {
        let ht = T::lit(h);
        let j = lift33::<T>(&self.inertia);
        let j_inv = lift33::<T>(&inverse(&self.inertia));
        let pi = j * s.omega;
        let (f, xi) = attitude_variation(&self.inertia, &pi, h)?;
        let ft = f.transpose();
        let r1 = s.r * f;
        let a1 = r1.transpose() * e3::<T>();
        let m_eta = gravity_moment_eta(self, &r1) - hat(&to_vec3(u, 0)) * hat(&a1);
        let mut a = DMatrix::zeros(6, 6);
        set_block(&mut a, 0, 0, &ft);
        set_block(&mut a, 0, 3, &xi);
        set_block(&mut a, 3, 0, &(j_inv * m_eta * ft * ht));
        let spin = hat(&(ft * pi)) * xi + ft * j + m_eta * xi * ht;
        set_block(&mut a, 3, 3, &(j_inv * spin));
        Ok(a)
    }
}

/// Control for `u_{k+1}` from `lambda_k` at state `x_k`.
pub fn extract_control<M: Indirect>(
    model: &M,
    lambda: &[f64],
    s: &M::State<f64>,
    weights: &DMatrix<f64>,
    h: f64,
) -> Result<Vec<f64>> {
    let w_inv = weight_inverse(weights, M::CONTROLS)?;
    model.control_from_multiplier(&DVector::from_column_slice(lambda), s, &w_inv, h)
}

/// `lambda_k = A_{k+1}^T lambda_{k+1}`, with `A` in multiplier coordinates.
pub fn multiplier_step(lambda_next: &DVector<f64>, a: &DMatrix<f64>) -> DVector<f64> {
    a.transpose() * lambda_next
}

/// Analytic linearization of one step in `z`, checked against central differences.
pub fn linearize_step<M: Indirect>(model: &M, s: &M::State<f64>, u: &[f64], h: f64) -> Result<DMatrix<f64>> {
    let a = model.step_linearization(s, u, h)?;
    let fd = linearize_fd(model, s, u, h, VALIDATION_STEP)?;
    let gap = relative_difference(&a, &fd);
    if !(gap <= VALIDATION_TOLERANCE) {
        return Err(Error::LinearizationMismatch(gap));
    }
    Ok(a)
}

fn weight_inverse(weights: &DMatrix<f64>, dim: usize) -> Result<DMatrix<f64>> {
    crate::models::check_weights(weights, dim)?;
    weights
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::NotPositiveDefinite("control weight".into()))
}

/// States, multipliers and controls of one extremal.
#[derive(Debug, Clone)]
pub struct Extremal<S, T: Real> {
    /// `x_0 .. x_N`
    pub states: Vec<S>,
    /// `lambda_0 .. lambda_{N-1}`, plus `lambda_N` when requested.
    pub multipliers: Vec<DVector<T>>,
    /// `u_1 .. u_N`
    pub controls: Vec<Vec<T>>,
}

/// Fixed matrices shared by all runs of one shooting problem.
struct Coordinates {
    d: DMatrix<f64>,
    d_inv: DMatrix<f64>,
    w_inv: DMatrix<f64>,
}

impl Coordinates {
    fn new<M: Indirect>(model: &M, weights: &DMatrix<f64>) -> Result<Self> {
        let d = model.multiplier_scaling();
        let d_inv = d
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::InvalidInput("singular multiplier scaling".into()))?;
        Ok(Coordinates {
            d,
            d_inv,
            w_inv: weight_inverse(weights, M::CONTROLS)?,
        })
    }
}

/// `lambda_{k+1}` from `lambda_k` at state `x_{k+1}`.
fn next_multiplier<M: Indirect, T: Real>(
    model: &M,
    c: &Coordinates,
    w_inv: &DMatrix<T>,
    s: &M::State<T>,
    lambda: &DVector<T>,
    h: f64,
) -> Result<DVector<T>> {
    let d = lift_dm::<T>(&c.d);
    let d_inv = lift_dm::<T>(&c.d_inv);
    let mut guess = lambda.clone();
    let mut change = f64::INFINITY;
    for _ in 0..MULTIPLIER_MAX_ITERATIONS {
        let u = model.control_from_multiplier(&guess, s, w_inv, h)?;
        let a = &d * model.step_linearization(s, &u, h)? * &d_inv;
        let next = a
            .transpose()
            .lu()
            .solve(lambda)
            .ok_or(Error::IllConditioned(f64::INFINITY))?;
        if !M::CONTROL_DEPENDENT {
            return Ok(next);
        }
        change = max_mag(&(&next - &guess));
        guess = next;
        if change <= MULTIPLIER_TOLERANCE * (1.0 + max_mag(&guess)) {
            return Ok(guess);
        }
    }
    Err(Error::NoConvergence {
        what: "implicit multiplier update",
        iterations: MULTIPLIER_MAX_ITERATIONS,
        residual: change,
    })
}

fn run_extremal<M: Indirect, T: Real>(
    model: &M,
    c: &Coordinates,
    x0: &M::State<T>,
    lambda0: &DVector<T>,
    n: usize,
    h: f64,
    extend: bool,
) -> Result<Extremal<M::State<T>, T>> {
    let w_inv = lift_dm::<T>(&c.w_inv);
    let mut states = Vec::with_capacity(n + 1);
    let mut multipliers = Vec::with_capacity(n + 1);
    let mut controls = Vec::with_capacity(n);
    states.push(x0.clone());
    multipliers.push(lambda0.clone());
    for k in 0..n {
        let u = model
            .control_from_multiplier(&multipliers[k], &states[k], &w_inv, h)
            .map_err(|e| e.at_step(k))?;
        let next = model.step(&states[k], &u, h).map_err(|e| e.at_step(k))?.0;
        if k + 1 < n || extend {
            let lam = next_multiplier(model, c, &w_inv, &next, &multipliers[k], h).map_err(|e| e.at_step(k + 1))?;
            multipliers.push(lam);
        }
        controls.push(u);
        states.push(next);
    }
    Ok(Extremal {
        states,
        multipliers,
        controls,
    })
}

/// Control effort `sum h/2 u^T W u`.
pub fn control_cost(controls: &[Vec<f64>], weights: &DMatrix<f64>, h: f64) -> f64 {
    controls
        .iter()
        .map(|u| {
            let u = DVector::from_column_slice(u);
            0.5 * h * (u.transpose() * weights * &u)[0]
        })
        .sum()
}

/// Linear map from `(z_0, delta lambda_0)` to `(z_N, delta lambda_N)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityBlocks {
    pub psi11: DMatrix<f64>,
    pub psi12: DMatrix<f64>,
    pub psi21: DMatrix<f64>,
    pub psi22: DMatrix<f64>,
}

/// Symmetric and anti-symmetric parts of a square sensitivity block.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivitySplit {
    pub symmetric: DMatrix<f64>,
    pub antisymmetric: DMatrix<f64>,
    /// Condition number of the anti-symmetric part.
    pub condition: f64,
}

/// Largest over smallest singular value.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    if m.iter().any(|x| !x.is_finite()) {
        return f64::INFINITY;
    }
    let sv = m.singular_values();
    let smin = sv.min();
    if smin > 0.0 {
        sv.max() / smin
    } else {
        f64::INFINITY
    }
}

fn antisymmetric_part(psi: &DMatrix<f64>) -> DMatrix<f64> {
    (psi - psi.transpose()) * 0.5
}

/// `S = (Psi + Psi^T) / 2` and `K = (Psi - Psi^T) / 2`.
pub fn decompose_sensitivity(psi: &DMatrix<f64>) -> Result<SensitivitySplit> {
    if !psi.is_square() {
        return Err(Error::InvalidInput("sensitivity block must be square".into()));
    }
    let antisymmetric = antisymmetric_part(psi);
    Ok(SensitivitySplit {
        symmetric: (psi + psi.transpose()) * 0.5,
        condition: condition_number(&antisymmetric),
        antisymmetric,
    })
}

impl SensitivitySplit {
    /// The anti-symmetric part, if it is fit to solve with.
    pub fn update_matrix(&self) -> Result<&DMatrix<f64>> {
        if !(self.condition <= DECOMPOSED_CONDITION_LIMIT) {
            return Err(Error::IllConditioned(self.condition));
        }
        Ok(&self.antisymmetric)
    }
}

pub const DECOMPOSED_CONDITION_LIMIT: f64 = 1e12;

/// Row and column scalings that bring every row and column of `m` close to unit norm.
pub fn equilibrate(m: &DMatrix<f64>) -> (DVector<f64>, DVector<f64>) {
    let mut rows = DVector::from_element(m.nrows(), 1.0);
    let mut cols = DVector::from_element(m.ncols(), 1.0);
    for _ in 0..EQUILIBRATION_SWEEPS {
        for i in 0..m.nrows() {
            let n = (0..m.ncols()).map(|j| (m[(i, j)] * cols[j]).powi(2)).sum::<f64>().sqrt();
            if n > 0.0 {
                rows[i] = 1.0 / n;
            }
        }
        for j in 0..m.ncols() {
            let n = (0..m.nrows()).map(|i| (rows[i] * m[(i, j)]).powi(2)).sum::<f64>().sqrt();
            if n > 0.0 {
                cols[j] = 1.0 / n;
            }
        }
    }
    (rows, cols)
}

const EQUILIBRATION_SWEEPS: usize = 20;

/// Uniform multipliers in `[-scale, scale]` from a seeded generator.
pub fn random_multiplier(dim: usize, seed: u64, scale: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..dim).map(|_| rng.gen_range(-scale..=scale)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShootingOptions {
    /// Terminal violation at which the iteration stops.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub max_backtracks: usize,
    /// Armijo sufficient-decrease factor.
    pub sufficient_decrease: f64,
    /// Largest condition number of the solved Newton system.
    pub condition_limit: f64,
}

impl Default for ShootingOptions {
    fn default() -> Self {
        ShootingOptions {
            tolerance: 1e-12,
            max_iterations: 100,
            max_backtracks: 30,
            sufficient_decrease: 1e-4,
            condition_limit: 1e12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ShootingStatus {
    Converged,
    MaxIterations,
    LineSearchStall,
}

/// One outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShootingIterate {
    pub iteration: usize,
    pub multiplier: Vec<f64>,
    /// Euclidean norm of the terminal error.
    pub violation: f64,
    /// Accepted Armijo step leaving this iterate; zero for the last one.
    pub step_length: f64,
    pub backtracks: usize,
    /// Condition number of the system solved for the Newton direction.
    pub condition: Option<f64>,
    /// Condition number of the undecomposed `Psi^12`.
    pub full_condition: Option<f64>,
    /// Condition number of the anti-symmetric part of `Psi^12`, for symmetric models.
    pub decomposed_condition: Option<f64>,
    /// Drift of the conserved momentum at the terminal state, for symmetric models.
    pub conserved_error: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ShootingReport<M: Dynamics> {
    pub status: ShootingStatus,
    pub history: Vec<ShootingIterate>,
    /// Best initial multiplier found.
    pub multiplier: Vec<f64>,
    pub violation: f64,
    /// Re-propagation of the open-loop controls from the initial state.
    pub trajectory: Trajectory<M>,
    pub cost: f64,
}

impl<M: Dynamics> ShootingReport<M> {
    pub fn converged(&self) -> bool {
        self.status == ShootingStatus::Converged
    }
}

/// The two-point boundary value problem of one maneuver.
pub struct Shooting<'a, M: Indirect> {
    model: &'a M,
    spec: &'a ManeuverSpec<M::State<f64>>,
    coords: Coordinates,
}

/// Terminal data of one `f64` extremal.
#[derive(Debug, Clone)]
pub struct Evaluation<S> {
    pub extremal: Extremal<S, f64>,
    /// `difference(x_N, x^f)`
    pub error: DVector<f64>,
    pub violation: f64,
}

/// Newton data at one iterate.
#[derive(Debug, Clone)]
pub struct NewtonSystem {
    /// `d error / d lambda_0`
    pub jacobian: DMatrix<f64>,
    pub psi12: DMatrix<f64>,
}

impl<'a, M: Indirect> Shooting<'a, M> {
    pub fn new(model: &'a M, spec: &'a ManeuverSpec<M::State<f64>>) -> Result<Self> {
        model.validate()?;
        spec.validate::<M>()?;
        Ok(Shooting {
            model,
            spec,
            coords: Coordinates::new(model, &spec.weights)?,
        })
    }

    fn check_multiplier(&self, lambda0: &[f64]) -> Result<()> {
        if lambda0.len() != M::DIM || lambda0.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "initial multiplier must hold {} finite entries",
                M::DIM
            )));
        }
        Ok(())
    }

    pub fn extremal(&self, lambda0: &[f64]) -> Result<Extremal<M::State<f64>, f64>> {
        self.check_multiplier(lambda0)?;
        run_extremal(
            self.model,
            &self.coords,
            &self.spec.initial,
            &DVector::from_column_slice(lambda0),
            self.spec.steps,
            self.spec.h,
            false,
        )
    }

    pub fn evaluate(&self, lambda0: &[f64]) -> Result<Evaluation<M::State<f64>>> {
        let extremal = self.extremal(lambda0)?;
        let error = DVector::from_vec(M::difference(extremal.states.last().unwrap(), &self.spec.terminal));
        let violation = error.norm();
        Ok(Evaluation {
            extremal,
            error,
            violation,
        })
    }

    fn dual_run(&self, x0: &M::State<Dual>, lambda0: &DVector<Dual>, extend: bool) -> Result<Extremal<M::State<Dual>, Dual>> {
        run_extremal(self.model, &self.coords, x0, lambda0, self.spec.steps, self.spec.h, extend)
    }

    fn seeded(&self, base: &[f64], j: usize) -> DVector<Dual> {
        DVector::from_fn(base.len(), |i, _| Dual::new(base[i], if i == j { 1.0 } else { 0.0 }))
    }

    /// Exact Jacobian of the terminal error and `Psi^12`, one dual run per column.
    pub fn newton_system(&self, lambda0: &[f64], nominal: &M::State<f64>) -> Result<NewtonSystem> {
        self.check_multiplier(lambda0)?;
        let x0: M::State<Dual> = M::lift(&self.spec.initial);
        let columns: Vec<(Vec<f64>, Vec<f64>)> = (0..M::DIM)
            .into_par_iter()
            .map(|j| {
                let run = self.dual_run(&x0, &self.seeded(lambda0, j), false)?;
                let last = run.states.last().unwrap();
                Ok((
                    M::difference(last, &self.spec.terminal).iter().map(|d| d.eps).collect(),
                    M::difference(last, nominal).iter().map(|d| d.eps).collect(),
                ))
            })
            .collect::<Result<_>>()?;
        let mut jacobian = DMatrix::zeros(M::DIM, M::DIM);
        let mut psi12 = DMatrix::zeros(M::DIM, M::DIM);
        for (j, (e, z)) in columns.iter().enumerate() {
            jacobian.set_column(j, &DVector::from_column_slice(e));
            psi12.set_column(j, &DVector::from_column_slice(z));
        }
        // the rotation error is not differentiable half a turn away from the target
        if jacobian.iter().chain(psi12.iter()).any(|x| !x.is_finite()) {
            return Err(Error::IllConditioned(f64::INFINITY));
        }
        Ok(NewtonSystem { jacobian, psi12 })
    }

    /// All four blocks of the linearized state-multiplier map about the extremal from `lambda0`.
    pub fn sensitivity(&self, lambda0: &[f64]) -> Result<SensitivityBlocks> {
        self.check_multiplier(lambda0)?;
        let nominal = run_extremal(
            self.model,
            &self.coords,
            &self.spec.initial,
            &DVector::from_column_slice(lambda0),
            self.spec.steps,
            self.spec.h,
            true,
        )?;
        self.validate_along(&nominal)?;
        let x_n = nominal.states.last().unwrap().clone();
        let lambda_n = nominal.multipliers.last().unwrap().clone();
        let x0: M::State<Dual> = M::lift(&self.spec.initial);
        let lam0 = DVector::from_column_slice(lambda0).map(Dual::from_re);
        let dim = M::DIM;
        let columns: Vec<(Vec<f64>, Vec<f64>)> = (0..2 * dim)
            .into_par_iter()
            .map(|j| {
                let run = if j < dim {
                    let z: Vec<Dual> = (0..dim)
                        .map(|i| Dual::new(0.0, if i == j { 1.0 } else { 0.0 }))
                        .collect();
                    self.dual_run(&M::retract(&x0, &z), &lam0, true)?
                } else {
                    self.dual_run(&x0, &self.seeded(lambda0, j - dim), true)?
                };
                let z_n = M::difference(run.states.last().unwrap(), &x_n).iter().map(|d| d.eps).collect();
                let l_n = run
                    .multipliers
                    .last()
                    .unwrap()
                    .iter()
                    .zip(lambda_n.iter())
                    .map(|(d, _)| d.eps)
                    .collect();
                Ok((z_n, l_n))
            })
            .collect::<Result<_>>()?;
        let block = |cols: &[(Vec<f64>, Vec<f64>)], lower: bool| {
            DMatrix::from_fn(dim, dim, |i, j| if lower { cols[j].1[i] } else { cols[j].0[i] })
        };
        Ok(SensitivityBlocks {
            psi11: block(&columns[..dim], false),
            psi12: block(&columns[dim..], false),
            psi21: block(&columns[..dim], true),
            psi22: block(&columns[dim..], true),
        })
    }

    /// Cross-check the analytic linearization at the start, middle and end of an extremal.
    fn validate_along(&self, e: &Extremal<M::State<f64>, f64>) -> Result<()> {
        let n = e.controls.len();
        for k in [0, n / 2, n - 1] {
            linearize_step(self.model, &e.states[k], &e.controls[k], self.spec.h)?;
        }
        Ok(())
    }

    /// Gradient of the conserved momentum at `retract(x^f, e)` with respect to `e`.
    fn conserved_gradient(&self, error: &DVector<f64>) -> DVector<f64> {
        let target: M::State<Dual> = M::lift(&self.spec.terminal);
        DVector::from_fn(M::DIM, |j, _| {
            let z: Vec<Dual> = (0..M::DIM)
                .map(|i| Dual::new(error[i], if i == j { 1.0 } else { 0.0 }))
                .collect();
            self.model
                .conserved(&M::retract(&target, &z))
                .map(|c| c.eps)
                .unwrap_or(0.0)
        })
    }

    fn conserved_error(&self, terminal: &M::State<f64>) -> Option<f64> {
        let c = self.model.conserved(terminal)?;
        let c0 = self.model.conserved(&self.spec.initial)?;
        Some((c - c0).abs())
    }

    /// Newton direction and the condition numbers of the solved and full systems.
    fn direction(
        &self,
        eval: &Evaluation<M::State<f64>>,
        sys: &NewtonSystem,
        limit: f64,
    ) -> Result<(DVector<f64>, f64, f64)> {
        let full = condition_number(&sys.psi12);
        let rhs = -&eval.error;
        if !M::SYMMETRIC {
            let (rows, cols) = equilibrate(&sys.jacobian);
            let scaled = DMatrix::from_fn(M::DIM, M::DIM, |i, j| rows[i] * sys.jacobian[(i, j)] * cols[j]);
            let cond = condition_number(&scaled);
            if !(cond <= limit) {
                return Err(Error::IllConditioned(cond));
            }
            let y = scaled
                .lu()
                .solve(&rhs.component_mul(&rows))
                .ok_or(Error::IllConditioned(f64::INFINITY))?;
            return Ok((y.component_mul(&cols), cond, full));
        }
        // The conserved momentum is unreachable: drop its direction from the
        // error and solve the remaining rank-(n-1) system.
        let n = self.conserved_gradient(&eval.error);
        let nn = n.norm_squared();
        let projected = if nn > 0.0 { &rhs - &n * (n.dot(&rhs) / nn) } else { rhs };
        let svd = sys.jacobian.clone().svd(true, true);
        let u = svd.u.as_ref().unwrap();
        let vt = svd.v_t.as_ref().unwrap();
        let mut order: Vec<usize> = (0..M::DIM).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let rank = M::DIM - 1;
        let cond = svd.singular_values[order[0]] / svd.singular_values[order[rank - 1]];
        if !(cond <= limit) {
            return Err(Error::IllConditioned(cond));
        }
        let mut delta = DVector::zeros(M::DIM);
        for &i in &order[..rank] {
            let coef = u.column(i).dot(&projected) / svd.singular_values[i];
            delta += vt.row(i).transpose() * coef;
        }
        Ok((delta, cond, full))
    }

    /// Newton-Armijo iteration on `lambda_0` starting from `guess`.
    pub fn shoot(&self, guess: &[f64], options: &ShootingOptions) -> Result<ShootingReport<M>> {
        self.check_multiplier(guess)?;
        let mut lambda = DVector::from_column_slice(guess);
        let mut eval = self.evaluate(guess)?;
        let mut history = Vec::new();
        let mut status = ShootingStatus::MaxIterations;
        for iteration in 0..=options.max_iterations {
            let mut record = ShootingIterate {
                iteration,
                multiplier: lambda.iter().copied().collect(),
                violation: eval.violation,
                step_length: 0.0,
                backtracks: 0,
                condition: None,
                full_condition: None,
                decomposed_condition: None,
                conserved_error: self.conserved_error(eval.extremal.states.last().unwrap()),
            };
            log::debug!("shooting {iteration}: violation {:.3e}", eval.violation);
            if eval.violation <= options.tolerance {
                status = ShootingStatus::Converged;
                history.push(record);
                break;
            }
            if iteration == options.max_iterations {
                history.push(record);
                break;
            }
            self.validate_along(&eval.extremal)?;
            let sys = self.newton_system(lambda.as_slice(), eval.extremal.states.last().unwrap())?;
            let (delta, cond, full) = self.direction(&eval, &sys, options.condition_limit)?;
            record.condition = Some(cond);
            record.full_condition = Some(full);
            if M::SYMMETRIC {
                record.decomposed_condition = Some(condition_number(&antisymmetric_part(&sys.psi12)));
            }
            let mut gamma = 1.0;
            let mut accepted = None;
            for backtrack in 0..=options.max_backtracks {
                let trial = &lambda + &delta * gamma;
                if let Ok(e) = self.evaluate(trial.as_slice()) {
                    if e.violation <= (1.0 - options.sufficient_decrease * gamma) * eval.violation {
                        accepted = Some((trial, e, backtrack));
                        break;
                    }
                }
                gamma *= 0.5;
            }
            match accepted {
                Some((trial, e, backtracks)) => {
                    record.step_length = gamma;
                    record.backtracks = backtracks;
                    history.push(record);
                    lambda = trial;
                    eval = e;
                }
                None => {
                    record.backtracks = options.max_backtracks;
                    history.push(record);
                    status = ShootingStatus::LineSearchStall;
                    break;
                }
            }
        }
        let controls = eval.extremal.controls.clone();
        let trajectory = propagate(self.model, &self.spec.initial, Some(&controls), self.spec.steps, self.spec.h)?;
        Ok(ShootingReport {
            status,
            history,
            multiplier: lambda.iter().copied().collect(),
            violation: eval.violation,
            cost: control_cost(&controls, &self.spec.weights, self.spec.h),
            trajectory,
        })
    }
}
