//! Direct optimal control: spline-parameterized controls and an SQP solve of
//! the resulting equality-constrained program.
//!
//! The cost is an exact quadratic form in the knot values. Constraint
//! Jacobians are exact as well, from dual numbers pushed through the
//! stepper. Steps are composite trust-region steps judged by a filter on
//! (violation, cost), so no penalty parameter has to track the multipliers.
//! The trust region matters: reorientation through geometric phase is second
//! order in the controls, and unbounded linearized steps ask for huge ones.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{propagate, rollout, Dynamics, Trajectory};
use crate::error::{Error, Result};
use crate::indirect::control_cost;
use crate::models::{ManeuverSpec, PendulumParams};
use crate::models::{CartPendulumParams, ConnectedParams, DumbbellParams};
use crate::scalar::{Dual, Real};
use crate::spline::{controls_from, spline_basis, ControlSchedule};

/// A model solved by the direct method, with its structurally redundant terminal rows.
pub trait Direct: Dynamics {
    /// Rows of `difference(x_N, x^f)` implied by the others through a conservation law.
    const REDUNDANT_ROWS: &'static [usize] = &[];
}

impl Direct for CartPendulumParams {}
impl Direct for DumbbellParams {}
impl Direct for PendulumParams {}

impl Direct for ConnectedParams {
    /// `Omega_2` follows from `R_1, R_2, Omega_1` at zero total angular momentum.
    const REDUNDANT_ROWS: &'static [usize] = &[9, 10, 11];
}

/// Indices of the terminal residual kept as constraints.
pub fn drop_redundant_constraints<M: Direct>() -> Vec<usize> {
    (0..M::DIM).filter(|i| !M::REDUNDANT_ROWS.contains(i)).collect()
}

/// Cost and full terminal residual of a schedule.
pub fn evaluate_cost<M: Dynamics>(
    model: &M,
    spec: &ManeuverSpec<M::State<f64>>,
    schedule: &ControlSchedule,
) -> Result<(f64, DVector<f64>)> {
    check_schedule::<M>(spec, schedule)?;
    let controls = schedule.controls();
    let terminal = rollout(model, &spec.initial, &controls, spec.h)?;
    Ok((
        control_cost(&controls, &spec.weights, spec.h),
        DVector::from_vec(M::difference(&terminal, &spec.terminal)),
    ))
}

fn check_schedule<M: Dynamics>(spec: &ManeuverSpec<M::State<f64>>, s: &ControlSchedule) -> Result<()> {
    if s.components() != M::CONTROLS || s.steps != spec.steps || s.h != spec.h {
        return Err(Error::InvalidInput(format!(
            "schedule ({} components, {} steps, h = {}) does not match the maneuver ({} controls, {} steps, h = {})",
            s.components(),
            s.steps,
            s.h,
            M::CONTROLS,
            spec.steps,
            spec.h
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NlpOptions {
    pub knots: usize,
    /// Largest accepted norm of the retained terminal residual.
    pub tolerance: f64,
    /// Largest accepted `|grad L|_inf / max(1, |grad f|_inf)`.
    pub stationarity: f64,
    pub max_iterations: usize,
    pub max_backtracks: usize,
    /// Armijo factor on the merit function.
    pub sufficient_decrease: f64,
    /// Knots start uniform in `[-initial_scale, initial_scale]`; zero starts from rest.
    pub initial_scale: f64,
    pub seed: u64,
    pub hessian: NlpHessian,
    /// Initial trust radius on the knot step, in control units.
    pub trust_radius: f64,
}

impl Default for NlpOptions {
    fn default() -> Self {
        NlpOptions {
            knots: 7,
            tolerance: 1e-8,
            stationarity: 1e-6,
            max_iterations: 200,
            max_backtracks: 30,
            sufficient_decrease: 1e-4,
            initial_scale: 0.0,
            seed: 0,
            hessian: NlpHessian::Bfgs,
            trust_radius: 1.0,
        }
    }
}

/// Curvature model in the SQP subproblem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NlpHessian {
    /// Damped BFGS started from the exact cost Hessian.
    Bfgs,
    /// Finite-difference Lagrangian Hessian with its eigenvalues made positive.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NlpStatus {
    Converged,
    MaxIterations,
    /// The merit line search failed while the constraints were still violated.
    InfeasibleStall,
    /// The merit line search failed at a feasible point short of stationarity.
    LineSearchStall,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NlpIterate {
    pub iteration: usize,
    pub cost: f64,
    /// Norm of the retained terminal residual.
    pub violation: f64,
    pub stationarity: f64,
    /// Norm of the accepted step leaving this iterate; zero for the last one and after restoration.
    pub step_norm: f64,
    /// Trust radius after the step.
    pub radius: f64,
    /// The next iterate came from feasibility restoration.
    pub restored: bool,
}

#[derive(Debug, Clone)]
pub struct NlpReport<M: Dynamics> {
    pub status: NlpStatus,
    pub history: Vec<NlpIterate>,
    pub schedule: ControlSchedule,
    /// Re-propagation of the final schedule.
    pub trajectory: Trajectory<M>,
    pub cost: f64,
    /// Norm of the retained rows of the re-propagated terminal residual.
    pub violation: f64,
    /// Largest magnitude among the dropped rows, if any were dropped.
    pub dropped_residual: Option<f64>,
    pub stationarity: f64,
}

impl<M: Dynamics> NlpReport<M> {
    pub fn converged(&self) -> bool {
        self.status == NlpStatus::Converged
    }
}

/// The transcribed program for one maneuver and knot count.
pub struct DirectProblem<'a, M: Direct> {
    model: &'a M,
    spec: &'a ManeuverSpec<M::State<f64>>,
    basis: DMatrix<f64>,
    rows: Vec<usize>,
    /// `grad f = hessian * p`, exactly.
    hessian: DMatrix<f64>,
}

/// Values at one decision vector.
#[derive(Debug, Clone)]
struct Point {
    p: DVector<f64>,
    cost: f64,
    gradient: DVector<f64>,
    constraints: DVector<f64>,
}

/// Forbidden region of (violation, cost) pairs, each entry shifted by a margin.
#[derive(Debug, Clone, Default)]
struct Filter {
    entries: Vec<(f64, f64)>,
}

impl Filter {
    fn admits(&self, theta: f64, cost: f64) -> bool {
        self.entries.iter().all(|&(t, f)| theta < t || cost < f)
    }

    fn add(&mut self, theta: f64, cost: f64) {
        let entry = ((1.0 - FILTER_GAMMA) * theta, cost - FILTER_GAMMA * theta);
        self.entries.retain(|&(t, f)| t < entry.0 || f < entry.1);
        self.entries.push(entry);
    }
}

const FILTER_GAMMA: f64 = 1e-5;

const RESTORATION_STEPS: usize = 20;

impl<'a, M: Direct> DirectProblem<'a, M> {
    pub fn new(model: &'a M, spec: &'a ManeuverSpec<M::State<f64>>, knots: usize) -> Result<Self> {
        model.validate()?;
        spec.validate::<M>()?;
        if knots < 2 {
            return Err(Error::TooFewKnots(knots));
        }
        let basis = spline_basis(knots, spec.steps, spec.h);
        // f = h/2 sum_k u_k^T W u_k with u_k = (B_k p_c)_c, so the Hessian is h W (x) B^T B
        let gram = basis.transpose() * &basis;
        let n = M::CONTROLS * knots;
        let hessian = DMatrix::from_fn(n, n, |i, j| spec.h * spec.weights[(i / knots, j / knots)] * gram[(i % knots, j % knots)]);
        Ok(DirectProblem {
            model,
            spec,
            basis,
            rows: drop_redundant_constraints::<M>(),
            hessian,
        })
    }

    pub fn parameters(&self) -> usize {
        M::CONTROLS * self.basis.ncols()
    }

    pub fn constraint_count(&self) -> usize {
        self.rows.len()
    }

    pub fn schedule(&self, p: &[f64]) -> Result<ControlSchedule> {
        ControlSchedule::from_parameters(p, M::CONTROLS, self.spec.steps, self.spec.h)
    }

    pub fn cost(&self, p: &[f64]) -> f64 {
        let p = DVector::from_column_slice(p);
        0.5 * p.dot(&(&self.hessian * &p))
    }

    pub fn cost_gradient(&self, p: &[f64]) -> DVector<f64> {
        &self.hessian * DVector::from_column_slice(p)
    }

    fn residual<T: Real>(&self, p: &[T]) -> Result<Vec<T>> {
        let controls = controls_from(&self.basis, p, M::CONTROLS);
        let x0: M::State<T> = M::lift(&self.spec.initial);
        let terminal = rollout(self.model, &x0, &controls, self.spec.h)?;
        Ok(M::difference(&terminal, &self.spec.terminal))
    }

    /// Retained terminal residual.
    pub fn constraints(&self, p: &[f64]) -> Result<DVector<f64>> {
        let full = self.residual(p)?;
        Ok(DVector::from_iterator(self.rows.len(), self.rows.iter().map(|&i| full[i])))
    }

    /// Exact Jacobian of the retained residual, one dual rollout per parameter.
    pub fn constraint_jacobian(&self, p: &[f64]) -> Result<DMatrix<f64>> {
        let columns: Vec<Vec<f64>> = (0..p.len())
            .into_par_iter()
            .map(|j| {
                let seeded: Vec<Dual> = p
                    .iter()
                    .enumerate()
                    .map(|(i, &x)| Dual::new(x, if i == j { 1.0 } else { 0.0 }))
                    .collect();
                let full = self.residual(&seeded)?;
                Ok(self.rows.iter().map(|&i| full[i].eps).collect())
            })
            .collect::<Result<_>>()?;
        Ok(DMatrix::from_fn(self.rows.len(), p.len(), |i, j| columns[j][i]))
    }

    /// Central-difference Jacobian of the retained residual.
    pub fn constraint_jacobian_fd(&self, p: &[f64], step: f64) -> Result<DMatrix<f64>> {
        let mut jac = DMatrix::zeros(self.rows.len(), p.len());
        for j in 0..p.len() {
            let mut plus = p.to_vec();
            let mut minus = p.to_vec();
            plus[j] += step;
            minus[j] -= step;
            let col = (self.constraints(&plus)? - self.constraints(&minus)?) / (2.0 * step);
            jac.set_column(j, &col);
        }
        Ok(jac)
    }

    /// `Q + sum_i mu_i grad^2 c_i`, the second term by central differences of `A^T mu`.
    pub fn lagrangian_hessian(&self, p: &[f64], mu: &DVector<f64>) -> Result<DMatrix<f64>> {
        let n = p.len();
        let columns: Vec<DVector<f64>> = (0..n)
            .map(|j| {
                let step = HESSIAN_STEP * p[j].abs().max(1.0);
                let mut plus = p.to_vec();
                let mut minus = p.to_vec();
                plus[j] += step;
                minus[j] -= step;
                let up = self.constraint_jacobian(&plus)?.transpose() * mu;
                let down = self.constraint_jacobian(&minus)?.transpose() * mu;
                Ok((up - down) / (2.0 * step))
            })
            .collect::<Result<_>>()?;
        let curvature = DMatrix::from_fn(n, n, |i, j| columns[j][i]);
        Ok(&self.hessian + (&curvature + curvature.transpose()) * 0.5)
    }

    fn point(&self, p: DVector<f64>) -> Result<Point> {
        let constraints = self.constraints(p.as_slice())?;
        Ok(Point {
            cost: self.cost(p.as_slice()),
            gradient: self.cost_gradient(p.as_slice()),
            constraints,
            p,
        })
    }

    pub fn initial_guess(&self, options: &NlpOptions) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
        (0..self.parameters())
            .map(|_| {
                if options.initial_scale > 0.0 {
                    rng.gen_range(-options.initial_scale..=options.initial_scale)
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// SQP from `guess`.
    pub fn solve_from(&self, guess: &[f64], options: &NlpOptions) -> Result<NlpReport<M>> {
        if guess.len() != self.parameters() || guess.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "initial guess must hold {} finite knot values",
                self.parameters()
            )));
        }
        let mut x = self.point(DVector::from_column_slice(guess))?;
        let mut jac = self.constraint_jacobian(x.p.as_slice())?;
        let mut mu = least_squares_multiplier(&jac, &x.gradient);
        let mut b = self.hessian.clone();
        let theta0 = x.constraints.norm();
        let theta_max = 1e4 * theta0.max(1.0);
        let theta_min = 1e-4 * theta0.max(1.0);
        let mut radius = options.trust_radius;
        let mut filter = Filter::default();
        let mut history = Vec::new();
        let mut status = NlpStatus::MaxIterations;
        for iteration in 0..=options.max_iterations {
            let violation = x.constraints.norm();
            let stationarity = lagrangian_gradient(&x.gradient, &jac, &mu).amax() / x.gradient.amax().max(1.0);
            let mut record = NlpIterate {
                iteration,
                cost: x.cost,
                violation,
                stationarity,
                step_norm: 0.0,
                radius,
                restored: false,
            };
            log::debug!("sqp {iteration}: cost {:.6e} violation {violation:.3e} stationarity {stationarity:.3e}", x.cost);
            if violation <= options.tolerance && stationarity <= options.stationarity {
                status = NlpStatus::Converged;
                history.push(record);
                break;
            }
            if iteration == options.max_iterations {
                history.push(record);
                break;
            }
            if options.hessian == NlpHessian::Exact {
                b = convexify(self.lagrangian_hessian(x.p.as_slice(), &mu)?);
            }
            // steps whose predicted cost decrease dominates the violation are judged on cost alone
            let cost_step = |slope: f64| slope < 0.0 && (-slope).powf(2.3) > violation.powf(1.1) && violation <= theta_min;
            let acceptable = |trial: &Point, slope: f64| {
                let theta = trial.constraints.norm();
                if !(theta <= theta_max) || !filter.admits(theta, trial.cost) {
                    return false;
                }
                if cost_step(slope) {
                    trial.cost <= x.cost + options.sufficient_decrease * slope
                } else {
                    theta <= (1.0 - FILTER_GAMMA) * violation || trial.cost <= x.cost - FILTER_GAMMA * violation
                }
            };
            let mut next = None;
            for attempt in 0..=options.max_backtracks {
                let (d, mu_next) = composite_step(&b, &jac, &x.gradient, &x.constraints, radius)?;
                let slope = x.gradient.dot(&d);
                if let Ok(trial) = self.point(&x.p + &d) {
                    if acceptable(&trial, slope) {
                        next = Some((trial, d, mu_next, slope));
                        break;
                    }
                    // second-order correction against the Maratos effect
                    if attempt == 0 {
                        if let Some(correction) = min_norm_solve(&jac, &trial.constraints) {
                            if let Ok(soc) = self.point(&x.p + &d - correction) {
                                if acceptable(&soc, slope) {
                                    next = Some((soc, d, mu_next, slope));
                                    break;
                                }
                            }
                        }
                    }
                }
                radius = 0.5 * radius.min(d.norm());
            }
            if next.as_ref().map_or(true, |n| !cost_step(n.3)) {
                filter.add(violation, x.cost);
            }
            let (trial, mu_next) = match next {
                Some((trial, d, mu_next, _)) => {
                    record.step_norm = d.norm();
                    if record.step_norm >= 0.99 * radius {
                        radius *= 2.0;
                    }
                    (trial, Some(mu_next))
                }
                None => match self.restore(&x, &jac, &filter, options) {
                    Some(trial) => {
                        record.restored = true;
                        radius = options.trust_radius;
                        (trial, None)
                    }
                    None => {
                        history.push(record);
                        status = if violation > options.tolerance {
                            NlpStatus::InfeasibleStall
                        } else {
                            NlpStatus::LineSearchStall
                        };
                        break;
                    }
                },
            };
            log::debug!("sqp step {:.3e}, radius {radius:.3e}, filter {}", record.step_norm, filter.entries.len());
            history.push(record);
            let jac_next = self.constraint_jacobian(trial.p.as_slice())?;
            mu = match mu_next {
                Some(mu_next) => {
                    if options.hessian == NlpHessian::Bfgs {
                        let step = &trial.p - &x.p;
                        let change = lagrangian_gradient(&trial.gradient, &jac_next, &mu_next)
                            - lagrangian_gradient(&x.gradient, &jac, &mu_next);
                        damped_bfgs(&mut b, &step, &change);
                    }
                    mu_next
                }
                None => least_squares_multiplier(&jac_next, &trial.gradient),
            };
            jac = jac_next;
            x = trial;
        }
        let stationarity = history.last().map_or(f64::INFINITY, |r| r.stationarity);
        self.report(status, history, x.p.as_slice(), stationarity)
    }

    /// Trust-region Gauss-Newton steps on the constraints alone until the filter admits the point.
    fn restore(&self, start: &Point, jac: &DMatrix<f64>, filter: &Filter, options: &NlpOptions) -> Option<Point> {
        let mut x = start.clone();
        let mut jac = jac.clone();
        let mut radius = options.trust_radius;
        for _ in 0..RESTORATION_STEPS {
            let theta = x.constraints.norm();
            let mut next = None;
            for _ in 0..=options.max_backtracks {
                let v = normal_step(&jac, &x.constraints, radius)?;
                if let Ok(trial) = self.point(&x.p + &v) {
                    let predicted = theta - (&x.constraints + &jac * &v).norm();
                    if theta - trial.constraints.norm() >= 0.1 * predicted && predicted > 0.0 {
                        if v.norm() >= 0.99 * radius {
                            radius *= 2.0;
                        }
                        next = Some(trial);
                        break;
                    }
                }
                radius = 0.5 * radius.min(v.norm());
            }
            let Some(trial) = next else {
                log::debug!("restoration stalled at violation {theta:.3e}");
                return None;
            };
            x = trial;
            let theta = x.constraints.norm();
            log::debug!("restoration: violation {theta:.3e} cost {:.6e}", x.cost);
            if theta <= 0.9 * start.constraints.norm() && filter.admits(theta, x.cost) {
                return Some(x);
            }
            jac = self.constraint_jacobian(x.p.as_slice()).ok()?;
        }
        None
    }

    fn report(&self, status: NlpStatus, history: Vec<NlpIterate>, p: &[f64], stationarity: f64) -> Result<NlpReport<M>> {
        let schedule = self.schedule(p)?;
        let controls = schedule.controls();
        let trajectory = propagate(self.model, &self.spec.initial, Some(&controls), self.spec.steps, self.spec.h)?;
        let full = M::difference(trajectory.terminal(), &self.spec.terminal);
        let violation = self.rows.iter().map(|&i| full[i] * full[i]).sum::<f64>().sqrt();
        let dropped_residual = (!M::REDUNDANT_ROWS.is_empty())
            .then(|| M::REDUNDANT_ROWS.iter().map(|&i| full[i].abs()).fold(0.0, f64::max));
        Ok(NlpReport {
            status,
            history,
            cost: control_cost(&controls, &self.spec.weights, self.spec.h),
            schedule,
            trajectory,
            violation,
            dropped_residual,
            stationarity,
        })
    }
}

/// Solve the maneuver with `options.knots` knots per control component.
pub fn solve_direct<M: Direct>(
    model: &M,
    spec: &ManeuverSpec<M::State<f64>>,
    options: &NlpOptions,
) -> Result<NlpReport<M>> {
    let problem = DirectProblem::new(model, spec, options.knots)?;
    let guess = problem.initial_guess(options);
    problem.solve_from(&guess, options)
}

fn lagrangian_gradient(g: &DVector<f64>, jac: &DMatrix<f64>, mu: &DVector<f64>) -> DVector<f64> {
    g + jac.transpose() * mu
}

/// `mu` minimizing `|g + A^T mu|`.
fn least_squares_multiplier(jac: &DMatrix<f64>, g: &DVector<f64>) -> DVector<f64> {
    jac.transpose()
        .svd(true, true)
        .solve(&(-g), 1e-12)
        .unwrap_or_else(|_| DVector::zeros(jac.nrows()))
}

/// Minimum-norm `d` with `A d = r`.
fn min_norm_solve(jac: &DMatrix<f64>, r: &DVector<f64>) -> Option<DVector<f64>> {
    jac.clone().svd(true, true).solve(r, 1e-12).ok()
}

/// Step and multiplier from `[B A^T; A 0] [d; mu] = [-g; -c]`.
fn solve_kkt(b: &DMatrix<f64>, jac: &DMatrix<f64>, g: &DVector<f64>, c: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
    let n = b.nrows();
    let m = jac.nrows();
    let mut k = DMatrix::zeros(n + m, n + m);
    k.view_mut((0, 0), (n, n)).copy_from(b);
    k.view_mut((n, 0), (m, n)).copy_from(jac);
    k.view_mut((0, n), (n, m)).copy_from(&jac.transpose());
    let mut rhs = DVector::zeros(n + m);
    rhs.rows_mut(0, n).copy_from(&(-g));
    rhs.rows_mut(n, m).copy_from(&(-c));
    let sol = k.lu().solve(&rhs).ok_or(Error::IllConditioned(f64::INFINITY))?;
    if sol.iter().any(|x| !x.is_finite()) {
        return Err(Error::IllConditioned(f64::INFINITY));
    }
    Ok((sol.rows(0, n).into_owned(), sol.rows(n, m).into_owned()))
}

/// Least-squares step on `A v = -c` with `|v| <= radius`, by Levenberg-Marquardt
/// damping of the minimum-norm solution. `v` lies in the row space of `A`.
fn normal_step(jac: &DMatrix<f64>, c: &DVector<f64>, radius: f64) -> Option<DVector<f64>> {
    let svd = jac.clone().svd(true, true);
    let u = svd.u.as_ref()?;
    let v_t = svd.v_t.as_ref()?;
    let coeffs = u.transpose() * c;
    let sigma = &svd.singular_values;
    let floor = 1e-12 * sigma.amax();
    let step = |nu: f64| -> DVector<f64> {
        let scaled = DVector::from_fn(sigma.len(), |i, _| {
            let s = sigma[i];
            if s <= floor && nu == 0.0 { 0.0 } else { -s * coeffs[i] / (s * s + nu) }
        });
        v_t.transpose() * scaled
    };
    let free = step(0.0);
    if free.norm() <= radius {
        return Some(free);
    }
    // |v(nu)| decreases in nu; bisect on log nu
    let (mut lo, mut hi) = (1e-16 * sigma.amax().powi(2).max(1e-300), 1e16 * sigma.amax().powi(2).max(1.0));
    for _ in 0..100 {
        let mid = (lo * hi).sqrt();
        if step(mid).norm() > radius {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(step(hi))
}

/// Composite trust-region step: the normal step takes at most 80% of the radius,
/// the null-space part minimizes the quadratic model and is cut back to the boundary.
fn composite_step(
    b: &DMatrix<f64>,
    jac: &DMatrix<f64>,
    g: &DVector<f64>,
    c: &DVector<f64>,
    radius: f64,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let v = normal_step(jac, c, 0.8 * radius).ok_or(Error::IllConditioned(f64::INFINITY))?;
    let (d, mu) = solve_kkt(b, jac, g, &(-(jac * &v)))?;
    let t = &d - &v;
    let room = (radius * radius - v.norm_squared()).max(0.0).sqrt();
    if d.norm() <= radius || t.norm() <= room {
        return Ok((d, mu));
    }
    let scale = room / t.norm();
    Ok((&v + t * scale, mu))
}

/// Relative step of the central differences in [`DirectProblem::lagrangian_hessian`].
pub const HESSIAN_STEP: f64 = 1e-5;

/// Replace each eigenvalue of the symmetric `b` by its magnitude, floored at
/// `EIGEN_FLOOR` times the largest; the SQP step is then a descent direction
/// of the l1 merit function.
fn convexify(b: DMatrix<f64>) -> DMatrix<f64> {
    let eig = b.symmetric_eigen();
    let top = eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
    let values = eig.eigenvalues.map(|l| l.abs().max(EIGEN_FLOOR * top));
    &eig.eigenvectors * DMatrix::from_diagonal(&values) * eig.eigenvectors.transpose()
}

const EIGEN_FLOOR: f64 = 1e-8;

/// Powell-damped BFGS update; keeps `b` positive definite.
fn damped_bfgs(b: &mut DMatrix<f64>, s: &DVector<f64>, y: &DVector<f64>) {
    let bs = &*b * s;
    let sbs = s.dot(&bs);
    if !(sbs > 0.0) {
        return;
    }
    let sy = s.dot(y);
    let theta = if sy >= 0.2 * sbs { 1.0 } else { 0.8 * sbs / (sbs - sy) };
    let r = y * theta + &bs * (1.0 - theta);
    let sr = s.dot(&r);
    *b += &r * r.transpose() / sr - &bs * bs.transpose() / sbs;
}
