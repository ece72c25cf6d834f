//! Natural cubic splines through uniformly spaced knots.
//!
//! Interpolation is linear in the knot values, so a schedule is stored as a
//! basis matrix mapping knots to the controls at the step times. Controls on
//! dual numbers come out of the same matrix.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Second derivatives at the knots of the natural spline through `y` with spacing `dt`.
fn second_derivatives(y: &[f64], dt: f64) -> DVector<f64> {
    let m = y.len();
    let mut sigma = DVector::zeros(m);
    if m < 3 {
        return sigma;
    }
    let n = m - 2;
    let mut a = DMatrix::zeros(n, n);
    let mut rhs = DVector::zeros(n);
    for i in 0..n {
        a[(i, i)] = 4.0;
        if i > 0 {
            a[(i, i - 1)] = 1.0;
        }
        if i + 1 < n {
            a[(i, i + 1)] = 1.0;
        }
        rhs[i] = 6.0 * (y[i] - 2.0 * y[i + 1] + y[i + 2]) / (dt * dt);
    }
    // strictly diagonally dominant, so LU cannot fail
    let inner = a.lu().solve(&rhs).expect("natural spline system is nonsingular");
    sigma.rows_mut(1, n).copy_from(&inner);
    sigma
}

/// Value at `t` of the natural spline through `y` on knots `0, dt, 2 dt, ...`.
fn interpolate(y: &[f64], sigma: &DVector<f64>, dt: f64, t: f64) -> f64 {
    let last = y.len() - 1;
    let i = ((t / dt).floor().max(0.0) as usize).min(last - 1);
    let a = (t - i as f64 * dt) / dt;
    let b = 1.0 - a;
    b * y[i] + a * y[i + 1] + ((b * b * b - b) * sigma[i] + (a * a * a - a) * sigma[i + 1]) * dt * dt / 6.0
}

/// Piecewise-cubic controls on `[0, N h]`, one natural spline per component.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlSchedule {
    pub knot_times: Vec<f64>,
    /// Knot values, one list per control component.
    pub knots: Vec<Vec<f64>>,
    pub steps: usize,
    pub h: f64,
    /// `basis[(k, j)]` is the weight of knot `j` in the control at `t_{k+1}`.
    #[serde(skip)]
    basis: DMatrix<f64>,
}

impl ControlSchedule {
    pub fn new(knots: Vec<Vec<f64>>, steps: usize, h: f64) -> Result<Self> {
        let count = knots.first().map_or(0, Vec::len);
        if count < 2 {
            return Err(Error::TooFewKnots(count));
        }
        if knots.iter().any(|k| k.len() != count) {
            return Err(Error::InvalidInput("every control component needs the same knot count".into()));
        }
        if knots.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("knot values must be finite".into()));
        }
        if steps == 0 || !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidInput(format!("schedule needs steps >= 1 and h > 0, got {steps} and {h}")));
        }
        let basis = spline_basis(count, steps, h);
        let horizon = steps as f64 * h;
        let dt = horizon / (count - 1) as f64;
        Ok(ControlSchedule {
            knot_times: (0..count).map(|j| j as f64 * dt).collect(),
            knots,
            steps,
            h,
            basis,
        })
    }

    /// All-zero knots.
    pub fn zero(components: usize, count: usize, steps: usize, h: f64) -> Result<Self> {
        ControlSchedule::new(vec![vec![0.0; count]; components], steps, h)
    }

    /// Rebuild from a stacked decision vector `[component 0 knots, component 1 knots, ...]`.
    pub fn from_parameters(params: &[f64], components: usize, steps: usize, h: f64) -> Result<Self> {
        if components == 0 || params.len() % components != 0 {
            return Err(Error::InvalidInput(format!(
                "{} parameters do not split into {components} components",
                params.len()
            )));
        }
        let count = params.len() / components;
        ControlSchedule::new(params.chunks(count).map(<[f64]>::to_vec).collect(), steps, h)
    }

    pub fn parameters(&self) -> Vec<f64> {
        self.knots.iter().flatten().copied().collect()
    }

    pub fn knot_count(&self) -> usize {
        self.knot_times.len()
    }

    pub fn components(&self) -> usize {
        self.knots.len()
    }

    pub fn horizon(&self) -> f64 {
        self.steps as f64 * self.h
    }

    /// Control at an arbitrary time in `[0, N h]`.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let dt = self.horizon() / (self.knot_count() - 1) as f64;
        let t = t.clamp(0.0, self.horizon());
        self.knots
            .iter()
            .map(|y| interpolate(y, &second_derivatives(y, dt), dt, t))
            .collect()
    }

    /// Controls `u_1 .. u_N` at the step times.
    pub fn controls(&self) -> Vec<Vec<f64>> {
        let params = self.parameters();
        controls_from(&self.basis, &params, self.components())
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }
}

/// `basis[(k, j)]`: value at `t_{k+1} = (k+1) h` of the natural spline through the `j`-th unit vector.
pub fn spline_basis(count: usize, steps: usize, h: f64) -> DMatrix<f64> {
    let dt = steps as f64 * h / (count - 1) as f64;
    let mut basis = DMatrix::zeros(steps, count);
    for j in 0..count {
        let mut y = vec![0.0; count];
        y[j] = 1.0;
        let sigma = second_derivatives(&y, dt);
        for k in 0..steps {
            basis[(k, j)] = interpolate(&y, &sigma, dt, (k + 1) as f64 * h);
        }
    }
    basis
}

/// Controls at the step times from stacked knot parameters.
pub fn controls_from<T: Real>(basis: &DMatrix<f64>, params: &[T], components: usize) -> Vec<Vec<T>> {
    let count = basis.ncols();
    (0..basis.nrows())
        .map(|k| {
            (0..components)
                .map(|c| {
                    params[c * count..(c + 1) * count]
                        .iter()
                        .enumerate()
                        .fold(T::zero(), |acc, (j, &p)| acc + p * T::lit(basis[(k, j)]))
                })
                .collect()
        })
        .collect()
}
