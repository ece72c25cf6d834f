//! Scalar abstraction shared by the integrators.
//!
//! Everything that touches the discrete flow is generic over [`Real`] so the
//! same code runs on plain `f64` and on forward-mode dual numbers. The dual
//! path is what produces exact linearizations and sensitivities.

use nalgebra::{Matrix3, RealField, Vector3};
use num_dual::Dual64;

pub use num_dual::Dual64 as Dual;

pub trait Real: RealField + Copy + Send + Sync {
    /// Lift a constant.
    fn lit(x: f64) -> Self;
    /// Real (primal) part.
    fn re(&self) -> f64;
    /// Largest magnitude over all parts; used by convergence tests so that
    /// derivative parts converge together with the primal part.
    fn mag(&self) -> f64;
}

impl Real for f64 {
    #[inline]
    fn lit(x: f64) -> Self {
        x
    }
    #[inline]
    fn re(&self) -> f64 {
        *self
    }
    #[inline]
    fn mag(&self) -> f64 {
        self.abs()
    }
}

impl Real for Dual64 {
    #[inline]
    fn lit(x: f64) -> Self {
        Dual64::from_re(x)
    }
    #[inline]
    fn re(&self) -> f64 {
        self.re
    }
    #[inline]
    fn mag(&self) -> f64 {
        self.re.abs().max(self.eps.abs())
    }
}

pub fn lift3<T: Real>(v: &Vector3<f64>) -> Vector3<T> {
    v.map(T::lit)
}

pub fn lift33<T: Real>(m: &Matrix3<f64>) -> Matrix3<T> {
    m.map(T::lit)
}

pub fn re3<T: Real>(v: &Vector3<T>) -> Vector3<f64> {
    v.map(|x| x.re())
}

pub fn re33<T: Real>(m: &Matrix3<T>) -> Matrix3<f64> {
    m.map(|x| x.re())
}

/// Derivative part of a dual vector.
pub fn eps3(v: &Vector3<Dual64>) -> Vector3<f64> {
    v.map(|x| x.eps)
}

pub fn eps33(m: &Matrix3<Dual64>) -> Matrix3<f64> {
    m.map(|x| x.eps)
}

/// Dual vector with primal `re` and tangent `eps`.
pub fn seed3(re: &Vector3<f64>, eps: &Vector3<f64>) -> Vector3<Dual64> {
    Vector3::from_fn(|i, _| Dual64::new(re[i], eps[i]))
}

pub fn seed33(re: &Matrix3<f64>, eps: &Matrix3<f64>) -> Matrix3<Dual64> {
    Matrix3::from_fn(|i, j| Dual64::new(re[(i, j)], eps[(i, j)]))
}

pub fn max_mag3<T: Real>(v: &Vector3<T>) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.mag()))
}
