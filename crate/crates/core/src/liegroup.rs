//! SO(3) and SE(3) primitives: hat/vee, exponential and logarithm, group
//! composition and a few structure checks.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Rodrigues coefficients switch to their Taylor series below this angle.
pub const EXP_SERIES_THRESHOLD: f64 = 1e-8;
/// Tolerance accepted by [`vee`] on the symmetric part of its input.
pub const SKEW_TOLERANCE: f64 = 1e-10;
pub const ORTHOGONALITY_TOLERANCE: f64 = 1e-13;
pub const DETERMINANT_TOLERANCE: f64 = 1e-12;

/// Cross-product matrix: `hat(v) * w == v.cross(&w)`.
#[inline]
pub fn hat<T: Real>(v: &Vector3<T>) -> Matrix3<T> {
    let z = T::zero();
    Matrix3::new(z, -v[2], v[1], v[2], z, -v[0], -v[1], v[0], z)
}

/// Reads the axial vector of the skew part `(m - m^T) / 2` without checking.
#[inline]
pub fn skew_vee<T: Real>(m: &Matrix3<T>) -> Vector3<T> {
    let half = T::lit(0.5);
    Vector3::new(
        (m[(2, 1)] - m[(1, 2)]) * half,
        (m[(0, 2)] - m[(2, 0)]) * half,
        (m[(1, 0)] - m[(0, 1)]) * half,
    )
}

/// Inverse of [`hat`]. Accepts matrices that are skew up to [`SKEW_TOLERANCE`].
pub fn vee(m: &Mat3) -> Result<Vec3> {
    let sym = (m + m.transpose()).norm();
    if !(sym <= SKEW_TOLERANCE) {
        return Err(Error::NonSkewInput(sym));
    }
    Ok(skew_vee(m))
}

/// Exponential map so(3) -> SO(3) (Rodrigues).
pub fn exp_so3<T: Real>(v: &Vector3<T>) -> Matrix3<T> {
    let theta2 = v.dot(v);
    let k = hat(v);
    let (a, b) = if theta2.re() < EXP_SERIES_THRESHOLD * EXP_SERIES_THRESHOLD {
        (
            T::one() - theta2 / T::lit(6.0),
            T::lit(0.5) - theta2 / T::lit(24.0),
        )
    } else {
        let theta = theta2.sqrt();
        let half_sin = (theta * T::lit(0.5)).sin();
        (
            theta.sin() / theta,
            T::lit(2.0) * half_sin * half_sin / theta2,
        )
    };
    Matrix3::identity() + k * a + k * k * b
}

/// Logarithm SO(3) -> so(3), returning the rotation vector with angle in `[0, pi]`.
///
/// At a half turn the axis comes from the diagonal of `(R + R^T)/2`; its sign
/// follows the skew part when that is informative, otherwise the first nonzero
/// component is made positive.
pub fn log_so3<T: Real>(r: &Matrix3<T>) -> Vector3<T> {
    let s_vec = skew_vee(r);
    let c = (r.trace() - T::one()) * T::lit(0.5);
    let s2 = s_vec.dot(&s_vec);
    if c.re() > 0.0 {
        let ratio = if s2.re() < 1e-8 {
            T::one() + s2 / T::lit(6.0) + s2 * s2 * T::lit(3.0 / 40.0)
        } else {
            let s = s2.sqrt();
            s.atan2(c) / s
        };
        return s_vec * ratio;
    }
    let s = s2.sqrt();
    let theta = s.atan2(c);
    let one_minus_c = T::one() - c;
    let sym = (r + r.transpose()) * T::lit(0.5);
    let nn = (sym - Matrix3::identity() * c) / one_minus_c;
    let mut i = 0;
    for j in 1..3 {
        if nn[(j, j)].re() > nn[(i, i)].re() {
            i = j;
        }
    }
    let ni = nn[(i, i)].max(T::zero()).sqrt();
    let mut n = Vector3::from_fn(|j, _| if j == i { ni } else { nn[(i, j)] / ni });
    let align = n.dot(&s_vec).re();
    if align.abs() > 1e-14 {
        if align < 0.0 {
            n = -n;
        }
    } else if let Some(first) = n.iter().find(|x| x.re().abs() > 1e-12) {
        if first.re() < 0.0 {
            n = -n;
        }
    }
    n * theta
}

/// `|R^T R - I|_F`.
pub fn orthogonality_defect<T: Real>(r: &Matrix3<T>) -> f64 {
    let e = r.transpose() * r - Matrix3::identity();
    e.iter().map(|x| x.re() * x.re()).sum::<f64>().sqrt()
}

/// A validated rotation matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Mat3", into = "Mat3")]
pub struct Rotation(Mat3);

impl Rotation {
    pub fn new(m: Mat3) -> Result<Self> {
        Self::with_tolerance(m, ORTHOGONALITY_TOLERANCE)
    }

    /// Accepts `m` when `|m^T m - I|_F <= tol` and `det m` is within
    /// [`DETERMINANT_TOLERANCE`] (or `tol`, whichever is larger) of one.
    pub fn with_tolerance(m: Mat3, tol: f64) -> Result<Self> {
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidRotation("non-finite entry".into()));
        }
        let defect = orthogonality_defect(&m);
        if defect > tol {
            return Err(Error::InvalidRotation(format!(
                "|R^T R - I| = {defect:e} exceeds {tol:e}"
            )));
        }
        let det = m.determinant();
        if (det - 1.0).abs() > DETERMINANT_TOLERANCE.max(tol) {
            return Err(Error::InvalidRotation(format!("det R = {det}")));
        }
        Ok(Rotation(m))
    }

    /// Wraps a matrix produced by group operations without re-validating it.
    pub(crate) fn from_matrix_unchecked(m: Mat3) -> Self {
        Rotation(m)
    }

    pub fn identity() -> Self {
        Rotation(Mat3::identity())
    }

    pub fn exp(v: &Vec3) -> Self {
        Rotation(exp_so3(v))
    }

    pub fn log(&self) -> Vec3 {
        log_so3(&self.0)
    }

    pub fn from_diagonal(d: [f64; 3]) -> Result<Self> {
        Self::new(Mat3::from_diagonal(&Vec3::new(d[0], d[1], d[2])))
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Rotation(self.0.transpose())
    }

    pub fn compose(&self, other: &Rotation) -> Self {
        Rotation(self.0 * other.0)
    }

    pub fn defect(&self) -> f64 {
        orthogonality_defect(&self.0)
    }
}

impl TryFrom<Mat3> for Rotation {
    type Error = Error;
    fn try_from(m: Mat3) -> Result<Self> {
        Rotation::new(m)
    }
}

impl From<Rotation> for Mat3 {
    fn from(r: Rotation) -> Mat3 {
        r.0
    }
}

/// Element of SE(3) acting as `(R, x) . (F, Y) = (R F, x + R Y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Se3Element {
    pub rotation: Rotation,
    pub translation: Vec3,
}

impl Se3Element {
    pub fn new(rotation: Rotation, translation: Vec3) -> Self {
        Se3Element {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Se3Element::new(Rotation::identity(), Vec3::zeros())
    }
}

pub fn se3_compose(g: &Se3Element, f: &Se3Element) -> Se3Element {
    Se3Element {
        rotation: g.rotation.compose(&f.rotation),
        translation: g.translation + g.rotation.matrix() * f.translation,
    }
}

/// `J_d = tr(J)/2 I - J`, the inertia that appears in the implicit attitude update.
pub fn nonstandard_inertia(j: &Mat3) -> Result<Mat3> {
    let asym = (j - j.transpose()).norm();
    if asym > 1e-10 {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(Mat3::identity() * (0.5 * j.trace()) - j)
}

/// Inverse of [`nonstandard_inertia`]: `J = tr(J_d) I - J_d`.
pub fn inertia_from_nonstandard(j_d: &Mat3) -> Mat3 {
    Mat3::identity() * j_d.trace() - j_d
}

/// Checks symmetry and positive definiteness (Cholesky).
pub fn check_spd(m: &Mat3, name: &str) -> Result<()> {
    let asym = (m - m.transpose()).norm();
    if asym > 1e-10 {
        return Err(Error::NotSymmetric(asym));
    }
    if m.iter().any(|x| !x.is_finite()) || m.cholesky().is_none() {
        return Err(Error::NotPositiveDefinite(name.to_string()));
    }
    Ok(())
}
