//! Physical definitions of the four systems and their reference maneuvers.

pub mod cart;
pub mod connected;
pub mod dumbbell;
pub mod pendulum;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use cart::CartPendulumParams;
pub use connected::ConnectedParams;
pub use dumbbell::DumbbellParams;
pub use pendulum::PendulumParams;

use crate::engine::{CartPendulumState, ConnectedState, Dynamics, DumbbellState, PendulumState};
use crate::error::{Error, Result};
use crate::liegroup::{Mat3, Rotation, Vec3};
use dumbbell::REFERENCE_ORBIT_SPEED;

/// Boundary conditions, horizon and control weights of a fixed-time transfer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Serialize", deserialize = "S: Deserialize<'de>"))]
pub struct ManeuverSpec<S> {
    pub initial: S,
    pub terminal: S,
    /// Number of steps `N`; the maneuver time is `N h`.
    pub steps: usize,
    pub h: f64,
    /// Block-diagonal control weight (`W`, or `diag(W_f, W_m)` for the dumbbell).
    pub weights: DMatrix<f64>,
}

impl<S> ManeuverSpec<S> {
    pub fn horizon(&self) -> f64 {
        self.steps as f64 * self.h
    }

    /// Checks `N >= 2`, `h > 0`, the weight shape and positive definiteness, and
    /// that every boundary rotation is in SO(3).
    pub fn validate<M: Dynamics<State<f64> = S>>(&self) -> Result<()> {
        if self.steps < 2 {
            return Err(Error::InvalidInput(format!(
                "maneuver needs at least 2 steps, got {}",
                self.steps
            )));
        }
        if !(self.h > 0.0) || !self.h.is_finite() {
            return Err(Error::InvalidInput(format!("time step must be positive, got {}", self.h)));
        }
        check_weights(&self.weights, M::CONTROLS)?;
        for r in M::rotations(&self.initial).into_iter().chain(M::rotations(&self.terminal)) {
            Rotation::new(r)?;
        }
        Ok(())
    }
}

pub fn check_weights(w: &DMatrix<f64>, dim: usize) -> Result<()> {
    if w.nrows() != dim || w.ncols() != dim {
        return Err(Error::InvalidInput(format!(
            "weight matrix must be {dim}x{dim}, got {}x{}",
            w.nrows(),
            w.ncols()
        )));
    }
    let asym = (w - w.transpose()).norm();
    if !(asym <= 1e-10) {
        return Err(Error::NotSymmetric(asym));
    }
    if w.clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite("control weight".into()));
    }
    Ok(())
}

/// Which of the four systems a scenario describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Dumbbell,
    Pendulum,
    CartPendulum,
    Connected,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Dumbbell => "dumbbell",
            ModelKind::Pendulum => "pendulum",
            ModelKind::CartPendulum => "cart-pendulum",
            ModelKind::Connected => "connected",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dumbbell" => Ok(ModelKind::Dumbbell),
            "pendulum" => Ok(ModelKind::Pendulum),
            "cart-pendulum" => Ok(ModelKind::CartPendulum),
            "connected" => Ok(ModelKind::Connected),
            other => Err(Error::Config(format!("unknown model id {other:?}"))),
        }
    }
}

/// A model with its parameters and maneuver.
#[derive(Debug, Clone, PartialEq)]
pub enum Scenario {
    Dumbbell(DumbbellParams, ManeuverSpec<DumbbellState>),
    Pendulum(PendulumParams, ManeuverSpec<PendulumState>),
    CartPendulum(CartPendulumParams, ManeuverSpec<CartPendulumState>),
    Connected(ConnectedParams, ManeuverSpec<ConnectedState>),
}

impl Scenario {
    pub fn kind(&self) -> ModelKind {
        match self {
            Scenario::Dumbbell(..) => ModelKind::Dumbbell,
            Scenario::Pendulum(..) => ModelKind::Pendulum,
            Scenario::CartPendulum(..) => ModelKind::CartPendulum,
            Scenario::Connected(..) => ModelKind::Connected,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Scenario::Dumbbell(p, s) => {
                p.validate()?;
                s.validate::<DumbbellParams>()
            }
            Scenario::Pendulum(p, s) => {
                p.validate()?;
                s.validate::<PendulumParams>()
            }
            Scenario::CartPendulum(p, s) => {
                p.validate()?;
                s.validate::<CartPendulumParams>()
            }
            Scenario::Connected(p, s) => {
                p.validate()?;
                s.validate::<ConnectedParams>()
            }
        }
    }
}

/// Orbit-transfer maneuver: a quarter of the reference circular orbit that
/// raises the inclination by 60 degrees. Body axes are (velocity, -radial, normal).
pub fn dumbbell_maneuver(steps: usize) -> ManeuverSpec<DumbbellState> {
    let w = REFERENCE_ORBIT_SPEED;
    let s2 = std::f64::consts::SQRT_2;
    let s3 = 3f64.sqrt();
    let x_f = Vec3::new(-1.0 / (2.0 * s2), 1.0 / (2.0 * s2), s3 / 2.0);
    let v_hat = Vec3::new(-1.0 / s2, -1.0 / s2, 0.0);
    let n_hat = x_f.cross(&v_hat);
    let r_f = Mat3::from_columns(&[v_hat, -x_f, n_hat]);
    let horizon = 0.25 * 2.0 * std::f64::consts::PI / w;
    ManeuverSpec {
        initial: DumbbellState::new(
            Mat3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 0.0, w),
            Vec3::new(0.0, w, 0.0),
        ),
        terminal: DumbbellState::new(r_f, x_f, Vec3::new(0.0, 0.0, w), v_hat * w),
        steps,
        h: horizon / steps as f64,
        weights: DMatrix::identity(6, 6),
    }
}

/// Default step count for the orbit transfer.
pub const DUMBBELL_STEPS: usize = 500;

/// `diag(I, J^-1)`: prices a control moment by the angular acceleration it
/// produces, so a small dumbbell is not steered through nearly free moments.
pub fn inertia_normalized_weights(p: &DumbbellParams) -> Result<DMatrix<f64>> {
    let j_inv = p
        .inertia
        .try_inverse()
        .ok_or_else(|| Error::NotPositiveDefinite("dumbbell inertia".into()))?;
    let mut w = DMatrix::identity(6, 6);
    w.view_mut((3, 3), (3, 3)).copy_from(&j_inv);
    Ok(w)
}

/// Orbit transfer with the default dumbbell and inertia-normalized moment weights.
pub fn dumbbell_scenario() -> Scenario {
    let p = DumbbellParams::default();
    let mut spec = dumbbell_maneuver(DUMBBELL_STEPS);
    spec.weights = inertia_normalized_weights(&p).expect("default inertia is invertible");
    Scenario::Dumbbell(p, spec)
}

/// Half turn about the vertical between hanging equilibria in 1 s.
pub fn pendulum_maneuver() -> ManeuverSpec<PendulumState> {
    ManeuverSpec {
        initial: PendulumState::new(Mat3::identity(), Vec3::zeros()),
        terminal: PendulumState::new(Mat3::from_diagonal(&Vec3::new(-1.0, -1.0, 1.0)), Vec3::zeros()),
        steps: 1000,
        h: 0.001,
        weights: DMatrix::identity(3, 3),
    }
}

/// Rest-to-rest half turn of the pendulum about the vertical with the cart
/// returning to the origin, in 2 s.
pub fn cart_maneuver() -> ManeuverSpec<CartPendulumState> {
    ManeuverSpec {
        initial: CartPendulumState::rest(Mat3::identity()),
        terminal: CartPendulumState::rest(Mat3::from_diagonal(&Vec3::new(-1.0, -1.0, 1.0))),
        steps: 200,
        h: 0.01,
        weights: DMatrix::identity(2, 2),
    }
}

/// Rest-to-rest half turn of both bodies about the x axis, in 4 s.
pub fn connected_maneuver() -> ManeuverSpec<ConnectedState> {
    let r_f = Mat3::from_diagonal(&Vec3::new(1.0, -1.0, -1.0));
    ManeuverSpec {
        initial: ConnectedState::rest(Mat3::identity(), Mat3::identity()),
        terminal: ConnectedState::rest(r_f, r_f),
        steps: 400,
        h: 0.01,
        weights: DMatrix::identity(3, 3),
    }
}

/// The four reference maneuvers with default parameters.
pub fn paper_scenarios() -> Vec<Scenario> {
    vec![
        dumbbell_scenario(),
        Scenario::Pendulum(PendulumParams::default(), pendulum_maneuver()),
        Scenario::CartPendulum(CartPendulumParams::default(), cart_maneuver()),
        Scenario::Connected(ConnectedParams::default(), connected_maneuver()),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::liegroup::orthogonality_defect;

    #[test]
    fn dumbbell_boundary_values() {
        let s = dumbbell_maneuver(DUMBBELL_STEPS);
        let xf = s.terminal.x;
        for (a, b) in xf.iter().zip([-0.3536, 0.3536, 0.8660]) {
            assert!((a - b).abs() < 5e-5);
        }
        let rf = s.terminal.r;
        let printed = Mat3::new(
            -0.7071, 0.3535, 0.6123, -0.7071, -0.3535, -0.6123, 0.0, -0.8660, 0.5,
        );
        assert!((rf - printed).amax() < 2e-4);
        assert!(orthogonality_defect(&rf) < 1e-15);
        for (a, b) in s.terminal.v.iter().zip([-0.6954, -0.6954, 0.0]) {
            assert!((a - b).abs() < 1e-4);
        }
        // inclination of the final orbit plane is 60 degrees
        let normal = xf.cross(&s.terminal.v).normalize();
        assert!((normal[2] - 0.5).abs() < 1e-15);
        let quarter = std::f64::consts::FRAC_PI_2 / REFERENCE_ORBIT_SPEED;
        assert!((s.horizon() - quarter).abs() < 1e-14);
    }

    #[test]
    fn pendulum_and_connected_boundary_values() {
        let s = pendulum_maneuver();
        assert_eq!(s.terminal.r, Mat3::from_diagonal(&Vec3::new(-1.0, -1.0, 1.0)));
        assert_eq!(s.terminal.omega, Vec3::zeros());
        assert!((s.horizon() - 1.0).abs() < 1e-12);
        let c = ConnectedParams::default();
        assert_eq!(c.inertias[0].row(0).iter().copied().collect::<Vec<_>>(), vec![0.18, 0.32, 0.32]);
        assert!((cart_maneuver().horizon() - 2.0).abs() < 1e-12);
        assert!((connected_maneuver().horizon() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn normalized_weights_invert_inertia() {
        let p = DumbbellParams::default();
        let w = inertia_normalized_weights(&p).unwrap();
        let block = w.view((3, 3), (3, 3)).into_owned();
        let j = DMatrix::from_iterator(3, 3, p.inertia.iter().copied());
        assert!((block * j - DMatrix::<f64>::identity(3, 3)).amax() < 1e-12);
        assert_eq!(w.view((0, 0), (3, 3)).into_owned(), DMatrix::<f64>::identity(3, 3));
    }

    #[test]
    fn all_scenarios_validate() {
        for s in paper_scenarios() {
            s.validate().unwrap();
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut s = pendulum_maneuver();
        s.terminal.r = Mat3::from_diagonal(&Vec3::new(-1.0, 1.0, 1.0));
        assert!(s.validate::<PendulumParams>().is_err());
        let mut s = pendulum_maneuver();
        s.h = 0.0;
        assert!(s.validate::<PendulumParams>().is_err());
        let mut s = pendulum_maneuver();
        s.weights[(0, 0)] = -1.0;
        assert!(s.validate::<PendulumParams>().is_err());
    }
}
