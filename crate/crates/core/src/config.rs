//! Scenario files.
//!
//! A scenario is a TOML document naming a model, a solver and a maneuver.
//! Boundary states are tables whose keys follow the state fields of the model;
//! omitted entries are zero (identity for rotations). Matrices are written as
//! 9 row-major entries. Rotations may instead be given as `{ axis, angle }`.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Deserialize;

use crate::direct::{NlpHessian, NlpOptions};
use crate::engine::{CartPendulumState, ConnectedState, DumbbellState, PendulumState};
use crate::error::{Error, Result};
use crate::indirect::ShootingOptions;
use crate::liegroup::{exp_so3, orthogonality_defect, Mat3, Rotation, Vec3};
use crate::models::{
    inertia_normalized_weights, CartPendulumParams, ConnectedParams, DumbbellParams, ManeuverSpec, ModelKind,
    PendulumParams, Scenario,
};

/// Largest `|R^T R - I|_F` of an entered rotation that is silently reprojected.
pub const ROTATION_INPUT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    #[default]
    Simulate,
    Indirect,
    Direct,
}

impl SolverKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SolverKind::Simulate => "simulate",
            SolverKind::Indirect => "indirect",
            SolverKind::Direct => "direct",
        }
    }
}

impl std::str::FromStr for SolverKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simulate" => Ok(SolverKind::Simulate),
            "indirect" => Ok(SolverKind::Indirect),
            "direct" => Ok(SolverKind::Direct),
            other => Err(Error::Config(format!("unknown solver {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: Option<String>,
    pub description: Option<String>,
    pub model: String,
    #[serde(default)]
    pub solver: SolverKind,
    #[serde(default)]
    pub seed: u64,
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub params: toml::Table,
    pub maneuver: ManeuverConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub indirect: IndirectConfig,
    #[serde(default)]
    pub direct: DirectConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManeuverConfig {
    pub steps: Option<usize>,
    pub h: Option<f64>,
    /// Maneuver time; with `h` it fixes `steps = horizon / h`, which must be integral.
    pub horizon: Option<f64>,
    /// `"identity"`, `"inertia-normalized"` (dumbbell) or a row-major matrix.
    pub weights: Option<WeightsInput>,
    #[serde(default)]
    pub initial: toml::Table,
    #[serde(default)]
    pub terminal: toml::Table,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum WeightsInput {
    Named(String),
    Matrix(Vec<f64>),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    /// Constant control held over every step; zero when absent.
    pub control: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IndirectConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub max_backtracks: usize,
    pub condition_limit: f64,
    /// Initial multipliers uniform in `[-scale, scale]` from the seed; zero gives `lambda_0 = 0`.
    pub initial_scale: f64,
}

impl Default for IndirectConfig {
    fn default() -> Self {
        let o = ShootingOptions::default();
        IndirectConfig {
            tolerance: o.tolerance,
            max_iterations: o.max_iterations,
            max_backtracks: o.max_backtracks,
            condition_limit: o.condition_limit,
            initial_scale: 0.0,
        }
    }
}

impl IndirectConfig {
    pub fn options(&self) -> ShootingOptions {
        ShootingOptions {
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
            max_backtracks: self.max_backtracks,
            condition_limit: self.condition_limit,
            ..ShootingOptions::default()
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DirectConfig {
    pub knots: usize,
    pub tolerance: f64,
    pub stationarity: f64,
    pub max_iterations: usize,
    pub max_backtracks: usize,
    pub initial_scale: f64,
    pub hessian: NlpHessian,
    pub trust_radius: f64,
}

impl Default for DirectConfig {
    fn default() -> Self {
        let o = NlpOptions::default();
        DirectConfig {
            knots: o.knots,
            tolerance: o.tolerance,
            stationarity: o.stationarity,
            max_iterations: o.max_iterations,
            max_backtracks: o.max_backtracks,
            initial_scale: o.initial_scale,
            hessian: o.hessian,
            trust_radius: o.trust_radius,
        }
    }
}

impl DirectConfig {
    pub fn options(&self, seed: u64) -> NlpOptions {
        NlpOptions {
            knots: self.knots,
            tolerance: self.tolerance,
            stationarity: self.stationarity,
            max_iterations: self.max_iterations,
            max_backtracks: self.max_backtracks,
            initial_scale: self.initial_scale,
            seed,
            hessian: self.hessian,
            trust_radius: self.trust_radius,
            ..NlpOptions::default()
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum RotationInput {
    Matrix(Vec<f64>),
    AxisAngle { axis: [f64; 3], angle: f64 },
}

impl RotationInput {
    fn resolve(&self) -> Result<Mat3> {
        match self {
            RotationInput::Matrix(entries) => {
                let m = mat3(entries, "rotation")?;
                let defect = orthogonality_defect(&m);
                if !(defect <= ROTATION_INPUT_TOLERANCE) {
                    return Err(Error::InvalidRotation(format!(
                        "|R^T R - I| = {defect:e} exceeds the input tolerance {ROTATION_INPUT_TOLERANCE:e}"
                    )));
                }
                if !(m.determinant() > 0.0) {
                    return Err(Error::InvalidRotation(format!("det R = {}", m.determinant())));
                }
                // nearest rotation; moves the entries by at most the defect
                let svd = m.svd(true, true);
                let projected = svd.u.expect("u requested") * svd.v_t.expect("v_t requested");
                Ok(*Rotation::new(projected)?.matrix())
            }
            RotationInput::AxisAngle { axis, angle } => {
                let a = Vec3::from_column_slice(axis);
                let n = a.norm();
                if !(n > 0.0) || !n.is_finite() || !angle.is_finite() {
                    return Err(Error::InvalidRotation("axis-angle needs a finite nonzero axis".into()));
                }
                Ok(exp_so3(&(a * (angle / n))))
            }
        }
    }
}

fn mat3(entries: &[f64], what: &str) -> Result<Mat3> {
    if entries.len() != 9 {
        return Err(Error::Config(format!("{what} needs 9 row-major entries, got {}", entries.len())));
    }
    if entries.iter().any(|x| !x.is_finite()) {
        return Err(Error::Config(format!("{what} has a non-finite entry")));
    }
    Ok(Mat3::from_row_slice(entries))
}

fn vec3(v: [f64; 3]) -> Vec3 {
    Vec3::from_column_slice(&v)
}

fn identity_input() -> RotationInput {
    RotationInput::Matrix(vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0])
}

fn parse_table<T: for<'de> Deserialize<'de>>(table: &toml::Table, what: &str) -> Result<T> {
    toml::Value::Table(table.clone())
        .try_into()
        .map_err(|e| Error::Config(format!("{what}: {e}")))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PendulumStateInput {
    #[serde(default = "identity_input")]
    r: RotationInput,
    #[serde(default)]
    omega: [f64; 3],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DumbbellStateInput {
    #[serde(default = "identity_input")]
    r: RotationInput,
    #[serde(default)]
    x: [f64; 3],
    #[serde(default)]
    omega: [f64; 3],
    #[serde(default)]
    v: [f64; 3],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CartStateInput {
    #[serde(default = "identity_input")]
    r: RotationInput,
    #[serde(default)]
    x: f64,
    #[serde(default)]
    y: f64,
    #[serde(default)]
    omega: [f64; 3],
    #[serde(default)]
    xdot: f64,
    #[serde(default)]
    ydot: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConnectedStateInput {
    #[serde(default = "identity_input")]
    r1: RotationInput,
    #[serde(default = "identity_input")]
    r2: RotationInput,
    #[serde(default)]
    omega1: [f64; 3],
    #[serde(default)]
    omega2: [f64; 3],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PendulumParamsInput {
    mass: Option<f64>,
    inertia: Option<Vec<f64>>,
    offset: Option<[f64; 3]>,
    gravity: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DumbbellParamsInput {
    gm: Option<f64>,
    mass: Option<f64>,
    inertia: Option<Vec<f64>>,
    offsets: Option<[[f64; 3]; 2]>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CartParamsInput {
    cart_mass: Option<f64>,
    mass: Option<f64>,
    inertia: Option<Vec<f64>>,
    offset: Option<[f64; 3]>,
    gravity: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConnectedParamsInput {
    masses: Option<[f64; 2]>,
    inertias: Option<[Vec<f64>; 2]>,
    offsets: Option<[[f64; 3]; 2]>,
}

/// Collects every problem instead of stopping at the first.
#[derive(Default)]
struct Problems(Vec<Error>);

impl Problems {
    fn take<T>(&mut self, r: Result<T>) -> Option<T> {
        r.map_err(|e| self.0.push(e)).ok()
    }
}

/// Fully resolved scenario, ready to run.
#[derive(Debug, Clone)]
pub struct ResolvedScenario {
    pub name: String,
    pub scenario: Scenario,
    pub solver: SolverKind,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub simulate: SimulateConfig,
    pub indirect: IndirectConfig,
    pub direct: DirectConfig,
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Every violated invariant; empty when the scenario can run.
    pub fn problems(&self) -> Vec<Error> {
        match self.resolve_all() {
            Ok(_) => Vec::new(),
            Err(p) => p,
        }
    }

    /// The runnable scenario, or the first problem found.
    pub fn resolve(&self) -> Result<ResolvedScenario> {
        self.resolve_all().map_err(|mut p| p.remove(0))
    }

    fn resolve_all(&self) -> std::result::Result<ResolvedScenario, Vec<Error>> {
        let mut problems = Problems::default();
        let kind: Option<ModelKind> = problems.take(self.model.parse());
        let grid = problems.take(self.grid());
        let scenario = match (kind, grid) {
            (Some(kind), Some((steps, h))) => self.scenario(kind, steps, h, &mut problems),
            _ => None,
        };
        if let Some(s) = &scenario {
            let supported = match self.solver {
                SolverKind::Indirect => matches!(s.kind(), ModelKind::Dumbbell | ModelKind::Pendulum),
                _ => true,
            };
            if !supported {
                problems.0.push(Error::Config(format!(
                    "the indirect solver supports the dumbbell and pendulum models, not {}",
                    s.kind().as_str()
                )));
            }
            if let Some(u) = &self.simulate.control {
                if u.len() != controls_of(s.kind()) || u.iter().any(|x| !x.is_finite()) {
                    problems.0.push(Error::Config(format!(
                        "simulate.control needs {} finite entries",
                        controls_of(s.kind())
                    )));
                }
            }
        }
        if self.direct.knots < 2 {
            problems.0.push(Error::TooFewKnots(self.direct.knots));
        }
        for (what, v) in [
            ("indirect.tolerance", self.indirect.tolerance),
            ("direct.tolerance", self.direct.tolerance),
            ("direct.stationarity", self.direct.stationarity),
            ("direct.trust_radius", self.direct.trust_radius),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                problems.0.push(Error::Config(format!("{what} must be positive, got {v}")));
            }
        }
        for (what, v) in [("indirect.initial_scale", self.indirect.initial_scale), ("direct.initial_scale", self.direct.initial_scale)] {
            if !(v >= 0.0) || !v.is_finite() {
                problems.0.push(Error::Config(format!("{what} must be nonnegative, got {v}")));
            }
        }
        match scenario {
            Some(scenario) if problems.0.is_empty() => Ok(ResolvedScenario {
                name: self.name.clone().unwrap_or_else(|| self.model.clone()),
                scenario,
                solver: self.solver,
                seed: self.seed,
                output: self.output.clone(),
                simulate: self.simulate.clone(),
                indirect: self.indirect.clone(),
                direct: self.direct.clone(),
            }),
            _ => Err(problems.0),
        }
    }

    /// `(N, h)` from any two of steps, h and horizon.
    fn grid(&self) -> Result<(usize, f64)> {
        let m = &self.maneuver;
        let (steps, h) = match (m.steps, m.h, m.horizon) {
            (Some(n), Some(h), None) => (n, h),
            (Some(n), None, Some(t)) => (n, t / n as f64),
            (None, Some(h), Some(t)) => {
                if !(h > 0.0) || !h.is_finite() {
                    return Err(Error::Config(format!("time step must be positive, got {h}")));
                }
                let n = (t / h).round();
                if !(n >= 1.0) || ((t / h) - n).abs() > 1e-9 * n {
                    return Err(Error::Config(format!("horizon {t} is not an integral number of steps of {h}")));
                }
                (n as usize, h)
            }
            (Some(n), Some(h), Some(t)) => {
                if (n as f64 * h - t).abs() > 1e-9 * t.abs().max(1.0) {
                    return Err(Error::Config(format!("horizon {t} differs from steps * h = {}", n as f64 * h)));
                }
                (n, h)
            }
            _ => return Err(Error::Config("maneuver needs two of steps, h and horizon".into())),
        };
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::Config(format!("time step must be positive, got {h}")));
        }
        if steps < 2 {
            return Err(Error::Config(format!("maneuver needs at least 2 steps, got {steps}")));
        }
        Ok((steps, h))
    }

    fn weights(&self, dim: usize, dumbbell: Option<&DumbbellParams>) -> Result<DMatrix<f64>> {
        match &self.maneuver.weights {
            None => Ok(DMatrix::identity(dim, dim)),
            Some(WeightsInput::Named(name)) => match (name.as_str(), dumbbell) {
                ("identity", _) => Ok(DMatrix::identity(dim, dim)),
                ("inertia-normalized", Some(p)) => inertia_normalized_weights(p),
                _ => Err(Error::Config(format!("unknown weight matrix {name:?}"))),
            },
            Some(WeightsInput::Matrix(entries)) => {
                if entries.len() != dim * dim {
                    return Err(Error::Config(format!(
                        "weights need {} row-major entries, got {}",
                        dim * dim,
                        entries.len()
                    )));
                }
                Ok(DMatrix::from_row_slice(dim, dim, entries))
            }
        }
    }

    fn scenario(&self, kind: ModelKind, steps: usize, h: f64, problems: &mut Problems) -> Option<Scenario> {
        let m = &self.maneuver;
        let rot = |r: &RotationInput, problems: &mut Problems, what: &str| {
            problems.take(r.resolve().map_err(|e| Error::Config(format!("{what}: {e}"))))
        };
        macro_rules! spec {
            ($initial:expr, $terminal:expr, $weights:expr) => {{
                let weights = problems.take($weights);
                let (initial, terminal) = ($initial?, $terminal?);
                Some(ManeuverSpec { initial, terminal, steps, h, weights: weights? })
            }};
        }
        let params_problem = |e: Error| Error::Config(format!("params: {e}"));
        match kind {
            ModelKind::Pendulum => {
                let p = problems.take(pendulum_params(&self.params).and_then(|p| p.validate().map(|_| p)).map_err(params_problem));
                let state = |t: &toml::Table, what: &str, problems: &mut Problems| {
                    let s: PendulumStateInput = problems.take(parse_table(t, what))?;
                    Some(PendulumState::new(rot(&s.r, problems, what)?, vec3(s.omega)))
                };
                let a = state(&m.initial, "initial state", problems);
                let b = state(&m.terminal, "terminal state", problems);
                let spec = spec!(a, b, self.weights(3, None).and_then(|w| checked(w, 3)));
                Some(Scenario::Pendulum(p?, spec?))
            }
            ModelKind::Dumbbell => {
                let p = problems.take(dumbbell_params(&self.params).and_then(|p| p.validate().map(|_| p)).map_err(params_problem));
                let state = |t: &toml::Table, what: &str, problems: &mut Problems| {
                    let s: DumbbellStateInput = problems.take(parse_table(t, what))?;
                    Some(DumbbellState::new(rot(&s.r, problems, what)?, vec3(s.x), vec3(s.omega), vec3(s.v)))
                };
                let a = state(&m.initial, "initial state", problems);
                let b = state(&m.terminal, "terminal state", problems);
                let p = p?;
                let spec = spec!(a, b, self.weights(6, Some(&p)).and_then(|w| checked(w, 6)));
                Some(Scenario::Dumbbell(p, spec?))
            }
            ModelKind::CartPendulum => {
                let p = problems.take(cart_params(&self.params).and_then(|p| p.validate().map(|_| p)).map_err(params_problem));
                let state = |t: &toml::Table, what: &str, problems: &mut Problems| {
                    let s: CartStateInput = problems.take(parse_table(t, what))?;
                    Some(CartPendulumState {
                        r: rot(&s.r, problems, what)?,
                        x: s.x,
                        y: s.y,
                        omega: vec3(s.omega),
                        xdot: s.xdot,
                        ydot: s.ydot,
                    })
                };
                let a = state(&m.initial, "initial state", problems);
                let b = state(&m.terminal, "terminal state", problems);
                let spec = spec!(a, b, self.weights(2, None).and_then(|w| checked(w, 2)));
                Some(Scenario::CartPendulum(p?, spec?))
            }
            ModelKind::Connected => {
                let p = problems.take(connected_params(&self.params).and_then(|p| p.validate().map(|_| p)).map_err(params_problem));
                let state = |t: &toml::Table, what: &str, problems: &mut Problems| {
                    let s: ConnectedStateInput = problems.take(parse_table(t, what))?;
                    let r1 = rot(&s.r1, problems, what);
                    let r2 = rot(&s.r2, problems, what);
                    Some(ConnectedState {
                        r1: r1?,
                        r2: r2?,
                        omega1: vec3(s.omega1),
                        omega2: vec3(s.omega2),
                    })
                };
                let a = state(&m.initial, "initial state", problems);
                let b = state(&m.terminal, "terminal state", problems);
                let spec = spec!(a, b, self.weights(3, None).and_then(|w| checked(w, 3)));
                Some(Scenario::Connected(p?, spec?))
            }
        }
    }
}

fn checked(w: DMatrix<f64>, dim: usize) -> Result<DMatrix<f64>> {
    crate::models::check_weights(&w, dim).map_err(|e| Error::Config(format!("weights: {e}")))?;
    Ok(w)
}

fn controls_of(kind: ModelKind) -> usize {
    match kind {
        ModelKind::Dumbbell => 6,
        ModelKind::Pendulum | ModelKind::Connected => 3,
        ModelKind::CartPendulum => 2,
    }
}

fn pendulum_params(t: &toml::Table) -> Result<PendulumParams> {
    let i: PendulumParamsInput = parse_table(t, "pendulum params")?;
    let d = PendulumParams::default();
    Ok(PendulumParams {
        mass: i.mass.unwrap_or(d.mass),
        inertia: i.inertia.map_or(Ok(d.inertia), |m| mat3(&m, "inertia"))?,
        offset: i.offset.map_or(d.offset, vec3),
        gravity: i.gravity.unwrap_or(d.gravity),
    })
}

fn dumbbell_params(t: &toml::Table) -> Result<DumbbellParams> {
    let i: DumbbellParamsInput = parse_table(t, "dumbbell params")?;
    let d = DumbbellParams::default();
    Ok(DumbbellParams {
        gm: i.gm.unwrap_or(d.gm),
        mass: i.mass.unwrap_or(d.mass),
        inertia: i.inertia.map_or(Ok(d.inertia), |m| mat3(&m, "inertia"))?,
        offsets: i.offsets.map_or(d.offsets, |[a, b]| [vec3(a), vec3(b)]),
    })
}

fn cart_params(t: &toml::Table) -> Result<CartPendulumParams> {
    let i: CartParamsInput = parse_table(t, "cart-pendulum params")?;
    let d = CartPendulumParams::default();
    Ok(CartPendulumParams {
        cart_mass: i.cart_mass.unwrap_or(d.cart_mass),
        mass: i.mass.unwrap_or(d.mass),
        inertia: i.inertia.map_or(Ok(d.inertia), |m| mat3(&m, "inertia"))?,
        offset: i.offset.map_or(d.offset, vec3),
        gravity: i.gravity.unwrap_or(d.gravity),
    })
}

fn connected_params(t: &toml::Table) -> Result<ConnectedParams> {
    let i: ConnectedParamsInput = parse_table(t, "connected params")?;
    let d = ConnectedParams::default();
    let inertias = match i.inertias {
        Some([a, b]) => [mat3(&a, "first inertia")?, mat3(&b, "second inertia")?],
        None => d.inertias,
    };
    Ok(ConnectedParams {
        masses: i.masses.unwrap_or(d.masses),
        inertias,
        offsets: i.offsets.map_or(d.offsets, |[a, b]| [vec3(a), vec3(b)]),
    })
}

/// A scenario file shipped with the crate.
#[derive(Debug, Clone, Copy)]
pub struct BundledScenario {
    pub name: &'static str,
    pub text: &'static str,
}

pub const BUNDLED: [BundledScenario; 4] = [
    BundledScenario {
        name: "dumbbell-orbit-transfer",
        text: include_str!("../scenarios/dumbbell-orbit-transfer.toml"),
    },
    BundledScenario {
        name: "pendulum-reorientation",
        text: include_str!("../scenarios/pendulum-reorientation.toml"),
    },
    BundledScenario {
        name: "cart-pendulum-reorientation",
        text: include_str!("../scenarios/cart-pendulum-reorientation.toml"),
    },
    BundledScenario {
        name: "connected-bodies-reorientation",
        text: include_str!("../scenarios/connected-bodies-reorientation.toml"),
    },
];

pub fn bundled(name: &str) -> Option<BundledScenario> {
    BUNDLED.iter().copied().find(|b| b.name == name)
}
