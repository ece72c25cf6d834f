//! Batch runs: one scenario in, a directory of plain-text results out.
//!
//! Everything except `timing.json` is a pure function of the scenario file
//! and the seed, so two runs can be compared byte for byte.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::config::{ResolvedScenario, ScenarioConfig, SolverKind};
use crate::direct::{Direct, DirectProblem};
use crate::engine::{propagate, Dynamics, Trajectory};
use crate::error::{Error, Result};
use crate::indirect::{control_cost, random_multiplier, Indirect, Shooting};
use crate::models::{ManeuverSpec, ModelKind, Scenario};

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const CONVERGENCE_FILE: &str = "convergence.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const TIMING_FILE: &str = "timing.json";

/// Command-line settings that take precedence over the scenario file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    /// Convergence tolerance of the selected solver.
    pub tolerance: Option<f64>,
    pub max_iterations: Option<usize>,
    pub solver: Option<SolverKind>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, r: &mut ResolvedScenario) -> Result<()> {
        if let Some(seed) = self.seed {
            r.seed = seed;
        }
        if let Some(solver) = self.solver {
            r.solver = solver;
        }
        if let Some(tol) = self.tolerance {
            if !(tol > 0.0) || !tol.is_finite() {
                return Err(Error::Config(format!("tolerance must be positive, got {tol}")));
            }
            r.indirect.tolerance = tol;
            r.direct.tolerance = tol;
        }
        if let Some(n) = self.max_iterations {
            r.indirect.max_iterations = n;
            r.direct.max_iterations = n;
        }
        if let Some(out) = &self.out {
            r.output = Some(out.clone());
        }
        if r.solver == SolverKind::Indirect && !matches!(r.scenario.kind(), ModelKind::Dumbbell | ModelKind::Pendulum) {
            return Err(Error::Config(format!(
                "the indirect solver supports the dumbbell and pendulum models, not {}",
                r.scenario.kind().as_str()
            )));
        }
        Ok(())
    }
}

/// Knot times and values of a direct solution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScheduleRecord {
    pub knot_times: Vec<f64>,
    pub knots: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub name: String,
    pub model: String,
    pub solver: String,
    pub seed: u64,
    pub status: String,
    pub converged: bool,
    pub cost: f64,
    /// Norm of the terminal residual of the re-propagated trajectory (retained rows for the direct solver).
    pub violation: f64,
    pub iterations: usize,
    pub steps: usize,
    pub h: f64,
    pub max_orthogonality_defect: f64,
    /// Largest `|E_k - E_0|`.
    pub energy_deviation: f64,
    /// Largest change of any momentum component.
    pub momentum_drift: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dropped_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_multiplier: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleRecord>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: Summary,
    /// Deterministic files as `(name, contents)`.
    pub files: Vec<(String, String)>,
    pub wall_time: f64,
    pub output: Option<PathBuf>,
}

impl RunOutput {
    pub fn converged(&self) -> bool {
        self.summary.converged
    }

    pub fn file(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, c)| c.as_str())
    }

    /// Writes every file into `dir`, creating it if needed.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, contents) in &self.files {
            std::fs::write(dir.join(name), contents)?;
        }
        let timing = serde_json::json!({ "wall_time_s": self.wall_time });
        std::fs::write(dir.join(TIMING_FILE), format!("{timing:#}\n"))?;
        Ok(())
    }
}

/// Loads, resolves and runs a scenario file.
pub fn run_file(path: &Path, overrides: &Overrides) -> Result<RunOutput> {
    let config = ScenarioConfig::load(path)?;
    let mut resolved = config.resolve()?;
    overrides.apply(&mut resolved)?;
    run(&resolved)
}

pub fn run(r: &ResolvedScenario) -> Result<RunOutput> {
    let start = Instant::now();
    log::info!("running {} ({}, {})", r.name, r.scenario.kind().as_str(), r.solver.as_str());
    let solved = match (&r.scenario, r.solver) {
        (Scenario::Dumbbell(p, s), SolverKind::Indirect) => indirect(p, s, r),
        (Scenario::Pendulum(p, s), SolverKind::Indirect) => indirect(p, s, r),
        (Scenario::Dumbbell(p, s), SolverKind::Direct) => direct(p, s, r),
        (Scenario::Pendulum(p, s), SolverKind::Direct) => direct(p, s, r),
        (Scenario::CartPendulum(p, s), SolverKind::Direct) => direct(p, s, r),
        (Scenario::Connected(p, s), SolverKind::Direct) => direct(p, s, r),
        (Scenario::Dumbbell(p, s), SolverKind::Simulate) => simulate(p, s, r),
        (Scenario::Pendulum(p, s), SolverKind::Simulate) => simulate(p, s, r),
        (Scenario::CartPendulum(p, s), SolverKind::Simulate) => simulate(p, s, r),
        (Scenario::Connected(p, s), SolverKind::Simulate) => simulate(p, s, r),
        (s, SolverKind::Indirect) => Err(Error::Config(format!(
            "the indirect solver supports the dumbbell and pendulum models, not {}",
            s.kind().as_str()
        ))),
    }?;
    let wall_time = start.elapsed().as_secs_f64();
    log::info!("{}: {} after {} iterations, violation {:e}", r.name, solved.summary.status, solved.summary.iterations, solved.summary.violation);
    let summary_json = serde_json::to_string_pretty(&solved.summary).map_err(|e| Error::Io(e.to_string()))? + "\n";
    Ok(RunOutput {
        files: vec![
            (TRAJECTORY_FILE.into(), solved.trajectory),
            (DIAGNOSTICS_FILE.into(), solved.diagnostics),
            (CONVERGENCE_FILE.into(), solved.convergence),
            (SUMMARY_FILE.into(), summary_json),
        ],
        summary: solved.summary,
        wall_time,
        output: r.output.clone(),
    })
}

struct Solved {
    summary: Summary,
    trajectory: String,
    diagnostics: String,
    convergence: String,
}

/// What a solver hands back for reporting.
struct Outcome {
    status: String,
    converged: bool,
    cost: f64,
    violation: f64,
    iterations: usize,
    dropped_residual: Option<f64>,
    initial_multiplier: Option<Vec<f64>>,
    schedule: Option<ScheduleRecord>,
    convergence: String,
}

fn status_name<S: Serialize>(s: &S) -> String {
    match serde_json::to_value(s) {
        Ok(serde_json::Value::String(name)) => name,
        _ => "unknown".into(),
    }
}

fn simulate<M: Dynamics>(model: &M, spec: &ManeuverSpec<M::State<f64>>, r: &ResolvedScenario) -> Result<Solved> {
    let control = r.simulate.control.clone().unwrap_or_else(|| vec![0.0; M::CONTROLS]);
    let controls = vec![control; spec.steps];
    let trajectory = propagate(model, &spec.initial, Some(&controls), spec.steps, spec.h)?;
    let violation = norm(&M::difference(trajectory.terminal(), &spec.terminal));
    let outcome = Outcome {
        status: "completed".into(),
        converged: true,
        cost: control_cost(&controls, &spec.weights, spec.h),
        violation,
        iterations: 0,
        dropped_residual: None,
        initial_multiplier: None,
        schedule: None,
        convergence: format!("iteration,violation\n0,{violation:e}\n"),
    };
    Ok(report(model, spec, r, &trajectory, outcome))
}

fn indirect<M: Indirect>(model: &M, spec: &ManeuverSpec<M::State<f64>>, r: &ResolvedScenario) -> Result<Solved> {
    let shooting = Shooting::new(model, spec)?;
    let guess = if r.indirect.initial_scale > 0.0 {
        random_multiplier(M::DIM, r.seed, r.indirect.initial_scale)
    } else {
        vec![0.0; M::DIM]
    };
    let rep = shooting.shoot(&guess, &r.indirect.options())?;
    let mut convergence =
        String::from("iteration,violation,step_length,backtracks,condition,full_condition,decomposed_condition,conserved_error\n");
    for it in &rep.history {
        let _ = writeln!(
            convergence,
            "{},{:e},{:e},{},{},{},{},{}",
            it.iteration,
            it.violation,
            it.step_length,
            it.backtracks,
            opt(it.condition),
            opt(it.full_condition),
            opt(it.decomposed_condition),
            opt(it.conserved_error)
        );
    }
    let outcome = Outcome {
        status: status_name(&rep.status),
        converged: rep.converged(),
        cost: rep.cost,
        violation: rep.violation,
        iterations: rep.history.len().saturating_sub(1),
        dropped_residual: None,
        initial_multiplier: Some(rep.multiplier.clone()),
        schedule: None,
        convergence,
    };
    Ok(report(model, spec, r, &rep.trajectory, outcome))
}

fn direct<M: Direct>(model: &M, spec: &ManeuverSpec<M::State<f64>>, r: &ResolvedScenario) -> Result<Solved> {
    let options = r.direct.options(r.seed);
    let problem = DirectProblem::new(model, spec, options.knots)?;
    let rep = problem.solve_from(&problem.initial_guess(&options), &options)?;
    let mut convergence = String::from("iteration,cost,violation,stationarity,step_norm,radius,restored\n");
    for it in &rep.history {
        let _ = writeln!(
            convergence,
            "{},{:e},{:e},{:e},{:e},{:e},{}",
            it.iteration, it.cost, it.violation, it.stationarity, it.step_norm, it.radius, it.restored
        );
    }
    let outcome = Outcome {
        status: status_name(&rep.status),
        converged: rep.converged(),
        cost: rep.cost,
        violation: rep.violation,
        iterations: rep.history.len().saturating_sub(1),
        dropped_residual: rep.dropped_residual,
        initial_multiplier: None,
        schedule: Some(ScheduleRecord {
            knot_times: rep.schedule.knot_times.clone(),
            knots: rep.schedule.knots.clone(),
        }),
        convergence,
    };
    Ok(report(model, spec, r, &rep.trajectory, outcome))
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:e}")).unwrap_or_default()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn report<M: Dynamics>(
    model: &M,
    spec: &ManeuverSpec<M::State<f64>>,
    r: &ResolvedScenario,
    traj: &Trajectory<M>,
    outcome: Outcome,
) -> Solved {
    let _ = model;
    let d0 = &traj.diagnostics[0];
    let energy_deviation = traj.diagnostics.iter().map(|d| (d.energy - d0.energy).abs()).fold(0.0, f64::max);
    let momentum_drift = traj
        .diagnostics
        .iter()
        .flat_map(|d| d.momentum.iter().zip(&d0.momentum).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);
    let summary = Summary {
        name: r.name.clone(),
        model: r.scenario.kind().as_str().into(),
        solver: r.solver.as_str().into(),
        seed: r.seed,
        status: outcome.status,
        converged: outcome.converged,
        cost: outcome.cost,
        violation: outcome.violation,
        iterations: outcome.iterations,
        steps: spec.steps,
        h: spec.h,
        max_orthogonality_defect: traj.max_orthogonality_defect(),
        energy_deviation,
        momentum_drift,
        dropped_residual: outcome.dropped_residual,
        initial_multiplier: outcome.initial_multiplier,
        schedule: outcome.schedule,
    };
    Solved {
        summary,
        trajectory: trajectory_csv(traj),
        diagnostics: diagnostics_csv(traj),
        convergence: outcome.convergence,
    }
}

/// One row per state. Row `k` carries the control `u_k` that ended the step into
/// state `k`; row 0 has zero control.
pub fn trajectory_csv<M: Dynamics>(traj: &Trajectory<M>) -> String {
    let mut out = String::new();
    let mut header = vec!["step".to_string(), "time".to_string()];
    header.extend(M::state_labels());
    header.extend(M::control_labels());
    header.push("energy".into());
    header.extend(M::momentum_labels());
    header.push("orthogonality_defect".into());
    out.push_str(&header.join(","));
    out.push('\n');
    let zero = vec![0.0; M::CONTROLS];
    for (k, (s, d)) in traj.states.iter().zip(&traj.diagnostics).enumerate() {
        let u = if k == 0 { &zero } else { &traj.controls[k - 1] };
        let _ = write!(out, "{k},{:e}", k as f64 * traj.h);
        for v in M::flatten(s).iter().chain(u).chain(std::iter::once(&d.energy)).chain(&d.momentum) {
            let _ = write!(out, ",{v:e}");
        }
        let _ = writeln!(out, ",{:e}", d.orthogonality_defect);
    }
    out
}

/// Per-step drift of the conserved quantities and inner-solver effort.
pub fn diagnostics_csv<M: Dynamics>(traj: &Trajectory<M>) -> String {
    let mut out = String::new();
    let mut header = vec!["step".to_string(), "energy_error".to_string()];
    header.extend(M::momentum_labels().into_iter().map(|l| format!("{l}_drift")));
    header.extend(["orthogonality_defect", "attitude_iterations", "sweeps"].map(String::from));
    out.push_str(&header.join(","));
    out.push('\n');
    let d0 = &traj.diagnostics[0];
    for (k, d) in traj.diagnostics.iter().enumerate() {
        let _ = write!(out, "{k},{:e}", d.energy - d0.energy);
        for (a, b) in d.momentum.iter().zip(&d0.momentum) {
            let _ = write!(out, ",{:e}", a - b);
        }
        let _ = writeln!(out, ",{:e},{},{}", d.orthogonality_defect, d.stats.attitude_iterations, d.stats.sweeps);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::bundled;

    fn resolved(text: &str) -> ResolvedScenario {
        ScenarioConfig::parse(text).unwrap().resolve().unwrap()
    }

    const FREE_BODY: &str = r#"
name = "free"
model = "pendulum"
solver = "simulate"
[params]
gravity = 0.0
[maneuver]
steps = 200
h = 0.01
[maneuver.initial]
omega = [1.0, 2.0, -0.5]
[simulate]
control = [0.0, 0.1, 0.0]
"#;

    #[test]
    fn simulate_writes_consistent_files() {
        let out = run(&resolved(FREE_BODY)).unwrap();
        assert!(out.converged());
        let traj = out.file(TRAJECTORY_FILE).unwrap();
        let lines: Vec<&str> = traj.lines().collect();
        assert_eq!(lines.len(), 202);
        let header: Vec<&str> = lines[0].split(',').collect();
        assert_eq!(header[0], "step");
        assert_eq!(header.len(), 2 + 12 + 3 + 1 + 1 + 1);
        let times: Vec<f64> = lines[1..].iter().map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
        assert!(times.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(out.file(DIAGNOSTICS_FILE).unwrap().lines().count(), 202);
        assert_eq!(out.file(CONVERGENCE_FILE).unwrap().lines().count(), 2);
    }

    #[test]
    fn summary_cost_matches_emitted_controls() {
        let out = run(&resolved(FREE_BODY)).unwrap();
        let traj = out.file(TRAJECTORY_FILE).unwrap();
        let mut lines = traj.lines();
        let header: Vec<&str> = lines.next().unwrap().split(',').collect();
        let cols: Vec<usize> = (0..header.len()).filter(|&i| header[i].starts_with("u_")).collect();
        assert_eq!(cols.len(), 3);
        let h = out.summary.h;
        let cost: f64 = lines
            .map(|l| {
                let f: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
                cols.iter().map(|&c| f[c] * f[c]).sum::<f64>() * h / 2.0
            })
            .sum();
        assert!((cost - out.summary.cost).abs() <= 1e-12 * out.summary.cost.max(1.0));
    }

    #[test]
    fn emitted_rotations_are_rotations() {
        let out = run(&resolved(FREE_BODY)).unwrap();
        let traj = out.file(TRAJECTORY_FILE).unwrap();
        for l in traj.lines().skip(1) {
            let f: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
            let r = crate::liegroup::Mat3::from_row_slice(&f[2..11]);
            assert!(crate::liegroup::Rotation::new(r).is_ok());
        }
    }

    #[test]
    fn repeated_runs_are_identical() {
        let a = run(&resolved(FREE_BODY)).unwrap();
        let b = run(&resolved(FREE_BODY)).unwrap();
        assert_eq!(a.files, b.files);
    }

    #[test]
    fn overrides_take_precedence() {
        let mut r = resolved(bundled("cart-pendulum-reorientation").unwrap().text);
        let o = Overrides {
            seed: Some(9),
            tolerance: Some(1e-7),
            max_iterations: Some(3),
            ..Overrides::default()
        };
        o.apply(&mut r).unwrap();
        assert_eq!((r.seed, r.direct.tolerance, r.direct.max_iterations), (9, 1e-7, 3));
        let bad = Overrides {
            solver: Some(SolverKind::Indirect),
            ..Overrides::default()
        };
        assert_eq!(bad.apply(&mut r).unwrap_err().category(), crate::error::Category::Config);
    }

    #[test]
    fn writes_into_a_directory() {
        let dir = tempfile::tempdir().unwrap();
        let out = run(&resolved(FREE_BODY)).unwrap();
        out.write(dir.path()).unwrap();
        for name in [TRAJECTORY_FILE, DIAGNOSTICS_FILE, CONVERGENCE_FILE, SUMMARY_FILE, TIMING_FILE] {
            assert!(dir.path().join(name).exists(), "{name}");
        }
        let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap()).unwrap();
        assert_eq!(summary["model"], "pendulum");
    }
}
