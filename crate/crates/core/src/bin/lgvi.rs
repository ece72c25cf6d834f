use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lgvi::config::{bundled, ScenarioConfig, SolverKind, BUNDLED};
use lgvi::error::{Category, Error};
use lgvi::harness::{run, Overrides};

#[derive(Parser)]
#[command(name = "lgvi", version, about = "Rigid-body variational integrators and optimal control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file (or a bundled scenario by name) and write its results.
    Run {
        config: String,
        /// Output directory; defaults to the scenario's `output` entry, then `out/<name>`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Convergence tolerance of the selected solver.
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long = "max-iter")]
        max_iter: Option<usize>,
        #[arg(long, value_parser = parse_solver)]
        solver: Option<SolverKind>,
    },
    /// Check a scenario file without running it; lists every problem found.
    Verify { config: String },
    /// Print the bundled scenarios.
    ListScenarios,
}

fn parse_solver(s: &str) -> Result<SolverKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn load(config: &str) -> Result<ScenarioConfig, Error> {
    let path = Path::new(config);
    match (path.exists(), bundled(config)) {
        (false, Some(b)) => ScenarioConfig::parse(b.text),
        _ => ScenarioConfig::load(path),
    }
}

fn fail(e: &Error) -> ExitCode {
    let category = e.category();
    let line = serde_json::json!({ "category": category.as_str(), "message": e.to_string() });
    eprintln!("{line}");
    ExitCode::from(category.exit_code() as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run { config, out, seed, tol, max_iter, solver } => {
            let overrides = Overrides { seed, tolerance: tol, max_iterations: max_iter, solver, out };
            let resolved = load(&config).and_then(|c| c.resolve()).and_then(|mut r| {
                overrides.apply(&mut r)?;
                Ok(r)
            });
            let resolved = match resolved {
                Ok(r) => r,
                Err(e) => return fail(&e),
            };
            let output = match run(&resolved) {
                Ok(o) => o,
                Err(e) => return fail(&e),
            };
            let dir = output.output.clone().unwrap_or_else(|| PathBuf::from("out").join(&resolved.name));
            if let Err(e) = output.write(&dir) {
                return fail(&e);
            }
            let s = &output.summary;
            println!(
                "{}: {} ({} iterations) cost {:e} violation {:e} in {:.2} s -> {}",
                s.name,
                s.status,
                s.iterations,
                s.cost,
                s.violation,
                output.wall_time,
                dir.display()
            );
            if output.converged() {
                ExitCode::SUCCESS
            } else {
                eprintln!("{}", serde_json::json!({ "category": "solver", "message": format!("{} did not converge", s.solver) }));
                ExitCode::from(Category::Solver.exit_code() as u8)
            }
        }
        Command::Verify { config } => {
            let problems = match load(&config) {
                Ok(c) => c.problems(),
                Err(e) => vec![e],
            };
            if problems.is_empty() {
                println!("{config}: ok");
                return ExitCode::SUCCESS;
            }
            for p in &problems {
                println!("{config}: {p}");
            }
            ExitCode::from(Category::Config.exit_code() as u8)
        }
        Command::ListScenarios => {
            for b in BUNDLED {
                let description = ScenarioConfig::parse(b.text).ok().and_then(|c| c.description).unwrap_or_default();
                println!("{:32} {description}", b.name);
            }
            ExitCode::SUCCESS
        }
    }
}
