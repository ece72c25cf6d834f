use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use lgvi_ffi::*;

const SWING: &str = r#"
name = "swing"
model = "pendulum"
solver = "simulate"
[maneuver]
steps = 50
h = 0.01
[maneuver.initial]
r = { axis = [1, 0, 0], angle = 0.5 }
omega = [0, 0, 1]
[maneuver.terminal]
r = [1, 0, 0, 0, 1, 0, 0, 0, 1]
"#;

fn last_error() -> String {
    let p = lgvi_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned()
}

fn scenario(text: &str) -> *mut LgviScenario {
    let text = CString::new(text).unwrap();
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { lgvi_scenario_from_toml(text.as_ptr(), &mut s) }, LgviStatus::Ok);
    s
}

#[test]
fn exp_and_log_round_trip() {
    let v = [0.3, -0.2, 0.9];
    let mut r = [0.0; 9];
    let mut w = [0.0; 3];
    unsafe {
        assert_eq!(lgvi_exp_so3(v.as_ptr(), r.as_mut_ptr()), LgviStatus::Ok);
        assert_eq!(lgvi_log_so3(r.as_ptr(), w.as_mut_ptr()), LgviStatus::Ok);
    }
    for i in 0..3 {
        assert!((w[i] - v[i]).abs() < 1e-14);
    }
    // rotation about z by 0.9 rad in the top-left block, row-major
    let r_z = {
        let mut out = [0.0; 9];
        unsafe { lgvi_exp_so3([0.0, 0.0, 0.9].as_ptr(), out.as_mut_ptr()) };
        out
    };
    assert!((r_z[1] + 0.9f64.sin()).abs() < 1e-15);
    assert!((r_z[3] - 0.9f64.sin()).abs() < 1e-15);
}

#[test]
fn log_rejects_a_reflection() {
    let m = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0];
    let mut w = [0.0; 3];
    assert_eq!(unsafe { lgvi_log_so3(m.as_ptr(), w.as_mut_ptr()) }, LgviStatus::ModelError);
    assert!(!last_error().is_empty());
}

#[test]
fn null_arguments_are_reported() {
    let mut out = [0.0; 9];
    assert_eq!(unsafe { lgvi_exp_so3(ptr::null(), out.as_mut_ptr()) }, LgviStatus::NullPointer);
    assert!(last_error().contains("NULL"));
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { lgvi_scenario_from_toml(ptr::null(), &mut s) }, LgviStatus::NullPointer);
    assert!(s.is_null());
    unsafe {
        assert!(!lgvi_run_converged(ptr::null()));
        assert!(lgvi_run_cost(ptr::null()).is_nan());
        assert!(lgvi_run_file(ptr::null(), c"trajectory.csv".as_ptr()).is_null());
        lgvi_scenario_free(ptr::null_mut());
        lgvi_run_free(ptr::null_mut());
    }
}

#[test]
fn malformed_config_is_a_config_error() {
    let text = CString::new("model = \"kite\"\n[maneuver]\nsteps = 10\nh = 0.1\n").unwrap();
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { lgvi_scenario_from_toml(text.as_ptr(), &mut s) }, LgviStatus::ConfigError);
    assert!(s.is_null());
    assert!(last_error().contains("kite"));
    lgvi_clear_error();
    assert!(lgvi_last_error_message().is_null());
}

#[test]
fn bundled_names_are_listed() {
    let names: Vec<String> = (0..lgvi_bundled_count())
        .map(|i| unsafe { CStr::from_ptr(lgvi_bundled_name(i)) }.to_str().unwrap().to_owned())
        .collect();
    assert_eq!(names.len(), 4);
    assert!(names.iter().any(|n| n == "pendulum-reorientation"));
    assert!(lgvi_bundled_name(names.len()).is_null());
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { lgvi_scenario_bundled(c"no-such".as_ptr(), &mut s) }, LgviStatus::ConfigError);
}

#[test]
fn simulation_exposes_the_trajectory() {
    let s = scenario(SWING);
    let mut run = ptr::null_mut();
    unsafe {
        assert_eq!(lgvi_scenario_run(s, &mut run), LgviStatus::Ok);
        assert_eq!(lgvi_run_steps(run), 50);
        let (mut rows, mut cols) = (0, 0);
        assert_eq!(lgvi_run_trajectory_shape(run, &mut rows, &mut cols), LgviStatus::Ok);
        assert_eq!(rows, 51);
        let data = std::slice::from_raw_parts(lgvi_run_trajectory_data(run), rows * cols);
        let name = |j| CStr::from_ptr(lgvi_run_trajectory_column(run, j)).to_str().unwrap();
        assert_eq!(name(0), "step");
        assert_eq!(name(1), "time");
        assert!(lgvi_run_trajectory_column(run, cols).is_null());
        // step and time columns of the last row
        assert_eq!(data[50 * cols], 50.0);
        assert!((data[50 * cols + 1] - 0.5).abs() < 1e-12);
        let csv = CStr::from_ptr(lgvi_run_file(run, c"trajectory.csv".as_ptr())).to_str().unwrap();
        assert_eq!(csv.lines().count(), 52);
        let summary = CStr::from_ptr(lgvi_run_summary_json(run)).to_str().unwrap();
        assert!(summary.contains("\"model\": \"pendulum\""), "{summary}");
        assert!(lgvi_run_file(run, c"bogus".as_ptr()).is_null());
        lgvi_run_free(run);
        lgvi_scenario_free(s);
    }
}

#[test]
fn overrides_are_validated() {
    let s = scenario(SWING);
    unsafe {
        assert_eq!(lgvi_scenario_set_seed(s, 7), LgviStatus::Ok);
        assert_eq!(lgvi_scenario_set_tolerance(s, -1.0), LgviStatus::ConfigError);
        assert_eq!(lgvi_scenario_set_max_iterations(s, 3), LgviStatus::Ok);
        assert_eq!(lgvi_scenario_set_solver(s, LgviSolver::Direct), LgviStatus::Ok);
        lgvi_scenario_free(s);
    }
    let cart = scenario(
        "model = \"cart-pendulum\"\n[maneuver]\nsteps = 10\nh = 0.01\n[maneuver.terminal]\nr = [1, 0, 0, 0, 1, 0, 0, 0, 1]\n",
    );
    assert_eq!(unsafe { lgvi_scenario_set_solver(cart, LgviSolver::Indirect) }, LgviStatus::ConfigError);
    unsafe { lgvi_scenario_free(cart) };
}

#[test]
fn bundled_transfer_converges_and_writes() {
    let mut s = ptr::null_mut();
    let mut run = ptr::null_mut();
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().to_str().unwrap()).unwrap();
    unsafe {
        assert_eq!(lgvi_scenario_bundled(c"dumbbell-orbit-transfer".as_ptr(), &mut s), LgviStatus::Ok);
        assert_eq!(lgvi_scenario_run(s, &mut run), LgviStatus::Ok);
        assert!(lgvi_run_converged(run));
        assert!(lgvi_run_violation(run) <= 1e-10);
        assert!(lgvi_run_cost(run) > 0.0);
        assert!(lgvi_run_iterations(run) > 0);
        assert_eq!(lgvi_run_write(run, path.as_ptr()), LgviStatus::Ok);
        lgvi_run_free(run);
        lgvi_scenario_free(s);
    }
    for f in ["trajectory.csv", "diagnostics.csv", "convergence.csv", "summary.json", "timing.json"] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/lgvi.h")).unwrap();
    for name in [
        "lgvi_version",
        "lgvi_last_error_message",
        "lgvi_exp_so3",
        "lgvi_log_so3",
        "lgvi_scenario_from_toml",
        "lgvi_scenario_run",
        "lgvi_run_trajectory_data",
        "lgvi_run_free",
        "LGVI_STATUS_CONFIG_ERROR = 2",
        "typedef struct LgviRun LgviRun;",
    ] {
        assert!(header.contains(name), "{name} missing from lgvi.h");
    }
}

/// Compiles and runs a small C program against the header and the static
/// library when a C compiler is available.
#[test]
fn c_program_links_against_the_static_library() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    // target/<profile>/deps/<test binary>
    let profile_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = profile_dir.join("liblgvi_ffi.a");
    if !lib.is_file() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler or static library at {}", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(
        &src,
        r#"
#include <math.h>
#include <stdio.h>
#include "lgvi.h"
int main(void) {
    double v[3] = {0.1, 0.2, 0.3}, r[9], w[3];
    if (lgvi_exp_so3(v, r) != LGVI_STATUS_OK) return 1;
    if (lgvi_log_so3(r, w) != LGVI_STATUS_OK) return 2;
    for (int i = 0; i < 3; i++) if (fabs(w[i] - v[i]) > 1e-14) return 3;
    LgviScenario *s = NULL;
    if (lgvi_scenario_from_toml("model = \"kite\"", &s) != LGVI_STATUS_CONFIG_ERROR || s != NULL) return 4;
    if (lgvi_last_error_message() == NULL) return 5;
    printf("%s\n", lgvi_version());
    return 0;
}
"#,
    )
    .unwrap();
    let exe = dir.path().join("smoke");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "C program exited with {:?}", out.status);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), env!("CARGO_PKG_VERSION"));
}
