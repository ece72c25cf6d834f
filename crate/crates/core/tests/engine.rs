use lgvi::engine::{
    linearize_ad, linearize_fd, propagate, relative_difference, CartPendulumState, ConnectedState,
    Dynamics, DumbbellState, PendulumState,
};
use lgvi::liegroup::{exp_so3, Mat3, Vec3};
use lgvi::models::{CartPendulumParams, ConnectedParams, DumbbellParams, PendulumParams};

fn richardson_order<M: Dynamics>(model: &M, s0: &M::State<f64>, horizon: f64, n: usize, u: impl Fn(f64) -> Vec<f64>) -> f64 {
    let run = |steps: usize| {
        let h = horizon / steps as f64;
        let controls: Vec<Vec<f64>> = (0..steps).map(|k| u((k + 1) as f64 * h)).collect();
        propagate(model, s0, Some(&controls), steps, h).unwrap().terminal().clone()
    };
    let coarse = run(n);
    let mid = run(2 * n);
    let fine = run(4 * n);
    let norm = |v: Vec<f64>| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let e1 = norm(M::difference(&coarse, &mid));
    let e2 = norm(M::difference(&mid, &fine));
    (e1 / e2).log2()
}

// Potential and control enter at the end of the step, which makes the forced
// flows first order in the velocities; order is measured on free or
// uncontrolled motions where every discrete Lagrangian is symmetric.
#[test]
fn second_order_for_all_steppers() {
    let d = DumbbellParams {
        gm: 0.0,
        ..DumbbellParams::default()
    };
    let s = DumbbellState::new(
        exp_so3(&Vec3::new(0.1, 0.2, 0.3)),
        Vec3::new(1.0, 0.0, 0.0),
        Vec3::new(0.3, -0.2, 1.0),
        Vec3::new(0.0, 0.9835, 0.1),
    );
    let p = richardson_order(&d, &s, 1.0, 100, |_| vec![0.0; 6]);
    assert!((p - 2.0).abs() <= 0.1, "dumbbell order {p}");

    let pend = PendulumParams {
        gravity: 0.0,
        ..PendulumParams::default()
    };
    let s = PendulumState::new(exp_so3(&Vec3::new(0.6, -0.2, 0.1)), Vec3::new(1.0, 2.0, -0.5));
    let p = richardson_order(&pend, &s, 1.0, 100, |_| vec![0.0; 3]);
    assert!((p - 2.0).abs() <= 0.1, "pendulum order {p}");

    let cart = CartPendulumParams::default();
    let mut s = CartPendulumState::rest(exp_so3(&Vec3::new(0.4, 0.3, 0.0)));
    s.omega = Vec3::new(0.2, -0.3, 0.5);
    s.xdot = 0.1;
    let p = richardson_order(&cart, &s, 1.0, 100, |_| vec![0.0; 2]);
    assert!((p - 2.0).abs() <= 0.1, "cart order {p}");

    let conn = ConnectedParams::default();
    let mut s = ConnectedState::rest(Mat3::identity(), exp_so3(&Vec3::new(0.0, 0.3, 0.2)));
    s.omega1 = Vec3::new(0.2, 0.1, -0.3);
    s.omega2 = Vec3::new(0.4, -0.2, 0.1);
    let p = richardson_order(&conn, &s, 1.0, 100, |_| vec![0.0; 3]);
    assert!((p - 2.0).abs() <= 0.1, "connected order {p}");
}

#[test]
fn connected_momentum_conserved_under_internal_moment() {
    let p = ConnectedParams::default();
    let mut s0 = ConnectedState::rest(exp_so3(&Vec3::new(0.1, -0.4, 0.3)), exp_so3(&Vec3::new(0.5, 0.2, -0.1)));
    s0.omega1 = Vec3::new(0.3, -0.5, 0.2);
    s0.omega2 = Vec3::new(-0.1, 0.4, 0.6);
    let controls: Vec<Vec<f64>> = (0..1000)
        .map(|k| {
            let t = k as f64 * 0.01;
            vec![0.3 * (1.3 * t).sin(), 0.2 * (0.7 * t).cos(), 0.1]
        })
        .collect();
    let traj = propagate(&p, &s0, Some(&controls), 1000, 0.01).unwrap();
    let pi0 = &traj.diagnostics[0].momentum;
    for d in &traj.diagnostics {
        for i in 0..3 {
            assert!((d.momentum[i] - pi0[i]).abs() <= 1e-11, "{:?} vs {:?}", d.momentum, pi0);
        }
    }
    assert!(traj.max_orthogonality_defect() <= 1e-13);
}

#[test]
fn connected_rest_stays_at_rest() {
    let p = ConnectedParams::default();
    let s0 = ConnectedState::rest(Mat3::identity(), exp_so3(&Vec3::new(0.2, 0.0, 0.1)));
    let traj = propagate(&p, &s0, None, 100, 0.01).unwrap();
    for s in &traj.states {
        assert_eq!(s.omega1, Vec3::zeros());
        assert_eq!(s.omega2, Vec3::zeros());
        assert_eq!(s.r1, s0.r1);
    }
}

/// Least-squares slope of `y` against the sample index.
fn slope(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let mx = (n - 1.0) / 2.0;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (i, v) in y.iter().enumerate() {
        let dx = i as f64 - mx;
        sxy += dx * (v - my);
        sxx += dx * dx;
    }
    sxy / sxx
}

#[test]
fn energy_bounded_without_drift() {
    let p = CartPendulumParams::default();
    let mut s0 = CartPendulumState::rest(exp_so3(&Vec3::new(0.5, -0.3, 0.0)));
    s0.omega = Vec3::new(0.1, 0.2, 0.4);
    let traj = propagate(&p, &s0, None, 10_000, 0.01).unwrap();
    let e: Vec<f64> = traj.diagnostics.iter().map(|d| d.energy).collect();
    let dev = e.iter().map(|x| (x - e[0]).abs()).fold(0.0, f64::max);
    assert!(dev < 1e-2 * e[0].abs().max(1.0), "cart energy deviation {dev}");
    assert!(slope(&e).abs() < 1e-9, "cart slope {}", slope(&e));

    let p = ConnectedParams::default();
    let mut s0 = ConnectedState::rest(Mat3::identity(), exp_so3(&Vec3::new(0.0, 0.5, 0.0)));
    s0.omega1 = Vec3::new(0.5, -0.2, 0.1);
    s0.omega2 = Vec3::new(0.0, 0.3, -0.4);
    let traj = propagate(&p, &s0, None, 10_000, 0.01).unwrap();
    let e: Vec<f64> = traj.diagnostics.iter().map(|d| d.energy).collect();
    let dev = e.iter().map(|x| (x - e[0]).abs()).fold(0.0, f64::max);
    assert!(dev < 1e-2 * e[0].abs(), "connected energy deviation {dev}");
    assert!(slope(&e).abs() < 1e-10, "connected slope {}", slope(&e));
}

#[test]
fn ad_linearization_matches_finite_differences() {
    let cart = CartPendulumParams::default();
    let mut s = CartPendulumState::rest(exp_so3(&Vec3::new(0.4, 0.3, 0.2)));
    s.omega = Vec3::new(0.2, -0.3, 0.5);
    s.xdot = 0.3;
    let a = linearize_ad(&cart, &s, &[0.5, -1.0], 0.01).unwrap();
    let f = linearize_fd(&cart, &s, &[0.5, -1.0], 0.01, 1e-6).unwrap();
    assert!(relative_difference(&a, &f) < 1e-5);

    let conn = ConnectedParams::default();
    let mut s = ConnectedState::rest(exp_so3(&Vec3::new(0.4, 0.3, 0.2)), Mat3::identity());
    s.omega2 = Vec3::new(0.2, -0.3, 0.5);
    let a = linearize_ad(&conn, &s, &[0.5, -1.0, 0.2], 0.01).unwrap();
    let f = linearize_fd(&conn, &s, &[0.5, -1.0, 0.2], 0.01, 1e-6).unwrap();
    assert!(relative_difference(&a, &f) < 1e-5);
}
