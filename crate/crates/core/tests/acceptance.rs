//! Acceptance suite. Each test checks one criterion at its stated tolerance
//! and runtime budget, and writes a `[PASS]` or `[FAIL]` line to stderr
//! (bypassing the test harness capture, so the lines always show).

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::{Duration, Instant};

use auv_formation::flow::{flow_velocity, stream_function, FlowParams};
use auv_formation::io::{compare_runs, export_results, parse_scenario, summarize, Comparison};
use auv_formation::plant::rk4_step;
use auv_formation::sim::{
    compute_metrics, detect_convergence, lyapunov_check, run, Scenario, SimLog,
};
use auv_formation::smc::{validate_gains, GainViolation, SuperTwistGains};
use auv_formation::thruster::{Allocator, ThrusterConfig, Wrench5};
use auv_formation::vehicle::{
    dynamics_inertial_terms, kinematic_transform, RigidBodyParams, VehicleState,
};
use nalgebra::{Vector1, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Heavy criteria share one CPU; running them one at a time keeps each
/// runtime measurement honest.
static GATE: Mutex<()> = Mutex::new(());

fn gate() -> MutexGuard<'static, ()> {
    GATE.lock().unwrap_or_else(|p| p.into_inner())
}

fn report(n: u32, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "[{tag}] criterion {n}: {detail}");
    assert!(pass, "criterion {n} failed: {detail}");
}

fn scenario_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/spiral.toml")
}

fn spiral() -> Scenario<f64> {
    parse_scenario(&scenario_path()).unwrap()
}

fn spiral_run() -> &'static (SimLog<f64>, Duration) {
    static RUN: OnceLock<(SimLog<f64>, Duration)> = OnceLock::new();
    RUN.get_or_init(|| {
        let sc = spiral();
        let t0 = Instant::now();
        let log = run(&sc).unwrap();
        (log, t0.elapsed())
    })
}

fn comparison() -> &'static (Comparison, Duration) {
    static CMP: OnceLock<(Comparison, Duration)> = OnceLock::new();
    CMP.get_or_init(|| {
        let sc = spiral();
        let t0 = Instant::now();
        let c = compare_runs(&sc).unwrap();
        (c, t0.elapsed())
    })
}

#[test]
fn criterion_01_flow_field_oracle() {
    let _g = gate();
    let t0 = Instant::now();
    let p = FlowParams::<f64>::default();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let (x, y, t) = (
            rng.gen_range(-10.0..10.0),
            rng.gen_range(-4.0..4.0),
            rng.gen_range(0.0..100.0),
        );
        let (u, v) = flow_velocity(x, y, t, &p);
        let dc_dy =
            (stream_function(x, y + h, t, &p) - stream_function(x, y - h, t, &p)) / (2.0 * h);
        let dc_dx =
            (stream_function(x + h, y, t, &p) - stream_function(x - h, y, t, &p)) / (2.0 * h);
        worst = worst.max((u + dc_dy).abs()).max((v - dc_dx).abs());
    }
    let el = t0.elapsed();
    report(
        1,
        worst < 1e-6 && el < Duration::from_secs(1),
        &format!("max |analytic - central difference| = {worst:.2e} (< 1e-6) in {el:.2?} (< 1 s)"),
    );
}

#[test]
fn criterion_02_skew_symmetry() {
    let _g = gate();
    let t0 = Instant::now();
    let p = RigidBodyParams::<f64>::default();
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let mut r = |s: f64| rng.gen_range(-s..s);
        let s = VehicleState {
            eta1: Vector3::new(r(10.0), r(10.0), r(10.0)),
            eta2: Vector3::new(r(1.0), r(1.2), r(3.0)),
            nu1: Vector3::new(r(1.0), r(1.0), r(1.0)),
            nu2: Vector3::new(r(0.5), r(0.5), r(0.5)),
        };
        let sigma = Vector6::from_fn(|_, _| r(1.0));
        let e_dot = kinematic_transform(&s).unwrap().full * s.velocity();
        let m_at = |sgn: f64| {
            let pose = s.pose() + e_dot * (sgn * h);
            dynamics_inertial_terms(&VehicleState::from_vectors(&pose, &s.velocity()), &p)
                .unwrap()
                .m_e
        };
        let m_dot = (m_at(1.0) - m_at(-1.0)) / (2.0 * h);
        let c_e = dynamics_inertial_terms(&s, &p).unwrap().c_e;
        worst = worst.max(sigma.dot(&((m_dot - c_e * 2.0) * sigma)).abs());
    }
    let el = t0.elapsed();
    report(
        2,
        worst < 1e-6 && el < Duration::from_secs(5),
        &format!("max |s^T (M_e' - 2 C_e) s| = {worst:.2e} (< 1e-6) in {el:.2?} (< 5 s)"),
    );
}

#[test]
fn criterion_03_gain_feasibility() {
    let _g = gate();
    let t0 = Instant::now();
    let nominal = SuperTwistGains::<f64> {
        lambda: 2.1,
        rho: 0.36,
        w_gain: 0.3,
        sigma0: 0.1,
        phi: 0.2,
        gamma_big: 1.0,
        gamma_small: 1.0,
        ..Default::default()
    };
    let accepted = validate_gains(&nominal).is_ok();
    let only = |g: SuperTwistGains<f64>, want: fn(&GainViolation) -> bool| match validate_gains(&g)
    {
        Err(v) => v.len() == 1 && want(&v[0]),
        Ok(()) => false,
    };
    let cases = [
        (
            "W <= Phi/Gamma_M",
            only(
                SuperTwistGains {
                    w_gain: 0.15,
                    ..nominal
                },
                |v| matches!(v, GainViolation::SwitchingGain { .. }),
            ),
        ),
        (
            "rho > 0.5",
            only(
                SuperTwistGains {
                    rho: 0.6,
                    ..nominal
                },
                |v| matches!(v, GainViolation::Exponent { .. }),
            ),
        ),
        (
            "rho <= 0",
            only(
                SuperTwistGains {
                    rho: 0.0,
                    ..nominal
                },
                |v| matches!(v, GainViolation::Exponent { .. }),
            ),
        ),
        (
            "lambda^2 below bound",
            only(
                SuperTwistGains {
                    lambda: 1.9,
                    ..nominal
                },
                |v| matches!(v, GainViolation::TwistGain { .. }),
            ),
        ),
    ];
    let rejected = cases.iter().all(|(_, ok)| *ok);
    let el = t0.elapsed();
    let detail: Vec<String> = cases
        .iter()
        .map(|(name, ok)| {
            format!(
                "{name}: {}",
                if *ok {
                    "rejected"
                } else {
                    "NOT rejected alone"
                }
            )
        })
        .collect();
    report(
        3,
        accepted && rejected && el < Duration::from_secs(1),
        &format!(
            "nominal gains {}; {} in {el:.2?} (< 1 s)",
            if accepted { "accepted" } else { "REJECTED" },
            detail.join(", ")
        ),
    );
}

#[test]
fn criterion_04_lyapunov_decrease() {
    let _g = gate();
    let (log, el) = spiral_run();
    let tol = log.dt * log.dt;
    let check = lyapunov_check(log, tol);
    let unflagged = check.increases.iter().filter(|e| !e.flagged).count();
    let worst = check
        .increases
        .iter()
        .filter(|e| e.flagged)
        .map(|e| e.delta)
        .fold(0.0f64, f64::max);
    report(
        4,
        log.completed() && check.checked > 0 && check.passed() && *el < Duration::from_secs(60),
        &format!(
            "{} flagged intervals, {} increases above dt^2 = {tol:.0e} (largest flagged increase {worst:.2e}); \
             {unflagged} increases with the assumption unverified, logged; run {el:.2?} (< 60 s)",
            check.checked,
            check.violations.len()
        ),
    );
}

#[test]
fn criterion_05_table_envelope() {
    let _g = gate();
    let (log, el) = spiral_run();
    let sc = spiral();
    let t_c = detect_convergence(log, sc.convergence_threshold);
    let Some(tc) = t_c else {
        report(5, false, "formation never converged");
        return;
    };
    let m = compute_metrics(log, tc).unwrap();
    let all: Vec<_> = m
        .per_vehicle
        .iter()
        .chain(std::iter::once(&m.formation))
        .collect();
    let pos = all
        .iter()
        .flat_map(|a| a.iter().map(|x| x.position.rmse))
        .fold(0.0, f64::max);
    let spd = all
        .iter()
        .flat_map(|a| a.iter().map(|x| x.speed.rmse))
        .fold(0.0, f64::max);
    let f = &m.formation;
    let pass = log.completed()
        && sc.vehicles.len() == 3
        && sc.flow.layers.speed_cap == 0.5
        && sc.flow.disturbance.force_clamp == 20.0
        && pos <= 0.25
        && spd <= 0.25
        && tc <= 20.0
        && *el < Duration::from_secs(120);
    report(
        5,
        pass,
        &format!(
            "t_c = {tc:.2} s (<= 20); pooled position RMSE x/y/z = {:.4}/{:.4}/{:.4} m, speed RMSE = {:.4}/{:.4}/{:.4} m/s; \
             worst over vehicles {pos:.4} m, {spd:.4} m/s (<= 0.25); run {el:.2?} (< 120 s)",
            f[0].position.rmse, f[1].position.rmse, f[2].position.rmse, f[0].speed.rmse, f[1].speed.rmse, f[2].speed.rmse
        ),
    );
}

#[test]
fn criterion_06_comparison() {
    let _g = gate();
    let (c, el) = comparison();
    let (p, b) = (&c.proposed_metrics.formation, &c.baseline_metrics.formation);
    let lower = (0..2).all(|a| p[a].position.rmse < b[a].position.rmse);
    let chatter = 2 * c.proposed_chatter <= c.baseline_chatter;
    report(
        6,
        c.proposed.completed() && c.baseline.completed() && lower && chatter && *el < Duration::from_secs(240),
        &format!(
            "position RMSE from t = {:.2} s: x {:.4} vs {:.4}, y {:.4} vs {:.4} m; control sign flips {} vs {} \
             (limit half); both runs {el:.2?} (< 240 s)",
            c.window_start,
            p[0].position.rmse,
            b[0].position.rmse,
            p[1].position.rmse,
            b[1].position.rmse,
            c.proposed_chatter,
            c.baseline_chatter
        ),
    );
}

#[test]
fn criterion_07_heave_channel() {
    let _g = gate();
    let (log, _) = spiral_run();
    let sc = spiral();
    let field =
        auv_formation::flow::FlowField::new(sc.flow.params, sc.flow.layers.clone()).unwrap();
    let horizontal = log
        .snapshots
        .iter()
        .all(|s| s.vehicles.iter().all(|r| r.flow.z == 0.0))
        && field.velocity(40.0, 40.0, -3.0, 0.0).z == 0.0;
    let ratios: Vec<f64> = (0..log.vehicle_count)
        .map(|v| {
            let (mut z, mut x) = (0.0, 0.0);
            for (_, r) in log.vehicle(v) {
                z += r.u2.z.abs();
                x += r.u2.x.abs();
            }
            z / x
        })
        .collect();
    let worst = ratios.iter().copied().fold(0.0, f64::max);
    let shown: Vec<String> = ratios
        .iter()
        .map(|r| format!("{:.2}%", 100.0 * r))
        .collect();
    report(
        7,
        horizontal && worst < 0.1,
        &format!(
            "mean |u2_z| / mean |u2_x| per vehicle = {} (< 10%)",
            shown.join(", ")
        ),
    );
}

#[test]
fn criterion_08_allocation_round_trip() {
    let _g = gate();
    let t0 = Instant::now();
    let alloc = Allocator::new(ThrusterConfig::<f64>::default()).unwrap();
    let lim = alloc.config().u_limit;
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let u = Vector3::from_fn(|_, _| rng.gen_range(-lim..lim));
        let tau = Wrench5(alloc.tcm() * u);
        let a = alloc.allocate(&tau);
        worst = worst.max((alloc.tcm() * a.thrust - tau.0).amax());
    }
    let el = t0.elapsed();
    report(
        8,
        worst < 1e-9 && el < Duration::from_secs(1),
        &format!("max reconstruction error {worst:.2e} (< 1e-9) in {el:.2?} (< 1 s)"),
    );
}

#[test]
fn criterion_09_integrator_order() {
    let _g = gate();
    let t0 = Instant::now();
    let error = |dt: f64| {
        let n = (1.0 / dt).round() as usize;
        let mut x = Vector1::new(1.0);
        for k in 0..n {
            x = rk4_step(k as f64 * dt, &x, dt, |_, y| Ok(-y)).unwrap();
        }
        (x[0] - (-1.0f64).exp()).abs()
    };
    let order = (error(0.04) / error(0.01)).log(4.0);
    let el = t0.elapsed();
    report(
        9,
        order >= 3.8 && el < Duration::from_secs(1),
        &format!(
            "observed order {order:.3} between dt = 0.04 and 0.01 (>= 3.8) in {el:.2?} (< 1 s)"
        ),
    );
}

#[test]
fn criterion_10_determinism() {
    let _g = gate();
    let (first, el1) = spiral_run();
    let (c, el2) = comparison();
    let second = &c.proposed;
    let dir = tempfile::tempdir().unwrap();
    let files = |log: &SimLog<f64>, name: &str| {
        let summary = summarize(log, spiral().convergence_threshold).unwrap();
        let b = export_results(log, &summary, &dir.path().join(name)).unwrap();
        let mut paths = vec![b.timeseries, b.metrics, b.summary, b.lyapunov];
        paths.extend(b.phase);
        paths
            .iter()
            .map(|p| std::fs::read(p).unwrap())
            .collect::<Vec<_>>()
    };
    let identical = first == second && files(first, "a") == files(second, "b");
    let el = *el1 + *el2;
    report(
        10,
        identical && first.completed() && el < Duration::from_secs(240),
        &format!(
            "two seeded runs of the spiral scenario {} ({} records each); {el:.2?} (< 240 s)",
            if identical {
                "byte-identical"
            } else {
                "DIFFER"
            },
            first.len()
        ),
    );
}
