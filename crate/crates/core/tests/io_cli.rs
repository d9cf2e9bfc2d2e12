use std::path::{Path, PathBuf};
use std::process::Command;

use auv_formation::flow::{flow_velocity, FlowField, LayeredField};
use auv_formation::io::{
    export_flow_grid, export_results, flow_grid_rows, metrics_header, parse_scenario,
    parse_scenario_str, serialize_scenario, summarize, timeseries_header,
};
use auv_formation::sim::{run, SimLog, Workspace};
use proptest::prelude::*;

fn shipped() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/spiral.toml")
}

fn short_scenario(dir: &Path, extra: &str) -> PathBuf {
    let text = format!(
        "[sim]\ndt_s = 0.01\nduration_s = 0.5\nseed = 3\n{extra}\n\
         [trajectory]\nkind = \"spiral\"\nduration_s = 10\ncenter_m = [40, 40, -3]\nradius_m = 12\n\
         angular_rate_rad_s = 0.06\nvertical_rate_m_s = -0.1\n\
         [vehicles]\ninitial_error_m = [0.8, -0.6, 0.3]\n\
         [mpc]\ncandidate_count = 4\nrounds = 1\n"
    );
    let path = dir.join("short.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn auvsim() -> Command {
    Command::new(env!("CARGO_BIN_EXE_auvsim"))
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn export_is_byte_identical_on_reexport() {
    let dir = tempfile::tempdir().unwrap();
    let sc = parse_scenario(&short_scenario(dir.path(), "")).unwrap();
    let log = run(&sc).unwrap();
    let summary = summarize(&log, sc.convergence_threshold).unwrap();
    let a = export_results(&log, &summary, &dir.path().join("a")).unwrap();
    let b = export_results(&log, &summary, &dir.path().join("b")).unwrap();
    assert_eq!(read(&a.timeseries), read(&b.timeseries));
    assert_eq!(read(&a.metrics), read(&b.metrics));
    assert_eq!(read(&a.summary), read(&b.summary));
    assert_eq!(read(&a.lyapunov), read(&b.lyapunov));
    for (p, q) in a.phase.iter().zip(&b.phase) {
        assert_eq!(read(p), read(q));
    }
    let ts = read(&a.timeseries);
    assert!(!ts.contains('\r'));
    assert_eq!(ts.lines().count(), 1 + log.len() * 3);
    assert_eq!(
        ts.lines().next().unwrap().split(',').count(),
        timeseries_header().len()
    );
}

#[test]
fn exported_values_parse_back_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let sc = parse_scenario(&short_scenario(dir.path(), "")).unwrap();
    let log = run(&sc).unwrap();
    let summary = summarize(&log, sc.convergence_threshold).unwrap();
    let b = export_results(&log, &summary, dir.path()).unwrap();
    let mut rdr = csv::Reader::from_path(&b.timeseries).unwrap();
    let header = rdr.headers().unwrap().clone();
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let (ix, isig) = (col("eps_x"), col("sigma_psi"));
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.unwrap();
        let r = &log.snapshots[k / 3].vehicles[k % 3];
        assert_eq!(rec[ix].parse::<f64>().unwrap(), r.eps.x);
        assert_eq!(rec[isig].parse::<f64>().unwrap(), r.sigma[5]);
    }
}

#[test]
fn metrics_table_has_axis_rows() {
    let dir = tempfile::tempdir().unwrap();
    let sc = parse_scenario(&short_scenario(dir.path(), "")).unwrap();
    let log = run(&sc).unwrap();
    let summary = summarize(&log, sc.convergence_threshold).unwrap();
    let b = export_results(&log, &summary, dir.path()).unwrap();
    let text = read(&b.metrics);
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "vehicle,axis,speed_min_m_s,speed_max_m_s,speed_rmse_m_s,position_min_m,position_max_m,position_rmse_m"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 4 * 3);
    assert!(rows[9].starts_with("formation,x,"));
    assert_eq!(metrics_header().len(), 8);
}

#[test]
fn empty_log_gives_header_only_tables() {
    let dir = tempfile::tempdir().unwrap();
    let log = SimLog::<f64>::new(0.01, 2);
    let summary = summarize(&log, 0.1).unwrap();
    assert!(summary.metrics.is_none());
    let b = export_results(&log, &summary, dir.path()).unwrap();
    for p in [
        &b.timeseries,
        &b.metrics,
        &b.lyapunov,
        &b.phase[0],
        &b.phase[1],
    ] {
        assert_eq!(read(p).lines().count(), 1, "{}", p.display());
    }
}

#[test]
fn unwritable_output_reported() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let log = SimLog::<f64>::new(0.01, 1);
    let summary = summarize(&log, 0.1).unwrap();
    let err = export_results(&log, &summary, &blocker.join("sub")).unwrap_err();
    assert!(matches!(err, auv_formation::Error::Io { .. }));
}

#[test]
fn single_point_grid_matches_flow_function() {
    let field = FlowField::new(Default::default(), LayeredField::default()).unwrap();
    let ws = Workspace {
        x: (3.0, 3.0),
        y: (41.0, 41.0),
        z: (-1.0, -1.0),
    };
    let rows = flow_grid_rows(&field, &ws, &[2.5]);
    assert_eq!(rows.len(), 1);
    let (u, v) = flow_velocity((3.0 - 0.0) / 4.0, (41.0 - 40.0) / 4.0, 2.5, &field.params);
    let g = field.surface_gain();
    assert!((rows[0][4] - u * g).abs() < 1e-12 && (rows[0][5] - v * g).abs() < 1e-12);
    assert_eq!(rows[0][6], 0.0);
    assert_eq!(&rows[0][..4], &[3.0, 41.0, -1.0, 2.5]);
}

#[test]
fn grid_speeds_follow_layer_rule() {
    let field = FlowField::new(Default::default(), LayeredField::default()).unwrap();
    let ws = Workspace::default();
    let times: Vec<f64> = (0..8).map(|k| k as f64 * 2.0).collect();
    let rows = flow_grid_rows(&field, &ws, &times);
    assert_eq!(rows.len(), 8 * 81 * 81 * 21);
    let peak = |lo: f64, hi: f64| {
        rows.iter()
            .filter(|r| r[2] > lo && r[2] < hi)
            .map(|r| r[4].hypot(r[5]))
            .fold(0.0, f64::max)
    };
    // one sample depth strictly inside each layer
    let (top, mid, deep) = (peak(-3.5, -2.5), peak(-10.5, -9.5), peak(-17.5, -16.5));
    assert!(top <= 0.5 + 1e-12 && top > 0.45, "surface peak {top}");
    assert!((top / mid - 2.4).abs() < 1e-9, "ratio {}", top / mid);
    assert!((top / deep - 4.0).abs() < 1e-9, "ratio {}", top / deep);
}

#[test]
fn flow_grid_file_written() {
    let dir = tempfile::tempdir().unwrap();
    let field = FlowField::new(Default::default(), LayeredField::default()).unwrap();
    let ws = Workspace {
        x: (0.0, 2.0),
        y: (0.0, 1.0),
        z: (-1.0, 0.0),
    };
    let out = dir.path().join("grids/flow.csv");
    let n = export_flow_grid(&field, &ws, &[0.0, 1.0], &out).unwrap();
    assert_eq!(n, 2 * 3 * 2 * 2);
    let text = read(&out);
    assert_eq!(
        text.lines().next().unwrap(),
        "x_m,y_m,z_m,t_s,u_m_s,v_m_s,w_m_s"
    );
    assert_eq!(text.lines().count(), n + 1);
}

#[test]
fn parse_error_reports_location() {
    let err = parse_scenario_str("[sim]\ndt_s = \"fast\"\n", Path::new("bad.toml")).unwrap_err();
    let msg = err.to_string();
    assert!(
        msg.starts_with("bad.toml") && msg.contains("line 2"),
        "{msg}"
    );
}

#[test]
fn shipped_scenario_round_trips() {
    let s = parse_scenario(&shipped()).unwrap();
    let again = parse_scenario_str(&serialize_scenario(&s).unwrap(), Path::new("rt")).unwrap();
    assert_eq!(again, s);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]
    #[test]
    fn round_trip_preserves_scenario(
        dt in 0.001..0.05f64,
        seed in any::<u64>(),
        err in proptest::array::uniform3(-1.0..1.0f64),
        rho in 0.05..0.5f64,
        mismatch in 0.5..1.0f64,
        radius in 2.0..20.0f64,
        kind in 0..3usize,
    ) {
        let traj = match kind {
            0 => format!("kind = \"spiral\"\ncenter_m = [40, 40, -3]\nradius_m = {radius}\nangular_rate_rad_s = 0.05"),
            1 => "kind = \"line\"\nstart_m = [10, 10, -4]\nvelocity_m_s = [0.3, 0.1, 0]\nheading_rad = 0.32".into(),
            _ => format!("kind = \"waypoints\"\npoints_m = [[10, 10, -4], [{}, 20, -6], [30, 30, -6]]\nspeed_m_s = 0.5", 10.0 + radius),
        };
        let text = format!(
            "[sim]\ndt_s = {dt}\nseed = {seed}\n[trajectory]\nduration_s = 20\n{traj}\n\
             [vehicles]\ninitial_error_m = [{}, {}, {}]\nmismatch_factor = {mismatch}\n[controller]\nrho = {rho}\n",
            err[0], err[1], err[2]
        );
        let s = parse_scenario_str(&text, Path::new("p")).unwrap();
        let again = parse_scenario_str(&serialize_scenario(&s).unwrap(), Path::new("p")).unwrap();
        prop_assert_eq!(again, s);
    }
}

#[test]
fn cli_validate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = auvsim().arg("validate").arg(shipped()).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("valid (3 vehicles"));

    let bad = short_scenario(dir.path(), "");
    std::fs::write(&bad, read(&bad) + "[controller]\nrho = 0.6\n").unwrap();
    let out = auvsim().arg("validate").arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("rho = 0.6 must lie in (0, 0.5]"));

    let missing = auvsim()
        .arg("validate")
        .arg(dir.path().join("nope.toml"))
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn cli_run_exports_and_honours_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let sc = short_scenario(dir.path(), "");
    let out = dir.path().join("out");
    let status = auvsim()
        .args(["run"])
        .arg(&sc)
        .arg("-o")
        .arg(&out)
        .args(["--seed", "9", "--dt", "0.02"])
        .output()
        .unwrap();
    assert_eq!(
        status.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&status.stderr)
    );
    let stdout = String::from_utf8_lossy(&status.stdout);
    assert!(stdout.contains("pos RMSE"), "{stdout}");
    let ts = read(&out.join("timeseries.csv"));
    // 0.5 s at 0.02 s gives 26 records per vehicle
    assert_eq!(ts.lines().count(), 1 + 26 * 3);
    for f in [
        "metrics.csv",
        "summary.csv",
        "phase_0.csv",
        "phase_2.csv",
        "lyapunov.csv",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let bad_dt = auvsim()
        .arg("run")
        .arg(&sc)
        .arg("-o")
        .arg(&out)
        .arg("--dt=-1")
        .output()
        .unwrap();
    assert_eq!(bad_dt.status.code(), Some(1));
}

#[test]
fn cli_run_abort_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    // pitching through the Euler-angle singularity ends the run early
    let text = "[sim]\ndt_s = 0.01\nduration_s = 2.0\n\
                [trajectory]\nkind = \"line\"\nduration_s = 10\nstart_m = [40, 40, -5]\nvelocity_m_s = [0.5, 0, 0]\n\
                [formation]\noffsets_m = []\n[mpc]\nenabled = false\n\
                [[vehicles.initial]]\npose = [40, 40, -5, 0, 1.5, 0]\nvelocity = [0, 0, 0, 0, 3, 0]\n";
    let sc = dir.path().join("tumble.toml");
    std::fs::write(&sc, text).unwrap();
    let out_dir = dir.path().join("o");
    let out = auvsim()
        .arg("run")
        .arg(&sc)
        .arg("-o")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("singularity"));
    let summary = read(&out_dir.join("summary.csv"));
    assert!(summary.contains("converged,false\n"), "{summary}");
    assert!(
        summary.contains("abort_message,\"Euler-angle singularity"),
        "{summary}"
    );
}

#[test]
fn cli_usage_errors_exit_one() {
    let out = auvsim()
        .args(["run", "x.toml", "--dt", "-1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = auvsim().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = auvsim().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn cli_compare_and_flow_grid() {
    let dir = tempfile::tempdir().unwrap();
    let sc = short_scenario(dir.path(), "");
    let out = dir.path().join("cmp");
    let res = auvsim()
        .arg("compare")
        .arg(&sc)
        .arg("-o")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(
        res.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let cmp = read(&out.join("comparison.csv"));
    assert!(cmp.starts_with("quantity,proposed,baseline,ratio\n"));
    assert!(cmp.contains("chatter_sign_flips,"));
    assert!(out.join("errors.csv").exists());
    assert!(out.join("proposed/timeseries.csv").exists());
    assert!(out.join("baseline/metrics.csv").exists());

    let grid = dir.path().join("grid.csv");
    let res = auvsim()
        .arg("flow-grid")
        .arg(&sc)
        .arg("-o")
        .arg(&grid)
        .args(["--t", "0,1.5"])
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(0));
    assert_eq!(read(&grid).lines().count(), 1 + 2 * 81 * 81 * 21);
}
