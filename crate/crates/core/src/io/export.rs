//! CSV export of simulation results.
//!
//! Every table is comma-separated UTF-8 with one header row and LF line
//! endings. Floats are written with Rust's shortest round-trip formatting,
//! so parsing a cell gives back the exact logged value.
//!
//! Files written by [`export_results`]:
//!
//! | file | rows |
//! |------|------|
//! | `timeseries.csv` | one per logged step per vehicle, see [`timeseries_header`] |
//! | `metrics.csv` | one per vehicle and axis, then `formation` rows pooling all vehicles |
//! | `summary.csv` | `key,value` pairs: convergence time, window start, step count, abort |
//! | `phase_<v>.csv` | `t,eps_x,eps_dot_x,eps_y,eps_dot_y,eps_z,eps_dot_z` for vehicle `v` |
//! | `lyapunov.csv` | every increase of `V`: `vehicle,t_s,delta,flagged,violation` |

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::sim::{
    compute_metrics, detect_convergence, lyapunov_check, Metrics, SimLog, Workspace, AXIS_NAMES,
};

const POSE: [&str; 6] = ["x", "y", "z", "phi", "theta", "psi"];
const BODY: [&str; 6] = ["u", "v", "w", "p", "q", "r"];
const WRENCH: [&str; 6] = ["x", "y", "z", "k", "m", "n"];

/// Convergence time and post-convergence metrics of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    /// First time after which every vehicle stays inside the threshold.
    /// Always `None` for an aborted run.
    pub convergence_time: Option<f64>,
    /// Statistics from the convergence time on, or over the whole run if
    /// the formation never converged. `None` for an empty log.
    pub metrics: Option<Metrics<f64>>,
    /// Tolerance on flagged Lyapunov increases.
    pub lyapunov_tolerance: f64,
}

pub fn summarize(log: &SimLog<f64>, threshold: f64) -> Result<RunSummary> {
    let convergence_time = detect_convergence(log, threshold).filter(|_| log.completed());
    let metrics = if log.is_empty() {
        None
    } else {
        let start = convergence_time.unwrap_or(log.snapshots[0].t);
        Some(compute_metrics(log, start)?)
    };
    Ok(RunSummary {
        convergence_time,
        metrics,
        lyapunov_tolerance: log.dt * log.dt,
    })
}

/// Paths of the files written by one export.
#[derive(Debug, Clone, PartialEq)]
pub struct ExportBundle {
    pub timeseries: PathBuf,
    pub metrics: PathBuf,
    pub summary: PathBuf,
    pub phase: Vec<PathBuf>,
    pub lyapunov: PathBuf,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_path_buf(),
        source: e.into(),
    }
}

/// Writes `rows` under `header` to `path`.
pub(crate) fn write_table(
    path: &Path,
    header: &[String],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(csv_err(path))?;
    w.write_record(header).map_err(csv_err(path))?;
    for row in rows {
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn names<'a>(prefix: &str, axes: &'a [&str]) -> impl Iterator<Item = String> + 'a {
    let prefix = prefix.to_string();
    axes.iter().map(move |a| format!("{prefix}_{a}"))
}

fn num(x: f64) -> String {
    format!("{x}")
}

pub fn timeseries_header() -> Vec<String> {
    let mut h = vec!["t_s".to_string(), "vehicle".to_string()];
    h.extend(POSE.iter().map(|s| s.to_string()));
    h.extend(BODY.iter().map(|s| s.to_string()));
    h.extend(names("ref", &POSE));
    h.extend(names("ref_rate", &POSE));
    h.extend(names("eps", &POSE));
    h.extend(names("eps_dot", &POSE));
    h.extend(names("sigma", &POSE));
    h.extend(names("u1", &WRENCH));
    h.extend(names("u2", &WRENCH));
    h.extend(names("tau_cmd", &WRENCH));
    h.extend(names("tau", &WRENCH));
    h.extend(names("thrust", &["1", "2", "3"]));
    h.push("alloc_residual".into());
    h.extend(names("f_est", &WRENCH));
    h.push("lyapunov".into());
    h.push("assumption".into());
    h.extend(names("flow", &["u", "v", "w"]));
    h.extend(names("dist", &WRENCH));
    h.push("mpc_cost".into());
    h.push("mpc_feasible".into());
    h
}

fn timeseries_rows(log: &SimLog<f64>) -> impl Iterator<Item = Vec<String>> + '_ {
    log.snapshots.iter().flat_map(|s| {
        s.vehicles.iter().enumerate().map(move |(v, r)| {
            let mut row = vec![num(s.t), v.to_string()];
            let mut push = |xs: &[f64]| row.extend(xs.iter().copied().map(num));
            push(r.state.pose().as_slice());
            push(r.state.velocity().as_slice());
            push(r.pose_d.as_slice());
            push(r.rate_d.as_slice());
            push(r.eps.as_slice());
            push(r.eps_dot.as_slice());
            push(r.sigma.as_slice());
            push(r.u1.as_slice());
            push(r.u2.as_slice());
            push(r.tau_cmd.as_slice());
            push(r.tau_applied.as_slice());
            push(r.thrust.as_slice());
            push(&[r.alloc_residual]);
            push(r.f_est.as_slice());
            push(&[r.lyapunov]);
            row.push(u8::from(r.assumption).to_string());
            let mut push = |xs: &[f64]| row.extend(xs.iter().copied().map(num));
            push(r.flow.as_slice());
            push(r.disturbance.as_slice());
            row.push(r.mpc_cost.map(num).unwrap_or_default());
            row.push(u8::from(r.mpc_feasible).to_string());
            row
        })
    })
}

pub fn metrics_header() -> Vec<String> {
    [
        "vehicle",
        "axis",
        "speed_min_m_s",
        "speed_max_m_s",
        "speed_rmse_m_s",
        "position_min_m",
        "position_max_m",
        "position_rmse_m",
    ]
    .map(String::from)
    .to_vec()
}

fn metrics_rows(m: Option<&Metrics<f64>>) -> Vec<Vec<String>> {
    let Some(m) = m else { return Vec::new() };
    let labelled = m
        .per_vehicle
        .iter()
        .enumerate()
        .map(|(v, axes)| (v.to_string(), axes))
        .chain(std::iter::once(("formation".to_string(), &m.formation)));
    labelled
        .flat_map(|(label, axes)| {
            axes.iter().zip(AXIS_NAMES).map(move |(a, name)| {
                vec![
                    label.clone(),
                    name.to_string(),
                    num(a.speed.min),
                    num(a.speed.max),
                    num(a.speed.rmse),
                    num(a.position.min),
                    num(a.position.max),
                    num(a.position.rmse),
                ]
            })
        })
        .collect()
}

fn summary_rows(log: &SimLog<f64>, summary: &RunSummary) -> Vec<Vec<String>> {
    let opt = |x: Option<f64>| x.map(num).unwrap_or_default();
    let lyap = lyapunov_check(log, summary.lyapunov_tolerance);
    let pairs = [
        ("convergence_time_s", opt(summary.convergence_time)),
        ("converged", summary.convergence_time.is_some().to_string()),
        (
            "window_start_s",
            opt(summary.metrics.as_ref().map(|m| m.window_start)),
        ),
        ("records", log.len().to_string()),
        ("vehicles", log.vehicle_count.to_string()),
        ("dt_s", num(log.dt)),
        ("lyapunov_checked_intervals", lyap.checked.to_string()),
        ("lyapunov_violations", lyap.violations.len().to_string()),
        (
            "lyapunov_unflagged_increases",
            (lyap.increases.len() - lyap.violations.len()).to_string(),
        ),
        ("abort_t_s", opt(log.abort.as_ref().map(|a| a.t))),
        (
            "abort_vehicle",
            log.abort
                .as_ref()
                .and_then(|a| a.vehicle)
                .map(|v| v.to_string())
                .unwrap_or_default(),
        ),
        (
            "abort_message",
            log.abort
                .as_ref()
                .map(|a| a.message.clone())
                .unwrap_or_default(),
        ),
    ];
    pairs
        .into_iter()
        .map(|(k, v)| vec![k.to_string(), v])
        .collect()
}

fn lyapunov_rows(log: &SimLog<f64>, tolerance: f64) -> Vec<Vec<String>> {
    lyapunov_check(log, tolerance)
        .increases
        .iter()
        .map(|e| {
            vec![
                e.vehicle.to_string(),
                num(e.t),
                num(e.delta),
                u8::from(e.flagged).to_string(),
                u8::from(e.flagged && e.delta > tolerance).to_string(),
            ]
        })
        .collect()
}

/// Writes the full result set of one run into `out_dir`, creating it if needed.
pub fn export_results(
    log: &SimLog<f64>,
    summary: &RunSummary,
    out_dir: &Path,
) -> Result<ExportBundle> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let bundle = ExportBundle {
        timeseries: out_dir.join("timeseries.csv"),
        metrics: out_dir.join("metrics.csv"),
        summary: out_dir.join("summary.csv"),
        phase: (0..log.vehicle_count)
            .map(|v| out_dir.join(format!("phase_{v}.csv")))
            .collect(),
        lyapunov: out_dir.join("lyapunov.csv"),
    };
    write_table(
        &bundle.timeseries,
        &timeseries_header(),
        timeseries_rows(log),
    )?;
    write_table(
        &bundle.metrics,
        &metrics_header(),
        metrics_rows(summary.metrics.as_ref()),
    )?;
    write_table(
        &bundle.summary,
        &["key".to_string(), "value".to_string()],
        summary_rows(log, summary),
    )?;
    let phase_header: Vec<String> = std::iter::once("t_s".to_string())
        .chain(
            AXIS_NAMES
                .iter()
                .flat_map(|a| [format!("eps_{a}"), format!("eps_dot_{a}")]),
        )
        .collect();
    for (v, path) in bundle.phase.iter().enumerate() {
        let rows = log.vehicle(v).map(|(t, r)| {
            std::iter::once(num(t))
                .chain((0..3).flat_map(|a| [num(r.eps[a]), num(r.eps_dot[a])]))
                .collect()
        });
        write_table(path, &phase_header, rows)?;
    }
    write_table(
        &bundle.lyapunov,
        &["vehicle", "t_s", "delta", "flagged", "violation"].map(String::from),
        lyapunov_rows(log, summary.lyapunov_tolerance),
    )?;
    Ok(bundle)
}

/// Samples the current on a 1 m lattice covering `workspace` at each time
/// in `times`. Columns: `x_m,y_m,z_m,t_s,u_m_s,v_m_s,w_m_s`; the vertical
/// component is always zero.
pub fn flow_grid_rows(
    field: &FlowField<f64>,
    workspace: &Workspace<f64>,
    times: &[f64],
) -> Vec<[f64; 7]> {
    let lattice = |(lo, hi): (f64, f64)| {
        let first = lo.ceil() as i64;
        let last = hi.floor() as i64;
        (first..=last).map(|i| i as f64).collect::<Vec<_>>()
    };
    let (xs, ys, zs) = (
        lattice(workspace.x),
        lattice(workspace.y),
        lattice(workspace.z),
    );
    let mut rows = Vec::with_capacity(times.len() * xs.len() * ys.len() * zs.len());
    for &t in times {
        for &z in &zs {
            for &y in &ys {
                for &x in &xs {
                    let u = field.velocity(x, y, z, t);
                    rows.push([x, y, z, t, u.x, u.y, u.z]);
                }
            }
        }
    }
    rows
}

pub fn export_flow_grid(
    field: &FlowField<f64>,
    workspace: &Workspace<f64>,
    times: &[f64],
    out: &Path,
) -> Result<usize> {
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let rows = flow_grid_rows(field, workspace, times);
    let n = rows.len();
    write_table(
        out,
        &["x_m", "y_m", "z_m", "t_s", "u_m_s", "v_m_s", "w_m_s"].map(String::from),
        rows.into_iter()
            .map(|r| r.iter().copied().map(num).collect()),
    )?;
    Ok(n)
}
