//! Side-by-side runs of the proposed controller and the first-order baseline.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::sim::{chatter_count, compute_metrics, run, Metrics, Scenario, SimLog, AXIS_NAMES};

use super::export::{summarize, write_table, RunSummary};
use super::scenario::baseline_variant;

/// Both logs plus metrics computed over a shared window.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub proposed: SimLog<f64>,
    pub baseline: SimLog<f64>,
    pub proposed_summary: RunSummary,
    pub baseline_summary: RunSummary,
    /// Starts at the later of the two convergence times, or at zero when
    /// either run never converged.
    pub window_start: f64,
    pub proposed_metrics: Metrics<f64>,
    pub baseline_metrics: Metrics<f64>,
    /// Control sign flips summed over all vehicles and body axes.
    pub proposed_chatter: usize,
    pub baseline_chatter: usize,
}

impl Comparison {
    /// Proposed over baseline pooled position RMSE for x, y, z.
    pub fn rmse_ratio(&self) -> [f64; 3] {
        [0, 1, 2].map(|a| {
            self.proposed_metrics.formation[a].position.rmse
                / self.baseline_metrics.formation[a].position.rmse
        })
    }
}

pub fn total_chatter(log: &SimLog<f64>) -> usize {
    (0..log.vehicle_count)
        .flat_map(|v| (0..6).map(move |a| (v, a)))
        .map(|(v, a)| chatter_count(log, v, a))
        .sum()
}

/// Runs `scenario` as given and its baseline variant concurrently. Both share
/// the seed, flow and initial conditions.
pub fn compare_runs(scenario: &Scenario<f64>) -> Result<Comparison> {
    let base_scenario = baseline_variant(scenario);
    let (proposed, baseline) = std::thread::scope(|s| {
        let b = s.spawn(|| run(&base_scenario));
        let p = run(scenario);
        (p, b.join().expect("baseline run panicked"))
    });
    let (proposed, baseline) = (proposed?, baseline?);
    let threshold = scenario.convergence_threshold;
    let proposed_summary = summarize(&proposed, threshold)?;
    let baseline_summary = summarize(&baseline, threshold)?;
    let window_start = match (
        proposed_summary.convergence_time,
        baseline_summary.convergence_time,
    ) {
        (Some(a), Some(b)) => a.max(b),
        _ => 0.0,
    };
    let proposed_metrics = compute_metrics(&proposed, window_start)?;
    let baseline_metrics = compute_metrics(&baseline, window_start)?;
    Ok(Comparison {
        proposed_chatter: total_chatter(&proposed),
        baseline_chatter: total_chatter(&baseline),
        proposed,
        baseline,
        proposed_summary,
        baseline_summary,
        window_start,
        proposed_metrics,
        baseline_metrics,
    })
}

/// Writes `comparison.csv` (one row per axis plus the chatter and
/// convergence rows) and `errors.csv` (both runs' position errors per step
/// and vehicle). Returns the two paths.
pub fn export_comparison(c: &Comparison, out_dir: &Path) -> Result<[PathBuf; 2]> {
    std::fs::create_dir_all(out_dir).map_err(|source| Error::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let summary = out_dir.join("comparison.csv");
    let ratio = c.rmse_ratio();
    let mut rows: Vec<Vec<String>> = AXIS_NAMES
        .iter()
        .enumerate()
        .map(|(a, name)| {
            let (p, b) = (
                &c.proposed_metrics.formation[a],
                &c.baseline_metrics.formation[a],
            );
            vec![
                format!("position_rmse_{name}_m"),
                p.position.rmse.to_string(),
                b.position.rmse.to_string(),
                ratio[a].to_string(),
            ]
        })
        .collect();
    for (a, name) in AXIS_NAMES.iter().enumerate() {
        let (p, b) = (
            c.proposed_metrics.formation[a].speed.rmse,
            c.baseline_metrics.formation[a].speed.rmse,
        );
        rows.push(vec![
            format!("speed_rmse_{name}_m_s"),
            p.to_string(),
            b.to_string(),
            (p / b).to_string(),
        ]);
    }
    let (pc, bc) = (c.proposed_chatter as f64, c.baseline_chatter as f64);
    rows.push(vec![
        "chatter_sign_flips".into(),
        c.proposed_chatter.to_string(),
        c.baseline_chatter.to_string(),
        (pc / bc).to_string(),
    ]);
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    rows.push(vec![
        "convergence_time_s".into(),
        opt(c.proposed_summary.convergence_time),
        opt(c.baseline_summary.convergence_time),
        String::new(),
    ]);
    rows.push(vec![
        "window_start_s".into(),
        c.window_start.to_string(),
        c.window_start.to_string(),
        String::new(),
    ]);
    write_table(
        &summary,
        &["quantity", "proposed", "baseline", "ratio"].map(String::from),
        rows,
    )?;

    let errors = out_dir.join("errors.csv");
    let n = c.proposed.len().min(c.baseline.len());
    let series = (0..n).flat_map(|k| {
        let (p, b) = (&c.proposed.snapshots[k], &c.baseline.snapshots[k]);
        p.vehicles
            .iter()
            .zip(&b.vehicles)
            .enumerate()
            .map(move |(v, (rp, rb))| {
                let mut row = vec![p.t.to_string(), v.to_string()];
                row.extend((0..3).map(|a| rp.eps[a].to_string()));
                row.extend((0..3).map(|a| rb.eps[a].to_string()));
                row
            })
    });
    write_table(
        &errors,
        &[
            "t_s",
            "vehicle",
            "proposed_eps_x",
            "proposed_eps_y",
            "proposed_eps_z",
            "baseline_eps_x",
            "baseline_eps_y",
            "baseline_eps_z",
        ]
        .map(String::from),
        series,
    )?;
    Ok([summary, errors])
}
