//! Post-run tracking statistics.

use crate::error::{Error, Result};
use crate::scalar::{cast, Real};

use super::log::SimLog;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisStats<T: Real> {
    pub min: T,
    pub max: T,
    pub rmse: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisMetrics<T: Real> {
    pub speed: AxisStats<T>,
    pub position: AxisStats<T>,
}

/// Per-axis (x, y, z) error statistics over `[window_start, end]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics<T: Real> {
    pub window_start: T,
    pub per_vehicle: Vec<[AxisMetrics<T>; 3]>,
    /// All vehicles pooled.
    pub formation: [AxisMetrics<T>; 3],
}

pub const AXIS_NAMES: [&str; 3] = ["x", "y", "z"];

/// Earliest logged time after which every vehicle's position error stays
/// below `threshold` on all of x, y, z. `None` if the last record still
/// violates it.
pub fn detect_convergence<T: Real>(log: &SimLog<T>, threshold: T) -> Option<T> {
    let inside = |k: usize| {
        log.snapshots[k]
            .vehicles
            .iter()
            .all(|r| (0..3).all(|a| r.eps[a].abs() < threshold))
    };
    let mut first = None;
    for k in (0..log.len()).rev() {
        if !inside(k) {
            break;
        }
        first = Some(log.snapshots[k].t);
    }
    first
}

fn stats<T: Real>(values: impl Iterator<Item = T>) -> Option<AxisStats<T>> {
    let mut n = 0usize;
    let mut min = T::zero();
    let mut max = T::zero();
    let mut sq = T::zero();
    for v in values {
        if n == 0 {
            min = v;
            max = v;
        } else {
            min = min.min(v);
            max = max.max(v);
        }
        sq += v * v;
        n += 1;
    }
    (n > 0).then(|| AxisStats {
        min,
        max,
        rmse: (sq / cast::<T>(n as f64)).sqrt(),
    })
}

/// RMSE and signed min/max of position and speed errors from `t_c` on.
pub fn compute_metrics<T: Real>(log: &SimLog<T>, t_c: T) -> Result<Metrics<T>> {
    let window: Vec<_> = log.snapshots.iter().filter(|s| s.t >= t_c).collect();
    if window.is_empty() {
        return Err(Error::EmptyWindow);
    }
    let axis = |vehicles: &[usize], a: usize| -> AxisMetrics<T> {
        let pos = window
            .iter()
            .flat_map(|s| vehicles.iter().map(move |&v| s.vehicles[v].eps[a]));
        let spd = window
            .iter()
            .flat_map(|s| vehicles.iter().map(move |&v| s.vehicles[v].eps_dot[a]));
        AxisMetrics {
            position: stats(pos).expect("window is nonempty"),
            speed: stats(spd).expect("window is nonempty"),
        }
    };
    let all: Vec<usize> = (0..log.vehicle_count).collect();
    Ok(Metrics {
        window_start: t_c,
        per_vehicle: (0..log.vehicle_count)
            .map(|v| [0, 1, 2].map(|a| axis(&[v], a)))
            .collect(),
        formation: [0, 1, 2].map(|a| axis(&all, a)),
    })
}

/// `(eps, eps_dot)` pairs of one vehicle along axis 0, 1 or 2.
pub fn phase_trajectory<T: Real>(
    log: &SimLog<T>,
    vehicle: usize,
    axis: usize,
) -> Result<Vec<(T, T)>> {
    if axis > 2 {
        return Err(Error::Invalid(format!(
            "phase axis {axis} is not one of x, y, z"
        )));
    }
    if vehicle >= log.vehicle_count {
        return Err(Error::LengthMismatch {
            expected: log.vehicle_count,
            actual: vehicle + 1,
        });
    }
    Ok(log
        .vehicle(vehicle)
        .map(|(_, r)| (r.eps[axis], r.eps_dot[axis]))
        .collect())
}

/// Number of consecutive-step sign flips of the applied control on one body axis.
pub fn chatter_count<T: Real>(log: &SimLog<T>, vehicle: usize, axis: usize) -> usize {
    let u: Vec<T> = log
        .vehicle(vehicle)
        .map(|(_, r)| r.tau_applied[axis])
        .collect();
    u.windows(2).filter(|w| w[0] * w[1] < T::zero()).count()
}

/// An increase of the Lyapunov function between consecutive records.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovEvent<T: Real> {
    pub vehicle: usize,
    /// Start of the interval.
    pub t: T,
    pub delta: T,
    /// Whether the assumption flag was set at both ends of the interval.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovCheck<T: Real> {
    /// Intervals with the flag set at both ends.
    pub checked: usize,
    /// Flagged intervals where `V` grew by more than the tolerance.
    pub violations: Vec<LyapunovEvent<T>>,
    /// Every increase, flagged or not.
    pub increases: Vec<LyapunovEvent<T>>,
}

impl<T: Real> LyapunovCheck<T> {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Scans each vehicle's `V` series. An interval counts as flagged only when
/// the assumption holds at both of its ends, since the record at the far end
/// carries the rate of change of the unknown dynamics over the interval.
pub fn lyapunov_check<T: Real>(log: &SimLog<T>, tolerance: T) -> LyapunovCheck<T> {
    let mut out = LyapunovCheck {
        checked: 0,
        violations: Vec::new(),
        increases: Vec::new(),
    };
    for v in 0..log.vehicle_count {
        let recs: Vec<_> = log.vehicle(v).collect();
        for w in recs.windows(2) {
            let ((t, a), (_, b)) = (w[0], w[1]);
            let flagged = a.assumption && b.assumption;
            let delta = b.lyapunov - a.lyapunov;
            out.checked += usize::from(flagged);
            if delta > T::zero() {
                let event = LyapunovEvent {
                    vehicle: v,
                    t,
                    delta,
                    flagged,
                };
                out.increases.push(event);
                if flagged && delta > tolerance {
                    out.violations.push(event);
                }
            }
        }
    }
    out
}
