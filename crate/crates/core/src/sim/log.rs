use nalgebra::{Vector3, Vector6};

use crate::scalar::Real;
use crate::vehicle::VehicleState;

/// Everything recorded for one vehicle at one time step.
///
/// Wrench quantities `u1`, `u2`, `tau_cmd` and `tau_applied` are body-frame;
/// `disturbance` is inertial.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleRecord<T: Real> {
    pub state: VehicleState<T>,
    pub pose_d: Vector6<T>,
    pub rate_d: Vector6<T>,
    pub eps: Vector6<T>,
    pub eps_dot: Vector6<T>,
    pub sigma: Vector6<T>,
    pub u1: Vector6<T>,
    pub u2: Vector6<T>,
    /// Sliding-mode command before the MPC shell and actuation.
    pub tau_cmd: Vector6<T>,
    /// Wrench actually applied to the plant over the next step.
    pub tau_applied: Vector6<T>,
    pub thrust: Vector3<T>,
    /// Norm of the allocation residual.
    pub alloc_residual: T,
    /// Adaptive estimate used for this step's command.
    pub f_est: Vector6<T>,
    pub lyapunov: T,
    pub assumption: bool,
    pub flow: Vector3<T>,
    pub disturbance: Vector6<T>,
    pub mpc_cost: Option<T>,
    pub mpc_feasible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot<T: Real> {
    pub t: T,
    pub vehicles: Vec<VehicleRecord<T>>,
}

/// Why a run stopped early.
#[derive(Debug, Clone, PartialEq)]
pub struct Abort {
    pub t: f64,
    pub vehicle: Option<usize>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimLog<T: Real> {
    pub dt: T,
    pub vehicle_count: usize,
    pub snapshots: Vec<Snapshot<T>>,
    pub abort: Option<Abort>,
}

impl<T: Real> SimLog<T> {
    pub fn new(dt: T, vehicle_count: usize) -> Self {
        Self {
            dt,
            vehicle_count,
            snapshots: Vec::new(),
            abort: None,
        }
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn times(&self) -> impl Iterator<Item = T> + '_ {
        self.snapshots.iter().map(|s| s.t)
    }

    /// Records of one vehicle, in time order.
    pub fn vehicle(&self, index: usize) -> impl Iterator<Item = (T, &VehicleRecord<T>)> + '_ {
        self.snapshots
            .iter()
            .map(move |s| (s.t, &s.vehicles[index]))
    }

    pub fn completed(&self) -> bool {
        self.abort.is_none()
    }
}
