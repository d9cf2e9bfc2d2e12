//! Receding-horizon smoothing shell around the sliding-mode command.
//!
//! The cost over a horizon of `n_e` steps is
//!
//! ```text
//! J = sum_k |e_dot_pred(k) - e_dot_des(k)|^2
//!   + sum_k sum_{i=1..n_u} |u(k) - u(k+i)|^2
//! ```
//!
//! with indices past the end of the control sequence clamped to its last
//! element. The optimizer samples bounded perturbations of the nominal
//! sequence and keeps only strict improvements, so it never returns a
//! sequence costlier than a feasible clipped nominal. An infeasible
//! nominal gives way to the first candidate that respects the state bounds.

use nalgebra::Vector6;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::formation::pose_error;
use crate::plant::{plant_step, Environment};
use crate::scalar::{cast, to_f64, Real};
use crate::vehicle::{kinematic_transform, RigidBodyParams, VehicleState};

#[derive(Debug, Clone, PartialEq)]
pub struct MpcConfig<T: Real> {
    pub enabled: bool,
    pub n_e: usize,
    pub n_u: usize,
    /// Per-axis body wrench interval, N and N m.
    pub tau_bounds: [(T, T); 6],
    /// Per-axis pose-error interval, m and rad.
    pub state_bounds: [(T, T); 6],
    pub candidate_count: usize,
    pub rounds: usize,
    /// Initial perturbation half-width, N; halved every round.
    pub perturbation: T,
    /// Solve every `stride` controller steps, holding the last plan otherwise.
    pub stride: usize,
    pub tracking_weight: T,
    pub smoothing_weight: T,
}

impl<T: Real> Default for MpcConfig<T> {
    fn default() -> Self {
        let tau = (cast(-60.0), cast(60.0));
        let pose = (cast(-5.0), cast(5.0));
        let mut tau_bounds = [tau; 6];
        tau_bounds[3] = (T::zero(), T::zero());
        Self {
            enabled: true,
            n_e: 5,
            n_u: 2,
            tau_bounds,
            state_bounds: [pose; 6],
            candidate_count: 32,
            rounds: 3,
            perturbation: cast(2.0),
            stride: 1,
            tracking_weight: T::one(),
            smoothing_weight: T::one(),
        }
    }
}

impl<T: Real> MpcConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.n_e == 0 || self.n_u == 0 {
            return Err(Error::Invalid(
                "MPC horizons n_e and n_u must be at least 1".into(),
            ));
        }
        if self.stride == 0 {
            return Err(Error::Invalid("MPC stride must be at least 1".into()));
        }
        for (i, (lo, hi)) in self.tau_bounds.iter().chain(&self.state_bounds).enumerate() {
            if !(lo <= hi) {
                return Err(Error::Invalid(format!(
                    "MPC bound {i} is not ordered: [{}, {}]",
                    to_f64(*lo),
                    to_f64(*hi)
                )));
            }
        }
        if self.perturbation < T::zero()
            || self.tracking_weight < T::zero()
            || self.smoothing_weight < T::zero()
        {
            return Err(Error::Invalid(
                "MPC perturbation and weights must be nonnegative".into(),
            ));
        }
        Ok(())
    }

    pub fn clip(&self, u: &Vector6<T>) -> Vector6<T> {
        Vector6::from_fn(|i, _| u[i].max(self.tau_bounds[i].0).min(self.tau_bounds[i].1))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcSolution<T: Real> {
    pub sequence: Vec<Vector6<T>>,
    pub cost: T,
    pub feasible: bool,
}

/// Horizon inputs for one solve.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcProblem<'a, T: Real> {
    pub state: VehicleState<T>,
    pub t: T,
    pub dt: T,
    pub params: &'a RigidBodyParams<T>,
    /// Desired inertial rate at each predicted step.
    pub desired_rates: Vec<Vector6<T>>,
    /// Desired pose at each predicted step.
    pub desired_poses: Vec<Vector6<T>>,
}

/// Predicted inertial rates and poses, one entry per horizon step.
pub type Rollout<T> = (Vec<Vector6<T>>, Vec<Vector6<T>>);

/// Predicted inertial rates `e_dot(t + k dt)`, `k = 1..=n_e`, under `controls`.
///
/// Also returns the predicted poses so the caller can check state bounds.
pub fn predict_rollout<T: Real, E: Environment<T> + ?Sized>(
    state: &VehicleState<T>,
    controls: &[Vector6<T>],
    env: &E,
    params: &RigidBodyParams<T>,
    n_e: usize,
    t: T,
    dt: T,
) -> Result<Rollout<T>> {
    if controls.len() < n_e {
        return Err(Error::LengthMismatch {
            expected: n_e,
            actual: controls.len(),
        });
    }
    let mut s = *state;
    let mut rates = Vec::with_capacity(n_e);
    let mut poses = Vec::with_capacity(n_e);
    for (k, u) in controls.iter().take(n_e).enumerate() {
        s = plant_step(&s, u, params, env, t + dt * cast(k as f64), dt)?;
        rates.push(kinematic_transform(&s)?.full * s.velocity());
        poses.push(s.pose());
    }
    Ok((rates, poses))
}

fn smoothing_cost<T: Real>(controls: &[Vector6<T>], n_e: usize, n_u: usize) -> T {
    let last = controls.len() - 1;
    let mut j = T::zero();
    for k in 0..n_e {
        for i in 1..=n_u {
            j += (controls[k] - controls[(k + i).min(last)]).norm_squared();
        }
    }
    j
}

fn tracking_cost<T: Real>(predicted: &[Vector6<T>], desired: &[Vector6<T>]) -> T {
    predicted
        .iter()
        .zip(desired)
        .map(|(p, d)| (p - d).norm_squared())
        .sum()
}

/// Weighted horizon cost; with unit weights this is exactly `J`.
pub fn mpc_cost<T: Real>(
    predicted: &[Vector6<T>],
    desired: &[Vector6<T>],
    controls: &[Vector6<T>],
    cfg: &MpcConfig<T>,
) -> Result<T> {
    for len in [predicted.len(), desired.len()] {
        if len != cfg.n_e {
            return Err(Error::LengthMismatch {
                expected: cfg.n_e,
                actual: len,
            });
        }
    }
    if controls.len() < cfg.n_e {
        return Err(Error::LengthMismatch {
            expected: cfg.n_e,
            actual: controls.len(),
        });
    }
    Ok(cfg.tracking_weight * tracking_cost(predicted, desired)
        + cfg.smoothing_weight * smoothing_cost(controls, cfg.n_e, cfg.n_u))
}

fn within_state_bounds<T: Real>(
    poses: &[Vector6<T>],
    desired: &[Vector6<T>],
    cfg: &MpcConfig<T>,
) -> bool {
    poses.iter().zip(desired).all(|(p, d)| {
        let eps = pose_error(p, d);
        (0..6).all(|i| eps[i] >= cfg.state_bounds[i].0 && eps[i] <= cfg.state_bounds[i].1)
    })
}

struct Evaluated<T: Real> {
    cost: T,
    feasible: bool,
}

fn evaluate<T: Real, E: Environment<T> + ?Sized>(
    seq: &[Vector6<T>],
    problem: &MpcProblem<'_, T>,
    env: &E,
    cfg: &MpcConfig<T>,
) -> Result<Evaluated<T>> {
    let (rates, poses) = predict_rollout(
        &problem.state,
        seq,
        env,
        problem.params,
        cfg.n_e,
        problem.t,
        problem.dt,
    )?;
    Ok(Evaluated {
        cost: mpc_cost(&rates, &problem.desired_rates, seq, cfg)?,
        feasible: within_state_bounds(&poses, &problem.desired_poses, cfg),
    })
}

/// Improves on the clipped nominal sequence by seeded random search.
///
/// Each round tries the sequence mean, a half blend toward it, and
/// `candidate_count` uniform perturbations of the incumbent; the
/// perturbation width halves every round. Candidates whose rollout fails
/// (e.g. a pitch singularity) are discarded.
pub fn mpc_optimize<T: Real, E: Environment<T> + ?Sized>(
    problem: &MpcProblem<'_, T>,
    nominal: &[Vector6<T>],
    cfg: &MpcConfig<T>,
    env: &E,
    rng: &mut ChaCha8Rng,
) -> Result<MpcSolution<T>> {
    cfg.validate()?;
    for len in [problem.desired_rates.len(), problem.desired_poses.len()] {
        if len != cfg.n_e {
            return Err(Error::LengthMismatch {
                expected: cfg.n_e,
                actual: len,
            });
        }
    }
    if nominal.len() < cfg.n_e {
        return Err(Error::LengthMismatch {
            expected: cfg.n_e,
            actual: nominal.len(),
        });
    }
    let mut best: Vec<Vector6<T>> = nominal.iter().map(|u| cfg.clip(u)).collect();
    let base = evaluate(&best, problem, env, cfg)?;
    let (mut best_cost, mut best_feasible) = (base.cost, base.feasible);

    let try_candidate =
        |cand: Vec<Vector6<T>>, best: &mut Vec<Vector6<T>>, cost: &mut T, feasible: &mut bool| {
            if let Ok(ev) = evaluate(&cand, problem, env, cfg) {
                if ev.feasible && (ev.cost < *cost || !*feasible) {
                    *best = cand;
                    *cost = ev.cost;
                    *feasible = true;
                }
            }
        };

    let n = best.len();
    let mut width = to_f64(cfg.perturbation);
    for _ in 0..cfg.rounds {
        let mean = best.iter().fold(Vector6::zeros(), |a, u| a + u) / cast::<T>(n as f64);
        let mean_seq = vec![cfg.clip(&mean); n];
        try_candidate(mean_seq, &mut best, &mut best_cost, &mut best_feasible);
        let half: T = cast(0.5);
        let blend: Vec<_> = best
            .iter()
            .map(|u| cfg.clip(&((u + mean) * half)))
            .collect();
        try_candidate(blend, &mut best, &mut best_cost, &mut best_feasible);
        for _ in 0..cfg.candidate_count {
            let cand: Vec<_> = best
                .iter()
                .map(|u| {
                    let noise =
                        Vector6::from_fn(|_, _| cast::<T>(rng.gen_range(-1.0..=1.0) * width));
                    cfg.clip(&(u + noise))
                })
                .collect();
            try_candidate(cand, &mut best, &mut best_cost, &mut best_feasible);
        }
        width *= 0.5;
    }
    if !best_feasible {
        return Ok(MpcSolution {
            sequence: nominal.iter().map(|u| cfg.clip(u)).collect(),
            cost: base.cost,
            feasible: false,
        });
    }
    Ok(MpcSolution {
        sequence: best,
        cost: best_cost,
        feasible: true,
    })
}
