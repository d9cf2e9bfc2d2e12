//! Closed-loop formation simulation.
//!
//! Each step, per vehicle: reference, tracking error, sliding surface,
//! control law, optional MPC shell, actuation, then an RK4 step of the
//! plant with the command held and the current re-sampled at every stage.
//! Vehicle 0 is the leader; the others follow offsets from its actual pose,
//! rate and acceleration.

mod log;
mod metrics;

pub use log::{Abort, SimLog, Snapshot, VehicleRecord};
pub use metrics::{
    chatter_count, compute_metrics, detect_convergence, lyapunov_check, phase_trajectory,
    AxisMetrics, AxisStats, LyapunovCheck, LyapunovEvent, Metrics, AXIS_NAMES,
};

use nalgebra::{Vector3, Vector6};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::flow::{DisturbanceModel, FlowField, FlowParams, LayeredField};
use crate::formation::{
    follower_acceleration, follower_reference, leader_reference, pose_error, FormationSpec,
    TrajectorySpec,
};
use crate::mpc::{mpc_optimize, MpcConfig, MpcProblem};
use crate::plant::{plant_derivative, plant_step, Calm, Current, Environment};
use crate::scalar::{cast, to_f64, wrap_angle, Real};
use crate::smc::{
    adaptive_control, adaptive_update, assumption_holds, equivalent_control_with, first_order_smc,
    lyapunov_value, reference_accel, reference_rate, sliding_surface, super_twist_u2_step,
    validate_gains, AdaptiveState, ControllerState, ReachingForm, SuperTwistGains, SurfaceConfig,
};
use crate::thruster::{Allocator, ThrusterConfig, Wrench5};
use crate::vehicle::{
    inertial_acceleration, inertial_terms_with, kinematic_transform, RigidBodyParams, VehicleState,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ControllerKind {
    /// Equivalent control plus the continuous adaptive term.
    #[default]
    Adaptive,
    /// Equivalent control plus the integral super-twisting term.
    SuperTwisting,
    /// First-order law with a discontinuous switching term.
    FirstOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ActuationMode {
    /// Command passes through the three-thruster allocation.
    Thrusters,
    /// Command applied as a body wrench with the roll moment removed.
    #[default]
    Direct,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig<T: Real> {
    pub kind: ControllerKind,
    pub surface: SurfaceConfig<T>,
    pub gains: SuperTwistGains<T>,
    /// Gains and initial estimate of the adaptive term.
    pub adaptive: AdaptiveState<T>,
    pub reaching: ReachingForm,
    pub integral_limit: T,
    /// Controller runs every `rate_divider` simulation steps.
    pub rate_divider: usize,
    /// Linear gain of the first-order law.
    pub baseline_lambda: T,
    /// Switching gain of the first-order law, N. The default sits just above
    /// the peak disturbance force met on the spiral scenario (about 7.7 N),
    /// well under the 20 N clamp of the disturbance model.
    pub baseline_w: T,
}

impl<T: Real> Default for ControllerConfig<T> {
    fn default() -> Self {
        let gains = SuperTwistGains::default();
        Self {
            kind: ControllerKind::Adaptive,
            surface: SurfaceConfig::default(),
            gains,
            adaptive: AdaptiveState::default(),
            reaching: ReachingForm::Equivalent,
            integral_limit: cast(10.0),
            rate_divider: 1,
            baseline_lambda: gains.lambda,
            baseline_w: cast(8.0),
        }
    }
}

impl<T: Real> ControllerConfig<T> {
    pub fn validate(&self) -> Result<()> {
        self.surface.validate()?;
        self.adaptive.validate()?;
        if let Err(v) = validate_gains(&self.gains) {
            let list: Vec<String> = v.iter().map(|x| x.to_string()).collect();
            return Err(Error::Invalid(format!(
                "controller gains violate the super-twisting convergence conditions: {}",
                list.join("; ")
            )));
        }
        if !(self.integral_limit > T::zero()) {
            return Err(Error::Invalid("integral_limit must be positive".into()));
        }
        if self.rate_divider == 0 {
            return Err(Error::Invalid("rate_divider must be at least 1".into()));
        }
        if self.baseline_lambda < T::zero() || self.baseline_w < T::zero() {
            return Err(Error::Invalid("baseline gains must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleConfig<T: Real> {
    pub initial: VehicleState<T>,
    pub params: RigidBodyParams<T>,
    pub thrusters: ThrusterConfig<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig<T: Real> {
    pub enabled: bool,
    pub params: FlowParams<T>,
    pub layers: LayeredField<T>,
    pub disturbance: DisturbanceModel<T>,
}

impl<T: Real> Default for FlowConfig<T> {
    fn default() -> Self {
        Self {
            enabled: true,
            params: FlowParams::default(),
            layers: LayeredField::default(),
            disturbance: DisturbanceModel::default(),
        }
    }
}

/// Axis-aligned box the vehicles are expected to stay in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Workspace<T: Real> {
    pub x: (T, T),
    pub y: (T, T),
    pub z: (T, T),
}

impl<T: Real> Default for Workspace<T> {
    fn default() -> Self {
        Self {
            x: (T::zero(), cast(80.0)),
            y: (T::zero(), cast(80.0)),
            z: (cast(-20.0), T::zero()),
        }
    }
}

impl<T: Real> Workspace<T> {
    pub fn contains(&self, p: &Vector3<T>) -> bool {
        let within = |v: T, (lo, hi): (T, T)| v >= lo && v <= hi;
        within(p.x, self.x) && within(p.y, self.y) && within(p.z, self.z)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario<T: Real> {
    /// Leader first, then one entry per formation offset.
    pub vehicles: Vec<VehicleConfig<T>>,
    pub controller: ControllerConfig<T>,
    pub mpc: MpcConfig<T>,
    pub flow: FlowConfig<T>,
    pub trajectory: TrajectorySpec<T>,
    pub formation: FormationSpec<T>,
    pub dt: T,
    pub duration: T,
    pub seed: u64,
    pub actuation: ActuationMode,
    pub workspace: Workspace<T>,
    pub convergence_threshold: T,
}

/// Vehicles placed on their t = 0 references, shifted by `initial_error`,
/// and moving at the reference rate.
pub fn place_on_reference<T: Real>(
    trajectory: &TrajectorySpec<T>,
    formation: &FormationSpec<T>,
    params: &RigidBodyParams<T>,
    thrusters: &ThrusterConfig<T>,
    initial_error: &Vector3<T>,
) -> Result<Vec<VehicleConfig<T>>> {
    let lead = leader_reference(T::zero(), trajectory)?;
    let at = |pose: &Vector6<T>, rate: &Vector6<T>| -> Result<VehicleState<T>> {
        let mut s = VehicleState::from_vectors(pose, &Vector6::zeros());
        let jac = kinematic_transform(&s)?;
        let q = jac.full_inv * rate;
        s = VehicleState::from_vectors(pose, &q);
        Ok(s)
    };
    let leader_ref_state = at(&lead.pose, &lead.rate)?;
    let mut refs = vec![(lead.pose, lead.rate)];
    for o in &formation.offsets {
        refs.push(follower_reference(&leader_ref_state, &lead.rate, o)?);
    }
    refs.iter()
        .map(|(pose, rate)| {
            let mut p = *pose;
            for i in 0..3 {
                p[i] += initial_error[i];
            }
            Ok(VehicleConfig {
                initial: at(&p, rate)?,
                params: params.clone(),
                thrusters: *thrusters,
            })
        })
        .collect()
}

impl<T: Real> Scenario<T> {
    /// Defaults for everything except the trajectory; vehicles start on their references.
    pub fn with_defaults(trajectory: TrajectorySpec<T>) -> Result<Self> {
        let formation = FormationSpec::default();
        let vehicles = place_on_reference(
            &trajectory,
            &formation,
            &RigidBodyParams::default(),
            &ThrusterConfig::default(),
            &Vector3::zeros(),
        )?;
        let duration = trajectory.duration;
        Ok(Self {
            vehicles,
            controller: ControllerConfig::default(),
            mpc: MpcConfig::default(),
            flow: FlowConfig::default(),
            trajectory,
            formation,
            dt: cast(0.01),
            duration,
            seed: 0,
            actuation: ActuationMode::default(),
            workspace: Workspace::default(),
            convergence_threshold: cast(0.1),
        })
    }

    /// Number of integration steps; the log holds one more record.
    pub fn step_count(&self) -> usize {
        to_f64(self.duration / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > T::zero()) {
            return Err(Error::Invalid("dt must be positive".into()));
        }
        if !(self.duration >= self.dt) {
            return Err(Error::Invalid("duration must be at least one step".into()));
        }
        self.trajectory.validate()?;
        self.formation.validate()?;
        if self.duration > self.trajectory.duration * (T::one() + cast(1e-12)) {
            return Err(Error::Invalid(format!(
                "simulation duration {} exceeds trajectory duration {}",
                to_f64(self.duration),
                to_f64(self.trajectory.duration)
            )));
        }
        if self.vehicles.len() != self.formation.vehicle_count() {
            return Err(Error::LengthMismatch {
                expected: self.formation.vehicle_count(),
                actual: self.vehicles.len(),
            });
        }
        for (i, v) in self.vehicles.iter().enumerate() {
            v.params.validate()?;
            v.thrusters.validate()?;
            if !v.initial.is_finite() {
                return Err(Error::Invalid(format!(
                    "vehicle {i} initial state is not finite"
                )));
            }
            kinematic_transform(&v.initial)?;
            if !self.workspace.contains(&v.initial.eta1) {
                return Err(Error::Invalid(format!(
                    "vehicle {i} starts outside the workspace"
                )));
            }
        }
        self.controller.validate()?;
        self.mpc.validate()?;
        self.flow.params.validate()?;
        self.flow.layers.validate()?;
        self.flow.disturbance.validate()?;
        if !(self.convergence_threshold > T::zero()) {
            return Err(Error::Invalid(
                "convergence threshold must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct VehicleRuntime<T: Real> {
    state: VehicleState<T>,
    params: RigidBodyParams<T>,
    estimated: RigidBodyParams<T>,
    ctrl: ControllerState<T>,
    allocator: Allocator<T>,
    u1: Vector6<T>,
    u2: Vector6<T>,
    tau_cmd: Vector6<T>,
    tau_applied: Vector6<T>,
    thrust: Vector3<T>,
    alloc_residual: T,
    mpc_plan: Vec<Vector6<T>>,
    mpc_cost: Option<T>,
    mpc_feasible: bool,
    prev_f_tilde: Option<Vector6<T>>,
}

/// Stepwise closed-loop simulation.
#[derive(Debug, Clone)]
pub struct Simulation<T: Real> {
    scenario: Scenario<T>,
    field: Option<FlowField<T>>,
    vehicles: Vec<VehicleRuntime<T>>,
    step_index: usize,
    control_index: usize,
    log: SimLog<T>,
}

fn tag_vehicle(err: Error, vehicle: usize) -> Error {
    match err {
        Error::NonFinite { t, .. } => Error::NonFinite { vehicle, t },
        e => e,
    }
}

impl<T: Real> Simulation<T> {
    pub fn new(scenario: Scenario<T>) -> Result<Self> {
        scenario.validate()?;
        let field = if scenario.flow.enabled {
            Some(FlowField::new(
                scenario.flow.params,
                scenario.flow.layers.clone(),
            )?)
        } else {
            None
        };
        let vehicles = scenario
            .vehicles
            .iter()
            .map(|v| {
                Ok(VehicleRuntime {
                    state: v.initial,
                    params: v.params.clone(),
                    estimated: v.params.estimated(),
                    ctrl: ControllerState::new(
                        scenario.controller.adaptive,
                        scenario.controller.integral_limit,
                    ),
                    allocator: Allocator::new(v.thrusters)?,
                    u1: Vector6::zeros(),
                    u2: Vector6::zeros(),
                    tau_cmd: Vector6::zeros(),
                    tau_applied: Vector6::zeros(),
                    thrust: Vector3::zeros(),
                    alloc_residual: T::zero(),
                    mpc_plan: Vec::new(),
                    mpc_cost: None,
                    mpc_feasible: true,
                    prev_f_tilde: None,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let log = SimLog::new(scenario.dt, vehicles.len());
        Ok(Self {
            scenario,
            field,
            vehicles,
            step_index: 0,
            control_index: 0,
            log,
        })
    }

    pub fn time(&self) -> T {
        self.scenario.dt * cast(self.step_index as f64)
    }

    pub fn states(&self) -> Vec<VehicleState<T>> {
        self.vehicles.iter().map(|v| v.state).collect()
    }

    pub fn log(&self) -> &SimLog<T> {
        &self.log
    }

    pub fn scenario(&self) -> &Scenario<T> {
        &self.scenario
    }

    fn environment(&self) -> Box<dyn Environment<T> + '_> {
        match &self.field {
            Some(field) => Box::new(Current {
                field,
                model: &self.scenario.flow.disturbance,
            }),
            None => Box::new(Calm),
        }
    }

    /// Computes and records every vehicle's command at the current time.
    fn control_and_record(&mut self) -> Result<()> {
        let t = self.time();
        let sc = &self.scenario;
        let dt = sc.dt;
        let cc = &sc.controller;
        let is_control_step = self.step_index.is_multiple_of(cc.rate_divider);
        let dt_ctrl = dt * cast(cc.rate_divider as f64);
        let leader = self.vehicles[0].state;
        let leader_rate = kinematic_transform(&leader)
            .map_err(|e| tag_vehicle(e, 0))?
            .full
            * leader.velocity();
        let env: Box<dyn Environment<T> + '_> = match &self.field {
            Some(field) => Box::new(Current {
                field,
                model: &sc.flow.disturbance,
            }),
            None => Box::new(Calm),
        };
        let mut leader_accel = Vector6::zeros();
        let mut records = Vec::with_capacity(self.vehicles.len());
        for (i, rt) in self.vehicles.iter_mut().enumerate() {
            let (pose_d, rate_d, accel_d) = if i == 0 {
                let r = leader_reference(t, &sc.trajectory)?;
                (r.pose, r.rate, r.accel)
            } else {
                let offset = &sc.formation.offsets[i - 1];
                let (p, r) = follower_reference(&leader, &leader_rate, offset)?;
                (
                    p,
                    r,
                    follower_acceleration(&leader, &leader_rate, &leader_accel, offset),
                )
            };

            let s = rt.state;
            let jac = kinematic_transform(&s).map_err(|e| tag_vehicle(e, i))?;
            let edot = jac.full * s.velocity();
            let eps = pose_error(&s.pose(), &pose_d);
            let eps_dot = edot - rate_d;
            let sigma = sliding_surface(&eps, &eps_dot, &rt.ctrl.integral_eps, &cc.surface);
            let edot_r = reference_rate(&rate_d, &eps, &rt.ctrl.integral_eps, &cc.surface);
            let eddot_r = reference_accel(&accel_d, &eps, &eps_dot, &cc.surface);
            let hat = inertial_terms_with(&s, &rt.estimated, &jac);
            let tru = inertial_terms_with(&s, &rt.params, &jac);
            let f_hat_r = hat.m_e * eddot_r + hat.c_e * edot_r + hat.d_e * edot + hat.g_e;
            let f_r = tru.m_e * eddot_r + tru.c_e * edot_r + tru.d_e * edot + tru.g_e;
            let disturbance = env.disturbance(&s, t);
            let flow = self
                .field
                .as_ref()
                .map(|field| field.velocity(s.eta1.x, s.eta1.y, s.eta1.z, t))
                .unwrap_or_else(Vector3::zeros);
            let f_est_used = rt.ctrl.adaptive.f_est;

            if is_control_step {
                let (u1, u2) = match cc.kind {
                    ControllerKind::Adaptive => (
                        equivalent_control_with(&sigma, &f_hat_r, &jac, &cc.gains, cc.reaching),
                        adaptive_control(&sigma, &rt.ctrl.adaptive, &hat.c_e, &jac),
                    ),
                    ControllerKind::SuperTwisting => (
                        equivalent_control_with(&sigma, &f_hat_r, &jac, &cc.gains, cc.reaching),
                        jac.full.transpose() * rt.ctrl.u2_integrator,
                    ),
                    ControllerKind::FirstOrder => (
                        first_order_smc(&sigma, &f_hat_r, &jac, cc.baseline_w, cc.baseline_lambda),
                        Vector6::zeros(),
                    ),
                };
                rt.u1 = u1;
                rt.u2 = u2;
                rt.tau_cmd = u1 + u2;

                let designed = if sc.mpc.enabled {
                    let solve_now =
                        self.control_index.is_multiple_of(sc.mpc.stride) || rt.mpc_plan.is_empty();
                    if solve_now {
                        let n_e = sc.mpc.n_e;
                        let desired_poses = (1..=n_e)
                            .map(|j| {
                                let mut p = pose_d + rate_d * (dt_ctrl * cast(j as f64));
                                for a in 3..6 {
                                    p[a] = wrap_angle(p[a]);
                                }
                                p
                            })
                            .collect();
                        let problem = MpcProblem {
                            state: s,
                            t,
                            dt: dt_ctrl,
                            params: &rt.estimated,
                            desired_rates: vec![edot_r; n_e],
                            desired_poses,
                        };
                        let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
                        rng.set_stream((self.step_index as u64) << 8 | i as u64);
                        let sol = mpc_optimize(
                            &problem,
                            &vec![rt.tau_cmd; n_e],
                            &sc.mpc,
                            env.as_ref(),
                            &mut rng,
                        )?;
                        rt.mpc_cost = Some(sol.cost);
                        rt.mpc_feasible = sol.feasible;
                        rt.mpc_plan = sol.sequence;
                    } else if rt.mpc_plan.len() > 1 {
                        rt.mpc_plan.remove(0);
                    }
                    rt.mpc_plan[0]
                } else {
                    rt.tau_cmd
                };

                let alloc = rt.allocator.allocate(&Wrench5::from_body(&designed));
                rt.thrust = alloc.thrust;
                rt.alloc_residual = alloc.residual.norm();
                rt.tau_applied = match sc.actuation {
                    ActuationMode::Thrusters => {
                        Wrench5(rt.allocator.tcm() * alloc.thrust).to_body()
                    }
                    ActuationMode::Direct => {
                        let mut u = designed;
                        u[3] = T::zero();
                        u
                    }
                };

                rt.ctrl.accumulate_error(&eps, dt_ctrl);
                match cc.kind {
                    ControllerKind::Adaptive => {
                        rt.ctrl.adaptive = adaptive_update(&rt.ctrl.adaptive, &sigma, dt_ctrl);
                    }
                    ControllerKind::SuperTwisting => {
                        let current = rt.ctrl.u2_integrator;
                        rt.ctrl.u2_integrator =
                            super_twist_u2_step(&current, &sigma, &current, &cc.gains, dt_ctrl);
                    }
                    ControllerKind::FirstOrder => {}
                }
            }

            // Lumped unknown dynamics seen by the surface, including what the
            // actuation failed to deliver.
            let delta_act = jac.full_inv.transpose() * (rt.tau_cmd - rt.tau_applied);
            let f_tilde = f_r - f_hat_r - disturbance + delta_act;
            let f_tilde_dot = rt.prev_f_tilde.map(|p| (f_tilde - p) / dt);
            rt.prev_f_tilde = Some(f_tilde);
            let w = f_est_used - f_tilde;
            let gamma = &rt.ctrl.adaptive.gamma;
            let lyapunov = lyapunov_value(&sigma, &w, &tru.m_e, gamma);
            // Unverifiable on the first step, where no rate of change is known yet.
            let assumption = f_tilde_dot.is_some_and(|fd| {
                assumption_holds(
                    &sigma,
                    &w,
                    &fd,
                    &(tru.m_e - hat.m_e),
                    &rt.ctrl.adaptive.k_gain,
                    gamma,
                )
            });

            if i == 0 {
                let x_dot = plant_derivative(&s, &rt.tau_applied, &rt.params, env.as_ref(), t)
                    .map_err(|e| tag_vehicle(e, 0))?;
                leader_accel = inertial_acceleration(&s, &x_dot.fixed_rows::<6>(6).into_owned())?;
            }

            records.push(VehicleRecord {
                state: s,
                pose_d,
                rate_d,
                eps,
                eps_dot,
                sigma,
                u1: rt.u1,
                u2: rt.u2,
                tau_cmd: rt.tau_cmd,
                tau_applied: rt.tau_applied,
                thrust: rt.thrust,
                alloc_residual: rt.alloc_residual,
                f_est: f_est_used,
                lyapunov,
                assumption,
                flow,
                disturbance,
                mpc_cost: rt.mpc_cost,
                mpc_feasible: rt.mpc_feasible,
            });
        }
        if is_control_step {
            self.control_index += 1;
        }
        self.log.snapshots.push(Snapshot {
            t,
            vehicles: records,
        });
        Ok(())
    }

    fn integrate(&mut self) -> Result<()> {
        let t = self.time();
        let dt = self.scenario.dt;
        let env = self.environment();
        let next = self
            .vehicles
            .iter()
            .enumerate()
            .map(|(i, rt)| {
                plant_step(&rt.state, &rt.tau_applied, &rt.params, env.as_ref(), t, dt)
                    .map_err(|e| tag_vehicle(e, i))
            })
            .collect::<Result<Vec<_>>>()?;
        drop(env);
        for (rt, s) in self.vehicles.iter_mut().zip(next) {
            rt.state = s;
        }
        self.step_index += 1;
        Ok(())
    }

    /// Records the current time and advances one step.
    pub fn step(&mut self) -> Result<()> {
        self.control_and_record()?;
        self.integrate()
    }

    fn abort(&mut self, err: &Error) {
        let vehicle = match err {
            Error::NonFinite { vehicle, .. } => Some(*vehicle),
            _ => None,
        };
        self.log.abort = Some(Abort {
            t: to_f64(self.time()),
            vehicle,
            message: err.to_string(),
        });
    }

    /// Runs to the end, or until a step fails; the failure is kept in the log.
    pub fn run(mut self) -> SimLog<T> {
        let n = self.scenario.step_count();
        for _ in 0..n {
            if let Err(e) = self.step() {
                self.abort(&e);
                return self.log;
            }
        }
        if let Err(e) = self.control_and_record() {
            self.abort(&e);
        }
        self.log
    }
}

/// Validates and runs a scenario. Setup errors are returned; runtime
/// failures end the log early with [`SimLog::abort`] set.
pub fn run<T: Real>(scenario: &Scenario<T>) -> Result<SimLog<T>> {
    Ok(Simulation::new(scenario.clone())?.run())
}
