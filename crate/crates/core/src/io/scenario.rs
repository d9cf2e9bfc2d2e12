//! The TOML scenario format.
//!
//! Keys carry their unit as a suffix (`_m`, `_s`, `_n`, `_rad`, ...). Every
//! block except `[trajectory]` and `[sim]` may be omitted, as may every key
//! inside a block that has a default. Unknown keys are rejected.

use std::path::Path;

use nalgebra::{Matrix6, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{DisturbanceModel, FlowParams, LayeredField};
use crate::formation::{FollowerOffset, FormationSpec, PathKind, TrajectorySpec};
use crate::mpc::MpcConfig;
use crate::sim::{
    place_on_reference, ActuationMode, ControllerConfig, ControllerKind, FlowConfig, Scenario,
    VehicleConfig, Workspace,
};
use crate::smc::{AdaptiveState, ReachingForm, SuperTwistGains, SurfaceConfig};
use crate::thruster::ThrusterConfig;
use crate::vehicle::{RigidBodyParams, VehicleState};

type V3 = [f64; 3];
type V6 = [f64; 6];
type Interval = [f64; 2];

fn v3(v: &Vector3<f64>) -> V3 {
    [v.x, v.y, v.z]
}

fn v6(v: &Vector6<f64>) -> V6 {
    std::array::from_fn(|i| v[i])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub sim: SimBlock,
    pub trajectory: TrajectoryBlock,
    #[serde(default)]
    pub formation: FormationBlock,
    #[serde(default)]
    pub vehicles: VehiclesBlock,
    #[serde(default)]
    pub controller: ControllerBlock,
    #[serde(default)]
    pub flow: FlowBlock,
    #[serde(default)]
    pub mpc: MpcBlock,
    #[serde(default)]
    pub workspace: WorkspaceBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimBlock {
    pub dt_s: f64,
    /// Defaults to the trajectory duration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    /// `"direct"` or `"thrusters"`.
    #[serde(default = "default_actuation")]
    pub actuation: String,
    #[serde(default = "default_threshold")]
    pub convergence_threshold_m: f64,
    /// Replace the controller with the first-order comparison law and
    /// disable the MPC shell.
    #[serde(default)]
    pub baseline: bool,
}

fn default_actuation() -> String {
    "direct".into()
}

fn default_threshold() -> f64 {
    0.1
}

/// `kind` selects which of the remaining keys apply:
/// `spiral` uses `center_m`, `radius_m`, `angular_rate_rad_s`, `vertical_rate_m_s`;
/// `line` uses `start_m`, `velocity_m_s`, `heading_rad`;
/// `waypoints` uses `points_m`, `speed_m_s`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryBlock {
    pub kind: String,
    pub duration_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center_m: Option<V3>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angular_rate_rad_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vertical_rate_m_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_m: Option<V3>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocity_m_s: Option<V3>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heading_rad: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points_m: Option<Vec<V3>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speed_m_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormationBlock {
    /// Follower positions in the leader's heading frame.
    pub offsets_m: Vec<V3>,
    /// Desired yaw of each follower relative to the leader; zeros if omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset_yaw_rad: Option<Vec<f64>>,
}

impl Default for FormationBlock {
    fn default() -> Self {
        let f = FormationSpec::<f64>::default();
        Self {
            offsets_m: f.offsets.iter().map(|o| v3(&o.position)).collect(),
            offset_yaw_rad: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    /// `[x, y, z, roll, pitch, yaw]` in m and rad.
    pub pose: V6,
    /// Body velocity `[u, v, w, p, q, r]` in m/s and rad/s.
    pub velocity: V6,
}

/// Shared vehicle model. Vehicles start on their references, shifted by
/// `initial_error_m`, unless `initial` lists one state per vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehiclesBlock {
    pub initial_error_m: V3,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<InitialState>>,
    /// Diagonal of the rigid-body plus added-mass inertia (kg, kg m^2).
    pub inertia_diag: V6,
    pub linear_damping: V6,
    pub quadratic_damping: V6,
    pub net_weight_n: f64,
    pub restoring_moment_nm: f64,
    pub mismatch_factor: f64,
    pub thrusters: ThrusterBlock,
}

impl Default for VehiclesBlock {
    fn default() -> Self {
        let p = RigidBodyParams::<f64>::default();
        Self {
            initial_error_m: [0.0; 3],
            initial: None,
            inertia_diag: v6(&p.inertia.diagonal()),
            linear_damping: v6(&p.linear_damping),
            quadratic_damping: v6(&p.quadratic_damping),
            net_weight_n: p.net_weight,
            restoring_moment_nm: p.restoring_moment,
            mismatch_factor: p.mismatch_factor,
            thrusters: ThrusterBlock::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThrusterBlock {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub l1: f64,
    pub l2: f64,
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub t4: f64,
    pub r1_m: f64,
    pub r2_m: f64,
    pub r3_m: f64,
    pub u_limit_n: f64,
}

impl From<&ThrusterConfig<f64>> for ThrusterBlock {
    fn from(c: &ThrusterConfig<f64>) -> Self {
        Self {
            k1: c.k1,
            k2: c.k2,
            k3: c.k3,
            l1: c.l1,
            l2: c.l2,
            t1: c.t1,
            t2: c.t2,
            t3: c.t3,
            t4: c.t4,
            r1_m: c.r1,
            r2_m: c.r2,
            r3_m: c.r3,
            u_limit_n: c.u_limit,
        }
    }
}

impl From<&ThrusterBlock> for ThrusterConfig<f64> {
    fn from(b: &ThrusterBlock) -> Self {
        Self {
            k1: b.k1,
            k2: b.k2,
            k3: b.k3,
            l1: b.l1,
            l2: b.l2,
            t1: b.t1,
            t2: b.t2,
            t3: b.t3,
            t4: b.t4,
            r1: b.r1_m,
            r2: b.r2_m,
            r3: b.r3_m,
            u_limit: b.u_limit_n,
        }
    }
}

impl Default for ThrusterBlock {
    fn default() -> Self {
        (&ThrusterConfig::default()).into()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerBlock {
    /// `"adaptive"`, `"super_twisting"` or `"first_order"`.
    pub kind: String,
    /// Sliding-surface bandwidth per axis, 1/s.
    pub surface_gain: V6,
    pub lambda: f64,
    pub rho: f64,
    pub w_gain: f64,
    pub sigma0: f64,
    pub u_max: f64,
    pub phi: f64,
    pub gamma_big: f64,
    pub gamma_small: f64,
    /// `"equivalent"` or `"saturated"`.
    pub reaching: String,
    pub adaptive_k: V6,
    pub adaptive_gamma: V6,
    pub f_est_initial_n: V6,
    pub f_est_limit_n: f64,
    /// Clamp on each component of the integrated pose error, m s.
    pub integral_limit_m_s: f64,
    pub rate_divider: usize,
    pub baseline_lambda: f64,
    pub baseline_w_n: f64,
}

impl Default for ControllerBlock {
    fn default() -> Self {
        Self::from(&ControllerConfig::<f64>::default())
    }
}

impl From<&ControllerConfig<f64>> for ControllerBlock {
    fn from(c: &ControllerConfig<f64>) -> Self {
        let g = &c.gains;
        Self {
            kind: match c.kind {
                ControllerKind::Adaptive => "adaptive",
                ControllerKind::SuperTwisting => "super_twisting",
                ControllerKind::FirstOrder => "first_order",
            }
            .into(),
            surface_gain: v6(&c.surface.lambda_s),
            lambda: g.lambda,
            rho: g.rho,
            w_gain: g.w_gain,
            sigma0: g.sigma0,
            u_max: g.u_max,
            phi: g.phi,
            gamma_big: g.gamma_big,
            gamma_small: g.gamma_small,
            reaching: match c.reaching {
                ReachingForm::Equivalent => "equivalent",
                ReachingForm::Saturated => "saturated",
            }
            .into(),
            adaptive_k: v6(&c.adaptive.k_gain),
            adaptive_gamma: v6(&c.adaptive.gamma),
            f_est_initial_n: v6(&c.adaptive.f_est),
            f_est_limit_n: c.adaptive.f_est_limit,
            integral_limit_m_s: c.integral_limit,
            rate_divider: c.rate_divider,
            baseline_lambda: c.baseline_lambda,
            baseline_w_n: c.baseline_w,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowBlock {
    pub enabled: bool,
    pub b0: f64,
    pub e_amp: f64,
    pub omega_rad_s: f64,
    pub theta0_rad: f64,
    pub c: f64,
    pub k: f64,
    pub n_layers: usize,
    pub z_bounds_m: Interval,
    /// Speed multiplier per layer, surface first.
    pub layer_scale: Vec<f64>,
    pub speed_cap_m_s: f64,
    pub origin_m: [f64; 2],
    pub length_scale_m: f64,
    pub drag_gain_n_s_m: f64,
    pub yaw_gain_nm_s_m: f64,
    pub force_clamp_n: f64,
}

impl Default for FlowBlock {
    fn default() -> Self {
        Self::from(&FlowConfig::<f64>::default())
    }
}

impl From<&FlowConfig<f64>> for FlowBlock {
    fn from(f: &FlowConfig<f64>) -> Self {
        let (p, l, d) = (&f.params, &f.layers, &f.disturbance);
        Self {
            enabled: f.enabled,
            b0: p.b0,
            e_amp: p.e_amp,
            omega_rad_s: p.omega,
            theta0_rad: p.theta0,
            c: p.c,
            k: p.k,
            n_layers: l.n_layers,
            z_bounds_m: [l.z_bounds.0, l.z_bounds.1],
            layer_scale: l.layer_scale.clone(),
            speed_cap_m_s: l.speed_cap,
            origin_m: [l.origin.0, l.origin.1],
            length_scale_m: l.length_scale,
            drag_gain_n_s_m: d.drag_gain,
            yaw_gain_nm_s_m: d.yaw_gain,
            force_clamp_n: d.force_clamp,
        }
    }
}

impl FlowBlock {
    pub fn to_config(&self) -> FlowConfig<f64> {
        FlowConfig {
            enabled: self.enabled,
            params: FlowParams {
                b0: self.b0,
                e_amp: self.e_amp,
                omega: self.omega_rad_s,
                theta0: self.theta0_rad,
                c: self.c,
                k: self.k,
            },
            layers: LayeredField {
                n_layers: self.n_layers,
                z_bounds: (self.z_bounds_m[0], self.z_bounds_m[1]),
                layer_scale: self.layer_scale.clone(),
                speed_cap: self.speed_cap_m_s,
                origin: (self.origin_m[0], self.origin_m[1]),
                length_scale: self.length_scale_m,
            },
            disturbance: DisturbanceModel {
                drag_gain: self.drag_gain_n_s_m,
                yaw_gain: self.yaw_gain_nm_s_m,
                force_clamp: self.force_clamp_n,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MpcBlock {
    pub enabled: bool,
    pub horizon_steps: usize,
    pub smoothing_steps: usize,
    /// Per body axis `[lower, upper]`, N or N m.
    pub tau_bounds: [Interval; 6],
    /// Per pose axis `[lower, upper]` on the predicted tracking error, m or rad.
    pub state_bounds: [Interval; 6],
    pub candidate_count: usize,
    pub rounds: usize,
    pub perturbation_n: f64,
    pub stride: usize,
    pub tracking_weight: f64,
    pub smoothing_weight: f64,
}

impl Default for MpcBlock {
    fn default() -> Self {
        Self::from(&MpcConfig::<f64>::default())
    }
}

impl From<&MpcConfig<f64>> for MpcBlock {
    fn from(m: &MpcConfig<f64>) -> Self {
        Self {
            enabled: m.enabled,
            horizon_steps: m.n_e,
            smoothing_steps: m.n_u,
            tau_bounds: m.tau_bounds.map(|(a, b)| [a, b]),
            state_bounds: m.state_bounds.map(|(a, b)| [a, b]),
            candidate_count: m.candidate_count,
            rounds: m.rounds,
            perturbation_n: m.perturbation,
            stride: m.stride,
            tracking_weight: m.tracking_weight,
            smoothing_weight: m.smoothing_weight,
        }
    }
}

impl From<&MpcBlock> for MpcConfig<f64> {
    fn from(b: &MpcBlock) -> Self {
        Self {
            enabled: b.enabled,
            n_e: b.horizon_steps,
            n_u: b.smoothing_steps,
            tau_bounds: b.tau_bounds.map(|[a, c]| (a, c)),
            state_bounds: b.state_bounds.map(|[a, c]| (a, c)),
            candidate_count: b.candidate_count,
            rounds: b.rounds,
            perturbation: b.perturbation_n,
            stride: b.stride,
            tracking_weight: b.tracking_weight,
            smoothing_weight: b.smoothing_weight,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorkspaceBlock {
    pub x_m: Interval,
    pub y_m: Interval,
    pub z_m: Interval,
}

impl Default for WorkspaceBlock {
    fn default() -> Self {
        let w = Workspace::<f64>::default();
        Self {
            x_m: [w.x.0, w.x.1],
            y_m: [w.y.0, w.y.1],
            z_m: [w.z.0, w.z.1],
        }
    }
}

fn need<T: Copy>(v: Option<T>, kind: &str, key: &str) -> Result<T> {
    v.ok_or_else(|| Error::Invalid(format!("trajectory kind \"{kind}\" requires {key}")))
}

fn reject_extra(t: &TrajectoryBlock, allowed: &[&str]) -> Result<()> {
    let present = [
        ("center_m", t.center_m.is_some()),
        ("radius_m", t.radius_m.is_some()),
        ("angular_rate_rad_s", t.angular_rate_rad_s.is_some()),
        ("vertical_rate_m_s", t.vertical_rate_m_s.is_some()),
        ("start_m", t.start_m.is_some()),
        ("velocity_m_s", t.velocity_m_s.is_some()),
        ("heading_rad", t.heading_rad.is_some()),
        ("points_m", t.points_m.is_some()),
        ("speed_m_s", t.speed_m_s.is_some()),
    ];
    match present.iter().find(|(k, p)| *p && !allowed.contains(k)) {
        Some((k, _)) => Err(Error::Invalid(format!(
            "trajectory key {k} does not apply to kind \"{}\"",
            t.kind
        ))),
        None => Ok(()),
    }
}

impl TrajectoryBlock {
    pub fn to_spec(&self) -> Result<TrajectorySpec<f64>> {
        let k = self.kind.as_str();
        let kind = match k {
            "spiral" => {
                reject_extra(
                    self,
                    &[
                        "center_m",
                        "radius_m",
                        "angular_rate_rad_s",
                        "vertical_rate_m_s",
                    ],
                )?;
                PathKind::Spiral {
                    center: need(self.center_m, k, "center_m")?.into(),
                    radius: need(self.radius_m, k, "radius_m")?,
                    angular_rate: need(self.angular_rate_rad_s, k, "angular_rate_rad_s")?,
                    vertical_rate: self.vertical_rate_m_s.unwrap_or(0.0),
                }
            }
            "line" => {
                reject_extra(self, &["start_m", "velocity_m_s", "heading_rad"])?;
                PathKind::Line {
                    start: need(self.start_m, k, "start_m")?.into(),
                    velocity: need(self.velocity_m_s, k, "velocity_m_s")?.into(),
                    heading: self.heading_rad.unwrap_or(0.0),
                }
            }
            "waypoints" => {
                reject_extra(self, &["points_m", "speed_m_s"])?;
                let points = self.points_m.as_ref().ok_or_else(|| {
                    Error::Invalid("trajectory kind \"waypoints\" requires points_m".into())
                })?;
                PathKind::Waypoints {
                    points: points.iter().map(|&p| p.into()).collect(),
                    speed: need(self.speed_m_s, k, "speed_m_s")?,
                }
            }
            other => {
                return Err(Error::Invalid(format!(
                    "unknown trajectory kind \"{other}\" (expected spiral, line or waypoints)"
                )))
            }
        };
        Ok(TrajectorySpec {
            kind,
            duration: self.duration_s,
        })
    }

    fn from_spec(spec: &TrajectorySpec<f64>) -> Self {
        let mut b = Self {
            duration_s: spec.duration,
            ..Default::default()
        };
        match &spec.kind {
            PathKind::Spiral {
                center,
                radius,
                angular_rate,
                vertical_rate,
            } => {
                b.kind = "spiral".into();
                b.center_m = Some(v3(center));
                b.radius_m = Some(*radius);
                b.angular_rate_rad_s = Some(*angular_rate);
                b.vertical_rate_m_s = Some(*vertical_rate);
            }
            PathKind::Line {
                start,
                velocity,
                heading,
            } => {
                b.kind = "line".into();
                b.start_m = Some(v3(start));
                b.velocity_m_s = Some(v3(velocity));
                b.heading_rad = Some(*heading);
            }
            PathKind::Waypoints { points, speed } => {
                b.kind = "waypoints".into();
                b.points_m = Some(points.iter().map(v3).collect());
                b.speed_m_s = Some(*speed);
            }
        }
        b
    }
}

impl ControllerBlock {
    fn to_config(&self) -> Result<ControllerConfig<f64>> {
        let kind = match self.kind.as_str() {
            "adaptive" => ControllerKind::Adaptive,
            "super_twisting" => ControllerKind::SuperTwisting,
            "first_order" => ControllerKind::FirstOrder,
            other => {
                return Err(Error::Invalid(format!(
                    "unknown controller kind \"{other}\" (expected adaptive, super_twisting or first_order)"
                )))
            }
        };
        let reaching = match self.reaching.as_str() {
            "equivalent" => ReachingForm::Equivalent,
            "saturated" => ReachingForm::Saturated,
            other => {
                return Err(Error::Invalid(format!(
                    "unknown reaching form \"{other}\" (expected equivalent or saturated)"
                )))
            }
        };
        Ok(ControllerConfig {
            kind,
            surface: SurfaceConfig {
                lambda_s: self.surface_gain.into(),
            },
            gains: SuperTwistGains {
                lambda: self.lambda,
                rho: self.rho,
                w_gain: self.w_gain,
                sigma0: self.sigma0,
                u_max: self.u_max,
                phi: self.phi,
                gamma_big: self.gamma_big,
                gamma_small: self.gamma_small,
            },
            adaptive: AdaptiveState {
                f_est: self.f_est_initial_n.into(),
                k_gain: self.adaptive_k.into(),
                gamma: self.adaptive_gamma.into(),
                f_est_limit: self.f_est_limit_n,
            },
            reaching,
            integral_limit: self.integral_limit_m_s,
            rate_divider: self.rate_divider,
            baseline_lambda: self.baseline_lambda,
            baseline_w: self.baseline_w_n,
        })
    }
}

impl VehiclesBlock {
    fn params(&self) -> RigidBodyParams<f64> {
        RigidBodyParams {
            inertia: Matrix6::from_diagonal(&self.inertia_diag.into()),
            linear_damping: self.linear_damping.into(),
            quadratic_damping: self.quadratic_damping.into(),
            net_weight: self.net_weight_n,
            restoring_moment: self.restoring_moment_nm,
            mismatch_factor: self.mismatch_factor,
        }
    }
}

/// The comparison variant of a scenario: first-order law, no MPC shell.
pub fn baseline_variant(scenario: &Scenario<f64>) -> Scenario<f64> {
    let mut s = scenario.clone();
    s.controller.kind = ControllerKind::FirstOrder;
    s.mpc.enabled = false;
    s
}

impl ScenarioFile {
    pub fn to_scenario(&self) -> Result<Scenario<f64>> {
        let trajectory = self.trajectory.to_spec()?;
        trajectory.validate()?;
        let yaws = match &self.formation.offset_yaw_rad {
            Some(y) if y.len() != self.formation.offsets_m.len() => {
                return Err(Error::Invalid(format!(
                    "formation.offset_yaw_rad has {} entries for {} offsets",
                    y.len(),
                    self.formation.offsets_m.len()
                )))
            }
            Some(y) => y.clone(),
            None => vec![0.0; self.formation.offsets_m.len()],
        };
        let formation = FormationSpec {
            offsets: self
                .formation
                .offsets_m
                .iter()
                .zip(yaws)
                .map(|(p, yaw)| FollowerOffset {
                    position: (*p).into(),
                    yaw,
                })
                .collect(),
        };
        formation.validate()?;
        let params = self.vehicles.params();
        params.validate()?;
        let thrusters = ThrusterConfig::from(&self.vehicles.thrusters);
        let vehicles = match &self.vehicles.initial {
            Some(list) => list
                .iter()
                .map(|s| VehicleConfig {
                    initial: VehicleState::from_vectors(&s.pose.into(), &s.velocity.into()),
                    params: params.clone(),
                    thrusters,
                })
                .collect(),
            None => place_on_reference(
                &trajectory,
                &formation,
                &params,
                &thrusters,
                &self.vehicles.initial_error_m.into(),
            )?,
        };
        let actuation = match self.sim.actuation.as_str() {
            "direct" => ActuationMode::Direct,
            "thrusters" => ActuationMode::Thrusters,
            other => {
                return Err(Error::Invalid(format!(
                    "unknown actuation \"{other}\" (expected direct or thrusters)"
                )))
            }
        };
        let w = &self.workspace;
        let scenario = Scenario {
            vehicles,
            controller: self.controller.to_config()?,
            mpc: (&self.mpc).into(),
            flow: self.flow.to_config(),
            duration: self.sim.duration_s.unwrap_or(trajectory.duration),
            trajectory,
            formation,
            dt: self.sim.dt_s,
            seed: self.sim.seed,
            actuation,
            workspace: Workspace {
                x: (w.x_m[0], w.x_m[1]),
                y: (w.y_m[0], w.y_m[1]),
                z: (w.z_m[0], w.z_m[1]),
            },
            convergence_threshold: self.sim.convergence_threshold_m,
        };
        let scenario = if self.sim.baseline {
            baseline_variant(&scenario)
        } else {
            scenario
        };
        scenario.validate()?;
        Ok(scenario)
    }

    /// File form of a scenario. Every vehicle must share one model.
    pub fn from_scenario(s: &Scenario<f64>) -> Result<Self> {
        let first = s
            .vehicles
            .first()
            .ok_or_else(|| Error::Invalid("scenario has no vehicles".into()))?;
        if s.vehicles
            .iter()
            .any(|v| v.params != first.params || v.thrusters != first.thrusters)
        {
            return Err(Error::Invalid(
                "the scenario format needs one vehicle model shared by all vehicles".into(),
            ));
        }
        let p = &first.params;
        if p.inertia != Matrix6::from_diagonal(&p.inertia.diagonal()) {
            return Err(Error::Invalid(
                "the scenario format needs a diagonal inertia matrix".into(),
            ));
        }
        Ok(Self {
            sim: SimBlock {
                dt_s: s.dt,
                duration_s: Some(s.duration),
                seed: s.seed,
                actuation: match s.actuation {
                    ActuationMode::Direct => "direct",
                    ActuationMode::Thrusters => "thrusters",
                }
                .into(),
                convergence_threshold_m: s.convergence_threshold,
                baseline: false,
            },
            trajectory: TrajectoryBlock::from_spec(&s.trajectory),
            formation: FormationBlock {
                offsets_m: s
                    .formation
                    .offsets
                    .iter()
                    .map(|o| v3(&o.position))
                    .collect(),
                offset_yaw_rad: Some(s.formation.offsets.iter().map(|o| o.yaw).collect()),
            },
            vehicles: VehiclesBlock {
                initial_error_m: [0.0; 3],
                initial: Some(
                    s.vehicles
                        .iter()
                        .map(|v| InitialState {
                            pose: v6(&v.initial.pose()),
                            velocity: v6(&v.initial.velocity()),
                        })
                        .collect(),
                ),
                inertia_diag: v6(&p.inertia.diagonal()),
                linear_damping: v6(&p.linear_damping),
                quadratic_damping: v6(&p.quadratic_damping),
                net_weight_n: p.net_weight,
                restoring_moment_nm: p.restoring_moment,
                mismatch_factor: p.mismatch_factor,
                thrusters: (&first.thrusters).into(),
            },
            controller: (&s.controller).into(),
            flow: (&s.flow).into(),
            mpc: (&s.mpc).into(),
            workspace: WorkspaceBlock {
                x_m: [s.workspace.x.0, s.workspace.x.1],
                y_m: [s.workspace.y.0, s.workspace.y.1],
                z_m: [s.workspace.z.0, s.workspace.z.1],
            },
        })
    }
}

/// Parses and validates scenario text. `origin` labels diagnostics.
pub fn parse_scenario_str(text: &str, origin: &Path) -> Result<Scenario<f64>> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| Error::Parse {
        path: origin.to_path_buf(),
        message: e.to_string(),
    })?;
    file.to_scenario()
}

pub fn parse_scenario(path: &Path) -> Result<Scenario<f64>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scenario_str(&text, path)
}

pub fn serialize_scenario(s: &Scenario<f64>) -> Result<String> {
    toml::to_string(&ScenarioFile::from_scenario(s)?).map_err(|e| Error::Invalid(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[sim]
dt_s = 0.01

[trajectory]
kind = "spiral"
duration_s = 30
center_m = [40, 40, -3]
radius_m = 12
angular_rate_rad_s = 0.06
"#;

    fn parse(text: &str) -> Result<Scenario<f64>> {
        parse_scenario_str(text, Path::new("test.toml"))
    }

    #[test]
    fn minimal_file_gets_defaults() {
        let s = parse(MINIMAL).unwrap();
        let traj = TrajectorySpec {
            kind: PathKind::Spiral {
                center: Vector3::new(40.0, 40.0, -3.0),
                radius: 12.0,
                angular_rate: 0.06,
                vertical_rate: 0.0,
            },
            duration: 30.0,
        };
        assert_eq!(s, Scenario::with_defaults(traj).unwrap());
    }

    #[test]
    fn unknown_key_rejected_with_location() {
        let text = MINIMAL.replace("radius_m = 12", "radius_m = 12\nradius_ft = 3");
        let msg = parse(&text).unwrap_err().to_string();
        assert!(msg.contains("radius_ft") && msg.contains("line"), "{msg}");
        let text = format!("{MINIMAL}\n[controller]\nrho_typo = 0.3\n");
        assert!(matches!(parse(&text), Err(Error::Parse { .. })));
    }

    #[test]
    fn missing_block_rejected() {
        let text = MINIMAL.replace("[sim]\ndt_s = 0.01\n", "");
        let msg = parse(&text).unwrap_err().to_string();
        assert!(msg.contains("sim"), "{msg}");
    }

    #[test]
    fn gain_violation_names_the_bound() {
        let text = format!("{MINIMAL}\n[controller]\nrho = 0.6\n");
        let err = parse(&text).unwrap_err();
        assert!(matches!(err, Error::Invalid(_)));
        let msg = err.to_string();
        assert!(msg.contains("rho = 0.6 must lie in (0, 0.5]"), "{msg}");
    }

    #[test]
    fn kind_specific_keys_checked() {
        let text = MINIMAL.replace("radius_m = 12\n", "");
        assert!(parse(&text).unwrap_err().to_string().contains("radius_m"));
        let text = MINIMAL.replace("radius_m = 12", "radius_m = 12\nspeed_m_s = 1.0");
        assert!(parse(&text).unwrap_err().to_string().contains("speed_m_s"));
        let text = MINIMAL.replace("\"spiral\"", "\"helix\"");
        assert!(parse(&text).unwrap_err().to_string().contains("helix"));
    }

    #[test]
    fn round_trip_is_exact() {
        let text = format!(
            "{MINIMAL}\n[vehicles]\ninitial_error_m = [0.8, -0.6, 0.3]\nmismatch_factor = 0.7\n\
             [controller]\nkind = \"super_twisting\"\nadaptive_k = [1.5, 2, 3, 0, 0.1, 7]\n\
             [mpc]\nenabled = false\n[flow]\nenabled = false\n"
        );
        let s = parse(&text).unwrap();
        let again = parse(&serialize_scenario(&s).unwrap()).unwrap();
        assert_eq!(again, s);
        let b = baseline_variant(&s);
        assert_eq!(parse(&serialize_scenario(&b).unwrap()).unwrap(), b);
    }

    #[test]
    fn baseline_flag_selects_first_order() {
        let text = MINIMAL.replace("dt_s = 0.01", "dt_s = 0.01\nbaseline = true");
        let s = parse(&text).unwrap();
        assert_eq!(s.controller.kind, ControllerKind::FirstOrder);
        assert!(!s.mpc.enabled);
    }

    #[test]
    fn explicit_initial_states_must_match_formation() {
        let text = format!(
            "{MINIMAL}\n[[vehicles.initial]]\npose = [52, 40, -3, 0, 0, 1.5]\nvelocity = [0, 0, 0, 0, 0, 0]\n"
        );
        assert!(matches!(parse(&text), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn shipped_scenario_parses() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/spiral.toml");
        let s = parse_scenario(&path).unwrap();
        assert_eq!(s.vehicles.len(), 3);
        assert_eq!(s.flow.disturbance.force_clamp, 20.0);
    }
}
