//! Leader trajectory generation and leader-follower references.

use nalgebra::{Vector3, Vector6};

use crate::error::{Error, Result};
use crate::scalar::{cast, to_f64, wrap_angle, Real};
use crate::vehicle::{kinematic_transform, VehicleState};

/// Desired pose, rate and acceleration in the inertial frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reference<T: Real> {
    pub pose: Vector6<T>,
    pub rate: Vector6<T>,
    pub accel: Vector6<T>,
}

impl<T: Real> Reference<T> {
    pub fn stationary(pose: Vector6<T>) -> Self {
        Self {
            pose,
            rate: Vector6::zeros(),
            accel: Vector6::zeros(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PathKind<T: Real> {
    /// Helix around a vertical axis. Heading is tangent to the horizontal circle.
    Spiral {
        center: Vector3<T>,
        radius: T,
        /// rad/s, sign gives the turning direction.
        angular_rate: T,
        /// m/s, negative descends.
        vertical_rate: T,
    },
    /// Constant-velocity line. `heading` is used only when the horizontal speed is zero.
    Line {
        start: Vector3<T>,
        velocity: Vector3<T>,
        heading: T,
    },
    /// Piecewise-linear path at constant speed; holds the final point.
    Waypoints { points: Vec<Vector3<T>>, speed: T },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySpec<T: Real> {
    pub kind: PathKind<T>,
    pub duration: T,
}

impl<T: Real> TrajectorySpec<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration > T::zero()) {
            return Err(Error::Invalid(
                "trajectory duration must be positive".into(),
            ));
        }
        match &self.kind {
            PathKind::Spiral {
                center,
                radius,
                angular_rate,
                vertical_rate,
            } => {
                if !(*radius > T::zero()) {
                    return Err(Error::Invalid("spiral radius must be positive".into()));
                }
                if !(center.iter().all(|c| c.is_finite())
                    && angular_rate.is_finite()
                    && vertical_rate.is_finite())
                {
                    return Err(Error::Invalid("spiral parameters must be finite".into()));
                }
            }
            PathKind::Line {
                start,
                velocity,
                heading,
            } => {
                if !(start.iter().chain(velocity.iter()).all(|c| c.is_finite())
                    && heading.is_finite())
                {
                    return Err(Error::Invalid("line parameters must be finite".into()));
                }
            }
            PathKind::Waypoints { points, speed } => {
                if points.is_empty() {
                    return Err(Error::Invalid("waypoint list is empty".into()));
                }
                if !(*speed > T::zero()) {
                    return Err(Error::Invalid("waypoint speed must be positive".into()));
                }
                if !points.iter().flat_map(|p| p.iter()).all(|c| c.is_finite()) {
                    return Err(Error::Invalid("waypoints must be finite".into()));
                }
            }
        }
        Ok(())
    }
}

fn pose_of<T: Real>(p: Vector3<T>, yaw: T) -> Vector6<T> {
    Vector6::new(p.x, p.y, p.z, T::zero(), T::zero(), wrap_angle(yaw))
}

fn rate_of<T: Real>(v: Vector3<T>, yaw_rate: T) -> Vector6<T> {
    Vector6::new(v.x, v.y, v.z, T::zero(), T::zero(), yaw_rate)
}

/// Leader reference at time `t` in `[0, duration]`.
pub fn leader_reference<T: Real>(t: T, spec: &TrajectorySpec<T>) -> Result<Reference<T>> {
    let slack = cast::<T>(1e-9) * (T::one() + spec.duration);
    if !(t >= -slack && t <= spec.duration + slack) {
        return Err(Error::TimeOutOfRange {
            t: to_f64(t),
            duration: to_f64(spec.duration),
        });
    }
    let z = T::zero();
    Ok(match &spec.kind {
        PathKind::Spiral {
            center,
            radius,
            angular_rate: w,
            vertical_rate: vz,
        } => {
            let (s, c) = (*w * t).sin_cos();
            let r = *radius;
            let p = center + Vector3::new(r * c, r * s, *vz * t);
            let v = Vector3::new(-r * *w * s, r * *w * c, *vz);
            let a = Vector3::new(-r * *w * *w * c, -r * *w * *w * s, z);
            let turn = if *w < z {
                -T::frac_pi_2()
            } else {
                T::frac_pi_2()
            };
            Reference {
                pose: pose_of(p, *w * t + turn),
                rate: rate_of(v, *w),
                accel: rate_of(a, z),
            }
        }
        PathKind::Line {
            start,
            velocity,
            heading,
        } => {
            let horiz = velocity.xy().norm();
            let yaw = if horiz > z {
                velocity.y.atan2(velocity.x)
            } else {
                *heading
            };
            Reference {
                pose: pose_of(start + velocity * t, yaw),
                rate: rate_of(*velocity, z),
                accel: Vector6::zeros(),
            }
        }
        PathKind::Waypoints { points, speed } => waypoint_reference(points, *speed, t),
    })
}

fn segment_yaw<T: Real>(d: &Vector3<T>, fallback: T) -> T {
    if d.xy().norm() > T::zero() {
        d.y.atan2(d.x)
    } else {
        fallback
    }
}

fn waypoint_reference<T: Real>(points: &[Vector3<T>], speed: T, t: T) -> Reference<T> {
    let mut remaining = speed * t.max(T::zero());
    let mut yaw = T::zero();
    for pair in points.windows(2) {
        let d = pair[1] - pair[0];
        let len = d.norm();
        yaw = segment_yaw(&d, yaw);
        if len > T::zero() && remaining < len {
            let dir = d / len;
            return Reference {
                pose: pose_of(pair[0] + dir * remaining, yaw),
                rate: rate_of(dir * speed, T::zero()),
                accel: Vector6::zeros(),
            };
        }
        remaining -= len;
    }
    Reference::stationary(pose_of(*points.last().expect("validated nonempty"), yaw))
}

/// Follower slot in the leader's horizontal frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FollowerOffset<T: Real> {
    /// m, rotated by the leader's yaw.
    pub position: Vector3<T>,
    /// rad, added to the leader's yaw.
    pub yaw: T,
}

impl<T: Real> FollowerOffset<T> {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self {
            position: Vector3::new(cast(x), cast(y), cast(z)),
            yaw: T::zero(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FormationSpec<T: Real> {
    pub offsets: Vec<FollowerOffset<T>>,
}

impl<T: Real> Default for FormationSpec<T> {
    fn default() -> Self {
        Self {
            offsets: vec![
                FollowerOffset::new(-2.0, 1.5, 0.0),
                FollowerOffset::new(-2.0, -1.5, 0.0),
            ],
        }
    }
}

impl<T: Real> FormationSpec<T> {
    /// Slots must be finite and pairwise distinct, including the leader's own slot at the origin.
    pub fn validate(&self) -> Result<()> {
        let mut slots = vec![Vector3::zeros()];
        for o in &self.offsets {
            if !(o.position.iter().all(|c| c.is_finite()) && o.yaw.is_finite()) {
                return Err(Error::Invalid("formation offsets must be finite".into()));
            }
            if slots.iter().any(|s| (s - o.position).norm() < cast(1e-9)) {
                return Err(Error::Invalid(format!(
                    "formation offset ({}, {}, {}) coincides with another vehicle",
                    to_f64(o.position.x),
                    to_f64(o.position.y),
                    to_f64(o.position.z)
                )));
            }
            slots.push(o.position);
        }
        Ok(())
    }

    pub fn vehicle_count(&self) -> usize {
        self.offsets.len() + 1
    }
}

/// Follower desired pose and rate from the leader's actual pose and inertial rate `leader_rates`.
///
/// Position is `p_L + R_z(psi_L) offset`; the rate follows by the chain
/// rule, `p_L_dot + psi_L_dot R_z'(psi_L) offset`. Desired roll and pitch are zero.
pub fn follower_reference<T: Real>(
    leader: &VehicleState<T>,
    leader_rates: &Vector6<T>,
    offset: &FollowerOffset<T>,
) -> Result<(Vector6<T>, Vector6<T>)> {
    kinematic_transform(leader)?;
    let psi = leader.eta2.z;
    let (s, c) = psi.sin_cos();
    let o = &offset.position;
    let rotated = Vector3::new(c * o.x - s * o.y, s * o.x + c * o.y, o.z);
    let psi_dot = leader_rates[5];
    let d_rotated = Vector3::new(-s * o.x - c * o.y, c * o.x - s * o.y, T::zero()) * psi_dot;
    let pose = pose_of(leader.eta1 + rotated, psi + offset.yaw);
    let rate = rate_of(leader_rates.fixed_rows::<3>(0) + d_rotated, psi_dot);
    Ok((pose, rate))
}

/// Second derivative of [`follower_reference`] given the leader's inertial acceleration.
pub fn follower_acceleration<T: Real>(
    leader: &VehicleState<T>,
    leader_rates: &Vector6<T>,
    leader_accel: &Vector6<T>,
    offset: &FollowerOffset<T>,
) -> Vector6<T> {
    let (s, c) = leader.eta2.z.sin_cos();
    let o = &offset.position;
    let (psi_dot, psi_ddot) = (leader_rates[5], leader_accel[5]);
    // R_z' o and R_z'' o = -R_z o in the horizontal plane.
    let d1 = Vector3::new(-s * o.x - c * o.y, c * o.x - s * o.y, T::zero());
    let d2 = Vector3::new(-(c * o.x - s * o.y), -(s * o.x + c * o.y), T::zero());
    let lin = leader_accel.fixed_rows::<3>(0) + d1 * psi_ddot + d2 * (psi_dot * psi_dot);
    rate_of(lin, psi_ddot)
}

/// Pose error `e - e_d` with attitude components wrapped to (-pi, pi].
pub fn pose_error<T: Real>(pose: &Vector6<T>, desired: &Vector6<T>) -> Vector6<T> {
    let mut eps = pose - desired;
    for i in 3..6 {
        eps[i] = wrap_angle(eps[i]);
    }
    eps
}

/// Per-vehicle `(eps, eps_dot)` from states and `(e_d, e_dot_d)` references.
pub fn formation_error<T: Real>(
    states: &[VehicleState<T>],
    refs: &[(Vector6<T>, Vector6<T>)],
) -> Result<Vec<(Vector6<T>, Vector6<T>)>> {
    if states.len() != refs.len() {
        return Err(Error::LengthMismatch {
            expected: states.len(),
            actual: refs.len(),
        });
    }
    states
        .iter()
        .zip(refs)
        .map(|(s, (ed, edot_d))| {
            let jac = kinematic_transform(s)?;
            let edot = jac.full * s.velocity();
            Ok((pose_error(&s.pose(), ed), edot - edot_d))
        })
        .collect()
}
