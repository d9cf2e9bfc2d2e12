//! Fixed-step RK4 propagation of a vehicle under a held body wrench.

use nalgebra::{SVector, Vector3, Vector6};

use crate::error::{Error, Result};
use crate::flow::{disturbance_wrench, DisturbanceModel, FlowField};
use crate::scalar::{cast, to_f64, Real};
use crate::vehicle::{kinematic_transform, state_derivative, RigidBodyParams, VehicleState};

/// Source of the inertial disturbance wrench acting on a vehicle.
pub trait Environment<T: Real> {
    fn disturbance(&self, state: &VehicleState<T>, t: T) -> Vector6<T>;
}

/// No current.
#[derive(Debug, Clone, Copy, Default)]
pub struct Calm;

impl<T: Real> Environment<T> for Calm {
    fn disturbance(&self, _: &VehicleState<T>, _: T) -> Vector6<T> {
        Vector6::zeros()
    }
}

/// A constant inertial disturbance.
#[derive(Debug, Clone, Copy)]
pub struct Frozen<T: Real>(pub Vector6<T>);

impl<T: Real> Environment<T> for Frozen<T> {
    fn disturbance(&self, _: &VehicleState<T>, _: T) -> Vector6<T> {
        self.0
    }
}

/// Layered current field mapped through the disturbance model.
#[derive(Debug, Clone, Copy)]
pub struct Current<'a, T: Real> {
    pub field: &'a FlowField<T>,
    pub model: &'a DisturbanceModel<T>,
}

impl<T: Real> Current<'_, T> {
    pub fn flow_at(&self, state: &VehicleState<T>, t: T) -> Vector3<T> {
        let p = &state.eta1;
        self.field.velocity(p.x, p.y, p.z, t)
    }
}

impl<T: Real> Environment<T> for Current<'_, T> {
    fn disturbance(&self, state: &VehicleState<T>, t: T) -> Vector6<T> {
        disturbance_wrench(&self.flow_at(state, t), state, self.model).to_vector()
    }
}

/// Classic fourth-order Runge-Kutta step of `x_dot = f(t, x)`.
pub fn rk4_step<T, const N: usize, F>(
    t: T,
    x: &SVector<T, N>,
    dt: T,
    mut f: F,
) -> Result<SVector<T, N>>
where
    T: Real,
    F: FnMut(T, &SVector<T, N>) -> Result<SVector<T, N>>,
{
    let half: T = cast(0.5);
    let h2 = dt * half;
    let k1 = f(t, x)?;
    let k2 = f(t + h2, &(x + k1 * h2))?;
    let k3 = f(t + h2, &(x + k2 * h2))?;
    let k4 = f(t + dt, &(x + k3 * dt))?;
    let sixth = dt / cast(6.0);
    Ok(x + (k1 + (k2 + k3) * cast::<T>(2.0) + k4) * sixth)
}

pub fn pack<T: Real>(s: &VehicleState<T>) -> SVector<T, 12> {
    let mut x = SVector::<T, 12>::zeros();
    x.fixed_rows_mut::<6>(0).copy_from(&s.pose());
    x.fixed_rows_mut::<6>(6).copy_from(&s.velocity());
    x
}

pub fn unpack<T: Real>(x: &SVector<T, 12>) -> VehicleState<T> {
    VehicleState::from_vectors(
        &x.fixed_rows::<6>(0).into_owned(),
        &x.fixed_rows::<6>(6).into_owned(),
    )
}

/// `[e_dot; q_dot]` with the body wrench `tau + J^T d(state, t)`.
pub fn plant_derivative<T: Real, E: Environment<T> + ?Sized>(
    state: &VehicleState<T>,
    tau_body: &Vector6<T>,
    params: &RigidBodyParams<T>,
    env: &E,
    t: T,
) -> Result<SVector<T, 12>> {
    let jac = kinematic_transform(state)?;
    let d = env.disturbance(state, t);
    let net = tau_body + jac.full.transpose() * d;
    let (e_dot, q_dot) = state_derivative(state, &net, params)?;
    let mut out = SVector::<T, 12>::zeros();
    out.fixed_rows_mut::<6>(0).copy_from(&e_dot);
    out.fixed_rows_mut::<6>(6).copy_from(&q_dot);
    Ok(out)
}

/// One RK4 step with the control held constant; the disturbance is
/// re-evaluated at every stage. Angles are wrapped afterwards.
pub fn plant_step<T: Real, E: Environment<T> + ?Sized>(
    state: &VehicleState<T>,
    tau_body: &Vector6<T>,
    params: &RigidBodyParams<T>,
    env: &E,
    t: T,
    dt: T,
) -> Result<VehicleState<T>> {
    let next = rk4_step(t, &pack(state), dt, |ts, x| {
        plant_derivative(&unpack(x), tau_body, params, env, ts)
    })?;
    let next = unpack(&next).normalized();
    if !next.is_finite() {
        return Err(Error::NonFinite {
            vehicle: usize::MAX,
            t: to_f64(t + dt),
        });
    }
    kinematic_transform(&next)?;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vehicle::RigidBodyParams;
    use approx::assert_relative_eq;
    use nalgebra::Vector1;
    use proptest::prelude::*;

    fn decay_error(dt: f64) -> f64 {
        let n = (1.0 / dt).round() as usize;
        let mut x = Vector1::new(1.0);
        for k in 0..n {
            x = rk4_step(k as f64 * dt, &x, dt, |_, y| Ok(-y)).unwrap();
        }
        (x[0] - (-1.0f64).exp()).abs()
    }

    #[test]
    fn rk4_fourth_order_on_decay() {
        let e = [decay_error(0.04), decay_error(0.02), decay_error(0.01)];
        let p1 = (e[0] / e[1]).log2();
        let p2 = (e[1] / e[2]).log2();
        let overall = (e[0] / e[2]).log2() / 2.0;
        assert!(
            p1 > 3.8 && p2 > 3.8 && overall >= 3.8,
            "orders {p1} {p2} {overall}"
        );
    }

    #[test]
    fn rk4_single_step_matches_series() {
        let x = rk4_step(0.0, &Vector1::new(1.0), 0.1, |_, y| Ok(-y)).unwrap();
        let h: f64 = 0.1;
        assert_relative_eq!(
            x[0],
            1.0 - h + h * h / 2.0 - h.powi(3) / 6.0 + h.powi(4) / 24.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn rest_stays_at_rest() {
        let p = RigidBodyParams::<f64>::default();
        let s = VehicleState {
            eta1: Vector3::new(10.0, 20.0, -5.0),
            ..Default::default()
        };
        let next = plant_step(&s, &Vector6::zeros(), &p, &Calm, 0.0, 0.01).unwrap();
        assert_eq!(next, s);
    }

    fn drift(yaw: f64) -> Vector3<f64> {
        let p = RigidBodyParams::<f64>::default();
        let mut x = VehicleState::default();
        x.eta2.z = yaw;
        let env = Frozen(Vector6::new(3.0, 0.0, 0.0, 0.0, 0.0, 0.0));
        for k in 0..100 {
            x = plant_step(&x, &Vector6::zeros(), &p, &env, k as f64 * 0.01, 0.01).unwrap();
        }
        x.eta1
    }

    #[test]
    fn frozen_disturbance_pushes_along_itself() {
        let aligned = drift(0.0);
        assert!(aligned.x > 0.0);
        assert_eq!(aligned.y, 0.0);
        // anisotropic quadratic drag lets a yawed hull slip sideways, but x dominates
        let yawed = drift(0.9);
        assert!(yawed.x > 10.0 * yawed.y.abs());
    }

    #[test]
    fn pack_round_trip() {
        let s = VehicleState::<f64>::from_vectors(
            &Vector6::new(1.0, 2.0, 3.0, 0.1, 0.2, 0.3),
            &Vector6::new(4.0, 5.0, 6.0, 0.4, 0.5, 0.6),
        );
        assert_eq!(unpack(&pack(&s)), s);
    }

    proptest! {
        #[test]
        fn drag_only_energy_non_increasing(
            v in proptest::array::uniform6(-1.5..1.5f64),
            yaw in -3.0..3.0f64,
        ) {
            let p = RigidBodyParams::<f64> { restoring_moment: 0.0, ..Default::default() };
            let mut s = VehicleState::from_vectors(&Vector6::new(0.0, 0.0, -5.0, 0.0, 0.0, yaw), &Vector6::from(v));
            let mut ke = s.kinetic_energy(&p);
            for k in 0..200 {
                s = plant_step(&s, &Vector6::zeros(), &p, &Calm, k as f64 * 0.01, 0.01).unwrap();
                let next = s.kinetic_energy(&p);
                prop_assert!(next <= ke + 1e-12);
                ke = next;
            }
        }
    }
}
