//! 6-DOF AUV kinematics and dynamics in the body and inertial frames.
//!
//! The pose `e = [x y z phi theta psi]` lives in the inertial frame, the
//! velocity `q = [u v w p q r]` in the body frame, and the two are related by
//! `e_dot = J(e) q`. Body-frame dynamics follow
//! `M q_dot + C(q) q + D(q) q + g(e) = tau - tau_c`; the inertial-frame terms
//! are the congruence transforms of these through `J^-1`.

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};

use crate::error::{Error, Result};
use crate::scalar::{cast, to_f64, wrap_angle, Real};

/// Distance from +/-pi/2 below which the Euler-angle transform is treated as singular.
pub const PITCH_SINGULARITY_TOL: f64 = 1e-6;

/// Position/attitude and body velocity of one vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState<T: Real> {
    /// Inertial position (x, y, z), m.
    pub eta1: Vector3<T>,
    /// Euler angles (phi, theta, psi), rad.
    pub eta2: Vector3<T>,
    /// Body linear velocity (u, v, w), m/s.
    pub nu1: Vector3<T>,
    /// Body angular velocity (p, q, r), rad/s.
    pub nu2: Vector3<T>,
}

impl<T: Real> Default for VehicleState<T> {
    fn default() -> Self {
        Self {
            eta1: Vector3::zeros(),
            eta2: Vector3::zeros(),
            nu1: Vector3::zeros(),
            nu2: Vector3::zeros(),
        }
    }
}

impl<T: Real> VehicleState<T> {
    pub fn from_vectors(pose: &Vector6<T>, velocity: &Vector6<T>) -> Self {
        Self {
            eta1: pose.fixed_rows::<3>(0).into(),
            eta2: pose.fixed_rows::<3>(3).into(),
            nu1: velocity.fixed_rows::<3>(0).into(),
            nu2: velocity.fixed_rows::<3>(3).into(),
        }
    }

    /// Inertial pose `e`.
    pub fn pose(&self) -> Vector6<T> {
        let mut e = Vector6::zeros();
        e.fixed_rows_mut::<3>(0).copy_from(&self.eta1);
        e.fixed_rows_mut::<3>(3).copy_from(&self.eta2);
        e
    }

    /// Body velocity `q`.
    pub fn velocity(&self) -> Vector6<T> {
        let mut q = Vector6::zeros();
        q.fixed_rows_mut::<3>(0).copy_from(&self.nu1);
        q.fixed_rows_mut::<3>(3).copy_from(&self.nu2);
        q
    }

    /// Euler angles wrapped into `(-pi, pi]`.
    pub fn normalized(mut self) -> Self {
        self.eta2 = self.eta2.map(wrap_angle);
        self
    }

    pub fn is_finite(&self) -> bool {
        self.pose()
            .iter()
            .chain(self.velocity().iter())
            .all(|v| to_f64(*v).is_finite())
    }

    /// Kinetic energy `q^T M q / 2`.
    pub fn kinetic_energy(&self, params: &RigidBodyParams<T>) -> T {
        let q = self.velocity();
        q.dot(&(params.inertia * q)) * cast(0.5)
    }
}

/// Frame a wrench is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frame {
    Body,
    Inertial,
}

/// Force (X, Y, Z) and moment (K, M, N) tagged with a frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wrench6<T: Real> {
    pub force: Vector3<T>,
    pub moment: Vector3<T>,
    pub frame: Frame,
}

impl<T: Real> Wrench6<T> {
    pub fn zero(frame: Frame) -> Self {
        Self {
            force: Vector3::zeros(),
            moment: Vector3::zeros(),
            frame,
        }
    }

    pub fn from_vector(v: &Vector6<T>, frame: Frame) -> Self {
        Self {
            force: v.fixed_rows::<3>(0).into(),
            moment: v.fixed_rows::<3>(3).into(),
            frame,
        }
    }

    pub fn to_vector(&self) -> Vector6<T> {
        let mut v = Vector6::zeros();
        v.fixed_rows_mut::<3>(0).copy_from(&self.force);
        v.fixed_rows_mut::<3>(3).copy_from(&self.moment);
        v
    }

    fn expect_frame(&self, expected: Frame) -> Result<()> {
        if self.frame == expected {
            Ok(())
        } else {
            Err(Error::FrameMismatch {
                expected,
                actual: self.frame,
            })
        }
    }
}

/// Rigid-body and hydrodynamic parameters of one vehicle.
///
/// Coriolis/centripetal terms are derived from `inertia`; drag is
/// `diag(linear + quadratic * |q_i|)`; restoring forces come from the
/// net weight and the metacentric restoring moment.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidBodyParams<T: Real> {
    /// Inertia including added mass, kg and kg m^2.
    pub inertia: Matrix6<T>,
    pub linear_damping: Vector6<T>,
    pub quadratic_damping: Vector6<T>,
    /// Weight minus buoyancy, N (positive sinks).
    pub net_weight: T,
    /// Metacentric restoring moment `z_g W`, N m.
    pub restoring_moment: T,
    /// Fraction of the true parameters known to the controller, in (0, 1].
    pub mismatch_factor: T,
}

impl<T: Real> Default for RigidBodyParams<T> {
    fn default() -> Self {
        Self {
            inertia: Matrix6::from_diagonal(&Vector6::new(
                cast(30.0),
                cast(30.0),
                cast(30.0),
                cast(1.0),
                cast(5.0),
                cast(5.0),
            )),
            linear_damping: Vector6::repeat(cast(5.0)),
            quadratic_damping: Vector6::repeat(cast(10.0)),
            net_weight: T::zero(),
            restoring_moment: cast(10.0),
            mismatch_factor: cast(0.8),
        }
    }
}

impl<T: Real> RigidBodyParams<T> {
    pub fn validate(&self) -> Result<()> {
        let asym = (self.inertia - self.inertia.transpose()).abs().max();
        if asym > cast::<T>(1e-9) * (T::one() + self.inertia.abs().max()) {
            return Err(Error::Invalid("inertia matrix is not symmetric".into()));
        }
        if self.inertia.cholesky().is_none() {
            return Err(Error::Invalid(
                "inertia matrix is not positive definite".into(),
            ));
        }
        if self
            .linear_damping
            .iter()
            .chain(self.quadratic_damping.iter())
            .any(|d| *d < T::zero())
        {
            return Err(Error::Invalid(
                "damping coefficients must be nonnegative".into(),
            ));
        }
        let m = self.mismatch_factor;
        if !(m > T::zero() && m <= T::one()) {
            return Err(Error::Invalid(format!(
                "mismatch_factor {} outside (0, 1]",
                to_f64(m)
            )));
        }
        Ok(())
    }

    /// The controller's model: every parameter scaled by `mismatch_factor`.
    pub fn estimated(&self) -> Self {
        let m = self.mismatch_factor;
        Self {
            inertia: self.inertia * m,
            linear_damping: self.linear_damping * m,
            quadratic_damping: self.quadratic_damping * m,
            net_weight: self.net_weight * m,
            restoring_moment: self.restoring_moment * m,
            mismatch_factor: T::one(),
        }
    }

    /// Centripetal/Coriolis matrix `C(q)`, skew-symmetric for symmetric `M`.
    pub fn coriolis(&self, q: &Vector6<T>) -> Matrix6<T> {
        let m11 = self.inertia.fixed_view::<3, 3>(0, 0);
        let m12 = self.inertia.fixed_view::<3, 3>(0, 3);
        let m21 = self.inertia.fixed_view::<3, 3>(3, 0);
        let m22 = self.inertia.fixed_view::<3, 3>(3, 3);
        let nu1 = q.fixed_rows::<3>(0);
        let nu2 = q.fixed_rows::<3>(3);
        let a = m11 * nu1 + m12 * nu2;
        let b = m21 * nu1 + m22 * nu2;
        let sa = -a.cross_matrix();
        let sb = -b.cross_matrix();
        let mut c = Matrix6::zeros();
        c.fixed_view_mut::<3, 3>(0, 3).copy_from(&sa);
        c.fixed_view_mut::<3, 3>(3, 0).copy_from(&sa);
        c.fixed_view_mut::<3, 3>(3, 3).copy_from(&sb);
        c
    }

    /// Drag matrix `D(q)`.
    pub fn damping(&self, q: &Vector6<T>) -> Matrix6<T> {
        let d = Vector6::from_fn(|i, _| {
            self.linear_damping[i] + self.quadratic_damping[i] * q[i].abs()
        });
        Matrix6::from_diagonal(&d)
    }

    /// Restoring vector `g(e)` (body frame, left-hand side of the dynamics).
    pub fn restoring(&self, state: &VehicleState<T>) -> Vector6<T> {
        let (sphi, cphi) = state.eta2[0].sin_cos();
        let (stheta, ctheta) = state.eta2[1].sin_cos();
        let w = self.net_weight;
        let bg = self.restoring_moment;
        // R^T (0, 0, w): weight expressed in the body frame, z up.
        Vector6::new(
            -w * stheta,
            w * ctheta * sphi,
            w * ctheta * cphi,
            bg * ctheta * sphi,
            bg * stheta,
            T::zero(),
        )
    }
}

/// Kinematic transforms at one pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JacobianSet<T: Real> {
    /// Body-to-inertial rotation.
    pub rot: Matrix3<T>,
    /// Body angular rates to Euler-angle rates.
    pub ang: Matrix3<T>,
    /// Block-diagonal `J(e)` with `e_dot = J q`.
    pub full: Matrix6<T>,
    /// `J(e)^-1`.
    pub full_inv: Matrix6<T>,
}

fn check_pitch<T: Real>(theta: T) -> Result<()> {
    let margin = T::frac_pi_2() - theta.abs();
    if margin < cast(PITCH_SINGULARITY_TOL) || !to_f64(theta).is_finite() {
        Err(Error::Singularity {
            pitch: to_f64(theta),
        })
    } else {
        Ok(())
    }
}

/// Builds `R`, `T` and the block `J(e)` for the state's attitude.
pub fn kinematic_transform<T: Real>(state: &VehicleState<T>) -> Result<JacobianSet<T>> {
    let (phi, theta, psi) = (state.eta2[0], state.eta2[1], state.eta2[2]);
    check_pitch(theta)?;
    let (sphi, cphi) = phi.sin_cos();
    let (sth, cth) = theta.sin_cos();
    let (spsi, cpsi) = psi.sin_cos();
    let tth = sth / cth;
    let z = T::zero();
    let o = T::one();

    #[rustfmt::skip]
    let rot = Matrix3::new(
        cpsi * cth, -spsi * cphi + cpsi * sth * sphi, spsi * sphi + cpsi * cphi * sth,
        spsi * cth, cpsi * cphi + sphi * sth * spsi, -cpsi * sphi + sth * spsi * cphi,
        -sth,       cth * sphi,                      cth * cphi,
    );
    #[rustfmt::skip]
    let ang = Matrix3::new(
        o, sphi * tth,  cphi * tth,
        z, cphi,        -sphi,
        z, sphi / cth,  cphi / cth,
    );
    #[rustfmt::skip]
    let ang_inv = Matrix3::new(
        o, z,     -sth,
        z, cphi,  cth * sphi,
        z, -sphi, cth * cphi,
    );

    let mut full = Matrix6::zeros();
    full.fixed_view_mut::<3, 3>(0, 0).copy_from(&rot);
    full.fixed_view_mut::<3, 3>(3, 3).copy_from(&ang);
    let mut full_inv = Matrix6::zeros();
    full_inv
        .fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&rot.transpose());
    full_inv.fixed_view_mut::<3, 3>(3, 3).copy_from(&ang_inv);
    Ok(JacobianSet {
        rot,
        ang,
        full,
        full_inv,
    })
}

/// Analytic time derivative of `J(e)` along the state's own motion.
pub fn jacobian_rate<T: Real>(state: &VehicleState<T>, jac: &JacobianSet<T>) -> Matrix6<T> {
    let (sphi, cphi) = state.eta2[0].sin_cos();
    let (sth, cth) = state.eta2[1].sin_cos();
    let tth = sth / cth;
    let c2 = cth * cth;
    let z = T::zero();
    let euler_rate = jac.ang * state.nu2;
    let (dphi, dtheta) = (euler_rate[0], euler_rate[1]);

    let rot_dot = jac.rot * state.nu2.cross_matrix();
    #[rustfmt::skip]
    let dang_dphi = Matrix3::new(
        z, cphi * tth,  -sphi * tth,
        z, -sphi,       -cphi,
        z, cphi / cth,  -sphi / cth,
    );
    #[rustfmt::skip]
    let dang_dtheta = Matrix3::new(
        z, sphi / c2,        cphi / c2,
        z, z,                z,
        z, sphi * sth / c2,  cphi * sth / c2,
    );
    let ang_dot = dang_dphi * dphi + dang_dtheta * dtheta;

    let mut jdot = Matrix6::zeros();
    jdot.fixed_view_mut::<3, 3>(0, 0).copy_from(&rot_dot);
    jdot.fixed_view_mut::<3, 3>(3, 3).copy_from(&ang_dot);
    jdot
}

/// Body-frame acceleration `q_dot = M^-1 (tau - tau_c - C q - D q - g)`.
pub fn dynamics_body<T: Real>(
    state: &VehicleState<T>,
    tau: &Wrench6<T>,
    tau_c: &Wrench6<T>,
    params: &RigidBodyParams<T>,
) -> Result<Vector6<T>> {
    tau.expect_frame(Frame::Body)?;
    tau_c.expect_frame(Frame::Body)?;
    body_acceleration(state, &(tau.to_vector() - tau_c.to_vector()), params)
}

/// Same as [`dynamics_body`] with the net body wrench `tau - tau_c` given directly.
pub fn body_acceleration<T: Real>(
    state: &VehicleState<T>,
    net_wrench: &Vector6<T>,
    params: &RigidBodyParams<T>,
) -> Result<Vector6<T>> {
    let q = state.velocity();
    let rhs =
        net_wrench - params.coriolis(&q) * q - params.damping(&q) * q - params.restoring(state);
    params
        .inertia
        .cholesky()
        .map(|c| c.solve(&rhs))
        .ok_or(Error::NonInvertibleInertia)
}

/// Inertial-frame dynamics matrices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InertialDynamicsTerms<T: Real> {
    pub m_e: Matrix6<T>,
    pub c_e: Matrix6<T>,
    pub d_e: Matrix6<T>,
    pub g_e: Vector6<T>,
}

/// `M_e = J^-T M J^-1`, `C_e = J^-T (C - M J^-1 J_dot) J^-1`,
/// `D_e = J^-T D J^-1`, `g_e = J^-T g`.
pub fn dynamics_inertial_terms<T: Real>(
    state: &VehicleState<T>,
    params: &RigidBodyParams<T>,
) -> Result<InertialDynamicsTerms<T>> {
    let jac = kinematic_transform(state)?;
    Ok(inertial_terms_with(state, params, &jac))
}

pub(crate) fn inertial_terms_with<T: Real>(
    state: &VehicleState<T>,
    params: &RigidBodyParams<T>,
    jac: &JacobianSet<T>,
) -> InertialDynamicsTerms<T> {
    let q = state.velocity();
    let jinv = jac.full_inv;
    let jinv_t = jinv.transpose();
    let jdot = jacobian_rate(state, jac);
    let m = params.inertia;
    InertialDynamicsTerms {
        m_e: jinv_t * m * jinv,
        c_e: jinv_t * (params.coriolis(&q) - m * jinv * jdot) * jinv,
        d_e: jinv_t * params.damping(&q) * jinv,
        g_e: jinv_t * params.restoring(state),
    }
}

/// `f_r = M_e e_ddot_r + C_e e_dot_r + D_e e_dot + g_e` for the given parameters.
pub fn reference_dynamics<T: Real>(
    state: &VehicleState<T>,
    edot_r: &Vector6<T>,
    eddot_r: &Vector6<T>,
    params: &RigidBodyParams<T>,
) -> Result<Vector6<T>> {
    let jac = kinematic_transform(state)?;
    let terms = inertial_terms_with(state, params, &jac);
    let edot = jac.full * state.velocity();
    Ok(terms.m_e * eddot_r + terms.c_e * edot_r + terms.d_e * edot + terms.g_e)
}

/// Controller-side `f_hat_r`: [`reference_dynamics`] evaluated with the
/// parameters scaled by `mismatch_factor`.
pub fn estimated_dynamics<T: Real>(
    state: &VehicleState<T>,
    edot_r: &Vector6<T>,
    eddot_r: &Vector6<T>,
    params: &RigidBodyParams<T>,
) -> Result<Vector6<T>> {
    reference_dynamics(state, edot_r, eddot_r, &params.estimated())
}

/// Time derivative of the full 12-element state under a net body wrench.
pub fn state_derivative<T: Real>(
    state: &VehicleState<T>,
    net_wrench: &Vector6<T>,
    params: &RigidBodyParams<T>,
) -> Result<(Vector6<T>, Vector6<T>)> {
    let jac = kinematic_transform(state)?;
    let e_dot = jac.full * state.velocity();
    let q_dot = body_acceleration(state, net_wrench, params)?;
    Ok((e_dot, q_dot))
}

/// Inertial acceleration `e_ddot = d/dt (J(e) q)` given the body acceleration `q_dot`.
pub fn inertial_acceleration<T: Real>(
    state: &VehicleState<T>,
    q_dot: &Vector6<T>,
) -> Result<Vector6<T>> {
    let jac = kinematic_transform(state)?;
    let (p, q, r) = (state.nu2.x, state.nu2.y, state.nu2.z);
    let (p_dot, q_dot_a, r_dot) = (q_dot[3], q_dot[4], q_dot[5]);
    let (sphi, cphi) = state.eta2.x.sin_cos();
    let (sth, cth) = state.eta2.y.sin_cos();
    let a = q * sphi + r * cphi;
    let phi_dot = p + a * sth / cth;
    let theta_dot = q * cphi - r * sphi;
    let a_dot = q_dot_a * sphi + r_dot * cphi + phi_dot * theta_dot;
    let lin = jac.rot * (q_dot.fixed_rows::<3>(0) + state.nu2.cross(&state.nu1));
    Ok(Vector6::new(
        lin.x,
        lin.y,
        lin.z,
        p_dot + a_dot * sth / cth + a * theta_dot / (cth * cth),
        q_dot_a * cphi - r_dot * sphi - phi_dot * a,
        a_dot / cth + a * sth * theta_dot / (cth * cth),
    ))
}
