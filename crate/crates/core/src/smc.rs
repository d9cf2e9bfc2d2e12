//! Adaptive higher-order sliding-mode control.
//!
//! The surface is `sigma = eps_dot + 2 L eps + L^2 int(eps)` with `L` a
//! positive diagonal gain. The proposed law is
//!
//! ```text
//! u1 = J^T ( -lambda |sigma|^rho sign(sigma) + f_hat_r )
//! u2 = J^T ( f_est - (K + C_hat_e) sigma ),     d/dt f_est = -Gamma sigma
//! ```
//!
//! which replaces the discontinuous switching term of a first-order law
//! with a continuous adaptive estimate. A Lyapunov function
//! `V = (sigma^T M_e sigma + w^T Gamma^-1 w) / 2` with `w = f_est - f_tilde`
//! is exposed for runtime monitoring.

use nalgebra::{Matrix6, Vector6};

use crate::error::{Error, Result};
use crate::scalar::{cast, clamp_abs, sign, to_f64, Real};
use crate::vehicle::JacobianSet;

/// Diagonal surface gain `L` (all entries > 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceConfig<T: Real> {
    pub lambda_s: Vector6<T>,
}

impl<T: Real> Default for SurfaceConfig<T> {
    fn default() -> Self {
        Self {
            lambda_s: Vector6::repeat(cast(0.8)),
        }
    }
}

impl<T: Real> SurfaceConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_s.iter().all(|l| *l > T::zero()) {
            Ok(())
        } else {
            Err(Error::Invalid("surface gains must all be positive".into()))
        }
    }
}

/// Super-twisting gains and the constants of the convergence conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuperTwistGains<T: Real> {
    pub lambda: T,
    pub rho: T,
    pub w_gain: T,
    pub sigma0: T,
    pub u_max: T,
    /// Disturbance bound.
    pub phi: T,
    pub gamma_big: T,
    pub gamma_small: T,
}

impl<T: Real> Default for SuperTwistGains<T> {
    fn default() -> Self {
        Self {
            lambda: cast(2.1),
            rho: cast(0.36),
            w_gain: cast(0.3),
            sigma0: cast(0.1),
            u_max: T::one(),
            phi: cast(0.2),
            gamma_big: T::one(),
            gamma_small: T::one(),
        }
    }
}

/// One failed convergence condition.
#[derive(Debug, Clone, PartialEq)]
pub enum GainViolation {
    /// `W > Phi / Gamma_M` fails.
    SwitchingGain { w_gain: f64, bound: f64 },
    /// `0 < rho <= 0.5` fails.
    Exponent { rho: f64 },
    /// `lambda^2 >= 4 Phi Gamma_M (W + Phi) / (Gamma_m^2 (W - Phi))` fails.
    TwistGain { lambda_sq: f64, bound: f64 },
    /// A constant that must be positive is not.
    NonPositive { name: &'static str, value: f64 },
}

impl std::fmt::Display for GainViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::SwitchingGain { w_gain, bound } => {
                write!(f, "W = {w_gain} must exceed Phi/Gamma_M = {bound}")
            }
            Self::Exponent { rho } => write!(f, "rho = {rho} must lie in (0, 0.5]"),
            Self::TwistGain { lambda_sq, bound } => {
                write!(f, "lambda^2 = {lambda_sq} must be at least {bound}")
            }
            Self::NonPositive { name, value } => write!(f, "{name} = {value} must be positive"),
        }
    }
}

/// Checks the super-twisting convergence conditions, reporting every failure.
pub fn validate_gains<T: Real>(g: &SuperTwistGains<T>) -> Result<(), Vec<GainViolation>> {
    let mut out = Vec::new();
    for (name, v) in [
        ("lambda", g.lambda),
        ("W", g.w_gain),
        ("Phi", g.phi),
        ("Gamma_M", g.gamma_big),
        ("Gamma_m", g.gamma_small),
        ("sigma0", g.sigma0),
        ("u_max", g.u_max),
    ] {
        if !(v > T::zero()) {
            out.push(GainViolation::NonPositive {
                name,
                value: to_f64(v),
            });
        }
    }
    let (w, phi) = (to_f64(g.w_gain), to_f64(g.phi));
    let (gm_big, gm_small) = (to_f64(g.gamma_big), to_f64(g.gamma_small));
    let bound = phi / gm_big;
    if !(w > bound) {
        out.push(GainViolation::SwitchingGain { w_gain: w, bound });
    }
    let rho = to_f64(g.rho);
    if !(rho > 0.0 && rho <= 0.5) {
        out.push(GainViolation::Exponent { rho });
    }
    let lambda_sq = to_f64(g.lambda) * to_f64(g.lambda);
    let twist_bound = 4.0 * phi * gm_big * (w + phi) / (gm_small * gm_small * (w - phi));
    if !(lambda_sq >= twist_bound) {
        out.push(GainViolation::TwistGain {
            lambda_sq,
            bound: twist_bound,
        });
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

/// Adaptive disturbance estimate and its diagonal gains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveState<T: Real> {
    pub f_est: Vector6<T>,
    /// Diagonal of `K`.
    pub k_gain: Vector6<T>,
    /// Diagonal of `Gamma`.
    pub gamma: Vector6<T>,
    /// Per-axis bound on `f_est`.
    pub f_est_limit: T,
}

impl<T: Real> Default for AdaptiveState<T> {
    fn default() -> Self {
        let d = |a: f64, b: f64, c: f64| {
            Vector6::new(cast(a), cast(b), T::zero(), T::zero(), T::zero(), cast(c))
        };
        Self {
            f_est: Vector6::zeros(),
            k_gain: d(50.0, 50.0, 50.0),
            gamma: d(50.0, 50.0, 100.0),
            f_est_limit: cast(40.0),
        }
    }
}

impl<T: Real> AdaptiveState<T> {
    pub fn validate(&self) -> Result<()> {
        if self
            .k_gain
            .iter()
            .chain(self.gamma.iter())
            .any(|g| *g < T::zero())
        {
            return Err(Error::Invalid(
                "K and Gamma diagonals must be nonnegative".into(),
            ));
        }
        if self.f_est_limit < T::zero() {
            return Err(Error::Invalid("f_est limit must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Per-vehicle integrator state of the controller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerState<T: Real> {
    pub integral_eps: Vector6<T>,
    pub u2_integrator: Vector6<T>,
    pub adaptive: AdaptiveState<T>,
    /// Anti-windup bound on each component of `integral_eps`.
    pub integral_limit: T,
}

impl<T: Real> ControllerState<T> {
    pub fn new(adaptive: AdaptiveState<T>, integral_limit: T) -> Self {
        Self {
            integral_eps: Vector6::zeros(),
            u2_integrator: Vector6::zeros(),
            adaptive,
            integral_limit,
        }
    }

    /// Euler step of the tracking-error integral, clamped.
    pub fn accumulate_error(&mut self, eps: &Vector6<T>, dt: T) {
        let lim = self.integral_limit;
        self.integral_eps = (self.integral_eps + eps * dt).map(|v| clamp_abs(v, lim));
    }
}

/// `sigma = eps_dot + 2 L eps + L^2 int(eps)`.
pub fn sliding_surface<T: Real>(
    eps: &Vector6<T>,
    eps_dot: &Vector6<T>,
    integral_eps: &Vector6<T>,
    cfg: &SurfaceConfig<T>,
) -> Vector6<T> {
    let l = &cfg.lambda_s;
    let two: T = cast(2.0);
    Vector6::from_fn(|i, _| eps_dot[i] + two * l[i] * eps[i] + l[i] * l[i] * integral_eps[i])
}

/// `e_dot_r = e_dot_d - 2 L eps - L^2 int(eps)`, so that `sigma = e_dot - e_dot_r`.
pub fn reference_rate<T: Real>(
    e_dot_d: &Vector6<T>,
    eps: &Vector6<T>,
    integral_eps: &Vector6<T>,
    cfg: &SurfaceConfig<T>,
) -> Vector6<T> {
    let l = &cfg.lambda_s;
    let two: T = cast(2.0);
    Vector6::from_fn(|i, _| e_dot_d[i] - two * l[i] * eps[i] - l[i] * l[i] * integral_eps[i])
}

/// Time derivative of [`reference_rate`]: `e_ddot_d - 2 L eps_dot - L^2 eps`.
pub fn reference_accel<T: Real>(
    e_ddot_d: &Vector6<T>,
    eps: &Vector6<T>,
    eps_dot: &Vector6<T>,
    cfg: &SurfaceConfig<T>,
) -> Vector6<T> {
    let l = &cfg.lambda_s;
    let two: T = cast(2.0);
    Vector6::from_fn(|i, _| e_ddot_d[i] - two * l[i] * eps_dot[i] - l[i] * l[i] * eps[i])
}

/// Componentwise `-lambda |s|^rho sign(s)` (unsaturated reaching term).
pub fn reaching_term<T: Real>(sigma: &Vector6<T>, g: &SuperTwistGains<T>) -> Vector6<T> {
    sigma.map(|s| -g.lambda * s.abs().powf(g.rho) * sign(s))
}

/// Saturated super-twisting proportional term: `|sigma|` is capped at `sigma0`.
pub fn super_twist_u1<T: Real>(sigma: &Vector6<T>, g: &SuperTwistGains<T>) -> Vector6<T> {
    sigma.map(|s| {
        let mag = if s.abs() > g.sigma0 {
            g.sigma0.abs()
        } else {
            s.abs()
        };
        -g.lambda * mag.powf(g.rho) * sign(s)
    })
}

/// Euler step of the super-twisting integral term.
///
/// Per component: `u2_dot = -u` when `|u| > u_max`, else `-W sign(sigma)`.
pub fn super_twist_u2_step<T: Real>(
    integrator: &Vector6<T>,
    sigma: &Vector6<T>,
    u_current: &Vector6<T>,
    g: &SuperTwistGains<T>,
    dt: T,
) -> Vector6<T> {
    Vector6::from_fn(|i, _| {
        let rate = if u_current[i].abs() > g.u_max {
            -u_current[i]
        } else {
            -g.w_gain * sign(sigma[i])
        };
        integrator[i] + rate * dt
    })
}

/// Which proportional term feeds `u1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReachingForm {
    /// `-lambda |sigma|^rho sign(sigma)` on the model-based equivalent control.
    #[default]
    Equivalent,
    /// Same, with `|sigma|` saturated at `sigma0`.
    Saturated,
}

/// Equivalent control `u1 = J^T (-lambda |sigma|^rho sign(sigma) + f_hat_r)`.
pub fn equivalent_control<T: Real>(
    sigma: &Vector6<T>,
    f_hat_r: &Vector6<T>,
    jac: &JacobianSet<T>,
    g: &SuperTwistGains<T>,
) -> Vector6<T> {
    jac.full.transpose() * (reaching_term(sigma, g) + f_hat_r)
}

/// [`equivalent_control`] with the reaching term selected by `form`.
pub fn equivalent_control_with<T: Real>(
    sigma: &Vector6<T>,
    f_hat_r: &Vector6<T>,
    jac: &JacobianSet<T>,
    g: &SuperTwistGains<T>,
    form: ReachingForm,
) -> Vector6<T> {
    let reach = match form {
        ReachingForm::Equivalent => reaching_term(sigma, g),
        ReachingForm::Saturated => super_twist_u1(sigma, g),
    };
    jac.full.transpose() * (reach + f_hat_r)
}

/// Continuous adaptive term `u2 = J^T (f_est - (K + C_hat_e) sigma)`.
pub fn adaptive_control<T: Real>(
    sigma: &Vector6<T>,
    adaptive: &AdaptiveState<T>,
    c_e_hat: &Matrix6<T>,
    jac: &JacobianSet<T>,
) -> Vector6<T> {
    let k = Matrix6::from_diagonal(&adaptive.k_gain);
    jac.full.transpose() * (adaptive.f_est - (k + c_e_hat) * sigma)
}

/// Euler step of `d/dt f_est = -Gamma sigma`, clamped per axis.
pub fn adaptive_update<T: Real>(
    adaptive: &AdaptiveState<T>,
    sigma: &Vector6<T>,
    dt: T,
) -> AdaptiveState<T> {
    let lim = adaptive.f_est_limit;
    let f_est = Vector6::from_fn(|i, _| {
        clamp_abs(adaptive.f_est[i] - adaptive.gamma[i] * sigma[i] * dt, lim)
    });
    AdaptiveState { f_est, ..*adaptive }
}

/// Diagonal pseudo-inverse: zero entries stay zero.
fn diag_pinv<T: Real>(d: &Vector6<T>) -> Vector6<T> {
    d.map(|g| {
        if g > T::zero() {
            T::one() / g
        } else {
            T::zero()
        }
    })
}

/// Monitored sufficient condition for `V_dot <= 0`:
///
/// `sigma^T (M_tilde_e + K) sigma >= |f_tilde_dot^T Gamma^+ w| + |sigma^T P0 w|`
///
/// where `P0` selects the axes with zero adaptation gain. On those axes no
/// adaptive law cancels the `sigma^T w` cross term, so it is charged to the
/// right-hand side; with a fully positive `Gamma` the second term vanishes.
pub fn assumption_holds<T: Real>(
    sigma: &Vector6<T>,
    w_vec: &Vector6<T>,
    f_tilde_dot: &Vector6<T>,
    m_tilde_e: &Matrix6<T>,
    k_gain: &Vector6<T>,
    gamma: &Vector6<T>,
) -> bool {
    let lhs = sigma.dot(&((m_tilde_e + Matrix6::from_diagonal(k_gain)) * sigma));
    let ginv = diag_pinv(gamma);
    let adapted: T = (0..6).map(|i| f_tilde_dot[i] * ginv[i] * w_vec[i]).sum();
    let unadapted: T = (0..6)
        .filter(|&i| !(gamma[i] > T::zero()))
        .map(|i| sigma[i] * w_vec[i])
        .sum();
    lhs >= adapted.abs() + unadapted.abs()
}

/// `V = (sigma^T M_e sigma + w^T Gamma^+ w) / 2`.
pub fn lyapunov_value<T: Real>(
    sigma: &Vector6<T>,
    w_vec: &Vector6<T>,
    m_e: &Matrix6<T>,
    gamma: &Vector6<T>,
) -> T {
    let ginv = diag_pinv(gamma);
    let ww: T = (0..6).map(|i| w_vec[i] * w_vec[i] * ginv[i]).sum();
    (sigma.dot(&(m_e * sigma)) + ww) * cast(0.5)
}

/// First-order comparison law `u = J^T (f_hat_r - lambda sigma - W sign(sigma))`.
pub fn first_order_smc<T: Real>(
    sigma: &Vector6<T>,
    f_hat_r: &Vector6<T>,
    jac: &JacobianSet<T>,
    w_gain: T,
    lambda: T,
) -> Vector6<T> {
    let switching = sigma.map(|s| lambda * s + w_gain * sign(s));
    jac.full.transpose() * (f_hat_r - switching)
}
