//! Equivalent three-thruster model of a fin-steered torpedo hull.
//!
//! Two stern thrusters share surge, sway, yaw and pitch authority through
//! the split coefficients `K`, `L`, `t`; a third thruster acts on heave.
//! The decoupled wrench is `[tau_u tau_v tau_r tau_w tau_q]` (roll is not
//! actuated).

use nalgebra::{Matrix5x3, SMatrix, Vector3, Vector5, Vector6};

use crate::error::{Error, Result};
use crate::scalar::{cast, to_f64, Real};

/// Body-frame index (in `[u v w p q r]` order) of each [`Wrench5`] slot.
pub const WRENCH5_BODY_INDEX: [usize; 5] = [0, 1, 5, 2, 4];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThrusterConfig<T: Real> {
    pub k1: T,
    pub k2: T,
    pub k3: T,
    pub l1: T,
    pub l2: T,
    pub t1: T,
    pub t2: T,
    pub t3: T,
    pub t4: T,
    /// Moment arms, m.
    pub r1: T,
    pub r2: T,
    pub r3: T,
    /// Per-thruster force bound, N.
    pub u_limit: T,
}

impl<T: Real> Default for ThrusterConfig<T> {
    fn default() -> Self {
        Self {
            k1: cast(0.6),
            k2: cast(0.6),
            k3: T::one(),
            l1: cast(0.65),
            l2: cast(0.65),
            t1: cast(0.5),
            t2: cast(0.5),
            t3: cast(0.25),
            t4: cast(0.25),
            r1: cast(0.15),
            r2: cast(0.15),
            r3: cast(0.4),
            u_limit: cast(60.0),
        }
    }
}

impl<T: Real> ThrusterConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let checks: [(&'static str, T, f64, f64); 9] = [
            ("k1", self.k1, 0.2, 1.0),
            ("k2", self.k2, 0.2, 1.0),
            ("k3", self.k3, -1.0, 1.0),
            ("l1", self.l1, 0.3, 1.0),
            ("l2", self.l2, 0.3, 1.0),
            ("t1", self.t1, 0.0, 1.0),
            ("t2", self.t2, 0.0, 1.0),
            ("t3", self.t3, -0.5, 0.5),
            ("t4", self.t4, -0.5, 0.5),
        ];
        for (name, v, lo, hi) in checks {
            let x = to_f64(v);
            if !(lo..=hi).contains(&x) {
                return Err(Error::CoefficientOutOfRange {
                    name,
                    value: x,
                    lo,
                    hi,
                });
            }
        }
        for (name, v) in [("r1", self.r1), ("r2", self.r2), ("r3", self.r3)] {
            if !v.is_finite() {
                return Err(Error::Invalid(format!("moment arm {name} must be finite")));
            }
        }
        if !(self.u_limit > T::zero()) {
            return Err(Error::Invalid("thruster u_limit must be positive".into()));
        }
        Ok(())
    }
}

/// Decoupled control wrench `[tau_u tau_v tau_r tau_w tau_q]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wrench5<T: Real>(pub Vector5<T>);

impl<T: Real> Wrench5<T> {
    pub fn zero() -> Self {
        Self(Vector5::zeros())
    }

    /// Picks the actuated components out of a body 6-DOF wrench.
    pub fn from_body(tau: &Vector6<T>) -> Self {
        Self(Vector5::from_fn(|i, _| tau[WRENCH5_BODY_INDEX[i]]))
    }

    /// Expands to a body 6-DOF wrench with zero roll moment.
    pub fn to_body(&self) -> Vector6<T> {
        let mut out = Vector6::zeros();
        for (i, &b) in WRENCH5_BODY_INDEX.iter().enumerate() {
            out[b] = self.0[i];
        }
        out
    }
}

/// Thruster control matrix `B_t` (5x3).
pub fn build_tcm<T: Real>(cfg: &ThrusterConfig<T>) -> Result<Matrix5x3<T>> {
    cfg.validate()?;
    let one = T::one();
    let z = T::zero();
    let c = cfg;
    #[rustfmt::skip]
    let b = Matrix5x3::new(
        c.k1 * c.l1, c.k2 * c.l2, z,
        -c.t1 * (one - c.k1) * c.l1, c.t2 * (one - c.k2) * c.l2, z,
        c.k1 * c.l1 * c.r1, -c.k2 * c.l2 * c.r2, z,
        z, z, c.k3,
        c.t3 * c.k1 * (one - c.l1) * c.r3, c.t4 * c.k2 * (one - c.l2) * c.r3, z,
    );
    Ok(b)
}

/// `tau = B_t u_t`, rejecting thrusts beyond the limit.
pub fn wrench_from_thrust<T: Real>(
    u_t: &Vector3<T>,
    cfg: &ThrusterConfig<T>,
) -> Result<Wrench5<T>> {
    let b = build_tcm(cfg)?;
    for (index, &u) in u_t.iter().enumerate() {
        if !(u.abs() <= cfg.u_limit) {
            return Err(Error::ThrustLimit {
                index,
                value: to_f64(u),
                limit: to_f64(cfg.u_limit),
            });
        }
    }
    Ok(Wrench5(b * u_t))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Allocation<T: Real> {
    pub thrust: Vector3<T>,
    /// Requested minus achieved wrench.
    pub residual: Vector5<T>,
    pub saturated: [bool; 3],
}

/// Least-squares allocator with saturation, built once per configuration.
#[derive(Debug, Clone)]
pub struct Allocator<T: Real> {
    cfg: ThrusterConfig<T>,
    tcm: Matrix5x3<T>,
    pinv: SMatrix<T, 3, 5>,
}

fn pseudo_inverse<T: Real>(b: &Matrix5x3<T>) -> SMatrix<T, 3, 5> {
    let svd = b.svd(true, true);
    let eps = cast::<T>(1e-12) * svd.singular_values.max().max(T::one());
    svd.pseudo_inverse(eps)
        .expect("SVD computed with both U and V")
}

impl<T: Real> Allocator<T> {
    pub fn new(cfg: ThrusterConfig<T>) -> Result<Self> {
        let tcm = build_tcm(&cfg)?;
        Ok(Self {
            cfg,
            tcm,
            pinv: pseudo_inverse(&tcm),
        })
    }

    pub fn config(&self) -> &ThrusterConfig<T> {
        &self.cfg
    }

    pub fn tcm(&self) -> &Matrix5x3<T> {
        &self.tcm
    }

    /// Unsaturated least-squares solution `B_t^+ tau`.
    pub fn unconstrained(&self, tau: &Wrench5<T>) -> Vector3<T> {
        self.pinv * tau.0
    }

    /// Pseudo-inverse, clip, then re-solve the free thrusters with the
    /// saturated ones pinned at their limits, and clip again.
    pub fn allocate(&self, tau: &Wrench5<T>) -> Allocation<T> {
        let lim = self.cfg.u_limit;
        let clip = |v: T| v.max(-lim).min(lim);
        let raw = self.unconstrained(tau);
        let mut u = raw.map(clip);
        let saturated = [0, 1, 2].map(|i| raw[i].abs() > lim);
        if saturated.iter().any(|s| *s) && !saturated.iter().all(|s| *s) {
            let mut reduced = self.tcm;
            let mut pinned = Vector3::zeros();
            for i in 0..3 {
                if saturated[i] {
                    pinned[i] = u[i];
                    reduced.set_column(i, &Vector5::zeros());
                }
            }
            let rhs = tau.0 - self.tcm * pinned;
            let free = pseudo_inverse(&reduced) * rhs;
            for i in 0..3 {
                if !saturated[i] {
                    u[i] = clip(free[i]);
                }
            }
        }
        let residual = tau.0 - self.tcm * u;
        let saturated = [0, 1, 2].map(|i| u[i].abs() >= lim);
        Allocation {
            thrust: u,
            residual,
            saturated,
        }
    }
}

/// One-shot allocation; prefer [`Allocator`] in loops.
pub fn allocate<T: Real>(tau: &Wrench5<T>, cfg: &ThrusterConfig<T>) -> Result<Allocation<T>> {
    Ok(Allocator::new(*cfg)?.allocate(tau))
}
