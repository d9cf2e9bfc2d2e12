//! Meandering-jet current model, depth layering and the flow-to-wrench map.
//!
//! The stream function is
//! `C(x, y, t) = 1 - tanh[(y - B(t) cos(k(x - ct))) / sqrt(1 + k^2 B(t)^2 sin^2(k(x - ct)))]`
//! with `B(t) = B0 + E cos(omega t + theta)`, and the current is
//! `(U, V) = (-dC/dy, dC/dx)`.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::scalar::{cast, clamp_abs, to_f64, Real};
use crate::vehicle::{Frame, VehicleState, Wrench6};

/// Parameters of the meandering-jet stream function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowParams<T: Real> {
    pub b0: T,
    pub e_amp: T,
    /// rad/s
    pub omega: T,
    /// rad
    pub theta0: T,
    /// m/s
    pub c: T,
    /// 1/m
    pub k: T,
}

impl<T: Real> Default for FlowParams<T> {
    fn default() -> Self {
        Self {
            b0: cast(1.2),
            e_amp: cast(0.3),
            omega: cast(0.4),
            theta0: T::frac_pi_2(),
            c: cast(0.12),
            k: cast(0.82),
        }
    }
}

impl<T: Real> FlowParams<T> {
    pub fn validate(&self) -> Result<()> {
        let all = [self.b0, self.e_amp, self.omega, self.theta0, self.c, self.k];
        if all.iter().any(|v| !to_f64(*v).is_finite()) {
            return Err(Error::Invalid("flow parameters must be finite".into()));
        }
        if self.k == T::zero() {
            return Err(Error::Invalid("flow wavenumber k must be nonzero".into()));
        }
        Ok(())
    }

    /// Jet amplitude `B(t)`.
    pub fn amplitude(&self, t: T) -> T {
        self.b0 + self.e_amp * (self.omega * t + self.theta0).cos()
    }
}

/// Shared pieces of the stream function at one point.
struct JetGeometry<T> {
    b: T,
    s: T,
    co: T,
    den: T,
    arg: T,
}

fn geometry<T: Real>(x: T, y: T, t: T, p: &FlowParams<T>) -> JetGeometry<T> {
    let b = p.amplitude(t);
    let (s, co) = (p.k * (x - p.c * t)).sin_cos();
    let den = (T::one() + p.k * p.k * b * b * s * s).sqrt();
    let arg = (y - b * co) / den;
    JetGeometry { b, s, co, den, arg }
}

/// Stream function `C(x, y, t)`, in `(0, 2)`.
pub fn stream_function<T: Real>(x: T, y: T, t: T, p: &FlowParams<T>) -> T {
    T::one() - geometry(x, y, t, p).arg.tanh()
}

/// Current velocity `(U, V) = (-dC/dy, dC/dx)`, evaluated analytically.
pub fn flow_velocity<T: Real>(x: T, y: T, t: T, p: &FlowParams<T>) -> (T, T) {
    let g = geometry(x, y, t, p);
    let th = g.arg.tanh();
    let sech2 = T::one() - th * th;
    velocity_from_geometry(&g, sech2, p.k)
}

fn velocity_from_geometry<T: Real>(g: &JetGeometry<T>, sech2: T, k: T) -> (T, T) {
    let u = sech2 / g.den;
    // d(arg)/dx with num = arg * den
    let num = g.arg * g.den;
    let darg_dx =
        g.b * k * g.s / g.den - num * k * k * k * g.b * g.b * g.s * g.co / (g.den * g.den * g.den);
    (u, -sech2 * darg_dx)
}

/// Depth layering and spatial placement of the jet in the workspace.
#[derive(Debug, Clone, PartialEq)]
pub struct LayeredField<T: Real> {
    pub n_layers: usize,
    /// Lower/upper depth bound, m (z up, surface at 0).
    pub z_bounds: (T, T),
    /// Speed multiplier per layer, surface first.
    pub layer_scale: Vec<T>,
    /// Maximum current speed, m/s; the surface layer peak is normalized to it.
    pub speed_cap: T,
    /// Workspace point mapped to the stream-function origin, m.
    pub origin: (T, T),
    /// Metres per stream-function length unit.
    pub length_scale: T,
}

impl<T: Real> Default for LayeredField<T> {
    fn default() -> Self {
        Self {
            n_layers: 3,
            z_bounds: (cast(-20.0), T::zero()),
            layer_scale: vec![T::one(), T::one() / cast(2.4), cast(0.25)],
            speed_cap: cast(0.5),
            origin: (T::zero(), cast(40.0)),
            length_scale: cast(4.0),
        }
    }
}

impl<T: Real> LayeredField<T> {
    pub fn validate(&self) -> Result<()> {
        if self.n_layers == 0 || self.layer_scale.len() != self.n_layers {
            return Err(Error::Invalid(format!(
                "layer_scale has {} entries for {} layers",
                self.layer_scale.len(),
                self.n_layers
            )));
        }
        if self.layer_scale.iter().any(|s| *s < T::zero()) {
            return Err(Error::Invalid("layer scales must be nonnegative".into()));
        }
        if !(self.z_bounds.0 < self.z_bounds.1) {
            return Err(Error::Invalid("z_bounds must satisfy lower < upper".into()));
        }
        if self.speed_cap < T::zero() {
            return Err(Error::Invalid("speed_cap must be nonnegative".into()));
        }
        if !(self.length_scale > T::zero()) {
            return Err(Error::Invalid("length_scale must be positive".into()));
        }
        Ok(())
    }

    /// Layer index (0 = surface) for depth `z`, `None` outside the bounds.
    /// Layers are equal-thickness slabs.
    pub fn layer_of(&self, z: T) -> Option<usize> {
        let (lo, hi) = self.z_bounds;
        if z < lo || z > hi {
            return None;
        }
        let frac = (hi - z) / (hi - lo);
        let idx = (frac * cast::<T>(self.n_layers as f64)).floor();
        Some(to_f64(idx).max(0.0).min((self.n_layers - 1) as f64) as usize)
    }
}

/// Largest raw current speed produced by the stream function.
///
/// The speed depends on position only through the phase `k(x - ct)` and the
/// centreline-relative argument, so a dense search over phase, jet amplitude
/// and argument covers the whole field.
pub fn peak_raw_speed<T: Real>(p: &FlowParams<T>) -> T {
    let k = to_f64(p.k);
    let b_lo = to_f64(p.b0 - p.e_amp.abs());
    let b_hi = to_f64(p.b0 + p.e_amp.abs());
    let speed = |phase: f64, b: f64, arg: f64| {
        let (s, co) = phase.sin_cos();
        let den = (1.0 + k * k * b * b * s * s).sqrt();
        let th = arg.tanh();
        let g = JetGeometry { b, s, co, den, arg };
        let (u, v) = velocity_from_geometry(&g, 1.0 - th * th, k);
        u.hypot(v)
    };
    let grid = |lo: f64, hi: f64, n: usize, i: usize| lo + (hi - lo) * i as f64 / (n - 1) as f64;

    // coarse sweep, then two local refinements around the best sample
    let (mut phase_span, mut b_span, mut arg_span) =
        ((0.0, std::f64::consts::TAU), (b_lo, b_hi), (-3.0, 3.0));
    let mut best = (0.0_f64, 0.0, b_lo, 0.0);
    for (n_phase, n_b, n_arg) in [(181, 5, 61), (41, 9, 41), (41, 9, 41)] {
        for ip in 0..n_phase {
            let phase = grid(phase_span.0, phase_span.1, n_phase, ip);
            for ib in 0..n_b {
                let b = grid(b_span.0, b_span.1, n_b, ib);
                for ia in 0..n_arg {
                    let arg = grid(arg_span.0, arg_span.1, n_arg, ia);
                    let v = speed(phase, b, arg);
                    if v > best.0 {
                        best = (v, phase, b, arg);
                    }
                }
            }
        }
        let dp = 2.0 * (phase_span.1 - phase_span.0) / (n_phase - 1) as f64;
        let da = 2.0 * (arg_span.1 - arg_span.0) / (n_arg - 1) as f64;
        let db = 2.0 * (b_span.1 - b_span.0) / (n_b - 1) as f64;
        phase_span = (best.1 - dp, best.1 + dp);
        arg_span = (best.3 - da, best.3 + da);
        b_span = (b_lo.max(best.2 - db), b_hi.min(best.2 + db));
    }
    cast(best.0)
}

/// Layered 3-D current field ready for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField<T: Real> {
    pub params: FlowParams<T>,
    pub layers: LayeredField<T>,
    gain: T,
}

impl<T: Real> FlowField<T> {
    pub fn new(params: FlowParams<T>, layers: LayeredField<T>) -> Result<Self> {
        params.validate()?;
        layers.validate()?;
        let peak = peak_raw_speed(&params);
        let gain = if peak > T::zero() {
            layers.speed_cap / peak
        } else {
            T::zero()
        };
        Ok(Self {
            params,
            layers,
            gain,
        })
    }

    /// Factor converting raw stream-function velocity to surface-layer m/s.
    pub fn surface_gain(&self) -> T {
        self.gain
    }

    /// Current velocity at a workspace point, m/s; zero outside the depth bounds.
    pub fn velocity(&self, x: T, y: T, z: T, t: T) -> Vector3<T> {
        let Some(layer) = self.layers.layer_of(z) else {
            return Vector3::zeros();
        };
        let l = self.layers.length_scale;
        let xf = (x - self.layers.origin.0) / l;
        let yf = (y - self.layers.origin.1) / l;
        let (u, v) = flow_velocity(xf, yf, t, &self.params);
        let scale = self.gain * self.layers.layer_scale[layer];
        let mut out = Vector3::new(u * scale, v * scale, T::zero());
        let speed = out.norm();
        let cap = self.layers.speed_cap;
        if speed > cap && speed > T::zero() {
            out *= cap / speed;
        }
        out
    }
}

/// Maps current velocity to a bounded disturbance wrench.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisturbanceModel<T: Real> {
    /// N per (m/s)^2.
    pub drag_gain: T,
    /// N m per m/s of body-lateral current.
    pub yaw_gain: T,
    /// Per-axis bound, N (and N m for yaw).
    pub force_clamp: T,
}

impl<T: Real> Default for DisturbanceModel<T> {
    fn default() -> Self {
        Self {
            drag_gain: cast(40.0),
            yaw_gain: cast(5.0),
            force_clamp: cast(20.0),
        }
    }
}

impl<T: Real> DisturbanceModel<T> {
    pub fn validate(&self) -> Result<()> {
        if self.drag_gain < T::zero() || self.yaw_gain < T::zero() || self.force_clamp < T::zero() {
            return Err(Error::Invalid(
                "disturbance gains and clamp must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Inertial disturbance `[C_x C_y 0 0 0 C_z]` exerted by the current.
///
/// Horizontal force is quadratic drag on the current velocity; the yaw
/// moment is proportional to the current's body-lateral component.
pub fn disturbance_wrench<T: Real>(
    flow_vel: &Vector3<T>,
    state: &VehicleState<T>,
    model: &DisturbanceModel<T>,
) -> Wrench6<T> {
    let (vx, vy) = (flow_vel[0], flow_vel[1]);
    let speed = (vx * vx + vy * vy).sqrt();
    let lim = model.force_clamp;
    let cx = clamp_abs(model.drag_gain * speed * vx, lim);
    let cy = clamp_abs(model.drag_gain * speed * vy, lim);
    let (spsi, cpsi) = state.eta2[2].sin_cos();
    let lateral = -spsi * vx + cpsi * vy;
    let cz = clamp_abs(model.yaw_gain * lateral, lim);
    Wrench6 {
        force: Vector3::new(cx, cy, T::zero()),
        moment: Vector3::new(T::zero(), T::zero(), cz),
        frame: Frame::Inertial,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn fd_velocity(x: f64, y: f64, t: f64, p: &FlowParams<f64>) -> (f64, f64) {
        let h = 1e-6;
        let dcdy = (stream_function(x, y + h, t, p) - stream_function(x, y - h, t, p)) / (2.0 * h);
        let dcdx = (stream_function(x + h, y, t, p) - stream_function(x - h, y, t, p)) / (2.0 * h);
        (-dcdy, dcdx)
    }

    #[test]
    fn centreline_value_is_one() {
        let p = FlowParams::<f64>::default();
        for &(x, t) in &[(0.0, 0.0), (1.3, 2.0), (-4.0, 7.5)] {
            let y = p.amplitude(t) * (p.k * (x - p.c * t)).cos();
            assert_relative_eq!(stream_function(x, y, t, &p), 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn origin_value() {
        let p = FlowParams::default();
        // B(0) = 1.2 + 0.3 cos(pi/2) = 1.2, argument -1.2
        assert_relative_eq!(
            stream_function(0.0, 0.0, 0.0, &p),
            1.0 + 1.2_f64.tanh(),
            epsilon = 1e-12
        );
        assert_relative_eq!(stream_function(0.0, 0.0, 0.0, &p), 1.8337, epsilon = 1e-4);
    }

    #[test]
    fn tanh_limits() {
        let p = FlowParams::default();
        assert!(stream_function(0.3, 50.0, 1.0, &p) < 1e-12);
        assert!((2.0 - stream_function(0.3, -50.0, 1.0, &p)) < 1e-12);
    }

    #[test]
    fn origin_velocity() {
        let p = FlowParams::default();
        let (u, v) = flow_velocity(0.0, 0.0, 0.0, &p);
        let (fu, fv) = fd_velocity(0.0, 0.0, 0.0, &p);
        assert!((u - fu).abs() < 1e-6 && (v - fv).abs() < 1e-6);
        let sech2 = 1.0 - 1.2_f64.tanh().powi(2);
        assert_relative_eq!(u, sech2, epsilon = 1e-12);
        assert_relative_eq!(u, 0.3050, epsilon = 2e-4);
        assert!(v.abs() < 1e-12);
    }

    #[test]
    fn layer_assignment_thirds() {
        let l = LayeredField::<f64>::default();
        assert_eq!(l.layer_of(0.0), Some(0));
        assert_eq!(l.layer_of(-6.0), Some(0));
        assert_eq!(l.layer_of(-7.0), Some(1));
        assert_eq!(l.layer_of(-13.0), Some(1));
        assert_eq!(l.layer_of(-14.0), Some(2));
        assert_eq!(l.layer_of(-20.0), Some(2));
        assert_eq!(l.layer_of(-20.5), None);
        assert_eq!(l.layer_of(0.1), None);
    }

    #[test]
    fn layer_speed_ratios() {
        let f = FlowField::new(FlowParams::default(), LayeredField::default()).unwrap();
        let (x, y, t) = (3.0, 41.0, 2.0);
        let v1 = f.velocity(x, y, -1.0, t);
        let v2 = f.velocity(x, y, -10.0, t);
        let v3 = f.velocity(x, y, -18.0, t);
        assert!(v1.norm() > 0.01);
        assert_relative_eq!(v1.norm() / v2.norm(), 2.4, epsilon = 1e-12);
        assert_relative_eq!(v1.norm() / v3.norm(), 4.0, epsilon = 1e-12);
        assert_eq!(f.velocity(x, y, 1.0, t), Vector3::zeros());
        assert_eq!(f.velocity(x, y, -25.0, t), Vector3::zeros());
    }

    #[test]
    fn surface_peak_is_speed_cap() {
        let f = FlowField::new(FlowParams::default(), LayeredField::default()).unwrap();
        let mut best = 0.0_f64;
        for ix in 0..=80 {
            for iy in 0..=80 {
                best = best.max(f.velocity(ix as f64, iy as f64, -1.0, 0.0).norm());
            }
        }
        assert!(best <= 0.5 + 1e-12);
        assert!(best > 0.45, "grid peak {best}");
    }

    #[test]
    fn zero_current_zero_wrench() {
        let w = disturbance_wrench(
            &Vector3::<f64>::zeros(),
            &VehicleState::default(),
            &DisturbanceModel::default(),
        );
        assert_eq!(w.to_vector(), nalgebra::Vector6::zeros());
        assert_eq!(w.frame, Frame::Inertial);
    }

    #[test]
    fn quadratic_drag_value_and_clamp() {
        let m = DisturbanceModel::<f64>::default();
        let w = disturbance_wrench(&Vector3::new(0.5, 0.0, 0.0), &VehicleState::default(), &m);
        assert_relative_eq!(w.force[0], 10.0, epsilon = 1e-12);
        // 40 * |v| * v = 50 N
        let v = (50.0_f64 / 40.0).sqrt();
        let w = disturbance_wrench(&Vector3::new(v, 0.0, 0.0), &VehicleState::default(), &m);
        assert_relative_eq!(w.force[0], 20.0, epsilon = 1e-12);
        let w = disturbance_wrench(&Vector3::new(0.0, -v, 0.0), &VehicleState::default(), &m);
        assert_relative_eq!(w.force[1], -20.0, epsilon = 1e-12);
        // lateral current in body frame at zero yaw is +y
        assert_relative_eq!(w.moment[2], -5.0 * v, epsilon = 1e-12);
        assert_eq!(w.force[2], 0.0);
        assert_eq!(w.moment[0], 0.0);
        assert_eq!(w.moment[1], 0.0);
    }

    proptest! {
        #[test]
        fn analytic_matches_finite_difference(x in -40.0..40.0f64, y in -6.0..6.0f64, t in 0.0..100.0f64) {
            let p = FlowParams::default();
            let (u, v) = flow_velocity(x, y, t, &p);
            let (fu, fv) = fd_velocity(x, y, t, &p);
            prop_assert!((u - fu).abs() < 1e-6);
            prop_assert!((v - fv).abs() < 1e-6);
        }

        #[test]
        fn stream_function_open_range(x in -1e3..1e3f64, y in -8.0..8.0f64, t in -1e3..1e3f64) {
            let c = stream_function(x, y, t, &FlowParams::default());
            prop_assert!(c > 0.0 && c < 2.0);
        }

        #[test]
        fn layers_preserve_direction(x in 0.0..80.0f64, y in 30.0..50.0f64, t in 0.0..60.0f64) {
            let f = FlowField::new(FlowParams::default(), LayeredField::default()).unwrap();
            let a = f.velocity(x, y, -2.0, t);
            let b = f.velocity(x, y, -9.0, t);
            let c = f.velocity(x, y, -17.0, t);
            prop_assert!((a - b * 2.4).norm() < 1e-12);
            prop_assert!((a - c * 4.0).norm() < 1e-12);
        }

        #[test]
        fn wrench_bounded(vx in -3.0..3.0f64, vy in -3.0..3.0f64, psi in -3.2..3.2f64) {
            let mut s = VehicleState::default();
            s.eta2[2] = psi;
            let w = disturbance_wrench(&Vector3::new(vx, vy, 0.0), &s, &DisturbanceModel::default());
            prop_assert!(w.to_vector().iter().all(|c| c.abs() <= 20.0));
        }
    }
}
