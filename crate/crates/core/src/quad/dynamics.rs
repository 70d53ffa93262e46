use nalgebra::{Vector3, Vector4};

use super::{BodyRateCmd, MotorSpeeds, QuadParams, Quat, State13, Wrench};

/// Default proportional gain of the simulated body-rate loop, 1/s.
pub const DEFAULT_RATE_GAIN: f64 = 20.0;

/// Position, velocity and attitude; the state of the NMPC prediction model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReducedState {
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
    pub q: Quat,
}

impl ReducedState {
    pub fn hover_at(p: Vector3<f64>) -> Self {
        Self { p, v: Vector3::zeros(), q: Quat::IDENTITY }
    }
}

/// A state type that RK4 can integrate.
pub trait Integrable: Copy {
    /// `self + h · d`
    fn add_scaled(&self, d: &Self, h: f64) -> Self;

    /// Map back onto the state manifold after a full step.
    fn project(self) -> Self {
        self
    }
}

fn quat_add_scaled(q: &Quat, d: &Quat, h: f64) -> Quat {
    Quat::new(q.w + h * d.w, q.x + h * d.x, q.y + h * d.y, q.z + h * d.z)
}

impl Integrable for State13 {
    fn add_scaled(&self, d: &Self, h: f64) -> Self {
        State13 {
            p: self.p + d.p * h,
            v: self.v + d.v * h,
            q: quat_add_scaled(&self.q, &d.q, h),
            w: self.w + d.w * h,
        }
    }

    fn project(mut self) -> Self {
        self.q = self.q.normalized();
        self
    }
}

impl Integrable for ReducedState {
    fn add_scaled(&self, d: &Self, h: f64) -> Self {
        ReducedState {
            p: self.p + d.p * h,
            v: self.v + d.v * h,
            q: quat_add_scaled(&self.q, &d.q, h),
        }
    }

    fn project(mut self) -> Self {
        self.q = self.q.normalized();
        self
    }
}

impl Integrable for f64 {
    fn add_scaled(&self, d: &Self, h: f64) -> Self {
        self + h * d
    }
}

/// One classical Runge-Kutta step of `ẋ = f(x)`; inputs are held constant by
/// capturing them in `f`. The result is projected (quaternions renormalized).
pub fn rk4_step<S: Integrable>(f: impl Fn(&S) -> S, x: &S, dt: f64) -> S {
    let k1 = f(x);
    let k2 = f(&x.add_scaled(&k1, 0.5 * dt));
    let k3 = f(&x.add_scaled(&k2, 0.5 * dt));
    let k4 = f(&x.add_scaled(&k3, dt));
    x.add_scaled(&k1, dt / 6.0)
        .add_scaled(&k2, dt / 3.0)
        .add_scaled(&k3, dt / 3.0)
        .add_scaled(&k4, dt / 6.0)
        .project()
}

/// `f_i = k_t Ω_i²`, `τ_i = k_q Ω_i²`, combined through the allocation matrix.
pub fn rotor_wrench(motors: &MotorSpeeds, params: &QuadParams) -> Wrench {
    let f = Vector4::from_iterator(motors.0.iter().map(|w| params.kt * w * w));
    let out = params.allocation_matrix() * f;
    Wrench { fc: out[0], tau: Vector3::new(out[1], out[2], out[3]) }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Allocation {
    pub motors: MotorSpeeds,
    /// At least one rotor force was clamped to its speed limits.
    pub saturated: bool,
}

/// Invert the allocation matrix, clamp each rotor force to the feasible
/// range and convert back to speeds.
pub fn allocate_motors(w: &Wrench, params: &QuadParams) -> Allocation {
    let g_inv = params
        .allocation_matrix()
        .try_inverse()
        .expect("allocation matrix is invertible for valid parameters");
    let forces = g_inv * w.as_vector();
    let (f_min, f_max) = params.rotor_force_bounds();
    let mut saturated = false;
    let mut omega = [0.0; 4];
    for (o, &f) in omega.iter_mut().zip(forces.iter()) {
        let clamped = if f.is_nan() { f_min } else { f.clamp(f_min, f_max) };
        if clamped != f {
            saturated = true;
        }
        *o = (clamped / params.kt).sqrt();
    }
    Allocation { motors: MotorSpeeds(omega), saturated }
}

/// Time derivative of the full state under rotor speeds and an inertial
/// disturbance force. The body disturbance torque is taken as zero.
pub fn dynamics_full(
    x: &State13,
    motors: &MotorSpeeds,
    f_dist: &Vector3<f64>,
    params: &QuadParams,
) -> State13 {
    let wrench = rotor_wrench(motors, params);
    let acc = (x.q.body_z() * wrench.fc + f_dist) / params.mass + params.gravity_vector();
    let q_dot = (x.q * Quat::pure(&x.w)).scale(0.5);
    let i = params.inertia;
    let iw = i.component_mul(&x.w);
    let w_dot = (-x.w.cross(&iw) + wrench.tau).component_div(&i);
    State13 { p: x.v, v: acc, q: q_dot, w: w_dot }
}

/// Derivative of the reduced model, with the body rate taken directly from
/// the command (ideal inner loop).
pub fn dynamics_reduced(
    x: &ReducedState,
    u: &BodyRateCmd,
    f_dist: &Vector3<f64>,
    params: &QuadParams,
) -> ReducedState {
    let acc = (x.q.body_z() * u.fc + f_dist) / params.mass + params.gravity_vector();
    let q_dot = (x.q * Quat::pure(&u.rates)).scale(0.5);
    ReducedState { p: x.v, v: acc, q: q_dot }
}

/// Feedback-linearizing body-rate loop: `τ = I·kp·(ω_cmd − ω) + ω × Iω`.
pub fn body_rate_inner_loop(
    w_cmd: &Vector3<f64>,
    w_meas: &Vector3<f64>,
    params: &QuadParams,
    kp: f64,
) -> Vector3<f64> {
    let i = params.inertia;
    i.component_mul(&(w_cmd - w_meas)) * kp + w_meas.cross(&i.component_mul(w_meas))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p() -> QuadParams {
        QuadParams::identified()
    }

    #[test]
    fn equal_speeds_give_pure_thrust() {
        let w = rotor_wrench(&MotorSpeeds([10.0; 4]), &p());
        assert!((w.fc - 11.2632).abs() < 1e-9);
        assert!(w.tau.norm() < 1e-15);
        let z = rotor_wrench(&MotorSpeeds([0.0; 4]), &p());
        assert_eq!(z.fc, 0.0);
        assert_eq!(z.tau, Vector3::zeros());
    }

    #[test]
    fn yaw_torque_sign_flips_between_rotor_pairs() {
        let a = rotor_wrench(&MotorSpeeds([10.0, 10.0, 0.0, 0.0]), &p());
        let b = rotor_wrench(&MotorSpeeds([0.0, 0.0, 10.0, 10.0]), &p());
        assert!((a.fc - b.fc).abs() < 1e-15);
        assert!(a.tau.z < 0.0);
        assert!((a.tau.z + b.tau.z).abs() < 1e-15);
        assert!((a.tau.z + 2.0 * 3.7611e-4 * 100.0).abs() < 1e-12);
    }

    #[test]
    fn hover_allocation() {
        let params = p();
        let a = allocate_motors(&Wrench { fc: params.weight(), tau: Vector3::zeros() }, &params);
        assert!(!a.saturated);
        for w in a.motors.0 {
            // sqrt(15.0525 / (4 * 0.028158)) = 11.5614...
            assert!((w - 11.5614).abs() < 1e-3, "{w}");
        }
    }

    #[test]
    fn allocation_clamps_low_forces() {
        let params = p();
        let a = allocate_motors(&Wrench { fc: 0.1, tau: Vector3::new(0.0, 0.0, 0.0) }, &params);
        assert!(a.saturated);
        for w in a.motors.0 {
            assert!((w - params.omega_min).abs() < 1e-12);
        }
        let big = allocate_motors(&Wrench { fc: 500.0, tau: Vector3::zeros() }, &params);
        assert!(big.saturated);
        assert!(big.motors.0.iter().all(|&w| w <= params.omega_max));
    }

    proptest! {
        #[test]
        fn allocation_inverts_rotor_model(
            fc in 5.0..40.0f64,
            tx in -0.2..0.2f64,
            ty in -0.2..0.2f64,
            tz in -0.03..0.03f64,
        ) {
            let params = p();
            let w = Wrench { fc, tau: Vector3::new(tx, ty, tz) };
            let a = allocate_motors(&w, &params);
            prop_assume!(!a.saturated);
            let back = rotor_wrench(&a.motors, &params);
            prop_assert!((back.as_vector() - w.as_vector()).amax() < 1e-9);
        }
    }

    #[test]
    fn hover_is_an_equilibrium() {
        let params = p();
        let x = State13::hover_at(Vector3::new(1.0, 2.0, 3.0));
        let alloc = allocate_motors(&Wrench { fc: params.weight(), tau: Vector3::zeros() }, &params);
        let d = dynamics_full(&x, &alloc.motors, &Vector3::zeros(), &params);
        assert!(d.p.norm() == 0.0);
        assert!(d.v.norm() < 1e-12);
        assert!(d.q.norm() == 0.0);
        assert!(d.w.norm() < 1e-12);

        let push = dynamics_full(&x, &alloc.motors, &Vector3::new(0.0, 0.0, -4.0), &params);
        assert!((push.v.z + 4.0 / 1.5344).abs() < 1e-12);
        assert!((push.v.z + 2.607).abs() < 1e-3);
    }

    #[test]
    fn free_fall_without_motors() {
        let d = dynamics_full(&State13::default(), &MotorSpeeds([0.0; 4]), &Vector3::zeros(), &p());
        assert_eq!(d.v, Vector3::new(0.0, 0.0, -9.81));
    }

    #[test]
    fn reduced_model_cases() {
        let params = p();
        let x = ReducedState::hover_at(Vector3::zeros());
        let d = dynamics_reduced(&x, &BodyRateCmd::hover(&params), &Vector3::zeros(), &params);
        assert!(d.v.norm() < 1e-15 && d.q.norm() == 0.0 && d.p.norm() == 0.0);

        let yaw = BodyRateCmd { fc: params.weight(), rates: Vector3::new(0.0, 0.0, 1.0) };
        let d = dynamics_reduced(&x, &yaw, &Vector3::zeros(), &params);
        assert_eq!(d.q, Quat::new(0.0, 0.0, 0.0, 0.5));

        let d = dynamics_reduced(&x, &BodyRateCmd::hover(&params), &Vector3::x(), &params);
        assert!((d.v - Vector3::new(1.0 / params.mass, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn rk4_fixed_point_and_free_fall() {
        let params = p();
        let x0 = State13::hover_at(Vector3::new(0.0, 0.0, 10.0));
        let still = rk4_step(|_: &State13| State13 {
            p: Vector3::zeros(),
            v: Vector3::zeros(),
            q: Quat::new(0.0, 0.0, 0.0, 0.0),
            w: Vector3::zeros(),
        }, &x0, 0.01);
        assert_eq!(still, x0);

        let dt = 1.0 / 60.0;
        let mut x = x0;
        for _ in 0..60 {
            x = rk4_step(|s| dynamics_full(s, &MotorSpeeds([0.0; 4]), &Vector3::zeros(), &params), &x, dt);
        }
        let analytic = 10.0 - 0.5 * 9.81;
        assert!((x.p.z - analytic).abs() <= 1e-6);
        let energy = |s: &State13| 0.5 * params.mass * s.v.norm_squared() + params.weight() * s.p.z;
        assert!((energy(&x) - energy(&x0)).abs() < 1e-5);
    }

    #[test]
    fn rk4_keeps_unit_quaternion() {
        let params = p();
        let mut x = State13 { w: Vector3::new(3.0, -2.0, 5.0), ..State13::default() };
        let motors = MotorSpeeds([12.0, 11.0, 11.5, 12.2]);
        for _ in 0..600 {
            x = rk4_step(|s| dynamics_full(s, &motors, &Vector3::zeros(), &params), &x, 1.0 / 600.0);
            assert!((x.q.norm() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn inner_loop_torques() {
        let params = p();
        let w = Vector3::new(0.3, -0.2, 0.5);
        let tau = body_rate_inner_loop(&w, &w, &params, DEFAULT_RATE_GAIN);
        let gyro = w.cross(&params.inertia.component_mul(&w));
        assert!((tau - gyro).norm() < 1e-15);

        let tau = body_rate_inner_loop(&Vector3::x(), &Vector3::zeros(), &params, 20.0);
        assert!((tau.x - 0.188).abs() < 1e-12);
        assert_eq!((tau.y, tau.z), (0.0, 0.0));
    }

    #[test]
    fn rate_loop_tracks_roll_rate_step() {
        // Inner loop + allocation + full dynamics at 600 Hz: a first-order
        // response with time constant 1/kp reaches 95% after 3/kp = 0.15 s.
        let params = p();
        let dt = 1.0 / 600.0;
        let cmd = Vector3::new(1.0, 0.0, 0.0);
        let mut x = State13::hover_at(Vector3::new(0.0, 0.0, 5.0));
        let mut reached = None;
        for k in 1..=120 {
            let tau = body_rate_inner_loop(&cmd, &x.w, &params, DEFAULT_RATE_GAIN);
            let alloc = allocate_motors(&Wrench { fc: params.weight(), tau }, &params);
            assert!(!alloc.saturated);
            x = rk4_step(|s| dynamics_full(s, &alloc.motors, &Vector3::zeros(), &params), &x, dt);
            if reached.is_none() && (x.w.x - 1.0).abs() <= 0.05 {
                reached = Some(k as f64 * dt);
            }
        }
        let t = reached.expect("rate never settled");
        assert!(t < 0.2, "settled at {t}");
        assert!((x.w.x - 1.0).abs() < 0.05);
    }
}
