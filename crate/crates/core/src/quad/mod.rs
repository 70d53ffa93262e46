//! Quadrotor rigid-body model: parameters, state, rotor model and control
//! allocation, nominal dynamics and RK4 integration.
//!
//! Frames are ENU inertial and FLU body. Rotor speeds are in kRPM.

mod dynamics;
mod quat;

pub use dynamics::{
    allocate_motors, body_rate_inner_loop, dynamics_full, dynamics_reduced, rk4_step, rotor_wrench,
    Allocation, Integrable, ReducedState, DEFAULT_RATE_GAIN,
};
pub use quat::{error_sign, quat_error_vec, quat_multiply, quat_to_rot, Quat, UNIT_TOLERANCE};

use nalgebra::{Matrix4, Vector3};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadError {
    #[error("quaternion norm {norm} is not within tolerance of 1")]
    NotUnitQuaternion { norm: f64 },
    #[error("invalid quadrotor parameter `{name}`: {value}")]
    InvalidParam { name: &'static str, value: f64 },
}

/// Identified physical constants of one vehicle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadParams {
    /// kg
    pub mass: f64,
    /// m/s²
    pub gravity: f64,
    /// Principal inertia (Ixx, Iyy, Izz), kg·m².
    pub inertia: Vector3<f64>,
    /// Thrust coefficient, N/kRPM².
    pub kt: f64,
    /// Torque coefficient, N·m/kRPM².
    pub kq: f64,
    /// Arm length, m.
    pub arm_length: f64,
    /// Arm angle, rad.
    pub arm_angle: f64,
    /// Rotor speed limits, kRPM.
    pub omega_min: f64,
    pub omega_max: f64,
}

impl QuadParams {
    /// The identified platform: 1.5344 kg, k_t = 2.8158e-2, k_q = 3.7611e-4,
    /// L = 0.1372 m at 45°, rotor speeds in [2.6, 24.0] kRPM.
    pub fn identified() -> Self {
        Self {
            mass: 1.5344,
            gravity: 9.81,
            inertia: Vector3::new(0.0094, 0.0134, 0.0145),
            kt: 2.8158e-2,
            kq: 3.7611e-4,
            arm_length: 0.1372,
            arm_angle: 45f64.to_radians(),
            omega_min: 2.6,
            omega_max: 24.0,
        }
    }

    pub fn validate(&self) -> Result<(), QuadError> {
        let positive = [
            ("mass", self.mass),
            ("gravity", self.gravity),
            ("Ixx", self.inertia.x),
            ("Iyy", self.inertia.y),
            ("Izz", self.inertia.z),
            ("kt", self.kt),
            ("kq", self.kq),
            ("arm_length", self.arm_length),
            ("omega_min", self.omega_min),
            ("omega_max", self.omega_max),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(QuadError::InvalidParam { name, value });
            }
        }
        if !(self.arm_angle > 0.0 && self.arm_angle < std::f64::consts::FRAC_PI_2) {
            return Err(QuadError::InvalidParam { name: "arm_angle", value: self.arm_angle });
        }
        if self.omega_min >= self.omega_max {
            return Err(QuadError::InvalidParam { name: "omega_min", value: self.omega_min });
        }
        Ok(())
    }

    /// m·g
    pub fn weight(&self) -> f64 {
        self.mass * self.gravity
    }

    /// Collective thrust with every rotor at `omega_max`.
    pub fn max_thrust(&self) -> f64 {
        4.0 * self.kt * self.omega_max * self.omega_max
    }

    pub fn rotor_force_bounds(&self) -> (f64, f64) {
        (self.kt * self.omega_min * self.omega_min, self.kt * self.omega_max * self.omega_max)
    }

    /// Matrix `G` mapping rotor forces to `[f_c, τx, τy, τz]`.
    pub fn allocation_matrix(&self) -> Matrix4<f64> {
        let ls = self.arm_length * self.arm_angle.sin();
        let lc = self.arm_length * self.arm_angle.cos();
        let kr = self.kq / self.kt;
        Matrix4::new(
            1.0, 1.0, 1.0, 1.0, //
            -ls, ls, ls, -ls, //
            -lc, lc, -lc, lc, //
            -kr, -kr, kr, kr,
        )
    }

    pub fn gravity_vector(&self) -> Vector3<f64> {
        Vector3::new(0.0, 0.0, -self.gravity)
    }
}

impl Default for QuadParams {
    fn default() -> Self {
        Self::identified()
    }
}

/// Full rigid-body state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct State13 {
    /// Inertial position, m.
    pub p: Vector3<f64>,
    /// Inertial velocity, m/s.
    pub v: Vector3<f64>,
    /// Body-to-inertial attitude.
    pub q: Quat,
    /// Body angular rate, rad/s.
    pub w: Vector3<f64>,
}

impl State13 {
    pub fn hover_at(p: Vector3<f64>) -> Self {
        Self { p, v: Vector3::zeros(), q: Quat::IDENTITY, w: Vector3::zeros() }
    }

    pub fn is_finite(&self) -> bool {
        self.p.iter().chain(self.v.iter()).chain(self.w.iter()).all(|x| x.is_finite())
            && self.q.is_finite()
    }

    pub fn reduced(&self) -> ReducedState {
        ReducedState { p: self.p, v: self.v, q: self.q }
    }
}

impl Default for State13 {
    fn default() -> Self {
        Self::hover_at(Vector3::zeros())
    }
}

/// NMPC control input: collective thrust and commanded body rates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BodyRateCmd {
    /// N
    pub fc: f64,
    /// rad/s
    pub rates: Vector3<f64>,
}

impl BodyRateCmd {
    pub fn hover(params: &QuadParams) -> Self {
        Self { fc: params.weight(), rates: Vector3::zeros() }
    }
}

/// Rotor speeds in kRPM, numbered 1..4 as in the allocation matrix.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct MotorSpeeds(pub [f64; 4]);

/// Collective body-z force and body torques.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Wrench {
    pub fc: f64,
    pub tau: Vector3<f64>,
}

impl Wrench {
    pub fn as_vector(&self) -> nalgebra::Vector4<f64> {
        nalgebra::Vector4::new(self.fc, self.tau.x, self.tau.y, self.tau.z)
    }
}
