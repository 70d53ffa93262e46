//! Two-vehicle plant and the cascaded PID position controller used for
//! data collection.

use nalgebra::Vector3;

use crate::downwash::{true_disturbance, DownwashParams};
use crate::quad::{
    allocate_motors, body_rate_inner_loop, dynamics_full, error_sign, rk4_step, BodyRateCmd, MotorSpeeds, QuadParams,
    Quat, State13, Wrench,
};
use crate::trajectory::FlatOutput;

/// Rigid-body plant for several vehicles with pairwise downwash.
#[derive(Clone, Debug)]
pub struct Plant {
    pub states: Vec<State13>,
    pub params: QuadParams,
    pub downwash: DownwashParams,
    pub dt: f64,
    pub rate_gain: f64,
    /// Constant extra force per vehicle, N.
    pub injected: Vec<Vector3<f64>>,
    motors: Vec<MotorSpeeds>,
    disturbances: Vec<Vector3<f64>>,
    saturated: Vec<bool>,
}

impl Plant {
    pub fn new(states: Vec<State13>, params: QuadParams, downwash: DownwashParams, dt: f64, rate_gain: f64) -> Self {
        let n = states.len();
        let hover = (params.weight() / (4.0 * params.kt)).sqrt();
        let mut plant = Self {
            states,
            params,
            downwash,
            dt,
            rate_gain,
            injected: vec![Vector3::zeros(); n],
            motors: vec![MotorSpeeds([hover; 4]); n],
            disturbances: vec![Vector3::zeros(); n],
            saturated: vec![false; n],
        };
        plant.disturbances = plant.compute_disturbances();
        plant
    }

    fn compute_disturbances(&self) -> Vec<Vector3<f64>> {
        (0..self.states.len())
            .map(|i| {
                let mut f = self.injected[i];
                for (j, other) in self.states.iter().enumerate() {
                    if j != i {
                        f += true_disturbance(&(other.p - self.states[i].p), &(other.v - self.states[i].v), &self.downwash);
                    }
                }
                f
            })
            .collect()
    }

    /// Disturbance currently applied to each vehicle.
    pub fn disturbances(&self) -> &[Vector3<f64>] {
        &self.disturbances
    }

    /// Rotor speeds applied in the last step.
    pub fn motors(&self) -> &[MotorSpeeds] {
        &self.motors
    }

    pub fn saturated(&self) -> &[bool] {
        &self.saturated
    }

    /// Advance one step with `thrust[i]` (N) and commanded body rates.
    /// Returns the index of the first vehicle whose state became non-finite.
    pub fn step(&mut self, cmds: &[BodyRateCmd]) -> Result<(), usize> {
        self.disturbances = self.compute_disturbances();
        for (i, cmd) in cmds.iter().enumerate() {
            let x = self.states[i];
            let tau = body_rate_inner_loop(&cmd.rates, &x.w, &self.params, self.rate_gain);
            let alloc = allocate_motors(&Wrench { fc: cmd.fc, tau }, &self.params);
            let fd = self.disturbances[i];
            let params = &self.params;
            let next = rk4_step(|s| dynamics_full(s, &alloc.motors, &fd, params), &x, self.dt);
            if !next.is_finite() {
                return Err(i);
            }
            self.states[i] = next;
            self.motors[i] = alloc.motors;
            self.saturated[i] = alloc.saturated;
        }
        Ok(())
    }
}

/// Cascaded PID: position error to thrust vector, attitude error to body
/// rates.
#[derive(Clone, Debug)]
pub struct PositionController {
    pub kp: f64,
    pub kd: f64,
    pub ki: f64,
    pub k_att: f64,
    pub rate_limit: f64,
    integral: Vector3<f64>,
}

impl Default for PositionController {
    fn default() -> Self {
        Self { kp: 8.0, kd: 5.0, ki: 4.0, k_att: 8.0, rate_limit: 3.0, integral: Vector3::zeros() }
    }
}

impl PositionController {
    pub fn command(&mut self, measured: &State13, reference: &FlatOutput, dt: f64, params: &QuadParams) -> BodyRateCmd {
        let e_p = reference.p - measured.p;
        let e_v = reference.v - measured.v;
        self.integral = (self.integral + e_p * dt).map(|v| v.clamp(-2.0, 2.0));
        let acc = reference.a + e_p * self.kp + e_v * self.kd + self.integral * self.ki;
        let mut force = (acc - params.gravity_vector()) * params.mass;
        force.z = force.z.max(0.2 * params.weight());
        let z_des = force.normalize();
        let heading = Vector3::new(reference.psi.cos(), reference.psi.sin(), 0.0);
        let y_des = z_des.cross(&heading).normalize();
        let x_des = y_des.cross(&z_des);
        let q_des = Quat::from_rotation(&nalgebra::Matrix3::from_columns(&[x_des, y_des, z_des]));
        let q_err = measured.q.conj() * q_des;
        let rates = (q_err.vec() * (2.0 * self.k_att * error_sign(q_err.w))).map(|r| r.clamp(-self.rate_limit, self.rate_limit));
        let fc = force.dot(&measured.q.body_z()).clamp(0.0, params.max_thrust());
        BodyRateCmd { fc, rates }
    }
}
