use crate::quad::QuadParams;

use super::NmpcError;

/// How the input reference `u_r` in the tracking cost is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputReference {
    /// `(m·g, 0, 0, 0)` at every node.
    Hover,
    /// Thrust that realises the reference acceleration against the
    /// scheduled disturbance at that node, zero rates.
    Feedforward,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OcpConfig {
    /// Number of shooting intervals.
    pub horizon: usize,
    /// Shooting interval, s.
    pub dt_shoot: f64,
    pub q_pos_xy: f64,
    pub q_pos_z: f64,
    pub q_vel: f64,
    pub q_att: f64,
    pub r_rate: f64,
    pub r_thrust: f64,
    /// Terminal weight as a multiple of the stage state weight.
    pub terminal_scale: f64,
    /// Collective thrust bounds, N.
    pub thrust_bounds: (f64, f64),
    /// Symmetric body-rate bound, rad/s.
    pub rate_limit: f64,
    /// Levenberg term added to the condensed Hessian.
    pub damping: f64,
    /// Nodes the warm start is advanced after each step; the control period
    /// divided by `dt_shoot` keeps the guess aligned with the next call.
    pub warm_shift: f64,
    pub input_reference: InputReference,
}

impl OcpConfig {
    pub const DEFAULT_CONTROL_RATE_HZ: f64 = 60.0;

    pub fn for_params(params: &QuadParams) -> Self {
        let dt_shoot = 0.1;
        Self {
            horizon: 20,
            dt_shoot,
            q_pos_xy: 300.0,
            q_pos_z: 400.0,
            q_vel: 1.0,
            q_att: 0.1,
            r_rate: 10.0,
            r_thrust: 10.0,
            terminal_scale: 1.0,
            thrust_bounds: (0.0, params.max_thrust()),
            rate_limit: 3.0,
            damping: 1e-8,
            warm_shift: 1.0 / (Self::DEFAULT_CONTROL_RATE_HZ * dt_shoot),
            input_reference: InputReference::Feedforward,
        }
    }

    pub fn validate(&self) -> Result<(), NmpcError> {
        let bad = |name: &'static str, value: f64| Err(NmpcError::InvalidConfig { name, value });
        if self.horizon == 0 {
            return bad("horizon", 0.0);
        }
        if !(self.dt_shoot > 0.0 && self.dt_shoot.is_finite()) {
            return bad("dt_shoot", self.dt_shoot);
        }
        let weights = [
            ("q_pos_xy", self.q_pos_xy),
            ("q_pos_z", self.q_pos_z),
            ("q_vel", self.q_vel),
            ("q_att", self.q_att),
            ("r_rate", self.r_rate),
            ("r_thrust", self.r_thrust),
            ("terminal_scale", self.terminal_scale),
            ("damping", self.damping),
        ];
        for (name, w) in weights {
            if !(w >= 0.0 && w.is_finite()) {
                return bad(name, w);
            }
        }
        if weights[..6].iter().all(|(_, w)| *w == 0.0) {
            return bad("q_pos_xy", 0.0);
        }
        if self.r_rate + self.r_thrust + self.damping <= 0.0 {
            return bad("damping", self.damping);
        }
        let (lo, hi) = self.thrust_bounds;
        if !(lo >= 0.0 && lo < hi && hi.is_finite()) {
            return bad("thrust_max", hi);
        }
        if !(self.rate_limit > 0.0 && self.rate_limit.is_finite()) {
            return bad("rate_limit", self.rate_limit);
        }
        if !(0.0..=1.0).contains(&self.warm_shift) {
            return bad("warm_shift", self.warm_shift);
        }
        Ok(())
    }

    pub fn input_lower(&self) -> [f64; 4] {
        let w = self.rate_limit;
        [self.thrust_bounds.0, -w, -w, -w]
    }

    pub fn input_upper(&self) -> [f64; 4] {
        let w = self.rate_limit;
        [self.thrust_bounds.1, w, w, w]
    }
}

impl Default for OcpConfig {
    fn default() -> Self {
        Self::for_params(&QuadParams::identified())
    }
}
