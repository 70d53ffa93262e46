//! Newton-to-throttle normalization with a scalar Kalman filter on the hover
//! throttle.

use crate::quad::QuadParams;

/// Running estimate of the throttle at which thrust equals weight.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HoverThrottleState {
    pub estimate: f64,
    pub variance: f64,
    /// Random-walk intensity, 1/s.
    pub process_noise: f64,
    /// Vertical acceleration measurement variance, (m/s²)².
    pub measurement_noise: f64,
}

impl HoverThrottleState {
    pub const MIN: f64 = 0.05;
    pub const MAX: f64 = 0.95;

    pub fn new(estimate: f64) -> Self {
        Self { estimate, variance: 0.01, process_noise: 1e-5, measurement_noise: 0.25 }
    }

    /// One filter update from the throttle applied over the last interval,
    /// the body z axis vertical component `R₃₃` and the measured inertial
    /// vertical acceleration.
    pub fn update(&mut self, throttle: f64, r33: f64, acc_z: f64, dt: f64, gravity: f64) {
        let theta = self.estimate;
        self.variance += self.process_noise * dt;
        let predicted = gravity * (throttle * r33 / theta - 1.0);
        let jac = -gravity * throttle * r33 / (theta * theta);
        let s = jac * self.variance * jac + self.measurement_noise;
        let gain = self.variance * jac / s;
        self.estimate = (theta + gain * (acc_z - predicted)).clamp(Self::MIN, Self::MAX);
        self.variance *= 1.0 - gain * jac;
    }
}

impl Default for HoverThrottleState {
    fn default() -> Self {
        Self::new(0.5)
    }
}

pub fn thrust_to_throttle(fc: f64, hover: &HoverThrottleState, params: &QuadParams) -> f64 {
    (fc * hover.estimate / params.weight()).clamp(0.0, 1.0)
}

/// Thrust produced by a throttle command on a vehicle whose true hover
/// throttle is `hover_true`.
pub fn throttle_to_thrust(throttle: f64, hover_true: f64, params: &QuadParams) -> f64 {
    throttle * params.weight() / hover_true
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn hover_and_saturation() {
        let p = QuadParams::identified();
        let est = HoverThrottleState::new(0.5);
        assert!((thrust_to_throttle(p.weight(), &est, &p) - 0.5).abs() < 1e-15);
        assert_eq!(thrust_to_throttle(2.0 * p.weight(), &est, &p), 1.0);
        assert_eq!(thrust_to_throttle(0.0, &est, &p), 0.0);
    }

    #[test]
    fn filter_converges_during_hover() {
        let p = QuadParams::identified();
        let truth = 0.45;
        let mut est = HoverThrottleState::new(0.5);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let noise = Normal::new(0.0, 0.5).unwrap();
        let dt = 0.01;
        let (mut z, mut vz) = (1.0, 0.0);
        let mut converged_at = None;
        for i in 0..500 {
            let fc = p.weight() + p.mass * (-4.0 * (z - 1.0) - 3.0 * vz);
            let throttle = thrust_to_throttle(fc, &est, &p);
            let acc = throttle_to_thrust(throttle, truth, &p) / p.mass - p.gravity;
            vz += acc * dt;
            z += vz * dt;
            est.update(throttle, 1.0, acc + noise.sample(&mut rng), dt, p.gravity);
            let ok = (est.estimate - truth).abs() <= 0.02 * truth;
            match (ok, converged_at) {
                (true, None) => converged_at = Some(i),
                (false, _) => converged_at = None,
                _ => {}
            }
        }
        let t = converged_at.expect("estimate settled") as f64 * dt;
        assert!(t < 5.0, "settled at {t} s");
    }
}
