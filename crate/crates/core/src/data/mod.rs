//! Flight logs to training data: filtered differentiation of velocity,
//! nominal-force subtraction, hover bias removal and a seeded split.

mod collect;
mod csvio;

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use thiserror::Error;

use crate::quad::{MotorSpeeds, QuadParams, Quat};

pub use collect::{collect_scenario, Collection};
pub use csvio::{
    parse_dataset, parse_log, read_dataset, read_log, write_dataset, write_log, DATASET_HEADER, LOG_HEADER,
};

/// Derivative filter time constant, s.
pub const DEFAULT_TAU_F: f64 = 0.05;
/// Log rate, Hz.
pub const LOG_RATE_HZ: f64 = 100.0;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("hover window is empty")]
    EmptyHoverWindow,
    #[error("split ratio must lie in (0, 1), got {0}")]
    BadRatio(f64),
    #[error("need at least 2 samples to split, got {0}")]
    TooFewSamples(usize),
    #[error("timestamps not strictly increasing at row {0}")]
    NonMonotonic(usize),
    #[error("log too short to differentiate ({0} records)")]
    ShortLog(usize),
    #[error("filter settings invalid: dt = {dt}, tau_f = {tau_f}")]
    Filter { dt: f64, tau_f: f64 },
    #[error("csv: {0}")]
    Csv(String),
    #[error("simulation diverged at t = {t:.3} s on drone {drone}")]
    Divergence { t: f64, drone: u32 },
    #[error("scenario: {0}")]
    Scenario(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One logged state of one vehicle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRecord {
    pub t: f64,
    pub drone_id: u32,
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
    pub q: Quat,
    pub w: Vector3<f64>,
    pub motors: MotorSpeeds,
    /// Disturbance the simulator applied, N.
    pub f_true: Vector3<f64>,
}

/// Training pair: neighbor-minus-ego relative state and the ego's
/// disturbance force.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub rel_p: Vector3<f64>,
    pub rel_v: Vector3<f64>,
    pub f_d: Vector3<f64>,
}

/// Bilinear discretization of `s / (τ s + 1)`, starting from zero output.
pub fn tustin_derivative(series: &[Vector3<f64>], dt: f64, tau_f: f64) -> Result<Vec<Vector3<f64>>, DataError> {
    if !(dt > 0.0 && tau_f >= 0.5 * dt && tau_f.is_finite()) {
        return Err(DataError::Filter { dt, tau_f });
    }
    if series.len() < 2 {
        return Ok(Vec::new());
    }
    let a = (2.0 * tau_f - dt) / (2.0 * tau_f + dt);
    let b = 2.0 / (2.0 * tau_f + dt);
    let mut out = Vec::with_capacity(series.len());
    let mut y = Vector3::zeros();
    out.push(y);
    for k in 1..series.len() {
        y = y * a + (series[k] - series[k - 1]) * b;
        out.push(y);
    }
    Ok(out)
}

/// Bilinear discretization of `1 / (τ s + 1)`, starting at the first value.
pub fn tustin_lowpass(series: &[Vector3<f64>], dt: f64, tau_f: f64) -> Result<Vec<Vector3<f64>>, DataError> {
    if !(dt > 0.0 && tau_f >= 0.5 * dt && tau_f.is_finite()) {
        return Err(DataError::Filter { dt, tau_f });
    }
    let Some(&first) = series.first() else {
        return Ok(Vec::new());
    };
    let a = (2.0 * tau_f - dt) / (2.0 * tau_f + dt);
    let b = dt / (2.0 * tau_f + dt);
    let mut out = Vec::with_capacity(series.len());
    let mut y = first;
    out.push(y);
    for k in 1..series.len() {
        y = y * a + (series[k] + series[k - 1]) * b;
        out.push(y);
    }
    Ok(out)
}

/// Thrust along the body z axis plus weight, in the inertial frame.
pub fn nominal_force(q: &Quat, motors: &MotorSpeeds, params: &QuadParams) -> Vector3<f64> {
    let thrust: f64 = motors.0.iter().map(|w| params.kt * w * w).sum();
    q.normalized().body_z() * thrust + params.gravity_vector() * params.mass
}

/// Reconstructed samples of one ego vehicle.
#[derive(Clone, Debug, PartialEq)]
pub struct Reconstruction {
    pub samples: Vec<Sample>,
    /// Ego timestamp of each sample.
    pub times: Vec<f64>,
    /// Ego records dropped for lack of an aligned neighbor record, plus
    /// breaks in the ego log.
    pub gaps: usize,
}

fn check_monotonic(log: &[LogRecord]) -> Result<(), DataError> {
    match log.windows(2).position(|w| !(w[1].t > w[0].t)) {
        Some(i) => Err(DataError::NonMonotonic(i + 1)),
        None => Ok(()),
    }
}

fn nominal_period(log: &[LogRecord]) -> f64 {
    let mut diffs: Vec<f64> = log.windows(2).map(|w| w[1].t - w[0].t).collect();
    diffs.sort_by(f64::total_cmp);
    diffs[diffs.len() / 2]
}

/// `f_d = m·d/dt(v) − f_nominal` for each ego record, paired with the
/// nearest neighbor record in time. The nominal force passes through the
/// same low-pass as the derivative so fast thrust changes cancel. The ego log is split at breaks longer
/// than 1.5 periods; each piece is filtered on its own and its first `5τ_f`
/// seconds are discarded.
pub fn reconstruct_disturbance(
    ego: &[LogRecord],
    other: &[LogRecord],
    params: &QuadParams,
    tau_f: f64,
) -> Result<Reconstruction, DataError> {
    if ego.len() < 2 {
        return Err(DataError::ShortLog(ego.len()));
    }
    check_monotonic(ego)?;
    check_monotonic(other)?;
    let dt = nominal_period(ego);
    if !(tau_f >= 0.5 * dt) {
        return Err(DataError::Filter { dt, tau_f });
    }

    let mut gaps = 0;
    let mut runs: Vec<&[LogRecord]> = Vec::new();
    let mut start = 0;
    for i in 1..ego.len() {
        if ego[i].t - ego[i - 1].t > 1.5 * dt {
            runs.push(&ego[start..i]);
            start = i;
            gaps += 1;
        }
    }
    runs.push(&ego[start..]);

    let mut samples = Vec::new();
    let mut times = Vec::new();
    let mut cursor = 0;
    for run in runs {
        let v: Vec<Vector3<f64>> = run.iter().map(|r| r.v).collect();
        let acc = tustin_derivative(&v, dt, tau_f)?;
        let nominal: Vec<Vector3<f64>> = run.iter().map(|r| nominal_force(&r.q, &r.motors, params)).collect();
        let nominal = tustin_lowpass(&nominal, dt, tau_f)?;
        let settle = run[0].t + 5.0 * tau_f;
        for ((rec, a), f_nom) in run.iter().zip(&acc).zip(&nominal) {
            if rec.t < settle - 1e-9 {
                continue;
            }
            while cursor + 1 < other.len() && (other[cursor + 1].t - rec.t).abs() <= (other[cursor].t - rec.t).abs() {
                cursor += 1;
            }
            let Some(nb) = other.get(cursor).filter(|nb| (nb.t - rec.t).abs() <= 0.5 * dt + 1e-9) else {
                gaps += 1;
                continue;
            };
            let f_d = a * params.mass - f_nom;
            samples.push(Sample { rel_p: nb.p - rec.p, rel_v: nb.v - rec.v, f_d });
            times.push(rec.t);
        }
    }
    Ok(Reconstruction { samples, times, gaps })
}

pub fn mean_force(samples: &[Sample]) -> Option<Vector3<f64>> {
    if samples.is_empty() {
        return None;
    }
    Some(samples.iter().map(|s| s.f_d).sum::<Vector3<f64>>() / samples.len() as f64)
}

/// Subtract the mean force of `hover_window` from every sample.
pub fn hover_bias_removal(samples: &[Sample], hover_window: &[Sample]) -> Result<Vec<Sample>, DataError> {
    let bias = mean_force(hover_window).ok_or(DataError::EmptyHoverWindow)?;
    Ok(samples.iter().map(|s| Sample { f_d: s.f_d - bias, ..*s }).collect())
}

/// Seeded permutation split into `⌈n·ratio⌉` training and the remaining
/// test samples.
pub fn split_shuffle(samples: &[Sample], ratio: f64, seed: u64) -> Result<(Vec<Sample>, Vec<Sample>), DataError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(DataError::BadRatio(ratio));
    }
    if samples.len() < 2 {
        return Err(DataError::TooFewSamples(samples.len()));
    }
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    idx.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((samples.len() as f64 * ratio).ceil() as usize).min(samples.len());
    let train = idx[..n_train].iter().map(|&i| samples[i]).collect();
    let test = idx[n_train..].iter().map(|&i| samples[i]).collect();
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn derivative_of_constant_and_ramp() {
        let c = vec![Vector3::new(1.0, 2.0, 3.0); 100];
        let d = tustin_derivative(&c, 0.01, 0.05).unwrap();
        assert!(d.iter().all(|v| v.norm() == 0.0));
        let ramp: Vec<_> = (0..200).map(|k| Vector3::repeat(0.7 * k as f64 * 0.01)).collect();
        let d = tustin_derivative(&ramp, 0.01, 0.05).unwrap();
        for v in &d[25..] {
            assert!((v.x - 0.7).abs() <= 0.007);
        }
        assert!(tustin_derivative(&ramp[..1], 0.01, 0.05).unwrap().is_empty());
        assert!(tustin_derivative(&ramp, 0.01, 0.001).is_err());
    }

    #[test]
    fn sine_amplitude_matches_continuous_filter() {
        let (dt, tau) = (0.01, 0.05);
        let w = 2.0 * std::f64::consts::PI;
        let x: Vec<_> = (0..1000).map(|k| Vector3::new((w * k as f64 * dt).sin(), 0.0, 0.0)).collect();
        let y = tustin_derivative(&x, dt, tau).unwrap();
        let amp = y[500..].iter().map(|v| v.x.abs()).fold(0.0, f64::max);
        let expected = w / (1.0 + (w * tau).powi(2)).sqrt();
        assert!((amp - expected).abs() / expected < 0.02, "{amp} vs {expected}");
    }

    #[test]
    fn lowpass_step_follows_first_order_lag() {
        let (dt, tau) = (0.01, 0.05);
        let mut x = vec![Vector3::repeat(1.0); 10];
        x.extend(vec![Vector3::repeat(2.0); 100]);
        let y = tustin_lowpass(&x, dt, tau).unwrap();
        assert!(y[..10].iter().all(|v| *v == Vector3::repeat(1.0)));
        for (k, v) in y.iter().enumerate().skip(20) {
            let t = (k as f64 - 9.5) * dt;
            let exact = 2.0 - (-t / tau).exp();
            assert!((v.x - exact).abs() < 5e-3, "step {k}: {} vs {exact}", v.x);
        }
        assert!(tustin_lowpass(&x, dt, 0.001).is_err());
    }

    #[test]
    fn nominal_force_cases() {
        let p = QuadParams::identified();
        let hover = (p.weight() / (4.0 * p.kt)).sqrt();
        let m = MotorSpeeds([hover; 4]);
        assert!(nominal_force(&Quat::IDENTITY, &m, &p).norm() < 1e-12);
        let off = nominal_force(&Quat::IDENTITY, &MotorSpeeds([0.0; 4]), &p);
        assert!((off.z + 15.052464).abs() < 1e-9);
        let roll = Quat::from_axis_angle(&Vector3::x(), std::f64::consts::FRAC_PI_4);
        let f = nominal_force(&roll, &m, &p);
        assert!((f.z - p.weight() * (std::f64::consts::FRAC_1_SQRT_2 - 1.0)).abs() < 1e-9);
    }

    fn sample(f: Vector3<f64>) -> Sample {
        Sample { rel_p: Vector3::zeros(), rel_v: Vector3::zeros(), f_d: f }
    }

    #[test]
    fn bias_removal() {
        let data: Vec<_> = (0..10).map(|k| sample(Vector3::new(0.1, 0.0, 0.2 + 0.01 * k as f64))).collect();
        let out = hover_bias_removal(&data, &data).unwrap();
        assert!(mean_force(&out).unwrap().norm() < 1e-12);
        let zero = vec![sample(Vector3::zeros()); 3];
        assert_eq!(hover_bias_removal(&data, &zero).unwrap(), data);
        assert!(matches!(hover_bias_removal(&data, &[]), Err(DataError::EmptyHoverWindow)));
    }

    #[test]
    fn split_sizes_and_errors() {
        let data: Vec<_> = (0..100).map(|k| sample(Vector3::new(k as f64, 0.0, 0.0))).collect();
        let (a, b) = split_shuffle(&data, 0.75, 3).unwrap();
        assert_eq!((a.len(), b.len()), (75, 25));
        assert_eq!(split_shuffle(&data, 0.75, 3).unwrap(), (a, b));
        assert!(matches!(split_shuffle(&data[..1], 0.5, 0), Err(DataError::TooFewSamples(1))));
        assert!(matches!(split_shuffle(&data, 1.0, 0), Err(DataError::BadRatio(_))));
    }

    proptest! {
        #[test]
        fn split_partitions(n in 2usize..300, ratio in 0.01f64..0.99, seed: u64) {
            let data: Vec<_> = (0..n).map(|k| sample(Vector3::new(k as f64, 0.0, 0.0))).collect();
            let (a, b) = split_shuffle(&data, ratio, seed).unwrap();
            prop_assert_eq!(a.len(), (n as f64 * ratio).ceil() as usize);
            let mut all: Vec<f64> = a.iter().chain(&b).map(|s| s.f_d.x).collect();
            all.sort_by(f64::total_cmp);
            prop_assert_eq!(all, (0..n).map(|k| k as f64).collect::<Vec<_>>());
        }
    }
}
