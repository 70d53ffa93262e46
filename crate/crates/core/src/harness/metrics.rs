//! Tracking error statistics over a flight and over the downwash window.

use std::path::Path;

use nalgebra::Vector3;

use super::{HarnessError, Window};
use crate::data::{read_log, LogRecord};
use crate::quad::QuadParams;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReferenceRecord {
    pub t: f64,
    pub drone_id: u32,
    pub p: Vector3<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TelemetryRecord {
    pub t: f64,
    pub fc: f64,
    pub rates: Vector3<f64>,
    pub qp_status: u8,
    pub kkt: f64,
    pub solve_ms: f64,
    pub fd_pred_z_node0: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunMetrics {
    /// Per-axis RMSE over the whole flight, m.
    pub rmse: [f64; 3],
    /// Per-axis RMSE while the reference x lies in the window, m.
    pub rmse_window: [f64; 3],
    pub max_abs_z_error: f64,
    pub mean_solve_ms: f64,
    /// Log records with at least one rotor at a speed limit.
    pub saturation_count: usize,
    pub window_samples: usize,
}

impl RunMetrics {
    pub fn mean(all: &[RunMetrics]) -> RunMetrics {
        let n = all.len().max(1) as f64;
        let avg3 = |f: &dyn Fn(&RunMetrics) -> [f64; 3]| {
            let mut out = [0.0; 3];
            for m in all {
                for (o, v) in out.iter_mut().zip(f(m)) {
                    *o += v / n;
                }
            }
            out
        };
        RunMetrics {
            rmse: avg3(&|m| m.rmse),
            rmse_window: avg3(&|m| m.rmse_window),
            max_abs_z_error: all.iter().map(|m| m.max_abs_z_error).fold(0.0, f64::max),
            mean_solve_ms: all.iter().map(|m| m.mean_solve_ms).sum::<f64>() / n,
            saturation_count: all.iter().map(|m| m.saturation_count).sum(),
            window_samples: all.iter().map(|m| m.window_samples).sum(),
        }
    }
}

fn rmse(errors: &[Vector3<f64>]) -> [f64; 3] {
    let n = errors.len() as f64;
    std::array::from_fn(|a| (errors.iter().map(|e| e[a] * e[a]).sum::<f64>() / n).sqrt())
}

/// Metrics of one vehicle; log and reference rows are paired by timestamp.
pub fn metrics_from_records(
    log: &[LogRecord],
    references: &[ReferenceRecord],
    telemetry: &[TelemetryRecord],
    window: &Window,
    params: &QuadParams,
) -> Result<RunMetrics, HarnessError> {
    let mut all = Vec::with_capacity(log.len());
    let mut inside = Vec::new();
    let mut saturation_count = 0;
    let mut r = 0;
    for rec in log {
        while r < references.len() && references[r].t < rec.t - 1e-9 {
            r += 1;
        }
        let Some(reference) = references.get(r).filter(|x| (x.t - rec.t).abs() <= 1e-9) else {
            return Err(HarnessError::Mismatch(format!("no reference at t = {}", rec.t)));
        };
        let e = rec.p - reference.p;
        all.push(e);
        if (window.x_min..=window.x_max).contains(&reference.p.x) {
            inside.push(e);
        }
        if rec.motors.0.iter().any(|&w| w <= params.omega_min + 1e-9 || w >= params.omega_max - 1e-9) {
            saturation_count += 1;
        }
    }
    if all.is_empty() || inside.is_empty() {
        return Err(HarnessError::EmptyWindow);
    }
    let mean_solve_ms = if telemetry.is_empty() {
        0.0
    } else {
        telemetry.iter().map(|t| t.solve_ms).sum::<f64>() / telemetry.len() as f64
    };
    Ok(RunMetrics {
        rmse: rmse(&all),
        rmse_window: rmse(&inside),
        max_abs_z_error: all.iter().map(|e| e.z.abs()).fold(0.0, f64::max),
        mean_solve_ms,
        saturation_count,
        window_samples: inside.len(),
    })
}

fn parse_fields(line: &str, n: usize, file: &str, row: usize) -> Result<Vec<f64>, HarnessError> {
    let f: Vec<f64> = line
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| HarnessError::Mismatch(format!("{file} row {row}: bad number")))?;
    if f.len() != n {
        return Err(HarnessError::Mismatch(format!("{file} row {row}: {} fields, expected {n}", f.len())));
    }
    Ok(f)
}

pub fn read_references(path: &Path) -> Result<Vec<ReferenceRecord>, HarnessError> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let f = parse_fields(l, 5, "reference.csv", i + 1)?;
            Ok(ReferenceRecord { t: f[0], drone_id: f[1] as u32, p: Vector3::new(f[2], f[3], f[4]) })
        })
        .collect()
}

pub fn read_telemetry(path: &Path) -> Result<Vec<TelemetryRecord>, HarnessError> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let f = parse_fields(l, 9, "telemetry", i + 1)?;
            Ok(TelemetryRecord {
                t: f[0],
                fc: f[1],
                rates: Vector3::new(f[2], f[3], f[4]),
                qp_status: f[5] as u8,
                kkt: f[6],
                solve_ms: f[7],
                fd_pred_z_node0: f[8],
            })
        })
        .collect()
}

/// Metrics of `window.drone` from a round directory.
pub fn compute_metrics(round_dir: &Path, window: &Window, params: &QuadParams) -> Result<RunMetrics, HarnessError> {
    let d = window.drone;
    let log = read_log(&round_dir.join(format!("drone{d}.csv")))?;
    let refs: Vec<ReferenceRecord> =
        read_references(&round_dir.join("reference.csv"))?.into_iter().filter(|r| r.drone_id == d).collect();
    let tel_path = round_dir.join(format!("telemetry_drone{d}.csv"));
    let telemetry = if tel_path.exists() { read_telemetry(&tel_path)? } else { Vec::new() };
    metrics_from_records(&log, &refs, &telemetry, window, params)
}

pub const METRICS_HEADER: &str =
    "seed,rmse_x,rmse_y,rmse_z,window_rmse_x,window_rmse_y,window_rmse_z,max_abs_z_error,mean_solve_ms,saturation_count";

pub fn write_metrics_csv(rows: &[(u64, RunMetrics)], path: &Path) -> Result<(), HarnessError> {
    use std::fmt::Write as _;
    let mut s = format!("{METRICS_HEADER}\n");
    for (seed, m) in rows {
        let _ = writeln!(
            s,
            "{seed},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.6},{}",
            m.rmse[0], m.rmse[1], m.rmse[2], m.rmse_window[0], m.rmse_window[1], m.rmse_window[2], m.max_abs_z_error,
            m.mean_solve_ms, m.saturation_count
        );
    }
    std::fs::write(path, s)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::{MotorSpeeds, Quat};

    fn log_row(t: f64, p: Vector3<f64>) -> LogRecord {
        LogRecord {
            t,
            drone_id: 0,
            p,
            v: Vector3::zeros(),
            q: Quat::IDENTITY,
            w: Vector3::zeros(),
            motors: MotorSpeeds([11.0; 4]),
            f_true: Vector3::zeros(),
        }
    }

    #[test]
    fn perfect_and_offset_tracking() {
        let window = Window { x_min: -0.5, x_max: 0.5, drone: 0 };
        let refs: Vec<_> = (0..100)
            .map(|k| ReferenceRecord { t: k as f64 * 0.01, drone_id: 0, p: Vector3::new(-1.0 + 0.02 * k as f64, 0.0, 1.0) })
            .collect();
        let perfect: Vec<_> = refs.iter().map(|r| log_row(r.t, r.p)).collect();
        let m = metrics_from_records(&perfect, &refs, &[], &window, &QuadParams::identified()).unwrap();
        assert_eq!(m.rmse, [0.0; 3]);
        let offset: Vec<_> = refs.iter().map(|r| log_row(r.t, r.p + Vector3::new(0.0, 0.0, 0.02))).collect();
        let m = metrics_from_records(&offset, &refs, &[], &window, &QuadParams::identified()).unwrap();
        assert!((m.rmse[2] - 0.02).abs() < 1e-15 && (m.rmse_window[2] - 0.02).abs() < 1e-15);
        let far = Window { x_min: 5.0, x_max: 6.0, drone: 0 };
        assert!(matches!(
            metrics_from_records(&offset, &refs, &[], &far, &QuadParams::identified()),
            Err(HarnessError::EmptyWindow)
        ));
    }
}
