//! Simulated two-vehicle collection flight: the lower vehicle holds a point
//! while the upper one parks far away, then sweeps a randomized lawnmower
//! pattern above it at varying heights.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{hover_bias_removal, mean_force, reconstruct_disturbance, DataError, LogRecord, Sample};
use crate::harness::sim::{Plant, PositionController};
use crate::harness::ScenarioConfig;
use crate::quad::{BodyRateCmd, State13};
use crate::trajectory::{allocate_times, min_snap, FlatOutput, PiecewiseTrajectory, Waypoint};

/// Waypoints per minimum-snap chunk of the sweep.
const CHUNK_WAYPOINTS: usize = 6;

#[derive(Clone, Debug)]
pub struct Collection {
    /// Records of both vehicles, ordered by time then vehicle.
    pub log: Vec<LogRecord>,
    /// Bias-corrected samples from both vehicles' perspectives.
    pub samples: Vec<Sample>,
    /// Bias subtracted from each vehicle's samples.
    pub hover_bias: [Vector3<f64>; 2],
    pub gaps: usize,
}

/// Reference of the upper vehicle: back-to-back trajectory pieces, holding
/// the last point between and after them.
struct Schedule {
    pieces: Vec<(f64, PiecewiseTrajectory)>,
    park: Waypoint,
}

impl Schedule {
    fn sample(&self, t: f64) -> FlatOutput {
        let idx = self.pieces.partition_point(|(start, _)| *start <= t);
        match idx.checked_sub(1) {
            Some(i) => FlatOutput::sample(&self.pieces[i].1, t - self.pieces[i].0),
            None => hold(&self.park),
        }
    }
}

fn hold(w: &Waypoint) -> FlatOutput {
    FlatOutput { p: w.p, v: Vector3::zeros(), a: Vector3::zeros(), psi: w.psi }
}

fn sweep_schedule(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng, t_end: f64) -> Result<Schedule, DataError> {
    let c = &cfg.collect;
    let lower = Vector3::from(c.lower);
    let center = lower + Vector3::new(c.lateral_offset, 0.0, 0.0);
    let mid_sep = 0.5 * (c.separation_min + c.separation_max);
    let park = Waypoint {
        p: center + Vector3::new(c.sweep_half_width + c.park_distance, 0.0, mid_sep),
        psi: 0.0,
    };
    let mut pieces = Vec::new();
    let mut t = c.warmup + c.hover_duration;
    let mut current = park;
    let mut side = 1.0;
    while t < t_end {
        let mut wps = vec![current];
        for _ in 0..CHUNK_WAYPOINTS - 1 {
            side = -side;
            let p = Vector3::new(
                center.x + side * c.sweep_half_width,
                center.y + rng.random_range(-c.sweep_half_width..=c.sweep_half_width),
                lower.z + rng.random_range(c.separation_min..=c.separation_max),
            );
            wps.push(Waypoint { p, psi: 0.0 });
        }
        let speed = rng.random_range(c.speed_min..=c.speed_max);
        let knots = allocate_times(&wps, speed).map_err(|e| DataError::Scenario(e.to_string()))?;
        let traj = min_snap(&wps, &knots).map_err(|e| DataError::Scenario(e.to_string()))?;
        let duration = traj.duration();
        pieces.push((t, traj));
        t += duration;
        current = *wps.last().expect("chunk has waypoints");
    }
    Ok(Schedule { pieces, park })
}

/// Fly the collection protocol and reconstruct the disturbance samples.
pub fn collect_scenario(cfg: &ScenarioConfig, seed: u64) -> Result<Collection, DataError> {
    cfg.validate().map_err(|e| DataError::Scenario(e.to_string()))?;
    let c = &cfg.collect;
    let params = &cfg.params;
    let (ctrl_every, log_every) = cfg.substeps().map_err(|e| DataError::Scenario(e.to_string()))?;
    let dt = cfg.sim.dt;
    let t_end = c.warmup + c.duration;
    let log_dt = log_every as f64 * dt;
    let steps = ((t_end + log_dt) / dt).ceil() as usize;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let schedule = sweep_schedule(cfg, &mut rng, t_end)?;
    let lower_ref = hold(&Waypoint { p: Vector3::from(c.lower), psi: 0.0 });

    let jitter = Normal::new(0.0, cfg.noise.initial_jitter).expect("finite std");
    let pos_noise = Normal::new(0.0, cfg.noise.position).expect("finite std");
    let vel_noise = Normal::new(0.0, cfg.noise.velocity).expect("finite std");
    let mut starts = [State13::hover_at(lower_ref.p), State13::hover_at(schedule.park.p)];
    for s in &mut starts {
        s.p += Vector3::from_fn(|_, _| jitter.sample(&mut rng));
    }
    let mut plant = Plant::new(starts.to_vec(), *params, cfg.downwash, dt, cfg.sim.rate_gain);
    plant.injected[0] = Vector3::from(c.injected_force);
    let mut controllers = [PositionController::default(), PositionController::default()];
    let mut cmds = [BodyRateCmd::hover(params); 2];
    let ctrl_dt = ctrl_every as f64 * dt;

    let mut logs: [Vec<LogRecord>; 2] = [Vec::new(), Vec::new()];
    for k in 0..steps {
        let t = k as f64 * dt;
        if k % ctrl_every == 0 {
            for i in 0..2 {
                let mut measured = plant.states[i];
                measured.p += Vector3::from_fn(|_, _| pos_noise.sample(&mut rng));
                measured.v += Vector3::from_fn(|_, _| vel_noise.sample(&mut rng));
                let reference = if i == 0 { lower_ref } else { schedule.sample(t) };
                cmds[i] = controllers[i].command(&measured, &reference, ctrl_dt, params);
            }
        }
        let before = plant.states.clone();
        plant.step(&cmds).map_err(|i| DataError::Divergence { t, drone: i as u32 })?;
        if k % log_every == 0 {
            for i in 0..2 {
                let s = before[i];
                logs[i].push(LogRecord {
                    t: (t * 1e6).round() / 1e6,
                    drone_id: i as u32,
                    p: s.p,
                    v: s.v,
                    q: s.q,
                    w: s.w,
                    motors: plant.motors()[i],
                    f_true: plant.disturbances()[i],
                });
            }
        }
    }

    let mut samples = Vec::new();
    let mut hover_bias = [Vector3::zeros(); 2];
    let mut gaps = 0;
    let hover_end = c.warmup + c.hover_duration;
    for ego in 0..2 {
        let rec = reconstruct_disturbance(&logs[ego], &logs[1 - ego], params, c.tau_f)?;
        gaps += rec.gaps;
        let keep: Vec<usize> = (0..rec.samples.len()).filter(|&k| rec.times[k] >= c.warmup - 1e-9).collect();
        let window: Vec<Sample> = keep
            .iter()
            .filter(|&&k| rec.times[k] < hover_end)
            .map(|&k| rec.samples[k])
            .collect();
        hover_bias[ego] = mean_force(&window).ok_or(DataError::EmptyHoverWindow)?;
        let kept: Vec<Sample> = keep.iter().map(|&k| rec.samples[k]).collect();
        samples.extend(hover_bias_removal(&kept, &window)?);
    }

    let mut log: Vec<LogRecord> = logs[0].iter().zip(&logs[1]).flat_map(|(a, b)| [*a, *b]).collect();
    log.shrink_to_fit();
    Ok(Collection { log, samples, hover_bias, gaps })
}
