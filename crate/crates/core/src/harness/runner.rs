//! Closed-loop two-vehicle flights with one NMPC per vehicle.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::metrics::{metrics_from_records, write_metrics_csv, ReferenceRecord, RunMetrics, TelemetryRecord};
use super::sim::Plant;
use super::{HarnessError, ScenarioConfig};
use crate::data::{write_log, LogRecord};
use crate::nmpc::{
    build_schedule, resample_zoh, rti_step, throttle_to_thrust, thrust_to_throttle, DisturbanceSchedule,
    HoverThrottleState, NeighborMode, RtiWorkspace,
};
use crate::predictor::MlpModel;
use crate::quad::{ReducedState, State13};
use crate::trajectory::{allocate_times, min_snap, serve_reference, FlatOutput, PiecewiseTrajectory};

pub const TELEMETRY_HEADER: &str = "t,fc,wx,wy,wz,qp_status,kkt,solve_ms,fd_pred_z_node0";
pub const REFERENCE_HEADER: &str = "t,drone_id,x,y,z";

/// Everything recorded in one flight.
#[derive(Clone, Debug)]
pub struct RoundRecord {
    pub seed: u64,
    /// Flight log per vehicle.
    pub logs: [Vec<LogRecord>; 2],
    pub references: [Vec<ReferenceRecord>; 2],
    pub telemetry: [Vec<TelemetryRecord>; 2],
    /// Set when the flight stopped early on a non-finite state.
    pub diverged: Option<(f64, u32)>,
}

pub fn build_trajectories(cfg: &ScenarioConfig) -> Result<[PiecewiseTrajectory; 2], HarnessError> {
    let make = |i: usize| -> Result<PiecewiseTrajectory, HarnessError> {
        let d = &cfg.drones[i];
        Ok(min_snap(&d.waypoints, &allocate_times(&d.waypoints, d.v_avg)?)?)
    };
    Ok([make(0)?, make(1)?])
}

/// Fly one round. `model` is used by both vehicles unless absent.
pub fn fly_round(cfg: &ScenarioConfig, model: Option<&MlpModel>, seed: u64) -> Result<RoundRecord, HarnessError> {
    let params = &cfg.params;
    let ocp = &cfg.nmpc;
    let n = ocp.horizon;
    let (ctrl_every, log_every) = cfg.substeps()?;
    let dt = cfg.sim.dt;
    let ctrl_dt = ctrl_every as f64 * dt;
    let steps = (cfg.sim.duration / dt).round() as usize;
    let trajs = build_trajectories(cfg)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Normal::new(0.0, cfg.noise.initial_jitter).map_err(|e| HarnessError::Config { line: 0, msg: e.to_string() })?;
    let pos_noise = Normal::new(0.0, cfg.noise.position).map_err(|e| HarnessError::Config { line: 0, msg: e.to_string() })?;
    let vel_noise = Normal::new(0.0, cfg.noise.velocity).map_err(|e| HarnessError::Config { line: 0, msg: e.to_string() })?;

    let starts: Vec<State13> = (0..2)
        .map(|i| {
            let first = FlatOutput::sample(&trajs[i], 0.0);
            let mut s = State13::hover_at(first.p);
            s.q = crate::quad::Quat::from_yaw(first.psi);
            s.p += Vector3::from_fn(|_, _| jitter.sample(&mut rng));
            s
        })
        .collect();
    let mut plant = Plant::new(starts, *params, cfg.downwash, dt, cfg.sim.rate_gain);

    let mut workspaces = [RtiWorkspace::new(), RtiWorkspace::new()];
    let mut hover_est = [HoverThrottleState::new(cfg.throttle.hover_init); 2];
    let mut last_throttle = [cfg.throttle.hover_init; 2];
    let mut last_velocity = [plant.states[0].v, plant.states[1].v];
    let mut cmds = [crate::quad::BodyRateCmd::hover(params); 2];

    // Trajectory each vehicle last shared, with its publication time.
    let mut shared: [(f64, Vec<ReducedState>); 2] = [
        (0.0, serve_reference(&trajs[0], 0.0, n, ocp.dt_shoot, params)?.iter().map(|r| r.state()).collect()),
        (0.0, serve_reference(&trajs[1], 0.0, n, ocp.dt_shoot, params)?.iter().map(|r| r.state()).collect()),
    ];

    let mut rec = RoundRecord {
        seed,
        logs: [Vec::new(), Vec::new()],
        references: [Vec::new(), Vec::new()],
        telemetry: [Vec::new(), Vec::new()],
        diverged: None,
    };

    for k in 0..=steps {
        let t = k as f64 * dt;
        if k % ctrl_every == 0 {
            let snapshot = shared.clone();
            for i in 0..2 {
                let j = 1 - i;
                let mut measured = plant.states[i].reduced();
                measured.p += Vector3::from_fn(|_, _| pos_noise.sample(&mut rng));
                measured.v += Vector3::from_fn(|_, _| vel_noise.sample(&mut rng));
                let refs = serve_reference(&trajs[i], t, n, ocp.dt_shoot, params)?;

                let started = Instant::now();
                let schedule = match model {
                    None => DisturbanceSchedule::zeros(n + 1),
                    Some(m) => {
                        let neighbor = match cfg.predictor.neighbor_mode {
                            NeighborMode::Predicted => {
                                let (t_pub, ref traj) = snapshot[j];
                                resample_zoh(traj, ocp.dt_shoot, (t - t_pub).max(0.0), ocp.dt_shoot, n + 1)?
                            }
                            NeighborMode::Reference => serve_reference(&trajs[j], t, n, ocp.dt_shoot, params)?
                                .iter()
                                .map(|r| r.state())
                                .collect(),
                        };
                        let ego: Vec<ReducedState> = refs.iter().map(|r| r.state()).collect();
                        build_schedule(Some(m), &ego, &neighbor)?
                    }
                };
                let out = rti_step(&measured, &refs, &schedule, &mut workspaces[i], ocp, params)?;
                let solve_ms = started.elapsed().as_secs_f64() * 1e3;

                let mut cmd = out.command;
                if cfg.throttle.enabled {
                    let s = &plant.states[i];
                    let acc_z = (s.v.z - last_velocity[i].z) / ctrl_dt;
                    let r33 = s.q.normalized().body_z().z;
                    hover_est[i].update(last_throttle[i], r33, acc_z, ctrl_dt, params.gravity);
                    let throttle = thrust_to_throttle(cmd.fc, &hover_est[i], params);
                    last_throttle[i] = throttle;
                    cmd.fc = throttle_to_thrust(throttle, cfg.throttle.hover_true, params);
                }
                last_velocity[i] = plant.states[i].v;
                cmds[i] = cmd;
                shared[i] = (t, out.predicted);
                rec.telemetry[i].push(TelemetryRecord {
                    t,
                    fc: out.command.fc,
                    rates: out.command.rates,
                    qp_status: out.info.qp_status.code(),
                    kkt: out.info.kkt_residual,
                    solve_ms,
                    fd_pred_z_node0: schedule.forces[0].z,
                });
            }
        }
        let before = plant.states.clone();
        if let Err(i) = plant.step(&cmds) {
            rec.diverged = Some((t, i as u32));
            break;
        }
        if k % log_every == 0 {
            for i in 0..2 {
                let s = before[i];
                let t_log = (t * 1e6).round() / 1e6;
                rec.logs[i].push(LogRecord {
                    t: t_log,
                    drone_id: i as u32,
                    p: s.p,
                    v: s.v,
                    q: s.q,
                    w: s.w,
                    motors: plant.motors()[i],
                    f_true: plant.disturbances()[i],
                });
                rec.references[i].push(ReferenceRecord { t: t_log, drone_id: i as u32, p: FlatOutput::sample(&trajs[i], t).p });
            }
        }
    }
    Ok(rec)
}

fn write_text(path: &Path, text: &str) -> Result<(), HarnessError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(text.as_bytes())?;
    f.flush()?;
    Ok(())
}

/// Write one round's logs into `dir`.
pub fn write_round(rec: &RoundRecord, dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir)?;
    for i in 0..2 {
        let f = std::io::BufWriter::new(std::fs::File::create(dir.join(format!("drone{i}.csv")))?);
        write_log(&rec.logs[i], f)?;
        let mut tel = format!("{TELEMETRY_HEADER}\n");
        for r in &rec.telemetry[i] {
            let _ = writeln!(
                tel,
                "{:.6},{:.12e},{:.12e},{:.12e},{:.12e},{},{:.6e},{:.6},{:.12e}",
                r.t, r.fc, r.rates.x, r.rates.y, r.rates.z, r.qp_status, r.kkt, r.solve_ms, r.fd_pred_z_node0
            );
        }
        write_text(&dir.join(format!("telemetry_drone{i}.csv")), &tel)?;
    }
    let mut refs = format!("{REFERENCE_HEADER}\n");
    for i in 0..2 {
        for r in &rec.references[i] {
            let _ = writeln!(refs, "{:.6},{},{:.12e},{:.12e},{:.12e}", r.t, r.drone_id, r.p.x, r.p.y, r.p.z);
        }
    }
    write_text(&dir.join("reference.csv"), &refs)
}

/// Description of a run directory, written as `run.txt`.
#[derive(Clone, Debug, PartialEq)]
pub struct RunInfo {
    pub seed: u64,
    pub rounds: usize,
    pub mode: String,
    pub window: super::Window,
    pub fingerprint: u64,
}

impl RunInfo {
    pub fn to_text(&self) -> String {
        format!(
            "seed {}\nrounds {}\nmode {}\nwindow {} {} {}\nfingerprint {:016x}\n",
            self.seed, self.rounds, self.mode, self.window.x_min, self.window.x_max, self.window.drone, self.fingerprint
        )
    }

    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let bad = |msg: &str| HarnessError::Mismatch(format!("run.txt: {msg}"));
        let mut seed = None;
        let mut rounds = None;
        let mut mode = None;
        let mut window = None;
        let mut fingerprint = None;
        for line in text.lines() {
            let mut it = line.split_whitespace();
            let Some(key) = it.next() else { continue };
            let vals: Vec<&str> = it.collect();
            match (key, vals.as_slice()) {
                ("seed", [v]) => seed = v.parse().ok(),
                ("rounds", [v]) => rounds = v.parse().ok(),
                ("mode", [v]) => mode = Some(v.to_string()),
                ("window", [a, b, d]) => {
                    window = match (a.parse(), b.parse(), d.parse()) {
                        (Ok(x_min), Ok(x_max), Ok(drone)) => Some(super::Window { x_min, x_max, drone }),
                        _ => None,
                    }
                }
                ("fingerprint", [v]) => fingerprint = u64::from_str_radix(v, 16).ok(),
                _ => return Err(bad(&format!("unexpected line `{line}`"))),
            }
        }
        Ok(Self {
            seed: seed.ok_or_else(|| bad("missing seed"))?,
            rounds: rounds.ok_or_else(|| bad("missing rounds"))?,
            mode: mode.ok_or_else(|| bad("missing mode"))?,
            window: window.ok_or_else(|| bad("missing window"))?,
            fingerprint: fingerprint.ok_or_else(|| bad("missing fingerprint"))?,
        })
    }
}

/// Summary of a multi-round run.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub rounds: Vec<RunMetrics>,
    pub mean: RunMetrics,
}

/// Fly `cfg.run.rounds` rounds with seeds `seed, seed + 1, …`, writing
/// `round{r}/` subdirectories, `metrics.csv` and `run.txt` under `out_dir`.
pub fn run_closed_loop(
    cfg: &ScenarioConfig,
    model: Option<&MlpModel>,
    out_dir: &Path,
    seed: u64,
) -> Result<RunSummary, HarnessError> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let info = RunInfo {
        seed,
        rounds: cfg.run.rounds,
        mode: if model.is_some() { "ndp".into() } else { "baseline".into() },
        window: cfg.window,
        fingerprint: cfg.fingerprint(),
    };
    write_text(&out_dir.join("run.txt"), &info.to_text())?;
    let mut rounds = Vec::new();
    for r in 0..cfg.run.rounds {
        let round_seed = seed.wrapping_add(r as u64);
        let rec = fly_round(cfg, model, round_seed)?;
        let dir = out_dir.join(format!("round{r}"));
        write_round(&rec, &dir)?;
        if let Some((t, drone)) = rec.diverged {
            return Err(HarnessError::Divergence { t, drone });
        }
        let d = cfg.window.drone as usize;
        let m = metrics_from_records(&rec.logs[d], &rec.references[d], &rec.telemetry[d], &cfg.window, &cfg.params)?;
        write_metrics_csv(&[(round_seed, m.clone())], &dir.join("metrics.csv"))?;
        rounds.push(m);
    }
    let mean = RunMetrics::mean(&rounds);
    let rows: Vec<(u64, RunMetrics)> = rounds.iter().enumerate().map(|(r, m)| (seed.wrapping_add(r as u64), m.clone())).collect();
    write_metrics_csv(&rows, &out_dir.join("metrics.csv"))?;
    Ok(RunSummary { rounds, mean })
}
