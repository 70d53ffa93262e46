//! Scenario files: one `section.key = value` per line, `#` starts a comment.
//! Every key has a default; unknown or repeated keys are errors.

use std::path::{Path, PathBuf};

use crate::downwash::DownwashParams;
use crate::nmpc::{InputReference, NeighborMode, OcpConfig};
use crate::quad::QuadParams;
use crate::trajectory::Waypoint;

use super::HarnessError;

#[derive(Clone, Debug, PartialEq)]
pub struct SimSettings {
    /// Plant integration step, s.
    pub dt: f64,
    /// Flight duration, s.
    pub duration: f64,
    pub control_rate: f64,
    pub log_rate: f64,
    /// Inner body-rate loop gain, 1/s.
    pub rate_gain: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DroneSettings {
    pub waypoints: Vec<Waypoint>,
    pub v_avg: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictorSettings {
    pub model: Option<PathBuf>,
    pub baseline: bool,
    pub neighbor_mode: NeighborMode,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSettings {
    /// Standard deviation of position feedback noise, m.
    pub position: f64,
    /// Standard deviation of velocity feedback noise, m/s.
    pub velocity: f64,
    /// Standard deviation of the initial position offset, m.
    pub initial_jitter: f64,
}

/// Reference-x interval over which the downwash metrics are taken.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Window {
    pub x_min: f64,
    pub x_max: f64,
    /// Vehicle whose tracking is scored.
    pub drone: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSettings {
    pub rounds: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CollectSettings {
    /// Logged flight time, s.
    pub duration: f64,
    /// Leading window with the neighbor far away, used for bias removal, s.
    pub hover_duration: f64,
    pub warmup: f64,
    /// Hover point of the lower vehicle.
    pub lower: [f64; 3],
    /// Half width of the square swept by the upper vehicle, m.
    pub sweep_half_width: f64,
    pub separation_min: f64,
    pub separation_max: f64,
    pub speed_min: f64,
    pub speed_max: f64,
    /// Horizontal shift of the whole sweep, m; a few metres removes overlap.
    pub lateral_offset: f64,
    /// Distance of the parking spot used during the hover window, m.
    pub park_distance: f64,
    pub tau_f: f64,
    /// Constant extra force on the lower vehicle, N.
    pub injected_force: [f64; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThrottleSettings {
    /// Route thrust through normalized throttle with a hover-throttle filter.
    pub enabled: bool,
    pub hover_true: f64,
    pub hover_init: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub sim: SimSettings,
    /// Index 0 is the lower vehicle, index 1 the upper.
    pub drones: [DroneSettings; 2],
    pub downwash: DownwashParams,
    pub nmpc: OcpConfig,
    pub predictor: PredictorSettings,
    pub noise: NoiseSettings,
    pub window: Window,
    pub run: RunSettings,
    pub collect: CollectSettings,
    pub throttle: ThrottleSettings,
    pub params: QuadParams,
}

fn back_and_forth(axis: usize, z: f64, half: f64, legs: usize) -> Vec<Waypoint> {
    (0..=legs)
        .map(|k| {
            let s = if k % 2 == 0 { -half } else { half };
            let mut p = [0.0, 0.0, z];
            p[axis] = s;
            Waypoint::new(p[0], p[1], p[2], 0.0)
        })
        .collect()
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let params = QuadParams::identified();
        Self {
            sim: SimSettings { dt: 1.0 / 600.0, duration: 32.0, control_rate: 60.0, log_rate: 100.0, rate_gain: 20.0 },
            drones: [
                DroneSettings { waypoints: back_and_forth(0, 1.0, 1.5, 4), v_avg: 0.4 },
                DroneSettings { waypoints: back_and_forth(1, 1.6, 1.5, 4), v_avg: 0.4 },
            ],
            downwash: DownwashParams::default(),
            nmpc: OcpConfig::for_params(&params),
            predictor: PredictorSettings {
                model: None,
                baseline: true,
                neighbor_mode: NeighborMode::Predicted,
            },
            noise: NoiseSettings { position: 0.001, velocity: 0.005, initial_jitter: 0.01 },
            window: Window { x_min: -0.4, x_max: 0.4, drone: 0 },
            run: RunSettings { rounds: 3, seed: 1 },
            collect: CollectSettings {
                duration: 570.0,
                hover_duration: 5.0,
                warmup: 1.0,
                lower: [0.0, 0.0, 1.0],
                sweep_half_width: 1.0,
                separation_min: 0.3,
                separation_max: 1.0,
                speed_min: 0.3,
                speed_max: 0.8,
                lateral_offset: 0.0,
                park_distance: 3.0,
                tau_f: 0.05,
                injected_force: [0.0; 3],
            },
            throttle: ThrottleSettings { enabled: false, hover_true: 0.5, hover_init: 0.5 },
            params,
        }
    }
}

/// Keys accepted in scenario files, for documentation and error messages.
pub const KEYS: &[&str] = &[
    "sim.dt",
    "sim.duration",
    "sim.control_rate",
    "sim.log_rate",
    "sim.rate_gain",
    "lower.waypoints",
    "lower.v_avg",
    "upper.waypoints",
    "upper.v_avg",
    "downwash.A",
    "downwash.sigma_r",
    "downwash.z0",
    "downwash.z_cut",
    "downwash.v_adv",
    "nmpc.horizon",
    "nmpc.dt_shoot",
    "nmpc.q_pos_xy",
    "nmpc.q_pos_z",
    "nmpc.q_vel",
    "nmpc.q_att",
    "nmpc.r_rate",
    "nmpc.r_thrust",
    "nmpc.terminal_scale",
    "nmpc.rate_limit",
    "nmpc.damping",
    "nmpc.input_reference",
    "predictor.model",
    "predictor.baseline",
    "predictor.neighbor_mode",
    "noise.position",
    "noise.velocity",
    "noise.initial_jitter",
    "window.x_min",
    "window.x_max",
    "window.drone",
    "run.rounds",
    "run.seed",
    "collect.duration",
    "collect.hover_duration",
    "collect.warmup",
    "collect.lower",
    "collect.sweep_half_width",
    "collect.separation_min",
    "collect.separation_max",
    "collect.speed_min",
    "collect.speed_max",
    "collect.lateral_offset",
    "collect.park_distance",
    "collect.tau_f",
    "collect.injected_force",
    "throttle.enabled",
    "throttle.hover_true",
    "throttle.hover_init",
];

fn config_err(line: usize, msg: impl Into<String>) -> HarnessError {
    HarnessError::Config { line, msg: msg.into() }
}

fn parse_num<T: std::str::FromStr>(v: &str, line: usize, key: &str) -> Result<T, HarnessError> {
    v.parse().map_err(|_| config_err(line, format!("`{key}`: cannot parse `{v}`")))
}

fn parse_f64(v: &str, line: usize, key: &str) -> Result<f64, HarnessError> {
    let x: f64 = parse_num(v, line, key)?;
    if !x.is_finite() {
        return Err(config_err(line, format!("`{key}` must be finite")));
    }
    Ok(x)
}

fn parse_bool(v: &str, line: usize, key: &str) -> Result<bool, HarnessError> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(config_err(line, format!("`{key}` expects true or false, got `{v}`"))),
    }
}

fn parse_vec3(v: &str, line: usize, key: &str) -> Result<[f64; 3], HarnessError> {
    let parts: Vec<&str> = v.split_whitespace().collect();
    let [a, b, c] = parts[..] else {
        return Err(config_err(line, format!("`{key}` expects three numbers")));
    };
    Ok([parse_f64(a, line, key)?, parse_f64(b, line, key)?, parse_f64(c, line, key)?])
}

/// `x y z psi; x y z psi; ...`
fn parse_waypoints(v: &str, line: usize, key: &str) -> Result<Vec<Waypoint>, HarnessError> {
    v.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|wp| {
            let nums: Vec<&str> = wp.split_whitespace().collect();
            let [x, y, z, psi] = nums[..] else {
                return Err(config_err(line, format!("`{key}`: waypoint `{wp}` needs x y z psi")));
            };
            Ok(Waypoint::new(
                parse_f64(x, line, key)?,
                parse_f64(y, line, key)?,
                parse_f64(z, line, key)?,
                parse_f64(psi, line, key)?,
            ))
        })
        .collect()
}

impl ScenarioConfig {
    /// Parse scenario text; relative model paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: Option<&Path>) -> Result<Self, HarnessError> {
        let mut cfg = Self::default();
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| config_err(line, format!("expected `section.key = value`, got `{content}`")))?;
            if !KEYS.contains(&key) {
                return Err(config_err(line, format!("unknown key `{key}`")));
            }
            if !seen.insert(key.to_string()) {
                return Err(config_err(line, format!("duplicate key `{key}`")));
            }
            cfg.assign(key, value, line, base_dir)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config { line: 0, msg: format!("{}: {e}", path.display()) })?;
        Self::parse(&text, path.parent())
    }

    fn assign(&mut self, key: &str, v: &str, line: usize, base_dir: Option<&Path>) -> Result<(), HarnessError> {
        let f = |v: &str| parse_f64(v, line, key);
        match key {
            "sim.dt" => self.sim.dt = f(v)?,
            "sim.duration" => self.sim.duration = f(v)?,
            "sim.control_rate" => self.sim.control_rate = f(v)?,
            "sim.log_rate" => self.sim.log_rate = f(v)?,
            "sim.rate_gain" => self.sim.rate_gain = f(v)?,
            "lower.waypoints" => self.drones[0].waypoints = parse_waypoints(v, line, key)?,
            "lower.v_avg" => self.drones[0].v_avg = f(v)?,
            "upper.waypoints" => self.drones[1].waypoints = parse_waypoints(v, line, key)?,
            "upper.v_avg" => self.drones[1].v_avg = f(v)?,
            "downwash.A" => self.downwash.peak_force = f(v)?,
            "downwash.sigma_r" => self.downwash.sigma_r = f(v)?,
            "downwash.z0" => self.downwash.z_peak = f(v)?,
            "downwash.z_cut" => self.downwash.z_cut = f(v)?,
            "downwash.v_adv" => self.downwash.v_adv = f(v)?,
            "nmpc.horizon" => self.nmpc.horizon = parse_num(v, line, key)?,
            "nmpc.dt_shoot" => self.nmpc.dt_shoot = f(v)?,
            "nmpc.q_pos_xy" => self.nmpc.q_pos_xy = f(v)?,
            "nmpc.q_pos_z" => self.nmpc.q_pos_z = f(v)?,
            "nmpc.q_vel" => self.nmpc.q_vel = f(v)?,
            "nmpc.q_att" => self.nmpc.q_att = f(v)?,
            "nmpc.r_rate" => self.nmpc.r_rate = f(v)?,
            "nmpc.r_thrust" => self.nmpc.r_thrust = f(v)?,
            "nmpc.terminal_scale" => self.nmpc.terminal_scale = f(v)?,
            "nmpc.rate_limit" => self.nmpc.rate_limit = f(v)?,
            "nmpc.damping" => self.nmpc.damping = f(v)?,
            "nmpc.input_reference" => {
                self.nmpc.input_reference = match v {
                    "hover" => InputReference::Hover,
                    "feedforward" => InputReference::Feedforward,
                    _ => return Err(config_err(line, format!("`{key}` expects hover or feedforward, got `{v}`"))),
                }
            }
            "predictor.model" => {
                let p = PathBuf::from(v);
                self.predictor.model = Some(match base_dir {
                    Some(dir) if p.is_relative() => dir.join(p),
                    _ => p,
                });
                self.predictor.baseline = false;
            }
            "predictor.baseline" => self.predictor.baseline = parse_bool(v, line, key)?,
            "predictor.neighbor_mode" => {
                self.predictor.neighbor_mode = v.parse().map_err(|e: String| config_err(line, e))?
            }
            "noise.position" => self.noise.position = f(v)?,
            "noise.velocity" => self.noise.velocity = f(v)?,
            "noise.initial_jitter" => self.noise.initial_jitter = f(v)?,
            "window.x_min" => self.window.x_min = f(v)?,
            "window.x_max" => self.window.x_max = f(v)?,
            "window.drone" => self.window.drone = parse_num(v, line, key)?,
            "run.rounds" => self.run.rounds = parse_num(v, line, key)?,
            "run.seed" => self.run.seed = parse_num(v, line, key)?,
            "collect.duration" => self.collect.duration = f(v)?,
            "collect.hover_duration" => self.collect.hover_duration = f(v)?,
            "collect.warmup" => self.collect.warmup = f(v)?,
            "collect.lower" => self.collect.lower = parse_vec3(v, line, key)?,
            "collect.sweep_half_width" => self.collect.sweep_half_width = f(v)?,
            "collect.separation_min" => self.collect.separation_min = f(v)?,
            "collect.separation_max" => self.collect.separation_max = f(v)?,
            "collect.speed_min" => self.collect.speed_min = f(v)?,
            "collect.speed_max" => self.collect.speed_max = f(v)?,
            "collect.lateral_offset" => self.collect.lateral_offset = f(v)?,
            "collect.park_distance" => self.collect.park_distance = f(v)?,
            "collect.tau_f" => self.collect.tau_f = f(v)?,
            "collect.injected_force" => self.collect.injected_force = parse_vec3(v, line, key)?,
            "throttle.enabled" => self.throttle.enabled = parse_bool(v, line, key)?,
            "throttle.hover_true" => self.throttle.hover_true = f(v)?,
            "throttle.hover_init" => self.throttle.hover_init = f(v)?,
            _ => return Err(config_err(line, format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Hash of everything that shapes a flight apart from the predictor, so
    /// runs can be checked for comparability.
    pub fn fingerprint(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let text = format!(
            "{:?}|{:?}|{:?}|{:?}|{:?}|{:?}|{}|{:?}|{:?}",
            self.sim, self.drones, self.downwash, self.nmpc, self.noise, self.window, self.run.rounds, self.throttle,
            self.predictor.neighbor_mode
        );
        let mut h = std::collections::hash_map::DefaultHasher::new();
        text.hash(&mut h);
        h.finish()
    }

    /// Substeps per control period and per log sample.
    pub fn substeps(&self) -> Result<(usize, usize), HarnessError> {
        let ratio = |rate: f64, name: &str| -> Result<usize, HarnessError> {
            let r = 1.0 / (self.sim.dt * rate);
            let n = r.round();
            if n < 1.0 || (r - n).abs() > 1e-6 {
                return Err(config_err(0, format!("sim.dt must divide the {name} period evenly")));
            }
            Ok(n as usize)
        };
        Ok((ratio(self.sim.control_rate, "control")?, ratio(self.sim.log_rate, "log")?))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let positive = |name: &str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(config_err(0, format!("`{name}` must be positive, got {x}")))
            }
        };
        positive("sim.dt", self.sim.dt)?;
        positive("sim.duration", self.sim.duration)?;
        positive("sim.control_rate", self.sim.control_rate)?;
        positive("sim.log_rate", self.sim.log_rate)?;
        positive("sim.rate_gain", self.sim.rate_gain)?;
        if self.sim.dt > 1.0 / self.sim.control_rate {
            return Err(config_err(0, "sim.dt exceeds the control period"));
        }
        self.substeps()?;
        for (name, d) in ["lower", "upper"].iter().zip(&self.drones) {
            if d.waypoints.len() < 2 {
                return Err(config_err(0, format!("`{name}.waypoints` needs at least two waypoints")));
            }
            positive(&format!("{name}.v_avg"), d.v_avg)?;
        }
        self.downwash.validate().map_err(|e| config_err(0, e.to_string()))?;
        self.nmpc.validate().map_err(|e| config_err(0, e.to_string()))?;
        for (name, x) in [
            ("noise.position", self.noise.position),
            ("noise.velocity", self.noise.velocity),
            ("noise.initial_jitter", self.noise.initial_jitter),
        ] {
            if !(x >= 0.0) {
                return Err(config_err(0, format!("`{name}` must be non-negative")));
            }
        }
        if !(self.window.x_min < self.window.x_max) || self.window.drone > 1 {
            return Err(config_err(0, "window needs x_min < x_max and drone 0 or 1"));
        }
        if self.run.rounds == 0 {
            return Err(config_err(0, "`run.rounds` must be at least 1"));
        }
        let c = &self.collect;
        positive("collect.duration", c.duration)?;
        positive("collect.tau_f", c.tau_f)?;
        positive("collect.sweep_half_width", c.sweep_half_width)?;
        if !(c.hover_duration > 0.0 && c.hover_duration < c.duration) {
            return Err(config_err(0, "`collect.hover_duration` must lie in (0, collect.duration)"));
        }
        if !(c.warmup >= 0.0) {
            return Err(config_err(0, "`collect.warmup` must be non-negative"));
        }
        if !(c.separation_min > 0.0 && c.separation_min <= c.separation_max) {
            return Err(config_err(0, "collect separations must satisfy 0 < min <= max"));
        }
        if !(c.speed_min > 0.0 && c.speed_min <= c.speed_max) {
            return Err(config_err(0, "collect speeds must satisfy 0 < min <= max"));
        }
        if !(c.park_distance > 0.0) {
            return Err(config_err(0, "`collect.park_distance` must be positive"));
        }
        let t = &self.throttle;
        if !(t.hover_true > 0.0 && t.hover_true < 1.0 && t.hover_init > 0.0 && t.hover_init < 1.0) {
            return Err(config_err(0, "hover throttles must lie in (0, 1)"));
        }
        Ok(())
    }
}
