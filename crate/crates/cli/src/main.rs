use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ndp_core::data::{collect_scenario, read_dataset, split_shuffle, write_dataset, write_log};
use ndp_core::harness::{compare_runs, run_closed_loop, HarnessError, ScenarioConfig};
use ndp_core::predictor::{
    grid_map, load_model, mse, save_model, train, write_grid_csv, MlpModel, SnMode, TrainConfig, DEFAULT_HIDDEN,
};
use ndp_core::quad::QuadParams;
use ndp_core::trajectory::{allocate_times, min_snap, read_waypoints, write_trajectory_csv};

#[derive(Parser)]
#[command(name = "ndp", version, about = "Downwash-aware two-quadrotor simulation, training and control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the data-collection flight and write the training dataset.
    /// The raw flight log goes next to it as `<stem>_log.csv`.
    SimCollect {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
    },
    /// Train the downwash predictor on a dataset (75/25 train/test split).
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Per-layer spectral norm target; `inf` trains without normalization.
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        epochs: usize,
        #[arg(long)]
        lr: f64,
        #[arg(long)]
        sn_mode: SnMode,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
    },
    /// Predicted vertical force on a horizontal grid at one relative height.
    PredictMap {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        height: f64,
        #[arg(long, default_value_t = 1.0)]
        extent: f64,
        #[arg(long, default_value_t = 21)]
        res: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Minimum-snap trajectory through a waypoint file, sampled every `dt`.
    Traj {
        #[arg(long)]
        waypoints: PathBuf,
        #[arg(long)]
        v_avg: f64,
        #[arg(long)]
        dt: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fly the two-vehicle scenario for the configured number of rounds.
    Fly {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, conflicts_with = "baseline")]
        model: Option<PathBuf>,
        #[arg(long)]
        baseline: bool,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
    },
    /// Compare a baseline run directory with a predictor run directory.
    Report {
        #[arg(long)]
        baseline: PathBuf,
        #[arg(long)]
        ndp: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn log_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset");
    out.with_file_name(format!("{stem}_log.csv"))
}

fn create(path: &Path) -> Result<BufWriter<File>, HarnessError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn run(cmd: Command) -> Result<(), HarnessError> {
    match cmd {
        Command::SimCollect { config, out, seed } => {
            let cfg = ScenarioConfig::load(&config)?;
            let collection = collect_scenario(&cfg, seed)?;
            let mut w = create(&out)?;
            write_dataset(&collection.samples, &mut w)?;
            w.flush()?;
            let mut w = create(&log_path(&out))?;
            write_log(&collection.log, &mut w)?;
            w.flush()?;
            println!("samples {}", collection.samples.len());
            println!("gaps {}", collection.gaps);
        }
        Command::Train { data, gamma, epochs, lr, sn_mode, out, seed } => {
            let samples = read_dataset(&data)?;
            let (train_set, test_set) = split_shuffle(&samples, 0.75, seed)?;
            let cfg = TrainConfig { epochs, learning_rate: lr, gamma, sn_mode, seed, ..TrainConfig::default() };
            let (model, report) = train(MlpModel::init(&DEFAULT_HIDDEN, seed), &train_set, &cfg)?;
            save_model(&model, &out)?;
            println!("train_mse {:.6e}", report.final_train_mse);
            println!("test_mse {:.6e}", mse(&model, &test_set));
            println!("lipschitz_bound {:.6}", model.lipschitz_upper_bound());
        }
        Command::PredictMap { model, height, extent, res, out } => {
            let model = load_model(&model)?;
            let grid = grid_map(&model, height, &nalgebra::Vector3::zeros(), extent, res)?;
            let mut w = create(&out)?;
            write_grid_csv(&grid, extent, &mut w)?;
            w.flush()?;
        }
        Command::Traj { waypoints, v_avg, dt, out } => {
            let wps = read_waypoints(&waypoints)?;
            let traj = min_snap(&wps, &allocate_times(&wps, v_avg)?)?;
            let mut w = create(&out)?;
            write_trajectory_csv(&traj, dt, &mut w)?;
            w.flush()?;
        }
        Command::Fly { scenario, model, baseline, out, seed } => {
            let mut cfg = ScenarioConfig::load(&scenario)?;
            if baseline {
                cfg.predictor.model = None;
                cfg.predictor.baseline = true;
            } else if let Some(path) = model {
                cfg.predictor.model = Some(path);
                cfg.predictor.baseline = false;
            }
            let model = match (&cfg.predictor.model, cfg.predictor.baseline) {
                (Some(path), false) => Some(load_model(path)?),
                (None, false) => {
                    return Err(HarnessError::Config { line: 0, msg: "no model given; pass --model or --baseline".into() })
                }
                (_, true) => None,
            };
            let summary = run_closed_loop(&cfg, model.as_ref(), &out, seed)?;
            let m = &summary.mean;
            println!("window_rmse {:.6e} {:.6e} {:.6e}", m.rmse_window[0], m.rmse_window[1], m.rmse_window[2]);
            println!("rmse {:.6e} {:.6e} {:.6e}", m.rmse[0], m.rmse[1], m.rmse[2]);
            println!("mean_solve_ms {:.3}", m.mean_solve_ms);
        }
        Command::Report { baseline, ndp, out } => {
            let cmp = compare_runs(&baseline, &ndp, &out, &QuadParams::identified())?;
            println!(
                "window_z_rmse baseline {:.6e} ndp {:.6e} reduction_pct {:.2}",
                cmp.baseline.rmse_window[2], cmp.ndp.rmse_window[2], cmp.window_reduction_pct[2]
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
