//! Baseline-versus-predictor comparison: RMSE table and a z-versus-x plot
//! averaged over rounds with a min/max band.

use std::fmt::Write as _;
use std::path::Path;

use super::metrics::{compute_metrics, read_references, RunMetrics};
use super::runner::RunInfo;
use super::HarnessError;
use crate::data::read_log;
use crate::quad::QuadParams;

#[derive(Clone, Debug)]
pub struct Comparison {
    pub baseline: RunMetrics,
    pub ndp: RunMetrics,
    /// `100·(1 − ndp/baseline)` of the window RMSE per axis.
    pub window_reduction_pct: [f64; 3],
    pub full_reduction_pct: [f64; 3],
}

pub fn reduction_pct(baseline: f64, ndp: f64) -> f64 {
    if baseline == 0.0 {
        0.0
    } else {
        100.0 * (1.0 - ndp / baseline)
    }
}

/// Round-averaged curve of one run: mean x, and mean/min/max z per log row.
struct Curve {
    x: Vec<f64>,
    z_mean: Vec<f64>,
    z_min: Vec<f64>,
    z_max: Vec<f64>,
    z_ref: Vec<(f64, f64)>,
}

fn load_curve(dir: &Path, info: &RunInfo) -> Result<Curve, HarnessError> {
    let d = info.window.drone;
    let mut rounds = Vec::new();
    for r in 0..info.rounds {
        rounds.push(read_log(&dir.join(format!("round{r}")).join(format!("drone{d}.csv")))?);
    }
    let len = rounds.iter().map(Vec::len).min().unwrap_or(0);
    let n = rounds.len() as f64;
    let mut c = Curve { x: Vec::new(), z_mean: Vec::new(), z_min: Vec::new(), z_max: Vec::new(), z_ref: Vec::new() };
    for k in 0..len {
        c.x.push(rounds.iter().map(|l| l[k].p.x).sum::<f64>() / n);
        c.z_mean.push(rounds.iter().map(|l| l[k].p.z).sum::<f64>() / n);
        c.z_min.push(rounds.iter().map(|l| l[k].p.z).fold(f64::INFINITY, f64::min));
        c.z_max.push(rounds.iter().map(|l| l[k].p.z).fold(f64::NEG_INFINITY, f64::max));
    }
    c.z_ref = read_references(&dir.join("round0").join("reference.csv"))?
        .into_iter()
        .filter(|r| r.drone_id == d)
        .map(|r| (r.p.x, r.p.z))
        .collect();
    Ok(c)
}

fn svg(base: &Curve, ndp: &Curve, info: &RunInfo) -> String {
    let (w, h, margin) = (800.0, 450.0, 60.0);
    let xs = base.x.iter().chain(&ndp.x).chain(base.z_ref.iter().map(|(x, _)| x));
    let (x_lo, x_hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let zs = base.z_min.iter().chain(&base.z_max).chain(&ndp.z_min).chain(&ndp.z_max).chain(base.z_ref.iter().map(|(_, z)| z));
    let (mut z_lo, mut z_hi) = zs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &z| (a.min(z), b.max(z)));
    if !(z_hi > z_lo) {
        z_lo -= 0.1;
        z_hi += 0.1;
    }
    let pad = 0.1 * (z_hi - z_lo);
    let (z_lo, z_hi) = (z_lo - pad, z_hi + pad);
    let x_span = if x_hi > x_lo { x_hi - x_lo } else { 1.0 };
    let sx = |x: f64| margin + (x - x_lo) / x_span * (w - 2.0 * margin);
    let sz = |z: f64| h - margin - (z - z_lo) / (z_hi - z_lo) * (h - 2.0 * margin);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (wx0, wx1) = (sx(info.window.x_min.max(x_lo)), sx(info.window.x_max.min(x_hi)));
    let _ = writeln!(
        s,
        r##"<rect x="{wx0:.2}" y="{margin}" width="{:.2}" height="{:.2}" fill="#cccccc" fill-opacity="0.4"/>"##,
        (wx1 - wx0).max(0.0),
        h - 2.0 * margin
    );
    for (curve, color) in [(base, "#d62728"), (ndp, "#1f77b4")] {
        let mut band = String::new();
        for k in 0..curve.x.len() {
            let _ = write!(band, "{:.2},{:.2} ", sx(curve.x[k]), sz(curve.z_max[k]));
        }
        for k in (0..curve.x.len()).rev() {
            let _ = write!(band, "{:.2},{:.2} ", sx(curve.x[k]), sz(curve.z_min[k]));
        }
        let _ = writeln!(s, r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, band.trim_end());
        let line: Vec<String> = (0..curve.x.len()).map(|k| format!("{:.2},{:.2}", sx(curve.x[k]), sz(curve.z_mean[k]))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, line.join(" "));
    }
    let reference: Vec<String> = base.z_ref.iter().map(|(x, z)| format!("{:.2},{:.2}", sx(*x), sz(*z))).collect();
    let _ = writeln!(
        s,
        r#"<polyline points="{}" fill="none" stroke="black" stroke-dasharray="6,4" stroke-width="1"/>"#,
        reference.join(" ")
    );
    let _ = writeln!(s, r#"<line x1="{margin}" y1="{0}" x2="{1}" y2="{0}" stroke="black"/>"#, h - margin, w - margin);
    let _ = writeln!(s, r#"<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{}" stroke="black"/>"#, h - margin);
    let text = |s: &mut String, x: f64, y: f64, anchor: &str, label: &str| {
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{y:.2}" font-family="sans-serif" font-size="12" text-anchor="{anchor}">{label}</text>"#);
    };
    text(&mut s, margin, h - margin + 18.0, "middle", &format!("{x_lo:.2}"));
    text(&mut s, w - margin, h - margin + 18.0, "middle", &format!("{x_hi:.2}"));
    text(&mut s, w / 2.0, h - 15.0, "middle", "x [m]");
    text(&mut s, margin - 6.0, h - margin, "end", &format!("{z_lo:.3}"));
    text(&mut s, margin - 6.0, margin + 4.0, "end", &format!("{z_hi:.3}"));
    text(&mut s, 15.0, h / 2.0, "middle", "z [m]");
    text(&mut s, w - margin, 20.0, "end", "baseline (red), predictor (blue), reference (dashed)");
    s.push_str("</svg>\n");
    s
}

fn read_info(dir: &Path) -> Result<RunInfo, HarnessError> {
    let path = dir.join("run.txt");
    let text = std::fs::read_to_string(&path).map_err(|e| HarnessError::Mismatch(format!("{}: {e}", path.display())))?;
    RunInfo::parse(&text)
}

/// Compare two run directories flown on the same scenario and seeds;
/// writes `report.csv` and `z_vs_x.svg` into `out_dir`.
pub fn compare_runs(baseline_dir: &Path, ndp_dir: &Path, out_dir: &Path, params: &QuadParams) -> Result<Comparison, HarnessError> {
    let bi = read_info(baseline_dir)?;
    let ni = read_info(ndp_dir)?;
    if bi.fingerprint != ni.fingerprint || bi.seed != ni.seed || bi.rounds != ni.rounds || bi.window != ni.window {
        return Err(HarnessError::Mismatch("runs differ in scenario, seed, rounds or window".into()));
    }
    let per_round = |dir: &Path| -> Result<Vec<RunMetrics>, HarnessError> {
        (0..bi.rounds).map(|r| compute_metrics(&dir.join(format!("round{r}")), &bi.window, params)).collect()
    };
    let baseline = RunMetrics::mean(&per_round(baseline_dir)?);
    let ndp = RunMetrics::mean(&per_round(ndp_dir)?);
    let window_reduction_pct = std::array::from_fn(|a| reduction_pct(baseline.rmse_window[a], ndp.rmse_window[a]));
    let full_reduction_pct = std::array::from_fn(|a| reduction_pct(baseline.rmse[a], ndp.rmse[a]));

    std::fs::create_dir_all(out_dir)?;
    let mut csv = String::from("metric,axis,baseline,ndp,reduction_pct\n");
    for (a, axis) in ["x", "y", "z"].iter().enumerate() {
        let _ = writeln!(
            csv,
            "window_rmse,{axis},{:.9e},{:.9e},{:.3}",
            baseline.rmse_window[a], ndp.rmse_window[a], window_reduction_pct[a]
        );
    }
    for (a, axis) in ["x", "y", "z"].iter().enumerate() {
        let _ = writeln!(csv, "rmse,{axis},{:.9e},{:.9e},{:.3}", baseline.rmse[a], ndp.rmse[a], full_reduction_pct[a]);
    }
    let _ = writeln!(
        csv,
        "max_abs_z_error,z,{:.9e},{:.9e},{:.3}",
        baseline.max_abs_z_error,
        ndp.max_abs_z_error,
        reduction_pct(baseline.max_abs_z_error, ndp.max_abs_z_error)
    );
    let _ = writeln!(csv, "mean_solve_ms,-,{:.6},{:.6},", baseline.mean_solve_ms, ndp.mean_solve_ms);
    std::fs::write(out_dir.join("report.csv"), csv)?;

    let plot = svg(&load_curve(baseline_dir, &bi)?, &load_curve(ndp_dir, &ni)?, &bi);
    std::fs::write(out_dir.join("z_vs_x.svg"), plot)?;
    Ok(Comparison { baseline, ndp, window_reduction_pct, full_reduction_pct })
}
