//! Line-oriented text model file and grid CSV output.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::{grid_axis, InputNorm, Layer, MlpModel, PredictorError, SnMode, INPUT_DIM};

pub const FORMAT_MAGIC: &str = "NDP-MLP";
pub const FORMAT_VERSION: &str = "1";
const MAX_WIDTH: usize = 1 << 14;

fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_model<W: Write>(model: &MlpModel, mut out: W) -> Result<(), PredictorError> {
    let mut s = String::new();
    let _ = writeln!(s, "{FORMAT_MAGIC} {FORMAT_VERSION}");
    let _ = writeln!(s, "gamma {}", fmt_float(model.gamma));
    let _ = writeln!(s, "sn_mode {}", model.sn_mode.as_str());
    let widths: Vec<String> = model.widths().iter().map(|w| w.to_string()).collect();
    let _ = writeln!(s, "widths {}", widths.join(" "));
    let norm: Vec<String> = model.norm.mean.iter().chain(model.norm.scale.iter()).map(|&x| fmt_float(x)).collect();
    let _ = writeln!(s, "norm {}", norm.join(" "));
    for layer in model.layers() {
        let w = &layer.weight;
        let _ = writeln!(s, "W {} {}", w.nrows(), w.ncols());
        for r in 0..w.nrows() {
            let row: Vec<String> = (0..w.ncols()).map(|c| fmt_float(w[(r, c)])).collect();
            let _ = writeln!(s, "{}", row.join(" "));
        }
        let _ = writeln!(s, "b {}", layer.bias.len());
        let b: Vec<String> = layer.bias.iter().map(|&x| fmt_float(x)).collect();
        let _ = writeln!(s, "{}", b.join(" "));
    }
    out.write_all(s.as_bytes())?;
    Ok(())
}

pub fn save_model(model: &MlpModel, path: &Path) -> Result<(), PredictorError> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_model(model, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<MlpModel, PredictorError> {
    let text = std::fs::read_to_string(path)?;
    parse_model(&text)
}

fn format_err(msg: impl Into<String>) -> PredictorError {
    PredictorError::Format(msg.into())
}

fn parse_f64(tok: &str, what: &str) -> Result<f64, PredictorError> {
    tok.parse::<f64>().map_err(|_| format_err(format!("bad number `{tok}` in {what}")))
}

fn parse_usize(tok: &str, what: &str) -> Result<usize, PredictorError> {
    tok.parse::<usize>().map_err(|_| format_err(format!("bad integer `{tok}` in {what}")))
}

/// Parse a model file. Version `1` and any `1.x` are accepted; files with a
/// minor version may carry extra header keys, which are skipped.
pub fn parse_model(text: &str) -> Result<MlpModel, PredictorError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| format_err("empty file"))?;
    let mut head = header.split_whitespace();
    if head.next() != Some(FORMAT_MAGIC) {
        return Err(format_err("missing NDP-MLP header"));
    }
    let version = head.next().ok_or_else(|| format_err("missing version"))?;
    let minor_ok = match version.split_once('.') {
        None => version == FORMAT_VERSION,
        Some((major, minor)) => major == FORMAT_VERSION && !minor.is_empty() && minor.bytes().all(|b| b.is_ascii_digit()),
    };
    if !minor_ok || head.next().is_some() {
        return Err(PredictorError::Version(version.to_string()));
    }
    let tolerant = version.contains('.');

    let mut gamma = None;
    let mut sn_mode = None;
    let mut widths: Option<Vec<usize>> = None;
    let mut norm = None;
    let mut rest: Vec<&str> = Vec::new();
    for line in lines.by_ref() {
        let mut toks = line.split_whitespace();
        let Some(key) = toks.next() else { continue };
        let vals: Vec<&str> = toks.collect();
        match key {
            "W" => {
                rest.push(key);
                rest.extend(vals);
                break;
            }
            "gamma" => {
                let [g] = vals[..] else { return Err(format_err("gamma takes one value")) };
                gamma = Some(parse_f64(g, "gamma")?);
            }
            "sn_mode" => {
                let [m] = vals[..] else { return Err(format_err("sn_mode takes one value")) };
                sn_mode = Some(m.parse::<SnMode>().map_err(format_err)?);
            }
            "widths" => {
                let w = vals.iter().map(|t| parse_usize(t, "widths")).collect::<Result<Vec<_>, _>>()?;
                if w.len() < 2 || w.iter().any(|&x| x == 0 || x > MAX_WIDTH) {
                    return Err(PredictorError::Shape(format!("widths {w:?}")));
                }
                widths = Some(w);
            }
            "norm" => {
                if vals.len() != 2 * INPUT_DIM {
                    return Err(format_err(format!("norm needs {} values, got {}", 2 * INPUT_DIM, vals.len())));
                }
                let v = vals.iter().map(|t| parse_f64(t, "norm")).collect::<Result<Vec<_>, _>>()?;
                let n = InputNorm {
                    mean: std::array::from_fn(|i| v[i]),
                    scale: std::array::from_fn(|i| v[INPUT_DIM + i]),
                };
                if n.scale.iter().any(|s| !(*s > 0.0 && s.is_finite())) || n.mean.iter().any(|m| !m.is_finite()) {
                    return Err(format_err("norm scales must be positive and finite"));
                }
                norm = Some(n);
            }
            other if tolerant => {
                let _ = other;
            }
            other => return Err(format_err(format!("unknown key `{other}`"))),
        }
    }
    let gamma = gamma.ok_or_else(|| format_err("missing gamma"))?;
    let sn_mode = sn_mode.ok_or_else(|| format_err("missing sn_mode"))?;
    let widths = widths.ok_or_else(|| format_err("missing widths"))?;
    let norm = norm.ok_or_else(|| format_err("missing norm"))?;

    let mut tokens = rest.into_iter().chain(lines.flat_map(str::split_whitespace));
    let mut next = |what: &str| tokens.next().ok_or_else(|| format_err(format!("truncated file in {what}")));
    let mut layers = Vec::with_capacity(widths.len() - 1);
    for (i, pair) in widths.windows(2).enumerate() {
        let what = format!("layer {i}");
        if next(&what)? != "W" {
            return Err(format_err(format!("expected W for {what}")));
        }
        let rows = parse_usize(next(&what)?, &what)?;
        let cols = parse_usize(next(&what)?, &what)?;
        if rows != pair[1] || cols != pair[0] {
            return Err(PredictorError::Shape(format!("{what}: W {rows}x{cols}, widths say {}x{}", pair[1], pair[0])));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            data.push(parse_f64(next(&what)?, &what)?);
        }
        let weight = DMatrix::from_row_slice(rows, cols, &data);
        if next(&what)? != "b" {
            return Err(format_err(format!("expected b for {what}")));
        }
        let len = parse_usize(next(&what)?, &what)?;
        if len != rows {
            return Err(PredictorError::Shape(format!("{what}: bias length {len}, expected {rows}")));
        }
        let mut bias = Vec::with_capacity(len);
        for _ in 0..len {
            bias.push(parse_f64(next(&what)?, &what)?);
        }
        layers.push(Layer { weight, bias: DVector::from_vec(bias) });
    }
    if let Ok(extra) = next("end") {
        return Err(format_err(format!("trailing data `{extra}`")));
    }
    if widths[0] != INPUT_DIM {
        return Err(PredictorError::Shape(format!("input width {}", widths[0])));
    }
    if layers.iter().flat_map(|l| l.weight.iter().chain(l.bias.iter())).any(|x| !x.is_finite()) {
        return Err(format_err("non-finite parameter"));
    }
    MlpModel::from_layers(layers, gamma, sn_mode, norm)
}

/// Grid as CSV: header `y\x` then the x coordinates, each row led by its y.
pub fn write_grid_csv<W: Write>(grid: &DMatrix<f64>, extent: f64, mut out: W) -> Result<(), PredictorError> {
    let axis = grid_axis(extent, grid.ncols());
    let mut s = String::from("y\\x");
    for x in &axis {
        let _ = write!(s, ",{x:.6}");
    }
    s.push('\n');
    let y_axis = grid_axis(extent, grid.nrows());
    for (i, y) in y_axis.iter().enumerate() {
        let _ = write!(s, "{y:.6}");
        for j in 0..grid.ncols() {
            let _ = write!(s, ",{:.12e}", grid[(i, j)]);
        }
        s.push('\n');
    }
    out.write_all(s.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::{model_input, DEFAULT_HIDDEN};
    use nalgebra::Vector3;

    fn sample_model() -> MlpModel {
        let mut m = MlpModel::init(&DEFAULT_HIDDEN, 11);
        m.norm = InputNorm { mean: [0.1, -0.2, 0.5, 0.0, 0.01, -0.03], scale: [0.4, 0.5, 0.3, 0.2, 0.25, 0.1] };
        m.apply_spectral_normalization(4.0, SnMode::Clip);
        m
    }

    fn to_text(m: &MlpModel) -> String {
        let mut buf = Vec::new();
        write_model(m, &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = sample_model();
        let back = parse_model(&to_text(&m)).unwrap();
        assert_eq!(back, m);
        let x = model_input(&Vector3::new(0.1, 0.2, 0.6), &Vector3::new(0.0, 0.3, 0.0));
        assert_eq!(back.forward(&x).map(f64::to_bits), m.forward(&x).map(f64::to_bits));
    }

    #[test]
    fn unnormalized_gamma_round_trips() {
        let m = MlpModel::init(&[4], 0);
        let text = to_text(&m);
        assert!(text.contains("gamma inf"));
        assert!(parse_model(&text).unwrap().gamma.is_infinite());
    }

    #[test]
    fn truncation_is_an_error_at_every_cut() {
        let text = to_text(&MlpModel::init(&[3], 1));
        // A cut inside the final number still leaves a valid number.
        let last = text.trim_end().rfind(' ').unwrap();
        for cut in (0..=last).step_by(7) {
            let r = parse_model(&text[..cut]);
            assert!(r.is_err(), "cut at {cut} parsed");
        }
    }

    #[test]
    fn minor_versions_and_unknown_keys() {
        let text = to_text(&sample_model());
        let newer = text.replacen("NDP-MLP 1", "NDP-MLP 1.3\ncompression none", 1);
        assert_eq!(parse_model(&newer).unwrap(), sample_model());
        let strict = text.replacen("NDP-MLP 1", "NDP-MLP 1\ncompression none", 1);
        assert!(matches!(parse_model(&strict), Err(PredictorError::Format(_))));
        let future = text.replacen("NDP-MLP 1", "NDP-MLP 2", 1);
        assert!(matches!(parse_model(&future), Err(PredictorError::Version(_))));
        let bad_magic = text.replacen("NDP-MLP", "XYZ", 1);
        assert!(parse_model(&bad_magic).is_err());
    }

    #[test]
    fn shape_inconsistency_is_reported() {
        let text = to_text(&MlpModel::init(&[4], 1)).replacen("widths 6 4 3", "widths 6 5 3", 1);
        assert!(matches!(parse_model(&text), Err(PredictorError::Shape(_))));
    }
}
