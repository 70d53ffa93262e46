//! Disturbance predictor: a ReLU MLP from relative neighbor state
//! `[rel_p, rel_v]` to the inertial disturbance force, with per-layer
//! spectral normalization bounding its Lipschitz constant.

mod io;
mod spectral;
mod train;

use nalgebra::{DMatrix, DVector, Vector3};
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

pub use io::{load_model, parse_model, save_model, write_grid_csv, write_model, FORMAT_MAGIC, FORMAT_VERSION};
pub use spectral::{normalize_weight, spectral_norm, DEFAULT_POWER_ITERATIONS};
pub use train::{loss_and_gradients, mse, train, Gradients, TrainConfig, TrainReport};

pub const INPUT_DIM: usize = 6;
pub const OUTPUT_DIM: usize = 3;
/// Hidden widths of the reference architecture 6-128-64-128-3.
pub const DEFAULT_HIDDEN: [usize; 3] = [128, 64, 128];

#[derive(Debug, Error)]
pub enum PredictorError {
    #[error("model file: {0}")]
    Format(String),
    #[error("unsupported model file version {0}")]
    Version(String),
    #[error("layer shapes inconsistent: {0}")]
    Shape(String),
    #[error("training loss became non-finite in epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("invalid training setting {name} = {value}")]
    InvalidConfig { name: &'static str, value: f64 },
    #[error("training set is empty")]
    EmptyDataset,
    #[error("grid resolution must be at least 2, got {0}")]
    Resolution(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SnMode {
    /// Scale every layer to spectral norm γ.
    Exact,
    /// Scale only layers whose spectral norm exceeds γ.
    Clip,
}

impl SnMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SnMode::Exact => "exact",
            SnMode::Clip => "clip",
        }
    }
}

impl std::str::FromStr for SnMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(SnMode::Exact),
            "clip" => Ok(SnMode::Clip),
            other => Err(format!("unknown spectral normalization mode `{other}`")),
        }
    }
}

/// Per-feature standardization `(x − mean) / scale`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InputNorm {
    pub mean: [f64; INPUT_DIM],
    pub scale: [f64; INPUT_DIM],
}

impl InputNorm {
    pub const IDENTITY: InputNorm = InputNorm { mean: [0.0; INPUT_DIM], scale: [1.0; INPUT_DIM] };

    pub fn fit(inputs: &[[f64; INPUT_DIM]]) -> Self {
        let n = inputs.len().max(1) as f64;
        let mut mean = [0.0; INPUT_DIM];
        let mut scale = [0.0; INPUT_DIM];
        for x in inputs {
            for i in 0..INPUT_DIM {
                mean[i] += x[i] / n;
            }
        }
        for x in inputs {
            for i in 0..INPUT_DIM {
                scale[i] += (x[i] - mean[i]).powi(2) / n;
            }
        }
        for s in &mut scale {
            *s = if *s > 1e-12 { s.sqrt() } else { 1.0 };
        }
        Self { mean, scale }
    }

    pub fn apply(&self, x: &[f64; INPUT_DIM]) -> [f64; INPUT_DIM] {
        std::array::from_fn(|i| (x[i] - self.mean[i]) / self.scale[i])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    layers: Vec<Layer>,
    /// Spectral ratio; infinite for an unnormalized network.
    pub gamma: f64,
    pub sn_mode: SnMode,
    pub norm: InputNorm,
}

pub fn model_input(rel_p: &Vector3<f64>, rel_v: &Vector3<f64>) -> [f64; INPUT_DIM] {
    [rel_p.x, rel_p.y, rel_p.z, rel_v.x, rel_v.y, rel_v.z]
}

impl MlpModel {
    /// Gaussian initialization with standard deviation `1/√fan_in` and zero
    /// biases.
    pub fn init(hidden: &[usize], seed: u64) -> Self {
        let mut widths = vec![INPUT_DIM];
        widths.extend_from_slice(hidden);
        widths.push(OUTPUT_DIM);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let layers = widths
            .windows(2)
            .map(|w| {
                let dist = Normal::new(0.0, 1.0 / (w[0] as f64).sqrt()).expect("positive std");
                Layer {
                    weight: DMatrix::from_fn(w[1], w[0], |_, _| dist.sample(&mut rng)),
                    bias: DVector::zeros(w[1]),
                }
            })
            .collect();
        Self { layers, gamma: f64::INFINITY, sn_mode: SnMode::Clip, norm: InputNorm::IDENTITY }
    }

    pub fn from_layers(layers: Vec<Layer>, gamma: f64, sn_mode: SnMode, norm: InputNorm) -> Result<Self, PredictorError> {
        if layers.is_empty() {
            return Err(PredictorError::Shape("no layers".into()));
        }
        let mut prev = INPUT_DIM;
        for (i, l) in layers.iter().enumerate() {
            if l.weight.ncols() != prev || l.bias.len() != l.weight.nrows() || l.weight.nrows() == 0 {
                return Err(PredictorError::Shape(format!(
                    "layer {i}: W {}x{}, b {}, expected {prev} inputs",
                    l.weight.nrows(),
                    l.weight.ncols(),
                    l.bias.len()
                )));
            }
            prev = l.weight.nrows();
        }
        if prev != OUTPUT_DIM {
            return Err(PredictorError::Shape(format!("output width {prev}, expected {OUTPUT_DIM}")));
        }
        if !(gamma > 0.0) {
            return Err(PredictorError::Shape(format!("gamma must be positive, got {gamma}")));
        }
        Ok(Self { layers, gamma, sn_mode, norm })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(INPUT_DIM).chain(self.layers.iter().map(|l| l.weight.nrows())).collect()
    }

    /// Prediction on standardized features.
    pub fn forward_normalized(&self, z: &[f64; INPUT_DIM]) -> Vector3<f64> {
        let mut h: Vec<f64> = z.to_vec();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let w = &layer.weight;
            let mut out: Vec<f64> = layer.bias.iter().copied().collect();
            for (j, hj) in h.iter().enumerate() {
                if *hj == 0.0 {
                    continue;
                }
                for (r, o) in out.iter_mut().enumerate() {
                    *o += w[(r, j)] * hj;
                }
            }
            if i < last {
                for o in &mut out {
                    *o = o.max(0.0);
                }
            }
            h = out;
        }
        Vector3::new(h[0], h[1], h[2])
    }

    pub fn forward(&self, x: &[f64; INPUT_DIM]) -> Vector3<f64> {
        self.forward_normalized(&self.norm.apply(x))
    }

    /// Rescale every weight matrix toward spectral norm `gamma`.
    pub fn apply_spectral_normalization(&mut self, gamma: f64, mode: SnMode) {
        self.gamma = gamma;
        self.sn_mode = mode;
        for layer in &mut self.layers {
            normalize_weight(&mut layer.weight, gamma, mode);
        }
    }

    /// Product of per-layer spectral norms: a Lipschitz bound in
    /// standardized-feature coordinates.
    pub fn lipschitz_upper_bound(&self) -> f64 {
        self.layers.iter().map(|l| spectral_norm(&l.weight, DEFAULT_POWER_ITERATIONS)).product()
    }

    /// Lipschitz bound with respect to raw `[rel_p, rel_v]`, folding in the
    /// input standardization.
    pub fn raw_lipschitz_upper_bound(&self) -> f64 {
        let widest = self.norm.scale.iter().map(|s| 1.0 / s).fold(0.0, f64::max);
        self.lipschitz_upper_bound() * widest
    }
}

/// Predictions for a batch of relative states, in order.
pub fn predict_horizon(model: &MlpModel, rel_states: &[(Vector3<f64>, Vector3<f64>)]) -> Vec<Vector3<f64>> {
    rel_states.iter().map(|(p, v)| model.forward(&model_input(p, v))).collect()
}

/// Predicted vertical force on a `res × res` grid of relative horizontal
/// offsets spanning `[−extent/2, extent/2]²` at relative height `height`
/// (ego minus neighbor: negative when the neighbor flies above). Row `i`
/// is the `y` index, column `j` the `x` index.
pub fn grid_map(
    model: &MlpModel,
    height: f64,
    rel_v: &Vector3<f64>,
    extent: f64,
    res: usize,
) -> Result<DMatrix<f64>, PredictorError> {
    if res < 2 {
        return Err(PredictorError::Resolution(res));
    }
    let axis = grid_axis(extent, res);
    Ok(DMatrix::from_fn(res, res, |i, j| {
        model.forward(&model_input(&Vector3::new(axis[j], axis[i], -height), rel_v)).z
    }))
}

pub fn grid_axis(extent: f64, res: usize) -> Vec<f64> {
    (0..res).map(|j| -0.5 * extent + extent * j as f64 / (res - 1) as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_return_output_bias() {
        let mut m = MlpModel::init(&[4], 1);
        for l in m.layers_mut() {
            l.weight.fill(0.0);
        }
        m.layers_mut()[1].bias = DVector::from_vec(vec![0.5, -1.0, 2.0]);
        for x in [[0.0; 6], [1.0, -2.0, 3.0, 0.1, 0.2, 0.3]] {
            assert_eq!(m.forward(&x), Vector3::new(0.5, -1.0, 2.0));
        }
    }

    #[test]
    fn single_unit_passes_positive_input() {
        let mut w1 = DMatrix::zeros(1, 6);
        w1[(0, 2)] = 1.0;
        let mut w2 = DMatrix::zeros(3, 1);
        w2[(2, 0)] = 1.0;
        let m = MlpModel::from_layers(
            vec![Layer { weight: w1, bias: DVector::zeros(1) }, Layer { weight: w2, bias: DVector::zeros(3) }],
            f64::INFINITY,
            SnMode::Clip,
            InputNorm::IDENTITY,
        )
        .unwrap();
        assert_eq!(m.forward(&[0.0, 0.0, 0.7, 0.0, 0.0, 0.0]).z, 0.7);
    }

    #[test]
    fn exact_mode_bound_is_gamma_power() {
        let mut m = MlpModel::init(&DEFAULT_HIDDEN, 2);
        m.apply_spectral_normalization(4.0, SnMode::Exact);
        assert!((m.lipschitz_upper_bound() - 256.0).abs() < 1e-3);
        m.apply_spectral_normalization(0.5, SnMode::Exact);
        assert!((m.lipschitz_upper_bound() - 0.0625).abs() < 1e-6);
    }

    #[test]
    fn clip_never_increases_norms() {
        let mut m = MlpModel::init(&DEFAULT_HIDDEN, 3);
        let before: Vec<f64> = m.layers().iter().map(|l| spectral_norm(&l.weight, 30)).collect();
        m.apply_spectral_normalization(1.5, SnMode::Clip);
        for (l, b) in m.layers().iter().zip(before) {
            let s = spectral_norm(&l.weight, 30);
            assert!(s <= b * (1.0 + 1e-9) && s <= 1.5 + 1e-6);
        }
    }

    #[test]
    fn horizon_batch_matches_single_calls() {
        let m = MlpModel::init(&DEFAULT_HIDDEN, 4);
        let states: Vec<_> = (0..21)
            .map(|k| (Vector3::new(0.1 * k as f64, -0.2, 0.6), Vector3::new(0.3, 0.0, -0.1 * k as f64)))
            .collect();
        let batch = predict_horizon(&m, &states);
        for ((p, v), f) in states.iter().zip(&batch) {
            assert_eq!(*f, m.forward(&model_input(p, v)));
        }
        let same = predict_horizon(&m, &vec![states[3]; 5]);
        assert!(same.iter().all(|f| *f == same[0]));
    }

    #[test]
    fn grid_rejects_low_resolution() {
        let m = MlpModel::init(&[4], 0);
        assert!(matches!(grid_map(&m, 0.6, &Vector3::zeros(), 1.0, 1), Err(PredictorError::Resolution(1))));
        let g = grid_map(&m, 0.6, &Vector3::zeros(), 1.0, 21).unwrap();
        assert_eq!(g.shape(), (21, 21));
    }
}
