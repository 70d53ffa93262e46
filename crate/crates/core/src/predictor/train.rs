//! Mini-batch Adam on the mean squared error.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;

use super::{model_input, InputNorm, MlpModel, PredictorError, SnMode, INPUT_DIM, OUTPUT_DIM};
use crate::data::Sample;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Spectral ratio; `f64::INFINITY` trains without normalization.
    pub gamma: f64,
    pub sn_mode: SnMode,
    /// Normalize after every optimizer step instead of once per epoch.
    pub sn_every_step: bool,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20_000,
            learning_rate: 1e-4,
            batch_size: 1024,
            seed: 0,
            gamma: 4.0,
            sn_mode: SnMode::Clip,
            sn_every_step: false,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), PredictorError> {
        let bad = |name, value| Err(PredictorError::InvalidConfig { name, value });
        if self.epochs == 0 {
            return bad("epochs", 0.0);
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate", self.learning_rate);
        }
        if self.batch_size == 0 {
            return bad("batch_size", 0.0);
        }
        if !(self.gamma > 0.0) {
            return bad("gamma", self.gamma);
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return bad("beta1", self.beta1);
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return bad("beta2", self.beta2);
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon", self.epsilon);
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    /// Sample-weighted mean batch loss of each epoch.
    pub loss_history: Vec<f64>,
    /// Training-set MSE of the returned model.
    pub final_train_mse: f64,
}

/// Per-layer `(∂L/∂W, ∂L/∂b)`.
pub type Gradients = Vec<(DMatrix<f64>, DVector<f64>)>;

fn batch_matrices(model: &MlpModel, samples: &[Sample], idx: &[usize]) -> (DMatrix<f64>, DMatrix<f64>) {
    let x = DMatrix::from_fn(INPUT_DIM, idx.len(), |r, c| {
        let s = &samples[idx[c]];
        (model_input(&s.rel_p, &s.rel_v)[r] - model.norm.mean[r]) / model.norm.scale[r]
    });
    let y = DMatrix::from_fn(OUTPUT_DIM, idx.len(), |r, c| samples[idx[c]].f_d[r]);
    (x, y)
}

/// Mean squared error (over samples and components) and its gradient for
/// standardized inputs `x` (features × batch) and targets `y`.
pub fn loss_and_gradients(model: &MlpModel, x: &DMatrix<f64>, y: &DMatrix<f64>) -> (f64, Gradients) {
    let layers = model.layers();
    let last = layers.len() - 1;
    let mut acts = vec![x.clone()];
    for (i, l) in layers.iter().enumerate() {
        let mut z = &l.weight * acts.last().expect("input activation");
        for mut col in z.column_iter_mut() {
            col += &l.bias;
        }
        if i < last {
            z.apply(|v| *v = v.max(0.0));
        }
        acts.push(z);
    }
    let out = acts.last().expect("output");
    let diff = out - y;
    let count = diff.len() as f64;
    let loss = diff.norm_squared() / count;

    let mut delta = diff * (2.0 / count);
    let mut grads: Gradients = Vec::with_capacity(layers.len());
    for i in (0..layers.len()).rev() {
        let a_prev = &acts[i];
        let gw = &delta * a_prev.transpose();
        let gb = delta.column_sum();
        if i > 0 {
            let mut back = layers[i].weight.transpose() * &delta;
            back.zip_apply(a_prev, |d, a| {
                if a <= 0.0 {
                    *d = 0.0;
                }
            });
            delta = back;
        }
        grads.push((gw, gb));
    }
    grads.reverse();
    (loss, grads)
}

/// Mean squared error of `model` over `samples`.
pub fn mse(model: &MlpModel, samples: &[Sample]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let total: f64 = samples
        .iter()
        .map(|s| (model.forward(&model_input(&s.rel_p, &s.rel_v)) - s.f_d).norm_squared())
        .sum();
    total / (OUTPUT_DIM * samples.len()) as f64
}

struct Adam {
    m: Gradients,
    v: Gradients,
    step: i32,
}

impl Adam {
    fn new(model: &MlpModel) -> Self {
        let zeros: Gradients = model
            .layers()
            .iter()
            .map(|l| (DMatrix::zeros(l.weight.nrows(), l.weight.ncols()), DVector::zeros(l.bias.len())))
            .collect();
        Self { m: zeros.clone(), v: zeros, step: 0 }
    }

    fn apply(&mut self, model: &mut MlpModel, grads: &Gradients, cfg: &TrainConfig) {
        self.step += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.step);
        let c2 = 1.0 - cfg.beta2.powi(self.step);
        let lr = cfg.learning_rate;
        let (b1, b2, eps) = (cfg.beta1, cfg.beta2, cfg.epsilon);
        for (i, layer) in model.layers_mut().iter_mut().enumerate() {
            let (gw, gb) = &grads[i];
            let (mw, mb) = &mut self.m[i];
            let (vw, vb) = &mut self.v[i];
            let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            };
            for k in 0..gw.len() {
                update(&mut layer.weight.as_mut_slice()[k], gw.as_slice()[k], &mut mw.as_mut_slice()[k], &mut vw.as_mut_slice()[k]);
            }
            for k in 0..gb.len() {
                update(&mut layer.bias[k], gb[k], &mut mb[k], &mut vb[k]);
            }
        }
    }
}

/// Fit `model` to `samples`. Input standardization is refit on `samples`;
/// spectral normalization with `cfg.gamma` follows each epoch (or step).
pub fn train(mut model: MlpModel, samples: &[Sample], cfg: &TrainConfig) -> Result<(MlpModel, TrainReport), PredictorError> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(PredictorError::EmptyDataset);
    }
    let inputs: Vec<[f64; INPUT_DIM]> = samples.iter().map(|s| model_input(&s.rel_p, &s.rel_v)).collect();
    model.norm = InputNorm::fit(&inputs);
    model.gamma = cfg.gamma;
    model.sn_mode = cfg.sn_mode;
    model.apply_spectral_normalization(cfg.gamma, cfg.sn_mode);

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut adam = Adam::new(&model);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut weighted = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let (x, y) = batch_matrices(&model, samples, chunk);
            let (loss, grads) = loss_and_gradients(&model, &x, &y);
            if !loss.is_finite() {
                return Err(PredictorError::NonFiniteLoss { epoch });
            }
            weighted += loss * chunk.len() as f64;
            adam.apply(&mut model, &grads, cfg);
            if cfg.sn_every_step {
                model.apply_spectral_normalization(cfg.gamma, cfg.sn_mode);
            }
        }
        if !cfg.sn_every_step {
            model.apply_spectral_normalization(cfg.gamma, cfg.sn_mode);
        }
        history.push(weighted / samples.len() as f64);
    }
    let final_train_mse = mse(&model, samples);
    if !final_train_mse.is_finite() {
        return Err(PredictorError::NonFiniteLoss { epoch: cfg.epochs });
    }
    Ok((model, TrainReport { loss_history: history, final_train_mse }))
}
