//! Largest singular value by power iteration on the Gram matrix.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use super::SnMode;

pub const DEFAULT_POWER_ITERATIONS: usize = 30;
const EARLY_EXIT_TOL: f64 = 1e-8;

/// Deterministic start vector shared by every call.
fn start_vector(n: usize) -> DVector<f64> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed);
    let v = DVector::from_fn(n, |_, _| -> f64 { StandardNormal.sample(&mut rng) });
    let norm = v.norm();
    v / norm
}

/// Spectral norm estimate of `w`.
///
/// Each iteration squares the normalized Gram matrix, so after `k`
/// iterations the start vector has been multiplied by `G^(2^k)`. The
/// estimate is the square root of the Rayleigh quotient of `G`.
pub fn spectral_norm(w: &DMatrix<f64>, iters: usize) -> f64 {
    if w.is_empty() || w.amax() == 0.0 {
        return 0.0;
    }
    let gram = if w.nrows() <= w.ncols() { w * w.transpose() } else { w.transpose() * w };
    let v0 = start_vector(gram.nrows());
    let rayleigh = |v: &DVector<f64>| v.dot(&(&gram * v));

    let mut power = gram.clone();
    let mut v = v0.clone();
    let mut lambda = rayleigh(&v);
    for _ in 0..iters.max(1) {
        let next = &power * &power;
        let scale = next.amax();
        if !(scale > 0.0 && scale.is_finite()) {
            break;
        }
        power = next / scale;
        let pv = &power * &v0;
        let norm = pv.norm();
        if !(norm > 0.0) {
            break;
        }
        v = pv / norm;
        let updated = rayleigh(&v);
        let done = (updated - lambda).abs() <= EARLY_EXIT_TOL * updated.abs();
        lambda = updated;
        if done {
            break;
        }
    }
    lambda.max(0.0).sqrt()
}

/// Rescale `w` in place; returns the factor applied.
pub fn normalize_weight(w: &mut DMatrix<f64>, gamma: f64, mode: SnMode) -> f64 {
    if !gamma.is_finite() {
        return 1.0;
    }
    let sigma = spectral_norm(w, DEFAULT_POWER_ITERATIONS);
    if sigma == 0.0 {
        return 1.0;
    }
    let factor = match mode {
        SnMode::Exact => gamma / sigma,
        SnMode::Clip => (gamma / sigma).min(1.0),
    };
    if factor != 1.0 {
        *w *= factor;
    }
    factor
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_cases() {
        assert!((spectral_norm(&DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0])), 30) - 3.0).abs() < 1e-12);
        assert!((spectral_norm(&DMatrix::identity(5, 5), 30) - 1.0).abs() < 1e-12);
        assert_eq!(spectral_norm(&DMatrix::zeros(3, 4), 30), 0.0);
    }

    #[test]
    fn matches_svd_on_random_rectangular() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for (r, c) in [(64, 128), (128, 64), (3, 128), (128, 6)] {
            let w = DMatrix::from_fn(r, c, |_, _| -> f64 { StandardNormal.sample(&mut rng) });
            let exact = w.clone().svd(false, false).singular_values.max();
            let est = spectral_norm(&w, 30);
            assert!((est - exact).abs() / exact <= 1e-6, "{r}x{c}: {est} vs {exact}");
        }
    }

    #[test]
    fn normalization_modes() {
        let mut w = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.5]));
        normalize_weight(&mut w, 1.0, SnMode::Exact);
        assert!((spectral_norm(&w, 30) - 1.0).abs() < 1e-12);
        let mut small = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 0.1]));
        let before = small.clone();
        assert_eq!(normalize_weight(&mut small, 1.0, SnMode::Clip), 1.0);
        assert_eq!(small, before);
    }
}
