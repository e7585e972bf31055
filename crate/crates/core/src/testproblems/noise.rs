use crate::linalg::norm;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Median absolute deviation to standard deviation for Gaussian samples.
pub const MAD_TO_SIGMA: f64 = 0.6745;

#[derive(Debug, Clone, PartialEq)]
pub struct NoisyData {
    pub b: Vec<f64>,
    pub e: Vec<f64>,
    /// Per-entry standard deviation `‖e‖/√m`.
    pub sigma: f64,
}

/// Standard normal vector from a seeded ChaCha stream.
pub fn gaussian_vector(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// `b = b_true + level·(‖b_true‖/‖e₀‖)·e₀` with `e₀` standard normal, so that
/// `‖e‖/‖b_true‖ = level` exactly.
pub fn add_noise(b_true: &[f64], noise_level: f64, seed: u64) -> NoisyData {
    assert!(noise_level >= 0.0, "noise level must be nonnegative");
    let m = b_true.len();
    let e0 = gaussian_vector(m, seed);
    let (nb, ne0) = (norm(b_true), norm(&e0));
    let factor = if noise_level == 0.0 || nb == 0.0 || ne0 == 0.0 {
        0.0
    } else {
        noise_level * nb / ne0
    };
    let e: Vec<f64> = e0.iter().map(|v| factor * v).collect();
    let b = b_true.iter().zip(&e).map(|(x, y)| x + y).collect();
    let sigma = norm(&e) / (m as f64).sqrt();
    NoisyData { b, e, sigma }
}

/// Single-level Haar detail coefficients `(b[2i] − b[2i+1])/√2`; an odd tail
/// entry is dropped.
pub fn haar_details(b: &[f64]) -> Vec<f64> {
    b.chunks_exact(2)
        .map(|p| (p[0] - p[1]) / std::f64::consts::SQRT_2)
        .collect()
}

/// Robust white-noise standard deviation from the finest Haar details:
/// `median(|cD|)/0.6745`.
pub fn estimate_noise_sigma(b: &[f64]) -> f64 {
    assert!(b.len() >= 2, "need at least two samples");
    let mut d: Vec<f64> = haar_details(b).into_iter().map(f64::abs).collect();
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = d.len();
    let med = if k % 2 == 1 {
        d[k / 2]
    } else {
        0.5 * (d[k / 2 - 1] + d[k / 2])
    };
    med / MAD_TO_SIGMA
}

/// Relative noise level implied by the estimate: `σ̂·√m/‖b‖`.
pub fn estimate_noise_level(b: &[f64]) -> f64 {
    let nb = norm(b);
    if nb == 0.0 {
        return 0.0;
    }
    estimate_noise_sigma(b) * (b.len() as f64).sqrt() / nb
}
