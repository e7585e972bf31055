//! The two model problems (image deblurring, parallel-beam CT) plus noise
//! injection and data-driven noise estimation.

mod noise;
mod phantom;

pub use noise::{
    add_noise, estimate_noise_level, estimate_noise_sigma, gaussian_vector, haar_details,
    NoisyData, MAD_TO_SIGMA,
};
pub use phantom::{piecewise_smooth, shepp_logan, Image};

use crate::error::Result;
use crate::linalg::norm;
use crate::operators::{build_gaussian_psf, build_tomo, BlurOperator, LinearMap, Psf};
use std::sync::Arc;

pub struct TestProblem {
    pub a: Arc<dyn LinearMap>,
    pub b_true: Vec<f64>,
    pub b: Vec<f64>,
    pub x_true: Vec<f64>,
    pub e: Vec<f64>,
    /// `‖e‖/‖A x_true‖`.
    pub noise_level: f64,
    /// Per-entry noise standard deviation.
    pub sigma: f64,
    pub seed: u64,
    /// Image side for problems defined on an `N×N` grid.
    pub side: usize,
}

impl std::fmt::Debug for TestProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TestProblem")
            .field("m", &self.a.rows())
            .field("n", &self.a.cols())
            .field("noise_level", &self.noise_level)
            .field("sigma", &self.sigma)
            .field("seed", &self.seed)
            .finish()
    }
}

impl TestProblem {
    /// Wraps any operator and true solution.
    pub fn from_operator(
        a: Arc<dyn LinearMap>,
        x_true: Vec<f64>,
        noise_level: f64,
        seed: u64,
        side: usize,
    ) -> Result<Self> {
        let b_true = a.apply(&x_true)?;
        let noisy = add_noise(&b_true, noise_level, seed);
        Ok(Self {
            a,
            b_true,
            b: noisy.b,
            x_true,
            e: noisy.e,
            noise_level,
            sigma: noisy.sigma,
            seed,
            side,
        })
    }

    /// `ε = ‖e‖`.
    pub fn noise_norm(&self) -> f64 {
        norm(&self.e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsfParams {
    pub radius: usize,
    pub s1: f64,
    pub s2: f64,
    pub theta: f64,
}

impl Default for PsfParams {
    fn default() -> Self {
        Self {
            radius: 8,
            s1: 2.5,
            s2: 2.5,
            theta: 0.0,
        }
    }
}

impl PsfParams {
    pub fn build(&self) -> Result<Psf> {
        build_gaussian_psf(self.radius, self.s1, self.s2, self.theta)
    }
}

/// Gaussian-blur deconvolution of the piecewise-smooth phantom with
/// reflective boundaries.
pub fn make_deblur_problem(
    side: usize,
    psf: PsfParams,
    noise_level: f64,
    seed: u64,
) -> Result<TestProblem> {
    make_deblur_problem_with_psf(side, psf.build()?, noise_level, seed)
}

pub fn make_deblur_problem_with_psf(
    side: usize,
    psf: Psf,
    noise_level: f64,
    seed: u64,
) -> Result<TestProblem> {
    let a = BlurOperator::new(side, psf)?;
    let x = piecewise_smooth(side)?;
    TestProblem::from_operator(Arc::new(a), x.pixels, noise_level, seed, side)
}

/// Parallel-beam CT of the Shepp-Logan phantom.
pub fn make_tomo_problem(
    side: usize,
    rays_per_view: usize,
    angles_deg: &[f64],
    noise_level: f64,
    seed: u64,
) -> Result<TestProblem> {
    let a = build_tomo(side, rays_per_view, angles_deg)?;
    let x = shepp_logan(side)?;
    TestProblem::from_operator(Arc::new(a), x.pixels, noise_level, seed, side)
}

/// Default desk-scale CT geometry: `p = round(√2·N)` rays, `views` angles
/// equispaced on `[0°, 180°)`.
pub fn default_tomo_geometry(side: usize, views: usize) -> (usize, Vec<f64>) {
    let p = (std::f64::consts::SQRT_2 * side as f64).round() as usize;
    let step = 180.0 / views as f64;
    (p, (0..views).map(|k| k as f64 * step).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dist;

    fn check_invariants(p: &TestProblem) {
        let ax = p.a.apply(&p.x_true).unwrap();
        assert!(dist(&ax, &p.b_true) <= 1e-12 * norm(&p.b_true).max(1.0));
        if p.noise_level > 0.0 {
            let rel = dist(&p.b, &p.b_true) / norm(&p.b_true);
            assert!((rel - p.noise_level).abs() <= 1e-12);
        } else {
            assert_eq!(p.b, p.b_true);
        }
    }

    #[test]
    fn delta_deblur_noise_free_is_identity() {
        let p = make_deblur_problem_with_psf(16, Psf::delta(), 0.0, 0).unwrap();
        assert_eq!(p.b, p.x_true);
        check_invariants(&p);
    }

    #[test]
    fn deblur_invariants() {
        let p = make_deblur_problem(32, PsfParams::default(), 1e-2, 7).unwrap();
        check_invariants(&p);
        assert_eq!(p.a.rows(), 1024);
        assert_eq!(p.seed, 7);
    }

    #[test]
    fn tomo_desk_problem_is_overdetermined() {
        let angles: Vec<f64> = (0..90).map(|k| 2.0 * k as f64).collect();
        let p = make_tomo_problem(32, 45, &angles, 1e-2, 3).unwrap();
        assert_eq!((p.a.rows(), p.a.cols()), (4050, 1024));
        assert!(p.a.rows() > p.a.cols());
        check_invariants(&p);
    }

    #[test]
    fn default_geometry() {
        let (p, angles) = default_tomo_geometry(32, 90);
        assert_eq!(p, 45);
        assert_eq!(angles.len(), 90);
        assert_eq!(angles[1], 2.0);
    }
}
