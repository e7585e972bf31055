use crate::error::{Error, Result};
use crate::krylov::{ArnoldiFactorization, GkbFactorization, StepStatus};
use crate::linalg::Basis;
use crate::operators::LinearMap;
use crate::projected::{build_lsmr_projected, ProjectedProblem};
use nalgebra::DVector;

use super::Method;

/// Subspace generator behind the standard (non-flexible) drivers.
pub(crate) enum Engine {
    Gkb(GkbFactorization),
    Arnoldi(ArnoldiFactorization),
    /// GKB kept one step ahead, since the LSMR projected matrix needs
    /// `α_{k+1}`.
    Lsmr {
        gkb: GkbFactorization,
        k: usize,
    },
}

impl Engine {
    pub fn new(method: Method, a: &dyn LinearMap, b: &[f64], reorth: bool) -> Result<Self> {
        if b.len() != a.rows() {
            return Err(Error::DimensionMismatch {
                expected: a.rows(),
                got: b.len(),
            });
        }
        if method.needs_square() && !a.is_square() {
            return Err(Error::Config(format!(
                "{method} needs a square operator, got {}x{}",
                a.rows(),
                a.cols()
            )));
        }
        Ok(match method {
            Method::HybridGmres | Method::GmresPlain => {
                Engine::Arnoldi(ArnoldiFactorization::new(b, reorth)?)
            }
            Method::HybridLsqr | Method::LsqrPlain => {
                Engine::Gkb(GkbFactorization::new(b, a.cols(), reorth)?)
            }
            Method::HybridLsmr => Engine::Lsmr {
                gkb: GkbFactorization::new(b, a.cols(), reorth)?,
                k: 0,
            },
        })
    }

    pub fn k(&self) -> usize {
        match self {
            Engine::Gkb(f) => f.k(),
            Engine::Arnoldi(f) => f.k(),
            Engine::Lsmr { k, .. } => *k,
        }
    }

    /// Grows the subspace by one dimension. `None` means no further growth is
    /// possible.
    pub fn expand(&mut self, a: &dyn LinearMap) -> Result<Option<StepStatus>> {
        let limit = a.rows().min(a.cols());
        match self {
            Engine::Gkb(f) => {
                if f.breakdown() || f.k() >= limit {
                    return Ok(None);
                }
                let k0 = f.k();
                let st = f.step(a)?;
                Ok(if f.k() == k0 { None } else { Some(st) })
            }
            Engine::Arnoldi(f) => {
                if f.breakdown() || f.k() >= a.cols() {
                    return Ok(None);
                }
                Ok(Some(f.step(a)?))
            }
            Engine::Lsmr { gkb, k } => {
                let target = *k + 1;
                while gkb.k() < target + 1 && !gkb.breakdown() && gkb.k() < limit {
                    gkb.step(a)?;
                }
                if gkb.k() < target {
                    return Ok(None);
                }
                *k = target;
                let ahead = gkb.k() > target;
                Ok(Some(if gkb.breakdown() || !ahead {
                    StepStatus::Breakdown
                } else {
                    StepStatus::Continue
                }))
            }
        }
    }

    pub fn projected(&self) -> Result<ProjectedProblem> {
        let k = self.k();
        match self {
            Engine::Gkb(f) => ProjectedProblem::with_beta(f.b_matrix(k), f.beta1()),
            Engine::Arnoldi(f) => ProjectedProblem::with_beta(f.h_matrix(k), f.beta()),
            Engine::Lsmr { gkb, k } => {
                let alpha_next = gkb.alphas().get(*k).copied().unwrap_or(0.0);
                build_lsmr_projected(&gkb.b_matrix(*k), alpha_next, gkb.beta1())
            }
        }
    }

    /// Coordinates of `b − A x(y)` in the orthonormal left basis.
    pub fn residual_coords(&self, pp: &ProjectedProblem, y: &[f64]) -> Vec<f64> {
        let yv = DVector::from_column_slice(y);
        match self {
            Engine::Lsmr { gkb, k } => {
                let mut c = DVector::zeros(k + 1);
                c[0] = gkb.beta1();
                (c - gkb.b_matrix(*k) * yv).as_slice().to_vec()
            }
            _ => (DVector::from_column_slice(&pp.rhs) - &pp.g * yv)
                .as_slice()
                .to_vec(),
        }
    }

    pub fn solution_basis(&self) -> &Basis {
        match self {
            Engine::Gkb(f) | Engine::Lsmr { gkb: f, .. } => f.v_basis(),
            Engine::Arnoldi(f) => f.basis(),
        }
    }

    pub fn lift(&self, y: &[f64]) -> Vec<f64> {
        self.solution_basis().combine(y)
    }
}
