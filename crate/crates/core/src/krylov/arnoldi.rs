use super::{passes, StepStatus, BREAKDOWN_RTOL};
use crate::error::{Error, Result};
use crate::linalg::{norm, scale, Basis};
use crate::operators::LinearMap;
use nalgebra::DMatrix;

/// `A V_k = V_{k+1} H_k` with `V` orthonormal and `H` upper Hessenberg.
#[derive(Debug, Clone, PartialEq)]
pub struct ArnoldiFactorization {
    v: Basis,
    /// Column `j` of `H` holds `j + 2` entries.
    h_cols: Vec<Vec<f64>>,
    beta: f64,
    breakdown: bool,
    reorth: bool,
    norm_est: f64,
}

impl ArnoldiFactorization {
    /// Starts from `v₁ = b/‖b‖`.
    pub fn new(b: &[f64], reorth: bool) -> Result<Self> {
        let beta = norm(b);
        if beta == 0.0 {
            return Err(Error::InvalidArgument("starting vector is zero".into()));
        }
        let mut v = Basis::new(b.len());
        let mut v1 = b.to_vec();
        scale(1.0 / beta, &mut v1);
        v.push(v1);
        Ok(Self {
            v,
            h_cols: Vec::new(),
            beta,
            breakdown: false,
            reorth,
            norm_est: 0.0,
        })
    }

    pub fn k(&self) -> usize {
        self.h_cols.len()
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn breakdown(&self) -> bool {
        self.breakdown
    }
    pub fn basis(&self) -> &Basis {
        &self.v
    }

    /// `(k+1)×k` leading block of `H`.
    pub fn h_matrix(&self, k: usize) -> DMatrix<f64> {
        hessenberg(&self.h_cols, k)
    }

    /// Appends `v_{k+2}` and column `k+1` of `H`.
    pub fn step(&mut self, a: &dyn LinearMap) -> Result<StepStatus> {
        if !a.is_square() {
            return Err(Error::NotSquare("arnoldi"));
        }
        if self.breakdown || self.k() >= a.cols() {
            return Err(Error::Breakdown { step: self.k() });
        }
        let k = self.k();
        let mut w = vec![0.0; a.rows()];
        a.apply_into(self.v.col(k), &mut w);
        let raw = norm(&w);
        let mut col = self.v.orthogonalize(&mut w, k + 1, passes(self.reorth));
        let h = norm(&w);
        self.norm_est = self.norm_est.max(raw).max(h);
        let status = if h <= BREAKDOWN_RTOL * self.norm_est {
            self.breakdown = true;
            col.push(0.0);
            self.v.push(vec![0.0; a.rows()]);
            StepStatus::Breakdown
        } else {
            col.push(h);
            scale(1.0 / h, &mut w);
            self.v.push(w);
            StepStatus::Continue
        };
        self.h_cols.push(col);
        Ok(status)
    }
}

pub(crate) fn hessenberg(cols: &[Vec<f64>], k: usize) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(k + 1, k);
    for (j, c) in cols[..k].iter().enumerate() {
        for (i, v) in c.iter().enumerate() {
            h[(i, j)] = *v;
        }
    }
    h
}
