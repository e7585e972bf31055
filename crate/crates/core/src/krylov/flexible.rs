use super::arnoldi::hessenberg;
use super::{passes, StepStatus, BREAKDOWN_RTOL};
use crate::error::{Error, Result};
use crate::linalg::{norm, scale, Basis};
use crate::operators::LinearMap;
use nalgebra::DMatrix;

fn check_weights(w_inv: &[f64], n: usize) -> Result<()> {
    if w_inv.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: w_inv.len(),
        });
    }
    if w_inv.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
        return Err(Error::InvalidArgument(
            "weights must be positive and finite".into(),
        ));
    }
    Ok(())
}

fn weighted(w_inv: &[f64], v: &[f64]) -> Vec<f64> {
    w_inv.iter().zip(v).map(|(w, x)| w * x).collect()
}

/// Flexible Golub-Kahan process: `A Z_k = U_{k+1} M_k` and
/// `Aᵀ U_{k+1} = V_{k+1} S_{k+1}` with `z_i = W_i⁻¹ v_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlexGkbFactorization {
    u: Basis,
    v: Basis,
    z: Basis,
    m_cols: Vec<Vec<f64>>,
    s_cols: Vec<Vec<f64>>,
    beta: f64,
    breakdown: bool,
    reorth: bool,
    norm_est: f64,
}

impl FlexGkbFactorization {
    /// Sets `u₁ = b/‖b‖` and `v₁ = Aᵀu₁/‖Aᵀu₁‖`.
    pub fn new(a: &dyn LinearMap, b: &[f64], reorth: bool) -> Result<Self> {
        if b.len() != a.rows() {
            return Err(Error::DimensionMismatch {
                expected: a.rows(),
                got: b.len(),
            });
        }
        let beta = norm(b);
        if beta == 0.0 {
            return Err(Error::InvalidArgument("starting vector is zero".into()));
        }
        let mut u1 = b.to_vec();
        scale(1.0 / beta, &mut u1);
        let mut v1 = vec![0.0; a.cols()];
        a.apply_adjoint_into(&u1, &mut v1);
        let s11 = norm(&v1);
        if s11 == 0.0 {
            return Err(Error::Breakdown { step: 0 });
        }
        scale(1.0 / s11, &mut v1);
        let mut u = Basis::new(a.rows());
        u.push(u1);
        let mut v = Basis::new(a.cols());
        v.push(v1);
        Ok(Self {
            u,
            v,
            z: Basis::new(a.cols()),
            m_cols: Vec::new(),
            s_cols: vec![vec![s11]],
            beta,
            breakdown: false,
            reorth,
            norm_est: s11,
        })
    }

    pub fn k(&self) -> usize {
        self.m_cols.len()
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn breakdown(&self) -> bool {
        self.breakdown
    }
    pub fn u_basis(&self) -> &Basis {
        &self.u
    }
    pub fn v_basis(&self) -> &Basis {
        &self.v
    }
    pub fn z_basis(&self) -> &Basis {
        &self.z
    }

    /// `M_k`, `(k+1)×k` upper Hessenberg.
    pub fn m_matrix(&self, k: usize) -> DMatrix<f64> {
        hessenberg(&self.m_cols, k)
    }

    /// Leading `j×j` block of `S`, upper triangular, `j ≤ k+1`.
    pub fn s_matrix(&self, j: usize) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(j, j);
        for (c, col) in self.s_cols[..j].iter().enumerate() {
            for (r, x) in col.iter().enumerate() {
                s[(r, c)] = *x;
            }
        }
        s
    }

    /// Expands with `z_{k+1} = w_inv ∘ v_{k+1}`.
    pub fn step(&mut self, a: &dyn LinearMap, w_inv: &[f64]) -> Result<StepStatus> {
        if self.breakdown {
            return Err(Error::Breakdown { step: self.k() });
        }
        check_weights(w_inv, a.cols())?;
        let k = self.k();
        let z = weighted(w_inv, self.v.col(k));
        let mut u = vec![0.0; a.rows()];
        a.apply_into(&z, &mut u);
        let raw = norm(&u);
        let mut mcol = self.u.orthogonalize(&mut u, k + 1, passes(self.reorth));
        let h = norm(&u);
        self.norm_est = self.norm_est.max(raw).max(h);
        self.z.push(z);
        if h <= BREAKDOWN_RTOL * self.norm_est {
            mcol.push(0.0);
            self.m_cols.push(mcol);
            self.u.push(vec![0.0; a.rows()]);
            self.s_cols.push(vec![0.0; k + 2]);
            self.v.push(vec![0.0; a.cols()]);
            self.breakdown = true;
            return Ok(StepStatus::Breakdown);
        }
        mcol.push(h);
        self.m_cols.push(mcol);
        scale(1.0 / h, &mut u);

        let mut v = vec![0.0; a.cols()];
        a.apply_adjoint_into(&u, &mut v);
        self.u.push(u);
        let raw = norm(&v);
        let mut scol = self.v.orthogonalize(&mut v, k + 1, passes(self.reorth));
        let s = norm(&v);
        self.norm_est = self.norm_est.max(raw).max(s);
        if s <= BREAKDOWN_RTOL * self.norm_est {
            scol.push(0.0);
            self.s_cols.push(scol);
            self.v.push(vec![0.0; a.cols()]);
            self.breakdown = true;
            return Ok(StepStatus::Breakdown);
        }
        scol.push(s);
        self.s_cols.push(scol);
        scale(1.0 / s, &mut v);
        self.v.push(v);
        Ok(StepStatus::Continue)
    }
}

/// Flexible Arnoldi process: `A Z_k = V_{k+1} H_k`, `z_i = W_i⁻¹ v_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlexArnoldiFactorization {
    v: Basis,
    z: Basis,
    h_cols: Vec<Vec<f64>>,
    beta: f64,
    breakdown: bool,
    reorth: bool,
    norm_est: f64,
}

impl FlexArnoldiFactorization {
    pub fn new(b: &[f64], reorth: bool) -> Result<Self> {
        let beta = norm(b);
        if beta == 0.0 {
            return Err(Error::InvalidArgument("starting vector is zero".into()));
        }
        let mut v1 = b.to_vec();
        scale(1.0 / beta, &mut v1);
        let mut v = Basis::new(b.len());
        v.push(v1);
        Ok(Self {
            v,
            z: Basis::new(b.len()),
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
    pub fn v_basis(&self) -> &Basis {
        &self.v
    }
    pub fn z_basis(&self) -> &Basis {
        &self.z
    }
    pub fn h_matrix(&self, k: usize) -> DMatrix<f64> {
        hessenberg(&self.h_cols, k)
    }

    pub fn step(&mut self, a: &dyn LinearMap, w_inv: &[f64]) -> Result<StepStatus> {
        if !a.is_square() {
            return Err(Error::NotSquare("flexible arnoldi"));
        }
        if self.breakdown || self.k() >= a.cols() {
            return Err(Error::Breakdown { step: self.k() });
        }
        check_weights(w_inv, a.cols())?;
        let k = self.k();
        let z = weighted(w_inv, self.v.col(k));
        let mut w = vec![0.0; a.rows()];
        a.apply_into(&z, &mut w);
        let raw = norm(&w);
        let mut col = self.v.orthogonalize(&mut w, k + 1, passes(self.reorth));
        let h = norm(&w);
        self.norm_est = self.norm_est.max(raw).max(h);
        self.z.push(z);
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
