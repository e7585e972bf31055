use super::{passes, StepStatus, BREAKDOWN_RTOL};
use crate::error::{Error, Result};
use crate::linalg::{axpy, norm, scale, Basis};
use crate::operators::LinearMap;
use nalgebra::DMatrix;

/// Golub-Kahan bidiagonalization
///
/// After `k` steps: `A V_k = U_{k+1} B_k` and `Aᵀ U_k = V_k B_{k,k}ᵀ`, where
/// `B_k` is `(k+1)×k` lower bidiagonal with `α₁..α_k` on the diagonal and
/// `β₂..β_{k+1}` below it, and `β₁ = ‖b‖`.
#[derive(Debug, Clone, PartialEq)]
pub struct GkbFactorization {
    u: Basis,
    v: Basis,
    alphas: Vec<f64>,
    betas: Vec<f64>,
    breakdown: bool,
    reorth: bool,
    norm_est: f64,
}

impl GkbFactorization {
    pub fn new(b: &[f64], n: usize, reorth: bool) -> Result<Self> {
        let beta = norm(b);
        if beta == 0.0 {
            return Err(Error::InvalidArgument("starting vector is zero".into()));
        }
        let mut u = Basis::new(b.len());
        let mut u1 = b.to_vec();
        scale(1.0 / beta, &mut u1);
        u.push(u1);
        Ok(Self {
            u,
            v: Basis::new(n),
            alphas: Vec::new(),
            betas: vec![beta],
            breakdown: false,
            reorth,
            norm_est: 0.0,
        })
    }

    pub fn k(&self) -> usize {
        self.alphas.len()
    }
    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }
    pub fn betas(&self) -> &[f64] {
        &self.betas
    }
    pub fn beta1(&self) -> f64 {
        self.betas[0]
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
    pub fn norm_estimate(&self) -> f64 {
        self.norm_est
    }

    /// `B_k`, `(k+1)×k`.
    pub fn b_matrix(&self, k: usize) -> DMatrix<f64> {
        assert!(k <= self.k());
        let mut b = DMatrix::zeros(k + 1, k);
        for j in 0..k {
            b[(j, j)] = self.alphas[j];
            b[(j + 1, j)] = self.betas[j + 1];
        }
        b
    }

    /// `B_{k,k}`: the leading `k×k` block of `B_k`.
    pub fn b_square(&self, k: usize) -> DMatrix<f64> {
        self.b_matrix(k).rows(0, k).into_owned()
    }

    /// Appends `α_{k+1}, v_{k+1}` and `β_{k+2}, u_{k+2}`.
    ///
    /// A vanishing `α` leaves the step count unchanged; a vanishing `β`
    /// completes the step with `β_{k+2} = 0` and a zero placeholder column in
    /// `U`.
    pub fn step(&mut self, a: &dyn LinearMap) -> Result<StepStatus> {
        if self.breakdown {
            return Err(Error::Breakdown { step: self.k() });
        }
        let k = self.k();
        let mut v = vec![0.0; a.cols()];
        a.apply_adjoint_into(self.u.col(k), &mut v);
        if k > 0 {
            axpy(-self.betas[k], self.v.col(k - 1), &mut v);
        }
        let raw = norm(&v);
        if self.reorth {
            self.v.orthogonalize(&mut v, k, passes(true));
        }
        let alpha = norm(&v);
        self.norm_est = self.norm_est.max(raw).max(alpha);
        if alpha <= BREAKDOWN_RTOL * self.norm_est {
            self.breakdown = true;
            return Ok(StepStatus::Breakdown);
        }
        scale(1.0 / alpha, &mut v);

        let mut u = vec![0.0; a.rows()];
        a.apply_into(&v, &mut u);
        axpy(-alpha, self.u.col(k), &mut u);
        let raw = norm(&u);
        if self.reorth {
            self.u.orthogonalize(&mut u, k + 1, passes(true));
        }
        let beta = norm(&u);
        self.norm_est = self.norm_est.max(raw).max(beta);
        self.alphas.push(alpha);
        self.v.push(v);
        if beta <= BREAKDOWN_RTOL * self.norm_est {
            self.breakdown = true;
            self.betas.push(0.0);
            self.u.push(vec![0.0; a.rows()]);
            Ok(StepStatus::Breakdown)
        } else {
            scale(1.0 / beta, &mut u);
            self.betas.push(beta);
            self.u.push(u);
            Ok(StepStatus::Continue)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::krylov::testutil::*;
    use crate::operators::{DenseMatrixMap, DiagonalMap};
    use nalgebra::DVector;

    #[test]
    fn identity_breaks_down_after_one_step() {
        let a = DenseMatrixMap::identity(3);
        let mut f = GkbFactorization::new(&[1.0, 0.0, 0.0], 3, true).unwrap();
        assert_eq!(f.step(&a).unwrap(), StepStatus::Breakdown);
        assert_eq!(f.k(), 1);
        assert!((f.alphas()[0] - 1.0).abs() < 1e-15);
        assert_eq!(f.betas()[1], 0.0);
        assert_eq!(f.v_basis().col(0), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn singular_values_of_diagonal() {
        let a = DiagonalMap::new(vec![3.0, 2.0, 1.0]);
        let mut f = GkbFactorization::new(&[1.0, 1.0, 1.0], 3, true).unwrap();
        for _ in 0..3 {
            f.step(&a).unwrap();
        }
        let mut sv: Vec<f64> = f.b_square(3).singular_values().iter().cloned().collect();
        sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for (s, t) in sv.iter().zip([3.0, 2.0, 1.0]) {
            assert!((s - t).abs() < 1e-10, "{sv:?}");
        }
    }

    #[test]
    fn gkb_relations_and_lanczos_identity() {
        for seed in 0..10 {
            let (m, n) = (12, 8);
            let am = random_matrix(m, n, seed);
            let a = DenseMatrixMap::from_matrix(&am);
            let mut f = GkbFactorization::new(&random_vec(m, 50 + seed), n, true).unwrap();
            for k in 1..=n {
                f.step(&a).unwrap();
                let u = f.u_basis().to_matrix(k + 1);
                let v = f.v_basis().to_matrix(k);
                let b = f.b_matrix(k);
                let scale = am.norm();
                assert!((&am * &v - &u * &b).norm() <= 1e-10 * scale);
                let uk = u.columns(0, k);
                let bkk = f.b_square(k);
                assert!((am.transpose() * uk - &v * bkk.transpose()).norm() <= 1e-10 * scale);
                // AᵀA V_k = V_k B_kᵀB_k + α_{k+1}β_{k+1} v_{k+1} e_kᵀ; the tail is
                // orthogonal to V_k so test the projection
                let ata = am.transpose() * &am;
                let proj = v.transpose() * &ata * &v;
                let bb = b.transpose() * &b;
                assert!((proj - bb).norm() <= 1e-8 * scale * scale);
            }
            assert!(f.u_basis().orthogonality_error() < 1e-10);
            assert!(f.v_basis().orthogonality_error() < 1e-10);
        }
    }

    #[test]
    fn lanczos_tail_is_rank_one() {
        let (m, n) = (10, 7);
        let am = random_matrix(m, n, 4);
        let a = DenseMatrixMap::from_matrix(&am);
        let mut f = GkbFactorization::new(&random_vec(m, 6), n, true).unwrap();
        for _ in 0..5 {
            f.step(&a).unwrap();
        }
        f.step(&a).unwrap();
        let k = 5;
        let v = f.v_basis().to_matrix(k);
        let b = f.b_matrix(k);
        let resid = am.transpose() * &am * &v - &v * (b.transpose() * &b);
        let coeff = f.alphas()[k] * f.betas()[k];
        let vnext = DVector::from_column_slice(f.v_basis().col(k));
        let mut tail = DMatrix::zeros(n, k);
        tail.set_column(k - 1, &(vnext * coeff));
        assert!((resid - tail).norm() < 1e-10);
    }

    #[test]
    fn overdetermined_full_run_ends_in_alpha_breakdown() {
        let am = random_matrix(6, 5, 1);
        let a = DenseMatrixMap::from_matrix(&am);
        let mut f = GkbFactorization::new(&random_vec(6, 2), 5, true).unwrap();
        for _ in 0..5 {
            assert_eq!(f.step(&a).unwrap(), StepStatus::Continue);
        }
        assert_eq!(f.step(&a).unwrap(), StepStatus::Breakdown);
        assert_eq!(f.k(), 5);
    }

    #[test]
    fn deterministic() {
        let am = random_matrix(9, 9, 3);
        let a = DenseMatrixMap::from_matrix(&am);
        let run = || {
            let mut f = GkbFactorization::new(&random_vec(9, 8), 9, true).unwrap();
            for _ in 0..6 {
                f.step(&a).unwrap();
            }
            f
        };
        assert_eq!(run(), run());
    }
}
