//! The small projected Tikhonov problem `min ‖c − G y‖² + λ‖y‖²`.
//!
//! `G` is `(k+1)×k` (or any tall matrix) and `c` is usually `β₁e₁`. Every
//! λ-dependent quantity is computed from a single SVD of `G`, so evaluating a
//! parameter rule at a new λ costs `O(k)`.

use crate::error::{Error, Result};
use crate::linalg::Basis;
use nalgebra::{DMatrix, DVector};

/// Relative threshold below which a singular value counts as zero for
/// unregularized solves.
pub const RANK_RTOL: f64 = 1e-12;

const JACOBI_SWEEPS: usize = 80;

/// `G = U Σ Vᵀ` with a full square `U`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmallSvd {
    pub u: DMatrix<f64>,
    pub sigmas: Vec<f64>,
    pub v: DMatrix<f64>,
}

/// One-sided Jacobi SVD of a tall matrix. The left factor is completed to a
/// square orthogonal matrix.
pub fn small_svd(g: &DMatrix<f64>) -> Result<SmallSvd> {
    let (r, k) = g.shape();
    if k == 0 || r < k {
        return Err(Error::InvalidArgument(format!(
            "small_svd needs a tall matrix, got {r}x{k}"
        )));
    }
    let mut a = g.clone();
    let mut v = DMatrix::<f64>::identity(k, k);
    for _ in 0..JACOBI_SWEEPS {
        let mut rotated = false;
        for p in 0..k {
            for q in p + 1..k {
                let alpha = a.column(p).norm_squared();
                let beta = a.column(q).norm_squared();
                let gamma = a.column(p).dot(&a.column(q));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut a, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<usize> = (0..k).collect();
    let norms: Vec<f64> = (0..k).map(|j| a.column(j).norm()).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let sigmas: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let v = DMatrix::from_fn(k, k, |i, j| v[(i, order[j])]);

    let tiny = sigmas[0] * (r.max(k) as f64) * f64::EPSILON;
    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(r);
    for (j, &src) in order.iter().enumerate() {
        if sigmas[j] > tiny && sigmas[j] > 0.0 {
            cols.push(a.column(src) / sigmas[j]);
        }
    }
    // re-orthonormalize the computed left vectors, then complete the basis
    let rank = cols.len();
    for i in 0..rank {
        for _ in 0..2 {
            for j in 0..i {
                let d = cols[j].dot(&cols[i]);
                let cj = cols[j].clone();
                cols[i].axpy(-d, &cj, 1.0);
            }
        }
        let nrm = cols[i].norm();
        cols[i] /= nrm;
    }
    let mut e = 0;
    while cols.len() < r {
        let mut w = DVector::<f64>::zeros(r);
        w[e] = 1.0;
        e += 1;
        for _ in 0..2 {
            for c in &cols {
                let d = c.dot(&w);
                w.axpy(-d, c, 1.0);
            }
        }
        let nrm = w.norm();
        if nrm > 1e-8 {
            cols.push(w / nrm);
        }
    }
    // columns for zero singular values go after the nonzero ones; sigmas are
    // sorted, so position j < rank holds sigma_j
    let u = DMatrix::from_columns(&cols);
    Ok(SmallSvd { u, sigmas, v })
}

fn rotate(m: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    for i in 0..m.nrows() {
        let (x, y) = (m[(i, p)], m[(i, q)]);
        m[(i, p)] = c * x - s * y;
        m[(i, q)] = s * x + c * y;
    }
}

/// Tikhonov filter factors `σᵢ²/(σᵢ² + λ)`.
pub fn filter_factors(sigmas: &[f64], lambda: f64) -> Vec<f64> {
    sigmas.iter().map(|&s| filter(s, lambda)).collect()
}

fn filter(s: f64, lambda: f64) -> f64 {
    let s2 = s * s;
    if s2 == 0.0 && lambda == 0.0 {
        0.0
    } else {
        s2 / (s2 + lambda)
    }
}

/// `φ/σ = σ/(σ² + λ)` without forming `0/0`.
fn filter_over_sigma(s: f64, lambda: f64) -> f64 {
    if s == 0.0 {
        0.0
    } else {
        s / (s * s + lambda)
    }
}

/// Projected matrix, right-hand side and the SVD quantities derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedProblem {
    pub g: DMatrix<f64>,
    pub rhs: Vec<f64>,
    pub svd: SmallSvd,
    /// `Uᵀ c`, one entry per row of `G`.
    pub p_vec: Vec<f64>,
}

/// Regularized projected solution and its diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedSolve {
    pub lambda: f64,
    pub y: Vec<f64>,
    pub res_norm: f64,
    pub sol_norm: f64,
    pub trace_influence: f64,
}

impl ProjectedProblem {
    pub fn new(g: DMatrix<f64>, rhs: Vec<f64>) -> Result<Self> {
        if rhs.len() != g.nrows() {
            return Err(Error::DimensionMismatch {
                expected: g.nrows(),
                got: rhs.len(),
            });
        }
        let svd = small_svd(&g)?;
        let p_vec = (svd.u.transpose() * DVector::from_column_slice(&rhs))
            .as_slice()
            .to_vec();
        Ok(Self { g, rhs, svd, p_vec })
    }

    /// Right-hand side `β₁e₁`.
    pub fn with_beta(g: DMatrix<f64>, beta1: f64) -> Result<Self> {
        let mut rhs = vec![0.0; g.nrows()];
        rhs[0] = beta1;
        Self::new(g, rhs)
    }

    pub fn k(&self) -> usize {
        self.g.ncols()
    }
    pub fn rows(&self) -> usize {
        self.g.nrows()
    }
    pub fn sigmas(&self) -> &[f64] {
        &self.svd.sigmas
    }
    pub fn sigma_max(&self) -> f64 {
        self.svd.sigmas[0]
    }
    /// `‖c‖`, equal to `β₁` for the standard right-hand side.
    pub fn rhs_norm(&self) -> f64 {
        self.rhs.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Squared norm of the part of `c` outside the range of `G`.
    pub fn tail_sq(&self) -> f64 {
        self.p_vec[self.k()..].iter().map(|x| x * x).sum()
    }

    pub fn res_norm_sq(&self, lambda: f64) -> f64 {
        let head: f64 = self
            .svd
            .sigmas
            .iter()
            .zip(&self.p_vec)
            .map(|(&s, &p)| ((filter(s, lambda) - 1.0) * p).powi(2))
            .sum();
        head + self.tail_sq()
    }

    pub fn res_norm(&self, lambda: f64) -> f64 {
        self.res_norm_sq(lambda).sqrt()
    }

    pub fn sol_norm(&self, lambda: f64) -> f64 {
        self.svd
            .sigmas
            .iter()
            .zip(&self.p_vec)
            .map(|(&s, &p)| (filter_over_sigma(s, lambda) * p).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn trace_influence(&self, lambda: f64) -> f64 {
        self.svd.sigmas.iter().map(|&s| filter(s, lambda)).sum()
    }

    /// Smallest residual attainable as `λ → 0`.
    pub fn min_res_norm(&self) -> f64 {
        let tol = RANK_RTOL * self.sigma_max();
        let dropped: f64 = self
            .svd
            .sigmas
            .iter()
            .zip(&self.p_vec)
            .filter(|(s, _)| **s <= tol)
            .map(|(_, p)| p * p)
            .sum();
        (self.tail_sq() + dropped).sqrt()
    }

    pub fn is_rank_deficient(&self) -> bool {
        let smin = *self.svd.sigmas.last().unwrap();
        smin <= RANK_RTOL * self.sigma_max()
    }

    fn combine(&self, coeffs: impl Iterator<Item = f64>) -> Vec<f64> {
        let mut y = DVector::<f64>::zeros(self.k());
        for (j, c) in coeffs.enumerate() {
            if c != 0.0 {
                y.axpy(c, &self.svd.v.column(j), 1.0);
            }
        }
        y.as_slice().to_vec()
    }
}

pub fn solve_projected_tikhonov(pp: &ProjectedProblem, lambda: f64) -> Result<ProjectedSolve> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "lambda must be >= 0, got {lambda}"
        )));
    }
    if lambda == 0.0 && pp.is_rank_deficient() {
        return Err(Error::RankDeficient {
            sigma_min: *pp.sigmas().last().unwrap(),
        });
    }
    let y = pp.combine(
        pp.svd
            .sigmas
            .iter()
            .zip(&pp.p_vec)
            .map(|(&s, &p)| filter_over_sigma(s, lambda) * p),
    );
    Ok(ProjectedSolve {
        lambda,
        y,
        res_norm: pp.res_norm(lambda),
        sol_norm: pp.sol_norm(lambda),
        trace_influence: pp.trace_influence(lambda),
    })
}

/// Truncated SVD solution keeping the `trunc` largest singular triplets.
pub fn solve_projected_tsvd(pp: &ProjectedProblem, trunc: usize) -> Result<ProjectedSolve> {
    let k = pp.k();
    if trunc == 0 || trunc > k {
        return Err(Error::InvalidArgument(format!(
            "truncation index must be in 1..={k}"
        )));
    }
    let s = &pp.svd.sigmas;
    if s[trunc - 1] <= RANK_RTOL * s[0] {
        return Err(Error::RankDeficient {
            sigma_min: s[trunc - 1],
        });
    }
    let coeff: Vec<f64> = (0..k)
        .map(|i| if i < trunc { pp.p_vec[i] / s[i] } else { 0.0 })
        .collect();
    let y = pp.combine(coeff.iter().cloned());
    let res_sq: f64 = pp.p_vec[trunc..].iter().map(|p| p * p).sum();
    Ok(ProjectedSolve {
        lambda: 0.0,
        y,
        res_norm: res_sq.sqrt(),
        sol_norm: coeff.iter().map(|c| c * c).sum::<f64>().sqrt(),
        trace_influence: trunc as f64,
    })
}

/// `x = basis · y` over the first `y.len()` columns.
pub fn lift_solution(basis: &Basis, y: &[f64]) -> Result<Vec<f64>> {
    if y.len() > basis.ncols() {
        return Err(Error::DimensionMismatch {
            expected: basis.ncols(),
            got: y.len(),
        });
    }
    Ok(basis.combine(y))
}

/// LSMR projected problem: `G = [B_kᵀB_k ; α_{k+1}β_{k+1}e_kᵀ]` with
/// right-hand side `α₁β₁e₁` padded to `k+1` entries.
///
/// `b_k` is the `(k+1)×k` bidiagonal matrix, `alpha_next` is `α_{k+1}` (zero
/// if the process broke down) and `beta1 = ‖b‖`.
pub fn build_lsmr_projected(
    b_k: &DMatrix<f64>,
    alpha_next: f64,
    beta1: f64,
) -> Result<ProjectedProblem> {
    let k = b_k.ncols();
    if k == 0 || b_k.nrows() != k + 1 {
        return Err(Error::InvalidArgument(
            "expected a (k+1)xk bidiagonal matrix".into(),
        ));
    }
    let btb = b_k.transpose() * b_k;
    let mut g = DMatrix::zeros(k + 1, k);
    g.view_mut((0, 0), (k, k)).copy_from(&btb);
    g[(k, k - 1)] = alpha_next * b_k[(k, k - 1)];
    let mut rhs = vec![0.0; k + 1];
    rhs[0] = b_k[(0, 0)] * beta1;
    ProjectedProblem::new(g, rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::krylov::testutil::{random_matrix, random_vec};
    use crate::krylov::GkbFactorization;
    use crate::operators::DenseMatrixMap;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn standard(g: DMatrix<f64>) -> ProjectedProblem {
        ProjectedProblem::with_beta(g, 1.7).unwrap()
    }

    #[test]
    fn trivial_svds() {
        let s = small_svd(&DMatrix::from_row_slice(2, 1, &[2.0, 0.0])).unwrap();
        assert_relative_eq!(s.sigmas[0], 2.0, epsilon = 1e-15);
        let s = small_svd(&DMatrix::from_row_slice(2, 1, &[3.0, 4.0])).unwrap();
        assert_relative_eq!(s.sigmas[0], 5.0, epsilon = 1e-14);
    }

    #[test]
    fn svd_matches_eigendecomposition_oracle() {
        for seed in 0..10 {
            let g = random_matrix(11, 10, seed);
            let s = small_svd(&g).unwrap();
            let sig = DMatrix::from_fn(11, 10, |i, j| if i == j { s.sigmas[i] } else { 0.0 });
            assert!((&s.u * sig * s.v.transpose() - &g).norm() <= 1e-12 * g.norm());
            assert!((s.u.transpose() * &s.u - DMatrix::identity(11, 11)).norm() < 1e-12);
            assert!((s.v.transpose() * &s.v - DMatrix::identity(10, 10)).norm() < 1e-12);
            assert!(s.sigmas.windows(2).all(|w| w[0] >= w[1]));
            let mut eig: Vec<f64> = (g.transpose() * &g)
                .symmetric_eigenvalues()
                .iter()
                .map(|l| l.max(0.0).sqrt())
                .collect();
            eig.sort_by(|a, b| b.total_cmp(a));
            for (a, b) in s.sigmas.iter().zip(&eig) {
                assert!((a - b).abs() <= 1e-10 * eig[0]);
            }
        }
    }

    #[test]
    fn svd_of_rank_deficient_matrix_is_complete() {
        let mut g = random_matrix(6, 4, 3);
        let c0 = g.column(0).clone_owned();
        g.set_column(2, &(c0 * 2.0));
        let s = small_svd(&g).unwrap();
        assert!(s.sigmas[3] < 1e-12);
        assert!((s.u.transpose() * &s.u - DMatrix::identity(6, 6)).norm() < 1e-12);
        let sig = DMatrix::from_fn(6, 4, |i, j| if i == j { s.sigmas[i] } else { 0.0 });
        assert!((&s.u * sig * s.v.transpose() - &g).norm() < 1e-12 * g.norm());
    }

    #[test]
    fn filter_factor_basics() {
        assert_eq!(filter_factors(&[2.0], 0.0), vec![1.0]);
        assert_eq!(filter_factors(&[1.0], 1.0), vec![0.5]);
        assert!(filter_factors(&[3.0], 1e12 * 9.0)[0] <= 1e-11);
    }

    #[test]
    fn exact_solve_square_system() {
        let mut g = DMatrix::zeros(4, 3);
        g.view_mut((0, 0), (3, 3))
            .copy_from(&(random_matrix(3, 3, 1) + DMatrix::identity(3, 3) * 3.0));
        let pp = standard(g);
        let s = solve_projected_tikhonov(&pp, 0.0).unwrap();
        assert!(s.res_norm < 1e-12);
        assert_relative_eq!(s.trace_influence, 3.0, epsilon = 1e-14);
    }

    #[test]
    fn large_lambda_limit() {
        let pp = standard(random_matrix(6, 5, 2));
        let s = solve_projected_tikhonov(&pp, 1e14).unwrap();
        assert!(s.sol_norm < 1e-12);
        assert_relative_eq!(s.res_norm, 1.7, max_relative = 1e-10);
    }

    #[test]
    fn tikhonov_matches_normal_equations() {
        for seed in 0..10 {
            let g = random_matrix(6, 5, seed);
            let pp = standard(g.clone());
            let lam = 0.3;
            let s = solve_projected_tikhonov(&pp, lam).unwrap();
            let c = DVector::from_column_slice(&pp.rhs);
            let lhs = g.transpose() * &g + DMatrix::identity(5, 5) * lam;
            let y = lhs.clone().lu().solve(&(g.transpose() * &c)).unwrap();
            assert!((DVector::from_column_slice(&s.y) - &y).norm() < 1e-10 * y.norm());
            // explicit influence matrix G (GᵀG + λI)⁻¹ Gᵀ
            let infl = &g * lhs.try_inverse().unwrap() * g.transpose();
            assert_relative_eq!(s.res_norm, (&c - &g * &y).norm(), max_relative = 1e-10);
            assert_relative_eq!(s.sol_norm, y.norm(), max_relative = 1e-10);
            assert_relative_eq!(s.trace_influence, infl.trace(), max_relative = 1e-10);
        }
    }

    #[test]
    fn rank_deficient_zero_lambda_is_an_error() {
        let g = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let pp = standard(g);
        assert!(matches!(
            solve_projected_tikhonov(&pp, 0.0),
            Err(Error::RankDeficient { .. })
        ));
        assert!(solve_projected_tikhonov(&pp, 1e-3).is_ok());
        assert!(solve_projected_tikhonov(&pp, -1.0).is_err());
    }

    #[test]
    fn tsvd_cases() {
        let g = random_matrix(6, 5, 9);
        let pp = standard(g.clone());
        let full = solve_projected_tsvd(&pp, 5).unwrap();
        let tik = solve_projected_tikhonov(&pp, 0.0).unwrap();
        for (a, b) in full.y.iter().zip(&tik.y) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(solve_projected_tsvd(&pp, 0).is_err());
        for t in 1..=5 {
            let s = solve_projected_tsvd(&pp, t).unwrap();
            let svd = g.clone().svd(true, true);
            let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
            let mut idx: Vec<usize> = (0..5).collect();
            idx.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
            let c = DVector::from_column_slice(&pp.rhs);
            let mut y = DVector::zeros(5);
            for &i in &idx[..t] {
                let coef = u.column(i).dot(&c) / svd.singular_values[i];
                y += vt.row(i).transpose() * coef;
            }
            assert!((DVector::from_column_slice(&s.y) - y).norm() < 1e-10);
        }

        let d = DMatrix::from_row_slice(3, 2, &[3.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let pp = ProjectedProblem::new(d, vec![1.0, 1.0, 0.0]).unwrap();
        let s = solve_projected_tsvd(&pp, 1).unwrap();
        assert_relative_eq!(s.y[0].abs(), 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(s.y[1], 0.0);
    }

    #[test]
    fn lift_cases() {
        let mut basis = Basis::new(4);
        basis.push(vec![1.0, 0.0, 0.0, 0.0]);
        basis.push(vec![0.0, 0.6, 0.8, 0.0]);
        assert_eq!(lift_solution(&basis, &[1.0, 0.0]).unwrap(), basis.col(0));
        assert_eq!(lift_solution(&basis, &[0.0, 0.0]).unwrap(), vec![0.0; 4]);
        let x = lift_solution(&basis, &[0.3, -1.2]).unwrap();
        assert_relative_eq!(
            crate::linalg::norm(&x),
            (0.09f64 + 1.44).sqrt(),
            max_relative = 1e-12
        );
        assert!(lift_solution(&basis, &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn lsmr_k1_by_substitution() {
        let b = DMatrix::from_row_slice(2, 1, &[2.0, 0.5]);
        let pp = build_lsmr_projected(&b, 1.5, 3.0).unwrap();
        assert_relative_eq!(pp.g[(0, 0)], 4.25);
        assert_relative_eq!(pp.g[(1, 0)], 0.75);
        assert_eq!(pp.rhs, vec![6.0, 0.0]);
    }

    fn lsmr_oracle(am: &DMatrix<f64>, b: &[f64], lambda: f64, k: usize) {
        let a = DenseMatrixMap::from_matrix(am);
        let n = am.ncols();
        let mut f = GkbFactorization::new(b, n, true).unwrap();
        for _ in 0..=k {
            f.step(&a).unwrap();
        }
        let pp = build_lsmr_projected(&f.b_matrix(k), f.alphas()[k], f.beta1()).unwrap();
        let s = solve_projected_tikhonov(&pp, lambda).unwrap();
        let v = f.v_basis().to_matrix(k);
        let bv = DVector::from_column_slice(b);
        // min ‖Aᵀ(b − A V y)‖² + λ‖y‖²
        let c = am.transpose() * am * &v;
        let rhs = am.transpose() * &bv;
        let y = (c.transpose() * &c + DMatrix::identity(k, k) * lambda)
            .lu()
            .solve(&(c.transpose() * rhs))
            .unwrap();
        assert!(
            (DVector::from_column_slice(&s.y) - &y).norm() < 1e-8 * y.norm(),
            "k={k} lambda={lambda}"
        );
    }

    #[test]
    fn lsmr_matches_dense_oracle() {
        let am = random_matrix(10, 8, 31);
        let b = random_vec(10, 32);
        for k in 1..=6 {
            lsmr_oracle(&am, &b, 0.0, k);
            lsmr_oracle(&am, &b, 0.05, k);
        }
    }

    #[test]
    fn appendix_identities_over_lambdas() {
        for seed in 0..20 {
            let g = random_matrix(8, 7, 100 + seed);
            let pp = standard(g.clone());
            let c = DVector::from_column_slice(&pp.rhs);
            for lam in [1e-6, 1e-2, 1.0, 1e3] {
                let s = solve_projected_tikhonov(&pp, lam).unwrap();
                let inv = (g.transpose() * &g + DMatrix::identity(7, 7) * lam)
                    .try_inverse()
                    .unwrap();
                let areg = &inv * g.transpose();
                let y = &areg * &c;
                assert_relative_eq!(s.res_norm, (&c - &g * &y).norm(), max_relative = 1e-10);
                assert_relative_eq!(s.sol_norm, y.norm(), max_relative = 1e-10);
                assert_relative_eq!(
                    s.trace_influence,
                    (&g * &areg).trace(),
                    max_relative = 1e-10
                );
            }
        }
    }

    proptest! {
        #[test]
        fn monotone_in_lambda(seed in 0u64..1000) {
            let pp = standard(random_matrix(7, 6, seed));
            let grid: Vec<f64> = (0..30).map(|i| 10f64.powf(-8.0 + 0.4 * i as f64)).collect();
            for w in grid.windows(2) {
                prop_assert!(pp.res_norm(w[1]) >= pp.res_norm(w[0]) * (1.0 - 1e-12));
                prop_assert!(pp.sol_norm(w[1]) <= pp.sol_norm(w[0]) * (1.0 + 1e-12));
                let t = pp.trace_influence(w[0]);
                prop_assert!((0.0..=6.0 + 1e-12).contains(&t));
            }
        }

        #[test]
        fn filter_factors_in_unit_interval(s in 0.0f64..1e3, l1 in 0.0f64..1e3, l2 in 0.0f64..1e3) {
            let (lo, hi) = if l1 < l2 { (l1, l2) } else { (l2, l1) };
            let a = filter_factors(&[s], lo)[0];
            let b = filter_factors(&[s], hi)[0];
            prop_assert!((0.0..=1.0).contains(&a));
            prop_assert!(b <= a);
            let bigger = filter_factors(&[s + 1.0], lo)[0];
            prop_assert!(bigger >= a);
        }
    }
}
