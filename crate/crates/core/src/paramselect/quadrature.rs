use crate::error::{Error, Result};
use crate::krylov::GkbFactorization;
use crate::projected::small_svd;
use nalgebra::DMatrix;

/// Bounds on `‖b − A x(λ)‖² = λ² bᵀ(AAᵀ + λI)⁻² b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureBounds {
    /// Gauss rule with `B_{k,k}B_{k,k}ᵀ`.
    pub lower: f64,
    /// Gauss-Radau rule with a node at zero, `B_k B_kᵀ`.
    pub upper: f64,
}

/// `λ²‖b‖² e₁ᵀ (B Bᵀ + λI)⁻² e₁` through the SVD of `B`.
fn rule_value(b: &DMatrix<f64>, lambda: f64, norm_b: f64) -> Result<f64> {
    let svd = small_svd(b)?;
    let r = b.nrows();
    let mut acc = 0.0;
    for i in 0..r {
        let s2 = svd.sigmas.get(i).map_or(0.0, |s| s * s);
        let w = svd.u[(0, i)];
        acc += w * w * (lambda / (s2 + lambda)).powi(2);
    }
    Ok(acc * norm_b * norm_b)
}

pub fn quadrature_bounds(
    gkb: &GkbFactorization,
    k: usize,
    lambda: f64,
    norm_b: f64,
) -> Result<QuadratureBounds> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(
            "quadrature bounds need lambda > 0".into(),
        ));
    }
    if k == 0 || k > gkb.k() {
        return Err(Error::InvalidArgument(format!(
            "k must be in 1..={}",
            gkb.k()
        )));
    }
    // the square block is square, so pad it to tall form with a zero row is
    // unnecessary: small_svd accepts r == k
    let lower = rule_value(&gkb.b_square(k), lambda, norm_b)?;
    let upper = rule_value(&gkb.b_matrix(k), lambda, norm_b)?;
    Ok(QuadratureBounds { lower, upper })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::krylov::testutil::{random_matrix, random_vec};
    use crate::operators::DenseMatrixMap;
    use nalgebra::DVector;

    fn true_residual_sq(a: &DMatrix<f64>, b: &[f64], lambda: f64) -> f64 {
        let m = a.nrows();
        let bv = DVector::from_column_slice(b);
        let k = (a * a.transpose() + DMatrix::identity(m, m) * lambda).lu();
        let w = k.solve(&bv).unwrap();
        (w * lambda).norm_squared()
    }

    fn factor(a: &DMatrix<f64>, b: &[f64], steps: usize) -> GkbFactorization {
        let op = DenseMatrixMap::from_matrix(a);
        let mut f = GkbFactorization::new(b, a.ncols(), true).unwrap();
        for _ in 0..steps {
            f.step(&op).unwrap();
        }
        f
    }

    #[test]
    fn gauss_is_exact_at_full_degree_for_square_operators() {
        let a = random_matrix(5, 5, 1);
        let b = random_vec(5, 2);
        let f = factor(&a, &b, 5);
        let nb = crate::linalg::norm(&b);
        for lam in [1e-2, 0.1, 1.0] {
            let q = quadrature_bounds(&f, 5, lam, nb).unwrap();
            let t = true_residual_sq(&a, &b, lam);
            assert!((q.lower - t).abs() <= 1e-10 * t);
        }
    }

    #[test]
    fn radau_is_exact_at_full_degree_for_tall_operators() {
        let a = random_matrix(6, 5, 3);
        let b = random_vec(6, 4);
        let f = factor(&a, &b, 5);
        let nb = crate::linalg::norm(&b);
        let q = quadrature_bounds(&f, 5, 0.1, nb).unwrap();
        let t = true_residual_sq(&a, &b, 0.1);
        assert!((q.upper - t).abs() <= 1e-10 * t);
        assert!(q.lower <= t);
        // with b in the range of A the Gauss rule is exact as well
        let x = random_vec(5, 9);
        let bin: Vec<f64> = (&a * DVector::from_vec(x)).as_slice().to_vec();
        let f = factor(&a, &bin, 5);
        let q = quadrature_bounds(&f, 5, 0.1, crate::linalg::norm(&bin)).unwrap();
        let t = true_residual_sq(&a, &bin, 0.1);
        assert!((q.lower - t).abs() <= 1e-10 * t);
    }

    #[test]
    fn sandwich_and_shrinking_gap() {
        let a = random_matrix(12, 8, 5);
        let b = random_vec(12, 6);
        let f = factor(&a, &b, 8);
        let nb = crate::linalg::norm(&b);
        let t = true_residual_sq(&a, &b, 0.1);
        let mut last = f64::INFINITY;
        for k in 3..=8 {
            let q = quadrature_bounds(&f, k, 0.1, nb).unwrap();
            assert!(
                q.lower < t && t < q.upper,
                "k={k}: {} {} {}",
                q.lower,
                t,
                q.upper
            );
            let gap = q.upper - q.lower;
            assert!(gap <= last * (1.0 + 1e-12));
            last = gap;
        }
    }

    #[test]
    fn large_lambda_limit_and_errors() {
        let a = random_matrix(7, 5, 8);
        let b = random_vec(7, 9);
        let f = factor(&a, &b, 3);
        let nb = crate::linalg::norm(&b);
        let q = quadrature_bounds(&f, 3, 1e10, nb).unwrap();
        assert!((q.lower / (nb * nb) - 1.0).abs() < 1e-8);
        assert!((q.upper / (nb * nb) - 1.0).abs() < 1e-8);
        assert!(quadrature_bounds(&f, 3, 0.0, nb).is_err());
        assert!(quadrature_bounds(&f, 4, 1.0, nb).is_err());
    }
}
