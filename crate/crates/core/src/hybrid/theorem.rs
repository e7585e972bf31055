use crate::error::Result;
use crate::krylov::GkbFactorization;
use crate::operators::DenseMatrixMap;
use crate::projected::{solve_projected_tikhonov, ProjectedProblem};
use nalgebra::{DMatrix, DVector};

/// Checks that the hybrid LSQR iterate at fixed `λ` equals the minimizer of
/// the full Tikhonov functional over the range of `V_k`, to `1e-8‖x‖`.
pub fn theorem_equivalence_check(
    a: &DMatrix<f64>,
    b: &[f64],
    lambda: f64,
    k: usize,
) -> Result<bool> {
    let op = DenseMatrixMap::from_matrix(a);
    let mut f = GkbFactorization::new(b, a.ncols(), true)?;
    while f.k() < k && !f.breakdown() {
        f.step(&op)?;
    }
    let k = f.k();
    let pp = ProjectedProblem::with_beta(f.b_matrix(k), f.beta1())?;
    let y = solve_projected_tikhonov(&pp, lambda)?.y;
    let v = f.v_basis().to_matrix(k);
    let x_hybrid = &v * DVector::from_vec(y);

    let bv = DVector::from_column_slice(b);
    let n = a.ncols();
    let h = v.transpose() * (a.transpose() * a + DMatrix::identity(n, n) * lambda) * &v;
    let rhs = v.transpose() * a.transpose() * bv;
    let Some(z) = h.lu().solve(&rhs) else {
        return Ok(false);
    };
    let x_restricted = &v * z;
    let scale = x_restricted.norm().max(f64::MIN_POSITIVE);
    Ok((x_hybrid - x_restricted).norm() <= 1e-8 * scale)
}
