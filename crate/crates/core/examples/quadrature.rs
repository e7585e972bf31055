//! Gauss and Gauss-Radau bounds on the full Tikhonov residual from a few
//! Golub-Kahan steps, checked against the exact value from a dense SVD.

use hybrid_krylov::direct::{tikhonov_direct, DenseSVD};
use hybrid_krylov::krylov::GkbFactorization;
use hybrid_krylov::linalg::{norm, sub};
use hybrid_krylov::paramselect::quadrature_bounds;
use hybrid_krylov::testproblems::{make_deblur_problem, PsfParams};

fn main() -> hybrid_krylov::Result<()> {
    let prob = make_deblur_problem(16, PsfParams::default(), 1e-2, 0)?;
    let svd = DenseSVD::from_operator(prob.a.as_ref())?;
    let lambda = 1e-3;
    let x = tikhonov_direct(&svd, &prob.b, lambda)?;
    let exact = norm(&sub(&prob.b, &prob.a.apply(&x)?)).powi(2);

    let mut gkb = GkbFactorization::new(&prob.b, prob.a.cols(), true)?;
    println!("exact residual^2 = {exact:.6e}");
    for k in 1..=20 {
        gkb.step(prob.a.as_ref())?;
        let q = quadrature_bounds(&gkb, k, lambda, norm(&prob.b))?;
        println!("k={k:>2}  {:.6e} <= r^2 <= {:.6e}", q.lower, q.upper);
    }
    Ok(())
}
