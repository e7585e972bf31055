//! General-form Tikhonov with a first-difference penalty, solved through the
//! standard-form transformation, against the plain `‖x‖` penalty on a 1-D
//! piecewise-constant signal.

use hybrid_krylov::hybrid::{run_hybrid, run_priorconditioned, HybridOptions, Method};
use hybrid_krylov::operators::{DenseMatrixMap, FirstDifference};
use hybrid_krylov::paramselect::{Rule, RuleConfig};
use hybrid_krylov::testproblems::add_noise;
use hybrid_krylov::LinearMap;

fn gaussian_blur(n: usize, width: f64) -> DenseMatrixMap {
    let mut entries = vec![0.0; n * n];
    for i in 0..n {
        let row: Vec<f64> = (0..n)
            .map(|j| (-((i as f64 - j as f64) / width).powi(2) / 2.0).exp())
            .collect();
        let s: f64 = row.iter().sum();
        for (j, v) in row.iter().enumerate() {
            entries[i * n + j] = v / s;
        }
    }
    DenseMatrixMap::new(n, n, entries).unwrap()
}

fn main() -> hybrid_krylov::Result<()> {
    let n = 128;
    let x_true: Vec<f64> = (0..n)
        .map(|i| match i * 4 / n {
            0 => 0.2,
            1 => 1.0,
            2 => 0.5,
            _ => 0.8,
        })
        .collect();
    let a = gaussian_blur(n, 3.0);
    let data = add_noise(&a.apply(&x_true)?, 1e-2, 5);

    let rule = RuleConfig::new(Rule::Dp).with_epsilon(hybrid_krylov::linalg::norm(&data.e));
    let mut opts = HybridOptions::new(Method::HybridLsqr, rule);
    opts.max_iter = 60;

    let standard = run_hybrid(&a, &data.b, &opts, Some(&x_true))?;
    let l_inv = FirstDifference::new(n).inverse();
    let general = run_priorconditioned(&a, &l_inv, &data.b, &opts, Some(&x_true))?;

    for (name, log) in [("||x||", &standard), ("||Dx||", &general)] {
        let r = log.final_record().unwrap();
        println!(
            "{name:<7} k={:<3} lambda={:.3e} relerr={:.4}",
            r.k,
            r.lambda,
            r.rel_err.unwrap()
        );
    }
    Ok(())
}
