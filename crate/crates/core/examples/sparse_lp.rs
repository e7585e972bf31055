//! Recovering a spike train with the flexible Golub-Kahan ℓ1 hybrid method,
//! next to standard ℓ2 hybrid LSQR at the same discrepancy.

use hybrid_krylov::hybrid::{
    run_flexible_lp, run_hybrid, FlexibleOptions, HybridOptions, Method, RegMatrix,
};
use hybrid_krylov::operators::DenseMatrixMap;
use hybrid_krylov::paramselect::{Rule, RuleConfig};
use hybrid_krylov::testproblems::add_noise;
use hybrid_krylov::LinearMap;

fn main() -> hybrid_krylov::Result<()> {
    let n = 64;
    let mut x_true = vec![0.0; n];
    for (i, v) in [(7, 1.0), (19, 0.7), (31, 1.2), (44, 0.5), (56, 0.9)] {
        x_true[i] = v;
    }
    let mut entries = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            entries[i * n + j] = (-((i as f64 - j as f64) / 2.0).powi(2) / 2.0).exp();
        }
    }
    let a = DenseMatrixMap::new(n, n, entries)?;
    let data = add_noise(&a.apply(&x_true)?, 1e-2, 8);

    let rule = RuleConfig::new(Rule::Dp).with_epsilon(hybrid_krylov::linalg::norm(&data.e));
    let mut opts = HybridOptions::new(Method::HybridLsqr, rule);
    opts.max_iter = 40;
    let l2 = run_hybrid(&a, &data.b, &opts, Some(&x_true))?;
    let l1 = run_flexible_lp(
        &a,
        &data.b,
        &FlexibleOptions::new(1.0, 1e-3, RegMatrix::WeightedRFactor),
        &opts,
        Some(&x_true),
    )?;

    for (name, log) in [("l2", &l2), ("l1", &l1)] {
        let big = log.x.iter().filter(|v| v.abs() > 0.1).count();
        println!(
            "{name}: k={} relerr={:.4} entries above 0.1: {big}",
            log.k(),
            log.rel_errors().last().unwrap()
        );
    }
    println!("spikes at 7 19 31 44 56");
    for (i, v) in l1.x.iter().enumerate().filter(|(_, v)| v.abs() > 0.1) {
        println!("  x[{i:>2}] = {v:.3}");
    }
    Ok(())
}
