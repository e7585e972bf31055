//! Parallel-beam CT of the Shepp-Logan phantom, comparing hybrid LSQR and
//! hybrid LSMR under the discrepancy principle with the true noise norm.

use hybrid_krylov::hybrid::{run_hybrid, HybridOptions, Method};
use hybrid_krylov::paramselect::{Rule, RuleConfig};
use hybrid_krylov::testproblems::{default_tomo_geometry, make_tomo_problem};

fn main() -> hybrid_krylov::Result<()> {
    let side = 32;
    let (rays, angles) = default_tomo_geometry(side, 90);
    let prob = make_tomo_problem(side, rays, &angles, 1e-2, 1)?;
    println!("A is {}x{}", prob.a.rows(), prob.a.cols());

    for method in [Method::HybridLsqr, Method::HybridLsmr] {
        let rule = RuleConfig::new(Rule::Dp).with_epsilon(prob.noise_norm());
        let mut opts = HybridOptions::new(method, rule);
        opts.max_iter = 80;
        let log = run_hybrid(prob.a.as_ref(), &prob.b, &opts, Some(&prob.x_true))?;
        let last = log.final_record().unwrap();
        println!(
            "{:<12} k={:<3} lambda={:.3e} relerr={:.4} ({})",
            method.to_string(),
            last.k,
            last.lambda,
            last.rel_err.unwrap(),
            log.termination.name()
        );
    }
    Ok(())
}
