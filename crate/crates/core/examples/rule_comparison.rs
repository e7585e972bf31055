//! Final iteration, parameter and error for every parameter-choice rule on
//! the same blurred image.

use hybrid_krylov::hybrid::{run_hybrid, HybridOptions, Method, StopFlags};
use hybrid_krylov::paramselect::{Rule, RuleConfig};
use hybrid_krylov::testproblems::{make_deblur_problem, PsfParams};

fn main() -> hybrid_krylov::Result<()> {
    let prob = make_deblur_problem(32, PsfParams::default(), 1e-2, 2)?;
    let eps = prob.noise_norm();
    let sigma2 = prob.sigma * prob.sigma;

    let rules = [
        Rule::Dp,
        Rule::Gcv,
        Rule::Wgcv,
        Rule::Upre,
        Rule::Lcurve,
        Rule::Reginska,
        Rule::Optimal,
    ];
    println!(
        "{:<10} {:>4} {:>12} {:>9} {:>9}",
        "rule", "k", "lambda", "relerr", "best"
    );
    for rule in rules {
        let cfg = RuleConfig::new(rule).with_epsilon(eps).with_sigma2(sigma2);
        let mut opts = HybridOptions::new(Method::HybridLsqr, cfg);
        opts.max_iter = 50;
        opts.stop_on = StopFlags::NONE;
        let log = run_hybrid(prob.a.as_ref(), &prob.b, &opts, Some(&prob.x_true))?;
        let errs = log.rel_errors();
        let best = errs.iter().cloned().fold(f64::INFINITY, f64::min);
        let last = log.final_record().unwrap();
        println!(
            "{:<10} {:>4} {:>12.4e} {:>9.5} {:>9.5}",
            rule.name(),
            last.k,
            last.lambda,
            errs[errs.len() - 1],
            best
        );
    }
    Ok(())
}
