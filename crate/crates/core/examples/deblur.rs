//! Hybrid LSQR with weighted GCV on the 32×32 Gaussian-blur problem.
//!
//! Prints one line per iteration and writes the reconstruction as a PGM.

use hybrid_krylov::cli::write_pgm;
use hybrid_krylov::hybrid::{run_hybrid, HybridOptions, Method};
use hybrid_krylov::paramselect::{Rule, RuleConfig};
use hybrid_krylov::testproblems::{make_deblur_problem, Image, PsfParams};

fn main() -> hybrid_krylov::Result<()> {
    let prob = make_deblur_problem(32, PsfParams::default(), 1e-2, 0)?;
    let mut opts = HybridOptions::new(Method::HybridLsqr, RuleConfig::new(Rule::Wgcv));
    opts.max_iter = 60;
    let log = run_hybrid(prob.a.as_ref(), &prob.b, &opts, Some(&prob.x_true))?;

    println!(
        "{:>4} {:>12} {:>8} {:>10}",
        "k", "lambda", "omega", "relerr"
    );
    for r in &log.records {
        println!(
            "{:>4} {:>12.4e} {:>8.4} {:>10.5}",
            r.k,
            r.lambda,
            r.omega.unwrap_or(1.0),
            r.rel_err.unwrap_or(f64::NAN)
        );
    }
    println!(
        "stopped after {} iterations ({})",
        log.k(),
        log.termination.name()
    );

    let path = std::env::temp_dir().join("deblur_solution.pgm");
    write_pgm(&Image::square(32, log.x.clone())?, &path)?;
    println!("wrote {}", path.display());
    Ok(())
}
