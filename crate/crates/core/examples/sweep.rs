//! Multi-realization sweep over parameter rules with the relative-error
//! surface, equivalent to `hybrid-krylov sweep --realizations 4`.

use hybrid_krylov::cli::{cmd_sweep, ExperimentConfig};

fn main() -> hybrid_krylov::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.n_realizations = 4;
    cfg.output = std::env::temp_dir().join("hybrid_krylov_sweep");
    let out = cmd_sweep(&cfg, None)?;
    for row in &out.rows {
        println!(
            "seed {} {:<5} k={:<3} lambda={:.3e} relerr={:.4}",
            row.seed,
            row.rule.name(),
            row.stop_k,
            row.lambda_final,
            row.relerr_final
        );
    }
    println!("csv files in {}", cfg.output.display());
    Ok(())
}
