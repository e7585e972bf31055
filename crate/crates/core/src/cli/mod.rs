//! Experiment runner: configuration, the `run`, `sweep`, `testproblem` and
//! `check` subcommands, CSV logs and PGM images.
//!
//! Output schemas (UTF-8, header row first):
//!
//! - `log.csv`: `k,lambda,relres,relerr,sol_norm,rule_value,stop_flags`
//! - `sweep.csv`: `seed,rule,stop_k,lambda_final,relerr_final`
//! - `rre_surface.csv`: `k,lambda,relerr`
//!
//! Every command also writes `meta.txt`: the full configuration as
//! `key = value` lines followed by `#`-prefixed result lines, so it can be
//! passed back with `--config` to repeat the experiment.

mod check;
mod commands;
mod config;
mod pgm;

pub use check::{format_outcomes, run_checks, CheckOutcome};
pub use commands::{
    build_setup, cmd_run, cmd_sweep, cmd_testproblem, execute, load_dense_matrix, load_vector,
    log_csv, resolve_noise, rre_surface, surface_csv, sweep_csv, sweep_rows, thread_pool,
    write_vector, NoiseInfo, RunArtifacts, Setup, SweepOutput, SweepRow, THREADS_ENV,
};
pub use config::{parse_stop_flags, EpsilonSpec, ExperimentConfig, ProblemSpec, KEYS};
pub use pgm::{decode_pgm, encode_pgm, normalize, read_pgm, write_pgm, Pgm, PgmBounds};

use crate::error::{Error, Result};
use clap::{Args, CommandFactory, Parser, Subcommand};
use std::ffi::OsString;
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(
    name = "hybrid-krylov",
    version,
    about = "Hybrid Krylov projection methods for ill-posed inverse problems"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one problem instance and write log.csv, images and meta.txt.
    Run(ExperimentArgs),
    /// Run every rule over several noise realizations in parallel.
    Sweep {
        #[command(flatten)]
        args: ExperimentArgs,
        /// Worker threads; overrides HYBRID_KRYLOV_THREADS.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Write a test problem (truth, data, images) to the output directory.
    Testproblem(ExperimentArgs),
    /// Run the built-in invariant suite.
    Check,
}

/// Flags shared by the experiment subcommands. Precedence: defaults, then
/// `--config`, then the named flags, then `--set` pairs.
#[derive(Debug, Args, Default)]
pub struct ExperimentArgs {
    /// key = value configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Extra key=value pairs, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// deblur, tomo or dense:FILE.
    #[arg(long)]
    pub problem: Option<String>,
    /// Image side N.
    #[arg(long)]
    pub n: Option<String>,
    /// Relative noise level ‖e‖/‖A x‖.
    #[arg(long)]
    pub noise: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    /// hybrid-lsqr, hybrid-gmres, hybrid-lsmr, lsqr or gmres.
    #[arg(long)]
    pub method: Option<String>,
    /// dp, gcv, wgcv, upre, lcurve, reginska, optimal or fixed.
    #[arg(long)]
    pub rule: Option<String>,
    /// Comma-separated rules for sweep.
    #[arg(long)]
    pub rules: Option<String>,
    #[arg(long)]
    pub lambda: Option<String>,
    #[arg(long)]
    pub eta: Option<String>,
    /// auto, true or a value.
    #[arg(long)]
    pub epsilon: Option<String>,
    #[arg(long)]
    pub sigma2: Option<String>,
    #[arg(long)]
    pub omega: Option<String>,
    #[arg(long)]
    pub max_iter: Option<String>,
    #[arg(long)]
    pub min_iter: Option<String>,
    /// Stabilization criteria, e.g. lx; none disables.
    #[arg(long)]
    pub stop_on: Option<String>,
    #[arg(long)]
    pub realizations: Option<String>,
    /// Norm exponent for the flexible driver.
    #[arg(long)]
    pub flex_p: Option<String>,
    #[arg(long)]
    pub truth: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<String>,
}

impl ExperimentArgs {
    pub fn to_config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_file(p)?,
            None => ExperimentConfig::default(),
        };
        let flags = [
            ("problem", &self.problem),
            ("n", &self.n),
            ("noise_level", &self.noise),
            ("seed", &self.seed),
            ("method", &self.method),
            ("rule", &self.rule),
            ("rules", &self.rules),
            ("lambda", &self.lambda),
            ("eta", &self.eta),
            ("epsilon", &self.epsilon),
            ("sigma2", &self.sigma2),
            ("omega", &self.omega),
            ("max_iter", &self.max_iter),
            ("min_iter", &self.min_iter),
            ("stop_on", &self.stop_on),
            ("n_realizations", &self.realizations),
            ("flex_p", &self.flex_p),
            ("truth_file", &self.truth),
            ("output", &self.out),
        ];
        for (key, v) in flags {
            if let Some(v) = v {
                cfg.set(key, v)?;
            }
        }
        for pair in &self.set {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got '{pair}'")))?;
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }
}

fn report(res: Result<()>) -> i32 {
    match res {
        Ok(()) => 0,
        Err(Error::Config(msg)) => {
            eprintln!("error: {msg}\n");
            eprintln!("{}", Cli::command().render_usage());
            eprintln!("known config keys: {}", KEYS.join(", "));
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

/// Runs a parsed command; returns the process exit code.
pub fn dispatch(cli: Cli) -> i32 {
    let res = match cli.command {
        Command::Run(args) => args.to_config().and_then(|c| {
            let art = cmd_run(&c)?;
            println!(
                "{}: {} iterations, {}",
                c.output.display(),
                art.log.k(),
                art.log.termination.name()
            );
            Ok(())
        }),
        Command::Sweep { args, threads } => args.to_config().and_then(|c| {
            let out = cmd_sweep(&c, threads)?;
            println!("{}: {} runs", c.output.display(), out.rows.len());
            Ok(())
        }),
        Command::Testproblem(args) => args.to_config().and_then(|c| {
            for f in cmd_testproblem(&c)? {
                println!("{}", f.display());
            }
            Ok(())
        }),
        Command::Check => {
            let out = run_checks();
            print!("{}", format_outcomes(&out));
            if out.iter().all(|o| o.passed) {
                Ok(())
            } else {
                Err(Error::InvalidArgument("invariant check failed".into()))
            }
        }
    };
    report(res)
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => dispatch(cli),
        Err(e) => {
            let _ = e.print();
            e.exit_code()
        }
    }
}
