use super::config::{EpsilonSpec, ExperimentConfig, ProblemSpec};
use super::pgm::{write_pgm, PgmBounds};
use crate::error::{Error, Result};
use crate::hybrid::{run_flexible_lp, run_hybrid, FlexibleOptions, Method, RunLog};
use crate::krylov::{ArnoldiFactorization, GkbFactorization, StepStatus};
use crate::linalg::{norm, rel_err, Basis};
use crate::operators::{build_tomo, BlurOperator, DenseMatrixMap, LinearMap};
use crate::paramselect::Rule;
use crate::projected::{solve_projected_tikhonov, ProjectedProblem};
use crate::testproblems::{
    default_tomo_geometry, estimate_noise_sigma, piecewise_smooth, shepp_logan, Image, TestProblem,
};
use nalgebra::DMatrix;
use rayon::prelude::*;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

/// Environment variable capping the sweep worker pool.
pub const THREADS_ENV: &str = "HYBRID_KRYLOV_THREADS";

/// Operator, truth and display shapes, shared by every noise realization.
#[derive(Clone)]
pub struct Setup {
    pub a: Arc<dyn LinearMap>,
    pub x_true: Vec<f64>,
    pub side: usize,
    /// `(width, height)` of the unknown and of the data as images.
    pub solution_shape: (usize, usize),
    pub data_shape: (usize, usize),
}

impl Setup {
    pub fn realize(&self, noise_level: f64, seed: u64) -> Result<TestProblem> {
        TestProblem::from_operator(
            self.a.clone(),
            self.x_true.clone(),
            noise_level,
            seed,
            self.side,
        )
    }

    pub fn as_solution_image(&self, x: &[f64]) -> Result<Image> {
        Image::new(self.solution_shape.0, self.solution_shape.1, x.to_vec())
    }

    pub fn as_data_image(&self, b: &[f64]) -> Result<Image> {
        Image::new(self.data_shape.0, self.data_shape.1, b.to_vec())
    }
}

fn vector_shape(len: usize) -> (usize, usize) {
    let s = (len as f64).sqrt().round() as usize;
    if s * s == len {
        (s, s)
    } else {
        (len, 1)
    }
}

fn read_numbers(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>().map_err(|_| {
                    Error::Config(format!("{}:{}: bad number '{s}'", path.display(), i + 1))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Dense matrix from a text file, one row per line.
pub fn load_dense_matrix(path: &Path) -> Result<DenseMatrixMap> {
    let rows = read_numbers(path)?;
    if rows.is_empty() {
        return Err(Error::Config(format!("{}: empty matrix", path.display())));
    }
    DenseMatrixMap::from_rows(&rows)
}

/// Vector from a text file, whitespace or newline separated.
pub fn load_vector(path: &Path) -> Result<Vec<f64>> {
    Ok(read_numbers(path)?.into_iter().flatten().collect())
}

pub fn write_vector(path: &Path, v: &[f64]) -> Result<()> {
    let mut s = String::with_capacity(v.len() * 24);
    for x in v {
        writeln!(s, "{x:e}").unwrap();
    }
    write_file(path, &s)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn build_setup(cfg: &ExperimentConfig) -> Result<Setup> {
    let n = cfg.n;
    match &cfg.problem {
        ProblemSpec::Deblur => {
            let a = BlurOperator::new(n, cfg.psf.build()?)?;
            Ok(Setup {
                a: Arc::new(a),
                x_true: piecewise_smooth(n)?.pixels,
                side: n,
                solution_shape: (n, n),
                data_shape: (n, n),
            })
        }
        ProblemSpec::Tomo => {
            let (p, angles) = default_tomo_geometry(n, cfg.views);
            let rays = cfg.rays.unwrap_or(p);
            let a = build_tomo(n, rays, &angles)?;
            Ok(Setup {
                a: Arc::new(a),
                x_true: shepp_logan(n)?.pixels,
                side: n,
                solution_shape: (n, n),
                data_shape: (rays, cfg.views),
            })
        }
        ProblemSpec::Dense(path) => {
            let a = load_dense_matrix(path)?;
            let truth = cfg
                .truth_file
                .as_ref()
                .ok_or_else(|| Error::Config("dense problems need truth_file".into()))?;
            let x_true = load_vector(truth)?;
            if x_true.len() != a.cols() {
                return Err(Error::DimensionMismatch {
                    expected: a.cols(),
                    got: x_true.len(),
                });
            }
            let (m, nc) = (a.rows(), a.cols());
            Ok(Setup {
                a: Arc::new(a),
                x_true,
                side: vector_shape(nc).0,
                solution_shape: vector_shape(nc),
                data_shape: vector_shape(m),
            })
        }
    }
}

/// Noise quantities handed to the parameter-choice rules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseInfo {
    pub epsilon: Option<f64>,
    pub source: &'static str,
    pub sigma2: f64,
    /// `√m · σ̂` from the Haar/MAD estimator.
    pub estimated_norm: f64,
    pub injected_norm: f64,
}

pub fn resolve_noise(cfg: &ExperimentConfig, rule: Rule, p: &TestProblem) -> NoiseInfo {
    let m = p.b.len() as f64;
    let estimated_norm = estimate_noise_sigma(&p.b) * m.sqrt();
    let injected_norm = p.noise_norm();
    let (epsilon, source) = match cfg.epsilon {
        Some(EpsilonSpec::Auto) => (Some(estimated_norm), "wavelet"),
        Some(EpsilonSpec::Known) => (Some(injected_norm), "injected"),
        Some(EpsilonSpec::Value(v)) => (Some(v), "config"),
        None if cfg.needs_epsilon(rule) => (Some(estimated_norm), "wavelet"),
        None => (None, "none"),
    };
    let sigma2 = epsilon.unwrap_or(estimated_norm).powi(2) / m;
    NoiseInfo {
        epsilon,
        source,
        sigma2,
        estimated_norm,
        injected_norm,
    }
}

/// Runs the configured driver with `rule` on one problem instance.
pub fn execute(cfg: &ExperimentConfig, rule: Rule, p: &TestProblem) -> Result<(RunLog, NoiseInfo)> {
    let noise = resolve_noise(cfg, rule, p);
    let opts = cfg.hybrid_options(rule, noise.epsilon, Some(noise.sigma2));
    let log = match cfg.flex_p {
        Some(pexp) => {
            let fo = FlexibleOptions::new(pexp, cfg.flex_tau, cfg.regmat);
            run_flexible_lp(&*p.a, &p.b, &fo, &opts, Some(&p.x_true))?
        }
        None => run_hybrid(&*p.a, &p.b, &opts, Some(&p.x_true))?,
    };
    Ok((log, noise))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:e}"))
}

/// `k,lambda,relres,relerr,sol_norm,rule_value,stop_flags`, one row per iteration.
pub fn log_csv(log: &RunLog, norm_b: f64) -> String {
    let mut s = String::from("k,lambda,relres,relerr,sol_norm,rule_value,stop_flags\n");
    for r in &log.records {
        writeln!(
            s,
            "{},{:e},{:e},{},{:e},{:e},{}",
            r.k,
            r.lambda,
            r.res_norm / norm_b,
            fmt_opt(r.rel_err),
            r.sol_norm,
            r.objective,
            r.flags.code()
        )
        .unwrap();
    }
    s
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))
}

/// Meta lines are comments so a `meta.txt` is itself a valid config file.
struct Meta(String);

impl Meta {
    fn new(cfg: &ExperimentConfig) -> Self {
        Meta(format!(
            "# hybrid-krylov {}\n{}",
            env!("CARGO_PKG_VERSION"),
            cfg.to_text()
        ))
    }
    fn put(&mut self, key: &str, value: impl std::fmt::Display) {
        writeln!(self.0, "# {key} = {value}").unwrap();
    }
    fn bounds(&mut self, name: &str, b: PgmBounds) {
        self.put(&format!("{name}_min"), format!("{:e}", b.min));
        self.put(&format!("{name}_max"), format!("{:e}", b.max));
    }
}

fn put_noise(meta: &mut Meta, noise: &NoiseInfo) {
    meta.put(
        "epsilon",
        noise.epsilon.map_or("none".into(), |e| format!("{e:e}")),
    );
    meta.put("epsilon_source", noise.source);
    meta.put("epsilon_estimated", format!("{:e}", noise.estimated_norm));
    meta.put("noise_norm_injected", format!("{:e}", noise.injected_norm));
    meta.put("sigma2", format!("{:e}", noise.sigma2));
}

/// Paths written by [`cmd_run`].
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub log: RunLog,
    pub noise: NoiseInfo,
    pub files: Vec<PathBuf>,
}

pub fn cmd_run(cfg: &ExperimentConfig) -> Result<RunArtifacts> {
    cfg.validate()?;
    let start = Instant::now();
    let setup = build_setup(cfg)?;
    let p = setup.realize(cfg.noise_level, cfg.seed)?;
    let rule = cfg.resolved_rule();
    let (log, noise) = execute(cfg, rule, &p)?;
    let wall = start.elapsed().as_secs_f64();

    let dir = &cfg.output;
    ensure_dir(dir)?;
    let mut files = Vec::new();
    let path = dir.join("log.csv");
    write_file(&path, &log_csv(&log, norm(&p.b)))?;
    files.push(path);

    let mut meta = Meta::new(cfg);
    meta.put("m", p.a.rows());
    meta.put("n_unknowns", p.a.cols());
    meta.put("rule_resolved", rule);
    put_noise(&mut meta, &noise);
    meta.put("termination", log.termination.name());
    meta.put("iterations", log.k());
    if let Some(r) = log.final_record() {
        meta.put("lambda_final", format!("{:e}", r.lambda));
        meta.put("relres_final", format!("{:e}", r.res_norm / norm(&p.b)));
        if let Some(e) = r.rel_err {
            meta.put("relerr_final", format!("{e:e}"));
        }
    }
    meta.put("wall_time_s", format!("{wall:.6}"));
    for (name, img) in [
        ("solution", setup.as_solution_image(&log.x)?),
        ("truth", setup.as_solution_image(&p.x_true)?),
        ("data", setup.as_data_image(&p.b)?),
    ] {
        let path = dir.join(format!("{name}.pgm"));
        let b = write_pgm(&img, &path)?;
        meta.bounds(name, b);
        files.push(path);
    }
    let path = dir.join("meta.txt");
    write_file(&path, &meta.0)?;
    files.push(path);
    log::info!(
        "run finished: {} after {} iterations",
        log.termination.name(),
        log.k()
    );
    Ok(RunArtifacts { log, noise, files })
}

/// One `sweep.csv` row.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub seed: u64,
    pub rule: Rule,
    pub stop_k: usize,
    pub lambda_final: f64,
    pub relerr_final: f64,
}

/// Worker pool sized by `threads`, else by `HYBRID_KRYLOV_THREADS`, else by
/// rayon's default.
pub fn thread_pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let n = match threads {
        Some(t) => t,
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => v.trim().parse().map_err(|_| {
                Error::Config(format!(
                    "{THREADS_ENV} must be a nonnegative integer, got '{v}'"
                ))
            })?,
            Err(_) => 0,
        },
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))
}

pub fn sweep_rows(
    cfg: &ExperimentConfig,
    setup: &Setup,
    pool: &rayon::ThreadPool,
) -> Result<Vec<SweepRow>> {
    let jobs: Vec<(u64, Rule)> = (0..cfg.n_realizations as u64)
        .flat_map(|r| cfg.rules.iter().map(move |&rule| (cfg.seed + r, rule)))
        .collect();
    pool.install(|| {
        jobs.par_iter()
            .map(|&(seed, rule)| {
                let p = setup.realize(cfg.noise_level, seed)?;
                let rule = match (rule, cfg.lambda) {
                    (Rule::Fixed(_), Some(l)) => Rule::Fixed(l),
                    (r, _) => r,
                };
                let (log, _) = execute(cfg, rule, &p)?;
                let last = log
                    .final_record()
                    .ok_or_else(|| Error::Config("run produced no iterates".into()))?;
                Ok(SweepRow {
                    seed,
                    rule,
                    stop_k: last.k,
                    lambda_final: last.lambda,
                    relerr_final: rel_err(&log.x, &p.x_true),
                })
            })
            .collect()
    })
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("seed,rule,stop_k,lambda_final,relerr_final\n");
    for r in rows {
        writeln!(
            s,
            "{},{},{},{:e},{:e}",
            r.seed, r.rule, r.stop_k, r.lambda_final, r.relerr_final
        )
        .unwrap();
    }
    s
}

/// Relative error of the Tikhonov-regularized projected solution on a
/// `(k, λ)` grid. Rows are ordered by `k`, then by increasing `λ`; the grid
/// spans `[1e-10, 1]·σ₁²` of the largest projected matrix.
pub fn rre_surface(
    a: &dyn LinearMap,
    b: &[f64],
    x_true: &[f64],
    method: Method,
    k_max: usize,
    n_lambda: usize,
    reorth: bool,
    pool: &rayon::ThreadPool,
) -> Result<Vec<(usize, f64, f64)>> {
    let (mats, basis): (Vec<DMatrix<f64>>, Basis) = if method.needs_square() {
        if !a.is_square() {
            return Err(Error::NotSquare("the GMRES surface"));
        }
        let mut f = ArnoldiFactorization::new(b, reorth)?;
        let mut mats = Vec::new();
        while f.k() < k_max {
            let st = f.step(a)?;
            mats.push(f.h_matrix(f.k()));
            if st == StepStatus::Breakdown {
                break;
            }
        }
        (mats, f.basis().clone())
    } else {
        let mut f = GkbFactorization::new(b, a.cols(), reorth)?;
        let mut mats = Vec::new();
        while f.k() < k_max {
            let st = f.step(a)?;
            mats.push(f.b_matrix(f.k()));
            if st == StepStatus::Breakdown {
                break;
            }
        }
        (mats, f.v_basis().clone())
    };
    let beta = norm(b);
    let last = ProjectedProblem::with_beta(mats.last().unwrap().clone(), beta)?;
    let s2 = last.sigma_max().powi(2).max(f64::MIN_POSITIVE);
    let lambdas: Vec<f64> = (0..n_lambda)
        .map(|i| s2 * 10f64.powf(-10.0 + 10.0 * i as f64 / (n_lambda - 1) as f64))
        .collect();
    let per_k: Vec<Result<Vec<(usize, f64, f64)>>> = pool.install(|| {
        mats.par_iter()
            .enumerate()
            .map(|(i, g)| {
                let k = i + 1;
                let pp = ProjectedProblem::with_beta(g.clone(), beta)?;
                let mut out = Vec::with_capacity(lambdas.len());
                for &l in &lambdas {
                    let sol = solve_projected_tikhonov(&pp, l)?;
                    let x = basis.combine(&sol.y);
                    out.push((k, l, rel_err(&x, x_true)));
                }
                Ok(out)
            })
            .collect()
    });
    let mut rows = Vec::new();
    for r in per_k {
        rows.extend(r?);
    }
    Ok(rows)
}

pub fn surface_csv(rows: &[(usize, f64, f64)]) -> String {
    let mut s = String::from("k,lambda,relerr\n");
    for (k, l, e) in rows {
        writeln!(s, "{k},{l:e},{e:e}").unwrap();
    }
    s
}

/// Contents of the two sweep CSVs.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
    pub sweep_csv: String,
    pub surface_csv: String,
}

pub fn cmd_sweep(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<SweepOutput> {
    cfg.validate()?;
    let start = Instant::now();
    let pool = thread_pool(threads)?;
    let setup = build_setup(cfg)?;
    let rows = sweep_rows(cfg, &setup, &pool)?;
    let p0 = setup.realize(cfg.noise_level, cfg.seed)?;
    let surface = rre_surface(
        &*p0.a,
        &p0.b,
        &p0.x_true,
        cfg.method,
        cfg.surface_k,
        cfg.surface_lambdas,
        cfg.reorth,
        &pool,
    )?;
    let out = SweepOutput {
        sweep_csv: sweep_csv(&rows),
        surface_csv: surface_csv(&surface),
        rows,
    };

    let dir = &cfg.output;
    ensure_dir(dir)?;
    write_file(&dir.join("sweep.csv"), &out.sweep_csv)?;
    write_file(&dir.join("rre_surface.csv"), &out.surface_csv)?;
    let mut meta = Meta::new(cfg);
    meta.put("m", p0.a.rows());
    meta.put("n_unknowns", p0.a.cols());
    meta.put("jobs", out.rows.len());
    meta.put("threads", pool.current_num_threads());
    meta.put("surface_rows", surface.len());
    meta.put(
        "wall_time_s",
        format!("{:.6}", start.elapsed().as_secs_f64()),
    );
    write_file(&dir.join("meta.txt"), &meta.0)?;
    Ok(out)
}

/// Writes the problem instance: truth, data, their images and, for
/// deblurring, the PSF.
pub fn cmd_testproblem(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let setup = build_setup(cfg)?;
    let p = setup.realize(cfg.noise_level, cfg.seed)?;
    let dir = &cfg.output;
    ensure_dir(dir)?;
    let mut files = Vec::new();
    for (name, v) in [
        ("x_true.txt", &p.x_true),
        ("b.txt", &p.b),
        ("b_true.txt", &p.b_true),
    ] {
        let path = dir.join(name);
        write_vector(&path, v)?;
        files.push(path);
    }
    let mut meta = Meta::new(cfg);
    meta.put("m", p.a.rows());
    meta.put("n_unknowns", p.a.cols());
    meta.put("noise_norm_injected", format!("{:e}", p.noise_norm()));
    meta.put("sigma", format!("{:e}", p.sigma));
    meta.put(
        "sigma_estimated",
        format!("{:e}", estimate_noise_sigma(&p.b)),
    );
    let mut images = vec![
        ("truth", setup.as_solution_image(&p.x_true)?),
        ("data", setup.as_data_image(&p.b)?),
    ];
    if cfg.problem == ProblemSpec::Deblur {
        let psf = cfg.psf.build()?;
        images.push(("psf", Image::square(psf.side(), psf.values().to_vec())?));
    }
    for (name, img) in images {
        let path = dir.join(format!("{name}.pgm"));
        meta.bounds(name, write_pgm(&img, &path)?);
        files.push(path);
    }
    let path = dir.join("meta.txt");
    write_file(&path, &meta.0)?;
    files.push(path);
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::pgm::read_pgm;
    use crate::operators::DiagonalMap;

    fn small(dir: &Path) -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.n = 16;
        c.psf.radius = 4;
        c.psf.s1 = 1.5;
        c.psf.s2 = 1.5;
        c.max_iter = 25;
        c.output = dir.to_path_buf();
        c
    }

    fn meta_value(meta: &str, key: &str) -> String {
        let prefix = format!("# {key} = ");
        meta.lines()
            .find_map(|l| l.strip_prefix(&prefix))
            .unwrap_or_else(|| panic!("{key} missing"))
            .to_string()
    }

    #[test]
    fn run_writes_all_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(dir.path());
        let art = cmd_run(&cfg).unwrap();
        for f in [
            "log.csv",
            "solution.pgm",
            "truth.pgm",
            "data.pgm",
            "meta.txt",
        ] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let log = std::fs::read_to_string(dir.path().join("log.csv")).unwrap();
        let mut lines = log.lines();
        assert_eq!(
            lines.next().unwrap(),
            "k,lambda,relres,relerr,sol_norm,rule_value,stop_flags"
        );
        assert_eq!(lines.count(), art.log.records.len());
        assert!(art.log.records.len() >= cfg.min_iter);
        let img = read_pgm(&dir.path().join("solution.pgm")).unwrap();
        assert_eq!((img.width, img.height), (16, 16));
        let meta = std::fs::read_to_string(dir.path().join("meta.txt")).unwrap();
        assert_eq!(meta_value(&meta, "termination"), art.log.termination.name());
        assert!(meta_value(&meta, "wall_time_s").parse::<f64>().unwrap() >= 0.0);
        assert!(meta_value(&meta, "truth_max").parse::<f64>().unwrap() > 0.0);
    }

    #[test]
    fn meta_reproduces_the_run() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(dir.path());
        cfg.rule = Rule::Dp;
        cfg.epsilon = Some(EpsilonSpec::Known);
        let first = cmd_run(&cfg).unwrap();
        let again = ExperimentConfig::from_file(&dir.path().join("meta.txt")).unwrap();
        assert_eq!(again, cfg);
        let second = cmd_run(&again).unwrap();
        assert_eq!(first.log.records, second.log.records);
        assert_eq!(first.log.x, second.log.x);
    }

    #[test]
    fn auto_epsilon_is_the_wavelet_estimate() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(dir.path());
        cfg.rule = Rule::Dp;
        cfg.epsilon = Some(EpsilonSpec::Auto);
        let art = cmd_run(&cfg).unwrap();
        let p = build_setup(&cfg)
            .unwrap()
            .realize(cfg.noise_level, cfg.seed)
            .unwrap();
        let expect = estimate_noise_sigma(&p.b) * (p.b.len() as f64).sqrt();
        assert_eq!(art.noise.epsilon, Some(expect));
        assert_eq!(art.noise.source, "wavelet");
        let meta = std::fs::read_to_string(dir.path().join("meta.txt")).unwrap();
        assert_eq!(meta_value(&meta, "epsilon").parse::<f64>().unwrap(), expect);
        assert_eq!(
            meta_value(&meta, "noise_norm_injected")
                .parse::<f64>()
                .unwrap(),
            p.noise_norm()
        );
    }

    #[test]
    fn auto_epsilon_tracks_injected_noise_on_smooth_data() {
        let m = 4096;
        let setup = Setup {
            a: Arc::new(DiagonalMap::new(vec![1.0; m])),
            x_true: (0..m).map(|i| 1.0 + (i as f64 / m as f64)).collect(),
            side: 64,
            solution_shape: (64, 64),
            data_shape: (64, 64),
        };
        let mut cfg = ExperimentConfig::default();
        cfg.epsilon = Some(EpsilonSpec::Auto);
        for seed in 0..5 {
            let p = setup.realize(0.05, seed).unwrap();
            let noise = resolve_noise(&cfg, Rule::Dp, &p);
            let ratio = noise.epsilon.unwrap() / p.noise_norm();
            assert!((0.9..1.1).contains(&ratio), "seed {seed}: ratio {ratio}");
        }
    }

    #[test]
    fn fixed_lambda_runs_keep_their_lambda() {
        for lambda in [5e-3, 2e-2, 5e-1] {
            let dir = tempfile::tempdir().unwrap();
            let mut cfg = small(dir.path());
            cfg.rule = Rule::Fixed(0.0);
            cfg.lambda = Some(lambda);
            let art = cmd_run(&cfg).unwrap();
            assert!(art.log.records.iter().all(|r| r.lambda == lambda));
        }
    }

    #[test]
    fn sweep_is_thread_count_independent() {
        let d1 = tempfile::tempdir().unwrap();
        let d4 = tempfile::tempdir().unwrap();
        let mut cfg = small(d1.path());
        cfg.n_realizations = 3;
        cfg.rules = vec![Rule::Dp, Rule::Wgcv];
        cfg.surface_k = 10;
        cfg.surface_lambdas = 5;
        let one = cmd_sweep(&cfg, Some(1)).unwrap();
        cfg.output = d4.path().to_path_buf();
        let four = cmd_sweep(&cfg, Some(4)).unwrap();
        assert_eq!(one, four);
        for f in ["sweep.csv", "rre_surface.csv"] {
            let a = std::fs::read(d1.path().join(f)).unwrap();
            let b = std::fs::read(d4.path().join(f)).unwrap();
            assert_eq!(a, b, "{f}");
        }
        assert_eq!(one.rows.len(), 6);
        assert_eq!(
            one.rows.iter().map(|r| r.seed).collect::<Vec<_>>(),
            vec![0, 0, 1, 1, 2, 2]
        );
        assert_eq!(one.surface_csv.lines().count(), 1 + 10 * 5);
    }

    #[test]
    fn single_realization_sweep_matches_run() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(dir.path());
        cfg.rules = vec![Rule::Wgcv];
        cfg.surface_k = 4;
        cfg.surface_lambdas = 3;
        let sw = cmd_sweep(&cfg, Some(2)).unwrap();
        let run = cmd_run(&cfg).unwrap();
        let last = run.log.final_record().unwrap();
        assert_eq!(sw.rows[0].stop_k, last.k);
        assert_eq!(sw.rows[0].lambda_final, last.lambda);
    }

    #[test]
    fn surface_at_full_dimension_matches_direct_tikhonov() {
        use crate::direct::{tikhonov_direct, DenseSVD};
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let a = DMatrix::from_fn(12, 6, |_, _| rng.random_range(-1.0..1.0));
        let x_true: Vec<f64> = (0..6).map(|i| i as f64 - 2.0).collect();
        let b: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let op = DenseMatrixMap::from_matrix(&a);
        let pool = thread_pool(Some(2)).unwrap();
        let rows = rre_surface(&op, &b, &x_true, Method::HybridLsqr, 6, 4, true, &pool).unwrap();
        assert_eq!(rows.len(), 24);
        let svd = DenseSVD::new(&a).unwrap();
        for &(k, l, e) in rows.iter().filter(|r| r.0 == 6) {
            let x = tikhonov_direct(&svd, &b, l).unwrap();
            assert!(
                (rel_err(&x, &x_true) - e).abs() <= 1e-8 * e.max(1.0),
                "k={k} lambda={l}"
            );
        }
    }

    #[test]
    fn dense_problem_from_files() {
        let dir = tempfile::tempdir().unwrap();
        let mpath = dir.path().join("a.txt");
        let tpath = dir.path().join("x.txt");
        let mut text = String::from("# 6x4 test matrix\n");
        for i in 0..6 {
            let row: Vec<String> = (0..4)
                .map(|j| format!("{}", 1.0 / (1.0 + i as f64 + j as f64)))
                .collect();
            text.push_str(&row.join(" "));
            text.push('\n');
        }
        std::fs::write(&mpath, text).unwrap();
        write_vector(&tpath, &[1.0, -1.0, 0.5, 2.0]).unwrap();
        let mut cfg = ExperimentConfig::default();
        cfg.problem = ProblemSpec::Dense(mpath.clone());
        cfg.truth_file = Some(tpath);
        cfg.output = dir.path().join("out");
        cfg.max_iter = 4;
        cfg.stop_on = crate::hybrid::StopFlags::NONE;
        let art = cmd_run(&cfg).unwrap();
        assert_eq!(art.log.x.len(), 4);
        let img = read_pgm(&cfg.output.join("solution.pgm")).unwrap();
        assert_eq!((img.width, img.height), (2, 2));
        let data = read_pgm(&cfg.output.join("data.pgm")).unwrap();
        assert_eq!((data.width, data.height), (6, 1));
        assert_eq!(load_dense_matrix(&mpath).unwrap().get(1, 2), 0.25);
    }

    #[test]
    fn testproblem_emits_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(dir.path());
        let files = cmd_testproblem(&cfg).unwrap();
        assert!(files.iter().any(|f| f.ends_with("psf.pgm")));
        let b = load_vector(&dir.path().join("b.txt")).unwrap();
        let p = build_setup(&cfg)
            .unwrap()
            .realize(cfg.noise_level, cfg.seed)
            .unwrap();
        assert_eq!(b, p.b);

        cfg.problem = ProblemSpec::Tomo;
        cfg.views = 10;
        cfg.output = dir.path().join("tomo");
        cmd_testproblem(&cfg).unwrap();
        let sino = read_pgm(&cfg.output.join("data.pgm")).unwrap();
        assert_eq!(
            (sino.width, sino.height),
            (default_tomo_geometry(16, 10).0, 10)
        );
    }

    #[test]
    fn io_failure_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        std::fs::write(&blocker, "x").unwrap();
        let cfg = small(&blocker.join("sub"));
        assert!(matches!(cmd_run(&cfg), Err(Error::Io(_))));
    }

    #[test]
    fn bad_thread_count_is_a_config_error() {
        std::env::set_var(THREADS_ENV, "many");
        let r = thread_pool(None);
        std::env::remove_var(THREADS_ENV);
        assert!(matches!(r, Err(Error::Config(_))));
    }
}
