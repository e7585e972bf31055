use crate::error::{Error, Result};
use crate::hybrid::{HybridOptions, Method, RegMatrix, StopFlags};
use crate::paramselect::{OmegaRule, Rule, RuleConfig};
use crate::testproblems::PsfParams;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSpec {
    Deblur,
    Tomo,
    /// Whitespace-separated dense matrix, one row per line.
    Dense(PathBuf),
}

impl fmt::Display for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProblemSpec::Deblur => f.write_str("deblur"),
            ProblemSpec::Tomo => f.write_str("tomo"),
            ProblemSpec::Dense(p) => write!(f, "dense:{}", p.display()),
        }
    }
}

impl FromStr for ProblemSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(path) = s.strip_prefix("dense:") {
            if path.is_empty() {
                return Err(Error::Config("dense problem needs a file path".into()));
            }
            return Ok(ProblemSpec::Dense(PathBuf::from(path)));
        }
        match s.to_ascii_lowercase().as_str() {
            "deblur" => Ok(ProblemSpec::Deblur),
            "tomo" => Ok(ProblemSpec::Tomo),
            _ => Err(Error::Config(format!(
                "unknown problem '{s}' (deblur, tomo, dense:FILE)"
            ))),
        }
    }
}

/// How the noise norm `ε` is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsilonSpec {
    /// Wavelet (Haar/MAD) estimate from the data.
    Auto,
    /// The injected noise norm, known for synthetic problems.
    Known,
    Value(f64),
}

impl fmt::Display for EpsilonSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EpsilonSpec::Auto => f.write_str("auto"),
            EpsilonSpec::Known => f.write_str("true"),
            EpsilonSpec::Value(v) => write!(f, "{v:e}"),
        }
    }
}

impl FromStr for EpsilonSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "auto" => Ok(EpsilonSpec::Auto),
            "true" | "known" => Ok(EpsilonSpec::Known),
            v => {
                let x = parse_f64("epsilon", v)?;
                if !(x > 0.0) {
                    return Err(Error::Config("epsilon must be positive".into()));
                }
                Ok(EpsilonSpec::Value(x))
            }
        }
    }
}

/// A complete experiment description. Serializes to flat `key = value` text
/// that parses back to an identical value.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    /// Image side `N` for deblur and tomo.
    pub n: usize,
    pub noise_level: f64,
    pub seed: u64,
    /// Sweep realizations use seeds `seed, seed+1, …`.
    pub n_realizations: usize,
    pub method: Method,
    pub rule: Rule,
    /// Overrides the value of a fixed rule.
    pub lambda: Option<f64>,
    /// Rules compared by `sweep`.
    pub rules: Vec<Rule>,
    pub eta: f64,
    pub epsilon: Option<EpsilonSpec>,
    pub sigma2: Option<f64>,
    pub omega: Option<f64>,
    pub omega_rule: OmegaRule,
    pub max_iter: usize,
    pub min_iter: usize,
    pub tau_lambda: f64,
    pub tau_r: f64,
    pub tau_x: f64,
    pub stop_on: StopFlags,
    pub stop_consecutive: usize,
    pub dp_stop: bool,
    pub reorth: bool,
    pub psf: PsfParams,
    pub views: usize,
    /// Rays per view; `round(√2·N)` when unset.
    pub rays: Option<usize>,
    /// True solution for dense problems.
    pub truth_file: Option<PathBuf>,
    /// Switches to the flexible ℓp driver.
    pub flex_p: Option<f64>,
    pub flex_tau: f64,
    pub regmat: RegMatrix,
    pub surface_k: usize,
    pub surface_lambdas: usize,
    pub output: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let h = HybridOptions::new(Method::HybridLsqr, RuleConfig::new(Rule::Wgcv));
        Self {
            problem: ProblemSpec::Deblur,
            n: 32,
            noise_level: 1e-2,
            seed: 0,
            n_realizations: 1,
            method: h.method,
            rule: Rule::Wgcv,
            lambda: None,
            rules: vec![Rule::Dp, Rule::Gcv, Rule::Wgcv],
            eta: h.rule.eta,
            epsilon: None,
            sigma2: None,
            omega: None,
            omega_rule: OmegaRule::default(),
            max_iter: h.max_iter,
            min_iter: h.min_iter,
            tau_lambda: h.tau_lambda,
            tau_r: h.tau_r,
            tau_x: h.tau_x,
            stop_on: h.stop_on,
            stop_consecutive: h.stop_consecutive,
            dp_stop: false,
            reorth: true,
            psf: PsfParams::default(),
            views: 90,
            rays: None,
            truth_file: None,
            flex_p: None,
            flex_tau: 1e-3,
            regmat: RegMatrix::WeightedRFactor,
            surface_k: 40,
            surface_lambdas: 30,
            output: PathBuf::from("out"),
        }
    }
}

pub const KEYS: &[&str] = &[
    "problem",
    "n",
    "noise_level",
    "seed",
    "n_realizations",
    "method",
    "rule",
    "lambda",
    "rules",
    "eta",
    "epsilon",
    "sigma2",
    "omega",
    "omega_rule",
    "max_iter",
    "min_iter",
    "tau_lambda",
    "tau_r",
    "tau_x",
    "stop_on",
    "stop_consecutive",
    "dp_stop",
    "reorth",
    "psf_radius",
    "psf_s1",
    "psf_s2",
    "psf_theta",
    "views",
    "rays",
    "truth_file",
    "flex_p",
    "flex_tau",
    "regmat",
    "surface_k",
    "surface_lambdas",
    "output",
];

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    let x: f64 = v
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: '{v}' is not a number")))?;
    if !x.is_finite() {
        return Err(Error::Config(format!("{key}: '{v}' is not finite")));
    }
    Ok(x)
}

fn parse_int<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: '{v}' is not a nonnegative integer")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key}: '{v}' is not a boolean"))),
    }
}

fn is_none(v: &str) -> bool {
    matches!(v.trim(), "" | "none")
}

fn opt<T>(v: &str, f: impl FnOnce(&str) -> Result<T>) -> Result<Option<T>> {
    if is_none(v) {
        Ok(None)
    } else {
        f(v).map(Some)
    }
}

fn show<T: fmt::Display>(v: &Option<T>) -> String {
    v.as_ref()
        .map_or_else(|| "none".to_string(), |x| x.to_string())
}

fn show_f(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), |x| format!("{x:e}"))
}

/// Parses `stop_on` codes such as `lx`, `LRX` or `none`.
pub fn parse_stop_flags(v: &str) -> Result<StopFlags> {
    let mut f = StopFlags::NONE;
    if is_none(v) {
        return Ok(f);
    }
    for c in v.trim().chars() {
        match c.to_ascii_lowercase() {
            'l' => f.lambda = true,
            'r' => f.residual = true,
            'x' => f.solution = true,
            '-' => {}
            _ => {
                return Err(Error::Config(format!(
                    "stop_on: unknown criterion '{c}' (use l, r, x)"
                )))
            }
        }
    }
    Ok(f)
}

fn show_stop_flags(f: &StopFlags) -> String {
    let s: String = [(f.lambda, 'l'), (f.residual, 'r'), (f.solution, 'x')]
        .iter()
        .filter(|(on, _)| *on)
        .map(|(_, c)| *c)
        .collect();
    if s.is_empty() {
        "none".into()
    } else {
        s
    }
}

impl ExperimentConfig {
    /// Sets one key from its text value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "problem" => self.problem = v.parse()?,
            "n" => self.n = parse_int(key, v)?,
            "noise_level" | "noise" => self.noise_level = parse_f64(key, v)?,
            "seed" => self.seed = parse_int(key, v)?,
            "n_realizations" | "realizations" => self.n_realizations = parse_int(key, v)?,
            "method" => self.method = v.parse()?,
            "rule" => self.rule = v.parse()?,
            "lambda" => self.lambda = opt(v, |s| parse_f64(key, s))?,
            "rules" => {
                self.rules = v
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(str::parse)
                    .collect::<Result<_>>()?
            }
            "eta" => self.eta = parse_f64(key, v)?,
            "epsilon" => self.epsilon = opt(v, str::parse)?,
            "sigma2" => self.sigma2 = opt(v, |s| parse_f64(key, s))?,
            "omega" => self.omega = opt(v, |s| parse_f64(key, s))?,
            "omega_rule" => self.omega_rule = v.parse()?,
            "max_iter" => self.max_iter = parse_int(key, v)?,
            "min_iter" => self.min_iter = parse_int(key, v)?,
            "tau_lambda" => self.tau_lambda = parse_f64(key, v)?,
            "tau_r" => self.tau_r = parse_f64(key, v)?,
            "tau_x" => self.tau_x = parse_f64(key, v)?,
            "stop_on" => self.stop_on = parse_stop_flags(v)?,
            "stop_consecutive" => self.stop_consecutive = parse_int(key, v)?,
            "dp_stop" => self.dp_stop = parse_bool(key, v)?,
            "reorth" => self.reorth = parse_bool(key, v)?,
            "psf_radius" => self.psf.radius = parse_int(key, v)?,
            "psf_s1" => self.psf.s1 = parse_f64(key, v)?,
            "psf_s2" => self.psf.s2 = parse_f64(key, v)?,
            "psf_theta" => self.psf.theta = parse_f64(key, v)?,
            "views" => self.views = parse_int(key, v)?,
            "rays" => self.rays = opt(v, |s| parse_int(key, s))?,
            "truth_file" => self.truth_file = opt(v, |s| Ok(PathBuf::from(s)))?,
            "flex_p" => self.flex_p = opt(v, |s| parse_f64(key, s))?,
            "flex_tau" => self.flex_tau = parse_f64(key, v)?,
            "regmat" => self.regmat = v.parse()?,
            "surface_k" => self.surface_k = parse_int(key, v)?,
            "surface_lambdas" => self.surface_lambdas = parse_int(key, v)?,
            "output" | "out" => self.output = PathBuf::from(v),
            other => return Err(Error::Config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Value of `key` in the text form accepted by [`set`](Self::set).
    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "problem" => self.problem.to_string(),
            "n" => self.n.to_string(),
            "noise_level" => format!("{:e}", self.noise_level),
            "seed" => self.seed.to_string(),
            "n_realizations" => self.n_realizations.to_string(),
            "method" => self.method.to_string(),
            "rule" => self.rule.to_string(),
            "lambda" => show_f(self.lambda),
            "rules" => self
                .rules
                .iter()
                .map(|r| r.to_string())
                .collect::<Vec<_>>()
                .join(","),
            "eta" => format!("{:e}", self.eta),
            "epsilon" => show(&self.epsilon),
            "sigma2" => show_f(self.sigma2),
            "omega" => show_f(self.omega),
            "omega_rule" => self.omega_rule.to_string(),
            "max_iter" => self.max_iter.to_string(),
            "min_iter" => self.min_iter.to_string(),
            "tau_lambda" => format!("{:e}", self.tau_lambda),
            "tau_r" => format!("{:e}", self.tau_r),
            "tau_x" => format!("{:e}", self.tau_x),
            "stop_on" => show_stop_flags(&self.stop_on),
            "stop_consecutive" => self.stop_consecutive.to_string(),
            "dp_stop" => self.dp_stop.to_string(),
            "reorth" => self.reorth.to_string(),
            "psf_radius" => self.psf.radius.to_string(),
            "psf_s1" => format!("{:e}", self.psf.s1),
            "psf_s2" => format!("{:e}", self.psf.s2),
            "psf_theta" => format!("{:e}", self.psf.theta),
            "views" => self.views.to_string(),
            "rays" => show(&self.rays),
            "truth_file" => show(&self.truth_file.as_ref().map(|p| p.display().to_string())),
            "flex_p" => show_f(self.flex_p),
            "flex_tau" => format!("{:e}", self.flex_tau),
            "regmat" => self.regmat.to_string(),
            "surface_k" => self.surface_k.to_string(),
            "surface_lambdas" => self.surface_lambdas.to_string(),
            "output" => self.output.display().to_string(),
            _ => return None,
        })
    }

    /// Applies `key = value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            self.set(k, v).map_err(|e| match e {
                Error::Config(msg) => Error::Config(format!("line {}: {msg}", lineno + 1)),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        Ok(c)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{k} = {}\n", self.get(k).unwrap()))
            .collect()
    }

    /// Rule with the `lambda` override applied to a fixed rule.
    pub fn resolved_rule(&self) -> Rule {
        match (self.rule, self.lambda) {
            (Rule::Fixed(_), Some(l)) => Rule::Fixed(l),
            (r, _) => r,
        }
    }

    /// True when the run needs `ε` even without an explicit `epsilon` key.
    pub fn needs_epsilon(&self, rule: Rule) -> bool {
        self.dp_stop || rule == Rule::Dp || (rule == Rule::Upre && self.sigma2.is_none())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 4 {
            return Err(Error::Config("n must be at least 4".into()));
        }
        if !(self.noise_level >= 0.0) {
            return Err(Error::Config("noise_level must be nonnegative".into()));
        }
        if self.n_realizations == 0 {
            return Err(Error::Config("n_realizations must be at least 1".into()));
        }
        if self.rules.is_empty() {
            return Err(Error::Config("rules must not be empty".into()));
        }
        if self.views == 0 || self.rays == Some(0) {
            return Err(Error::Config(
                "tomography needs views >= 1 and rays >= 1".into(),
            ));
        }
        if self.surface_k == 0 || self.surface_lambdas < 2 {
            return Err(Error::Config(
                "surface needs surface_k >= 1 and surface_lambdas >= 2".into(),
            ));
        }
        if self.flex_p.is_some() && !matches!(self.method, Method::HybridLsqr | Method::HybridGmres)
        {
            return Err(Error::Config(
                "flex_p needs method hybrid-lsqr or hybrid-gmres".into(),
            ));
        }
        if let ProblemSpec::Dense(_) = self.problem {
            if self.truth_file.is_none() {
                return Err(Error::Config("dense problems need truth_file".into()));
            }
        }
        let mut h = self.hybrid_options(self.resolved_rule(), Some(1.0), Some(1.0));
        h.dp_stop = self.dp_stop;
        h.validate()
    }

    /// Driver options for `rule` with resolved noise quantities.
    pub fn hybrid_options(
        &self,
        rule: Rule,
        epsilon: Option<f64>,
        sigma2: Option<f64>,
    ) -> HybridOptions {
        let mut rc = RuleConfig::new(rule);
        rc.eta = self.eta;
        rc.epsilon = epsilon;
        rc.sigma2 = self.sigma2.or(sigma2);
        rc.omega = self.omega;
        rc.omega_rule = self.omega_rule;
        let mut h = HybridOptions::new(self.method, rc);
        h.max_iter = self.max_iter;
        h.min_iter = self.min_iter;
        h.tau_lambda = self.tau_lambda;
        h.tau_r = self.tau_r;
        h.tau_x = self.tau_x;
        h.stop_on = self.stop_on;
        h.stop_consecutive = self.stop_consecutive;
        h.dp_stop = self.dp_stop && epsilon.is_some();
        h.reorth = self.reorth;
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_round_trips() {
        let c = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::parse(&c.to_text()).unwrap(), c);
        c.validate().unwrap();
    }

    #[test]
    fn every_key_is_serialized() {
        let c = ExperimentConfig::default();
        for k in KEYS {
            assert!(c.get(k).is_some(), "{k}");
        }
    }

    #[test]
    fn later_lines_and_flags_override() {
        let mut c = ExperimentConfig::parse("n = 16\n# comment\nrule = dp\nn = 24\n").unwrap();
        assert_eq!(c.n, 24);
        c.set("rule", "fixed").unwrap();
        c.set("lambda", "5e-3").unwrap();
        assert_eq!(c.resolved_rule(), Rule::Fixed(5e-3));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ExperimentConfig::parse("bogus = 1").is_err());
        assert!(ExperimentConfig::parse("n = -3").is_err());
        assert!(ExperimentConfig::parse("no equals sign").is_err());
        assert!(ExperimentConfig::parse("noise_level = nan").is_err());
        assert!(ExperimentConfig::parse("stop_on = lq").is_err());
        let neg = ExperimentConfig::parse("rule = fixed\nlambda = -1").unwrap();
        assert!(neg.validate().is_err());
        let dense = ExperimentConfig::parse("problem = dense:a.txt").unwrap();
        assert!(dense.validate().is_err());
    }

    fn arb_rule() -> impl Strategy<Value = Rule> {
        prop_oneof![
            Just(Rule::Dp),
            Just(Rule::Gcv),
            Just(Rule::Wgcv),
            Just(Rule::Upre),
            Just(Rule::Lcurve),
            Just(Rule::Reginska),
            Just(Rule::Optimal),
            (1e-8f64..1e2).prop_map(Rule::Fixed),
        ]
    }

    fn arb_f() -> impl Strategy<Value = f64> {
        prop_oneof![1e-12f64..1e-3, 1e-3f64..1e3, Just(0.1), Just(1.0 / 3.0)]
    }

    prop_compose! {
        fn arb_config()(
            n in 4usize..300,
            noise in arb_f(),
            seed in any::<u64>(),
            reals in 1usize..200,
            rule in arb_rule(),
            rules in prop::collection::vec(arb_rule(), 1..5),
            lambda in prop::option::of(arb_f()),
            eps in prop_oneof![Just(None), Just(Some(EpsilonSpec::Auto)), Just(Some(EpsilonSpec::Known)),
                arb_f().prop_map(|v| Some(EpsilonSpec::Value(v)))],
            sigma2 in prop::option::of(arb_f()),
            taus in (arb_f(), arb_f(), arb_f()),
            stop in (any::<bool>(), any::<bool>(), any::<bool>()),
            flags in (any::<bool>(), any::<bool>()),
            psf in (0usize..12, arb_f(), arb_f(), -3.0f64..3.0),
            rays in prop::option::of(1usize..100),
            flex in prop::option::of(0.5f64..2.0),
            problem in prop_oneof![Just(ProblemSpec::Deblur), Just(ProblemSpec::Tomo),
                "[a-z]{1,8}".prop_map(|s| ProblemSpec::Dense(PathBuf::from(format!("data/{s}.txt"))))],
            method in prop_oneof![Just(Method::HybridLsqr), Just(Method::HybridGmres), Just(Method::HybridLsmr),
                Just(Method::LsqrPlain), Just(Method::GmresPlain)],
        ) -> ExperimentConfig {
            ExperimentConfig {
                problem,
                n,
                noise_level: noise,
                seed,
                n_realizations: reals,
                method,
                rule,
                lambda,
                rules,
                epsilon: eps,
                sigma2,
                tau_lambda: taus.0,
                tau_r: taus.1,
                tau_x: taus.2,
                stop_on: StopFlags { lambda: stop.0, residual: stop.1, solution: stop.2 },
                dp_stop: flags.0,
                reorth: flags.1,
                psf: PsfParams { radius: psf.0, s1: psf.1, s2: psf.2, theta: psf.3 },
                rays,
                flex_p: flex,
                truth_file: Some(PathBuf::from("x true.txt")),
                ..ExperimentConfig::default()
            }
        }
    }

    proptest! {
        #[test]
        fn text_round_trip_is_lossless(c in arb_config()) {
            let text = c.to_text();
            let back = ExperimentConfig::parse(&text).unwrap();
            prop_assert_eq!(&back, &c);
            prop_assert_eq!(back.to_text(), text);
        }
    }
}
