//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use irksindy::dataset::{reference_model, ReferenceModel, ScalingMode};
use irksindy::net::{Activation, Architecture};
use irksindy::sindy::{GradientMode, Preprocess, Regularization, SindyConfig};
use irksindy::{LibrarySpec, SolverSettings};

use crate::CliError;

/// Environment variable that replaces the configured seed.
pub const SEED_ENV: &str = "IRKSINDY_SEED";

/// Every accepted key, with a one-line description. Model parameters are
/// passed as `param.<name>`.
pub const KEYS: &[(&str, &str)] = &[
    ("method", "irk_newton | irk_fixed_point | deep | rk4_baseline"),
    ("model", "reference model used to generate data and for comparison"),
    ("x0", "initial state, comma separated"),
    ("t0", "start time"),
    ("t1", "end time"),
    ("m", "number of sampling intervals (m + 1 samples)"),
    ("sigma", "standard deviation of additive Gaussian noise"),
    ("seed", "seed for noise and network initialisation"),
    ("data", "trajectory CSV (written by generate, read by discover)"),
    ("out_dir", "directory for run outputs"),
    ("prefix", "file-name prefix for run outputs"),
    ("degree", "polynomial degree of the library"),
    ("constant", "include the constant term (true | false)"),
    ("trig_freqs", "sin/cos frequencies, comma separated"),
    ("exp_rates", "exponential rates, comma separated"),
    ("alpha", "weight of the backward residuals"),
    ("lambda", "threshold"),
    ("reg", "none | l1"),
    ("l1_weight", "weight of the l1 penalty"),
    ("lr_xi", "learning rate of the coefficients"),
    ("lr_theta", "learning rate of the network"),
    ("lr_decay", "learning-rate factor after each thresholding round"),
    ("thresholding_iterations", "number of thresholding rounds"),
    ("epochs_first", "epochs in the first round"),
    ("epochs_rest", "epochs in later rounds"),
    ("reset_optimizer", "zero the Adam moments every round (true | false)"),
    ("stages", "Gauss stages used in training"),
    ("solver_tol", "stage-solver tolerance"),
    ("solver_max_iterations", "stage-solver iteration cap"),
    ("gradient", "implicit | unrolled"),
    ("hidden_layers", "hidden layers of the stage network"),
    ("width", "neurons per hidden layer"),
    ("activation", "tanh | siren"),
    ("omega0", "SIREN frequency"),
    ("include_time", "feed t to the network (true | false)"),
    ("savgol_window", "Savitzky-Golay window (0 disables)"),
    ("savgol_order", "Savitzky-Golay polynomial order"),
    ("scaling", "none | scale_only | full_standardize"),
    ("coefficients", "coefficient CSV read by simulate and compare"),
    ("sim_x0", "initial state for simulate/compare (defaults to x0)"),
    ("sim_t0", "simulation start (defaults to t0)"),
    ("sim_t1", "simulation end (defaults to t1)"),
    ("sim_m", "simulation intervals (defaults to m)"),
];

/// Training route selected by `method`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    IrkNewton,
    IrkFixedPoint,
    Deep,
    Rk4Baseline,
}

impl FromStr for Method {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "irk_newton" => Ok(Self::IrkNewton),
            "irk_fixed_point" => Ok(Self::IrkFixedPoint),
            "deep" => Ok(Self::Deep),
            "rk4_baseline" => Ok(Self::Rk4Baseline),
            _ => Err(CliError::config(format!("unknown method `{s}`"))),
        }
    }
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::IrkNewton => "irk_newton",
            Self::IrkFixedPoint => "irk_fixed_point",
            Self::Deep => "deep",
            Self::Rk4Baseline => "rk4_baseline",
        }
    }
}

/// Raw key/value pairs in insertion-independent order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, String>,
}

fn known(key: &str) -> bool {
    key.strip_prefix("param.").is_some_and(|p| !p.is_empty()) || KEYS.iter().any(|(k, _)| *k == key)
}

impl RawConfig {
    /// Parses `key = value` lines; `#` starts a comment. Unknown and
    /// repeated keys are errors.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut raw = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) =
                line.split_once('=').ok_or_else(|| CliError::config(format!("line {}: expected `key = value`", n + 1)))?;
            let key = key.trim();
            if raw.entries.contains_key(key) {
                return Err(CliError::config(format!("line {}: key `{key}` given twice", n + 1)));
            }
            raw.set(key, value.trim()).map_err(|e| CliError::config(format!("line {}: {}", n + 1, e.message)))?;
        }
        Ok(raw)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Sets (or replaces) one key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        if !known(key) {
            return Err(CliError::config(format!("unknown key `{key}`")));
        }
        self.entries.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn set_pair(&mut self, pair: &str) -> Result<(), CliError> {
        let (k, v) = pair.split_once('=').ok_or_else(|| CliError::config(format!("override `{pair}` is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    /// Copies every entry of `other`, replacing existing keys.
    pub fn merge(&mut self, other: RawConfig) {
        self.entries.extend(other.entries);
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    /// Replaces `seed` with the value of [`SEED_ENV`] when it is set.
    pub fn apply_env(&mut self) -> Result<(), CliError> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.set("seed", v.trim())?;
        }
        Ok(())
    }
}

fn parse<T: FromStr>(raw: &RawConfig, key: &str) -> Result<Option<T>, CliError> {
    raw.get(key)
        .map(|v| v.parse::<T>().map_err(|_| CliError::config(format!("bad value `{v}` for `{key}`"))))
        .transpose()
}

fn parse_or<T: FromStr>(raw: &RawConfig, key: &str, default: T) -> Result<T, CliError> {
    Ok(parse(raw, key)?.unwrap_or(default))
}

fn parse_list(raw: &RawConfig, key: &str) -> Result<Option<Vec<f64>>, CliError> {
    let Some(v) = raw.get(key) else { return Ok(None) };
    if v.is_empty() {
        return Ok(Some(Vec::new()));
    }
    v.split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|_| CliError::config(format!("bad number `{x}` in `{key}`"))))
        .collect::<Result<Vec<_>, _>>()
        .map(Some)
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",")
}

/// Typed, validated configuration of one run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub method: Method,
    pub model: Option<ReferenceModel>,
    pub x0: Option<Vec<f64>>,
    pub t0: Option<f64>,
    pub t1: Option<f64>,
    pub m: Option<usize>,
    pub sigma: f64,
    pub data: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub prefix: String,
    pub degree: usize,
    pub constant: bool,
    pub trig_freqs: Vec<f64>,
    pub exp_rates: Vec<f64>,
    pub sindy: SindyConfig,
    pub arch: Architecture,
    pub preprocess: Preprocess,
    pub coefficients: Option<PathBuf>,
    pub sim_x0: Option<Vec<f64>>,
    pub sim_t0: Option<f64>,
    pub sim_t1: Option<f64>,
    pub sim_m: Option<usize>,
}

impl RunConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self, CliError> {
        let method = parse_or(raw, "method", Method::IrkNewton)?;
        let model = match raw.get("model") {
            Some(name) => {
                let mut overrides = Vec::new();
                for (k, v) in &raw.entries {
                    if let Some(p) = k.strip_prefix("param.") {
                        let value = v.parse::<f64>().map_err(|_| CliError::config(format!("bad value `{v}` for `{k}`")))?;
                        overrides.push((p, value));
                    }
                }
                Some(reference_model(name, &overrides).map_err(CliError::from)?)
            }
            None => {
                if raw.entries.keys().any(|k| k.starts_with("param.")) {
                    return Err(CliError::config("model parameters given without `model`"));
                }
                None
            }
        };

        let (default_method, default_gradient) = match method {
            Method::IrkFixedPoint => (SolverSettings::fixed_point(), GradientMode::Unrolled),
            _ => (SolverSettings::newton(), GradientMode::Implicit),
        };
        let solver = SolverSettings {
            method: default_method.method,
            tol: parse_or(raw, "solver_tol", default_method.tol)?,
            max_iterations: parse_or(raw, "solver_max_iterations", default_method.max_iterations)?,
        };
        let gradient = match raw.get("gradient") {
            None => default_gradient,
            Some("implicit") => GradientMode::Implicit,
            Some("unrolled") => GradientMode::Unrolled,
            Some(v) => return Err(CliError::config(format!("unknown gradient mode `{v}`"))),
        };
        let reg = match raw.get("reg").unwrap_or("none") {
            "none" => Regularization::None,
            "l1" => Regularization::L1 { weight: parse_or(raw, "l1_weight", 0.0)? },
            v => return Err(CliError::config(format!("unknown regularization `{v}`"))),
        };
        let d = SindyConfig::default();
        let sindy = SindyConfig {
            alpha: parse_or(raw, "alpha", d.alpha)?,
            lambda: parse_or(raw, "lambda", d.lambda)?,
            reg,
            lr_xi: parse_or(raw, "lr_xi", d.lr_xi)?,
            lr_theta: parse_or(raw, "lr_theta", d.lr_theta)?,
            lr_decay: parse_or(raw, "lr_decay", d.lr_decay)?,
            thresholding_iterations: parse_or(raw, "thresholding_iterations", d.thresholding_iterations)?,
            epochs_first: parse_or(raw, "epochs_first", d.epochs_first)?,
            epochs_rest: parse_or(raw, "epochs_rest", d.epochs_rest)?,
            solver,
            stages: parse_or(raw, "stages", d.stages)?,
            seed: parse_or(raw, "seed", d.seed)?,
            gradient,
            reset_optimizer: parse_or(raw, "reset_optimizer", d.reset_optimizer)?,
        };
        sindy.validate().map_err(CliError::from)?;
        if sindy.stages == 0 || sindy.stages > irksindy::MAX_STAGES {
            return Err(CliError::config(format!("stages must lie in 1..={}", irksindy::MAX_STAGES)));
        }

        let activation: Activation = parse_or(raw, "activation", Activation::Tanh)?;
        let arch = Architecture {
            hidden_layers: parse_or(raw, "hidden_layers", 3)?,
            width: parse_or(raw, "width", 32)?,
            activation,
            omega0: parse_or(raw, "omega0", irksindy::net::DEFAULT_OMEGA0)?,
            include_time: parse_or(raw, "include_time", true)?,
        };
        if arch.hidden_layers == 0 || arch.width == 0 {
            return Err(CliError::config("network needs at least one hidden layer of positive width"));
        }

        let window: usize = parse_or(raw, "savgol_window", 0)?;
        let order: usize = parse_or(raw, "savgol_order", 3)?;
        let scaling = match raw.get("scaling").unwrap_or("none") {
            "none" => None,
            v => Some(v.parse::<ScalingMode>().map_err(CliError::from)?),
        };
        let preprocess = Preprocess { savgol: (window > 0).then_some((window, order)), scaling };

        let cfg = Self {
            method,
            model,
            x0: parse_list(raw, "x0")?,
            t0: parse(raw, "t0")?,
            t1: parse(raw, "t1")?,
            m: parse(raw, "m")?,
            sigma: parse_or(raw, "sigma", 0.0)?,
            data: raw.get("data").map(PathBuf::from),
            out_dir: PathBuf::from(raw.get("out_dir").unwrap_or("out")),
            prefix: raw.get("prefix").unwrap_or("").to_string(),
            degree: parse_or(raw, "degree", 3)?,
            constant: parse_or(raw, "constant", true)?,
            trig_freqs: parse_list(raw, "trig_freqs")?.unwrap_or_default(),
            exp_rates: parse_list(raw, "exp_rates")?.unwrap_or_default(),
            sindy,
            arch,
            preprocess,
            coefficients: raw.get("coefficients").map(PathBuf::from),
            sim_x0: parse_list(raw, "sim_x0")?,
            sim_t0: parse(raw, "sim_t0")?,
            sim_t1: parse(raw, "sim_t1")?,
            sim_m: parse(raw, "sim_m")?,
        };
        if !(cfg.sigma >= 0.0 && cfg.sigma.is_finite()) {
            return Err(CliError::config("sigma must be a nonnegative number"));
        }
        Ok(cfg)
    }

    /// Library specification for states of dimension `d`.
    pub fn library_spec(&self, d: usize) -> LibrarySpec {
        LibrarySpec {
            dimension: d,
            poly_degree: self.degree,
            constant: self.constant,
            trig_freqs: self.trig_freqs.clone(),
            exp_rates: self.exp_rates.clone(),
        }
    }

    pub fn require_model(&self) -> Result<&ReferenceModel, CliError> {
        self.model.as_ref().ok_or_else(|| CliError::config("`model` is required"))
    }

    /// Initial state: `x0`, else the model default.
    pub fn initial_state(&self) -> Result<Vec<f64>, CliError> {
        match (&self.x0, &self.model) {
            (Some(x0), _) => Ok(x0.clone()),
            (None, Some(model)) => Ok(model.default_x0.clone()),
            (None, None) => Err(CliError::config("`x0` or `model` is required")),
        }
    }

    /// `(t0, t1)`, falling back to the model's default window.
    pub fn time_span(&self) -> Result<(f64, f64), CliError> {
        let default = self.model.as_ref().map(|m| m.default_t_span);
        let t0 = self.t0.or(default.map(|s| s.0)).ok_or_else(|| CliError::config("`t0` is required"))?;
        let t1 = self.t1.or(default.map(|s| s.1)).ok_or_else(|| CliError::config("`t1` is required"))?;
        Ok((t0, t1))
    }

    pub fn intervals(&self) -> Result<usize, CliError> {
        self.m.ok_or_else(|| CliError::config("`m` is required"))
    }

    /// Canonical `key = value` listing of the effective settings.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("method", self.method.as_str().into());
        if let Some(model) = &self.model {
            kv("model", model.name.clone());
            for (name, value) in &model.params {
                kv(&format!("param.{name}"), format!("{value}"));
            }
        }
        if let Ok(x0) = self.initial_state() {
            kv("x0", join(&x0));
        }
        if let Ok((t0, t1)) = self.time_span() {
            kv("t0", format!("{t0}"));
            kv("t1", format!("{t1}"));
        }
        if let Some(m) = self.m {
            kv("m", m.to_string());
        }
        kv("sigma", format!("{}", self.sigma));
        kv("seed", self.sindy.seed.to_string());
        if let Some(p) = &self.data {
            kv("data", p.display().to_string());
        }
        kv("degree", self.degree.to_string());
        kv("constant", self.constant.to_string());
        kv("trig_freqs", join(&self.trig_freqs));
        kv("exp_rates", join(&self.exp_rates));
        let s = &self.sindy;
        kv("alpha", format!("{}", s.alpha));
        kv("lambda", format!("{}", s.lambda));
        match s.reg {
            Regularization::None => kv("reg", "none".into()),
            Regularization::L1 { weight } => {
                kv("reg", "l1".into());
                kv("l1_weight", format!("{weight}"));
            }
        }
        kv("lr_xi", format!("{}", s.lr_xi));
        kv("lr_theta", format!("{}", s.lr_theta));
        kv("lr_decay", format!("{}", s.lr_decay));
        kv("thresholding_iterations", s.thresholding_iterations.to_string());
        kv("epochs_first", s.epochs_first.to_string());
        kv("epochs_rest", s.epochs_rest.to_string());
        kv("reset_optimizer", s.reset_optimizer.to_string());
        kv("stages", s.stages.to_string());
        kv("solver_tol", format!("{:e}", s.solver.tol));
        kv("solver_max_iterations", s.solver.max_iterations.to_string());
        let gradient = match s.gradient {
            GradientMode::Implicit => "implicit",
            GradientMode::Unrolled => "unrolled",
        };
        kv("gradient", gradient.into());
        if self.method == Method::Deep {
            kv("hidden_layers", self.arch.hidden_layers.to_string());
            kv("width", self.arch.width.to_string());
            let act = match self.arch.activation {
                Activation::Tanh => "tanh",
                Activation::Siren => "siren",
            };
            kv("activation", act.into());
            kv("omega0", format!("{}", self.arch.omega0));
            kv("include_time", self.arch.include_time.to_string());
        }
        let (w, o) = self.preprocess.savgol.unwrap_or((0, 3));
        kv("savgol_window", w.to_string());
        kv("savgol_order", o.to_string());
        let scaling = match self.preprocess.scaling {
            None => "none",
            Some(ScalingMode::ScaleOnly) => "scale_only",
            Some(ScalingMode::FullStandardize) => "full_standardize",
        };
        kv("scaling", scaling.into());
        out
    }
}

impl FromStr for RunConfig {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self, CliError> {
        Self::from_raw(&RawConfig::parse(s)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use irksindy::StageSolver;

    #[test]
    fn parses_and_rejects() {
        let raw = RawConfig::parse("# run\nmodel = logistic\nm = 50  # intervals\nparam.r = 0.3\n").unwrap();
        assert_eq!(raw.get("m"), Some("50"));
        let cfg = RunConfig::from_raw(&raw).unwrap();
        assert_eq!(cfg.require_model().unwrap().param("r"), Some(0.3));
        assert_eq!(cfg.time_span().unwrap(), (0.0, 50.0));

        assert!(RawConfig::parse("bogus = 1").is_err());
        assert!(RawConfig::parse("m = 1\nm = 2").is_err());
        assert!(RawConfig::parse("just text").is_err());
        assert!("lambda = 1.5".parse::<RunConfig>().is_err());
        assert!("m = many".parse::<RunConfig>().is_err());
        assert!("method = magic".parse::<RunConfig>().is_err());
        assert!("param.r = 1".parse::<RunConfig>().is_err());
        assert!("model = logistic\nparam.q = 1".parse::<RunConfig>().is_err());
        assert!("stages = 0".parse::<RunConfig>().is_err());
    }

    #[test]
    fn method_defaults() {
        let fp: RunConfig = "method = irk_fixed_point".parse().unwrap();
        assert_eq!(fp.sindy.solver.method, StageSolver::FixedPoint);
        assert_eq!(fp.sindy.gradient, GradientMode::Unrolled);
        let newton: RunConfig = "".parse().unwrap();
        assert_eq!(newton.sindy.solver.method, StageSolver::Newton);
        assert_eq!(newton.sindy.gradient, GradientMode::Implicit);
        assert!("gradient = unrolled".parse::<RunConfig>().is_err());
    }

    #[test]
    fn echo_round_trips() {
        let cfg: RunConfig = "model = lorenz\nm = 500\nmethod = deep\nactivation = siren\nscaling = scale_only\nreg = l1\nl1_weight = 0.01"
            .parse()
            .unwrap();
        let again: RunConfig = cfg.echo().parse().unwrap();
        assert_eq!(again.echo(), cfg.echo());
        assert_eq!(again.sindy, cfg.sindy);
    }
}
