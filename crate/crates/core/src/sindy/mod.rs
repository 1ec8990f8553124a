//! Sparse regression with IRK-based losses and sequential thresholding.

mod loss;
mod optim;

pub use loss::{
    loss_deep, loss_deep_gradient, loss_deep_gradient_tape, loss_irk, loss_irk_gradient, loss_irk_gradient_tape, loss_rk4,
    loss_rk4_gradient, StageCache,
};
pub use optim::{adam_step, regularize, regularize_gradient, threshold, AdamState};

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::coefficients::CoefficientMatrix;
use crate::dataset::{rescale_coefficients, savgol_filter, standardize, Dataset, ScalingInfo, ScalingMode};
use crate::error::{Error, Result};
use crate::features::Library;
use crate::irk::{SolverSettings, StageSolver};
use crate::net::{Architecture, StageNet};
use crate::tableau::ButcherTableau;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Regularization {
    #[default]
    None,
    L1 {
        weight: f64,
    },
}

/// How gradients pass through the stage solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GradientMode {
    /// Implicit-function gradient at the converged stages.
    #[default]
    Implicit,
    /// Differentiate the recorded fixed-point iterations.
    Unrolled,
}

/// Training hyperparameters shared by the discovery drivers.
#[derive(Debug, Clone, PartialEq)]
pub struct SindyConfig {
    /// Weight of the backward residuals; forward residuals get `1 - alpha`.
    pub alpha: f64,
    pub lambda: f64,
    pub reg: Regularization,
    pub lr_xi: f64,
    pub lr_theta: f64,
    /// Learning-rate multiplier applied after each thresholding round.
    pub lr_decay: f64,
    pub thresholding_iterations: usize,
    pub epochs_first: usize,
    pub epochs_rest: usize,
    pub solver: SolverSettings,
    pub stages: usize,
    pub seed: u64,
    pub gradient: GradientMode,
    /// Zero the Adam moments at the start of every round.
    pub reset_optimizer: bool,
}

impl Default for SindyConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            lambda: 0.05,
            reg: Regularization::None,
            lr_xi: 0.01,
            lr_theta: 1e-3,
            lr_decay: 0.8,
            thresholding_iterations: 3,
            epochs_first: 1000,
            epochs_rest: 1000,
            solver: SolverSettings::newton(),
            stages: 2,
            seed: 0,
            gradient: GradientMode::Implicit,
            reset_optimizer: false,
        }
    }
}

impl SindyConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha must lie in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.lambda) {
            return bad("lambda must lie in [0, 1)");
        }
        if !(self.lr_xi > 0.0 && self.lr_theta > 0.0) {
            return bad("learning rates must be positive");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad("lr_decay must lie in (0, 1]");
        }
        if self.thresholding_iterations == 0 {
            return bad("at least one thresholding iteration is required");
        }
        if let Regularization::L1 { weight } = self.reg {
            if !(weight >= 0.0) {
                return bad("l1 weight must be nonnegative");
            }
        }
        if self.gradient == GradientMode::Unrolled && self.solver.method != StageSolver::FixedPoint {
            return bad("unrolled gradients require the fixed-point stage solver");
        }
        self.solver.validate()
    }

    fn epochs(&self, round: usize) -> usize {
        if round == 0 {
            self.epochs_first
        } else {
            self.epochs_rest
        }
    }
}

/// Optional preprocessing applied before training, in this order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Preprocess {
    /// Savitzky–Golay `(window, order)`.
    pub savgol: Option<(usize, usize)>,
    pub scaling: Option<ScalingMode>,
}

/// Smooths, then conditions, a dataset.
pub fn preprocess(ds: &Dataset, pre: &Preprocess) -> Result<(Dataset, Option<ScalingInfo>)> {
    let mut out = ds.clone();
    if let Some((window, order)) = pre.savgol {
        out = savgol_filter(&out, window, order)?;
    }
    match pre.scaling {
        Some(mode) => {
            let (scaled, info) = standardize(&out, mode)?;
            Ok((scaled, Some(info)))
        }
        None => Ok((out, None)),
    }
}

/// Result of a discovery run.
#[derive(Debug, Clone)]
pub struct DiscoveredModel {
    pub library: Library,
    /// Coefficients in the coordinates the model was trained in.
    pub xi: CoefficientMatrix,
    pub scaling: Option<ScalingInfo>,
    /// Training loss per epoch, regularisation included.
    pub history: Vec<f64>,
    /// Nonzero terms per state equation.
    pub term_report: Vec<Vec<(String, f64)>>,
    pub all_terms_eliminated: bool,
    /// Trained stage network of the deep variant.
    pub network: Option<StageNet>,
}

/// Nonzero `(term, coefficient)` pairs per state equation.
pub fn term_report(lib: &Library, xi: &CoefficientMatrix) -> Vec<Vec<(String, f64)>> {
    (0..xi.states())
        .map(|c| {
            (0..xi.terms()).filter(|&j| xi.get(j, c) != 0.0).map(|j| (lib.names()[j].clone(), xi.get(j, c))).collect()
        })
        .collect()
}

/// Files written by [`DiscoveredModel::write_outputs`].
#[derive(Debug, Clone, PartialEq)]
pub struct OutputPaths {
    pub coefficients: PathBuf,
    pub history: PathBuf,
    pub summary: PathBuf,
}

impl DiscoveredModel {
    fn new(library: Library, xi: CoefficientMatrix, history: Vec<f64>, network: Option<StageNet>) -> Self {
        Self {
            term_report: term_report(&library, &xi),
            all_terms_eliminated: xi.is_zero(),
            library,
            xi,
            scaling: None,
            history,
            network,
        }
    }

    /// Attaches the conditioning applied to the training data.
    pub fn with_scaling(mut self, scaling: Option<ScalingInfo>) -> Self {
        self.scaling = scaling;
        self
    }

    /// Coefficients in the original (unscaled) coordinates.
    pub fn original_coefficients(&self) -> Result<CoefficientMatrix> {
        match &self.scaling {
            None => Ok(self.xi.clone()),
            Some(info) => rescale_coefficients(&self.xi, info, &self.library),
        }
    }

    pub fn history_csv(&self) -> String {
        let mut out = String::from("epoch,loss\n");
        for (e, l) in self.history.iter().enumerate() {
            let _ = writeln!(out, "{},{l:.16e}", e + 1);
        }
        out
    }

    /// Human-readable run summary; `config_echo` is copied in verbatim.
    pub fn summary(&self, config_echo: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# configuration");
        out.push_str(config_echo);
        if !config_echo.ends_with('\n') && !config_echo.is_empty() {
            out.push('\n');
        }
        let _ = writeln!(out, "\n# result");
        let _ = writeln!(out, "epochs = {}", self.history.len());
        if let Some(l) = self.history.last() {
            let _ = writeln!(out, "final_loss = {l:.6e}");
        }
        let _ = writeln!(out, "all_terms_eliminated = {}", self.all_terms_eliminated);
        let (report, label) = match self.original_coefficients() {
            Ok(xi) if self.scaling.is_some() => (term_report(&self.library, &xi), "original coordinates"),
            _ => (self.term_report.clone(), if self.scaling.is_some() { "scaled coordinates" } else { "data coordinates" }),
        };
        let _ = writeln!(out, "\n# support ({label})");
        for (c, terms) in report.iter().enumerate() {
            let rhs = if terms.is_empty() {
                "0".to_string()
            } else {
                terms.iter().map(|(n, v)| format!("{v:+.6} {n}")).collect::<Vec<_>>().join(" ")
            };
            let _ = writeln!(out, "dx{}/dt = {rhs}", c + 1);
        }
        out
    }

    /// Writes `<prefix>coefficients.csv`, `<prefix>history.csv` and
    /// `<prefix>summary.txt` into `dir`.
    pub fn write_outputs(&self, dir: impl AsRef<Path>, prefix: &str, config_echo: &str) -> Result<OutputPaths> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let paths = OutputPaths {
            coefficients: dir.join(format!("{prefix}coefficients.csv")),
            history: dir.join(format!("{prefix}history.csv")),
            summary: dir.join(format!("{prefix}summary.txt")),
        };
        let coefficients = self.original_coefficients().unwrap_or_else(|_| self.xi.clone());
        std::fs::write(&paths.coefficients, coefficients.to_csv(&self.library))?;
        std::fs::write(&paths.history, self.history_csv())?;
        std::fs::write(&paths.summary, self.summary(config_echo))?;
        Ok(paths)
    }
}

/// Step rule inside the coefficient-only discovery loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepRule {
    Irk,
    Rk4,
}

fn check_library(ds: &Dataset, lib: &Library) -> Result<()> {
    if ds.intervals() == 0 {
        return Err(Error::EmptyDataset);
    }
    if lib.dimension() != ds.dim() {
        return Err(Error::DimensionMismatch { expected: lib.dimension(), actual: ds.dim() });
    }
    if lib.is_empty() {
        return Err(Error::EmptyLibrary);
    }
    Ok(())
}

fn initial_xi(lib: &Library, d: usize, initial: Option<&CoefficientMatrix>) -> Result<CoefficientMatrix> {
    match initial {
        None => Ok(CoefficientMatrix::zeros(lib.len(), d)),
        Some(xi) if xi.terms() == lib.len() && xi.states() == d => Ok(xi.clone()),
        Some(xi) => Err(Error::ShapeMismatch { expected: lib.len() * d, actual: xi.terms() * xi.states() }),
    }
}

fn coefficient_loop(
    ds: &Dataset,
    lib: &Library,
    tab: &ButcherTableau<f64>,
    config: &SindyConfig,
    rule: StepRule,
    initial: Option<&CoefficientMatrix>,
) -> Result<DiscoveredModel> {
    config.validate()?;
    check_library(ds, lib)?;
    let mut xi = initial_xi(lib, ds.dim(), initial)?;
    let mut adam = AdamState::new(xi.values().len());
    let mut cache = StageCache::new(ds.intervals());
    let mut history = Vec::new();
    let mut lr = config.lr_xi;
    let mut values = xi.values().to_vec();
    for round in 0..config.thresholding_iterations {
        if config.reset_optimizer {
            adam.reset();
        }
        for _ in 0..config.epochs(round) {
            let (loss, mut grad) = match rule {
                StepRule::Irk => loss_irk_gradient(&xi, lib, ds, tab, config, Some(&mut cache))?,
                StepRule::Rk4 => loss_rk4_gradient(&xi, lib, ds, config)?,
            };
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteValue);
            }
            regularize_gradient(&mut grad, &xi, config);
            history.push(regularize(loss, &xi, config));
            adam_step(&mut values, &grad, &mut adam, lr, Some(xi.mask()))?;
            xi.assign(&values);
        }
        xi = threshold(&xi, config.lambda);
        values.copy_from_slice(xi.values());
        lr *= config.lr_decay;
    }
    Ok(DiscoveredModel::new(lib.clone(), xi, history, None))
}

/// Coefficient discovery with IRK predictions (stage equations solved by the
/// configured iteration). `ξ` starts at zero.
pub fn discover_irk(ds: &Dataset, lib: &Library, tab: &ButcherTableau<f64>, config: &SindyConfig) -> Result<DiscoveredModel> {
    coefficient_loop(ds, lib, tab, config, StepRule::Irk, None)
}

/// [`discover_irk`] from a given starting `ξ` (its mask included).
pub fn discover_irk_from(
    ds: &Dataset,
    lib: &Library,
    tab: &ButcherTableau<f64>,
    config: &SindyConfig,
    initial: &CoefficientMatrix,
) -> Result<DiscoveredModel> {
    coefficient_loop(ds, lib, tab, config, StepRule::Irk, Some(initial))
}

/// Baseline: the same loop with the explicit classical RK4 step.
pub fn discover_rk4(ds: &Dataset, lib: &Library, config: &SindyConfig) -> Result<DiscoveredModel> {
    // The tableau is unused by the RK4 rule; any valid one will do.
    let tab = crate::tableau::gauss_tableau(1)?;
    coefficient_loop(ds, lib, &tab, config, StepRule::Rk4, None)
}

/// [`discover_rk4`] from a given starting `ξ` (its mask included).
pub fn discover_rk4_from(ds: &Dataset, lib: &Library, config: &SindyConfig, initial: &CoefficientMatrix) -> Result<DiscoveredModel> {
    let tab = crate::tableau::gauss_tableau(1)?;
    coefficient_loop(ds, lib, &tab, config, StepRule::Rk4, Some(initial))
}

/// Joint training of `ξ` and a freshly initialised stage network.
pub fn discover_deep(
    ds: &Dataset,
    lib: &Library,
    tab: &ButcherTableau<f64>,
    config: &SindyConfig,
    arch: &Architecture,
) -> Result<DiscoveredModel> {
    check_library(ds, lib)?;
    let span = (ds.times()[0], ds.times()[ds.intervals()]);
    let net = StageNet::new(arch, ds.dim(), tab.stages(), span, config.seed)?;
    discover_deep_with(ds, lib, tab, config, net, None)
}

/// [`discover_deep`] from a given network and optional starting `ξ`.
pub fn discover_deep_with(
    ds: &Dataset,
    lib: &Library,
    tab: &ButcherTableau<f64>,
    config: &SindyConfig,
    mut net: StageNet,
    initial: Option<&CoefficientMatrix>,
) -> Result<DiscoveredModel> {
    config.validate()?;
    check_library(ds, lib)?;
    let mut xi = initial_xi(lib, ds.dim(), initial)?;
    let mut theta = net.mlp.params().to_vec();
    let mut adam_xi = AdamState::new(xi.values().len());
    let mut adam_theta = AdamState::new(theta.len());
    let mut values = xi.values().to_vec();
    let (mut lr_xi, mut lr_theta) = (config.lr_xi, config.lr_theta);
    let mut history = Vec::new();
    for round in 0..config.thresholding_iterations {
        if config.reset_optimizer {
            adam_xi.reset();
            adam_theta.reset();
        }
        for _ in 0..config.epochs(round) {
            let (loss, mut g_xi, g_theta) = loss_deep_gradient(&xi, &net, lib, ds, tab, config)?;
            if g_xi.iter().chain(&g_theta).any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteValue);
            }
            regularize_gradient(&mut g_xi, &xi, config);
            history.push(regularize(loss, &xi, config));
            adam_step(&mut values, &g_xi, &mut adam_xi, lr_xi, Some(xi.mask()))?;
            xi.assign(&values);
            adam_step(&mut theta, &g_theta, &mut adam_theta, lr_theta, None)?;
            net.mlp.set_params(&theta)?;
        }
        xi = threshold(&xi, config.lambda);
        values.copy_from_slice(xi.values());
        lr_xi *= config.lr_decay;
        lr_theta *= config.lr_decay;
    }
    Ok(DiscoveredModel::new(lib.clone(), xi, history, Some(net)))
}

#[cfg(test)]
mod tests;
