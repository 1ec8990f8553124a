//! Subcommand bodies, usable without the argument parser.

use std::path::{Path, PathBuf};

use irksindy::dataset::{add_noise, generate};
use irksindy::sindy::{discover_deep, discover_irk, discover_rk4, preprocess, DiscoveredModel, OutputPaths};
use irksindy::{gauss_tableau, CoefficientMatrix, Dataset, Library};

use crate::compare::{coefficient_metrics, rmse, simulate, Metrics};
use crate::config::{Method, RunConfig};
use crate::CliError;

/// Butcher tableau of the `s`-stage Gauss method as CSV.
pub fn tableau_csv(stages: usize) -> Result<String, CliError> {
    Ok(gauss_tableau::<f64>(stages)?.to_csv())
}

/// Samples the configured model, with noise when `sigma > 0`.
pub fn generate_dataset(cfg: &RunConfig) -> Result<Dataset, CliError> {
    let model = cfg.require_model()?;
    let (t0, t1) = cfg.time_span()?;
    let ds = generate(model, &cfg.initial_state()?, t0, t1, cfg.intervals()?)?;
    if cfg.sigma > 0.0 {
        Ok(add_noise(&ds, cfg.sigma, cfg.sindy.seed)?)
    } else {
        Ok(ds)
    }
}

/// Writes the generated trajectory to `data` (if set) and returns it.
pub fn run_generate(cfg: &RunConfig) -> Result<Dataset, CliError> {
    let ds = generate_dataset(cfg)?;
    if let Some(path) = &cfg.data {
        ensure_parent(path)?;
        ds.save_csv(path)?;
    }
    Ok(ds)
}

/// Training data: the `data` file when given, else generated in memory.
pub fn training_data(cfg: &RunConfig) -> Result<Dataset, CliError> {
    match &cfg.data {
        Some(path) => Dataset::load_csv(path).map_err(|e| CliError::config(format!("{}: {e}", path.display()))),
        None => generate_dataset(cfg),
    }
}

/// Runs the configured discovery on `ds`.
pub fn discover(cfg: &RunConfig, ds: &Dataset) -> Result<DiscoveredModel, CliError> {
    let (train, scaling) = preprocess(ds, &cfg.preprocess)?;
    let lib = Library::build(&cfg.library_spec(train.dim()))?;
    let tab = gauss_tableau::<f64>(cfg.sindy.stages)?;
    let model = match cfg.method {
        Method::IrkNewton | Method::IrkFixedPoint => discover_irk(&train, &lib, &tab, &cfg.sindy)?,
        Method::Rk4Baseline => discover_rk4(&train, &lib, &cfg.sindy)?,
        Method::Deep => discover_deep(&train, &lib, &tab, &cfg.sindy, &cfg.arch)?,
    };
    Ok(model.with_scaling(scaling))
}

/// Discovery plus the coefficient, history and summary files.
pub fn run_discover(cfg: &RunConfig) -> Result<(DiscoveredModel, OutputPaths), CliError> {
    let ds = training_data(cfg)?;
    let model = discover(cfg, &ds)?;
    let paths = model.write_outputs(&cfg.out_dir, &cfg.prefix, &cfg.echo())?;
    Ok((model, paths))
}

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::config(format!("{}: {e}", dir.display())))?;
    }
    Ok(())
}

fn coefficients_path(cfg: &RunConfig) -> PathBuf {
    cfg.coefficients.clone().unwrap_or_else(|| cfg.out_dir.join(format!("{}coefficients.csv", cfg.prefix)))
}

/// Reads a coefficient CSV.
pub fn load_coefficients(path: &Path) -> Result<(Library, CoefficientMatrix), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    CoefficientMatrix::from_csv(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

/// Simulation window `(x0, t0, t1, m)` from the `sim_*` keys with fallbacks.
fn simulation_window(cfg: &RunConfig) -> Result<(Vec<f64>, f64, f64, usize), CliError> {
    let x0 = match &cfg.sim_x0 {
        Some(x) => x.clone(),
        None => cfg.initial_state()?,
    };
    let span = cfg.time_span().ok();
    let t0 = cfg.sim_t0.or(span.map(|s| s.0)).ok_or_else(|| CliError::config("`sim_t0` or `t0` is required"))?;
    let t1 = cfg.sim_t1.or(span.map(|s| s.1)).ok_or_else(|| CliError::config("`sim_t1` or `t1` is required"))?;
    let m = cfg.sim_m.or(cfg.m).ok_or_else(|| CliError::config("`sim_m` or `m` is required"))?;
    if !(t1 > t0) || m == 0 {
        return Err(CliError::config("simulation window needs t1 > t0 and m >= 1"));
    }
    Ok((x0, t0, t1, m))
}

/// Integrates the discovered model; writes `<prefix>simulated.csv`.
pub fn run_simulate(cfg: &RunConfig) -> Result<(Dataset, PathBuf), CliError> {
    let (lib, xi) = load_coefficients(&coefficients_path(cfg))?;
    let (x0, t0, t1, m) = simulation_window(cfg)?;
    let ds = simulate(&lib, &xi, &x0, t0, t1, m)?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    let path = cfg.out_dir.join(format!("{}simulated.csv", cfg.prefix));
    ds.save_csv(&path)?;
    Ok((ds, path))
}

/// Output of [`run_compare`].
#[derive(Debug, Clone)]
pub struct Comparison {
    pub metrics: Metrics,
    pub reference: Dataset,
    pub discovered: Dataset,
    pub metrics_path: PathBuf,
}

/// Compares coefficients in memory; trajectories are simulated on the
/// configured window.
pub fn compare_models(
    cfg: &RunConfig,
    lib: &Library,
    xi: &CoefficientMatrix,
) -> Result<(Metrics, Dataset, Dataset), CliError> {
    let model = cfg.require_model()?;
    let mut metrics = coefficient_metrics(lib, xi, &model.library, &model.coefficients);
    let (x0, t0, t1, m) = simulation_window(cfg)?;
    let reference = simulate(&model.library, &model.coefficients, &x0, t0, t1, m)?;
    let discovered = simulate(lib, xi, &x0, t0, t1, m)?;
    metrics.rmse = Some(rmse(reference.states(), discovered.states()));
    Ok((metrics, reference, discovered))
}

/// Simulates reference and discovered models, writing both trajectories and
/// `<prefix>metrics.txt`.
pub fn run_compare(cfg: &RunConfig) -> Result<Comparison, CliError> {
    let (lib, xi) = load_coefficients(&coefficients_path(cfg))?;
    let (metrics, reference, discovered) = compare_models(cfg, &lib, &xi)?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    reference.save_csv(cfg.out_dir.join(format!("{}reference_trajectory.csv", cfg.prefix)))?;
    discovered.save_csv(cfg.out_dir.join(format!("{}discovered_trajectory.csv", cfg.prefix)))?;
    let metrics_path = cfg.out_dir.join(format!("{}metrics.txt", cfg.prefix));
    std::fs::write(&metrics_path, metrics.to_text())?;
    Ok(Comparison { metrics, reference, discovered, metrics_path })
}
