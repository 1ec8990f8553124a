//! Simulation of coefficient models and comparison with a reference.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use irksindy::irk::Integrator;
use irksindy::linalg::Matrix;
use irksindy::{CoefficientMatrix, Dataset, Library, LibraryField, Result};

/// Stages of the integrator used for simulation.
pub const SIMULATION_STAGES: usize = 3;

/// Integrates `Φ(x) ξ` on a uniform grid of `m + 1` points.
pub fn simulate(lib: &Library, xi: &CoefficientMatrix, x0: &[f64], t0: f64, t1: f64, m: usize) -> Result<Dataset> {
    let field = LibraryField::<f64>::new(lib, xi)?;
    let h = (t1 - t0) / m as f64;
    let mut times: Vec<f64> = (0..=m).map(|k| t0 + k as f64 * h).collect();
    times[m] = t1;
    let x = Integrator::gauss(SIMULATION_STAGES)?.integrate(&field, x0, &times)?;
    Dataset::new(times, x)
}

/// Agreement between a discovered and a reference model.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    /// Largest coefficient error over the reference support.
    pub coefficient_max_error: f64,
    pub precision: f64,
    pub recall: f64,
    /// Root-mean-square trajectory difference; `None` when not simulated.
    pub rmse: Option<f64>,
}

fn support(lib: &Library, xi: &CoefficientMatrix) -> BTreeSet<(String, usize)> {
    xi.support().into_iter().map(|(j, c)| (lib.names()[j].clone(), c)).collect()
}

fn coefficient(lib: &Library, xi: &CoefficientMatrix, name: &str, c: usize) -> f64 {
    lib.index_of(name).map_or(0.0, |j| xi.get(j, c))
}

/// Coefficient and support metrics, matched by term name.
///
/// Precision is 1 when nothing was discovered and the reference is also
/// empty, 0 when only the reference has terms.
pub fn coefficient_metrics(
    disc_lib: &Library,
    disc: &CoefficientMatrix,
    ref_lib: &Library,
    reference: &CoefficientMatrix,
) -> Metrics {
    let found = support(disc_lib, disc);
    let truth = support(ref_lib, reference);
    let hits = found.intersection(&truth).count() as f64;
    let precision = if found.is_empty() { if truth.is_empty() { 1.0 } else { 0.0 } } else { hits / found.len() as f64 };
    let recall = if truth.is_empty() { 1.0 } else { hits / truth.len() as f64 };
    let coefficient_max_error = truth
        .iter()
        .map(|(name, c)| (coefficient(disc_lib, disc, name, *c) - coefficient(ref_lib, reference, name, *c)).abs())
        .fold(0.0, f64::max);
    Metrics { coefficient_max_error, precision, recall, rmse: None }
}

/// Root-mean-square difference of two trajectories on the same grid.
pub fn rmse(a: &Matrix<f64>, b: &Matrix<f64>) -> f64 {
    let n = a.as_slice().len().min(b.as_slice().len()).max(1);
    let sum: f64 = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y) * (x - y)).sum();
    (sum / n as f64).sqrt()
}

impl Metrics {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "coefficient_max_error = {:.6e}", self.coefficient_max_error);
        let _ = writeln!(out, "support_precision = {:.6}", self.precision);
        let _ = writeln!(out, "support_recall = {:.6}", self.recall);
        match self.rmse {
            Some(r) => {
                let _ = writeln!(out, "trajectory_rmse = {r:.6e}");
            }
            None => {
                let _ = writeln!(out, "trajectory_rmse = n/a");
            }
        }
        out
    }
}
