//! Trajectory data: synthetic generation, noise, smoothing, conditioning and CSV I/O.

mod models;
mod noise;
mod savgol;
mod scaling;

pub use models::{reference_model, ReferenceModel, MODEL_NAMES};
pub use noise::{add_noise, GaussianSource};
pub use savgol::{savgol_coefficients, savgol_filter};
pub use scaling::{rescale_coefficients, scale_coefficients, standardize, ScalingInfo, ScalingMode};

use std::path::Path;

use crate::error::{Error, Result};
use crate::field::LibraryField;
use crate::irk::Integrator;
use crate::linalg::Matrix;

/// Sampled trajectory: times `t_0 < ... < t_m` and states `X` (one row per time).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    t: Vec<f64>,
    x: Matrix<f64>,
}

impl Dataset {
    pub fn new(t: Vec<f64>, x: Matrix<f64>) -> Result<Self> {
        if t.len() != x.rows() {
            return Err(Error::MalformedFile(format!("{} times for {} state rows", t.len(), x.rows())));
        }
        if x.cols() == 0 {
            return Err(Error::MalformedFile("states have no coordinates".into()));
        }
        if t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::MalformedFile("sample times must be strictly increasing".into()));
        }
        if t.iter().chain(x.as_slice()).any(|v| !v.is_finite()) {
            return Err(Error::MalformedFile("non-finite value in trajectory".into()));
        }
        Ok(Self { t, x })
    }

    pub fn times(&self) -> &[f64] {
        &self.t
    }
    pub fn states(&self) -> &Matrix<f64> {
        &self.x
    }
    pub fn state(&self, k: usize) -> &[f64] {
        self.x.row(k)
    }
    pub fn dim(&self) -> usize {
        self.x.cols()
    }
    /// Number of intervals `m` (samples minus one).
    pub fn intervals(&self) -> usize {
        self.t.len().saturating_sub(1)
    }
    /// Stepsize `h_k = t_{k+1} - t_k`.
    pub fn step(&self, k: usize) -> f64 {
        self.t[k + 1] - self.t[k]
    }

    /// Same times with replaced states.
    pub fn with_states(&self, x: Matrix<f64>) -> Result<Self> {
        Self::new(self.t.clone(), x)
    }

    /// Whether all stepsizes agree to a relative `1e-9`.
    pub fn is_uniform(&self) -> bool {
        if self.intervals() < 2 {
            return true;
        }
        let h0 = self.step(0);
        (0..self.intervals()).all(|k| (self.step(k) - h0).abs() <= 1e-9 * h0.abs())
    }

    /// Time-reversed copy: `t -> -t` with the rows in reverse order.
    pub fn time_reversed(&self) -> Self {
        let n = self.t.len();
        let t = self.t.iter().rev().map(|v| -v).collect();
        let x = Matrix::from_fn(n, self.dim(), |i, c| self.x.get(n - 1 - i, c));
        Self { t, x }
    }

    /// CSV text: header `t,x1,...,xd`, values with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for c in 1..=self.dim() {
            out.push_str(&format!(",x{c}"));
        }
        out.push('\n');
        for (k, &t) in self.t.iter().enumerate() {
            out.push_str(&format!("{t:.16e}"));
            for v in self.x.row(k) {
                out.push_str(&format!(",{v:.16e}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::MalformedFile("empty trajectory file".into()))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.len() < 2 || cols[0] != "t" {
            return Err(Error::MalformedFile("header must be `t,x1,...,xd`".into()));
        }
        let d = cols.len() - 1;
        let mut t = Vec::new();
        let mut data = Vec::new();
        for (n, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != d + 1 {
                return Err(Error::MalformedFile(format!("row {} has {} columns, expected {}", n + 2, fields.len(), d + 1)));
            }
            let parse = |f: &str| f.parse::<f64>().map_err(|_| Error::MalformedFile(format!("bad number `{f}` on row {}", n + 2)));
            t.push(parse(fields[0])?);
            for f in &fields[1..] {
                data.push(parse(f)?);
            }
        }
        if t.is_empty() {
            return Err(Error::MalformedFile("trajectory has no samples".into()));
        }
        Self::new(t.clone(), Matrix::from_vec(t.len(), d, data))
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }
}

/// Stage count of the data-generating integrator.
pub const GENERATOR_STAGES: usize = 5;

/// Samples a reference model on a uniform grid of `m + 1` points.
///
/// States come from the Gauss `s = 5` integrator with Newton stages and
/// substeps of at most `0.01` time units.
pub fn generate(model: &ReferenceModel, x0: &[f64], t0: f64, t_end: f64, m: usize) -> Result<Dataset> {
    if !(t_end > t0) {
        return Err(Error::InvalidParameter(format!("t_end ({t_end}) must exceed t0 ({t0})")));
    }
    if m == 0 {
        return Err(Error::InvalidParameter("m must be at least 1".into()));
    }
    let field = LibraryField::<f64>::new(&model.library, &model.coefficients)?;
    let h = (t_end - t0) / m as f64;
    let mut times: Vec<f64> = (0..=m).map(|k| t0 + k as f64 * h).collect();
    times[m] = t_end;
    let x = Integrator::gauss(GENERATOR_STAGES)?.integrate(&field, x0, &times)?;
    Dataset::new(times, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::CoefficientMatrix;
    use crate::features::{Library, LibrarySpec};

    fn decay_model() -> ReferenceModel {
        let lib = Library::build(&LibrarySpec { constant: false, ..LibrarySpec::polynomial(1, 1) }).unwrap();
        ReferenceModel::custom(lib, CoefficientMatrix::from_rows(&[vec![-1.0]])).unwrap()
    }

    #[test]
    fn generate_exponential_decay() {
        let ds = generate(&decay_model(), &[1.0], 0.0, 5.0, 50).unwrap();
        assert_eq!(ds.intervals(), 50);
        assert_eq!(ds.state(0), &[1.0]);
        for (k, &t) in ds.times().iter().enumerate() {
            let exact = (-t).exp();
            assert!((ds.state(k)[0] - exact).abs() <= 1e-9 * exact);
        }
    }

    #[test]
    fn logistic_matches_closed_form() {
        let model = reference_model("logistic", &[]).unwrap();
        let ds = generate(&model, &[0.1], 0.0, 50.0, 50).unwrap();
        let closed = |t: f64| 2.0 / (1.0 + (2.0 - 0.1) / 0.1 * (-0.31 * t).exp());
        assert!((ds.state(10)[0] - 1.077625).abs() < 1e-5);
        for (k, &t) in ds.times().iter().enumerate() {
            assert!((ds.state(k)[0] - closed(t)).abs() < 1e-10 * closed(t));
        }
        assert!((ds.state(50)[0] - 1.9999929495).abs() < 1e-9);
    }

    #[test]
    fn linear_oscillator_radial_decay() {
        let model = reference_model("linear_osc", &[]).unwrap();
        let ds = generate(&model, &[2.0, 0.0], 0.0, 20.0, 400).unwrap();
        let last = ds.state(400);
        let norm = (last[0] * last[0] + last[1] * last[1]).sqrt();
        assert!((norm - 2.0 * (-2.0f64).exp()).abs() < 1e-4);
    }

    #[test]
    fn generate_rejects_bad_grids() {
        let model = decay_model();
        assert!(generate(&model, &[1.0], 1.0, 1.0, 5).is_err());
        assert!(generate(&model, &[1.0], 0.0, 1.0, 0).is_err());
        assert!(matches!(generate(&model, &[1.0, 2.0], 0.0, 1.0, 3), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let model = reference_model("linear_osc", &[]).unwrap();
        let ds = generate(&model, &[2.0, 0.0], 0.0, 1.0, 7).unwrap();
        let text = ds.to_csv();
        assert!(text.starts_with("t,x1,x2\n"));
        assert_eq!(Dataset::from_csv(&text).unwrap(), ds);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.csv");
        ds.save_csv(&path).unwrap();
        assert_eq!(Dataset::load_csv(&path).unwrap(), ds);

        assert!(matches!(Dataset::from_csv("t,x1\n0,1\n2,1\n1,1\n"), Err(Error::MalformedFile(_))));
        assert!(matches!(Dataset::from_csv("t,x1\n0,1,3\n"), Err(Error::MalformedFile(_))));
        assert!(matches!(Dataset::from_csv("t,x1\n"), Err(Error::MalformedFile(_))));
        assert!(matches!(Dataset::load_csv(dir.path().join("missing.csv")), Err(Error::Io(_))));
    }

    #[test]
    fn time_reversal_and_uniformity() {
        let t = vec![0.0, 0.5, 1.0];
        let x = Matrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]);
        let ds = Dataset::new(t, x).unwrap();
        assert!(ds.is_uniform());
        let r = ds.time_reversed();
        assert_eq!(r.times(), &[-1.0, -0.5, 0.0]);
        assert_eq!(r.state(0), &[3.0]);
        let skewed = Dataset::new(vec![0.0, 0.5, 1.2], Matrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0]])).unwrap();
        assert!(!skewed.is_uniform());
    }
}
