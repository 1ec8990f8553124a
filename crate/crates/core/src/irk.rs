//! Implicit Runge–Kutta stage solving and step prediction.
//!
//! For a step of size `h` from `x`, the stage values satisfy
//! `χ_i = x + h Σ_j A_ij f(χ_j)` and the step result is
//! `x + h Σ_j b_j f(χ_j)`. A negative `h` gives the backward prediction.

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::linalg::{Lu, Matrix};
use crate::scalar::{Real, Scalar};
use crate::tableau::ButcherTableau;

/// Iteration used to solve the stage equations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageSolver {
    FixedPoint,
    Newton,
}

/// Stage solver configuration.
///
/// `tol` bounds the max-norm of the stage defect, relative to
/// `max(1, |x|_inf)` so that large states are not held to an absolute
/// tolerance below their rounding level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub method: StageSolver,
    pub tol: f64,
    pub max_iterations: usize,
}

impl SolverSettings {
    pub fn newton() -> Self {
        Self { method: StageSolver::Newton, tol: 1e-12, max_iterations: 25 }
    }

    pub fn fixed_point() -> Self {
        Self { method: StageSolver::FixedPoint, tol: 1e-12, max_iterations: 100 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iterations == 0 {
            return Err(Error::InvalidConfig("solver tolerance must be positive and iterations at least 1".into()));
        }
        Ok(())
    }
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self::newton()
    }
}

/// Solved stage values `χ` (one row per stage).
#[derive(Debug, Clone, PartialEq)]
pub struct StageValues<T> {
    pub chi: Matrix<T>,
    pub iterations_used: usize,
    pub residual: T,
}

const NEWTON_BACKTRACKS: usize = 8;

const DIVERGENCE_PATIENCE: usize = 5;

pub(crate) fn stage_rates<T: Scalar, F: VectorField<T>>(f: &F, chi: &Matrix<T>, rates: &mut Matrix<T>) {
    for i in 0..chi.rows() {
        f.eval(chi.row(i), rates.row_mut(i));
    }
}

/// Writes `G_i = χ_i - x - h Σ_j A_ij f(χ_j)` and returns its max-norm.
fn stage_defect<T: Scalar>(x: &[T], h: T, tab: &ButcherTableau<T>, chi: &Matrix<T>, rates: &Matrix<T>, g: &mut Matrix<T>) -> T {
    let s = tab.stages();
    let mut worst = T::zero();
    for i in 0..s {
        for (c, &xc) in x.iter().enumerate() {
            let mut acc = T::zero();
            for j in 0..s {
                acc += tab.a.get(i, j) * rates.get(j, c);
            }
            let v = chi.get(i, c) - xc - h * acc;
            g.set(i, c, v);
            worst = if v.is_nan() { T::nan() } else { worst.max(v.abs()) };
        }
    }
    worst
}

fn scaled_tol<T: Scalar>(x: &[T], tol: f64) -> T {
    let scale = x.iter().fold(T::one(), |m, v| m.max(v.abs()));
    T::lit(tol) * scale
}

/// Solves the stage equations from the initial guess `χ_i = x`.
pub fn solve_stages<T: Scalar, F: VectorField<T>>(
    f: &F,
    x: &[T],
    h: T,
    tab: &ButcherTableau<T>,
    settings: &SolverSettings,
) -> Result<StageValues<T>> {
    solve_stages_from(f, x, h, tab, settings, None)
}

/// As [`solve_stages`], starting from `guess` (`s x d`) when given.
pub fn solve_stages_from<T: Scalar, F: VectorField<T>>(
    f: &F,
    x: &[T],
    h: T,
    tab: &ButcherTableau<T>,
    settings: &SolverSettings,
    guess: Option<&Matrix<T>>,
) -> Result<StageValues<T>> {
    let d = f.dim();
    if x.len() != d {
        return Err(Error::DimensionMismatch { expected: d, actual: x.len() });
    }
    let s = tab.stages();
    let tol = scaled_tol(x, settings.tol);
    let mut chi = match guess {
        Some(g) if g.rows() == s && g.cols() == d && g.as_slice().iter().all(|v| v.is_finite()) => g.clone(),
        _ => Matrix::from_fn(s, d, |_, c| x[c]),
    };
    let mut rates = Matrix::zeros(s, d);
    let mut g = Matrix::zeros(s, d);
    let mut growth = 0;
    let mut defect = T::infinity();
    let mut evaluated = false;
    for it in 0..=settings.max_iterations {
        let prev = defect;
        if !evaluated {
            stage_rates(f, &chi, &mut rates);
            defect = stage_defect(x, h, tab, &chi, &rates, &mut g);
        }
        evaluated = false;
        if defect <= tol {
            return Ok(StageValues { chi, iterations_used: it, residual: defect });
        }
        if it == settings.max_iterations || !defect.is_finite() {
            break;
        }
        match settings.method {
            StageSolver::FixedPoint => {
                // Abort once the defect has grown for several iterations running.
                growth = if defect > prev { growth + 1 } else { 0 };
                if growth >= DIVERGENCE_PATIENCE {
                    break;
                }
                for i in 0..s {
                    for c in 0..d {
                        let v = chi.get(i, c) - g.get(i, c);
                        chi.set(i, c, v);
                    }
                }
            }
            StageSolver::Newton => {
                let jac = stage_jacobian(f, &chi, h, tab);
                let lu = Lu::factor(&jac)?;
                let rhs: Vec<T> = g.as_slice().iter().map(|&v| -v).collect();
                let delta = lu.solve(&rhs);
                // Backtrack while the full step does not reduce the defect.
                let mut step = T::one();
                let mut trial = chi.clone();
                let mut trial_rates = Matrix::zeros(s, d);
                let mut trial_g = Matrix::zeros(s, d);
                for attempt in 0..=NEWTON_BACKTRACKS {
                    for ((t, &v), &dv) in trial.as_mut_slice().iter_mut().zip(chi.as_slice()).zip(&delta) {
                        *t = v + step * dv;
                    }
                    stage_rates(f, &trial, &mut trial_rates);
                    let trial_defect = stage_defect(x, h, tab, &trial, &trial_rates, &mut trial_g);
                    if trial_defect < defect || attempt == NEWTON_BACKTRACKS {
                        chi = trial;
                        rates = trial_rates;
                        g = trial_g;
                        defect = trial_defect;
                        evaluated = true;
                        break;
                    }
                    step = step.scale(0.5);
                }
            }
        }
    }
    Err(Error::NonConvergence { iterations: settings.max_iterations, defect: defect.as_f64() })
}

/// Jacobian of the stage defect with respect to the stacked stages:
/// blocks `δ_ij I - h A_ij Jf(χ_j)`.
pub fn stage_jacobian<T: Scalar, F: VectorField<T>>(f: &F, chi: &Matrix<T>, h: T, tab: &ButcherTableau<T>) -> Matrix<T> {
    let (s, d) = (tab.stages(), f.dim());
    let n = s * d;
    let mut jac = Matrix::zeros(n, n);
    let mut jf = Matrix::zeros(d, d);
    for j in 0..s {
        f.jacobian(chi.row(j), &mut jf);
        for i in 0..s {
            let w = h * tab.a.get(i, j);
            for r in 0..d {
                for c in 0..d {
                    let delta = if i == j && r == c { T::one() } else { T::zero() };
                    jac.set(i * d + r, j * d + c, delta - w * jf.get(r, c));
                }
            }
        }
    }
    jac
}

/// `x + h Σ_j b_j f(χ_j)` given the stage rates.
fn combine<T: Scalar>(x: &[T], h: T, tab: &ButcherTableau<T>, rates: &Matrix<T>) -> Vec<T> {
    x.iter()
        .enumerate()
        .map(|(c, &xc)| {
            let acc: T = (0..tab.stages()).map(|j| tab.b[j] * rates.get(j, c)).sum();
            xc + h * acc
        })
        .collect()
}

/// One IRK step `x + h Σ b_j f(χ_j)`; negative `h` predicts backwards.
pub fn step<T: Scalar, F: VectorField<T>>(
    f: &F,
    x: &[T],
    h: T,
    tab: &ButcherTableau<T>,
    settings: &SolverSettings,
) -> Result<Vec<T>> {
    let st = solve_stages(f, x, h, tab, settings)?;
    let mut rates = Matrix::zeros(tab.stages(), f.dim());
    stage_rates(f, &st.chi, &mut rates);
    Ok(combine(x, h, tab, &rates))
}

/// Per-stage reconstructions of both interval endpoints from stage values.
///
/// Row `i` of the first output is `χ_i - h Σ_j A_ij f(χ_j)` (≈ `x(t_k)`);
/// row `i` of the second is `χ_i + h Σ_j (b_j - A_ij) f(χ_j)` (≈ `x(t_k + h)`).
/// Generic over [`Real`] so the network-driven loss can record it.
pub fn predictor_rows<T: Real>(chi: &[T], rates: &[T], h: f64, a: &[f64], b: &[f64], d: usize, left: &mut [T], right: &mut [T]) {
    let s = b.len();
    debug_assert_eq!(chi.len(), s * d);
    let mut col = Vec::with_capacity(s);
    let mut wl = vec![0.0; s];
    let mut wr = vec![0.0; s];
    for i in 0..s {
        for j in 0..s {
            wl[j] = -h * a[i * s + j];
            wr[j] = h * (b[j] - a[i * s + j]);
        }
        for c in 0..d {
            col.clear();
            col.extend((0..s).map(|j| rates[j * d + c]));
            let base = chi[i * d + c];
            left[i * d + c] = base + T::weighted_sum(&wl, &col);
            right[i * d + c] = base + T::weighted_sum(&wr, &col);
        }
    }
}

/// Stage predictors for solved (or externally supplied) stage values.
pub fn stage_predictors<T: Scalar, F: VectorField<T>>(
    chi: &Matrix<T>,
    f: &F,
    h: T,
    tab: &ButcherTableau<T>,
) -> Result<(Matrix<T>, Matrix<T>)> {
    let (s, d) = (tab.stages(), f.dim());
    if chi.rows() != s || chi.cols() != d {
        return Err(Error::DimensionMismatch { expected: s * d, actual: chi.rows() * chi.cols() });
    }
    let mut rates = Matrix::zeros(s, d);
    stage_rates(f, chi, &mut rates);
    let mut left = Matrix::zeros(s, d);
    let mut right = Matrix::zeros(s, d);
    for i in 0..s {
        for c in 0..d {
            let mut al = T::zero();
            let mut ar = T::zero();
            for j in 0..s {
                al += tab.a.get(i, j) * rates.get(j, c);
                ar += (tab.b[j] - tab.a.get(i, j)) * rates.get(j, c);
            }
            left.set(i, c, chi.get(i, c) - h * al);
            right.set(i, c, chi.get(i, c) + h * ar);
        }
    }
    Ok((left, right))
}

/// Forward and backward predictions over a dataset.
///
/// Row `k` of the right prediction is the step from `X[k]` with `+h_k`
/// (compared against `X[k+1]`); row `k` of the left prediction is the step
/// from `X[k+1]` with `-h_k` (compared against `X[k]`).
pub fn predict_matrices<F: VectorField<f64>>(
    f: &F,
    ds: &Dataset,
    tab: &ButcherTableau<f64>,
    settings: &SolverSettings,
) -> Result<(Matrix<f64>, Matrix<f64>)> {
    let m = ds.intervals();
    if m == 0 {
        return Err(Error::EmptyDataset);
    }
    let d = ds.dim();
    let mut left = Matrix::zeros(m, d);
    let mut right = Matrix::zeros(m, d);
    for k in 0..m {
        let h = ds.step(k);
        let r = step(f, ds.state(k), h, tab, settings).map_err(|e| e.at_interval(k))?;
        let l = step(f, ds.state(k + 1), -h, tab, settings).map_err(|e| e.at_interval(k))?;
        right.row_mut(k).copy_from_slice(&r);
        left.row_mut(k).copy_from_slice(&l);
    }
    Ok((left, right))
}

/// Classical explicit four-stage Runge–Kutta step for any [`Real`].
pub fn rk4_step_with<T: Real>(mut f: impl FnMut(&[T]) -> Vec<T>, x: &[T], h: f64) -> Vec<T> {
    let axpy = |base: &[T], k: &[T], w: f64| -> Vec<T> { base.iter().zip(k).map(|(&b, &v)| b + v.scale(w)).collect() };
    let k1 = f(x);
    let k2 = f(&axpy(x, &k1, 0.5 * h));
    let k3 = f(&axpy(x, &k2, 0.5 * h));
    let k4 = f(&axpy(x, &k3, h));
    (0..x.len())
        .map(|c| x[c] + T::weighted_sum(&[h / 6.0, h / 3.0, h / 3.0, h / 6.0], &[k1[c], k2[c], k3[c], k4[c]]))
        .collect()
}

/// Classical explicit four-stage Runge–Kutta step.
pub fn rk4_step<F: VectorField<f64>>(f: &F, x: &[f64], h: f64) -> Vec<f64> {
    rk4_step_with(
        |y: &[f64]| {
            let mut out = vec![0.0; y.len()];
            f.eval(y, &mut out);
            out
        },
        x,
        h,
    )
}

/// Fixed-grid integration with internal substepping.
///
/// Substeps are at most `max_step` long and end exactly on the output times.
/// A failed stage solve halves the substep (down to `min_step`); after a
/// success it grows back towards `max_step`. States whose max-norm exceeds
/// `blowup` are reported as an integration failure.
#[derive(Debug, Clone)]
pub struct Integrator {
    pub tableau: ButcherTableau<f64>,
    pub settings: SolverSettings,
    pub max_step: f64,
    pub min_step: f64,
    pub blowup: f64,
}

impl Integrator {
    pub fn gauss(stages: usize) -> Result<Self> {
        Ok(Self {
            tableau: crate::tableau::gauss_tableau(stages)?,
            settings: SolverSettings::newton(),
            max_step: 1e-2,
            min_step: 1e-9,
            blowup: 1e8,
        })
    }

    /// States at each of `times`, starting from `x0` at `times[0]`.
    pub fn integrate<F: VectorField<f64>>(&self, f: &F, x0: &[f64], times: &[f64]) -> Result<Matrix<f64>> {
        let d = f.dim();
        if x0.len() != d {
            return Err(Error::DimensionMismatch { expected: d, actual: x0.len() });
        }
        let mut out = Matrix::zeros(times.len(), d);
        if times.is_empty() {
            return Ok(out);
        }
        out.row_mut(0).copy_from_slice(x0);
        let mut x = x0.to_vec();
        let mut h = self.max_step;
        for k in 1..times.len() {
            let (t_end, dir) = (times[k], (times[k] - times[k - 1]).signum());
            let mut t = times[k - 1];
            while (t_end - t) * dir > 0.0 {
                let remaining = (t_end - t).abs();
                let hk = h.min(remaining);
                match step(f, &x, dir * hk, &self.tableau, &self.settings) {
                    Ok(next) => {
                        if next.iter().any(|v| !v.is_finite() || v.abs() > self.blowup) {
                            return Err(Error::IntegrationFailure { time: t, reason: "state blew up".into() });
                        }
                        x = next;
                        t = if hk == remaining { t_end } else { t + dir * hk };
                        h = (2.0 * h).min(self.max_step);
                    }
                    Err(e) => {
                        h = hk / 2.0;
                        if h < self.min_step {
                            return Err(Error::IntegrationFailure { time: t, reason: e.to_string() });
                        }
                    }
                }
            }
            out.row_mut(k).copy_from_slice(&x);
        }
        Ok(out)
    }
}
