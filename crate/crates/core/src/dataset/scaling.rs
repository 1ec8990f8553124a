use super::Dataset;
use crate::coefficients::CoefficientMatrix;
use crate::error::{Error, Result};
use crate::features::Library;
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScalingMode {
    /// `x' = x / sigma`; keeps monomial supports intact.
    #[default]
    ScaleOnly,
    /// `x' = (x - mu) / sigma`.
    FullStandardize,
}

impl std::str::FromStr for ScalingMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scale_only" => Ok(Self::ScaleOnly),
            "full_standardize" => Ok(Self::FullStandardize),
            _ => Err(Error::InvalidParameter(format!("unknown scaling mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingInfo {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub mode: ScalingMode,
}

impl ScalingInfo {
    pub fn identity(d: usize) -> Self {
        Self { mu: vec![0.0; d], sigma: vec![1.0; d], mode: ScalingMode::ScaleOnly }
    }

    /// Maps a state from original to scaled coordinates.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mu).zip(&self.sigma).map(|((v, m), s)| (v - m) / s).collect()
    }

    /// Maps a state from scaled back to original coordinates.
    pub fn inverse(&self, y: &[f64]) -> Vec<f64> {
        y.iter().zip(&self.mu).zip(&self.sigma).map(|((v, m), s)| v * s + m).collect()
    }
}

/// Per-coordinate conditioning with the population standard deviation.
pub fn standardize(ds: &Dataset, mode: ScalingMode) -> Result<(Dataset, ScalingInfo)> {
    let x = ds.states();
    let n = x.rows() as f64;
    let d = ds.dim();
    let mut mean = vec![0.0; d];
    let mut sigma = vec![0.0; d];
    for c in 0..d {
        let m = (0..x.rows()).map(|k| x.get(k, c)).sum::<f64>() / n;
        let var = (0..x.rows()).map(|k| (x.get(k, c) - m).powi(2)).sum::<f64>() / n;
        let s = var.sqrt();
        if !(s > 1e-300) || s <= 1e-12 * m.abs() {
            return Err(Error::DegenerateCoordinate(c));
        }
        mean[c] = m;
        sigma[c] = s;
    }
    let mu = match mode {
        ScalingMode::ScaleOnly => vec![0.0; d],
        ScalingMode::FullStandardize => mean,
    };
    let info = ScalingInfo { mu, sigma, mode };
    let scaled = Matrix::from_fn(x.rows(), d, |k, c| (x.get(k, c) - info.mu[c]) / info.sigma[c]);
    Ok((ds.with_states(scaled)?, info))
}

fn term_factors(xi: &CoefficientMatrix, scaling: &ScalingInfo, lib: &Library) -> Result<Vec<f64>> {
    if scaling.mode != ScalingMode::ScaleOnly {
        return Err(Error::UnsupportedScalingMode);
    }
    let d = lib.dimension();
    if xi.terms() != lib.len() || xi.states() != d || scaling.sigma.len() != d {
        return Err(Error::DimensionMismatch { expected: d, actual: scaling.sigma.len() });
    }
    lib.terms()
        .iter()
        .map(|t| {
            let p = t.powers(d).ok_or(Error::NonPolynomialLibrary)?;
            Ok(p.iter().zip(&scaling.sigma).map(|(&e, s)| s.powi(e as i32)).product())
        })
        .collect()
}

/// Maps coefficients found for `y = x / sigma` back to the original `x`.
///
/// Coefficient `(term, i)` is multiplied by `sigma_i / prod_j sigma_j^{p_j}`.
pub fn rescale_coefficients(xi: &CoefficientMatrix, scaling: &ScalingInfo, lib: &Library) -> Result<CoefficientMatrix> {
    let prods = term_factors(xi, scaling, lib)?;
    let mut out = xi.clone();
    for i in 0..xi.states() {
        for (j, pj) in prods.iter().enumerate() {
            out.set(j, i, xi.get(j, i) * scaling.sigma[i] / pj);
        }
    }
    Ok(out)
}

/// Inverse of [`rescale_coefficients`]: original coordinates to scaled ones.
pub fn scale_coefficients(xi: &CoefficientMatrix, scaling: &ScalingInfo, lib: &Library) -> Result<CoefficientMatrix> {
    let prods = term_factors(xi, scaling, lib)?;
    let mut out = xi.clone();
    for i in 0..xi.states() {
        for (j, pj) in prods.iter().enumerate() {
            out.set(j, i, xi.get(j, i) * pj / scaling.sigma[i]);
        }
    }
    Ok(out)
}
