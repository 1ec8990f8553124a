use super::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{Lu, Matrix};

/// Savitzky–Golay weights for evaluating the local least-squares fit.
///
/// Row `r` (for `r` in `0..window`) gives the weights that, applied to the
/// window samples, evaluate the order-`order` fit at sample offset `r - half`.
pub fn savgol_coefficients(window: usize, order: usize) -> Result<Matrix<f64>> {
    if window < 3 || window % 2 == 0 {
        return Err(Error::InvalidFilter(format!("window must be odd and at least 3, got {window}")));
    }
    if order >= window {
        return Err(Error::InvalidFilter(format!("polynomial order {order} must be below window {window}")));
    }
    let half = (window / 2) as f64;
    let q = order + 1;
    // Vandermonde V (window x q) on offsets scaled to [-1, 1].
    let offs: Vec<f64> = (0..window).map(|i| (i as f64 - half) / half).collect();
    let v = Matrix::from_fn(window, q, |i, j| offs[i].powi(j as i32));
    let vtv = Matrix::from_fn(q, q, |a, b| (0..window).map(|i| v.get(i, a) * v.get(i, b)).sum());
    let lu = Lu::factor(&vtv)?;
    // Fit evaluated at offset r is v_r^T (V^T V)^{-1} V^T y.
    let mut out = Matrix::zeros(window, window);
    for r in 0..window {
        let z = lu.solve(v.row(r));
        for i in 0..window {
            let w: f64 = (0..q).map(|a| z[a] * v.get(i, a)).sum();
            out.set(r, i, w);
        }
    }
    Ok(out)
}

/// Smooths every coordinate with a Savitzky–Golay filter.
///
/// Interior samples use the centred window; the first and last `window / 2`
/// samples take the first or last full-window fit at their own offset.
pub fn savgol_filter(ds: &Dataset, window: usize, order: usize) -> Result<Dataset> {
    let n = ds.times().len();
    if window > n {
        return Err(Error::WindowTooLarge { window, len: n });
    }
    if !ds.is_uniform() {
        return Err(Error::NonUniformGrid);
    }
    let w = savgol_coefficients(window, order)?;
    let half = window / 2;
    let x = ds.states();
    let out = Matrix::from_fn(n, ds.dim(), |k, c| {
        let (start, r) = if k < half {
            (0, k)
        } else if k + half >= n {
            (n - window, k - (n - window))
        } else {
            (k - half, half)
        };
        w.row(r).iter().enumerate().map(|(i, wi)| wi * x.get(start + i, c)).sum()
    });
    ds.with_states(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::add_noise;

    fn sampled(n: usize, h: f64, f: impl Fn(f64) -> f64) -> Dataset {
        let t: Vec<f64> = (0..n).map(|k| k as f64 * h).collect();
        let x = Matrix::from_fn(n, 1, |k, _| f(t[k]));
        Dataset::new(t, x).unwrap()
    }

    #[test]
    fn centre_weights_match_classic_table() {
        // Classic 5-point quadratic smoothing weights (-3, 12, 17, 12, -3) / 35.
        let w = savgol_coefficients(5, 2).unwrap();
        let expect = [-3.0, 12.0, 17.0, 12.0, -3.0];
        for (a, e) in w.row(2).iter().zip(expect) {
            assert!((a - e / 35.0).abs() < 1e-14);
        }
    }

    #[test]
    fn reproduces_polynomials() {
        let quad = sampled(30, 0.1, |t| 1.0 - 2.0 * t + 0.7 * t * t);
        let f = savgol_filter(&quad, 5, 2).unwrap();
        assert!(f.states().as_slice().iter().zip(quad.states().as_slice()).all(|(a, b)| (a - b).abs() < 1e-12));
        let lin = sampled(30, 0.1, |t| 3.0 * t - 1.0);
        let f = savgol_filter(&lin, 7, 1).unwrap();
        assert!(f.states().as_slice().iter().zip(lin.states().as_slice()).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn reduces_noise_on_a_sine() {
        let clean = sampled(400, 0.025, f64::sin);
        let rmse = |a: &Dataset| {
            let s: f64 = a.states().as_slice().iter().zip(clean.states().as_slice()).map(|(x, y)| (x - y).powi(2)).sum();
            (s / 400.0).sqrt()
        };
        for seed in 0..5 {
            let noisy = add_noise(&clean, 0.1, seed).unwrap();
            let smooth = savgol_filter(&noisy, 11, 3).unwrap();
            assert!(rmse(&smooth) < rmse(&noisy));
        }
    }

    #[test]
    fn rejects_bad_windows() {
        let ds = sampled(5, 0.1, |t| t);
        assert!(matches!(savgol_filter(&ds, 7, 2), Err(Error::WindowTooLarge { .. })));
        assert!(matches!(savgol_filter(&ds, 4, 2), Err(Error::InvalidFilter(_))));
        assert!(matches!(savgol_filter(&ds, 3, 3), Err(Error::InvalidFilter(_))));
        let skew = Dataset::new(vec![0.0, 0.1, 0.3, 0.4], Matrix::zeros(4, 1)).unwrap();
        assert!(matches!(savgol_filter(&skew, 3, 1), Err(Error::NonUniformGrid)));
    }
}
