//! Gauss–Legendre collocation tableaus.
//!
//! The `s`-stage Gauss method places its abscissae at the roots of the
//! shifted Legendre polynomial `P_s(2c - 1)`, uses the matching Gauss
//! quadrature weights, and fills the stage matrix with the integrals of the
//! Lagrange basis polynomials on those nodes. It has order `2s`, is
//! A-stable and symmetric.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Largest stage count [`gauss_tableau`] accepts. Beyond this the Lagrange
/// integrals lose too much accuracy in double precision.
pub const MAX_STAGES: usize = 64;

const ROOT_TOL: f64 = 1e-14;
const ROOT_MAX_ITER: usize = 100;

/// Coefficients `(A, b, c)` of an `s`-stage Runge–Kutta method.
#[derive(Debug, Clone, PartialEq)]
pub struct ButcherTableau<T> {
    pub c: Vec<T>,
    pub b: Vec<T>,
    pub a: Matrix<T>,
}

impl<T: Scalar> ButcherTableau<T> {
    pub fn stages(&self) -> usize {
        self.c.len()
    }

    /// Row-major copy of `A` as `f64`, for the recording code paths.
    pub fn a_f64(&self) -> Vec<f64> {
        self.a.as_slice().iter().map(|v| v.as_f64()).collect()
    }

    pub fn b_f64(&self) -> Vec<f64> {
        self.b.iter().map(|v| v.as_f64()).collect()
    }

    /// Converts the coefficients to another precision.
    pub fn cast<U: Scalar>(&self) -> ButcherTableau<U> {
        let conv = |v: &T| U::lit(v.as_f64());
        ButcherTableau { c: self.c.iter().map(conv).collect(), b: self.b.iter().map(conv).collect(), a: self.a.map(|v| U::lit(v.as_f64())) }
    }

    /// Writes `c`, `A` and `b` as CSV in Butcher-array layout.
    ///
    /// The header is `c,a1,...,as`; each of the `s` following rows holds
    /// `c_i` and row `i` of `A`; the final row starts with the literal `b`
    /// followed by the weights. Values use 17 significant digits.
    pub fn to_csv(&self) -> String {
        let s = self.stages();
        let mut out = String::from("c");
        for j in 1..=s {
            out.push_str(&format!(",a{j}"));
        }
        out.push('\n');
        for i in 0..s {
            out.push_str(&format!("{:.16e}", self.c[i].as_f64()));
            for j in 0..s {
                out.push_str(&format!(",{:.16e}", self.a.get(i, j).as_f64()));
            }
            out.push('\n');
        }
        out.push('b');
        for j in 0..s {
            out.push_str(&format!(",{:.16e}", self.b[j].as_f64()));
        }
        out.push('\n');
        out
    }
}

/// Legendre polynomial `P_n(x)` and its derivative by the three-term recurrence.
fn legendre<T: Scalar>(n: usize, x: T) -> (T, T) {
    let mut p0 = T::one();
    let mut p1 = x;
    if n == 0 {
        return (p0, T::zero());
    }
    for k in 2..=n {
        let kf = T::lit(k as f64);
        let p2 = ((kf + kf - T::one()) * x * p1 - (kf - T::one()) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = T::lit(n as f64);
    let dp = nf * (x * p1 - p0) / (x * x - T::one());
    (p1, dp)
}

/// Gauss nodes and weights on `[0, 1]`, nodes ascending.
fn gauss_rule<T: Scalar>(s: usize) -> (Vec<T>, Vec<T>) {
    let tol = T::lit(ROOT_TOL).max(T::epsilon() * T::lit(8.0));
    let mut c = vec![T::zero(); s];
    let mut w = vec![T::zero(); s];
    let half = s.div_ceil(2);
    for i in 0..half {
        // Roots on [-1, 1] in descending order; c = (1 - x) / 2 ascends.
        let guess = std::f64::consts::PI * (i as f64 + 0.75) / (s as f64 + 0.5);
        let mut x = T::lit(guess.cos());
        for _ in 0..ROOT_MAX_ITER {
            let (p, dp) = legendre(s, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() <= tol {
                break;
            }
        }
        let (_, dp) = legendre(s, x);
        let weight = T::one() / ((T::one() - x * x) * dp * dp);
        let half_one = T::lit(0.5);
        c[i] = half_one * (T::one() - x);
        w[i] = weight;
        c[s - 1 - i] = half_one * (T::one() + x);
        w[s - 1 - i] = weight;
    }
    if s % 2 == 1 {
        c[s / 2] = T::lit(0.5);
    }
    (c, w)
}

fn lagrange_basis<T: Scalar>(nodes: &[T], j: usize, tau: T) -> T {
    nodes
        .iter()
        .enumerate()
        .filter(|&(m, _)| m != j)
        .fold(T::one(), |acc, (_, &cm)| acc * (tau - cm) / (nodes[j] - cm))
}

/// Builds the `s`-stage Gauss–Legendre tableau of order `2s`.
pub fn gauss_tableau<T: Scalar>(s: usize) -> Result<ButcherTableau<T>> {
    if s == 0 || s > MAX_STAGES {
        return Err(Error::StageCountOutOfRange(s));
    }
    let (c, b) = gauss_rule::<T>(s);
    // A[i][j] = ∫_0^{c_i} L_j, integrated with the same s-point rule mapped
    // onto [0, c_i]; exact because L_j has degree s - 1.
    let a = Matrix::from_fn(s, s, |i, j| {
        let ci = c[i];
        ci * (0..s).map(|k| b[k] * lagrange_basis(&c, j, ci * c[k])).sum::<T>()
    });
    Ok(ButcherTableau { c, b, a })
}

/// Maximum residual of the simplifying conditions `B(order)` and `C(s)`.
pub fn verify_order_conditions<T: Scalar>(tab: &ButcherTableau<T>, order: usize) -> Result<T> {
    let s = tab.stages();
    if order > 2 * s {
        return Err(Error::OrderExceedsMethod { order, max: 2 * s });
    }
    let mut worst = T::zero();
    for q in 1..=order {
        let qf = T::lit(q as f64);
        let sum: T = (0..s).map(|i| tab.b[i] * tab.c[i].powi(q as i32 - 1)).sum();
        worst = worst.max((sum - T::one() / qf).abs());
    }
    for q in 1..=s {
        let qf = T::lit(q as f64);
        for i in 0..s {
            let sum: T = (0..s).map(|j| tab.a.get(i, j) * tab.c[j].powi(q as i32 - 1)).sum();
            worst = worst.max((sum - tab.c[i].powi(q as i32) / qf).abs());
        }
    }
    Ok(worst)
}
