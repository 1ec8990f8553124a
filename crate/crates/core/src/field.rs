//! Vector fields `f(x) = Φ(x) ξ` built from a library and coefficients.

use crate::coefficients::CoefficientMatrix;
use crate::error::{Error, Result};
use crate::features::Library;
use crate::linalg::Matrix;
use crate::scalar::{Real, Scalar};

/// Right-hand side of an autonomous ODE, with its Jacobian.
pub trait VectorField<T> {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[T], out: &mut [T]);
    /// `d x d` Jacobian, `jac[c][i] = ∂f_c / ∂x_i`.
    fn jacobian(&self, x: &[T], jac: &mut Matrix<T>);
}

/// Evaluates `Φ(x) ξ` for column-major `ξ` of shape `p x d`.
///
/// Works for any [`Real`], so the same code evaluates plain floats or records
/// onto a tape when `x` or `ξ` are tape variables. `phi` is scratch space.
pub fn eval_library_field<T: Real>(lib: &Library, xi: &[T], x: &[T], phi: &mut Vec<T>, out: &mut [T]) {
    let p = lib.len();
    debug_assert_eq!(xi.len(), p * out.len());
    lib.evaluate_into(x, phi);
    for (c, o) in out.iter_mut().enumerate() {
        *o = T::dot(phi, &xi[c * p..(c + 1) * p]);
    }
}

/// Library-backed vector field in a fixed precision.
#[derive(Debug, Clone)]
pub struct LibraryField<'a, T> {
    lib: &'a Library,
    xi: Vec<T>,
}

impl<'a, T: Scalar> LibraryField<'a, T> {
    pub fn new(lib: &'a Library, coefficients: &CoefficientMatrix) -> Result<Self> {
        if coefficients.terms() != lib.len() {
            return Err(Error::ShapeMismatch { expected: lib.len(), actual: coefficients.terms() });
        }
        if coefficients.states() != lib.dimension() {
            return Err(Error::DimensionMismatch { expected: lib.dimension(), actual: coefficients.states() });
        }
        Ok(Self::from_values(lib, coefficients.values()))
    }

    /// From column-major `f64` coefficients; the length must be `p * d`.
    pub fn from_values(lib: &'a Library, xi: &[f64]) -> Self {
        assert_eq!(xi.len(), lib.len() * lib.dimension(), "coefficient length");
        Self { lib, xi: xi.iter().map(|&v| T::lit(v)).collect() }
    }

    pub fn library(&self) -> &Library {
        self.lib
    }
}

impl<T: Scalar> VectorField<T> for LibraryField<'_, T> {
    fn dim(&self) -> usize {
        self.lib.dimension()
    }

    fn eval(&self, x: &[T], out: &mut [T]) {
        let mut phi = Vec::with_capacity(self.lib.len());
        eval_library_field(self.lib, &self.xi, x, &mut phi, out);
    }

    fn jacobian(&self, x: &[T], jac: &mut Matrix<T>) {
        let d = self.dim();
        let p = self.lib.len();
        let lj = self.lib.jacobian(x).expect("state dimension checked by caller");
        for c in 0..d {
            let col = &self.xi[c * p..(c + 1) * p];
            for i in 0..d {
                let mut acc = T::zero();
                for (j, &w) in col.iter().enumerate() {
                    if w != T::zero() {
                        acc += w * lj.get(j, i);
                    }
                }
                jac.set(c, i, acc);
            }
        }
    }
}
