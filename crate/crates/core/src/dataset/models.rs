use crate::coefficients::CoefficientMatrix;
use crate::error::{Error, Result};
use crate::features::{Library, LibrarySpec};

/// Names accepted by [`reference_model`].
pub const MODEL_NAMES: [&str; 6] = ["linear_osc", "cubic_osc", "fhn", "lorenz", "lotka_volterra", "logistic"];

/// Benchmark right-hand side as a library plus its exact coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceModel {
    pub name: String,
    pub params: Vec<(String, f64)>,
    pub library: Library,
    pub coefficients: CoefficientMatrix,
    pub default_x0: Vec<f64>,
    pub default_t_span: (f64, f64),
}

impl ReferenceModel {
    /// User-supplied right-hand side; the name is `custom`.
    pub fn custom(library: Library, coefficients: CoefficientMatrix) -> Result<Self> {
        if coefficients.terms() != library.len() {
            return Err(Error::ShapeMismatch { expected: library.len(), actual: coefficients.terms() });
        }
        if coefficients.states() != library.dimension() {
            return Err(Error::DimensionMismatch { expected: library.dimension(), actual: coefficients.states() });
        }
        let d = library.dimension();
        Ok(Self {
            name: "custom".into(),
            params: Vec::new(),
            library,
            coefficients,
            default_x0: vec![0.0; d],
            default_t_span: (0.0, 1.0),
        })
    }

    pub fn dimension(&self) -> usize {
        self.library.dimension()
    }

    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|(n, _)| n == name).map(|p| p.1)
    }

    /// Evaluates the right-hand side at `x`.
    pub fn rhs(&self, x: &[f64]) -> Result<Vec<f64>> {
        let phi = self.library.evaluate(x)?;
        Ok((0..self.dimension())
            .map(|c| phi.iter().zip(self.coefficients.column(c)).map(|(a, b)| a * b).sum())
            .collect())
    }
}

fn defaults(name: &str) -> Option<&'static [(&'static str, f64)]> {
    Some(match name {
        "linear_osc" | "cubic_osc" => &[("damping", 0.1), ("omega", 2.0)],
        "fhn" => &[("i_ext", 0.5), ("epsilon", 0.04), ("a", 0.8), ("b", 0.7)],
        "lorenz" => &[("sigma", 10.0), ("rho", 28.0), ("beta", 8.0 / 3.0)],
        "lotka_volterra" => &[("alpha", 2.0 / 3.0), ("beta", 4.0 / 3.0), ("gamma", 1.0), ("delta", 1.0)],
        "logistic" => &[("r", 0.31), ("k", 2.0)],
        _ => return None,
    })
}

/// Builds a benchmark model over the smallest polynomial library (with a
/// constant term) that contains it.
///
/// `overrides` replace named parameters; unknown parameter names are rejected.
pub fn reference_model(name: &str, overrides: &[(&str, f64)]) -> Result<ReferenceModel> {
    let defaults = defaults(name).ok_or_else(|| Error::UnknownModel(name.to_string()))?;
    let mut params: Vec<(String, f64)> = defaults.iter().map(|(n, v)| (n.to_string(), *v)).collect();
    for (key, value) in overrides {
        let slot = params
            .iter_mut()
            .find(|(n, _)| n.eq_ignore_ascii_case(key))
            .ok_or_else(|| Error::InvalidParameter(format!("model `{name}` has no parameter `{key}`")))?;
        if !value.is_finite() {
            return Err(Error::InvalidParameter(format!("parameter `{key}` must be finite")));
        }
        slot.1 = *value;
    }
    let p = |n: &str| params.iter().find(|(k, _)| k == n).map(|x| x.1).unwrap();

    let (d, degree, x0, span): (usize, usize, Vec<f64>, (f64, f64)) = match name {
        "linear_osc" => (2, 1, vec![2.0, 0.0], (0.0, 20.0)),
        "cubic_osc" => (2, 3, vec![2.0, 0.0], (0.0, 20.0)),
        "fhn" => (2, 3, vec![0.0, 0.0], (0.0, 200.0)),
        "lorenz" => (3, 2, vec![-8.0, 7.0, 27.0], (0.0, 10.0)),
        "lotka_volterra" => (2, 2, vec![1.8, 1.8], (0.0, 10.0)),
        "logistic" => (1, 2, vec![0.1], (0.0, 50.0)),
        _ => unreachable!(),
    };
    let library = Library::build(&LibrarySpec::polynomial(d, degree))?;
    let mut xi = CoefficientMatrix::zeros(library.len(), d);
    let mut put = |term: &str, state: usize, v: f64| {
        let j = library.index_of(term).expect("term in minimal library");
        xi.set(j, state, v);
    };
    match name {
        "linear_osc" | "cubic_osc" => {
            let (dm, om) = (p("damping"), p("omega"));
            let (t1, t2) = if name == "linear_osc" { ("x1", "x2") } else { ("x1^3", "x2^3") };
            put(t1, 0, -dm);
            put(t2, 0, om);
            put(t1, 1, -om);
            put(t2, 1, -dm);
        }
        "fhn" => {
            let (i, e, a, b) = (p("i_ext"), p("epsilon"), p("a"), p("b"));
            put("1", 0, i);
            put("x1", 0, 1.0);
            put("x2", 0, -1.0);
            put("x1^3", 0, -1.0 / 3.0);
            put("1", 1, e * a);
            put("x1", 1, e);
            put("x2", 1, -e * b);
        }
        "lorenz" => {
            let (s, r, b) = (p("sigma"), p("rho"), p("beta"));
            put("x1", 0, -s);
            put("x2", 0, s);
            put("x1", 1, r);
            put("x2", 1, -1.0);
            put("x1*x3", 1, -1.0);
            put("x1*x2", 2, 1.0);
            put("x3", 2, -b);
        }
        "lotka_volterra" => {
            let (al, be, ga, de) = (p("alpha"), p("beta"), p("gamma"), p("delta"));
            put("x1", 0, al);
            put("x1*x2", 0, -be);
            put("x2", 1, -ga);
            put("x1*x2", 1, de);
        }
        "logistic" => {
            let (r, k) = (p("r"), p("k"));
            if k == 0.0 {
                return Err(Error::InvalidParameter("carrying capacity k must be nonzero".into()));
            }
            put("x1", 0, r);
            put("x1^2", 0, -r / k);
        }
        _ => unreachable!(),
    }
    Ok(ReferenceModel {
        name: name.to_string(),
        params,
        library,
        coefficients: xi,
        default_x0: x0,
        default_t_span: span,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coef(m: &ReferenceModel, term: &str, state: usize) -> f64 {
        m.coefficients.get(m.library.index_of(term).unwrap(), state)
    }

    #[test]
    fn linear_oscillator_coefficients() {
        let m = reference_model("linear_osc", &[]).unwrap();
        assert_eq!(m.library.names(), &["1", "x1", "x2"]);
        assert_eq!(coef(&m, "x1", 0), -0.1);
        assert_eq!(coef(&m, "x2", 0), 2.0);
        assert_eq!(coef(&m, "x1", 1), -2.0);
        assert_eq!(coef(&m, "x2", 1), -0.1);
        assert_eq!(m.coefficients.nnz(), 4);
    }

    #[test]
    fn logistic_expansion() {
        let m = reference_model("logistic", &[]).unwrap();
        assert_eq!(coef(&m, "x1", 0), 0.31);
        assert!((coef(&m, "x1^2", 0) + 0.155).abs() < 1e-15);
        let m = reference_model("logistic", &[("r", 0.5), ("k", 4.0)]).unwrap();
        assert_eq!(coef(&m, "x1^2", 0), -0.125);
    }

    #[test]
    fn lotka_volterra_and_fhn() {
        let lv = reference_model("lotka_volterra", &[]).unwrap();
        assert!((coef(&lv, "x1", 0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((coef(&lv, "x1*x2", 0) + 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(coef(&lv, "x2", 1), -1.0);
        assert_eq!(coef(&lv, "x1*x2", 1), 1.0);

        let f = reference_model("fhn", &[]).unwrap();
        assert!((coef(&f, "1", 1) - 0.032).abs() < 1e-15);
        assert!((coef(&f, "x2", 1) + 0.028).abs() < 1e-15);
        assert_eq!(coef(&f, "1", 0), 0.5);
        assert_eq!(f.coefficients.nnz(), 7);
    }

    #[test]
    fn every_benchmark_is_finite_at_its_initial_state() {
        for name in MODEL_NAMES {
            let m = reference_model(name, &[]).unwrap();
            assert_eq!(m.default_x0.len(), m.dimension());
            assert!(m.rhs(&m.default_x0).unwrap().iter().all(|v| v.is_finite()));
        }
        let lorenz = reference_model("lorenz", &[]).unwrap();
        let r = lorenz.rhs(&[-8.0, 7.0, 27.0]).unwrap();
        assert_eq!(r[0], 150.0);
        assert!((r[1] - (-224.0 - 7.0 + 216.0)).abs() < 1e-12);
        assert!((r[2] - (-56.0 - 72.0)).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert!(matches!(reference_model("duffing", &[]), Err(Error::UnknownModel(_))));
        assert!(matches!(reference_model("lorenz", &[("gamma", 1.0)]), Err(Error::InvalidParameter(_))));
        assert!(matches!(reference_model("logistic", &[("k", 0.0)]), Err(Error::InvalidParameter(_))));
    }
}
