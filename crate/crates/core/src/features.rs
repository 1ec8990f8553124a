//! Candidate feature libraries.
//!
//! A [`Library`] is an ordered list of symbolic terms. The order is
//! canonical: the constant first, then monomials by total degree with
//! lexicographic order inside each degree (`x1^2, x1*x2, x2^2`), then the
//! sine, cosine and exponential blocks, each ordered by frequency (or rate)
//! and then coordinate.

use std::fmt;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

/// Largest polynomial degree a library may request.
pub const MAX_POLY_DEGREE: usize = 10;

/// Construction choices for a library.
#[derive(Debug, Clone, PartialEq)]
pub struct LibrarySpec {
    pub dimension: usize,
    pub poly_degree: usize,
    pub constant: bool,
    pub trig_freqs: Vec<f64>,
    pub exp_rates: Vec<f64>,
}

impl LibrarySpec {
    /// Polynomials up to `degree` with a constant term.
    pub fn polynomial(dimension: usize, degree: usize) -> Self {
        Self { dimension, poly_degree: degree, constant: true, trig_freqs: Vec::new(), exp_rates: Vec::new() }
    }
}

/// One candidate function of the state.
#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    Constant,
    /// Product of coordinate powers; `powers[i]` is the exponent of `x_{i+1}`.
    Monomial(Vec<u32>),
    Sin { freq: f64, coord: usize },
    Cos { freq: f64, coord: usize },
    Exp { rate: f64, coord: usize },
}

fn fmt_scaled(f: &mut fmt::Formatter<'_>, k: f64, coord: usize) -> fmt::Result {
    if k == 1.0 {
        write!(f, "x{}", coord + 1)
    } else if k == -1.0 {
        write!(f, "-x{}", coord + 1)
    } else {
        write!(f, "{}*x{}", k, coord + 1)
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Constant => f.write_str("1"),
            Term::Monomial(powers) => {
                let mut first = true;
                for (i, &p) in powers.iter().enumerate().filter(|(_, &p)| p > 0) {
                    if !first {
                        f.write_str("*")?;
                    }
                    first = false;
                    if p == 1 {
                        write!(f, "x{}", i + 1)?;
                    } else {
                        write!(f, "x{}^{}", i + 1, p)?;
                    }
                }
                if first {
                    f.write_str("1")?;
                }
                Ok(())
            }
            Term::Sin { freq, coord } => {
                f.write_str("sin(")?;
                fmt_scaled(f, *freq, *coord)?;
                f.write_str(")")
            }
            Term::Cos { freq, coord } => {
                f.write_str("cos(")?;
                fmt_scaled(f, *freq, *coord)?;
                f.write_str(")")
            }
            Term::Exp { rate, coord } => {
                f.write_str("exp(")?;
                fmt_scaled(f, *rate, *coord)?;
                f.write_str(")")
            }
        }
    }
}

fn parse_coord(s: &str, d: usize) -> Result<usize> {
    let bad = || Error::InvalidLibrary(format!("cannot parse coordinate `{s}`"));
    let idx: usize = s.strip_prefix('x').ok_or_else(bad)?.parse().map_err(|_| bad())?;
    if idx == 0 || idx > d {
        return Err(Error::InvalidLibrary(format!("coordinate `{s}` outside dimension {d}")));
    }
    Ok(idx - 1)
}

fn parse_scaled(s: &str, d: usize) -> Result<(f64, usize)> {
    if let Some((k, x)) = s.split_once('*') {
        let k = k.parse().map_err(|_| Error::InvalidLibrary(format!("bad factor in `{s}`")))?;
        Ok((k, parse_coord(x, d)?))
    } else if let Some(x) = s.strip_prefix('-') {
        Ok((-1.0, parse_coord(x, d)?))
    } else {
        Ok((1.0, parse_coord(s, d)?))
    }
}

impl Term {
    /// Parses a term name as produced by `Display`.
    pub fn parse(name: &str, d: usize) -> Result<Self> {
        let name = name.trim();
        if name == "1" {
            return Ok(Term::Constant);
        }
        for (prefix, kind) in [("sin(", 0), ("cos(", 1), ("exp(", 2)] {
            if let Some(inner) = name.strip_prefix(prefix).and_then(|r| r.strip_suffix(')')) {
                let (k, coord) = parse_scaled(inner, d)?;
                return Ok(match kind {
                    0 => Term::Sin { freq: k, coord },
                    1 => Term::Cos { freq: k, coord },
                    _ => Term::Exp { rate: k, coord },
                });
            }
        }
        let mut powers = vec![0u32; d];
        for factor in name.split('*') {
            let (base, p) = match factor.split_once('^') {
                Some((b, p)) => (b, p.parse().map_err(|_| Error::InvalidLibrary(format!("bad power in `{name}`")))?),
                None => (factor, 1),
            };
            powers[parse_coord(base, d)?] += p;
        }
        Ok(Term::Monomial(powers))
    }

    /// Exponent vector for polynomial terms (all zeros for the constant).
    pub fn powers(&self, d: usize) -> Option<Vec<u32>> {
        match self {
            Term::Constant => Some(vec![0; d]),
            Term::Monomial(p) => Some(p.clone()),
            _ => None,
        }
    }

    /// Total degree of a polynomial term.
    pub fn degree(&self) -> Option<u32> {
        match self {
            Term::Constant => Some(0),
            Term::Monomial(p) => Some(p.iter().sum()),
            _ => None,
        }
    }

    fn eval<T: Real>(&self, x: &[T], pows: &[Vec<T>]) -> T {
        match self {
            Term::Constant => T::one(),
            Term::Monomial(p) => {
                let mut acc: Option<T> = None;
                for (i, &k) in p.iter().enumerate().filter(|(_, &k)| k > 0) {
                    let f = pows[i][k as usize];
                    acc = Some(acc.map_or(f, |a| a * f));
                }
                acc.unwrap_or_else(T::one)
            }
            Term::Sin { freq, coord } => x[*coord].scale(*freq).sin(),
            Term::Cos { freq, coord } => x[*coord].scale(*freq).cos(),
            Term::Exp { rate, coord } => x[*coord].scale(*rate).exp(),
        }
    }

    /// Partial derivative with respect to coordinate `i`.
    fn partial<T: Real>(&self, x: &[T], pows: &[Vec<T>], i: usize) -> T {
        match self {
            Term::Constant => T::zero(),
            Term::Monomial(p) => {
                if p[i] == 0 {
                    return T::zero();
                }
                let mut acc = T::from_f64(p[i] as f64);
                for (j, &k) in p.iter().enumerate() {
                    let e = if j == i { k - 1 } else { k };
                    if e > 0 {
                        acc = acc * pows[j][e as usize];
                    }
                }
                acc
            }
            Term::Sin { freq, coord } if *coord == i => x[i].scale(*freq).cos().scale(*freq),
            Term::Cos { freq, coord } if *coord == i => -x[i].scale(*freq).sin().scale(*freq),
            Term::Exp { rate, coord } if *coord == i => x[i].scale(*rate).exp().scale(*rate),
            _ => T::zero(),
        }
    }
}

/// An ordered, immutable set of candidate features.
#[derive(Debug, Clone, PartialEq)]
pub struct Library {
    spec: Option<LibrarySpec>,
    dimension: usize,
    terms: Vec<Term>,
    names: Vec<String>,
    max_power: usize,
}

/// Exponent vectors of total degree `deg` in graded lexicographic order.
fn monomials_of_degree(d: usize, deg: usize) -> Vec<Vec<u32>> {
    fn rec(d: usize, start: usize, left: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if left == 0 {
            out.push(cur.clone());
            return;
        }
        for i in start..d {
            cur[i] += 1;
            rec(d, i, left - 1, cur, out);
            cur[i] -= 1;
        }
    }
    let mut out = Vec::new();
    rec(d, 0, deg, &mut vec![0; d], &mut out);
    out
}

impl Library {
    /// Builds the library described by `spec` in canonical order.
    pub fn build(spec: &LibrarySpec) -> Result<Self> {
        if spec.dimension == 0 {
            return Err(Error::InvalidLibrary("dimension must be at least 1".into()));
        }
        if spec.poly_degree > MAX_POLY_DEGREE {
            return Err(Error::InvalidLibrary(format!("polynomial degree {} exceeds {MAX_POLY_DEGREE}", spec.poly_degree)));
        }
        let d = spec.dimension;
        let mut terms = Vec::new();
        if spec.constant {
            terms.push(Term::Constant);
        }
        for deg in 1..=spec.poly_degree {
            terms.extend(monomials_of_degree(d, deg).into_iter().map(Term::Monomial));
        }
        let sorted = |v: &[f64], what: &str| -> Result<Vec<f64>> {
            let mut v = v.to_vec();
            if v.iter().any(|k| !k.is_finite()) {
                return Err(Error::InvalidLibrary(format!("non-finite {what}")));
            }
            v.sort_by(f64::total_cmp);
            Ok(v)
        };
        let freqs = sorted(&spec.trig_freqs, "frequency")?;
        if freqs.iter().any(|&f| f <= 0.0) {
            return Err(Error::InvalidLibrary("trigonometric frequencies must be positive".into()));
        }
        for &freq in &freqs {
            terms.extend((0..d).map(|coord| Term::Sin { freq, coord }));
        }
        for &freq in &freqs {
            terms.extend((0..d).map(|coord| Term::Cos { freq, coord }));
        }
        for rate in sorted(&spec.exp_rates, "rate")? {
            terms.extend((0..d).map(|coord| Term::Exp { rate, coord }));
        }
        if terms.is_empty() {
            return Err(Error::EmptyLibrary);
        }
        let mut lib = Self::from_terms(d, terms)?;
        lib.spec = Some(spec.clone());
        Ok(lib)
    }

    /// Library over an explicit term list (e.g. read back from a file).
    pub fn from_terms(dimension: usize, terms: Vec<Term>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::EmptyLibrary);
        }
        let names: Vec<String> = terms.iter().map(Term::to_string).collect();
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(Error::InvalidLibrary(format!("duplicate term `{n}`")));
            }
        }
        let mut max_power = 0;
        for t in &terms {
            if let Term::Monomial(p) = t {
                if p.len() != dimension {
                    return Err(Error::DimensionMismatch { expected: dimension, actual: p.len() });
                }
                max_power = max_power.max(p.iter().copied().max().unwrap_or(0) as usize);
            }
        }
        Ok(Self { spec: None, dimension, terms, names, max_power })
    }

    /// Parses a list of term names.
    pub fn from_names<S: AsRef<str>>(dimension: usize, names: &[S]) -> Result<Self> {
        let terms = names.iter().map(|n| Term::parse(n.as_ref(), dimension)).collect::<Result<Vec<_>>>()?;
        Self::from_terms(dimension, terms)
    }

    pub fn spec(&self) -> Option<&LibrarySpec> {
        self.spec.as_ref()
    }
    pub fn dimension(&self) -> usize {
        self.dimension
    }
    /// Number of terms `p`.
    pub fn len(&self) -> usize {
        self.terms.len()
    }
    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
    pub fn terms(&self) -> &[Term] {
        &self.terms
    }
    pub fn names(&self) -> &[String] {
        &self.names
    }
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
    pub fn is_polynomial(&self) -> bool {
        self.terms.iter().all(|t| matches!(t, Term::Constant | Term::Monomial(_)))
    }

    fn check(&self, len: usize) -> Result<()> {
        if len != self.dimension {
            return Err(Error::DimensionMismatch { expected: self.dimension, actual: len });
        }
        Ok(())
    }

    fn power_table<T: Real>(&self, x: &[T]) -> Vec<Vec<T>> {
        x.iter()
            .map(|&xi| {
                let mut row = Vec::with_capacity(self.max_power + 1);
                row.push(T::one());
                if self.max_power >= 1 {
                    row.push(xi);
                }
                for k in 2..=self.max_power {
                    let prev = row[k - 1];
                    row.push(prev * xi);
                }
                row
            })
            .collect()
    }

    /// Feature row `Φ(x)` of length `p`.
    pub fn evaluate<T: Real>(&self, x: &[T]) -> Result<Vec<T>> {
        self.check(x.len())?;
        let mut out = Vec::with_capacity(self.len());
        self.evaluate_into(x, &mut out);
        Ok(out)
    }

    /// Unchecked variant of [`evaluate`](Self::evaluate) that reuses `out`.
    pub fn evaluate_into<T: Real>(&self, x: &[T], out: &mut Vec<T>) {
        debug_assert_eq!(x.len(), self.dimension);
        let pows = self.power_table(x);
        out.clear();
        out.extend(self.terms.iter().map(|t| t.eval(x, &pows)));
    }

    /// `p x d` matrix of partial derivatives `∂Φ_j / ∂x_i`.
    pub fn jacobian<T: Real>(&self, x: &[T]) -> Result<Matrix<T>> {
        self.check(x.len())?;
        let pows = self.power_table(x);
        let d = self.dimension;
        let mut data = Vec::with_capacity(self.len() * d);
        for t in &self.terms {
            for i in 0..d {
                data.push(t.partial(x, &pows, i));
            }
        }
        Ok(Matrix::from_vec(self.len(), d, data))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn poly(d: usize, deg: usize) -> Library {
        Library::build(&LibrarySpec::polynomial(d, deg)).unwrap()
    }

    fn binomial(n: usize, k: usize) -> usize {
        (1..=k).fold(1, |acc, i| acc * (n + 1 - i) / i)
    }

    #[test]
    fn canonical_names_two_dimensions() {
        assert_eq!(poly(2, 2).names(), ["1", "x1", "x2", "x1^2", "x1*x2", "x2^2"]);
        assert_eq!(poly(2, 3).names()[6..], ["x1^3", "x1^2*x2", "x1*x2^2", "x2^3"]);
    }

    #[test]
    fn term_counts() {
        assert_eq!(poly(1, 0).names(), ["1"]);
        assert_eq!(poly(3, 2).len(), 10);
        for d in 1..=4 {
            for deg in 0..=5 {
                assert_eq!(poly(d, deg).len(), binomial(d + deg, deg));
            }
        }
    }

    #[test]
    fn empty_library_rejected() {
        let spec = LibrarySpec { constant: false, ..LibrarySpec::polynomial(2, 0) };
        assert_eq!(Library::build(&spec).unwrap_err(), Error::EmptyLibrary);
        let spec = LibrarySpec::polynomial(2, 11);
        assert!(matches!(Library::build(&spec), Err(Error::InvalidLibrary(_))));
    }

    #[test]
    fn evaluates_monomials() {
        assert_eq!(poly(2, 2).evaluate(&[2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0, 4.0, 6.0, 9.0]);
        assert_eq!(poly(1, 3).evaluate(&[-2.0]).unwrap(), vec![1.0, -2.0, 4.0, -8.0]);
        assert_eq!(
            poly(2, 2).evaluate(&[1.0]).unwrap_err(),
            Error::DimensionMismatch { expected: 2, actual: 1 }
        );
    }

    #[test]
    fn trig_and_exp_blocks() {
        let spec = LibrarySpec {
            dimension: 2,
            poly_degree: 1,
            constant: true,
            trig_freqs: vec![2.0, 1.0],
            exp_rates: vec![-1.0],
        };
        let lib = Library::build(&spec).unwrap();
        assert_eq!(
            lib.names(),
            ["1", "x1", "x2", "sin(x1)", "sin(x2)", "sin(2*x1)", "sin(2*x2)", "cos(x1)", "cos(x2)", "cos(2*x1)", "cos(2*x2)", "exp(-x1)", "exp(-x2)"]
        );
        let row = lib.evaluate(&[0.0, 0.0]).unwrap();
        assert!(row[3..7].iter().all(|&v| v == 0.0));
        assert!(row[7..11].iter().all(|&v| v == 1.0));
        assert!(row[11..].iter().all(|&v| v == 1.0));
    }

    #[test]
    fn names_parse_back() {
        let spec = LibrarySpec { trig_freqs: vec![1.5], exp_rates: vec![-2.0, 1.0], ..LibrarySpec::polynomial(3, 3) };
        let lib = Library::build(&spec).unwrap();
        let again = Library::from_names(3, lib.names()).unwrap();
        assert_eq!(again.terms(), lib.terms());
        assert!(Library::from_names(2, &["x3"]).is_err());
        assert!(Library::from_names(2, &["x1", "x1"]).is_err());
    }

    #[test]
    fn jacobian_entries() {
        let j = poly(1, 1).jacobian(&[0.7]).unwrap();
        assert_eq!(j.as_slice(), &[0.0, 1.0]);
        let j = poly(2, 2).jacobian(&[2.0, 3.0]).unwrap();
        assert_eq!(j.row(4), &[3.0, 2.0]);
        assert_eq!(j.row(3), &[4.0, 0.0]);
    }

    fn fd_check(lib: &Library, x: &[f64]) -> f64 {
        let jac = lib.jacobian(x).unwrap();
        let step = 1e-5;
        let mut worst: f64 = 0.0;
        for i in 0..x.len() {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += step;
            xm[i] -= step;
            let fp = lib.evaluate(&xp).unwrap();
            let fm = lib.evaluate(&xm).unwrap();
            for j in 0..lib.len() {
                let fd = (fp[j] - fm[j]) / (2.0 * step);
                let an = jac.get(j, i);
                worst = worst.max((fd - an).abs() / an.abs().max(1.0));
            }
        }
        worst
    }

    proptest! {
        #[test]
        fn jacobian_matches_central_differences(x in prop::collection::vec(-2.0f64..2.0, 3)) {
            let spec = LibrarySpec { trig_freqs: vec![1.0, 2.0], exp_rates: vec![-1.0], ..LibrarySpec::polynomial(3, 4) };
            let lib = Library::build(&spec).unwrap();
            prop_assert!(fd_check(&lib, &x) < 1e-6);
        }

        #[test]
        fn monomials_scale_with_degree(x in prop::collection::vec(-3.0f64..3.0, 2), alpha in -2.0f64..2.0) {
            let lib = poly(2, 4);
            let base = lib.evaluate(&x).unwrap();
            let xs: Vec<f64> = x.iter().map(|v| v * alpha).collect();
            let scaled = lib.evaluate(&xs).unwrap();
            for (k, t) in lib.terms().iter().enumerate() {
                let want = base[k] * alpha.powi(t.degree().unwrap() as i32);
                prop_assert!((scaled[k] - want).abs() <= 1e-9 * want.abs().max(1.0));
            }
        }

        #[test]
        fn shapes_are_fixed(x in prop::collection::vec(-10.0f64..10.0, 2)) {
            let lib = poly(2, 3);
            prop_assert_eq!(lib.evaluate(&x).unwrap().len(), lib.len());
            let j = lib.jacobian(&x).unwrap();
            prop_assert_eq!((j.rows(), j.cols()), (lib.len(), 2));
        }
    }
}
