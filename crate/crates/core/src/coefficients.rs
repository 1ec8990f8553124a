use crate::error::{Error, Result};
use crate::features::Library;

/// Sparse `p x d` coefficient matrix `ξ` with its active-term mask.
///
/// Column `c` holds the coefficients of `dx_{c+1}/dt`; storage is
/// column-major so that each column is a contiguous slice, which is the
/// layout the field evaluation and the optimiser work on.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix {
    p: usize,
    d: usize,
    values: Vec<f64>,
    active: Vec<bool>,
}

impl CoefficientMatrix {
    /// All-zero matrix with every entry active.
    pub fn zeros(p: usize, d: usize) -> Self {
        Self { p, d, values: vec![0.0; p * d], active: vec![true; p * d] }
    }

    /// From per-term rows (`rows[j][c]`); zero entries stay active.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let p = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        let mut m = Self::zeros(p, d);
        for (j, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), d, "ragged coefficient rows");
            for (c, &v) in r.iter().enumerate() {
                m.set(j, c, v);
            }
        }
        m
    }

    /// From a column-major value vector, all active.
    pub fn from_column_major(p: usize, d: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != p * d {
            return Err(Error::ShapeMismatch { expected: p * d, actual: values.len() });
        }
        Ok(Self { p, d, values, active: vec![true; p * d] })
    }

    /// Active mask taken from the nonzero pattern.
    pub fn with_support_mask(mut self) -> Self {
        for (a, v) in self.active.iter_mut().zip(&self.values) {
            *a = *v != 0.0;
        }
        self
    }

    pub fn terms(&self) -> usize {
        self.p
    }
    pub fn states(&self) -> usize {
        self.d
    }

    #[inline]
    fn idx(&self, term: usize, state: usize) -> usize {
        state * self.p + term
    }

    #[inline]
    pub fn get(&self, term: usize, state: usize) -> f64 {
        self.values[self.idx(term, state)]
    }

    /// Sets an entry; writing to an inactive entry is ignored unless the value is zero.
    pub fn set(&mut self, term: usize, state: usize, v: f64) {
        let i = self.idx(term, state);
        if self.active[i] {
            self.values[i] = v;
        }
    }

    pub fn is_active(&self, term: usize, state: usize) -> bool {
        self.active[self.idx(term, state)]
    }

    /// Deactivates an entry and zeroes it.
    pub fn deactivate(&mut self, term: usize, state: usize) {
        let i = self.idx(term, state);
        self.active[i] = false;
        self.values[i] = 0.0;
    }

    /// Column-major values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column-major mask.
    pub fn mask(&self) -> &[bool] {
        &self.active
    }

    /// Overwrites the values of active entries from a column-major slice.
    pub fn assign(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.values.len());
        for ((dst, &src), &a) in self.values.iter_mut().zip(values).zip(&self.active) {
            *dst = if a { src } else { 0.0 };
        }
    }

    pub fn column(&self, state: usize) -> &[f64] {
        &self.values[state * self.p..(state + 1) * self.p]
    }

    /// `(term, state)` pairs with nonzero coefficients.
    pub fn support(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for c in 0..self.d {
            for j in 0..self.p {
                if self.get(j, c) != 0.0 {
                    out.push((j, c));
                }
            }
        }
        out
    }

    pub fn nnz(&self) -> usize {
        self.values.iter().filter(|v| **v != 0.0).count()
    }

    pub fn is_zero(&self) -> bool {
        self.nnz() == 0
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// Re-expresses the coefficients over another library, matching terms by name.
    ///
    /// Fails if a nonzero coefficient has no counterpart in `to`.
    pub fn embed(&self, from: &Library, to: &Library) -> Result<Self> {
        if from.len() != self.p {
            return Err(Error::ShapeMismatch { expected: from.len(), actual: self.p });
        }
        let mut out = Self::zeros(to.len(), self.d);
        for (j, name) in from.names().iter().enumerate() {
            let target = to.index_of(name);
            for c in 0..self.d {
                let v = self.get(j, c);
                match target {
                    Some(k) => out.set(k, c, v),
                    None if v != 0.0 => {
                        return Err(Error::InvalidLibrary(format!("term `{name}` missing from target library")))
                    }
                    None => {}
                }
            }
        }
        Ok(out)
    }

    /// Coefficient CSV: header `term,dx1,...,dxd`, one row per library term.
    pub fn to_csv(&self, lib: &Library) -> String {
        let mut out = String::from("term");
        for c in 1..=self.d {
            out.push_str(&format!(",dx{c}"));
        }
        out.push('\n');
        for (j, name) in lib.names().iter().enumerate() {
            out.push_str(name);
            for c in 0..self.d {
                out.push_str(&format!(",{:.16e}", self.get(j, c)));
            }
            out.push('\n');
        }
        out
    }

    /// Parses a coefficient CSV, rebuilding the library from the term names.
    pub fn from_csv(text: &str) -> Result<(Library, Self)> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::MalformedFile("empty coefficient file".into()))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.first() != Some(&"term") || cols.len() < 2 {
            return Err(Error::MalformedFile("coefficient header must be `term,dx1,...`".into()));
        }
        let d = cols.len() - 1;
        let mut names = Vec::new();
        let mut rows = Vec::new();
        for (n, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != d + 1 {
                return Err(Error::MalformedFile(format!("row {} has {} fields, expected {}", n + 2, fields.len(), d + 1)));
            }
            names.push(fields[0].to_string());
            let row = fields[1..]
                .iter()
                .map(|f| f.parse::<f64>().map_err(|_| Error::MalformedFile(format!("bad number `{f}`"))))
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        let lib = Library::from_names(d, &names)?;
        Ok((lib, Self::from_rows(&rows)))
    }
}
