//! Reverse-mode differentiation on a scalar tape, plus a central-difference
//! oracle.
//!
//! Values are recorded in evaluation order on a [`Tape`]. Each node stores
//! the local partial derivatives with respect to its parents, so a single
//! reverse sweep accumulates the gradient of one output with respect to
//! every leaf. Constants never touch the tape.
//!
//! Besides the elementary operations the tape has fused n-ary nodes for
//! inner products and weighted sums; network layers and `Φ(x)ξ` products
//! record one node per output instead of one per multiply.

use std::cell::RefCell;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Default)]
struct TapeData {
    /// Offset of each node's first edge; one extra sentinel entry.
    edge_start: Vec<u32>,
    parent: Vec<u32>,
    partial: Vec<f64>,
    non_finite: bool,
}

/// Recording of elementary operations.
pub struct Tape {
    data: RefCell<TapeData>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d = self.data.borrow();
        f.debug_struct("Tape").field("nodes", &(d.edge_start.len() - 1)).field("edges", &d.parent.len()).finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self { data: RefCell::new(TapeData { edge_start: vec![0], ..Default::default() }) }
    }

    /// Drops every recorded node, keeping the allocations.
    pub fn clear(&mut self) {
        let d = self.data.get_mut();
        d.edge_start.clear();
        d.edge_start.push(0);
        d.parent.clear();
        d.partial.clear();
        d.non_finite = false;
    }

    pub fn len(&self) -> usize {
        self.data.borrow().edge_start.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Whether any recorded value was NaN or infinite.
    pub fn saw_non_finite(&self) -> bool {
        self.data.borrow().non_finite
    }

    /// New independent variable.
    pub fn var(&self, value: f64) -> Var<'_> {
        let idx = self.push(value, std::iter::empty());
        Var { value, node: Some((self, idx)) }
    }

    fn push(&self, value: f64, edges: impl Iterator<Item = (u32, f64)>) -> u32 {
        let mut d = self.data.borrow_mut();
        let idx = (d.edge_start.len() - 1) as u32;
        for (p, w) in edges {
            d.parent.push(p);
            d.partial.push(w);
        }
        let end = d.parent.len() as u32;
        d.edge_start.push(end);
        if !value.is_finite() {
            d.non_finite = true;
        }
        idx
    }

    /// Adjoints of `output` with respect to each of `wrt` (zero for constants).
    pub fn gradient(&self, output: Var<'_>, wrt: &[Var<'_>]) -> Vec<f64> {
        let Some((_, out)) = output.node else {
            return vec![0.0; wrt.len()];
        };
        let d = self.data.borrow();
        let n = out as usize + 1;
        let mut adj = vec![0.0; n];
        adj[n - 1] = 1.0;
        for i in (0..n).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            let (lo, hi) = (d.edge_start[i] as usize, d.edge_start[i + 1] as usize);
            for e in lo..hi {
                adj[d.parent[e] as usize] += a * d.partial[e];
            }
        }
        wrt.iter()
            .map(|v| match v.node {
                Some((_, idx)) if (idx as usize) < n => adj[idx as usize],
                _ => 0.0,
            })
            .collect()
    }
}

/// A value that is either a constant or a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    value: f64,
    node: Option<(&'t Tape, u32)>,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node {
            Some((_, i)) => write!(f, "Var({} @{})", self.value, i),
            None => write!(f, "Const({})", self.value),
        }
    }
}

impl<'t> Var<'t> {
    pub fn constant(value: f64) -> Self {
        Self { value, node: None }
    }

    pub fn is_constant(&self) -> bool {
        self.node.is_none()
    }

    fn unary(self, value: f64, partial: f64) -> Self {
        match self.node {
            None => Var::constant(value),
            Some((tape, i)) => Var { value, node: Some((tape, tape.push(value, std::iter::once((i, partial))))) },
        }
    }

    fn binary(self, other: Self, value: f64, da: f64, db: f64) -> Self {
        let tape = match (self.node, other.node) {
            (None, None) => return Var::constant(value),
            (Some((t, _)), _) | (None, Some((t, _))) => t,
        };
        let edges = self.node.map(|(_, i)| (i, da)).into_iter().chain(other.node.map(|(_, i)| (i, db)));
        Var { value, node: Some((tape, tape.push(value, edges))) }
    }

    fn nary(value: f64, tape: Option<&'t Tape>, edges: impl Iterator<Item = (u32, f64)>) -> Self {
        match tape {
            None => Var::constant(value),
            Some(t) => Var { value, node: Some((t, t.push(value, edges))) },
        }
    }
}

fn first_tape<'t>(xs: &[Var<'t>]) -> Option<&'t Tape> {
    xs.iter().find_map(|v| v.node.map(|(t, _)| t))
}

impl<'t> Add for Var<'t> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        self.binary(o, self.value + o.value, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self.binary(o, self.value - o.value, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        self.binary(o, self.value * o.value, o.value, self.value)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let q = self.value / o.value;
        self.binary(o, q, 1.0 / o.value, -q / o.value)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Self;
    fn neg(self) -> Self {
        self.unary(-self.value, -1.0)
    }
}

impl<'t> Real for Var<'t> {
    fn from_f64(v: f64) -> Self {
        Var::constant(v)
    }
    fn value(self) -> f64 {
        self.value
    }
    fn powi(self, n: i32) -> Self {
        let v = self.value.powi(n);
        let dv = if n == 0 { 0.0 } else { n as f64 * self.value.powi(n - 1) };
        self.unary(v, dv)
    }
    fn sin(self) -> Self {
        self.unary(self.value.sin(), self.value.cos())
    }
    fn cos(self) -> Self {
        self.unary(self.value.cos(), -self.value.sin())
    }
    fn exp(self) -> Self {
        let e = self.value.exp();
        self.unary(e, e)
    }
    fn tanh(self) -> Self {
        let t = self.value.tanh();
        self.unary(t, 1.0 - t * t)
    }
    fn scale(self, k: f64) -> Self {
        self.unary(self.value * k, k)
    }

    fn dot(a: &[Self], b: &[Self]) -> Self {
        debug_assert_eq!(a.len(), b.len());
        let value = a.iter().zip(b).map(|(x, y)| x.value * y.value).sum();
        let tape = first_tape(a).or_else(|| first_tape(b));
        let edges = a
            .iter()
            .zip(b)
            .flat_map(|(x, y)| x.node.map(|(_, i)| (i, y.value)).into_iter().chain(y.node.map(|(_, i)| (i, x.value))));
        Var::nary(value, tape, edges)
    }

    fn weighted_sum(coeffs: &[f64], xs: &[Self]) -> Self {
        debug_assert_eq!(coeffs.len(), xs.len());
        let value = coeffs.iter().zip(xs).map(|(k, x)| k * x.value).sum();
        let edges = coeffs.iter().zip(xs).filter_map(|(&k, x)| x.node.map(|(_, i)| (i, k)));
        Var::nary(value, first_tape(xs), edges)
    }

    fn sum(xs: &[Self]) -> Self {
        let value = xs.iter().map(|x| x.value).sum();
        Var::nary(value, first_tape(xs), xs.iter().filter_map(|x| x.node.map(|(_, i)| (i, 1.0))))
    }
}

/// Value and gradient of a scalar program with respect to `params`.
///
/// The closure receives the tape and one leaf per parameter and returns the
/// recorded output.
pub fn gradient<F>(params: &[f64], program: F) -> Result<(f64, Vec<f64>)>
where
    F: for<'t> FnOnce(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let mut tape = Tape::new();
    gradient_on(&mut tape, params, program)
}

/// As [`gradient`], recording on a caller-owned tape that is cleared first.
pub fn gradient_on<F>(tape: &mut Tape, params: &[f64], program: F) -> Result<(f64, Vec<f64>)>
where
    F: for<'t> FnOnce(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    tape.clear();
    let tape = &*tape;
    let leaves: Vec<Var<'_>> = params.iter().map(|&p| tape.var(p)).collect();
    let out = program(tape, &leaves)?;
    if tape.saw_non_finite() || !out.value.is_finite() {
        return Err(Error::NonFiniteValue);
    }
    Ok((out.value, tape.gradient(out, &leaves)))
}

/// Central-difference estimate of the gradient of `f` at `params`.
pub fn finite_difference<F>(mut f: F, params: &[f64], step: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    assert!(step > 0.0, "finite-difference step must be positive");
    let mut p = params.to_vec();
    let mut g = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        p[i] = params[i] + step;
        let fp = f(&p)?;
        p[i] = params[i] - step;
        let fm = f(&p)?;
        p[i] = params[i];
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFiniteValue);
        }
        g.push((fp - fm) / (2.0 * step));
    }
    Ok(g)
}
