//! Training losses and their gradients.
//!
//! `loss_irk` compares the backward and forward IRK predictions of every
//! interval with the neighbouring samples; `loss_deep` replaces the solved
//! stages by network outputs and compares every per-stage reconstruction.
//! Gradients are returned for the column-major coefficient vector (all
//! `p * d` entries; masking is up to the optimiser).

use super::{GradientMode, SindyConfig};
use crate::coefficients::CoefficientMatrix;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::features::Library;
use crate::field::{eval_library_field, LibraryField, VectorField};
use crate::grad::{Tape, Var};
use crate::irk::{self, predictor_rows, solve_stages_from, stage_jacobian, StageSolver, StageValues};
use crate::linalg::{Lu, Matrix};
use crate::net::StageNet;
use crate::scalar::Real;
use crate::tableau::ButcherTableau;

/// Previous stage solutions, reused as Newton starting points.
#[derive(Debug, Clone, Default)]
pub struct StageCache {
    left: Vec<Option<Matrix<f64>>>,
    right: Vec<Option<Matrix<f64>>>,
}

impl StageCache {
    pub fn new(m: usize) -> Self {
        Self { left: vec![None; m], right: vec![None; m] }
    }
}

fn check_shapes(xi: &CoefficientMatrix, lib: &Library, ds: &Dataset) -> Result<()> {
    if ds.intervals() == 0 {
        return Err(Error::EmptyDataset);
    }
    if lib.dimension() != ds.dim() {
        return Err(Error::DimensionMismatch { expected: lib.dimension(), actual: ds.dim() });
    }
    if xi.terms() != lib.len() || xi.states() != ds.dim() {
        return Err(Error::ShapeMismatch { expected: lib.len() * ds.dim(), actual: xi.terms() * xi.states() });
    }
    Ok(())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// One interval direction: start state, signed step, target sample, weight.
fn directions(ds: &Dataset, k: usize, alpha: f64) -> [(&[f64], f64, &[f64], f64, bool); 2] {
    let h = ds.step(k);
    [(ds.state(k + 1), -h, ds.state(k), alpha, true), (ds.state(k), h, ds.state(k + 1), 1.0 - alpha, false)]
}

fn solve_warm(
    f: &LibraryField<'_, f64>,
    x: &[f64],
    h: f64,
    tab: &ButcherTableau<f64>,
    config: &SindyConfig,
    slot: Option<&mut Option<Matrix<f64>>>,
) -> Result<StageValues<f64>> {
    let guess = slot.as_ref().and_then(|s| s.as_ref());
    let st = match solve_stages_from(f, x, h, tab, &config.solver, guess) {
        Err(_) if guess.is_some() => solve_stages_from(f, x, h, tab, &config.solver, None),
        r => r,
    }?;
    if let Some(slot) = slot {
        *slot = Some(st.chi.clone());
    }
    Ok(st)
}

/// Weighted squared residuals of the backward (`α`) and forward (`1 - α`)
/// IRK predictions.
pub fn loss_irk(xi: &CoefficientMatrix, lib: &Library, ds: &Dataset, tab: &ButcherTableau<f64>, config: &SindyConfig) -> Result<f64> {
    check_shapes(xi, lib, ds)?;
    let f = LibraryField::<f64>::new(lib, xi)?;
    let (left, right) = irk::predict_matrices(&f, ds, tab, &config.solver)?;
    let m = ds.intervals();
    let mut l = 0.0;
    let mut r = 0.0;
    for k in 0..m {
        l += sq_dist(left.row(k), ds.state(k));
        r += sq_dist(right.row(k), ds.state(k + 1));
    }
    Ok(config.alpha * l + (1.0 - config.alpha) * r)
}

/// Value and coefficient gradient of [`loss_irk`].
///
/// `GradientMode::Implicit` differentiates the converged stage equations
/// through the implicit-function relation (one adjoint solve with the stage
/// Jacobian per prediction). `GradientMode::Unrolled` records the
/// fixed-point iteration on a tape and requires the fixed-point solver.
pub fn loss_irk_gradient(
    xi: &CoefficientMatrix,
    lib: &Library,
    ds: &Dataset,
    tab: &ButcherTableau<f64>,
    config: &SindyConfig,
    cache: Option<&mut StageCache>,
) -> Result<(f64, Vec<f64>)> {
    check_shapes(xi, lib, ds)?;
    match config.gradient {
        GradientMode::Implicit => implicit_adjoint(xi, lib, ds, tab, config, cache),
        GradientMode::Unrolled => {
            if config.solver.method != StageSolver::FixedPoint {
                return Err(Error::InvalidConfig("unrolled gradients require the fixed-point stage solver".into()));
            }
            unrolled_fixed_point(xi, lib, ds, tab, config)
        }
    }
}

fn implicit_adjoint(
    xi: &CoefficientMatrix,
    lib: &Library,
    ds: &Dataset,
    tab: &ButcherTableau<f64>,
    config: &SindyConfig,
    mut cache: Option<&mut StageCache>,
) -> Result<(f64, Vec<f64>)> {
    let (p, d, s) = (lib.len(), ds.dim(), tab.stages());
    let f = LibraryField::<f64>::new(lib, xi)?;
    let mut grad = vec![0.0; p * d];
    let mut loss = 0.0;
    let mut phi = vec![Vec::new(); s];
    let mut rates = Matrix::zeros(s, d);
    let mut jfs = vec![Matrix::zeros(d, d); s];
    let mut u = vec![0.0; s * d];
    for k in 0..ds.intervals() {
        for (x, h, target, w, is_left) in directions(ds, k, config.alpha) {
            let slot = cache.as_deref_mut().map(|c| if is_left { &mut c.left[k] } else { &mut c.right[k] });
            let st = solve_warm(&f, x, h, tab, config, slot).map_err(|e| e.at_interval(k))?;
            for j in 0..s {
                lib.evaluate_into(st.chi.row(j), &mut phi[j]);
                f.eval(st.chi.row(j), rates.row_mut(j));
                f.jacobian(st.chi.row(j), &mut jfs[j]);
            }
            let mut gy = vec![0.0; d];
            for c in 0..d {
                let y = x[c] + h * (0..s).map(|j| tab.b[j] * rates.get(j, c)).sum::<f64>();
                let r = y - target[c];
                loss += w * r * r;
                gy[c] = 2.0 * w * r;
            }
            if w == 0.0 {
                continue;
            }
            // u_j = h b_j Jf(χ_j)^T gy, then J_G^T μ = u.
            for j in 0..s {
                for e in 0..d {
                    u[j * d + e] = h * tab.b[j] * (0..d).map(|c| gy[c] * jfs[j].get(c, e)).sum::<f64>();
                }
            }
            let lu = Lu::factor(&stage_jacobian(&f, &st.chi, h, tab)).map_err(|e| e.at_interval(k))?;
            let mu = lu.solve_transpose(&u);
            for j in 0..s {
                for c in 0..d {
                    let weight = h * (tab.b[j] * gy[c] + (0..s).map(|i| tab.a.get(i, j) * mu[i * d + c]).sum::<f64>());
                    if weight != 0.0 {
                        for (g, ph) in grad[c * p..(c + 1) * p].iter_mut().zip(&phi[j]) {
                            *g += weight * ph;
                        }
                    }
                }
            }
        }
    }
    Ok((loss, grad))
}

fn finish_tape(tape: &Tape, terms: &[Var<'_>], leaves: &[Var<'_>]) -> Result<(f64, Vec<f64>)> {
    let out = Var::sum(terms);
    if tape.saw_non_finite() || !out.value().is_finite() {
        return Err(Error::NonFiniteValue);
    }
    Ok((out.value(), tape.gradient(out, leaves)))
}

fn push_residual<'t>(terms: &mut Vec<Var<'t>>, y: &[Var<'t>], target: &[f64], w: f64) {
    for (yc, &tc) in y.iter().zip(target) {
        let r = *yc - Var::constant(tc);
        terms.push((r * r).scale(w));
    }
}

/// Tape-recorded version of the implicit gradient.
///
/// Records `χ = χ* - J_G^{-1} G(χ*, x; ξ)` with the converged stages `χ*`
/// and the inverse stage Jacobian as constants, then the step from `χ`.
/// Agrees with [`loss_irk_gradient`] in implicit mode; kept as an
/// independent check of the adjoint formula.
pub fn loss_irk_gradient_tape(
    xi: &CoefficientMatrix,
    lib: &Library,
    ds: &Dataset,
    tab: &ButcherTableau<f64>,
    config: &SindyConfig,
) -> Result<(f64, Vec<f64>)> {
    check_shapes(xi, lib, ds)?;
    let (d, s) = (ds.dim(), tab.stages());
    let f = LibraryField::<f64>::new(lib, xi)?;
    let tape = Tape::new();
    let leaves: Vec<Var> = xi.values().iter().map(|&v| tape.var(v)).collect();
    let (a, b) = (tab.a_f64(), tab.b_f64());
    let mut terms = Vec::new();
    let mut phi = Vec::new();
    for k in 0..ds.intervals() {
        for (x, h, target, w, _) in directions(ds, k, config.alpha) {
            let st = solve_warm(&f, x, h, tab, config, None).map_err(|e| e.at_interval(k))?;
            let jinv = Lu::factor(&stage_jacobian(&f, &st.chi, h, tab)).map_err(|e| e.at_interval(k))?.inverse();
            let mut rates_star = vec![Var::constant(0.0); s * d];
            for j in 0..s {
                let chi_j: Vec<Var> = st.chi.row(j).iter().map(|&v| Var::constant(v)).collect();
                eval_library_field(lib, &leaves, &chi_j, &mut phi, &mut rates_star[j * d..(j + 1) * d]);
            }
            let mut g = Vec::with_capacity(s * d);
            for i in 0..s {
                let coeffs: Vec<f64> = (0..s).map(|j| -h * a[i * s + j]).collect();
                for c in 0..d {
                    let col: Vec<Var> = (0..s).map(|j| rates_star[j * d + c]).collect();
                    g.push(Var::constant(st.chi.get(i, c) - x[c]) + Var::weighted_sum(&coeffs, &col));
                }
            }
            let chi: Vec<Var> = (0..s * d)
                .map(|r| {
                    let coeffs: Vec<f64> = jinv.row(r).iter().map(|v| -v).collect();
                    Var::constant(st.chi.as_slice()[r]) + Var::weighted_sum(&coeffs, &g)
                })
                .collect();
            let mut rates = vec![Var::constant(0.0); s * d];
            for j in 0..s {
                eval_library_field(lib, &leaves, &chi[j * d..(j + 1) * d], &mut phi, &mut rates[j * d..(j + 1) * d]);
            }
            let weights: Vec<f64> = b.iter().map(|bj| h * bj).collect();
            let y: Vec<Var> = (0..d)
                .map(|c| {
                    let col: Vec<Var> = (0..s).map(|j| rates[j * d + c]).collect();
                    Var::constant(x[c]) + Var::weighted_sum(&weights, &col)
                })
                .collect();
            push_residual(&mut terms, &y, target, w);
        }
    }
    finish_tape(&tape, &terms, &leaves)
}

const DIVERGENCE_PATIENCE: usize = 5;

fn unrolled_fixed_point(
    xi: &CoefficientMatrix,
    lib: &Library,
    ds: &Dataset,
    tab: &ButcherTableau<f64>,
    config: &SindyConfig,
) -> Result<(f64, Vec<f64>)> {
    let (d, s) = (ds.dim(), tab.stages());
    let tape = Tape::new();
    let leaves: Vec<Var> = xi.values().iter().map(|&v| tape.var(v)).collect();
    let (a, b) = (tab.a_f64(), tab.b_f64());
    let mut terms = Vec::new();
    let mut phi = Vec::new();
    for k in 0..ds.intervals() {
        for (x, h, target, w, _) in directions(ds, k, config.alpha) {
            let tol = config.solver.tol * x.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            let mut chi: Vec<Var> = (0..s * d).map(|r| Var::constant(x[r % d])).collect();
            let mut rates = vec![Var::constant(0.0); s * d];
            let mut defect = f64::INFINITY;
            let mut growth = 0;
            let mut converged = false;
            for _ in 0..=config.solver.max_iterations {
                for j in 0..s {
                    eval_library_field(lib, &leaves, &chi[j * d..(j + 1) * d], &mut phi, &mut rates[j * d..(j + 1) * d]);
                }
                let mut next = Vec::with_capacity(s * d);
                let mut worst = 0.0f64;
                for i in 0..s {
                    let coeffs: Vec<f64> = (0..s).map(|j| h * a[i * s + j]).collect();
                    for c in 0..d {
                        let col: Vec<Var> = (0..s).map(|j| rates[j * d + c]).collect();
                        let v = Var::constant(x[c]) + Var::weighted_sum(&coeffs, &col);
                        worst = worst.max((v.value() - chi[i * d + c].value()).abs());
                        next.push(v);
                    }
                }
                if !worst.is_finite() {
                    break;
                }
                if worst <= tol {
                    converged = true;
                    break;
                }
                growth = if worst > defect { growth + 1 } else { 0 };
                defect = worst;
                if growth >= DIVERGENCE_PATIENCE {
                    break;
                }
                chi = next;
            }
            if !converged {
                return Err(Error::NonConvergence { iterations: config.solver.max_iterations, defect }.at_interval(k));
            }
            let weights: Vec<f64> = b.iter().map(|bj| h * bj).collect();
            let y: Vec<Var> = (0..d)
                .map(|c| {
                    let col: Vec<Var> = (0..s).map(|j| rates[j * d + c]).collect();
                    Var::constant(x[c]) + Var::weighted_sum(&weights, &col)
                })
                .collect();
            push_residual(&mut terms, &y, target, w);
        }
    }
    finish_tape(&tape, &terms, &leaves)
}

/// Loss of the same form as [`loss_irk`] with the classical explicit RK4 step.
pub fn loss_rk4(xi: &CoefficientMatrix, lib: &Library, ds: &Dataset, config: &SindyConfig) -> Result<f64> {
    check_shapes(xi, lib, ds)?;
    let f = LibraryField::<f64>::new(lib, xi)?;
    let mut loss = 0.0;
    for k in 0..ds.intervals() {
        for (x, h, target, w, _) in directions(ds, k, config.alpha) {
            loss += w * sq_dist(&irk::rk4_step(&f, x, h), target);
        }
    }
    Ok(loss)
}

/// Value and coefficient gradient of [`loss_rk4`], recorded on a tape.
pub fn loss_rk4_gradient(xi: &CoefficientMatrix, lib: &Library, ds: &Dataset, config: &SindyConfig) -> Result<(f64, Vec<f64>)> {
    check_shapes(xi, lib, ds)?;
    let d = ds.dim();
    let tape = Tape::new();
    let leaves: Vec<Var> = xi.values().iter().map(|&v| tape.var(v)).collect();
    let mut terms = Vec::new();
    let mut phi = Vec::new();
    for k in 0..ds.intervals() {
        for (x, h, target, w, _) in directions(ds, k, config.alpha) {
            let xv: Vec<Var> = x.iter().map(|&v| Var::constant(v)).collect();
            let y = irk::rk4_step_with(
                |z: &[Var]| {
                    let mut out = vec![Var::constant(0.0); d];
                    eval_library_field(lib, &leaves, z, &mut phi, &mut out);
                    out
                },
                &xv,
                h,
            );
            push_residual(&mut terms, &y, target, w);
        }
    }
    finish_tape(&tape, &terms, &leaves)
}

/// Stage predictions of the network for every interval start, `m x (s d)`.
fn network_stages(net: &StageNet, ds: &Dataset) -> Result<(Matrix<f64>, crate::net::BatchCache)> {
    let m = ds.intervals();
    let times = &ds.times()[..m];
    let states = Matrix::from_fn(m, ds.dim(), |k, c| ds.state(k)[c]);
    let cache = net.mlp.forward_batch(&net.encode_batch(times, &states))?;
    Ok((cache.output().clone(), cache))
}

fn check_net(net: &StageNet, ds: &Dataset, tab: &ButcherTableau<f64>) -> Result<()> {
    if net.stages != tab.stages() || net.dim != ds.dim() {
        return Err(Error::ShapeMismatch { expected: tab.stages() * ds.dim(), actual: net.mlp.output_dim() });
    }
    Ok(())
}

/// Per-interval deep residuals and their partial derivatives.
struct DeepTerms {
    loss: f64,
    grad_xi: Vec<f64>,
    grad_chi: Matrix<f64>,
}

fn deep_terms(
    xi: &CoefficientMatrix,
    chis: &Matrix<f64>,
    lib: &Library,
    ds: &Dataset,
    tab: &ButcherTableau<f64>,
    alpha: f64,
) -> Result<DeepTerms> {
    let (p, d, s) = (lib.len(), ds.dim(), tab.stages());
    let f = LibraryField::<f64>::new(lib, xi)?;
    let m = ds.intervals();
    let mut grad_xi = vec![0.0; p * d];
    let mut grad_chi = Matrix::zeros(m, s * d);
    let mut loss = 0.0;
    let mut phi = vec![Vec::new(); s];
    let mut rates = Matrix::zeros(s, d);
    let mut jfs = vec![Matrix::zeros(d, d); s];
    let mut el = Matrix::zeros(s, d);
    let mut er = Matrix::zeros(s, d);
    for k in 0..m {
        let h = ds.step(k);
        let chi = Matrix::from_vec(s, d, chis.row(k).to_vec());
        for j in 0..s {
            lib.evaluate_into(chi.row(j), &mut phi[j]);
            f.eval(chi.row(j), rates.row_mut(j));
            f.jacobian(chi.row(j), &mut jfs[j]);
        }
        for i in 0..s {
            for c in 0..d {
                let mut al = 0.0;
                let mut ar = 0.0;
                for j in 0..s {
                    al += tab.a.get(i, j) * rates.get(j, c);
                    ar += (tab.b[j] - tab.a.get(i, j)) * rates.get(j, c);
                }
                let l = chi.get(i, c) - h * al - ds.state(k)[c];
                let r = chi.get(i, c) + h * ar - ds.state(k + 1)[c];
                loss += alpha * l * l + (1.0 - alpha) * r * r;
                el.set(i, c, 2.0 * alpha * l);
                er.set(i, c, 2.0 * (1.0 - alpha) * r);
            }
        }
        let gc = grad_chi.row_mut(k);
        for j in 0..s {
            for c in 0..d {
                let mut g = 0.0;
                for i in 0..s {
                    g += -h * tab.a.get(i, j) * el.get(i, c) + h * (tab.b[j] - tab.a.get(i, j)) * er.get(i, c);
                }
                // dLoss/dF_{j,c} = g.
                for (gx, ph) in grad_xi[c * p..(c + 1) * p].iter_mut().zip(&phi[j]) {
                    *gx += g * ph;
                }
                for e in 0..d {
                    gc[j * d + e] += g * jfs[j].get(c, e);
                }
                gc[j * d + c] += el.get(j, c) + er.get(j, c);
            }
        }
    }
    Ok(DeepTerms { loss, grad_xi, grad_chi })
}

/// Deep loss: every per-stage reconstruction of `X[k]` and `X[k+1]` from
/// the network stages at `(t_k, X[k])`, summed over stages.
pub fn loss_deep(
    xi: &CoefficientMatrix,
    net: &StageNet,
    lib: &Library,
    ds: &Dataset,
    tab: &ButcherTableau<f64>,
    config: &SindyConfig,
) -> Result<f64> {
    check_shapes(xi, lib, ds)?;
    check_net(net, ds, tab)?;
    let (chis, _) = network_stages(net, ds)?;
    Ok(deep_terms(xi, &chis, lib, ds, tab, config.alpha)?.loss)
}

/// Value of [`loss_deep`] with gradients for the coefficients and the
/// network parameters.
pub fn loss_deep_gradient(
    xi: &CoefficientMatrix,
    net: &StageNet,
    lib: &Library,
    ds: &Dataset,
    tab: &ButcherTableau<f64>,
    config: &SindyConfig,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    check_shapes(xi, lib, ds)?;
    check_net(net, ds, tab)?;
    let (chis, cache) = network_stages(net, ds)?;
    let t = deep_terms(xi, &chis, lib, ds, tab, config.alpha)?;
    if !t.loss.is_finite() {
        return Err(Error::NonFiniteValue);
    }
    let g_theta = net.mlp.backward_batch(&cache, &t.grad_chi);
    Ok((t.loss, t.grad_xi, g_theta))
}

/// Fully tape-recorded [`loss_deep_gradient`] (network included).
///
/// Slow; an independent route for checking the batched gradient.
pub fn loss_deep_gradient_tape(
    xi: &CoefficientMatrix,
    net: &StageNet,
    lib: &Library,
    ds: &Dataset,
    tab: &ButcherTableau<f64>,
    config: &SindyConfig,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    check_shapes(xi, lib, ds)?;
    check_net(net, ds, tab)?;
    let (d, s) = (ds.dim(), tab.stages());
    let n_xi = xi.values().len();
    let tape = Tape::new();
    let leaves: Vec<Var> = xi.values().iter().chain(net.mlp.params()).map(|&v| tape.var(v)).collect();
    let (xi_v, theta_v) = leaves.split_at(n_xi);
    let (a, b) = (tab.a_f64(), tab.b_f64());
    let mut terms = Vec::new();
    let mut phi = Vec::new();
    for k in 0..ds.intervals() {
        let input: Vec<Var> = net.encode(ds.times()[k], ds.state(k)).into_iter().map(Var::constant).collect();
        let chi = net.mlp.forward_with(theta_v, &input)?;
        let mut rates = vec![Var::constant(0.0); s * d];
        for j in 0..s {
            eval_library_field(lib, xi_v, &chi[j * d..(j + 1) * d], &mut phi, &mut rates[j * d..(j + 1) * d]);
        }
        let mut left = vec![Var::constant(0.0); s * d];
        let mut right = vec![Var::constant(0.0); s * d];
        predictor_rows(&chi, &rates, ds.step(k), &a, &b, d, &mut left, &mut right);
        for i in 0..s {
            push_residual(&mut terms, &left[i * d..(i + 1) * d], ds.state(k), config.alpha);
            push_residual(&mut terms, &right[i * d..(i + 1) * d], ds.state(k + 1), 1.0 - config.alpha);
        }
    }
    let (v, g) = finish_tape(&tape, &terms, &leaves)?;
    let (gx, gt) = g.split_at(n_xi);
    Ok((v, gx.to_vec(), gt.to_vec()))
}
