use super::{Regularization, SindyConfig};
use crate::coefficients::CoefficientMatrix;
use crate::error::{Error, Result};

/// Adam moments and step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self { first_moment: vec![0.0; n], second_moment: vec![0.0; n], step_count: 0, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    pub fn reset(&mut self) {
        self.first_moment.fill(0.0);
        self.second_moment.fill(0.0);
        self.step_count = 0;
    }
}

/// One bias-corrected Adam update. Entries with `mask[i] == false` are left
/// untouched and keep zero moments.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64, mask: Option<&[bool]>) -> Result<()> {
    let n = params.len();
    if grads.len() != n {
        return Err(Error::ShapeMismatch { expected: n, actual: grads.len() });
    }
    if state.first_moment.len() != n {
        return Err(Error::ShapeMismatch { expected: n, actual: state.first_moment.len() });
    }
    if let Some(mask) = mask {
        if mask.len() != n {
            return Err(Error::ShapeMismatch { expected: n, actual: mask.len() });
        }
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    for i in 0..n {
        if mask.is_some_and(|m| !m[i]) {
            state.first_moment[i] = 0.0;
            state.second_moment[i] = 0.0;
            continue;
        }
        let g = grads[i];
        let m = state.beta1 * state.first_moment[i] + (1.0 - state.beta1) * g;
        let v = state.beta2 * state.second_moment[i] + (1.0 - state.beta2) * g * g;
        state.first_moment[i] = m;
        state.second_moment[i] = v;
        params[i] -= lr * (m / c1) / ((v / c2).sqrt() + state.eps);
    }
    Ok(())
}

/// Zeroes and deactivates every active entry with `|value| < lambda`.
pub fn threshold(xi: &CoefficientMatrix, lambda: f64) -> CoefficientMatrix {
    let mut out = xi.clone();
    for c in 0..xi.states() {
        for j in 0..xi.terms() {
            if xi.is_active(j, c) && xi.get(j, c).abs() < lambda {
                out.deactivate(j, c);
            }
        }
    }
    out
}

/// Adds the configured penalty on the active coefficients.
pub fn regularize(loss: f64, xi: &CoefficientMatrix, config: &SindyConfig) -> f64 {
    match config.reg {
        Regularization::None => loss,
        Regularization::L1 { weight } => {
            let l1: f64 = xi.values().iter().zip(xi.mask()).filter(|(_, &a)| a).map(|(v, _)| v.abs()).sum();
            loss + weight * l1
        }
    }
}

/// Adds the (sub)gradient of the penalty to `grad`.
pub fn regularize_gradient(grad: &mut [f64], xi: &CoefficientMatrix, config: &SindyConfig) {
    if let Regularization::L1 { weight } = config.reg {
        for ((g, v), &a) in grad.iter_mut().zip(xi.values()).zip(xi.mask()) {
            if a && *v != 0.0 {
                *g += weight * v.signum();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![1.0, -2.0];
        let mut st = AdamState::new(2);
        adam_step(&mut p, &[0.0, 0.0], &mut st, 0.01, None).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
        assert_eq!(st.step_count, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = vec![0.0, 0.0, 0.0];
        let mut st = AdamState::new(3);
        adam_step(&mut p, &[3.0, -0.2, 1e-3], &mut st, 0.01, None).unwrap();
        // Bias-corrected first step: lr * g / (|g| + eps).
        for (v, g) in p.iter().zip([3.0f64, -0.2, 1e-3]) {
            let expect = -0.01 * g / (g.abs() + 1e-8);
            assert!((v - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn two_steps_by_hand() {
        let mut p = vec![1.0];
        let mut st = AdamState::new(1);
        let g = 0.5;
        adam_step(&mut p, &[g], &mut st, 0.1, None).unwrap();
        adam_step(&mut p, &[g], &mut st, 0.1, None).unwrap();
        let m1 = 0.1 * g;
        let v1 = 0.001 * g * g;
        let x1 = 1.0 - 0.1 * (m1 / 0.1) / ((v1 / 0.001f64).sqrt() + 1e-8);
        let m2 = 0.9 * m1 + 0.1 * g;
        let v2 = 0.999 * v1 + 0.001 * g * g;
        let x2 = x1 - 0.1 * (m2 / (1.0 - 0.81)) / ((v2 / (1.0 - 0.999f64 * 0.999)).sqrt() + 1e-8);
        assert!((p[0] - x2).abs() < 1e-12);
    }

    #[test]
    fn masked_entries_frozen() {
        let mut p = vec![1.0, 1.0];
        let mut st = AdamState::new(2);
        adam_step(&mut p, &[1.0, 1.0], &mut st, 0.1, Some(&[true, false])).unwrap();
        assert_eq!(p[1], 1.0);
        assert_eq!(st.first_moment[1], 0.0);
        assert_eq!(st.second_moment[1], 0.0);
        assert!(p[0] < 1.0);
        assert!(adam_step(&mut p, &[1.0], &mut st, 0.1, None).is_err());
    }

    #[test]
    fn threshold_rules() {
        let xi = CoefficientMatrix::from_rows(&[vec![0.03], vec![1.2]]);
        let t = threshold(&xi, 0.05);
        assert_eq!(t.values(), &[0.0, 1.2]);
        assert!(!t.is_active(0, 0) && t.is_active(1, 0));
        assert_eq!(threshold(&t, 0.05), t);

        let zero_lambda = threshold(&xi, 0.0);
        assert_eq!(zero_lambda, xi);
        assert!(zero_lambda.mask().iter().all(|&a| a));

        let all = threshold(&CoefficientMatrix::from_rows(&[vec![0.3], vec![-0.9]]), 1.0);
        assert!(all.is_zero());
    }

    #[test]
    fn l1_penalty() {
        let mut cfg = SindyConfig::default();
        let xi = CoefficientMatrix::from_rows(&[vec![1.0], vec![-2.0]]);
        assert_eq!(regularize(0.5, &xi, &cfg), 0.5);
        cfg.reg = Regularization::L1 { weight: 0.1 };
        assert!((regularize(0.0, &xi, &cfg) - 0.3).abs() < 1e-15);
        let mut masked = xi.clone();
        masked.deactivate(1, 0);
        assert!((regularize(0.0, &masked, &cfg) - 0.1).abs() < 1e-15);
        let mut g = vec![0.0, 0.0];
        regularize_gradient(&mut g, &xi, &cfg);
        assert_eq!(g, vec![0.1, -0.1]);
    }
}
