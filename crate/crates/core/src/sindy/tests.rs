use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::dataset::{generate, reference_model, ReferenceModel, MODEL_NAMES};
use crate::features::LibrarySpec;
use crate::grad::finite_difference;
use crate::irk;
use crate::linalg::Matrix;
use crate::net::Activation;
use crate::tableau::gauss_tableau;

fn tight(method: StageSolver) -> SolverSettings {
    SolverSettings { method, tol: 1e-14, max_iterations: 300 }
}

/// Samples `m + 1` states by repeated single steps of `tab`.
fn stepped(model: &ReferenceModel, tab: &ButcherTableau<f64>, x0: &[f64], h: f64, m: usize) -> Dataset {
    let f = crate::field::LibraryField::<f64>::new(&model.library, &model.coefficients).unwrap();
    let mut rows = vec![x0.to_vec()];
    for k in 0..m {
        let next = irk::step(&f, &rows[k], h, tab, &tight(StageSolver::Newton)).unwrap();
        rows.push(next);
    }
    let t = (0..=m).map(|k| k as f64 * h).collect();
    Dataset::new(t, Matrix::from_rows(&rows)).unwrap()
}

fn oscillator_data(m: usize, h: f64) -> Dataset {
    let model = reference_model("linear_osc", &[]).unwrap();
    generate(&model, &[2.0, 0.0], 0.0, h * m as f64, m).unwrap()
}

fn poly(d: usize, degree: usize) -> Library {
    Library::build(&LibrarySpec::polynomial(d, degree)).unwrap()
}

fn random_xi(rng: &mut ChaCha8Rng, p: usize, d: usize, scale: f64) -> CoefficientMatrix {
    let values = (0..p * d).map(|_| scale * rng.gen_range(-1.0..1.0)).collect();
    CoefficientMatrix::from_column_major(p, d, values).unwrap()
}

fn rel_err(g: &[f64], reference: &[f64]) -> f64 {
    let diff = g.iter().zip(reference).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let scale = reference.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    diff / scale.max(1e-12)
}

fn with_values(xi: &CoefficientMatrix, v: &[f64]) -> CoefficientMatrix {
    let mut out = xi.clone();
    out.assign(v);
    out
}

#[test]
fn zero_field_two_points() {
    let ds = Dataset::new(vec![0.0, 0.1], Matrix::from_rows(&[vec![1.0], vec![0.9]])).unwrap();
    let lib = poly(1, 2);
    let tab = gauss_tableau(2).unwrap();
    let xi = CoefficientMatrix::zeros(lib.len(), 1);
    let loss = loss_irk(&xi, &lib, &ds, &tab, &SindyConfig::default()).unwrap();
    assert!((loss - 0.01).abs() < 1e-15);
    let (lg, _) = loss_irk_gradient(&xi, &lib, &ds, &tab, &SindyConfig::default(), None).unwrap();
    assert!((lg - 0.01).abs() < 1e-15);
    assert!((loss_rk4(&xi, &lib, &ds, &SindyConfig::default()).unwrap() - 0.01).abs() < 1e-15);
}

#[test]
fn alpha_one_ignores_forward_term() {
    let ds = Dataset::new(vec![0.0, 0.1], Matrix::from_rows(&[vec![1.0], vec![0.9]])).unwrap();
    let lib = poly(1, 1);
    let tab = gauss_tableau(2).unwrap();
    let cfg = SindyConfig { alpha: 1.0, ..SindyConfig::default() };
    let xi = CoefficientMatrix::zeros(2, 1);
    assert!((loss_irk(&xi, &lib, &ds, &tab, &cfg).unwrap() - 0.01).abs() < 1e-15);
    // dx/dt = -x/0.1 ... only the backward prediction from 0.9 enters.
    let decay = CoefficientMatrix::from_rows(&[vec![0.0], vec![-1.0]]);
    let f = crate::field::LibraryField::<f64>::new(&lib, &decay).unwrap();
    let back = irk::step(&f, &[0.9], -0.1, &tab, &SolverSettings::newton()).unwrap()[0];
    let expect = (back - 1.0).powi(2);
    assert!((loss_irk(&decay, &lib, &ds, &tab, &cfg).unwrap() - expect).abs() < 1e-14);
}

#[test]
fn self_generated_data_has_zero_loss() {
    let model = reference_model("linear_osc", &[]).unwrap();
    let tab = gauss_tableau(2).unwrap();
    let ds = stepped(&model, &tab, &[2.0, 0.0], 0.05, 40);
    let loss = loss_irk(&model.coefficients, &model.library, &ds, &tab, &SindyConfig::default()).unwrap();
    assert!(loss <= 1e-12, "loss {loss:e}");
}

#[test]
fn reference_loss_is_small_on_every_benchmark() {
    let tab = gauss_tableau(3).unwrap();
    for name in MODEL_NAMES {
        let model = reference_model(name, &[]).unwrap();
        let h = 0.02;
        let ds = generate(&model, &model.default_x0, 0.0, 40.0 * h, 40).unwrap();
        let loss = loss_irk(&model.coefficients, &model.library, &ds, &tab, &SindyConfig::default()).unwrap();
        assert!(loss <= 1e-10, "{name}: loss {loss:e}");
    }
}

#[test]
fn time_reversal_with_negated_field() {
    let model = reference_model("cubic_osc", &[]).unwrap();
    let ds = generate(&model, &model.default_x0, 0.0, 1.0, 20).unwrap();
    let lib = poly(2, 3);
    let tab = gauss_tableau(2).unwrap();
    let cfg = SindyConfig { solver: tight(StageSolver::Newton), ..SindyConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let xi = random_xi(&mut rng, lib.len(), 2, 0.3);
    let neg = with_values(&xi, &xi.values().iter().map(|v| -v).collect::<Vec<_>>());
    let a = loss_irk(&xi, &lib, &ds, &tab, &cfg).unwrap();
    let b = loss_irk(&neg, &lib, &ds.time_reversed(), &tab, &cfg).unwrap();
    assert!((a - b).abs() <= 1e-12 * a.max(1.0), "{a} vs {b}");
}

#[test]
fn empty_and_mismatched_inputs() {
    let lib = poly(1, 1);
    let tab = gauss_tableau(1).unwrap();
    let one = Dataset::new(vec![0.0], Matrix::from_rows(&[vec![1.0]])).unwrap();
    let xi = CoefficientMatrix::zeros(2, 1);
    assert_eq!(loss_irk(&xi, &lib, &one, &tab, &SindyConfig::default()), Err(Error::EmptyDataset));
    let two = oscillator_data(3, 0.1);
    assert!(matches!(loss_irk(&xi, &lib, &two, &tab, &SindyConfig::default()), Err(Error::DimensionMismatch { .. })));
    let cfg = SindyConfig { gradient: GradientMode::Unrolled, ..SindyConfig::default() };
    let lib2 = poly(2, 1);
    let xi2 = CoefficientMatrix::zeros(3, 2);
    assert!(matches!(loss_irk_gradient(&xi2, &lib2, &two, &tab, &cfg, None), Err(Error::InvalidConfig(_))));
}

#[test]
fn implicit_gradient_matches_tape_and_differences() {
    let ds = oscillator_data(10, 0.05);
    let lib = poly(2, 2);
    let tab = gauss_tableau(2).unwrap();
    let cfg = SindyConfig { alpha: 0.3, solver: tight(StageSolver::Newton), ..SindyConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let xi = random_xi(&mut rng, lib.len(), 2, 1.0);
        let (l, g) = loss_irk_gradient(&xi, &lib, &ds, &tab, &cfg, None).unwrap();
        let (lt, gt) = loss_irk_gradient_tape(&xi, &lib, &ds, &tab, &cfg).unwrap();
        let fd = finite_difference(|v| loss_irk(&with_values(&xi, v), &lib, &ds, &tab, &cfg), xi.values(), 1e-5).unwrap();
        assert!((l - lt).abs() <= 1e-12 * l.max(1.0));
        assert!(rel_err(&g, &gt) < 1e-9, "adjoint vs tape {}", rel_err(&g, &gt));
        assert!(rel_err(&g, &fd) < 1e-5, "adjoint vs differences {}", rel_err(&g, &fd));
    }
}

#[test]
fn warm_started_gradient_is_unchanged() {
    let ds = oscillator_data(10, 0.05);
    let lib = poly(2, 2);
    let tab = gauss_tableau(3).unwrap();
    let cfg = SindyConfig { solver: tight(StageSolver::Newton), ..SindyConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let xi = random_xi(&mut rng, lib.len(), 2, 0.5);
    let mut cache = StageCache::new(ds.intervals());
    let cold = loss_irk_gradient(&xi, &lib, &ds, &tab, &cfg, None).unwrap();
    let _ = loss_irk_gradient(&xi, &lib, &ds, &tab, &cfg, Some(&mut cache)).unwrap();
    let warm = loss_irk_gradient(&xi, &lib, &ds, &tab, &cfg, Some(&mut cache)).unwrap();
    assert!((cold.0 - warm.0).abs() <= 1e-13 * cold.0.max(1.0));
    assert!(rel_err(&warm.1, &cold.1) < 1e-10);
}

#[test]
fn unrolled_gradient_matches_differences() {
    let ds = oscillator_data(8, 0.05);
    let lib = poly(2, 2);
    let tab = gauss_tableau(2).unwrap();
    let cfg = SindyConfig { solver: tight(StageSolver::FixedPoint), gradient: GradientMode::Unrolled, ..SindyConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..10 {
        let xi = random_xi(&mut rng, lib.len(), 2, 1.0);
        let (_, g) = loss_irk_gradient(&xi, &lib, &ds, &tab, &cfg, None).unwrap();
        let fd = finite_difference(|v| loss_irk(&with_values(&xi, v), &lib, &ds, &tab, &cfg), xi.values(), 1e-5).unwrap();
        assert!(rel_err(&g, &fd) < 1e-5, "unrolled vs differences {}", rel_err(&g, &fd));
        let implicit = SindyConfig { gradient: GradientMode::Implicit, ..cfg.clone() };
        let (_, gi) = loss_irk_gradient(&xi, &lib, &ds, &tab, &implicit, None).unwrap();
        assert!(rel_err(&g, &gi) < 1e-8);
    }
}

#[test]
fn rk4_gradient_matches_differences() {
    let ds = oscillator_data(10, 0.05);
    let lib = poly(2, 3);
    let cfg = SindyConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..5 {
        let xi = random_xi(&mut rng, lib.len(), 2, 1.0);
        let (l, g) = loss_rk4_gradient(&xi, &lib, &ds, &cfg).unwrap();
        assert!((l - loss_rk4(&xi, &lib, &ds, &cfg).unwrap()).abs() <= 1e-12 * l.max(1.0));
        let fd = finite_difference(|v| loss_rk4(&with_values(&xi, v), &lib, &ds, &cfg), xi.values(), 1e-5).unwrap();
        assert!(rel_err(&g, &fd) < 1e-5);
    }
}

fn small_net(activation: Activation, d: usize, s: usize, seed: u64) -> StageNet {
    let arch = Architecture { hidden_layers: 2, width: 8, activation, omega0: 30.0, include_time: true };
    StageNet::new(&arch, d, s, (0.0, 1.0), seed).unwrap()
}

fn deep_check(activation: Activation, draws: usize, theta_scale: f64) {
    let ds = oscillator_data(6, 0.1);
    let lib = poly(2, 2);
    let tab = gauss_tableau(2).unwrap();
    let cfg = SindyConfig { alpha: 0.4, ..SindyConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let mut net = small_net(activation, 2, 2, 1);
    for _ in 0..draws {
        let xi = random_xi(&mut rng, lib.len(), 2, 1.0);
        let theta: Vec<f64> = (0..net.mlp.num_params()).map(|_| theta_scale * rng.gen_range(-1.0..1.0)).collect();
        net.mlp.set_params(&theta).unwrap();
        let (l, gx, gt) = loss_deep_gradient(&xi, &net, &lib, &ds, &tab, &cfg).unwrap();
        let (lt, gxt, gtt) = loss_deep_gradient_tape(&xi, &net, &lib, &ds, &tab, &cfg).unwrap();
        assert!((l - lt).abs() <= 1e-12 * l.max(1.0));
        assert!(rel_err(&gx, &gxt) < 1e-10 && rel_err(&gt, &gtt) < 1e-10);

        let fd_x = finite_difference(|v| loss_deep(&with_values(&xi, v), &net, &lib, &ds, &tab, &cfg), xi.values(), 1e-5).unwrap();
        let fd_t = finite_difference(
            |v| {
                let mut n = net.clone();
                n.mlp.set_params(v)?;
                loss_deep(&xi, &n, &lib, &ds, &tab, &cfg)
            },
            &theta,
            1e-6,
        )
        .unwrap();
        assert!(rel_err(&gx, &fd_x) < 1e-5, "xi {}", rel_err(&gx, &fd_x));
        assert!(rel_err(&gt, &fd_t) < 1e-5, "theta {}", rel_err(&gt, &fd_t));
    }
}

#[test]
fn deep_gradient_tanh() {
    deep_check(Activation::Tanh, 10, 1.0);
}

#[test]
fn deep_gradient_siren() {
    deep_check(Activation::Siren, 3, 0.05);
}

#[test]
fn deep_loss_at_zero_field() {
    let ds = oscillator_data(5, 0.1);
    let lib = poly(2, 2);
    let tab = gauss_tableau(3).unwrap();
    let cfg = SindyConfig { alpha: 0.25, ..SindyConfig::default() };
    let net = small_net(Activation::Tanh, 2, 3, 4);
    let xi = CoefficientMatrix::zeros(lib.len(), 2);
    let mut expect = 0.0;
    for k in 0..5 {
        let chi = net.forward(ds.times()[k], ds.state(k)).unwrap();
        for i in 0..3 {
            for c in 0..2 {
                expect += 0.25 * (ds.state(k)[c] - chi.get(i, c)).powi(2);
                expect += 0.75 * (ds.state(k + 1)[c] - chi.get(i, c)).powi(2);
            }
        }
    }
    let loss = loss_deep(&xi, &net, &lib, &ds, &tab, &cfg).unwrap();
    assert!((loss - expect).abs() <= 1e-13 * expect);
}

#[test]
fn deep_loss_is_quadratic() {
    // A time-only network and a linear field make every residual linear in
    // (data, network head), so doubling both quadruples the loss.
    let ds = oscillator_data(5, 0.1);
    let lib = Library::build(&LibrarySpec { constant: false, ..LibrarySpec::polynomial(2, 1) }).unwrap();
    let tab = gauss_tableau(2).unwrap();
    let cfg = SindyConfig::default();
    let mut net = small_net(Activation::Tanh, 2, 2, 8);
    let mut theta = net.mlp.params().to_vec();
    let (w0, _) = net.mlp.layer_offsets(0);
    let n_in = net.mlp.input_dim();
    for r in 0..net.mlp.sizes()[1] {
        for c in 1..n_in {
            theta[w0 + r * n_in + c] = 0.0;
        }
    }
    net.mlp.set_params(&theta).unwrap();
    let xi = CoefficientMatrix::from_rows(&[vec![-0.1, -2.0], vec![2.0, -0.1]]);
    let base = loss_deep(&xi, &net, &lib, &ds, &tab, &cfg).unwrap();

    let last = net.mlp.sizes().len() - 2;
    let (w, _) = net.mlp.layer_offsets(last);
    for v in &mut theta[w..] {
        *v *= 2.0;
    }
    let mut doubled = net.clone();
    doubled.mlp.set_params(&theta).unwrap();
    let x2 = Matrix::from_fn(6, 2, |k, c| 2.0 * ds.state(k)[c]);
    let ds2 = ds.with_states(x2).unwrap();
    let scaled = loss_deep(&xi, &doubled, &lib, &ds2, &tab, &cfg).unwrap();
    assert!((scaled - 4.0 * base).abs() <= 1e-12 * scaled);
}

/// Network trained to reproduce the solved stages of each interval.
fn exact_stage_net(ds: &Dataset, model: &ReferenceModel, tab: &ButcherTableau<f64>) -> StageNet {
    let arch = Architecture { hidden_layers: 1, width: 64, activation: Activation::Tanh, omega0: 30.0, include_time: true };
    let m = ds.intervals();
    let mut net = StageNet::new(&arch, ds.dim(), tab.stages(), (0.0, ds.times()[m]), 2).unwrap();
    let f = crate::field::LibraryField::<f64>::new(&model.library, &model.coefficients).unwrap();
    let targets = Matrix::from_fn(m, tab.stages() * ds.dim(), |k, r| {
        let st = irk::solve_stages(&f, ds.state(k), ds.step(k), tab, &tight(StageSolver::Newton)).unwrap();
        st.chi.as_slice()[r]
    });
    let states = Matrix::from_fn(m, ds.dim(), |k, c| ds.state(k)[c]);
    let inputs = net.encode_batch(&ds.times()[..m], &states);
    net.mlp.fit_output_layer(&inputs, &targets, 1e-14).unwrap();
    net
}

#[test]
fn exact_stages_give_small_deep_loss() {
    let model = reference_model("linear_osc", &[]).unwrap();
    let tab = gauss_tableau(2).unwrap();
    let ds = stepped(&model, &tab, &[2.0, 0.0], 0.05, 30);
    let net = exact_stage_net(&ds, &model, &tab);
    let cfg = SindyConfig::default();
    let loss = loss_deep(&model.coefficients, &net, &model.library, &ds, &tab, &cfg).unwrap();
    assert!(loss <= 1e-8, "loss {loss:e}");
    // A short joint run from the exact state keeps the support.
    let cfg = SindyConfig { lr_xi: 1e-4, lr_theta: 1e-5, thresholding_iterations: 2, epochs_first: 20, epochs_rest: 20, ..cfg };
    let out = discover_deep_with(&ds, &model.library, &tab, &cfg, net, Some(&model.coefficients)).unwrap();
    assert_eq!(out.xi.support(), model.coefficients.with_support_mask().support());
    assert!(out.history[0] <= 1e-6);
}

#[test]
fn constant_states_give_zero_model() {
    let ds = Dataset::new(vec![0.0, 0.1, 0.2, 0.3], Matrix::from_rows(&vec![vec![1.5, -0.5]; 4])).unwrap();
    let lib = poly(2, 2);
    let tab = gauss_tableau(2).unwrap();
    let cfg = SindyConfig { epochs_first: 50, epochs_rest: 50, thresholding_iterations: 2, ..SindyConfig::default() };
    let out = discover_irk(&ds, &lib, &tab, &cfg).unwrap();
    assert!(out.all_terms_eliminated);
    assert!(out.term_report.iter().all(Vec::is_empty));
    assert_eq!(out.history.len(), 100);
    assert!(out.summary("").contains("dx1/dt = 0"));
}

#[test]
fn short_run_moves_toward_reference_and_keeps_support_monotone() {
    let ds = oscillator_data(100, 0.05);
    let lib = poly(2, 2);
    let tab = gauss_tableau(2).unwrap();
    let cfg = SindyConfig { epochs_first: 300, epochs_rest: 100, thresholding_iterations: 3, ..SindyConfig::default() };
    let out = discover_irk(&ds, &lib, &tab, &cfg).unwrap();
    assert_eq!(out.history.len(), 500);
    assert!(out.history[499] < 0.1 * out.history[0]);
    for (j, c) in out.xi.support() {
        assert!(out.xi.get(j, c).abs() >= cfg.lambda);
    }
    for c in 0..2 {
        for j in 0..lib.len() {
            if !out.xi.is_active(j, c) {
                assert_eq!(out.xi.get(j, c), 0.0);
            }
        }
    }
    let rk4 = discover_rk4(&ds, &lib, &cfg).unwrap();
    assert_eq!(rk4.history.len(), 500);
}

#[test]
fn config_validation() {
    assert!(SindyConfig::default().validate().is_ok());
    let bad = [
        SindyConfig { alpha: 1.5, ..SindyConfig::default() },
        SindyConfig { lambda: 1.0, ..SindyConfig::default() },
        SindyConfig { lr_xi: 0.0, ..SindyConfig::default() },
        SindyConfig { lr_decay: 0.0, ..SindyConfig::default() },
        SindyConfig { thresholding_iterations: 0, ..SindyConfig::default() },
        SindyConfig { reg: Regularization::L1 { weight: -1.0 }, ..SindyConfig::default() },
        SindyConfig { gradient: GradientMode::Unrolled, ..SindyConfig::default() },
    ];
    for cfg in bad {
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))), "{cfg:?}");
    }
}

#[test]
fn outputs_and_report() {
    let lib = poly(2, 1);
    let xi = CoefficientMatrix::from_rows(&[vec![0.0, 0.0], vec![-0.1, -2.0], vec![2.0, -0.1]]);
    let model = DiscoveredModel::new(lib.clone(), xi, vec![1.0, 0.5], None);
    assert_eq!(model.term_report[0], vec![("x1".to_string(), -0.1), ("x2".to_string(), 2.0)]);
    assert!(!model.all_terms_eliminated);
    assert_eq!(model.history_csv(), "epoch,loss\n1,1.0000000000000000e0\n2,5.0000000000000000e-1\n");
    let dir = tempfile::tempdir().unwrap();
    let paths = model.write_outputs(dir.path(), "run_", "lambda = 0.05").unwrap();
    let summary = std::fs::read_to_string(&paths.summary).unwrap();
    assert!(summary.contains("lambda = 0.05"));
    assert!(summary.contains("dx1/dt = -0.100000 x1 +2.000000 x2"));
    let (lib2, back) = CoefficientMatrix::from_csv(&std::fs::read_to_string(&paths.coefficients).unwrap()).unwrap();
    assert_eq!(lib2.names(), lib.names());
    assert_eq!(back.max_abs_diff(&model.xi), 0.0);
}

#[test]
fn preprocessing_order() {
    let model = reference_model("linear_osc", &[]).unwrap();
    let ds = generate(&model, &[2.0, 0.0], 0.0, 5.0, 100).unwrap();
    let pre = Preprocess { savgol: Some((7, 3)), scaling: Some(ScalingMode::ScaleOnly) };
    let (out, info) = preprocess(&ds, &pre).unwrap();
    let smoothed = savgol_filter(&ds, 7, 3).unwrap();
    let (expect, _) = standardize(&smoothed, ScalingMode::ScaleOnly).unwrap();
    assert_eq!(out, expect);
    assert!(info.is_some());
    let (same, none) = preprocess(&ds, &Preprocess::default()).unwrap();
    assert_eq!(same, ds);
    assert!(none.is_none());
}

