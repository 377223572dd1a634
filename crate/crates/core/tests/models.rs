use cough_screen::eval::ModelConfig;
use cough_screen::features::{FeatureKind, FeatureVector};
use cough_screen::models::grid::{grid_search, CellParams, Grid, SvmGrid};
use cough_screen::models::mlp::{self, Activation, MlpParams, Solver};
use cough_screen::models::svm::{smo_solve, KernelKind, SvmParams};
use cough_screen::models::{Mlp, ModelError, TrainedModel};
use cough_screen::{Dataset, Label};
use ndarray::{array, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fv(values: Vec<f64>, label: Label, id: usize) -> FeatureVector {
    FeatureVector {
        values,
        kind: FeatureKind::Mfcc,
        segment_id: format!("rec{id}#000"),
        dataset: Dataset::Synthetic,
        label,
    }
}

fn xor() -> Vec<FeatureVector> {
    vec![
        fv(vec![0.0, 0.0], Label::Negative, 0),
        fv(vec![0.0, 1.0], Label::Positive, 1),
        fv(vec![1.0, 0.0], Label::Positive, 2),
        fv(vec![1.0, 1.0], Label::Negative, 3),
    ]
}

fn blobs(n: usize, sep: f64, seed: u64) -> Vec<FeatureVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let label = if i % 2 == 0 { Label::Positive } else { Label::Negative };
            let c = if label == Label::Positive { sep } else { -sep };
            fv(vec![c + rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)], label, i)
        })
        .collect()
}

#[test]
fn mlp_learns_xor() {
    let params = MlpParams {
        max_epochs: 2000,
        ..MlpParams::default()
    };
    let model = TrainedModel::train_mlp(&xor(), &params, false).unwrap();
    assert_eq!(model.train_metrics.train_accuracy, 1.0);
    assert!(model.train_metrics.iterations <= 2000);
    let (neg, pos) = model.predict_proba(&[0.0, 1.0]).unwrap();
    assert!(pos > 0.5);
    assert!((neg + pos - 1.0).abs() < 1e-12);
}

#[test]
fn probabilities_are_a_distribution() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let net = Mlp::init(4, &[6, 3], Activation::Tanh, &mut rng);
    let x = Array2::from_shape_fn((20, 4), |_| rng.gen_range(-5.0..5.0));
    for row in net.predict_proba_batch(x.view()).rows() {
        assert!(row.iter().all(|p| *p > 0.0 && *p < 1.0));
        assert!((row.sum() - 1.0).abs() < 1e-12);
    }
    let zero = Mlp::zeros(4, &[6, 3], Activation::Relu);
    let p = zero.predict_proba_batch(x.view());
    assert!(p.iter().all(|v| *v == 0.5));
}

#[test]
fn gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for draw in 0..20 {
        let activation = [Activation::Identity, Activation::Logistic, Activation::Tanh][draw % 3];
        let net = Mlp::init(4, &[5, 3], activation, &mut rng);
        let x = Array2::from_shape_fn((6, 4), |_| rng.gen_range(-1.0..1.0));
        let y: Vec<usize> = (0..6).map(|_| rng.gen_range(0..2)).collect();
        let (_, g) = net.loss_and_gradients(x.view(), &y);
        let analytic = g.flat();
        let theta = net.flat_params();
        let h = 1e-5;
        let numeric: Vec<f64> = (0..theta.len())
            .map(|k| {
                let mut p = net.clone();
                let mut t = theta.clone();
                t[k] += h;
                p.set_flat_params(&t);
                let up = p.loss(x.view(), &y);
                t[k] -= 2.0 * h;
                p.set_flat_params(&t);
                (up - p.loss(x.view(), &y)) / (2.0 * h)
            })
            .collect();
        let diff: f64 = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale = analytic.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
        assert!(diff / scale < 1e-4, "draw {draw}: {}", diff / scale);
    }
}

#[test]
fn training_is_bitwise_deterministic() {
    let data = blobs(40, 1.0, 1);
    for solver in Solver::ALL {
        let params = MlpParams {
            hidden_layers: vec![8, 4],
            solver,
            max_epochs: 30,
            ..MlpParams::default()
        };
        let a = TrainedModel::train_mlp(&data, &params, true).unwrap().to_json().unwrap();
        let b = TrainedModel::train_mlp(&data, &params, true).unwrap().to_json().unwrap();
        assert_eq!(a, b, "{solver:?}");
    }
    let s1 = TrainedModel::train_svm(&data, &SvmParams::default(), true).unwrap();
    let s2 = TrainedModel::train_svm(&data, &SvmParams::default(), true).unwrap();
    assert_eq!(s1.to_json().unwrap(), s2.to_json().unwrap());
}

#[test]
fn serialized_models_predict_identically() {
    let data = blobs(30, 0.5, 2);
    let params = MlpParams {
        hidden_layers: vec![10],
        max_epochs: 20,
        ..MlpParams::default()
    };
    for model in [
        TrainedModel::train_mlp(&data, &params, true).unwrap(),
        TrainedModel::train_svm(&data, &SvmParams::default(), false).unwrap(),
    ] {
        let back = TrainedModel::from_json(&model.to_json().unwrap()).unwrap();
        assert_eq!(back, model);
        let rows: Vec<Vec<f64>> = data.iter().map(|d| d.values.clone()).collect();
        let bits = |m: &TrainedModel| {
            m.score_batch(&rows)
                .unwrap()
                .iter()
                .map(|(s, l)| (s.to_bits(), *l))
                .collect::<Vec<_>>()
        };
        assert_eq!(bits(&model), bits(&back));
    }
}

#[test]
fn training_errors() {
    let one_class: Vec<FeatureVector> = (0..4).map(|i| fv(vec![i as f64], Label::Positive, i)).collect();
    assert!(matches!(
        TrainedModel::train_mlp(&one_class, &MlpParams::default(), true),
        Err(ModelError::SingleClassData)
    ));
    assert!(matches!(
        TrainedModel::train_svm(&one_class, &SvmParams::default(), true),
        Err(ModelError::SingleClassData)
    ));
    let mut ragged = xor();
    ragged[2].values.push(1.0);
    assert!(matches!(
        TrainedModel::train_mlp(&ragged, &MlpParams::default(), true),
        Err(ModelError::DimensionMismatch { .. })
    ));
    for (gamma, c) in [(0.0, 1.0), (0.4, 0.0), (-1.0, 1.0), (0.4, -3.0)] {
        let p = SvmParams { gamma, c, ..SvmParams::default() };
        assert!(TrainedModel::train_svm(&xor(), &p, false).is_err());
    }
}

fn random_problem(rng: &mut ChaCha8Rng, n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let x: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)]).collect();
    let mut y: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 }).collect();
    y[0] = 1.0;
    y[1] = -1.0;
    (x, y)
}

#[test]
fn smo_solution_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for case in 0..40 {
        let n = rng.gen_range(2..40);
        let (x, y) = random_problem(&mut rng, n);
        let c = [0.5, 1.0, 20.0][case % 3];
        let params = SvmParams { c, ..SvmParams::default() };
        let sol = smo_solve(&x, &y, &params, true);
        assert!(sol.alphas.iter().all(|a| (0.0..=c).contains(a)));
        let balance: f64 = sol.alphas.iter().zip(&y).map(|(a, y)| a * y).sum();
        assert!(balance.abs() <= params.tol, "case {case}: {balance}");
        assert!(sol.report.converged, "case {case}");
        assert!(sol.report.max_kkt_violation <= params.tol);
        for w in sol.objective_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0), "case {case}: objective fell");
        }
    }
}

#[test]
fn separable_support_vectors_are_classified_correctly() {
    let data = blobs(30, 3.0, 5);
    let (x, y): (Vec<Vec<f64>>, Vec<f64>) = data.iter().map(|d| (d.values.clone(), d.label.sign())).unzip();
    let (model, _) = cough_screen::models::svm::train(&x, &y, &SvmParams::default());
    assert!(!model.support_vectors.is_empty());
    for (sv, label) in model.support_vectors.iter().zip(&model.labels) {
        assert_eq!(model.decision(sv).signum(), *label);
    }
}

#[test]
fn compensated_feature_and_gamma_scaling_keeps_signs() {
    let data = blobs(24, 0.7, 6);
    let (x, y): (Vec<Vec<f64>>, Vec<f64>) = data.iter().map(|d| (d.values.clone(), d.label.sign())).unzip();
    let a = 3.0;
    let xs: Vec<Vec<f64>> = x.iter().map(|r| r.iter().map(|v| a * v).collect()).collect();
    let p = SvmParams::default();
    let ps = SvmParams { gamma: p.gamma / (a * a), ..p.clone() };
    let (m1, _) = cough_screen::models::svm::train(&x, &y, &p);
    let (m2, _) = cough_screen::models::svm::train(&xs, &y, &ps);
    for (r, rs) in x.iter().zip(&xs) {
        let (d1, d2) = (m1.decision(r), m2.decision(rs));
        // Same dual up to rounding, so SMO lands within its tolerance.
        assert!((d1 - d2).abs() < 1e-2, "{d1} vs {d2}");
        assert_eq!(d1 > 0.0, d2 > 0.0);
    }
}

#[test]
fn single_cell_grid_returns_that_cell() {
    let data = blobs(40, 1.5, 7);
    let grid = Grid::Svm(SvmGrid {
        kernels: vec![KernelKind::Rbf],
        gammas: vec![0.3],
        cs: vec![5.0],
    });
    let r = grid_search(&data, &grid, &ModelConfig::default(), 0, true, true).unwrap();
    assert_eq!(r.cells.len(), 1);
    assert_eq!(r.best, Some(0));
    match &r.best_cell().unwrap().params {
        CellParams::Svm(p) => assert_eq!((p.gamma, p.c), (0.3, 5.0)),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn degenerate_grid_cells_are_skipped_not_fatal() {
    let data = blobs(40, 1.5, 8);
    let grid = Grid::Svm(SvmGrid {
        kernels: vec![KernelKind::Rbf],
        gammas: vec![0.0, 0.5],
        cs: vec![1.0],
    });
    let r = grid_search(&data, &grid, &ModelConfig::default(), 0, true, true).unwrap();
    assert!(matches!(r.cells[0].status, cough_screen::models::grid::CellStatus::Skipped(_)));
    assert_eq!(r.best, Some(1));
}

#[test]
fn mlp_grid_runs_in_order() {
    let data = blobs(40, 1.5, 9);
    let grid = Grid::Mlp(cough_screen::models::MlpGrid {
        hidden_layers: vec![vec![4], vec![8]],
        solvers: vec![Solver::Adam, Solver::Lbfgs],
        learning_rates: vec![mlp::LearningRateSchedule::Constant],
        activations: vec![Activation::Tanh],
    });
    let base = ModelConfig {
        mlp: MlpParams { max_epochs: 30, ..MlpParams::default() },
        ..ModelConfig::default()
    };
    let r = grid_search(&data, &grid, &base, 1, true, true).unwrap();
    assert_eq!(r.cells.iter().map(|c| c.index).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
    assert!(r.best.is_some());
    let again = grid_search(&data, &grid, &base, 1, true, true).unwrap();
    assert_eq!(r, again);
}

#[test]
fn zero_weight_network_record() {
    let net = Mlp::zeros(2, &[3], Activation::Relu);
    let p = net.predict_proba_batch(array![[1.0, -2.0]].view());
    assert_eq!(p, array![[0.5, 0.5]]);
}
