use super::*;
use approx::assert_abs_diff_eq;
use proptest::prelude::*;

use crate::rng::stream_rng;
use crate::tasks::{corrupt_labels, generate_blobs, select_classes, Dataset, ModelSpec, Provenance};

fn diag(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_column_slice(v))
}

fn logistic_task(classes: usize, n: usize, sep: f64, seed: u64) -> Task<f64> {
    let d = generate_blobs(classes, n, 2, sep, seed).unwrap();
    Task::new(d, ModelSpec::logistic(2, classes, 0.0)).unwrap()
}

fn quick_cfg() -> TrainerConfig {
    TrainerConfig {
        step: 0.5,
        max_iters: 20_000,
        grad_tol: 1e-8,
        ..TrainerConfig::default()
    }
}

/// Monte-Carlo oracle: `E_q[log q − log p]` for `q = N(mean, diag(var))`,
/// `p = N(0, λ² I)`.
fn mc_kl_diag(mean: &[f64], var: &[f64], lambda2: f64, samples: usize, seed: u64) -> f64 {
    let mut rng = stream_rng(seed, 0);
    let mut total = 0.0;
    for _ in 0..samples {
        let mut log_ratio = 0.0;
        for (m, v) in mean.iter().zip(var) {
            let z = f64::standard_normal(&mut rng);
            let x = m + v.sqrt() * z;
            let log_q = -0.5 * z * z - 0.5 * v.ln();
            let log_p = -0.5 * x * x / lambda2 - 0.5 * lambda2.ln();
            log_ratio += log_q - log_p;
        }
        total += log_ratio;
    }
    total / samples as f64
}

#[test]
fn kl_of_prior_with_itself_is_zero() {
    for &l2 in &[0.5, 1.0, 4.0] {
        let q = GaussianPosterior::new(DVector::zeros(3), DMatrix::identity(3, 3) * l2).unwrap();
        assert_eq!(gaussian_kl(&q, l2).unwrap(), 0.0);
    }
}

#[test]
fn kl_one_dimensional_example() {
    let q = GaussianPosterior::new(DVector::from_element(1, 1.0), diag(&[1.0])).unwrap();
    assert_abs_diff_eq!(gaussian_kl(&q, 1.0).unwrap(), 0.5, epsilon = 1e-15);
}

#[test]
fn kl_two_dimensional_example_against_monte_carlo() {
    let q = GaussianPosterior::new(DVector::zeros(2), DMatrix::identity(2, 2)).unwrap();
    let closed = gaussian_kl(&q, 4.0).unwrap();
    let expected = 0.5 * (0.0 + 2.0 / 4.0 + 2.0 * 4f64.ln() - 0.0 - 2.0);
    assert_abs_diff_eq!(closed, expected, epsilon = 1e-14);
    assert_abs_diff_eq!(closed, 0.6363, epsilon = 1e-4);
    let mc = mc_kl_diag(&[0.0, 0.0], &[1.0, 1.0], 4.0, 1_000_000, 3);
    // per-sample sd of the log ratio is ~1.1, so the MC mean is good to ~3e-3
    assert!((mc - closed).abs() < 5e-3, "mc {mc} closed {closed}");
}

#[test]
fn kl_singular_covariance_is_infinite() {
    let q = GaussianPosterior::new(DVector::zeros(2), diag(&[1.0, 0.0])).unwrap();
    assert!(gaussian_kl(&q, 1.0).unwrap().is_infinite());
    assert!(gaussian_kl(&q, 0.0).is_err());
}

#[test]
fn posterior_rejects_non_psd() {
    assert!(GaussianPosterior::new(DVector::zeros(2), diag(&[1.0, -0.1])).is_err());
}

#[test]
fn logistic_fisher_single_sample() {
    let d = Dataset::new(
        DMatrix::from_element(1, 1, 1.0),
        vec![1],
        2,
        Provenance::External { source: "unit".into() },
    )
    .unwrap();
    let t = Task::new(d, ModelSpec::logistic(1, 2, 0.0)).unwrap();
    let f = fisher(&t, &DVector::zeros(4)).unwrap();
    // p(1 − p) x² at p = ½ on the weight of the first logit.
    assert_abs_diff_eq!(f.matrix()[(0, 0)], 0.25, epsilon = 1e-15);
    // Along the logit difference direction (the binary logistic weight) the
    // curvature is the same: uᵀFu with u = (1, −1, 0, 0)/√2 · √2.
    let u = DVector::from_vec(vec![0.5, -0.5, 0.0, 0.0]);
    assert_abs_diff_eq!(u.dot(&(f.matrix() * &u)), 0.25, epsilon = 1e-15);
}

#[test]
fn fisher_vanishes_for_confident_model() {
    let t = logistic_task(2, 60, 12.0, 4);
    let out = train_minimizer(&t, 1e-2, 1.0, &quick_cfg(), None, "t").unwrap();
    let w = &out.w * 100.0;
    let f = fisher(&t, &w).unwrap();
    assert!(f.matrix().amax() < 1e-6, "{}", f.matrix().amax());
}

#[test]
fn fisher_is_hessian_of_expected_kl() {
    for model in [ModelSpec::logistic(2, 3, 0.0), ModelSpec::mlp(2, 3, 3, 0.0)] {
        let d = generate_blobs(3, 30, 2, 2.0, 9).unwrap();
        let t = Task::new(d, model).unwrap();
        let mut rng = stream_rng(5, 0);
        let w0 = DVector::from_fn(t.param_count(), |_, _| 0.4 * f64::standard_normal(&mut rng));
        let f = fisher(&t, &w0).unwrap();
        let h = 1e-4;
        let n = w0.len();
        for i in 0..n {
            for j in 0..n {
                let kl = |di: f64, dj: f64| {
                    let mut w = w0.clone();
                    w[i] += di;
                    w[j] += dj;
                    t.mean_kl(&w0, &w)
                };
                let fd = (kl(h, h) - kl(h, -h) - kl(-h, h) + kl(-h, -h)) / (4.0 * h * h);
                assert!(
                    (fd - f.matrix()[(i, j)]).abs() < 1e-4,
                    "({i},{j}) fd {fd} F {}",
                    f.matrix()[(i, j)]
                );
            }
        }
    }
}

#[test]
fn kl_expansion_ratio_tends_to_one() {
    let t = logistic_task(3, 45, 2.0, 2);
    let mut rng = stream_rng(17, 0);
    let d = t.param_count();
    let w = DVector::from_fn(d, |_, _| 0.3 * f64::standard_normal(&mut rng));
    let f = fisher(&t, &w).unwrap();
    for trial in 0..5 {
        let mut rng = stream_rng(100 + trial, 0);
        let delta = DVector::from_fn(d, |_, _| f64::standard_normal(&mut rng)).normalize();
        let quad = 0.5 * delta.dot(&(f.matrix() * &delta));
        let ratio = |eps: f64| t.mean_kl(&w, &(&w + &delta * eps)) / (eps * eps * quad);
        let r3 = ratio(1e-3);
        let r2 = ratio(1e-2);
        assert!((r3 - 1.0).abs() < 0.05, "ratio {r3}");
        assert!((r3 - 1.0).abs() <= (r2 - 1.0).abs() + 1e-6);
    }
}

#[test]
fn fisher_trace_falls_with_separation() {
    let traces: Vec<f64> = [2.0, 4.0, 8.0]
        .iter()
        .map(|&sep| {
            let t = logistic_task(2, 80, sep, 21);
            let out = train_minimizer(&t, 0.05, 1.0, &quick_cfg(), None, "t").unwrap();
            fisher(&t, &out.w).unwrap().trace()
        })
        .collect();
    assert!(traces[0] > traces[1] && traces[1] > traces[2], "{traces:?}");
}

#[test]
fn optimal_sigma_examples() {
    let s = optimal_sigma(&DMatrix::zeros(3, 3), 0.7, 2.5).unwrap();
    assert!((s - DMatrix::identity(3, 3) * 2.5).amax() < 1e-10);
    let h = 3.0;
    let s = optimal_sigma(&(DMatrix::identity(2, 2) * h), 2.0, 1.0).unwrap();
    assert!((s - DMatrix::identity(2, 2) / (h + 1.0)).amax() < 1e-10);
    let s = optimal_sigma(&diag(&[1.0, 3.0]), 1.0, 1.0).unwrap();
    assert!((s - diag(&[1.0 / 3.0, 1.0 / 7.0])).amax() < 1e-10);
    assert!(optimal_sigma(&DMatrix::zeros(1, 1), 0.0, 1.0).is_err());
}

#[test]
fn complexity_examples() {
    let r = complexity_from_parts(2f64.ln(), &DVector::zeros(2), &DMatrix::zeros(2, 2), 1.0, 1.0).unwrap();
    assert_abs_diff_eq!(r.total, 2f64.ln(), epsilon = 1e-10);
    let r = complexity_from_parts(0.5, &DVector::from_element(1, 1.0), &diag(&[0.5]), 1.0, 1.0).unwrap();
    assert_abs_diff_eq!(r.total, 0.5 + 0.5 * (1.0 + 2f64.ln()), epsilon = 1e-10);
    assert_abs_diff_eq!(r.total, 1.3466, epsilon = 1e-4);
    assert_abs_diff_eq!(
        r.total,
        r.loss_term + 0.5 * r.beta * (r.norm_term + r.logdet_term),
        epsilon = 1e-12
    );
}

#[test]
fn complexity_report_csv() {
    let r = complexity_from_parts(0.5, &DVector::from_element(1, 1.0), &diag(&[0.5]), 1.0, 1.0).unwrap();
    assert_eq!(
        ComplexityReport::<f64>::CSV_HEADER.split(',').count(),
        r.csv_row().split(',').count()
    );
    let json = serde_json::to_string(&r).unwrap();
    let back: ComplexityReport<f64> = serde_json::from_str(&json).unwrap();
    assert_eq!(back, r);
}

#[test]
fn c_beta_at_origin_of_uniform_model() {
    let t = logistic_task(2, 20, 3.0, 0);
    let r = c_beta(&t, &DVector::zeros(t.param_count()), 1.0, 1.0).unwrap();
    assert_abs_diff_eq!(r.loss_term, 2f64.ln(), epsilon = 1e-14);
    assert_eq!(r.norm_term, 0.0);
    assert!(r.logdet_term > 0.0);
}

#[test]
fn analytic_curvature_gradient_matches_differences() {
    let t = logistic_task(3, 30, 2.0, 6);
    let mut rng = stream_rng(2, 0);
    let w = DVector::from_fn(t.param_count(), |_, _| 0.5 * f64::standard_normal(&mut rng));
    let sigma = optimal_sigma(&t.fisher_matrix(&w), 0.5, 1.0).unwrap();
    let g = curvature_trace_grad(&t, &w, &sigma);
    let h = 1e-6;
    for i in 0..w.len() {
        let mut up = w.clone();
        let mut down = w.clone();
        up[i] += h;
        down[i] -= h;
        let fd = 0.5
            * (t.fisher_matrix(&up).component_mul(&sigma).sum() - t.fisher_matrix(&down).component_mul(&sigma).sum())
            / (2.0 * h);
        assert!((fd - g[i]).abs() < 1e-7, "{i}: fd {fd} analytic {}", g[i]);
    }
}

#[test]
fn structure_curve_high_beta_endpoint() {
    let t = logistic_task(3, 60, 4.0, 1);
    let lambda2 = 1.0;
    let curve = structure_curve(&t, &[1e6], lambda2, &quick_cfg()).unwrap();
    let p = &curve.points[0];
    assert!(p.converged);
    assert!(p.kl_nats < 1e-4, "{}", p.kl_nats);
    assert!((p.point_loss - 3f64.ln()).abs() < 1e-4);
    // Σ* → λ² I, so the surrogate tends to log K + ½ λ² tr F(0).
    let f0 = t.fisher_matrix(&DVector::zeros(t.param_count()));
    assert!((p.expected_loss - (3f64.ln() + 0.5 * lambda2 * f0.trace())).abs() < 1e-3);
}

#[test]
fn structure_curve_reaches_low_loss_and_is_monotone() {
    let t = logistic_task(2, 80, 8.0, 3);
    let grid = [10.0, 3.0, 1.0, 0.3, 0.1, 0.03, 0.01, 0.003];
    let cfg = TrainerConfig {
        step: 1.0,
        max_iters: 50_000,
        grad_tol: 1e-7,
        ..TrainerConfig::default()
    };
    let curve = structure_curve(&t, &grid, 1.0, &cfg).unwrap();
    assert!(curve.points.iter().all(|p| p.converged));
    assert!(
        curve.is_monotone(1e-6),
        "violation {}",
        curve.max_monotonicity_violation()
    );
    let last = curve.points.last().unwrap();
    assert!(last.expected_loss < 0.05, "{}", last.expected_loss);
}

#[test]
fn corrupted_curve_lies_above_clean() {
    let clean = logistic_task(2, 80, 6.0, 5);
    let noisy = Task::new(corrupt_labels(clean.data(), 0.5, 8).unwrap(), *clean.model()).unwrap();
    let grid = [10.0, 3.0, 1.0, 0.3, 0.1, 0.03];
    let cfg = TrainerConfig {
        step: 1.0,
        max_iters: 50_000,
        ..TrainerConfig::default()
    };
    let a = structure_curve(&clean, &grid, 1.0, &cfg).unwrap();
    let b = structure_curve(&noisy, &grid, 1.0, &cfg).unwrap();
    let mut compared = 0;
    for p in b.sorted_converged() {
        if let Some(clean_loss) = a.interpolate(p.kl_nats) {
            assert!(
                p.expected_loss > clean_loss,
                "kl {}: {} vs {}",
                p.kl_nats,
                p.expected_loss,
                clean_loss
            );
            compared += 1;
        }
    }
    assert!(compared >= 2, "only {compared} shared ordinates");
}

#[test]
fn structure_curve_rejects_ascending_grid() {
    let t = logistic_task(2, 20, 3.0, 0);
    assert!(structure_curve(&t, &[0.1, 1.0], 1.0, &quick_cfg()).is_err());
}

#[test]
fn self_distance_is_zero() {
    let d = generate_blobs::<f64>(3, 60, 2, 4.0, 12).unwrap();
    let model = ModelSpec::logistic(2, 3, 0.0);
    let cfg = quick_cfg();
    let dist = task_distance(&d, &d, &model, 0.1, 1.0, &cfg).unwrap();
    let c = super::distance::trained_complexity(&d, &model, 0.1, 1.0, &cfg, "d").unwrap();
    assert!(dist.abs() < 1e-6 * (1.0 + c.abs()), "{dist}");
}

#[test]
fn subset_distance_is_asymmetric() {
    let full = generate_blobs(4, 160, 2, 5.0, 3).unwrap();
    let sub = select_classes(&full, &[0, 1]).unwrap();
    let model = ModelSpec::logistic(2, 4, 0.0);
    let cfg = quick_cfg();
    let down = task_distance(&full, &sub, &model, 0.1, 1.0, &cfg).unwrap();
    let up = task_distance(&sub, &full, &model, 0.1, 1.0, &cfg).unwrap();
    assert!(down < up, "full→sub {down} sub→full {up}");
}

#[test]
fn distance_grows_with_corruption() {
    let d = generate_blobs(2, 100, 2, 5.0, 8).unwrap();
    let model = ModelSpec::logistic(2, 2, 0.0);
    let cfg = quick_cfg();
    let dists: Vec<f64> = [0.0, 0.25, 0.5]
        .iter()
        .map(|&rho| {
            let c = corrupt_labels(&d, rho, 77).unwrap();
            task_distance(&d, &c, &model, 0.1, 1.0, &cfg).unwrap()
        })
        .collect();
    assert!(dists[0] < dists[1] && dists[1] < dists[2], "{dists:?}");
}

#[test]
fn distance_matrix_of_duplicates() {
    let d = generate_blobs::<f64>(2, 40, 2, 4.0, 1).unwrap();
    let tasks = vec![NamedDataset::new("a", d.clone()), NamedDataset::new("b", d)];
    let m = distance_matrix(&tasks, &ModelSpec::logistic(2, 2, 0.0), 0.1, 1.0, &quick_cfg()).unwrap();
    for i in 0..2 {
        for j in 0..2 {
            assert!(m.get(i, j).unwrap().abs() < 1e-6);
        }
    }
    assert!(m.failures.is_empty());
    let csv = m.to_csv();
    assert!(csv.starts_with("from\\to,a,b\n"));
    assert!(distance_matrix(&tasks[..1], &ModelSpec::logistic(2, 2, 0.0), 0.1, 1.0, &quick_cfg()).is_err());
}

#[test]
fn divergent_training_names_the_dataset() {
    let d = generate_blobs::<f64>(2, 40, 2, 4.0, 1).unwrap();
    let huge = Dataset::new(
        d.inputs() * 1e200,
        d.labels().to_vec(),
        2,
        Provenance::External { source: "unit".into() },
    )
    .unwrap();
    let err = task_distance(&huge, &huge, &ModelSpec::logistic(2, 2, 0.0), 0.1, 1.0, &quick_cfg()).unwrap_err();
    match err {
        Error::TrainingDiverged { dataset, .. } => assert_eq!(dataset, "D1 ∪ D2"),
        other => panic!("unexpected {other}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kl_is_nonnegative(mean in prop::collection::vec(-3.0f64..3.0, 3), var in prop::collection::vec(0.01f64..5.0, 3), l2 in 0.1f64..5.0) {
        let q = GaussianPosterior::new(DVector::from_vec(mean), diag(&var)).unwrap();
        prop_assert!(gaussian_kl(&q, l2).unwrap() >= 0.0);
    }

    #[test]
    fn logdet_term_nonnegative_and_norm_monotone(seed in 0u64..500, beta in 0.01f64..10.0, l2 in 0.1f64..5.0, s in 0.0f64..3.0) {
        let t = logistic_task(2, 20, 3.0, seed);
        let mut rng = stream_rng(seed, 1);
        let dir = DVector::from_fn(t.param_count(), |_, _| f64::standard_normal(&mut rng));
        let f = t.fisher_matrix(&DVector::zeros(t.param_count()));
        let small = complexity_from_parts(0.3, &(&dir * s), &f, beta, l2).unwrap();
        let large = complexity_from_parts(0.3, &(&dir * (s + 0.5)), &f, beta, l2).unwrap();
        prop_assert!(small.logdet_term >= 0.0);
        prop_assert!(large.total >= small.total);
    }
}
