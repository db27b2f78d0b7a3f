use super::*;
use approx::assert_abs_diff_eq;
use proptest::prelude::*;

use crate::rng::stream_rng;

fn random_weights(d: usize, scale: f64, seed: u64) -> DVector<f64> {
    let mut rng = stream_rng(seed, 0);
    DVector::from_fn(d, |_, _| scale * f64::standard_normal(&mut rng))
}

fn blob_task(classes: usize, model: ModelSpec, seed: u64) -> Task<f64> {
    let d = generate_blobs(classes, 30, model.input_dim, 3.0, seed).unwrap();
    Task::new(d, model).unwrap()
}

fn fd_grad(t: &Task<f64>, w: &DVector<f64>) -> DVector<f64> {
    let h = 1e-6;
    DVector::from_fn(w.len(), |i, _| {
        let mut up = w.clone();
        let mut down = w.clone();
        up[i] += h;
        down[i] -= h;
        (t.loss(&up) - t.loss(&down)) / (2.0 * h)
    })
}

#[test]
fn blobs_two_class_example() {
    let d = generate_blobs::<f64>(2, 4, 1, 10.0, 0).unwrap();
    assert_eq!(d.len(), 4);
    assert_eq!(d.labels(), &[0, 0, 1, 1]);
    let c = blob_centers::<f64>(2, 1, 10.0);
    assert!((c[0][0] - c[1][0]).abs() >= 10.0 - 1e-12);
}

#[test]
fn blobs_three_class_example() {
    let d = generate_blobs::<f64>(3, 9, 2, 6.0, 1).unwrap();
    assert_eq!(d.len(), 9);
    for c in 0..3 {
        assert_eq!(d.labels().iter().filter(|&&y| y == c).count(), 3);
    }
}

#[test]
fn blob_remainder_goes_to_last_class() {
    let d = generate_blobs::<f64>(3, 11, 2, 6.0, 1).unwrap();
    assert_eq!(d.labels().iter().filter(|&&y| y == 2).count(), 5);
}

#[test]
fn blob_centers_are_separated() {
    for &(k, p) in &[(2, 1), (3, 1), (3, 2), (4, 2), (4, 3), (6, 2), (5, 8)] {
        let c = blob_centers::<f64>(k, p, 4.0);
        for i in 0..k {
            for j in (i + 1)..k {
                assert!((&c[i] - &c[j]).norm() >= 4.0 - 1e-9, "K={k} p={p}");
            }
        }
    }
}

#[test]
fn blobs_are_deterministic_and_regenerable() {
    let a = generate_blobs::<f64>(3, 60, 2, 5.0, 42).unwrap();
    let b = generate_blobs::<f64>(3, 60, 2, 5.0, 42).unwrap();
    assert_eq!(a, b);
    let c = corrupt_labels(&a, 0.3, 9).unwrap();
    let sub = select_classes(&c, &[0, 2]).unwrap();
    let both = concat(&sub, &a).unwrap();
    let again: Dataset<f64> = both.provenance().regenerate().unwrap();
    assert_eq!(again, both);
}

#[test]
fn blob_preconditions() {
    assert!(generate_blobs::<f64>(1, 4, 1, 1.0, 0).is_err());
    assert!(generate_blobs::<f64>(3, 2, 1, 1.0, 0).is_err());
    assert!(generate_blobs::<f64>(2, 4, 1, 0.0, 0).is_err());
}

#[test]
fn corrupt_zero_is_identity_on_contents() {
    let d = generate_blobs::<f64>(2, 40, 2, 3.0, 3).unwrap();
    let c = corrupt_labels(&d, 0.0, 1).unwrap();
    assert_eq!(c.labels(), d.labels());
    assert_eq!(c.inputs(), d.inputs());
    assert!(corrupt_labels(&d, 1.5, 1).is_err());
}

#[test]
fn corrupt_half_of_ten_touches_five_rows() {
    // With K = 1 000 000 classes a resampled label almost never collides
    // with the original, so disagreements count resampled rows.
    let inputs = DMatrix::zeros(10, 1);
    let d = Dataset::<f64>::new(
        inputs,
        vec![0; 10],
        1_000_000,
        Provenance::External { source: "t".into() },
    )
    .unwrap();
    let c = corrupt_labels(&d, 0.5, 4).unwrap();
    let changed = c.labels().iter().filter(|&&y| y != 0).count();
    assert_eq!(changed, 5);
}

#[test]
fn corrupt_all_binary_disagreement_is_binomial() {
    let d = generate_blobs::<f64>(2, 1000, 1, 3.0, 0).unwrap();
    let c = corrupt_labels(&d, 1.0, 11).unwrap();
    let disagree = d.labels().iter().zip(c.labels()).filter(|(a, b)| a != b).count() as f64;
    // Binomial(1000, 1/2): mean 500, sd ≈ 15.8.
    assert!((disagree - 500.0).abs() < 4.0 * (1000.0f64 * 0.25).sqrt(), "{disagree}");
}

#[test]
fn concat_sizes_and_errors() {
    let a = generate_blobs::<f64>(2, 3, 2, 3.0, 1).unwrap();
    let b = generate_blobs::<f64>(2, 5, 2, 3.0, 2).unwrap();
    let ab = concat(&a, &b).unwrap();
    assert_eq!(ab.len(), 8);
    assert_eq!(&ab.labels()[..3], a.labels());
    let e = Dataset::empty(2, 2);
    let ae = concat(&a, &e).unwrap();
    assert_eq!(ae.inputs(), a.inputs());
    assert_eq!(ae.labels(), a.labels());
    let c = generate_blobs::<f64>(2, 4, 3, 3.0, 2).unwrap();
    assert!(matches!(concat(&a, &c), Err(Error::Contract(_))));
}

#[test]
fn uniform_posterior_at_zero_weights() {
    let t = blob_task(2, ModelSpec::logistic(2, 2, 0.0), 0);
    let w = DVector::zeros(t.param_count());
    assert_abs_diff_eq!(t.loss(&w), 2f64.ln(), epsilon = 1e-14);
    let t5 = blob_task(5, ModelSpec::logistic(2, 5, 0.0), 0);
    let w5 = DVector::zeros(t5.param_count());
    assert_abs_diff_eq!(t5.loss(&w5), 5f64.ln(), epsilon = 1e-14);
    assert_abs_diff_eq!(t5.loss(&w5), 1.6094, epsilon = 1e-4);
}

#[test]
fn softmax_does_not_overflow() {
    let t = blob_task(3, ModelSpec::logistic(2, 3, 0.0), 0);
    let w = DVector::from_element(t.param_count(), 400.0);
    assert!(t.loss(&w).is_finite());
    assert!(t.grad_loss(&w).iter().all(|g| g.is_finite()));
}

#[test]
fn per_sample_mean_plus_decay_is_gradient() {
    for model in [ModelSpec::logistic(2, 3, 0.05), ModelSpec::mlp(2, 4, 3, 0.05)] {
        let t = blob_task(3, model, 5);
        let w = random_weights(t.param_count(), 0.7, 8);
        let rows = t.per_sample_grads(&w);
        let mean = rows.row_mean().transpose() + &w * 0.05;
        assert!((mean - t.grad_loss(&w)).amax() < 1e-12);
    }
}

#[test]
fn duplicated_dataset_has_same_loss() {
    let t = blob_task(3, ModelSpec::mlp(2, 3, 3, 0.01), 2);
    let dd = concat(t.data(), t.data()).unwrap();
    let t2 = Task::new(dd, *t.model()).unwrap();
    let w = random_weights(t.param_count(), 0.5, 1);
    assert_abs_diff_eq!(t.loss(&w), t2.loss(&w), epsilon = 1e-12);
}

#[test]
fn task_validation() {
    let d = generate_blobs::<f64>(3, 9, 2, 3.0, 0).unwrap();
    assert!(Task::new(d.clone(), ModelSpec::logistic(3, 3, 0.0)).is_err());
    assert!(Task::new(d.clone(), ModelSpec::logistic(2, 2, 0.0)).is_err());
    assert!(Task::new(Dataset::<f64>::empty(2, 3), ModelSpec::logistic(2, 3, 0.0)).is_err());
    let t = Task::new(d, ModelSpec::logistic(2, 3, 0.0)).unwrap();
    assert!(loss(&t, &DVector::zeros(4)).is_err());
}

#[test]
fn dataset_csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = corrupt_labels(&generate_blobs::<f64>(3, 12, 2, 3.0, 7).unwrap(), 0.25, 1).unwrap();
    let csv = dir.path().join("d.csv");
    let side = dir.path().join("d.json");
    d.write_csv(&csv).unwrap();
    d.write_sidecar(&side).unwrap();
    let header = std::fs::read_to_string(&csv).unwrap();
    assert!(header.starts_with("x0,x1,y\n"));
    let back = Dataset::<f64>::read_csv(&csv, &side).unwrap();
    assert_eq!(back, d);
}

#[test]
fn mlp_loss_is_smooth_with_softplus() {
    let mut model = ModelSpec::mlp(2, 3, 2, 0.0);
    model.family = ModelFamily::Mlp {
        hidden: 3,
        activation: Activation::Softplus,
    };
    let t = blob_task(2, model, 3);
    let w = random_weights(t.param_count(), 0.8, 2);
    let fd = fd_grad(&t, &w);
    let g = t.grad_loss(&w);
    assert!((fd - &g).amax() / g.amax().max(1.0) < 1e-5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn gradient_matches_central_differences(seed in 0u64..1000, mlp in any::<bool>(), gamma in 0.0f64..0.2) {
        let model = if mlp { ModelSpec::mlp(2, 4, 3, gamma) } else { ModelSpec::logistic(2, 3, gamma) };
        let t = blob_task(3, model, seed);
        let w = random_weights(t.param_count(), 0.6, seed + 1);
        let g = t.grad_loss(&w);
        let fd = fd_grad(&t, &w);
        let rel = (&fd - &g).norm() / g.norm().max(1e-3);
        prop_assert!(rel < 1e-5, "relative error {rel}");
        prop_assert!(t.loss(&w) >= 0.0);
    }

    #[test]
    fn duplicate_concat_preserves_loss(seed in 0u64..1000) {
        let t = blob_task(2, ModelSpec::logistic(2, 2, 0.1), seed);
        let t2 = Task::new(concat(t.data(), t.data()).unwrap(), *t.model()).unwrap();
        let w = random_weights(t.param_count(), 1.0, seed);
        prop_assert!((t.loss(&w) - t2.loss(&w)).abs() < 1e-12);
    }

    #[test]
    fn corruption_rate_matches_expectation(seed in 0u64..200, rho in 0.1f64..1.0) {
        let d = generate_blobs::<f64>(4, 2000, 2, 3.0, seed).unwrap();
        let c = corrupt_labels(&d, rho, seed + 7).unwrap();
        let frac = d.labels().iter().zip(c.labels()).filter(|(a, b)| a != b).count() as f64 / 2000.0;
        let expect = (rho * 2000.0).floor() / 2000.0 * 0.75;
        // binomial sd at worst ≈ sqrt(2000·0.75·0.25)/2000 ≈ 0.0097
        prop_assert!((frac - expect).abs() < 0.045);
    }
}
