use consol_lab::nn::{backward, forward, forward_raw, init_params, softmax, NetworkParams, NetworkSpec};
use consol_lab::verify::gradients::{check_network, FD_TOLERANCE};
use consol_lab::verify::reference::ReferenceNet;
use consol_lab::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_obs(spec: &NetworkSpec, rng: &mut ChaCha8Rng) -> Vec<f32> {
    (0..spec.input_len())
        .map(|_| if rng.random_bool(0.2) { 1.0 } else { 0.0 })
        .collect()
}

fn with_random_biases(mut params: NetworkParams, rng: &mut ChaCha8Rng) -> NetworkParams {
    for layer in &mut params.layers {
        for b in layer.bias.data_mut() {
            *b = rng.random_range(-0.2..0.2);
        }
    }
    params
}

/// `‖a - b‖ / ‖b‖`; individual outputs near zero carry f32 rounding far
/// above 1e-6 of their own size, so vectors are compared as a whole.
fn normwise_error(engine: &[f32], reference: &[f64]) -> f64 {
    let num: f64 = engine.iter().zip(reference).map(|(a, b)| (*a as f64 - b).powi(2)).sum();
    let den: f64 = reference.iter().map(|b| b * b).sum();
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

#[test]
fn engine_matches_reference_on_random_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let spec = NetworkSpec::desk(6);
    let mut worst = 0.0f64;
    let mut worst_abs = 0.0f64;
    for case in 0..100 {
        let params = with_random_biases(init_params(&spec, case).unwrap(), &mut rng);
        let obs = random_obs(&spec, &mut rng);
        let engine = forward_raw(&params, &obs, &[]).unwrap();
        let obs64: Vec<f64> = obs.iter().map(|&v| v as f64).collect();
        let reference = ReferenceNet::from_params(&params).eval(&obs64, &[]);
        worst = worst
            .max(normwise_error(engine.q(), &reference.q))
            .max(normwise_error(engine.features(), &reference.features));
        for (a, b) in engine.q().iter().zip(&reference.q) {
            worst_abs = worst_abs.max((*a as f64 - b).abs());
        }
    }
    assert!(worst <= 1e-6, "worst relative error {worst:e}");
    assert!(worst_abs <= 1e-5, "worst absolute error {worst_abs:e}");
}

#[test]
fn zero_params_give_zero_outputs() {
    let spec = NetworkSpec::desk(6);
    let params = NetworkParams::zeros(&spec).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let obs = Tensor::new(spec.input.to_vec(), random_obs(&spec, &mut rng)).unwrap();
    let out = forward(&params, &obs).unwrap();
    assert!(out.q.data().iter().all(|&v| v == 0.0));
    assert_eq!(out.features.len(), 64);
    assert!(out.features.data().iter().all(|&v| v == 0.0));
}

#[test]
fn forward_is_pure_and_features_non_negative() {
    let spec = NetworkSpec::desk(4);
    let params = init_params(&spec, 42).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let obs = Tensor::new(spec.input.to_vec(), random_obs(&spec, &mut rng)).unwrap();
        let a = forward(&params, &obs).unwrap();
        let b = forward(&params, &obs).unwrap();
        assert!(a.q.bit_eq(&b.q) && a.features.bit_eq(&b.features));
        assert!(a.features.data().iter().all(|&v| v >= 0.0));
        assert_eq!(a.q.len(), 4);
    }
}

#[test]
fn wrong_observation_shape_is_rejected() {
    let params = init_params(&NetworkSpec::desk(6), 0).unwrap();
    assert!(forward(&params, &Tensor::zeros(&[10, 10, 4])).is_err());
}

#[test]
fn zero_upstream_gradient_gives_zero_gradients() {
    let spec = NetworkSpec::desk(6);
    let params = init_params(&spec, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cache = forward_raw(&params, &random_obs(&spec, &mut rng), &[]).unwrap();
    let grads = backward(&params, &cache, &[0.0; 6], Some(&[0.0; 64])).unwrap();
    assert!(grads.is_zero());
}

#[test]
fn backward_is_linear_in_the_upstream_gradient() {
    let spec = NetworkSpec::desk(3);
    let params = init_params(&spec, 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cache = forward_raw(&params, &random_obs(&spec, &mut rng), &[]).unwrap();
    let dq1: Vec<f32> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
    let dq2: Vec<f32> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
    let df: Vec<f32> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
    let g1 = backward(&params, &cache, &dq1, None).unwrap();
    let g2 = backward(&params, &cache, &dq2, Some(&df)).unwrap();
    let sum: Vec<f32> = dq1.iter().zip(&dq2).map(|(a, b)| a + b).collect();
    let g12 = backward(&params, &cache, &sum, Some(&df)).unwrap();
    let mut added = g1.clone();
    added.add_assign(&g2);
    assert!(g12.max_abs_diff(&added) < 1e-5);
}

#[test]
fn stale_cache_is_rejected() {
    let a = init_params(&NetworkSpec::desk(3), 0).unwrap();
    let b = init_params(&NetworkSpec::desk(6), 0).unwrap();
    let cache = forward_raw(&a, &vec![0.0; 800], &[]).unwrap();
    assert!(backward(&b, &cache, &[0.0; 6], None).is_err());
}

#[test]
fn finite_differences_on_small_specs() {
    let mut lateral = NetworkSpec::reduced(3);
    lateral.lateral_width = 2;
    for (name, spec) in [
        ("reduced", NetworkSpec::reduced(3)),
        ("padded stride 2", NetworkSpec::reduced_strided(2)),
        ("lateral", lateral),
    ] {
        let stats = check_network(&spec, 20, usize::MAX, 9).unwrap();
        assert!(stats.passed(), "{name}: {stats:?}");
        assert!(stats.max_rel_error <= FD_TOLERANCE);
    }
}

#[test]
fn finite_differences_on_desk_spec_sampled() {
    let stats = check_network(&NetworkSpec::desk(6).with_lateral(64), 20, 15, 10).unwrap();
    assert!(stats.passed(), "{stats:?}");
}

#[test]
fn tempered_softmax_matches_high_precision_value() {
    let p = softmax(&[10.0, 0.0], 10.0).unwrap();
    let expected = 1.0 / (1.0 + (-1.0f64).exp());
    assert!((p[0] as f64 - expected).abs() < 1e-6);
    assert!((p[1] as f64 - (1.0 - expected)).abs() < 1e-6);
}
