use modelzoo::nn::{grad_check_report, init_network, HeadSpec, LayerSpec, Mode, NetworkSpec};
use modelzoo::seed;
use modelzoo::Tensor;
use rand::Rng;
use rand_distr::StandardNormal;

/// Moves dense and head biases off zero so ReLU pre-activations do not sit
/// exactly on the kink. Conv biases stay at zero: a bias shared by a whole
/// channel that reaches batch-norm through an all-active ReLU has an exactly
/// zero gradient, which finite differences cannot resolve.
fn jitter_biases(net: &mut modelzoo::MultiHeadNetwork, rng: &mut seed::Rng) {
    let trunk = net.spec().trunk.clone();
    let names: Vec<String> = net.param_info().into_iter().map(|p| p.name).collect();
    for (p, name) in net.params_mut().into_iter().zip(names) {
        let parts: Vec<&str> = name.split('.').collect();
        let dense = match parts[..] {
            ["head", _, "bias"] => true,
            ["trunk", i, "bias"] => matches!(trunk[i.parse::<usize>().unwrap()], LayerSpec::Dense { .. }),
            _ => false,
        };
        if dense {
            p.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-0.1..0.1));
        }
    }
}

fn random_batch(shape: &[usize], rng: &mut seed::Rng) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()).unwrap()
}

#[test]
fn dense_nets_match_finite_differences() {
    for s in 0..5u64 {
        let mut rng = seed::rng(100 + s);
        let dim = rng.random_range(2..6);
        let h1 = rng.random_range(3..8);
        let h2 = rng.random_range(3..8);
        let classes = rng.random_range(2..5);
        let spec = NetworkSpec::mlp(dim, &[h1, h2], 0.3);
        let mut net = init_network(&spec, &[HeadSpec::new(0, classes), HeadSpec::new(3, 2)], s).unwrap();
        jitter_biases(&mut net, &mut rng);
        let x = random_batch(&[8, dim], &mut rng);
        let labels: Vec<usize> = (0..8).map(|i| i % classes).collect();
        let r = grad_check_report(&net, 0, &x, &labels, 1e-5, Mode::Deterministic).unwrap();
        assert!(r.max_rel_error < 1e-4, "seed {s}: {r:?}");
    }
}

#[test]
fn dense_net_with_batch_norm_in_both_modes() {
    let spec = NetworkSpec {
        input_shape: vec![4],
        trunk: vec![
            LayerSpec::Dense { units: 6 },
            LayerSpec::Relu,
            LayerSpec::BatchNorm,
            LayerSpec::Dense { units: 5 },
        ],
    };
    let mut net = init_network(&spec, &[HeadSpec::new(0, 3)], 9).unwrap();
    let mut rng = seed::rng(9);
    jitter_biases(&mut net, &mut rng);
    let x = random_batch(&[8, 4], &mut rng);
    let labels = [0, 1, 2, 0, 1, 2, 0, 1];
    for mode in [Mode::Deterministic, Mode::Eval] {
        let r = grad_check_report(&net, 0, &x, &labels, 1e-5, mode).unwrap();
        assert!(r.max_rel_error < 1e-4, "{mode:?}: {r:?}");
    }
}

fn conv_spec(channels: usize, side: usize, filters: usize, batch_norm: bool) -> NetworkSpec {
    let mut trunk = vec![
        LayerSpec::Conv2d {
            kernel: 3,
            filters,
            stride: 1,
        },
        LayerSpec::MaxPool2d { window: 2 },
        LayerSpec::Relu,
    ];
    if batch_norm {
        trunk.push(LayerSpec::BatchNorm);
    }
    trunk.extend([
        LayerSpec::Conv2d {
            kernel: 3,
            filters: 2,
            stride: 1,
        },
        LayerSpec::Flatten,
        LayerSpec::Dropout { p: 0.2 },
        LayerSpec::Dense { units: 4 },
    ]);
    NetworkSpec {
        input_shape: vec![channels, side, side],
        trunk,
    }
}

#[test]
fn conv_pool_dense_nets_match_finite_differences() {
    for s in 0..3u64 {
        let mut rng = seed::rng(200 + s);
        let c = rng.random_range(1..3);
        let filters = rng.random_range(2..4);
        let mut net = init_network(&conv_spec(c, 6, filters, false), &[HeadSpec::new(1, 3)], s).unwrap();
        jitter_biases(&mut net, &mut rng);
        let x = random_batch(&[4, c, 6, 6], &mut rng);
        let r = grad_check_report(&net, 1, &x, &[0, 1, 2, 1], 1e-5, Mode::Deterministic).unwrap();
        assert!(r.max_rel_error < 1e-4, "seed {s}: {r:?}");
    }
}

#[test]
fn conv_pool_bn_dense_nets_match_finite_differences() {
    for s in 0..3u64 {
        let mut rng = seed::rng(300 + s);
        let c = rng.random_range(1..3);
        let filters = rng.random_range(2..4);
        let mut net = init_network(&conv_spec(c, 6, filters, true), &[HeadSpec::new(0, 3)], s).unwrap();
        jitter_biases(&mut net, &mut rng);
        let x = random_batch(&[8, c, 6, 6], &mut rng);
        let labels = [0, 1, 2, 1, 0, 2, 2, 1];
        let r = grad_check_report(&net, 0, &x, &labels, 1e-5, Mode::Deterministic).unwrap();
        assert!(r.max_rel_error < 1e-4, "seed {s}: {r:?}");
    }
}

#[test]
fn small_cnn_stack_matches_finite_differences() {
    let spec = NetworkSpec::small_cnn([1, 8, 8], 2, 0.2);
    let mut net = init_network(&spec, &[HeadSpec::new(0, 2)], 5).unwrap();
    let mut rng = seed::rng(5);
    jitter_biases(&mut net, &mut rng);
    let x = random_batch(&[8, 1, 8, 8], &mut rng);
    let r = grad_check_report(&net, 0, &x, &[0, 1, 1, 0, 1, 0, 0, 1], 1e-5, Mode::Deterministic).unwrap();
    assert!(r.max_rel_error < 1e-4, "{r:?}");
}

#[test]
fn zero_input_bias_gradients() {
    let spec = NetworkSpec::mlp(3, &[4], 0.0);
    let mut net = init_network(&spec, &[HeadSpec::new(0, 2)], 1).unwrap();
    jitter_biases(&mut net, &mut seed::rng(1));
    let x = Tensor::zeros(&[5, 3]);
    let r = grad_check_report(&net, 0, &x, &[0, 1, 0, 1, 1], 1e-5, Mode::Deterministic).unwrap();
    // with zero input the loss is affine in the biases, so central
    // differences are exact up to rounding
    let (logits, cache) = net.forward(0, &x, Mode::Deterministic).unwrap();
    let (_, d) = modelzoo::nn::softmax_cross_entropy(&logits, &[0, 1, 0, 1, 1]).unwrap();
    let g = net.backward(&cache, &d, 0).unwrap();
    let info = net.param_info();
    for (p, meta) in info.iter().enumerate() {
        if !meta.name.ends_with("bias") {
            continue;
        }
        for i in 0..g.tensors[p].len() {
            let mut probe = net.clone();
            let eps = 1e-5;
            let base = probe.params()[p].data()[i];
            probe.params_mut()[p].data_mut()[i] = base + eps;
            let plus = loss(&probe, &x);
            probe.params_mut()[p].data_mut()[i] = base - eps;
            let minus = loss(&probe, &x);
            let numeric = (plus - minus) / (2.0 * eps);
            assert!((numeric - g.tensors[p].data()[i]).abs() < 1e-8, "{} [{i}]", meta.name);
        }
    }
    assert!(r.max_rel_error < 1e-4);
}

fn loss(net: &modelzoo::MultiHeadNetwork, x: &Tensor) -> f64 {
    let logits = net.forward(0, x, Mode::Deterministic).unwrap().0;
    modelzoo::nn::softmax_cross_entropy(&logits, &[0, 1, 0, 1, 1]).unwrap().0
}
