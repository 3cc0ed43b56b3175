//! Fixtures shared by the benchmarks.

use modelzoo::nn::{init_network, HeadSpec, NetworkSpec};
use modelzoo::seed;
use modelzoo::tasks::{synthetic_gaussian_tasks, SyntheticConfig};
use modelzoo::zoo::{run_continual, Learner, Seeds};
use modelzoo::{AugmentConfig, MultiHeadNetwork, OptimConfig, TaskStream, Tensor, ZooConfig, ZooState};

/// Deterministic pseudo-image batch in `[0, 1)`.
pub fn image_batch(n: usize, side: usize) -> Tensor {
    let len = n * side * side;
    let data = (0..len).map(|i| ((i as f64) * 0.618_034).fract()).collect();
    Tensor::new(vec![n, 1, side, side], data).unwrap()
}

pub fn small_cnn(filters: usize) -> MultiHeadNetwork {
    let spec = NetworkSpec::small_cnn([1, 28, 28], filters, 0.2);
    init_network(&spec, &[HeadSpec::new(0, 2)], 0).unwrap()
}

/// A trained zoo over a five-task synthetic stream.
pub fn synthetic_zoo() -> (TaskStream, ZooState) {
    let tasks = synthetic_gaussian_tasks(&SyntheticConfig {
        angles_deg: vec![0.0, 30.0, 60.0, 90.0, 120.0],
        seed: seed::derive(0, &[]),
        ..Default::default()
    })
    .unwrap();
    let learner = Learner {
        network: NetworkSpec::mlp(2, &[32], 0.0),
        optim: OptimConfig {
            epochs: 2,
            ..Default::default()
        },
        augment: AugmentConfig::default(),
    };
    let (_, zoo) = run_continual(&tasks, &ZooConfig::default(), &learner, &Seeds::all(0)).unwrap();
    (tasks, zoo)
}
