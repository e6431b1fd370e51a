#![allow(dead_code)]

pub mod cli;

use prunekit_core::harness::{SweepConfig, SweepProvenance};
use prunekit_core::net::{LayerSpec, Network};
use prunekit_core::Tensor;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// Kaiming-initialized, bias-free network: an MLP for even seeds and a
/// small conv net (conv, relu, optional max-pool, dense head) for odd ones.
pub fn random_network(seed: u64) -> Network {
    let mut rng = StdRng::seed_from_u64(seed);
    let classes = rng.random_range(2..=4);
    let mut net = if seed % 2 == 0 {
        let input = rng.random_range(3..=7);
        let depth = rng.random_range(1..=2);
        let hidden: Vec<usize> = (0..depth).map(|_| rng.random_range(3..=8)).collect();
        Network::mlp(input, &hidden, classes).unwrap()
    } else {
        let c = rng.random_range(1..=2);
        let (h, w) = (rng.random_range(5..=8), rng.random_range(5..=8));
        let out = rng.random_range(2..=4);
        let conv = if rng.random_bool(0.5) {
            LayerSpec::Conv2d { in_channels: c, out_channels: out, kernel_h: 3, kernel_w: 3, stride: 1, padding: 1 }
        } else {
            LayerSpec::Conv2d { in_channels: c, out_channels: out, kernel_h: 2, kernel_w: 3, stride: 2, padding: 0 }
        };
        let mut specs = vec![conv, LayerSpec::Relu];
        if rng.random_bool(0.5) {
            specs.push(LayerSpec::MaxPool2d { window: 2, stride: 2 });
        }
        let mut shape = vec![c, h, w];
        for s in &specs {
            shape = s.output_shape(&shape).unwrap();
        }
        let flat: usize = shape.iter().product();
        let hidden = rng.random_range(3..=6);
        specs.extend([
            LayerSpec::Flatten,
            LayerSpec::Dense { in_units: flat, out_units: hidden },
            LayerSpec::Relu,
            LayerSpec::Dense { in_units: hidden, out_units: classes },
        ]);
        Network::new(vec![c, h, w], specs, classes).unwrap()
    };
    net.init_kaiming(seed);
    net
}

/// Same network with every bias drawn from `U(-0.1, 0.1)`.
pub fn with_random_biases(mut net: Network, seed: u64) -> Network {
    let mut rng = StdRng::seed_from_u64(seed ^ 0xb1a5);
    for layer in net.prunable_layers() {
        for b in net.params_mut(layer).unwrap().bias.data_mut() {
            *b = rng.random_range(-0.1..0.1);
        }
    }
    net
}

pub fn random_input(net: &Network, rng: &mut StdRng) -> Tensor {
    let shape = net.input_shape().to_vec();
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

pub fn provenance() -> SweepProvenance {
    SweepProvenance {
        config: SweepConfig::default(),
        checkpoint_digest: None,
        total_units: 0,
        total_macs: 0,
        extra: Default::default(),
    }
}
