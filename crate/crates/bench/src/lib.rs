//! Shared fixtures for the engine benchmarks.

use prunekit_core::{Network, Tensor};

/// The default CLI architecture on 1x28x28 inputs with 10 classes.
pub fn cnn() -> Network {
    let mut net = Network::small_cnn([1, 28, 28], [16, 16], 64, 10).expect("valid architecture");
    net.init_kaiming(7);
    net
}

/// A 784-256-128-10 perceptron.
pub fn mlp() -> Network {
    let mut net = Network::mlp(784, &[256, 128], 10).expect("valid architecture");
    net.init_kaiming(7);
    net
}

/// A deterministic input matching the network's input shape.
pub fn input(net: &Network) -> Tensor {
    let shape = net.input_shape().to_vec();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|i| ((i * 37 % 101) as f64 / 50.0) - 1.0).collect();
    Tensor::new(shape, data).expect("shape matches data")
}
