use serde::{Deserialize, Serialize};

use super::{AttributionMap, LayerAttribution, Method};
use crate::error::{Error, Result};
use crate::net::Network;
use crate::tensor::Tensor;

/// Reference point of the integration path.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Baseline {
    #[default]
    Zeros,
    /// Mean training sample; supply it with [`IgConfig::with_mean`].
    DatasetMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IgConfig {
    pub steps: usize,
    pub baseline: Baseline,
    #[serde(skip)]
    mean: Option<Tensor>,
}

impl Default for IgConfig {
    fn default() -> Self {
        Self {
            steps: 128,
            baseline: Baseline::Zeros,
            mean: None,
        }
    }
}

impl IgConfig {
    pub fn with_steps(steps: usize) -> Self {
        Self {
            steps,
            ..Self::default()
        }
    }

    /// Sets the tensor used by [`Baseline::DatasetMean`].
    pub fn with_mean(mut self, mean: Tensor) -> Self {
        self.mean = Some(mean);
        self
    }

    fn baseline_for(&self, input: &Tensor) -> Result<Tensor> {
        match self.baseline {
            Baseline::Zeros => Ok(Tensor::zeros(input.shape())),
            Baseline::DatasetMean => self
                .mean
                .clone()
                .ok_or_else(|| Error::InvalidConfig("dataset-mean baseline needs a mean sample".into())),
        }
    }
}

/// Integrated gradients of the target logit along the straight path from
/// the baseline `x0` to `x`, using the right Riemann sum
/// `(1/m) Σ_{k=1..m} ∂F/∂v at x0 + (k/m)(x − x0)`.
///
/// Input features get `(x_i − x0_i)·avg_grad_i`. Each prunable layer's
/// output unit `a_j` gets `(a_j(x) − a_j(x0))·avg ∂F/∂a_j` with the
/// gradient taken at the same input-space path points.
pub fn integrated_gradients(
    network: &Network,
    input: &Tensor,
    target: usize,
    config: &IgConfig,
) -> Result<AttributionMap> {
    if config.steps < 1 {
        return Err(Error::InvalidConfig("integrated gradients needs at least one step".into()));
    }
    if target >= network.class_count() {
        return Err(Error::LabelOutOfRange {
            label: target,
            class_count: network.class_count(),
        });
    }
    let baseline = config.baseline_for(input)?;
    if baseline.shape() != input.shape() {
        return Err(Error::ShapeMismatch {
            layer: 0,
            expected: input.shape().to_vec(),
            got: baseline.shape().to_vec(),
        });
    }
    let at_x = network.forward(input, true)?;
    let at_base = network.forward(&baseline, true)?;
    let prunable = network.prunable_layers();

    let mut onehot = vec![0.0; network.class_count()];
    onehot[target] = 1.0;
    let delta: Vec<f64> = input.data().iter().zip(baseline.data()).map(|(x, b)| x - b).collect();
    let mut input_grad = vec![0.0; input.len()];
    let mut layer_grad: Vec<Vec<f64>> = prunable.iter().map(|&l| vec![0.0; at_x.outputs[l].len()]).collect();
    let m = config.steps as f64;
    for k in 1..=config.steps {
        let alpha = k as f64 / m;
        let point: Vec<f64> = baseline.data().iter().zip(&delta).map(|(b, d)| b + alpha * d).collect();
        let trace = network.forward(&Tensor::new(input.shape().to_vec(), point)?, true)?;
        let g = network.backward(&trace, &onehot)?;
        for (acc, v) in input_grad.iter_mut().zip(g.input.data()) {
            *acc += v;
        }
        for (acc, &l) in layer_grad.iter_mut().zip(&prunable) {
            for (a, v) in acc.iter_mut().zip(g.layer_outputs[l].data()) {
                *a += v;
            }
        }
    }
    let layers = prunable
        .iter()
        .zip(layer_grad)
        .map(|(&l, grad)| {
            let hi = at_x.outputs[l].data();
            let lo = at_base.outputs[l].data();
            LayerAttribution {
                layer: l,
                shape: network.output_shape(l).to_vec(),
                scores: grad.iter().zip(hi.iter().zip(lo)).map(|(g, (h, l))| (h - l) * (g / m)).collect(),
            }
        })
        .collect();
    Ok(AttributionMap {
        method: Method::Ig,
        target_class: target,
        output_score: at_x.logits.data()[target],
        layers,
        input: delta.iter().zip(&input_grad).map(|(d, g)| d * (g / m)).collect(),
        relevance_sums: Vec::new(),
        baseline_score: Some(at_base.logits.data()[target]),
    })
}
