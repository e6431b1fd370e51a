use serde::{Deserialize, Serialize};

use super::{check_trace, AttributionMap, LayerAttribution, Method};
use crate::error::{Error, Result};
use crate::net::ops::{self, Taps};
use crate::net::{ForwardTrace, LayerSpec, Network, Params};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LrpRule {
    /// `R_i = Σ_j a_i·w_ij / (z_j + ε·sign(z_j)) · R_j`.
    #[default]
    Epsilon,
    /// `R_i = Σ_j a_i·w⁺_ij / Σ_i a_i·w⁺_ij · R_j`; meant for non-negative
    /// activations.
    ZPlus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LrpConfig {
    pub epsilon: f64,
    pub dense_rule: LrpRule,
    pub conv_rule: LrpRule,
}

impl Default for LrpConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-6,
            dense_rule: LrpRule::Epsilon,
            conv_rule: LrpRule::Epsilon,
        }
    }
}

/// Walks relevance from the output back to the input. `rule` redistributes
/// over dense and conv layers; relu, flatten and softmax-output pass it
/// through unchanged and maxpool routes it to the winning position (first
/// in row-major order on ties).
pub(super) fn propagate(
    network: &Network,
    trace: &ForwardTrace,
    method: Method,
    target: usize,
    initial: f64,
    mut rule: impl FnMut(&LayerSpec, &Taps, &Params, &[f64], &[f64], &[f64]) -> Vec<f64>,
) -> Result<AttributionMap> {
    let n = network.layers().len();
    let mut relevance = vec![0.0; network.class_count()];
    relevance[target] = initial;
    let mut sums = vec![0.0; n + 1];
    sums[n] = initial;
    let mut layers = Vec::new();
    for i in (0..n).rev() {
        let layer = &network.layers()[i];
        let a_in = trace.inputs[i].data();
        let out_shape = network.output_shape(i);
        if layer.spec.is_prunable() {
            layers.push(LayerAttribution {
                layer: i,
                shape: out_shape.to_vec(),
                scores: relevance.clone(),
            });
        }
        relevance = match layer.spec {
            LayerSpec::Dense { .. } | LayerSpec::Conv2d { .. } => {
                let taps = Taps::new(&layer.spec, trace.inputs[i].shape(), out_shape).expect("parametric layer");
                let params = layer.params.as_ref().expect("parametric layer");
                rule(&layer.spec, &taps, params, a_in, trace.outputs[i].data(), &relevance)
            }
            LayerSpec::Relu | LayerSpec::Flatten | LayerSpec::SoftmaxOutput => relevance,
            LayerSpec::MaxPool2d { window, stride } => {
                let mut r_in = vec![0.0; a_in.len()];
                let winners = ops::maxpool_argmax(trace.inputs[i].shape(), out_shape, window, stride, a_in);
                for (o, idx) in winners.into_iter().enumerate() {
                    r_in[idx] += relevance[o];
                }
                r_in
            }
        };
        sums[i] = relevance.iter().sum();
    }
    layers.reverse();
    Ok(AttributionMap {
        method,
        target_class: target,
        output_score: trace.logits.data()[target],
        layers,
        input: relevance,
        relevance_sums: sums,
        baseline_score: None,
    })
}

/// Layer-wise relevance propagation of the target logit.
///
/// Output relevance is one-hot with `R_target = logit_target`. Dense and conv
/// layers use the rule chosen in `config`; `z_j` includes the bias, so
/// biased networks leak the bias share of relevance.
pub fn lrp(network: &Network, trace: &ForwardTrace, target: usize, config: &LrpConfig) -> Result<AttributionMap> {
    check_trace(network, trace, target)?;
    if config.epsilon.is_nan() || config.epsilon <= 0.0 {
        return Err(Error::InvalidConfig("lrp epsilon must be positive".into()));
    }
    if trace.mask.is_some() {
        return Err(Error::UnsupportedLayer {
            method: "lrp",
            kind: "masked trace".into(),
        });
    }
    let eps = config.epsilon;
    let start = trace.logits.data()[target];
    propagate(network, trace, Method::Lrp, target, start, |spec, taps, params, a, z, r| {
        let rule = match spec {
            LayerSpec::Conv2d { .. } => config.conv_rule,
            _ => config.dense_rule,
        };
        let w = params.weight.data();
        match rule {
            LrpRule::Epsilon => {
                let s: Vec<f64> = z
                    .iter()
                    .zip(r)
                    .map(|(&z, &r)| r / (z + if z >= 0.0 { eps } else { -eps }))
                    .collect();
                let mut c = vec![0.0; a.len()];
                taps.for_each(|j, i, k| c[i] += w[k] * s[j]);
                a.iter().zip(c).map(|(a, c)| a * c).collect()
            }
            LrpRule::ZPlus => {
                let mut zp = vec![0.0; z.len()];
                taps.for_each(|j, i, k| zp[j] += a[i] * w[k].max(0.0));
                let s: Vec<f64> = zp
                    .iter()
                    .zip(r)
                    .map(|(&zp, &r)| if zp > 0.0 { r / zp } else { 0.0 })
                    .collect();
                let mut c = vec![0.0; a.len()];
                taps.for_each(|j, i, k| c[i] += w[k].max(0.0) * s[j]);
                a.iter().zip(c).map(|(a, c)| a * c).collect()
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn single_dense(weights: Vec<f64>) -> Network {
        let n = weights.len();
        let mut net = Network::new(vec![n], vec![LayerSpec::Dense { in_units: n, out_units: 1 }], 1).unwrap();
        net.set_params(0, weights, vec![0.0]).unwrap();
        net
    }

    #[test]
    fn epsilon_rule_by_hand() {
        let net = single_dense(vec![1.0, 1.0]);
        let trace = net.forward(&Tensor::vector(vec![2.0, 3.0]), true).unwrap();
        let map = lrp(&net, &trace, 0, &LrpConfig::default()).unwrap();
        // z = 5, R_out = 5, R_i = a_i * 5 / (5 + 1e-6)
        assert!((map.input[0] - 2.0).abs() < 1e-5);
        assert!((map.input[1] - 3.0).abs() < 1e-5);
        assert_eq!(map.layers[0].scores, vec![5.0]);
        assert_eq!(map.relevance_sums.len(), 2);
    }

    #[test]
    fn zero_feature_gets_zero_relevance() {
        let net = single_dense(vec![0.7, -1.3, 2.0]);
        let trace = net.forward(&Tensor::vector(vec![1.0, 0.0, 0.5]), true).unwrap();
        let map = lrp(&net, &trace, 0, &LrpConfig::default()).unwrap();
        assert_eq!(map.input[1], 0.0);
    }

    #[test]
    fn zplus_conserves_on_positive_inputs() {
        let mut net = Network::mlp(4, &[6], 3).unwrap();
        net.init_kaiming(4);
        let trace = net.forward(&Tensor::vector(vec![0.2, 1.0, 0.4, 0.9]), true).unwrap();
        let cfg = LrpConfig {
            dense_rule: LrpRule::ZPlus,
            ..LrpConfig::default()
        };
        let t = trace.predicted_class();
        let map = lrp(&net, &trace, t, &cfg).unwrap();
        assert!(map.input.iter().all(|&r| r >= 0.0 || trace.logits.data()[t] < 0.0));
        assert!(map.is_finite());
    }

    #[test]
    fn rejects_unrecorded_trace() {
        let net = single_dense(vec![1.0]);
        let trace = net.forward(&Tensor::vector(vec![1.0]), false).unwrap();
        assert!(matches!(lrp(&net, &trace, 0, &LrpConfig::default()), Err(Error::MissingTrace)));
    }
}
