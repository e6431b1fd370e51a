use std::collections::BTreeMap;

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layer::{Layer, LayerSpec, Params};
use super::mask::{PruningMask, UnitId};
use super::ops::{self, ConvGeom};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// An ordered stack of layers ending in a `class_count` logit vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
    /// Output shape of each layer.
    shapes: Vec<Vec<usize>>,
    class_count: usize,
    pub metadata: BTreeMap<String, String>,
}

/// Activations of one forward pass.
///
/// When recorded, `inputs[i]` and `outputs[i]` are the input and output of
/// layer `i`, so `outputs[i] == inputs[i + 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub inputs: Vec<Tensor>,
    pub outputs: Vec<Tensor>,
    pub logits: Tensor,
    pub probs: Tensor,
    pub mask: Option<PruningMask>,
}

impl ForwardTrace {
    pub fn is_recorded(&self) -> bool {
        !self.outputs.is_empty()
    }

    pub fn predicted_class(&self) -> usize {
        self.logits.argmax()
    }
}

/// Gradients of `output_grad · logits`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    /// Per layer; `None` for parameter-free layers.
    pub params: Vec<Option<Params>>,
    pub input: Tensor,
    /// Gradient with respect to each layer's output.
    pub layer_outputs: Vec<Tensor>,
}

impl Network {
    /// Builds a network with all parameters zero, checking that consecutive
    /// layer shapes are compatible and that the last layer emits
    /// `class_count` logits.
    pub fn new(input_shape: Vec<usize>, specs: Vec<LayerSpec>, class_count: usize) -> Result<Self> {
        if input_shape.is_empty() || input_shape.contains(&0) {
            return Err(Error::InvalidNetwork(format!("bad input shape {input_shape:?}")));
        }
        if class_count == 0 || specs.is_empty() {
            return Err(Error::InvalidNetwork("need at least one layer and one class".into()));
        }
        let mut shapes = Vec::with_capacity(specs.len());
        let mut current = input_shape.clone();
        for (i, spec) in specs.iter().enumerate() {
            current = spec.output_shape(&current).ok_or_else(|| {
                Error::InvalidNetwork(format!(
                    "layer {i} ({}) cannot take input of shape {current:?}",
                    spec.kind()
                ))
            })?;
            shapes.push(current.clone());
        }
        if current != [class_count] {
            return Err(Error::InvalidNetwork(format!(
                "network emits shape {current:?}, expected [{class_count}]"
            )));
        }
        Ok(Self {
            input_shape,
            layers: specs.into_iter().map(Layer::zeroed).collect(),
            shapes,
            class_count,
            metadata: BTreeMap::new(),
        })
    }

    /// `input → [dense → relu]* → dense`.
    pub fn mlp(input_units: usize, hidden: &[usize], class_count: usize) -> Result<Self> {
        let mut specs = Vec::new();
        let mut prev = input_units;
        for &h in hidden {
            specs.push(LayerSpec::Dense {
                in_units: prev,
                out_units: h,
            });
            specs.push(LayerSpec::Relu);
            prev = h;
        }
        specs.push(LayerSpec::Dense {
            in_units: prev,
            out_units: class_count,
        });
        Self::new(vec![input_units], specs, class_count)
    }

    /// Two `conv3x3(pad 1) → relu → maxpool2` stages, then a hidden dense
    /// layer and the classifier.
    pub fn small_cnn(
        input: [usize; 3],
        channels: [usize; 2],
        hidden: usize,
        class_count: usize,
    ) -> Result<Self> {
        let [c, h, w] = input;
        let conv = |i, o| LayerSpec::Conv2d {
            in_channels: i,
            out_channels: o,
            kernel_h: 3,
            kernel_w: 3,
            stride: 1,
            padding: 1,
        };
        let pool = LayerSpec::MaxPool2d {
            window: 2,
            stride: 2,
        };
        let flat = channels[1] * (h / 2 / 2) * (w / 2 / 2);
        let specs = vec![
            conv(c, channels[0]),
            LayerSpec::Relu,
            pool,
            conv(channels[0], channels[1]),
            LayerSpec::Relu,
            pool,
            LayerSpec::Flatten,
            LayerSpec::Dense {
                in_units: flat,
                out_units: hidden,
            },
            LayerSpec::Relu,
            LayerSpec::Dense {
                in_units: hidden,
                out_units: class_count,
            },
        ];
        Self::new(input.to_vec(), specs, class_count)
    }

    /// Kaiming-uniform weights (`±sqrt(6 / fan_in)`) and zero biases.
    pub fn init_kaiming(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut self.layers {
            let fan_in = layer.spec.fan_in();
            if let Some(p) = layer.params.as_mut() {
                let limit = (6.0 / fan_in as f64).sqrt();
                let dist = Uniform::new(-limit, limit).expect("finite fan-in bound");
                for w in p.weight.data_mut() {
                    *w = dist.sample(&mut rng);
                }
                p.bias.data_mut().fill(0.0);
            }
        }
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    /// Output shape of layer `i`.
    pub fn output_shape(&self, i: usize) -> &[usize] {
        &self.shapes[i]
    }

    /// Input shape of layer `i`.
    pub fn layer_input_shape(&self, i: usize) -> &[usize] {
        if i == 0 {
            &self.input_shape
        } else {
            &self.shapes[i - 1]
        }
    }

    pub fn params(&self, layer: usize) -> Option<&Params> {
        self.layers.get(layer)?.params.as_ref()
    }

    pub fn params_mut(&mut self, layer: usize) -> Option<&mut Params> {
        self.layers.get_mut(layer)?.params.as_mut()
    }

    /// Replaces the parameters of a dense or conv layer.
    pub fn set_params(&mut self, layer: usize, weight: Vec<f64>, bias: Vec<f64>) -> Result<()> {
        let spec = self
            .layers
            .get(layer)
            .ok_or_else(|| Error::InvalidNetwork(format!("no layer {layer}")))?
            .spec;
        let (ws, bs) = spec.param_shapes().ok_or_else(|| {
            Error::InvalidNetwork(format!("layer {layer} ({}) has no parameters", spec.kind()))
        })?;
        let weight = Tensor::new(ws, weight)?;
        let bias = Tensor::new(bs, bias)?;
        self.layers[layer].params = Some(Params { weight, bias });
        Ok(())
    }

    /// Indices of dense and conv layers.
    pub fn prunable_layers(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| l.spec.is_prunable())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn prunable_units(&self) -> Vec<UnitId> {
        self.prunable_layers()
            .into_iter()
            .flat_map(|l| (0..self.layers[l].spec.unit_count()).map(move |u| UnitId::new(l, u)))
            .collect()
    }

    /// The last dense or conv layer, which produces the class scores.
    pub fn classifier_layer(&self) -> usize {
        *self
            .prunable_layers()
            .last()
            .expect("a network emitting logits has a parametric layer")
    }

    pub fn is_unit(&self, unit: UnitId) -> bool {
        self.layers
            .get(unit.layer)
            .is_some_and(|l| l.spec.is_prunable() && unit.unit < l.spec.unit_count())
    }

    /// Multiply-accumulates one unit of `layer` performs per forward pass.
    pub fn macs_per_unit(&self, layer: usize) -> usize {
        let spec = &self.layers[layer].spec;
        let spatial: usize = self.shapes[layer][1..].iter().product();
        spec.fan_in() * spatial
    }

    pub fn total_macs(&self) -> usize {
        self.prunable_layers()
            .into_iter()
            .map(|l| self.macs_per_unit(l) * self.layers[l].spec.unit_count())
            .sum()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .filter_map(|l| l.params.as_ref())
            .map(|p| p.weight.len() + p.bias.len())
            .sum()
    }

    pub fn forward(&self, input: &Tensor, record: bool) -> Result<ForwardTrace> {
        self.run(input, record, None)
    }

    /// Forward pass with every masked unit's output set to exactly zero at
    /// every spatial position. Always records activations.
    pub fn masked_forward(&self, input: &Tensor, mask: &PruningMask) -> Result<ForwardTrace> {
        self.check_mask(mask)?;
        self.run(input, true, Some(mask))
    }

    pub fn check_mask(&self, mask: &PruningMask) -> Result<()> {
        let unknown: Vec<UnitId> = mask.units().filter(|&u| !self.is_unit(u)).collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Error::UnknownUnits(unknown))
        }
    }

    fn run(&self, input: &Tensor, record: bool, mask: Option<&PruningMask>) -> Result<ForwardTrace> {
        if input.shape() != self.input_shape.as_slice() {
            return Err(Error::ShapeMismatch {
                layer: 0,
                expected: self.input_shape.clone(),
                got: input.shape().to_vec(),
            });
        }
        let mut inputs = Vec::new();
        let mut outputs = Vec::new();
        let mut current = input.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = self.layer_forward(i, layer, &current);
            if let Some(mask) = mask {
                zero_units(&mut out, mask.units_in_layer(i));
            }
            if record {
                inputs.push(current);
                outputs.push(out.clone());
            }
            current = out;
        }
        let probs = Tensor::vector(ops::softmax(current.data()));
        Ok(ForwardTrace {
            inputs,
            outputs,
            logits: current,
            probs,
            mask: mask.filter(|m| !m.is_empty()).cloned(),
        })
    }

    fn layer_forward(&self, i: usize, layer: &Layer, x: &Tensor) -> Tensor {
        let out_shape = self.shapes[i].clone();
        let data = match layer.spec {
            LayerSpec::Dense { .. } => {
                let p = layer.params.as_ref().expect("dense has params");
                ops::dense_forward(p.weight.data(), p.bias.data(), x.data())
            }
            LayerSpec::Conv2d { .. } => {
                let p = layer.params.as_ref().expect("conv has params");
                let g = ConvGeom::new(&layer.spec, x.shape(), &out_shape);
                ops::conv_forward(&g, p.weight.data(), p.bias.data(), x.data())
            }
            LayerSpec::Relu => x.data().iter().map(|&v| v.max(0.0)).collect(),
            LayerSpec::MaxPool2d { window, stride } => {
                ops::maxpool_argmax(x.shape(), &out_shape, window, stride, x.data())
                    .into_iter()
                    .map(|idx| x.data()[idx])
                    .collect()
            }
            LayerSpec::Flatten | LayerSpec::SoftmaxOutput => x.data().to_vec(),
        };
        Tensor::from_parts(out_shape, data)
    }

    /// Gradient of `output_grad · logits` with respect to every parameter,
    /// every layer output and the input. Masked units (from a
    /// [`masked_forward`](Self::masked_forward) trace) pass no gradient.
    pub fn backward(&self, trace: &ForwardTrace, output_grad: &[f64]) -> Result<Gradients> {
        if !trace.is_recorded() || trace.outputs.len() != self.layers.len() {
            return Err(Error::MissingTrace);
        }
        if output_grad.len() != self.class_count {
            return Err(Error::ShapeMismatch {
                layer: self.layers.len() - 1,
                expected: vec![self.class_count],
                got: vec![output_grad.len()],
            });
        }
        let n = self.layers.len();
        let mut params = vec![None; n];
        let mut layer_outputs = vec![Tensor::zeros(&[1]); n];
        let mut grad = Tensor::vector(output_grad.to_vec());
        for i in (0..n).rev() {
            let layer = &self.layers[i];
            let x = &trace.inputs[i];
            let mut g_out = Tensor::from_parts(self.shapes[i].clone(), grad.into_data());
            if let Some(mask) = &trace.mask {
                zero_units(&mut g_out, mask.units_in_layer(i));
            }
            let gx = match layer.spec {
                LayerSpec::Dense { in_units, .. } => {
                    let p = layer.params.as_ref().expect("dense has params");
                    let mut gw = Tensor::zeros(p.weight.shape());
                    let mut gb = Tensor::zeros(p.bias.shape());
                    ops::dense_param_grad(x.data(), g_out.data(), gw.data_mut(), gb.data_mut());
                    params[i] = Some(Params { weight: gw, bias: gb });
                    ops::dense_input_grad(p.weight.data(), in_units, g_out.data())
                }
                LayerSpec::Conv2d { .. } => {
                    let p = layer.params.as_ref().expect("conv has params");
                    let g = ConvGeom::new(&layer.spec, x.shape(), &self.shapes[i]);
                    let mut gw = Tensor::zeros(p.weight.shape());
                    let mut gb = Tensor::zeros(p.bias.shape());
                    ops::conv_param_grad(&g, x.data(), g_out.data(), gw.data_mut(), gb.data_mut());
                    params[i] = Some(Params { weight: gw, bias: gb });
                    ops::conv_input_grad(&g, p.weight.data(), g_out.data())
                }
                LayerSpec::Relu => x
                    .data()
                    .iter()
                    .zip(g_out.data())
                    .map(|(&a, &g)| if a > 0.0 { g } else { 0.0 })
                    .collect(),
                LayerSpec::MaxPool2d { window, stride } => {
                    let mut gx = vec![0.0; x.len()];
                    let winners =
                        ops::maxpool_argmax(x.shape(), &self.shapes[i], window, stride, x.data());
                    for (o, idx) in winners.into_iter().enumerate() {
                        gx[idx] += g_out.data()[o];
                    }
                    gx
                }
                LayerSpec::Flatten | LayerSpec::SoftmaxOutput => g_out.data().to_vec(),
            };
            layer_outputs[i] = g_out;
            grad = Tensor::from_parts(x.shape().to_vec(), gx);
        }
        Ok(Gradients {
            params,
            input: grad,
            layer_outputs,
        })
    }
}

/// Zeroes whole units: one element of a vector, or a full channel plane.
fn zero_units(t: &mut Tensor, units: impl Iterator<Item = usize>) {
    let plane: usize = t.shape()[1..].iter().product();
    let data = t.data_mut();
    for u in units {
        data[u * plane..(u + 1) * plane].fill(0.0);
    }
}

impl Gradients {
    /// Adds `scale * other` into `self.params`.
    pub fn accumulate_params(acc: &mut [Option<Params>], other: &[Option<Params>], scale: f64) {
        for (a, o) in acc.iter_mut().zip(other) {
            match (a, o) {
                (Some(a), Some(o)) => {
                    for (x, y) in a.weight.data_mut().iter_mut().zip(o.weight.data()) {
                        *x += scale * y;
                    }
                    for (x, y) in a.bias.data_mut().iter_mut().zip(o.bias.data()) {
                        *x += scale * y;
                    }
                }
                (None, None) => {}
                _ => unreachable!("gradient layouts differ"),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_net(weight: Vec<f64>, bias: Vec<f64>, relu: bool) -> Network {
        let out = bias.len();
        let inp = weight.len() / out;
        let mut specs = vec![LayerSpec::Dense {
            in_units: inp,
            out_units: out,
        }];
        if relu {
            specs.push(LayerSpec::Relu);
        }
        let mut net = Network::new(vec![inp], specs, out).unwrap();
        net.set_params(0, weight, bias).unwrap();
        net
    }

    #[test]
    fn identity_dense_forward() {
        let net = dense_net(vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0], false);
        let t = net.forward(&Tensor::vector(vec![3.0, -1.0]), false).unwrap();
        assert_eq!(t.logits.data(), &[3.0, -1.0]);
        assert!(!t.is_recorded());
    }

    #[test]
    fn dense_relu_hand_computed() {
        // W x + b = [1 + 2 + 0.5, 3 + 4 - 0.5]
        let net = dense_net(vec![1.0, 2.0, 3.0, 4.0], vec![0.5, -0.5], true);
        let t = net.forward(&Tensor::vector(vec![1.0, 1.0]), true).unwrap();
        assert_eq!(t.logits.data(), &[3.5, 6.5]);
        assert_eq!(t.outputs[0], t.inputs[1]);
        assert!((t.probs.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identity_conv_kernel() {
        let spec = LayerSpec::Conv2d {
            in_channels: 1,
            out_channels: 1,
            kernel_h: 1,
            kernel_w: 1,
            stride: 1,
            padding: 0,
        };
        let mut net = Network::new(vec![1, 3, 3], vec![spec, LayerSpec::Flatten], 9).unwrap();
        net.set_params(0, vec![1.0], vec![0.0]).unwrap();
        let img: Vec<f64> = (0..9).map(|v| v as f64 * 0.7 - 2.0).collect();
        let t = net.forward(&Tensor::new(vec![1, 3, 3], img.clone()).unwrap(), false).unwrap();
        assert_eq!(t.logits.data(), img.as_slice());
    }

    #[test]
    fn shape_mismatch_names_layer() {
        let net = dense_net(vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0], false);
        let err = net.forward(&Tensor::vector(vec![1.0, 2.0, 3.0]), false).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { layer: 0, .. }));
        assert!(Network::new(
            vec![3],
            vec![LayerSpec::Dense { in_units: 2, out_units: 1 }],
            1
        )
        .is_err());
    }

    #[test]
    fn linear_backward_returns_weights() {
        let net = dense_net(vec![0.3, -1.2, 2.5], vec![0.0], false);
        let t = net.forward(&Tensor::vector(vec![1.0, 2.0, 3.0]), true).unwrap();
        let g = net.backward(&t, &[1.0]).unwrap();
        assert_eq!(g.input.data(), &[0.3, -1.2, 2.5]);
    }

    #[test]
    fn relu_chain_rule_hand_computed() {
        let net = dense_net(vec![1.0, 2.0], vec![0.0], true);
        let t = net.forward(&Tensor::vector(vec![1.0, 1.0]), true).unwrap();
        let g = net.backward(&t, &[1.0]).unwrap();
        assert_eq!(g.input.data(), &[1.0, 2.0]);
        let p = g.params[0].as_ref().unwrap();
        assert_eq!(p.weight.data(), &[1.0, 1.0]);
        assert_eq!(p.bias.data(), &[1.0]);
    }

    #[test]
    fn zero_output_grad_gives_zero_gradients() {
        let mut net = Network::small_cnn([1, 8, 8], [2, 3], 4, 3).unwrap();
        net.init_kaiming(3);
        let x = Tensor::new(vec![1, 8, 8], (0..64).map(|v| (v as f64).sin()).collect()).unwrap();
        let t = net.forward(&x, true).unwrap();
        let g = net.backward(&t, &[0.0; 3]).unwrap();
        assert!(g.input.data().iter().all(|&v| v == 0.0));
        for p in g.params.iter().flatten() {
            assert!(p.weight.data().iter().chain(p.bias.data()).all(|&v| v == 0.0));
        }
    }

    #[test]
    fn backward_requires_recorded_trace() {
        let net = dense_net(vec![1.0, 2.0], vec![0.0], false);
        let t = net.forward(&Tensor::vector(vec![1.0, 1.0]), false).unwrap();
        assert!(matches!(net.backward(&t, &[1.0]), Err(Error::MissingTrace)));
    }

    fn all_ones_two_layer() -> Network {
        let mut net = Network::new(
            vec![2],
            vec![
                LayerSpec::Dense { in_units: 2, out_units: 2 },
                LayerSpec::Dense { in_units: 2, out_units: 1 },
            ],
            1,
        )
        .unwrap();
        net.set_params(0, vec![1.0; 4], vec![0.0; 2]).unwrap();
        net.set_params(1, vec![1.0; 2], vec![0.0]).unwrap();
        net
    }

    #[test]
    fn masked_forward_hand_computed() {
        let net = all_ones_two_layer();
        let x = Tensor::vector(vec![1.0, 1.0]);
        assert_eq!(net.forward(&x, false).unwrap().logits.data(), &[4.0]);
        let mask = PruningMask::from_units([UnitId::new(0, 0)]);
        let t = net.masked_forward(&x, &mask).unwrap();
        assert_eq!(t.outputs[0].data(), &[0.0, 2.0]);
        assert_eq!(t.logits.data(), &[2.0]);
    }

    #[test]
    fn empty_mask_is_bit_identical() {
        let mut net = Network::small_cnn([1, 8, 8], [2, 3], 4, 3).unwrap();
        net.init_kaiming(9);
        let x = Tensor::new(vec![1, 8, 8], (0..64).map(|v| (v as f64 * 0.37).cos()).collect()).unwrap();
        let a = net.forward(&x, true).unwrap();
        let b = net.masked_forward(&x, &PruningMask::empty()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn masking_every_hidden_unit_leaves_output_bias() {
        let mut net = Network::mlp(3, &[5], 2).unwrap();
        net.init_kaiming(1);
        net.params_mut(2).unwrap().bias.data_mut().copy_from_slice(&[0.25, -0.75]);
        let mask = PruningMask::from_units((0..5).map(|u| UnitId::new(0, u)));
        let t = net.masked_forward(&Tensor::vector(vec![0.4, -1.0, 2.0]), &mask).unwrap();
        assert_eq!(t.logits.data(), &[0.25, -0.75]);
    }

    #[test]
    fn unknown_units_are_listed() {
        let net = all_ones_two_layer();
        let mask = PruningMask::from_units([UnitId::new(0, 5), UnitId::new(0, 1), UnitId::new(7, 0)]);
        match net.masked_forward(&Tensor::vector(vec![1.0, 1.0]), &mask) {
            Err(Error::UnknownUnits(u)) => assert_eq!(u, vec![UnitId::new(0, 5), UnitId::new(7, 0)]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn masked_conv_channel_is_zero_everywhere() {
        let mut net = Network::small_cnn([1, 8, 8], [3, 3], 4, 2).unwrap();
        net.init_kaiming(5);
        let x = Tensor::new(vec![1, 8, 8], (0..64).map(|v| (v as f64 * 0.1).sin() + 0.5).collect()).unwrap();
        let mask = PruningMask::from_units([UnitId::new(0, 1), UnitId::new(3, 2)]);
        let t = net.masked_forward(&x, &mask).unwrap();
        assert!(t.outputs[0].data()[64..128].iter().all(|&v| v == 0.0));
        assert!(t.outputs[3].data()[32..48].iter().all(|&v| v == 0.0));
    }
}
