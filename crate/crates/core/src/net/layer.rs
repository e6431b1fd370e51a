use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

/// One layer of a [`Network`](super::Network).
///
/// Dense weights are stored `(out_units, in_units)`, row `j` feeding output
/// unit `j`. Conv weights are `(out_channels, in_channels, kernel_h, kernel_w)`
/// and are applied as cross-correlation over `(channels, height, width)`
/// inputs with zero padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LayerSpec {
    Dense {
        in_units: usize,
        out_units: usize,
    },
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        stride: usize,
        padding: usize,
    },
    Relu,
    #[serde(rename = "maxpool2d")]
    MaxPool2d {
        window: usize,
        stride: usize,
    },
    Flatten,
    SoftmaxOutput,
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::Relu => "relu",
            LayerSpec::MaxPool2d { .. } => "maxpool2d",
            LayerSpec::Flatten => "flatten",
            LayerSpec::SoftmaxOutput => "softmax-output",
        }
    }

    /// Dense and conv layers; each output unit or channel is one prunable unit.
    pub fn is_prunable(&self) -> bool {
        matches!(self, LayerSpec::Dense { .. } | LayerSpec::Conv2d { .. })
    }

    pub fn unit_count(&self) -> usize {
        match *self {
            LayerSpec::Dense { out_units, .. } => out_units,
            LayerSpec::Conv2d { out_channels, .. } => out_channels,
            _ => 0,
        }
    }

    /// `(weight shape, bias shape)` for parametric layers.
    pub fn param_shapes(&self) -> Option<(Vec<usize>, Vec<usize>)> {
        match *self {
            LayerSpec::Dense {
                in_units,
                out_units,
            } => Some((vec![out_units, in_units], vec![out_units])),
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel_h,
                kernel_w,
                ..
            } => Some((
                vec![out_channels, in_channels, kernel_h, kernel_w],
                vec![out_channels],
            )),
            _ => None,
        }
    }

    /// Number of incoming weights per unit (the fan-in).
    pub fn fan_in(&self) -> usize {
        match *self {
            LayerSpec::Dense { in_units, .. } => in_units,
            LayerSpec::Conv2d {
                in_channels,
                kernel_h,
                kernel_w,
                ..
            } => in_channels * kernel_h * kernel_w,
            _ => 0,
        }
    }

    /// Output shape for a given input shape, or `None` when incompatible.
    pub fn output_shape(&self, input: &[usize]) -> Option<Vec<usize>> {
        match *self {
            LayerSpec::Dense {
                in_units,
                out_units,
            } => (input == [in_units]).then(|| vec![out_units]),
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel_h,
                kernel_w,
                stride,
                padding,
            } => {
                if input.len() != 3 || input[0] != in_channels || stride == 0 {
                    return None;
                }
                let oh = window_output(input[1], kernel_h, stride, padding)?;
                let ow = window_output(input[2], kernel_w, stride, padding)?;
                Some(vec![out_channels, oh, ow])
            }
            LayerSpec::MaxPool2d { window, stride } => {
                if input.len() != 3 || stride == 0 {
                    return None;
                }
                let oh = window_output(input[1], window, stride, 0)?;
                let ow = window_output(input[2], window, stride, 0)?;
                Some(vec![input[0], oh, ow])
            }
            LayerSpec::Flatten => Some(vec![input.iter().product()]),
            LayerSpec::Relu | LayerSpec::SoftmaxOutput => Some(input.to_vec()),
        }
    }
}

/// `floor((in + 2*pad - k) / stride) + 1`, or `None` if the window does not fit.
fn window_output(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = input + 2 * padding;
    if kernel == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// Weight and bias of a dense or conv layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub spec: LayerSpec,
    pub params: Option<Params>,
}

impl Layer {
    pub(crate) fn zeroed(spec: LayerSpec) -> Self {
        let params = spec.param_shapes().map(|(w, b)| Params {
            weight: Tensor::zeros(&w),
            bias: Tensor::zeros(&b),
        });
        Self { spec, params }
    }
}
