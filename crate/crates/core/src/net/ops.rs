//! Numeric kernels shared by the forward, backward and relevance passes.

use super::layer::LayerSpec;

/// Index geometry of a conv2d layer applied to a concrete input shape.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub in_c: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_c: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn new(spec: &LayerSpec, in_shape: &[usize], out_shape: &[usize]) -> Self {
        let LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel_h,
            kernel_w,
            stride,
            padding,
        } = *spec
        else {
            unreachable!("ConvGeom built for {}", spec.kind());
        };
        Self {
            in_c: in_channels,
            in_h: in_shape[1],
            in_w: in_shape[2],
            out_c: out_channels,
            out_h: out_shape[1],
            out_w: out_shape[2],
            kh: kernel_h,
            kw: kernel_w,
            stride,
            pad: padding,
        }
    }

    #[inline]
    pub fn out_plane(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Calls `f(out_idx, in_idx, weight_idx)` for every in-bounds tap, in a
    /// fixed order (output channel, row, column, then input channel, kernel
    /// row, kernel column). Padded taps are skipped.
    #[inline]
    pub fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize)) {
        let k_plane = self.kh * self.kw;
        for o in 0..self.out_c {
            for oy in 0..self.out_h {
                for ox in 0..self.out_w {
                    let out_idx = (o * self.out_h + oy) * self.out_w + ox;
                    self.for_each_tap_of(o, oy, ox, k_plane, out_idx, &mut f);
                }
            }
        }
    }

    #[inline]
    fn for_each_tap_of(
        &self,
        o: usize,
        oy: usize,
        ox: usize,
        k_plane: usize,
        out_idx: usize,
        f: &mut impl FnMut(usize, usize, usize),
    ) {
        for c in 0..self.in_c {
            let w_base = (o * self.in_c + c) * k_plane;
            for ky in 0..self.kh {
                let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                if iy < 0 || iy as usize >= self.in_h {
                    continue;
                }
                for kx in 0..self.kw {
                    let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                    if ix < 0 || ix as usize >= self.in_w {
                        continue;
                    }
                    let in_idx = (c * self.in_h + iy as usize) * self.in_w + ix as usize;
                    f(out_idx, in_idx, w_base + ky * self.kw + kx);
                }
            }
        }
    }
}

pub(crate) fn dense_forward(weight: &[f64], bias: &[f64], x: &[f64]) -> Vec<f64> {
    let n_in = x.len();
    bias.iter()
        .enumerate()
        .map(|(j, &b)| {
            let row = &weight[j * n_in..(j + 1) * n_in];
            b + row.iter().zip(x).map(|(w, a)| w * a).sum::<f64>()
        })
        .collect()
}

/// `W^T g`.
pub(crate) fn dense_input_grad(weight: &[f64], n_in: usize, grad_out: &[f64]) -> Vec<f64> {
    let mut gx = vec![0.0; n_in];
    for (j, &g) in grad_out.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let row = &weight[j * n_in..(j + 1) * n_in];
        for (acc, &w) in gx.iter_mut().zip(row) {
            *acc += w * g;
        }
    }
    gx
}

/// Accumulates `g x^T` into `gw` and `g` into `gb`.
pub(crate) fn dense_param_grad(x: &[f64], grad_out: &[f64], gw: &mut [f64], gb: &mut [f64]) {
    let n_in = x.len();
    for (j, &g) in grad_out.iter().enumerate() {
        gb[j] += g;
        if g == 0.0 {
            continue;
        }
        let row = &mut gw[j * n_in..(j + 1) * n_in];
        for (acc, &a) in row.iter_mut().zip(x) {
            *acc += g * a;
        }
    }
}

pub(crate) fn conv_forward(g: &ConvGeom, weight: &[f64], bias: &[f64], x: &[f64]) -> Vec<f64> {
    let plane = g.out_plane();
    let mut y: Vec<f64> = (0..g.out_c * plane).map(|i| bias[i / plane]).collect();
    g.for_each_tap(|o, i, w| y[o] += weight[w] * x[i]);
    y
}

pub(crate) fn conv_input_grad(g: &ConvGeom, weight: &[f64], grad_out: &[f64]) -> Vec<f64> {
    let mut gx = vec![0.0; g.in_c * g.in_h * g.in_w];
    g.for_each_tap(|o, i, w| gx[i] += weight[w] * grad_out[o]);
    gx
}

pub(crate) fn conv_param_grad(
    g: &ConvGeom,
    x: &[f64],
    grad_out: &[f64],
    gw: &mut [f64],
    gb: &mut [f64],
) {
    let plane = g.out_plane();
    for (o, &go) in grad_out.iter().enumerate() {
        gb[o / plane] += go;
    }
    g.for_each_tap(|o, i, w| gw[w] += grad_out[o] * x[i]);
}

/// For each pooled output, the flat input index of its maximum. The first
/// position in row-major window order wins ties.
pub(crate) fn maxpool_argmax(in_shape: &[usize], out_shape: &[usize], window: usize, stride: usize, x: &[f64]) -> Vec<usize> {
    let (c, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
    let (oh, ow) = (out_shape[1], out_shape[2]);
    let mut winners = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = (ch * h + oy * stride) * w + ox * stride;
                for dy in 0..window {
                    for dx in 0..window {
                        let idx = (ch * h + oy * stride + dy) * w + ox * stride + dx;
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                }
                winners.push(best);
            }
        }
    }
    winners
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Weighted connections of a dense or conv layer, for relevance rules that
/// need every `(output, input, weight)` triple.
pub(crate) enum Taps {
    Dense { n_in: usize, n_out: usize },
    Conv(ConvGeom),
}

impl Taps {
    pub fn new(spec: &LayerSpec, in_shape: &[usize], out_shape: &[usize]) -> Option<Self> {
        match *spec {
            LayerSpec::Dense { in_units, out_units } => Some(Taps::Dense {
                n_in: in_units,
                n_out: out_units,
            }),
            LayerSpec::Conv2d { .. } => Some(Taps::Conv(ConvGeom::new(spec, in_shape, out_shape))),
            _ => None,
        }
    }

    #[inline]
    pub fn for_each(&self, mut f: impl FnMut(usize, usize, usize)) {
        match self {
            Taps::Dense { n_in, n_out } => {
                for j in 0..*n_out {
                    for i in 0..*n_in {
                        f(j, i, j * n_in + i);
                    }
                }
            }
            Taps::Conv(g) => g.for_each_tap(f),
        }
    }
}
