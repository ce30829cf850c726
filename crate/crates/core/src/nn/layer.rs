use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Dense,
    Conv2d,
    Relu,
    MaxPool,
    Flatten,
    Softmax,
}

impl LayerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LayerKind::Dense => "dense",
            LayerKind::Conv2d => "conv2d",
            LayerKind::Relu => "relu",
            LayerKind::MaxPool => "maxpool",
            LayerKind::Flatten => "flatten",
            LayerKind::Softmax => "softmax",
        }
    }
}

/// One layer of a feed-forward network.
///
/// Dense weights are `[out, in]`, convolution weights `[out_c, in_c, kh, kw]`.
/// Convolution and pooling operate on `[channels, height, width]` activations.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense {
        weights: Tensor,
        bias: Option<Tensor>,
    },
    Conv2d {
        weights: Tensor,
        bias: Option<Tensor>,
        stride: usize,
        padding: usize,
    },
    Relu,
    MaxPool {
        size: usize,
        stride: usize,
    },
    Flatten,
    Softmax,
}

impl Layer {
    pub fn dense(weights: Tensor, bias: Option<Tensor>) -> Self {
        Layer::Dense { weights, bias }
    }

    pub fn conv2d(weights: Tensor, bias: Option<Tensor>, stride: usize, padding: usize) -> Self {
        Layer::Conv2d {
            weights,
            bias,
            stride,
            padding,
        }
    }

    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::Dense { .. } => LayerKind::Dense,
            Layer::Conv2d { .. } => LayerKind::Conv2d,
            Layer::Relu => LayerKind::Relu,
            Layer::MaxPool { .. } => LayerKind::MaxPool,
            Layer::Flatten => LayerKind::Flatten,
            Layer::Softmax => LayerKind::Softmax,
        }
    }

    pub fn weights(&self) -> Option<&Tensor> {
        match self {
            Layer::Dense { weights, .. } | Layer::Conv2d { weights, .. } => Some(weights),
            _ => None,
        }
    }

    pub fn weights_mut(&mut self) -> Option<&mut Tensor> {
        match self {
            Layer::Dense { weights, .. } | Layer::Conv2d { weights, .. } => Some(weights),
            _ => None,
        }
    }

    pub fn bias(&self) -> Option<&Tensor> {
        match self {
            Layer::Dense { bias, .. } | Layer::Conv2d { bias, .. } => bias.as_ref(),
            _ => None,
        }
    }

    pub fn weight_count(&self) -> usize {
        self.weights().map_or(0, Tensor::len)
    }

    /// Checks the layer's own parameters and derives its output shape.
    pub fn output_shape(&self, index: usize, input: &[usize]) -> Result<Vec<usize>> {
        let err = |message: String| Error::LayerShape {
            layer: index,
            message,
        };
        match self {
            Layer::Dense { weights, bias } => {
                let &[out, inp] = weights.shape() else {
                    return Err(err(format!(
                        "dense weights must be [out, in], got {:?}",
                        weights.shape()
                    )));
                };
                if input.len() != 1 || input[0] != inp {
                    return Err(err(format!(
                        "dense layer expects input [{inp}], got {input:?}"
                    )));
                }
                if let Some(b) = bias {
                    if b.shape() != [out] {
                        return Err(err(format!(
                            "dense bias must be [{out}], got {:?}",
                            b.shape()
                        )));
                    }
                }
                Ok(vec![out])
            }
            Layer::Conv2d {
                weights,
                bias,
                stride,
                padding,
            } => {
                let &[oc, ic, kh, kw] = weights.shape() else {
                    return Err(err(format!(
                        "conv2d weights must be [out_c, in_c, kh, kw], got {:?}",
                        weights.shape()
                    )));
                };
                let &[c, h, w] = input else {
                    return Err(err(format!(
                        "conv2d expects [c, h, w] input, got {input:?}"
                    )));
                };
                if c != ic {
                    return Err(err(format!("conv2d expects {ic} input channels, got {c}")));
                }
                if *stride == 0 {
                    return Err(err("conv2d stride must be positive".into()));
                }
                if h + 2 * padding < kh || w + 2 * padding < kw {
                    return Err(err(format!(
                        "kernel {kh}x{kw} larger than padded input {h}x{w}"
                    )));
                }
                if let Some(b) = bias {
                    if b.shape() != [oc] {
                        return Err(err(format!(
                            "conv2d bias must be [{oc}], got {:?}",
                            b.shape()
                        )));
                    }
                }
                Ok(vec![
                    oc,
                    (h + 2 * padding - kh) / stride + 1,
                    (w + 2 * padding - kw) / stride + 1,
                ])
            }
            Layer::MaxPool { size, stride } => {
                let &[c, h, w] = input else {
                    return Err(err(format!(
                        "maxpool expects [c, h, w] input, got {input:?}"
                    )));
                };
                if *size == 0 || *stride == 0 {
                    return Err(err("maxpool size and stride must be positive".into()));
                }
                if h < *size || w < *size {
                    return Err(err(format!("pool window {size} larger than input {h}x{w}")));
                }
                Ok(vec![c, (h - size) / stride + 1, (w - size) / stride + 1])
            }
            Layer::Flatten => Ok(vec![input.iter().product()]),
            Layer::Relu | Layer::Softmax => Ok(input.to_vec()),
        }
    }

    /// Applies the layer. `out_shape` must come from [`Layer::output_shape`].
    pub(crate) fn apply(&self, input: &Tensor, out_shape: &[usize]) -> Tensor {
        let data = match self {
            Layer::Dense { weights, bias } => dense(input.data(), weights, bias.as_ref()),
            Layer::Conv2d {
                weights,
                bias,
                stride,
                padding,
            } => conv2d(
                input.data(),
                input.shape(),
                weights,
                bias.as_ref(),
                *stride,
                *padding,
                out_shape,
            ),
            Layer::Relu => input
                .data()
                .iter()
                .map(|&v| if v > 0.0 || v.is_nan() { v } else { 0.0 })
                .collect(),
            Layer::MaxPool { size, stride } => {
                let (values, _) = max_pool(input.data(), input.shape(), *size, *stride, out_shape);
                values
            }
            Layer::Flatten => input.data().to_vec(),
            Layer::Softmax => softmax(input.data()),
        };
        Tensor::new(out_shape.to_vec(), data).expect("output shape derived from layer")
    }
}

/// Accumulates in ascending input index, then adds the bias.
pub(crate) fn dense(input: &[f32], weights: &Tensor, bias: Option<&Tensor>) -> Vec<f32> {
    let inp = weights.shape()[1];
    weights
        .data()
        .chunks_exact(inp)
        .enumerate()
        .map(|(o, row)| {
            let mut acc = 0.0f32;
            for (x, w) in input.iter().zip(row) {
                acc += x * w;
            }
            match bias {
                Some(b) => acc + b.data()[o],
                None => acc,
            }
        })
        .collect()
}

/// Zero-padded convolution; per output the sum runs over input channel, then kernel row-major.
pub(crate) fn conv2d(
    input: &[f32],
    input_shape: &[usize],
    weights: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    padding: usize,
    out_shape: &[usize],
) -> Vec<f32> {
    let (h, w) = (input_shape[1], input_shape[2]);
    let &[oc, ic, kh, kw] = weights.shape() else {
        unreachable!("validated conv weights")
    };
    let (oh, ow) = (out_shape[1], out_shape[2]);
    let wd = weights.data();
    let mut out = Vec::with_capacity(oc * oh * ow);
    for o in 0..oc {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0.0f32;
                for c in 0..ic {
                    for ky in 0..kh {
                        let Some(iy) = (oy * stride + ky).checked_sub(padding).filter(|&y| y < h)
                        else {
                            continue;
                        };
                        for kx in 0..kw {
                            let Some(ix) =
                                (ox * stride + kx).checked_sub(padding).filter(|&x| x < w)
                            else {
                                continue;
                            };
                            acc += input[(c * h + iy) * w + ix]
                                * wd[((o * ic + c) * kh + ky) * kw + kx];
                        }
                    }
                }
                out.push(match bias {
                    Some(b) => acc + b.data()[o],
                    None => acc,
                });
            }
        }
    }
    out
}

/// Returns pooled values and, for every output, the flat input index of its winner
/// (first maximum in row-major window order; a NaN wins over any number).
pub(crate) fn max_pool(
    input: &[f32],
    input_shape: &[usize],
    size: usize,
    stride: usize,
    out_shape: &[usize],
) -> (Vec<f32>, Vec<usize>) {
    let (c, h, w) = (input_shape[0], input_shape[1], input_shape[2]);
    let (oh, ow) = (out_shape[1], out_shape[2]);
    let mut values = Vec::with_capacity(c * oh * ow);
    let mut winners = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best_idx = (ch * h + oy * stride) * w + ox * stride;
                let mut best = input[best_idx];
                for ky in 0..size {
                    for kx in 0..size {
                        let idx = (ch * h + oy * stride + ky) * w + ox * stride + kx;
                        let v = input[idx];
                        if !best.is_nan() && (v > best || v.is_nan()) {
                            best = v;
                            best_idx = idx;
                        }
                    }
                }
                values.push(best);
                winners.push(best_idx);
            }
        }
    }
    (values, winners)
}

pub(crate) fn softmax(logits: &[f32]) -> Vec<f32> {
    let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let exps: Vec<f32> = logits.iter().map(|&v| (v - max).exp()).collect();
    let mut sum = 0.0f32;
    for e in &exps {
        sum += e;
    }
    exps.into_iter().map(|e| e / sum).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_output_shape_with_padding_and_stride() {
        let layer = Layer::conv2d(Tensor::zeros(vec![4, 2, 3, 3]), None, 2, 1);
        assert_eq!(layer.output_shape(0, &[2, 7, 7]).unwrap(), vec![4, 4, 4]);
        assert!(layer.output_shape(0, &[3, 7, 7]).is_err());
    }

    #[test]
    fn conv_matches_hand_computed_window() {
        // 1x3x3 input, a single 2x2 kernel of ones: each output sums its window.
        let input: Vec<f32> = (1..=9).map(|v| v as f32).collect();
        let w = Tensor::new(vec![1, 1, 2, 2], vec![1.0; 4]).unwrap();
        let out = conv2d(&input, &[1, 3, 3], &w, None, 1, 0, &[1, 2, 2]);
        assert_eq!(out, vec![12.0, 16.0, 24.0, 28.0]);
    }

    #[test]
    fn conv_padding_treats_border_as_zero() {
        let w = Tensor::new(vec![1, 1, 3, 3], vec![1.0; 9]).unwrap();
        let out = conv2d(&[2.0], &[1, 1, 1], &w, None, 1, 1, &[1, 1, 1]);
        assert_eq!(out, vec![2.0]);
    }

    #[test]
    fn max_pool_first_winner_on_ties() {
        let input = [1.0, 1.0, 0.0, 1.0];
        let (v, idx) = max_pool(&input, &[1, 2, 2], 2, 2, &[1, 1, 1]);
        assert_eq!(v, vec![1.0]);
        assert_eq!(idx, vec![0]);
    }

    #[test]
    fn dense_rejects_wrong_input() {
        let layer = Layer::dense(Tensor::zeros(vec![2, 3]), None);
        let e = layer.output_shape(4, &[2]).unwrap_err();
        assert!(e.to_string().contains("layer 4"), "{e}");
    }
}
