use serde::{Deserialize, Serialize};

use super::layer::{Layer, LayerKind};
use super::tensor::{argmax, Tensor};
use crate::error::{Error, Result};

/// Immutable-after-construction feed-forward model.
///
/// The layer chain is validated on construction: every layer accepts the shape its
/// predecessor produces, and the logits (the input of a trailing softmax, or the
/// final output otherwise) have `num_classes` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
    input_shape: Vec<usize>,
    num_classes: usize,
    shapes: Vec<Vec<usize>>,
}

impl Network {
    pub fn new(layers: Vec<Layer>, input_shape: Vec<usize>, num_classes: usize) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::InvalidNetwork("num_classes must be positive".into()));
        }
        if layers.is_empty() {
            return Err(Error::InvalidNetwork("network has no layers".into()));
        }
        let mut shapes = Vec::with_capacity(layers.len());
        let mut current = input_shape.clone();
        for (i, layer) in layers.iter().enumerate() {
            if layer.kind() == LayerKind::Softmax && i + 1 != layers.len() {
                return Err(Error::LayerShape {
                    layer: i,
                    message: "softmax is only supported as the final layer".into(),
                });
            }
            current = layer.output_shape(i, &current)?;
            shapes.push(current.clone());
        }
        let net = Network {
            layers,
            input_shape,
            num_classes,
            shapes,
        };
        let logits_shape = net.logits_shape();
        if logits_shape != [num_classes] {
            return Err(Error::InvalidNetwork(format!(
                "logits have shape {logits_shape:?}, expected [{num_classes}]"
            )));
        }
        Ok(net)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Output shape of layer `index`.
    pub fn output_shape(&self, index: usize) -> &[usize] {
        &self.shapes[index]
    }

    /// Input shape of layer `index`.
    pub fn layer_input_shape(&self, index: usize) -> &[usize] {
        if index == 0 {
            &self.input_shape
        } else {
            &self.shapes[index - 1]
        }
    }

    /// Number of layers whose output is the logit vector (a trailing softmax is excluded).
    pub fn logit_depth(&self) -> usize {
        match self.layers.last().map(Layer::kind) {
            Some(LayerKind::Softmax) => self.layers.len() - 1,
            _ => self.layers.len(),
        }
    }

    fn logits_shape(&self) -> &[usize] {
        match self.logit_depth() {
            0 => &self.input_shape,
            d => &self.shapes[d - 1],
        }
    }

    /// Total number of weights (biases excluded).
    pub fn weight_count(&self) -> usize {
        self.layers.iter().map(Layer::weight_count).sum()
    }

    /// Mutable access to the weight tensor of layer `index`, for fault application
    /// on an owned copy. Shapes cannot be changed through [`Tensor::data_mut`].
    pub fn layer_weights_mut(&mut self, index: usize) -> Option<&mut Tensor> {
        self.layers.get_mut(index).and_then(Layer::weights_mut)
    }

    /// Weight at global index `index` (layers in order, row-major within a layer).
    pub fn weight(&self, index: usize) -> Option<f32> {
        let mut rest = index;
        for t in self.layers.iter().filter_map(Layer::weights) {
            if rest < t.len() {
                return Some(t.data()[rest]);
            }
            rest -= t.len();
        }
        None
    }

    pub fn weight_mut(&mut self, index: usize) -> Option<&mut f32> {
        let mut rest = index;
        for t in self.layers.iter_mut().filter_map(Layer::weights_mut) {
            if rest < t.len() {
                return Some(&mut t.data_mut()[rest]);
            }
            rest -= t.len();
        }
        None
    }

    /// All weights in global index order.
    pub fn flat_weights(&self) -> Vec<f32> {
        self.layers
            .iter()
            .filter_map(Layer::weights)
            .flat_map(|t| t.data().iter().copied())
            .collect()
    }

    /// Bitwise equality of every parameter (weights and biases).
    pub fn bit_eq(&self, other: &Network) -> bool {
        let opt_eq = |a: Option<&Tensor>, b: Option<&Tensor>| match (a, b) {
            (Some(a), Some(b)) => a.bit_eq(b),
            (None, None) => true,
            _ => false,
        };
        self.input_shape == other.input_shape
            && self.num_classes == other.num_classes
            && self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.kind() == b.kind()
                    && opt_eq(a.weights(), b.weights())
                    && opt_eq(a.bias(), b.bias())
            })
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        if input.shape() != self.input_shape.as_slice() {
            return Err(Error::InputShape {
                expected: self.input_shape.clone(),
                actual: input.shape().to_vec(),
            });
        }
        Ok(())
    }

    /// Runs the full chain, recording every layer.
    pub fn forward(&self, input: &Tensor) -> Result<ForwardTrace> {
        self.check_input(input)?;
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut activations: Vec<Tensor> = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let x = activations.last().unwrap_or(input);
            let out = layer.apply(x, &self.shapes[i]);
            // Pre-activation of an elementwise nonlinearity is its input.
            let pre = match layer.kind() {
                LayerKind::Relu | LayerKind::Softmax => x.clone(),
                _ => out.clone(),
            };
            pre_activations.push(pre);
            activations.push(out);
        }
        let logits = match self.logit_depth() {
            0 => input.clone(),
            d => activations[d - 1].clone(),
        };
        let predicted_class = argmax(logits.data());
        Ok(ForwardTrace {
            input: input.clone(),
            pre_activations,
            activations,
            logits,
            predicted_class,
        })
    }

    /// Logits only; bit-identical to `forward(input)?.logits`.
    pub fn logits(&self, input: &Tensor) -> Result<Tensor> {
        self.check_input(input)?;
        let mut x = input.clone();
        for (i, layer) in self.layers[..self.logit_depth()].iter().enumerate() {
            x = layer.apply(&x, &self.shapes[i]);
        }
        Ok(x)
    }
}

/// Everything a forward pass produced, one entry per layer.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub input: Tensor,
    pub pre_activations: Vec<Tensor>,
    pub activations: Vec<Tensor>,
    pub logits: Tensor,
    pub predicted_class: usize,
}

impl ForwardTrace {
    /// Activation feeding layer `index`.
    pub fn layer_input(&self, index: usize) -> &Tensor {
        if index == 0 {
            &self.input
        } else {
            &self.activations[index - 1]
        }
    }

    pub fn bit_eq(&self, other: &ForwardTrace) -> bool {
        let all = |a: &[Tensor], b: &[Tensor]| {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.bit_eq(y))
        };
        self.input.bit_eq(&other.input)
            && all(&self.pre_activations, &other.pre_activations)
            && all(&self.activations, &other.activations)
            && self.logits.bit_eq(&other.logits)
            && self.predicted_class == other.predicted_class
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabeledDataset {
    pub inputs: Vec<Tensor>,
    pub labels: Vec<usize>,
}

impl LabeledDataset {
    pub fn new(inputs: Vec<Tensor>, labels: Vec<usize>) -> Result<Self> {
        if inputs.len() != labels.len() {
            return Err(Error::InvalidDataset(format!(
                "{} inputs but {} labels",
                inputs.len(),
                labels.len()
            )));
        }
        Ok(LabeledDataset { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// First `n` samples (all of them when `n` exceeds the length).
    pub fn head(&self, n: usize) -> LabeledDataset {
        let n = n.min(self.len());
        LabeledDataset {
            inputs: self.inputs[..n].to_vec(),
            labels: self.labels[..n].to_vec(),
        }
    }

    fn check_against(&self, network: &Network) -> Result<()> {
        if self.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if let Some((i, l)) = self
            .labels
            .iter()
            .enumerate()
            .find(|(_, &l)| l >= network.num_classes())
        {
            return Err(Error::InvalidDataset(format!(
                "sample {i} has label {l} but the network has {} classes",
                network.num_classes()
            )));
        }
        Ok(())
    }
}

pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub mean_loss: f64,
    pub correct: usize,
    pub total: usize,
    pub nan_count: usize,
}

/// Cross-entropy of one logit vector against `label`, and whether the logits held NaN.
pub fn sample_loss(logits: &[f32], label: usize) -> (f64, bool) {
    let cap = -PROB_FLOOR.ln();
    if logits.iter().any(|v| v.is_nan()) {
        return (cap, true);
    }
    let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let p = if max == f64::INFINITY {
        // Probability mass splits evenly among the +inf entries.
        let n_inf = logits.iter().filter(|&&v| v == f32::INFINITY).count();
        if logits[label] == f32::INFINITY {
            1.0 / n_inf as f64
        } else {
            0.0
        }
    } else if max == f64::NEG_INFINITY {
        1.0 / logits.len() as f64
    } else {
        let mut sum = 0.0f64;
        for &v in logits {
            sum += (v as f64 - max).exp();
        }
        (logits[label] as f64 - max).exp() / sum
    };
    (-p.max(PROB_FLOOR).ln(), false)
}

/// Accuracy and mean cross-entropy over `dataset`. Samples are processed in order so
/// the result is bit-reproducible.
pub fn evaluate(network: &Network, dataset: &LabeledDataset) -> Result<Evaluation> {
    dataset.check_against(network)?;
    let mut correct = 0;
    let mut nan_count = 0;
    let mut loss_sum = 0.0f64;
    for (input, &label) in dataset.inputs.iter().zip(&dataset.labels) {
        let logits = network.logits(input)?;
        let (loss, nan) = sample_loss(logits.data(), label);
        if nan {
            nan_count += 1;
        } else if argmax(logits.data()) == label {
            correct += 1;
        }
        loss_sum += loss;
    }
    let total = dataset.len();
    Ok(Evaluation {
        accuracy: correct as f64 / total as f64,
        mean_loss: loss_sum / total as f64,
        correct,
        total,
        nan_count,
    })
}
