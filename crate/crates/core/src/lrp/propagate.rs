use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{max_pool, ForwardTrace, Layer, LayerKind, Network, Tensor};

/// Redistribution rule for one parametrized layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rule {
    /// `a_j w_ji / sum_k a_k w_ki`
    Zero,
    /// As `Zero`, with `epsilon` added to the denominator (sign-matched).
    Epsilon,
    /// Positive weights scaled by `1 + gamma`, `gamma_stabilizer` added to the denominator.
    Gamma,
}

/// Which output neuron receives the seed relevance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedTarget {
    PredictedClass,
    /// Ground-truth label; only meaningful where labels are known (calibration).
    Label,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LrpRuleConfig {
    pub dense: Rule,
    pub conv: Rule,
    pub epsilon: f64,
    pub gamma: f64,
    pub gamma_stabilizer: f64,
    pub target: SeedTarget,
}

impl Default for LrpRuleConfig {
    fn default() -> Self {
        LrpRuleConfig {
            dense: Rule::Epsilon,
            conv: Rule::Gamma,
            epsilon: 1e-6,
            gamma: 0.25,
            gamma_stabilizer: 1e-6,
            target: SeedTarget::PredictedClass,
        }
    }
}

impl LrpRuleConfig {
    /// No stabilizers anywhere; relevance is exactly conserved on bias-free networks.
    pub fn conserving() -> Self {
        LrpRuleConfig {
            epsilon: 0.0,
            gamma_stabilizer: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name: &str, v: f64| {
            Err(Error::InvalidRules(format!(
                "{name} must be finite and nonnegative, got {v}"
            )))
        };
        for (name, v) in [
            ("epsilon", self.epsilon),
            ("gamma", self.gamma),
            ("gamma_stabilizer", self.gamma_stabilizer),
        ] {
            if !v.is_finite() || v < 0.0 {
                return bad(name, v);
            }
        }
        Ok(())
    }

    fn rule_for(&self, kind: LayerKind) -> Rule {
        match kind {
            LayerKind::Conv2d => self.conv,
            _ => self.dense,
        }
    }

    /// (weight transform factor for positive weights, denominator stabilizer)
    fn params(&self, rule: Rule) -> (f64, f64) {
        match rule {
            Rule::Zero => (0.0, 0.0),
            Rule::Epsilon => (0.0, self.epsilon),
            Rule::Gamma => (self.gamma, self.gamma_stabilizer),
        }
    }
}

/// Relevance at every layer interface of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceMap {
    /// Relevance of the network input.
    pub input: Vec<f64>,
    /// `layers[l]` is the relevance of layer `l`'s output, shaped like its activation.
    pub layers: Vec<Vec<f64>>,
    pub output_relevance: f64,
    pub seeded_class: usize,
}

impl RelevanceMap {
    /// Sum of relevance at the input followed by every layer output.
    pub fn interface_sums(&self) -> Vec<f64> {
        std::iter::once(&self.input)
            .chain(&self.layers)
            .map(|r| r.iter().sum())
            .collect()
    }
}

fn transform(w: f32, gamma: f64) -> f64 {
    let w = w as f64;
    if w > 0.0 {
        w + gamma * w
    } else {
        w
    }
}

fn stabilize(z: f64, stabilizer: f64) -> f64 {
    // sign(0) counts as positive.
    if z >= 0.0 {
        z + stabilizer
    } else {
        z - stabilizer
    }
}

/// Accumulator for per-edge message magnitudes, indexed by global weight index.
pub(crate) struct EdgeSink<'a> {
    pub scores: &'a mut [f64],
}

fn check_trace(network: &Network, trace: &ForwardTrace) -> Result<()> {
    if trace.input.shape() != network.input_shape() {
        return Err(Error::TraceMismatch(format!(
            "input shape {:?} vs network {:?}",
            trace.input.shape(),
            network.input_shape()
        )));
    }
    if trace.activations.len() != network.layers().len() {
        return Err(Error::TraceMismatch(format!(
            "{} recorded activations for {} layers",
            trace.activations.len(),
            network.layers().len()
        )));
    }
    for (i, a) in trace.activations.iter().enumerate() {
        if a.shape() != network.output_shape(i) {
            return Err(Error::TraceMismatch(format!(
                "layer {i} activation shape {:?} vs expected {:?}",
                a.shape(),
                network.output_shape(i)
            )));
        }
    }
    if trace.logits.len() != network.num_classes() {
        return Err(Error::TraceMismatch(
            "logit length differs from num_classes".into(),
        ));
    }
    Ok(())
}

/// Backward relevance pass seeded at the predicted class with its raw logit.
pub fn propagate_relevance(
    network: &Network,
    trace: &ForwardTrace,
    rules: &LrpRuleConfig,
) -> Result<RelevanceMap> {
    propagate_from(network, trace, rules, trace.predicted_class, None)
}

/// Backward relevance pass seeded at `class`.
pub fn propagate_relevance_to(
    network: &Network,
    trace: &ForwardTrace,
    rules: &LrpRuleConfig,
    class: usize,
) -> Result<RelevanceMap> {
    propagate_from(network, trace, rules, class, None)
}

pub(crate) fn propagate_from(
    network: &Network,
    trace: &ForwardTrace,
    rules: &LrpRuleConfig,
    class: usize,
    mut sink: Option<EdgeSink<'_>>,
) -> Result<RelevanceMap> {
    rules.validate()?;
    check_trace(network, trace)?;
    if class >= network.num_classes() {
        return Err(Error::TraceMismatch(format!(
            "seed class {class} outside {} classes",
            network.num_classes()
        )));
    }
    let seed = trace.logits.data()[class] as f64;
    let mut out_rel = vec![0.0; network.num_classes()];
    out_rel[class] = seed;

    let n = network.layers().len();
    let depth = network.logit_depth();
    let mut layers_rel: Vec<Vec<f64>> = vec![Vec::new(); n];
    // A trailing softmax carries the seed vector unchanged.
    for rel in layers_rel.iter_mut().skip(depth) {
        *rel = out_rel.clone();
    }

    let mut weight_start: Vec<usize> = Vec::with_capacity(n);
    let mut acc = 0;
    for l in network.layers() {
        weight_start.push(acc);
        acc += l.weight_count();
    }

    let mut current = out_rel;
    for l in (0..depth).rev() {
        layers_rel[l] = current.clone();
        let layer = &network.layers()[l];
        let input = trace.layer_input(l);
        current = match layer {
            Layer::Relu | Layer::Flatten | Layer::Softmax => current,
            Layer::MaxPool { size, stride } => {
                let (_, winners) = max_pool(
                    input.data(),
                    input.shape(),
                    *size,
                    *stride,
                    network.output_shape(l),
                );
                let mut r = vec![0.0; input.len()];
                for (o, &w) in winners.iter().enumerate() {
                    r[w] += current[o];
                }
                r
            }
            Layer::Dense { weights, bias } => {
                let (gamma, stab) = rules.params(rules.rule_for(LayerKind::Dense));
                let edges = sink.as_mut().map(|s| {
                    let start = weight_start[l];
                    &mut s.scores[start..start + weights.len()]
                });
                dense_backward(
                    l,
                    input,
                    weights,
                    bias.as_ref(),
                    &current,
                    gamma,
                    stab,
                    edges,
                )?
            }
            Layer::Conv2d {
                weights,
                bias,
                stride,
                padding,
            } => {
                let (gamma, stab) = rules.params(rules.rule_for(LayerKind::Conv2d));
                let edges = sink.as_mut().map(|s| {
                    let start = weight_start[l];
                    &mut s.scores[start..start + weights.len()]
                });
                conv_backward(
                    l,
                    input,
                    weights,
                    bias.as_ref(),
                    *stride,
                    *padding,
                    network.output_shape(l),
                    &current,
                    gamma,
                    stab,
                    edges,
                )?
            }
        };
    }

    Ok(RelevanceMap {
        input: current,
        layers: layers_rel,
        output_relevance: seed,
        seeded_class: class,
    })
}

#[allow(clippy::too_many_arguments)]
fn dense_backward(
    layer: usize,
    input: &Tensor,
    weights: &Tensor,
    bias: Option<&Tensor>,
    upstream: &[f64],
    gamma: f64,
    stab: f64,
    mut edges: Option<&mut [f64]>,
) -> Result<Vec<f64>> {
    let inp = weights.shape()[1];
    let a: Vec<f64> = input.data().iter().map(|&v| v as f64).collect();
    let mut r = vec![0.0; inp];
    for (i, row) in weights.data().chunks_exact(inp).enumerate() {
        let ri = upstream[i];
        if ri == 0.0 {
            continue;
        }
        let mut z = 0.0;
        for (aj, &w) in a.iter().zip(row) {
            z += aj * transform(w, gamma);
        }
        if let Some(b) = bias {
            z += transform(b.data()[i], gamma);
        }
        let denom = stabilize(z, stab);
        if denom == 0.0 {
            return Err(Error::ZeroDenominator { layer, neuron: i });
        }
        let s = ri / denom;
        for (j, (aj, &w)) in a.iter().zip(row).enumerate() {
            let msg = aj * transform(w, gamma) * s;
            r[j] += msg;
            if let Some(e) = edges.as_deref_mut() {
                e[i * inp + j] += msg.abs();
            }
        }
    }
    Ok(r)
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    layer: usize,
    input: &Tensor,
    weights: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    padding: usize,
    out_shape: &[usize],
    upstream: &[f64],
    gamma: f64,
    stab: f64,
    mut edges: Option<&mut [f64]>,
) -> Result<Vec<f64>> {
    let (h, w) = (input.shape()[1], input.shape()[2]);
    let &[oc, ic, kh, kw] = weights.shape() else {
        unreachable!("validated conv weights")
    };
    let (oh, ow) = (out_shape[1], out_shape[2]);
    let a = input.data();
    let wt: Vec<f64> = weights
        .data()
        .iter()
        .map(|&v| transform(v, gamma))
        .collect();
    let mut r = vec![0.0; input.len()];
    // (input flat index, weight flat index) for every in-bounds tap of one output.
    let mut taps: Vec<(usize, usize)> = Vec::with_capacity(ic * kh * kw);
    for o in 0..oc {
        for oy in 0..oh {
            for ox in 0..ow {
                let ri = upstream[(o * oh + oy) * ow + ox];
                if ri == 0.0 {
                    continue;
                }
                taps.clear();
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
                            taps.push(((c * h + iy) * w + ix, ((o * ic + c) * kh + ky) * kw + kx));
                        }
                    }
                }
                let mut z = 0.0;
                for &(ai, wi) in &taps {
                    z += a[ai] as f64 * wt[wi];
                }
                if let Some(b) = bias {
                    z += transform(b.data()[o], gamma);
                }
                let denom = stabilize(z, stab);
                if denom == 0.0 {
                    return Err(Error::ZeroDenominator {
                        layer,
                        neuron: (o * oh + oy) * ow + ox,
                    });
                }
                let s = ri / denom;
                for &(ai, wi) in &taps {
                    let msg = a[ai] as f64 * wt[wi] * s;
                    r[ai] += msg;
                    if let Some(e) = edges.as_deref_mut() {
                        e[wi] += msg.abs();
                    }
                }
            }
        }
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn neuron(w: [f32; 2]) -> Network {
        let layers = vec![Layer::dense(
            Tensor::new(vec![1, 2], w.to_vec()).unwrap(),
            None,
        )];
        Network::new(layers, vec![2], 1).unwrap()
    }

    fn run(rule: Rule, epsilon: f64, gamma: f64) -> Vec<f64> {
        let net = neuron([0.5, 0.25]);
        let trace = net.forward(&Tensor::from_vec(vec![1.0, 2.0])).unwrap();
        // The seeded logit is z = 1.0, so R_out = 1.0.
        assert_eq!(trace.logits.data(), &[1.0]);
        let rules = LrpRuleConfig {
            dense: rule,
            epsilon,
            gamma,
            gamma_stabilizer: 0.0,
            ..LrpRuleConfig::default()
        };
        propagate_relevance(&net, &trace, &rules).unwrap().input
    }

    #[test]
    fn zero_rule_single_neuron() {
        assert_eq!(run(Rule::Zero, 0.0, 0.0), vec![0.5, 0.5]);
    }

    #[test]
    fn gamma_rule_cancels_on_positive_inputs() {
        let r = run(Rule::Gamma, 0.0, 0.25);
        assert!((r[0] - 0.5).abs() < 1e-15 && (r[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn epsilon_rule_absorbs_stabilizer() {
        assert_eq!(run(Rule::Epsilon, 1.0, 0.0), vec![0.25, 0.25]);
    }

    #[test]
    fn negative_denominator_gets_negative_stabilizer() {
        assert_eq!(stabilize(-2.0, 1.0), -3.0);
        assert_eq!(stabilize(0.0, 1.0), 1.0);
    }

    #[test]
    fn zero_denominator_without_stabilizer_names_neuron() {
        let l1 = Layer::dense(
            Tensor::new(vec![2, 2], vec![1.0, -1.0, 1.0, 1.0]).unwrap(),
            None,
        );
        let l2 = Layer::dense(Tensor::new(vec![1, 2], vec![1.0, 1.0]).unwrap(), None);
        let net = Network::new(vec![l1, l2], vec![2], 1).unwrap();
        let trace = net.forward(&Tensor::from_vec(vec![1.0, 1.0])).unwrap();
        // Hidden unit 0 has z = 0 but a_0 = 0 gives it no relevance: not an error.
        let rules = LrpRuleConfig {
            dense: Rule::Zero,
            ..LrpRuleConfig::default()
        };
        let map = propagate_relevance(&net, &trace, &rules).unwrap();
        assert_eq!(map.layers[0], vec![0.0, 2.0]);

        let stuck = Layer::dense(Tensor::new(vec![1, 2], vec![1.0, -1.0]).unwrap(), None);
        let net = Network::new(vec![stuck], vec![2], 1).unwrap();
        let mut trace = net.forward(&Tensor::from_vec(vec![1.0, 1.0])).unwrap();
        // Nonzero seed on a neuron whose denominator is zero.
        trace.logits = Tensor::from_vec(vec![1.0]);
        let e = propagate_relevance(&net, &trace, &rules).unwrap_err();
        assert!(
            matches!(
                e,
                Error::ZeroDenominator {
                    layer: 0,
                    neuron: 0
                }
            ),
            "{e}"
        );
    }

    #[test]
    fn maxpool_routes_to_winner() {
        let net = Network::new(
            vec![Layer::MaxPool { size: 2, stride: 2 }, Layer::Flatten],
            vec![1, 2, 2],
            1,
        )
        .unwrap();
        let x = Tensor::new(vec![1, 2, 2], vec![0.1, 0.7, 0.7, 0.2]).unwrap();
        let trace = net.forward(&x).unwrap();
        let map = propagate_relevance(&net, &trace, &LrpRuleConfig::default()).unwrap();
        assert_eq!(map.input, vec![0.0, 0.7f32 as f64, 0.0, 0.0]);
    }

    #[test]
    fn trace_from_other_network_is_rejected() {
        let a = neuron([0.5, 0.25]);
        let b = Network::new(
            vec![Layer::dense(Tensor::zeros(vec![1, 3]), None)],
            vec![3],
            1,
        )
        .unwrap();
        let trace = b.forward(&Tensor::zeros(vec![3])).unwrap();
        assert!(matches!(
            propagate_relevance(&a, &trace, &LrpRuleConfig::default()),
            Err(Error::TraceMismatch(_))
        ));
    }

    #[test]
    fn invalid_rule_parameters() {
        let rules = LrpRuleConfig {
            gamma: -1.0,
            ..LrpRuleConfig::default()
        };
        assert!(rules.validate().is_err());
    }
}
