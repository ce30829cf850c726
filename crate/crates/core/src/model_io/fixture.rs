use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{LabeledDataset, Layer, Network, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    /// Flatten, 784-64-32-10 dense with ReLU, softmax.
    Mlp,
    /// Conv 8x3x3, ReLU, 2x2 max-pool, flatten, dense to 10, softmax.
    Cnn,
}

const WEIGHT_RANGE: f32 = 0.5;

fn uniform(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| rng.gen_range(-WEIGHT_RANGE..=WEIGHT_RANGE))
        .collect();
    Tensor::new(shape, data).expect("sized from shape")
}

fn zero_bias(n: usize) -> Option<Tensor> {
    Some(Tensor::zeros(vec![n]))
}

/// Seeded untrained network on `[1, 28, 28]` inputs with 10 classes. Weights are
/// uniform in `[-0.5, 0.5]`, biases zero.
pub fn generate_fixture(seed: u64, architecture: Architecture) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = match architecture {
        Architecture::Mlp => {
            let mut layers = vec![Layer::Flatten];
            for (inp, out) in [(784, 64), (64, 32), (32, 10)] {
                layers.push(Layer::dense(
                    uniform(&mut rng, vec![out, inp]),
                    zero_bias(out),
                ));
                layers.push(Layer::Relu);
            }
            layers.pop();
            layers.push(Layer::Softmax);
            layers
        }
        Architecture::Cnn => vec![
            Layer::conv2d(uniform(&mut rng, vec![8, 1, 3, 3]), zero_bias(8), 1, 0),
            Layer::Relu,
            Layer::MaxPool { size: 2, stride: 2 },
            Layer::Flatten,
            Layer::dense(uniform(&mut rng, vec![10, 8 * 13 * 13]), zero_bias(10)),
            Layer::Softmax,
        ],
    };
    Network::new(layers, vec![1, 28, 28], 10).expect("fixture architecture is consistent")
}

/// Seeded dense ReLU network with the given layer widths (`widths[0]` inputs,
/// last entry classes), no biases, no softmax.
pub fn random_dense(seed: u64, widths: &[usize]) -> Network {
    assert!(widths.len() >= 2, "need at least input and output widths");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::new();
    for pair in widths.windows(2) {
        layers.push(Layer::dense(
            uniform(&mut rng, vec![pair[1], pair[0]]),
            None,
        ));
        layers.push(Layer::Relu);
    }
    layers.pop();
    Network::new(layers, vec![widths[0]], *widths.last().unwrap()).expect("dense widths chain")
}

/// Seeded inputs uniform in `[0, 1)` with labels uniform over `classes`.
pub fn random_dataset(seed: u64, count: usize, shape: &[usize], classes: usize) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per: usize = shape.iter().product();
    let inputs = (0..count)
        .map(|_| {
            Tensor::new(shape.to_vec(), (0..per).map(|_| rng.gen::<f32>()).collect())
                .expect("sized from shape")
        })
        .collect();
    let labels = (0..count).map(|_| rng.gen_range(0..classes)).collect();
    LabeledDataset { inputs, labels }
}
