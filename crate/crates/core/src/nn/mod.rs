//! Deterministic feed-forward inference: dense, 2-D convolution, ReLU, max-pool,
//! flatten and softmax layers over row-major binary32 tensors.

mod layer;
mod network;
mod tensor;

pub(crate) use layer::max_pool;
pub use layer::{Layer, LayerKind};
pub use network::{
    evaluate, sample_loss, Evaluation, ForwardTrace, LabeledDataset, Network, PROB_FLOOR,
};
pub use tensor::{argmax, Tensor};
