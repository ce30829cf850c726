//! Relevance-guided selective triple modular redundancy for feed-forward networks.
//!
//! The crate scores every weight of a model with layer-wise relevance propagation,
//! protects the highest-scoring fraction with bitwise-voted replicas, injects
//! single-bit flips into binary32 weight storage, and runs seeded fault campaigns
//! that report accuracy, loss and memory overhead.

pub mod campaign;
pub mod error;
pub mod fault;
pub mod lrp;
pub mod model_io;
pub mod nn;
pub mod rank;
pub mod tmr;

pub use error::{Error, Result};
