use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::{Layer, Network, Tensor};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const WEIGHTS_FILE: &str = "weights.bin";

/// 64-bit content hash of a weight blob: the first eight bytes of its SHA-256
/// digest, read big-endian. Rendered as 16 lowercase hex digits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModelHash(pub u64);

impl ModelHash {
    pub fn of_bytes(bytes: &[u8]) -> Self {
        let digest = Sha256::digest(bytes);
        let mut head = [0u8; 8];
        head.copy_from_slice(&digest[..8]);
        ModelHash(u64::from_be_bytes(head))
    }

    pub fn of_network(network: &Network) -> Self {
        Self::of_bytes(&encode_blob(network).0)
    }

    pub fn parse(s: &str) -> Option<Self> {
        if s.len() != 16 {
            return None;
        }
        u64::from_str_radix(s, 16).ok().map(ModelHash)
    }
}

impl fmt::Display for ModelHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

/// Byte range of one little-endian binary32 tensor inside `weights.bin`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlobRef {
    pub shape: Vec<usize>,
    pub offset: usize,
    pub length: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LayerDescriptor {
    Dense {
        weight: BlobRef,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bias: Option<BlobRef>,
    },
    Conv2d {
        weight: BlobRef,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bias: Option<BlobRef>,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        padding: usize,
    },
    Relu,
    #[serde(rename = "maxpool")]
    MaxPool {
        pool_size: usize,
        stride: usize,
    },
    Flatten,
    Softmax,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub format_version: u32,
    pub input_shape: Vec<usize>,
    pub num_classes: usize,
    pub model_hash: String,
    pub layers: Vec<LayerDescriptor>,
}

/// Serializes every layer's weights then bias, in layer order, and describes the layout.
fn encode_blob(network: &Network) -> (Vec<u8>, Vec<LayerDescriptor>) {
    let mut blob = Vec::new();
    let mut push = |t: &Tensor| {
        let offset = blob.len();
        for v in t.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
        BlobRef {
            shape: t.shape().to_vec(),
            offset,
            length: t.len() * 4,
        }
    };
    let descriptors = network
        .layers()
        .iter()
        .map(|layer| match layer {
            Layer::Dense { weights, bias } => LayerDescriptor::Dense {
                weight: push(weights),
                bias: bias.as_ref().map(&mut push),
            },
            Layer::Conv2d {
                weights,
                bias,
                stride,
                padding,
            } => LayerDescriptor::Conv2d {
                weight: push(weights),
                bias: bias.as_ref().map(&mut push),
                stride: *stride,
                padding: *padding,
            },
            Layer::Relu => LayerDescriptor::Relu,
            Layer::MaxPool { size, stride } => LayerDescriptor::MaxPool {
                pool_size: *size,
                stride: *stride,
            },
            Layer::Flatten => LayerDescriptor::Flatten,
            Layer::Softmax => LayerDescriptor::Softmax,
        })
        .collect();
    (blob, descriptors)
}

pub fn manifest_for(network: &Network) -> (ModelManifest, Vec<u8>) {
    let (blob, layers) = encode_blob(network);
    let manifest = ModelManifest {
        format_version: FORMAT_VERSION,
        input_shape: network.input_shape().to_vec(),
        num_classes: network.num_classes(),
        model_hash: ModelHash::of_bytes(&blob).to_string(),
        layers,
    };
    (manifest, blob)
}

/// Writes `manifest.json` and `weights.bin` into `dir`, creating it if needed.
pub fn save_model(network: &Network, dir: impl AsRef<Path>) -> Result<ModelHash> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (manifest, blob) = manifest_for(network);
    let weights_path = dir.join(WEIGHTS_FILE);
    fs::write(&weights_path, &blob).map_err(|e| Error::io(&weights_path, e))?;
    let manifest_path = dir.join(MANIFEST_FILE);
    let mut text =
        serde_json::to_string_pretty(&manifest).map_err(|e| Error::json(&manifest_path, e))?;
    text.push('\n');
    fs::write(&manifest_path, text).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(ModelHash::of_bytes(&blob))
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<ModelManifest> {
    let path = dir.as_ref().join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(&path, e))
}

pub fn load_model(dir: impl AsRef<Path>) -> Result<Network> {
    let dir = dir.as_ref();
    let manifest = read_manifest(dir)?;
    let weights_path = dir.join(WEIGHTS_FILE);
    let blob = fs::read(&weights_path).map_err(|e| Error::io(&weights_path, e))?;
    decode(&manifest, &blob)
}

/// Builds a network from a manifest and its blob, checking layout, hash and shapes.
pub fn decode(manifest: &ModelManifest, blob: &[u8]) -> Result<Network> {
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Manifest(format!(
            "unsupported format_version {}",
            manifest.format_version
        )));
    }
    let mut refs: Vec<(usize, &BlobRef)> = Vec::new();
    for (i, d) in manifest.layers.iter().enumerate() {
        match d {
            LayerDescriptor::Dense { weight, bias }
            | LayerDescriptor::Conv2d { weight, bias, .. } => {
                refs.push((i, weight));
                refs.extend(bias.iter().map(|b| (i, b)));
            }
            _ => {}
        }
    }
    for (i, r) in &refs {
        let values: usize = r.shape.iter().product();
        if values * 4 != r.length {
            return Err(Error::ShapeInconsistency(format!(
                "layer {i}: shape {:?} needs {} bytes but the blob reference spans {}",
                r.shape,
                values * 4,
                r.length
            )));
        }
        if r.offset
            .checked_add(r.length)
            .is_none_or(|end| end > blob.len())
        {
            return Err(Error::Truncated(format!(
                "layer {i}: bytes {}..{} requested from a {}-byte blob",
                r.offset,
                r.offset.saturating_add(r.length),
                blob.len()
            )));
        }
    }
    let mut spans: Vec<(usize, usize)> = refs
        .iter()
        .filter(|(_, r)| r.length > 0)
        .map(|(_, r)| (r.offset, r.offset + r.length))
        .collect();
    spans.sort_unstable();
    if let Some(w) = spans.windows(2).find(|w| w[1].0 < w[0].1) {
        return Err(Error::ShapeInconsistency(format!(
            "blob ranges {:?} and {:?} overlap",
            w[0], w[1]
        )));
    }

    let actual = ModelHash::of_bytes(blob);
    if ModelHash::parse(&manifest.model_hash) != Some(actual) {
        return Err(Error::HashMismatch {
            declared: manifest.model_hash.clone(),
            actual: actual.to_string(),
        });
    }

    let read = |r: &BlobRef| -> Result<Tensor> {
        let data = blob[r.offset..r.offset + r.length]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Tensor::new(r.shape.clone(), data)
    };
    let layers = manifest
        .layers
        .iter()
        .map(|d| {
            Ok(match d {
                LayerDescriptor::Dense { weight, bias } => {
                    Layer::dense(read(weight)?, bias.as_ref().map(&read).transpose()?)
                }
                LayerDescriptor::Conv2d {
                    weight,
                    bias,
                    stride,
                    padding,
                } => Layer::conv2d(
                    read(weight)?,
                    bias.as_ref().map(&read).transpose()?,
                    *stride,
                    *padding,
                ),
                LayerDescriptor::Relu => Layer::Relu,
                LayerDescriptor::MaxPool { pool_size, stride } => Layer::MaxPool {
                    size: *pool_size,
                    stride: *stride,
                },
                LayerDescriptor::Flatten => Layer::Flatten,
                LayerDescriptor::Softmax => Layer::Softmax,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Network::new(layers, manifest.input_shape.clone(), manifest.num_classes).map_err(|e| match e {
        Error::LayerShape { .. } | Error::InvalidNetwork(_) => {
            Error::ShapeInconsistency(e.to_string())
        }
        other => other,
    })
}
