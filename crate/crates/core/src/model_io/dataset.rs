use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{LabeledDataset, Tensor};

pub const DATASET_MAGIC: [u8; 4] = *b"NND1";

/// Layout: magic `NND1`, u32 sample count, u32 rank, `rank` u32 dims, then every
/// sample's values as little-endian binary32, then one u32 label per sample.
pub fn encode_dataset(dataset: &LabeledDataset, sample_shape: &[usize]) -> Result<Vec<u8>> {
    if let Some(t) = dataset.inputs.iter().find(|t| t.shape() != sample_shape) {
        return Err(Error::InvalidDataset(format!(
            "sample shape {:?} differs from {sample_shape:?}",
            t.shape()
        )));
    }
    let per: usize = sample_shape.iter().product();
    let u32_of = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| Error::InvalidDataset(format!("{what} {v} exceeds u32")))
    };
    let mut out = Vec::with_capacity(12 + 4 * sample_shape.len() + dataset.len() * (per + 1) * 4);
    out.extend_from_slice(&DATASET_MAGIC);
    out.extend_from_slice(&u32_of(dataset.len(), "sample count")?.to_le_bytes());
    out.extend_from_slice(&u32_of(sample_shape.len(), "rank")?.to_le_bytes());
    for &d in sample_shape {
        out.extend_from_slice(&u32_of(d, "dimension")?.to_le_bytes());
    }
    for t in &dataset.inputs {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    for &l in &dataset.labels {
        out.extend_from_slice(&u32_of(l, "label")?.to_le_bytes());
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::Truncated(format!(
                    "{what}: need {n} bytes at offset {}, file has {}",
                    self.pos,
                    self.bytes.len()
                ))
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Parses a dataset file. Returns the dataset and the per-sample shape.
pub fn decode_dataset(bytes: &[u8]) -> Result<(LabeledDataset, Vec<usize>)> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != DATASET_MAGIC {
        return Err(Error::BadMagic {
            expected: DATASET_MAGIC,
            found: [magic[0], magic[1], magic[2], magic[3]],
        });
    }
    let count = r.u32("sample count")? as usize;
    let rank = r.u32("rank")? as usize;
    let shape = (0..rank)
        .map(|_| r.u32("dimension").map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let per: usize = shape.iter().product();
    let values = r.take(
        count
            .checked_mul(per)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::InvalidDataset("sample payload size overflows".into()))?,
        "sample values",
    )?;
    let inputs = values
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect::<Vec<_>>()
        .chunks(per.max(1))
        .take(count)
        .map(|c| Tensor::new(shape.clone(), c.to_vec()))
        .collect::<Result<Vec<_>>>()?;
    let labels = (0..count)
        .map(|_| r.u32("labels").map(|l| l as usize))
        .collect::<Result<Vec<_>>>()?;
    if r.pos != bytes.len() {
        return Err(Error::InvalidDataset(format!(
            "{} trailing bytes after labels",
            bytes.len() - r.pos
        )));
    }
    // Zero-sized samples produce no chunks; keep the declared count anyway.
    let inputs = if per == 0 {
        vec![Tensor::zeros(shape.clone()); count]
    } else {
        inputs
    };
    Ok((LabeledDataset::new(inputs, labels)?, shape))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_dataset(&bytes).map(|(d, _)| d)
}

/// Writes `dataset` to `path`. An empty dataset needs `sample_shape` to be given.
pub fn save_dataset(
    dataset: &LabeledDataset,
    sample_shape: &[usize],
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_dataset(dataset, sample_shape)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
