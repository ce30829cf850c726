use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::propagate::{propagate_from, EdgeSink, LrpRuleConfig, Rule, SeedTarget};
use crate::error::{Error, Result};
use crate::model_io::ModelHash;
use crate::nn::{LabeledDataset, Network};
use crate::rank::{ceil_count, top_k_descending};

pub const SCORES_FILE: &str = "scores.bin";
pub const SCORES_SIDECAR: &str = "scores.json";

/// Mean absolute relevance message per weight, in global weight order.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightScores {
    pub scores: Vec<f64>,
    pub calibration_size: usize,
}

impl WeightScores {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Samples scored per parallel batch; bounds the number of live per-sample buffers.
const BATCH: usize = 32;

/// Scores every weight by the magnitude of the relevance it carries, averaged over
/// `calibration`. The per-sample contributions are folded in calibration order.
pub fn score_weights(
    network: &Network,
    calibration: &LabeledDataset,
    rules: &LrpRuleConfig,
) -> Result<WeightScores> {
    if calibration.is_empty() {
        return Err(Error::EmptyDataset);
    }
    rules.validate()?;
    let nt = network.weight_count();
    let mut total = vec![0.0f64; nt];
    let samples: Vec<usize> = (0..calibration.len()).collect();
    for batch in samples.chunks(BATCH) {
        let parts = batch
            .par_iter()
            .map(|&i| {
                let trace = network.forward(&calibration.inputs[i])?;
                let class = match rules.target {
                    SeedTarget::PredictedClass => trace.predicted_class,
                    SeedTarget::Label => calibration.labels[i],
                };
                let mut edges = vec![0.0f64; nt];
                propagate_from(
                    network,
                    &trace,
                    rules,
                    class,
                    Some(EdgeSink { scores: &mut edges }),
                )?;
                Ok(edges)
            })
            .collect::<Result<Vec<_>>>()?;
        for part in parts {
            for (t, p) in total.iter_mut().zip(part) {
                *t += p;
            }
        }
    }
    let n = calibration.len() as f64;
    for t in &mut total {
        *t /= n;
    }
    Ok(WeightScores {
        scores: total,
        calibration_size: calibration.len(),
    })
}

/// Sorted global indices of protected weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtectionSet {
    pub indices: Vec<usize>,
    pub fraction: f64,
}

impl ProtectionSet {
    pub fn empty() -> Self {
        ProtectionSet {
            indices: Vec::new(),
            fraction: 0.0,
        }
    }

    /// Sorts `indices`; duplicates are left in place for `protect` to reject.
    pub fn new(mut indices: Vec<usize>, fraction: f64) -> Self {
        indices.sort_unstable();
        ProtectionSet { indices, fraction }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.indices.binary_search(&index).is_ok()
    }
}

pub fn check_fraction(fraction: f64) -> Result<()> {
    if fraction > 0.0 && fraction <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidFraction(fraction))
    }
}

/// The `ceil(fraction * NT)` highest-scoring weights (ties by ascending index).
pub fn select_top_fraction(scores: &WeightScores, fraction: f64) -> Result<ProtectionSet> {
    check_fraction(fraction)?;
    let k = ceil_count(fraction, scores.len());
    Ok(ProtectionSet::new(
        top_k_descending(&scores.scores, k),
        fraction,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoresSidecar {
    pub model_hash: String,
    pub calibration_size: usize,
    pub rules: RuleNames,
    pub epsilon: f64,
    pub gamma: f64,
    #[serde(default)]
    pub gamma_stabilizer: f64,
    pub weight_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleNames {
    pub dense: Rule,
    pub conv2d: Rule,
    pub relu: String,
    pub maxpool: String,
    pub flatten: String,
    pub target: SeedTarget,
}

impl ScoresSidecar {
    pub fn new(scores: &WeightScores, rules: &LrpRuleConfig, model_hash: ModelHash) -> Self {
        ScoresSidecar {
            model_hash: model_hash.to_string(),
            calibration_size: scores.calibration_size,
            rules: RuleNames {
                dense: rules.dense,
                conv2d: rules.conv,
                relu: "pass-through".into(),
                maxpool: "winner-take-all".into(),
                flatten: "reshape".into(),
                target: rules.target,
            },
            epsilon: rules.epsilon,
            gamma: rules.gamma,
            gamma_stabilizer: rules.gamma_stabilizer,
            weight_count: scores.len(),
        }
    }
}

/// Writes `scores.bin` (little-endian f64 per weight) and the `scores.json` sidecar.
pub fn write_scores(
    dir: impl AsRef<Path>,
    scores: &WeightScores,
    rules: &LrpRuleConfig,
    model_hash: ModelHash,
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let bin = dir.join(SCORES_FILE);
    let bytes: Vec<u8> = scores.scores.iter().flat_map(|s| s.to_le_bytes()).collect();
    fs::write(&bin, bytes).map_err(|e| Error::io(&bin, e))?;
    let side = dir.join(SCORES_SIDECAR);
    let mut text = serde_json::to_string_pretty(&ScoresSidecar::new(scores, rules, model_hash))
        .map_err(|e| Error::json(&side, e))?;
    text.push('\n');
    fs::write(&side, text).map_err(|e| Error::io(&side, e))
}

pub fn read_scores(dir: impl AsRef<Path>) -> Result<(WeightScores, ScoresSidecar)> {
    let dir = dir.as_ref();
    let side = dir.join(SCORES_SIDECAR);
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let sidecar: ScoresSidecar = serde_json::from_str(&text).map_err(|e| Error::json(&side, e))?;
    let bin = dir.join(SCORES_FILE);
    let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    if bytes.len() != sidecar.weight_count * 8 {
        return Err(Error::Truncated(format!(
            "{}: {} bytes for {} scores",
            bin.display(),
            bytes.len(),
            sidecar.weight_count
        )));
    }
    let scores = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok((
        WeightScores {
            scores,
            calibration_size: sidecar.calibration_size,
        },
        sidecar,
    ))
}
