//! Selective triple modular redundancy: protected weights get two side-table
//! replicas and are resolved by majority vote before every evaluation pass.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fault::{flip_word, BitFlip, FaultTarget, Replica};
use crate::lrp::ProtectionSet;
use crate::nn::Network;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicaTriple {
    pub w1: f32,
    pub w2: f32,
    pub w3: f32,
}

impl ReplicaTriple {
    pub fn splat(w: f32) -> Self {
        ReplicaTriple {
            w1: w,
            w2: w,
            w3: w,
        }
    }

    pub fn vote(&self) -> f32 {
        majority_vote(self.w1, self.w2, self.w3)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VotingPolicy {
    /// Whenever two replicas agree bit for bit their value wins; otherwise each bit
    /// takes the majority of its three copies. Both agree on the first case, so a
    /// bitwise majority implements the policy exactly.
    #[default]
    ValueMajorityWithBitwiseFallback,
}

/// Bitwise 2-of-3 majority of the binary32 words.
pub fn majority_vote(a: f32, b: f32, c: f32) -> f32 {
    let (a, b, c) = (a.to_bits(), b.to_bits(), c.to_bits());
    f32::from_bits((a & b) | (a & c) | (b & c))
}

/// A network with a subset of weights triplicated. The first copy of each protected
/// weight is the in-place weight of `base`; the other two live in `replicas`,
/// parallel to `protection.indices`.
#[derive(Debug, Clone)]
pub struct ProtectedModel {
    base: Network,
    protection: ProtectionSet,
    replicas: Vec<(f32, f32)>,
    voting: VotingPolicy,
}

/// Triplicates the weights in `set`.
pub fn protect(network: &Network, set: &ProtectionSet) -> Result<ProtectedModel> {
    let nt = network.weight_count();
    let mut indices = set.indices.clone();
    indices.sort_unstable();
    for pair in indices.windows(2) {
        if pair[0] == pair[1] {
            return Err(Error::DuplicateIndex(pair[0]));
        }
    }
    if let Some(&last) = indices.last() {
        if last >= nt {
            return Err(Error::WeightIndex { index: last, nt });
        }
    }
    let flat = network.flat_weights();
    let replicas = indices.iter().map(|&i| (flat[i], flat[i])).collect();
    Ok(ProtectedModel {
        base: network.clone(),
        protection: ProtectionSet {
            indices,
            fraction: set.fraction,
        },
        replicas,
        voting: VotingPolicy::default(),
    })
}

impl ProtectedModel {
    pub fn base(&self) -> &Network {
        &self.base
    }

    pub fn protection(&self) -> &ProtectionSet {
        &self.protection
    }

    pub fn voting(&self) -> VotingPolicy {
        self.voting
    }

    pub fn protected_count(&self) -> usize {
        self.protection.len()
    }

    /// In-place weights plus both replica tables.
    pub fn storage_words(&self) -> usize {
        self.base.weight_count() + 2 * self.protection.len()
    }

    fn slot(&self, weight_index: usize) -> Option<usize> {
        self.protection.indices.binary_search(&weight_index).ok()
    }

    pub fn triple(&self, weight_index: usize) -> Option<ReplicaTriple> {
        let s = self.slot(weight_index)?;
        let (w2, w3) = self.replicas[s];
        Some(ReplicaTriple {
            w1: self.base.weight(weight_index)?,
            w2,
            w3,
        })
    }

    /// The network seen by inference: every protected weight replaced by its vote.
    pub fn resolve(&self) -> Network {
        let mut net = self.base.clone();
        for (&i, &(w2, w3)) in self.protection.indices.iter().zip(&self.replicas) {
            let w = net.weight_mut(i).expect("protected index validated");
            *w = majority_vote(*w, w2, w3);
        }
        net
    }

    pub fn memory_overhead(&self) -> OverheadReport {
        OverheadReport::new(self.base.weight_count(), self.protection.len())
    }
}

impl FaultTarget for ProtectedModel {
    fn weight_count(&self) -> usize {
        self.base.weight_count()
    }

    fn flip(&mut self, flip: &BitFlip) -> Result<(u32, u32)> {
        if flip.replica == Replica::Original {
            return self.base.flip(flip);
        }
        let slot = self
            .slot(flip.weight_index)
            .ok_or(Error::UnprotectedReplica {
                weight_index: flip.weight_index,
                replica: flip.replica.as_str(),
            })?;
        let pair = &mut self.replicas[slot];
        let w = if flip.replica == Replica::R1 {
            &mut pair.0
        } else {
            &mut pair.1
        };
        let before = w.to_bits();
        let after = flip_word(before, flip.bit_index)?;
        *w = f32::from_bits(after);
        Ok((before, after))
    }
}

/// Storage cost of protection for binary32 weights with 32-bit replica indices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverheadReport {
    pub nt: usize,
    pub protected: usize,
    pub base_bytes: u64,
    pub replica_bytes: u64,
    pub index_bytes: u64,
    pub replica_percent: f64,
    pub index_percent: f64,
    pub percent_overhead: f64,
}

impl OverheadReport {
    pub fn new(nt: usize, protected: usize) -> Self {
        let base_bytes = 4 * nt as u64;
        let replica_bytes = 8 * protected as u64;
        let index_bytes = 4 * protected as u64;
        let pct = |b: u64| {
            if base_bytes == 0 {
                0.0
            } else {
                // Multiplying first keeps whole-number percentages exact.
                (b as f64 * 100.0) / base_bytes as f64
            }
        };
        OverheadReport {
            nt,
            protected,
            base_bytes,
            replica_bytes,
            index_bytes,
            replica_percent: pct(replica_bytes),
            index_percent: pct(index_bytes),
            percent_overhead: pct(replica_bytes + index_bytes),
        }
    }
}
