//! Single-bit flips on binary32 weight storage, BER-driven fault planning and
//! application to cloned models.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lrp::{ProtectionSet, WeightScores};
use crate::nn::Network;
use crate::rank::{round_half_even, top_k_descending};

/// Bit position used by the default fault model (second exponent bit from the top).
pub const DEFAULT_FAULT_BIT: u32 = 29;

/// Flips bit `bit` (0 = least significant) of a raw 32-bit word.
pub fn flip_word(word: u32, bit: u32) -> Result<u32> {
    if bit > 31 {
        return Err(Error::BitIndex(bit));
    }
    Ok(word ^ (1u32 << bit))
}

/// Flips one bit of the binary32 representation of `value`.
pub fn flip_bit(value: f32, bit: u32) -> Result<f32> {
    flip_word(value.to_bits(), bit).map(f32::from_bits)
}

/// Storage word a flip lands in: the in-place weight or one of its two replicas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Replica {
    Original,
    R1,
    R2,
}

impl Replica {
    pub const ALL: [Replica; 3] = [Replica::Original, Replica::R1, Replica::R2];

    pub fn as_str(self) -> &'static str {
        match self {
            Replica::Original => "original",
            Replica::R1 => "r1",
            Replica::R2 => "r2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BitFlip {
    pub weight_index: usize,
    pub replica: Replica,
    pub bit_index: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    Random,
    Magnitude,
    Xai,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 3] = [
        StrategyKind::Random,
        StrategyKind::Magnitude,
        StrategyKind::Xai,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Random => "random",
            StrategyKind::Magnitude => "magnitude",
            StrategyKind::Xai => "xai",
        }
    }

    /// Targets are a fixed ranking rather than a random draw.
    pub fn is_deterministic(self) -> bool {
        !matches!(self, StrategyKind::Random)
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "random" => Ok(StrategyKind::Random),
            "magnitude" => Ok(StrategyKind::Magnitude),
            "xai" | "lrp" => Ok(StrategyKind::Xai),
            other => Err(Error::Config(format!("unknown strategy {other:?}"))),
        }
    }
}

/// Which bit of each targeted word is flipped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum BitMode {
    Fixed(u32),
    Uniform,
}

impl Default for BitMode {
    fn default() -> Self {
        BitMode::Fixed(DEFAULT_FAULT_BIT)
    }
}

impl fmt::Display for BitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BitMode::Fixed(b) => write!(f, "fixed{b}"),
            BitMode::Uniform => f.write_str("uniform"),
        }
    }
}

impl FromStr for BitMode {
    type Err = Error;

    /// Accepts `fixed29`, `29`, `uniform` and `random`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "uniform" || s == "random" {
            return Ok(BitMode::Uniform);
        }
        let digits = s.strip_prefix("fixed").unwrap_or(&s);
        let bit: u32 = digits
            .parse()
            .map_err(|_| Error::Config(format!("unknown bit mode {s:?}")))?;
        if bit > 31 {
            return Err(Error::BitIndex(bit));
        }
        Ok(BitMode::Fixed(bit))
    }
}

impl TryFrom<String> for BitMode {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<BitMode> for String {
    fn from(m: BitMode) -> String {
        m.to_string()
    }
}

/// How a bit error rate converts to a flip count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BerSemantics {
    /// `round(ber * words)` words each get one flipped bit.
    #[default]
    PerWeight,
    /// `round(ber * 32 * words)` flips (clamped to the word count).
    PerBit,
}

impl BerSemantics {
    /// Flip count for `words` storage words, and whether it had to be clamped.
    pub fn flip_count(self, ber: f64, words: usize) -> (usize, bool) {
        let raw = match self {
            BerSemantics::PerWeight => round_half_even(ber * words as f64),
            BerSemantics::PerBit => round_half_even(ber * 32.0 * words as f64),
        };
        if raw > words {
            (words, true)
        } else {
            (raw, false)
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct InjectionStrategy<'a> {
    pub kind: StrategyKind,
    pub scores: Option<&'a WeightScores>,
    pub bit_mode: BitMode,
    pub semantics: BerSemantics,
}

impl<'a> InjectionStrategy<'a> {
    pub fn new(kind: StrategyKind) -> Self {
        InjectionStrategy {
            kind,
            scores: None,
            bit_mode: BitMode::default(),
            semantics: BerSemantics::default(),
        }
    }

    pub fn with_scores(mut self, scores: &'a WeightScores) -> Self {
        self.scores = Some(scores);
        self
    }

    pub fn with_bit_mode(mut self, bit_mode: BitMode) -> Self {
        self.bit_mode = bit_mode;
        self
    }

    pub fn with_semantics(mut self, semantics: BerSemantics) -> Self {
        self.semantics = semantics;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultPlan {
    pub flips: Vec<BitFlip>,
    pub ber: f64,
    pub nt: usize,
    /// Words the plan was drawn over: `nt`, or `nt + 2 * protected` for storage-uniform plans.
    pub storage_words: usize,
    pub nbf: usize,
    pub strategy: StrategyKind,
    pub seed: u64,
    pub bit_mode: BitMode,
    pub semantics: BerSemantics,
    /// The requested flip count exceeded the available words.
    pub clamped: bool,
}

impl FaultPlan {
    /// A plan from explicit flips, e.g. read back from an audit file.
    pub fn from_flips(flips: Vec<BitFlip>, nt: usize) -> Self {
        FaultPlan {
            nbf: flips.len(),
            flips,
            ber: 0.0,
            nt,
            storage_words: nt,
            strategy: StrategyKind::Random,
            seed: 0,
            bit_mode: BitMode::default(),
            semantics: BerSemantics::default(),
            clamped: false,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.flips.is_empty()
    }

    /// The flips that land in original (in-place) words.
    pub fn originals_only(&self) -> FaultPlan {
        let flips: Vec<BitFlip> = self
            .flips
            .iter()
            .copied()
            .filter(|f| f.replica == Replica::Original)
            .collect();
        FaultPlan {
            nbf: flips.len(),
            flips,
            ..self.clone()
        }
    }

    fn validate(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.flips.len());
        for f in &self.flips {
            if f.weight_index >= self.nt {
                return Err(Error::WeightIndex {
                    index: f.weight_index,
                    nt: self.nt,
                });
            }
            if f.bit_index > 31 {
                return Err(Error::BitIndex(f.bit_index));
            }
            if !seen.insert(*f) {
                return Err(Error::InvalidPlan(format!(
                    "duplicate flip (weight {}, {}, bit {})",
                    f.weight_index,
                    f.replica.as_str(),
                    f.bit_index
                )));
            }
        }
        Ok(())
    }
}

fn check_ber(ber: f64) -> Result<()> {
    if (0.0..=1.0).contains(&ber) {
        Ok(())
    } else {
        Err(Error::InvalidBer(ber))
    }
}

fn draw_bits(rng: &mut ChaCha8Rng, mode: BitMode, n: usize) -> Vec<u32> {
    match mode {
        BitMode::Fixed(b) => vec![b; n],
        BitMode::Uniform => (0..n).map(|_| rng.gen_range(0..32)).collect(),
    }
}

/// Plans `round(ber * nt)` single-bit flips over the unprotected weights.
///
/// `weights` is the flat weight view (global index order); it is only consulted by
/// the magnitude strategy. The plan depends on nothing but its arguments.
pub fn plan_injection(
    nt: usize,
    ber: f64,
    strategy: &InjectionStrategy<'_>,
    weights: &[f32],
    seed: u64,
) -> Result<FaultPlan> {
    check_ber(ber)?;
    if nt == 0 {
        return Err(Error::InvalidPlan("model has no weights".into()));
    }
    if let BitMode::Fixed(b) = strategy.bit_mode {
        if b > 31 {
            return Err(Error::BitIndex(b));
        }
    }
    let scores = match strategy.kind {
        StrategyKind::Xai => match strategy.scores {
            Some(s) if s.len() == nt => Some(s),
            other => {
                return Err(Error::MissingScores {
                    expected: nt,
                    actual: other.map(WeightScores::len),
                })
            }
        },
        _ => None,
    };
    if strategy.kind == StrategyKind::Magnitude && weights.len() != nt {
        return Err(Error::InvalidPlan(format!(
            "weight view holds {} values for {nt} weights",
            weights.len()
        )));
    }
    let (nbf, clamped) = strategy.semantics.flip_count(ber, nt);
    if clamped {
        log::warn!("flip count for ber {ber} clamped to {nt} weights");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let targets = match strategy.kind {
        StrategyKind::Random => index::sample(&mut rng, nt, nbf).into_vec(),
        StrategyKind::Magnitude => {
            let mags: Vec<f64> = weights.iter().map(|w| w.abs() as f64).collect();
            top_k_descending(&mags, nbf)
        }
        StrategyKind::Xai => top_k_descending(&scores.expect("checked above").scores, nbf),
    };
    let bits = draw_bits(&mut rng, strategy.bit_mode, targets.len());
    let mut flips: Vec<BitFlip> = targets
        .into_iter()
        .zip(bits)
        .map(|(weight_index, bit_index)| BitFlip {
            weight_index,
            replica: Replica::Original,
            bit_index,
        })
        .collect();
    flips.sort_by_key(|f| f.weight_index);
    Ok(FaultPlan {
        flips,
        ber,
        nt,
        storage_words: nt,
        nbf,
        strategy: strategy.kind,
        seed,
        bit_mode: strategy.bit_mode,
        semantics: strategy.semantics,
        clamped,
    })
}

/// Plans flips drawn uniformly over every storage word of a protected model:
/// the `nt` in-place weights followed by the two replica tables.
pub fn plan_storage_uniform(
    nt: usize,
    protection: &ProtectionSet,
    ber: f64,
    bit_mode: BitMode,
    semantics: BerSemantics,
    seed: u64,
) -> Result<FaultPlan> {
    check_ber(ber)?;
    if nt == 0 {
        return Err(Error::InvalidPlan("model has no weights".into()));
    }
    let p = protection.len();
    let words = nt + 2 * p;
    let (nbf, clamped) = semantics.flip_count(ber, words);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let slots = index::sample(&mut rng, words, nbf).into_vec();
    let bits = draw_bits(&mut rng, bit_mode, slots.len());
    let mut flips: Vec<BitFlip> = slots
        .into_iter()
        .zip(bits)
        .map(|(s, bit_index)| {
            let (weight_index, replica) = if s < nt {
                (s, Replica::Original)
            } else if s < nt + p {
                (protection.indices[s - nt], Replica::R1)
            } else {
                (protection.indices[s - nt - p], Replica::R2)
            };
            BitFlip {
                weight_index,
                replica,
                bit_index,
            }
        })
        .collect();
    flips.sort_by_key(|f| (f.weight_index, f.replica));
    Ok(FaultPlan {
        flips,
        ber,
        nt,
        storage_words: words,
        nbf,
        strategy: StrategyKind::Random,
        seed,
        bit_mode,
        semantics,
        clamped,
    })
}

/// A model whose weight storage can take flips.
pub trait FaultTarget: Clone {
    fn weight_count(&self) -> usize;

    /// Flips one bit in place, returning the word before and after.
    fn flip(&mut self, flip: &BitFlip) -> Result<(u32, u32)>;
}

impl FaultTarget for Network {
    fn weight_count(&self) -> usize {
        Network::weight_count(self)
    }

    fn flip(&mut self, flip: &BitFlip) -> Result<(u32, u32)> {
        if flip.replica != Replica::Original {
            return Err(Error::UnprotectedReplica {
                weight_index: flip.weight_index,
                replica: flip.replica.as_str(),
            });
        }
        let nt = Network::weight_count(self);
        let w = self
            .weight_mut(flip.weight_index)
            .ok_or(Error::WeightIndex {
                index: flip.weight_index,
                nt,
            })?;
        let before = w.to_bits();
        let after = flip_word(before, flip.bit_index)?;
        *w = f32::from_bits(after);
        Ok((before, after))
    }
}

/// One line of the audit log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppliedFlip {
    pub weight_index: usize,
    pub replica: Replica,
    pub bit_index: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub before_hex: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub after_hex: Option<String>,
}

impl AppliedFlip {
    pub fn bit_flip(&self) -> BitFlip {
        BitFlip {
            weight_index: self.weight_index,
            replica: self.replica,
            bit_index: self.bit_index,
        }
    }
}

pub fn word_hex(word: u32) -> String {
    format!("0x{word:08x}")
}

/// Applies `plan` to a copy of `model`; the source is never touched.
pub fn apply_faults<T: FaultTarget>(model: &T, plan: &FaultPlan) -> Result<(T, Vec<AppliedFlip>)> {
    if plan.nt != model.weight_count() {
        return Err(Error::InvalidPlan(format!(
            "plan was built for {} weights, model has {}",
            plan.nt,
            model.weight_count()
        )));
    }
    plan.validate()?;
    let mut copy = model.clone();
    let mut log = Vec::with_capacity(plan.flips.len());
    for f in &plan.flips {
        let (before, after) = copy.flip(f)?;
        log.push(AppliedFlip {
            weight_index: f.weight_index,
            replica: f.replica,
            bit_index: f.bit_index,
            before_hex: Some(word_hex(before)),
            after_hex: Some(word_hex(after)),
        });
    }
    Ok((copy, log))
}

/// Checks that recorded `before_hex` values (where present) match what was applied.
pub fn check_recorded(recorded: &[AppliedFlip], applied: &[AppliedFlip]) -> Result<()> {
    for (r, a) in recorded.iter().zip(applied) {
        if let Some(before) = &r.before_hex {
            if Some(before) != a.before_hex.as_ref() {
                return Err(Error::InvalidPlan(format!(
                    "weight {} ({}): plan expects {before}, model holds {}",
                    r.weight_index,
                    r.replica.as_str(),
                    a.before_hex.as_deref().unwrap_or("?")
                )));
            }
        }
    }
    Ok(())
}

pub fn write_flips_jsonl(path: impl AsRef<Path>, flips: &[AppliedFlip]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for f in flips {
        serde_json::to_writer(&mut out, f).map_err(|e| Error::json(path, e))?;
        out.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&out).map_err(|e| Error::io(path, e))
}

/// Reads a JSON-lines flip file; blank lines are skipped.
pub fn read_flips_jsonl(path: impl AsRef<Path>) -> Result<Vec<AppliedFlip>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut flips = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        flips.push(serde_json::from_str(&line).map_err(|e| Error::json(path, e))?);
    }
    Ok(flips)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_io::{random_dense, ModelHash};

    #[test]
    fn low_nibble_flip() {
        let w = f32::from_bits(0b0101);
        assert_eq!(flip_bit(w, 3).unwrap().to_bits(), 0b1101);
    }

    #[test]
    fn bit29_of_one() {
        // 0x3F800000 has exponent 127 = 0b0111_1111; bit 29 is exponent bit 6, so
        // clearing it leaves exponent 63, i.e. 2^-64.
        let f = flip_bit(1.0, 29).unwrap();
        assert_eq!(f.to_bits(), 0x1F80_0000);
        assert_eq!(f, 2f32.powi(-64));
        // Bit 30 (exponent MSB) takes 1.0 to +inf; bits 29 and 30 together give 2^64.
        assert_eq!(flip_bit(1.0, 30).unwrap(), f32::INFINITY);
        assert_eq!(f32::from_bits(0x3F80_0000 ^ 0x6000_0000), 2f32.powi(64));
    }

    #[test]
    fn bit29_blows_up_large_weights() {
        assert_eq!(flip_bit(2.0, 29).unwrap(), 2f32.powi(65));
    }

    #[test]
    fn out_of_range_bit() {
        assert!(matches!(flip_bit(1.0, 32), Err(Error::BitIndex(32))));
    }

    #[test]
    fn ber_arithmetic() {
        let s = InjectionStrategy::new(StrategyKind::Random);
        let plan = plan_injection(50_000, 1e-4, &s, &[], 1).unwrap();
        assert_eq!(plan.nbf, 5);
        assert_eq!(plan.flips.len(), 5);
        let empty = plan_injection(50_000, 0.0, &s, &[], 1).unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn per_bit_semantics_scales_by_word_width() {
        assert_eq!(BerSemantics::PerBit.flip_count(1e-4, 50_000), (160, false));
        assert_eq!(BerSemantics::PerBit.flip_count(0.5, 10), (10, true));
    }

    #[test]
    fn ber_out_of_range() {
        let s = InjectionStrategy::new(StrategyKind::Random);
        for ber in [-0.1, 1.1, f64::NAN] {
            assert!(matches!(
                plan_injection(10, ber, &s, &[], 0),
                Err(Error::InvalidBer(_))
            ));
        }
    }

    #[test]
    fn magnitude_targets_by_hand() {
        let s = InjectionStrategy::new(StrategyKind::Magnitude);
        // nbf = round(0.6 * 3) = 2
        let plan = plan_injection(3, 0.6, &s, &[0.1, -5.0, 2.0], 0).unwrap();
        let idx: Vec<usize> = plan.flips.iter().map(|f| f.weight_index).collect();
        assert_eq!(idx, vec![1, 2]);
        assert!(plan.flips.iter().all(|f| f.bit_index == 29));
    }

    #[test]
    fn xai_needs_scores() {
        let s = InjectionStrategy::new(StrategyKind::Xai);
        assert!(matches!(
            plan_injection(3, 0.5, &s, &[0.0; 3], 0),
            Err(Error::MissingScores {
                expected: 3,
                actual: None
            })
        ));
        let short = WeightScores {
            scores: vec![1.0],
            calibration_size: 1,
        };
        assert!(plan_injection(3, 0.5, &s.with_scores(&short), &[0.0; 3], 0).is_err());
    }

    #[test]
    fn full_ber_hits_every_weight_once() {
        let s = InjectionStrategy::new(StrategyKind::Random).with_bit_mode(BitMode::Uniform);
        let plan = plan_injection(100, 1.0, &s, &[], 3).unwrap();
        let mut idx: Vec<usize> = plan.flips.iter().map(|f| f.weight_index).collect();
        idx.dedup();
        assert_eq!(idx, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn empty_plan_is_identity_and_source_untouched() {
        let net = random_dense(1, &[4, 3, 2]);
        let before = ModelHash::of_network(&net);
        let s = InjectionStrategy::new(StrategyKind::Random);
        let (copy, log) =
            apply_faults(&net, &plan_injection(18, 0.0, &s, &[], 0).unwrap()).unwrap();
        assert!(copy.bit_eq(&net) && log.is_empty());
        let (copy, _) = apply_faults(&net, &plan_injection(18, 0.5, &s, &[], 0).unwrap()).unwrap();
        assert!(!copy.bit_eq(&net));
        assert_eq!(ModelHash::of_network(&net), before);
    }

    #[test]
    fn single_flip_on_one() {
        let mut net = random_dense(1, &[2, 1]);
        *net.weight_mut(0).unwrap() = 1.0;
        let plan = FaultPlan::from_flips(
            vec![BitFlip {
                weight_index: 0,
                replica: Replica::Original,
                bit_index: 29,
            }],
            2,
        );
        let (copy, log) = apply_faults(&net, &plan).unwrap();
        assert_eq!(copy.weight(0), Some(2f32.powi(-64)));
        assert_eq!(log[0].before_hex.as_deref(), Some("0x3f800000"));
        assert_eq!(log[0].after_hex.as_deref(), Some("0x1f800000"));
    }

    #[test]
    fn plan_applied_twice_restores() {
        let net = random_dense(8, &[5, 4, 3]);
        let s = InjectionStrategy::new(StrategyKind::Random).with_bit_mode(BitMode::Uniform);
        let plan = plan_injection(32, 0.3, &s, &[], 17).unwrap();
        let (once, _) = apply_faults(&net, &plan).unwrap();
        let (twice, _) = apply_faults(&once, &plan).unwrap();
        assert!(twice.bit_eq(&net));
    }

    #[test]
    fn replica_on_plain_network_is_error() {
        let net = random_dense(1, &[2, 1]);
        let plan = FaultPlan::from_flips(
            vec![BitFlip {
                weight_index: 0,
                replica: Replica::R1,
                bit_index: 0,
            }],
            2,
        );
        assert!(matches!(
            apply_faults(&net, &plan),
            Err(Error::UnprotectedReplica {
                weight_index: 0,
                ..
            })
        ));
    }

    #[test]
    fn duplicate_flips_rejected() {
        let net = random_dense(1, &[2, 1]);
        let f = BitFlip {
            weight_index: 1,
            replica: Replica::Original,
            bit_index: 4,
        };
        let plan = FaultPlan::from_flips(vec![f, f], 2);
        assert!(matches!(
            apply_faults(&net, &plan),
            Err(Error::InvalidPlan(_))
        ));
    }

    #[test]
    fn storage_plan_covers_replicas() {
        let prot = ProtectionSet::new(vec![2, 5], 0.1);
        let plan = plan_storage_uniform(
            10,
            &prot,
            1.0,
            BitMode::default(),
            BerSemantics::PerWeight,
            0,
        )
        .unwrap();
        assert_eq!(plan.storage_words, 14);
        assert_eq!(plan.nbf, 14);
        let r1: Vec<usize> = plan
            .flips
            .iter()
            .filter(|f| f.replica == Replica::R1)
            .map(|f| f.weight_index)
            .collect();
        assert_eq!(r1, vec![2, 5]);
        assert_eq!(plan.originals_only().nbf, 10);
    }

    #[test]
    fn bit_mode_parsing() {
        assert_eq!("29".parse::<BitMode>().unwrap(), BitMode::Fixed(29));
        assert_eq!("fixed29".parse::<BitMode>().unwrap(), BitMode::Fixed(29));
        assert_eq!("random".parse::<BitMode>().unwrap(), BitMode::Uniform);
        assert!("40".parse::<BitMode>().is_err());
        let json = serde_json::to_string(&BitMode::Fixed(29)).unwrap();
        assert_eq!(json, "\"fixed29\"");
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plan.jsonl");
        let net = random_dense(2, &[3, 2]);
        let s = InjectionStrategy::new(StrategyKind::Random).with_bit_mode(BitMode::Uniform);
        let (_, log) = apply_faults(&net, &plan_injection(6, 0.5, &s, &[], 4).unwrap()).unwrap();
        write_flips_jsonl(&path, &log).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().next().unwrap().contains("\"before_hex\":\"0x"));
        assert_eq!(read_flips_jsonl(&path).unwrap(), log);
    }
}
