//! Layer-wise relevance propagation and relevance-based weight selection.
//!
//! Dense layers default to the epsilon rule and convolutions to the gamma rule;
//! ReLU, flatten and a trailing softmax pass relevance through unchanged and
//! max-pool hands each window's relevance to its winning input. Bias terms enter
//! the denominators but absorb no relevance of their own.

mod propagate;
mod scores;

pub use propagate::{
    propagate_relevance, propagate_relevance_to, LrpRuleConfig, RelevanceMap, Rule, SeedTarget,
};
pub use scores::{
    check_fraction, read_scores, score_weights, select_top_fraction, write_scores, ProtectionSet,
    RuleNames, ScoresSidecar, WeightScores, SCORES_FILE, SCORES_SIDECAR,
};
