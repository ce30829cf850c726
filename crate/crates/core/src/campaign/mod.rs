//! Seeded fault campaigns: sensitivity of the unprotected model to targeted flips,
//! reliability of selectively protected models, and the search for the smallest
//! protection fraction that holds an accuracy-loss budget.

mod report;
mod run;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fault::{BerSemantics, BitMode, StrategyKind};
use crate::lrp::{check_fraction, LrpRuleConfig};
use crate::tmr::OverheadReport;

pub use report::{
    emit_report, summary_text, CurveRow, OverheadRow, CURVES_FILE, OVERHEAD_FILE, REPORT_FILE,
    SUMMARY_FILE,
};
pub use run::{
    find_min_protection, find_min_protection_with, load_inputs, protection_ranking,
    run_min_protection, run_min_protection_with, run_sensitivity, run_sensitivity_with,
    run_tmr_eval, run_tmr_eval_with, CampaignInputs, FRACTION_GRID,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    pub model_path: PathBuf,
    pub dataset_path: PathBuf,
    /// Not echoed into reports, so reruns into different directories compare equal.
    #[serde(skip_serializing)]
    pub output_dir: Option<PathBuf>,
    pub calibration_size: usize,
    pub ber_grid: Vec<f64>,
    pub strategies: Vec<StrategyKind>,
    pub protection_fraction: f64,
    pub bit_mode: BitMode,
    pub ber_semantics: BerSemantics,
    pub trials: usize,
    pub seed: u64,
    pub target_accuracy_loss: f64,
    /// Fault rate used by the minimum-protection search.
    pub min_protect_ber: f64,
    pub lrp: LrpRuleConfig,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            model_path: PathBuf::new(),
            dataset_path: PathBuf::new(),
            output_dir: None,
            calibration_size: 100,
            ber_grid: vec![1e-7, 1e-6, 1e-5, 1e-4, 1e-3],
            strategies: StrategyKind::ALL.to_vec(),
            protection_fraction: 0.01,
            bit_mode: BitMode::default(),
            ber_semantics: BerSemantics::default(),
            trials: 20,
            seed: 0,
            target_accuracy_loss: 0.05,
            min_protect_ber: 1e-4,
            lrp: LrpRuleConfig::default(),
        }
    }
}

impl CampaignConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        if self.ber_grid.is_empty() {
            return Err(Error::Config("ber_grid is empty".into()));
        }
        for &b in &self.ber_grid {
            if !(0.0..=1.0).contains(&b) {
                return Err(Error::InvalidBer(b));
            }
        }
        if self.ber_grid.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Config("ber_grid must be sorted ascending".into()));
        }
        if !(0.0..=1.0).contains(&self.min_protect_ber) {
            return Err(Error::InvalidBer(self.min_protect_ber));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.strategies.is_empty() {
            return Err(Error::Config("no strategies selected".into()));
        }
        let mut s = self.strategies.clone();
        s.sort();
        s.dedup();
        if s.len() != self.strategies.len() {
            return Err(Error::Config("strategies listed twice".into()));
        }
        check_fraction(self.protection_fraction)?;
        if !(self.target_accuracy_loss > 0.0 && self.target_accuracy_loss < 1.0) {
            return Err(Error::Config(format!(
                "target_accuracy_loss must lie in (0, 1), got {}",
                self.target_accuracy_loss
            )));
        }
        if self.strategies.contains(&StrategyKind::Xai) && self.calibration_size == 0 {
            return Err(Error::Config("xai needs calibration_size >= 1".into()));
        }
        if let BitMode::Fixed(b) = self.bit_mode {
            if b > 31 {
                return Err(Error::BitIndex(b));
            }
        }
        self.lrp.validate()
    }

    pub(crate) fn echo(&self) -> CampaignConfig {
        CampaignConfig {
            output_dir: None,
            ..self.clone()
        }
    }
}

/// Platform-independent per-trial seed: FNV-1a over the key, finished with the
/// SplitMix64 mixer.
pub fn derive_seed(
    master: u64,
    experiment: &str,
    strategy: &str,
    ber_index: usize,
    trial: usize,
) -> u64 {
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(PRIME);
        }
    };
    eat(&master.to_le_bytes());
    eat(experiment.as_bytes());
    eat(&[0xff]);
    eat(strategy.as_bytes());
    eat(&[0xff]);
    eat(&(ber_index as u64).to_le_bytes());
    eat(&(trial as u64).to_le_bytes());
    splitmix64(h)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Sensitivity,
    TmrEval,
    MinProtection,
}

impl Experiment {
    pub fn as_str(self) -> &'static str {
        match self {
            Experiment::Sensitivity => "sensitivity",
            Experiment::TmrEval => "tmr_eval",
            Experiment::MinProtection => "min_protection",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    /// Targeting strategy, protection method, or `unprotected`.
    pub strategy: String,
    pub ber: f64,
    pub ber_index: usize,
    pub trial_index: usize,
    pub accuracy: f64,
    pub mean_loss: f64,
    pub nbf: usize,
    pub nan_count: usize,
    pub seed_used: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub strategy: String,
    pub ber: f64,
    pub ber_index: usize,
    /// Trials requested by the config.
    pub trials: usize,
    /// Distinct trials aggregated; 1 when every trial would repeat the same plan.
    pub trials_effective: usize,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub se_accuracy: f64,
    pub mean_loss: f64,
    pub std_loss: f64,
    pub se_loss: f64,
    pub nbf: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovementRow {
    pub method: StrategyKind,
    pub ber: f64,
    pub protected_accuracy: f64,
    pub unprotected_accuracy: f64,
    /// Protected minus unprotected mean accuracy, in percentage points.
    pub improvement_points: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FractionPoint {
    pub fraction: f64,
    pub protected: usize,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub mean_loss: f64,
    /// Baseline minus mean accuracy (absolute, not relative).
    pub accuracy_loss: f64,
    pub meets_target: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinProtectionResult {
    pub method: StrategyKind,
    pub ber: f64,
    pub target_accuracy_loss: f64,
    /// Smallest grid fraction meeting the target, or 1.0 when none does.
    pub fraction: f64,
    pub achieved: bool,
    pub overhead: OverheadReport,
    pub grid: Vec<FractionPoint>,
    /// Grid fractions that missed the target although a smaller one met it.
    pub monotonicity_violations: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub experiment: Experiment,
    pub config: CampaignConfig,
    pub model_hash: String,
    pub nt: usize,
    pub dataset_size: usize,
    pub baseline_accuracy: f64,
    pub baseline_loss: f64,
    pub cells: Vec<CellSummary>,
    pub trials: Vec<TrialResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overhead: Option<OverheadReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reliability_improvement: Vec<ImprovementRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub min_protection: Vec<MinProtectionResult>,
    pub notes: Vec<String>,
}

impl CampaignReport {
    pub fn cell(&self, strategy: &str, ber_index: usize) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.strategy == strategy && c.ber_index == ber_index)
    }
}

/// Mean, sample standard deviation and standard error (std is 0 for one value).
pub(crate) fn mean_std_se(values: &[f64]) -> (f64, f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, 0.0, 0.0);
    }
    // Shifting by the first value makes the mean of identical values exact.
    let first = values[0];
    let mean = first + values.iter().map(|v| v - first).sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let std = var.sqrt();
    (mean, std, std / (n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_differ_per_key_component() {
        let base = derive_seed(1, "sensitivity", "random", 0, 0);
        assert_eq!(base, derive_seed(1, "sensitivity", "random", 0, 0));
        for other in [
            derive_seed(2, "sensitivity", "random", 0, 0),
            derive_seed(1, "tmr_eval", "random", 0, 0),
            derive_seed(1, "sensitivity", "xai", 0, 0),
            derive_seed(1, "sensitivity", "random", 1, 0),
            derive_seed(1, "sensitivity", "random", 0, 1),
        ] {
            assert_ne!(base, other);
        }
    }

    #[test]
    fn seed_is_pinned() {
        // Values from an independent reimplementation; changing them breaks old reports.
        assert_eq!(derive_seed(0, "", "", 0, 0), 0x89ef_a23f_8d96_70d0);
        assert_eq!(
            derive_seed(42, "tmr_eval", "random", 3, 7),
            0xa873_9c6a_743a_4703
        );
    }

    #[test]
    fn statistics() {
        let (m, s, se) = mean_std_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((se - s / 2.0).abs() < 1e-15);
        assert_eq!(mean_std_se(&[7.0]), (7.0, 0.0, 0.0));
        assert_eq!(mean_std_se(&[0.1; 3]).0, 0.1);
        assert_eq!(mean_std_se(&[0.947; 20]), (0.947, 0.0, 0.0));
    }

    #[test]
    fn config_defaults_and_validation() {
        let c = CampaignConfig::default();
        c.validate().unwrap();
        assert_eq!(c.protection_fraction, 0.01);
        assert_eq!(c.bit_mode, BitMode::Fixed(29));
        let bad = [
            CampaignConfig {
                ber_grid: vec![1e-3, 1e-4],
                ..c.clone()
            },
            CampaignConfig {
                ber_grid: vec![2.0],
                ..c.clone()
            },
            CampaignConfig {
                trials: 0,
                ..c.clone()
            },
            CampaignConfig {
                protection_fraction: 0.0,
                ..c.clone()
            },
            CampaignConfig {
                target_accuracy_loss: 1.0,
                ..c.clone()
            },
            CampaignConfig {
                strategies: vec![StrategyKind::Xai, StrategyKind::Xai],
                ..c.clone()
            },
            CampaignConfig {
                calibration_size: 0,
                ..c.clone()
            },
        ];
        for b in bad {
            assert!(b.validate().is_err(), "{b:?}");
        }
    }

    #[test]
    fn config_json_partial() {
        let c: CampaignConfig =
            serde_json::from_str(r#"{"trials": 3, "bit_mode": "uniform", "strategies": ["xai"]}"#)
                .unwrap();
        assert_eq!(c.trials, 3);
        assert_eq!(c.bit_mode, BitMode::Uniform);
        assert_eq!(c.calibration_size, 100);
        assert!(serde_json::from_str::<CampaignConfig>(r#"{"trails": 3}"#).is_err());
    }
}
