use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CampaignReport, Experiment};
use crate::error::{Error, Result};

pub const REPORT_FILE: &str = "report.json";
pub const CURVES_FILE: &str = "curves.csv";
pub const OVERHEAD_FILE: &str = "overhead.csv";
pub const SUMMARY_FILE: &str = "summary.txt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub experiment: String,
    pub strategy: String,
    pub ber: f64,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub mean_loss: f64,
    pub std_loss: f64,
    /// Trials actually aggregated into the row.
    pub trials: usize,
    pub nbf: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverheadRow {
    pub experiment: String,
    pub strategy: String,
    pub fraction: f64,
    pub protected: usize,
    pub base_bytes: u64,
    pub replica_bytes: u64,
    pub index_bytes: u64,
    pub replica_percent: f64,
    pub index_percent: f64,
    pub percent_overhead: f64,
    pub mean_accuracy: Option<f64>,
    pub accuracy_loss: Option<f64>,
}

impl CampaignReport {
    pub fn curve_rows(&self) -> Vec<CurveRow> {
        self.cells
            .iter()
            .map(|c| CurveRow {
                experiment: self.experiment.as_str().to_string(),
                strategy: c.strategy.clone(),
                ber: c.ber,
                mean_accuracy: c.mean_accuracy,
                std_accuracy: c.std_accuracy,
                mean_loss: c.mean_loss,
                std_loss: c.std_loss,
                trials: c.trials_effective,
                nbf: c.nbf,
            })
            .collect()
    }

    pub fn overhead_rows(&self) -> Vec<OverheadRow> {
        let exp = self.experiment.as_str().to_string();
        let mut rows = Vec::new();
        if let Some(o) = &self.overhead {
            for method in &self.config.strategies {
                rows.push(OverheadRow {
                    experiment: exp.clone(),
                    strategy: method.as_str().to_string(),
                    fraction: self.config.protection_fraction,
                    protected: o.protected,
                    base_bytes: o.base_bytes,
                    replica_bytes: o.replica_bytes,
                    index_bytes: o.index_bytes,
                    replica_percent: o.replica_percent,
                    index_percent: o.index_percent,
                    percent_overhead: o.percent_overhead,
                    mean_accuracy: None,
                    accuracy_loss: None,
                });
            }
        }
        for r in &self.min_protection {
            for p in &r.grid {
                let o = crate::tmr::OverheadReport::new(self.nt, p.protected);
                rows.push(OverheadRow {
                    experiment: exp.clone(),
                    strategy: r.method.as_str().to_string(),
                    fraction: p.fraction,
                    protected: p.protected,
                    base_bytes: o.base_bytes,
                    replica_bytes: o.replica_bytes,
                    index_bytes: o.index_bytes,
                    replica_percent: o.replica_percent,
                    index_percent: o.index_percent,
                    percent_overhead: o.percent_overhead,
                    mean_accuracy: Some(p.mean_accuracy),
                    accuracy_loss: Some(p.accuracy_loss),
                });
            }
        }
        rows
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let csv_err = |e| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    };
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

const CURVE_HEADER: [&str; 9] = [
    "experiment",
    "strategy",
    "ber",
    "mean_accuracy",
    "std_accuracy",
    "mean_loss",
    "std_loss",
    "trials",
    "nbf",
];

const OVERHEAD_HEADER: [&str; 12] = [
    "experiment",
    "strategy",
    "fraction",
    "protected",
    "base_bytes",
    "replica_bytes",
    "index_bytes",
    "replica_percent",
    "index_percent",
    "percent_overhead",
    "mean_accuracy",
    "accuracy_loss",
];

/// Writes `report.json`, `curves.csv`, `overhead.csv` and `summary.txt` into `dir`.
pub fn emit_report(report: &CampaignReport, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let json_path = dir.join(REPORT_FILE);
    let mut json = serde_json::to_string_pretty(report).map_err(|e| Error::json(&json_path, e))?;
    json.push('\n');
    fs::write(&json_path, json).map_err(|e| Error::io(&json_path, e))?;

    let curves = dir.join(CURVES_FILE);
    write_csv(&curves, &report.curve_rows(), &CURVE_HEADER)?;
    let overhead = dir.join(OVERHEAD_FILE);
    write_csv(&overhead, &report.overhead_rows(), &OVERHEAD_HEADER)?;

    let summary = dir.join(SUMMARY_FILE);
    fs::write(&summary, summary_text(report)).map_err(|e| Error::io(&summary, e))?;
    Ok(vec![json_path, curves, overhead, summary])
}

/// Plain-text digest. For TMR runs it names the best protection method per ber; for
/// sensitivity runs, the most damaging targeting strategy.
pub fn summary_text(report: &CampaignReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "experiment: {}", report.experiment.as_str());
    let _ = writeln!(s, "model: {} ({} weights)", report.model_hash, report.nt);
    let _ = writeln!(
        s,
        "baseline: accuracy {:.4}, loss {:.4} on {} samples",
        report.baseline_accuracy, report.baseline_loss, report.dataset_size
    );
    if let Some(o) = &report.overhead {
        let _ = writeln!(
            s,
            "protected: {} weights, overhead {:.3}% (replicas {:.3}%, indices {:.3}%)",
            o.protected, o.percent_overhead, o.replica_percent, o.index_percent
        );
    }

    let mut bers: Vec<(usize, f64)> = report.cells.iter().map(|c| (c.ber_index, c.ber)).collect();
    bers.sort_by_key(|b| b.0);
    bers.dedup_by_key(|b| b.0);
    for (bi, ber) in bers {
        let _ = writeln!(s, "\nber {ber:e}");
        let cells: Vec<_> = report.cells.iter().filter(|c| c.ber_index == bi).collect();
        for c in &cells {
            let _ = writeln!(
                s,
                "  {:<12} accuracy {:.4} +/- {:.4}  loss {:.4} +/- {:.4}  (n={}, flips={})",
                c.strategy,
                c.mean_accuracy,
                c.std_accuracy,
                c.mean_loss,
                c.std_loss,
                c.trials_effective,
                c.nbf
            );
        }
        let ranked: Vec<_> = cells
            .iter()
            .filter(|c| c.strategy != "unprotected")
            .collect();
        let all_equal = ranked
            .windows(2)
            .all(|w| w[0].mean_accuracy == w[1].mean_accuracy);
        // Strict comparison keeps the first listed strategy on ties.
        let pick = |better: fn(f64, f64) -> bool| {
            if all_equal {
                return "tie".to_string();
            }
            ranked
                .iter()
                .fold(None::<&&&super::CellSummary>, |best, c| match best {
                    Some(b) if !better(c.mean_accuracy, b.mean_accuracy) => Some(b),
                    _ => Some(c),
                })
                .map_or_else(String::new, |c| c.strategy.clone())
        };
        if !ranked.is_empty() {
            match report.experiment {
                Experiment::TmrEval => {
                    let _ = writeln!(s, "  best method: {}", pick(|a, b| a > b));
                }
                Experiment::Sensitivity => {
                    let _ = writeln!(s, "  most damaging: {}", pick(|a, b| a < b));
                }
                Experiment::MinProtection => {}
            }
        }
    }

    for r in &report.reliability_improvement {
        if r.ber == report.config.ber_grid[report.config.ber_grid.len() - 1] {
            let _ = writeln!(
                s,
                "\n{} improvement over unprotected at ber {:e}: {:+.2} points",
                r.method.as_str(),
                r.ber,
                r.improvement_points
            );
        }
    }

    for r in &report.min_protection {
        let _ = writeln!(
            s,
            "\n{}: minimum fraction {} at ber {:e} for loss <= {} ({}), overhead {:.3}%",
            r.method.as_str(),
            r.fraction,
            r.ber,
            r.target_accuracy_loss,
            if r.achieved {
                "achieved"
            } else {
                "not achieved"
            },
            r.overhead.percent_overhead
        );
    }
    if !report.notes.is_empty() {
        let _ = writeln!(s, "\nnotes:");
        for n in &report.notes {
            let _ = writeln!(s, "  - {n}");
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::campaign::{CampaignConfig, CellSummary};
    use crate::tmr::OverheadReport;

    fn cell(strategy: &str, ber_index: usize, acc: f64) -> CellSummary {
        CellSummary {
            strategy: strategy.into(),
            ber: [1e-4, 1e-3][ber_index],
            ber_index,
            trials: 3,
            trials_effective: 3,
            mean_accuracy: acc,
            std_accuracy: 0.1 / 3.0,
            se_accuracy: 0.0,
            mean_loss: std::f64::consts::PI,
            std_loss: 1e-17,
            se_loss: 0.0,
            nbf: 5,
        }
    }

    fn report(cells: Vec<CellSummary>) -> CampaignReport {
        CampaignReport {
            experiment: Experiment::TmrEval,
            config: CampaignConfig {
                ber_grid: vec![1e-4, 1e-3],
                ..CampaignConfig::default()
            },
            model_hash: "00".into(),
            nt: 100,
            dataset_size: 10,
            baseline_accuracy: 0.9,
            baseline_loss: 0.3,
            cells,
            trials: Vec::new(),
            overhead: Some(OverheadReport::new(100, 1)),
            reliability_improvement: Vec::new(),
            min_protection: Vec::new(),
            notes: Vec::new(),
        }
    }

    #[test]
    fn one_cell_one_row() {
        let dir = tempfile::tempdir().unwrap();
        emit_report(&report(vec![cell("xai", 0, 0.5)]), dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join(CURVES_FILE)).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with(
            "experiment,strategy,ber,mean_accuracy,std_accuracy,mean_loss,std_loss,trials,nbf\n"
        ));
    }

    #[test]
    fn curves_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let r = report(vec![
            cell("xai", 0, 0.123456789012345),
            cell("random", 1, 1.0 / 7.0),
        ]);
        emit_report(&r, dir.path()).unwrap();
        let mut rd = csv::Reader::from_path(dir.path().join(CURVES_FILE)).unwrap();
        let back: Vec<CurveRow> = rd
            .deserialize()
            .collect::<std::result::Result<_, _>>()
            .unwrap();
        for (a, b) in back.iter().zip(r.curve_rows()) {
            for (x, y) in [
                (a.ber, b.ber),
                (a.mean_accuracy, b.mean_accuracy),
                (a.std_accuracy, b.std_accuracy),
                (a.mean_loss, b.mean_loss),
                (a.std_loss, b.std_loss),
            ] {
                assert!((x - y).abs() <= 1e-12 * y.abs().max(1e-300), "{x} vs {y}");
            }
            assert_eq!((a.trials, a.nbf), (b.trials, b.nbf));
        }
        let json: CampaignReport =
            serde_json::from_str(&fs::read_to_string(dir.path().join(REPORT_FILE)).unwrap())
                .unwrap();
        assert_eq!(json.cells, r.cells);
    }

    #[test]
    fn summary_names_best_method_per_ber() {
        let r = report(vec![
            cell("unprotected", 0, 0.95),
            cell("random", 0, 0.6),
            cell("xai", 0, 0.8),
            cell("unprotected", 1, 0.1),
            cell("random", 1, 0.7),
            cell("xai", 1, 0.2),
        ]);
        let s = summary_text(&r);
        let best: Vec<&str> = s.lines().filter(|l| l.contains("best method")).collect();
        assert_eq!(best, vec!["  best method: xai", "  best method: random"]);
    }

    #[test]
    fn overhead_csv_rows() {
        let dir = tempfile::tempdir().unwrap();
        emit_report(&report(vec![]), dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join(OVERHEAD_FILE)).unwrap();
        // One row per configured method.
        assert_eq!(text.lines().count(), 4);
        assert!(text
            .lines()
            .nth(1)
            .unwrap()
            .starts_with("tmr_eval,random,0.01,1,400,8,4,2.0,1.0,3.0,,"));
    }
}
