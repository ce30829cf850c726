//! End-to-end paths through the checked-in fixtures and the report files.

use std::path::PathBuf;

use serde::Deserialize;

use stmr_core::campaign::{
    emit_report, run_min_protection_with, run_sensitivity_with, run_tmr_eval_with, CampaignConfig,
    CampaignInputs, CurveRow, CURVES_FILE, OVERHEAD_FILE, SUMMARY_FILE,
};
use stmr_core::fault::{apply_faults, BitFlip, FaultPlan, Replica, StrategyKind};
use stmr_core::lrp::{score_weights, select_top_fraction, LrpRuleConfig};
use stmr_core::model_io::{
    generate_fixture, load_dataset, load_model, random_dataset, read_manifest, save_model,
    Architecture, ModelHash,
};
use stmr_core::nn::evaluate;
use stmr_core::tmr::protect;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

#[derive(Deserialize)]
struct Reference {
    accuracy: f64,
    logits: Vec<Vec<f32>>,
}

#[test]
fn trained_container_matches_reference_logits() {
    let net = load_model(fixtures().join("mlp")).unwrap();
    let data = load_dataset(fixtures().join("mnist1k.nnd")).unwrap();
    let text = std::fs::read_to_string(fixtures().join("mlp_reference_logits.json")).unwrap();
    let reference: Reference = serde_json::from_str(&text).unwrap();
    assert_eq!(reference.logits.len(), 100);
    let mut worst = 0.0f32;
    for (x, want) in data.inputs.iter().zip(&reference.logits) {
        let got = net.logits(x).unwrap();
        for (g, w) in got.data().iter().zip(want) {
            worst = worst.max((g - w).abs());
        }
    }
    assert!(worst <= 1e-5, "max logit difference {worst}");
    let eval = evaluate(&net, &data).unwrap();
    assert_eq!(data.len(), 1000);
    assert!(eval.accuracy > 0.9);
    assert!((eval.accuracy - reference.accuracy).abs() < 1e-9);
}

#[test]
fn manifest_hash_matches_blob() {
    let m = read_manifest(fixtures().join("mlp")).unwrap();
    let net = load_model(fixtures().join("mlp")).unwrap();
    assert_eq!(m.model_hash, ModelHash::of_network(&net).to_string());
}

#[test]
fn saved_mutation_changes_hash() {
    let dir = tempfile::tempdir().unwrap();
    let net = generate_fixture(1, Architecture::Cnn);
    let h0 = save_model(&net, dir.path().join("a")).unwrap();
    let plan = FaultPlan::from_flips(
        vec![BitFlip {
            weight_index: 17,
            replica: Replica::Original,
            bit_index: 29,
        }],
        net.weight_count(),
    );
    let (faulty, _) = apply_faults(&net, &plan).unwrap();
    let h1 = save_model(&faulty, dir.path().join("b")).unwrap();
    assert_ne!(h0, h1);
    assert!(load_model(dir.path().join("b")).unwrap().bit_eq(&faulty));
}

fn cnn_inputs(config: &CampaignConfig) -> CampaignInputs {
    let net = generate_fixture(9, Architecture::Cnn);
    let data = random_dataset(10, 30, &[1, 28, 28], 10);
    CampaignInputs::new(net, data, config).unwrap()
}

fn small() -> CampaignConfig {
    CampaignConfig {
        ber_grid: vec![0.0, 1e-3, 1e-2],
        trials: 3,
        calibration_size: 8,
        seed: 31,
        ..CampaignConfig::default()
    }
}

#[test]
fn cnn_campaigns_emit_consistent_files() {
    let config = small();
    let inputs = cnn_inputs(&config);
    let dir = tempfile::tempdir().unwrap();
    let report = run_tmr_eval_with(&config, &inputs).unwrap();
    emit_report(&report, dir.path()).unwrap();

    let mut rd = csv::Reader::from_path(dir.path().join(CURVES_FILE)).unwrap();
    let rows: Vec<CurveRow> = rd.deserialize().collect::<Result<_, _>>().unwrap();
    assert_eq!(rows.len(), 4 * 3);
    for (row, cell) in rows.iter().zip(&report.cells) {
        assert_eq!(row.strategy, cell.strategy);
        assert!((row.mean_accuracy - cell.mean_accuracy).abs() <= 1e-12);
        assert!((row.mean_loss - cell.mean_loss).abs() <= 1e-12 * cell.mean_loss.abs());
    }
    for row in rows.iter().filter(|r| r.ber == 0.0) {
        assert_eq!(row.mean_accuracy, report.baseline_accuracy);
        assert_eq!(row.mean_loss, report.baseline_loss);
    }
    let summary = std::fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap();
    assert_eq!(summary.matches("best method:").count(), 3);
    let overhead = std::fs::read_to_string(dir.path().join(OVERHEAD_FILE)).unwrap();
    assert!(overhead.starts_with(
        "experiment,strategy,fraction,protected,base_bytes,replica_bytes,index_bytes,"
    ));

    let sens = run_sensitivity_with(&config, &inputs).unwrap();
    assert_eq!(sens.cells.len(), 9);
}

#[test]
fn full_protection_row_reports_two_hundred_percent() {
    let config = CampaignConfig {
        min_protect_ber: 1e-3,
        trials: 2,
        ..small()
    };
    let inputs = cnn_inputs(&config);
    let report = run_min_protection_with(&config, &inputs).unwrap();
    assert_eq!(report.min_protection.len(), 3);
    for r in &report.min_protection {
        let full = report
            .overhead_rows()
            .into_iter()
            .find(|o| o.strategy == r.method.as_str() && o.fraction == 1.0)
            .unwrap();
        assert_eq!(full.replica_percent, 200.0);
        assert_eq!(r.grid.len(), 11);
        if r.achieved {
            let first = r.grid.iter().position(|p| p.meets_target).unwrap();
            assert_eq!(r.fraction, r.grid[first].fraction);
        } else {
            assert_eq!(r.fraction, 1.0);
        }
    }
}

#[test]
fn replica_only_hits_leave_baseline_exact() {
    let net = generate_fixture(4, Architecture::Mlp);
    let data = random_dataset(5, 40, &[1, 28, 28], 10);
    let scores = score_weights(&net, &data.head(10), &LrpRuleConfig::default()).unwrap();
    let set = select_top_fraction(&scores, 0.01).unwrap();
    let pm = protect(&net, &set).unwrap();
    let flips = set
        .indices
        .iter()
        .enumerate()
        .map(|(k, &i)| BitFlip {
            weight_index: i,
            replica: if k % 2 == 0 { Replica::R1 } else { Replica::R2 },
            bit_index: (k % 32) as u32,
        })
        .collect();
    let (hit, log) = apply_faults(&pm, &FaultPlan::from_flips(flips, net.weight_count())).unwrap();
    assert_eq!(log.len(), set.len());
    let base = evaluate(&net, &data).unwrap();
    assert_eq!(evaluate(&hit.resolve(), &data).unwrap(), base);
}

#[test]
fn xai_selection_requires_scores() {
    let config = CampaignConfig {
        strategies: vec![StrategyKind::Random],
        ..small()
    };
    let inputs = cnn_inputs(&config);
    assert!(inputs.scores.is_none());
    let xai = CampaignConfig {
        strategies: vec![StrategyKind::Xai],
        ..small()
    };
    assert!(run_tmr_eval_with(&xai, &inputs).is_err());
}
