use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{
    derive_seed, mean_std_se, CampaignConfig, CampaignReport, CellSummary, Experiment,
    FractionPoint, ImprovementRow, MinProtectionResult, TrialResult,
};
use crate::error::{Error, Result};
use crate::fault::{
    apply_faults, plan_injection, plan_storage_uniform, BitMode, FaultPlan, InjectionStrategy,
    StrategyKind,
};
use crate::lrp::{score_weights, ProtectionSet, WeightScores};
use crate::model_io::{load_dataset, load_model, ModelHash};
use crate::nn::{evaluate, Evaluation, LabeledDataset, Network};
use crate::rank::{ceil_count, top_k_descending};
use crate::tmr::{protect, ProtectedModel};

/// Protection fractions tried by the minimum-protection search.
pub const FRACTION_GRID: [f64; 11] = [
    0.0, 0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0,
];

/// Everything a campaign reads, loaded once.
#[derive(Debug, Clone)]
pub struct CampaignInputs {
    pub network: Network,
    pub dataset: LabeledDataset,
    pub model_hash: ModelHash,
    /// Present whenever the xai strategy is selected.
    pub scores: Option<WeightScores>,
}

impl CampaignInputs {
    /// Scores are computed on the first `calibration_size` samples when xai is selected.
    pub fn new(network: Network, dataset: LabeledDataset, config: &CampaignConfig) -> Result<Self> {
        let scores = if config.strategies.contains(&StrategyKind::Xai) {
            let calib = dataset.head(config.calibration_size);
            Some(score_weights(&network, &calib, &config.lrp)?)
        } else {
            None
        };
        Ok(CampaignInputs {
            model_hash: ModelHash::of_network(&network),
            network,
            dataset,
            scores,
        })
    }
}

pub fn load_inputs(config: &CampaignConfig) -> Result<CampaignInputs> {
    config.validate()?;
    let network = load_model(&config.model_path)?;
    let dataset = load_dataset(&config.dataset_path)?;
    CampaignInputs::new(network, dataset, config)
}

struct Baseline {
    eval: Evaluation,
}

fn baseline(inputs: &CampaignInputs) -> Result<Baseline> {
    Ok(Baseline {
        eval: evaluate(&inputs.network, &inputs.dataset)?,
    })
}

fn report_shell(
    experiment: Experiment,
    config: &CampaignConfig,
    inputs: &CampaignInputs,
    base: &Baseline,
) -> CampaignReport {
    CampaignReport {
        experiment,
        config: config.echo(),
        model_hash: inputs.model_hash.to_string(),
        nt: inputs.network.weight_count(),
        dataset_size: inputs.dataset.len(),
        baseline_accuracy: base.eval.accuracy,
        baseline_loss: base.eval.mean_loss,
        cells: Vec::new(),
        trials: Vec::new(),
        overhead: None,
        reliability_improvement: Vec::new(),
        min_protection: Vec::new(),
        notes: Vec::new(),
    }
}

fn trial_result(
    strategy: &str,
    ber: f64,
    ber_index: usize,
    trial_index: usize,
    seed: u64,
    nbf: usize,
    eval: Evaluation,
) -> TrialResult {
    TrialResult {
        strategy: strategy.to_string(),
        ber,
        ber_index,
        trial_index,
        accuracy: eval.accuracy,
        mean_loss: eval.mean_loss,
        nbf,
        nan_count: eval.nan_count,
        seed_used: seed,
    }
}

/// Groups consecutive trials of one (strategy, ber) into cells, in input order.
fn summarize(trials: &[TrialResult], requested: usize) -> Vec<CellSummary> {
    let mut cells = Vec::new();
    let mut start = 0;
    while start < trials.len() {
        let head = &trials[start];
        let end = start
            + trials[start..]
                .iter()
                .take_while(|t| t.strategy == head.strategy && t.ber_index == head.ber_index)
                .count();
        let group = &trials[start..end];
        let acc: Vec<f64> = group.iter().map(|t| t.accuracy).collect();
        let loss: Vec<f64> = group.iter().map(|t| t.mean_loss).collect();
        let (mean_accuracy, std_accuracy, se_accuracy) = mean_std_se(&acc);
        let (mean_loss, std_loss, se_loss) = mean_std_se(&loss);
        cells.push(CellSummary {
            strategy: head.strategy.clone(),
            ber: head.ber,
            ber_index: head.ber_index,
            trials: requested,
            trials_effective: group.len(),
            mean_accuracy,
            std_accuracy,
            se_accuracy,
            mean_loss,
            std_loss,
            se_loss,
            nbf: head.nbf,
        });
        start = end;
    }
    cells
}

pub fn run_sensitivity(config: &CampaignConfig) -> Result<CampaignReport> {
    let inputs = load_inputs(config)?;
    run_sensitivity_with(config, &inputs)
}

/// Flips targeted by each strategy on the unprotected model, swept over the BER grid.
pub fn run_sensitivity_with(
    config: &CampaignConfig,
    inputs: &CampaignInputs,
) -> Result<CampaignReport> {
    config.validate()?;
    let base = baseline(inputs)?;
    let mut report = report_shell(Experiment::Sensitivity, config, inputs, &base);
    let net = &inputs.network;
    let nt = net.weight_count();
    let weights = net.flat_weights();

    let mut jobs = Vec::new();
    for &kind in &config.strategies {
        let collapse = kind.is_deterministic() && matches!(config.bit_mode, BitMode::Fixed(_));
        let n = if collapse { 1 } else { config.trials };
        if collapse && config.trials > 1 {
            report.notes.push(format!(
                "{kind}: targets and bit are fixed, so its {} trials are identical; 1 trial run, std reported as 0",
                config.trials
            ));
        }
        for (bi, &ber) in config.ber_grid.iter().enumerate() {
            for t in 0..n {
                jobs.push((kind, bi, ber, t));
            }
        }
    }

    let trials = jobs
        .par_iter()
        .map(|&(kind, bi, ber, t)| {
            let seed = derive_seed(
                config.seed,
                Experiment::Sensitivity.as_str(),
                kind.as_str(),
                bi,
                t,
            );
            let mut strategy = InjectionStrategy::new(kind)
                .with_bit_mode(config.bit_mode)
                .with_semantics(config.ber_semantics);
            if let Some(s) = &inputs.scores {
                strategy = strategy.with_scores(s);
            }
            let plan = plan_injection(nt, ber, &strategy, &weights, seed)?;
            let (faulty, _) = apply_faults(net, &plan)?;
            let eval = evaluate(&faulty, &inputs.dataset)?;
            Ok(trial_result(
                kind.as_str(),
                ber,
                bi,
                t,
                seed,
                plan.nbf,
                eval,
            ))
        })
        .collect::<Result<Vec<_>>>()?;

    report.cells = summarize(&trials, config.trials);
    report.trials = trials;
    Ok(report)
}

/// Every weight index ordered by protection priority under `method`; the first k
/// entries are the protection set for k weights, so sets for growing k are nested.
pub fn protection_ranking(
    method: StrategyKind,
    network: &Network,
    scores: Option<&WeightScores>,
    seed: u64,
) -> Result<Vec<usize>> {
    let nt = network.weight_count();
    Ok(match method {
        StrategyKind::Random => {
            let mut order: Vec<usize> = (0..nt).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            order
        }
        StrategyKind::Magnitude => {
            let mags: Vec<f64> = network
                .flat_weights()
                .iter()
                .map(|w| w.abs() as f64)
                .collect();
            top_k_descending(&mags, nt)
        }
        StrategyKind::Xai => {
            let s = match scores {
                Some(s) if s.len() == nt => s,
                other => {
                    return Err(Error::MissingScores {
                        expected: nt,
                        actual: other.map(WeightScores::len),
                    })
                }
            };
            top_k_descending(&s.scores, nt)
        }
    })
}

fn selection_seed(config: &CampaignConfig) -> u64 {
    derive_seed(
        config.seed,
        "protection_selection",
        StrategyKind::Random.as_str(),
        0,
        0,
    )
}

fn protected_models(
    config: &CampaignConfig,
    inputs: &CampaignInputs,
    fraction: f64,
) -> Result<Vec<(StrategyKind, ProtectedModel)>> {
    let nt = inputs.network.weight_count();
    let k = ceil_count(fraction, nt);
    config
        .strategies
        .iter()
        .map(|&method| {
            let mut ranking = protection_ranking(
                method,
                &inputs.network,
                inputs.scores.as_ref(),
                selection_seed(config),
            )?;
            ranking.truncate(k);
            let set = ProtectionSet::new(ranking, fraction);
            Ok((method, protect(&inputs.network, &set)?))
        })
        .collect()
}

pub fn run_tmr_eval(config: &CampaignConfig) -> Result<CampaignReport> {
    let inputs = load_inputs(config)?;
    run_tmr_eval_with(config, &inputs)
}

/// Protects `protection_fraction` of the weights by each method and injects faults
/// drawn uniformly over all storage words, replicas included. The unprotected model
/// takes the same plans minus the replica hits.
pub fn run_tmr_eval_with(
    config: &CampaignConfig,
    inputs: &CampaignInputs,
) -> Result<CampaignReport> {
    config.validate()?;
    let base = baseline(inputs)?;
    let mut report = report_shell(Experiment::TmrEval, config, inputs, &base);
    let nt = inputs.network.weight_count();
    let models = protected_models(config, inputs, config.protection_fraction)?;
    let reference = models[0].1.protection().clone();
    report.overhead = Some(models[0].1.memory_overhead());

    // Fault placement shares seeds across methods: every method and the unprotected
    // baseline see the same storage slots in each trial.
    let plan_seed = |bi: usize, t: usize| {
        derive_seed(
            config.seed,
            Experiment::TmrEval.as_str(),
            StrategyKind::Random.as_str(),
            bi,
            t,
        )
    };
    let plan_for = |set: &ProtectionSet, ber: f64, seed: u64| {
        plan_storage_uniform(nt, set, ber, config.bit_mode, config.ber_semantics, seed)
    };

    // None stands for the unprotected model.
    let mut jobs: Vec<(Option<usize>, usize, f64, usize)> = Vec::new();
    for m in std::iter::once(None).chain((0..models.len()).map(Some)) {
        for (bi, &ber) in config.ber_grid.iter().enumerate() {
            for t in 0..config.trials {
                jobs.push((m, bi, ber, t));
            }
        }
    }

    let trials = jobs
        .par_iter()
        .map(|&(m, bi, ber, t)| {
            let seed = plan_seed(bi, t);
            match m {
                None => {
                    let plan: FaultPlan = plan_for(&reference, ber, seed)?.originals_only();
                    let (faulty, _) = apply_faults(&inputs.network, &plan)?;
                    let eval = evaluate(&faulty, &inputs.dataset)?;
                    Ok(trial_result(
                        "unprotected",
                        ber,
                        bi,
                        t,
                        seed,
                        plan.nbf,
                        eval,
                    ))
                }
                Some(i) => {
                    let (method, pm) = &models[i];
                    let plan = plan_for(pm.protection(), ber, seed)?;
                    let (faulty, _) = apply_faults(pm, &plan)?;
                    let eval = evaluate(&faulty.resolve(), &inputs.dataset)?;
                    Ok(trial_result(
                        method.as_str(),
                        ber,
                        bi,
                        t,
                        seed,
                        plan.nbf,
                        eval,
                    ))
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;

    report.cells = summarize(&trials, config.trials);
    for (method, _) in &models {
        for (bi, &ber) in config.ber_grid.iter().enumerate() {
            let p = report
                .cell(method.as_str(), bi)
                .expect("cell per method")
                .mean_accuracy;
            let u = report
                .cell("unprotected", bi)
                .expect("unprotected cell")
                .mean_accuracy;
            report.reliability_improvement.push(ImprovementRow {
                method: *method,
                ber,
                protected_accuracy: p,
                unprotected_accuracy: u,
                improvement_points: (p - u) * 100.0,
            });
        }
    }
    report.trials = trials;
    Ok(report)
}

pub fn find_min_protection(
    config: &CampaignConfig,
    method: StrategyKind,
) -> Result<MinProtectionResult> {
    let inputs = load_inputs(config)?;
    find_min_protection_with(config, &inputs, method)
}

/// Evaluates every fraction of [`FRACTION_GRID`] at `min_protect_ber` and returns
/// the smallest one whose mean accuracy loss stays within `target_accuracy_loss`.
pub fn find_min_protection_with(
    config: &CampaignConfig,
    inputs: &CampaignInputs,
    method: StrategyKind,
) -> Result<MinProtectionResult> {
    config.validate()?;
    let base = baseline(inputs)?.eval;
    let net = &inputs.network;
    let nt = net.weight_count();
    let ranking = protection_ranking(method, net, inputs.scores.as_ref(), selection_seed(config))?;
    let ber = config.min_protect_ber;

    let mut grid = Vec::with_capacity(FRACTION_GRID.len());
    let mut overheads = Vec::with_capacity(FRACTION_GRID.len());
    for &fraction in &FRACTION_GRID {
        let k = ceil_count(fraction, nt);
        let set = ProtectionSet::new(ranking[..k].to_vec(), fraction);
        let pm = protect(net, &set)?;
        // The same trial seeds at every fraction keep the comparison paired.
        let evals = (0..config.trials)
            .into_par_iter()
            .map(|t| {
                let seed = derive_seed(
                    config.seed,
                    Experiment::MinProtection.as_str(),
                    "random",
                    0,
                    t,
                );
                let plan = plan_storage_uniform(
                    nt,
                    &set,
                    ber,
                    config.bit_mode,
                    config.ber_semantics,
                    seed,
                )?;
                let (faulty, _) = apply_faults(&pm, &plan)?;
                evaluate(&faulty.resolve(), &inputs.dataset)
            })
            .collect::<Result<Vec<_>>>()?;
        let acc: Vec<f64> = evals.iter().map(|e| e.accuracy).collect();
        let loss: Vec<f64> = evals.iter().map(|e| e.mean_loss).collect();
        let (mean_accuracy, std_accuracy, _) = mean_std_se(&acc);
        let (mean_loss, _, _) = mean_std_se(&loss);
        let accuracy_loss = base.accuracy - mean_accuracy;
        grid.push(FractionPoint {
            fraction,
            protected: k,
            mean_accuracy,
            std_accuracy,
            mean_loss,
            accuracy_loss,
            meets_target: accuracy_loss <= config.target_accuracy_loss,
        });
        overheads.push(pm.memory_overhead());
    }

    let first = grid.iter().position(|p| p.meets_target);
    let monotonicity_violations = match first {
        Some(i) => grid[i..]
            .iter()
            .filter(|p| !p.meets_target)
            .map(|p| p.fraction)
            .collect(),
        None => Vec::new(),
    };
    for f in &monotonicity_violations {
        log::warn!("{method}: fraction {f} misses the target although a smaller fraction met it");
    }
    let pick = first.unwrap_or(grid.len() - 1);
    Ok(MinProtectionResult {
        method,
        ber,
        target_accuracy_loss: config.target_accuracy_loss,
        fraction: grid[pick].fraction,
        achieved: first.is_some(),
        overhead: overheads[pick],
        grid,
        monotonicity_violations,
    })
}

pub fn run_min_protection(config: &CampaignConfig) -> Result<CampaignReport> {
    let inputs = load_inputs(config)?;
    run_min_protection_with(config, &inputs)
}

/// [`find_min_protection_with`] for every configured method, as one report.
pub fn run_min_protection_with(
    config: &CampaignConfig,
    inputs: &CampaignInputs,
) -> Result<CampaignReport> {
    config.validate()?;
    let base = baseline(inputs)?;
    let mut report = report_shell(Experiment::MinProtection, config, inputs, &base);
    for &method in &config.strategies {
        let r = find_min_protection_with(config, inputs, method)?;
        if !r.achieved {
            report.notes.push(format!(
                "{method}: even full protection misses the {} accuracy-loss target at ber {}",
                r.target_accuracy_loss, r.ber
            ));
        }
        if !r.monotonicity_violations.is_empty() {
            report.notes.push(format!(
                "{method}: fractions {:?} miss the target although a smaller fraction met it (trial noise)",
                r.monotonicity_violations
            ));
        }
        report.min_protection.push(r);
    }
    Ok(report)
}
