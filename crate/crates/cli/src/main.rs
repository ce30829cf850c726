use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use stmr_core::campaign::{
    emit_report, load_inputs, run_min_protection_with, run_sensitivity_with, run_tmr_eval_with,
    summary_text, CampaignConfig, CampaignReport,
};
use stmr_core::fault::{
    apply_faults, check_recorded, plan_injection, read_flips_jsonl, write_flips_jsonl, BitFlip,
    BitMode, FaultPlan, InjectionStrategy, StrategyKind,
};
use stmr_core::lrp::{read_scores, score_weights, write_scores, LrpRuleConfig, WeightScores};
use stmr_core::model_io::{decode_dataset, load_model, read_manifest, save_model, ModelHash};
use stmr_core::nn::{evaluate, LabeledDataset, Network};

#[derive(Parser)]
#[command(
    name = "stmr",
    version,
    about = "Relevance-guided selective TMR and bit-flip fault campaigns"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute per-weight relevance scores and write scores.bin + scores.json.
    Score(ScoreArgs),
    /// Apply a fault plan (or a freshly generated one) to a model container.
    Inject(InjectArgs),
    /// Accuracy and loss under random, magnitude- and relevance-targeted flips.
    Sensitivity(CampaignArgs),
    /// Reliability of selectively protected models under storage-wide flips.
    TmrEval(CampaignArgs),
    /// Smallest protection fraction that keeps accuracy loss within the target.
    MinProtect(CampaignArgs),
    /// Print model and dataset statistics.
    Info(InfoArgs),
}

#[derive(Args)]
struct CampaignArgs {
    /// JSON file with CampaignConfig fields; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    /// Comma-separated bit error rates.
    #[arg(long, value_delimiter = ',')]
    ber: Option<Vec<f64>>,
    /// Comma-separated subset of random, magnitude, xai.
    #[arg(long, value_delimiter = ',')]
    strategy: Option<Vec<StrategyKind>>,
    #[arg(long)]
    fraction: Option<f64>,
    /// Bit position to flip (0-31), or `random` for a uniform bit.
    #[arg(long)]
    bit: Option<BitMode>,
    #[arg(long)]
    calibration: Option<usize>,
}

impl CampaignArgs {
    fn config(&self) -> Result<CampaignConfig> {
        let mut c = match &self.config {
            Some(p) => CampaignConfig::from_json_file(p)?,
            None => CampaignConfig::default(),
        };
        if let Some(v) = &self.model {
            c.model_path = v.clone();
        }
        if let Some(v) = &self.dataset {
            c.dataset_path = v.clone();
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = &self.out {
            c.output_dir = Some(v.clone());
        }
        if let Some(v) = self.trials {
            c.trials = v;
        }
        if let Some(v) = &self.ber {
            c.ber_grid = v.clone();
        }
        if let Some(v) = &self.strategy {
            c.strategies = v.clone();
        }
        if let Some(v) = self.fraction {
            c.protection_fraction = v;
        }
        if let Some(v) = self.bit {
            c.bit_mode = v;
        }
        if let Some(v) = self.calibration {
            c.calibration_size = v;
        }
        if c.model_path.as_os_str().is_empty() {
            bail!("no model given (--model or model_path in --config)");
        }
        if c.dataset_path.as_os_str().is_empty() {
            bail!("no dataset given (--dataset or dataset_path in --config)");
        }
        if c.output_dir.is_none() {
            bail!("no output directory given (--out or output_dir in --config)");
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    /// Number of leading dataset samples to score on.
    #[arg(long, default_value_t = 100)]
    calibration: usize,
    /// JSON file with LRP rule settings (LrpRuleConfig fields).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InjectArgs {
    #[arg(long)]
    model: PathBuf,
    /// JSON-lines flip file; `before_hex` entries are checked against the model.
    #[arg(long, conflicts_with_all = ["ber", "strategy"])]
    plan: Option<PathBuf>,
    #[arg(long)]
    ber: Option<f64>,
    #[arg(long, default_value = "random")]
    strategy: StrategyKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "29")]
    bit: BitMode,
    /// Directory holding scores.bin + scores.json, needed for xai targeting.
    #[arg(long)]
    scores: Option<PathBuf>,
    /// Output container directory; applied.jsonl is written next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InfoArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    dataset: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Score(a) => score(a),
        Command::Inject(a) => inject(a),
        Command::Sensitivity(a) => campaign(a, run_sensitivity_with),
        Command::TmrEval(a) => campaign(a, run_tmr_eval_with),
        Command::MinProtect(a) => campaign(a, run_min_protection_with),
        Command::Info(a) => info(a),
    }
}

fn campaign(
    args: CampaignArgs,
    f: fn(
        &CampaignConfig,
        &stmr_core::campaign::CampaignInputs,
    ) -> stmr_core::Result<CampaignReport>,
) -> Result<()> {
    let config = args.config()?;
    let inputs = load_inputs(&config)?;
    let report = f(&config, &inputs)?;
    let out = config.output_dir.as_ref().expect("checked in config()");
    let files = emit_report(&report, out)?;
    print!("{}", summary_text(&report));
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn load_dataset_any(path: &Path) -> Result<(LabeledDataset, Vec<usize>)> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(decode_dataset(&bytes)?)
}

fn score(a: ScoreArgs) -> Result<()> {
    let rules: LrpRuleConfig = match &a.config {
        Some(p) => {
            let text =
                std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => LrpRuleConfig::default(),
    };
    if a.calibration == 0 {
        bail!("--calibration must be at least 1");
    }
    let net = load_model(&a.model)?;
    let (data, _) = load_dataset_any(&a.dataset)?;
    let calib = data.head(a.calibration);
    let scores = score_weights(&net, &calib, &rules)?;
    write_scores(&a.out, &scores, &rules, ModelHash::of_network(&net))?;
    println!(
        "scored {} weights on {} samples into {}",
        scores.len(),
        scores.calibration_size,
        a.out.display()
    );
    Ok(())
}

fn load_scores_for(dir: &Path, net: &Network) -> Result<WeightScores> {
    let (scores, side) = read_scores(dir)?;
    let hash = ModelHash::of_network(net).to_string();
    if side.model_hash != hash {
        bail!(
            "scores in {} belong to model {}, not {hash}",
            dir.display(),
            side.model_hash
        );
    }
    Ok(scores)
}

fn inject(a: InjectArgs) -> Result<()> {
    let net = load_model(&a.model)?;
    let nt = net.weight_count();
    let recorded;
    let plan = match (&a.plan, a.ber) {
        (Some(path), _) => {
            recorded = read_flips_jsonl(path)?;
            let flips: Vec<BitFlip> = recorded.iter().map(|f| f.bit_flip()).collect();
            FaultPlan::from_flips(flips, nt)
        }
        (None, Some(ber)) => {
            recorded = Vec::new();
            let scores = match &a.scores {
                Some(dir) => Some(load_scores_for(dir, &net)?),
                None => None,
            };
            let mut strategy = InjectionStrategy::new(a.strategy).with_bit_mode(a.bit);
            if let Some(s) = &scores {
                strategy = strategy.with_scores(s);
            }
            plan_injection(nt, ber, &strategy, &net.flat_weights(), a.seed)?
        }
        (None, None) => bail!("give either --plan FILE or --ber X"),
    };
    let (faulty, applied) = apply_faults(&net, &plan)?;
    check_recorded(&recorded, &applied)?;
    let hash = save_model(&faulty, &a.out)?;
    let log = a.out.join("applied.jsonl");
    write_flips_jsonl(&log, &applied)?;
    println!(
        "applied {} flips; wrote model {hash} to {} and {}",
        applied.len(),
        a.out.display(),
        log.display()
    );
    Ok(())
}

fn info(a: InfoArgs) -> Result<()> {
    let manifest = read_manifest(&a.model)?;
    let net = load_model(&a.model)?;
    println!("model: {}", a.model.display());
    println!("  hash: {}", manifest.model_hash);
    println!("  input shape: {:?}", net.input_shape());
    println!("  classes: {}", net.num_classes());
    println!("  weights: {}", net.weight_count());
    for (i, layer) in net.layers().iter().enumerate() {
        println!(
            "  [{i}] {:<8} -> {:?}  ({} weights)",
            layer.kind().as_str(),
            net.output_shape(i),
            layer.weight_count()
        );
    }
    if let Some(path) = &a.dataset {
        let (data, shape) = load_dataset_any(path)?;
        println!("dataset: {}", path.display());
        println!("  samples: {}", data.len());
        println!("  sample shape: {shape:?}");
        let classes = data.labels.iter().copied().max().map_or(0, |m| m + 1);
        let mut counts = vec![0usize; classes];
        for &l in &data.labels {
            counts[l] += 1;
        }
        println!("  label counts: {counts:?}");
        let e = evaluate(&net, &data)?;
        println!(
            "  accuracy: {:.4}  mean loss: {:.4}",
            e.accuracy, e.mean_loss
        );
    }
    Ok(())
}
