//! `csl`: command-line front end for the confidence toolkit.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, Write as _};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use csl_core::eval::{self, EvalConfig, SplitPlan};
use csl_core::heads::{per_head_auroc, ranking_stability, select_top_k, HeadSelection};
use csl_core::record::{
    apply_rating_file, audit_capture, load_json, merge_ratings, parse_capture, save_json, write_capture,
    AttentionSource, Capture, LabelPolicy,
};
use csl_core::scoring::Method;
use csl_core::synth::{generate_synthetic, SyntheticSpec};
use serde::Deserialize;

/// Exit status for bad flags, config files or arguments.
const EXIT_CONFIG: u8 = 2;
/// Exit status for input data that fails validation.
const EXIT_INVALID: u8 = 1;

#[derive(Parser)]
#[command(
    name = "csl",
    version,
    about = "Attention-weighted confidence scores for LLM generations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a capture file and list every problem found.
    Validate {
        #[arg(long)]
        capture: PathBuf,
    },
    /// Write a synthetic capture with planted informative heads.
    Synth(SynthArgs),
    /// Threshold judge ratings into correctness labels.
    MergeRatings {
        #[arg(long)]
        capture: PathBuf,
        /// Label policy, e.g. `single:gpt:0.2` or `consensus:a:0.2,b:0.5,exclude`.
        #[arg(long)]
        labels: String,
        /// Extra ratings as JSONL lines of `{"id", "judge", "rating"}`.
        #[arg(long)]
        ratings: Option<PathBuf>,
        /// Output capture file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank heads on the validation part of the first split and keep the top k.
    SelectHeads(Common),
    /// Score every method over repeated validation/test splits.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Frozen head selections (output of `select-heads`) to use instead of
        /// selecting on each split.
        #[arg(long)]
        heads: Option<PathBuf>,
    },
    /// AUROC gain over SL(norm) as a function of the number of heads.
    Ksweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated head counts.
        #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 5, 10, 20, 50, 100])]
        ks: Vec<usize>,
    },
    /// Evaluate `--capture` with heads selected on `--from`.
    Transfer {
        #[command(flatten)]
        common: Common,
        /// Capture whose validation splits choose the heads.
        #[arg(long)]
        from: PathBuf,
    },
    /// Cross-validated Platt calibration and reliability bins on one split.
    Calibrate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        folds: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceArg {
    Prompt,
    Next,
    Both,
}

impl SourceArg {
    fn sources(self) -> Vec<AttentionSource> {
        match self {
            SourceArg::Prompt => vec![AttentionSource::Prompt],
            SourceArg::Next => vec![AttentionSource::Next],
            SourceArg::Both => AttentionSource::ALL.to_vec(),
        }
    }
}

/// Flags shared by the evaluation pipelines. Flags override the config file.
#[derive(Args)]
struct Common {
    #[arg(long)]
    capture: PathBuf,
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    splits: Option<usize>,
    #[arg(long)]
    val_size: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_enum)]
    source: Option<SourceArg>,
    /// Comma-separated method names, e.g. `SL(norm),CSL,SE`.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Label policy applied to ratings before evaluation.
    #[arg(long)]
    labels: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Output capture file.
    #[arg(long)]
    out: PathBuf,
    /// JSON generator spec; missing fields take the reference values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Seed for the head layout; defaults to `--seed`.
    #[arg(long)]
    layout_seed: Option<u64>,
    #[arg(long)]
    records: Option<usize>,
    #[arg(long)]
    n_heads: Option<usize>,
    #[arg(long)]
    good_heads: Option<usize>,
    /// Sampled generations per record, for the semantic-entropy methods.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    dataset: Option<String>,
}

/// A problem with flags or configuration files, as opposed to the data.
#[derive(Debug)]
struct ConfigError(String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return EXIT_CONFIG;
        }
        if let Some(e) = cause.downcast_ref::<csl_core::Error>() {
            return if e.is_validation() { EXIT_INVALID } else { EXIT_CONFIG };
        }
    }
    EXIT_CONFIG
}

fn parse_label_policy(spec: &str) -> Result<LabelPolicy> {
    LabelPolicy::parse(spec).map_err(|e| config_error(format!("--labels: {e}")))
}

impl Common {
    fn eval_config(&self) -> Result<EvalConfig> {
        let mut config = match &self.config {
            Some(path) => {
                load_json::<EvalConfig>(path).map_err(|e| config_error(format!("config {}: {e}", path.display())))?
            }
            None => EvalConfig::default(),
        };
        if let Some(v) = self.seed {
            config.seed = v;
        }
        if let Some(v) = self.splits {
            config.splits = v;
        }
        if let Some(v) = self.val_size {
            config.val_size = v;
        }
        if let Some(v) = self.k {
            config.k = v;
        }
        if let Some(s) = self.source {
            config.sources = s.sources();
        }
        if let Some(names) = &self.methods {
            let methods = names
                .iter()
                .map(|n| n.parse::<Method>().map_err(|e| config_error(format!("--methods: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            config.methods = Some(methods);
        }
        if let Some(spec) = &self.labels {
            config.labels = Some(parse_label_policy(spec)?);
        }
        Ok(config)
    }

    fn capture(&self) -> Result<Capture> {
        read(&self.capture)
    }
}

fn read(path: &Path) -> Result<Capture> {
    parse_capture(path).with_context(|| format!("reading {}", path.display()))
}

/// `heads.json` from `select-heads` holds a list; a single selection is
/// accepted too.
#[derive(Deserialize)]
#[serde(untagged)]
enum FrozenHeads {
    Many(Vec<HeadSelection>),
    One(HeadSelection),
}

fn load_frozen(path: &Path) -> Result<Vec<HeadSelection>> {
    let heads = load_json::<FrozenHeads>(path).map_err(|e| config_error(format!("heads {}: {e}", path.display())))?;
    Ok(match heads {
        FrozenHeads::Many(v) => v,
        FrozenHeads::One(s) => vec![s],
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn print_summary(report: &eval::EvalReport) {
    println!(
        "{}: {} records ({} excluded), {} splits, val {}",
        report.dataset, report.n_records, report.n_excluded, report.plan.splits, report.plan.val_size
    );
    println!("{:<10} {:>16} {:>16}", "method", "AUROC", "AUARC");
    for r in &report.methods {
        println!(
            "{:<10} {:>9.4} ± {:.4} {:>9.4} ± {:.4}",
            r.method.name(),
            r.auroc.mean,
            r.auroc.std,
            r.auarc.mean,
            r.auarc.std
        );
    }
    println!(
        "{:<10} {:>16} {:>9.4} ± {:.4}",
        "Random", "", report.random.mean, report.random.std
    );
    println!(
        "{:<10} {:>16} {:>9.4} ± {:.4}",
        "Upper", "", report.upper_bound.mean, report.upper_bound.std
    );
    for s in &report.skipped {
        println!("skipped {}: {}", s.method, s.reason);
    }
}

fn validate(capture: &Path) -> Result<ExitCode> {
    let file = File::open(capture).with_context(|| format!("opening {}", capture.display()))?;
    let audit = audit_capture(BufReader::new(file));
    let mut out = std::io::stdout().lock();
    for f in &audit.findings {
        let id = f.id.as_deref().unwrap_or("-");
        for m in &f.messages {
            writeln!(out, "line {} ({id}): {m}", f.line)?;
        }
    }
    if audit.is_ok() {
        writeln!(out, "{}: {} records, ok", capture.display(), audit.n_records)?;
        Ok(ExitCode::SUCCESS)
    } else {
        writeln!(out, "{}: {} problem line(s)", capture.display(), audit.findings.len())?;
        Ok(ExitCode::from(EXIT_INVALID))
    }
}

fn synth(args: &SynthArgs) -> Result<()> {
    let mut value = serde_json::to_value(SyntheticSpec::frozen())?;
    if let Some(path) = &args.config {
        let overlay: serde_json::Value =
            load_json(path).map_err(|e| config_error(format!("config {}: {e}", path.display())))?;
        let serde_json::Value::Object(fields) = overlay else {
            return Err(config_error(format!("config {} is not a JSON object", path.display())));
        };
        let base = value.as_object_mut().expect("spec serializes as an object");
        base.extend(fields);
    }
    let mut spec: SyntheticSpec =
        serde_json::from_value(value).map_err(|e| config_error(format!("synthetic spec: {e}")))?;
    if let Some(v) = args.seed {
        spec.seed = v;
    }
    if let Some(v) = args.layout_seed {
        spec.layout_seed = Some(v);
    }
    if let Some(v) = args.records {
        spec.n_records = v;
    }
    if let Some(v) = args.n_heads {
        spec.n_heads = v;
    }
    if let Some(v) = args.good_heads {
        spec.good_heads = v;
    }
    if let Some(v) = args.samples {
        spec.n_samples = v;
    }
    if let Some(v) = &args.dataset {
        spec.dataset = v.clone();
    }
    let capture = generate_synthetic(&spec)?;
    write_capture(&args.out, &capture)?;
    println!(
        "wrote {} records with {} heads to {}",
        capture.records.len(),
        capture.n_heads(),
        args.out.display()
    );
    Ok(())
}

fn merge(capture: &Path, labels: &str, ratings: Option<&Path>, out: &Path) -> Result<()> {
    let policy = parse_label_policy(labels)?;
    let mut capture = read(capture)?;
    if let Some(path) = ratings {
        let n = apply_rating_file(&mut capture.records, path).with_context(|| format!("reading {}", path.display()))?;
        log::info!("applied {n} ratings from {}", path.display());
    }
    let outcome = merge_ratings(std::mem::take(&mut capture.records), &policy)?;
    capture.records = outcome.records;
    write_capture(out, &capture)?;
    println!(
        "labeled {} records, excluded {}",
        capture.records.len(),
        outcome.excluded.len()
    );
    for id in &outcome.excluded {
        log::info!("excluded {id}");
    }
    Ok(())
}

fn select_heads(common: &Common) -> Result<()> {
    let config = common.eval_config()?;
    let capture = common.capture()?;
    let labeled = eval::resolve_labels(&capture, config.labels.as_ref())?;
    let plan = SplitPlan::resolve(&config, labeled.records.len())?;
    let (val, _) = plan.split(labeled.records.len(), 0);
    let val_records: Vec<_> = val.iter().map(|&i| labeled.records[i].clone()).collect();
    let mut selections = Vec::new();
    let mut rankings = Vec::new();
    for &source in &config.sources {
        if val_records.iter().any(|r| r.attention(source).is_none()) {
            log::warn!("skipping {source}: attention source absent");
            continue;
        }
        let ranking = per_head_auroc(&val_records, source)?;
        let sel = select_top_k(&ranking, config.k).map_err(|e| config_error(e.to_string()))?;
        let rho = ranking_stability(&val_records, source, config.seed)?;
        println!("{source}: heads {:?}, half-split Spearman {rho:.4}", sel.heads);
        selections.push(sel);
        rankings.push(ranking);
    }
    if selections.is_empty() {
        return Err(csl_core::Error::AttentionAbsent("no requested attention source is present".into()).into());
    }
    std::fs::create_dir_all(&common.out).with_context(|| format!("creating {}", common.out.display()))?;
    save_json(common.out.join("heads.json"), &selections)?;
    save_json(common.out.join("ranking.json"), &rankings)?;
    Ok(())
}

fn evaluate(common: &Common, heads: Option<&Path>) -> Result<()> {
    let mut config = common.eval_config()?;
    if let Some(path) = heads {
        config.frozen_heads = load_frozen(path)?;
    }
    let capture = common.capture()?;
    let report = eval::run_evaluate(&capture, &config)?;
    eval::write_report(&common.out, &report)?;
    print_summary(&report);
    Ok(())
}

fn ksweep(common: &Common, ks: &[usize]) -> Result<()> {
    let config = common.eval_config()?;
    let capture = common.capture()?;
    let sweep = eval::run_ksweep(&capture, &config, ks)?;
    std::fs::create_dir_all(&common.out).with_context(|| format!("creating {}", common.out.display()))?;
    save_json(common.out.join("ksweep.json"), &sweep)?;
    let table = eval::ksweep_csv(&sweep);
    write_text(&common.out.join("ksweep.csv"), &table)?;
    print!("{table}");
    Ok(())
}

fn transfer(common: &Common, from: &Path) -> Result<()> {
    let config = common.eval_config()?;
    let source = read(from)?;
    let target = common.capture()?;
    let report = eval::run_transfer(&source, &target, &config).map_err(|e| match e {
        csl_core::Error::Config(m) => config_error(m),
        other => other.into(),
    })?;
    eval::write_report(&common.out, &report)?;
    print_summary(&report);
    Ok(())
}

fn calibrate(common: &Common, folds: Option<usize>) -> Result<()> {
    let mut config = common.eval_config()?;
    config.splits = 1;
    if let Some(f) = folds {
        config.calibration_folds = f;
    }
    let capture = common.capture()?;
    let report = eval::run_evaluate(&capture, &config)?;
    std::fs::create_dir_all(&common.out).with_context(|| format!("creating {}", common.out.display()))?;
    save_json(common.out.join("calibration.json"), &report.calibration)?;
    let table = eval::reliability_csv(&report);
    write_text(&common.out.join("reliability.csv"), &table)?;
    print!("{table}");
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Validate { capture } => return validate(capture),
        Command::Synth(args) => synth(args)?,
        Command::MergeRatings {
            capture,
            labels,
            ratings,
            out,
        } => merge(capture, labels, ratings.as_deref(), out)?,
        Command::SelectHeads(common) => select_heads(common)?,
        Command::Evaluate { common, heads } => evaluate(common, heads.as_deref())?,
        Command::Ksweep { common, ks } => ksweep(common, ks)?,
        Command::Transfer { common, from } => transfer(common, from)?,
        Command::Calibrate { common, folds } => calibrate(common, *folds)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
