//! The `ria` command line.
//!
//! Settings resolve as: command-line flag, then the optional `--config` JSON
//! file, then built-in defaults. Every output file is written atomically.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::data::{
    generate_synthetic, load_dataset, read_dataset_dir, split_dataset, write_dataset, Dataset, DatasetStats, Split,
    SyntheticConfig, TEST_FILE, TRAIN_FILE, VOCAB_FILE,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate, evaluate_model, ground_truth, Metrics};
use crate::experiment::{run_order_experiment, ExperimentConfig};
use crate::inference::{annotate_dataset, annotations_jsonl, Annotation, DecodePolicy, DEFAULT_MAX_LEN};
use crate::io::write_atomic;
use crate::model::{gradient_check, tiny_problem, GradCheckOptions, ModelConfig};
use crate::ordering::OrderStrategy;
use crate::training::{load_checkpoint, save_checkpoint, train_with, EvalSchedule, OptimizerConfig, TrainOptions};

const DEFAULT_EMBED_DIM: usize = 1024;
const DEFAULT_HIDDEN_DIM: usize = 1024;

#[derive(Debug, Parser)]
#[command(name = "ria", version, about = "Recurrent image annotator: LSTM tag-sequence decoding over image features")]
pub struct Cli {
    /// Optional JSON file with settings; flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic clustered dataset with Zipf tag frequencies
    Synth(SynthArgs),
    /// Print corpus statistics (vocabulary, images, words per image, images per word)
    Stats(StatsArgs),
    /// Train a model and write a checkpoint
    Train(TrainArgs),
    /// Decode tags for every example of a split, as JSON Lines
    Annotate(AnnotateArgs),
    /// Per-class precision, recall, F-measure and N+ of a model or an annotation file
    Evaluate(EvaluateArgs),
    /// Compare analytic gradients with finite differences on a tiny random model
    Gradcheck(GradcheckArgs),
    /// Train every tag order over several seeds and summarise the results
    CompareOrders(CompareArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderArg {
    Dictionary,
    Random,
    RareFirst,
    FrequentFirst,
}

impl From<OrderArg> for OrderStrategy {
    fn from(o: OrderArg) -> Self {
        match o {
            OrderArg::Dictionary => OrderStrategy::Dictionary,
            OrderArg::Random => OrderStrategy::Random,
            OrderArg::RareFirst => OrderStrategy::RareFirst,
            OrderArg::FrequentFirst => OrderStrategy::FrequentFirst,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    Arbitrary,
    FixedK,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Dataset directory holding vocab.txt, train.jsonl and optionally test.jsonl
    #[arg(long, value_name = "DIR")]
    pub data: Option<PathBuf>,
    /// Vocabulary file (one tag per line); use with --train instead of --data
    #[arg(long, value_name = "FILE", requires = "train")]
    pub vocab: Option<PathBuf>,
    /// Training examples (JSON Lines)
    #[arg(long, value_name = "FILE", requires = "vocab")]
    pub train: Option<PathBuf>,
    /// Test examples (JSON Lines)
    #[arg(long, value_name = "FILE", requires = "vocab")]
    pub test: Option<PathBuf>,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        match (&self.data, &self.vocab, &self.train) {
            (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
                Err(usage("use either --data or --vocab/--train/--test, not both"))
            }
            (Some(dir), None, None) => read_dataset_dir(dir),
            (None, Some(v), Some(t)) => load_dataset(v, t, self.test.as_deref()),
            _ => Err(usage("a dataset is required: --data DIR or --vocab FILE --train FILE")),
        }
    }
}

#[derive(Debug, Args, Default)]
pub struct DecodeArgs {
    /// Decoding mode [default: arbitrary]
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Tags per image in fixed-k mode (requires --mode fixed-k)
    #[arg(long)]
    pub k: Option<usize>,
    /// Length cap in arbitrary mode [default: 20]
    #[arg(long)]
    pub max_len: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct ModelArgs {
    /// Tag embedding dimension D [default: 1024]
    #[arg(long)]
    pub embed_dim: Option<usize>,
    /// LSTM hidden dimension H [default: 1024]
    #[arg(long)]
    pub hidden_dim: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct OptimArgs {
    /// Adam learning rate [default: 0.0001]
    #[arg(long)]
    pub lr: Option<f64>,
    /// Adam beta1 [default: 0.9]
    #[arg(long)]
    pub beta1: Option<f64>,
    /// Adam beta2 [default: 0.999]
    #[arg(long)]
    pub beta2: Option<f64>,
    /// Adam epsilon [default: 0.1]
    #[arg(long)]
    pub adam_eps: Option<f64>,
    /// Global gradient-norm clipping threshold [default: 5]
    #[arg(long)]
    pub clip_norm: Option<f64>,
    /// Examples per gradient step [default: 32]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Training epochs [default: 50]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Dropout rate on the classifier input [default: 0.5]
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Resample the random tag order every epoch (default: once per run)
    #[arg(long)]
    pub resample_random: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Master seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of tags [default: 50]
    #[arg(long)]
    pub vocab_size: Option<usize>,
    /// Number of feature clusters [default: 10]
    #[arg(long)]
    pub clusters: Option<usize>,
    /// Tags owned by each cluster [default: 5]
    #[arg(long)]
    pub tags_per_cluster: Option<usize>,
    /// Feature dimension [default: 32]
    #[arg(long)]
    pub feature_dim: Option<usize>,
    /// Number of examples over both splits [default: 2500]
    #[arg(long)]
    pub examples: Option<usize>,
    /// Zipf exponent of the tag frequencies [default: 1.0]
    #[arg(long)]
    pub zipf: Option<f64>,
    /// Feature noise standard deviation [default: 0.3]
    #[arg(long)]
    pub noise: Option<f64>,
    /// Fraction of examples in the training split [default: 0.8]
    #[arg(long)]
    pub train_fraction: Option<f64>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Also write the statistics as JSON
    #[arg(long, value_name = "FILE")]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Where to write the trained checkpoint
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    /// Per-epoch history CSV (epoch,loss,precision,recall,f_measure,n_plus)
    #[arg(long, value_name = "FILE")]
    pub history: Option<PathBuf>,
    /// Tag order used to build training sequences [default: rare-first]
    #[arg(long, value_enum)]
    pub order: Option<OrderArg>,
    /// Master seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Evaluate every N epochs (0 disables) [default: 0]
    #[arg(long)]
    pub eval_every: Option<usize>,
    /// Split used for periodic evaluation [default: test]
    #[arg(long, value_enum)]
    pub eval_split: Option<SplitArg>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[command(flatten)]
    pub decode: DecodeArgs,
}

#[derive(Debug, Args)]
pub struct AnnotateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    /// Split to annotate [default: test]
    #[arg(long, value_enum)]
    pub split: Option<SplitArg>,
    /// Output JSON Lines file
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    #[command(flatten)]
    pub decode: DecodeArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Model to decode with (alternative to --predictions)
    #[arg(long, value_name = "FILE", conflicts_with = "predictions")]
    pub checkpoint: Option<PathBuf>,
    /// Annotation JSON Lines produced by `annotate`
    #[arg(long, value_name = "FILE")]
    pub predictions: Option<PathBuf>,
    /// Split holding the ground truth [default: test]
    #[arg(long, value_enum)]
    pub split: Option<SplitArg>,
    /// Write the full metrics (per-class arrays included) as JSON
    #[arg(long, value_name = "FILE")]
    pub json: Option<PathBuf>,
    #[command(flatten)]
    pub decode: DecodeArgs,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Seed of the random tiny model [default: 1]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Finite-difference step [default: 1e-5]
    #[arg(long)]
    pub eps: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Output directory for history CSVs and the summary
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Comma-separated seeds [default: 1,2,3,4,5]
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    /// Restrict to these orders (comma-separated) [default: all four]
    #[arg(long, value_enum, value_delimiter = ',')]
    pub orders: Vec<OrderArg>,
    /// Evaluate every N epochs [default: 5]
    #[arg(long)]
    pub eval_every: Option<usize>,
    /// Split to evaluate on [default: test]
    #[arg(long, value_enum)]
    pub eval_split: Option<SplitArg>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[command(flatten)]
    pub decode: DecodeArgs,
}

/// Contents of `--config`.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub order: Option<OrderArg>,
    pub embed_dim: Option<usize>,
    pub hidden_dim: Option<usize>,
    pub optimizer: Option<OptimizerFile>,
    pub decode: Option<DecodeFile>,
    pub synthetic: Option<SyntheticConfig>,
    pub train_fraction: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerFile {
    pub learning_rate: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub epsilon: Option<f64>,
    pub clip_norm: Option<f64>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub dropout_rate: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeFile {
    pub mode: Option<ModeArg>,
    pub k: Option<usize>,
    pub max_len: Option<usize>,
}

fn usage(msg: impl Into<String>) -> Error {
    Error::Config(format!("usage: {}", msg.into()))
}

fn is_usage(e: &Error) -> bool {
    matches!(e, Error::Config(m) if m.starts_with("usage: "))
}

fn read_config(path: Option<&Path>) -> Result<ConfigFile> {
    match path {
        None => Ok(ConfigFile::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", p.display())))
        }
    }
}

fn resolve_policy(args: &DecodeArgs, file: &ConfigFile) -> Result<DecodePolicy> {
    let from_file = file.decode.as_ref();
    if args.k.is_some() && args.mode != Some(ModeArg::FixedK) {
        return Err(usage("--k requires --mode fixed-k"));
    }
    if args.max_len.is_some() && args.mode == Some(ModeArg::FixedK) {
        return Err(usage("--max-len only applies to --mode arbitrary"));
    }
    let mode = args
        .mode
        .or(from_file.and_then(|d| d.mode))
        .unwrap_or(ModeArg::Arbitrary);
    match mode {
        ModeArg::Arbitrary => Ok(DecodePolicy::Arbitrary {
            max_len: args
                .max_len
                .or(from_file.and_then(|d| d.max_len))
                .unwrap_or(DEFAULT_MAX_LEN),
        }),
        ModeArg::FixedK => {
            let k = args
                .k
                .or(from_file.and_then(|d| d.k))
                .ok_or_else(|| usage("--mode fixed-k needs --k"))?;
            Ok(DecodePolicy::FixedK { k })
        }
    }
}

fn resolve_optimizer(args: &OptimArgs, seed: Option<u64>, file: &ConfigFile) -> OptimizerConfig {
    let d = OptimizerConfig::default();
    let f = file.optimizer.as_ref();
    let pick = |flag: Option<f64>, from: fn(&OptimizerFile) -> Option<f64>, default: f64| {
        flag.or(f.and_then(from)).unwrap_or(default)
    };
    OptimizerConfig {
        learning_rate: pick(args.lr, |o| o.learning_rate, d.learning_rate),
        beta1: pick(args.beta1, |o| o.beta1, d.beta1),
        beta2: pick(args.beta2, |o| o.beta2, d.beta2),
        epsilon: pick(args.adam_eps, |o| o.epsilon, d.epsilon),
        clip_norm: pick(args.clip_norm, |o| o.clip_norm, d.clip_norm),
        dropout_rate: pick(args.dropout, |o| o.dropout_rate, d.dropout_rate),
        batch_size: args.batch_size.or(f.and_then(|o| o.batch_size)).unwrap_or(d.batch_size),
        epochs: args.epochs.or(f.and_then(|o| o.epochs)).unwrap_or(d.epochs),
        seed: seed.or(file.seed).unwrap_or(d.seed),
    }
}

fn resolve_model(args: &ModelArgs, file: &ConfigFile, dataset: &Dataset) -> Result<ModelConfig> {
    ModelConfig::new(
        dataset.feature_dim,
        args.embed_dim.or(file.embed_dim).unwrap_or(DEFAULT_EMBED_DIM),
        args.hidden_dim.or(file.hidden_dim).unwrap_or(DEFAULT_HIDDEN_DIM),
        dataset.tag_count(),
    )
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit status: 0 on success, 1 on failure, 2 on usage errors.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if is_usage(&e) {
                2
            } else {
                1
            }
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let file = read_config(cli.config.as_deref())?;
    match &cli.command {
        Command::Synth(a) => synth(a, &file),
        Command::Stats(a) => stats(a),
        Command::Train(a) => train_cmd(a, &file),
        Command::Annotate(a) => annotate(a, &file),
        Command::Evaluate(a) => evaluate_cmd(a, &file),
        Command::Gradcheck(a) => gradcheck(a),
        Command::CompareOrders(a) => compare(a, &file),
    }
}

fn synth(a: &SynthArgs, file: &ConfigFile) -> Result<()> {
    let base = file.synthetic.clone().unwrap_or_default();
    let config = SyntheticConfig {
        seed: a.seed.or(file.seed).unwrap_or(base.seed),
        vocab_size: a.vocab_size.unwrap_or(base.vocab_size),
        cluster_count: a.clusters.unwrap_or(base.cluster_count),
        tags_per_cluster: a.tags_per_cluster.unwrap_or(base.tags_per_cluster),
        feature_dim: a.feature_dim.unwrap_or(base.feature_dim),
        examples: a.examples.unwrap_or(base.examples),
        zipf_exponent: a.zipf.unwrap_or(base.zipf_exponent),
        noise_sigma: a.noise.unwrap_or(base.noise_sigma),
        ..base
    };
    let fraction = a.train_fraction.or(file.train_fraction).unwrap_or(0.8);
    let dataset = split_dataset(&generate_synthetic(&config)?, fraction, config.seed)?;
    write_dataset(&dataset, &a.out)?;
    println!(
        "wrote {} train / {} test examples ({} tags, F={}) to {}",
        dataset.train.len(),
        dataset.test.len(),
        dataset.tag_count(),
        dataset.feature_dim,
        a.out.display()
    );
    Ok(())
}

fn stats(a: &StatsArgs) -> Result<()> {
    let dataset = a.data.load()?;
    let train = DatasetStats::of(&dataset.train, &dataset.vocab);
    println!("training split\n{train}");
    let test = (!dataset.test.is_empty()).then(|| DatasetStats::of(&dataset.test, &dataset.vocab));
    if let Some(t) = &test {
        println!("\ntest split\n{t}");
    }
    if let Some(path) = &a.json {
        let body = serde_json::json!({ "train": train, "test": test });
        write_atomic(path, serde_json::to_string_pretty(&body)?.as_bytes())?;
    }
    Ok(())
}

fn train_cmd(a: &TrainArgs, file: &ConfigFile) -> Result<()> {
    let policy = resolve_policy(&a.decode, file)?;
    let dataset = a.data.load()?;
    let model = resolve_model(&a.model, file, &dataset)?;
    let optimizer = resolve_optimizer(&a.optim, a.seed, file);
    optimizer.validate()?;
    let order: OrderStrategy = a.order.or(file.order).unwrap_or(OrderArg::RareFirst).into();
    let eval_every = a.eval_every.unwrap_or(0);
    let split: Split = a.eval_split.unwrap_or(SplitArg::Test).into();
    let options = TrainOptions {
        resample_random_each_epoch: a.optim.resample_random,
        eval: (eval_every > 0 && !dataset.split(split).is_empty()).then_some(EvalSchedule {
            split,
            every: eval_every,
            policy,
        }),
    };
    let outcome = train_with(&dataset, &model, &optimizer, order, &options, |r| {
        println!("epoch {:>4}  loss {:.6}", r.epoch, r.mean_loss);
    })?;
    save_checkpoint(&outcome.params, &model, &dataset.vocab, &a.checkpoint)?;
    if let Some(path) = &a.history {
        write_atomic(path, outcome.history.to_csv().as_bytes())?;
    }
    if let Some(m) = outcome.history.last().and_then(|r| r.metrics.as_ref()) {
        println!("{m}");
    }
    Ok(())
}

fn decode_split(a: &AnnotateArgs, file: &ConfigFile) -> Result<String> {
    let policy = resolve_policy(&a.decode, file)?;
    let dataset = a.data.load()?;
    let ckpt = load_checkpoint(&a.checkpoint)?;
    ckpt.check_vocabulary(&dataset.vocab)?;
    let examples = dataset.split(a.split.unwrap_or(SplitArg::Test).into());
    let decoded = annotate_dataset(&ckpt.params, &ckpt.config, examples, policy)?;
    let capped = decoded.iter().filter(|(_, d)| d.hit_cap).count();
    if capped > 0 {
        log::warn!("{capped} images reached the length cap without STOP");
    }
    annotations_jsonl(&decoded, &ckpt.vocab)
}

fn annotate(a: &AnnotateArgs, file: &ConfigFile) -> Result<()> {
    let body = decode_split(a, file)?;
    write_atomic(&a.out, body.as_bytes())?;
    println!("wrote {} annotations to {}", body.lines().count(), a.out.display());
    Ok(())
}

fn read_annotations(path: &Path, dataset: &Dataset) -> Result<std::collections::BTreeMap<String, Vec<usize>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::collections::BTreeMap::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message,
        };
        let record: Annotation = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        let tags = record
            .tags
            .iter()
            .map(|t| {
                dataset
                    .vocab
                    .index_of(t.trim())
                    .ok_or_else(|| err(format!("tag {t:?} is not in the vocabulary")))
            })
            .collect::<Result<Vec<_>>>()?;
        out.insert(record.id, tags);
    }
    Ok(out)
}

fn evaluate_cmd(a: &EvaluateArgs, file: &ConfigFile) -> Result<()> {
    let dataset = a.data.load()?;
    let examples = dataset.split(a.split.unwrap_or(SplitArg::Test).into());
    let metrics: Metrics = match (&a.checkpoint, &a.predictions) {
        (Some(ckpt_path), None) => {
            let policy = resolve_policy(&a.decode, file)?;
            let ckpt = load_checkpoint(ckpt_path)?;
            ckpt.check_vocabulary(&dataset.vocab)?;
            evaluate_model(&ckpt.params, &ckpt.config, examples, policy)?
        }
        (None, Some(pred)) => {
            let predictions = read_annotations(pred, &dataset)?;
            evaluate(&predictions, &ground_truth(examples), dataset.tag_count())?
        }
        _ => return Err(usage("evaluate needs exactly one of --checkpoint or --predictions")),
    };
    println!("{:>6} {:>6} {:>6} {:>6}", "P", "R", "F", "N+");
    let (p, r, f, n) = metrics.percentages();
    println!("{p:>6} {r:>6} {f:>6} {n:>6}");
    println!(
        "mean precision {:.6}, mean recall {:.6}, F {:.6}; {} of {} classes absent from the ground truth",
        metrics.mean_precision,
        metrics.mean_recall,
        metrics.f_measure,
        metrics.excluded_classes,
        dataset.tag_count()
    );
    if let Some(path) = &a.json {
        write_atomic(path, serde_json::to_string_pretty(&metrics)?.as_bytes())?;
    }
    Ok(())
}

fn gradcheck(a: &GradcheckArgs) -> Result<()> {
    let (config, params, feature, target) = tiny_problem(a.seed.unwrap_or(1));
    let options = GradCheckOptions {
        eps: a.eps.unwrap_or(1e-5),
        ..Default::default()
    };
    let report = gradient_check(&params, &config, &feature, &target, &options)?;
    println!("{report}");
    if report.max_rel_error < 1e-4 {
        Ok(())
    } else {
        Err(Error::Eval(format!(
            "max relative error {:.3e} exceeds 1e-4",
            report.max_rel_error
        )))
    }
}

fn compare(a: &CompareArgs, file: &ConfigFile) -> Result<()> {
    let policy = resolve_policy(&a.decode, file)?;
    let dataset = a.data.load()?;
    let model = resolve_model(&a.model, file, &dataset)?;
    let optimizer = resolve_optimizer(&a.optim, None, file);
    optimizer.validate()?;
    let config = ExperimentConfig {
        strategies: if a.orders.is_empty() {
            OrderStrategy::ALL.to_vec()
        } else {
            a.orders.iter().map(|&o| o.into()).collect()
        },
        seeds: if a.seeds.is_empty() { vec![1, 2, 3, 4, 5] } else { a.seeds.clone() },
        embed_dim: model.embed_dim,
        hidden_dim: model.hidden_dim,
        optimizer,
        eval_split: a.eval_split.unwrap_or(SplitArg::Test).into(),
        eval_every: a.eval_every.unwrap_or(5),
        policy,
        resample_random_each_epoch: a.optim.resample_random,
    };
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let out = a.out.clone();
    let mut write_err = None;
    let experiment = run_order_experiment(&dataset, &config, |run| {
        let path = out.join(format!("history_{}_seed{}.csv", run.strategy, run.seed));
        if let Err(e) = write_atomic(&path, run.history.to_csv().as_bytes()) {
            write_err.get_or_insert(e);
        }
        println!("{:<15} seed {:<4} {}", run.strategy.as_str(), run.seed, run.metrics);
    })?;
    if let Some(e) = write_err {
        return Err(e);
    }
    write_atomic(&a.out.join("summary.csv"), experiment.summary_csv().as_bytes())?;
    println!("\nmedian over seeds\n{}", experiment.summary_table());
    Ok(())
}

/// File names `synth` writes, for callers that want to locate them.
pub fn dataset_files(dir: &Path) -> [PathBuf; 3] {
    [dir.join(VOCAB_FILE), dir.join(TRAIN_FILE), dir.join(TEST_FILE)]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("ria").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn k_requires_fixed_mode() {
        let file = ConfigFile::default();
        let bad = DecodeArgs {
            k: Some(5),
            ..Default::default()
        };
        assert!(is_usage(&resolve_policy(&bad, &file).unwrap_err()));
        let ok = DecodeArgs {
            mode: Some(ModeArg::FixedK),
            k: Some(5),
            max_len: None,
        };
        assert_eq!(resolve_policy(&ok, &file).unwrap(), DecodePolicy::FixedK { k: 5 });
        assert_eq!(
            resolve_policy(&DecodeArgs::default(), &file).unwrap(),
            DecodePolicy::Arbitrary { max_len: 20 }
        );
    }

    #[test]
    fn flags_override_config_file_over_defaults() {
        let file: ConfigFile = serde_json::from_str(
            r#"{"seed": 9, "optimizer": {"learning_rate": 0.01, "batch_size": 4}, "decode": {"max_len": 7}}"#,
        )
        .unwrap();
        let args = OptimArgs {
            batch_size: Some(8),
            ..Default::default()
        };
        let opt = resolve_optimizer(&args, None, &file);
        assert_eq!(opt.learning_rate, 0.01);
        assert_eq!(opt.batch_size, 8);
        assert_eq!(opt.epsilon, 0.1);
        assert_eq!(opt.seed, 9);
        assert_eq!(resolve_optimizer(&args, Some(3), &file).seed, 3);
        assert_eq!(
            resolve_policy(&DecodeArgs::default(), &file).unwrap(),
            DecodePolicy::Arbitrary { max_len: 7 }
        );
        assert!(serde_json::from_str::<ConfigFile>(r#"{"learning_rate": 1}"#).is_err());
    }

    #[test]
    fn parses_subcommands() {
        let cli = parse(&["train", "--data", "d", "--checkpoint", "m.json", "--order", "frequent-first", "--adam-eps", "1e-8"]);
        match cli.command {
            Command::Train(t) => {
                assert_eq!(t.order, Some(OrderArg::FrequentFirst));
                assert_eq!(t.optim.adam_eps, Some(1e-8));
            }
            other => panic!("{other:?}"),
        }
        let cli = parse(&["compare-orders", "--data", "d", "--out", "o", "--seeds", "1,2,3"]);
        match cli.command {
            Command::CompareOrders(c) => assert_eq!(c.seeds, vec![1, 2, 3]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["ria", "train", "--bogus"]), 2);
        assert_eq!(run(["ria", "frobnicate"]), 2);
        assert_eq!(run(["ria", "--help"]), 0);
    }
}
