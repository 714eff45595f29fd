use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use docpool::align::{IndexBackend, DEFAULT_TOPK};
use docpool::commands::{
    cmd_align, cmd_compose, cmd_eval, cmd_stats, cmd_train, format_stats, AlignConfig, ComposeConfig, ComposeOutcome,
    EvalConfig, PertParams, Strategy, TrainCmdConfig,
};
use docpool::corpus::{Split, DEFAULT_BOTTOM_TOKENS, DEFAULT_TOP_TOKENS};
use docpool::learner::{Optimizer, PoolingMode, TaskKind, TrainConfig};
use docpool::metrics::ALIGNMENT_BOOTSTRAP_SAMPLES;
use docpool::pert::{DEFAULT_GAMMA, DEFAULT_PARTS, DEFAULT_RESOLUTION};
use docpool::weighting::TfVariant;

#[derive(Parser)]
#[command(name = "docpool", version, about = "Document embeddings from sentence embeddings")]
struct Cli {
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compose one vector per document, or write excerpt token ranges.
    Compose(ComposeArgs),
    /// Train an attention pooler with a small classifier head.
    Train(TrainArgs),
    /// Evaluate a trained pooler per language with bootstrap CIs.
    Eval(EvalArgs),
    /// Align documents across two languages and score recall.
    Align(AlignArgs),
    /// Corpus statistics per language.
    Stats(StatsArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Tf {
    Tf2,
    Tf4,
}

impl From<Tf> for TfVariant {
    fn from(t: Tf) -> Self {
        match t {
            Tf::Tf2 => TfVariant::Tf2,
            Tf::Tf4 => TfVariant::Tf4,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Args)]
struct PertArgs {
    #[arg(long = "pert-j", default_value_t = DEFAULT_PARTS)]
    parts: usize,
    #[arg(long = "pert-gamma", default_value_t = DEFAULT_GAMMA)]
    gamma: f64,
    #[arg(long = "pert-resolution", default_value_t = DEFAULT_RESOLUTION)]
    resolution: usize,
}

impl From<&PertArgs> for PertParams {
    fn from(a: &PertArgs) -> Self {
        PertParams {
            parts: a.parts,
            gamma: a.gamma,
            resolution: a.resolution,
        }
    }
}

#[derive(Args)]
struct ComposeArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long, value_parser = |s: &str| s.parse::<Strategy>().map_err(|e| e.to_string()))]
    strategy: Strategy,
    #[arg(long, value_enum, default_value = "tf4")]
    tf_variant: Tf,
    #[command(flatten)]
    pert: PertArgs,
    #[arg(long, value_enum, default_value = "off")]
    boilerplate: OnOff,
    /// 0 keeps the encoder dimension.
    #[arg(long, default_value_t = 0)]
    pca_dim: usize,
    #[arg(long, default_value_t = DEFAULT_TOP_TOKENS)]
    top_tokens: usize,
    #[arg(long, default_value_t = DEFAULT_BOTTOM_TOKENS)]
    bottom_tokens: usize,
    /// Write per-document sentence weights as JSON.
    #[arg(long)]
    dump_weights: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    AttPert,
    AttTfPert,
}

#[derive(Clone, Copy, ValueEnum)]
enum Task {
    Multiclass,
    Multilabel,
}

#[derive(Clone, Copy, ValueEnum)]
enum Opt {
    Adam,
    Sgd,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long, value_enum, default_value = "att-pert")]
    mode: Mode,
    #[arg(long, value_enum, default_value = "multiclass")]
    task: Task,
    #[arg(long)]
    train_lang: Option<String>,
    #[arg(long, value_enum, default_value = "tf4")]
    tf_variant: Tf,
    #[command(flatten)]
    pert: PertArgs,
    #[arg(long, default_value_t = 0)]
    pca_dim: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, value_enum, default_value = "adam")]
    optimizer: Opt,
    #[arg(long, default_value_t = 5)]
    patience: usize,
    #[arg(long, default_value_t = 10)]
    hidden: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Dev,
    Test,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    #[arg(long, value_enum, default_value = "tf4")]
    tf_variant: Tf,
    #[arg(long, default_value_t = 1000)]
    bootstrap_samples: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AlignArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Composed document vectors.
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    src_lang: String,
    #[arg(long)]
    tgt_lang: String,
    #[arg(long)]
    gold: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_TOPK)]
    topk: usize,
    /// Use a partitioned index with this many lists (0 = exact search).
    #[arg(long, default_value_t = 0)]
    index_lists: usize,
    #[arg(long, default_value_t = 1)]
    index_probe: usize,
    #[arg(long, default_value_t = ALIGNMENT_BOOTSTRAP_SAMPLES)]
    bootstrap_samples: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(cli: Cli) -> docpool::Result<()> {
    match cli.command {
        Command::Compose(a) => {
            let cfg = ComposeConfig {
                manifest: a.manifest,
                embeddings: a.embeddings,
                strategy: a.strategy,
                tf_variant: a.tf_variant.into(),
                pert: (&a.pert).into(),
                boilerplate: matches!(a.boilerplate, OnOff::On),
                pca_dim: a.pca_dim,
                top_tokens: a.top_tokens,
                bottom_tokens: a.bottom_tokens,
                dump_weights: a.dump_weights,
                out: a.out,
            };
            match cmd_compose(&cfg)? {
                ComposeOutcome::Vectors { path, count, dim } => {
                    println!("wrote {count} vectors of dim {dim} to {}", path.display())
                }
                ComposeOutcome::Ranges { path, count } => {
                    println!("wrote {count} token range specs to {}", path.display())
                }
            }
        }
        Command::Train(a) => {
            let cfg = TrainCmdConfig {
                manifest: a.manifest,
                embeddings: a.embeddings,
                mode: match a.mode {
                    Mode::AttPert => PoolingMode::AttPert,
                    Mode::AttTfPert => PoolingMode::AttTfPert,
                },
                task: match a.task {
                    Task::Multiclass => TaskKind::Multiclass,
                    Task::Multilabel => TaskKind::Multilabel,
                },
                train_lang: a.train_lang,
                tf_variant: a.tf_variant.into(),
                pert: (&a.pert).into(),
                pca_dim: a.pca_dim,
                train: TrainConfig {
                    seed: cli.seed,
                    learning_rate: a.lr,
                    epochs: a.epochs,
                    batch_size: a.batch_size,
                    optimizer: match a.optimizer {
                        Opt::Adam => Optimizer::Adam,
                        Opt::Sgd => Optimizer::Sgd,
                    },
                    patience: a.patience,
                    hidden: a.hidden,
                },
                out: a.out,
            };
            let report = cmd_train(&cfg)?;
            for m in &report.epochs {
                println!(
                    "epoch {:>3}  loss {:.5}  train {:.4}  dev {:.4}",
                    m.epoch, m.train_loss, m.train_metric, m.dev_metric
                );
            }
            println!("best epoch {}, dev {:.4}", report.best_epoch, report.final_dev_metric);
        }
        Command::Eval(a) => {
            let cfg = EvalConfig {
                manifest: a.manifest,
                embeddings: a.embeddings,
                model: a.model,
                split: match a.split {
                    SplitArg::Train => Split::Train,
                    SplitArg::Dev => Split::Dev,
                    SplitArg::Test => Split::Test,
                },
                tf_variant: a.tf_variant.into(),
                bootstrap_samples: a.bootstrap_samples,
                seed: cli.seed,
                out: a.out,
            };
            for s in cmd_eval(&cfg)? {
                println!("{}\t{}\t{}\t{}", s.lang, s.metric, s.n_docs, s.formatted);
            }
        }
        Command::Align(a) => {
            let backend = if a.index_lists == 0 {
                IndexBackend::Exact
            } else {
                IndexBackend::Partitioned {
                    n_lists: a.index_lists,
                    n_probe: a.index_probe,
                    seed: cli.seed,
                }
            };
            let cfg = AlignConfig {
                manifest: a.manifest,
                embeddings: a.embeddings,
                src_lang: a.src_lang,
                tgt_lang: a.tgt_lang,
                gold: a.gold,
                topk: a.topk,
                backend,
                bootstrap_samples: a.bootstrap_samples,
                seed: cli.seed,
                out: a.out,
            };
            let m = cmd_align(&cfg)?;
            println!(
                "recall {:.4} [{:.4}, {:.4}] over {} gold pairs",
                m.recall, m.ci_low, m.ci_high, m.n_gold
            );
        }
        Command::Stats(a) => {
            print!("{}", format_stats(&cmd_stats(&a.manifest, a.out.as_deref())?));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    if let Some(n) = std::env::var("DOCPOOL_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // argument errors are validation failures; help and version are not errors
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
