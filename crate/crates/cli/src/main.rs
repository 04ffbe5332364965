use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use stylefuse::config::PipelineConfig;
use stylefuse_cli::{CliError, PipelineFlags};

/// Unsupervised tweet-to-news conversion: style transfer plus proposition
/// merging, with the corpus and evaluation tooling around them.
#[derive(Parser)]
#[command(name = "stylefuse", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Flat `key = value` config file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

impl ConfigArg {
    fn load(&self) -> Result<PipelineConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a BPE vocabulary over one or more line corpora.
    TrainBpe {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, required = true)]
        input: Vec<PathBuf>,
        #[arg(long)]
        vocab_size: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cloze-pretrain the shared encoder/decoder on token streams.
    PretrainMlm {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        tweets: Option<PathBuf>,
        #[arg(long)]
        news: Option<PathBuf>,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Turn news sentences into synthetic tweets (`synthetic<TAB>original`).
    Corrupt {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        input: PathBuf,
        /// Tweet corpus to harvest the hashtag pool from.
        #[arg(long)]
        tweets: Option<PathBuf>,
        /// External `original<TAB>paraphrase` rewrites replacing the
        /// built-in lexical paraphraser.
        #[arg(long)]
        paraphrase: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build (P(y), y) merge-training pairs from clause files or templates.
    BuildMergeData {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        vocab: PathBuf,
        /// Clause file: `sentence<TAB>prop1<TAB>prop2...` per line.
        #[arg(long)]
        clauses: Option<PathBuf>,
        /// Generate this many templated records instead.
        #[arg(long)]
        templated: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Keep candidates similar to the reference corpus (TF-IDF cosine).
    FilterDomain {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long)]
        references: PathBuf,
        #[arg(long)]
        threshold: Option<f64>,
        /// Keyword pre-filter, comma separated.
        #[arg(long, value_delimiter = ',')]
        keywords: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// K-means cluster a corpus and emit one representative per cluster.
    ClusterSelect {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Also write `index<TAB>cluster` lines here.
        #[arg(long)]
        assignments: Option<PathBuf>,
    },
    /// Unsupervised style-transfer training (denoising + back-translation).
    TrainStyle {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        tweets: Option<PathBuf>,
        #[arg(long)]
        news: Option<PathBuf>,
        #[arg(long)]
        vocab: PathBuf,
        /// Warm-start checkpoint (usually the MLM pretraining output).
        #[arg(long)]
        init: Option<PathBuf>,
        /// Add the adversarial discriminator objectives.
        #[arg(long)]
        dis: bool,
        /// Add the synthetic-parallel corruption objective.
        #[arg(long)]
        syn: bool,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Train the proposition-merging model on `source<TAB>target` pairs.
    TrainMerge {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Convert a tweet file into news-style sentences, line for line.
    Transfer {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Merge blank-line-separated sentence groups into paragraphs.
    Merge {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// End to end: BPE, MLM, style training, merge training, inference.
    Pipeline {
        #[command(flatten)]
        config: ConfigArg,
        /// Blank-line-separated tweet groups to convert.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        dis: bool,
        #[arg(long)]
        syn: bool,
        /// Merge the raw tweets without style transfer.
        #[arg(long)]
        skip_style: bool,
        /// Concatenate transferred sentences instead of merging.
        #[arg(long)]
        skip_merge: bool,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Corpus BLEU of HYP against REF, multi-bleu line format.
    EvalBleu {
        #[command(flatten)]
        config: ConfigArg,
        hyp: PathBuf,
        reference: PathBuf,
        /// Lowercase both sides first.
        #[arg(long)]
        lowercase: bool,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::TrainBpe {
            config,
            input,
            vocab_size,
            out,
        } => {
            let cfg = config.load()?;
            stylefuse_cli::cmd_train_bpe(&input, vocab_size.unwrap_or(cfg.bpe_vocab_size), &out)
        }
        Command::PretrainMlm {
            config,
            tweets,
            news,
            vocab,
            out_dir,
        } => {
            let cfg = config.load()?;
            let tweets = tweets.unwrap_or_else(|| PathBuf::from(&cfg.tweets_path));
            let news = news.unwrap_or_else(|| PathBuf::from(&cfg.news_path));
            stylefuse_cli::cmd_pretrain_mlm(&cfg, &tweets, &news, &vocab, &out_dir)
        }
        Command::Corrupt {
            config,
            input,
            tweets,
            paraphrase,
            out,
        } => {
            let cfg = config.load()?;
            stylefuse_cli::cmd_corrupt(&cfg, &input, tweets.as_deref(), paraphrase.as_deref(), &out)
        }
        Command::BuildMergeData {
            config,
            vocab,
            clauses,
            templated,
            out,
        } => {
            let cfg = config.load()?;
            stylefuse_cli::cmd_build_merge_data(&cfg, &vocab, clauses.as_deref(), templated, &out)
        }
        Command::FilterDomain {
            config,
            candidates,
            references,
            threshold,
            keywords,
            out,
        } => {
            let cfg = config.load()?;
            stylefuse_cli::cmd_filter_domain(
                &candidates,
                &references,
                threshold.unwrap_or(cfg.similarity_threshold),
                &keywords,
                &out,
            )
        }
        Command::ClusterSelect {
            config,
            input,
            k,
            out,
            assignments,
        } => {
            let cfg = config.load()?;
            stylefuse_cli::cmd_cluster_select(
                &input,
                k.unwrap_or(cfg.kmeans_k),
                cfg.seed,
                cfg.kmeans_max_iter,
                &out,
                assignments.as_deref(),
            )
        }
        Command::TrainStyle {
            config,
            tweets,
            news,
            vocab,
            init,
            dis,
            syn,
            out_dir,
        } => {
            let cfg = config.load()?;
            let tweets = tweets.unwrap_or_else(|| PathBuf::from(&cfg.tweets_path));
            let news = news.unwrap_or_else(|| PathBuf::from(&cfg.news_path));
            stylefuse_cli::cmd_train_style(
                &cfg,
                &tweets,
                &news,
                &vocab,
                init.as_deref(),
                dis,
                syn,
                &out_dir,
            )
        }
        Command::TrainMerge {
            config,
            pairs,
            vocab,
            init,
            out_dir,
        } => {
            let cfg = config.load()?;
            stylefuse_cli::cmd_train_merge(&cfg, &pairs, &vocab, init.as_deref(), &out_dir)
        }
        Command::Transfer {
            config: _,
            model,
            vocab,
            input,
            out,
        } => stylefuse_cli::cmd_transfer(&model, &vocab, &input, &out),
        Command::Merge {
            config: _,
            model,
            vocab,
            input,
            out,
        } => stylefuse_cli::cmd_merge(&model, &vocab, &input, &out),
        Command::Pipeline {
            config,
            input,
            dis,
            syn,
            skip_style,
            skip_merge,
            out_dir,
        } => {
            let cfg = config.load()?;
            let flags = PipelineFlags {
                dis,
                syn,
                skip_style,
                skip_merge,
            };
            stylefuse_cli::cmd_pipeline(&cfg, &input, &flags, &out_dir)
        }
        Command::EvalBleu {
            config,
            hyp,
            reference,
            lowercase,
        } => {
            let cfg = config.load()?;
            stylefuse_cli::cmd_eval_bleu(&hyp, &reference, lowercase || cfg.eval_lowercase)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not usage errors.
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code as u8);
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
