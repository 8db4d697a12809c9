//! Command-line grammar.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "tprop", version, about = "Train and check recurrent language models with BPTT and blocked target propagation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Truncated back-propagation through time.
    TrainBptt(TrainArgs),
    /// Blocked target propagation (PM, ALM or ADMM schedule).
    TrainBtprop(TrainArgs),
    /// Perplexity of a checkpoint on a corpus split.
    Eval(EvalArgs),
    /// One-step gradient identity between the penalty loss and BPTT.
    VerifyEquivalence(VerifyEquivalenceArgs),
    /// Finite-difference audit of every backward path.
    VerifyGrads(VerifyGradsArgs),
    /// Hidden-size sweep or full hyperparameter grid.
    Sweep(SweepArgs),
    /// H-step and λ ablation in the minibatch regime.
    Ablate(AblateArgs),
    /// Build and save a vocabulary.
    BuildVocab(BuildVocabArgs),
    /// Re-run a training command from its manifest.
    Replay(ReplayArgs),
}

/// Run settings. Every value is applied through the same parser as config
/// files and `TPROP_*` variables.
#[derive(Debug, Clone, Default, Args)]
pub struct RunFlags {
    /// `key = value` file applied before environment and flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<String>,
    #[arg(long)]
    pub vocab: Option<String>,
    /// char or word.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub vocab_max: Option<String>,
    #[arg(long)]
    pub valid_frac: Option<String>,
    /// elman or gru.
    #[arg(long)]
    pub cell: Option<String>,
    #[arg(long)]
    pub hidden: Option<String>,
    #[arg(long)]
    pub no_bias: bool,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub epochs: Option<String>,
    /// batch or minibatch.
    #[arg(long)]
    pub regime: Option<String>,
    /// BPTT window length.
    #[arg(long = "K", alias = "k")]
    pub k: Option<String>,
    #[arg(long)]
    pub lr: Option<String>,
    /// sgd or adagrad.
    #[arg(long)]
    pub optimizer: Option<String>,
    /// BTPROP block length.
    #[arg(long = "B", alias = "block-len")]
    pub block_len: Option<String>,
    /// pm, alm or admm.
    #[arg(long)]
    pub schedule: Option<String>,
    #[arg(long)]
    pub minibatch_blocks: Option<String>,
    #[arg(long)]
    pub lambda: Option<String>,
    #[arg(long)]
    pub alpha_u: Option<String>,
    #[arg(long)]
    pub lr_h: Option<String>,
    #[arg(long)]
    pub lr_theta: Option<String>,
    #[arg(long)]
    pub h_steps: Option<String>,
    #[arg(long)]
    pub theta_steps: Option<String>,
    #[arg(long)]
    pub threads: Option<String>,
    #[arg(long)]
    pub h_optimizer: Option<String>,
    #[arg(long)]
    pub h_reinit_each_epoch: bool,
    /// Compare against a BPTT gradient every N segments (λ = 0 only).
    #[arg(long)]
    pub oracle_every: Option<String>,
    #[arg(long)]
    pub metrics_out: Option<String>,
    #[arg(long)]
    pub checkpoint_out: Option<String>,
}

impl RunFlags {
    /// Explicitly given flags as `(key, value)` pairs.
    pub fn overrides(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let mut put = |k: &'static str, v: &Option<String>| {
            if let Some(v) = v {
                out.push((k, v.clone()));
            }
        };
        put("corpus", &self.corpus);
        put("vocab", &self.vocab);
        put("mode", &self.mode);
        put("vocab-max", &self.vocab_max);
        put("valid-frac", &self.valid_frac);
        put("cell", &self.cell);
        put("hidden", &self.hidden);
        put("seed", &self.seed);
        put("epochs", &self.epochs);
        put("regime", &self.regime);
        put("k", &self.k);
        put("lr", &self.lr);
        put("optimizer", &self.optimizer);
        put("block-len", &self.block_len);
        put("schedule", &self.schedule);
        put("minibatch-blocks", &self.minibatch_blocks);
        put("lambda", &self.lambda);
        put("alpha-u", &self.alpha_u);
        put("lr-h", &self.lr_h);
        put("lr-theta", &self.lr_theta);
        put("h-steps", &self.h_steps);
        put("theta-steps", &self.theta_steps);
        put("threads", &self.threads);
        put("h-optimizer", &self.h_optimizer);
        put("oracle-every", &self.oracle_every);
        put("metrics-out", &self.metrics_out);
        put("checkpoint-out", &self.checkpoint_out);
        if self.no_bias {
            out.push(("bias", "false".into()));
        }
        if self.h_reinit_each_epoch {
            out.push(("h-reinit-each-epoch", "true".into()));
        }
        out
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunFlags,
    /// Where to write the run manifest (default: next to --metrics-out).
    #[arg(long)]
    pub manifest_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Split {
    All,
    Train,
    Valid,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Defaults to the vocabulary saved next to the checkpoint.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "all")]
    pub split: Split,
    #[arg(long, default_value_t = 0.05)]
    pub valid_frac: f64,
}

#[derive(Debug, Args)]
pub struct VerifyEquivalenceArgs {
    /// Restrict to one cell (default: both).
    #[arg(long)]
    pub cell: Option<String>,
    /// Restrict to one step size (default: 0.1, 0.01, 0.001).
    #[arg(long)]
    pub eta: Option<f64>,
    /// Restrict to one penalty weight (default: 1, 0.1, 0.01).
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Random instances per grid point.
    #[arg(long, default_value_t = 10)]
    pub seeds: u64,
    /// Perturb the free state away from the forward prediction.
    #[arg(long, default_value_t = 0.0)]
    pub init_offset: f64,
}

#[derive(Debug, Args)]
pub struct VerifyGradsArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub count: u64,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunFlags,
    /// Comma-separated hidden sizes; each runs BPTT and BTPROP with H = 2 and 5.
    #[arg(long, default_value = "16,32,64")]
    pub hidden_sizes: String,
    /// Run the full hyperparameter grid instead of the hidden-size axis.
    #[arg(long)]
    pub grid: bool,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Write summary.csv with the planned runs and stop.
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub run: RunFlags,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct BuildVocabArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value = "char")]
    pub mode: String,
    #[arg(long)]
    pub vocab_max: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub metrics_out: PathBuf,
    /// Thread count for the replay; results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
}
