//! The `tprop` command-line tool.

pub mod ablate;
pub mod args;
pub mod error;
pub mod manifest;
pub mod runner;
pub mod settings;
pub mod sweep;

use std::ffi::OsString;
use std::path::Path;

use clap::Parser;
use serde::Serialize;
use tprop_core::data::{Corpus, TokenMode, Vocab};
use tprop_core::eval::evaluate;
use tprop_core::model::{checkpoint, CellKind, ModelDims};
use tprop_core::verify::{check_equivalence_with, gradcheck_all, EquivalenceSetup};
use tprop_core::ParamSet;

use crate::args::{Cli, Command, RunFlags, Split};
use crate::error::{CliError, CliResult, EXIT_CONFIG};
use crate::manifest::{sidecar, RunManifest, Trainer};
use crate::runner::{read_text, read_vocab, write_vocab, RunOptions};
use crate::settings::Settings;

/// Parses `argv`, runs the command and returns the process exit code.
/// `env` feeds the `TPROP_*` settings layer.
pub fn run<I, T, E>(argv: I, env: E) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
    E: IntoIterator<Item = (String, String)>,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    match dispatch(cli.command, env.into_iter().collect()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Defaults, then `--config`, then environment, then flags.
pub fn resolve(flags: &RunFlags, env: Vec<(String, String)>) -> CliResult<Settings> {
    let mut s = Settings::default();
    if let Some(p) = &flags.config {
        s.apply_file(p)?;
    }
    s.apply_env(env)?;
    for (k, v) in flags.overrides() {
        s.set(k, &v)
            .map_err(|e| CliError::Config(format!("--{k}: {e}")))?;
    }
    Ok(s)
}

fn print_json<T: Serialize>(value: &T) -> CliResult<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn dispatch(command: Command, env: Vec<(String, String)>) -> CliResult<i32> {
    match command {
        Command::TrainBptt(a) => train_cmd(Trainer::TrainBptt, &a.run, a.manifest_out, env),
        Command::TrainBtprop(a) => train_cmd(Trainer::TrainBtprop, &a.run, a.manifest_out, env),
        Command::Eval(a) => {
            let theta: ParamSet = checkpoint::load(&a.checkpoint)?;
            let vocab_path = a.vocab.unwrap_or_else(|| sidecar(&a.checkpoint, "vocab.json"));
            let vocab = read_vocab(&vocab_path)?;
            if vocab.len() != theta.dims.vocab {
                return Err(CliError::Config(format!(
                    "vocabulary has {} entries, checkpoint expects {}",
                    vocab.len(),
                    theta.dims.vocab
                )));
            }
            let (text, _) = read_text(&a.corpus)?;
            let ids = match a.split {
                Split::All => vocab.encode(&text),
                Split::Train | Split::Valid => {
                    let c = Corpus::with_vocab(&text, vocab, a.valid_frac)?;
                    if a.split == Split::Train {
                        c.train.ids
                    } else {
                        c.valid.ids
                    }
                }
            };
            print_json(&evaluate(&theta, &ids)?)?;
            Ok(0)
        }
        Command::VerifyEquivalence(a) => verify_equivalence(a),
        Command::VerifyGrads(a) => {
            let reports = (a.seed..a.seed + a.count)
                .map(gradcheck_all)
                .collect::<tprop_core::Result<Vec<_>>>()?;
            let passed = reports.iter().all(|r| r.passed);
            print_json(&serde_json::json!({ "passed": passed, "reports": reports }))?;
            Ok(if passed { 0 } else { error::EXIT_FAILURE })
        }
        Command::Sweep(a) => {
            let base = resolve(&a.run, env)?;
            let plan = if a.grid {
                sweep::plan_grid(&base)
            } else {
                let sizes = parse_sizes(&a.hidden_sizes)?;
                sweep::plan_hidden(&base, &sizes)?
            };
            if !a.dry_run && base.corpus.is_none() {
                return Err(CliError::Config("--corpus is required".into()));
            }
            let rows = sweep::run_sweep(plan, &a.out_dir, a.jobs, a.dry_run)?;
            let failed = rows.iter().filter(|r| r.status.starts_with("failed")).count();
            print_json(&serde_json::json!({
                "runs": rows.len(),
                "failed": failed,
                "summary": a.out_dir.join("summary.csv"),
            }))?;
            Ok(if failed == 0 { 0 } else { error::EXIT_FAILURE })
        }
        Command::Ablate(a) => {
            let base = resolve(&a.run, env)?;
            let rows = ablate::run_ablation(&base, &a.out_dir)?;
            print_json(&rows)?;
            Ok(0)
        }
        Command::BuildVocab(a) => {
            let mode: TokenMode = a.mode.parse()?;
            let (text, _) = read_text(&a.corpus)?;
            let vocab = Vocab::build(&text, mode, a.vocab_max)?;
            write_vocab(&vocab, &a.out)?;
            print_json(&serde_json::json!({ "size": vocab.len(), "mode": mode, "out": a.out }))?;
            Ok(0)
        }
        Command::Replay(a) => replay(&a.manifest, a.metrics_out, a.threads),
    }
}

fn train_cmd(
    command: Trainer,
    flags: &RunFlags,
    manifest_out: Option<std::path::PathBuf>,
    env: Vec<(String, String)>,
) -> CliResult<i32> {
    let settings = resolve(flags, env)?;
    let opts = RunOptions {
        manifest_out,
        echo: false,
    };
    let summary = runner::train(command, &settings, &opts)?;
    print_json(&summary)?;
    Ok(0)
}

fn parse_sizes(list: &str) -> CliResult<Vec<usize>> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| CliError::Config(format!("bad hidden size '{s}'")))
        })
        .collect()
}

fn verify_equivalence(a: args::VerifyEquivalenceArgs) -> CliResult<i32> {
    let cells = match &a.cell {
        Some(c) => vec![c.parse::<CellKind>()?],
        None => vec![CellKind::Elman, CellKind::Gru],
    };
    let etas = a.eta.map_or(vec![0.1, 0.01, 0.001], |e| vec![e]);
    let lambdas = a.lambda.map_or(vec![1.0, 0.1, 0.01], |l| vec![l]);
    if a.seeds == 0 {
        return Err(CliError::Config("--seeds must be >= 1".into()));
    }
    let mut reports = Vec::new();
    for &cell in &cells {
        for &eta in &etas {
            for &lambda in &lambdas {
                for seed in a.seed..a.seed + a.seeds {
                    reports.push(check_equivalence_with(&EquivalenceSetup {
                        cell,
                        dims: ModelDims::square(7, 5),
                        eta,
                        lambda,
                        seed,
                        init_offset: a.init_offset,
                    })?);
                }
            }
        }
    }
    let passed = reports.iter().all(|r| r.passed);
    let max_deviation = reports.iter().map(|r| r.max_deviation).fold(0.0, f64::max);
    print_json(&serde_json::json!({
        "passed": passed,
        "checks": reports.len(),
        "max_deviation": max_deviation,
        "reports": reports,
    }))?;
    Ok(if passed { 0 } else { error::EXIT_FAILURE })
}

fn replay(manifest_path: &Path, metrics_out: std::path::PathBuf, threads: Option<usize>) -> CliResult<i32> {
    let m = RunManifest::read(manifest_path)?;
    let mut s = m.settings.clone();
    let corpus = s
        .corpus
        .clone()
        .ok_or_else(|| CliError::Config("manifest has no corpus".into()))?;
    let (_, sha) = read_text(&corpus)?;
    if sha != m.corpus_sha256 {
        return Err(CliError::Config(format!(
            "{} changed since the run (sha256 {sha}, manifest {})",
            corpus.display(),
            m.corpus_sha256
        )));
    }
    s.metrics_out = Some(metrics_out);
    s.checkpoint_out = None;
    if let Some(t) = threads {
        s.threads = t;
    }
    let summary = runner::train(m.command, &s, &RunOptions::default())?;
    print_json(&summary)?;
    Ok(0)
}
