//! Corpus loading, model construction and the two training commands.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use tprop_core::bptt::train_bptt;
use tprop_core::btprop::train_btprop;
use tprop_core::data::{Corpus, Vocab};
use tprop_core::metrics::EpochMetrics;
use tprop_core::model::{checkpoint, ModelDims};
use tprop_core::seed::{rng_for, sha256_hex};
use tprop_core::ParamSet;

use crate::error::{CliError, CliResult};
use crate::manifest::{sidecar, RunManifest, Trainer};
use crate::settings::Settings;

pub struct LoadedCorpus {
    pub corpus: Corpus,
    pub sha256: String,
}

pub fn read_text(path: &Path) -> CliResult<(String, String)> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    let sha = sha256_hex(&bytes);
    let text = String::from_utf8(bytes)
        .map_err(|_| CliError::Config(format!("{}: corpus is not UTF-8", path.display())))?;
    Ok((text, sha))
}

pub fn read_vocab(path: &Path) -> CliResult<Vocab> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let v: Vocab = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: not a vocabulary file: {e}", path.display())))?;
    Ok(v.reindex())
}

pub fn write_vocab(vocab: &Vocab, path: &Path) -> CliResult<()> {
    let json = serde_json::to_string(vocab)?;
    std::fs::write(path, json + "\n").map_err(|e| CliError::io(path, e))
}

pub fn load_corpus(settings: &Settings) -> CliResult<LoadedCorpus> {
    let path = settings
        .corpus
        .as_deref()
        .ok_or_else(|| CliError::Config("--corpus is required".into()))?;
    let (text, sha256) = read_text(path)?;
    let corpus = match &settings.vocab {
        Some(vp) => {
            let vocab = read_vocab(vp)?;
            if vocab.mode() != settings.mode {
                return Err(CliError::Config(format!(
                    "vocabulary {} was built in {:?} mode",
                    vp.display(),
                    vocab.mode()
                )));
            }
            Corpus::with_vocab(&text, vocab, settings.valid_frac)?
        }
        None => Corpus::from_text(&text, settings.mode, settings.vocab_max, settings.valid_frac)?,
    };
    Ok(LoadedCorpus { corpus, sha256 })
}

pub fn init_params(settings: &Settings, vocab: usize) -> ParamSet {
    let mut rng = rng_for(settings.seed, "init");
    ParamSet::init(settings.cell, ModelDims::square(vocab, settings.hidden), settings.bias, &mut rng)
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub command: &'static str,
    pub epochs: usize,
    pub final_train_loss: f64,
    pub final_valid_ppl: Option<f64>,
    pub best_valid_ppl: Option<f64>,
    pub unigram_ppl: Option<f64>,
    pub vocab: usize,
    pub train_tokens: usize,
    pub valid_tokens: usize,
}

#[derive(Default)]
pub struct RunOptions {
    pub manifest_out: Option<PathBuf>,
    /// Also print every metrics record to stdout.
    pub echo: bool,
}

struct Sink {
    metrics: Option<BufWriter<File>>,
    timing: Option<BufWriter<File>>,
    echo: bool,
    error: Option<CliError>,
}

impl Sink {
    fn open(metrics_out: Option<&Path>, echo: bool) -> CliResult<Self> {
        let create = |p: &Path| File::create(p).map(BufWriter::new).map_err(|e| CliError::io(p, e));
        Ok(match metrics_out {
            Some(p) => Sink {
                metrics: Some(create(p)?),
                timing: Some(create(&sidecar(p, "timing.jsonl"))?),
                echo,
                error: None,
            },
            None => Sink {
                metrics: None,
                timing: None,
                echo: true,
                error: None,
            },
        })
    }

    fn record(&mut self, m: &EpochMetrics) {
        if self.error.is_some() {
            return;
        }
        if let Err(e) = self.try_record(m) {
            self.error = Some(e);
        }
    }

    fn try_record(&mut self, m: &EpochMetrics) -> CliResult<()> {
        let line = serde_json::to_string(m)?;
        if let Some(w) = &mut self.metrics {
            writeln!(w, "{line}").and_then(|_| w.flush()).map_err(|e| CliError::io("metrics", e))?;
        }
        if let Some(w) = &mut self.timing {
            let t = serde_json::json!({ "epoch": m.epoch, "seconds": m.seconds });
            writeln!(w, "{t}").and_then(|_| w.flush()).map_err(|e| CliError::io("timing", e))?;
        }
        if self.echo {
            println!("{line}");
        }
        Ok(())
    }

    fn finish(self) -> CliResult<()> {
        match self.error {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

/// Runs one training command end to end: manifest, training, metrics,
/// optional checkpoint.
pub fn train(command: Trainer, settings: &Settings, opts: &RunOptions) -> CliResult<RunSummary> {
    // fail on bad settings before touching any file
    match command {
        Trainer::TrainBptt => settings.bptt_config().validate()?,
        Trainer::TrainBtprop => settings.tprop_config().validate()?,
    }
    if settings.hidden == 0 {
        return Err(CliError::Config("hidden size must be >= 1".into()));
    }
    let loaded = load_corpus(settings)?;
    let corpus = &loaded.corpus;
    let manifest = RunManifest::new(command, settings, loaded.sha256.clone());
    let manifest_path = opts
        .manifest_out
        .clone()
        .or_else(|| settings.metrics_out.as_deref().map(|p| sidecar(p, "manifest.json")));
    if let Some(p) = &manifest_path {
        manifest.write(p)?;
    }

    let mut theta = init_params(settings, corpus.vocab.len());
    let valid = (corpus.valid.len() >= 2).then_some(&corpus.valid.ids[..]);
    let mut sink = Sink::open(settings.metrics_out.as_deref(), opts.echo)?;
    let history = match command {
        Trainer::TrainBptt => train_bptt(&mut theta, &corpus.train.ids, valid, &settings.bptt_config(), |m| {
            sink.record(m)
        })?,
        Trainer::TrainBtprop => train_btprop(
            &mut theta,
            &corpus.train.ids,
            valid,
            &settings.tprop_config(),
            |m| sink.record(m),
        )?,
    };
    sink.finish()?;

    if let Some(p) = &settings.checkpoint_out {
        checkpoint::save(&theta, p)?;
        write_vocab(&corpus.vocab, &sidecar(p, "vocab.json"))?;
    }
    let last = history.last();
    Ok(RunSummary {
        command: command.name(),
        epochs: history.len(),
        final_train_loss: last.map_or(f64::NAN, |m| m.train_loss),
        final_valid_ppl: last.and_then(|m| m.valid_ppl),
        best_valid_ppl: history
            .iter()
            .filter_map(|m| m.valid_ppl)
            .reduce(f64::min),
        unigram_ppl: valid.map(|v| {
            tprop_core::data::unigram_perplexity(&corpus.train.ids, v, corpus.vocab.len())
        }),
        vocab: corpus.vocab.len(),
        train_tokens: corpus.train.len(),
        valid_tokens: corpus.valid.len(),
    })
}
