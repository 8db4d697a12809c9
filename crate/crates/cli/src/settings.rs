//! Resolved run configuration.
//!
//! Layers, later wins: built-in defaults, `--config` file (`key = value`
//! lines, `#` comments), environment variables `TPROP_<KEY>` (key upper-cased,
//! dashes as underscores, e.g. `TPROP_LR_THETA=0.01`), command-line flags.
//! Keys are the long flag names; case and `-`/`_` are not significant.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tprop_core::bptt::BpttConfig;
use tprop_core::btprop::{Schedule, TPropConfig};
use tprop_core::data::TokenMode;
use tprop_core::metrics::Regime;
use tprop_core::model::CellKind;
use tprop_core::optim::UpdateRule;

use crate::error::{CliError, CliResult};

pub const ENV_PREFIX: &str = "TPROP_";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub corpus: Option<PathBuf>,
    /// Prebuilt vocabulary (JSON from `build-vocab`); built from the corpus
    /// when absent.
    pub vocab: Option<PathBuf>,
    pub mode: TokenMode,
    pub vocab_max: Option<usize>,
    pub valid_frac: f64,
    pub cell: CellKind,
    pub hidden: usize,
    pub bias: bool,
    pub seed: u64,
    pub epochs: usize,
    pub regime: Regime,
    /// BPTT window K.
    pub k: usize,
    /// BPTT learning rate.
    pub lr: f64,
    pub optimizer: UpdateRule,
    /// BTPROP block length B.
    pub block_len: usize,
    pub schedule: Schedule,
    pub minibatch_blocks: usize,
    pub lambda: f64,
    pub alpha_u: f64,
    pub lr_h: f64,
    pub lr_theta: f64,
    pub h_steps: usize,
    pub theta_steps: usize,
    pub threads: usize,
    pub h_optimizer: UpdateRule,
    pub h_reinit_each_epoch: bool,
    pub oracle_every: Option<usize>,
    pub metrics_out: Option<PathBuf>,
    pub checkpoint_out: Option<PathBuf>,
}

impl Default for Settings {
    fn default() -> Self {
        let t = TPropConfig::default();
        Settings {
            corpus: None,
            vocab: None,
            mode: TokenMode::Char,
            vocab_max: None,
            valid_frac: 0.05,
            cell: CellKind::Gru,
            hidden: 64,
            bias: true,
            seed: 0,
            epochs: 5,
            regime: Regime::Minibatch,
            k: 10,
            lr: 0.1,
            optimizer: UpdateRule::Adagrad,
            block_len: t.block_len,
            schedule: t.schedule,
            minibatch_blocks: t.minibatch_blocks,
            lambda: t.lambda,
            alpha_u: t.alpha_u,
            lr_h: t.lr_h,
            lr_theta: t.lr_theta,
            h_steps: t.h_steps,
            theta_steps: t.theta_steps,
            threads: 1,
            h_optimizer: t.h_optimizer,
            h_reinit_each_epoch: false,
            oracle_every: None,
            metrics_out: None,
            checkpoint_out: None,
        }
    }
}

/// Canonical key: lower case, `_` → `-`.
pub fn normalize_key(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('_', "-")
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> CliResult<T>
where
    T::Err: std::fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| CliError::Config(format!("{key} = '{value}': {e}")))
}

fn parse_bool(key: &str, value: &str) -> CliResult<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(CliError::Config(format!("{key} = '{value}': expected a boolean"))),
    }
}

fn parse_opt<T: std::str::FromStr>(key: &str, value: &str) -> CliResult<Option<T>>
where
    T::Err: std::fmt::Display,
{
    match value.trim().to_ascii_lowercase().as_str() {
        "" | "none" => Ok(None),
        _ => parse(key, value).map(Some),
    }
}

fn parse_path(value: &str) -> Option<PathBuf> {
    let v = value.trim();
    (!v.is_empty()).then(|| PathBuf::from(v))
}

impl Settings {
    /// Sets one key from its string form.
    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        let k = normalize_key(key);
        match k.as_str() {
            "corpus" => self.corpus = parse_path(value),
            "vocab" => self.vocab = parse_path(value),
            "mode" => self.mode = parse(&k, value)?,
            "vocab-max" => self.vocab_max = parse_opt(&k, value)?,
            "valid-frac" => self.valid_frac = parse(&k, value)?,
            "cell" => self.cell = parse(&k, value)?,
            "hidden" => self.hidden = parse(&k, value)?,
            "bias" => self.bias = parse_bool(&k, value)?,
            "seed" => self.seed = parse(&k, value)?,
            "epochs" => self.epochs = parse(&k, value)?,
            "regime" => self.regime = parse(&k, value)?,
            "k" => self.k = parse(&k, value)?,
            "lr" => self.lr = parse(&k, value)?,
            "optimizer" => self.optimizer = parse(&k, value)?,
            "b" | "block-len" => self.block_len = parse(&k, value)?,
            "schedule" => self.schedule = parse(&k, value)?,
            "minibatch-blocks" => self.minibatch_blocks = parse(&k, value)?,
            "lambda" => self.lambda = parse(&k, value)?,
            "alpha-u" => self.alpha_u = parse(&k, value)?,
            "lr-h" => self.lr_h = parse(&k, value)?,
            "lr-theta" => self.lr_theta = parse(&k, value)?,
            "h-steps" => self.h_steps = parse(&k, value)?,
            "theta-steps" => self.theta_steps = parse(&k, value)?,
            "threads" => self.threads = parse(&k, value)?,
            "h-optimizer" => self.h_optimizer = parse(&k, value)?,
            "h-reinit-each-epoch" => self.h_reinit_each_epoch = parse_bool(&k, value)?,
            "oracle-every" => self.oracle_every = parse_opt(&k, value)?,
            "metrics-out" => self.metrics_out = parse_path(value),
            "checkpoint-out" => self.checkpoint_out = parse_path(value),
            _ => return Err(CliError::Config(format!("unknown setting '{key}'"))),
        }
        Ok(())
    }

    /// Applies a config file of `key = value` lines.
    pub fn apply_file(&mut self, path: &Path) -> CliResult<()> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        self.apply_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn apply_str(&mut self, text: &str) -> CliResult<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(key, value)
                .map_err(|e| CliError::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    /// Applies `TPROP_*` variables from `vars`.
    pub fn apply_env<I: IntoIterator<Item = (String, String)>>(&mut self, vars: I) -> CliResult<()> {
        let mut found: Vec<(String, String)> = vars
            .into_iter()
            .filter_map(|(k, v)| k.strip_prefix(ENV_PREFIX).map(|s| (s.to_owned(), v)))
            .collect();
        found.sort();
        for (k, v) in found {
            self.set(&k, &v)
                .map_err(|e| CliError::Config(format!("{ENV_PREFIX}{k}: {e}")))?;
        }
        Ok(())
    }

    pub fn bptt_config(&self) -> BpttConfig {
        BpttConfig {
            k: self.k,
            lr: self.lr,
            optimizer: self.optimizer,
            epochs: self.epochs,
            regime: self.regime,
        }
    }

    pub fn tprop_config(&self) -> TPropConfig {
        TPropConfig {
            block_len: self.block_len,
            lambda: self.lambda,
            alpha_u: self.alpha_u,
            lr_h: self.lr_h,
            lr_theta: self.lr_theta,
            h_steps: self.h_steps,
            theta_steps: self.theta_steps,
            schedule: self.schedule,
            regime: self.regime,
            minibatch_blocks: self.minibatch_blocks,
            epochs: self.epochs,
            threads: self.threads,
            theta_optimizer: self.optimizer,
            h_optimizer: self.h_optimizer,
            h_reinit_each_epoch: self.h_reinit_each_epoch,
            bptt_oracle_every: self.oracle_every,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_layer_parses_comments_and_keys() {
        let mut s = Settings::default();
        s.apply_str("# grid point\nlambda = 0.1  # inline\nLR_THETA=0.01\n\nB = 5\nschedule = pm\n")
            .unwrap();
        assert_eq!(s.lambda, 0.1);
        assert_eq!(s.lr_theta, 0.01);
        assert_eq!(s.block_len, 5);
        assert_eq!(s.schedule, Schedule::Pm);
    }

    #[test]
    fn bad_lines_are_config_errors() {
        let mut s = Settings::default();
        for bad in ["lambda", "lambda = x", "nope = 1", "regime = sometimes"] {
            let e = s.apply_str(bad).unwrap_err();
            assert_eq!(e.exit_code(), crate::error::EXIT_CONFIG, "{bad}");
        }
    }

    #[test]
    fn env_layer_uses_prefix() {
        let mut s = Settings::default();
        s.apply_env(vec![
            ("TPROP_H_STEPS".to_owned(), "5".to_owned()),
            ("HOME".to_owned(), "/root".to_owned()),
            ("TPROP_VOCAB_MAX".to_owned(), "none".to_owned()),
        ])
        .unwrap();
        assert_eq!(s.h_steps, 5);
        assert_eq!(s.vocab_max, None);
    }
}
