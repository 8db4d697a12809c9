use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::settings::Settings;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Trainer {
    TrainBptt,
    TrainBtprop,
}

impl Trainer {
    pub fn name(self) -> &'static str {
        match self {
            Trainer::TrainBptt => "train-bptt",
            Trainer::TrainBtprop => "train-btprop",
        }
    }
}

/// Everything needed to re-run a training command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: Trainer,
    pub settings: Settings,
    pub seed: u64,
    pub version: String,
    /// Seconds since the Unix epoch.
    pub started_unix: u64,
    pub corpus_sha256: String,
}

impl RunManifest {
    pub fn new(command: Trainer, settings: &Settings, corpus_sha256: String) -> Self {
        RunManifest {
            command,
            settings: settings.clone(),
            seed: settings.seed,
            version: version_string(),
            started_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            corpus_sha256,
        }
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json + "\n").map_err(|e| CliError::io(path, e))
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: not a run manifest: {e}", path.display())))
    }
}

pub fn version_string() -> String {
    format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"))
}

/// `dir/stem.metrics.jsonl` → `dir/stem.<suffix>`, dropping the metrics
/// file's extensions.
pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("run");
    let stem = name.split('.').next().filter(|s| !s.is_empty()).unwrap_or("run");
    path.with_file_name(format!("{stem}.{suffix}"))
}
