//! The three-condition H-step/λ ablation.

use std::path::Path;

use serde::Serialize;
use tprop_core::metrics::{EpochMetrics, Regime};

use crate::error::{CliError, CliResult};
use crate::manifest::Trainer;
use crate::runner::{train, RunOptions};
use crate::settings::Settings;

/// Oracle sampling period (segments) in the λ = 0 condition.
pub const ORACLE_EVERY: usize = 50;
/// Allowed θ-gradient gap to the BPTT oracle in the λ = 0 condition.
pub const ORACLE_TOL: f64 = 1e-10;

#[derive(Clone, Debug, Serialize)]
pub struct AblationRow {
    pub condition: &'static str,
    pub h_steps: usize,
    pub lambda: f64,
    pub final_valid_ppl: f64,
    pub delta_ppl: f64,
    pub oracle_max_diff: Option<f64>,
    pub metrics: String,
}

pub fn conditions(base: &Settings) -> Vec<(&'static str, Settings)> {
    vec![
        ("baseline", Settings { h_steps: 1, ..base.clone() }),
        ("h0", Settings { h_steps: 0, ..base.clone() }),
        (
            "h0_lambda0",
            Settings {
                h_steps: 0,
                lambda: 0.0,
                oracle_every: Some(ORACLE_EVERY),
                ..base.clone()
            },
        ),
    ]
}

fn read_metrics(path: &Path) -> CliResult<Vec<EpochMetrics>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    text.lines()
        .map(|l| serde_json::from_str(l).map_err(CliError::from))
        .collect()
}

/// Runs all conditions with a shared seed and writes `ablation.csv`.
pub fn run_ablation(base: &Settings, out_dir: &Path) -> CliResult<Vec<AblationRow>> {
    if base.regime != Regime::Minibatch {
        return Err(CliError::Config("ablate runs in the minibatch regime".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let mut rows = Vec::new();
    let mut baseline = None;
    for (name, mut s) in conditions(base) {
        let metrics = out_dir.join(format!("ablate-{name}.jsonl"));
        s.metrics_out = Some(metrics.clone());
        s.checkpoint_out = None;
        let summary = train(Trainer::TrainBtprop, &s, &RunOptions::default())?;
        let ppl = summary
            .final_valid_ppl
            .ok_or_else(|| CliError::Config("ablation needs a validation split".into()))?;
        let base_ppl = *baseline.get_or_insert(ppl);
        let oracle = read_metrics(&metrics)?
            .iter()
            .filter_map(|m| m.oracle_max_diff)
            .reduce(f64::max);
        rows.push(AblationRow {
            condition: name,
            h_steps: s.h_steps,
            lambda: s.lambda,
            final_valid_ppl: ppl,
            delta_ppl: ppl - base_ppl,
            oracle_max_diff: oracle,
            metrics: metrics.display().to_string(),
        });
    }
    let path = out_dir.join("ablation.csv");
    let mut w = csv::Writer::from_path(&path)?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;
    if let Some(d) = rows[2].oracle_max_diff {
        if d > ORACLE_TOL {
            return Err(CliError::Failure(format!(
                "h0_lambda0 θ-gradient deviates from the BPTT oracle by {d:e}"
            )));
        }
    }
    Ok(rows)
}
