//! Hidden-size sweep and grid search.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Serialize;
use tprop_core::btprop::grid::grid_points;
use tprop_core::seed::derive_seed;

use crate::error::{CliError, CliResult};
use crate::manifest::Trainer;
use crate::runner::{train, RunOptions};
use crate::settings::Settings;

/// H-step counts paired with BPTT in the hidden-size sweep.
pub const SWEEP_H_STEPS: [usize; 2] = [2, 5];

#[derive(Clone, Debug)]
pub struct PlannedRun {
    pub index: usize,
    pub command: Trainer,
    pub settings: Settings,
}

/// Each hidden size × {BPTT, BTPROP with each of [`SWEEP_H_STEPS`]}.
pub fn plan_hidden(base: &Settings, sizes: &[usize]) -> CliResult<Vec<PlannedRun>> {
    if sizes.is_empty() {
        return Err(CliError::Config("hidden-size axis is empty".into()));
    }
    let mut runs = Vec::new();
    for &hidden in sizes {
        if hidden == 0 {
            return Err(CliError::Config("hidden sizes must be >= 1".into()));
        }
        let mut s = Settings { hidden, ..base.clone() };
        runs.push((Trainer::TrainBptt, s.clone()));
        for h in SWEEP_H_STEPS {
            s.h_steps = h;
            runs.push((Trainer::TrainBtprop, s.clone()));
        }
    }
    Ok(number(base, runs))
}

/// Every point of the default hyperparameter grid on top of `base`.
pub fn plan_grid(base: &Settings) -> Vec<PlannedRun> {
    let runs = grid_points()
        .into_iter()
        .map(|p| {
            let s = Settings {
                lambda: p.lambda,
                alpha_u: p.alpha_u,
                lr_h: p.lr_h,
                lr_theta: p.lr_theta,
                theta_steps: p.theta_steps,
                h_steps: p.h_steps,
                ..base.clone()
            };
            (Trainer::TrainBtprop, s)
        })
        .collect();
    number(base, runs)
}

fn number(base: &Settings, runs: Vec<(Trainer, Settings)>) -> Vec<PlannedRun> {
    runs.into_iter()
        .enumerate()
        .map(|(index, (command, mut settings))| {
            settings.seed = derive_seed(base.seed, &format!("sweep/{index}"));
            PlannedRun {
                index,
                command,
                settings,
            }
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct SummaryRow {
    pub run: usize,
    pub command: &'static str,
    pub seed: u64,
    pub cell: String,
    pub hidden: usize,
    pub k: usize,
    pub block_len: usize,
    pub schedule: String,
    pub regime: String,
    pub lambda: f64,
    pub alpha_u: f64,
    pub lr: f64,
    pub lr_h: f64,
    pub lr_theta: f64,
    pub h_steps: usize,
    pub theta_steps: usize,
    pub epochs: usize,
    pub final_valid_ppl: Option<f64>,
    pub best_valid_ppl: Option<f64>,
    pub status: String,
    pub metrics: String,
}

fn lower<T: std::fmt::Debug>(v: T) -> String {
    format!("{v:?}").to_ascii_lowercase()
}

fn row(run: &PlannedRun, status: String, final_ppl: Option<f64>, best: Option<f64>) -> SummaryRow {
    let s = &run.settings;
    SummaryRow {
        run: run.index,
        command: run.command.name(),
        seed: s.seed,
        cell: s.cell.to_string(),
        hidden: s.hidden,
        k: s.k,
        block_len: s.block_len,
        schedule: lower(s.schedule),
        regime: lower(s.regime),
        lambda: s.lambda,
        alpha_u: s.alpha_u,
        lr: s.lr,
        lr_h: s.lr_h,
        lr_theta: s.lr_theta,
        h_steps: s.h_steps,
        theta_steps: s.theta_steps,
        epochs: s.epochs,
        final_valid_ppl: final_ppl,
        best_valid_ppl: best,
        status,
        metrics: s
            .metrics_out
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_default(),
    }
}

/// Runs (or, with `dry_run`, only lists) `plan` with up to `jobs`
/// concurrent children, writing one metrics file per run under `out_dir`
/// and `summary.csv`. A failed child is recorded and the sweep goes on.
pub fn run_sweep(plan: Vec<PlannedRun>, out_dir: &Path, jobs: usize, dry_run: bool) -> CliResult<Vec<SummaryRow>> {
    if jobs == 0 {
        return Err(CliError::Config("--jobs must be >= 1".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let plan: Vec<PlannedRun> = plan
        .into_iter()
        .map(|mut r| {
            r.settings.metrics_out = Some(out_dir.join(format!("run-{:03}.jsonl", r.index)));
            r.settings.checkpoint_out = None;
            r
        })
        .collect();

    let rows: Vec<SummaryRow> = if dry_run {
        plan.iter().map(|r| row(r, "planned".into(), None, None)).collect()
    } else {
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<SummaryRow>>> = Mutex::new(vec![None; plan.len()]);
        std::thread::scope(|scope| {
            for _ in 0..jobs.min(plan.len()) {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(run) = plan.get(i) else { break };
                    let r = match train(run.command, &run.settings, &RunOptions::default()) {
                        Ok(s) => row(run, "ok".into(), s.final_valid_ppl, s.best_valid_ppl),
                        Err(e) => row(run, format!("failed: {e}"), None, None),
                    };
                    eprintln!("[sweep] run {} {}: {}", run.index, run.command.name(), r.status);
                    slots.lock().expect("sweep results")[i] = Some(r);
                });
            }
        });
        slots
            .into_inner()
            .expect("sweep results")
            .into_iter()
            .map(|r| r.expect("every run reports"))
            .collect()
    };

    let summary = out_dir.join("summary.csv");
    let mut w = csv::Writer::from_path(&summary)?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| CliError::io(&summary, e))?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hidden_axis_makes_three_runs_per_size() {
        let plan = plan_hidden(&Settings::default(), &[16, 32, 64]).unwrap();
        assert_eq!(plan.len(), 9);
        let bptt = plan.iter().filter(|r| r.command == Trainer::TrainBptt).count();
        assert_eq!(bptt, 3);
        let h: Vec<usize> = plan
            .iter()
            .filter(|r| r.command == Trainer::TrainBtprop)
            .map(|r| r.settings.h_steps)
            .collect();
        assert_eq!(h, vec![2, 5, 2, 5, 2, 5]);
        let mut seeds: Vec<u64> = plan.iter().map(|r| r.settings.seed).collect();
        seeds.dedup();
        assert_eq!(seeds.len(), 9);
    }

    #[test]
    fn empty_axis_is_an_argument_error() {
        let e = plan_hidden(&Settings::default(), &[]).unwrap_err();
        assert_eq!(e.exit_code(), crate::error::EXIT_CONFIG);
    }

    #[test]
    fn grid_enumerates_243_runs() {
        assert_eq!(plan_grid(&Settings::default()).len(), 243);
    }
}
