use std::path::PathBuf;

use gradguard::model::Params;
use gradguard::training::{dataset_accuracy, train_from, LossBreakdown, TrainConfig, BALANCED_RATIO};

use super::init_params;
use crate::config::Settings;
use crate::data;
use crate::error::{HarnessError, Result};
use crate::output::{num, CsvRow, RunDir};

#[derive(Debug)]
pub struct SweepRow {
    pub lambda1: f64,
    pub initial: LossBreakdown,
    pub converged: LossBreakdown,
    pub initial_ratio: f64,
    pub converged_ratio: f64,
    pub epochs: usize,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

impl CsvRow for SweepRow {
    const HEADER: &'static [&'static str] = &[
        "lambda1",
        "initial_right_answers",
        "initial_right_reasons",
        "initial_ratio",
        "converged_right_answers",
        "converged_right_reasons",
        "converged_ratio",
        "converged_raw_penalty",
        "epochs",
        "train_accuracy",
        "test_accuracy",
    ];

    fn fields(&self) -> Vec<String> {
        vec![
            num(self.lambda1),
            num(self.initial.right_answers),
            num(self.initial.right_reasons),
            num(self.initial_ratio),
            num(self.converged.right_answers),
            num(self.converged.right_reasons),
            num(self.converged_ratio),
            num(self.converged.raw_penalty),
            self.epochs.to_string(),
            num(self.train_accuracy),
            num(self.test_accuracy),
        ]
    }
}

#[derive(Debug)]
pub struct SweepOutput {
    pub dir: PathBuf,
    pub rows: Vec<SweepRow>,
    pub params: Vec<Params>,
    /// Grid values (λ1 > 0) sharing the best test accuracy.
    pub best: Vec<f64>,
    /// Smallest grid value whose initial ratio lies in `[0.1, 10]`.
    pub balanced: Option<f64>,
}

/// Checks that the grid is positive, strictly increasing and spans at least
/// four decades.
pub fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 || grid.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(HarnessError::config("sweep.grid needs at least two positive values"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(HarnessError::config("sweep.grid must be strictly increasing"));
    }
    if grid[grid.len() - 1] / grid[0] < 1e4 * (1.0 - 1e-12) {
        return Err(HarnessError::config("sweep.grid must span at least four decades"));
    }
    Ok(())
}

/// Trains once per λ1 from the same initialization. Writes `sweep.csv` and
/// `summary.json`.
pub fn lambda_sweep(s: &Settings) -> Result<SweepOutput> {
    check_grid(&s.sweep.grid)?;
    let (train, test) = data::load(&s.data, s.seed)?;
    let init = init_params(s, &train, s.seed)?;
    let values: Vec<f64> = s
        .sweep
        .include_zero
        .then_some(0.0)
        .into_iter()
        .chain(s.sweep.grid.iter().copied())
        .collect();
    let mut rows = Vec::new();
    let mut params = Vec::new();
    for &lambda1 in &values {
        let cfg = TrainConfig {
            lambda1,
            ..s.train_config()
        };
        let (p, h) = train_from(&cfg, &train, init.clone(), None)?;
        let converged = h.final_loss();
        rows.push(SweepRow {
            lambda1,
            initial: h.initial,
            converged,
            initial_ratio: h.initial.reasons_to_answers(),
            converged_ratio: converged.reasons_to_answers(),
            epochs: h.epochs.len(),
            train_accuracy: dataset_accuracy(&p, &train)?,
            test_accuracy: dataset_accuracy(&p, &test)?,
        });
        params.push(p);
    }
    let grid_rows: Vec<&SweepRow> = rows.iter().filter(|r| r.lambda1 > 0.0).collect();
    let top = grid_rows
        .iter()
        .map(|r| r.test_accuracy)
        .fold(f64::NEG_INFINITY, f64::max);
    let best: Vec<f64> = grid_rows
        .iter()
        .filter(|r| r.test_accuracy == top)
        .map(|r| r.lambda1)
        .collect();
    let (lo, hi) = BALANCED_RATIO;
    let balanced = grid_rows
        .iter()
        .find(|r| (lo..=hi).contains(&r.initial_ratio))
        .map(|r| r.lambda1);
    let mut run = RunDir::create("lambda-sweep", s)?;
    run.write_csv("sweep.csv", &rows)?;
    run.write_json(
        "summary.json",
        &serde_json::json!({
            "best_test_accuracy": top,
            "best_lambda1": best,
            "balanced_lambda1": balanced,
        }),
    )?;
    Ok(SweepOutput {
        dir: run.finish()?,
        rows,
        params,
        best,
        balanced,
    })
}
