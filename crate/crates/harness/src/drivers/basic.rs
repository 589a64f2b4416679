use std::path::PathBuf;

use gradguard::datasets::{write_dataset, LabeledDataset};
use gradguard::explain::{explain as explain_set, mask_top, render, ExplanationArtifact, ExplanationSet, Mask};
use gradguard::model::Params;
use gradguard::training::{dataset_accuracy, LossBreakdown, TrainHistory};

use super::{fit, model_for};
use crate::checkpoint::Checkpoint;
use crate::config::Settings;
use crate::data;
use crate::error::Result;
use crate::output::{num, opt, CsvRow, RunDir};

#[derive(Debug)]
pub struct GenDataOutput {
    pub dir: PathBuf,
    pub train_path: PathBuf,
    pub test_path: PathBuf,
    pub train: LabeledDataset,
    pub test: LabeledDataset,
}

/// Writes the resolved (and annotated) train/test pair as portable files.
pub fn gen_data(s: &Settings) -> Result<GenDataOutput> {
    let (train, test) = data::load(&s.data, s.seed)?;
    let mut run = RunDir::create("gen-data", s)?;
    let train_path = run.record("train.csv");
    write_dataset(&train, &train_path)?;
    let test_path = run.record("test.csv");
    write_dataset(&test, &test_path)?;
    run.write_json(
        "fingerprints.json",
        &serde_json::json!({ "train": train.fingerprint(), "test": test.fingerprint() }),
    )?;
    Ok(GenDataOutput {
        dir: run.finish()?,
        train_path,
        test_path,
        train,
        test,
    })
}

/// One line of `history.csv`; epoch 0 is the state before training.
#[derive(Debug)]
pub struct HistoryRow {
    pub epoch: usize,
    pub loss: LossBreakdown,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
}

impl CsvRow for HistoryRow {
    const HEADER: &'static [&'static str] = &[
        "epoch",
        "right_answers",
        "right_reasons",
        "regular",
        "total",
        "raw_penalty",
        "train_accuracy",
        "test_accuracy",
    ];

    fn fields(&self) -> Vec<String> {
        let l = &self.loss;
        vec![
            self.epoch.to_string(),
            num(l.right_answers),
            num(l.right_reasons),
            num(l.regular),
            num(l.total),
            num(l.raw_penalty),
            num(self.train_accuracy),
            opt(self.test_accuracy),
        ]
    }
}

pub fn history_rows(h: &TrainHistory) -> Vec<HistoryRow> {
    std::iter::once(HistoryRow {
        epoch: 0,
        loss: h.initial,
        train_accuracy: h.initial_accuracy,
        test_accuracy: None,
    })
    .chain(h.epochs.iter().map(|r| HistoryRow {
        epoch: r.epoch,
        loss: r.loss,
        train_accuracy: r.train_accuracy,
        test_accuracy: r.held_out_accuracy,
    }))
    .collect()
}

#[derive(Debug)]
pub struct TrainOutput {
    pub dir: PathBuf,
    pub params: Params,
    pub history: TrainHistory,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub checkpoint: Checkpoint,
}

/// Writes `checkpoint.json` and `history.csv`.
pub fn train(s: &Settings) -> Result<TrainOutput> {
    let (train, test) = data::load(&s.data, s.seed)?;
    let (params, history) = fit(s, &train, Some(&test))?;
    let train_accuracy = dataset_accuracy(&params, &train)?;
    let test_accuracy = dataset_accuracy(&params, &test)?;
    let final_loss = history.final_loss();
    let checkpoint = Checkpoint::new(params.clone(), s.train_config(), train.fingerprint())
        .with_metric("train_accuracy", train_accuracy)
        .with_metric("test_accuracy", test_accuracy)
        .with_metric("final_loss", final_loss.total)
        .with_metric("epochs", history.epochs.len() as f64);
    let mut run = RunDir::create("train", s)?;
    checkpoint.save(run.record("checkpoint.json"))?;
    run.write_csv("history.csv", &history_rows(&history))?;
    Ok(TrainOutput {
        dir: run.finish()?,
        params,
        history,
        train_accuracy,
        test_accuracy,
        checkpoint,
    })
}

#[derive(Debug)]
pub struct ExplainOutput {
    pub dir: PathBuf,
    pub params: Params,
    /// Gradients for the whole test set.
    pub explanations: ExplanationSet,
    pub mask: Mask,
    /// The first `explain.rows` test rows, rendered.
    pub artifact: ExplanationArtifact,
    pub test: LabeledDataset,
}

#[derive(Debug)]
struct ColumnRow {
    column: usize,
    selected_fraction: f64,
    mean_abs_gradient: f64,
}

impl CsvRow for ColumnRow {
    const HEADER: &'static [&'static str] = &["column", "selected_fraction", "mean_abs_gradient"];

    fn fields(&self) -> Vec<String> {
        vec![
            self.column.to_string(),
            num(self.selected_fraction),
            num(self.mean_abs_gradient),
        ]
    }
}

/// Explains every test row. Writes the rendered artifact for the first rows
/// (`explanation.json`) and per-column mask statistics (`columns.csv`).
pub fn explain(s: &Settings) -> Result<ExplainOutput> {
    let (train, test) = data::load(&s.data, s.seed)?;
    let params = model_for(s, &train)?;
    let explanations = explain_set(&params, &test.x, s.explanation_target()?)?;
    let mask = mask_top(&explanations, s.cutoff)?;
    let shown = s.explain.rows.min(test.len());
    let head = ExplanationSet {
        gradients: explanations.gradients.select_rows(&(0..shown).collect::<Vec<_>>()),
        ..explanations.clone()
    };
    let head_mask = mask_top(&head, s.cutoff)?;
    let artifact = render(&head, Some(&head_mask), &test.kind)?;
    let (n, d) = (test.len(), test.dim());
    let columns: Vec<ColumnRow> = (0..d)
        .map(|j| {
            let (mut sel, mut mass) = (0.0, 0.0);
            for i in 0..n {
                sel += mask.bits.get(i, j);
                mass += explanations.gradients.get(i, j).abs();
            }
            ColumnRow {
                column: j,
                selected_fraction: sel / n as f64,
                mean_abs_gradient: mass / n as f64,
            }
        })
        .collect();
    let mut run = RunDir::create("explain", s)?;
    artifact.write(run.record("explanation.json"))?;
    run.write_csv("columns.csv", &columns)?;
    run.write_json(
        "summary.json",
        &serde_json::json!({
            "model_fingerprint": params.fingerprint(),
            "rows": n,
            "selected_fraction": mask.selected_fraction(),
            "test_accuracy": dataset_accuracy(&params, &test)?,
        }),
    )?;
    Ok(ExplainOutput {
        dir: run.finish()?,
        params,
        explanations,
        mask,
        artifact,
        test,
    })
}
