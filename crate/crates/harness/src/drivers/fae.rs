use std::path::PathBuf;

use gradguard::datasets::LabeledDataset;
use gradguard::fae::{run_fae, FaeTrace};
use gradguard::training::TrainConfig;

use crate::checkpoint::Checkpoint;
use crate::config::Settings;
use crate::data;
use crate::error::Result;
use crate::output::{num, CsvRow, RunDir};

#[derive(Debug)]
pub struct FaeRow {
    pub iteration: usize,
    pub lambda1: f64,
    pub epochs: usize,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub mask_fraction: f64,
    pub new_mask_fraction: f64,
    pub annotated_fraction: f64,
}

impl CsvRow for FaeRow {
    const HEADER: &'static [&'static str] = &[
        "iteration",
        "lambda1",
        "epochs",
        "train_accuracy",
        "test_accuracy",
        "mask_fraction",
        "new_mask_fraction",
        "annotated_fraction",
    ];

    fn fields(&self) -> Vec<String> {
        vec![
            self.iteration.to_string(),
            num(self.lambda1),
            self.epochs.to_string(),
            num(self.train_accuracy),
            num(self.test_accuracy),
            num(self.mask_fraction),
            num(self.new_mask_fraction),
            num(self.annotated_fraction),
        ]
    }
}

#[derive(Debug)]
pub struct FaeOutput {
    pub dir: PathBuf,
    pub trace: FaeTrace,
    pub rows: Vec<FaeRow>,
    pub train: LabeledDataset,
    pub test: LabeledDataset,
}

/// Runs find-another-explanation. Writes `fae.csv`, one checkpoint per
/// iteration (`iteration_<i>.json`) and `fae_index.json` listing them.
///
/// The loop starts from A = 0, so `data.annotate` is ignored.
pub fn fae(s: &Settings) -> Result<FaeOutput> {
    let (train, test) = data::load_raw(&s.data, s.seed)?;
    let cfg = s.fae_config()?;
    let trace = run_fae(&train, &test, &cfg)?;
    let mut run = RunDir::create("fae", s)?;
    let mut rows = Vec::new();
    let mut files = Vec::new();
    for (i, it) in trace.iterations.iter().enumerate() {
        let annotated = it.a.sum() / it.a.len() as f64;
        rows.push(FaeRow {
            iteration: i,
            lambda1: it.lambda1,
            epochs: it.history.epochs.len(),
            train_accuracy: it.train_accuracy,
            test_accuracy: it.test_accuracy,
            mask_fraction: it.mask_fraction,
            new_mask_fraction: it.new_mask_fraction,
            annotated_fraction: annotated,
        });
        let fingerprint = train.clone().with_annotations(it.a.clone())?.fingerprint();
        let config = TrainConfig {
            lambda1: it.lambda1,
            ..cfg.train.clone()
        };
        let file = format!("iteration_{i}.json");
        Checkpoint::new(it.params.clone(), config, fingerprint)
            .with_metric("train_accuracy", it.train_accuracy)
            .with_metric("test_accuracy", it.test_accuracy)
            .with_metric("mask_fraction", it.mask_fraction)
            .with_metric("new_mask_fraction", it.new_mask_fraction)
            .save(run.record(&file))?;
        files.push(file);
    }
    run.write_csv("fae.csv", &rows)?;
    run.write_json(
        "fae_index.json",
        &serde_json::json!({
            "stop": trace.stop,
            "cutoff": cfg.cutoff,
            "target": cfg.target.to_string(),
            "iterations": files,
        }),
    )?;
    Ok(FaeOutput {
        dir: run.finish()?,
        trace,
        rows,
        train,
        test,
    })
}
