use std::collections::BTreeMap;
use std::path::PathBuf;

use gradguard::datasets::gen_toy_color;
use gradguard::training::{dataset_accuracy, matched_lambda1, train_from, TrainConfig};

use super::init_params;
use crate::config::Settings;
use crate::data::{self, TEST_SEED_OFFSET};
use crate::error::{HarnessError, Result};
use crate::output::{mean_std, num, CsvRow, RunDir};

#[derive(Debug)]
pub struct EfficiencyRow {
    pub mask: String,
    pub n: usize,
    pub seed: u64,
    pub lambda1: f64,
    pub epochs: usize,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

impl CsvRow for EfficiencyRow {
    const HEADER: &'static [&'static str] = &[
        "mask",
        "n",
        "seed",
        "lambda1",
        "epochs",
        "train_accuracy",
        "test_accuracy",
    ];

    fn fields(&self) -> Vec<String> {
        vec![
            self.mask.clone(),
            self.n.to_string(),
            self.seed.to_string(),
            num(self.lambda1),
            self.epochs.to_string(),
            num(self.train_accuracy),
            num(self.test_accuracy),
        ]
    }
}

#[derive(Debug)]
struct MeanRow<'a> {
    mask: &'a str,
    n: usize,
    mean: f64,
    std: f64,
}

impl CsvRow for MeanRow<'_> {
    const HEADER: &'static [&'static str] = &["mask", "n", "mean_test_accuracy", "std_test_accuracy"];

    fn fields(&self) -> Vec<String> {
        vec![self.mask.to_string(), self.n.to_string(), num(self.mean), num(self.std)]
    }
}

#[derive(Debug)]
pub struct EfficiencyOutput {
    pub dir: PathBuf,
    pub rows: Vec<EfficiencyRow>,
    /// Mean test accuracy per mask, one entry per N in grid order.
    pub means: BTreeMap<String, Vec<(usize, f64)>>,
}

impl EfficiencyOutput {
    /// Smallest N whose mean test accuracy reaches `level`.
    pub fn first_reaching(&self, mask: &str, level: f64) -> Option<usize> {
        self.means
            .get(mask)?
            .iter()
            .find(|(_, acc)| *acc >= level)
            .map(|(n, _)| *n)
    }
}

/// Toy Color accuracy against training set size per annotation mask.
///
/// Every run gets the same number of optimizer steps (`efficiency.steps`),
/// early stopping is off, and λ1 is set so both loss terms are equal at
/// initialization. Writes `efficiency.csv` and `efficiency_mean.csv`.
pub fn data_efficiency(s: &Settings) -> Result<EfficiencyOutput> {
    if s.data.name != "toy-color" {
        return Err(HarnessError::config("data-efficiency runs on toy-color only"));
    }
    let sizes = &s.efficiency.sizes;
    if sizes.is_empty() || sizes[0] == 0 || sizes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(HarnessError::config("efficiency.sizes must be positive and strictly increasing"));
    }
    if s.efficiency.seeds == 0 || s.efficiency.steps == 0 {
        return Err(HarnessError::config("efficiency.seeds and efficiency.steps must be positive"));
    }
    for m in &s.efficiency.masks {
        data::mask_for("toy-color", m, 1)?;
    }
    let test = gen_toy_color(s.data.test_n, s.seed.wrapping_add(TEST_SEED_OFFSET))?;
    let batch = s.train.batch_size.max(1);
    let mut rows = Vec::new();
    let mut means = BTreeMap::new();
    for mask in &s.efficiency.masks {
        let mut curve = Vec::new();
        for &n in sizes {
            let mut accs = Vec::new();
            for i in 0..s.efficiency.seeds as u64 {
                let seed = s.seed.wrapping_add(i);
                let mut train = gen_toy_color(n, seed)?;
                if let Some(a) = data::mask_for("toy-color", mask, n)? {
                    train = train.with_annotations(a)?;
                }
                let init = init_params(s, &train, seed)?;
                let lambda1 = matched_lambda1(&init, &train)?.unwrap_or(0.0);
                let epochs = s.efficiency.steps.div_ceil(n.div_ceil(batch));
                let cfg = TrainConfig {
                    lambda1,
                    epochs,
                    seed,
                    early_stop_patience: 0,
                    ..s.train_config()
                };
                let (p, _) = train_from(&cfg, &train, init, None)?;
                let acc = dataset_accuracy(&p, &test)?;
                accs.push(acc);
                rows.push(EfficiencyRow {
                    mask: mask.clone(),
                    n,
                    seed,
                    lambda1,
                    epochs,
                    train_accuracy: dataset_accuracy(&p, &train)?,
                    test_accuracy: acc,
                });
            }
            curve.push((n, mean_std(&accs)));
        }
        means.insert(mask.clone(), curve);
    }
    let mean_rows: Vec<MeanRow> = s
        .efficiency
        .masks
        .iter()
        .flat_map(|m| {
            means[m].iter().map(move |&(n, (mean, std))| MeanRow {
                mask: m,
                n,
                mean,
                std,
            })
        })
        .collect();
    let mut run = RunDir::create("data-efficiency", s)?;
    run.write_csv("efficiency.csv", &rows)?;
    run.write_csv("efficiency_mean.csv", &mean_rows)?;
    let means = means
        .into_iter()
        .map(|(m, c)| (m, c.into_iter().map(|(n, (mean, _))| (n, mean)).collect()))
        .collect();
    Ok(EfficiencyOutput {
        dir: run.finish()?,
        rows,
        means,
    })
}
