use std::path::PathBuf;

use gradguard::training::dataset_accuracy;

use super::fit;
use crate::config::Settings;
use crate::data;
use crate::error::{HarnessError, Result};
use crate::output::{mean_std, num, opt, CsvRow, RunDir};

#[derive(Debug)]
pub struct ConfoundRow {
    pub variant: String,
    pub split: usize,
    pub seed: u64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    /// Test accuracy with the confound columns zeroed.
    pub test_without_confound: Option<f64>,
}

impl CsvRow for ConfoundRow {
    const HEADER: &'static [&'static str] = &[
        "variant",
        "split",
        "seed",
        "train_accuracy",
        "test_accuracy",
        "test_without_confound",
    ];

    fn fields(&self) -> Vec<String> {
        vec![
            self.variant.clone(),
            self.split.to_string(),
            self.seed.to_string(),
            num(self.train_accuracy),
            num(self.test_accuracy),
            opt(self.test_without_confound),
        ]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub variant: String,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl CsvRow for SummaryRow {
    const HEADER: &'static [&'static str] = &["variant", "metric", "mean", "std", "count"];

    fn fields(&self) -> Vec<String> {
        vec![
            self.variant.clone(),
            self.metric.clone(),
            num(self.mean),
            num(self.std),
            self.count.to_string(),
        ]
    }
}

#[derive(Debug)]
pub struct ConfoundOutput {
    pub dir: PathBuf,
    pub rows: Vec<ConfoundRow>,
    pub summary: Vec<SummaryRow>,
}

impl ConfoundOutput {
    pub fn mean(&self, variant: &str, metric: &str) -> Option<f64> {
        self.summary
            .iter()
            .find(|r| r.variant == variant && r.metric == metric)
            .map(|r| r.mean)
    }
}

/// Trains each annotation variant (`zero`: A = 0, `full`: the dataset's
/// known confound annotated everywhere) on `report.splits` splits or seeds.
/// Writes `confound.csv` and `confound_summary.csv`.
pub fn confound_report(s: &Settings) -> Result<ConfoundOutput> {
    if s.report.splits == 0 {
        return Err(HarnessError::config("report.splits must be positive"));
    }
    for v in &s.report.variants {
        if v != "zero" && v != "full" {
            return Err(HarnessError::config(format!("unknown variant `{v}` (expected zero or full)")));
        }
    }
    let mut rows = Vec::new();
    for split in 0..s.report.splits {
        let seed = s.seed.wrapping_add(split as u64);
        let (train, test) = data::load_raw(&s.data, seed)?;
        let confound: Option<Vec<usize>> = data::mask_for(&s.data.name, "full", 1)?.map(|a| {
            (0..a.len()).filter(|&j| a.data()[j] == 1.0).collect()
        });
        let stripped = match &confound {
            Some(cols) => Some(data::without_columns(&test, cols)?),
            None => None,
        };
        for variant in &s.report.variants {
            let tr = if variant == "full" {
                if confound.is_none() {
                    return Err(HarnessError::config(format!(
                        "dataset `{}` has no known confound for the full variant",
                        s.data.name
                    )));
                }
                data::annotate(train.clone(), &s.data.name, "full", 1.0, 0, seed)?
            } else {
                train.clone()
            };
            let run_settings = Settings {
                seed,
                ..s.clone()
            };
            let (p, _) = fit(&run_settings, &tr, None)?;
            rows.push(ConfoundRow {
                variant: variant.clone(),
                split,
                seed,
                train_accuracy: dataset_accuracy(&p, &tr)?,
                test_accuracy: dataset_accuracy(&p, &test)?,
                test_without_confound: match &stripped {
                    Some(t) => Some(dataset_accuracy(&p, t)?),
                    None => None,
                },
            });
        }
    }
    let mut summary = Vec::new();
    for variant in &s.report.variants {
        let mine: Vec<&ConfoundRow> = rows.iter().filter(|r| &r.variant == variant).collect();
        let metrics: [(&str, Vec<f64>); 3] = [
            ("train_accuracy", mine.iter().map(|r| r.train_accuracy).collect()),
            ("test_accuracy", mine.iter().map(|r| r.test_accuracy).collect()),
            (
                "test_without_confound",
                mine.iter().filter_map(|r| r.test_without_confound).collect(),
            ),
        ];
        for (metric, values) in metrics {
            if values.is_empty() {
                continue;
            }
            let (mean, std) = mean_std(&values);
            summary.push(SummaryRow {
                variant: variant.clone(),
                metric: metric.into(),
                mean,
                std,
                count: values.len(),
            });
        }
    }
    let mut run = RunDir::create("confound-report", s)?;
    run.note_seed("first_split", s.seed);
    run.note_seed("last_split", s.seed.wrapping_add(s.report.splits as u64 - 1));
    run.write_csv("confound.csv", &rows)?;
    run.write_csv("confound_summary.csv", &summary)?;
    Ok(ConfoundOutput {
        dir: run.finish()?,
        rows,
        summary,
    })
}
