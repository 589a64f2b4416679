//! Find-another-explanation: train, mask the largest input gradients, add
//! them to the annotations and train again.

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::datasets::LabeledDataset;
use crate::error::{Error, Result};
use crate::explain::{explain, mask_top, Target};
use crate::model::{predict, Params};
use crate::training::{dataset_accuracy, train_from, TrainConfig, TrainHistory};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaeConfig {
    pub cutoff: f64,
    /// Entry `j` is the λ1 used to train model `j + 1`; the last entry
    /// repeats. Model 0 trains with `A = 0`, where λ1 has no effect.
    pub lambda1_schedule: Vec<f64>,
    pub max_iterations: usize,
    /// Stop once test accuracy falls this far below the first model's.
    pub accuracy_drop: f64,
    /// Stop once a new mask adds less than `1 - overlap_ceiling` of the
    /// accumulated annotations.
    pub overlap_ceiling: f64,
    pub target: Target,
    /// Base training settings; `lambda1` is replaced by the schedule.
    pub train: TrainConfig,
}

impl Default for FaeConfig {
    fn default() -> Self {
        FaeConfig {
            cutoff: 0.67,
            lambda1_schedule: vec![1e3],
            max_iterations: 3,
            accuracy_drop: 0.05,
            overlap_ceiling: 0.98,
            target: Target::SumLogProb,
            train: TrainConfig::default(),
        }
    }
}

impl FaeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cutoff > 0.0 && self.cutoff <= 1.0) {
            return Err(Error::invalid("cutoff must lie in (0, 1]"));
        }
        if self.lambda1_schedule.is_empty() || self.lambda1_schedule.iter().any(|&l| !(l >= 0.0)) {
            return Err(Error::invalid(
                "lambda1 schedule must be a nonempty list of non-negative values",
            ));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("max iterations must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.overlap_ceiling) {
            return Err(Error::invalid("overlap ceiling must lie in [0, 1]"));
        }
        self.train.validate()
    }

    /// λ1 used to train model `i`.
    pub fn lambda1_for(&self, i: usize) -> f64 {
        if i == 0 {
            return self.train.lambda1;
        }
        let s = &self.lambda1_schedule;
        s[(i - 1).min(s.len() - 1)]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaeStop {
    MaxIterations,
    AccuracyFloor,
    ExplanationsStable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaeIteration {
    pub lambda1: f64,
    /// Annotations the model was trained with.
    pub a: Tensor,
    pub params: Params,
    pub history: TrainHistory,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    /// Fraction of components selected by this model's mask.
    pub mask_fraction: f64,
    /// `1 - overlap(A_next, A)`.
    pub new_mask_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaeTrace {
    pub iterations: Vec<FaeIteration>,
    pub stop: FaeStop,
}

impl FaeTrace {
    pub fn params(&self) -> Vec<&Params> {
        self.iterations.iter().map(|it| &it.params).collect()
    }
}

/// Runs the loop on `train`, measuring accuracy on `test`.
///
/// Every model starts from the same seeded initialization.
pub fn run_fae(train: &LabeledDataset, test: &LabeledDataset, config: &FaeConfig) -> Result<FaeTrace> {
    config.validate()?;
    if train.is_empty() || test.is_empty() {
        return Err(Error::invalid("FAE needs nonempty train and test sets"));
    }
    let init = Params::init(train.dim(), train.num_classes(), config.train.seed)?;
    let mut a = Tensor::zeros(&[train.len(), train.dim()]);
    let mut iterations: Vec<FaeIteration> = Vec::new();
    let mut floor = f64::NEG_INFINITY;
    let stop = loop {
        let i = iterations.len();
        let lambda1 = config.lambda1_for(i);
        let cfg = TrainConfig {
            lambda1,
            ..config.train.clone()
        };
        let data = train.clone().with_annotations(a.clone())?;
        let (params, history) = train_from(&cfg, &data, init.clone(), None)?;
        let train_accuracy = history
            .last()
            .map_or(history.initial_accuracy, |r| r.train_accuracy);
        let test_accuracy = dataset_accuracy(&params, test)?;
        if i == 0 {
            floor = test_accuracy - config.accuracy_drop;
        }
        let mask = mask_top(&explain(&params, &train.x, config.target)?, config.cutoff)?;
        let next = mask.union(&a)?;
        let new_mask_fraction = 1.0 - explanation_overlap(&next, &a)?;
        iterations.push(FaeIteration {
            lambda1,
            a: std::mem::replace(&mut a, next),
            params,
            history,
            train_accuracy,
            test_accuracy,
            mask_fraction: mask.selected_fraction(),
            new_mask_fraction,
        });
        if i > 0 && test_accuracy < floor {
            break FaeStop::AccuracyFloor;
        }
        if iterations.len() >= config.max_iterations {
            break FaeStop::MaxIterations;
        }
        if new_mask_fraction < 1.0 - config.overlap_ceiling {
            break FaeStop::ExplanationsStable;
        }
    };
    Ok(FaeTrace { iterations, stop })
}

/// Jaccard overlap of the set bits of two masks; two empty masks overlap
/// fully.
pub fn explanation_overlap(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op: "explanation_overlap",
            shapes: vec![a.shape().to_vec(), b.shape().to_vec()],
        });
    }
    let (mut both, mut either) = (0usize, 0usize);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let (x, y) = (x != 0.0, y != 0.0);
        both += (x && y) as usize;
        either += (x || y) as usize;
    }
    Ok(if either == 0 {
        1.0
    } else {
        both as f64 / either as f64
    })
}

/// For each row of `x`, the fraction of model pairs whose predictions differ.
pub fn ensemble_disagreement(models: &[&Params], x: &Tensor) -> Result<Vec<f64>> {
    if models.len() < 2 {
        return Err(Error::invalid("disagreement needs at least two models"));
    }
    let preds = models
        .iter()
        .map(|p| predict(p, x))
        .collect::<Result<Vec<_>>>()?;
    let pairs = models.len() * (models.len() - 1) / 2;
    Ok((0..x.rows())
        .map(|n| {
            let mut differ = 0;
            for i in 0..preds.len() {
                for j in i + 1..preds.len() {
                    differ += (preds[i][n] != preds[j][n]) as usize;
                }
            }
            differ as f64 / pairs as f64
        })
        .collect())
}
