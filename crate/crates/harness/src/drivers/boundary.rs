use std::path::PathBuf;

use gradguard::explain::{explain, ExplanationSet, Target};
use gradguard::model::{forward, Params};
use gradguard::Tensor;
use serde::Serialize;

use super::model_for;
use crate::config::Settings;
use crate::data;
use crate::error::{HarnessError, Result};
use crate::output::{num, CsvRow, RunDir};

#[derive(Debug)]
pub struct FieldRow {
    pub x1: f64,
    pub x2: f64,
    pub predicted: usize,
    pub probability: f64,
    /// Predicted probability minus the runner-up's.
    pub margin: f64,
    pub dprob: [f64; 2],
    pub dlogprob: [f64; 2],
}

impl CsvRow for FieldRow {
    const HEADER: &'static [&'static str] = &[
        "x1",
        "x2",
        "predicted",
        "probability",
        "margin",
        "dprob_dx1",
        "dprob_dx2",
        "dlogprob_dx1",
        "dlogprob_dx2",
    ];

    fn fields(&self) -> Vec<String> {
        vec![
            num(self.x1),
            num(self.x2),
            self.predicted.to_string(),
            num(self.probability),
            num(self.margin),
            num(self.dprob[0]),
            num(self.dprob[1]),
            num(self.dlogprob[0]),
            num(self.dlogprob[1]),
        ]
    }
}

/// Mean gradient norms over the 10% of cells with the smallest margin and
/// the 10% with the largest.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct FieldSummary {
    pub boundary_prob_norm: f64,
    pub interior_prob_norm: f64,
    pub boundary_logprob_norm: f64,
    pub interior_logprob_norm: f64,
}

#[derive(Debug)]
pub struct FieldOutput {
    pub dir: PathBuf,
    pub params: Params,
    /// `resolution² × 2` evaluation points, `x1` varying fastest.
    pub grid: Tensor,
    pub rows: Vec<FieldRow>,
    pub prob: ExplanationSet,
    pub logprob: ExplanationSet,
    pub summary: FieldSummary,
}

/// Evaluates a 2D model on a dense grid over the training data's bounding
/// box. Writes `field.csv` and `summary.json`.
///
/// Probability gradients are taken for the predicted class; log-probability
/// gradients are of `Σ_k log ŷ_k`.
pub fn boundary_field(s: &Settings) -> Result<FieldOutput> {
    let (train, _) = data::load(&s.data, s.seed)?;
    if train.dim() != 2 {
        return Err(HarnessError::config(format!(
            "boundary-field needs 2 input features, dataset `{}` has {}",
            s.data.name,
            train.dim()
        )));
    }
    let r = s.field.resolution;
    if r < 2 {
        return Err(HarnessError::config("field.resolution must be at least 2"));
    }
    let params = model_for(s, &train)?;
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for i in 0..train.len() {
        for j in 0..2 {
            lo[j] = lo[j].min(train.x.get(i, j));
            hi[j] = hi[j].max(train.x.get(i, j));
        }
    }
    for j in 0..2 {
        let pad = s.field.margin * (hi[j] - lo[j]);
        lo[j] -= pad;
        hi[j] += pad;
    }
    let at = |j: usize, i: usize| lo[j] + (hi[j] - lo[j]) * i as f64 / (r - 1) as f64;
    let mut points = Vec::with_capacity(2 * r * r);
    for i2 in 0..r {
        for i1 in 0..r {
            points.push(at(0, i1));
            points.push(at(1, i2));
        }
    }
    let grid = Tensor::matrix(r * r, 2, points)?;
    let probs = forward(&params, &grid)?.probs;
    let prob = explain(&params, &grid, Target::PredictedProb)?;
    let logprob = explain(&params, &grid, Target::SumLogProb)?;
    let rows: Vec<FieldRow> = (0..r * r)
        .map(|i| {
            let p = probs.row(i);
            let mut order: Vec<usize> = (0..p.len()).collect();
            order.sort_by(|&a, &b| p[b].total_cmp(&p[a]).then(a.cmp(&b)));
            FieldRow {
                x1: grid.get(i, 0),
                x2: grid.get(i, 1),
                predicted: order[0],
                probability: p[order[0]],
                margin: p[order[0]] - p[order[1]],
                dprob: [prob.gradients.get(i, 0), prob.gradients.get(i, 1)],
                dlogprob: [logprob.gradients.get(i, 0), logprob.gradients.get(i, 1)],
            }
        })
        .collect();
    let summary = summarize(&rows);
    let mut run = RunDir::create("boundary-field", s)?;
    run.write_csv("field.csv", &rows)?;
    run.write_json("summary.json", &summary)?;
    Ok(FieldOutput {
        dir: run.finish()?,
        params,
        grid,
        rows,
        prob,
        logprob,
        summary,
    })
}

fn summarize(rows: &[FieldRow]) -> FieldSummary {
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| rows[a].margin.total_cmp(&rows[b].margin).then(a.cmp(&b)));
    let tenth = (rows.len() / 10).max(1);
    let norm = |v: [f64; 2]| v[0].hypot(v[1]);
    let mean = |idx: &[usize], f: &dyn Fn(&FieldRow) -> f64| {
        idx.iter().map(|&i| f(&rows[i])).sum::<f64>() / idx.len() as f64
    };
    let near = &order[..tenth];
    let far = &order[order.len() - tenth..];
    FieldSummary {
        boundary_prob_norm: mean(near, &|r| norm(r.dprob)),
        interior_prob_norm: mean(far, &|r| norm(r.dprob)),
        boundary_logprob_norm: mean(near, &|r| norm(r.dlogprob)),
        interior_logprob_norm: mean(far, &|r| norm(r.dlogprob)),
    }
}
