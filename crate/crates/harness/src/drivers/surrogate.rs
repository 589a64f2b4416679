use std::path::PathBuf;

use gradguard::datasets::DataKind;
use gradguard::explain::{input_gradients, Target};
use gradguard::model::Params;
use gradguard::surrogate::{bench as time_methods, explain_instance, top_k_jaccard, FeatureUnits, PerturbationScheme};
use gradguard::Tensor;
use serde::Serialize;

use super::model_for;
use crate::config::Settings;
use crate::data;
use crate::error::{HarnessError, Result};
use crate::output::{num, CsvRow, RunDir};

fn scheme_for(kind: &DataKind, units: &str, block: usize, samples: usize) -> Result<PerturbationScheme> {
    match (units, kind) {
        ("nonzero", _) => Ok(PerturbationScheme::features(FeatureUnits::NonZero, samples)),
        ("all", _) => Ok(PerturbationScheme::features(FeatureUnits::All, samples)),
        (
            "blocks",
            DataKind::Grid {
                height,
                width,
                channels,
            },
        ) => Ok(PerturbationScheme::blocks(*height, *width, *channels, block, samples)),
        ("blocks", _) => Err(HarnessError::config("surrogate.units = blocks needs an image dataset")),
        (other, _) => Err(HarnessError::config(format!(
            "surrogate.units must be nonzero, all or blocks, got `{other}`"
        ))),
    }
}

fn row(x: &Tensor, i: usize) -> Result<Tensor> {
    Ok(Tensor::matrix(1, x.cols(), x.row(i).to_vec())?)
}

/// One selected surrogate feature.
#[derive(Debug)]
pub struct SurrogateRow {
    pub instance: usize,
    pub rank: usize,
    pub unit: usize,
    /// Columns the unit switches off, `;`-separated.
    pub columns: Vec<usize>,
    pub weight: f64,
    /// Input gradient of the same probability, summed over the unit.
    pub gradient: f64,
}

impl CsvRow for SurrogateRow {
    const HEADER: &'static [&'static str] = &["instance", "rank", "unit", "columns", "weight", "gradient"];

    fn fields(&self) -> Vec<String> {
        let cols: Vec<String> = self.columns.iter().map(|c| c.to_string()).collect();
        vec![
            self.instance.to_string(),
            self.rank.to_string(),
            self.unit.to_string(),
            cols.join(";"),
            num(self.weight),
            num(self.gradient),
        ]
    }
}

#[derive(Debug)]
pub struct FidelityRow {
    pub instance: usize,
    pub class: usize,
    /// Units in both the surrogate's top k and the gradient's top k.
    pub joint: usize,
    /// Joint units whose surrogate weight and gradient have the same sign.
    pub agree: usize,
    pub score: f64,
    /// Mean top-k Jaccard overlap of reseeded surrogate runs with the first.
    pub reseed_jaccard: f64,
    /// Gradients recomputed `reseeds` times were bitwise identical.
    pub gradient_reproducible: bool,
}

impl CsvRow for FidelityRow {
    const HEADER: &'static [&'static str] = &[
        "instance",
        "class",
        "joint",
        "agree",
        "score",
        "reseed_jaccard",
        "gradient_reproducible",
    ];

    fn fields(&self) -> Vec<String> {
        vec![
            self.instance.to_string(),
            self.class.to_string(),
            self.joint.to_string(),
            self.agree.to_string(),
            num(self.score),
            num(self.reseed_jaccard),
            self.gradient_reproducible.to_string(),
        ]
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct FidelitySummary {
    pub instances: usize,
    pub joint: usize,
    pub agree: usize,
    pub sign_agreement: f64,
    pub mean_reseed_jaccard: f64,
    pub gradients_reproducible: bool,
    pub test_accuracy: f64,
}

#[derive(Debug)]
pub struct SurrogateOutput {
    pub dir: PathBuf,
    pub params: Params,
    pub features: Vec<SurrogateRow>,
    pub fidelity: Vec<FidelityRow>,
    pub summary: FidelitySummary,
}

/// Fits local surrogates on the first `surrogate.instances` test rows and
/// compares them with input gradients of the predicted-class probability.
/// Writes `surrogate.csv`, `fidelity.csv` and `summary.json`.
///
/// Rows with no perturbable units are skipped.
pub fn surrogate(s: &Settings) -> Result<SurrogateOutput> {
    let (train, test) = data::load(&s.data, s.seed)?;
    let params = model_for(s, &train)?;
    let cfg = &s.surrogate;
    if cfg.k == 0 {
        return Err(HarnessError::config("surrogate.k must be positive"));
    }
    let scheme = scheme_for(&test.kind, &cfg.units, cfg.block, cfg.samples)?;
    let mut features = Vec::new();
    let mut fidelity = Vec::new();
    let mut i = 0;
    while fidelity.len() < cfg.instances && i < test.len() {
        let x = test.x.row(i);
        let units = scheme.units(x)?;
        if units.is_empty() {
            i += 1;
            continue;
        }
        let base_seed = s.seed.wrapping_add(i as u64);
        let (le, _) = explain_instance(&params, x, &scheme, cfg.k, base_seed)?;
        let xt = row(&test.x, i)?;
        let g = input_gradients(&params, &xt, Target::PredictedProb)?;
        let mut reproducible = true;
        for _ in 0..cfg.reseeds {
            let again = input_gradients(&params, &xt, Target::PredictedProb)?;
            reproducible &= again
                .data()
                .iter()
                .zip(g.data())
                .all(|(a, b)| a.to_bits() == b.to_bits());
        }
        let unit_grad: Vec<f64> = units.iter().map(|u| u.iter().map(|&c| g.data()[c]).sum()).collect();
        let mut by_grad: Vec<usize> = (0..units.len()).collect();
        by_grad.sort_by(|&a, &b| unit_grad[b].abs().total_cmp(&unit_grad[a].abs()).then(a.cmp(&b)));
        let grad_top = &by_grad[..cfg.k.min(by_grad.len())];
        let (mut joint, mut agree) = (0, 0);
        for (rank, &(u, w)) in le.features.iter().enumerate() {
            if grad_top.contains(&u) {
                joint += 1;
                if (w > 0.0) == (unit_grad[u] > 0.0) {
                    agree += 1;
                }
            }
            features.push(SurrogateRow {
                instance: i,
                rank,
                unit: u,
                columns: units[u].clone(),
                weight: w,
                gradient: unit_grad[u],
            });
        }
        let top: Vec<usize> = le.features.iter().map(|f| f.0).collect();
        let mut jaccard = 0.0;
        for r in 1..=cfg.reseeds {
            let seed = base_seed.wrapping_add((r * test.len()) as u64);
            let (other, _) = explain_instance(&params, x, &scheme, cfg.k, seed)?;
            let other: Vec<usize> = other.features.iter().map(|f| f.0).collect();
            jaccard += top_k_jaccard(&top, &other);
        }
        fidelity.push(FidelityRow {
            instance: i,
            class: le.class.unwrap_or_default(),
            joint,
            agree,
            score: le.score,
            reseed_jaccard: if cfg.reseeds > 0 {
                jaccard / cfg.reseeds as f64
            } else {
                1.0
            },
            gradient_reproducible: reproducible,
        });
        i += 1;
    }
    let joint: usize = fidelity.iter().map(|f| f.joint).sum();
    let agree: usize = fidelity.iter().map(|f| f.agree).sum();
    let summary = FidelitySummary {
        instances: fidelity.len(),
        joint,
        agree,
        sign_agreement: if joint > 0 {
            agree as f64 / joint as f64
        } else {
            f64::NAN
        },
        mean_reseed_jaccard: fidelity.iter().map(|f| f.reseed_jaccard).sum::<f64>() / fidelity.len().max(1) as f64,
        gradients_reproducible: fidelity.iter().all(|f| f.gradient_reproducible),
        test_accuracy: gradguard::training::dataset_accuracy(&params, &test)?,
    };
    let mut run = RunDir::create("surrogate", s)?;
    run.write_csv("surrogate.csv", &features)?;
    run.write_csv("fidelity.csv", &fidelity)?;
    run.write_json("summary.json", &summary)?;
    Ok(SurrogateOutput {
        dir: run.finish()?,
        params,
        features,
        fidelity,
        summary,
    })
}

#[derive(Debug)]
pub struct BenchRow {
    pub method: String,
    pub dataset: String,
    pub dim: usize,
    pub samples: usize,
    pub mean_s: f64,
    pub std_s: f64,
}

impl CsvRow for BenchRow {
    const HEADER: &'static [&'static str] = &["method", "dataset", "D", "samples", "mean_s", "std_s"];

    fn fields(&self) -> Vec<String> {
        vec![
            self.method.clone(),
            self.dataset.clone(),
            self.dim.to_string(),
            self.samples.to_string(),
            num(self.mean_s),
            num(self.std_s),
        ]
    }
}

#[derive(Debug)]
pub struct BenchOutput {
    pub dir: PathBuf,
    pub rows: Vec<BenchRow>,
    /// `(samples, surrogate time / gradient time)`.
    pub ratios: Vec<(usize, f64)>,
}

/// Times surrogate, gradient and forward-pass explanations of the first
/// `bench.instances` test rows. Writes `bench.csv`.
///
/// Without a checkpoint the model is the seeded initialization; timings do
/// not depend on weight values.
pub fn bench(s: &Settings) -> Result<BenchOutput> {
    let (train, test) = data::load(&s.data, s.seed)?;
    let params = if s.checkpoint.is_empty() {
        super::init_params(s, &train, s.seed)?
    } else {
        model_for(s, &train)?
    };
    let n = s.bench.instances.min(test.len());
    if n == 0 {
        return Err(HarnessError::config("bench.instances must be positive"));
    }
    let x = test.x.select_rows(&(0..n).collect::<Vec<_>>());
    let mut rows = Vec::new();
    let mut ratios = Vec::new();
    for &samples in &s.bench.samples {
        let scheme = match test.kind {
            DataKind::Grid { .. } => scheme_for(&test.kind, "blocks", s.bench.block, samples)?,
            _ => scheme_for(&test.kind, "all", s.bench.block, samples)?,
        };
        let r = time_methods(&params, &x, &scheme, s.bench.k, s.bench.repetitions)?;
        for (method, t) in [("surrogate", r.surrogate), ("gradient", r.gradient), ("forward", r.forward)] {
            rows.push(BenchRow {
                method: method.into(),
                dataset: s.data.name.clone(),
                dim: r.dim,
                samples,
                mean_s: t.mean_s,
                std_s: t.std_s,
            });
        }
        ratios.push((samples, r.ratio()));
    }
    let mut run = RunDir::create("bench", s)?;
    run.write_csv("bench.csv", &rows)?;
    Ok(BenchOutput {
        dir: run.finish()?,
        rows,
        ratios,
    })
}

