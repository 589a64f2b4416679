//! Perturbation-based local linear explanations and their runtime against
//! input gradients.
//!
//! An instance is split into interpretable units (single features or image
//! blocks). Samples switch random subsets of units off by zeroing their
//! columns, the model is evaluated on every sample, and a proximity-weighted
//! ridge regression on the unit presence codes gives one coefficient per unit.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::explain::{input_gradients, Target};
use crate::model::{argmax_rows, forward, Classifier, Params};

/// Which columns may be switched off.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureUnits {
    /// Every column is a unit.
    All,
    /// Only columns that are nonzero in the instance (words present in a
    /// document).
    NonZero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PerturbKind {
    FeatureMask { units: FeatureUnits },
    /// Non-overlapping `block × block` tiles of a row-major image; edge
    /// tiles are clipped.
    BlockMask {
        height: usize,
        width: usize,
        channels: usize,
        block: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationScheme {
    pub kind: PerturbKind,
    pub num_samples: usize,
    /// Defaults to `0.75 * sqrt(m)` for `m` units.
    pub kernel_width: Option<f64>,
}

impl PerturbationScheme {
    pub fn features(units: FeatureUnits, num_samples: usize) -> Self {
        PerturbationScheme {
            kind: PerturbKind::FeatureMask { units },
            num_samples,
            kernel_width: None,
        }
    }

    pub fn blocks(height: usize, width: usize, channels: usize, block: usize, num_samples: usize) -> Self {
        PerturbationScheme {
            kind: PerturbKind::BlockMask {
                height,
                width,
                channels,
                block,
            },
            num_samples,
            kernel_width: None,
        }
    }

    fn validate(&self, d: usize) -> Result<()> {
        if self.num_samples == 0 {
            return Err(Error::invalid("at least one perturbation sample is required"));
        }
        if let Some(w) = self.kernel_width {
            if !(w > 0.0) {
                return Err(Error::invalid("kernel width must be positive"));
            }
        }
        if let PerturbKind::BlockMask {
            height,
            width,
            channels,
            block,
        } = self.kind
        {
            if block == 0 || height * width * channels != d {
                return Err(Error::invalid(format!(
                    "block scheme {height}x{width}x{channels} (block {block}) does not fit {d} columns"
                )));
            }
        }
        Ok(())
    }

    /// Column groups, one per interpretable unit of `x`.
    pub fn units(&self, x: &[f64]) -> Result<Vec<Vec<usize>>> {
        self.validate(x.len())?;
        Ok(match self.kind {
            PerturbKind::FeatureMask {
                units: FeatureUnits::All,
            } => (0..x.len()).map(|j| vec![j]).collect(),
            PerturbKind::FeatureMask {
                units: FeatureUnits::NonZero,
            } => (0..x.len()).filter(|&j| x[j] != 0.0).map(|j| vec![j]).collect(),
            PerturbKind::BlockMask {
                height,
                width,
                channels,
                block,
            } => {
                let mut out = Vec::new();
                for r0 in (0..height).step_by(block) {
                    for c0 in (0..width).step_by(block) {
                        let mut cols = Vec::new();
                        for r in r0..(r0 + block).min(height) {
                            for c in c0..(c0 + block).min(width) {
                                let base = (r * width + c) * channels;
                                cols.extend(base..base + channels);
                            }
                        }
                        out.push(cols);
                    }
                }
                out
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Perturbation {
    /// `S × D` model inputs.
    pub samples: Tensor,
    /// `S × m` presence codes, 1 when the unit is kept.
    pub codes: Tensor,
    pub weights: Vec<f64>,
    pub units: Vec<Vec<usize>>,
    pub kernel_width: f64,
}

/// Sample 0 is `x` itself with weight 1. Every other sample switches off a
/// uniformly chosen number of units (1 to m), picked uniformly, and gets
/// weight `exp(-h² / w²)` where `h` counts switched-off units.
pub fn perturb(x: &[f64], scheme: &PerturbationScheme, seed: u64) -> Result<Perturbation> {
    let units = scheme.units(x)?;
    let (s, m, d) = (scheme.num_samples, units.len(), x.len());
    let width = scheme
        .kernel_width
        .unwrap_or(0.75 * (m.max(1) as f64).sqrt());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(s * d);
    let mut codes = vec![1.0; s * m];
    let mut weights = Vec::with_capacity(s);
    samples.extend_from_slice(x);
    weights.push(1.0);
    for i in 1..s {
        let mut row = x.to_vec();
        let off = if m == 0 { 0 } else { rng.random_range(1..=m) };
        for u in sample(&mut rng, m, off) {
            codes[i * m + u] = 0.0;
            for &c in &units[u] {
                row[c] = 0.0;
            }
        }
        samples.extend(row);
        let h = off as f64;
        weights.push((-(h * h) / (width * width)).exp());
    }
    Ok(Perturbation {
        samples: Tensor::matrix(s, d, samples)?,
        codes: Tensor::matrix(s, m, codes)?,
        weights,
        units,
        kernel_width: width,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalExplanation {
    /// `(unit, coefficient)`, largest magnitude first.
    pub features: Vec<(usize, f64)>,
    pub intercept: f64,
    /// Weighted R² of the refit.
    pub score: f64,
    /// The normal equations were singular and a minimum-norm solution was
    /// used.
    pub min_norm_fallback: bool,
    /// Class whose probability was explained (set by [`explain_instance`]).
    pub class: Option<usize>,
}

pub const DEFAULT_RIDGE: f64 = 1.0;

/// Weighted ridge fit with intercept; returns (coefficients, intercept,
/// weighted R², fallback flag).
fn weighted_ridge(
    codes: &Tensor,
    cols: &[usize],
    y: &[f64],
    w: &[f64],
    alpha: f64,
) -> (Vec<f64>, f64, f64, bool) {
    let s = y.len();
    let m = cols.len();
    let wsum: f64 = w.iter().sum();
    // Offset by y[0] so constant outputs give an exactly zero residual.
    let y0 = y[0];
    let ymean = y0 + y.iter().zip(w).map(|(v, w)| (v - y0) * w).sum::<f64>() / wsum;
    let mut zmean = vec![0.0; m];
    for i in 0..s {
        let row = codes.row(i);
        for (k, &c) in cols.iter().enumerate() {
            zmean[k] += w[i] * row[c];
        }
    }
    zmean.iter_mut().for_each(|v| *v /= wsum);
    let z = DMatrix::from_fn(s, m, |i, k| (codes.row(i)[cols[k]] - zmean[k]) * w[i].sqrt());
    let t = DVector::from_fn(s, |i, _| (y[i] - ymean) * w[i].sqrt());
    // With more units than samples, solve the s × s dual system instead:
    // (ZᵀZ + αI)⁻¹Zᵀt = Zᵀ(ZZᵀ + αI)⁻¹t.
    let dual = alpha > 0.0 && m > s;
    let (mut gram, rhs) = if dual {
        (&z * z.transpose(), t.clone())
    } else {
        (z.transpose() * &z, z.transpose() * &t)
    };
    for k in 0..gram.nrows() {
        gram[(k, k)] += alpha;
    }
    let (sol, fallback) = match gram.clone().cholesky() {
        Some(ch) => (ch.solve(&rhs), false),
        None => {
            let n = gram.nrows();
            let svd = gram.svd(true, true);
            let sol = svd
                .solve(&rhs, 1e-12 * svd.singular_values.max().max(1e-300))
                .unwrap_or_else(|_| DVector::zeros(n));
            (sol, true)
        }
    };
    let beta = if dual { z.transpose() * sol } else { sol };
    let intercept = ymean - beta.iter().zip(&zmean).map(|(b, z)| b * z).sum::<f64>();
    let resid = &t - &z * &beta;
    let ss_res = resid.norm_squared();
    let ss_tot = t.norm_squared();
    let score = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    (beta.iter().copied().collect(), intercept, score, fallback)
}

/// Ridge fit with strength [`DEFAULT_RIDGE`]; see [`fit_local_with`].
pub fn fit_local(codes: &Tensor, outputs: &[f64], weights: &[f64], k: usize) -> Result<LocalExplanation> {
    fit_local_with(codes, outputs, weights, k, DEFAULT_RIDGE)
}

/// Fits all units, keeps the `k` with the largest coefficient magnitude
/// (lowest unit index on ties) and refits on those.
pub fn fit_local_with(
    codes: &Tensor,
    outputs: &[f64],
    weights: &[f64],
    k: usize,
    alpha: f64,
) -> Result<LocalExplanation> {
    let (s, m) = (codes.rows(), codes.cols());
    if outputs.len() != s || weights.len() != s {
        return Err(Error::invalid(format!(
            "{s} samples but {} outputs and {} weights",
            outputs.len(),
            weights.len()
        )));
    }
    if s < k.min(m) + 1 {
        return Err(Error::invalid(format!(
            "need at least {} samples for {} features",
            k.min(m) + 1,
            k.min(m)
        )));
    }
    if !(alpha >= 0.0) || weights.iter().any(|&w| !(w >= 0.0)) || weights.iter().sum::<f64>() <= 0.0 {
        return Err(Error::invalid("ridge strength and weights must be non-negative, weights not all zero"));
    }
    let all: Vec<usize> = (0..m).collect();
    let (beta, intercept, score, fallback) = weighted_ridge(codes, &all, outputs, weights, alpha);
    let mut order = all.clone();
    order.sort_by(|&a, &b| beta[b].abs().total_cmp(&beta[a].abs()).then(a.cmp(&b)));
    let mut features: Vec<(usize, f64)>;
    let (intercept, score, fallback) = if k >= m {
        features = order.iter().map(|&j| (j, beta[j])).collect();
        (intercept, score, fallback)
    } else {
        let mut chosen = order[..k].to_vec();
        chosen.sort_unstable();
        let (b2, i2, s2, f2) = weighted_ridge(codes, &chosen, outputs, weights, alpha);
        features = chosen.into_iter().zip(b2).collect();
        features.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(&b.0)));
        (i2, s2, fallback || f2)
    };
    Ok(LocalExplanation {
        features,
        intercept,
        score,
        min_norm_fallback: fallback,
        class: None,
    })
}

/// Explains the probability of the class `model` predicts at `x`.
pub fn explain_instance<M: Classifier + ?Sized>(
    model: &M,
    x: &[f64],
    scheme: &PerturbationScheme,
    k: usize,
    seed: u64,
) -> Result<(LocalExplanation, Perturbation)> {
    if x.len() != model.input_dim() {
        return Err(Error::ShapeMismatch {
            op: "explain_instance",
            shapes: vec![vec![x.len()], vec![model.input_dim()]],
        });
    }
    let p = perturb(x, scheme, seed)?;
    let probs = model.predict_proba(&p.samples)?;
    let class = argmax_rows(&Tensor::matrix(1, probs.cols(), probs.row(0).to_vec())?)[0];
    let outputs: Vec<f64> = (0..probs.rows()).map(|i| probs.row(i)[class]).collect();
    let mut e = fit_local(&p.codes, &outputs, &p.weights, k)?;
    e.class = Some(class);
    Ok((e, p))
}

/// Jaccard overlap of two index sets; two empty sets overlap fully.
pub fn top_k_jaccard(a: &[usize], b: &[usize]) -> f64 {
    let sa: std::collections::BTreeSet<_> = a.iter().collect();
    let sb: std::collections::BTreeSet<_> = b.iter().collect();
    let union = sa.union(&sb).count();
    if union == 0 {
        1.0
    } else {
        sa.intersection(&sb).count() as f64 / union as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub mean_s: f64,
    pub std_s: f64,
}

impl Timing {
    fn from_samples(v: &[f64]) -> Timing {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = if v.len() > 1 {
            v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Timing {
            mean_s: mean,
            std_s: var.sqrt(),
        }
    }
}

/// Seconds per explanation, averaged over the rows of `x` within each
/// repetition; mean and sample standard deviation are across repetitions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub surrogate: Timing,
    pub gradient: Timing,
    /// One forward pass on one row, for scale.
    pub forward: Timing,
    pub dim: usize,
    pub samples: usize,
}

impl BenchResult {
    pub fn ratio(&self) -> f64 {
        self.surrogate.mean_s / self.gradient.mean_s
    }
}

pub fn bench(
    params: &Params,
    x: &Tensor,
    scheme: &PerturbationScheme,
    k: usize,
    repetitions: usize,
) -> Result<BenchResult> {
    if repetitions < 3 {
        return Err(Error::invalid("benchmark needs at least 3 repetitions"));
    }
    if x.rows() == 0 {
        return Err(Error::invalid("benchmark needs at least one instance"));
    }
    let rows: Vec<Tensor> = (0..x.rows())
        .map(|i| Tensor::matrix(1, x.cols(), x.row(i).to_vec()))
        .collect::<Result<_>>()?;
    let n = rows.len() as f64;
    let (mut sur, mut grad, mut fwd) = (Vec::new(), Vec::new(), Vec::new());
    for rep in 0..repetitions {
        let t = Instant::now();
        for (i, r) in rows.iter().enumerate() {
            std::hint::black_box(explain_instance(params, r.data(), scheme, k, (rep * rows.len() + i) as u64)?);
        }
        sur.push(t.elapsed().as_secs_f64() / n);
        let t = Instant::now();
        for r in &rows {
            std::hint::black_box(input_gradients(params, r, Target::PredictedProb)?);
        }
        grad.push(t.elapsed().as_secs_f64() / n);
        let t = Instant::now();
        for r in &rows {
            std::hint::black_box(forward(params, r)?);
        }
        fwd.push(t.elapsed().as_secs_f64() / n);
    }
    Ok(BenchResult {
        surrogate: Timing::from_samples(&sur),
        gradient: Timing::from_samples(&grad),
        forward: Timing::from_samples(&fwd),
        dim: x.cols(),
        samples: scheme.num_samples,
    })
}
