//! Input-gradient explanations, magnitude-ratio masks and explanation
//! artifacts.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Tensor};
use crate::datasets::{one_hot, DataKind};
use crate::error::{Error, Result};
use crate::model::{argmax_rows, build_forward, ParamNodes, Params};

/// Scalar whose input gradient is taken for each example.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// `Σ_k log ŷ_k`, the quantity penalized during training.
    #[default]
    SumLogProb,
    /// Probability of the predicted class.
    PredictedProb,
    /// Probability of a fixed class.
    PerClassProb(usize),
}

impl std::fmt::Display for Target {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Target::SumLogProb => write!(f, "sum-logprob"),
            Target::PredictedProb => write!(f, "predicted-prob"),
            Target::PerClassProb(k) => write!(f, "class-prob:{k}"),
        }
    }
}

impl std::str::FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum-logprob" => Ok(Target::SumLogProb),
            "predicted-prob" => Ok(Target::PredictedProb),
            _ => s
                .strip_prefix("class-prob:")
                .and_then(|k| k.parse().ok())
                .map(Target::PerClassProb)
                .ok_or_else(|| {
                    Error::invalid(format!(
                        "unknown target `{s}` (expected sum-logprob, predicted-prob or class-prob:K)"
                    ))
                }),
        }
    }
}

/// Per-example input gradients of a target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplanationSet {
    pub gradients: Tensor,
    pub target: Target,
    pub model_fingerprint: String,
}

const CHUNK: usize = 2048;

fn explain_chunk(params: &Params, x: &Tensor, target: Target) -> Result<Tensor> {
    let mut graph = Graph::new();
    let pn = ParamNodes::bind(&mut graph, params);
    let xn = graph.constant(x.clone());
    let nodes = build_forward(&mut graph, &pn, xn)?;
    let k = params.output_dim();
    let root = match target {
        Target::SumLogProb => graph.sum(nodes.logprobs)?,
        Target::PredictedProb | Target::PerClassProb(_) => {
            let classes = match target {
                Target::PerClassProb(c) => vec![c; x.rows()],
                _ => argmax_rows(graph.value(nodes.logprobs)),
            };
            let probs = graph.exp(nodes.logprobs)?;
            let picked = graph.select(probs, Arc::new(one_hot(&classes, k)))?;
            graph.sum(picked)?
        }
    };
    Ok(graph.gradient(root, &[xn])?.remove(0))
}

/// Row `n` of the result is the gradient of `target` at `x_n`.
pub fn explain(params: &Params, x: &Tensor, target: Target) -> Result<ExplanationSet> {
    Ok(ExplanationSet {
        gradients: input_gradients(params, x, target)?,
        target,
        model_fingerprint: params.fingerprint(),
    })
}

/// The gradients of [`explain`] without the model fingerprint.
pub fn input_gradients(params: &Params, x: &Tensor, target: Target) -> Result<Tensor> {
    if let Target::PerClassProb(k) = target {
        if k >= params.output_dim() {
            return Err(Error::invalid(format!(
                "class {k} out of range for {} classes",
                params.output_dim()
            )));
        }
    }
    if x.shape().len() != 2 || x.cols() != params.input_dim() {
        return Err(Error::ShapeMismatch {
            op: "explain",
            shapes: vec![x.shape().to_vec(), vec![params.input_dim()]],
        });
    }
    let mut parts = Vec::new();
    let mut start = 0;
    while start < x.rows() {
        let idx: Vec<usize> = (start..(start + CHUNK).min(x.rows())).collect();
        parts.push(explain_chunk(params, &x.select_rows(&idx), target)?);
        start += CHUNK;
    }
    let gradients = if parts.is_empty() {
        Tensor::zeros(&[0, x.cols()])
    } else {
        Tensor::vstack(&parts.iter().collect::<Vec<_>>())?
    };
    if !gradients.is_finite() {
        return Err(Error::NonFinite {
            component: 0,
            context: "input gradients".into(),
        });
    }
    Ok(gradients)
}

/// Binary selection of input components, one row per example.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mask {
    pub bits: Tensor,
    pub cutoff: f64,
}

impl Mask {
    pub fn rows(&self) -> usize {
        self.bits.rows()
    }

    pub fn count(&self) -> usize {
        self.bits.data().iter().filter(|&&b| b != 0.0).count()
    }

    /// Fraction of all components that are selected.
    pub fn selected_fraction(&self) -> f64 {
        if self.bits.len() == 0 {
            0.0
        } else {
            self.count() as f64 / self.bits.len() as f64
        }
    }

    /// Of all selected components, the fraction whose column is in `columns`.
    pub fn share(&self, columns: &[usize]) -> f64 {
        let total = self.count();
        if total == 0 {
            return 0.0;
        }
        let d = self.bits.cols();
        let mut keep = vec![false; d];
        for &c in columns {
            keep[c] = true;
        }
        let hits = self
            .bits
            .data()
            .iter()
            .enumerate()
            .filter(|(i, &b)| b != 0.0 && keep[i % d])
            .count();
        hits as f64 / total as f64
    }

    /// Elementwise union with an annotation matrix of the same shape.
    pub fn union(&self, a: &Tensor) -> Result<Tensor> {
        if a.shape() != self.bits.shape() {
            return Err(Error::ShapeMismatch {
                op: "mask union",
                shapes: vec![self.bits.shape().to_vec(), a.shape().to_vec()],
            });
        }
        Ok(self.bits.zip_map(a, |m, a| if m != 0.0 || a != 0.0 { 1.0 } else { 0.0 }))
    }
}

/// `M_c`: per row, selects components with `|g| / max|g| >= c`.
///
/// All-zero rows select nothing.
pub fn mask_top(expl: &ExplanationSet, cutoff: f64) -> Result<Mask> {
    if !(cutoff > 0.0 && cutoff <= 1.0) {
        return Err(Error::invalid(format!(
            "cutoff must lie in (0, 1], got {cutoff}"
        )));
    }
    let g = &expl.gradients;
    let (n, d) = (g.rows(), g.cols());
    let mut bits = vec![0.0; n * d];
    for i in 0..n {
        let row = g.row(i);
        let max = row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if max == 0.0 {
            continue;
        }
        for (j, v) in row.iter().enumerate() {
            if v.abs() / max >= cutoff {
                bits[i * d + j] = 1.0;
            }
        }
    }
    Ok(Mask {
        bits: Tensor::matrix(n, d, bits)?,
        cutoff,
    })
}

/// Share of summed `|gradient|` that falls in `columns`.
pub fn gradient_mass_share(expl: &ExplanationSet, columns: &[usize]) -> f64 {
    let g = &expl.gradients;
    let d = g.cols();
    let mut keep = vec![false; d];
    for &c in columns {
        keep[c] = true;
    }
    let (mut inside, mut total) = (0.0, 0.0);
    for (i, v) in g.data().iter().enumerate() {
        total += v.abs();
        if keep[i % d] {
            inside += v.abs();
        }
    }
    if total == 0.0 {
        0.0
    } else {
        inside / total
    }
}

pub const ARTIFACT_FORMAT: &str = "gradguard-explanation";
pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub index: usize,
    pub weight: f64,
    pub opacity: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArtifactExample {
    pub row: usize,
    pub entries: Vec<ArtifactEntry>,
}

/// Structured explanation document. Grid kinds have one entry per pixel,
/// text and tabular kinds one per feature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplanationArtifact {
    pub format: String,
    pub version: u32,
    pub kind: DataKind,
    pub model_fingerprint: String,
    pub target: String,
    pub cutoff: Option<f64>,
    pub examples: Vec<ArtifactExample>,
}

impl ExplanationArtifact {
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text =
            serde_json::to_string_pretty(self).map_err(|e| Error::format(path, e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }
}

/// Builds the artifact for an explanation set.
///
/// Grid inputs are reduced per pixel to the channel gradient with the largest
/// magnitude (sign kept), and a pixel counts as selected if any of its
/// channels is. Opacity is `|w| / max|w|` within the example.
pub fn render(
    expl: &ExplanationSet,
    mask: Option<&Mask>,
    kind: &DataKind,
) -> Result<ExplanationArtifact> {
    let g = &expl.gradients;
    let d = g.cols();
    if kind.dim() != d {
        return Err(Error::invalid(format!(
            "data kind describes {} features, gradients have {d} columns",
            kind.dim()
        )));
    }
    if let Some(m) = mask {
        if m.bits.shape() != g.shape() {
            return Err(Error::ShapeMismatch {
                op: "render",
                shapes: vec![g.shape().to_vec(), m.bits.shape().to_vec()],
            });
        }
    }
    let channels = match kind {
        DataKind::Grid { channels, .. } => *channels,
        _ => 1,
    };
    let mut examples = Vec::with_capacity(g.rows());
    for n in 0..g.rows() {
        let row = g.row(n);
        let bits = mask.map(|m| m.bits.row(n));
        let mut weights = Vec::with_capacity(d / channels);
        let mut selected = Vec::with_capacity(d / channels);
        for p in 0..d / channels {
            let cells = &row[p * channels..(p + 1) * channels];
            let mut best = cells[0];
            for &v in &cells[1..] {
                if v.abs() > best.abs() {
                    best = v;
                }
            }
            weights.push(best);
            selected.push(bits.map(|b| b[p * channels..(p + 1) * channels].iter().any(|&v| v != 0.0)));
        }
        let max = weights.iter().fold(0.0f64, |m, w| m.max(w.abs()));
        let entries = weights
            .iter()
            .zip(selected)
            .enumerate()
            .map(|(index, (&weight, selected))| ArtifactEntry {
                index,
                weight,
                opacity: if max > 0.0 { weight.abs() / max } else { 0.0 },
                selected,
            })
            .collect();
        examples.push(ArtifactExample { row: n, entries });
    }
    Ok(ExplanationArtifact {
        format: ARTIFACT_FORMAT.into(),
        version: ARTIFACT_VERSION,
        kind: kind.clone(),
        model_fingerprint: expl.model_fingerprint.clone(),
        target: expl.target.to_string(),
        cutoff: mask.map(|m| m.cutoff),
        examples,
    })
}
