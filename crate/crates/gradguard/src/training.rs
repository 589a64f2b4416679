//! Explanation-penalized training.
//!
//! The loss has three terms, all summed (not averaged) over the batch:
//!
//! ```text
//! right answers  Σ_n Σ_k −y_nk log ŷ_nk
//! right reasons  λ1 Σ_n Σ_d (A_nd ∂/∂x_nd Σ_k log ŷ_nk)²
//! regular        λ2 Σ_i θ_i²
//! ```
//!
//! The right-reasons term contains an input gradient, so its parameter
//! gradient goes through a second differentiation pass of the graph.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, NodeId, Tensor};
use crate::datasets::{check_one_hot, is_binary, LabeledDataset};
use crate::error::{Error, Result};
use crate::model::{
    accuracy, argmax_rows, build_forward, input_logprob_gradient_node, ParamNodes, Params,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            step_size: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Weight of the right-reasons term.
    pub lambda1: f64,
    /// Weight of the squared-parameter term.
    pub lambda2: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Append every annotated row to every minibatch.
    pub pin_annotated: bool,
    /// Stop once accuracy and total loss have both been flat for
    /// `early_stop_patience` epochs. `0` disables early stopping.
    pub early_stop_patience: usize,
    pub early_stop_tolerance: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda1: 1000.0,
            lambda2: 1e-4,
            batch_size: 256,
            epochs: 64,
            adam: AdamConfig::default(),
            seed: 0,
            pin_annotated: false,
            early_stop_patience: 5,
            early_stop_tolerance: 1e-4,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let a = &self.adam;
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if !(self.lambda1 >= 0.0 && self.lambda2 >= 0.0) {
            return Err(Error::invalid("lambda1 and lambda2 must be non-negative"));
        }
        if !(a.beta1 > 0.0 && a.beta1 < 1.0 && a.beta2 > 0.0 && a.beta2 < 1.0) {
            return Err(Error::invalid("Adam betas must lie in (0, 1)"));
        }
        if !(a.step_size > 0.0) || !(a.epsilon > 0.0) {
            return Err(Error::invalid("Adam step size and epsilon must be positive"));
        }
        Ok(())
    }
}

/// Values of the three loss terms.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub right_answers: f64,
    /// Already multiplied by λ1.
    pub right_reasons: f64,
    /// Already multiplied by λ2.
    pub regular: f64,
    pub total: f64,
    /// The right-reasons sum before multiplying by λ1.
    pub raw_penalty: f64,
}

impl LossBreakdown {
    /// `right_reasons / right_answers` (0 when both are 0).
    pub fn reasons_to_answers(&self) -> f64 {
        if self.right_reasons == 0.0 {
            0.0
        } else {
            self.right_reasons / self.right_answers
        }
    }
}

/// Graph handles of a recorded loss.
#[derive(Clone, Debug)]
pub struct LossNodes {
    pub total: NodeId,
    pub params: ParamNodes,
    pub logprobs: NodeId,
}

fn validate_inputs(x: &Tensor, y: &Tensor, a: &Tensor) -> Result<()> {
    if y.rows() != x.rows() || a.shape() != x.shape() {
        return Err(Error::ShapeMismatch {
            op: "loss",
            shapes: vec![x.shape().to_vec(), y.shape().to_vec(), a.shape().to_vec()],
        });
    }
    if !is_binary(a) {
        return Err(Error::invalid("annotation matrix must be binary"));
    }
    check_one_hot(y)
}

/// Records the full loss for `params` on `(x, y, a)`.
///
/// When `a` is all zeros the input gradient is not built at all and the
/// right-reasons term is exactly zero.
pub fn record_loss(
    graph: &mut Graph,
    params: &Params,
    x: &Tensor,
    y: &Tensor,
    a: &Tensor,
    lambda1: f64,
    lambda2: f64,
) -> Result<(LossNodes, LossBreakdown)> {
    validate_inputs(x, y, a)?;
    let pn = ParamNodes::bind(graph, params);
    let xn = graph.constant(x.clone());
    let nodes = build_forward(graph, &pn, xn)?;

    let picked = graph.select(nodes.logprobs, Arc::new(y.clone()))?;
    let picked = graph.sum(picked)?;
    let answers = graph.scale(picked, -1.0)?;

    let reasons = if a.data().iter().any(|&v| v != 0.0) {
        let gx = input_logprob_gradient_node(graph, &nodes)?;
        let masked = graph.select(gx, Arc::new(a.clone()))?;
        let sq = graph.square(masked)?;
        Some(graph.sum(sq)?)
    } else {
        None
    };

    let mut sq_terms = Vec::new();
    for id in pn.all() {
        let sq = graph.square(id)?;
        sq_terms.push(graph.sum(sq)?);
    }
    let mut params_sq = sq_terms[0];
    for &t in &sq_terms[1..] {
        params_sq = graph.add(params_sq, t)?;
    }
    let regular = graph.scale(params_sq, lambda2)?;

    let mut total = graph.add(answers, regular)?;
    let raw_penalty = reasons.map_or(0.0, |r| graph.value(r).item());
    let mut right_reasons = 0.0;
    if let Some(r) = reasons {
        let weighted = graph.scale(r, lambda1)?;
        right_reasons = graph.value(weighted).item();
        total = graph.add(total, weighted)?;
    }
    let breakdown = LossBreakdown {
        right_answers: graph.value(answers).item(),
        right_reasons,
        regular: graph.value(regular).item(),
        total: graph.value(total).item(),
        raw_penalty,
    };
    Ok((
        LossNodes {
            total,
            params: pn,
            logprobs: nodes.logprobs,
        },
        breakdown,
    ))
}

/// The loss and its graph. Differentiate `nodes.total` with respect to
/// `nodes.params.all()` for parameter gradients.
pub fn explanation_loss(
    params: &Params,
    x: &Tensor,
    y: &Tensor,
    a: &Tensor,
    lambda1: f64,
    lambda2: f64,
) -> Result<(Graph, LossNodes, LossBreakdown)> {
    let mut graph = Graph::new();
    let (nodes, breakdown) = record_loss(&mut graph, params, x, y, a, lambda1, lambda2)?;
    Ok((graph, nodes, breakdown))
}

/// Loss value plus parameter gradients in [`Params::tensors`] order.
pub fn loss_and_gradients(
    params: &Params,
    x: &Tensor,
    y: &Tensor,
    a: &Tensor,
    lambda1: f64,
    lambda2: f64,
) -> Result<(LossBreakdown, Vec<Tensor>, Tensor)> {
    let (mut graph, nodes, breakdown) = explanation_loss(params, x, y, a, lambda1, lambda2)?;
    let grads = graph.gradient(nodes.total, &nodes.params.all())?;
    let logprobs = graph.value(nodes.logprobs).clone();
    Ok((breakdown, grads, logprobs))
}

/// First and second moment estimates plus the step counter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &Params) -> Self {
        let zeros: Vec<Tensor> = params.tensors().map(|t| Tensor::zeros(t.shape())).collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(
    config: &AdamConfig,
    state: &AdamState,
    params: &Params,
    grads: &[Tensor],
) -> Result<(Params, AdamState)> {
    let current: Vec<&Tensor> = params.tensors().collect();
    if grads.len() != current.len()
        || grads.iter().zip(&current).any(|(g, p)| g.shape() != p.shape())
    {
        return Err(Error::invalid("gradient shapes do not match parameters"));
    }
    for (i, g) in grads.iter().enumerate() {
        if !g.is_finite() {
            return Err(Error::NonFiniteGradient {
                layer: i / 2,
                part: if i % 2 == 0 { "weight" } else { "bias" },
            });
        }
    }
    let t = state.t + 1;
    let (b1, b2) = (config.beta1, config.beta2);
    let c1 = 1.0 - b1.powi(t as i32);
    let c2 = 1.0 - b2.powi(t as i32);
    let mut new_params = Vec::with_capacity(grads.len());
    let mut new_m = Vec::with_capacity(grads.len());
    let mut new_v = Vec::with_capacity(grads.len());
    for (((p, g), m), v) in current.iter().zip(grads).zip(&state.m).zip(&state.v) {
        let m2 = m.zip_map(g, |m, g| b1 * m + (1.0 - b1) * g);
        let v2 = v.zip_map(g, |v, g| b2 * v + (1.0 - b2) * g * g);
        let data = p
            .data()
            .iter()
            .zip(m2.data().iter().zip(v2.data()))
            .map(|(&p, (&m, &v))| {
                let mhat = m / c1;
                let vhat = v / c2;
                p - config.step_size * mhat / (vhat.sqrt() + config.epsilon)
            })
            .collect();
        new_params.push(Tensor::new(p.shape().to_vec(), data)?);
        new_m.push(m2);
        new_v.push(v2);
    }
    Ok((
        Params::from_tensors(new_params)?,
        AdamState {
            m: new_m,
            v: new_v,
            t,
        },
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Loss over the full training set after this epoch.
    pub loss: LossBreakdown,
    pub train_accuracy: f64,
    pub held_out_accuracy: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Loss over the full training set before the first update.
    pub initial: LossBreakdown,
    pub initial_accuracy: f64,
    pub epochs: Vec<EpochRecord>,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }

    /// Loss after the last epoch, or the initial loss if none ran.
    pub fn final_loss(&self) -> LossBreakdown {
        self.last().map_or(self.initial, |r| r.loss)
    }
}

const EVAL_CHUNK: usize = 2048;

/// Loss over all rows (evaluated in chunks) and training accuracy.
pub fn evaluate(
    params: &Params,
    data: &LabeledDataset,
    lambda1: f64,
    lambda2: f64,
) -> Result<(LossBreakdown, f64)> {
    let n = data.len();
    let mut out = LossBreakdown::default();
    let mut predicted = Vec::with_capacity(n);
    let mut start = 0;
    while start < n {
        let idx: Vec<usize> = (start..(start + EVAL_CHUNK).min(n)).collect();
        let (x, y, a) = (
            data.x.select_rows(&idx),
            data.y.select_rows(&idx),
            data.a.select_rows(&idx),
        );
        let (graph, nodes, b) = explanation_loss(params, &x, &y, &a, lambda1, 0.0)?;
        predicted.extend(argmax_rows(graph.value(nodes.logprobs)));
        out.right_answers += b.right_answers;
        out.right_reasons += b.right_reasons;
        out.raw_penalty += b.raw_penalty;
        start += EVAL_CHUNK;
    }
    out.regular = lambda2 * params.sum_squares();
    out.total = out.right_answers + out.right_reasons + out.regular;
    Ok((out, accuracy(&predicted, &data.labels())))
}

/// Accuracy of `params` on a dataset.
pub fn dataset_accuracy(params: &Params, data: &LabeledDataset) -> Result<f64> {
    let mut predicted = Vec::with_capacity(data.len());
    let mut start = 0;
    while start < data.len() {
        let idx: Vec<usize> = (start..(start + EVAL_CHUNK).min(data.len())).collect();
        predicted.extend(crate::model::predict(params, &data.x.select_rows(&idx))?);
        start += EVAL_CHUNK;
    }
    Ok(accuracy(&predicted, &data.labels()))
}

/// Trains from the seeded default initialization.
pub fn train(config: &TrainConfig, data: &LabeledDataset) -> Result<(Params, TrainHistory)> {
    let init = Params::init(data.dim(), data.num_classes(), config.seed)?;
    train_from(config, data, init, None)
}

/// Trains starting from `init`, optionally tracking accuracy on `held_out`.
///
/// Each epoch visits a fresh seeded permutation of the rows in minibatches.
/// With `pin_annotated`, every annotated row not already in a batch is
/// appended to it.
pub fn train_from(
    config: &TrainConfig,
    data: &LabeledDataset,
    init: Params,
    held_out: Option<&LabeledDataset>,
) -> Result<(Params, TrainHistory)> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("cannot train on an empty dataset"));
    }
    data.validate()?;
    if init.input_dim() != data.dim() || init.output_dim() != data.num_classes() {
        return Err(Error::invalid(format!(
            "model {:?} does not fit data with {} features and {} classes",
            init.layer_sizes(),
            data.dim(),
            data.num_classes()
        )));
    }
    let (l1, l2) = (config.lambda1, config.lambda2);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let pinned = if config.pin_annotated {
        data.annotated_rows()
    } else {
        Vec::new()
    };

    let mut params = init;
    let mut state = AdamState::new(&params);
    let (initial, initial_accuracy) = evaluate(&params, data, l1, l2)?;
    let mut history = TrainHistory {
        initial,
        initial_accuracy,
        epochs: Vec::new(),
        stopped_early: false,
    };
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut in_batch = vec![false; data.len()];
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let mut idx = chunk.to_vec();
            if !pinned.is_empty() {
                for &i in chunk {
                    in_batch[i] = true;
                }
                idx.extend(pinned.iter().copied().filter(|&i| !in_batch[i]));
                for &i in chunk {
                    in_batch[i] = false;
                }
            }
            let (x, y, a) = (
                data.x.select_rows(&idx),
                data.y.select_rows(&idx),
                data.a.select_rows(&idx),
            );
            let (_, grads, _) = loss_and_gradients(&params, &x, &y, &a, l1, l2)?;
            (params, state) = adam_step(&config.adam, &state, &params, &grads)?;
        }
        let (loss, train_accuracy) = evaluate(&params, data, l1, l2)?;
        let held_out_accuracy = held_out
            .map(|h| dataset_accuracy(&params, h))
            .transpose()?;
        history.epochs.push(EpochRecord {
            epoch: epoch + 1,
            loss,
            train_accuracy,
            held_out_accuracy,
        });
        if converged(config, &history) {
            history.stopped_early = epoch + 1 < config.epochs;
            break;
        }
    }
    Ok((params, history))
}

fn converged(config: &TrainConfig, history: &TrainHistory) -> bool {
    let p = config.early_stop_patience;
    if p == 0 || history.epochs.len() <= p {
        return false;
    }
    let tol = config.early_stop_tolerance;
    history.epochs[history.epochs.len() - p - 1..]
        .windows(2)
        .all(|w| {
            let (a, b) = (&w[0], &w[1]);
            let dl = (b.loss.total - a.loss.total).abs() / a.loss.total.abs().max(1e-12);
            (b.train_accuracy - a.train_accuracy).abs() < tol && dl < tol
        })
}

/// The λ1 that makes the right-reasons term equal the right-answers term at
/// `params`. Returns `None` when the raw penalty is zero (for example when
/// `A = 0`).
pub fn matched_lambda1(params: &Params, data: &LabeledDataset) -> Result<Option<f64>> {
    let (b, _) = evaluate(params, data, 1.0, 0.0)?;
    Ok((b.raw_penalty > 0.0).then(|| b.right_answers / b.raw_penalty))
}

/// Which loss magnitudes the λ1 search compares.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BalancePoint {
    /// Before any training step.
    Initial,
    /// After training.
    #[default]
    Converged,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lambda1Entry {
    pub lambda1: f64,
    pub initial: LossBreakdown,
    pub converged: LossBreakdown,
    pub initial_ratio: f64,
    pub converged_ratio: f64,
    pub train_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lambda1Report {
    pub entries: Vec<Lambda1Entry>,
    pub criterion: BalancePoint,
    /// No grid value had a ratio in `[0.1, 10]`; the one nearest 1 was used.
    pub fallback: bool,
}

pub const BALANCED_RATIO: (f64, f64) = (0.1, 10.0);

/// Trains once per grid value and returns the smallest λ1 whose
/// right-reasons / right-answers ratio lies in `[0.1, 10]`.
///
/// If none qualifies, the value with ratio nearest 1 (in log distance,
/// smallest λ1 on ties) is returned and the report's `fallback` flag is set.
pub fn select_lambda1(
    data: &LabeledDataset,
    grid: &[f64],
    config: &TrainConfig,
    criterion: BalancePoint,
) -> Result<(f64, Lambda1Report)> {
    if grid.is_empty() {
        return Err(Error::invalid("lambda1 grid is empty"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("lambda1 grid must be strictly increasing"));
    }
    let mut entries = Vec::with_capacity(grid.len());
    for &lambda1 in grid {
        let cfg = TrainConfig {
            lambda1,
            ..config.clone()
        };
        let (_, history) = train(&cfg, data)?;
        let converged = history.final_loss();
        entries.push(Lambda1Entry {
            lambda1,
            initial: history.initial,
            converged,
            initial_ratio: history.initial.reasons_to_answers(),
            converged_ratio: converged.reasons_to_answers(),
            train_accuracy: history
                .last()
                .map_or(history.initial_accuracy, |r| r.train_accuracy),
        });
    }
    let ratio = |e: &Lambda1Entry| match criterion {
        BalancePoint::Initial => e.initial_ratio,
        BalancePoint::Converged => e.converged_ratio,
    };
    let (lo, hi) = BALANCED_RATIO;
    let balanced = entries.iter().find(|e| (lo..=hi).contains(&ratio(e)));
    let (chosen, fallback) = match balanced {
        Some(e) => (e.lambda1, false),
        None => {
            let dist = |e: &Lambda1Entry| {
                let r = ratio(e);
                if r > 0.0 {
                    r.log10().abs()
                } else {
                    f64::INFINITY
                }
            };
            let mut best = &entries[0];
            for e in &entries[1..] {
                if dist(e) < dist(best) {
                    best = e;
                }
            }
            (best.lambda1, true)
        }
    };
    Ok((
        chosen,
        Lambda1Report {
            entries,
            criterion,
            fallback,
        },
    ))
}
