//! Straight-line reference implementations shared by the integration tests.
//! Nothing here touches the graph.
#![allow(dead_code)]

use gradguard::model::Params;
use gradguard::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_matrix(rows: usize, cols: usize, lo: f64, hi: f64, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

pub fn random_binary(rows: usize, cols: usize, p: f64, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::matrix(
        rows,
        cols,
        (0..rows * cols).map(|_| if rng.random_bool(p) { 1.0 } else { 0.0 }).collect(),
    )
    .unwrap()
}

/// Log-probabilities of one input row, computed with plain loops.
pub fn plain_logprobs(params: &Params, x: &[f64]) -> Vec<f64> {
    let layers = params.layers();
    let mut h = x.to_vec();
    for (i, l) in layers.iter().enumerate() {
        let (fan_in, fan_out) = (l.weight.rows(), l.weight.cols());
        let mut z = l.bias.data().to_vec();
        for (o, zo) in z.iter_mut().enumerate().take(fan_out) {
            for (k, hk) in h.iter().enumerate().take(fan_in) {
                *zo += hk * l.weight.get(k, o);
            }
        }
        if i + 1 < layers.len() {
            z.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        h = z;
    }
    let max = h.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + h.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    h.iter().map(|v| v - lse).collect()
}

pub fn plain_probs(params: &Params, x: &[f64]) -> Vec<f64> {
    plain_logprobs(params, x).into_iter().map(f64::exp).collect()
}

pub fn plain_argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = k;
        }
    }
    best
}

/// `Σ_n Σ_k −y_nk log ŷ_nk`.
pub fn plain_cross_entropy(params: &Params, x: &Tensor, y: &Tensor) -> f64 {
    (0..x.rows())
        .map(|n| {
            let lp = plain_logprobs(params, x.row(n));
            -lp.iter().zip(y.row(n)).map(|(l, y)| l * y).sum::<f64>()
        })
        .sum()
}

/// Central-difference gradient of `Σ_k log ŷ_k` at one input row, step `h`.
pub fn plain_input_gradient(params: &Params, x: &[f64], h: f64) -> Vec<f64> {
    let f = |x: &[f64]| plain_logprobs(params, x).iter().sum::<f64>();
    (0..x.len())
        .map(|j| {
            let mut a = x.to_vec();
            let mut b = x.to_vec();
            a[j] += h;
            b[j] -= h;
            (f(&a) - f(&b)) / (2.0 * h)
        })
        .collect()
}

/// Analytic `∂/∂x Σ_k log ŷ_k` for one row, by hand-written backprop through
/// the MLP. With `s = Σ_k log ŷ_k = Σ_k z_k − K·lse(z)`, `∂s/∂z = 1 − K·ŷ`.
pub fn plain_input_gradient_exact(params: &Params, x: &[f64]) -> Vec<f64> {
    let layers = params.layers();
    let mut acts = vec![x.to_vec()];
    let mut pre = Vec::new();
    for (i, l) in layers.iter().enumerate() {
        let h = acts.last().unwrap();
        let mut z = l.bias.data().to_vec();
        for (o, zo) in z.iter_mut().enumerate() {
            for (k, hk) in h.iter().enumerate() {
                *zo += hk * l.weight.get(k, o);
            }
        }
        pre.push(z.clone());
        if i + 1 < layers.len() {
            z.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        acts.push(z);
    }
    let logits = acts.last().unwrap();
    let k = logits.len() as f64;
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let denom: f64 = logits.iter().map(|v| (v - max).exp()).sum();
    let mut delta: Vec<f64> = logits.iter().map(|v| 1.0 - k * (v - max).exp() / denom).collect();
    for (i, l) in layers.iter().enumerate().rev() {
        let mut prev = vec![0.0; l.weight.rows()];
        for (r, p) in prev.iter_mut().enumerate() {
            for (o, d) in delta.iter().enumerate() {
                *p += l.weight.get(r, o) * d;
            }
        }
        if i > 0 {
            for (p, z) in prev.iter_mut().zip(&pre[i - 1]) {
                if *z <= 0.0 {
                    *p = 0.0;
                }
            }
        }
        delta = prev;
    }
    delta
}
