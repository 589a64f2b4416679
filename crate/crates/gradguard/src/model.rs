//! The classifier: a ReLU multilayer perceptron with a softmax output.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::{Graph, NodeId, Tensor};
use crate::error::{Error, Result};

/// Hidden layer widths used throughout the experiments.
pub const HIDDEN_SIZES: [usize; 2] = [50, 30];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `[fan_in, fan_out]`
    pub weight: Tensor,
    /// `[fan_out]`
    pub bias: Tensor,
}

/// Weights and biases of every layer, input to output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Params {
    layers: Vec<Layer>,
}

impl Params {
    /// Layer sizes `[input_dim, 50, 30, output_dim]`.
    pub fn init(input_dim: usize, output_dim: usize, seed: u64) -> Result<Self> {
        Self::init_with_hidden(input_dim, &HIDDEN_SIZES, output_dim, seed)
    }

    /// Weights are uniform on `±sqrt(3 / fan_in)` (variance `1 / fan_in`),
    /// biases zero.
    pub fn init_with_hidden(
        input_dim: usize,
        hidden: &[usize],
        output_dim: usize,
        seed: u64,
    ) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::invalid("input dimension must be at least 1"));
        }
        if output_dim < 2 {
            return Err(Error::invalid(format!(
                "a classifier needs at least 2 classes, got {output_dim}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sizes: Vec<usize> = std::iter::once(input_dim)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(output_dim))
            .collect();
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = (3.0 / fan_in as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-bound..bound))
                    .collect();
                Layer {
                    weight: Tensor::new(vec![fan_in, fan_out], data).expect("sized above"),
                    bias: Tensor::zeros(&[fan_out]),
                }
            })
            .collect();
        Ok(Params { layers })
    }

    /// All-zero parameters for the given layer sizes.
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        let layers = sizes
            .windows(2)
            .map(|w| Layer {
                weight: Tensor::zeros(&[w[0], w[1]]),
                bias: Tensor::zeros(&[w[1]]),
            })
            .collect();
        Params::from_layers(layers)
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("a model needs at least one layer"));
        }
        for (i, l) in layers.iter().enumerate() {
            let ws = l.weight.shape();
            if ws.len() != 2 || l.bias.shape() != [ws[1]] {
                return Err(Error::invalid(format!(
                    "layer {i}: weight {ws:?} and bias {:?} do not fit",
                    l.bias.shape()
                )));
            }
            if let Some(next) = layers.get(i + 1) {
                if next.weight.shape().first() != Some(&ws[1]) {
                    return Err(Error::invalid(format!(
                        "layer {i} outputs {} values but layer {} expects {:?}",
                        ws[1],
                        i + 1,
                        next.weight.shape().first()
                    )));
                }
            }
            if !l.weight.is_finite() || !l.bias.is_finite() {
                return Err(Error::invalid(format!("layer {i} has non-finite values")));
            }
        }
        if layers.last().unwrap().weight.shape()[1] < 2 {
            return Err(Error::invalid("a classifier needs at least 2 classes"));
        }
        Ok(Params { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn into_layers(self) -> Vec<Layer> {
        self.layers
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_dim()];
        sizes.extend(self.layers.iter().map(|l| l.weight.shape()[1]));
        sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.shape()[0]
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().weight.shape()[1]
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    /// Sum of squares of every weight and bias.
    pub fn sum_squares(&self) -> f64 {
        self.tensors()
            .flat_map(|t| t.data().iter())
            .map(|v| v * v)
            .sum()
    }

    /// Weights and biases interleaved: `w0, b0, w1, b1, ...`.
    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias])
    }

    /// Inverse of [`Params::tensors`].
    pub fn from_tensors(tensors: Vec<Tensor>) -> Result<Self> {
        if tensors.len() % 2 != 0 {
            return Err(Error::invalid("expected weight/bias pairs"));
        }
        let mut it = tensors.into_iter();
        let mut layers = Vec::new();
        while let (Some(weight), Some(bias)) = (it.next(), it.next()) {
            layers.push(Layer { weight, bias });
        }
        Params::from_layers(layers)
    }

    /// Hex SHA-256 over layer shapes and the exact bits of every value.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for t in self.tensors() {
            for &d in t.shape() {
                h.update((d as u64).to_le_bytes());
            }
            for &v in t.data() {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        h.finalize()
            .iter()
            .take(16)
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Graph handles of the parameters, bound as variables.
#[derive(Clone, Debug)]
pub struct ParamNodes {
    pub weights: Vec<NodeId>,
    pub biases: Vec<NodeId>,
}

impl ParamNodes {
    pub fn bind(graph: &mut Graph, params: &Params) -> Self {
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in params.layers() {
            weights.push(graph.variable(l.weight.clone()));
            biases.push(graph.variable(l.bias.clone()));
        }
        ParamNodes { weights, biases }
    }

    /// Same order as [`Params::tensors`].
    pub fn all(&self) -> Vec<NodeId> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(&w, &b)| [w, b])
            .collect()
    }
}

/// Handles for one forward evaluation recorded in a graph.
#[derive(Clone, Debug)]
pub struct ModelNodes {
    pub x: NodeId,
    pub params: ParamNodes,
    pub logits: NodeId,
    pub logprobs: NodeId,
}

/// Records the network applied to `x` (an `N × D` node).
pub fn build_forward(graph: &mut Graph, params: &ParamNodes, x: NodeId) -> Result<ModelNodes> {
    let last = params.weights.len() - 1;
    let mut h = x;
    for (i, (&w, &b)) in params.weights.iter().zip(&params.biases).enumerate() {
        let z = graph.matmul(h, w)?;
        let z = graph.add_row(z, b)?;
        h = if i == last { z } else { graph.relu(z)? };
    }
    let logprobs = graph.log_softmax(h)?;
    Ok(ModelNodes {
        x,
        params: params.clone(),
        logits: h,
        logprobs,
    })
}

/// Records `∂/∂x Σ_k log ŷ_k` for every row of `x`.
///
/// Rows do not interact in the network, so differentiating the batch total
/// gives each row's own gradient. The result is a node and can be used inside
/// a loss that is differentiated again.
pub fn input_logprob_gradient_node(graph: &mut Graph, nodes: &ModelNodes) -> Result<NodeId> {
    let total = graph.sum(nodes.logprobs)?;
    Ok(graph.grad(total, &[nodes.x])?[0])
}

/// Output of [`forward`].
#[derive(Clone, Debug)]
pub struct ForwardResult {
    pub probs: Tensor,
    pub logprobs: Tensor,
    pub graph: Graph,
    pub nodes: ModelNodes,
}

fn check_input(params: &Params, x: &Tensor) -> Result<()> {
    if x.shape().len() != 2 || x.cols() != params.input_dim() {
        return Err(Error::ShapeMismatch {
            op: "forward",
            shapes: vec![x.shape().to_vec(), vec![params.input_dim()]],
        });
    }
    Ok(())
}

pub fn forward(params: &Params, x: &Tensor) -> Result<ForwardResult> {
    check_input(params, x)?;
    let mut graph = Graph::new();
    let pn = ParamNodes::bind(&mut graph, params);
    let xn = graph.constant(x.clone());
    let nodes = build_forward(&mut graph, &pn, xn)?;
    let logprobs = graph.value(nodes.logprobs).clone();
    let probs = logprobs.map(f64::exp);
    Ok(ForwardResult {
        probs,
        logprobs,
        graph,
        nodes,
    })
}

/// Row `n` is the gradient of `Σ_k log ŷ_nk` with respect to `x_n`.
pub fn input_logprob_gradients(params: &Params, x: &Tensor) -> Result<Tensor> {
    let mut fr = forward(params, x)?;
    let g = input_logprob_gradient_node(&mut fr.graph, &fr.nodes)?;
    Ok(fr.graph.value(g).clone())
}

/// Index of the largest entry of each row; ties go to the lowest index.
pub fn argmax_rows(t: &Tensor) -> Vec<usize> {
    (0..t.rows())
        .map(|i| {
            let row = t.row(i);
            let mut best = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

pub fn predict(params: &Params, x: &Tensor) -> Result<Vec<usize>> {
    Ok(argmax_rows(&forward(params, x)?.probs))
}

/// Fraction of `predicted` equal to `labels`.
pub fn accuracy(predicted: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = predicted.iter().zip(labels).filter(|(a, b)| a == b).count();
    hits as f64 / labels.len() as f64
}

/// Anything that maps a batch of inputs to class probabilities.
pub trait Classifier {
    fn input_dim(&self) -> usize;
    fn num_classes(&self) -> usize;
    fn predict_proba(&self, x: &Tensor) -> Result<Tensor>;
}

impl Classifier for Params {
    fn input_dim(&self) -> usize {
        Params::input_dim(self)
    }

    fn num_classes(&self) -> usize {
        self.output_dim()
    }

    fn predict_proba(&self, x: &Tensor) -> Result<Tensor> {
        Ok(forward(self, x)?.probs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_and_shaped() {
        let a = Params::init(75, 2, 0).unwrap();
        let b = Params::init(75, 2, 0).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.fingerprint(), b.fingerprint());
        let shapes: Vec<Vec<usize>> = a
            .layers()
            .iter()
            .map(|l| l.weight.shape().to_vec())
            .collect();
        assert_eq!(shapes, vec![vec![75, 50], vec![50, 30], vec![30, 2]]);
        assert!(a.layers().iter().all(|l| l.bias.data().iter().all(|&v| v == 0.0)));
        assert_ne!(a, Params::init(75, 2, 1).unwrap());
    }

    #[test]
    fn single_class_rejected() {
        assert!(Params::init(1, 1, 0).is_err());
    }

    #[test]
    fn zero_weights_give_uniform_probs_and_label_zero() {
        let p = Params::zeros(&[4, 50, 30, 3]).unwrap();
        let x = Tensor::from_rows(&[vec![1., 2., 3., 4.], vec![-1., 0., 5., 2.]]).unwrap();
        let fr = forward(&p, &x).unwrap();
        for v in fr.probs.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(predict(&p, &x).unwrap(), vec![0, 0]);
        let g = input_logprob_gradients(&p, &x).unwrap();
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn argmax_picks_largest() {
        let t = Tensor::from_rows(&[vec![0.1, 0.9], vec![0.5, 0.5]]).unwrap();
        assert_eq!(argmax_rows(&t), vec![1, 0]);
    }

    #[test]
    fn rows_are_stochastic() {
        let p = Params::init(6, 3, 7).unwrap();
        let x = Tensor::from_rows(&[vec![0.3, -1.0, 2.0, 0.0, 1.5, -0.2]]).unwrap();
        let fr = forward(&p, &x).unwrap();
        let s: f64 = fr.probs.row(0).iter().sum();
        assert!((s - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn wrong_input_width_rejected() {
        let p = Params::init(6, 3, 7).unwrap();
        let x = Tensor::zeros(&[2, 5]);
        assert!(matches!(forward(&p, &x), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn tensors_round_trip() {
        let p = Params::init(5, 2, 3).unwrap();
        let q = Params::from_tensors(p.tensors().cloned().collect()).unwrap();
        assert_eq!(p, q);
    }
}
