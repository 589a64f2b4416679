use super::graph::{Graph, NodeId};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Builds a scalar-rooted computation from leaf nodes holding the point.
pub trait GraphBuilder {
    fn build(&self, graph: &mut Graph, inputs: &[NodeId]) -> Result<NodeId>;
}

impl<F> GraphBuilder for F
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId>,
{
    fn build(&self, graph: &mut Graph, inputs: &[NodeId]) -> Result<NodeId> {
        self(graph, inputs)
    }
}

/// Evaluates the builder at `point` and returns the scalar root value.
pub fn evaluate(builder: &impl GraphBuilder, point: &[Tensor]) -> Result<f64> {
    let mut g = Graph::new();
    let inputs: Vec<NodeId> = point.iter().map(|t| g.variable(t.clone())).collect();
    let root = builder.build(&mut g, &inputs)?;
    let value = g.value(root);
    if !value.is_scalar() {
        return Err(Error::NonScalarRoot(value.shape().to_vec()));
    }
    Ok(value.item())
}

/// Analytic gradient of the builder's root at `point`.
pub fn analytic_gradient(builder: &impl GraphBuilder, point: &[Tensor]) -> Result<Vec<Tensor>> {
    let mut g = Graph::new();
    let inputs: Vec<NodeId> = point.iter().map(|t| g.variable(t.clone())).collect();
    let root = builder.build(&mut g, &inputs)?;
    g.gradient(root, &inputs)
}

/// Central-difference gradient of the builder's root at `point`.
///
/// Component indices in errors count through all tensors of `point` in order.
pub fn numeric_gradient(
    builder: &impl GraphBuilder,
    point: &[Tensor],
    step: f64,
) -> Result<Vec<Tensor>> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::invalid(format!("step must be positive, got {step}")));
    }
    let mut out = Vec::with_capacity(point.len());
    let mut offset = 0;
    let mut work: Vec<Tensor> = point.to_vec();
    for (t, base) in point.iter().enumerate() {
        let mut grad = vec![0.0; base.len()];
        for (j, slot) in grad.iter_mut().enumerate() {
            let mut eval_at = |delta: f64| -> Result<f64> {
                let mut data = base.data().to_vec();
                data[j] += delta;
                work[t] = Tensor::new(base.shape().to_vec(), data)?;
                let v = evaluate(builder, &work)?;
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        component: offset + j,
                        context: format!("forward value {v} at perturbation {delta:+e}"),
                    });
                }
                Ok(v)
            };
            let plus = eval_at(step)?;
            let minus = eval_at(-step)?;
            *slot = (plus - minus) / (2.0 * step);
        }
        work[t] = base.clone();
        offset += base.len();
        out.push(Tensor::new(base.shape().to_vec(), grad)?);
    }
    Ok(out)
}

/// `|a - b| / max(|a|, |b|, 1e-8)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Largest componentwise [`relative_error`] between two gradient lists.
pub fn max_relative_error(analytic: &[Tensor], numeric: &[Tensor]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .flat_map(|(a, n)| a.data().iter().zip(n.data()))
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max)
}

/// Compares the analytic gradient against central differences and returns
/// the maximum relative error over all components.
pub fn check_grad(builder: &impl GraphBuilder, point: &[Tensor], step: f64) -> Result<f64> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::invalid(format!("step must be positive, got {step}")));
    }
    let analytic = analytic_gradient(builder, point)?;
    let numeric = numeric_gradient(builder, point, step)?;
    Ok(max_relative_error(&analytic, &numeric))
}
