use std::fmt;
use std::sync::Arc;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node of one [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "%{}", self.0)
    }
}

/// Operation tag of a recorded node.
#[derive(Clone, Debug)]
pub enum Op {
    /// Differentiable input.
    Variable,
    /// Fixed input such as data, targets or the seed of a backward pass.
    Constant,
    MatMul,
    Transpose,
    Add,
    Sub,
    Mul,
    Scale(f64),
    Relu,
    /// Multiplies elementwise by a fixed mask. The mask is data, not a node.
    Select(Arc<Tensor>),
    Log,
    Exp,
    Recip,
    Square,
    /// Sum of all elements, giving a scalar.
    Sum,
    /// Row-wise log-softmax (the exp-normalize step of a classifier).
    LogSoftmax,
    /// Matrix plus a row vector added to every row.
    AddRow,
    /// Column sums: `[n, m] -> [m]`.
    SumRows,
    /// Per-row sums: `[n, m] -> [n]`.
    RowSums,
    /// `[m] -> [n, m]`.
    BroadcastRows(usize),
    /// `[n] -> [n, m]`.
    BroadcastCols(usize),
    /// `[] -> shape`.
    BroadcastScalar(Vec<usize>),
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Variable => "variable",
            Op::Constant => "constant",
            Op::MatMul => "matmul",
            Op::Transpose => "transpose",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "multiply",
            Op::Scale(_) => "scale",
            Op::Relu => "relu",
            Op::Select(_) => "select",
            Op::Log => "log",
            Op::Exp => "exp",
            Op::Recip => "recip",
            Op::Square => "square",
            Op::Sum => "sum",
            Op::LogSoftmax => "exp-normalize",
            Op::AddRow => "add-row",
            Op::SumRows => "sum-rows",
            Op::RowSums => "row-sums",
            Op::BroadcastRows(_) => "broadcast-rows",
            Op::BroadcastCols(_) => "broadcast-cols",
            Op::BroadcastScalar(_) => "broadcast-scalar",
        }
    }

    fn arity(&self) -> usize {
        match self {
            Op::Variable | Op::Constant => 0,
            Op::MatMul | Op::Add | Op::Sub | Op::Mul | Op::AddRow => 2,
            _ => 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Node {
    pub op: Op,
    pub parents: Vec<NodeId>,
    pub value: Tensor,
}

/// Append-only record of a computation.
///
/// Every node's parents have smaller ids than the node itself, so the
/// insertion order is a topological order. Gradients are themselves recorded
/// as nodes, which is what makes a second differentiation pass possible.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> Result<&Node> {
        self.nodes.get(id.0).ok_or(Error::UnknownNode(id.0))
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Ids of all nodes created with [`Graph::variable`].
    pub fn variable_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| matches!(n.op, Op::Variable))
            .map(|(i, _)| NodeId(i))
    }

    pub fn variable(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Variable, vec![], value)
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Constant, vec![], value)
    }

    fn push(&mut self, op: Op, parents: Vec<NodeId>, value: Tensor) -> NodeId {
        self.nodes.push(Node { op, parents, value });
        NodeId(self.nodes.len() - 1)
    }

    /// Records `op` applied to `inputs` and evaluates it.
    pub fn record(&mut self, op: Op, inputs: &[NodeId]) -> Result<NodeId> {
        if inputs.len() != op.arity() {
            return Err(Error::invalid(format!(
                "`{}` takes {} inputs, got {}",
                op.name(),
                op.arity(),
                inputs.len()
            )));
        }
        for &id in inputs {
            self.node(id)?;
        }
        let shapes: Vec<Vec<usize>> = inputs
            .iter()
            .map(|&i| self.value(i).shape().to_vec())
            .collect();
        let mismatch = || Error::ShapeMismatch {
            op: op.name(),
            shapes: shapes.clone(),
        };
        let rank = |i: usize| shapes[i].len();

        let value = match &op {
            Op::Variable | Op::Constant => unreachable!("leaves have arity 0"),
            Op::MatMul => {
                if rank(0) != 2 || rank(1) != 2 || shapes[0][1] != shapes[1][0] {
                    return Err(mismatch());
                }
                self.value(inputs[0]).matmul(self.value(inputs[1]))
            }
            Op::Transpose => {
                if rank(0) != 2 {
                    return Err(mismatch());
                }
                self.value(inputs[0]).transpose()
            }
            Op::Add | Op::Sub | Op::Mul => {
                if shapes[0] != shapes[1] {
                    return Err(mismatch());
                }
                let (a, b) = (self.value(inputs[0]), self.value(inputs[1]));
                match op {
                    Op::Add => a.zip_map(b, |x, y| x + y),
                    Op::Sub => a.zip_map(b, |x, y| x - y),
                    _ => a.zip_map(b, |x, y| x * y),
                }
            }
            Op::Scale(c) => {
                let c = *c;
                self.value(inputs[0]).map(|v| v * c)
            }
            Op::Relu => self.value(inputs[0]).map(|v| if v > 0.0 { v } else { 0.0 }),
            Op::Select(mask) => {
                if mask.shape() != shapes[0].as_slice() {
                    let mut s = shapes.clone();
                    s.push(mask.shape().to_vec());
                    return Err(Error::ShapeMismatch {
                        op: "select",
                        shapes: s,
                    });
                }
                self.value(inputs[0]).zip_map(mask, |x, m| x * m)
            }
            Op::Log => self.value(inputs[0]).map(f64::ln),
            Op::Exp => self.value(inputs[0]).map(f64::exp),
            Op::Recip => self.value(inputs[0]).map(f64::recip),
            Op::Square => self.value(inputs[0]).map(|v| v * v),
            Op::Sum => Tensor::scalar(self.value(inputs[0]).sum()),
            Op::LogSoftmax => {
                if rank(0) != 2 || shapes[0][1] == 0 {
                    return Err(mismatch());
                }
                self.value(inputs[0]).log_softmax_rows()
            }
            Op::AddRow => {
                if rank(0) != 2 || rank(1) != 1 || shapes[0][1] != shapes[1][0] {
                    return Err(mismatch());
                }
                self.value(inputs[0]).add_row(self.value(inputs[1]))
            }
            Op::SumRows => {
                if rank(0) != 2 {
                    return Err(mismatch());
                }
                self.value(inputs[0]).sum_rows()
            }
            Op::RowSums => {
                if rank(0) != 2 {
                    return Err(mismatch());
                }
                self.value(inputs[0]).row_sums()
            }
            Op::BroadcastRows(n) => {
                if rank(0) != 1 {
                    return Err(mismatch());
                }
                self.value(inputs[0]).broadcast_rows(*n)
            }
            Op::BroadcastCols(m) => {
                if rank(0) != 1 {
                    return Err(mismatch());
                }
                self.value(inputs[0]).broadcast_cols(*m)
            }
            Op::BroadcastScalar(shape) => {
                if rank(0) != 0 {
                    return Err(mismatch());
                }
                Tensor::full(shape, self.value(inputs[0]).item())
            }
        };
        Ok(self.push(op, inputs.to_vec(), value))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::MatMul, &[a, b])
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Transpose, &[a])
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::Add, &[a, b])
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::Mul, &[a, b])
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        self.record(Op::Scale(c), &[a])
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Relu, &[a])
    }

    pub fn select(&mut self, a: NodeId, mask: Arc<Tensor>) -> Result<NodeId> {
        self.record(Op::Select(mask), &[a])
    }

    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Log, &[a])
    }

    pub fn exp(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Exp, &[a])
    }

    pub fn recip(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Recip, &[a])
    }

    pub fn square(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Square, &[a])
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Sum, &[a])
    }

    pub fn log_softmax(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::LogSoftmax, &[a])
    }

    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> Result<NodeId> {
        self.record(Op::AddRow, &[a, row])
    }

    pub fn sum_rows(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::SumRows, &[a])
    }

    pub fn row_sums(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::RowSums, &[a])
    }

    pub fn broadcast_rows(&mut self, a: NodeId, rows: usize) -> Result<NodeId> {
        self.record(Op::BroadcastRows(rows), &[a])
    }

    pub fn broadcast_cols(&mut self, a: NodeId, cols: usize) -> Result<NodeId> {
        self.record(Op::BroadcastCols(cols), &[a])
    }

    pub fn broadcast_scalar(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        self.record(Op::BroadcastScalar(shape.to_vec()), &[a])
    }

    /// Gradients of the scalar `root` with respect to each node in `wrt`,
    /// recorded as nodes of this graph.
    ///
    /// Because the backward pass is built from ordinary recorded operations,
    /// the returned nodes can feed into a further loss and be differentiated
    /// again. ReLU gates are treated as constant masks, so second derivatives
    /// through a ReLU are zero.
    ///
    /// A `wrt` node that does not influence `root` gets a zero constant.
    pub fn grad(&mut self, root: NodeId, wrt: &[NodeId]) -> Result<Vec<NodeId>> {
        let root_shape = self.node(root)?.value.shape().to_vec();
        if !root_shape.is_empty() {
            return Err(Error::NonScalarRoot(root_shape));
        }
        for &w in wrt {
            self.node(w)?;
        }

        let end = root.0 + 1;
        // depends[i]: node i is a function of some wrt node.
        let mut depends = vec![false; end];
        for &w in wrt {
            if w.0 < end {
                depends[w.0] = true;
            }
        }
        for i in 0..end {
            if !depends[i] && self.nodes[i].parents.iter().any(|p| depends[p.0]) {
                depends[i] = true;
            }
        }
        // reached[i]: root is a function of node i (restricted to depends).
        let mut reached = vec![false; end];
        reached[root.0] = depends[root.0];
        for i in (0..end).rev() {
            if reached[i] {
                for p in &self.nodes[i].parents {
                    if depends[p.0] {
                        reached[p.0] = true;
                    }
                }
            }
        }

        let mut adjoint: Vec<Option<NodeId>> = vec![None; end];
        if reached[root.0] {
            adjoint[root.0] = Some(self.constant(Tensor::scalar(1.0)));
        }
        for i in (0..end).rev() {
            if !reached[i] {
                continue;
            }
            let Some(g) = adjoint[i] else { continue };
            let parents = self.nodes[i].parents.clone();
            for (slot, &p) in parents.iter().enumerate() {
                if !reached[p.0] {
                    continue;
                }
                let contrib = self.vjp(NodeId(i), slot, g)?;
                adjoint[p.0] = Some(match adjoint[p.0] {
                    None => contrib,
                    Some(acc) => self.add(acc, contrib)?,
                });
            }
        }

        wrt.iter()
            .map(|&w| match adjoint.get(w.0).copied().flatten() {
                Some(g) => Ok(g),
                None => {
                    let shape = self.value(w).shape().to_vec();
                    Ok(self.constant(Tensor::zeros(&shape)))
                }
            })
            .collect()
    }

    /// Like [`Graph::grad`] but returns the gradient values.
    pub fn gradient(&mut self, root: NodeId, wrt: &[NodeId]) -> Result<Vec<Tensor>> {
        let ids = self.grad(root, wrt)?;
        Ok(ids.into_iter().map(|id| self.value(id).clone()).collect())
    }

    /// Vector-Jacobian product of node `out` with respect to its parent in
    /// position `slot`, given the upstream adjoint `g`.
    fn vjp(&mut self, out: NodeId, slot: usize, g: NodeId) -> Result<NodeId> {
        let node = &self.nodes[out.0];
        let op = node.op.clone();
        let parents = node.parents.clone();
        let a = parents[0];
        match op {
            Op::Variable | Op::Constant => unreachable!("leaves have no parents"),
            Op::MatMul => {
                let b = parents[1];
                if slot == 0 {
                    let bt = self.transpose(b)?;
                    self.matmul(g, bt)
                } else {
                    let at = self.transpose(a)?;
                    self.matmul(at, g)
                }
            }
            Op::Transpose => self.transpose(g),
            Op::Add => Ok(g),
            Op::Sub => {
                if slot == 0 {
                    Ok(g)
                } else {
                    self.scale(g, -1.0)
                }
            }
            Op::Mul => {
                let other = parents[1 - slot];
                self.mul(g, other)
            }
            Op::Scale(c) => self.scale(g, c),
            Op::Relu => {
                // Subgradient 0 at exactly 0.
                let gate = self.value(a).map(|v| if v > 0.0 { 1.0 } else { 0.0 });
                self.select(g, Arc::new(gate))
            }
            Op::Select(mask) => self.select(g, mask),
            Op::Log => {
                let r = self.recip(a)?;
                self.mul(g, r)
            }
            Op::Exp => self.mul(g, out),
            Op::Recip => {
                let sq = self.square(out)?;
                let t = self.mul(g, sq)?;
                self.scale(t, -1.0)
            }
            Op::Square => {
                let t = self.mul(g, a)?;
                self.scale(t, 2.0)
            }
            Op::Sum => {
                let shape = self.value(a).shape().to_vec();
                self.broadcast_scalar(g, &shape)
            }
            Op::BroadcastScalar(_) => self.sum(g),
            Op::LogSoftmax => {
                // d/dx = g - softmax(x) * rowsum(g)
                let cols = self.value(a).cols();
                let probs = self.exp(out)?;
                let s = self.row_sums(g)?;
                let s = self.broadcast_cols(s, cols)?;
                let t = self.mul(probs, s)?;
                self.sub(g, t)
            }
            Op::AddRow => {
                if slot == 0 {
                    Ok(g)
                } else {
                    self.sum_rows(g)
                }
            }
            Op::SumRows => {
                let rows = self.value(a).rows();
                self.broadcast_rows(g, rows)
            }
            Op::BroadcastRows(_) => self.sum_rows(g),
            Op::RowSums => {
                let cols = self.value(a).cols();
                self.broadcast_cols(g, cols)
            }
            Op::BroadcastCols(_) => self.row_sums(g),
        }
    }
}
