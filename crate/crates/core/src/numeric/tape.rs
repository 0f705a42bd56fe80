//! Reverse-mode differentiation over [`Tensor2`] values.
//!
//! A [`Tape`] records each primitive as it is evaluated. Nodes are appended in
//! evaluation order, so the node list is already topologically sorted and
//! [`Tape::backward`] is a single reverse sweep. Every primitive carries its
//! own vector-Jacobian product; the values it needs are the input and output
//! values already stored on the tape.
//!
//! ```
//! use canamrf::numeric::{ParamStore, Tape, Tensor2};
//!
//! let mut store = ParamStore::new();
//! store.insert("w", Tensor2::row_vector(&[1.0, -2.0, 3.0])).unwrap();
//!
//! let mut tape = Tape::new();
//! let w = tape.param(&store, "w").unwrap();
//! let sq = tape.mul(w, w).unwrap();
//! let loss = tape.sum(sq);
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads["w"].data(), &[2.0, -4.0, 6.0]);
//! ```

use std::fmt;
use std::sync::Arc;

use super::tensor::{self, Tensor2};
use super::{Gradients, ParamStore};
use crate::error::{Error, Result, Shape};
use crate::loss;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Vector-Jacobian product for a user-supplied primitive.
///
/// Called with the upstream gradient, the input values and the output value;
/// returns one gradient per input, each shaped like that input.
pub type VjpFn = Box<dyn Fn(&Tensor2, &[&Tensor2], &Tensor2) -> Vec<Tensor2> + Send + Sync>;

enum Op {
    Constant,
    Param(String),
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Scale(NodeId, f64),
    ScaleBy(NodeId, NodeId),
    Sigmoid(NodeId),
    SoftmaxRows(NodeId),
    Sum(NodeId),
    Reshape(NodeId),
    Recur(NodeId),
    Conv1dMeanPool {
        seq: NodeId,
        kernel: NodeId,
        bias: NodeId,
        window: usize,
        mean_window: Tensor2,
    },
    FocalLoss {
        prob: NodeId,
        label: u8,
        gamma: f64,
    },
    Custom {
        inputs: Vec<NodeId>,
        vjp: VjpFn,
    },
}

impl Op {
    fn tag(&self) -> &'static str {
        match self {
            Op::Constant => "constant",
            Op::Param(_) => "param",
            Op::MatMul(..) => "matmul",
            Op::Transpose(_) => "transpose",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddRow(..) => "add_row",
            Op::Scale(..) => "scale",
            Op::ScaleBy(..) => "scale_by",
            Op::Sigmoid(_) => "sigmoid",
            Op::SoftmaxRows(_) => "softmax_rows",
            Op::Sum(_) => "sum",
            Op::Reshape(_) => "reshape",
            Op::Recur(_) => "recur",
            Op::Conv1dMeanPool { .. } => "conv1d_meanpool",
            Op::FocalLoss { .. } => "focal_loss",
            Op::Custom { .. } => "custom",
        }
    }

    fn inputs(&self) -> Vec<NodeId> {
        match self {
            Op::Constant | Op::Param(_) => vec![],
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::AddRow(a, b)
            | Op::ScaleBy(a, b) => vec![*a, *b],
            Op::Transpose(a)
            | Op::Scale(a, _)
            | Op::Sigmoid(a)
            | Op::SoftmaxRows(a)
            | Op::Sum(a)
            | Op::Reshape(a)
            | Op::Recur(a) => vec![*a],
            Op::Conv1dMeanPool {
                seq, kernel, bias, ..
            } => vec![*seq, *kernel, *bias],
            Op::FocalLoss { prob, .. } => vec![*prob],
            Op::Custom { inputs, .. } => inputs.clone(),
        }
    }
}

struct Node {
    value: Arc<Tensor2>,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut list = f.debug_list();
        for (i, n) in self.nodes.iter().enumerate() {
            list.entry(&format_args!(
                "#{i} {} {:?} -> {}",
                n.op.tag(),
                n.op.inputs().iter().map(|id| id.0).collect::<Vec<_>>(),
                n.value.shape()
            ));
        }
        list.finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor2 {
        &self.nodes[id.0].value
    }

    /// Operation tag of a node, e.g. `"matmul"`.
    pub fn op_tag(&self, id: NodeId) -> &'static str {
        self.nodes[id.0].op.tag()
    }

    /// Ids of the nodes a node was computed from.
    pub fn inputs_of(&self, id: NodeId) -> Vec<NodeId> {
        self.nodes[id.0].op.inputs()
    }

    fn push(&mut self, value: Tensor2, op: Op) -> NodeId {
        let requires_grad = match &op {
            Op::Constant => false,
            Op::Param(_) => true,
            other => other
                .inputs()
                .iter()
                .any(|id| self.nodes[id.0].requires_grad),
        };
        self.nodes.push(Node {
            value: Arc::new(value),
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn v(&self, id: NodeId) -> &Tensor2 {
        &self.nodes[id.0].value
    }

    /// Records a value that receives no gradient.
    pub fn constant(&mut self, value: Tensor2) -> NodeId {
        self.push(value, Op::Constant)
    }

    /// Records the current value of a stored parameter.
    pub fn param(&mut self, store: &ParamStore, path: &str) -> Result<NodeId> {
        let value = store.get_shared(path)?;
        self.nodes.push(Node {
            value,
            op: Op::Param(path.to_string()),
            requires_grad: true,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = self.v(a).matmul(self.v(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let out = self.v(a).transpose();
        self.push(out, Op::Transpose(a))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = self.v(a).add(self.v(b))?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = self.v(a).sub(self.v(b))?;
        Ok(self.push(out, Op::Sub(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = self.v(a).mul(self.v(b))?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    /// Adds the `1 x c` row `b` to every row of `a`.
    pub fn add_row(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = self.v(a).add_row(self.v(b))?;
        Ok(self.push(out, Op::AddRow(a, b)))
    }

    /// Multiplies by a fixed real.
    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        let out = self.v(a).scale(s);
        self.push(out, Op::Scale(a, s))
    }

    /// Multiplies `a` by the `1 x 1` node `s`.
    pub fn scale_by(&mut self, a: NodeId, s: NodeId) -> Result<NodeId> {
        let factor = self.v(s).item().map_err(|_| {
            Error::dim("scale_by", self.v(a).shape(), self.v(s).shape())
        })?;
        let out = self.v(a).scale(factor);
        Ok(self.push(out, Op::ScaleBy(a, s)))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let out = self.v(a).map(tensor::sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let out = tensor::softmax_rows(self.v(a));
        self.push(out, Op::SoftmaxRows(a))
    }

    /// Sum of all entries as a `1 x 1` node.
    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let out = Tensor2::scalar(self.v(a).sum());
        self.push(out, Op::Sum(a))
    }

    /// Same entries in row-major order under a new shape.
    pub fn reshape(&mut self, a: NodeId, rows: usize, cols: usize) -> Result<NodeId> {
        let out = self.v(a).reshape(rows, cols)?;
        Ok(self.push(out, Op::Reshape(a)))
    }

    /// Flattens to a `1 x n` row.
    pub fn flatten(&mut self, a: NodeId) -> NodeId {
        let n = self.v(a).len();
        self.reshape(a, 1, n).expect("flatten preserves length")
    }

    /// Circulant matrix of a `1 x d` row; see [`tensor::recur`].
    pub fn recur(&mut self, v: NodeId) -> Result<NodeId> {
        let out = tensor::recur(self.v(v))?;
        Ok(self.push(out, Op::Recur(v)))
    }

    /// See [`tensor::temporal_conv1d_meanpool`].
    pub fn temporal_conv1d_meanpool(
        &mut self,
        seq: NodeId,
        kernel: NodeId,
        bias: NodeId,
    ) -> Result<NodeId> {
        let window = tensor::conv_window(self.v(seq), self.v(kernel), self.v(bias))?;
        let mean_window = tensor::mean_window(self.v(seq), window)?;
        let out = mean_window.matmul(self.v(kernel))?.add(self.v(bias))?;
        Ok(self.push(
            out,
            Op::Conv1dMeanPool {
                seq,
                kernel,
                bias,
                window,
                mean_window,
            },
        ))
    }

    /// Focal loss of a `1 x 1` probability node; see [`loss::focal_loss`].
    pub fn focal_loss(&mut self, prob: NodeId, label: u8, gamma: f64) -> Result<NodeId> {
        let p = self.v(prob).item()?;
        let out = Tensor2::scalar(loss::focal_loss(p, label, gamma)?);
        Ok(self.push(out, Op::FocalLoss { prob, label, gamma }))
    }

    /// Records an arbitrary primitive with a caller-supplied VJP.
    pub fn custom(&mut self, inputs: &[NodeId], output: Tensor2, vjp: VjpFn) -> NodeId {
        self.push(
            output,
            Op::Custom {
                inputs: inputs.to_vec(),
                vjp,
            },
        )
    }

    /// Gradients of the scalar `loss` with respect to every parameter node,
    /// summed per parameter path.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let shape = self.v(loss).shape();
        if shape != Shape(1, 1) {
            return Err(Error::Contract(format!(
                "backward needs a 1x1 loss, got {shape}"
            )));
        }
        let mut grads = Gradients::new();
        let mut adjoints: Vec<Option<Tensor2>> = Vec::new();
        adjoints.resize_with(loss.0 + 1, || None);
        adjoints[loss.0] = Some(Tensor2::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            // taking the adjoint releases it once its VJP has run
            let Some(g) = adjoints[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            if let Op::Param(path) = &node.op {
                match grads.get_mut(path) {
                    Some(acc) => acc.add_assign(&g)?,
                    None => {
                        grads.insert(path.clone(), g);
                    }
                }
                continue;
            }
            for (input, gi) in self.vjp(node, &g)? {
                if !self.nodes[input.0].requires_grad {
                    continue;
                }
                let expected = self.v(input).shape();
                if gi.shape() != expected {
                    return Err(Error::dim(node.op.tag(), expected, gi.shape()));
                }
                match &mut adjoints[input.0] {
                    Some(acc) => acc.add_assign(&gi)?,
                    slot @ None => *slot = Some(gi),
                }
            }
        }
        Ok(grads)
    }

    /// Runs [`Tape::backward`] and adds the result into `store`'s gradient slots.
    pub fn backward_into(&self, loss: NodeId, store: &mut ParamStore) -> Result<()> {
        let grads = self.backward(loss)?;
        store.accumulate(&grads)
    }

    fn wants(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn vjp(&self, node: &Node, g: &Tensor2) -> Result<Vec<(NodeId, Tensor2)>> {
        let y = node.value.as_ref();
        let mut out = Vec::with_capacity(2);
        match &node.op {
            Op::Constant | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                if self.wants(*a) {
                    out.push((*a, g.matmul(&self.v(*b).transpose())?));
                }
                if self.wants(*b) {
                    out.push((*b, self.v(*a).transpose().matmul(g)?));
                }
            }
            Op::Transpose(a) => out.push((*a, g.transpose())),
            Op::Add(a, b) => {
                out.push((*a, g.clone()));
                out.push((*b, g.clone()));
            }
            Op::Sub(a, b) => {
                out.push((*a, g.clone()));
                out.push((*b, g.scale(-1.0)));
            }
            Op::Mul(a, b) => {
                if self.wants(*a) {
                    out.push((*a, g.mul(self.v(*b))?));
                }
                if self.wants(*b) {
                    out.push((*b, g.mul(self.v(*a))?));
                }
            }
            Op::AddRow(a, b) => {
                out.push((*a, g.clone()));
                if self.wants(*b) {
                    out.push((*b, g.col_sums()));
                }
            }
            Op::Scale(a, s) => out.push((*a, g.scale(*s))),
            Op::ScaleBy(a, s) => {
                if self.wants(*a) {
                    out.push((*a, g.scale(self.v(*s).item()?)));
                }
                if self.wants(*s) {
                    out.push((*s, Tensor2::scalar(g.mul(self.v(*a))?.sum())));
                }
            }
            Op::Sigmoid(a) => {
                let local = y.map(|s| s * (1.0 - s));
                out.push((*a, g.mul(&local)?));
            }
            Op::SoftmaxRows(a) => {
                // per row: dx = y * (g - <g, y>)
                let mut dx = g.clone();
                let cols = y.cols();
                for i in 0..y.rows() {
                    let (yr, gr) = (y.row(i), g.row(i));
                    let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                    for j in 0..cols {
                        dx.set(i, j, yr[j] * (gr[j] - dot));
                    }
                }
                out.push((*a, dx));
            }
            Op::Sum(a) => {
                let s = g.item()?;
                let shape = self.v(*a).shape();
                out.push((*a, Tensor2::filled(shape.0, shape.1, s)));
            }
            Op::Reshape(a) => {
                let shape = self.v(*a).shape();
                out.push((*a, g.reshape(shape.0, shape.1)?));
            }
            Op::Recur(v) => {
                let d = g.cols();
                let mut dv = vec![0.0; d];
                for i in 0..d {
                    for j in 0..d {
                        dv[(i + j) % d] += g.get(i, j);
                    }
                }
                out.push((*v, Tensor2::row_vector(&dv)));
            }
            Op::Conv1dMeanPool {
                seq,
                kernel,
                bias,
                window,
                mean_window,
            } => {
                if self.wants(*kernel) {
                    out.push((*kernel, mean_window.transpose().matmul(g)?));
                }
                if self.wants(*bias) {
                    out.push((*bias, g.clone()));
                }
                if self.wants(*seq) {
                    let dwin = g.matmul(&self.v(*kernel).transpose())?;
                    out.push((*seq, conv_seq_grad(self.v(*seq), &dwin, *window)));
                }
            }
            Op::FocalLoss { prob, label, gamma } => {
                let p = self.v(*prob).item()?;
                let d = loss::focal_loss_grad(p, *label, *gamma)?;
                out.push((*prob, Tensor2::scalar(g.item()? * d)));
            }
            Op::Custom { inputs, vjp } => {
                let values: Vec<&Tensor2> = inputs.iter().map(|id| self.v(*id)).collect();
                let gs = vjp(g, &values, y);
                if gs.len() != inputs.len() {
                    return Err(Error::Contract(format!(
                        "custom VJP returned {} gradients for {} inputs",
                        gs.len(),
                        inputs.len()
                    )));
                }
                out.extend(inputs.iter().copied().zip(gs));
            }
        }
        Ok(out)
    }
}

/// Scatters the gradient of the mean window back onto the sequence rows.
fn conv_seq_grad(seq: &Tensor2, dwin: &Tensor2, window: usize) -> Tensor2 {
    let (t_len, f) = (seq.rows(), seq.cols());
    let left = tensor::conv_left_pad(window);
    let inv = 1.0 / t_len as f64;
    let mut dseq = Tensor2::zeros(t_len, f);
    for s in 0..window {
        let lo = s.saturating_sub(left);
        let hi = (t_len + s).saturating_sub(left).min(t_len);
        let block = &dwin.data()[s * f..(s + 1) * f];
        for t in lo..hi {
            for (c, v) in block.iter().enumerate() {
                let cur = dseq.get(t, c);
                dseq.set(t, c, cur + v * inv);
            }
        }
    }
    dseq
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(path: &str, t: Tensor2) -> ParamStore {
        let mut s = ParamStore::new();
        s.insert(path, t).unwrap();
        s
    }

    #[test]
    fn grad_of_sum_is_ones() {
        let store = store_with("w", Tensor2::from_fn(3, 4, |i, j| i as f64 - j as f64));
        let mut tape = Tape::new();
        let w = tape.param(&store, "w").unwrap();
        let l = tape.sum(w);
        let g = tape.backward(l).unwrap();
        assert_eq!(g["w"], Tensor2::ones(3, 4));
    }

    #[test]
    fn grad_of_sum_of_squares_is_twice() {
        let w0 = Tensor2::from_fn(2, 3, |i, j| 0.5 * i as f64 - 1.5 * j as f64);
        let store = store_with("w", w0.clone());
        let mut tape = Tape::new();
        let w = tape.param(&store, "w").unwrap();
        let sq = tape.mul(w, w).unwrap();
        let l = tape.sum(sq);
        let g = tape.backward(l).unwrap();
        assert_eq!(g["w"], w0.scale(2.0));
    }

    #[test]
    fn non_scalar_loss_is_contract_error() {
        let store = store_with("w", Tensor2::ones(2, 2));
        let mut tape = Tape::new();
        let w = tape.param(&store, "w").unwrap();
        assert!(matches!(tape.backward(w), Err(Error::Contract(_))));
    }

    #[test]
    fn repeated_param_binding_accumulates() {
        let store = store_with("w", Tensor2::row_vector(&[3.0]));
        let mut tape = Tape::new();
        let a = tape.param(&store, "w").unwrap();
        let b = tape.param(&store, "w").unwrap();
        let p = tape.mul(a, b).unwrap();
        let l = tape.sum(p);
        let g = tape.backward(l).unwrap();
        assert_eq!(g["w"].data(), &[6.0]);
    }

    #[test]
    fn constants_get_no_gradient_and_nodes_are_ordered() {
        let store = store_with("w", Tensor2::ones(1, 2));
        let mut tape = Tape::new();
        let c = tape.constant(Tensor2::row_vector(&[2.0, 5.0]));
        let w = tape.param(&store, "w").unwrap();
        let p = tape.mul(c, w).unwrap();
        let l = tape.sum(p);
        for i in 0..tape.len() {
            let id = NodeId(i);
            assert!(tape.inputs_of(id).iter().all(|inp| inp.0 < i));
        }
        let g = tape.backward(l).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g["w"].data(), &[2.0, 5.0]);
    }

    #[test]
    fn backward_into_accumulates() {
        let mut store = store_with("w", Tensor2::ones(1, 2));
        for _ in 0..2 {
            let mut tape = Tape::new();
            let w = tape.param(&store, "w").unwrap();
            let l = tape.sum(w);
            tape.backward_into(l, &mut store).unwrap();
        }
        assert_eq!(store.grad("w").unwrap().data(), &[2.0, 2.0]);
    }

    #[test]
    fn custom_vjp_arity_checked() {
        let store = store_with("w", Tensor2::ones(1, 1));
        let mut tape = Tape::new();
        let w = tape.param(&store, "w").unwrap();
        let y = tape.custom(&[w], Tensor2::scalar(1.0), Box::new(|_, _, _| vec![]));
        assert!(tape.backward(y).is_err());
    }
}
