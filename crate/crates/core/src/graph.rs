//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! Nodes are evaluated eagerly as they are appended, so the node list is
//! always in topological order. [`Graph::grad`] writes the gradient
//! computation back into the same graph as ordinary nodes; with
//! `create_graph` set those nodes stay differentiable, which is what makes
//! gradient penalties (a loss on an input gradient) trainable.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    /// Elementwise `a / b`, with `x / 0 = 0`.
    SafeDiv(NodeId, NodeId),
    Scale(NodeId, T),
    AddScalar(NodeId, T),
    /// `n x m` plus a `1 x m` row broadcast over rows.
    AddRow(NodeId, NodeId),
    /// `n x m -> 1 x m`
    SumRows(NodeId),
    /// `1 x m -> n x m`
    BroadcastRows(NodeId),
    /// `n x m -> n x 1`
    SumCols(NodeId),
    /// `n x 1 -> n x m`
    BroadcastCols(NodeId),
    Sum(NodeId),
    /// `1 x 1 -> rows x cols`
    BroadcastScalar(NodeId),
    LeakyRelu(NodeId, T),
    Sqrt(NodeId),
    Exp(NodeId),
    LogSoftmax(NodeId),
    ConcatCols(NodeId, NodeId),
    SliceCols(NodeId, usize),
    /// Zero-pads columns so the input starts at column `.1`.
    PadCols(NodeId, usize),
}

impl<T> Op<T> {
    fn parents(&self) -> Vec<NodeId> {
        use Op::*;
        match *self {
            Leaf => vec![],
            MatMul(a, b) | Add(a, b) | Sub(a, b) | Mul(a, b) | SafeDiv(a, b) | AddRow(a, b) | ConcatCols(a, b) => {
                vec![a, b]
            }
            Transpose(a)
            | Scale(a, _)
            | AddScalar(a, _)
            | SumRows(a)
            | BroadcastRows(a)
            | SumCols(a)
            | BroadcastCols(a)
            | Sum(a)
            | BroadcastScalar(a)
            | LeakyRelu(a, _)
            | Sqrt(a)
            | Exp(a)
            | LogSoftmax(a)
            | SliceCols(a, _)
            | PadCols(a, _) => vec![a],
        }
    }

    fn name(&self) -> &'static str {
        use Op::*;
        match self {
            Leaf => "leaf",
            MatMul(..) => "matmul",
            Transpose(..) => "transpose",
            Add(..) => "add",
            Sub(..) => "sub",
            Mul(..) => "mul",
            SafeDiv(..) => "div",
            Scale(..) => "scale",
            AddScalar(..) => "add_scalar",
            AddRow(..) => "add_row",
            SumRows(..) => "sum_rows",
            BroadcastRows(..) => "broadcast_rows",
            SumCols(..) => "sum_cols",
            BroadcastCols(..) => "broadcast_cols",
            Sum(..) => "sum",
            BroadcastScalar(..) => "broadcast_scalar",
            LeakyRelu(..) => "leaky_relu",
            Sqrt(..) => "sqrt",
            Exp(..) => "exp",
            LogSoftmax(..) => "log_softmax",
            ConcatCols(..) => "concat_cols",
            SliceCols(..) => "slice_cols",
            PadCols(..) => "pad_cols",
        }
    }
}

#[derive(Debug)]
struct Node<T> {
    op: Op<T>,
    value: Tensor<T>,
    requires_grad: bool,
}

#[derive(Debug)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    recording: bool,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            recording: true,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Parents of `id`; always earlier in the node list.
    pub fn parents(&self, id: NodeId) -> Vec<NodeId> {
        self.nodes[id.0].op.parents()
    }

    pub fn op_name(&self, id: NodeId) -> &'static str {
        self.nodes[id.0].op.name()
    }

    /// A differentiable input.
    pub fn variable(&mut self, value: Tensor<T>) -> NodeId {
        self.push_raw(Op::Leaf, value, true)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> NodeId {
        self.push_raw(Op::Leaf, value, false)
    }

    fn push_raw(&mut self, op: Op<T>, value: Tensor<T>, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn check(&self, id: NodeId) -> Result<()> {
        if id.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "node {} not in graph of {} nodes",
                id.0,
                self.nodes.len()
            )))
        }
    }

    fn push(&mut self, op: Op<T>, value: Tensor<T>) -> Result<NodeId> {
        if !value.is_finite() {
            return Err(Error::NonFinite(op.name().to_string()));
        }
        let requires_grad = self.recording && op.parents().iter().any(|p| self.nodes[p.0].requires_grad);
        Ok(self.push_raw(op, value, requires_grad))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check(a)?;
        self.check(b)?;
        let v = self.value(a).matmul(self.value(b))?;
        self.push(Op::MatMul(a, b), v)
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        self.check(a)?;
        let v = self.value(a).transpose();
        self.push(Op::Transpose(a), v)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check(a)?;
        self.check(b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        self.push(Op::Add(a, b), v)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check(a)?;
        self.check(b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y)?;
        self.push(Op::Sub(a, b), v)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check(a)?;
        self.check(b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        self.push(Op::Mul(a, b), v)
    }

    /// Elementwise division where a zero denominator yields zero.
    pub fn safe_div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check(a)?;
        self.check(b)?;
        let v = self.value(a).zip_map(self.value(b), safe_div)?;
        self.push(Op::SafeDiv(a, b), v)
    }

    pub fn scale(&mut self, a: NodeId, k: T) -> Result<NodeId> {
        self.check(a)?;
        let v = self.value(a).map(|x| x * k);
        self.push(Op::Scale(a, k), v)
    }

    pub fn add_scalar(&mut self, a: NodeId, k: T) -> Result<NodeId> {
        self.check(a)?;
        let v = self.value(a).map(|x| x + k);
        self.push(Op::AddScalar(a, k), v)
    }

    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> Result<NodeId> {
        self.check(a)?;
        self.check(row)?;
        let (av, rv) = (self.value(a), self.value(row));
        if rv.rows() != 1 || rv.cols() != av.cols() {
            return Err(Error::Shape(format!(
                "add_row [{}, {}] + [{}, {}]",
                av.rows(),
                av.cols(),
                rv.rows(),
                rv.cols()
            )));
        }
        let v = Tensor::from_fn(av.rows(), av.cols(), |r, c| av.get(r, c) + rv.get(0, c));
        self.push(Op::AddRow(a, row), v)
    }

    pub fn sum_rows(&mut self, a: NodeId) -> Result<NodeId> {
        self.check(a)?;
        let v = self.value(a).sum_rows();
        self.push(Op::SumRows(a), v)
    }

    pub fn broadcast_rows(&mut self, a: NodeId, rows: usize) -> Result<NodeId> {
        self.check(a)?;
        let av = self.value(a);
        if av.rows() != 1 {
            return Err(Error::Shape("broadcast_rows needs a single row".into()));
        }
        let v = Tensor::from_fn(rows, av.cols(), |_, c| av.get(0, c));
        self.push(Op::BroadcastRows(a), v)
    }

    pub fn sum_cols(&mut self, a: NodeId) -> Result<NodeId> {
        self.check(a)?;
        let v = self.value(a).sum_cols();
        self.push(Op::SumCols(a), v)
    }

    pub fn broadcast_cols(&mut self, a: NodeId, cols: usize) -> Result<NodeId> {
        self.check(a)?;
        let av = self.value(a);
        if av.cols() != 1 {
            return Err(Error::Shape("broadcast_cols needs a single column".into()));
        }
        let v = Tensor::from_fn(av.rows(), cols, |r, _| av.get(r, 0));
        self.push(Op::BroadcastCols(a), v)
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        self.check(a)?;
        let v = Tensor::scalar(self.value(a).sum());
        self.push(Op::Sum(a), v)
    }

    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        let n = T::count(self.value(a).len());
        let s = self.sum(a)?;
        self.scale(s, T::one() / n)
    }

    pub fn broadcast_scalar(&mut self, a: NodeId, rows: usize, cols: usize) -> Result<NodeId> {
        self.check(a)?;
        let x = self.value(a).item()?;
        self.push(Op::BroadcastScalar(a), Tensor::full(rows, cols, x))
    }

    pub fn leaky_relu(&mut self, a: NodeId, slope: T) -> Result<NodeId> {
        self.check(a)?;
        let v = self.value(a).map(|x| if x > T::zero() { x } else { x * slope });
        self.push(Op::LeakyRelu(a, slope), v)
    }

    pub fn sqrt(&mut self, a: NodeId) -> Result<NodeId> {
        self.check(a)?;
        if self.value(a).data().iter().any(|&x| x < T::zero()) {
            return Err(Error::NonFinite("sqrt of a negative value".into()));
        }
        let v = self.value(a).map(T::sqrt);
        self.push(Op::Sqrt(a), v)
    }

    pub fn exp(&mut self, a: NodeId) -> Result<NodeId> {
        self.check(a)?;
        let v = self.value(a).map(T::exp);
        self.push(Op::Exp(a), v)
    }

    /// Row-wise log-softmax.
    pub fn log_softmax(&mut self, a: NodeId) -> Result<NodeId> {
        self.check(a)?;
        let v = log_softmax_rows(self.value(a));
        self.push(Op::LogSoftmax(a), v)
    }

    pub fn square(&mut self, a: NodeId) -> Result<NodeId> {
        self.mul(a, a)
    }

    /// Per-row Euclidean norm, `n x m -> n x 1`.
    pub fn row_norm(&mut self, a: NodeId) -> Result<NodeId> {
        let sq = self.square(a)?;
        let s = self.sum_cols(sq)?;
        self.sqrt(s)
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check(a)?;
        self.check(b)?;
        let v = self.value(a).concat_cols(self.value(b))?;
        self.push(Op::ConcatCols(a, b), v)
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        self.check(a)?;
        let v = self.value(a).slice_cols(start, len)?;
        self.push(Op::SliceCols(a, start), v)
    }

    fn pad_cols(&mut self, a: NodeId, start: usize, total: usize) -> Result<NodeId> {
        let av = self.value(a);
        let v = Tensor::from_fn(av.rows(), total, |r, c| {
            if c >= start && c < start + av.cols() {
                av.get(r, c - start)
            } else {
                T::zero()
            }
        });
        self.push(Op::PadCols(a, start), v)
    }

    /// Gradient of the scalar `output` with respect to each node in `wrt`.
    ///
    /// The gradient computation is appended to this graph. With
    /// `create_graph` the new nodes track gradients themselves, so a later
    /// `grad` call can differentiate through them.
    pub fn grad(&mut self, output: NodeId, wrt: &[NodeId], create_graph: bool) -> Result<Vec<NodeId>> {
        self.check(output)?;
        for &w in wrt {
            self.check(w)?;
        }
        if self.value(output).len() != 1 {
            let [r, c] = self.value(output).shape();
            return Err(Error::Shape(format!("backward needs a scalar output, got [{r}, {c}]")));
        }

        // Only nodes on a path from some `wrt` node to `output` receive gradients.
        let end = output.0 + 1;
        let mut on_path = vec![false; end];
        for &w in wrt {
            if w.0 < end {
                on_path[w.0] = true;
            }
        }
        for i in 0..end {
            if !on_path[i] && self.nodes[i].op.parents().iter().any(|p| on_path[p.0]) {
                on_path[i] = true;
            }
        }

        let saved = self.recording;
        self.recording = create_graph;
        let result = self.backprop(output, end, &on_path, wrt);
        self.recording = saved;
        result
    }

    fn backprop(&mut self, output: NodeId, end: usize, on_path: &[bool], wrt: &[NodeId]) -> Result<Vec<NodeId>> {
        let mut grads: Vec<Option<NodeId>> = vec![None; end];
        grads[output.0] = Some(self.constant(Tensor::scalar(T::one())));

        for i in (0..end).rev() {
            let Some(g) = grads[i] else { continue };
            if !on_path[i] {
                continue;
            }
            let op = self.nodes[i].op.clone();
            let node = NodeId(i);
            for (parent, pg) in self.local_grads(&op, node, g, on_path)? {
                grads[parent.0] = Some(match grads[parent.0] {
                    None => pg,
                    Some(acc) => self.add(acc, pg)?,
                });
            }
        }

        wrt.iter()
            .map(|&w| match grads.get(w.0).copied().flatten() {
                Some(g) => Ok(g),
                None => {
                    let [r, c] = self.value(w).shape();
                    Ok(self.constant(Tensor::zeros(r, c)))
                }
            })
            .collect()
    }

    /// Vector-Jacobian products of one node, built from graph ops.
    fn local_grads(&mut self, op: &Op<T>, node: NodeId, g: NodeId, on_path: &[bool]) -> Result<Vec<(NodeId, NodeId)>> {
        let want = |p: NodeId| on_path[p.0];
        let mut out = Vec::with_capacity(2);
        match *op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if want(a) {
                    let bt = self.transpose(b)?;
                    out.push((a, self.matmul(g, bt)?));
                }
                if want(b) {
                    let at = self.transpose(a)?;
                    out.push((b, self.matmul(at, g)?));
                }
            }
            Op::Transpose(a) => {
                if want(a) {
                    out.push((a, self.transpose(g)?));
                }
            }
            Op::Add(a, b) => {
                if want(a) {
                    out.push((a, g));
                }
                if want(b) {
                    out.push((b, g));
                }
            }
            Op::Sub(a, b) => {
                if want(a) {
                    out.push((a, g));
                }
                if want(b) {
                    out.push((b, self.scale(g, -T::one())?));
                }
            }
            Op::Mul(a, b) => {
                if want(a) {
                    out.push((a, self.mul(g, b)?));
                }
                if want(b) {
                    out.push((b, self.mul(g, a)?));
                }
            }
            Op::SafeDiv(a, b) => {
                // d(a/b) = g/b da - g a/b^2 db
                let gb = self.safe_div(g, b)?;
                if want(a) {
                    out.push((a, gb));
                }
                if want(b) {
                    let q = self.safe_div(gb, b)?;
                    let qa = self.mul(q, a)?;
                    out.push((b, self.scale(qa, -T::one())?));
                }
            }
            Op::Scale(a, k) => {
                if want(a) {
                    out.push((a, self.scale(g, k)?));
                }
            }
            Op::AddScalar(a, _) => {
                if want(a) {
                    out.push((a, g));
                }
            }
            Op::AddRow(a, row) => {
                if want(a) {
                    out.push((a, g));
                }
                if want(row) {
                    out.push((row, self.sum_rows(g)?));
                }
            }
            Op::SumRows(a) => {
                if want(a) {
                    let n = self.value(a).rows();
                    out.push((a, self.broadcast_rows(g, n)?));
                }
            }
            Op::BroadcastRows(a) => {
                if want(a) {
                    out.push((a, self.sum_rows(g)?));
                }
            }
            Op::SumCols(a) => {
                if want(a) {
                    let m = self.value(a).cols();
                    out.push((a, self.broadcast_cols(g, m)?));
                }
            }
            Op::BroadcastCols(a) => {
                if want(a) {
                    out.push((a, self.sum_cols(g)?));
                }
            }
            Op::Sum(a) => {
                if want(a) {
                    let [r, c] = self.value(a).shape();
                    out.push((a, self.broadcast_scalar(g, r, c)?));
                }
            }
            Op::BroadcastScalar(a) => {
                if want(a) {
                    out.push((a, self.sum(g)?));
                }
            }
            Op::LeakyRelu(a, slope) => {
                if want(a) {
                    // Piecewise linear: the local slope is constant almost everywhere.
                    let mask = self.value(a).map(|x| if x > T::zero() { T::one() } else { slope });
                    let mask = self.constant(mask);
                    out.push((a, self.mul(g, mask)?));
                }
            }
            Op::Sqrt(a) => {
                if want(a) {
                    // d sqrt(x) = g / (2 sqrt(x)); zero at x = 0.
                    let half = self.scale(g, T::lit(0.5))?;
                    out.push((a, self.safe_div(half, node)?));
                }
            }
            Op::Exp(a) => {
                if want(a) {
                    out.push((a, self.mul(g, node)?));
                }
            }
            Op::LogSoftmax(a) => {
                if want(a) {
                    // g - softmax * rowsum(g)
                    let m = self.value(a).cols();
                    let sm = self.exp(node)?;
                    let gs = self.sum_cols(g)?;
                    let gsb = self.broadcast_cols(gs, m)?;
                    let corr = self.mul(sm, gsb)?;
                    out.push((a, self.sub(g, corr)?));
                }
            }
            Op::ConcatCols(a, b) => {
                let na = self.value(a).cols();
                let nb = self.value(b).cols();
                if want(a) {
                    out.push((a, self.slice_cols(g, 0, na)?));
                }
                if want(b) {
                    out.push((b, self.slice_cols(g, na, nb)?));
                }
            }
            Op::SliceCols(a, start) => {
                if want(a) {
                    let total = self.value(a).cols();
                    out.push((a, self.pad_cols(g, start, total)?));
                }
            }
            Op::PadCols(a, start) => {
                if want(a) {
                    let len = self.value(a).cols();
                    out.push((a, self.slice_cols(g, start, len)?));
                }
            }
        }
        Ok(out)
    }

    /// Gradient values, for callers that do not need to differentiate further.
    pub fn gradients(&mut self, output: NodeId, wrt: &[NodeId]) -> Result<Vec<Tensor<T>>> {
        let ids = self.grad(output, wrt, false)?;
        Ok(ids.into_iter().map(|id| self.value(id).clone()).collect())
    }
}

fn safe_div<T: Scalar>(a: T, b: T) -> T {
    if b == T::zero() {
        T::zero()
    } else {
        a / b
    }
}

pub(crate) fn log_softmax_rows<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let mut out = x.clone();
    for r in 0..x.rows() {
        let row = x.row_slice(r);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
        for (c, &v) in row.iter().enumerate() {
            out.set(r, c, v - lse);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[&[f64]]) -> Tensor<f64> {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn square_gradient() {
        let mut g = Graph::new();
        let w = g.variable(Tensor::scalar(3.0));
        let y = g.square(w).unwrap();
        let dw = g.gradients(y, &[w]).unwrap();
        assert_eq!(dw[0].item().unwrap(), 6.0);
    }

    #[test]
    fn linear_gradient_is_input() {
        let mut g = Graph::new();
        let x = g.constant(t(&[&[1.5], &[-2.0], &[4.0]]));
        let w = g.variable(t(&[&[0.1, 0.2, 0.3]]));
        let y = g.matmul(w, x).unwrap();
        let dw = g.gradients(y, &[w]).unwrap();
        assert_eq!(dw[0].data(), &[1.5, -2.0, 4.0]);
    }

    #[test]
    fn non_scalar_output_is_rejected() {
        let mut g = Graph::new();
        let w = g.variable(t(&[&[1.0, 2.0]]));
        assert!(matches!(g.grad(w, &[w], false), Err(Error::Shape(_))));
    }

    #[test]
    fn foreign_node_is_rejected() {
        let mut g = Graph::<f64>::new();
        let w = g.variable(Tensor::scalar(1.0));
        assert!(g.grad(w, &[NodeId(99)], false).is_err());
    }

    #[test]
    fn unreachable_gradient_is_zero() {
        let mut g = Graph::new();
        let a = g.variable(Tensor::scalar(2.0));
        let b = g.variable(t(&[&[1.0, 1.0]]));
        let y = g.square(a).unwrap();
        let d = g.gradients(y, &[b]).unwrap();
        assert_eq!(d[0].data(), &[0.0, 0.0]);
    }

    #[test]
    fn second_derivative_of_cube() {
        // f(x) = x^3, f'' = 6x
        let mut g = Graph::new();
        let x = g.variable(Tensor::scalar(2.0));
        let x2 = g.mul(x, x).unwrap();
        let y = g.mul(x2, x).unwrap();
        let dx = g.grad(y, &[x], true).unwrap()[0];
        assert_eq!(g.value(dx).item().unwrap(), 12.0);
        let ddx = g.gradients(dx, &[x]).unwrap();
        assert_eq!(ddx[0].item().unwrap(), 12.0);
    }

    #[test]
    fn first_order_mode_detaches() {
        let mut g = Graph::new();
        let x = g.variable(Tensor::scalar(2.0));
        let y = g.square(x).unwrap();
        let dx = g.grad(y, &[x], false).unwrap()[0];
        assert!(!g.requires_grad(dx));
    }

    #[test]
    fn norm_gradient_at_zero_is_zero() {
        let mut g = Graph::new();
        let v = g.variable(t(&[&[0.0, 0.0]]));
        let n = g.row_norm(v).unwrap();
        let s = g.sum(n).unwrap();
        let d = g.gradients(s, &[v]).unwrap();
        assert_eq!(d[0].data(), &[0.0, 0.0]);
    }

    #[test]
    fn non_finite_is_an_error() {
        let mut g = Graph::new();
        let v = g.constant(Tensor::scalar(1000.0));
        assert!(matches!(g.exp(v), Err(Error::NonFinite(_))));
    }

    #[test]
    fn topological_order_holds() {
        let mut g = Graph::new();
        let a = g.variable(t(&[&[1.0, -2.0]]));
        let b = g.leaky_relu(a, 0.2).unwrap();
        let c = g.row_norm(b).unwrap();
        let s = g.sum(c).unwrap();
        let da = g.grad(s, &[a], true).unwrap()[0];
        let s2 = g.sum(da).unwrap();
        g.grad(s2, &[a], true).unwrap();
        for i in 0..g.len() {
            for p in g.parents(NodeId(i)) {
                assert!(p.index() < i);
            }
        }
    }
}
