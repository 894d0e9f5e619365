//! Define-then-run reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Tape`] records a computation symbolically: leaves are bound to concrete
//! matrices only when [`Tape::forward`] runs, so one recorded graph serves any
//! batch size. [`Tape::backward`] then propagates a cotangent from an output
//! back to every differentiable leaf.
//!
//! The primitive set is deliberately small: matrix product, addition,
//! Hadamard product, scaling by a constant, element-wise activation,
//! transpose, diagonal embedding, slicing and sum of squares. `add` and `mul`
//! broadcast an operand that is a single column or a scalar against the other.

use std::ops::Range;

use super::{Activation, Matrix};
use crate::error::{Error, Result};

/// Handle to a node of a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf { slot: usize, differentiable: bool },
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Activation(NodeId, Activation),
    Transpose(NodeId),
    DiagEmbed(NodeId),
    Slice {
        input: NodeId,
        rows: Option<Range<usize>>,
        cols: Option<Range<usize>>,
    },
    SumSquares(NodeId),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf { .. } => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Activation(..) => "activation",
            Op::Transpose(..) => "transpose",
            Op::DiagEmbed(..) => "diag_embed",
            Op::Slice { .. } => "slice",
            Op::SumSquares(..) => "sum_squares",
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    label: Option<String>,
    needs_grad: bool,
}

/// Recorded computation graph plus the values cached by the last forward pass.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    leaves: Vec<NodeId>,
    outputs: Vec<NodeId>,
    values: Option<Vec<Matrix>>,
}

/// Gradients of one backward pass, indexed by leaf.
#[derive(Clone, Debug)]
pub struct Gradients {
    leaves: Vec<NodeId>,
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient for a differentiable leaf; `None` for constant leaves.
    pub fn get(&self, leaf: NodeId) -> Option<&Matrix> {
        let slot = self.leaves.iter().position(|id| *id == leaf)?;
        self.grads[slot].as_ref()
    }

    /// Gradients in leaf-declaration order.
    pub fn by_slot(&self) -> &[Option<Matrix>] {
        &self.grads
    }

    pub fn into_slots(self) -> Vec<Option<Matrix>> {
        self.grads
    }
}

fn broadcast_ok(lhs: (usize, usize), rhs: (usize, usize)) -> bool {
    rhs == lhs || rhs == (lhs.0, 1) || rhs == (1, 1)
}

fn broadcast_zip(lhs: &Matrix, rhs: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    let (r, c) = lhs.shape();
    let mut out = Matrix::zeros(r, c);
    let a = lhs.as_slice();
    let o = out.as_mut_slice();
    if rhs.shape() == (r, c) {
        for ((o, a), b) in o.iter_mut().zip(a).zip(rhs.as_slice()) {
            *o = f(*a, *b);
        }
    } else if rhs.shape() == (1, 1) {
        let b = rhs.item();
        for (o, a) in o.iter_mut().zip(a) {
            *o = f(*a, b);
        }
    } else {
        for i in 0..r {
            let b = rhs.as_slice()[i];
            for j in 0..c {
                o[i * c + j] = f(a[i * c + j], b);
            }
        }
    }
    out
}

/// Reduces a full-shape gradient onto a (possibly broadcast) operand shape.
fn reduce_to(grad: Matrix, shape: (usize, usize)) -> Matrix {
    if grad.shape() == shape {
        return grad;
    }
    if shape == (1, 1) {
        return Matrix::scalar(grad.as_slice().iter().sum());
    }
    let (r, c) = grad.shape();
    let sums: Vec<f64> = (0..r)
        .map(|i| grad.as_slice()[i * c..(i + 1) * c].iter().sum())
        .collect();
    Matrix::column(&sums)
}

fn resolve(range: &Option<Range<usize>>, len: usize) -> Range<usize> {
    range.clone().unwrap_or(0..len)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, op: Op, needs_grad: bool) -> NodeId {
        self.values = None;
        self.nodes.push(Node {
            op,
            label: None,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn grad_of(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].needs_grad)
    }

    fn leaf(&mut self, label: &str, differentiable: bool) -> NodeId {
        let slot = self.leaves.len();
        let id = self.push(Op::Leaf { slot, differentiable }, differentiable);
        self.nodes[id.0].label = Some(label.to_string());
        self.leaves.push(id);
        id
    }

    /// A differentiable leaf (parameter). Bound positionally in `forward`.
    pub fn variable(&mut self, label: &str) -> NodeId {
        self.leaf(label, true)
    }

    /// A non-differentiable leaf (data, fixed hyper-parameters).
    pub fn constant(&mut self, label: &str) -> NodeId {
        self.leaf(label, false)
    }

    /// Attaches a human-readable label used in diagnostics.
    pub fn label(&mut self, id: NodeId, label: impl Into<String>) -> NodeId {
        self.nodes[id.0].label = Some(label.into());
        id
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let g = self.grad_of(&[a, b]);
        self.push(Op::MatMul(a, b), g)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let g = self.grad_of(&[a, b]);
        self.push(Op::Add(a, b), g)
    }

    /// `a - b`, composed as `a + (-1)·b`.
    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let nb = self.scale(b, -1.0);
        self.add(a, nb)
    }

    /// Element-wise (Hadamard) product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let g = self.grad_of(&[a, b]);
        self.push(Op::Mul(a, b), g)
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let g = self.grad_of(&[a]);
        self.push(Op::Scale(a, factor), g)
    }

    pub fn activation(&mut self, a: NodeId, act: Activation) -> NodeId {
        let g = self.grad_of(&[a]) && act != Activation::Step;
        self.push(Op::Activation(a, act), g)
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let g = self.grad_of(&[a]);
        self.push(Op::Transpose(a), g)
    }

    /// Embeds a vector (`n x 1` or `1 x n`) as an `n x n` diagonal matrix.
    pub fn diag_embed(&mut self, a: NodeId) -> NodeId {
        let g = self.grad_of(&[a]);
        self.push(Op::DiagEmbed(a), g)
    }

    pub fn slice(&mut self, a: NodeId, rows: Option<Range<usize>>, cols: Option<Range<usize>>) -> NodeId {
        let g = self.grad_of(&[a]);
        self.push(Op::Slice { input: a, rows, cols }, g)
    }

    pub fn slice_rows(&mut self, a: NodeId, rows: Range<usize>) -> NodeId {
        self.slice(a, Some(rows), None)
    }

    pub fn slice_cols(&mut self, a: NodeId, cols: Range<usize>) -> NodeId {
        self.slice(a, None, Some(cols))
    }

    /// Sum of squared entries as a `1 x 1` matrix.
    pub fn sum_squares(&mut self, a: NodeId) -> NodeId {
        let g = self.grad_of(&[a]);
        self.push(Op::SumSquares(a), g)
    }

    /// Sum of several nodes of identical shape.
    pub fn sum(&mut self, terms: &[NodeId]) -> NodeId {
        let mut iter = terms.iter().copied();
        let first = iter.next().expect("sum of zero terms");
        iter.fold(first, |acc, t| self.add(acc, t))
    }

    pub fn set_outputs(&mut self, outputs: &[NodeId]) {
        self.outputs = outputs.to_vec();
    }

    pub fn outputs(&self) -> &[NodeId] {
        &self.outputs
    }

    pub fn leaves(&self) -> &[NodeId] {
        &self.leaves
    }

    pub fn leaf_label(&self, id: NodeId) -> Option<&str> {
        self.nodes.get(id.0)?.label.as_deref()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Value of a node from the last forward pass.
    pub fn value(&self, id: NodeId) -> Option<&Matrix> {
        self.values.as_ref().map(|v| &v[id.0])
    }

    fn describe(&self, id: NodeId) -> String {
        let node = &self.nodes[id.0];
        match &node.label {
            Some(l) => format!("node {} ({} '{}')", id.0, node.op.name(), l),
            None => format!("node {} ({})", id.0, node.op.name()),
        }
    }

    /// Evaluates the graph with `inputs` bound to the leaves in declaration
    /// order and returns the values of the designated outputs.
    pub fn forward(&mut self, inputs: &[Matrix]) -> Result<Vec<Matrix>> {
        if inputs.len() != self.leaves.len() {
            return Err(Error::Shape(format!(
                "tape has {} leaves but {} inputs were supplied",
                self.leaves.len(),
                inputs.len()
            )));
        }
        let mut values: Vec<Matrix> = Vec::with_capacity(self.nodes.len());
        for (idx, node) in self.nodes.iter().enumerate() {
            let id = NodeId(idx);
            let shape_err = |msg: String| Error::Shape(format!("{}: {}", self.describe(id), msg));
            let v = match &node.op {
                Op::Leaf { slot, .. } => inputs[*slot].clone(),
                Op::MatMul(a, b) => {
                    let (a, b) = (&values[a.0], &values[b.0]);
                    if a.cols() != b.rows() {
                        return Err(shape_err(format!(
                            "cannot multiply {}x{} by {}x{}",
                            a.rows(),
                            a.cols(),
                            b.rows(),
                            b.cols()
                        )));
                    }
                    a.matmul_unchecked(b)
                }
                Op::Add(a, b) | Op::Mul(a, b) => {
                    let (av, bv) = (&values[a.0], &values[b.0]);
                    // both operations commute, so the broadcast operand may sit on either side
                    let (big, small) = if broadcast_ok(av.shape(), bv.shape()) {
                        (av, bv)
                    } else if broadcast_ok(bv.shape(), av.shape()) {
                        (bv, av)
                    } else {
                        return Err(shape_err(format!(
                            "operands {}x{} and {}x{} do not broadcast",
                            av.rows(),
                            av.cols(),
                            bv.rows(),
                            bv.cols()
                        )));
                    };
                    if matches!(node.op, Op::Add(..)) {
                        broadcast_zip(big, small, |x, y| x + y)
                    } else {
                        broadcast_zip(big, small, |x, y| x * y)
                    }
                }
                Op::Scale(a, k) => values[a.0].scale(*k),
                Op::Activation(a, act) => values[a.0].map(|x| act.apply(x)),
                Op::Transpose(a) => values[a.0].transpose(),
                Op::DiagEmbed(a) => {
                    let v = &values[a.0];
                    if v.rows() != 1 && v.cols() != 1 {
                        return Err(shape_err(format!("diag_embed of {}x{}", v.rows(), v.cols())));
                    }
                    Matrix::diag(v.as_slice())
                }
                Op::Slice { input, rows, cols } => {
                    let v = &values[input.0];
                    let r = resolve(rows, v.rows());
                    let c = resolve(cols, v.cols());
                    if r.end > v.rows() || c.end > v.cols() || r.start > r.end || c.start > c.end {
                        return Err(shape_err(format!(
                            "slice [{:?}, {:?}] out of bounds for {}x{}",
                            r,
                            c,
                            v.rows(),
                            v.cols()
                        )));
                    }
                    let mut out = Matrix::zeros(r.len(), c.len());
                    for (i, src) in r.clone().enumerate() {
                        out.as_mut_slice()[i * c.len()..(i + 1) * c.len()]
                            .copy_from_slice(&v.row_slice(src)[c.clone()]);
                    }
                    out
                }
                Op::SumSquares(a) => Matrix::scalar(values[a.0].sum_squares()),
            };
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("{} produced a non-finite value", self.describe(id))));
            }
            values.push(v);
        }
        let outputs = self.outputs.iter().map(|o| values[o.0].clone()).collect();
        self.values = Some(values);
        Ok(outputs)
    }

    /// Backpropagates `cotangent` from the first designated output.
    pub fn backward(&self, cotangent: &Matrix) -> Result<Gradients> {
        let out = *self
            .outputs
            .first()
            .ok_or_else(|| Error::Invariant("tape has no designated output".into()))?;
        self.backward_from(out, cotangent)
    }

    /// Backpropagates `cotangent` from `output`, returning `∂(cotangent·output)/∂p`
    /// for every differentiable leaf `p`.
    pub fn backward_from(&self, output: NodeId, cotangent: &Matrix) -> Result<Gradients> {
        let values = self.values.as_ref().ok_or(Error::BackwardBeforeForward)?;
        if values[output.0].shape() != cotangent.shape() {
            return Err(Error::Shape(format!(
                "cotangent {}x{} for {} of shape {}x{}",
                cotangent.rows(),
                cotangent.cols(),
                self.describe(output),
                values[output.0].rows(),
                values[output.0].cols()
            )));
        }
        let mut adj: Vec<Option<Matrix>> = vec![None; output.0 + 1];
        adj[output.0] = Some(cotangent.clone());

        fn acc(adj: &mut [Option<Matrix>], id: NodeId, g: Matrix) {
            match &mut adj[id.0] {
                Some(existing) => existing.add_assign(&g),
                slot => *slot = Some(g),
            }
        }

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = adj[idx].take() else { continue };
            let needs = |id: &NodeId| self.nodes[id.0].needs_grad;
            match &node.op {
                Op::Leaf { .. } => {
                    adj[idx] = Some(g);
                }
                Op::MatMul(a, b) => {
                    if needs(a) {
                        acc(&mut adj, *a, g.matmul_tr(&values[b.0]));
                    }
                    if needs(b) {
                        acc(&mut adj, *b, values[a.0].tr_matmul(&g));
                    }
                }
                Op::Add(a, b) => {
                    if needs(b) {
                        acc(&mut adj, *b, reduce_to(g.clone(), values[b.0].shape()));
                    }
                    if needs(a) {
                        acc(&mut adj, *a, reduce_to(g, values[a.0].shape()));
                    }
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (&values[a.0], &values[b.0]);
                    if needs(a) {
                        acc(&mut adj, *a, reduce_to(broadcast_zip(&g, bv, |x, y| x * y), av.shape()));
                    }
                    if needs(b) {
                        acc(&mut adj, *b, reduce_to(broadcast_zip(&g, av, |x, y| x * y), bv.shape()));
                    }
                }
                Op::Scale(a, k) => acc(&mut adj, *a, g.scale(*k)),
                Op::Activation(a, act) => {
                    let x = &values[a.0];
                    let mut d = g;
                    for (d, x) in d.as_mut_slice().iter_mut().zip(x.as_slice()) {
                        *d *= act.derivative(*x);
                    }
                    acc(&mut adj, *a, d);
                }
                Op::Transpose(a) => acc(&mut adj, *a, g.transpose()),
                Op::DiagEmbed(a) => {
                    let (r, c) = values[a.0].shape();
                    acc(&mut adj, *a, Matrix::from_vec(r, c, g.diagonal())?);
                }
                Op::Slice { input, rows, cols } => {
                    let v = &values[input.0];
                    let r = resolve(rows, v.rows());
                    let c = resolve(cols, v.cols());
                    let mut full = Matrix::zeros(v.rows(), v.cols());
                    for (i, dst) in r.enumerate() {
                        for (j, col) in c.clone().enumerate() {
                            full[(dst, col)] = g[(i, j)];
                        }
                    }
                    acc(&mut adj, *input, full);
                }
                Op::SumSquares(a) => {
                    let k = 2.0 * g.item();
                    acc(&mut adj, *a, values[a.0].scale(k));
                }
            }
        }

        let grads = self
            .leaves
            .iter()
            .map(|leaf| match &self.nodes[leaf.0].op {
                Op::Leaf { differentiable: true, .. } => Some(
                    adj.get(leaf.0)
                        .cloned()
                        .flatten()
                        .unwrap_or_else(|| Matrix::zeros(values[leaf.0].rows(), values[leaf.0].cols())),
                ),
                _ => None,
            })
            .collect();
        Ok(Gradients {
            leaves: self.leaves.clone(),
            grads,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_tape() {
        let mut t = Tape::new();
        let x = t.variable("x");
        t.set_outputs(&[x]);
        let out = t.forward(&[Matrix::column(&[1.0, 2.0])]).unwrap();
        assert_eq!(out[0].as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn identity_affine() {
        let mut t = Tape::new();
        let w = t.variable("W");
        let b = t.variable("b");
        let x = t.constant("x");
        let wx = t.matmul(w, x);
        let y = t.add(wx, b);
        t.set_outputs(&[y]);
        let out = t
            .forward(&[Matrix::identity(2), Matrix::column(&[0.0, 0.0]), Matrix::column(&[3.0, 4.0])])
            .unwrap();
        assert_eq!(out[0].as_slice(), &[3.0, 4.0]);
    }

    #[test]
    fn softplus_of_zero() {
        let mut t = Tape::new();
        let x = t.variable("x");
        let y = t.activation(x, Activation::Softplus);
        t.set_outputs(&[y]);
        let out = t.forward(&[Matrix::scalar(0.0)]).unwrap();
        assert_eq!(out[0].item(), std::f64::consts::LN_2);
    }

    #[test]
    fn linear_gradient() {
        let mut t = Tape::new();
        let x = t.variable("x");
        let y = t.scale(x, 3.0);
        t.set_outputs(&[y]);
        t.forward(&[Matrix::scalar(1.7)]).unwrap();
        let g = t.backward(&Matrix::scalar(1.0)).unwrap();
        assert_eq!(g.get(x).unwrap().item(), 3.0);
    }

    #[test]
    fn quadratic_form_gradient() {
        let mut t = Tape::new();
        let x = t.variable("x");
        let y = t.sum_squares(x);
        t.set_outputs(&[y]);
        t.forward(&[Matrix::column(&[1.0, 2.0])]).unwrap();
        let g = t.backward(&Matrix::scalar(1.0)).unwrap();
        assert_eq!(g.get(x).unwrap().as_slice(), &[2.0, 4.0]);
    }

    #[test]
    fn backward_before_forward_is_an_error() {
        let mut t = Tape::new();
        let x = t.variable("x");
        t.set_outputs(&[x]);
        assert!(matches!(t.backward(&Matrix::scalar(1.0)), Err(Error::BackwardBeforeForward)));
    }

    #[test]
    fn shape_error_names_the_node() {
        let mut t = Tape::new();
        let a = t.variable("a");
        let b = t.variable("b");
        let p = t.matmul(a, b);
        t.label(p, "product");
        t.set_outputs(&[p]);
        let err = t.forward(&[Matrix::zeros(2, 3), Matrix::zeros(2, 3)]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("node 2") && msg.contains("product"), "{msg}");
    }

    #[test]
    fn wrong_arity_is_rejected() {
        let mut t = Tape::new();
        let x = t.variable("x");
        t.set_outputs(&[x]);
        assert!(t.forward(&[]).is_err());
    }

    #[test]
    fn constant_leaves_get_no_gradient() {
        let mut t = Tape::new();
        let x = t.variable("x");
        let c = t.constant("c");
        let y = t.mul(x, c);
        let s = t.sum_squares(y);
        t.set_outputs(&[s]);
        t.forward(&[Matrix::column(&[1.0, 2.0]), Matrix::column(&[3.0, 4.0])]).unwrap();
        let g = t.backward(&Matrix::scalar(1.0)).unwrap();
        assert!(g.get(c).is_none());
        // d/dx Σ (c x)² = 2 c² x
        assert_eq!(g.get(x).unwrap().as_slice(), &[18.0, 64.0]);
    }

    #[test]
    fn broadcast_column_gradient_is_reduced() {
        let mut t = Tape::new();
        let a = t.variable("a");
        let b = t.variable("b");
        let y = t.add(a, b);
        let s = t.sum_squares(y);
        t.set_outputs(&[s]);
        let av = Matrix::from_rows(&[&[1.0, 2.0, 3.0], &[0.0, 0.0, 1.0]]).unwrap();
        t.forward(&[av, Matrix::column(&[1.0, -1.0])]).unwrap();
        let g = t.backward(&Matrix::scalar(1.0)).unwrap();
        // Σ_j 2 (a_ij + b_i)
        assert_eq!(g.get(b).unwrap().as_slice(), &[18.0, -4.0]);
    }

    #[test]
    fn broadcast_operand_may_come_first() {
        let mut t = Tape::new();
        let s = t.variable("s");
        let a = t.variable("a");
        let y = t.mul(s, a);
        let z = t.sum_squares(y);
        t.set_outputs(&[z]);
        t.forward(&[Matrix::scalar(2.0), Matrix::row(&[1.0, 3.0])]).unwrap();
        let g = t.backward(&Matrix::scalar(1.0)).unwrap();
        // d/ds Σ (s a_j)² = 2 s Σ a_j²
        assert_eq!(g.get(s).unwrap().item(), 40.0);
        assert_eq!(g.get(a).unwrap().as_slice(), &[8.0, 24.0]);
    }

    #[test]
    fn forward_rejects_non_finite_results() {
        let mut t = Tape::new();
        let x = t.variable("x");
        let y = t.scale(x, f64::MAX);
        let z = t.scale(y, 10.0);
        t.set_outputs(&[z]);
        assert!(matches!(t.forward(&[Matrix::scalar(1.0)]), Err(Error::NonFinite(_))));
    }
}
