//! Reverse-mode automatic differentiation over real vectors.
//!
//! A [`Tape`] records vector-valued nodes in evaluation order. Besides the
//! usual elementwise and reduction operations it has two solver nodes:
//!
//! * [`Tape::linear_solve`] / [`Tape::linear_solve_param`]: `x = A⁻¹b`. The
//!   backward pass solves `Aᵀ·ḃ = x̄` with the factorization kept from the
//!   forward pass and, when `A` depends on parameters, forms
//!   `Ā = −ḃ ⊗ x` on the sparsity pattern of `A` and chains it into the
//!   parameters.
//! * [`Tape::nonlinear_solve`]: `u` with `R(u; p) = 0` found by Newton's
//!   method. The backward pass solves the adjoint system
//!   `(∂R/∂u)ᵀ·z = ū` at the converged state and returns `p̄ = −zᵀ·∂R/∂p`.
//!
//! ```
//! use adjoint_pde_core::autodiff::Tape;
//!
//! let mut tape = Tape::new();
//! let x = tape.param(vec![3.0, 4.0]);
//! let n = tape.norm2(x).unwrap();
//! let grads = tape.backward(n).unwrap();
//! assert_eq!(tape.scalar(n), 5.0);
//! assert_eq!(grads.wrt(x), vec![0.6, 0.8]);
//! ```

mod check;
mod solve;

pub use check::{gradient_check, GradCheck};
pub use solve::{
    newton_solve, AffineMatrix, FactoredMatrix, NewtonConfig, NewtonError, NewtonFailure,
    NewtonSolution, ParamDependentMatrix, ParamDomain, ResidualSystem,
};

use std::sync::atomic::{AtomicU64, Ordering};
use thiserror::Error;

use crate::sparse::SparseError;
use solve::{LinearSolveNode, NonlinearSolveNode};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdError {
    #[error("variable does not belong to this tape")]
    ForeignVariable,
    #[error("shape mismatch in {op}: {left} vs {right}")]
    ShapeMismatch {
        op: &'static str,
        left: usize,
        right: usize,
    },
    #[error("loss must be a scalar, got a vector of length {0}")]
    NonScalarLoss(usize),
    #[error("parameter {index} = {value} is invalid: {reason}")]
    InvalidParameter {
        index: usize,
        value: f64,
        reason: &'static str,
    },
    #[error(transparent)]
    Solver(#[from] SparseError),
    #[error(transparent)]
    Newton(#[from] NewtonError),
}

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(0);

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VarId {
    tape: u64,
    index: usize,
}

impl VarId {
    pub fn index(&self) -> usize {
        self.index
    }
}

enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Square(usize),
    Dot(usize, usize),
    Norm2(usize),
    Sum(usize),
    Mean(usize),
    Abs(usize),
    Sigmoid(usize),
    ClampMin(usize, f64),
    Broadcast(usize),
    Concat(Vec<usize>),
    Slice { src: usize, start: usize },
    AffineBatch {
        input: usize,
        weight: usize,
        bias: usize,
        in_dim: usize,
        out_dim: usize,
    },
    LinearSolve(Box<LinearSolveNode>),
    NonlinearSolve(Box<NonlinearSolveNode>),
}

struct Node {
    op: Op,
    value: Vec<f64>,
    requires_grad: bool,
}

/// Append-only record of a computation. Inputs of a node always precede it.
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Leaf node. Gradients are accumulated for it iff `requires_grad`.
    pub fn variable(&mut self, value: Vec<f64>, requires_grad: bool) -> VarId {
        self.push(Op::Leaf, value, requires_grad)
    }

    pub fn param(&mut self, value: Vec<f64>) -> VarId {
        self.variable(value, true)
    }

    pub fn constant(&mut self, value: Vec<f64>) -> VarId {
        self.variable(value, false)
    }

    pub fn value(&self, v: VarId) -> &[f64] {
        assert_eq!(v.tape, self.id, "variable does not belong to this tape");
        &self.nodes[v.index].value
    }

    /// Value of a length-1 variable.
    pub fn scalar(&self, v: VarId) -> f64 {
        let value = self.value(v);
        assert_eq!(value.len(), 1, "scalar() on a vector of length {}", value.len());
        value[0]
    }

    pub fn requires_grad(&self, v: VarId) -> bool {
        self.nodes[v.index].requires_grad
    }

    fn push(&mut self, op: Op, value: Vec<f64>, requires_grad: bool) -> VarId {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        VarId {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    fn idx(&self, v: VarId) -> Result<usize, AdError> {
        if v.tape != self.id || v.index >= self.nodes.len() {
            return Err(AdError::ForeignVariable);
        }
        Ok(v.index)
    }

    fn vals(&self, i: usize) -> &[f64] {
        &self.nodes[i].value
    }

    fn rg(&self, inputs: &[usize]) -> bool {
        inputs.iter().any(|&i| self.nodes[i].requires_grad)
    }

    fn same_len(&self, op: &'static str, a: usize, b: usize) -> Result<usize, AdError> {
        let (la, lb) = (self.vals(a).len(), self.vals(b).len());
        if la != lb {
            return Err(AdError::ShapeMismatch {
                op,
                left: la,
                right: lb,
            });
        }
        Ok(la)
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: VarId,
        b: VarId,
        op: fn(usize, usize) -> Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<VarId, AdError> {
        let (a, b) = (self.idx(a)?, self.idx(b)?);
        self.same_len(name, a, b)?;
        let value = self
            .vals(a)
            .iter()
            .zip(self.vals(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let rg = self.rg(&[a, b]);
        Ok(self.push(op(a, b), value, rg))
    }

    fn unary(&mut self, a: VarId, op: Op, f: impl Fn(f64) -> f64) -> Result<VarId, AdError> {
        let a = self.idx(a)?;
        let value = self.vals(a).iter().map(|&x| f(x)).collect();
        let rg = self.rg(&[a]);
        Ok(self.push(op, value, rg))
    }

    pub fn add(&mut self, a: VarId, b: VarId) -> Result<VarId, AdError> {
        self.binary("add", a, b, Op::Add, |x, y| x + y)
    }

    pub fn sub(&mut self, a: VarId, b: VarId) -> Result<VarId, AdError> {
        self.binary("sub", a, b, Op::Sub, |x, y| x - y)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: VarId, b: VarId) -> Result<VarId, AdError> {
        self.binary("mul", a, b, Op::Mul, |x, y| x * y)
    }

    pub fn scale(&mut self, a: VarId, alpha: f64) -> Result<VarId, AdError> {
        let i = self.idx(a)?;
        self.unary(a, Op::Scale(i, alpha), |x| alpha * x)
    }

    pub fn square(&mut self, a: VarId) -> Result<VarId, AdError> {
        let i = self.idx(a)?;
        self.unary(a, Op::Square(i), |x| x * x)
    }

    pub fn abs(&mut self, a: VarId) -> Result<VarId, AdError> {
        let i = self.idx(a)?;
        self.unary(a, Op::Abs(i), f64::abs)
    }

    pub fn sigmoid(&mut self, a: VarId) -> Result<VarId, AdError> {
        let i = self.idx(a)?;
        self.unary(a, Op::Sigmoid(i), sigmoid)
    }

    /// `max(a, min)` elementwise; clamped entries pass no gradient.
    pub fn clamp_min(&mut self, a: VarId, min: f64) -> Result<VarId, AdError> {
        let i = self.idx(a)?;
        self.unary(a, Op::ClampMin(i, min), |x| x.max(min))
    }

    pub fn dot(&mut self, a: VarId, b: VarId) -> Result<VarId, AdError> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        self.same_len("dot", ia, ib)?;
        let v = self.vals(ia).iter().zip(self.vals(ib)).map(|(x, y)| x * y).sum();
        let rg = self.rg(&[ia, ib]);
        Ok(self.push(Op::Dot(ia, ib), vec![v], rg))
    }

    /// Euclidean norm. The gradient at the zero vector is taken to be zero.
    pub fn norm2(&mut self, a: VarId) -> Result<VarId, AdError> {
        let i = self.idx(a)?;
        let v = crate::sparse::norm2(self.vals(i));
        let rg = self.rg(&[i]);
        Ok(self.push(Op::Norm2(i), vec![v], rg))
    }

    pub fn sum(&mut self, a: VarId) -> Result<VarId, AdError> {
        let i = self.idx(a)?;
        let v = self.vals(i).iter().sum();
        let rg = self.rg(&[i]);
        Ok(self.push(Op::Sum(i), vec![v], rg))
    }

    pub fn mean(&mut self, a: VarId) -> Result<VarId, AdError> {
        let i = self.idx(a)?;
        let n = self.vals(i).len();
        if n == 0 {
            return Err(AdError::ShapeMismatch {
                op: "mean",
                left: 0,
                right: 1,
            });
        }
        let v = self.vals(i).iter().sum::<f64>() / n as f64;
        let rg = self.rg(&[i]);
        Ok(self.push(Op::Mean(i), vec![v], rg))
    }

    /// Repeats a length-1 variable `n` times.
    pub fn broadcast(&mut self, a: VarId, n: usize) -> Result<VarId, AdError> {
        let i = self.idx(a)?;
        let len = self.vals(i).len();
        if len != 1 {
            return Err(AdError::ShapeMismatch {
                op: "broadcast",
                left: len,
                right: 1,
            });
        }
        let v = vec![self.vals(i)[0]; n];
        let rg = self.rg(&[i]);
        Ok(self.push(Op::Broadcast(i), v, rg))
    }

    pub fn concat(&mut self, parts: &[VarId]) -> Result<VarId, AdError> {
        let idx = parts
            .iter()
            .map(|&p| self.idx(p))
            .collect::<Result<Vec<_>, _>>()?;
        let mut value = Vec::new();
        for &i in &idx {
            value.extend_from_slice(self.vals(i));
        }
        let rg = self.rg(&idx);
        Ok(self.push(Op::Concat(idx), value, rg))
    }

    /// Contiguous sub-vector `a[start..start + len]`.
    pub fn slice(&mut self, a: VarId, start: usize, len: usize) -> Result<VarId, AdError> {
        let i = self.idx(a)?;
        let total = self.vals(i).len();
        if start + len > total {
            return Err(AdError::ShapeMismatch {
                op: "slice",
                left: start + len,
                right: total,
            });
        }
        let value = self.vals(i)[start..start + len].to_vec();
        let rg = self.rg(&[i]);
        Ok(self.push(Op::Slice { src: i, start }, value, rg))
    }

    /// Batched affine map `Y = X·Wᵀ + 𝟙·bᵀ`.
    ///
    /// `input` holds a row-major `batch × in_dim` matrix, `weight` a row-major
    /// `out_dim × in_dim` matrix and `bias` has length `out_dim`; the result
    /// is row-major `batch × out_dim`.
    pub fn affine_batch(
        &mut self,
        input: VarId,
        weight: VarId,
        bias: VarId,
        in_dim: usize,
        out_dim: usize,
    ) -> Result<VarId, AdError> {
        let (ix, iw, ib) = (self.idx(input)?, self.idx(weight)?, self.idx(bias)?);
        let (x, w, b) = (self.vals(ix), self.vals(iw), self.vals(ib));
        if in_dim == 0 || x.len() % in_dim != 0 {
            return Err(AdError::ShapeMismatch {
                op: "affine_batch input",
                left: x.len(),
                right: in_dim,
            });
        }
        if w.len() != in_dim * out_dim {
            return Err(AdError::ShapeMismatch {
                op: "affine_batch weight",
                left: w.len(),
                right: in_dim * out_dim,
            });
        }
        if b.len() != out_dim {
            return Err(AdError::ShapeMismatch {
                op: "affine_batch bias",
                left: b.len(),
                right: out_dim,
            });
        }
        let batch = x.len() / in_dim;
        let mut y = Vec::with_capacity(batch * out_dim);
        for row in x.chunks_exact(in_dim) {
            for (o, w_row) in w.chunks_exact(in_dim).enumerate() {
                y.push(b[o] + w_row.iter().zip(row).map(|(p, q)| p * q).sum::<f64>());
            }
        }
        let rg = self.rg(&[ix, iw, ib]);
        Ok(self.push(
            Op::AffineBatch {
                input: ix,
                weight: iw,
                bias: ib,
                in_dim,
                out_dim,
            },
            y,
            rg,
        ))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: VarId) -> Result<Gradients, AdError> {
        let root = self.idx(loss)?;
        let len = self.vals(root).len();
        if len != 1 {
            return Err(AdError::NonScalarLoss(len));
        }
        let mut adj: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[root] = Some(vec![1.0]);

        for i in (0..=root).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = adj[i].take() else { continue };
            self.propagate(node, &g, &mut adj)?;
            adj[i] = Some(g);
        }

        Ok(Gradients {
            tape: self.id,
            lens: self.nodes.iter().map(|n| n.value.len()).collect(),
            adjoints: adj,
        })
    }

    fn propagate(&self, node: &Node, g: &[f64], adj: &mut [Option<Vec<f64>>]) -> Result<(), AdError> {
        let mut acc = Accumulator {
            nodes: &self.nodes,
            adj,
        };
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc.add(*a, g);
                acc.add(*b, g);
            }
            Op::Sub(a, b) => {
                acc.add(*a, g);
                acc.add_with(*b, |k| -g[k]);
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.vals(*a), self.vals(*b));
                acc.add_with(*a, |k| g[k] * vb[k]);
                acc.add_with(*b, |k| g[k] * va[k]);
            }
            Op::Scale(a, alpha) => acc.add_with(*a, |k| alpha * g[k]),
            Op::Square(a) => {
                let va = self.vals(*a);
                acc.add_with(*a, |k| 2.0 * va[k] * g[k]);
            }
            Op::Abs(a) => {
                let va = self.vals(*a);
                acc.add_with(*a, |k| sign(va[k]) * g[k]);
            }
            Op::Sigmoid(a) => {
                let y = &node.value;
                acc.add_with(*a, |k| y[k] * (1.0 - y[k]) * g[k]);
            }
            Op::ClampMin(a, min) => {
                let va = self.vals(*a);
                acc.add_with(*a, |k| if va[k] > *min { g[k] } else { 0.0 });
            }
            Op::Dot(a, b) => {
                let (va, vb) = (self.vals(*a), self.vals(*b));
                acc.add_with(*a, |k| g[0] * vb[k]);
                acc.add_with(*b, |k| g[0] * va[k]);
            }
            Op::Norm2(a) => {
                let n = node.value[0];
                if n > 0.0 {
                    let va = self.vals(*a);
                    acc.add_with(*a, |k| g[0] * va[k] / n);
                }
            }
            Op::Sum(a) => acc.add_with(*a, |_| g[0]),
            Op::Mean(a) => {
                let n = self.vals(*a).len() as f64;
                acc.add_with(*a, |_| g[0] / n);
            }
            Op::Broadcast(a) => {
                let s = g.iter().sum();
                acc.add(*a, &[s]);
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.vals(p).len();
                    acc.add(p, &g[offset..offset + n]);
                    offset += n;
                }
            }
            Op::Slice { src, start } => {
                let start = *start;
                let n = g.len();
                acc.add_with(*src, |k| {
                    if k >= start && k < start + n {
                        g[k - start]
                    } else {
                        0.0
                    }
                });
            }
            Op::AffineBatch {
                input,
                weight,
                bias,
                in_dim,
                out_dim,
            } => {
                let (x, w) = (self.vals(*input), self.vals(*weight));
                let (ni, no) = (*in_dim, *out_dim);
                let batch = x.len() / ni;
                if acc.wants(*input) {
                    let mut gx = vec![0.0; x.len()];
                    for r in 0..batch {
                        for o in 0..no {
                            let go = g[r * no + o];
                            for i in 0..ni {
                                gx[r * ni + i] += go * w[o * ni + i];
                            }
                        }
                    }
                    acc.add(*input, &gx);
                }
                if acc.wants(*weight) {
                    let mut gw = vec![0.0; w.len()];
                    for r in 0..batch {
                        for o in 0..no {
                            let go = g[r * no + o];
                            for i in 0..ni {
                                gw[o * ni + i] += go * x[r * ni + i];
                            }
                        }
                    }
                    acc.add(*weight, &gw);
                }
                if acc.wants(*bias) {
                    let mut gb = vec![0.0; no];
                    for r in 0..batch {
                        for o in 0..no {
                            gb[o] += g[r * no + o];
                        }
                    }
                    acc.add(*bias, &gb);
                }
            }
            Op::LinearSolve(solve) => solve.backward(&node.value, g, &mut acc)?,
            Op::NonlinearSolve(solve) => solve.backward(&node.value, g, &mut acc)?,
        }
        Ok(())
    }
}

struct Accumulator<'a> {
    nodes: &'a [Node],
    adj: &'a mut [Option<Vec<f64>>],
}

impl Accumulator<'_> {
    fn wants(&self, i: usize) -> bool {
        self.nodes[i].requires_grad
    }

    fn add(&mut self, i: usize, g: &[f64]) {
        self.add_with(i, |k| g[k]);
    }

    /// Sums `f(k)` into the adjoint of node `i`, entry by entry.
    fn add_with(&mut self, i: usize, f: impl Fn(usize) -> f64) {
        if !self.nodes[i].requires_grad {
            return;
        }
        let n = self.nodes[i].value.len();
        match &mut self.adj[i] {
            Some(existing) => existing.iter_mut().enumerate().for_each(|(k, e)| *e += f(k)),
            slot @ None => *slot = Some((0..n).map(f).collect()),
        }
    }
}

/// Adjoints produced by [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    tape: u64,
    lens: Vec<usize>,
    adjoints: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Adjoint of `v`, if any gradient reached it.
    pub fn get(&self, v: VarId) -> Option<&[f64]> {
        if v.tape != self.tape {
            return None;
        }
        self.adjoints.get(v.index)?.as_deref()
    }

    /// Adjoint of `v`, zeros when the loss does not depend on it.
    pub fn wrt(&self, v: VarId) -> Vec<f64> {
        assert_eq!(v.tape, self.tape, "variable does not belong to this tape");
        self.get(v)
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; self.lens[v.index]])
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norm2_gradient_is_unit_vector() {
        let mut t = Tape::new();
        let x = t.param(vec![3.0, 4.0]);
        let n = t.norm2(x).unwrap();
        assert_eq!(t.scalar(n), 5.0);
        assert_eq!(t.backward(n).unwrap().wrt(x), vec![0.6, 0.8]);
    }

    #[test]
    fn norm2_at_zero_has_zero_gradient() {
        let mut t = Tape::new();
        let x = t.param(vec![0.0, 0.0]);
        let n = t.norm2(x).unwrap();
        assert_eq!(t.backward(n).unwrap().wrt(x), vec![0.0, 0.0]);
    }

    #[test]
    fn self_dot_gradient() {
        let mut t = Tape::new();
        let x = t.param(vec![1.0, -2.0, 0.5]);
        let d = t.dot(x, x).unwrap();
        assert_eq!(t.backward(d).unwrap().wrt(x), vec![2.0, -4.0, 1.0]);
    }

    #[test]
    fn loss_is_the_variable() {
        let mut t = Tape::new();
        let x = t.param(vec![7.0]);
        assert_eq!(t.backward(x).unwrap().wrt(x), vec![1.0]);
    }

    #[test]
    fn unused_leaf_gets_zero_gradient() {
        let mut t = Tape::new();
        let x = t.param(vec![1.0, 2.0]);
        let y = t.param(vec![5.0]);
        let s = t.sum(x).unwrap();
        let g = t.backward(s).unwrap();
        assert!(g.get(y).is_none());
        assert_eq!(g.wrt(y), vec![0.0]);
        assert_eq!(g.wrt(x), vec![1.0, 1.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut t = Tape::new();
        let x = t.param(vec![1.0, 2.0]);
        assert_eq!(t.backward(x).unwrap_err(), AdError::NonScalarLoss(2));
    }

    #[test]
    fn shape_mismatch_reported() {
        let mut t = Tape::new();
        let x = t.param(vec![1.0, 2.0]);
        let y = t.param(vec![1.0]);
        assert!(matches!(t.add(x, y), Err(AdError::ShapeMismatch { op: "add", .. })));
        assert!(t.dot(x, y).is_err());
        assert!(t.slice(x, 1, 2).is_err());
    }

    #[test]
    fn foreign_variable_rejected() {
        let mut t1 = Tape::new();
        let mut t2 = Tape::new();
        let x = t1.param(vec![1.0]);
        let y = t2.param(vec![1.0]);
        assert_eq!(t2.add(x, y).unwrap_err(), AdError::ForeignVariable);
    }

    #[test]
    fn fan_out_accumulates() {
        // J = sum(x) + sum(3x) -> dJ/dx = 4
        let mut t = Tape::new();
        let x = t.param(vec![1.0, 2.0]);
        let s1 = t.sum(x).unwrap();
        let x3 = t.scale(x, 3.0).unwrap();
        let s2 = t.sum(x3).unwrap();
        let j = t.add(s1, s2).unwrap();
        assert_eq!(t.backward(j).unwrap().wrt(x), vec![4.0, 4.0]);
    }

    #[test]
    fn concat_slice_broadcast_mean_abs() {
        let mut t = Tape::new();
        let a = t.param(vec![1.0, -2.0]);
        let f = t.param(vec![0.5]);
        let b = t.broadcast(f, 3).unwrap();
        let c = t.concat(&[a, b]).unwrap();
        assert_eq!(t.value(c), &[1.0, -2.0, 0.5, 0.5, 0.5]);
        let s = t.slice(c, 1, 3).unwrap();
        let ab = t.abs(s).unwrap();
        let m = t.mean(ab).unwrap();
        let g = t.backward(m).unwrap();
        assert_eq!(g.wrt(a), vec![0.0, -1.0 / 3.0]);
        assert_eq!(g.wrt(f), vec![2.0 / 3.0]);
    }

    #[test]
    fn clamp_blocks_gradient_below_floor() {
        let mut t = Tape::new();
        let x = t.param(vec![-1.0, 2.0]);
        let c = t.clamp_min(x, 0.0).unwrap();
        assert_eq!(t.value(c), &[0.0, 2.0]);
        let s = t.sum(c).unwrap();
        assert_eq!(t.backward(s).unwrap().wrt(x), vec![0.0, 1.0]);
    }

    #[test]
    fn affine_batch_single_neuron_closed_form() {
        // y = sigmoid(w·p + b) · v at two points
        let mut t = Tape::new();
        let pts = t.constant(vec![0.0, 0.0, 1.0, 2.0]);
        let w = t.param(vec![0.5, -0.25]);
        let b = t.param(vec![0.1]);
        let h = t.affine_batch(pts, w, b, 2, 1).unwrap();
        let s = t.sigmoid(h).unwrap();
        let v = t.constant(vec![2.0, 2.0]);
        let y = t.mul(s, v).unwrap();
        let expect = |x: f64, y: f64| 2.0 / (1.0 + (-(0.5 * x - 0.25 * y + 0.1f64)).exp());
        assert!((t.value(y)[0] - expect(0.0, 0.0)).abs() < 1e-15);
        assert!((t.value(y)[1] - expect(1.0, 2.0)).abs() < 1e-15);
    }

    #[test]
    fn constants_do_not_record_gradients() {
        let mut t = Tape::new();
        let c = t.constant(vec![1.0, 2.0]);
        let x = t.param(vec![3.0, 4.0]);
        let p = t.mul(c, x).unwrap();
        let s = t.sum(p).unwrap();
        let g = t.backward(s).unwrap();
        assert!(g.get(c).is_none());
        assert_eq!(g.wrt(x), vec![1.0, 2.0]);
    }
}
