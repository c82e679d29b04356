//! Minimal reverse-mode differentiation over dense tensors.
//!
//! A [`Tape`] is an arena of nodes; [`NodeId`]s index into it and are only
//! valid for the tape that created them. Nodes are appended in evaluation
//! order, so reverse index order is a valid topological order for the
//! backward pass.
//!
//! Gradients accumulate. After one [`Tape::backward`] the caller must call
//! [`Tape::zero_grad`] before another; a second backward without it returns
//! [`Error::GradientsNotZeroed`]. `relu'(0)` is taken to be `0`.

use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, T),
    MatMul(NodeId, NodeId),
    Tanh(NodeId),
    Relu(NodeId),
    Sum(NodeId),
    Mse(NodeId, NodeId),
    Gather(NodeId, Vec<usize>),
}

#[derive(Clone, Debug)]
struct Node<T> {
    value: Vec<T>,
    shape: Vec<usize>,
    grad: Vec<T>,
    op: Op<T>,
    requires_grad: bool,
}

#[derive(Clone, Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    backward_done: bool,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), backward_done: false }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Vec<T>, shape: Vec<usize>, op: Op<T>, requires_grad: bool) -> NodeId {
        let grad = vec![T::zero(); value.len()];
        self.nodes.push(Node { value, shape, grad, op, requires_grad });
        NodeId(self.nodes.len() - 1)
    }

    fn node(&self, id: NodeId) -> &Node<T> {
        &self.nodes[id.0]
    }

    fn leaf_inner(&mut self, value: Vec<T>, shape: &[usize], requires_grad: bool) -> Result<NodeId> {
        if shape.is_empty() || numel(shape) != value.len() {
            return invalid(format!("{} values do not fill shape {shape:?}", value.len()));
        }
        Ok(self.push(value, shape.to_vec(), Op::Leaf, requires_grad))
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Vec<T>, shape: &[usize]) -> Result<NodeId> {
        self.leaf_inner(value, shape, true)
    }

    pub fn constant(&mut self, value: Vec<T>, shape: &[usize]) -> Result<NodeId> {
        self.leaf_inner(value, shape, false)
    }

    pub fn value(&self, id: NodeId) -> &[T] {
        &self.node(id).value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.node(id).shape
    }

    pub fn grad(&self, id: NodeId) -> &[T] {
        &self.node(id).grad
    }

    /// Value of a one-element node.
    pub fn scalar(&self, id: NodeId) -> T {
        self.node(id).value[0]
    }

    fn rg(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|&i| self.node(i).requires_grad)
    }

    fn same_shape(&self, a: NodeId, b: NodeId, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return invalid(format!("{what}: shape {:?} vs {:?}", self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    fn zip_map(&mut self, a: NodeId, b: NodeId, op: Op<T>, f: impl Fn(T, T) -> T, what: &str) -> Result<NodeId> {
        self.same_shape(a, b, what)?;
        let value = self.value(a).iter().zip(self.value(b)).map(|(x, y)| f(*x, *y)).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, shape, op, rg))
    }

    fn map(&mut self, a: NodeId, op: Op<T>, f: impl Fn(T) -> T) -> NodeId {
        let value = self.value(a).iter().map(|x| f(*x)).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(&[a]);
        self.push(value, shape, op, rg)
    }

    pub fn tensor_add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip_map(a, b, Op::Add(a, b), |x, y| x + y, "tensor_add")
    }

    pub fn tensor_sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip_map(a, b, Op::Sub(a, b), |x, y| x - y, "tensor_sub")
    }

    /// Elementwise product.
    pub fn tensor_mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip_map(a, b, Op::Mul(a, b), |x, y| x * y, "tensor_mul")
    }

    pub fn tensor_scale(&mut self, a: NodeId, s: T) -> NodeId {
        self.map(a, Op::Scale(a, s), |x| x * s)
    }

    /// `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return invalid(format!("matmul: shape {sa:?} x {sb:?}"));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            for p in 0..k {
                let x = av[i * k + p];
                if x == T::zero() {
                    continue;
                }
                for j in 0..n {
                    out[i * n + j] += x * bv[p * n + j];
                }
            }
        }
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, vec![m, n], Op::MatMul(a, b), rg))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.map(a, Op::Tanh(a), |x| x.tanh())
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.map(a, Op::Relu(a), |x| if x > T::zero() { x } else { T::zero() })
    }

    pub fn reduce_sum(&mut self, a: NodeId) -> NodeId {
        let s = self.value(a).iter().copied().sum();
        let rg = self.rg(&[a]);
        self.push(vec![s], vec![1], Op::Sum(a), rg)
    }

    /// Mean of squared differences.
    pub fn mse_loss(&mut self, pred: NodeId, target: NodeId) -> Result<NodeId> {
        self.same_shape(pred, target, "mse_loss")?;
        let n = T::from_usize_lossy(self.value(pred).len());
        let s = self.value(pred).iter().zip(self.value(target)).map(|(p, t)| (*p - *t) * (*p - *t)).sum::<T>() / n;
        let rg = self.rg(&[pred, target]);
        Ok(self.push(vec![s], vec![1], Op::Mse(pred, target), rg))
    }

    /// `out[k] = src[index[k]]`, reshaped to `shape`. Repeated indices are
    /// allowed; their gradients add up.
    pub fn gather(&mut self, src: NodeId, index: Vec<usize>, shape: &[usize]) -> Result<NodeId> {
        let n = self.value(src).len();
        if numel(shape) != index.len() || shape.is_empty() {
            return invalid("gather: index length does not fill shape");
        }
        if let Some(&bad) = index.iter().find(|&&i| i >= n) {
            return invalid(format!("gather: index {bad} out of range for {n} values"));
        }
        let value = index.iter().map(|&i| self.value(src)[i]).collect();
        let rg = self.rg(&[src]);
        Ok(self.push(value, shape.to_vec(), Op::Gather(src, index), rg))
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad.iter_mut().for_each(|g| *g = T::zero());
        }
        self.backward_done = false;
    }

    /// Propagates `d loss / d node` into every node that requires a gradient.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.value(loss).len() != 1 {
            return invalid(format!("backward needs a scalar loss, got shape {:?}", self.shape(loss)));
        }
        if self.backward_done {
            return Err(Error::GradientsNotZeroed);
        }
        self.backward_done = true;
        self.nodes[loss.0].grad[0] += T::one();
        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let op = self.nodes[idx].op.clone();
            // split borrow: parents always have smaller indices
            let (before, rest) = self.nodes.split_at_mut(idx);
            let out = &rest[0];
            let gout = &out.grad;
            match op {
                Op::Leaf => {}
                Op::Add(a, b) | Op::Sub(a, b) => {
                    let sign = if matches!(op, Op::Sub(..)) { -T::one() } else { T::one() };
                    if a == b {
                        let k = T::one() + sign;
                        for (g, &go) in before[a.0].grad.iter_mut().zip(gout) {
                            *g += k * go;
                        }
                    } else {
                        for (g, &go) in before[a.0].grad.iter_mut().zip(gout) {
                            *g += go;
                        }
                        for (g, &go) in before[b.0].grad.iter_mut().zip(gout) {
                            *g += sign * go;
                        }
                    }
                }
                Op::Mul(a, b) => {
                    let av = before[a.0].value.clone();
                    let bv = before[b.0].value.clone();
                    for (i, &go) in gout.iter().enumerate() {
                        before[a.0].grad[i] += go * bv[i];
                        before[b.0].grad[i] += go * av[i];
                    }
                }
                Op::Scale(a, s) => {
                    for (g, &go) in before[a.0].grad.iter_mut().zip(gout) {
                        *g += s * go;
                    }
                }
                Op::MatMul(a, b) => {
                    let (m, k) = (before[a.0].shape[0], before[a.0].shape[1]);
                    let n = before[b.0].shape[1];
                    let av = before[a.0].value.clone();
                    let bv = before[b.0].value.clone();
                    // dA = dC B^T, dB = A^T dC
                    for i in 0..m {
                        for p in 0..k {
                            let mut acc = T::zero();
                            for j in 0..n {
                                acc += gout[i * n + j] * bv[p * n + j];
                            }
                            before[a.0].grad[i * k + p] += acc;
                        }
                    }
                    for p in 0..k {
                        for j in 0..n {
                            let mut acc = T::zero();
                            for i in 0..m {
                                acc += av[i * k + p] * gout[i * n + j];
                            }
                            before[b.0].grad[p * n + j] += acc;
                        }
                    }
                }
                Op::Tanh(a) => {
                    for (i, &go) in gout.iter().enumerate() {
                        let y = out.value[i];
                        before[a.0].grad[i] += go * (T::one() - y * y);
                    }
                }
                Op::Relu(a) => {
                    for (i, &go) in gout.iter().enumerate() {
                        if before[a.0].value[i] > T::zero() {
                            before[a.0].grad[i] += go;
                        }
                    }
                }
                Op::Sum(a) => {
                    let go = gout[0];
                    before[a.0].grad.iter_mut().for_each(|g| *g += go);
                }
                Op::Mse(p, t) => {
                    let n = T::from_usize_lossy(before[p.0].value.len());
                    let k = T::lit(2.0) * gout[0] / n;
                    let diff: Vec<T> = before[p.0].value.iter().zip(&before[t.0].value).map(|(a, b)| *a - *b).collect();
                    if p == t {
                        // loss is identically zero
                    } else {
                        for (i, d) in diff.iter().enumerate() {
                            before[p.0].grad[i] += k * *d;
                            before[t.0].grad[i] -= k * *d;
                        }
                    }
                }
                Op::Gather(src, ref index) => {
                    for (k, &i) in index.iter().enumerate() {
                        before[src.0].grad[i] += gout[k];
                    }
                }
            }
        }
        Ok(())
    }
}

/// Central differences `(f(p + h e_i) - f(p - h e_i)) / 2h` per coordinate.
pub fn finite_difference_gradient<T: Scalar, F: FnMut(&[T]) -> T>(mut f: F, p: &[T], h: T) -> Result<Vec<T>> {
    if !(h > T::zero()) {
        return invalid("finite-difference step must be positive");
    }
    let mut x = p.to_vec();
    let two_h = h + h;
    let mut out = Vec::with_capacity(p.len());
    for i in 0..p.len() {
        let orig = x[i];
        x[i] = orig + h;
        let up = f(&x);
        x[i] = orig - h;
        let down = f(&x);
        x[i] = orig;
        out.push((up - down) / two_h);
    }
    Ok(out)
}

/// Largest elementwise relative error `|a - b| / max(|a|, |b|, floor)`.
pub fn max_relative_error<T: Scalar>(a: &[T], b: &[T], floor: T) -> T {
    a.iter().zip(b).map(|(x, y)| (*x - *y).abs() / x.abs().max(y.abs()).max(floor)).fold(T::zero(), |m, v| m.max(v))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_of_identical_is_zero() {
        let mut t = Tape::<f64>::new();
        let x = t.param(vec![1.0, -2.0, 3.0], &[3]).unwrap();
        let l = t.mse_loss(x, x).unwrap();
        assert_eq!(t.scalar(l), 0.0);
        t.backward(l).unwrap();
        assert!(t.grad(x).iter().all(|&g| g == 0.0));
    }

    #[test]
    fn identity_matmul() {
        let mut t = Tape::<f64>::new();
        let i = t.constant(vec![1.0, 0.0, 0.0, 1.0], &[2, 2]).unwrap();
        let a = t.param(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[2, 3]).unwrap();
        let c = t.matmul(i, a).unwrap();
        assert_eq!(t.value(c), t.value(a));
        assert!(t.matmul(a, a).is_err());
    }

    #[test]
    fn tanh_at_origin() {
        let mut t = Tape::<f64>::new();
        let x = t.param(vec![0.0], &[1]).unwrap();
        let y = t.tanh(x);
        assert_eq!(t.scalar(y), 0.0);
        t.backward(y).unwrap();
        assert_eq!(t.grad(x), &[1.0]);
    }

    #[test]
    fn sum_gives_ones() {
        let mut t = Tape::<f64>::new();
        let x = t.param(vec![0.3; 5], &[5]).unwrap();
        let s = t.reduce_sum(x);
        t.backward(s).unwrap();
        assert_eq!(t.grad(x), &[1.0; 5]);
    }

    #[test]
    fn scalar_regression_gradient() {
        let (w0, x0, y0) = (1.5, -0.7, 2.0);
        let mut t = Tape::<f64>::new();
        let w = t.param(vec![w0], &[1]).unwrap();
        let wx = t.tensor_scale(w, x0);
        let y = t.constant(vec![y0], &[1]).unwrap();
        let l = t.mse_loss(wx, y).unwrap();
        t.backward(l).unwrap();
        assert!((t.grad(w)[0] - 2.0 * (w0 * x0 - y0) * x0).abs() < 1e-14);
    }

    #[test]
    fn non_scalar_backward_rejected() {
        let mut t = Tape::<f64>::new();
        let x = t.param(vec![1.0, 2.0], &[2]).unwrap();
        assert!(matches!(t.backward(x), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn double_backward_requires_zero_grad() {
        let mut t = Tape::<f64>::new();
        let x = t.param(vec![2.0], &[1]).unwrap();
        let y = t.tensor_mul(x, x).unwrap();
        t.backward(y).unwrap();
        assert!(matches!(t.backward(y), Err(Error::GradientsNotZeroed)));
        t.zero_grad();
        t.backward(y).unwrap();
        assert_eq!(t.grad(x), &[4.0]);
    }

    #[test]
    fn reused_node_accumulates() {
        // f = sum(x*x + x) + sum(tanh(x)), d/dx = 2x + 1 + 1 - tanh(x)^2
        let xs = vec![0.5, -1.0, 2.0];
        let mut t = Tape::<f64>::new();
        let x = t.param(xs.clone(), &[3]).unwrap();
        let sq = t.tensor_mul(x, x).unwrap();
        let a = t.tensor_add(sq, x).unwrap();
        let th = t.tanh(x);
        let b = t.tensor_add(a, th).unwrap();
        let l = t.reduce_sum(b);
        t.backward(l).unwrap();
        for (g, x) in t.grad(x).iter().zip(&xs) {
            let want = 2.0 * x + 1.0 + 1.0 - x.tanh().powi(2);
            assert!((g - want).abs() < 1e-14);
        }
        let mut t = Tape::<f64>::new();
        let x = t.param(vec![1.0, 2.0], &[2]).unwrap();
        let d = t.tensor_add(x, x).unwrap();
        let s = t.reduce_sum(d);
        t.backward(s).unwrap();
        assert_eq!(t.grad(x), &[2.0, 2.0]);
        let mut t = Tape::<f64>::new();
        let x = t.param(vec![1.0, 2.0], &[2]).unwrap();
        let d = t.tensor_sub(x, x).unwrap();
        let s = t.reduce_sum(d);
        t.backward(s).unwrap();
        assert_eq!(t.grad(x), &[0.0, 0.0]);
    }

    #[test]
    fn relu_subgradient_at_zero() {
        let mut t = Tape::<f64>::new();
        let x = t.param(vec![-1.0, 0.0, 1.0], &[3]).unwrap();
        let y = t.relu(x);
        let s = t.reduce_sum(y);
        t.backward(s).unwrap();
        assert_eq!(t.grad(x), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn gather_scatters_back() {
        let mut t = Tape::<f64>::new();
        let x = t.param(vec![1.0, 2.0, 3.0], &[3]).unwrap();
        let g = t.gather(x, vec![2, 0, 2, 2], &[2, 2]).unwrap();
        assert_eq!(t.value(g), &[3.0, 1.0, 3.0, 3.0]);
        let s = t.reduce_sum(g);
        t.backward(s).unwrap();
        assert_eq!(t.grad(x), &[1.0, 0.0, 3.0]);
        assert!(t.gather(x, vec![3], &[1]).is_err());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut t = Tape::<f64>::new();
        let a = t.param(vec![1.0, 2.0], &[2]).unwrap();
        let b = t.param(vec![1.0, 2.0, 3.0], &[3]).unwrap();
        assert!(t.tensor_add(a, b).is_err());
        assert!(t.mse_loss(a, b).is_err());
        assert!(t.param(vec![1.0], &[2]).is_err());
    }

    #[test]
    fn finite_difference_examples() {
        let g = finite_difference_gradient(|p: &[f64]| p[0] * p[0], &[3.0], 1e-5).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-6);
        let g = finite_difference_gradient(|_: &[f64]| 4.2, &[1.0, 2.0, 3.0], 1e-5).unwrap();
        assert_eq!(g, vec![0.0; 3]);
        assert!(finite_difference_gradient(|_: &[f64]| 0.0, &[1.0], 0.0).is_err());
    }
}
