//! Reverse-mode differentiation over an append-only tape.
//!
//! Every operation evaluates eagerly and appends a node; `backward` walks the
//! tape once in reverse creation order, which is a valid reverse topological
//! order because a node can only reference earlier nodes.

use super::kernels;
use super::{Real, TensorOf};
use crate::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Conv2d { input: Var, kernel: Var, bias: Var, stride: usize, padding: usize },
    ConvTranspose2d { input: Var, kernel: Var, bias: Var, stride: usize, padding: usize },
    MaxPool2d { input: Var, argmax: Vec<usize> },
    ChannelAffine { input: Var, scale: Vec<T> },
    Relu(Var),
    Tanh(Var),
    Softmax { input: Var, axis: usize },
    Concat { inputs: Vec<Var>, axis: usize },
    MatMul(Var, Var),
    Sum(Var),
    WeightedSum { input: Var, weights: Vec<T> },
    Mse { pred: Var, target: Var },
    CrossEntropy { logits: Var, probs: Vec<T>, targets: Vec<usize> },
}

#[derive(Debug)]
struct Node<T> {
    value: TensorOf<T>,
    op: Op<T>,
    needs_grad: bool,
}

#[derive(Debug)]
pub struct GraphOf<T> {
    nodes: Vec<Node<T>>,
}

pub type Graph = GraphOf<f32>;
pub type Graph64 = GraphOf<f64>;

impl<T> Default for GraphOf<T> {
    fn default() -> Self {
        Self { nodes: Vec::new() }
    }
}

/// Result of [`GraphOf::backward`]: one gradient per node that needed one.
#[derive(Debug)]
pub struct GradientsOf<T> {
    grads: Vec<Option<Vec<T>>>,
    shapes: Vec<Vec<usize>>,
}

pub type Gradients = GradientsOf<f32>;

impl<T: Real> GradientsOf<T> {
    pub fn get(&self, var: Var) -> Option<TensorOf<T>> {
        let data = self.grads.get(var.0)?.as_ref()?;
        TensorOf::new(&self.shapes[var.0], data.clone()).ok()
    }

    /// Borrowing access without building a tensor.
    pub fn raw(&self, var: Var) -> Option<&[T]> {
        self.grads.get(var.0)?.as_deref()
    }
}

impl<T: Real> GraphOf<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &TensorOf<T> {
        &self.nodes[var.0].value
    }

    pub fn needs_grad(&self, var: Var) -> bool {
        self.nodes[var.0].needs_grad
    }

    /// Adds a leaf; it takes part in `backward` iff `tensor.requires_grad()`.
    pub fn leaf(&mut self, tensor: TensorOf<T>) -> Var {
        let needs_grad = tensor.requires_grad();
        self.push(tensor, Op::Leaf, needs_grad)
    }

    /// A constant copy of `var` that blocks gradient flow.
    pub fn detach(&mut self, var: Var) -> Var {
        let mut value = self.value(var).clone();
        value.set_requires_grad(false);
        self.push(value, Op::Leaf, false)
    }

    fn push(&mut self, value: TensorOf<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|&v| self.needs_grad(v))
    }

    pub fn conv2d(&mut self, input: Var, kernel: Var, bias: Var, stride: usize, padding: usize) -> Result<Var> {
        let out = kernels::conv2d(self.value(input), self.value(kernel), self.value(bias), stride, padding)?;
        let needs = self.any_grad(&[input, kernel, bias]);
        Ok(self.push(out, Op::Conv2d { input, kernel, bias, stride, padding }, needs))
    }

    /// Transposed convolution; `kernel` is laid out `[in, out, kh, kw]`.
    pub fn conv_transpose2d(
        &mut self,
        input: Var,
        kernel: Var,
        bias: Var,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let out = kernels::conv_transpose2d(self.value(input), self.value(kernel), self.value(bias), stride, padding)?;
        let needs = self.any_grad(&[input, kernel, bias]);
        Ok(self.push(out, Op::ConvTranspose2d { input, kernel, bias, stride, padding }, needs))
    }

    pub fn maxpool2d(&mut self, input: Var, window: usize, stride: usize) -> Result<Var> {
        let (out, argmax) = kernels::maxpool2d(self.value(input), window, stride)?;
        let needs = self.needs_grad(input);
        Ok(self.push(out, Op::MaxPool2d { input, argmax }, needs))
    }

    /// Flat input index routed to each pooled output, for inspection.
    pub fn pool_indices(&self, var: Var) -> Option<&[usize]> {
        match &self.nodes[var.0].op {
            Op::MaxPool2d { argmax, .. } => Some(argmax),
            _ => None,
        }
    }

    fn unary(&mut self, input: Var, f: impl Fn(T) -> T, op: Op<T>) -> Var {
        let src = self.value(input);
        let data = src.data().iter().map(|&v| f(v)).collect();
        let out = TensorOf::new(src.shape(), data).expect("shape preserved");
        let needs = self.needs_grad(input);
        self.push(out, op, needs)
    }

    /// `x * scale[c] + shift[c]` along axis 1 with constant coefficients.
    pub fn channel_affine(&mut self, input: Var, scale: &[T], shift: &[T]) -> Result<Var> {
        let src = self.value(input);
        let (outer, channels, inner) = kernels::axis_split(src.shape(), 1)?;
        if scale.len() != channels || shift.len() != channels {
            return Err(Error::Dimension(format!(
                "{} scales and {} shifts for {channels} channels",
                scale.len(),
                shift.len()
            )));
        }
        let mut data = Vec::with_capacity(src.len());
        for o in 0..outer {
            for c in 0..channels {
                let start = (o * channels + c) * inner;
                data.extend(src.data()[start..start + inner].iter().map(|&v| v * scale[c] + shift[c]));
            }
        }
        let out = TensorOf::new(src.shape(), data)?;
        let needs = self.needs_grad(input);
        Ok(self.push(out, Op::ChannelAffine { input, scale: scale.to_vec() }, needs))
    }

    pub fn relu(&mut self, input: Var) -> Var {
        self.unary(input, |v| if v < T::zero() { T::zero() } else { v }, Op::Relu(input))
    }

    pub fn tanh(&mut self, input: Var) -> Var {
        self.unary(input, T::tanh, Op::Tanh(input))
    }

    pub fn softmax(&mut self, input: Var, axis: usize) -> Result<Var> {
        let out = kernels::softmax(self.value(input), axis)?;
        let needs = self.needs_grad(input);
        Ok(self.push(out, Op::Softmax { input, axis }, needs))
    }

    /// Concatenates along `axis`; all other extents must agree.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = inputs
            .first()
            .ok_or_else(|| Error::Usage("concat of zero tensors".into()))?;
        let base = self.value(*first).shape().to_vec();
        kernels::axis_split(&base, axis)?;
        let mut shape = base.clone();
        shape[axis] = 0;
        for &v in inputs {
            let s = self.value(v).shape();
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(Error::Dimension(format!("cannot concat {s:?} with {base:?} on axis {axis}")));
            }
            shape[axis] += s[axis];
        }
        let (outer, _, inner) = kernels::axis_split(&shape, axis)?;
        let mut data = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for &v in inputs {
                let t = self.value(v);
                let chunk = t.shape()[axis] * inner;
                data.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let needs = self.any_grad(inputs);
        let out = TensorOf::new(&shape, data)?;
        Ok(self.push(out, Op::Concat { inputs: inputs.to_vec(), axis }, needs))
    }

    /// Rank-2 matrix product `[m,k]·[k,n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        let (&[m, k], &[k2, n]) = (sa, sb) else {
            return Err(Error::Dimension(format!("matmul needs rank-2 operands, got {sa:?} and {sb:?}")));
        };
        if k != k2 {
            return Err(Error::Dimension(format!("matmul inner extents differ: {sa:?} vs {sb:?}")));
        }
        let mut out = vec![T::zero(); m * n];
        kernels::gemm(m, k, n, self.value(a).data(), false, self.value(b).data(), false, &mut out, false);
        let needs = self.any_grad(&[a, b]);
        Ok(self.push(TensorOf::new(&[m, n], out)?, Op::MatMul(a, b), needs))
    }

    pub fn sum(&mut self, input: Var) -> Var {
        let total: T = self.value(input).data().iter().copied().sum();
        let needs = self.needs_grad(input);
        self.push(TensorOf::scalar(total), Op::Sum(input), needs)
    }

    /// `Σ wᵢ·xᵢ` with fixed weights, accumulated in `f64`.
    pub fn weighted_sum(&mut self, input: Var, weights: Vec<T>) -> Result<Var> {
        let x = self.value(input).data();
        if weights.len() != x.len() {
            return Err(Error::Dimension(format!("{} weights for {} values", weights.len(), x.len())));
        }
        let total: f64 = x.iter().zip(&weights).map(|(&a, &w)| to64(a) * to64(w)).sum();
        let needs = self.needs_grad(input);
        Ok(self.push(TensorOf::scalar(T::from_f64(total)), Op::WeightedSum { input, weights }, needs))
    }

    /// Mean of squared differences over all elements.
    pub fn mse_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        let (p, t) = (self.value(pred), self.value(target));
        if p.shape() != t.shape() {
            return Err(Error::Dimension(format!("mse shapes differ: {:?} vs {:?}", p.shape(), t.shape())));
        }
        let total: f64 = p
            .data()
            .iter()
            .zip(t.data())
            .map(|(&a, &b)| {
                let d = to64(a - b);
                d * d
            })
            .sum();
        let loss = T::from_f64(total / p.len() as f64);
        let needs = self.any_grad(&[pred, target]);
        Ok(self.push(TensorOf::scalar(loss), Op::Mse { pred, target }, needs))
    }

    /// Mean negative log-likelihood of `targets` under a softmax over axis 1.
    ///
    /// `logits` is `[N, C, ...]`; `targets` holds one class index per
    /// `N × ...` position in row-major order.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let x = self.value(logits);
        let (outer, classes, inner) = kernels::axis_split(x.shape(), 1)?;
        if targets.len() != outer * inner {
            return Err(Error::Dimension(format!(
                "{} targets for logits {:?} ({} positions)",
                targets.len(),
                x.shape(),
                outer * inner
            )));
        }
        if let Some(bad) = targets.iter().find(|&&t| t >= classes) {
            return Err(Error::Dimension(format!("class index {bad} outside [0, {classes})")));
        }
        let probs = kernels::softmax(x, 1)?.into_data();
        let mut total = 0.0f64;
        for o in 0..outer {
            for i in 0..inner {
                let t = targets[o * inner + i];
                let at = |k: usize| (o * classes + k) * inner + i;
                // log-softmax directly from logits to avoid log(0)
                let max = to64((0..classes).map(|k| x.data()[at(k)]).fold(T::neg_infinity(), T::max));
                let lse = (0..classes).map(|k| (to64(x.data()[at(k)]) - max).exp()).sum::<f64>().ln() + max;
                total += lse - to64(x.data()[at(t)]);
            }
        }
        let loss = T::from_f64(total / targets.len() as f64);
        let needs = self.needs_grad(logits);
        Ok(self.push(
            TensorOf::scalar(loss),
            Op::CrossEntropy { logits, probs, targets: targets.to_vec() },
            needs,
        ))
    }

    /// Gradients of the scalar `loss` with respect to every node that needs one.
    pub fn backward(&self, loss: Var) -> Result<GradientsOf<T>> {
        if self.value(loss).len() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        if self.needs_grad(loss) {
            grads[loss.0] = Some(vec![T::one()]);
        }
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        // Intermediate nodes that never reached a grad-requiring leaf stay None.
        Ok(GradientsOf { grads, shapes })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<T>>], var: Var, delta: impl FnOnce(&mut [T])) {
        if !self.needs_grad(var) {
            return;
        }
        let slot = grads[var.0].get_or_insert_with(|| vec![T::zero(); self.nodes[var.0].value.len()]);
        delta(slot);
    }

    fn add_into(&self, grads: &mut [Option<Vec<T>>], var: Var, values: &[T]) {
        self.accumulate(grads, var, |g| {
            for (a, b) in g.iter_mut().zip(values) {
                *a += *b;
            }
        });
    }

    fn propagate(&self, idx: usize, g: &[T], grads: &mut [Option<Vec<T>>]) -> Result<()> {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            &Op::Conv2d { input, kernel, bias, stride, padding } => {
                let out = kernels::conv2d_backward(
                    self.value(input),
                    self.value(kernel),
                    self.value(bias),
                    stride,
                    padding,
                    g,
                    self.needs_grad(input),
                )?;
                if let Some(dx) = &out.input {
                    self.add_into(grads, input, dx);
                }
                self.add_into(grads, kernel, &out.kernel);
                self.add_into(grads, bias, &out.bias);
            }
            &Op::ConvTranspose2d { input, kernel, bias, stride, padding } => {
                let out = kernels::conv_transpose2d_backward(
                    self.value(input),
                    self.value(kernel),
                    self.value(bias),
                    stride,
                    padding,
                    g,
                    self.needs_grad(input),
                )?;
                if let Some(dx) = &out.input {
                    self.add_into(grads, input, dx);
                }
                self.add_into(grads, kernel, &out.kernel);
                self.add_into(grads, bias, &out.bias);
            }
            Op::MaxPool2d { input, argmax } => {
                self.accumulate(grads, *input, |dx| {
                    for (&src, &gv) in argmax.iter().zip(g) {
                        dx[src] += gv;
                    }
                });
            }
            Op::ChannelAffine { input, scale } => {
                let (_, channels, inner) = kernels::axis_split(self.value(*input).shape(), 1)?;
                self.accumulate(grads, *input, |dx| {
                    for (i, (d, &gv)) in dx.iter_mut().zip(g).enumerate() {
                        *d += gv * scale[(i / inner) % channels];
                    }
                });
            }
            &Op::Relu(input) => {
                let x = self.value(input).data();
                self.accumulate(grads, input, |dx| {
                    for ((d, &xv), &gv) in dx.iter_mut().zip(x).zip(g) {
                        if xv > T::zero() {
                            *d += gv;
                        }
                    }
                });
            }
            &Op::Tanh(input) => {
                let y = node.value.data();
                self.accumulate(grads, input, |dx| {
                    for ((d, &yv), &gv) in dx.iter_mut().zip(y).zip(g) {
                        *d += gv * (T::one() - yv * yv);
                    }
                });
            }
            &Op::Softmax { input, axis } => {
                let y = node.value.data();
                let (outer, dim, inner) = kernels::axis_split(node.value.shape(), axis)?;
                self.accumulate(grads, input, |dx| {
                    for o in 0..outer {
                        for i in 0..inner {
                            let at = |k: usize| (o * dim + k) * inner + i;
                            let dot: T = (0..dim).map(|k| y[at(k)] * g[at(k)]).sum();
                            for k in 0..dim {
                                dx[at(k)] += y[at(k)] * (g[at(k)] - dot);
                            }
                        }
                    }
                });
            }
            Op::Concat { inputs, axis } => {
                let (outer, _, inner) = kernels::axis_split(node.value.shape(), *axis)?;
                let mut offset = 0;
                for o in 0..outer {
                    for &v in inputs {
                        let chunk = self.value(v).shape()[*axis] * inner;
                        let src = &g[offset..offset + chunk];
                        self.accumulate(grads, v, |dx| {
                            for (d, s) in dx[o * chunk..(o + 1) * chunk].iter_mut().zip(src) {
                                *d += *s;
                            }
                        });
                        offset += chunk;
                    }
                }
            }
            &Op::MatMul(a, b) => {
                let (m, k) = (self.value(a).shape()[0], self.value(a).shape()[1]);
                let n = self.value(b).shape()[1];
                let (av, bv) = (self.value(a).data(), self.value(b).data());
                self.accumulate(grads, a, |da| kernels::gemm(m, n, k, g, false, bv, true, da, true));
                self.accumulate(grads, b, |db| kernels::gemm(k, m, n, av, true, g, false, db, true));
            }
            &Op::Sum(input) => {
                self.accumulate(grads, input, |dx| dx.iter_mut().for_each(|d| *d += g[0]));
            }
            Op::WeightedSum { input, weights } => {
                self.accumulate(grads, *input, |dx| {
                    for (d, &w) in dx.iter_mut().zip(weights) {
                        *d += g[0] * w;
                    }
                });
            }
            &Op::Mse { pred, target } => {
                let (p, t) = (self.value(pred).data(), self.value(target).data());
                let scale = (g[0] + g[0]) / T::from_f64(p.len() as f64);
                self.accumulate(grads, pred, |dp| {
                    for ((d, &a), &b) in dp.iter_mut().zip(p).zip(t) {
                        *d += scale * (a - b);
                    }
                });
                self.accumulate(grads, target, |dt| {
                    for ((d, &a), &b) in dt.iter_mut().zip(p).zip(t) {
                        *d -= scale * (a - b);
                    }
                });
            }
            Op::CrossEntropy { logits, probs, targets } => {
                let (outer, classes, inner) = kernels::axis_split(self.value(*logits).shape(), 1)?;
                let scale = g[0] / T::from_f64(targets.len() as f64);
                self.accumulate(grads, *logits, |dx| {
                    for o in 0..outer {
                        for i in 0..inner {
                            let t = targets[o * inner + i];
                            for k in 0..classes {
                                let at = (o * classes + k) * inner + i;
                                let onehot = if k == t { T::one() } else { T::zero() };
                                dx[at] += scale * (probs[at] - onehot);
                            }
                        }
                    }
                });
            }
        }
        Ok(())
    }
}

fn to64<T: Real>(v: T) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}
