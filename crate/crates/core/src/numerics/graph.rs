//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Graph`] records every primitive application in execution order, so the
//! tape is topologically sorted by construction. [`Graph::backward`] walks it
//! in reverse, accumulating vector-Jacobian products into a [`Gradients`]
//! table indexed by [`Var`].
//!
//! ```
//! use matra_core::numerics::{Graph, Tensor};
//!
//! let mut g = Graph::<f64>::new();
//! let x = g.leaf(Tensor::new(vec![2], vec![-1.0, 2.0]).unwrap());
//! let y = g.relu(x);
//! let loss = g.sum(y);
//! let grads = g.backward(loss).unwrap();
//! assert_eq!(grads.get(x).unwrap().data(), &[0.0, 1.0]);
//! ```

use super::tensor::{matmul_acc, split_at_axis, swap_axes, transpose_2d, Scalar, Tensor};
use super::NumericsError;

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Epsilon used by [`Graph::layer_norm`].
pub const LAYER_NORM_EPS: f64 = 1e-5;

enum Op<T> {
    Input,
    MatMul { a: Var, b: Var, shared_rhs: bool },
    Add { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { x: Var, factor: T },
    Softmax { x: Var },
    LayerNorm { x: Var, gain: Var, bias: Var, normalized: Vec<T>, inv_std: Vec<T> },
    Relu { x: Var },
    Embedding { table: Var, ids: Vec<usize> },
    Concat { inputs: Vec<Var>, axis: usize },
    Slice { x: Var, axis: usize, start: usize },
    Transpose { x: Var, a: usize, b: usize },
    Reshape { x: Var },
    MaskedFill { x: Var, mask: Vec<bool> },
    Sum { x: Var },
    Mean { x: Var },
    CrossEntropy { logits: Var, targets: Vec<Option<usize>>, probs: Vec<T>, count: usize },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Recording of primitive applications; see the module docs.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn mismatch(op: &'static str, shapes: &[&[usize]]) -> NumericsError {
    NumericsError::ShapeMismatch {
        op,
        shapes: shapes.iter().map(|s| s.to_vec()).collect(),
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a differentiable input.
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Input, true)
    }

    /// Records an input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Input, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn grad_flag(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Batched matrix product. `a` is `[.., m, k]`; `b` is either `[k, n]`
    /// (shared across the leading batch dimensions of `a`) or `[.., k, n]`
    /// with the same leading dimensions as `a`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        if sa.len() < 2 || sb.len() < 2 {
            return Err(mismatch("matmul", &[&sa, &sb]));
        }
        let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (kb, n) = (sb[sb.len() - 2], sb[sb.len() - 1]);
        let shared_rhs = sb.len() == 2;
        if k != kb || (!shared_rhs && sa[..sa.len() - 2] != sb[..sb.len() - 2]) {
            return Err(mismatch("matmul", &[&sa, &sb]));
        }
        let batch: usize = sa[..sa.len() - 2].iter().product();
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let mut out = vec![T::zero(); batch * m * n];
        for i in 0..batch {
            let b_block = if shared_rhs { bv } else { &bv[i * k * n..(i + 1) * k * n] };
            matmul_acc(
                &av[i * m * k..(i + 1) * m * k],
                b_block,
                &mut out[i * m * n..(i + 1) * m * n],
                m,
                k,
                n,
            );
        }
        let mut shape = sa[..sa.len() - 2].to_vec();
        shape.extend([m, n]);
        let rg = self.grad_flag(&[a, b]);
        Ok(self.push(Tensor::new(shape, out)?, Op::MatMul { a, b, shared_rhs }, rg))
    }

    /// `a + b` where the shape of `b` is a suffix of the shape of `a`
    /// (broadcast over the leading dimensions).
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sb.len() > sa.len() || sa[sa.len() - sb.len()..] != *sb {
            return Err(mismatch("add", &[sa, sb]));
        }
        let bv = self.value(b).data();
        let block = bv.len();
        let data = self
            .value(a)
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x + bv[i % block])
            .collect();
        let shape = sa.to_vec();
        let rg = self.grad_flag(&[a, b]);
        Ok(self.push(Tensor::new(shape, data)?, Op::Add { a, b }, rg))
    }

    /// Elementwise product of equally shaped tensors.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        if self.shape(a) != self.shape(b) {
            return Err(mismatch("mul", &[self.shape(a), self.shape(b)]));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x * y)
            .collect();
        let shape = self.shape(a).to_vec();
        let rg = self.grad_flag(&[a, b]);
        Ok(self.push(Tensor::new(shape, data)?, Op::Mul { a, b }, rg))
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Var {
        let value = self.value(x).map(|v| v * factor);
        let rg = self.grad_flag(&[x]);
        self.push(value, Op::Scale { x, factor }, rg)
    }

    /// Softmax over the last axis, with max subtraction.
    pub fn softmax(&mut self, x: Var) -> Var {
        let src = self.value(x);
        let last = *src.shape().last().unwrap();
        let mut data = src.data().to_vec();
        for row in data.chunks_mut(last) {
            let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
            let mut total = T::zero();
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total = total + *v;
            }
            for v in row.iter_mut() {
                *v = *v / total;
            }
        }
        let value = Tensor::new(src.shape().to_vec(), data).expect("same shape");
        let rg = self.grad_flag(&[x]);
        self.push(value, Op::Softmax { x }, rg)
    }

    /// Layer normalisation over the last axis followed by `gain ⊙ x̂ + bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var, NumericsError> {
        let sx = self.shape(x);
        let width = *sx.last().unwrap();
        if self.shape(gain) != [width] || self.shape(bias) != [width] {
            return Err(mismatch("layer_norm", &[sx, self.shape(gain), self.shape(bias)]));
        }
        let eps = T::lit(LAYER_NORM_EPS);
        let n = T::from_usize(width).unwrap();
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let src = self.value(x).data();
        let rows = src.len() / width;
        let mut normalized = Vec::with_capacity(src.len());
        let mut inv_std = Vec::with_capacity(rows);
        let mut out = Vec::with_capacity(src.len());
        for row in src.chunks(width) {
            let mean = row.iter().fold(T::zero(), |a, &v| a + v) / n;
            let var = row.iter().fold(T::zero(), |a, &v| a + (v - mean) * (v - mean)) / n;
            let inv = T::one() / (var + eps).sqrt();
            inv_std.push(inv);
            for (j, &v) in row.iter().enumerate() {
                let xh = (v - mean) * inv;
                normalized.push(xh);
                out.push(g[j] * xh + b[j]);
            }
        }
        let value = Tensor::new(sx.to_vec(), out)?;
        let rg = self.grad_flag(&[x, gain, bias]);
        Ok(self.push(
            value,
            Op::LayerNorm {
                x,
                gain,
                bias,
                normalized,
                inv_std,
            },
            rg,
        ))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| if v > T::zero() { v } else { T::zero() });
        let rg = self.grad_flag(&[x]);
        self.push(value, Op::Relu { x }, rg)
    }

    /// Gathers rows of a `[vocab, width]` table. The result has shape
    /// `index_shape ++ [width]`.
    pub fn embedding(&mut self, table: Var, ids: &[usize], index_shape: &[usize]) -> Result<Var, NumericsError> {
        let st = self.shape(table);
        if st.len() != 2 || index_shape.iter().product::<usize>() != ids.len() {
            return Err(mismatch("embedding", &[st, index_shape]));
        }
        let (rows, width) = (st[0], st[1]);
        if let Some(&bad) = ids.iter().find(|&&id| id >= rows) {
            return Err(NumericsError::IndexOutOfRange {
                op: "embedding",
                index: bad,
                bound: rows,
            });
        }
        let tv = self.value(table);
        let mut data = Vec::with_capacity(ids.len() * width);
        for &id in ids {
            data.extend_from_slice(tv.row(id));
        }
        let mut shape = index_shape.to_vec();
        shape.push(width);
        let rg = self.grad_flag(&[table]);
        Ok(self.push(
            Tensor::new(shape, data)?,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            rg,
        ))
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var, NumericsError> {
        let first = self.shape(*inputs.first().ok_or(NumericsError::EmptyInput { op: "concat" })?).to_vec();
        if axis >= first.len() {
            return Err(NumericsError::AxisOutOfRange {
                op: "concat",
                axis,
                rank: first.len(),
            });
        }
        let mut total = 0;
        for &v in inputs {
            let s = self.shape(v);
            if s.len() != first.len() || s.iter().enumerate().any(|(i, &d)| i != axis && d != first[i]) {
                let shapes: Vec<&[usize]> = inputs.iter().map(|&v| self.shape(v)).collect();
                return Err(mismatch("concat", &shapes));
            }
            total += s[axis];
        }
        let (outer, _, inner) = split_at_axis(&first, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &v in inputs {
                let t = self.value(v);
                let block = t.shape()[axis] * inner;
                data.extend_from_slice(&t.data()[o * block..(o + 1) * block]);
            }
        }
        let mut shape = first;
        shape[axis] = total;
        let rg = self.grad_flag(inputs);
        Ok(self.push(
            Tensor::new(shape, data)?,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            rg,
        ))
    }

    /// Elements `start..end` along `axis`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, end: usize) -> Result<Var, NumericsError> {
        let sx = self.shape(x).to_vec();
        if axis >= sx.len() {
            return Err(NumericsError::AxisOutOfRange {
                op: "slice",
                axis,
                rank: sx.len(),
            });
        }
        if start >= end || end > sx[axis] {
            return Err(NumericsError::IndexOutOfRange {
                op: "slice",
                index: end,
                bound: sx[axis],
            });
        }
        let (outer, dim, inner) = split_at_axis(&sx, axis);
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(outer * (end - start) * inner);
        for o in 0..outer {
            let base = o * dim * inner;
            data.extend_from_slice(&src[base + start * inner..base + end * inner]);
        }
        let mut shape = sx;
        shape[axis] = end - start;
        let rg = self.grad_flag(&[x]);
        Ok(self.push(Tensor::new(shape, data)?, Op::Slice { x, axis, start }, rg))
    }

    /// Swaps two axes.
    pub fn transpose(&mut self, x: Var, a: usize, b: usize) -> Result<Var, NumericsError> {
        let sx = self.shape(x);
        let rank = sx.len();
        if a >= rank || b >= rank {
            return Err(NumericsError::AxisOutOfRange {
                op: "transpose",
                axis: a.max(b),
                rank,
            });
        }
        let (data, shape) = swap_axes(self.value(x).data(), sx, a, b);
        let rg = self.grad_flag(&[x]);
        Ok(self.push(Tensor::new(shape, data)?, Op::Transpose { x, a, b }, rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, NumericsError> {
        let value = self.value(x).clone().reshape(shape.to_vec())?;
        let rg = self.grad_flag(&[x]);
        Ok(self.push(value, Op::Reshape { x }, rg))
    }

    /// Replaces elements where `mask` is true with `fill`.
    pub fn masked_fill(&mut self, x: Var, mask: &[bool], fill: T) -> Result<Var, NumericsError> {
        let sx = self.shape(x);
        if mask.len() != self.value(x).len() {
            return Err(mismatch("masked_fill", &[sx, &[mask.len()]]));
        }
        let data = self
            .value(x)
            .data()
            .iter()
            .zip(mask)
            .map(|(&v, &m)| if m { fill } else { v })
            .collect();
        let shape = sx.to_vec();
        let rg = self.grad_flag(&[x]);
        Ok(self.push(
            Tensor::new(shape, data)?,
            Op::MaskedFill {
                x,
                mask: mask.to_vec(),
            },
            rg,
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).sum());
        let rg = self.grad_flag(&[x]);
        self.push(value, Op::Sum { x }, rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let value = Tensor::scalar(t.sum() / T::from_usize(t.len()).unwrap());
        let rg = self.grad_flag(&[x]);
        self.push(value, Op::Mean { x }, rg)
    }

    /// Mean negative log-likelihood of `targets` under softmax of
    /// `logits [rows, classes]`. Rows whose target is `None` are ignored.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[Option<usize>]) -> Result<Var, NumericsError> {
        let sl = self.shape(logits);
        if sl.len() != 2 || sl[0] != targets.len() {
            return Err(mismatch("cross_entropy", &[sl, &[targets.len()]]));
        }
        let classes = sl[1];
        if let Some(&bad) = targets.iter().flatten().find(|&&t| t >= classes) {
            return Err(NumericsError::IndexOutOfRange {
                op: "cross_entropy",
                index: bad,
                bound: classes,
            });
        }
        let count = targets.iter().flatten().count();
        if count == 0 {
            return Err(NumericsError::EmptyInput { op: "cross_entropy" });
        }
        let src = self.value(logits).data();
        let mut probs = Vec::with_capacity(src.len());
        let mut total = T::zero();
        for (row, target) in src.chunks(classes).zip(targets) {
            let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
            let z = row.iter().fold(T::zero(), |a, &v| a + (v - max).exp());
            let log_z = z.ln() + max;
            probs.extend(row.iter().map(|&v| (v - log_z).exp()));
            if let Some(t) = target {
                total = total + log_z - row[*t];
            }
        }
        let value = Tensor::scalar(total / T::from_usize(count).unwrap());
        let rg = self.grad_flag(&[logits]);
        Ok(self.push(
            value,
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
                count,
            },
            rg,
        ))
    }

    /// Gradients of the single-element `loss` with respect to every recorded
    /// value that requires one.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>, NumericsError> {
        if self.value(loss).len() != 1 {
            return Err(NumericsError::NonScalarLoss {
                shape: self.shape(loss).to_vec(),
            });
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(T::one()));
        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            self.propagate(node, &g, &mut grads)?;
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<T>>], v: Var, delta: Tensor<T>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&delta),
            slot => *slot = Some(delta),
        }
    }

    fn like(&self, v: Var, data: Vec<T>) -> Tensor<T> {
        Tensor::new(self.shape(v).to_vec(), data).expect("gradient matches value shape")
    }

    fn propagate(&self, node: &Node<T>, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) -> Result<(), NumericsError> {
        let gd = g.data();
        match &node.op {
            Op::Input => {}
            Op::MatMul { a, b, shared_rhs } => {
                let sa = self.shape(*a);
                let sb = self.shape(*b);
                let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
                let n = sb[sb.len() - 1];
                let batch = self.value(*a).len() / (m * k);
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                if self.nodes[a.0].requires_grad {
                    let mut da = vec![T::zero(); av.len()];
                    let bt_shared = if *shared_rhs { transpose_2d(bv, k, n) } else { Vec::new() };
                    for i in 0..batch {
                        let bt_local;
                        let bt = if *shared_rhs {
                            &bt_shared
                        } else {
                            bt_local = transpose_2d(&bv[i * k * n..(i + 1) * k * n], k, n);
                            &bt_local
                        };
                        matmul_acc(&gd[i * m * n..(i + 1) * m * n], bt, &mut da[i * m * k..(i + 1) * m * k], m, n, k);
                    }
                    let t = self.like(*a, da);
                    self.accumulate(grads, *a, t);
                }
                if self.nodes[b.0].requires_grad {
                    let mut db = vec![T::zero(); bv.len()];
                    if *shared_rhs {
                        let at = transpose_2d(av, batch * m, k);
                        matmul_acc(&at, gd, &mut db, k, batch * m, n);
                    } else {
                        for i in 0..batch {
                            let at = transpose_2d(&av[i * m * k..(i + 1) * m * k], m, k);
                            matmul_acc(&at, &gd[i * m * n..(i + 1) * m * n], &mut db[i * k * n..(i + 1) * k * n], k, m, n);
                        }
                    }
                    let t = self.like(*b, db);
                    self.accumulate(grads, *b, t);
                }
            }
            Op::Add { a, b } => {
                self.accumulate(grads, *a, g.clone());
                if self.nodes[b.0].requires_grad {
                    let block = self.value(*b).len();
                    let mut db = vec![T::zero(); block];
                    for (i, &v) in gd.iter().enumerate() {
                        db[i % block] = db[i % block] + v;
                    }
                    let t = self.like(*b, db);
                    self.accumulate(grads, *b, t);
                }
            }
            Op::Mul { a, b } => {
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                let da = gd.iter().zip(bv).map(|(&g, &y)| g * y).collect();
                let db = gd.iter().zip(av).map(|(&g, &x)| g * x).collect();
                let (ta, tb) = (self.like(*a, da), self.like(*b, db));
                self.accumulate(grads, *a, ta);
                self.accumulate(grads, *b, tb);
            }
            Op::Scale { x, factor } => {
                let t = g.map(|v| v * *factor);
                self.accumulate(grads, *x, t);
            }
            Op::Softmax { x } => {
                let y = node.value.data();
                let last = *node.value.shape().last().unwrap();
                let mut dx = Vec::with_capacity(y.len());
                for (yr, gr) in y.chunks(last).zip(gd.chunks(last)) {
                    let dot = yr.iter().zip(gr).fold(T::zero(), |a, (&p, &q)| a + p * q);
                    dx.extend(yr.iter().zip(gr).map(|(&p, &q)| p * (q - dot)));
                }
                let t = self.like(*x, dx);
                self.accumulate(grads, *x, t);
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                normalized,
                inv_std,
            } => {
                let width = self.value(*gain).len();
                let gv = self.value(*gain).data();
                let n = T::from_usize(width).unwrap();
                let mut dgain = vec![T::zero(); width];
                let mut dbias = vec![T::zero(); width];
                let mut dx = Vec::with_capacity(gd.len());
                for ((gr, xh), &inv) in gd.chunks(width).zip(normalized.chunks(width)).zip(inv_std) {
                    let mut sum_d = T::zero();
                    let mut sum_dx = T::zero();
                    for j in 0..width {
                        dgain[j] = dgain[j] + gr[j] * xh[j];
                        dbias[j] = dbias[j] + gr[j];
                        let d = gr[j] * gv[j];
                        sum_d = sum_d + d;
                        sum_dx = sum_dx + d * xh[j];
                    }
                    for j in 0..width {
                        let d = gr[j] * gv[j];
                        dx.push(inv * (n * d - sum_d - xh[j] * sum_dx) / n);
                    }
                }
                let (tx, tg, tb) = (self.like(*x, dx), self.like(*gain, dgain), self.like(*bias, dbias));
                self.accumulate(grads, *x, tx);
                self.accumulate(grads, *gain, tg);
                self.accumulate(grads, *bias, tb);
            }
            Op::Relu { x } => {
                let xv = self.value(*x).data();
                let dx = gd
                    .iter()
                    .zip(xv)
                    .map(|(&g, &v)| if v > T::zero() { g } else { T::zero() })
                    .collect();
                let t = self.like(*x, dx);
                self.accumulate(grads, *x, t);
            }
            Op::Embedding { table, ids } => {
                if self.nodes[table.0].requires_grad {
                    let width = self.shape(*table)[1];
                    let mut dt = vec![T::zero(); self.value(*table).len()];
                    for (pos, &id) in ids.iter().enumerate() {
                        for j in 0..width {
                            dt[id * width + j] = dt[id * width + j] + gd[pos * width + j];
                        }
                    }
                    let t = self.like(*table, dt);
                    self.accumulate(grads, *table, t);
                }
            }
            Op::Concat { inputs, axis } => {
                let (outer, total, inner) = split_at_axis(node.value.shape(), *axis);
                let mut offset = 0;
                for &v in inputs {
                    let dim = self.shape(v)[*axis];
                    if self.nodes[v.0].requires_grad {
                        let mut dv = Vec::with_capacity(outer * dim * inner);
                        for o in 0..outer {
                            let base = o * total * inner + offset * inner;
                            dv.extend_from_slice(&gd[base..base + dim * inner]);
                        }
                        let t = self.like(v, dv);
                        self.accumulate(grads, v, t);
                    }
                    offset += dim;
                }
            }
            Op::Slice { x, axis, start } => {
                let (outer, dim, inner) = split_at_axis(self.shape(*x), *axis);
                let width = node.value.shape()[*axis];
                let mut dx = vec![T::zero(); self.value(*x).len()];
                for o in 0..outer {
                    let dst = o * dim * inner + start * inner;
                    dx[dst..dst + width * inner].copy_from_slice(&gd[o * width * inner..(o + 1) * width * inner]);
                }
                let t = self.like(*x, dx);
                self.accumulate(grads, *x, t);
            }
            Op::Transpose { x, a, b } => {
                let (dx, _) = swap_axes(gd, node.value.shape(), *a, *b);
                let t = self.like(*x, dx);
                self.accumulate(grads, *x, t);
            }
            Op::Reshape { x } => {
                let t = self.like(*x, gd.to_vec());
                self.accumulate(grads, *x, t);
            }
            Op::MaskedFill { x, mask } => {
                let dx = gd.iter().zip(mask).map(|(&g, &m)| if m { T::zero() } else { g }).collect();
                let t = self.like(*x, dx);
                self.accumulate(grads, *x, t);
            }
            Op::Sum { x } => {
                let t = self.value(*x).map(|_| gd[0]);
                self.accumulate(grads, *x, t);
            }
            Op::Mean { x } => {
                let n = T::from_usize(self.value(*x).len()).unwrap();
                let t = self.value(*x).map(|_| gd[0] / n);
                self.accumulate(grads, *x, t);
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
                count,
            } => {
                let classes = self.shape(*logits)[1];
                let scale = gd[0] / T::from_usize(*count).unwrap();
                let mut dl = vec![T::zero(); probs.len()];
                for (r, target) in targets.iter().enumerate() {
                    let Some(t) = target else { continue };
                    for c in 0..classes {
                        dl[r * classes + c] = probs[r * classes + c] * scale;
                    }
                    dl[r * classes + t] = dl[r * classes + t] - scale;
                }
                let t = self.like(*logits, dl);
                self.accumulate(grads, *logits, t);
            }
        }
        Ok(())
    }
}

/// Result of [`Graph::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient for `v`, or `None` when `v` does not influence the loss.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient for `v`, with zeros of the given shape when absent.
    pub fn get_or_zeros(&self, v: Var, shape: &[usize]) -> Tensor<T> {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(shape).expect("shape of a recorded value"))
    }
}
