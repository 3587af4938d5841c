use super::gemm::gemm;
use super::{ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};
use std::rc::Rc;

/// Handle to a node on a [`Graph`] tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Value {
    Owned(Tensor),
    Param(ParamId),
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    BatchMatMul(Var, Var),
    TransposeLast(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    LeakyRelu(Var, f64),
    Sigmoid(Var),
    Softplus(Var),
    Softmax(Var),
    MaskedFill(Var, Rc<[bool]>),
    GatherRows(Var, Rc<[usize]>),
    IndexedMatMul { x: Var, w: Var, ids: Rc<[usize]> },
    Concat { parts: Vec<Var>, axis: usize },
    Reshape(Var),
    RepeatLeading(Var, usize),
    Gather(Var, Rc<[usize]>),
    SumAll(Var),
    MeanAll(Var),
    SumLast(Var),
}

struct Node {
    value: Value,
    op: Op,
    needs_grad: bool,
}

/// A single-use tape of tensor operations.
///
/// Parameters are borrowed from a [`ParamStore`] rather than copied, so building
/// a graph for inference only allocates intermediate results.
pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
    consumed: bool,
}

/// Gradients produced by [`Graph::backward`].
pub struct Gradients {
    by_node: Vec<Option<Tensor>>,
    param_vars: Vec<Option<Var>>,
}

impl Gradients {
    /// Gradient with respect to a graph node, if the loss depends on it.
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.by_node.get(v.0).and_then(Option::as_ref)
    }

    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.param_vars
            .get(id.0)
            .copied()
            .flatten()
            .and_then(|v| self.wrt(v))
    }

    /// One gradient per parameter in store order; parameters the loss never
    /// touched get zeros.
    pub fn into_param_grads(mut self, store: &ParamStore) -> Vec<Tensor> {
        store
            .iter()
            .map(|(id, _, t)| {
                let node = self.param_vars.get(id.0).copied().flatten();
                node.and_then(|v| self.by_node[v.0].take())
                    .unwrap_or_else(|| Tensor::zeros(t.shape().to_vec()))
            })
            .collect()
    }
}

fn suffix_broadcast(op: &'static str, a: &[usize], b: &[usize]) -> Result<()> {
    if b.len() <= a.len() && a[a.len() - b.len()..] == *b {
        Ok(())
    } else {
        Err(Error::shape(op, format!("{a:?} with {b:?}")))
    }
}

fn split_last2(op: &'static str, shape: &[usize]) -> Result<(usize, usize, usize)> {
    match shape {
        [.., m, k] => Ok((shape[..shape.len() - 2].iter().product(), *m, *k)),
        _ => Err(Error::shape(op, format!("need rank >= 2, got {shape:?}"))),
    }
}

use crate::math::sigmoid;

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn accumulate(slot: &mut Option<Tensor>, shape: &[usize], f: impl FnOnce(&mut [f64])) {
    let t = slot.get_or_insert_with(|| Tensor::zeros(shape.to_vec()));
    f(t.data_mut());
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Graph {
            params,
            nodes: Vec::new(),
            param_vars: vec![None; params.len()],
            consumed: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match &self.nodes[v.0].value {
            Value::Owned(t) => t,
            Value::Param(id) => self.params.get(*id),
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Value::Owned(value),
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn grad_flag(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    /// A tensor that gradients do not flow into.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// A free-standing differentiable input (not backed by the parameter store).
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        self.nodes.push(Node {
            value: Value::Param(id),
            op: Op::Leaf,
            needs_grad: true,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[id.0] = Some(v);
        v
    }

    /// Copy of `v` cut off from the tape.
    pub fn detach(&mut self, v: Var) -> Var {
        let t = self.value(v).clone();
        self.constant(t)
    }

    /// `a [.., m, k] · b [k, n]`, with `b` shared across the leading axes of `a`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let (batch, m, k) = split_last2("matmul", sa)?;
        let (k2, n) = match sb {
            [k2, n] => (*k2, *n),
            _ => {
                return Err(Error::shape(
                    "matmul",
                    format!("rhs must be 2-D, got {sb:?}"),
                ))
            }
        };
        if k != k2 {
            return Err(Error::shape("matmul", format!("{sa:?} · {sb:?}")));
        }
        let mut shape = sa.to_vec();
        *shape.last_mut().unwrap() = n;
        let mut out = vec![0.0; batch * m * n];
        gemm(
            batch * m,
            k,
            n,
            self.value(a).data(),
            false,
            self.value(b).data(),
            false,
            &mut out,
            0.0,
        );
        let ng = self.grad_flag(&[a, b]);
        Ok(self.push(Tensor { shape, data: out }, Op::MatMul(a, b), ng))
    }

    /// Batched `[B, m, k] · [B, k, n]`.
    pub fn bmm(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let (ba, m, k) = split_last2("bmm", sa)?;
        let (bb, k2, n) = split_last2("bmm", sb)?;
        if ba != bb || k != k2 || sa[..sa.len() - 2] != sb[..sb.len() - 2] {
            return Err(Error::shape("bmm", format!("{sa:?} · {sb:?}")));
        }
        let mut shape = sa.to_vec();
        *shape.last_mut().unwrap() = n;
        let mut out = vec![0.0; ba * m * n];
        let (da, db) = (self.value(a).data(), self.value(b).data());
        for i in 0..ba {
            gemm(
                m,
                k,
                n,
                &da[i * m * k..(i + 1) * m * k],
                false,
                &db[i * k * n..(i + 1) * k * n],
                false,
                &mut out[i * m * n..(i + 1) * m * n],
                0.0,
            );
        }
        let ng = self.grad_flag(&[a, b]);
        Ok(self.push(Tensor { shape, data: out }, Op::BatchMatMul(a, b), ng))
    }

    pub fn transpose_last(&mut self, a: Var) -> Result<Var> {
        let sa = self.shape(a);
        let (batch, m, k) = split_last2("transpose_last", sa)?;
        let mut shape = sa.to_vec();
        let r = shape.len();
        shape.swap(r - 1, r - 2);
        let src = self.value(a).data();
        let mut out = vec![0.0; src.len()];
        for b in 0..batch {
            let off = b * m * k;
            for i in 0..m {
                for j in 0..k {
                    out[off + j * m + i] = src[off + i * k + j];
                }
            }
        }
        let ng = self.grad_flag(&[a]);
        Ok(self.push(Tensor { shape, data: out }, Op::TransposeLast(a), ng))
    }

    /// Elementwise `a + b`; `b` may match a suffix of `a`'s shape.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    /// Elementwise `a * b`; `b` may match a suffix of `a`'s shape.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(
                "sub",
                format!("{:?} - {:?}", self.shape(a), self.shape(b)),
            ));
        }
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        suffix_broadcast(name, self.shape(a), self.shape(b))?;
        let ta = self.value(a);
        let tb = self.value(b).data();
        let r = tb.len();
        let data = ta
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| f(x, tb[i % r]))
            .collect();
        let shape = ta.shape().to_vec();
        let ng = self.grad_flag(&[a, b]);
        Ok(self.push(Tensor { shape, data }, op, ng))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let ta = self.value(a);
        let data = ta.data().iter().map(|&x| f(x)).collect();
        let shape = ta.shape().to_vec();
        let ng = self.grad_flag(&[a]);
        self.push(Tensor { shape, data }, op, ng)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, |x| c * x, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, |x| x + c, Op::Offset(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        // Mul of a node with itself; the backward rule handles the aliasing.
        let ta = self.value(a);
        let data = ta.data().iter().map(|&x| x * x).collect();
        let shape = ta.shape().to_vec();
        let ng = self.grad_flag(&[a]);
        self.push(Tensor { shape, data }, Op::Mul(a, a), ng)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        self.unary(
            a,
            |x| if x > 0.0 { x } else { slope * x },
            Op::LeakyRelu(a, slope),
        )
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    /// `ln(1 + e^x)`, stable for large `|x|`.
    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(a, softplus, Op::Softplus(a))
    }

    /// Softmax over the last axis. Entries equal to `-inf` get probability zero;
    /// a row with every entry masked yields all zeros.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let n = *ta
            .shape()
            .last()
            .ok_or_else(|| Error::shape("softmax", "scalar input"))?;
        let mut data = ta.data().to_vec();
        if n > 0 {
            for row in data.chunks_mut(n) {
                let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if m == f64::NEG_INFINITY {
                    row.fill(0.0);
                    continue;
                }
                let mut s = 0.0;
                for v in row.iter_mut() {
                    *v = (*v - m).exp();
                    s += *v;
                }
                for v in row.iter_mut() {
                    *v /= s;
                }
            }
        }
        let shape = ta.shape().to_vec();
        let ng = self.grad_flag(&[a]);
        Ok(self.push(Tensor { shape, data }, Op::Softmax(a), ng))
    }

    /// Sets entries where `mask` is true to `-inf`. `mask` covers a suffix of
    /// `a`'s shape and is repeated over the leading axes.
    pub fn masked_fill(&mut self, a: Var, mask: Rc<[bool]>) -> Result<Var> {
        let ta = self.value(a);
        if mask.is_empty() || ta.numel() % mask.len() != 0 {
            return Err(Error::shape(
                "masked_fill",
                format!("mask of {} entries for shape {:?}", mask.len(), ta.shape()),
            ));
        }
        let r = mask.len();
        let data = ta
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| if mask[i % r] { f64::NEG_INFINITY } else { x })
            .collect();
        let shape = ta.shape().to_vec();
        let ng = self.grad_flag(&[a]);
        Ok(self.push(Tensor { shape, data }, Op::MaskedFill(a, mask), ng))
    }

    /// Selects rows (first-axis slices) of `table`.
    pub fn embedding_lookup(&mut self, table: Var, ids: Rc<[usize]>) -> Result<Var> {
        let tt = self.value(table);
        let rows = *tt
            .shape()
            .first()
            .ok_or_else(|| Error::shape("embedding_lookup", "scalar table"))?;
        if let Some(&bad) = ids.iter().find(|&&i| i >= rows) {
            return Err(Error::shape(
                "embedding_lookup",
                format!("index {bad} out of range for table {:?}", tt.shape()),
            ));
        }
        let inner = tt.numel() / rows.max(1);
        let mut data = Vec::with_capacity(ids.len() * inner);
        for &i in ids.iter() {
            data.extend_from_slice(&tt.data()[i * inner..(i + 1) * inner]);
        }
        let mut shape = tt.shape().to_vec();
        shape[0] = ids.len();
        let ng = self.grad_flag(&[table]);
        Ok(self.push(Tensor { shape, data }, Op::GatherRows(table, ids), ng))
    }

    /// Row-wise product with a per-row weight matrix: `out[r] = x[r] · w[ids[r]]`
    /// for `x [R, a]`, `w [F, a, b]`.
    pub fn indexed_matmul(&mut self, x: Var, w: Var, ids: Rc<[usize]>) -> Result<Var> {
        let (sx, sw) = (self.shape(x), self.shape(w));
        let (r, a, f, b) = match (sx, sw) {
            ([r, a], [f, a2, b]) if a == a2 => (*r, *a, *f, *b),
            _ => {
                return Err(Error::shape(
                    "indexed_matmul",
                    format!("{sx:?} with {sw:?}"),
                ))
            }
        };
        if ids.len() != r || ids.iter().any(|&i| i >= f) {
            return Err(Error::shape(
                "indexed_matmul",
                format!("{} ids for {r} rows / {f} matrices", ids.len()),
            ));
        }
        let (dx, dw) = (self.value(x).data(), self.value(w).data());
        let mut out = vec![0.0; r * b];
        for (row, &id) in ids.iter().enumerate() {
            gemm(
                1,
                a,
                b,
                &dx[row * a..(row + 1) * a],
                false,
                &dw[id * a * b..(id + 1) * a * b],
                false,
                &mut out[row * b..(row + 1) * b],
                0.0,
            );
        }
        let ng = self.grad_flag(&[x, w]);
        Ok(self.push(
            Tensor {
                shape: vec![r, b],
                data: out,
            },
            Op::IndexedMatMul { x, w, ids },
            ng,
        ))
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = self
            .shape(
                *parts
                    .first()
                    .ok_or_else(|| Error::shape("concat", "no inputs"))?,
            )
            .to_vec();
        if axis >= first.len() {
            return Err(Error::shape(
                "concat",
                format!("axis {axis} for shape {first:?}"),
            ));
        }
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            if s.len() != first.len()
                || s[..axis] != first[..axis]
                || s[axis + 1..] != first[axis + 1..]
            {
                return Err(Error::shape(
                    "concat",
                    format!("{first:?} with {s:?} on axis {axis}"),
                ));
            }
            total += s[axis];
        }
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &p in parts {
                let t = self.value(p);
                let chunk = t.shape()[axis] * inner;
                data.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = first;
        shape[axis] = total;
        let ng = self.grad_flag(parts);
        Ok(self.push(
            Tensor { shape, data },
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            ng,
        ))
    }

    pub fn reshape(&mut self, a: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let t = self.value(a).clone().reshaped(shape)?;
        let ng = self.grad_flag(&[a]);
        Ok(self.push(t, Op::Reshape(a), ng))
    }

    /// Stacks `times` copies of `a` along a new leading axis.
    pub fn repeat_leading(&mut self, a: Var, times: usize) -> Var {
        let ta = self.value(a);
        let mut shape = vec![times];
        shape.extend_from_slice(ta.shape());
        let data = ta.data().repeat(times);
        let ng = self.grad_flag(&[a]);
        self.push(Tensor { shape, data }, Op::RepeatLeading(a, times), ng)
    }

    /// Picks elements by flat index into a 1-D result.
    pub fn gather(&mut self, a: Var, idx: Rc<[usize]>) -> Result<Var> {
        let ta = self.value(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= ta.numel()) {
            return Err(Error::shape(
                "gather",
                format!("index {bad} out of range for {:?}", ta.shape()),
            ));
        }
        let data = idx.iter().map(|&i| ta.data()[i]).collect();
        let ng = self.grad_flag(&[a]);
        Ok(self.push(
            Tensor {
                shape: vec![idx.len()],
                data,
            },
            Op::Gather(a, idx),
            ng,
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let ng = self.grad_flag(&[a]);
        self.push(Tensor::scalar(s), Op::SumAll(a), ng)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let s = t.data().iter().sum::<f64>() / t.numel().max(1) as f64;
        let ng = self.grad_flag(&[a]);
        self.push(Tensor::scalar(s), Op::MeanAll(a), ng)
    }

    /// Sums over the last axis, dropping it.
    pub fn sum_last(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let n = *ta
            .shape()
            .last()
            .ok_or_else(|| Error::shape("sum_last", "scalar input"))?;
        let data = if n == 0 {
            vec![0.0; ta.shape()[..ta.rank() - 1].iter().product()]
        } else {
            ta.data().chunks(n).map(|c| c.iter().sum()).collect()
        };
        let shape = ta.shape()[..ta.rank() - 1].to_vec();
        let ng = self.grad_flag(&[a]);
        Ok(self.push(Tensor { shape, data }, Op::SumLast(a), ng))
    }

    /// Reverse-mode sweep from a scalar `loss`. A graph supports one sweep.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.consumed {
            return Err(Error::GraphConsumed);
        }
        let loss_shape = self.value(loss).shape().to_vec();
        if loss_shape.iter().product::<usize>() != 1 {
            return Err(Error::NonScalarLoss(loss_shape));
        }
        self.consumed = true;
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(loss_shape, 1.0));

        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.backprop_node(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients {
            by_node: grads,
            param_vars: self.param_vars.clone(),
        })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn backprop_node(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let gd = g.data();
        let out = self.value(Var(idx));
        match &self.nodes[idx].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (batch, m, k) = split_last2("matmul", ta.shape()).unwrap();
                let n = tb.shape()[1];
                if self.wants(*a) {
                    accumulate(&mut grads[a.0], ta.shape(), |d| {
                        gemm(batch * m, n, k, gd, false, tb.data(), true, d, 1.0)
                    });
                }
                if self.wants(*b) {
                    accumulate(&mut grads[b.0], tb.shape(), |d| {
                        gemm(k, batch * m, n, ta.data(), true, gd, false, d, 1.0)
                    });
                }
            }
            Op::BatchMatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (batch, m, k) = split_last2("bmm", ta.shape()).unwrap();
                let n = *tb.shape().last().unwrap();
                if self.wants(*a) {
                    accumulate(&mut grads[a.0], ta.shape(), |d| {
                        for i in 0..batch {
                            gemm(
                                m,
                                n,
                                k,
                                &gd[i * m * n..(i + 1) * m * n],
                                false,
                                &tb.data()[i * k * n..(i + 1) * k * n],
                                true,
                                &mut d[i * m * k..(i + 1) * m * k],
                                1.0,
                            );
                        }
                    });
                }
                if self.wants(*b) {
                    accumulate(&mut grads[b.0], tb.shape(), |d| {
                        for i in 0..batch {
                            gemm(
                                k,
                                m,
                                n,
                                &ta.data()[i * m * k..(i + 1) * m * k],
                                true,
                                &gd[i * m * n..(i + 1) * m * n],
                                false,
                                &mut d[i * k * n..(i + 1) * k * n],
                                1.0,
                            );
                        }
                    });
                }
            }
            Op::TransposeLast(a) => {
                let ta = self.value(*a);
                let (batch, m, k) = split_last2("transpose_last", ta.shape()).unwrap();
                accumulate(&mut grads[a.0], ta.shape(), |d| {
                    for b in 0..batch {
                        let off = b * m * k;
                        for i in 0..m {
                            for j in 0..k {
                                d[off + i * k + j] += gd[off + j * m + i];
                            }
                        }
                    }
                });
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(self.nodes[idx].op, Op::Sub(..)) {
                    -1.0
                } else {
                    1.0
                };
                if self.wants(*a) {
                    accumulate(&mut grads[a.0], out.shape(), |d| {
                        d.iter_mut().zip(gd).for_each(|(x, y)| *x += y)
                    });
                }
                if self.wants(*b) {
                    let sb = self.value(*b).shape();
                    accumulate(&mut grads[b.0], sb, |d| {
                        let r = d.len();
                        gd.iter()
                            .enumerate()
                            .for_each(|(i, y)| d[i % r] += sign * y)
                    });
                }
            }
            Op::Mul(a, b) => {
                let (da, db) = (self.value(*a).data(), self.value(*b).data());
                let r = db.len();
                if self.wants(*a) {
                    accumulate(&mut grads[a.0], out.shape(), |d| {
                        for (i, x) in d.iter_mut().enumerate() {
                            *x += gd[i] * db[i % r];
                        }
                    });
                }
                if self.wants(*b) {
                    let sb = self.value(*b).shape();
                    accumulate(&mut grads[b.0], sb, |d| {
                        for (i, y) in gd.iter().enumerate() {
                            d[i % r] += y * da[i];
                        }
                    });
                }
            }
            Op::Scale(a, c) => accumulate(&mut grads[a.0], out.shape(), |d| {
                d.iter_mut().zip(gd).for_each(|(x, y)| *x += c * y)
            }),
            Op::Offset(a) | Op::Reshape(a) => {
                let sa = self.value(*a).shape();
                accumulate(&mut grads[a.0], sa, |d| {
                    d.iter_mut().zip(gd).for_each(|(x, y)| *x += y)
                })
            }
            Op::LeakyRelu(a, slope) => {
                let da = self.value(*a).data();
                accumulate(&mut grads[a.0], out.shape(), |d| {
                    for (i, x) in d.iter_mut().enumerate() {
                        *x += if da[i] > 0.0 { gd[i] } else { slope * gd[i] };
                    }
                })
            }
            Op::Sigmoid(a) => {
                let y = out.data();
                accumulate(&mut grads[a.0], out.shape(), |d| {
                    for (i, x) in d.iter_mut().enumerate() {
                        *x += gd[i] * y[i] * (1.0 - y[i]);
                    }
                })
            }
            Op::Softplus(a) => {
                let da = self.value(*a).data();
                accumulate(&mut grads[a.0], out.shape(), |d| {
                    for (i, x) in d.iter_mut().enumerate() {
                        *x += gd[i] * sigmoid(da[i]);
                    }
                })
            }
            Op::Softmax(a) => {
                let y = out.data();
                let n = *out.shape().last().unwrap();
                accumulate(&mut grads[a.0], out.shape(), |d| {
                    if n == 0 {
                        return;
                    }
                    for ((dr, yr), gr) in d.chunks_mut(n).zip(y.chunks(n)).zip(gd.chunks(n)) {
                        let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                        for j in 0..n {
                            dr[j] += yr[j] * (gr[j] - dot);
                        }
                    }
                })
            }
            Op::MaskedFill(a, mask) => {
                let r = mask.len();
                accumulate(&mut grads[a.0], out.shape(), |d| {
                    for (i, x) in d.iter_mut().enumerate() {
                        if !mask[i % r] {
                            *x += gd[i];
                        }
                    }
                })
            }
            Op::GatherRows(table, ids) => {
                let st = self.value(*table).shape();
                let inner = self.value(*table).numel() / st[0].max(1);
                accumulate(&mut grads[table.0], st, |d| {
                    for (row, &i) in ids.iter().enumerate() {
                        for j in 0..inner {
                            d[i * inner + j] += gd[row * inner + j];
                        }
                    }
                })
            }
            Op::IndexedMatMul { x, w, ids } => {
                let (tx, tw) = (self.value(*x), self.value(*w));
                let (a, b) = (tx.shape()[1], tw.shape()[2]);
                if self.wants(*x) {
                    accumulate(&mut grads[x.0], tx.shape(), |d| {
                        for (row, &id) in ids.iter().enumerate() {
                            gemm(
                                1,
                                b,
                                a,
                                &gd[row * b..(row + 1) * b],
                                false,
                                &tw.data()[id * a * b..(id + 1) * a * b],
                                true,
                                &mut d[row * a..(row + 1) * a],
                                1.0,
                            );
                        }
                    });
                }
                if self.wants(*w) {
                    accumulate(&mut grads[w.0], tw.shape(), |d| {
                        for (row, &id) in ids.iter().enumerate() {
                            gemm(
                                a,
                                1,
                                b,
                                &tx.data()[row * a..(row + 1) * a],
                                true,
                                &gd[row * b..(row + 1) * b],
                                false,
                                &mut d[id * a * b..(id + 1) * a * b],
                                1.0,
                            );
                        }
                    });
                }
            }
            Op::Concat { parts, axis } => {
                let shape = out.shape();
                let outer: usize = shape[..*axis].iter().product();
                let inner: usize = shape[axis + 1..].iter().product();
                let total = shape[*axis] * inner;
                let mut start = 0;
                for p in parts {
                    let sp = self.value(*p).shape();
                    let chunk = sp[*axis] * inner;
                    if self.wants(*p) {
                        accumulate(&mut grads[p.0], sp, |d| {
                            for o in 0..outer {
                                let src = &gd[o * total + start..o * total + start + chunk];
                                d[o * chunk..(o + 1) * chunk]
                                    .iter_mut()
                                    .zip(src)
                                    .for_each(|(x, y)| *x += y);
                            }
                        });
                    }
                    start += chunk;
                }
            }
            Op::RepeatLeading(a, times) => {
                let sa = self.value(*a).shape();
                accumulate(&mut grads[a.0], sa, |d| {
                    let n = d.len();
                    for t in 0..*times {
                        d.iter_mut()
                            .zip(&gd[t * n..(t + 1) * n])
                            .for_each(|(x, y)| *x += y);
                    }
                })
            }
            Op::Gather(a, ids) => {
                let sa = self.value(*a).shape();
                accumulate(&mut grads[a.0], sa, |d| {
                    for (k, &i) in ids.iter().enumerate() {
                        d[i] += gd[k];
                    }
                })
            }
            Op::SumAll(a) => {
                let sa = self.value(*a).shape();
                accumulate(&mut grads[a.0], sa, |d| {
                    d.iter_mut().for_each(|x| *x += gd[0])
                })
            }
            Op::MeanAll(a) => {
                let ta = self.value(*a);
                let s = gd[0] / ta.numel().max(1) as f64;
                accumulate(&mut grads[a.0], ta.shape(), |d| {
                    d.iter_mut().for_each(|x| *x += s)
                })
            }
            Op::SumLast(a) => {
                let sa = self.value(*a).shape();
                let n = *sa.last().unwrap();
                accumulate(&mut grads[a.0], sa, |d| {
                    if n == 0 {
                        return;
                    }
                    for (row, x) in d.chunks_mut(n).enumerate() {
                        x.iter_mut().for_each(|v| *v += gd[row]);
                    }
                })
            }
        }
    }
}
