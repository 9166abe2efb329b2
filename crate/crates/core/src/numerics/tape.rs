//! Reverse-mode differentiation over a linear tape.
//!
//! Every op appends one node; node order is a topological order of the
//! graph, so the backward sweep simply walks the nodes in reverse and
//! accumulates adjoints additively.

use super::kernels::{self, gemm_nt, gemm_tn};
use super::tensor::{check_row_index, matmul_dims, numel, rank3};
use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<S> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBroadcast(Var, Var),
    Scale(Var, S),
    MatMul(Var, Var),
    Permute(Var, Vec<usize>),
    Reshape(Var),
    Narrow {
        x: Var,
        axis: usize,
        start: usize,
    },
    Concat {
        parts: Vec<Var>,
        axis: usize,
    },
    GatherRows {
        x: Var,
        index: Vec<Vec<usize>>,
    },
    Expand(Var),
    SumAll(Var),
    MeanAll(Var),
    MeanAxis {
        x: Var,
        axis: usize,
    },
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<S>,
        rstd: Vec<S>,
    },
    Gelu(Var),
    Softmax(Var),
    SoftmaxCrossEntropy {
        logits: Var,
        probs: Vec<S>,
        targets: Tensor<S>,
    },
    BceWithLogits {
        logits: Var,
        targets: Tensor<S>,
    },
}

struct Node<S> {
    value: Tensor<S>,
    op: Op<S>,
    needs_grad: bool,
}

/// Record of one forward pass.
pub struct Tape<S: Scalar = f32> {
    nodes: Vec<Node<S>>,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

/// Adjoints produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients<S> {
    grads: Vec<Option<Tensor<S>>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn get(&self, v: Var) -> Option<&Tensor<S>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<S>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf.
    pub fn param(&mut self, t: Tensor<S>) -> Var {
        self.leaf(t, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor<S>) -> Var {
        self.leaf(t, false)
    }

    pub fn leaf(&mut self, t: Tensor<S>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            needs_grad: requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    pub fn dims(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.dims()
    }

    fn push(&mut self, value: Tensor<S>, op: Op<S>, inputs: &[Var], name: &str) -> Result<Var> {
        value.ensure_finite(name)?;
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn same_dims(&self, a: Var, b: Var, op: &'static str) -> Result<()> {
        if self.dims(a) != self.dims(b) {
            return Err(Error::shape(
                op,
                format!("{:?} vs {:?}", self.dims(a), self.dims(b)),
            ));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_dims(a, b, "add")?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        self.push(out, Op::Add(a, b), &[a, b], "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_dims(a, b, "sub")?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y)?;
        self.push(out, Op::Sub(a, b), &[a, b], "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_dims(a, b, "mul")?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        self.push(out, Op::Mul(a, b), &[a, b], "mul")
    }

    /// `a + b` where `b`'s dims are a trailing suffix of `a`'s (bias add,
    /// positional embeddings).
    pub fn add_broadcast(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ad, bd) = (self.dims(a), self.dims(b));
        if bd.len() > ad.len() || ad[ad.len() - bd.len()..] != *bd {
            return Err(Error::shape("add_broadcast", format!("{ad:?} + {bd:?}")));
        }
        let inner = numel(bd);
        let bv = self.value(b).data().to_vec();
        let mut out = self.value(a).data().to_vec();
        for chunk in out.chunks_mut(inner) {
            for (o, &v) in chunk.iter_mut().zip(&bv) {
                *o += v;
            }
        }
        let t = Tensor::from_parts(ad.to_vec(), out);
        self.push(t, Op::AddBroadcast(a, b), &[a, b], "add_broadcast")
    }

    pub fn scale(&mut self, a: Var, s: S) -> Result<Var> {
        let out = self.value(a).map(|x| x * s);
        self.push(out, Op::Scale(a, s), &[a], "scale")
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.mul(a, a)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        self.push(out, Op::MatMul(a, b), &[a, b], "matmul")
    }

    pub fn permute(&mut self, a: Var, axes: &[usize]) -> Result<Var> {
        let out = self.value(a).permute(axes)?;
        self.push(out, Op::Permute(a, axes.to_vec()), &[a], "permute")
    }

    /// Swaps the last two axes.
    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let r = self.dims(a).len();
        if r < 2 {
            return Err(Error::shape("transpose", "rank < 2"));
        }
        let mut axes: Vec<usize> = (0..r).collect();
        axes.swap(r - 2, r - 1);
        self.permute(a, &axes)
    }

    pub fn reshape(&mut self, a: Var, dims: &[usize]) -> Result<Var> {
        let out = self.value(a).reshape(dims.to_vec())?;
        self.push(out, Op::Reshape(a), &[a], "reshape")
    }

    pub fn narrow(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let out = self.value(a).narrow(axis, start, len)?;
        self.push(out, Op::Narrow { x: a, axis, start }, &[a], "narrow")
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let values: Vec<&Tensor<S>> = parts.iter().map(|&v| self.value(v)).collect();
        let out = Tensor::concat(&values, axis)?;
        self.push(
            out,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            parts,
            "concat",
        )
    }

    /// Per-batch row gather on a `[b, l, k]` value; the adjoint scatter-adds.
    pub fn gather_rows(&mut self, a: Var, index: &[Vec<usize>]) -> Result<Var> {
        let out = self.value(a).gather_rows(index)?;
        self.push(
            out,
            Op::GatherRows {
                x: a,
                index: index.to_vec(),
            },
            &[a],
            "gather_rows",
        )
    }

    /// Broadcasts `a` to `dims`, where `a`'s dims are a trailing suffix.
    pub fn expand(&mut self, a: Var, dims: &[usize]) -> Result<Var> {
        let ad = self.dims(a);
        if ad.len() > dims.len() || dims[dims.len() - ad.len()..] != *ad {
            return Err(Error::shape("expand", format!("{ad:?} -> {dims:?}")));
        }
        let src = self.value(a).data();
        let reps = numel(dims) / src.len();
        let mut out = Vec::with_capacity(numel(dims));
        for _ in 0..reps {
            out.extend_from_slice(src);
        }
        let t = Tensor::from_parts(dims.to_vec(), out);
        self.push(t, Op::Expand(a), &[a], "expand")
    }

    pub fn sum_all(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).sum();
        self.push(Tensor::scalar(s), Op::SumAll(a), &[a], "sum")
    }

    pub fn mean_all(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).mean();
        self.push(Tensor::scalar(s), Op::MeanAll(a), &[a], "mean")
    }

    pub fn mean_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let out = self.value(a).mean_axis(axis)?;
        self.push(out, Op::MeanAxis { x: a, axis }, &[a], "mean_axis")
    }

    /// Normalizes over the last axis, then applies `gamma`, `beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let dims = self.dims(x).to_vec();
        let d = *dims
            .last()
            .ok_or_else(|| Error::shape("layer_norm", "scalar input"))?;
        if self.dims(gamma) != [d] || self.dims(beta) != [d] {
            return Err(Error::shape(
                "layer_norm",
                format!(
                    "affine params {:?}/{:?} for width {d}",
                    self.dims(gamma),
                    self.dims(beta)
                ),
            ));
        }
        let xs = self.value(x).data();
        let g = self.value(gamma).data();
        let bta = self.value(beta).data();
        let rows = xs.len() / d;
        let inv_d = S::one() / S::of(d as f64);
        let eps = S::of(eps);
        let mut xhat = vec![S::zero(); xs.len()];
        let mut rstd = vec![S::zero(); rows];
        let mut out = vec![S::zero(); xs.len()];
        for r in 0..rows {
            let row = &xs[r * d..(r + 1) * d];
            let mu = row.iter().copied().sum::<S>() * inv_d;
            let var = row.iter().map(|&v| (v - mu) * (v - mu)).sum::<S>() * inv_d;
            let rs = S::one() / (var + eps).sqrt();
            rstd[r] = rs;
            for j in 0..d {
                let h = (row[j] - mu) * rs;
                xhat[r * d + j] = h;
                out[r * d + j] = h * g[j] + bta[j];
            }
        }
        let t = Tensor::from_parts(dims, out);
        self.push(
            t,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
            &[x, gamma, beta],
            "layer_norm",
        )
    }

    /// `x·Φ(x)` with the exact Gaussian CDF.
    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        let out = self
            .value(a)
            .map(|x| S::of(x.as_f64() * kernels::normal_cdf(x.as_f64())));
        self.push(out, Op::Gelu(a), &[a], "gelu")
    }

    /// Softmax over the last axis with max subtraction.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let out = softmax_rows(self.value(a));
        self.push(out, Op::Softmax(a), &[a], "softmax")
    }

    /// Mean over rows of `-Σ t·log softmax(z)`; `targets` may be soft.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &Tensor<S>) -> Result<Var> {
        let z = self.value(logits);
        if z.dims() != targets.dims() || z.rank() != 2 {
            return Err(Error::shape(
                "softmax_cross_entropy",
                format!("logits {:?} vs targets {:?}", z.dims(), targets.dims()),
            ));
        }
        let n = z.dims()[1];
        let probs = softmax_rows(z);
        let rows = z.dims()[0];
        let mut loss = S::zero();
        for r in 0..rows {
            let zr = &z.data()[r * n..(r + 1) * n];
            let mx = zr.iter().copied().fold(S::neg_infinity(), S::max);
            let lse = mx + zr.iter().map(|&v| (v - mx).exp()).sum::<S>().ln();
            for j in 0..n {
                let t = targets.data()[r * n + j];
                if t != S::zero() {
                    loss -= t * (zr[j] - lse);
                }
            }
        }
        loss /= S::of(rows as f64);
        self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCrossEntropy {
                logits,
                probs: probs.into_vec(),
                targets: targets.clone(),
            },
            &[logits],
            "softmax_cross_entropy",
        )
    }

    /// Mean over all entries of the logistic loss (multi-label soft margin).
    pub fn bce_with_logits(&mut self, logits: Var, targets: &Tensor<S>) -> Result<Var> {
        let z = self.value(logits);
        if z.dims() != targets.dims() {
            return Err(Error::shape(
                "bce_with_logits",
                format!("logits {:?} vs targets {:?}", z.dims(), targets.dims()),
            ));
        }
        let mut loss = S::zero();
        for (&zi, &ti) in z.data().iter().zip(targets.data()) {
            loss += zi.max(S::zero()) - zi * ti + (-zi.abs()).exp().ln_1p();
        }
        loss /= S::of(z.len() as f64);
        self.push(
            Tensor::scalar(loss),
            Op::BceWithLogits {
                logits,
                targets: targets.clone(),
            },
            &[logits],
            "bce_with_logits",
        )
    }

    /// Back-propagates from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<S>> {
        if self.value(loss).len() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be scalar, got {:?}", self.dims(loss)),
            ));
        }
        let mut grads: Vec<Option<Vec<S>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![S::one()]);

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads)?;
            grads[i] = Some(g);
        }

        let grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, n)| {
                g.filter(|_| n.needs_grad)
                    .map(|g| Tensor::from_parts(n.value.dims().to_vec(), g))
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn accum<'g>(&self, grads: &'g mut [Option<Vec<S>>], v: Var) -> Option<&'g mut Vec<S>> {
        if !self.nodes[v.0].needs_grad {
            return None;
        }
        let n = self.nodes[v.0].value.len();
        Some(grads[v.0].get_or_insert_with(|| vec![S::zero(); n]))
    }

    fn propagate(&self, node: &Node<S>, g: &[S], grads: &mut [Option<Vec<S>>]) -> Result<()> {
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if let Some(d) = self.accum(grads, v) {
                        add_into(d, g);
                    }
                }
            }
            Op::Sub(a, b) => {
                if let Some(d) = self.accum(grads, *a) {
                    add_into(d, g);
                }
                if let Some(d) = self.accum(grads, *b) {
                    d.iter_mut().zip(g).for_each(|(d, &g)| *d -= g);
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                if let Some(d) = self.accum(grads, *a) {
                    for ((d, &g), &y) in d.iter_mut().zip(g).zip(bv) {
                        *d += g * y;
                    }
                }
                if let Some(d) = self.accum(grads, *b) {
                    for ((d, &g), &x) in d.iter_mut().zip(g).zip(av) {
                        *d += g * x;
                    }
                }
            }
            Op::AddBroadcast(a, b) => {
                if let Some(d) = self.accum(grads, *a) {
                    add_into(d, g);
                }
                if let Some(d) = self.accum(grads, *b) {
                    let inner = d.len();
                    for chunk in g.chunks(inner) {
                        add_into(d, chunk);
                    }
                }
            }
            Op::Expand(a) => {
                if let Some(d) = self.accum(grads, *a) {
                    let inner = d.len();
                    for chunk in g.chunks(inner) {
                        add_into(d, chunk);
                    }
                }
            }
            Op::Scale(a, s) => {
                if let Some(d) = self.accum(grads, *a) {
                    d.iter_mut().zip(g).for_each(|(d, &g)| *d += g * *s);
                }
            }
            Op::MatMul(a, b) => {
                let (batch, m, k, n) = matmul_dims(self.dims(*a), self.dims(*b))?;
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                if let Some(d) = self.accum(grads, *a) {
                    for bi in 0..batch {
                        gemm_nt(
                            &g[bi * m * n..(bi + 1) * m * n],
                            &bv[bi * k * n..(bi + 1) * k * n],
                            &mut d[bi * m * k..(bi + 1) * m * k],
                            m,
                            n,
                            k,
                        );
                    }
                }
                if let Some(d) = self.accum(grads, *b) {
                    for bi in 0..batch {
                        gemm_tn(
                            &av[bi * m * k..(bi + 1) * m * k],
                            &g[bi * m * n..(bi + 1) * m * n],
                            &mut d[bi * k * n..(bi + 1) * k * n],
                            m,
                            k,
                            n,
                        );
                    }
                }
            }
            Op::Permute(a, axes) => {
                if let Some(d) = self.accum(grads, *a) {
                    let inv = kernels::invert_axes(axes);
                    let mut tmp = vec![S::zero(); g.len()];
                    kernels::permute_into(g, node.value.dims(), &inv, &mut tmp);
                    add_into(d, &tmp);
                }
            }
            Op::Reshape(a) => {
                if let Some(d) = self.accum(grads, *a) {
                    add_into(d, g);
                }
            }
            Op::Narrow { x, axis, start } => {
                let src_dims = self.dims(*x).to_vec();
                if let Some(d) = self.accum(grads, *x) {
                    let outer = numel(&src_dims[..*axis]);
                    let inner = numel(&src_dims[axis + 1..]);
                    let span = src_dims[*axis];
                    let len = node.value.dims()[*axis];
                    for o in 0..outer {
                        let base = (o * span + start) * inner;
                        add_into(
                            &mut d[base..base + len * inner],
                            &g[o * len * inner..(o + 1) * len * inner],
                        );
                    }
                }
            }
            Op::Concat { parts, axis } => {
                let dims = node.value.dims();
                let outer = numel(&dims[..*axis]);
                let inner = numel(&dims[axis + 1..]);
                let total = dims[*axis];
                let mut offset = 0;
                for &p in parts {
                    let len = self.dims(p)[*axis];
                    if let Some(d) = self.accum(grads, p) {
                        for o in 0..outer {
                            let src = (o * total + offset) * inner;
                            add_into(
                                &mut d[o * len * inner..(o + 1) * len * inner],
                                &g[src..src + len * inner],
                            );
                        }
                    }
                    offset += len;
                }
            }
            Op::GatherRows { x, index } => {
                let (b, l, k) = rank3(self.dims(*x), "gather_rows")?;
                let n = check_row_index(index, b, l)?;
                if let Some(d) = self.accum(grads, *x) {
                    for (bi, rows) in index.iter().enumerate() {
                        for (j, &r) in rows.iter().enumerate() {
                            let dst = (bi * l + r) * k;
                            let src = (bi * n + j) * k;
                            add_into(&mut d[dst..dst + k], &g[src..src + k]);
                        }
                    }
                }
            }
            Op::SumAll(a) => {
                if let Some(d) = self.accum(grads, *a) {
                    d.iter_mut().for_each(|d| *d += g[0]);
                }
            }
            Op::MeanAll(a) => {
                if let Some(d) = self.accum(grads, *a) {
                    let s = g[0] / S::of(d.len() as f64);
                    d.iter_mut().for_each(|d| *d += s);
                }
            }
            Op::MeanAxis { x, axis } => {
                let src_dims = self.dims(*x).to_vec();
                if let Some(d) = self.accum(grads, *x) {
                    let outer = numel(&src_dims[..*axis]);
                    let span = src_dims[*axis];
                    let inner = numel(&src_dims[axis + 1..]);
                    let inv = S::one() / S::of(span as f64);
                    for o in 0..outer {
                        let go = &g[o * inner..(o + 1) * inner];
                        for s in 0..span {
                            let base = (o * span + s) * inner;
                            for (dv, &gv) in d[base..base + inner].iter_mut().zip(go) {
                                *dv += gv * inv;
                            }
                        }
                    }
                }
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            } => {
                let gam = self.value(*gamma).data();
                let d = gam.len();
                let rows = g.len() / d;
                if let Some(dg) = self.accum(grads, *gamma) {
                    for r in 0..rows {
                        for j in 0..d {
                            dg[j] += g[r * d + j] * xhat[r * d + j];
                        }
                    }
                }
                if let Some(db) = self.accum(grads, *beta) {
                    for r in 0..rows {
                        add_into(db, &g[r * d..(r + 1) * d]);
                    }
                }
                if let Some(dx) = self.accum(grads, *x) {
                    let inv_d = S::one() / S::of(d as f64);
                    let mut dxhat = vec![S::zero(); d];
                    for r in 0..rows {
                        let h = &xhat[r * d..(r + 1) * d];
                        let mut mean_dh = S::zero();
                        let mut mean_dh_h = S::zero();
                        for j in 0..d {
                            dxhat[j] = g[r * d + j] * gam[j];
                            mean_dh += dxhat[j];
                            mean_dh_h += dxhat[j] * h[j];
                        }
                        mean_dh *= inv_d;
                        mean_dh_h *= inv_d;
                        for j in 0..d {
                            dx[r * d + j] += rstd[r] * (dxhat[j] - mean_dh - h[j] * mean_dh_h);
                        }
                    }
                }
            }
            Op::Gelu(a) => {
                let xs = self.value(*a).data();
                if let Some(d) = self.accum(grads, *a) {
                    for ((d, &g), &x) in d.iter_mut().zip(g).zip(xs) {
                        let xf = x.as_f64();
                        let deriv = kernels::normal_cdf(xf) + xf * kernels::normal_pdf(xf);
                        *d += g * S::of(deriv);
                    }
                }
            }
            Op::Softmax(a) => {
                if let Some(d) = self.accum(grads, *a) {
                    let y = node.value.data();
                    let n = *node.value.dims().last().unwrap_or(&1);
                    for r in 0..y.len() / n {
                        let yr = &y[r * n..(r + 1) * n];
                        let gr = &g[r * n..(r + 1) * n];
                        let dot: S = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                        for j in 0..n {
                            d[r * n + j] += yr[j] * (gr[j] - dot);
                        }
                    }
                }
            }
            Op::SoftmaxCrossEntropy {
                logits,
                probs,
                targets,
            } => {
                if let Some(d) = self.accum(grads, *logits) {
                    let n = targets.dims()[1];
                    let rows = targets.dims()[0];
                    let scale = g[0] / S::of(rows as f64);
                    let t = targets.data();
                    for r in 0..rows {
                        let tsum: S = t[r * n..(r + 1) * n].iter().copied().sum();
                        for j in 0..n {
                            let idx = r * n + j;
                            d[idx] += scale * (probs[idx] * tsum - t[idx]);
                        }
                    }
                }
            }
            Op::BceWithLogits { logits, targets } => {
                let z = self.value(*logits).data();
                if let Some(d) = self.accum(grads, *logits) {
                    let scale = g[0] / S::of(z.len() as f64);
                    for ((d, &zi), &ti) in d.iter_mut().zip(z).zip(targets.data()) {
                        let sig = S::one() / (S::one() + (-zi).exp());
                        *d += scale * (sig - ti);
                    }
                }
            }
        }
        Ok(())
    }
}

fn add_into<S: Scalar>(dst: &mut [S], src: &[S]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Softmax over the last axis, max-subtracted.
pub fn softmax_rows<S: Scalar>(t: &Tensor<S>) -> Tensor<S> {
    let n = *t.dims().last().unwrap_or(&1);
    let mut out = t.data().to_vec();
    for row in out.chunks_mut(n) {
        let mx = row.iter().copied().fold(S::neg_infinity(), S::max);
        let mut sum = S::zero();
        for v in row.iter_mut() {
            *v = (*v - mx).exp();
            sum += *v;
        }
        let inv = S::one() / sum;
        row.iter_mut().for_each(|v| *v *= inv);
    }
    Tensor::from_parts(t.dims().to_vec(), out)
}
