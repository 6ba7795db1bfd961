use std::borrow::Cow;

use rand::Rng;

use super::{softmax_into, Result, Tensor, TensorError};

/// Clamp applied inside the logarithm of [`Graph::cross_entropy`].
pub const LOG_CLAMP: f64 = 1e-12;

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Softmax(Var),
    Concat(Vec<Var>),
    StackRows(Vec<Var>),
    ConcatRows(Vec<Var>),
    Row(Var, usize),
    SliceRows(Var, usize),
    SliceLast(Var, usize),
    Reshape(Var),
    Sum(Var),
    Mean(Var),
    Gather(Var, Vec<usize>),
    Dropout(Var, Vec<f64>),
    CrossEntropy(Var, Vec<usize>),
    /// Cached `M[s,k,i] = Σ_j T[k,i,j]·u[s,j]`; `seg[r]` is the `u` row used by `h` row `r`.
    Bilinear { h: Var, t: Var, u: Var, seg: Vec<usize>, m: Vec<f64> },
}

struct Node<'p> {
    value: Cow<'p, Tensor>,
    op: Op,
    needs_grad: bool,
}

/// A computation tape. Parameters may be borrowed for the graph's lifetime so
/// large weight tensors are not copied per forward pass.
pub struct Graph<'p> {
    nodes: Vec<Node<'p>>,
    freed: bool,
}

/// Adjoints produced by [`Graph::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }
}

impl Default for Graph<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'p> Graph<'p> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            freed: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf borrowed from the caller.
    pub fn param(&mut self, value: &'p Tensor) -> Var {
        self.push_leaf(Cow::Borrowed(value), true)
    }

    pub fn param_owned(&mut self, value: Tensor) -> Var {
        self.push_leaf(Cow::Owned(value), true)
    }

    /// Leaf that receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_leaf(Cow::Owned(value), false)
    }

    pub fn constant_ref(&mut self, value: &'p Tensor) -> Var {
        self.push_leaf(Cow::Borrowed(value), false)
    }

    fn push_leaf(&mut self, value: Cow<'p, Tensor>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    fn check(&self, vars: &[Var]) -> Result<()> {
        if self.freed {
            return Err(TensorError::GraphFreed);
        }
        if vars.iter().any(|v| v.0 >= self.nodes.len()) {
            return Err(TensorError::ForeignVar);
        }
        Ok(())
    }

    fn push(&mut self, op_name: &'static str, value: Tensor, op: Op, parents: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite { op: op_name });
        }
        let needs_grad = parents.iter().any(|p| self.nodes[p.0].needs_grad);
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(TensorError::ShapeMismatch {
                op,
                left: self.shape(a).to_vec(),
                right: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    fn binary(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        self.check(&[a, b])?;
        self.same_shape(name, a, b)?;
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::new(va.shape().to_vec(), data)?;
        self.push(name, out, op, &[a, b])
    }

    fn unary(&mut self, name: &'static str, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        self.check(&[a])?;
        let out = self.value(a).map(f);
        self.push(name, out, op, &[a])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(&[a, b])?;
        let out = self.value(a).matmul(self.value(b))?;
        self.push("matmul", out, Op::MatMul(a, b), &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds vector `row` to every row of `matrix` (`row` may also match a vector `matrix`).
    pub fn add_row(&mut self, matrix: Var, row: Var) -> Result<Var> {
        self.check(&[matrix, row])?;
        let m = self.value(matrix);
        let r = self.value(row);
        let cols = *m.shape().last().unwrap_or(&0);
        if r.rank() != 1 || r.len() != cols {
            return Err(TensorError::ShapeMismatch {
                op: "add_row",
                left: m.shape().to_vec(),
                right: r.shape().to_vec(),
            });
        }
        let mut out = m.clone();
        for chunk in out.data_mut().chunks_mut(cols.max(1)) {
            for (o, &b) in chunk.iter_mut().zip(r.data()) {
                *o += b;
            }
        }
        self.push("add_row", out, Op::AddRow(matrix, row), &[matrix, row])
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        self.unary("scale", a, |x| x * factor, Op::Scale(a, factor))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary("tanh", a, f64::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary("sigmoid", a, super::sigmoid, Op::Sigmoid(a))
    }

    /// Softmax along the last axis (each row of a matrix independently).
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        self.check(&[a])?;
        let v = self.value(a);
        let cols = *v.shape().last().unwrap_or(&0);
        if v.is_empty() || cols == 0 {
            return Err(TensorError::Empty { op: "softmax" });
        }
        let mut out = Tensor::zeros(v.shape());
        for (src, dst) in v.data().chunks(cols).zip(out.data_mut().chunks_mut(cols)) {
            softmax_into(src, dst);
        }
        self.push("softmax", out, Op::Softmax(a), &[a])
    }

    /// Concatenation along the last axis; leading dimensions must agree.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        self.check(parts)?;
        let first = parts.first().ok_or(TensorError::Empty { op: "concat" })?;
        let lead = self.shape(*first)[..self.shape(*first).len().saturating_sub(1)].to_vec();
        let rows: usize = lead.iter().product();
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            if s.is_empty() || s[..s.len() - 1] != lead[..] {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    left: self.shape(*first).to_vec(),
                    right: s.to_vec(),
                });
            }
            widths.push(s[s.len() - 1]);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead;
        shape.push(total);
        let out = Tensor::new(shape, data)?;
        self.push("concat", out, Op::Concat(parts.to_vec()), parts)
    }

    /// Stacks equally sized vectors into the rows of a matrix.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Result<Var> {
        self.check(rows)?;
        let first = rows.first().ok_or(TensorError::Empty { op: "stack_rows" })?;
        let width = self.value(*first).len();
        let mut data = Vec::with_capacity(rows.len() * width);
        for &r in rows {
            let v = self.value(r);
            if v.rank() != 1 || v.len() != width {
                return Err(TensorError::ShapeMismatch {
                    op: "stack_rows",
                    left: self.shape(*first).to_vec(),
                    right: v.shape().to_vec(),
                });
            }
            data.extend_from_slice(v.data());
        }
        let out = Tensor::new(vec![rows.len(), width], data)?;
        self.push("stack_rows", out, Op::StackRows(rows.to_vec()), rows)
    }

    /// Stacks matrices of equal width on top of each other.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        self.check(parts)?;
        let first = parts.first().ok_or(TensorError::Empty { op: "concat_rows" })?;
        let width = *self.shape(*first).last().unwrap_or(&0);
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let v = self.value(p);
            if v.rank() != 2 || v.shape()[1] != width {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_rows",
                    left: self.shape(*first).to_vec(),
                    right: v.shape().to_vec(),
                });
            }
            rows += v.shape()[0];
            data.extend_from_slice(v.data());
        }
        let out = Tensor::new(vec![rows, width], data)?;
        self.push("concat_rows", out, Op::ConcatRows(parts.to_vec()), parts)
    }

    /// Rows `start..start + len` of a matrix.
    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        self.check(&[a])?;
        let v = self.value(a);
        let [rows, cols] = *v.shape() else {
            return Err(TensorError::Rank {
                op: "slice_rows",
                expected: 2,
                shape: v.shape().to_vec(),
            });
        };
        if start + len > rows {
            return Err(TensorError::IndexOutOfRange {
                op: "slice_rows",
                index: start + len,
                extent: rows,
            });
        }
        let out = Tensor::new(vec![len, cols], v.data()[start * cols..(start + len) * cols].to_vec())?;
        self.push("slice_rows", out, Op::SliceRows(a, start), &[a])
    }

    /// Row `i` of a matrix as a vector.
    pub fn row(&mut self, a: Var, i: usize) -> Result<Var> {
        self.check(&[a])?;
        let v = self.value(a);
        let [rows, cols] = *v.shape() else {
            return Err(TensorError::Rank {
                op: "row",
                expected: 2,
                shape: v.shape().to_vec(),
            });
        };
        if i >= rows {
            return Err(TensorError::IndexOutOfRange {
                op: "row",
                index: i,
                extent: rows,
            });
        }
        let out = Tensor::vector(v.data()[i * cols..(i + 1) * cols].to_vec());
        self.push("row", out, Op::Row(a, i), &[a])
    }

    /// Columns `start..start + len` along the last axis.
    pub fn slice_last(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        self.check(&[a])?;
        let v = self.value(a);
        let shape = v.shape();
        let cols = *shape.last().ok_or(TensorError::Rank {
            op: "slice_last",
            expected: 1,
            shape: vec![],
        })?;
        if start + len > cols {
            return Err(TensorError::IndexOutOfRange {
                op: "slice_last",
                index: start + len,
                extent: cols,
            });
        }
        let data = v
            .data()
            .chunks(cols)
            .flat_map(|row| row[start..start + len].iter().copied())
            .collect();
        let mut out_shape = shape.to_vec();
        *out_shape.last_mut().unwrap() = len;
        let out = Tensor::new(out_shape, data)?;
        self.push("slice_last", out, Op::SliceLast(a, start), &[a])
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        self.check(&[a])?;
        let out = self.value(a).clone().reshape(shape)?;
        self.push("reshape", out, Op::Reshape(a), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.check(&[a])?;
        let out = Tensor::scalar(self.value(a).sum());
        self.push("sum", out, Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        self.check(&[a])?;
        let v = self.value(a);
        if v.is_empty() {
            return Err(TensorError::Empty { op: "mean" });
        }
        let out = Tensor::scalar(v.sum() / v.len() as f64);
        self.push("mean", out, Op::Mean(a), &[a])
    }

    /// Row lookup into an embedding matrix; gradients scatter back into the rows.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        self.check(&[table])?;
        let t = self.value(table);
        let [rows, cols] = *t.shape() else {
            return Err(TensorError::Rank {
                op: "gather_rows",
                expected: 2,
                shape: t.shape().to_vec(),
            });
        };
        let mut data = Vec::with_capacity(ids.len() * cols);
        for &id in ids {
            if id >= rows {
                return Err(TensorError::IndexOutOfRange {
                    op: "gather_rows",
                    index: id,
                    extent: rows,
                });
            }
            data.extend_from_slice(t.row(id));
        }
        let out = Tensor::new(vec![ids.len(), cols], data)?;
        self.push("gather_rows", out, Op::Gather(table, ids.to_vec()), &[table])
    }

    /// Inverted dropout. Identity (no node recorded) when not training or `rate == 0`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: Var, rate: f64, training: bool, rng: &mut R) -> Result<Var> {
        self.check(&[a])?;
        if !(0.0..1.0).contains(&rate) {
            return Err(TensorError::DropoutRate(rate));
        }
        if !training || rate == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - rate);
        let v = self.value(a);
        let mask: Vec<f64> = (0..v.len())
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let data = v.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let out = Tensor::new(v.shape().to_vec(), data)?;
        self.push("dropout", out, Op::Dropout(a, mask), &[a])
    }

    /// Mean over rows of `-ln(max(pred[row, gold[row]], 1e-12))`.
    pub fn cross_entropy(&mut self, pred: Var, gold: &[usize]) -> Result<Var> {
        self.check(&[pred])?;
        let p = self.value(pred);
        let [rows, classes] = *p.shape() else {
            return Err(TensorError::Rank {
                op: "cross_entropy",
                expected: 2,
                shape: p.shape().to_vec(),
            });
        };
        if rows != gold.len() {
            return Err(TensorError::ShapeMismatch {
                op: "cross_entropy",
                left: p.shape().to_vec(),
                right: vec![gold.len()],
            });
        }
        if rows == 0 {
            return Err(TensorError::Empty { op: "cross_entropy" });
        }
        let mut total = 0.0;
        for (r, &g) in gold.iter().enumerate() {
            if g >= classes {
                return Err(TensorError::LabelOutOfRange { index: g, classes });
            }
            total -= p.data()[r * classes + g].max(LOG_CLAMP).ln();
        }
        let out = Tensor::scalar(total / rows as f64);
        self.push("cross_entropy", out, Op::CrossEntropy(pred, gold.to_vec()), &[pred])
    }

    /// `out[t,k] = Σ_ij h[t,i]·T[k,i,j]·u[j]` for `h: [n×d]`, `T: [K×d×d]`, `u: [d]`.
    pub fn bilinear_rows(&mut self, h: Var, t: Var, u: Var) -> Result<Var> {
        self.check(&[h, t, u])?;
        let n = self.shape(h).first().copied().unwrap_or(0);
        if self.value(u).rank() != 1 {
            return Err(TensorError::Rank {
                op: "bilinear",
                expected: 1,
                shape: self.shape(u).to_vec(),
            });
        }
        self.bilinear_impl(h, t, u, vec![0; n])
    }

    /// Segmented form: `out[r,k] = Σ_ij h[r,i]·T[k,i,j]·u[seg[r],j]` for
    /// `u: [S×d]`. Each slice of `T` is visited once for all `S` vectors, which
    /// is what makes batching sentences through one graph cheap.
    pub fn bilinear_segments(&mut self, h: Var, t: Var, u: Var, segments: &[usize]) -> Result<Var> {
        self.check(&[h, t, u])?;
        let uv = self.value(u);
        let [s, _] = *uv.shape() else {
            return Err(TensorError::Rank {
                op: "bilinear",
                expected: 2,
                shape: uv.shape().to_vec(),
            });
        };
        if let Some(&bad) = segments.iter().find(|&&g| g >= s) {
            return Err(TensorError::IndexOutOfRange {
                op: "bilinear",
                index: bad,
                extent: s,
            });
        }
        self.bilinear_impl(h, t, u, segments.to_vec())
    }

    fn bilinear_impl(&mut self, h: Var, t: Var, u: Var, seg: Vec<usize>) -> Result<Var> {
        let (hv, tv, uv) = (self.value(h), self.value(t), self.value(u));
        let mismatch = || TensorError::ShapeMismatch {
            op: "bilinear",
            left: hv.shape().to_vec(),
            right: tv.shape().to_vec(),
        };
        let [n, d] = *hv.shape() else {
            return Err(TensorError::Rank {
                op: "bilinear",
                expected: 2,
                shape: hv.shape().to_vec(),
            });
        };
        let [k, d1, d2] = *tv.shape() else {
            return Err(TensorError::Rank {
                op: "bilinear",
                expected: 3,
                shape: tv.shape().to_vec(),
            });
        };
        let s = if uv.rank() == 1 { 1 } else { uv.shape()[0] };
        if d1 != d || d2 != d || uv.len() != s * d || seg.len() != n {
            return Err(mismatch());
        }
        let kd = k * d;
        let ud = uv.data();
        // M[s, (k,i)] = T[(k,i), :]·u[s, :]
        let mut m = vec![0.0; s * kd];
        for (ki, trow) in tv.data().chunks_exact(d.max(1)).enumerate().take(kd) {
            for (si, urow) in ud.chunks_exact(d.max(1)).enumerate() {
                m[si * kd + ki] = super::dot(trow, urow);
            }
        }
        let mut out = vec![0.0; n * k];
        for r in 0..n {
            let hr = &hv.data()[r * d..(r + 1) * d];
            let ms = &m[seg[r] * kd..(seg[r] + 1) * kd];
            for kk in 0..k {
                out[r * k + kk] = super::dot(hr, &ms[kk * d..(kk + 1) * d]);
            }
        }
        let out = Tensor::new(vec![n, k], out)?;
        self.push("bilinear", out, Op::Bilinear { h, t, u, seg, m }, &[h, t, u])
    }

    /// Single-vector form of [`Graph::bilinear_rows`]: `h: [d]` → `[K]`.
    pub fn bilinear(&mut self, h: Var, t: Var, u: Var) -> Result<Var> {
        self.check(&[h, t, u])?;
        let d = self.value(h).len();
        if self.value(h).rank() != 1 {
            return Err(TensorError::Rank {
                op: "bilinear",
                expected: 1,
                shape: self.shape(h).to_vec(),
            });
        }
        let h2 = self.reshape(h, &[1, d])?;
        let out = self.bilinear_rows(h2, t, u)?;
        let k = self.shape(out)[1];
        self.reshape(out, &[k])
    }

    /// Reverse pass from a scalar root. Frees the tape: a second call fails.
    pub fn backward(&mut self, root: Var) -> Result<Gradients> {
        self.check(&[root])?;
        let root_value = self.value(root);
        if root_value.len() != 1 {
            return Err(TensorError::NotScalar(root_value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::filled(root_value.shape(), 1.0));

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if self.nodes[i].needs_grad {
                self.propagate(i, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        self.freed = true;
        for node in &mut self.nodes {
            node.op = Op::Leaf;
        }
        Ok(Gradients { grads })
    }

    fn acc<'a>(&self, grads: &'a mut [Option<Tensor>], v: Var) -> Option<&'a mut Tensor> {
        let node = &self.nodes[v.0];
        if !node.needs_grad {
            return None;
        }
        Some(grads[v.0].get_or_insert_with(|| Tensor::zeros(node.value.shape())))
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let y = &self.nodes[i].value;
        let gd = g.data();
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k) = (av.shape()[0], av.shape()[1]);
                let n = bv.shape()[1];
                if let Some(ga) = self.acc(grads, *a) {
                    // ga += g·bᵀ
                    let gad = ga.data_mut();
                    for r in 0..m {
                        let grow = &gd[r * n..(r + 1) * n];
                        for p in 0..k {
                            gad[r * k + p] += super::dot(grow, &bv.data()[p * n..(p + 1) * n]);
                        }
                    }
                }
                if let Some(gb) = self.acc(grads, *b) {
                    // gb += aᵀ·g
                    let gbd = gb.data_mut();
                    for r in 0..m {
                        let grow = &gd[r * n..(r + 1) * n];
                        for p in 0..k {
                            let a_rp = av.data()[r * k + p];
                            if a_rp == 0.0 {
                                continue;
                            }
                            for (o, &gv) in gbd[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                *o += a_rp * gv;
                            }
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                if let Some(ga) = self.acc(grads, *a) {
                    ga.add_assign(g);
                }
                if let Some(gb) = self.acc(grads, *b) {
                    gb.add_assign(g);
                }
            }
            Op::AddRow(a, b) => {
                if let Some(ga) = self.acc(grads, *a) {
                    ga.add_assign(g);
                }
                if let Some(gb) = self.acc(grads, *b) {
                    let cols = gb.len();
                    for chunk in gd.chunks(cols.max(1)) {
                        for (o, &v) in gb.data_mut().iter_mut().zip(chunk) {
                            *o += v;
                        }
                    }
                }
            }
            Op::Sub(a, b) => {
                if let Some(ga) = self.acc(grads, *a) {
                    ga.add_assign(g);
                }
                if let Some(gb) = self.acc(grads, *b) {
                    for (o, &v) in gb.data_mut().iter_mut().zip(gd) {
                        *o -= v;
                    }
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if let Some(ga) = self.acc(grads, *a) {
                    for ((o, &gv), &bvv) in ga.data_mut().iter_mut().zip(gd).zip(bv.data()) {
                        *o += gv * bvv;
                    }
                }
                if let Some(gb) = self.acc(grads, *b) {
                    for ((o, &gv), &avv) in gb.data_mut().iter_mut().zip(gd).zip(av.data()) {
                        *o += gv * avv;
                    }
                }
            }
            Op::Scale(a, s) => {
                if let Some(ga) = self.acc(grads, *a) {
                    for (o, &gv) in ga.data_mut().iter_mut().zip(gd) {
                        *o += s * gv;
                    }
                }
            }
            Op::Tanh(a) => {
                if let Some(ga) = self.acc(grads, *a) {
                    for ((o, &gv), &yv) in ga.data_mut().iter_mut().zip(gd).zip(y.data()) {
                        *o += gv * (1.0 - yv * yv);
                    }
                }
            }
            Op::Sigmoid(a) => {
                if let Some(ga) = self.acc(grads, *a) {
                    for ((o, &gv), &yv) in ga.data_mut().iter_mut().zip(gd).zip(y.data()) {
                        *o += gv * yv * (1.0 - yv);
                    }
                }
            }
            Op::Softmax(a) => {
                if let Some(ga) = self.acc(grads, *a) {
                    let cols = *y.shape().last().unwrap();
                    for ((gar, gr), yr) in ga
                        .data_mut()
                        .chunks_mut(cols)
                        .zip(gd.chunks(cols))
                        .zip(y.data().chunks(cols))
                    {
                        let inner = super::dot(gr, yr);
                        for ((o, &gv), &yv) in gar.iter_mut().zip(gr).zip(yr) {
                            *o += yv * (gv - inner);
                        }
                    }
                }
            }
            Op::Concat(parts) => {
                let total = *y.shape().last().unwrap();
                let rows = y.len() / total.max(1);
                let mut offset = 0;
                for &p in parts {
                    let w = *self.shape(p).last().unwrap();
                    if let Some(gp) = self.acc(grads, p) {
                        let gpd = gp.data_mut();
                        for r in 0..rows {
                            for c in 0..w {
                                gpd[r * w + c] += gd[r * total + offset + c];
                            }
                        }
                    }
                    offset += w;
                }
            }
            Op::StackRows(rows) => {
                let w = y.shape()[1];
                for (r, &p) in rows.iter().enumerate() {
                    if let Some(gp) = self.acc(grads, p) {
                        for (o, &v) in gp.data_mut().iter_mut().zip(&gd[r * w..(r + 1) * w]) {
                            *o += v;
                        }
                    }
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    if let Some(gp) = self.acc(grads, p) {
                        for (o, &v) in gp.data_mut().iter_mut().zip(&gd[offset..offset + len]) {
                            *o += v;
                        }
                    }
                    offset += len;
                }
            }
            Op::SliceRows(a, start) => {
                if let Some(ga) = self.acc(grads, *a) {
                    let cols = ga.shape()[1];
                    for (o, &v) in ga.data_mut()[start * cols..start * cols + gd.len()].iter_mut().zip(gd) {
                        *o += v;
                    }
                }
            }
            Op::Row(a, r) => {
                if let Some(ga) = self.acc(grads, *a) {
                    let w = gd.len();
                    for (o, &v) in ga.data_mut()[r * w..(r + 1) * w].iter_mut().zip(gd) {
                        *o += v;
                    }
                }
            }
            Op::SliceLast(a, start) => {
                let len = *y.shape().last().unwrap();
                if let Some(ga) = self.acc(grads, *a) {
                    let cols = *ga.shape().last().unwrap();
                    for (dst, src) in ga.data_mut().chunks_mut(cols).zip(gd.chunks(len.max(1))) {
                        for (o, &v) in dst[*start..*start + len].iter_mut().zip(src) {
                            *o += v;
                        }
                    }
                }
            }
            Op::Reshape(a) => {
                if let Some(ga) = self.acc(grads, *a) {
                    for (o, &v) in ga.data_mut().iter_mut().zip(gd) {
                        *o += v;
                    }
                }
            }
            Op::Sum(a) => {
                if let Some(ga) = self.acc(grads, *a) {
                    let s = gd[0];
                    ga.data_mut().iter_mut().for_each(|o| *o += s);
                }
            }
            Op::Mean(a) => {
                if let Some(ga) = self.acc(grads, *a) {
                    let s = gd[0] / ga.len() as f64;
                    ga.data_mut().iter_mut().for_each(|o| *o += s);
                }
            }
            Op::Gather(table, ids) => {
                if let Some(gt) = self.acc(grads, *table) {
                    let cols = gt.shape()[1];
                    for (r, &id) in ids.iter().enumerate() {
                        for (o, &v) in gt.data_mut()[id * cols..(id + 1) * cols]
                            .iter_mut()
                            .zip(&gd[r * cols..(r + 1) * cols])
                        {
                            *o += v;
                        }
                    }
                }
            }
            Op::Dropout(a, mask) => {
                if let Some(ga) = self.acc(grads, *a) {
                    for ((o, &gv), &m) in ga.data_mut().iter_mut().zip(gd).zip(mask) {
                        *o += gv * m;
                    }
                }
            }
            Op::CrossEntropy(pred, gold) => {
                let p = self.value(*pred);
                if let Some(gp) = self.acc(grads, *pred) {
                    let classes = p.shape()[1];
                    let scale = gd[0] / gold.len() as f64;
                    for (r, &c) in gold.iter().enumerate() {
                        let pv = p.data()[r * classes + c];
                        if pv > LOG_CLAMP {
                            gp.data_mut()[r * classes + c] -= scale / pv;
                        }
                    }
                }
            }
            Op::Bilinear { h, t, u, seg, m } => {
                let (hv, tv, uv) = (self.value(*h), self.value(*t), self.value(*u));
                let (n, d) = (hv.shape()[0], hv.shape()[1]);
                let k = tv.shape()[0];
                let kd = k * d;
                let s = uv.len() / d.max(1);
                if let Some(gh) = self.acc(grads, *h) {
                    // gh[r,i] += Σ_k g[r,k]·M[seg r,k,i]
                    let ghd = gh.data_mut();
                    for r in 0..n {
                        let ms = &m[seg[r] * kd..(seg[r] + 1) * kd];
                        for kk in 0..k {
                            let gv = gd[r * k + kk];
                            for (o, &mv) in ghd[r * d..(r + 1) * d].iter_mut().zip(&ms[kk * d..(kk + 1) * d]) {
                                *o += gv * mv;
                            }
                        }
                    }
                }
                let t_needs = self.nodes[t.0].needs_grad;
                let u_needs = self.nodes[u.0].needs_grad;
                if !(t_needs || u_needs) || d == 0 {
                    return;
                }
                // A[s,(k,i)] = Σ_{r: seg r = s} g[r,k]·h[r,i]
                let mut a = vec![0.0; s * kd];
                for r in 0..n {
                    let hr = &hv.data()[r * d..(r + 1) * d];
                    let ar = &mut a[seg[r] * kd..(seg[r] + 1) * kd];
                    for kk in 0..k {
                        let gv = gd[r * k + kk];
                        if gv == 0.0 {
                            continue;
                        }
                        for (o, &x) in ar[kk * d..(kk + 1) * d].iter_mut().zip(hr) {
                            *o += gv * x;
                        }
                    }
                }
                // gu[s,j] += Σ_(k,i) A[s,(k,i)]·T[(k,i),j]    gT[(k,i),j] += Σ_s A[s,(k,i)]·u[s,j]
                let mut gu_local = vec![0.0; if u_needs { s * d } else { 0 }];
                let mut gt_local = if t_needs { self.acc(grads, *t) } else { None };
                let ud = uv.data();
                for (ki, trow) in tv.data().chunks_exact(d).enumerate() {
                    for si in 0..s {
                        let av = a[si * kd + ki];
                        if av == 0.0 {
                            continue;
                        }
                        if u_needs {
                            for (o, &tv) in gu_local[si * d..(si + 1) * d].iter_mut().zip(trow) {
                                *o += av * tv;
                            }
                        }
                        if let Some(gt) = gt_local.as_mut() {
                            for (o, &uj) in gt.data_mut()[ki * d..(ki + 1) * d].iter_mut().zip(&ud[si * d..(si + 1) * d]) {
                                *o += av * uj;
                            }
                        }
                    }
                }
                if u_needs {
                    let gu = self.acc(grads, *u).unwrap();
                    for (o, v) in gu.data_mut().iter_mut().zip(gu_local) {
                        *o += v;
                    }
                }
            }
        }
    }
}
