//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation applied to its [`Var`] handles.
//! Nodes whose inputs do not require gradients are stored as constants,
//! so the tape only links what `backward` will actually visit.

use super::{NnError, Tensor};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Cols,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Concat(Vec<Var>, Axis),
    Slice { src: Var, axis: Axis, start: usize },
    GatherRows { src: Var, ids: Vec<usize> },
    Transpose(Var),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Softmax(Var, Axis),
    Mse(Var, Var),
    Sum(Var),
    Mean(Var),
    CrossEntropy { logits: Var, targets: Vec<usize> },
    BceWithLogits { logits: Var, targets: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Computation tape. One graph per forward pass; leaf gradients
/// accumulate across `backward` calls until [`Graph::zero_grad`].
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    leaf_grads: Vec<Option<Vec<f64>>>,
}

fn dims_of(shape: &[usize]) -> (usize, usize) {
    match shape {
        [] => (1, 1),
        [n] => (1, *n),
        [r, c] => (*r, *c),
        _ => unreachable!(),
    }
}

fn shape_err(op: &'static str, detail: String) -> NnError {
    NnError::Shape { op, detail }
}

fn matmul_raw(a: &[f64], b: &[f64], n: usize, k: usize, m: usize, out: &mut [f64]) {
    for i in 0..n {
        let row = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * m..(p + 1) * m];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
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

fn softmax_in_place(values: &mut [f64], rows: usize, cols: usize, axis: Axis) {
    let (outer, inner, stride_outer, stride_inner) = match axis {
        Axis::Cols => (rows, cols, cols, 1),
        Axis::Rows => (cols, rows, 1, cols),
    };
    for o in 0..outer {
        let idx = |i: usize| o * stride_outer + i * stride_inner;
        let max = (0..inner).map(|i| values[idx(i)]).fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for i in 0..inner {
            let e = (values[idx(i)] - max).exp();
            values[idx(i)] = e;
            total += e;
        }
        for i in 0..inner {
            values[idx(i)] /= total;
        }
    }
}

/// Row-wise softmax over a plain slice (no graph).
pub fn softmax(values: &[f64]) -> Vec<f64> {
    let mut out = values.to_vec();
    softmax_in_place(&mut out, 1, values.len(), Axis::Cols);
    out
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Adds a leaf. Gradients are tracked only when `requires_grad`.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad });
        self.leaf_grads.push(None);
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a leaf, if any has been computed.
    pub fn grad(&self, v: Var) -> Option<Tensor> {
        let node = &self.nodes[v.0];
        self.leaf_grads[v.0]
            .as_ref()
            .map(|g| Tensor::new(node.value.shape().to_vec(), g.clone()).expect("grad shape"))
    }

    pub fn zero_grad(&mut self) {
        self.leaf_grads.iter_mut().for_each(|g| *g = None);
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var, NnError> {
        if !value.is_finite() {
            return Err(NnError::NonFinite(op_name(&op)));
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        let op = if requires_grad { op } else { Op::Leaf };
        self.nodes.push(Node { value, op, requires_grad });
        self.leaf_grads.push(None);
        Ok(Var(self.nodes.len() - 1))
    }

    fn dims(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dims()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (n, k) = self.dims(a);
        let (k2, m) = self.dims(b);
        if k != k2 {
            return Err(shape_err("matmul", format!("{n}x{k} · {k2}x{m}")));
        }
        let mut out = vec![0.0; n * m];
        matmul_raw(self.value(a).data(), self.value(b).data(), n, k, m, &mut out);
        self.push(Tensor::matrix(n, m, out)?, Op::MatMul(a, b), &[a, b])
    }

    fn elementwise(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var, NnError> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if dims_of(sa) != dims_of(sb) {
            return Err(shape_err(name, format!("{sa:?} vs {sb:?}")));
        }
        let shape = sa.to_vec();
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        self.push(Tensor::new(shape, data)?, op, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.elementwise("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.elementwise("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.elementwise("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds a `1 × C` row to every row of an `R × C` matrix.
    pub fn add_row(&mut self, m: Var, row: Var) -> Result<Var, NnError> {
        let (r, c) = self.dims(m);
        let (rr, rc) = self.dims(row);
        if rr != 1 || rc != c {
            return Err(shape_err("add_row", format!("{r}x{c} + {rr}x{rc}")));
        }
        let rv = self.value(row).data();
        let data = self
            .value(m)
            .data()
            .chunks(c.max(1))
            .flat_map(|chunk| chunk.iter().zip(rv).map(|(x, y)| x + y))
            .collect();
        self.push(Tensor::matrix(r, c, data)?, Op::AddRow(m, row), &[m, row])
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var, NnError> {
        let v = self.value(a).map(|x| x * factor);
        self.push(v, Op::Scale(a, factor), &[a])
    }

    pub fn concat(&mut self, parts: &[Var], axis: Axis) -> Result<Var, NnError> {
        if parts.is_empty() {
            return Err(shape_err("concat", "no inputs".into()));
        }
        let dims: Vec<_> = parts.iter().map(|&p| self.dims(p)).collect();
        let tensor = match axis {
            Axis::Rows => {
                let c = dims[0].1;
                if dims.iter().any(|d| d.1 != c) {
                    return Err(shape_err("concat", format!("column mismatch {dims:?}")));
                }
                let r = dims.iter().map(|d| d.0).sum();
                let data = parts.iter().flat_map(|&p| self.value(p).data().iter().copied()).collect();
                Tensor::matrix(r, c, data)?
            }
            Axis::Cols => {
                let r = dims[0].0;
                if dims.iter().any(|d| d.0 != r) {
                    return Err(shape_err("concat", format!("row mismatch {dims:?}")));
                }
                let c: usize = dims.iter().map(|d| d.1).sum();
                let mut data = Vec::with_capacity(r * c);
                for row in 0..r {
                    for &p in parts {
                        data.extend_from_slice(self.value(p).row(row));
                    }
                }
                Tensor::matrix(r, c, data)?
            }
        };
        self.push(tensor, Op::Concat(parts.to_vec(), axis), parts)
    }

    /// Rows or columns `start..end`.
    pub fn slice(&mut self, src: Var, axis: Axis, start: usize, end: usize) -> Result<Var, NnError> {
        let (r, c) = self.dims(src);
        let limit = if axis == Axis::Rows { r } else { c };
        if start >= end || end > limit {
            return Err(shape_err("slice", format!("{start}..{end} of {r}x{c} along {axis:?}")));
        }
        let v = self.value(src);
        let tensor = match axis {
            Axis::Rows => Tensor::matrix(end - start, c, v.data()[start * c..end * c].to_vec())?,
            Axis::Cols => {
                let data = (0..r).flat_map(|row| v.row(row)[start..end].iter().copied()).collect();
                Tensor::matrix(r, end - start, data)?
            }
        };
        self.push(tensor, Op::Slice { src, axis, start }, &[src])
    }

    /// Selects rows by index (embedding lookup). Repeats are allowed.
    pub fn gather_rows(&mut self, src: Var, ids: &[usize]) -> Result<Var, NnError> {
        let (r, c) = self.dims(src);
        if let Some(&bad) = ids.iter().find(|&&i| i >= r) {
            return Err(shape_err("gather_rows", format!("row {bad} of {r}")));
        }
        if ids.is_empty() {
            return Err(shape_err("gather_rows", "no ids".into()));
        }
        let v = self.value(src);
        let data = ids.iter().flat_map(|&i| v.row(i).iter().copied()).collect();
        let t = Tensor::matrix(ids.len(), c, data)?;
        self.push(t, Op::GatherRows { src, ids: ids.to_vec() }, &[src])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, NnError> {
        let (r, c) = self.dims(a);
        let v = self.value(a);
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = v.at(i, j);
            }
        }
        self.push(Tensor::matrix(c, r, data)?, Op::Transpose(a), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, NnError> {
        let v = self.value(a).map(f64::tanh);
        self.push(v, Op::Tanh(a), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, NnError> {
        let v = self.value(a).map(sigmoid);
        self.push(v, Op::Sigmoid(a), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, NnError> {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(v, Op::Relu(a), &[a])
    }

    /// Softmax along `axis`: `Cols` normalizes each row, `Rows` each column.
    pub fn softmax(&mut self, a: Var, axis: Axis) -> Result<Var, NnError> {
        let (r, c) = self.dims(a);
        let mut v = self.value(a).clone();
        softmax_in_place(v.data_mut(), r, c, axis);
        self.push(v, Op::Softmax(a, axis), &[a])
    }

    /// Mean over all elements of `(a - b)²`.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if dims_of(sa) != dims_of(sb) {
            return Err(shape_err("mse", format!("{sa:?} vs {sb:?}")));
        }
        let (va, vb) = (self.value(a).data(), self.value(b).data());
        let n = va.len().max(1) as f64;
        let total: f64 = va.iter().zip(vb).map(|(x, y)| (x - y) * (x - y)).sum();
        self.push(Tensor::scalar(total / n), Op::Mse(a, b), &[a, b])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, NnError> {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, NnError> {
        let v = self.value(a).data();
        let s = v.iter().sum::<f64>() / v.len().max(1) as f64;
        self.push(Tensor::scalar(s), Op::Mean(a), &[a])
    }

    /// Mean over rows of `-log softmax(logits_row)[target]`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var, NnError> {
        let (r, c) = self.dims(logits);
        if targets.len() != r || targets.iter().any(|&t| t >= c) {
            return Err(shape_err("cross_entropy", format!("{} targets for {r}x{c}", targets.len())));
        }
        let v = self.value(logits);
        let mut total = 0.0;
        for (row, &t) in targets.iter().enumerate() {
            let x = v.row(row);
            let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + x.iter().map(|&xi| (xi - max).exp()).sum::<f64>().ln();
            total += lse - x[t];
        }
        let op = Op::CrossEntropy { logits, targets: targets.to_vec() };
        self.push(Tensor::scalar(total / r as f64), op, &[logits])
    }

    /// Mean binary cross-entropy of sigmoid(logits) against 0/1 targets.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[f64]) -> Result<Var, NnError> {
        let v = self.value(logits).data();
        if v.len() != targets.len() {
            return Err(shape_err("bce_with_logits", format!("{} vs {}", v.len(), targets.len())));
        }
        let total: f64 = v
            .iter()
            .zip(targets)
            .map(|(&x, &t)| x.max(0.0) - x * t + (-x.abs()).exp().ln_1p())
            .sum();
        let op = Op::BceWithLogits { logits, targets: targets.to_vec() };
        self.push(Tensor::scalar(total / v.len() as f64), op, &[logits])
    }

    /// Backpropagates from a scalar node, accumulating into leaf gradients.
    pub fn backward(&mut self, loss: Var) -> Result<(), NnError> {
        if self.value(loss).len() != 1 {
            return Err(NnError::NonScalarLoss(self.value(loss).shape().to_vec()));
        }
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Leaf => {
                    match &mut self.leaf_grads[idx] {
                        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                        slot @ None => *slot = Some(g),
                    }
                    continue;
                }
                op => self.propagate(idx, op.clone(), &g, &mut grads),
            }
        }
        Ok(())
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], v: Var, delta: Vec<f64>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.iter_mut().zip(&delta).for_each(|(a, b)| *a += b),
            slot @ None => *slot = Some(delta),
        }
    }

    fn propagate(&self, idx: usize, op: Op, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let out = &self.nodes[idx].value;
        match op {
            Op::Leaf => unreachable!(),
            Op::MatMul(a, b) => {
                let (n, k) = self.dims(a);
                let m = self.dims(b).1;
                let (va, vb) = (self.value(a).data(), self.value(b).data());
                if self.requires_grad(a) {
                    // dA = G · Bᵀ
                    let mut da = vec![0.0; n * k];
                    for i in 0..n {
                        for p in 0..k {
                            let brow = &vb[p * m..(p + 1) * m];
                            da[i * k + p] = g[i * m..(i + 1) * m].iter().zip(brow).map(|(x, y)| x * y).sum();
                        }
                    }
                    self.accumulate(grads, a, da);
                }
                if self.requires_grad(b) {
                    // dB = Aᵀ · G
                    let mut db = vec![0.0; k * m];
                    for i in 0..n {
                        for p in 0..k {
                            let aip = va[i * k + p];
                            if aip == 0.0 {
                                continue;
                            }
                            let grow = &g[i * m..(i + 1) * m];
                            for (d, &gv) in db[p * m..(p + 1) * m].iter_mut().zip(grow) {
                                *d += aip * gv;
                            }
                        }
                    }
                    self.accumulate(grads, b, db);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, a, g.to_vec());
                self.accumulate(grads, b, g.to_vec());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, a, g.to_vec());
                self.accumulate(grads, b, g.iter().map(|x| -x).collect());
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(a).data(), self.value(b).data());
                self.accumulate(grads, a, g.iter().zip(vb).map(|(x, y)| x * y).collect());
                self.accumulate(grads, b, g.iter().zip(va).map(|(x, y)| x * y).collect());
            }
            Op::AddRow(m, row) => {
                self.accumulate(grads, m, g.to_vec());
                let c = self.dims(row).1;
                let mut dr = vec![0.0; c];
                for chunk in g.chunks(c.max(1)) {
                    dr.iter_mut().zip(chunk).for_each(|(d, x)| *d += x);
                }
                self.accumulate(grads, row, dr);
            }
            Op::Scale(a, f) => self.accumulate(grads, a, g.iter().map(|x| x * f).collect()),
            Op::Concat(parts, axis) => match axis {
                Axis::Rows => {
                    let mut offset = 0;
                    for p in parts {
                        let n = self.value(p).len();
                        self.accumulate(grads, p, g[offset..offset + n].to_vec());
                        offset += n;
                    }
                }
                Axis::Cols => {
                    let (r, c) = out.dims();
                    let mut col = 0;
                    for p in parts {
                        let pc = self.dims(p).1;
                        let d = (0..r).flat_map(|row| g[row * c + col..row * c + col + pc].iter().copied()).collect();
                        self.accumulate(grads, p, d);
                        col += pc;
                    }
                }
            },
            Op::Slice { src, axis, start } => {
                let (r, c) = self.dims(src);
                let mut d = vec![0.0; r * c];
                let (or, oc) = out.dims();
                match axis {
                    Axis::Rows => d[start * c..(start + or) * c].copy_from_slice(g),
                    Axis::Cols => {
                        for row in 0..r {
                            d[row * c + start..row * c + start + oc].copy_from_slice(&g[row * oc..(row + 1) * oc]);
                        }
                    }
                }
                self.accumulate(grads, src, d);
            }
            Op::GatherRows { src, ids } => {
                let (r, c) = self.dims(src);
                let mut d = vec![0.0; r * c];
                for (k, &i) in ids.iter().enumerate() {
                    d[i * c..(i + 1) * c].iter_mut().zip(&g[k * c..(k + 1) * c]).for_each(|(a, b)| *a += b);
                }
                self.accumulate(grads, src, d);
            }
            Op::Transpose(a) => {
                let (r, c) = self.dims(a);
                // g is c × r
                let mut d = vec![0.0; r * c];
                for i in 0..r {
                    for j in 0..c {
                        d[i * c + j] = g[j * r + i];
                    }
                }
                self.accumulate(grads, a, d);
            }
            Op::Tanh(a) => {
                let d = g.iter().zip(out.data()).map(|(x, y)| x * (1.0 - y * y)).collect();
                self.accumulate(grads, a, d);
            }
            Op::Sigmoid(a) => {
                let d = g.iter().zip(out.data()).map(|(x, y)| x * y * (1.0 - y)).collect();
                self.accumulate(grads, a, d);
            }
            Op::Relu(a) => {
                let d = g.iter().zip(self.value(a).data()).map(|(x, &v)| if v > 0.0 { *x } else { 0.0 }).collect();
                self.accumulate(grads, a, d);
            }
            Op::Softmax(a, axis) => {
                let (r, c) = out.dims();
                let y = out.data();
                let mut d = vec![0.0; r * c];
                let (outer, inner, so, si) = match axis {
                    Axis::Cols => (r, c, c, 1),
                    Axis::Rows => (c, r, 1, c),
                };
                for o in 0..outer {
                    let dot: f64 = (0..inner).map(|i| g[o * so + i * si] * y[o * so + i * si]).sum();
                    for i in 0..inner {
                        let j = o * so + i * si;
                        d[j] = y[j] * (g[j] - dot);
                    }
                }
                self.accumulate(grads, a, d);
            }
            Op::Mse(a, b) => {
                let (va, vb) = (self.value(a).data(), self.value(b).data());
                let scale = 2.0 * g[0] / va.len().max(1) as f64;
                let da: Vec<f64> = va.iter().zip(vb).map(|(x, y)| scale * (x - y)).collect();
                if self.requires_grad(b) {
                    self.accumulate(grads, b, da.iter().map(|x| -x).collect());
                }
                self.accumulate(grads, a, da);
            }
            Op::Sum(a) => {
                let n = self.value(a).len();
                self.accumulate(grads, a, vec![g[0]; n]);
            }
            Op::Mean(a) => {
                let n = self.value(a).len();
                self.accumulate(grads, a, vec![g[0] / n as f64; n]);
            }
            Op::CrossEntropy { logits, targets } => {
                let (r, c) = self.dims(logits);
                let mut probs = self.value(logits).clone();
                softmax_in_place(probs.data_mut(), r, c, Axis::Cols);
                let mut d = probs.into_data();
                for (row, &t) in targets.iter().enumerate() {
                    d[row * c + t] -= 1.0;
                }
                let s = g[0] / r as f64;
                d.iter_mut().for_each(|x| *x *= s);
                self.accumulate(grads, logits, d);
            }
            Op::BceWithLogits { logits, targets } => {
                let v = self.value(logits).data();
                let s = g[0] / v.len() as f64;
                let d = v.iter().zip(&targets).map(|(&x, &t)| s * (sigmoid(x) - t)).collect();
                self.accumulate(grads, logits, d);
            }
        }
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::MatMul(..) => "matmul",
        Op::Add(..) => "add",
        Op::AddRow(..) => "add_row",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::Scale(..) => "scale",
        Op::Concat(..) => "concat",
        Op::Slice { .. } => "slice",
        Op::GatherRows { .. } => "gather_rows",
        Op::Transpose(_) => "transpose",
        Op::Tanh(_) => "tanh",
        Op::Sigmoid(_) => "sigmoid",
        Op::Relu(_) => "relu",
        Op::Softmax(..) => "softmax",
        Op::Mse(..) => "mse",
        Op::Sum(_) => "sum",
        Op::Mean(_) => "mean",
        Op::CrossEntropy { .. } => "cross_entropy",
        Op::BceWithLogits { .. } => "bce_with_logits",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::vector(vec![0.0, 0.0, 0.0]));
        let s = g.softmax(x, Axis::Cols).unwrap();
        for &p in g.value(s).data() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_matches_direct_exponentials() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let s = g.softmax(x, Axis::Cols).unwrap();
        let e = std::f64::consts::E;
        let denom = e + e * e + e * e * e;
        let expected = [e / denom, e * e / denom, e * e * e / denom];
        for (p, q) in g.value(s).data().iter().zip(expected) {
            assert!(close(*p, q, 1e-14), "{p} vs {q}");
        }
        // e³/(e¹+e²+e³)
        assert!((g.value(s).data()[2] - 0.665_240_955_774_821_6).abs() < 1e-12);
    }

    #[test]
    fn softmax_along_rows_normalizes_columns() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::matrix(2, 3, vec![1.0, 5.0, -2.0, 0.5, 0.0, 3.0]).unwrap());
        let s = g.softmax(x, Axis::Rows).unwrap();
        let v = g.value(s);
        for c in 0..3 {
            assert!((v.at(0, c) + v.at(1, c) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn matmul_with_identity_is_identity() {
        let a = Tensor::matrix(4, 4, (0..16).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let mut g = Graph::new();
        let va = g.constant(a.clone());
        let vi = g.constant(Tensor::identity(4));
        let p = g.matmul(va, vi).unwrap();
        assert_eq!(g.value(p), &a);
    }

    #[test]
    fn shape_mismatch_names_op() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2, 3]));
        let err = g.matmul(a, b).unwrap_err();
        assert!(err.to_string().contains("matmul"), "{err}");
        let col = g_zero_col(&mut g);
        let err = g.add(a, col).unwrap_err();
        assert!(err.to_string().contains("add"), "{err}");
    }

    fn g_zero_col(g: &mut Graph) -> Var {
        g.constant(Tensor::zeros(&[3, 1]))
    }

    #[test]
    fn sum_gradient_is_all_ones() {
        let mut g = Graph::new();
        let w = g.param(Tensor::matrix(2, 3, vec![0.1, -4.0, 2.0, 7.0, 0.0, 1.5]).unwrap());
        let l = g.sum(w).unwrap();
        g.backward(l).unwrap();
        assert_eq!(g.grad(w).unwrap().data(), &[1.0; 6]);
    }

    #[test]
    fn mse_gradient_against_zero() {
        let mut g = Graph::new();
        let w = g.param(Tensor::vector(vec![3.0]));
        let z = g.constant(Tensor::vector(vec![0.0]));
        let l = g.mse(w, z).unwrap();
        assert_eq!(g.value(l).item(), 9.0);
        g.backward(l).unwrap();
        assert_eq!(g.grad(w).unwrap().data(), &[6.0]);
    }

    #[test]
    fn repeated_backward_accumulates() {
        let mut g = Graph::new();
        let w = g.param(Tensor::vector(vec![1.0, 2.0]));
        let l = g.sum(w).unwrap();
        g.backward(l).unwrap();
        g.backward(l).unwrap();
        assert_eq!(g.grad(w).unwrap().data(), &[2.0, 2.0]);
        g.zero_grad();
        assert!(g.grad(w).is_none());
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut g = Graph::new();
        let w = g.param(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(g.backward(w), Err(NnError::NonScalarLoss(_))));
    }

    #[test]
    fn constants_do_not_record_ops() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::vector(vec![1.0]));
        let b = g.tanh(a).unwrap();
        assert!(!g.requires_grad(b));
    }

    #[test]
    fn cross_entropy_of_uniform_logits_is_log_classes() {
        let mut g = Graph::new();
        let x = g.param(Tensor::zeros(&[2, 4]));
        let l = g.cross_entropy(x, &[0, 3]).unwrap();
        assert!((g.value(l).item() - 4f64.ln()).abs() < 1e-12);
        g.backward(l).unwrap();
        let d = g.grad(x).unwrap();
        assert!((d.at(0, 0) - (0.25 - 1.0) / 2.0).abs() < 1e-12);
        assert!((d.at(0, 1) - 0.25 / 2.0).abs() < 1e-12);
    }
}
