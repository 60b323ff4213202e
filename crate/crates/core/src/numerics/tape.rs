//! Reverse-mode differentiation over a fixed set of matrix operations.
//!
//! A [`Tape`] records one forward pass. Every recorded node keeps its value;
//! [`Tape::backward`] walks the nodes in reverse and applies one hand-written
//! adjoint rule per operation. Parameters enter the tape through
//! [`Tape::param`] and their adjoints are returned as [`Gradients`] laid out
//! like the [`ModelParams`] they came from.
//!
//! Supported operations: affine map (matrix product plus optional bias row),
//! elementwise add/sub/mul with row broadcasting, constant scaling, GELU,
//! sum/mean reductions (global and over rows), column and row concatenation,
//! row gather/scatter/repeat, transpose, row L2-normalization, and row-wise
//! softmax cross-entropy.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::numerics::params::{Gradients, ModelParams, ParamKey};
use crate::numerics::tensor::{matmul_into, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

const NORM_EPS: f64 = 1e-12;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamKey),
    Affine {
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
    },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Gelu(NodeId),
    Sum(NodeId),
    Mean(NodeId),
    MeanRows(NodeId),
    ConcatCols(NodeId, NodeId),
    ConcatRows(Vec<NodeId>),
    GatherRows(NodeId, Vec<usize>),
    ScatterRows(Vec<(NodeId, Vec<usize>)>),
    RepeatRows(NodeId),
    Transpose(NodeId),
    L2NormalizeRows(NodeId),
    SoftmaxXent(NodeId, Vec<usize>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamKey, NodeId>,
    consumed: bool,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Tensor, name: &str) -> Result<NodeId> {
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        if !value.is_finite() {
            return Err(Error::NonFinite(name.to_string()));
        }
        self.nodes.push(Node { value, op });
        Ok(NodeId(self.nodes.len() - 1))
    }

    fn shape(&self, id: NodeId) -> [usize; 2] {
        self.nodes[id.0].value.shape()
    }

    /// Input or fixed data; receives no exported gradient.
    pub fn constant(&mut self, value: Tensor) -> Result<NodeId> {
        self.push(Op::Constant, value, "constant")
    }

    /// Registers a parameter tensor. Repeated calls with the same key return
    /// the same node.
    pub fn param(&mut self, params: &ModelParams, key: ParamKey) -> Result<NodeId> {
        if let Some(&id) = self.params.get(&key) {
            return Ok(id);
        }
        let id = self.push(Op::Param(key), params.tensor(key), "param")?;
        self.params.insert(key, id);
        Ok(id)
    }

    /// `x · w (+ b)`, with `b` a `1 x out` row added to every output row.
    pub fn affine(&mut self, x: NodeId, w: NodeId, b: Option<NodeId>) -> Result<NodeId> {
        let [m, k] = self.shape(x);
        let [k2, n] = self.shape(w);
        if k != k2 {
            return Err(Error::shape("affine", format!("x {m}x{k} · w {k2}x{n}")));
        }
        let mut out = vec![0.0; m * n];
        matmul_into(self.value(x).data(), self.value(w).data(), &mut out, m, k, n);
        if let Some(b) = b {
            let bs = self.shape(b);
            if bs != [1, n] {
                return Err(Error::shape(
                    "affine",
                    format!("bias {}x{} for output width {n}", bs[0], bs[1]),
                ));
            }
            let bias = self.value(b).data();
            for row in out.chunks_mut(n) {
                for (o, &bv) in row.iter_mut().zip(bias) {
                    *o += bv;
                }
            }
        }
        let value = Tensor::new(m, n, out)?;
        self.push(Op::Affine { x, w, b }, value, "affine")
    }

    fn broadcast_check(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<()> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sa == sb || (sb[0] == 1 && sb[1] == sa[1]) {
            Ok(())
        } else {
            Err(Error::shape(
                op,
                format!("{}x{} with {}x{}", sa[0], sa[1], sb[0], sb[1]),
            ))
        }
    }

    fn zip_broadcast(&self, a: NodeId, b: NodeId, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let av = self.value(a);
        let bv = self.value(b);
        let cols = av.cols();
        let data = if av.shape() == bv.shape() {
            av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect()
        } else {
            av.data()
                .iter()
                .enumerate()
                .map(|(i, &x)| f(x, bv.data()[i % cols]))
                .collect()
        };
        Tensor::new(av.rows(), cols, data).expect("shape preserved")
    }

    /// Elementwise `a + b`; `b` may be a single row broadcast over `a`.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.broadcast_check("add", a, b)?;
        let v = self.zip_broadcast(a, b, |x, y| x + y);
        self.push(Op::Add(a, b), v, "add")
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.broadcast_check("sub", a, b)?;
        let v = self.zip_broadcast(a, b, |x, y| x - y);
        self.push(Op::Sub(a, b), v, "sub")
    }

    /// Elementwise product of equal shapes.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::shape(
                "mul",
                format!("{}x{} with {}x{}", sa[0], sa[1], sb[0], sb[1]),
            ));
        }
        let v = self.zip_broadcast(a, b, |x, y| x * y);
        self.push(Op::Mul(a, b), v, "mul")
    }

    pub fn scale(&mut self, a: NodeId, k: f64) -> Result<NodeId> {
        let v = self.value(a).scale(k);
        self.push(Op::Scale(a, k), v, "scale")
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).map(gelu);
        self.push(Op::Gelu(a), v, "gelu")
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        let v = Tensor::scalar(self.value(a).sum());
        self.push(Op::Sum(a), v, "sum")
    }

    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        if self.value(a).is_empty() {
            return Err(Error::shape("mean", "empty tensor"));
        }
        let v = Tensor::scalar(self.value(a).mean());
        self.push(Op::Mean(a), v, "mean")
    }

    /// Column-wise mean over rows: `r x c -> 1 x c`.
    pub fn mean_rows(&mut self, a: NodeId) -> Result<NodeId> {
        let [r, c] = self.shape(a);
        if r == 0 {
            return Err(Error::shape("mean_rows", "no rows"));
        }
        let src = self.value(a).data();
        let mut out = vec![0.0; c];
        for row in src.chunks(c) {
            for (o, &v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        let inv = 1.0 / r as f64;
        out.iter_mut().for_each(|o| *o *= inv);
        self.push(Op::MeanRows(a), Tensor::row(out), "mean_rows")
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let ([ra, ca], [rb, cb]) = (self.shape(a), self.shape(b));
        if ra != rb {
            return Err(Error::shape(
                "concat_cols",
                format!("{ra}x{ca} beside {rb}x{cb}"),
            ));
        }
        let (av, bv) = (self.value(a), self.value(b));
        let mut data = Vec::with_capacity(ra * (ca + cb));
        for r in 0..ra {
            data.extend_from_slice(av.row_slice(r));
            data.extend_from_slice(bv.row_slice(r));
        }
        let v = Tensor::new(ra, ca + cb, data)?;
        self.push(Op::ConcatCols(a, b), v, "concat_cols")
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let Some(&first) = parts.first() else {
            return Err(Error::shape("concat_rows", "no inputs"));
        };
        let c = self.shape(first)[1];
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let [r, pc] = self.shape(p);
            if pc != c {
                return Err(Error::shape(
                    "concat_rows",
                    format!("width {pc} stacked on width {c}"),
                ));
            }
            data.extend_from_slice(self.value(p).data());
            rows += r;
        }
        let v = Tensor::new(rows, c, data)?;
        self.push(Op::ConcatRows(parts.to_vec()), v, "concat_rows")
    }

    pub fn gather_rows(&mut self, a: NodeId, idx: &[usize]) -> Result<NodeId> {
        let v = self.value(a).gather_rows(idx)?;
        self.push(Op::GatherRows(a, idx.to_vec()), v, "gather_rows")
    }

    /// Assembles an `rows x c` tensor whose row `idx[j]` of each part is that
    /// part's row `j`. Index sets must be disjoint and jointly cover every
    /// output row.
    pub fn scatter_rows(&mut self, rows: usize, parts: &[(NodeId, Vec<usize>)]) -> Result<NodeId> {
        let Some((first, _)) = parts.first() else {
            return Err(Error::shape("scatter_rows", "no inputs"));
        };
        let c = self.shape(*first)[1];
        let mut owner = vec![false; rows];
        let mut data = vec![0.0; rows * c];
        for (node, idx) in parts {
            let [r, pc] = self.shape(*node);
            if pc != c || r != idx.len() {
                return Err(Error::shape(
                    "scatter_rows",
                    format!("part {r}x{pc} for {} indices of width {c}", idx.len()),
                ));
            }
            let v = self.value(*node);
            for (j, &i) in idx.iter().enumerate() {
                if i >= rows {
                    return Err(Error::shape(
                        "scatter_rows",
                        format!("row {i} out of range for {rows} rows"),
                    ));
                }
                if owner[i] {
                    return Err(Error::shape(
                        "scatter_rows",
                        format!("row {i} assigned by more than one part"),
                    ));
                }
                owner[i] = true;
                data[i * c..(i + 1) * c].copy_from_slice(v.row_slice(j));
            }
        }
        if let Some(missing) = owner.iter().position(|o| !o) {
            return Err(Error::shape(
                "scatter_rows",
                format!("row {missing} not assigned by any part"),
            ));
        }
        let v = Tensor::new(rows, c, data)?;
        self.push(Op::ScatterRows(parts.to_vec()), v, "scatter_rows")
    }

    /// Repeats a single row `n` times.
    pub fn repeat_rows(&mut self, a: NodeId, n: usize) -> Result<NodeId> {
        let [r, c] = self.shape(a);
        if r != 1 {
            return Err(Error::shape("repeat_rows", format!("expected 1 row, got {r}")));
        }
        let row = self.value(a).data().to_vec();
        let data: Vec<f64> = std::iter::repeat(row).take(n).flatten().collect();
        let v = Tensor::new(n, c, data)?;
        self.push(Op::RepeatRows(a), v, "repeat_rows")
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).transpose();
        self.push(Op::Transpose(a), v, "transpose")
    }

    /// Scales every row to unit Euclidean norm (norm floored at 1e-12).
    pub fn l2_normalize_rows(&mut self, a: NodeId) -> Result<NodeId> {
        let src = self.value(a);
        let c = src.cols();
        let mut data = src.data().to_vec();
        for row in data.chunks_mut(c.max(1)) {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(NORM_EPS);
            row.iter_mut().for_each(|v| *v /= norm);
        }
        let v = Tensor::new(src.rows(), c, data)?;
        self.push(Op::L2NormalizeRows(a), v, "l2_normalize_rows")
    }

    /// Mean over rows of `-log softmax(row)[target]`.
    pub fn softmax_xent(&mut self, logits: NodeId, targets: &[usize]) -> Result<NodeId> {
        let [r, c] = self.shape(logits);
        if r == 0 || targets.len() != r {
            return Err(Error::shape(
                "softmax_xent",
                format!("{r} rows with {} targets", targets.len()),
            ));
        }
        if let Some(&t) = targets.iter().find(|&&t| t >= c) {
            return Err(Error::shape(
                "softmax_xent",
                format!("target {t} out of range for {c} classes"),
            ));
        }
        let lv = self.value(logits);
        let mut total = 0.0;
        for (i, &t) in targets.iter().enumerate() {
            let row = lv.row_slice(i);
            total += log_sum_exp(row) - row[t];
        }
        let v = Tensor::scalar(total / r as f64);
        self.push(Op::SoftmaxXent(logits, targets.to_vec()), v, "softmax_xent")
    }

    /// Propagates the adjoint of a scalar `loss` to every node and returns the
    /// parameter gradients. Parameters that do not influence `loss` get zero.
    /// A tape supports a single backward pass.
    pub fn backward(&mut self, loss: NodeId, params: &ModelParams) -> Result<Gradients> {
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        let ls = self.shape(loss);
        if ls != [1, 1] {
            return Err(Error::shape(
                "backward",
                format!("loss must be 1x1, got {}x{}", ls[0], ls[1]),
            ));
        }
        self.consumed = true;

        let mut adj: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[loss.0] = Some(Tensor::scalar(1.0));
        let mut grads = Gradients::zeros_like(params);

        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Constant => {}
                Op::Param(key) => {
                    let t = &params.sections()[key.section].tensors[key.tensor];
                    let dst = &mut grads.sections[key.section][t.offset..t.offset + t.len()];
                    for (d, v) in dst.iter_mut().zip(g.data()) {
                        *d += v;
                    }
                }
                Op::Affine { x, w, b } => {
                    let xv = self.value(*x);
                    let wv = self.value(*w);
                    let [m, k] = xv.shape();
                    let n = wv.cols();
                    // dx = g · wᵀ, skipped for fixed inputs.
                    let x_fixed = matches!(self.nodes[x.0].op, Op::Constant);
                    let dx = if x_fixed {
                        None
                    } else {
                        let mut dx = vec![0.0; m * k];
                        matmul_into(g.data(), wv.transpose().data(), &mut dx, m, n, k);
                        Some(dx)
                    };
                    // dw = xᵀ · g
                    let mut dw = vec![0.0; k * n];
                    for r in 0..m {
                        let grow = &g.data()[r * n..(r + 1) * n];
                        for p in 0..k {
                            let xv_rp = xv.data()[r * k + p];
                            if xv_rp == 0.0 {
                                continue;
                            }
                            for (d, &gv) in dw[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                *d += xv_rp * gv;
                            }
                        }
                    }
                    let (x, w, b) = (*x, *w, *b);
                    if let Some(b) = b {
                        let db = column_sums(&g);
                        accumulate(&mut adj, b, db);
                    }
                    if let Some(dx) = dx {
                        accumulate(&mut adj, x, Tensor::new(m, k, dx)?);
                    }
                    accumulate(&mut adj, w, Tensor::new(k, n, dw)?);
                }
                Op::Add(a, b) | Op::Sub(a, b) => {
                    let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                    let (a, b) = (*a, *b);
                    let db = if self.shape(b) == g.shape() {
                        g.scale(sign)
                    } else {
                        column_sums(&g).scale(sign)
                    };
                    accumulate(&mut adj, b, db);
                    accumulate(&mut adj, a, g);
                }
                Op::Mul(a, b) => {
                    let (a, b) = (*a, *b);
                    let da = hadamard(&g, self.value(b));
                    let db = hadamard(&g, self.value(a));
                    accumulate(&mut adj, a, da);
                    accumulate(&mut adj, b, db);
                }
                Op::Scale(a, k) => {
                    let (a, k) = (*a, *k);
                    accumulate(&mut adj, a, g.scale(k));
                }
                Op::Gelu(a) => {
                    let a = *a;
                    let xv = self.value(a);
                    let data = g
                        .data()
                        .iter()
                        .zip(xv.data())
                        .map(|(&gv, &x)| gv * gelu_grad(x))
                        .collect();
                    accumulate(&mut adj, a, Tensor::new(xv.rows(), xv.cols(), data)?);
                }
                Op::Sum(a) => {
                    let a = *a;
                    let [r, c] = self.shape(a);
                    accumulate(&mut adj, a, Tensor::filled(r, c, g.data()[0]));
                }
                Op::Mean(a) => {
                    let a = *a;
                    let [r, c] = self.shape(a);
                    accumulate(&mut adj, a, Tensor::filled(r, c, g.data()[0] / (r * c) as f64));
                }
                Op::MeanRows(a) => {
                    let a = *a;
                    let [r, c] = self.shape(a);
                    let inv = 1.0 / r as f64;
                    let row: Vec<f64> = g.data().iter().map(|v| v * inv).collect();
                    let data: Vec<f64> = std::iter::repeat(row).take(r).flatten().collect();
                    accumulate(&mut adj, a, Tensor::new(r, c, data)?);
                }
                Op::ConcatCols(a, b) => {
                    let (a, b) = (*a, *b);
                    let ([r, ca], [_, cb]) = (self.shape(a), self.shape(b));
                    let mut da = Vec::with_capacity(r * ca);
                    let mut db = Vec::with_capacity(r * cb);
                    for row in g.data().chunks(ca + cb) {
                        da.extend_from_slice(&row[..ca]);
                        db.extend_from_slice(&row[ca..]);
                    }
                    accumulate(&mut adj, a, Tensor::new(r, ca, da)?);
                    accumulate(&mut adj, b, Tensor::new(r, cb, db)?);
                }
                Op::ConcatRows(parts) => {
                    let parts = parts.clone();
                    let c = g.cols();
                    let mut start = 0;
                    for p in parts {
                        let r = self.shape(p)[0];
                        let d = g.data()[start * c..(start + r) * c].to_vec();
                        accumulate(&mut adj, p, Tensor::new(r, c, d)?);
                        start += r;
                    }
                }
                Op::GatherRows(a, idx) => {
                    let a = *a;
                    let [r, c] = self.shape(a);
                    let mut d = vec![0.0; r * c];
                    for (j, &i) in idx.iter().enumerate() {
                        for (x, &v) in d[i * c..(i + 1) * c].iter_mut().zip(g.row_slice(j)) {
                            *x += v;
                        }
                    }
                    accumulate(&mut adj, a, Tensor::new(r, c, d)?);
                }
                Op::ScatterRows(parts) => {
                    let parts = parts.clone();
                    for (p, idx) in parts {
                        let d = g.gather_rows(&idx)?;
                        accumulate(&mut adj, p, d);
                    }
                }
                Op::RepeatRows(a) => {
                    let a = *a;
                    accumulate(&mut adj, a, column_sums(&g));
                }
                Op::Transpose(a) => {
                    let a = *a;
                    accumulate(&mut adj, a, g.transpose());
                }
                Op::L2NormalizeRows(a) => {
                    let a = *a;
                    let xv = self.value(a);
                    let yv = &node.value;
                    let c = xv.cols();
                    let mut d = vec![0.0; xv.len()];
                    for r in 0..xv.rows() {
                        let x = xv.row_slice(r);
                        let y = yv.row_slice(r);
                        let gr = g.row_slice(r);
                        let raw = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                        let out = &mut d[r * c..(r + 1) * c];
                        if raw < NORM_EPS {
                            for (o, &gv) in out.iter_mut().zip(gr) {
                                *o = gv / NORM_EPS;
                            }
                        } else {
                            let yg = dot(y, gr);
                            for j in 0..c {
                                out[j] = (gr[j] - y[j] * yg) / raw;
                            }
                        }
                    }
                    accumulate(&mut adj, a, Tensor::new(xv.rows(), c, d)?);
                }
                Op::SoftmaxXent(logits, targets) => {
                    let logits = *logits;
                    let lv = self.value(logits);
                    let [r, c] = lv.shape();
                    let scale = g.data()[0] / r as f64;
                    let mut d = vec![0.0; r * c];
                    for (i, &t) in targets.iter().enumerate() {
                        let row = lv.row_slice(i);
                        let lse = log_sum_exp(row);
                        for j in 0..c {
                            let p = (row[j] - lse).exp();
                            d[i * c + j] = scale * (p - if j == t { 1.0 } else { 0.0 });
                        }
                    }
                    accumulate(&mut adj, logits, Tensor::new(r, c, d)?);
                }
            }
        }
        Ok(grads)
    }
}

fn accumulate(adj: &mut [Option<Tensor>], id: NodeId, g: Tensor) {
    match &mut adj[id.0] {
        Some(existing) => {
            for (e, v) in existing.data_mut().iter_mut().zip(g.data()) {
                *e += v;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

fn column_sums(g: &Tensor) -> Tensor {
    let c = g.cols();
    let mut out = vec![0.0; c];
    for row in g.data().chunks(c.max(1)) {
        for (o, &v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    Tensor::row(out)
}

fn hadamard(a: &Tensor, b: &Tensor) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
    Tensor::new(a.rows(), a.cols(), data).expect("equal shapes")
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn log_sum_exp(row: &[f64]) -> f64 {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::params::Section;

    fn one_section(rows: usize, cols: usize, values: Vec<f64>) -> ModelParams {
        let mut s = Section::with_layout("s", &[("w", rows, cols)]);
        s.values = values;
        let mut p = ModelParams::new();
        p.push(s).unwrap();
        p
    }

    #[test]
    fn affine_identity() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::row(vec![1.0, 2.0])).unwrap();
        let w = t.constant(Tensor::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap()).unwrap();
        let b = t.constant(Tensor::row(vec![0.0, 0.0])).unwrap();
        let y = t.affine(x, w, Some(b)).unwrap();
        assert_eq!(t.value(y).data(), &[1.0, 2.0]);
    }

    #[test]
    fn mean_of_ones() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::filled(2, 2, 1.0)).unwrap();
        let m = t.mean(x).unwrap();
        assert_eq!(t.value(m).item().unwrap(), 1.0);
    }

    #[test]
    fn sum_gives_all_ones_gradient() {
        let p = one_section(2, 3, vec![0.5, -1.0, 2.0, 3.0, 0.0, 1.0]);
        let mut t = Tape::new();
        let w = t.param(&p, ParamKey { section: 0, tensor: 0 }).unwrap();
        let s = t.sum(w).unwrap();
        let g = t.backward(s, &p).unwrap();
        assert_eq!(g.sections[0], vec![1.0; 6]);
    }

    #[test]
    fn squared_norm_gradient_is_analytic() {
        // loss = ||W x||² at x = e1  =>  dW = 2 W e1 e1ᵀ (only first column nonzero),
        // written here with x as a row vector: y = x · W, dW = 2 xᵀ y.
        let wv = vec![1.0, 2.0, -1.0, 0.5, 3.0, 4.0];
        let p = one_section(2, 3, wv.clone());
        let mut t = Tape::new();
        let x = t.constant(Tensor::row(vec![1.0, 0.0])).unwrap();
        let w = t.param(&p, ParamKey { section: 0, tensor: 0 }).unwrap();
        let y = t.affine(x, w, None).unwrap();
        let sq = t.mul(y, y).unwrap();
        let l = t.sum(sq).unwrap();
        let g = t.backward(l, &p).unwrap();
        let expected = vec![2.0 * wv[0], 2.0 * wv[1], 2.0 * wv[2], 0.0, 0.0, 0.0];
        assert_eq!(g.sections[0], expected);
    }

    #[test]
    fn second_backward_errors() {
        let p = one_section(1, 1, vec![2.0]);
        let mut t = Tape::new();
        let w = t.param(&p, ParamKey { section: 0, tensor: 0 }).unwrap();
        let s = t.sum(w).unwrap();
        t.backward(s, &p).unwrap();
        assert!(matches!(t.backward(s, &p), Err(Error::TapeConsumed)));
        assert!(matches!(t.sum(w), Err(Error::TapeConsumed)));
    }

    #[test]
    fn unreachable_params_get_zero() {
        let mut a = Section::with_layout("a", &[("w", 1, 2)]);
        a.values = vec![1.0, 2.0];
        let mut b = Section::with_layout("b", &[("w", 1, 2)]);
        b.values = vec![3.0, 4.0];
        let mut p = ModelParams::new();
        p.push(a).unwrap();
        p.push(b).unwrap();
        let mut t = Tape::new();
        let wa = t.param(&p, ParamKey { section: 0, tensor: 0 }).unwrap();
        let _wb = t.param(&p, ParamKey { section: 1, tensor: 0 }).unwrap();
        let s = t.sum(wa).unwrap();
        let g = t.backward(s, &p).unwrap();
        assert_eq!(g.sections[1], vec![0.0, 0.0]);
    }

    #[test]
    fn shape_errors_name_the_op() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::zeros(2, 3)).unwrap();
        let b = t.constant(Tensor::zeros(2, 2)).unwrap();
        let err = t.affine(a, b, None).unwrap_err().to_string();
        assert!(err.contains("affine") && err.contains("2x3"), "{err}");
        let err = t.mul(a, b).unwrap_err().to_string();
        assert!(err.contains("mul"), "{err}");
    }

    #[test]
    fn scatter_rejects_overlap_and_gaps() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::zeros(2, 1)).unwrap();
        let b = t.constant(Tensor::zeros(1, 1)).unwrap();
        assert!(t.scatter_rows(3, &[(a, vec![0, 1]), (b, vec![1])]).is_err());
        assert!(t.scatter_rows(4, &[(a, vec![0, 1]), (b, vec![2])]).is_err());
        assert!(t.scatter_rows(3, &[(a, vec![0, 2]), (b, vec![1])]).is_ok());
    }

    #[test]
    fn non_finite_values_are_rejected() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::row(vec![1e300])).unwrap();
        let err = t.mul(a, a).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }
}
