//! Tape-based reverse-mode differentiation over 2-D tensors.
//!
//! Every value on the tape is a matrix; row vectors are `1 × n` and scalars
//! `1 × 1`. Ops are recorded in evaluation order, so the tape is acyclic by
//! construction and backward is a single reverse sweep.

use std::collections::BTreeMap;

use ndarray::ArrayView2;
use rand::Rng;

use crate::error::{ComputeError, Result};
use crate::params::ParameterStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Lower clamp for `log` and `sqrt` arguments.
pub const LOG_CLAMP: f64 = 1e-12;

/// Handle to a value on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Unary {
    Relu,
    Sigmoid,
    Tanh,
    Exp,
    Log,
    Sqrt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Binary {
    Add,
    Sub,
    Mul,
}

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Binary(Binary, Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    Unary(Unary, Var),
    Clamp(Var, T, T),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    GatherRows(Var, Vec<usize>),
    ScatterAddRows(Var, Vec<usize>),
    SegmentMean(Var, Vec<usize>, Vec<usize>),
    SegmentSoftmax(Var, Vec<usize>),
    SumAll(Var),
    SumRows(Var),
    SumCols(Var),
    SoftmaxRows(Var),
    Dropout(Var, Vec<T>),
    CosineMap(Var, Var),
    BceWithLogits(Var, Vec<T>),
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Recording of one forward evaluation.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    params: BTreeMap<String, Var>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn dims<T: Scalar>(t: &Tensor<T>) -> (usize, usize) {
    (t.rows(), t.cols())
}

fn mismatch(op: &'static str, detail: String) -> ComputeError {
    ComputeError::ShapeMismatch { op, detail }
}

fn matmul_raw<T: Scalar>(
    a: &[T],
    (m, k): (usize, usize),
    ta: bool,
    b: &[T],
    (k2, n): (usize, usize),
    tb: bool,
) -> Vec<T> {
    let av = ArrayView2::from_shape((m, k), a).expect("lhs dims");
    let bv = ArrayView2::from_shape((k2, n), b).expect("rhs dims");
    let av = if ta { av.t() } else { av };
    let bv = if tb { bv.t() } else { bv };
    av.dot(&bv).into_iter().collect()
}

/// Index into an operand that may be broadcast along either axis.
#[inline]
fn bidx(i: usize, j: usize, (r, c): (usize, usize)) -> usize {
    let i = if r == 1 { 0 } else { i };
    let j = if c == 1 { 0 } else { j };
    i * c + j
}

/// Sums a full-size gradient down to a (possibly broadcast) operand shape.
fn reduce_to<T: Scalar>(g: &[T], (r, c): (usize, usize), target: (usize, usize)) -> Vec<T> {
    if target == (r, c) {
        return g.to_vec();
    }
    let mut out = vec![T::zero(); target.0 * target.1];
    for i in 0..r {
        for j in 0..c {
            let k = bidx(i, j, target);
            out[k] = out[k] + g[i * c + j];
        }
    }
    out
}

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new(), params: BTreeMap::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        dims(&self.nodes[v.0].value)
    }

    /// First element of a value, typically a `1 × 1` loss.
    pub fn scalar(&self, v: Var) -> T {
        self.nodes[v.0].value.item()
    }

    fn push(&mut self, op_name: &'static str, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Result<Var> {
        if !value.is_finite() {
            return Err(ComputeError::NonFinite { op: op_name });
        }
        self.nodes.push(Node { value, op, requires_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn as_matrix(t: Tensor<T>) -> Tensor<T> {
        let (r, c) = dims(&t);
        t.reshape(vec![r, c]).expect("same element count")
    }

    /// Value that receives no gradient.
    pub fn constant(&mut self, t: Tensor<T>) -> Result<Var> {
        self.push("constant", Self::as_matrix(t), Op::Leaf, false)
    }

    /// Differentiable leaf.
    pub fn input(&mut self, t: Tensor<T>) -> Result<Var> {
        self.push("input", Self::as_matrix(t), Op::Leaf, true)
    }

    /// Leaf bound to a named parameter; repeated requests return the same var.
    pub fn param(&mut self, store: &ParameterStore<T>, name: &str) -> Result<Var> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let p = store.get(name).ok_or_else(|| ComputeError::UnknownParameter(name.to_string()))?;
        let trainable = store.is_trainable(name);
        let v = self.push("param", Self::as_matrix(p.clone()), Op::Leaf, trainable)?;
        self.params.insert(name.to_string(), v);
        Ok(v)
    }

    /// Binds `name` to an existing var, so later [`Graph::param`] calls for
    /// that name return it instead of reading the store. Used to check
    /// gradients with respect to parameters.
    pub fn bind_param(&mut self, name: &str, v: Var) {
        self.params.insert(name.to_string(), v);
    }

    /// Names and vars of the parameters bound so far.
    pub fn bound_params(&self) -> &BTreeMap<String, Var> {
        &self.params
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (da, db) = (self.shape(a), self.shape(b));
        if da.1 != db.0 {
            return Err(mismatch("matmul", format!("{da:?} x {db:?}")));
        }
        let out = matmul_raw(self.value(a).data(), da, false, self.value(b).data(), db, false);
        let t = Tensor::matrix(da.0, db.1, out)?;
        let rg = self.rg(a) || self.rg(b);
        self.push("matmul", t, Op::MatMul(a, b), rg)
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.shape(a);
        let src = self.value(a).data();
        let mut out = Vec::with_capacity(r * c);
        for j in 0..c {
            for i in 0..r {
                out.push(src[i * c + j]);
            }
        }
        let rg = self.rg(a);
        self.push("transpose", Tensor::matrix(c, r, out)?, Op::Transpose(a), rg)
    }

    fn binary(&mut self, kind: Binary, name: &'static str, a: Var, b: Var) -> Result<Var> {
        let (da, db) = (self.shape(a), self.shape(b));
        let r = da.0.max(db.0);
        let c = da.1.max(db.1);
        let ok = |d: (usize, usize)| (d.0 == r || d.0 == 1) && (d.1 == c || d.1 == 1);
        if !ok(da) || !ok(db) {
            return Err(mismatch(name, format!("cannot broadcast {da:?} with {db:?}")));
        }
        let (x, y) = (self.value(a).data(), self.value(b).data());
        let mut out = Vec::with_capacity(r * c);
        for i in 0..r {
            for j in 0..c {
                let (p, q) = (x[bidx(i, j, da)], y[bidx(i, j, db)]);
                out.push(match kind {
                    Binary::Add => p + q,
                    Binary::Sub => p - q,
                    Binary::Mul => p * q,
                });
            }
        }
        let rg = self.rg(a) || self.rg(b);
        self.push(name, Tensor::matrix(r, c, out)?, Op::Binary(kind, a, b), rg)
    }

    /// Elementwise sum; either operand may broadcast along an axis of extent 1.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Add, "add", a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Sub, "sub", a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Mul, "mul", a, b)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        let s = T::from_f64(s);
        let t = self.value(a).map(|x| x * s);
        let rg = self.rg(a);
        self.push("scale", t, Op::Scale(a, s), rg)
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Result<Var> {
        let s = T::from_f64(s);
        let t = self.value(a).map(|x| x + s);
        let rg = self.rg(a);
        self.push("add_scalar", t, Op::AddScalar(a), rg)
    }

    /// `1 - a`.
    pub fn one_minus(&mut self, a: Var) -> Result<Var> {
        let n = self.neg(a)?;
        self.add_scalar(n, 1.0)
    }

    fn unary(&mut self, kind: Unary, name: &'static str, a: Var) -> Result<Var> {
        let eps = T::from_f64(LOG_CLAMP);
        let t = self.value(a).map(|x| match kind {
            Unary::Relu => x.max(T::zero()),
            Unary::Sigmoid => sigmoid(x),
            Unary::Tanh => x.tanh(),
            Unary::Exp => x.exp(),
            Unary::Log => x.max(eps).ln(),
            Unary::Sqrt => x.max(eps).sqrt(),
        });
        let rg = self.rg(a);
        self.push(name, t, Op::Unary(kind, a), rg)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Relu, "relu", a)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Sigmoid, "sigmoid", a)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Tanh, "tanh", a)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Exp, "exp", a)
    }

    /// Natural log with the argument clamped below at 1e-12.
    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Log, "log", a)
    }

    /// Square root with the argument clamped below at 1e-12.
    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Sqrt, "sqrt", a)
    }

    /// Elementwise clamp; gradient passes only strictly inside the interval.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        let (lo, hi) = (T::from_f64(lo), T::from_f64(hi));
        let t = self.value(a).map(|x| x.max(lo).min(hi));
        let rg = self.rg(a);
        self.push("clamp", t, Op::Clamp(a, lo, hi), rg)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = parts.first().map(|&p| self.shape(p).0).unwrap_or(0);
        if parts.iter().any(|&p| self.shape(p).0 != rows) {
            return Err(mismatch("concat_cols", "row counts differ".into()));
        }
        let cols: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut out = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(i));
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push("concat_cols", Tensor::matrix(rows, cols, out)?, Op::ConcatCols(parts.to_vec()), rg)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = parts.first().map(|&p| self.shape(p).1).unwrap_or(0);
        if parts.iter().any(|&p| self.shape(p).1 != cols) {
            return Err(mismatch("concat_rows", "column counts differ".into()));
        }
        let rows: usize = parts.iter().map(|&p| self.shape(p).0).sum();
        let mut out = Vec::with_capacity(rows * cols);
        for &p in parts {
            out.extend_from_slice(self.value(p).data());
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push("concat_rows", Tensor::matrix(rows, cols, out)?, Op::ConcatRows(parts.to_vec()), rg)
    }

    /// Rows `start..end`.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let (r, c) = self.shape(a);
        if start > end || end > r {
            return Err(mismatch("slice_rows", format!("{start}..{end} of {r} rows")));
        }
        let out = self.value(a).data()[start * c..end * c].to_vec();
        let rg = self.rg(a);
        self.push("slice_rows", Tensor::matrix(end - start, c, out)?, Op::SliceRows(a, start), rg)
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let (r, c) = self.shape(a);
        if start > end || end > c {
            return Err(mismatch("slice_cols", format!("{start}..{end} of {c} cols")));
        }
        let src = self.value(a);
        let mut out = Vec::with_capacity(r * (end - start));
        for i in 0..r {
            out.extend_from_slice(&src.row(i)[start..end]);
        }
        let rg = self.rg(a);
        self.push("slice_cols", Tensor::matrix(r, end - start, out)?, Op::SliceCols(a, start), rg)
    }

    /// Output row `k` is input row `idx[k]`.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let (r, c) = self.shape(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= r) {
            return Err(mismatch("gather_rows", format!("index {bad} out of {r} rows")));
        }
        let src = self.value(a);
        let mut out = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            out.extend_from_slice(src.row(i));
        }
        let rg = self.rg(a);
        self.push("gather_rows", Tensor::matrix(idx.len(), c, out)?, Op::GatherRows(a, idx.to_vec()), rg)
    }

    /// `out[idx[k]] += a[k]` into `n_out` zero rows.
    pub fn scatter_add_rows(&mut self, a: Var, idx: &[usize], n_out: usize) -> Result<Var> {
        let (r, c) = self.shape(a);
        if idx.len() != r || idx.iter().any(|&i| i >= n_out) {
            return Err(mismatch("scatter_add_rows", format!("{} indices for {r} rows into {n_out}", idx.len())));
        }
        let src = self.value(a).data();
        let mut out = vec![T::zero(); n_out * c];
        for (k, &i) in idx.iter().enumerate() {
            for j in 0..c {
                out[i * c + j] = out[i * c + j] + src[k * c + j];
            }
        }
        let rg = self.rg(a);
        self.push("scatter_add_rows", Tensor::matrix(n_out, c, out)?, Op::ScatterAddRows(a, idx.to_vec()), rg)
    }

    /// Mean of the rows belonging to each of `n_seg` segments. Every segment
    /// must be non-empty.
    pub fn segment_mean(&mut self, a: Var, seg: &[usize], n_seg: usize) -> Result<Var> {
        let (r, c) = self.shape(a);
        if seg.len() != r || seg.iter().any(|&s| s >= n_seg) {
            return Err(mismatch("segment_mean", format!("{} segment ids for {r} rows", seg.len())));
        }
        let mut counts = vec![0usize; n_seg];
        for &s in seg {
            counts[s] += 1;
        }
        if counts.contains(&0) {
            return Err(mismatch("segment_mean", "empty segment".into()));
        }
        let src = self.value(a).data();
        let mut out = vec![T::zero(); n_seg * c];
        for (k, &s) in seg.iter().enumerate() {
            for j in 0..c {
                out[s * c + j] = out[s * c + j] + src[k * c + j];
            }
        }
        for s in 0..n_seg {
            let inv = T::one() / T::from_f64(counts[s] as f64);
            for j in 0..c {
                out[s * c + j] = out[s * c + j] * inv;
            }
        }
        let rg = self.rg(a);
        self.push("segment_mean", Tensor::matrix(n_seg, c, out)?, Op::SegmentMean(a, seg.to_vec(), counts), rg)
    }

    /// Softmax of an `n × 1` column within each segment.
    pub fn segment_softmax(&mut self, a: Var, seg: &[usize], n_seg: usize) -> Result<Var> {
        let (r, c) = self.shape(a);
        if c != 1 || seg.len() != r || seg.iter().any(|&s| s >= n_seg) {
            return Err(mismatch("segment_softmax", format!("{r}x{c} with {} ids", seg.len())));
        }
        let x = self.value(a).data();
        let mut max = vec![T::neg_infinity(); n_seg];
        for (k, &s) in seg.iter().enumerate() {
            max[s] = max[s].max(x[k]);
        }
        let e: Vec<T> = seg.iter().enumerate().map(|(k, &s)| (x[k] - max[s]).exp()).collect();
        let mut sum = vec![T::zero(); n_seg];
        for (k, &s) in seg.iter().enumerate() {
            sum[s] = sum[s] + e[k];
        }
        let out = seg.iter().enumerate().map(|(k, &s)| e[k] / sum[s]).collect();
        let rg = self.rg(a);
        self.push("segment_softmax", Tensor::matrix(r, 1, out)?, Op::SegmentSoftmax(a, seg.to_vec()), rg)
    }

    /// Sum of all entries, `1 × 1`.
    pub fn sum_all(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().fold(T::zero(), |acc, &x| acc + x);
        let rg = self.rg(a);
        self.push("sum_all", Tensor::scalar(s), Op::SumAll(a), rg)
    }

    pub fn mean_all(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).len().max(1);
        let s = self.sum_all(a)?;
        self.scale(s, 1.0 / n as f64)
    }

    /// Column sums: `m × n → 1 × n`.
    pub fn sum_rows(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.shape(a);
        let src = self.value(a).data();
        let mut out = vec![T::zero(); c];
        for i in 0..r {
            for j in 0..c {
                out[j] = out[j] + src[i * c + j];
            }
        }
        let rg = self.rg(a);
        self.push("sum_rows", Tensor::matrix(1, c, out)?, Op::SumRows(a), rg)
    }

    /// Row sums: `m × n → m × 1`.
    pub fn sum_cols(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.shape(a);
        let src = self.value(a).data();
        let out = (0..r)
            .map(|i| src[i * c..(i + 1) * c].iter().fold(T::zero(), |acc, &x| acc + x))
            .collect();
        let rg = self.rg(a);
        self.push("sum_cols", Tensor::matrix(r, 1, out)?, Op::SumCols(a), rg)
    }

    /// Column means: `m × n → 1 × n`.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let r = self.shape(a).0.max(1);
        let s = self.sum_rows(a)?;
        self.scale(s, 1.0 / r as f64)
    }

    /// Population variance of each column: `m × n → 1 × n`.
    pub fn var_rows(&mut self, a: Var) -> Result<Var> {
        let mu = self.mean_rows(a)?;
        let d = self.sub(a, mu)?;
        let sq = self.mul(d, d)?;
        self.mean_rows(sq)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.shape(a);
        let src = self.value(a).data();
        let mut out = Vec::with_capacity(r * c);
        for i in 0..r {
            let row = &src[i * c..(i + 1) * c];
            let m = row.iter().fold(T::neg_infinity(), |acc, &x| acc.max(x));
            let e: Vec<T> = row.iter().map(|&x| (x - m).exp()).collect();
            let s = e.iter().fold(T::zero(), |acc, &x| acc + x);
            out.extend(e.into_iter().map(|x| x / s));
        }
        let rg = self.rg(a);
        self.push("softmax_rows", Tensor::matrix(r, c, out)?, Op::SoftmaxRows(a), rg)
    }

    /// Inverted dropout: entries are zeroed with probability `rate` and the
    /// survivors scaled by `1/(1-rate)`. Draws one uniform per entry, in
    /// row-major order.
    pub fn dropout<R: Rng>(&mut self, a: Var, rate: f64, rng: &mut R) -> Result<Var> {
        if rate <= 0.0 {
            return Ok(a);
        }
        let keep = T::from_f64(1.0 / (1.0 - rate));
        let mask: Vec<T> = (0..self.value(a).len())
            .map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep })
            .collect();
        let (r, c) = self.shape(a);
        let out = self.value(a).data().iter().zip(&mask).map(|(&x, &m)| x * m).collect();
        let rg = self.rg(a);
        self.push("dropout", Tensor::matrix(r, c, out)?, Op::Dropout(a, mask), rg)
    }

    /// Pairwise cosine similarity of the rows of `a` (`n1 × d`) and `b`
    /// (`n2 × d`). Zero-norm rows give 0. Each entry is computed from the
    /// same products in the same order regardless of argument order, so
    /// `cosine_map(b, a)` is exactly the transpose.
    pub fn cosine_map(&mut self, a: Var, b: Var) -> Result<Var> {
        let ((n1, d), (n2, d2)) = (self.shape(a), self.shape(b));
        if d != d2 {
            return Err(mismatch("cosine_map", format!("widths {d} and {d2}")));
        }
        let (x, y) = (self.value(a).data(), self.value(b).data());
        let na = row_norms(x, n1, d);
        let nb = row_norms(y, n2, d);
        let mut out = Vec::with_capacity(n1 * n2);
        for i in 0..n1 {
            for j in 0..n2 {
                out.push(cosine_entry(&x[i * d..(i + 1) * d], &y[j * d..(j + 1) * d], na[i], nb[j]));
            }
        }
        let rg = self.rg(a) || self.rg(b);
        self.push("cosine_map", Tensor::matrix(n1, n2, out)?, Op::CosineMap(a, b), rg)
    }

    /// Mean binary cross-entropy between `sigmoid(logits)` and `targets`,
    /// computed in the overflow-free form.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[T]) -> Result<Var> {
        let z = self.value(logits).data();
        if z.len() != targets.len() {
            return Err(mismatch("bce_with_logits", format!("{} logits, {} targets", z.len(), targets.len())));
        }
        let n = T::from_f64(z.len().max(1) as f64);
        let total = z.iter().zip(targets).fold(T::zero(), |acc, (&z, &y)| {
            acc + z.max(T::zero()) - z * y + (T::one() + (-z.abs()).exp()).ln()
        });
        let rg = self.rg(logits);
        self.push("bce_with_logits", Tensor::scalar(total / n), Op::BceWithLogits(logits, targets.to_vec()), rg)
    }

    /// Reverse sweep from a `1 × 1` output.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let (r, c) = self.shape(loss);
        if (r, c) != (1, 1) {
            return Err(mismatch("backward", format!("loss must be 1x1, got {r}x{c}")));
        }
        self.backward_with_seed(loss, Tensor::scalar(T::one()))
    }

    /// Reverse sweep with an explicit output cotangent of the output's shape.
    pub fn backward_with_seed(&self, out: Var, seed: Tensor<T>) -> Result<Gradients<T>> {
        if seed.len() != self.value(out).len() {
            return Err(mismatch("backward", "seed shape differs from output".into()));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; out.0 + 1];
        grads[out.0] = Some(seed.into_data());
        for k in (0..=out.0).rev() {
            let Some(g) = grads[k].take() else { continue };
            if self.nodes[k].requires_grad {
                self.propagate(k, &g, &mut grads);
            }
            grads[k] = Some(g);
        }
        let grads = grads
            .into_iter()
            .enumerate()
            .map(|(k, g)| {
                g.filter(|_| self.nodes[k].requires_grad).map(|g| {
                    let (r, c) = dims(&self.nodes[k].value);
                    Tensor::matrix(r, c, g).expect("gradient matches value shape")
                })
            })
            .collect();
        Ok(Gradients { grads, params: self.params.clone() })
    }

    fn propagate(&self, k: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[k];
        let (r, c) = dims(&node.value);
        let y = node.value.data();
        let mut acc = |v: Var, contribution: Vec<T>| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => {
                    for (e, x) in existing.iter_mut().zip(contribution) {
                        *e = *e + x;
                    }
                }
                slot => *slot = Some(contribution),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (da, db) = (self.shape(*a), self.shape(*b));
                if self.rg(*a) {
                    acc(*a, matmul_raw(g, (r, c), false, self.value(*b).data(), db, true));
                }
                if self.rg(*b) {
                    acc(*b, matmul_raw(self.value(*a).data(), da, true, g, (r, c), false));
                }
            }
            Op::Transpose(a) => {
                let mut out = Vec::with_capacity(r * c);
                for j in 0..c {
                    for i in 0..r {
                        out.push(g[i * c + j]);
                    }
                }
                acc(*a, out);
            }
            Op::Binary(kind, a, b) => {
                let (da, db) = (self.shape(*a), self.shape(*b));
                match kind {
                    Binary::Add => {
                        acc(*a, reduce_to(g, (r, c), da));
                        acc(*b, reduce_to(g, (r, c), db));
                    }
                    Binary::Sub => {
                        acc(*a, reduce_to(g, (r, c), da));
                        let neg: Vec<T> = g.iter().map(|&x| -x).collect();
                        acc(*b, reduce_to(&neg, (r, c), db));
                    }
                    Binary::Mul => {
                        let (x, z) = (self.value(*a).data(), self.value(*b).data());
                        if self.rg(*a) {
                            let full: Vec<T> = (0..r * c).map(|t| g[t] * z[bidx(t / c, t % c, db)]).collect();
                            acc(*a, reduce_to(&full, (r, c), da));
                        }
                        if self.rg(*b) {
                            let full: Vec<T> = (0..r * c).map(|t| g[t] * x[bidx(t / c, t % c, da)]).collect();
                            acc(*b, reduce_to(&full, (r, c), db));
                        }
                    }
                }
            }
            Op::Scale(a, s) => acc(*a, g.iter().map(|&x| x * *s).collect()),
            Op::AddScalar(a) => acc(*a, g.to_vec()),
            Op::Unary(kind, a) => {
                let x = self.value(*a).data();
                let eps = T::from_f64(LOG_CLAMP);
                let two = T::from_f64(2.0);
                let d: Vec<T> = (0..g.len())
                    .map(|t| {
                        g[t] * match kind {
                            Unary::Relu => {
                                if x[t] > T::zero() {
                                    T::one()
                                } else {
                                    T::zero()
                                }
                            }
                            Unary::Sigmoid => y[t] * (T::one() - y[t]),
                            Unary::Tanh => T::one() - y[t] * y[t],
                            Unary::Exp => y[t],
                            Unary::Log => {
                                if x[t] > eps {
                                    T::one() / x[t]
                                } else {
                                    T::zero()
                                }
                            }
                            Unary::Sqrt => {
                                if x[t] > eps {
                                    T::one() / (two * y[t])
                                } else {
                                    T::zero()
                                }
                            }
                        }
                    })
                    .collect();
                acc(*a, d);
            }
            Op::Clamp(a, lo, hi) => {
                let x = self.value(*a).data();
                acc(
                    *a,
                    (0..g.len())
                        .map(|t| if x[t] > *lo && x[t] < *hi { g[t] } else { T::zero() })
                        .collect(),
                );
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let w = self.shape(p).1;
                    let mut out = Vec::with_capacity(r * w);
                    for i in 0..r {
                        out.extend_from_slice(&g[i * c + off..i * c + off + w]);
                    }
                    acc(p, out);
                    off += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let n = self.value(p).len();
                    acc(p, g[off..off + n].to_vec());
                    off += n;
                }
            }
            Op::SliceRows(a, start) => {
                let (ra, _) = self.shape(*a);
                let mut out = vec![T::zero(); ra * c];
                out[start * c..start * c + g.len()].copy_from_slice(g);
                acc(*a, out);
            }
            Op::SliceCols(a, start) => {
                let (ra, ca) = self.shape(*a);
                let mut out = vec![T::zero(); ra * ca];
                for i in 0..ra {
                    out[i * ca + start..i * ca + start + c].copy_from_slice(&g[i * c..(i + 1) * c]);
                }
                acc(*a, out);
            }
            Op::GatherRows(a, idx) => {
                let (ra, _) = self.shape(*a);
                let mut out = vec![T::zero(); ra * c];
                for (k, &i) in idx.iter().enumerate() {
                    for j in 0..c {
                        out[i * c + j] = out[i * c + j] + g[k * c + j];
                    }
                }
                acc(*a, out);
            }
            Op::ScatterAddRows(a, idx) => {
                let mut out = Vec::with_capacity(idx.len() * c);
                for &i in idx {
                    out.extend_from_slice(&g[i * c..(i + 1) * c]);
                }
                acc(*a, out);
            }
            Op::SegmentMean(a, seg, counts) => {
                let mut out = Vec::with_capacity(seg.len() * c);
                for &s in seg {
                    let inv = T::one() / T::from_f64(counts[s] as f64);
                    out.extend(g[s * c..(s + 1) * c].iter().map(|&x| x * inv));
                }
                acc(*a, out);
            }
            Op::SegmentSoftmax(a, seg) => {
                let n_seg = seg.iter().max().map_or(0, |m| m + 1);
                let mut dot = vec![T::zero(); n_seg];
                for (k, &s) in seg.iter().enumerate() {
                    dot[s] = dot[s] + y[k] * g[k];
                }
                acc(*a, seg.iter().enumerate().map(|(k, &s)| y[k] * (g[k] - dot[s])).collect());
            }
            Op::SumAll(a) => acc(*a, vec![g[0]; self.value(*a).len()]),
            Op::SumRows(a) => {
                let (ra, _) = self.shape(*a);
                let mut out = Vec::with_capacity(ra * c);
                for _ in 0..ra {
                    out.extend_from_slice(g);
                }
                acc(*a, out);
            }
            Op::SumCols(a) => {
                let (_, ca) = self.shape(*a);
                let mut out = Vec::with_capacity(r * ca);
                for &gi in g.iter().take(r) {
                    out.extend(std::iter::repeat_n(gi, ca));
                }
                acc(*a, out);
            }
            Op::SoftmaxRows(a) => {
                let mut out = Vec::with_capacity(r * c);
                for i in 0..r {
                    let (yr, gr) = (&y[i * c..(i + 1) * c], &g[i * c..(i + 1) * c]);
                    let dot = yr.iter().zip(gr).fold(T::zero(), |s, (&p, &q)| s + p * q);
                    out.extend(yr.iter().zip(gr).map(|(&p, &q)| p * (q - dot)));
                }
                acc(*a, out);
            }
            Op::Dropout(a, mask) => acc(*a, g.iter().zip(mask).map(|(&x, &m)| x * m).collect()),
            Op::CosineMap(a, b) => {
                let ((n1, d), (n2, _)) = (self.shape(*a), self.shape(*b));
                let (x, z) = (self.value(*a).data(), self.value(*b).data());
                let na = row_norms(x, n1, d);
                let nb = row_norms(z, n2, d);
                let mut gx = vec![T::zero(); n1 * d];
                let mut gz = vec![T::zero(); n2 * d];
                // dI_ij/dx_i = z_j/(|x_i||z_j|) - I_ij x_i/|x_i|^2, symmetric in z
                for i in 0..n1 {
                    for j in 0..n2 {
                        let gij = g[i * n2 + j];
                        if na[i] == T::zero() || nb[j] == T::zero() || gij == T::zero() {
                            continue;
                        }
                        let inv = T::one() / (na[i] * nb[j]);
                        let iij = y[i * n2 + j];
                        let (ai, bi) = (iij / (na[i] * na[i]), iij / (nb[j] * nb[j]));
                        for t in 0..d {
                            let (xv, zv) = (x[i * d + t], z[j * d + t]);
                            gx[i * d + t] = gx[i * d + t] + gij * (zv * inv - ai * xv);
                            gz[j * d + t] = gz[j * d + t] + gij * (xv * inv - bi * zv);
                        }
                    }
                }
                acc(*a, gx);
                acc(*b, gz);
            }
            Op::BceWithLogits(a, targets) => {
                let z = self.value(*a).data();
                let n = T::from_f64(z.len().max(1) as f64);
                acc(*a, z.iter().zip(targets).map(|(&z, &t)| g[0] * (sigmoid(z) - t) / n).collect());
            }
        }
    }
}

fn row_norms<T: Scalar>(x: &[T], n: usize, d: usize) -> Vec<T> {
    (0..n)
        .map(|i| x[i * d..(i + 1) * d].iter().fold(T::zero(), |s, &v| s + v * v).sqrt())
        .collect()
}

#[inline]
fn cosine_entry<T: Scalar>(x: &[T], y: &[T], nx: T, ny: T) -> T {
    if nx == T::zero() || ny == T::zero() {
        return T::zero();
    }
    let dot = x.iter().zip(y).fold(T::zero(), |s, (&p, &q)| s + p * q);
    dot / (nx * ny)
}

/// Result of a backward sweep.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
    params: BTreeMap<String, Var>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of a var, or `None` if it does not require one or the
    /// output does not depend on it.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient for every trainable parameter of `store`; parameters the
    /// output does not depend on get zeros.
    pub fn for_store(&self, store: &ParameterStore<T>) -> BTreeMap<String, Tensor<T>> {
        store
            .trainable_names()
            .map(|name| {
                let g = self
                    .params
                    .get(name)
                    .and_then(|&v| self.get(v))
                    .map(|g| g.clone().reshape(store.get(name).expect("listed").shape().to_vec()).expect("same size"))
                    .unwrap_or_else(|| Tensor::zeros(store.get(name).expect("listed").shape()));
                (name.to_string(), g)
            })
            .collect()
    }
}
