//! Reverse-mode differentiation over dense matrices.
//!
//! Every operation on a [`Tape`] appends a node holding its payload and the
//! handles of its inputs. Nodes are only ever appended, so node order is a
//! topological order and [`Tape::backward`] simply walks it in reverse.
//! Gradients flow only into nodes whose `requires_grad` flag is set; that
//! flag is inherited from any input, which lets large constant inputs (a fixed
//! adjacency during encoder training, say) skip their backward work entirely.

use std::cell::RefCell;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Mat;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Value(usize);

impl Value {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul(Value, Value),
    Add(Value, Value),
    Sub(Value, Value),
    Hadamard(Value, Value),
    Scale(Value, T),
    AddRowVector(Value, Value),
    ScaleRows(Value, Value),
    ScaleCols(Value, Value),
    OuterSum(Value, Value),
    Relu(Value),
    LeakyRelu(Value, T),
    Exp(Value),
    Log(Value),
    Powf(Value, T),
    Transpose(Value),
    RowSoftmax(Value),
    MaskedRowSoftmax(Value),
    ConcatCols(Vec<Value>),
    ConcatRows(Vec<Value>),
    RowNormalizeL2(Value, Vec<T>),
    RowSum(Value),
    Sum(Value),
    Gather(Value, Vec<usize>),
    CrossEntropy(Value, Vec<(usize, usize)>, Mat<T>),
}

#[derive(Debug)]
struct Node<T> {
    value: Mat<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Operation record for one forward pass.
#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: RefCell<Vec<Node<T>>>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Value`].
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Mat<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Value) -> Option<&Mat<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Value) -> Option<Mat<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn dim_err(op: &'static str, lhs: (usize, usize), rhs: (usize, usize)) -> Error {
    Error::Dimension { op, lhs, rhs }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Mat<T>, op: Op<T>, requires_grad: bool, name: &'static str) -> Result<Value> {
        let value = value.ensure_finite(name)?;
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Value(nodes.len() - 1))
    }

    fn rg(&self, vs: &[Value]) -> bool {
        let nodes = self.nodes.borrow();
        vs.iter().any(|v| nodes[v.0].requires_grad)
    }

    fn shape(&self, v: Value) -> (usize, usize) {
        self.nodes.borrow()[v.0].value.shape()
    }

    /// Trainable input: gradients are accumulated for it.
    pub fn leaf(&self, value: Mat<T>) -> Result<Value> {
        self.push(value, Op::Leaf, true, "leaf")
    }

    /// Constant input: no gradient is tracked.
    pub fn constant(&self, value: Mat<T>) -> Result<Value> {
        self.push(value, Op::Leaf, false, "constant")
    }

    /// Copy of a node's payload.
    pub fn value(&self, v: Value) -> Mat<T> {
        self.nodes.borrow()[v.0].value.clone()
    }

    pub fn with_value<R>(&self, v: Value, f: impl FnOnce(&Mat<T>) -> R) -> R {
        f(&self.nodes.borrow()[v.0].value)
    }

    /// Payload of a 1x1 node.
    pub fn scalar(&self, v: Value) -> T {
        self.with_value(v, |m| m.item())
    }

    pub fn requires_grad(&self, v: Value) -> bool {
        self.nodes.borrow()[v.0].requires_grad
    }

    fn unary(&self, a: Value, name: &'static str, f: impl FnOnce(&Mat<T>) -> Result<Mat<T>>, op: Op<T>) -> Result<Value> {
        let out = {
            let nodes = self.nodes.borrow();
            f(&nodes[a.0].value)?
        };
        self.push(out, op, self.rg(&[a]), name)
    }

    fn binary(
        &self,
        a: Value,
        b: Value,
        name: &'static str,
        f: impl FnOnce(&Mat<T>, &Mat<T>) -> Result<Mat<T>>,
        op: Op<T>,
    ) -> Result<Value> {
        let out = {
            let nodes = self.nodes.borrow();
            f(&nodes[a.0].value, &nodes[b.0].value)?
        };
        self.push(out, op, self.rg(&[a, b]), name)
    }

    pub fn matmul(&self, a: Value, b: Value) -> Result<Value> {
        self.binary(a, b, "matmul", |x, y| x.matmul(y), Op::MatMul(a, b))
    }

    pub fn add(&self, a: Value, b: Value) -> Result<Value> {
        self.binary(a, b, "add", |x, y| x.add(y), Op::Add(a, b))
    }

    pub fn sub(&self, a: Value, b: Value) -> Result<Value> {
        self.binary(a, b, "sub", |x, y| x.sub(y), Op::Sub(a, b))
    }

    pub fn hadamard(&self, a: Value, b: Value) -> Result<Value> {
        self.binary(a, b, "hadamard", |x, y| x.hadamard(y), Op::Hadamard(a, b))
    }

    pub fn scale(&self, a: Value, s: T) -> Result<Value> {
        self.unary(a, "scale", |x| Ok(x.scale(s)), Op::Scale(a, s))
    }

    /// Adds a 1 x c row vector to every row of an r x c matrix.
    pub fn add_row_vector(&self, a: Value, row: Value) -> Result<Value> {
        self.binary(
            a,
            row,
            "add_row_vector",
            |x, r| {
                if r.rows() != 1 || r.cols() != x.cols() {
                    return Err(dim_err("add_row_vector", x.shape(), r.shape()));
                }
                let mut out = x.clone();
                for i in 0..out.rows() {
                    for (o, &b) in out.row_mut(i).iter_mut().zip(r.row(0)) {
                        *o += b;
                    }
                }
                Ok(out)
            },
            Op::AddRowVector(a, row),
        )
    }

    /// `diag(col) · a` for an r x 1 column vector.
    pub fn scale_rows(&self, a: Value, col: Value) -> Result<Value> {
        self.binary(
            a,
            col,
            "scale_rows",
            |x, c| {
                if c.cols() != 1 || c.rows() != x.rows() {
                    return Err(dim_err("scale_rows", x.shape(), c.shape()));
                }
                let mut out = x.clone();
                for i in 0..out.rows() {
                    let s = c.get(i, 0);
                    out.row_mut(i).iter_mut().for_each(|o| *o *= s);
                }
                Ok(out)
            },
            Op::ScaleRows(a, col),
        )
    }

    /// `a · diag(row)` for a 1 x c row vector.
    pub fn scale_cols(&self, a: Value, row: Value) -> Result<Value> {
        self.binary(
            a,
            row,
            "scale_cols",
            |x, r| {
                if r.rows() != 1 || r.cols() != x.cols() {
                    return Err(dim_err("scale_cols", x.shape(), r.shape()));
                }
                let mut out = x.clone();
                for i in 0..out.rows() {
                    for (o, &s) in out.row_mut(i).iter_mut().zip(r.row(0)) {
                        *o *= s;
                    }
                }
                Ok(out)
            },
            Op::ScaleCols(a, row),
        )
    }

    /// `out[i][j] = col[i] + row[j]` for an r x 1 column and a 1 x c row.
    pub fn outer_sum(&self, col: Value, row: Value) -> Result<Value> {
        self.binary(
            col,
            row,
            "outer_sum",
            |c, r| {
                if c.cols() != 1 || r.rows() != 1 {
                    return Err(dim_err("outer_sum", c.shape(), r.shape()));
                }
                let mut data = Vec::with_capacity(c.rows() * r.cols());
                for i in 0..c.rows() {
                    let ci = c.get(i, 0);
                    data.extend(r.row(0).iter().map(|&rj| ci + rj));
                }
                Mat::new(c.rows(), r.cols(), data)
            },
            Op::OuterSum(col, row),
        )
    }

    pub fn relu(&self, a: Value) -> Result<Value> {
        self.unary(a, "relu", |x| Ok(x.map(|v| v.max(T::zero()))), Op::Relu(a))
    }

    pub fn leaky_relu(&self, a: Value, slope: T) -> Result<Value> {
        self.unary(
            a,
            "leaky_relu",
            |x| Ok(x.map(|v| if v > T::zero() { v } else { v * slope })),
            Op::LeakyRelu(a, slope),
        )
    }

    pub fn exp(&self, a: Value) -> Result<Value> {
        self.unary(a, "exp", |x| Ok(x.map(T::exp)), Op::Exp(a))
    }

    pub fn log(&self, a: Value) -> Result<Value> {
        self.unary(
            a,
            "log",
            |x| {
                if x.data().iter().any(|&v| v <= T::zero()) {
                    return Err(Error::invalid("log of non-positive value"));
                }
                Ok(x.map(T::ln))
            },
            Op::Log(a),
        )
    }

    /// Elementwise power; inputs must be strictly positive.
    pub fn powf(&self, a: Value, p: T) -> Result<Value> {
        self.unary(
            a,
            "powf",
            |x| {
                if x.data().iter().any(|&v| v <= T::zero()) {
                    return Err(Error::invalid("powf of non-positive value"));
                }
                Ok(x.map(|v| v.powf(p)))
            },
            Op::Powf(a, p),
        )
    }

    pub fn transpose(&self, a: Value) -> Result<Value> {
        self.unary(a, "transpose", |x| Ok(x.transpose()), Op::Transpose(a))
    }

    pub fn row_softmax(&self, a: Value) -> Result<Value> {
        self.unary(a, "row_softmax", |x| Ok(softmax_rows(x, None)), Op::RowSoftmax(a))
    }

    /// Row softmax restricted to entries where `mask` is non-zero; masked-out
    /// entries are exactly 0. Every row must keep at least one entry.
    pub fn masked_row_softmax(&self, a: Value, mask: &Mat<T>) -> Result<Value> {
        self.unary(
            a,
            "masked_row_softmax",
            |x| {
                if x.shape() != mask.shape() {
                    return Err(dim_err("masked_row_softmax", x.shape(), mask.shape()));
                }
                for r in 0..mask.rows() {
                    if mask.row(r).iter().all(|&m| m == T::zero()) {
                        return Err(Error::invalid(format!("masked_row_softmax: row {r} fully masked")));
                    }
                }
                Ok(softmax_rows(x, Some(mask)))
            },
            Op::MaskedRowSoftmax(a),
        )
    }

    pub fn concat_cols(&self, parts: &[Value]) -> Result<Value> {
        let out = {
            let nodes = self.nodes.borrow();
            let first = parts.first().ok_or_else(|| Error::invalid("concat_cols of nothing"))?;
            let rows = nodes[first.0].value.rows();
            for p in parts {
                let s = nodes[p.0].value.shape();
                if s.0 != rows {
                    return Err(dim_err("concat_cols", nodes[first.0].value.shape(), s));
                }
            }
            let cols: usize = parts.iter().map(|p| nodes[p.0].value.cols()).sum();
            let mut data = Vec::with_capacity(rows * cols);
            for r in 0..rows {
                for p in parts {
                    data.extend_from_slice(nodes[p.0].value.row(r));
                }
            }
            Mat::new(rows, cols, data)?
        };
        self.push(out, Op::ConcatCols(parts.to_vec()), self.rg(parts), "concat_cols")
    }

    pub fn concat_rows(&self, parts: &[Value]) -> Result<Value> {
        let out = {
            let nodes = self.nodes.borrow();
            let first = parts.first().ok_or_else(|| Error::invalid("concat_rows of nothing"))?;
            let cols = nodes[first.0].value.cols();
            let mut data = Vec::new();
            let mut rows = 0;
            for p in parts {
                let m = &nodes[p.0].value;
                if m.cols() != cols {
                    return Err(dim_err("concat_rows", nodes[first.0].value.shape(), m.shape()));
                }
                data.extend_from_slice(m.data());
                rows += m.rows();
            }
            Mat::new(rows, cols, data)?
        };
        self.push(out, Op::ConcatRows(parts.to_vec()), self.rg(parts), "concat_rows")
    }

    /// Scales every row to unit Euclidean norm; a zero row is an error.
    pub fn row_normalize_l2(&self, a: Value) -> Result<Value> {
        let (out, norms) = {
            let nodes = self.nodes.borrow();
            let x = &nodes[a.0].value;
            let mut out = x.clone();
            let mut norms = Vec::with_capacity(x.rows());
            for r in 0..x.rows() {
                let norm = x.row(r).iter().map(|&v| v * v).sum::<T>().sqrt();
                if norm == T::zero() {
                    return Err(Error::invalid(format!("row_normalize_l2: row {r} has zero norm")));
                }
                out.row_mut(r).iter_mut().for_each(|v| *v /= norm);
                norms.push(norm);
            }
            (out, norms)
        };
        self.push(out, Op::RowNormalizeL2(a, norms), self.rg(&[a]), "row_normalize_l2")
    }

    /// r x 1 column of row sums.
    pub fn row_sum(&self, a: Value) -> Result<Value> {
        self.unary(
            a,
            "row_sum",
            |x| Mat::new(x.rows(), 1, x.row_sums()),
            Op::RowSum(a),
        )
    }

    pub fn sum(&self, a: Value) -> Result<Value> {
        self.unary(a, "sum", |x| Ok(Mat::scalar(x.sum())), Op::Sum(a))
    }

    pub fn mean(&self, a: Value) -> Result<Value> {
        let n = {
            let (r, c) = self.shape(a);
            r * c
        };
        let s = self.sum(a)?;
        self.scale(s, T::one() / T::of(n as f64))
    }

    /// r x 1 column with `out[i] = a[i][cols[i]]`.
    pub fn gather(&self, a: Value, cols: &[usize]) -> Result<Value> {
        let idx = cols.to_vec();
        self.unary(
            a,
            "gather",
            |x| {
                if idx.len() != x.rows() {
                    return Err(dim_err("gather", x.shape(), (idx.len(), 1)));
                }
                let mut data = Vec::with_capacity(idx.len());
                for (r, &c) in idx.iter().enumerate() {
                    if c >= x.cols() {
                        return Err(Error::invalid(format!("gather: column {c} out of range")));
                    }
                    data.push(x.get(r, c));
                }
                Mat::new(x.rows(), 1, data)
            },
            Op::Gather(a, cols.to_vec()),
        )
    }

    /// Mean negative log-likelihood of `labels[i]` under `softmax(logits[i])`
    /// over the rows listed in `mask`.
    pub fn cross_entropy(&self, logits: Value, labels: &[usize], mask: &[usize]) -> Result<Value> {
        if mask.is_empty() {
            return Err(Error::invalid("cross_entropy: empty mask"));
        }
        let (loss, probs, pairs) = {
            let nodes = self.nodes.borrow();
            let x = &nodes[logits.0].value;
            if labels.len() != x.rows() {
                return Err(dim_err("cross_entropy", x.shape(), (labels.len(), 1)));
            }
            let probs = softmax_rows(x, None);
            let mut total = T::zero();
            let mut pairs = Vec::with_capacity(mask.len());
            for &i in mask {
                if i >= x.rows() {
                    return Err(Error::invalid(format!("cross_entropy: node {i} out of range")));
                }
                let y = labels[i];
                if y >= x.cols() {
                    return Err(Error::invalid(format!("cross_entropy: label {y} out of range")));
                }
                let row = x.row(i);
                let max = row.iter().copied().fold(T::neg_infinity(), T::max);
                let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
                total += lse - row[y];
                pairs.push((i, y));
            }
            (total / T::of(mask.len() as f64), probs, pairs)
        };
        self.push(
            Mat::scalar(loss),
            Op::CrossEntropy(logits, pairs, probs),
            self.rg(&[logits]),
            "cross_entropy",
        )
    }

    /// Reverse pass from `output`, seeded with ones.
    pub fn backward(&self, output: Value) -> Result<Gradients<T>> {
        let (r, c) = self.shape(output);
        self.backward_from(output, Mat::filled(r, c, T::one()))
    }

    /// Reverse pass from `output` with an explicit upstream gradient, e.g. the
    /// gradient a server sends back for an uploaded embedding.
    pub fn backward_from(&self, output: Value, seed: Mat<T>) -> Result<Gradients<T>> {
        let nodes = self.nodes.borrow();
        if seed.shape() != nodes[output.0].value.shape() {
            return Err(dim_err("backward_from", nodes[output.0].value.shape(), seed.shape()));
        }
        let mut grads: Vec<Option<Mat<T>>> = (0..nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(seed);

        let accumulate = |grads: &mut Vec<Option<Mat<T>>>, v: Value, g: Mat<T>| -> Result<()> {
            if !nodes[v.0].requires_grad {
                return Ok(());
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot @ None => {
                    *slot = Some(g);
                    Ok(())
                }
            }
        };

        for idx in (0..=output.0).rev() {
            let node = &nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let g = match &grads[idx] {
                Some(g) => g.clone(),
                None => continue,
            };
            let val = |v: Value| &nodes[v.0].value;
            let needs = |v: Value| nodes[v.0].requires_grad;
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    if needs(*a) {
                        accumulate(&mut grads, *a, g.matmul_t(val(*b))?)?;
                    }
                    if needs(*b) {
                        accumulate(&mut grads, *b, val(*a).transpose().matmul(&g)?)?;
                    }
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone())?;
                    accumulate(&mut grads, *b, g)?;
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *b, g.scale(-T::one()))?;
                    accumulate(&mut grads, *a, g)?;
                }
                Op::Hadamard(a, b) => {
                    if needs(*a) {
                        accumulate(&mut grads, *a, g.hadamard(val(*b))?)?;
                    }
                    if needs(*b) {
                        accumulate(&mut grads, *b, g.hadamard(val(*a))?)?;
                    }
                }
                Op::Scale(a, s) => accumulate(&mut grads, *a, g.scale(*s))?,
                Op::AddRowVector(a, row) => {
                    if needs(*row) {
                        let sums = g.col_sums();
                        accumulate(&mut grads, *row, Mat::new(1, sums.len(), sums)?)?;
                    }
                    accumulate(&mut grads, *a, g)?;
                }
                Op::ScaleRows(a, col) => {
                    let x = val(*a);
                    let c = val(*col);
                    if needs(*col) {
                        let d: Vec<T> = (0..x.rows())
                            .map(|i| g.row(i).iter().zip(x.row(i)).map(|(&gi, &xi)| gi * xi).sum())
                            .collect();
                        accumulate(&mut grads, *col, Mat::new(x.rows(), 1, d)?)?;
                    }
                    if needs(*a) {
                        let mut ga = g;
                        for i in 0..ga.rows() {
                            let s = c.get(i, 0);
                            ga.row_mut(i).iter_mut().for_each(|v| *v *= s);
                        }
                        accumulate(&mut grads, *a, ga)?;
                    }
                }
                Op::ScaleCols(a, row) => {
                    let x = val(*a);
                    let r = val(*row);
                    if needs(*row) {
                        let d = g.hadamard(x)?.col_sums();
                        accumulate(&mut grads, *row, Mat::new(1, d.len(), d)?)?;
                    }
                    if needs(*a) {
                        let mut ga = g;
                        for i in 0..ga.rows() {
                            for (v, &s) in ga.row_mut(i).iter_mut().zip(r.row(0)) {
                                *v *= s;
                            }
                        }
                        accumulate(&mut grads, *a, ga)?;
                    }
                }
                Op::OuterSum(col, row) => {
                    if needs(*col) {
                        let s = g.row_sums();
                        accumulate(&mut grads, *col, Mat::new(s.len(), 1, s)?)?;
                    }
                    if needs(*row) {
                        let s = g.col_sums();
                        accumulate(&mut grads, *row, Mat::new(1, s.len(), s)?)?;
                    }
                }
                Op::Relu(a) => {
                    let ga = g.zip_map(val(*a), "relu'", |gi, x| if x > T::zero() { gi } else { T::zero() })?;
                    accumulate(&mut grads, *a, ga)?;
                }
                Op::LeakyRelu(a, slope) => {
                    let s = *slope;
                    let ga = g.zip_map(val(*a), "leaky_relu'", |gi, x| if x > T::zero() { gi } else { gi * s })?;
                    accumulate(&mut grads, *a, ga)?;
                }
                Op::Exp(a) => accumulate(&mut grads, *a, g.hadamard(&node.value)?)?,
                Op::Log(a) => {
                    let ga = g.zip_map(val(*a), "log'", |gi, x| gi / x)?;
                    accumulate(&mut grads, *a, ga)?;
                }
                Op::Powf(a, p) => {
                    let p = *p;
                    let ga = g.zip_map(val(*a), "powf'", |gi, x| gi * p * x.powf(p - T::one()))?;
                    accumulate(&mut grads, *a, ga)?;
                }
                Op::Transpose(a) => accumulate(&mut grads, *a, g.transpose())?,
                Op::RowSoftmax(a) | Op::MaskedRowSoftmax(a) => {
                    let y = &node.value;
                    let mut ga = g;
                    for i in 0..y.rows() {
                        let yr = y.row(i);
                        let dot: T = ga.row(i).iter().zip(yr).map(|(&gi, &yi)| gi * yi).sum();
                        for (v, &yi) in ga.row_mut(i).iter_mut().zip(yr) {
                            *v = yi * (*v - dot);
                        }
                    }
                    accumulate(&mut grads, *a, ga)?;
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let w = val(*p).cols();
                        if needs(*p) {
                            let cols: Vec<usize> = (offset..offset + w).collect();
                            accumulate(&mut grads, *p, g.select_cols(&cols)?)?;
                        }
                        offset += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let h = val(*p).rows();
                        if needs(*p) {
                            let rows: Vec<usize> = (offset..offset + h).collect();
                            accumulate(&mut grads, *p, g.select_rows(&rows)?)?;
                        }
                        offset += h;
                    }
                }
                Op::RowNormalizeL2(a, norms) => {
                    let y = &node.value;
                    let mut ga = g;
                    for i in 0..y.rows() {
                        let yr = y.row(i);
                        let dot: T = ga.row(i).iter().zip(yr).map(|(&gi, &yi)| gi * yi).sum();
                        let n = norms[i];
                        for (v, &yi) in ga.row_mut(i).iter_mut().zip(yr) {
                            *v = (*v - yi * dot) / n;
                        }
                    }
                    accumulate(&mut grads, *a, ga)?;
                }
                Op::RowSum(a) => {
                    let (r, c) = val(*a).shape();
                    let mut ga = Mat::zeros(r, c);
                    for i in 0..r {
                        let gi = g.get(i, 0);
                        ga.row_mut(i).iter_mut().for_each(|v| *v = gi);
                    }
                    accumulate(&mut grads, *a, ga)?;
                }
                Op::Sum(a) => {
                    let (r, c) = val(*a).shape();
                    accumulate(&mut grads, *a, Mat::filled(r, c, g.item()))?;
                }
                Op::Gather(a, cols) => {
                    let (r, c) = val(*a).shape();
                    let mut ga = Mat::zeros(r, c);
                    for (i, &col) in cols.iter().enumerate() {
                        ga.set(i, col, g.get(i, 0));
                    }
                    accumulate(&mut grads, *a, ga)?;
                }
                Op::CrossEntropy(logits, pairs, probs) => {
                    let (r, c) = probs.shape();
                    let mut ga = Mat::zeros(r, c);
                    let w = g.item() / T::of(pairs.len() as f64);
                    for &(i, y) in pairs {
                        for (dst, &p) in ga.row_mut(i).iter_mut().zip(probs.row(i)) {
                            *dst += w * p;
                        }
                        let cur = ga.get(i, y);
                        ga.set(i, y, cur - w);
                    }
                    accumulate(&mut grads, *logits, ga)?;
                }
            }
        }
        for g in grads.iter().flatten() {
            if !g.is_finite() {
                return Err(Error::NonFinite { op: "backward" });
            }
        }
        Ok(Gradients { grads })
    }
}

/// Numerically stable row softmax, optionally restricted to non-zero `mask` entries.
pub(crate) fn softmax_rows<T: Scalar>(x: &Mat<T>, mask: Option<&Mat<T>>) -> Mat<T> {
    let mut out = x.clone();
    for r in 0..x.rows() {
        let keep = |c: usize| mask.is_none_or(|m| m.get(r, c) != T::zero());
        let row = x.row(r);
        let max = (0..row.len())
            .filter(|&c| keep(c))
            .map(|c| row[c])
            .fold(T::neg_infinity(), T::max);
        let mut total = T::zero();
        let out_row = out.row_mut(r);
        for (c, o) in out_row.iter_mut().enumerate() {
            *o = if keep(c) { (row[c] - max).exp() } else { T::zero() };
            total += *o;
        }
        out_row.iter_mut().for_each(|o| *o /= total);
    }
    out
}
