//! Recorded reverse-mode differentiation over [`Tensor`] values.
//!
//! Every operation appends a node holding its output value and the handles of
//! its inputs, so the node list is topologically ordered by construction.
//! [`Tape::backward`] walks it once in reverse and accumulates gradients for
//! every node that depends on a trainable leaf.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{self, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Cols,
}

/// Pointwise unary function with its derivative, expressed through the
/// input `x` and output `y`.
#[derive(Clone, Copy)]
pub struct Unary {
    pub value: fn(f64) -> f64,
    pub derivative: fn(f64, f64) -> f64,
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulBt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Hadamard(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Sigmoid(Var),
    Tanh(Var),
    Map(Var, Unary),
    RowSoftmax(Var),
    Concat(Var, Var, Axis),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    Gather(Var, Vec<usize>),
    RepeatRows(Var),
    Reshape(Var),
    Dropout(Var, Vec<f64>),
    Sum(Var),
    SumSquares(Var),
    RowwiseMatvec(Var, Var),
    CrossEntropy(Var, Vec<Option<usize>>),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Single-owner record of a forward computation.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by one call to [`Tape::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// `None` when `var` does not influence the loss through a trainable path.
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::Shape {
        op,
        left: a.shape(),
        right: b.shape(),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn unary_node(&mut self, value: Tensor, op: Op, input: Var) -> Var {
        let rg = self.nodes[input.0].requires_grad;
        self.push(value, op, rg)
    }

    fn binary_node(&mut self, value: Tensor, op: Op, a: Var, b: Var) -> Var {
        let rg = self.nodes[a.0].requires_grad || self.nodes[b.0].requires_grad;
        self.push(value, op, rg)
    }

    /// Records a constant input.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Records a trainable input.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = tensor::matmul(self.value(a), self.value(b))?;
        Ok(self.binary_node(out, Op::MatMul(a, b), a, b))
    }

    /// `a · bᵀ`
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = tensor::matmul_bt(self.value(a), self.value(b))?;
        Ok(self.binary_node(out, Op::MatMulBt(a, b), a, b))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err(op, ta, tb));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y);
        Ok(self.binary_node(out, Op::Add(a, b), a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y);
        Ok(self.binary_node(out, Op::Sub(a, b), a, b))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("hadamard", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y);
        Ok(self.binary_node(out, Op::Hadamard(a, b), a, b))
    }

    /// Adds the `1 x n` row `row` to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (ta, tr) = (self.value(a), self.value(row));
        if tr.rows() != 1 || tr.cols() != ta.cols() {
            return Err(shape_err("add_row", ta, tr));
        }
        let mut out = ta.clone();
        let n = ta.cols();
        for r in 0..ta.rows() {
            for (o, b) in out.data_mut()[r * n..(r + 1) * n].iter_mut().zip(tr.data()) {
                *o += b;
            }
        }
        Ok(self.binary_node(out, Op::AddRow(a, row), a, row))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let out = self.value(a).map(|x| x * factor);
        self.unary_node(out, Op::Scale(a, factor), a)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|x| x + c);
        self.unary_node(out, Op::AddScalar(a), a)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(tensor::sigmoid);
        self.unary_node(out, Op::Sigmoid(a), a)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(libm::tanh);
        self.unary_node(out, Op::Tanh(a), a)
    }

    /// Applies a caller-supplied pointwise function with its own gradient rule.
    pub fn map(&mut self, a: Var, f: Unary) -> Var {
        let out = self.value(a).map(f.value);
        self.unary_node(out, Op::Map(a, f), a)
    }

    pub fn row_softmax(&mut self, a: Var) -> Var {
        let out = tensor::row_softmax(self.value(a));
        self.unary_node(out, Op::RowSoftmax(a), a)
    }

    pub fn concat(&mut self, a: Var, b: Var, axis: Axis) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let out = match axis {
            Axis::Rows => {
                if ta.cols() != tb.cols() {
                    return Err(shape_err("concat(rows)", ta, tb));
                }
                let mut data = Vec::with_capacity(ta.len() + tb.len());
                data.extend_from_slice(ta.data());
                data.extend_from_slice(tb.data());
                Tensor::new(ta.rows() + tb.rows(), ta.cols(), data)?
            }
            Axis::Cols => {
                if ta.rows() != tb.rows() {
                    return Err(shape_err("concat(cols)", ta, tb));
                }
                let mut data = Vec::with_capacity(ta.len() + tb.len());
                for r in 0..ta.rows() {
                    data.extend_from_slice(ta.row_slice(r));
                    data.extend_from_slice(tb.row_slice(r));
                }
                Tensor::new(ta.rows(), ta.cols() + tb.cols(), data)?
            }
        };
        Ok(self.binary_node(out, Op::Concat(a, b, axis), a, b))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let ta = self.value(a);
        if start + len > ta.rows() {
            return Err(Error::IndexOutOfRange {
                what: "row slice end",
                index: start + len,
                bound: ta.rows(),
            });
        }
        let c = ta.cols();
        let out = Tensor::new(len, c, ta.data()[start * c..(start + len) * c].to_vec())?;
        Ok(self.unary_node(out, Op::SliceRows(a, start), a))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let ta = self.value(a);
        if start + len > ta.cols() {
            return Err(Error::IndexOutOfRange {
                what: "column slice end",
                index: start + len,
                bound: ta.cols(),
            });
        }
        let mut data = Vec::with_capacity(ta.rows() * len);
        for r in 0..ta.rows() {
            data.extend_from_slice(&ta.row_slice(r)[start..start + len]);
        }
        let out = Tensor::new(ta.rows(), len, data)?;
        Ok(self.unary_node(out, Op::SliceCols(a, start), a))
    }

    /// Embedding lookup: row `i` of the result is row `indices[i]` of `table`.
    pub fn gather_rows(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let t = self.value(table);
        let mut data = Vec::with_capacity(indices.len() * t.cols());
        for &i in indices {
            if i >= t.rows() {
                return Err(Error::IndexOutOfRange {
                    what: "embedding",
                    index: i,
                    bound: t.rows(),
                });
            }
            data.extend_from_slice(t.row_slice(i));
        }
        let out = Tensor::new(indices.len(), t.cols(), data)?;
        Ok(self.unary_node(out, Op::Gather(table, indices.to_vec()), table))
    }

    /// Stacks `count` copies of the `1 x n` row `a`.
    pub fn repeat_rows(&mut self, a: Var, count: usize) -> Result<Var> {
        let ta = self.value(a);
        if ta.rows() != 1 {
            return Err(Error::Shape {
                op: "repeat_rows",
                left: ta.shape(),
                right: [1, ta.cols()],
            });
        }
        let mut data = Vec::with_capacity(count * ta.cols());
        for _ in 0..count {
            data.extend_from_slice(ta.data());
        }
        let out = Tensor::new(count, ta.cols(), data)?;
        Ok(self.unary_node(out, Op::RepeatRows(a), a))
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let out = self.value(a).clone().reshaped(rows, cols)?;
        Ok(self.unary_node(out, Op::Reshape(a), a))
    }

    /// Inverted dropout: survivors are scaled by `1 / (1 - rate)`. Passing
    /// `None` for the generator (inference) records an identity.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        a: Var,
        rate: f64,
        rng: Option<&mut R>,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidRate(rate));
        }
        let rng = match rng {
            Some(rng) if rate > 0.0 => rng,
            _ => return Ok(a),
        };
        let keep = 1.0 / (1.0 - rate);
        let ta = self.value(a);
        let mask: Vec<f64> = (0..ta.len())
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let data = ta.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let out = Tensor::new(ta.rows(), ta.cols(), data)?;
        Ok(self.unary_node(out, Op::Dropout(a, mask), a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        self.unary_node(out, Op::Sum(a), a)
    }

    pub fn sum_squares(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum_squares());
        self.unary_node(out, Op::SumSquares(a), a)
    }

    /// Per-row matrix-vector product. Row `i` of `w` holds a row-major
    /// `p x q` matrix that is applied to row `i` of `h` (`n x q`), giving
    /// an `n x p` result.
    pub fn rowwise_matvec(&mut self, w: Var, h: Var) -> Result<Var> {
        let (tw, th) = (self.value(w), self.value(h));
        let q = th.cols();
        if tw.rows() != th.rows() || q == 0 || tw.cols() % q != 0 {
            return Err(shape_err("rowwise_matvec", tw, th));
        }
        let p = tw.cols() / q;
        let mut out = Tensor::zeros(th.rows(), p);
        for i in 0..th.rows() {
            let hrow = th.row_slice(i);
            let wrow = tw.row_slice(i);
            for j in 0..p {
                out.set(i, j, tensor::dot(&wrow[j * q..(j + 1) * q], hrow));
            }
        }
        Ok(self.binary_node(out, Op::RowwiseMatvec(w, h), w, h))
    }

    /// Mean over rows with a known target of `logsumexp(row) - row[target]`.
    /// Rows whose target is `None` are left out of the mean.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[Option<usize>]) -> Result<Var> {
        let t = self.value(logits);
        if targets.len() != t.rows() {
            return Err(Error::Shape {
                op: "cross_entropy",
                left: t.shape(),
                right: [targets.len(), 1],
            });
        }
        let mut total = 0.0;
        let mut count = 0usize;
        for (r, target) in targets.iter().enumerate() {
            let Some(target) = *target else { continue };
            if target >= t.cols() {
                return Err(Error::IndexOutOfRange {
                    what: "target location",
                    index: target,
                    bound: t.cols(),
                });
            }
            let row = t.row_slice(r);
            total += tensor::log_sum_exp(row) - row[target];
            count += 1;
        }
        if count == 0 {
            return Err(Error::AllTargetsUnknown);
        }
        let out = Tensor::scalar(total / count as f64);
        Ok(self.unary_node(out, Op::CrossEntropy(logits, targets.to_vec()), logits))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let shape = self.value(loss).shape();
        if shape != [1, 1] {
            return Err(Error::NonScalarLoss(shape));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], target: Var, contribution: Tensor) {
        if !self.nodes[target.0].requires_grad {
            return;
        }
        match &mut grads[target.0] {
            Some(existing) => existing.add_assign(&contribution),
            slot @ None => *slot = Some(contribution),
        }
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.requires_grad(*a) {
                    let ga = tensor::matmul_bt(g, self.value(*b))?;
                    self.accumulate(grads, *a, ga);
                }
                if self.requires_grad(*b) {
                    let gb = tensor::matmul_at(self.value(*a), g)?;
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::MatMulBt(a, b) => {
                if self.requires_grad(*a) {
                    let ga = tensor::matmul(g, self.value(*b))?;
                    self.accumulate(grads, *a, ga);
                }
                if self.requires_grad(*b) {
                    let gb = tensor::matmul_at(g, self.value(*a))?;
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.map(|v| -v));
            }
            Op::Hadamard(a, b) => {
                let ga = g.zip_map(self.value(*b), |x, y| x * y);
                let gb = g.zip_map(self.value(*a), |x, y| x * y);
                self.accumulate(grads, *a, ga);
                self.accumulate(grads, *b, gb);
            }
            Op::AddRow(a, row) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *row, g.column_sums());
            }
            Op::Scale(a, factor) => {
                let f = *factor;
                self.accumulate(grads, *a, g.map(|v| v * f));
            }
            Op::AddScalar(a) => self.accumulate(grads, *a, g.clone()),
            Op::Sigmoid(a) => {
                let ga = g.zip_map(y, |gv, yv| gv * yv * (1.0 - yv));
                self.accumulate(grads, *a, ga);
            }
            Op::Tanh(a) => {
                let ga = g.zip_map(y, |gv, yv| gv * (1.0 - yv * yv));
                self.accumulate(grads, *a, ga);
            }
            Op::Map(a, f) => {
                let x = self.value(*a);
                let data = g
                    .data()
                    .iter()
                    .zip(x.data())
                    .zip(y.data())
                    .map(|((gv, xv), yv)| gv * (f.derivative)(*xv, *yv))
                    .collect();
                self.accumulate(grads, *a, Tensor::new(g.rows(), g.cols(), data)?);
            }
            Op::RowSoftmax(a) => {
                let mut ga = Tensor::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let (yr, gr) = (y.row_slice(r), g.row_slice(r));
                    let inner = tensor::dot(yr, gr);
                    for c in 0..y.cols() {
                        ga.set(r, c, yr[c] * (gr[c] - inner));
                    }
                }
                self.accumulate(grads, *a, ga);
            }
            Op::Concat(a, b, axis) => {
                let [ar, ac] = self.value(*a).shape();
                let [br, bc] = self.value(*b).shape();
                let (ga, gb) = match axis {
                    Axis::Rows => (
                        Tensor::new(ar, ac, g.data()[..ar * ac].to_vec())?,
                        Tensor::new(br, bc, g.data()[ar * ac..].to_vec())?,
                    ),
                    Axis::Cols => {
                        let mut da = Vec::with_capacity(ar * ac);
                        let mut db = Vec::with_capacity(br * bc);
                        for r in 0..g.rows() {
                            let row = g.row_slice(r);
                            da.extend_from_slice(&row[..ac]);
                            db.extend_from_slice(&row[ac..]);
                        }
                        (Tensor::new(ar, ac, da)?, Tensor::new(br, bc, db)?)
                    }
                };
                self.accumulate(grads, *a, ga);
                self.accumulate(grads, *b, gb);
            }
            Op::SliceRows(a, start) => {
                let src = self.value(*a);
                let mut ga = Tensor::zeros(src.rows(), src.cols());
                let c = src.cols();
                ga.data_mut()[start * c..start * c + g.len()].copy_from_slice(g.data());
                self.accumulate(grads, *a, ga);
            }
            Op::SliceCols(a, start) => {
                let src = self.value(*a);
                let mut ga = Tensor::zeros(src.rows(), src.cols());
                for r in 0..g.rows() {
                    for (c, v) in g.row_slice(r).iter().enumerate() {
                        ga.set(r, start + c, *v);
                    }
                }
                self.accumulate(grads, *a, ga);
            }
            Op::Gather(table, indices) => {
                let src = self.value(*table);
                let mut ga = Tensor::zeros(src.rows(), src.cols());
                let c = src.cols();
                for (r, &i) in indices.iter().enumerate() {
                    for (o, v) in ga.data_mut()[i * c..(i + 1) * c]
                        .iter_mut()
                        .zip(g.row_slice(r))
                    {
                        *o += v;
                    }
                }
                self.accumulate(grads, *table, ga);
            }
            Op::RepeatRows(a) => self.accumulate(grads, *a, g.column_sums()),
            Op::Reshape(a) => {
                let [r, c] = self.value(*a).shape();
                self.accumulate(grads, *a, g.clone().reshaped(r, c)?);
            }
            Op::Dropout(a, mask) => {
                let data = g.data().iter().zip(mask).map(|(x, m)| x * m).collect();
                self.accumulate(grads, *a, Tensor::new(g.rows(), g.cols(), data)?);
            }
            Op::Sum(a) => {
                let [r, c] = self.value(*a).shape();
                self.accumulate(grads, *a, Tensor::filled(r, c, g.data()[0]));
            }
            Op::SumSquares(a) => {
                let s = 2.0 * g.data()[0];
                let ga = self.value(*a).map(|x| s * x);
                self.accumulate(grads, *a, ga);
            }
            Op::RowwiseMatvec(w, h) => {
                let (tw, th) = (self.value(*w), self.value(*h));
                let q = th.cols();
                let p = g.cols();
                if self.requires_grad(*w) {
                    let mut gw = Tensor::zeros(tw.rows(), tw.cols());
                    for i in 0..th.rows() {
                        let hrow = th.row_slice(i);
                        let grow = g.row_slice(i);
                        let out = &mut gw.data_mut()[i * p * q..(i + 1) * p * q];
                        for j in 0..p {
                            for k in 0..q {
                                out[j * q + k] = grow[j] * hrow[k];
                            }
                        }
                    }
                    self.accumulate(grads, *w, gw);
                }
                if self.requires_grad(*h) {
                    let mut gh = Tensor::zeros(th.rows(), q);
                    for i in 0..th.rows() {
                        let wrow = tw.row_slice(i);
                        let grow = g.row_slice(i);
                        let out = &mut gh.data_mut()[i * q..(i + 1) * q];
                        for j in 0..p {
                            let gj = grow[j];
                            for (o, wv) in out.iter_mut().zip(&wrow[j * q..(j + 1) * q]) {
                                *o += gj * wv;
                            }
                        }
                    }
                    self.accumulate(grads, *h, gh);
                }
            }
            Op::CrossEntropy(logits, targets) => {
                let x = self.value(*logits);
                let count = targets.iter().filter(|t| t.is_some()).count() as f64;
                let scale = g.data()[0] / count;
                let mut gx = Tensor::zeros(x.rows(), x.cols());
                for (r, target) in targets.iter().enumerate() {
                    let Some(target) = *target else { continue };
                    let mut probs = x.row_slice(r).to_vec();
                    tensor::softmax_in_place(&mut probs);
                    probs[target] -= 1.0;
                    for (c, p) in probs.iter().enumerate() {
                        gx.set(r, c, p * scale);
                    }
                }
                self.accumulate(grads, *logits, gx);
            }
        }
        Ok(())
    }
}
