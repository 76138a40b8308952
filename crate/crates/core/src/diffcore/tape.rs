use rand::Rng;

use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

/// Variance guard inside the square root of `standardize_rows`.
pub const STANDARDIZE_EPS: f64 = 1e-5;

/// Floor applied to the probability inside `nll`.
pub const NLL_PROB_FLOOR: f64 = 1e-12;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRowBias(Var, Var),
    AddScalar(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    MeanRows(Var),
    ConcatCols(Vec<Var>),
    Transpose(Var),
    StandardizeRows { x: Var, inv_std: Vec<f64> },
    Dropout { x: Var, mask: Vec<f64> },
    RowSoftmax(Var),
    Nll { probs: Var, label: usize },
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[cfg(test)]
thread_local! {
    /// Flips the sign of the right-operand matmul pullback; used to check that
    /// gradient checking actually catches a broken rule.
    pub(crate) static FLIP_MATMUL_RHS_GRAD: std::cell::Cell<bool> = const { std::cell::Cell::new(false) };
}

/// Define-by-run computation record. Build a fresh tape per forward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient for `v`, or `None` when `v` does not reach the loss.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient for `v`; zeros when `v` is disconnected from the loss.
    pub fn wrt(&self, v: Var) -> Tensor {
        match self.get(v) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Tensor::zeros(r, c)
            }
        }
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

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(shape_err("add", x, y));
        }
        let mut out = x.clone();
        out.add_assign(y);
        Ok(self.push(out, Op::Add(a, b)))
    }

    /// Adds a `1 x cols` bias to every row of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(bias));
        if bv.rows() != 1 || bv.cols() != xv.cols() {
            return Err(shape_err("add_bias", xv, bv));
        }
        let mut out = xv.clone();
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(bv.as_slice()) {
                *o += b;
            }
        }
        Ok(self.push(out, Op::AddRowBias(x, bias)))
    }

    /// Adds a `1 x 1` value to every element of `x`.
    pub fn add_scalar(&mut self, x: Var, s: Var) -> Result<Var> {
        let (xv, sv) = (self.value(x), self.value(s));
        if sv.shape() != (1, 1) {
            return Err(shape_err("add_scalar", xv, sv));
        }
        let c = sv.get(0, 0);
        let out = xv.map(|v| v + c);
        Ok(self.push(out, Op::AddScalar(x, s)))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let out = self.value(x).map(|v| v * c);
        self.push(out, Op::Scale(x, c))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).map(f64::tanh);
        self.push(out, Op::Tanh(x))
    }

    /// Column-wise mean over rows: `T x c -> 1 x c`.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv.rows() == 0 {
            return Err(Error::Shape {
                op: "mean_rows",
                left: xv.shape(),
                right: (1, xv.cols()),
            });
        }
        let mut out = Tensor::zeros(1, xv.cols());
        for r in 0..xv.rows() {
            for (o, v) in out.as_mut_slice().iter_mut().zip(xv.row(r)) {
                *o += v;
            }
        }
        out.scale_in_place(1.0 / xv.rows() as f64);
        Ok(self.push(out, Op::MeanRows(x)))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::Config("concat_cols needs at least one input".into()));
        };
        let rows = self.value(first).rows();
        let mut cols = 0;
        for &p in parts {
            let v = self.value(p);
            if v.rows() != rows {
                return Err(shape_err("concat_cols", self.value(first), v));
            }
            cols += v.cols();
        }
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for &p in parts {
                let src = self.value(p).row(r);
                out.row_mut(r)[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let out = self.value(x).transpose();
        self.push(out, Op::Transpose(x))
    }

    /// Per-row zero mean / unit variance, `eps` inside the square root, no affine.
    pub fn standardize_rows(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let n = xv.cols() as f64;
        let mut out = Tensor::zeros(xv.rows(), xv.cols());
        let mut inv_std = Vec::with_capacity(xv.rows());
        for r in 0..xv.rows() {
            let row = xv.row(r);
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let is = 1.0 / (var + STANDARDIZE_EPS).sqrt();
            for (o, v) in out.row_mut(r).iter_mut().zip(row) {
                *o = (v - mean) * is;
            }
            inv_std.push(is);
        }
        self.push(out, Op::StandardizeRows { x, inv_std })
    }

    /// Inverted dropout: survivors are scaled by `1 / (1 - rate)` in training,
    /// evaluation is the identity (no node is recorded).
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        x: Var,
        rate: f64,
        rng: &mut R,
        training: bool,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate {rate} not in [0, 1)")));
        }
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - rate);
        let xv = self.value(x);
        let mask: Vec<f64> = (0..xv.len())
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let mut out = xv.clone();
        for (o, m) in out.as_mut_slice().iter_mut().zip(&mask) {
            *o *= m;
        }
        Ok(self.push(out, Op::Dropout { x, mask }))
    }

    /// Softmax along each row, max-subtracted.
    pub fn row_softmax(&mut self, x: Var) -> Var {
        let out = softmax_rows(self.value(x));
        self.push(out, Op::RowSoftmax(x))
    }

    /// `-ln(max(p[label], 1e-12))` for a `1 x n` probability row.
    pub fn nll(&mut self, probs: Var, label: usize) -> Result<Var> {
        let p = self.value(probs);
        if p.rows() != 1 {
            return Err(Error::Shape {
                op: "nll",
                left: p.shape(),
                right: (1, p.cols()),
            });
        }
        if label >= p.cols() {
            return Err(Error::Index {
                index: label,
                len: p.cols(),
            });
        }
        let loss = -p.get(0, label).max(NLL_PROB_FLOOR).ln();
        Ok(self.push(Tensor::scalar(loss), Op::Nll { probs, label }))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(Error::Shape {
                op: "backward",
                left: lv.shape(),
                right: (1, 1),
            });
        }
        let shapes: Vec<_> = self.nodes.iter().map(|n| n.value.shape()).collect();
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let Some(dy) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            self.pullback(node, &dy, &mut grads, &shapes);
            grads[i] = Some(dy);
        }
        Ok(Gradients { grads, shapes })
    }

    fn pullback(
        &self,
        node: &Node,
        dy: &Tensor,
        grads: &mut [Option<Tensor>],
        shapes: &[(usize, usize)],
    ) {
        fn slot<'g>(
            grads: &'g mut [Option<Tensor>],
            shapes: &[(usize, usize)],
            v: Var,
        ) -> &'g mut Tensor {
            grads[v.0].get_or_insert_with(|| {
                let (r, c) = shapes[v.0];
                Tensor::zeros(r, c)
            })
        }

        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                // dA = dC * B^T
                let ga = slot(grads, shapes, *a);
                gemm(m, n, k, 1.0, dy.as_slice(), false, bv.as_slice(), true, 1.0, ga.as_mut_slice());
                // dB = A^T * dC
                #[allow(unused_mut)]
                let mut alpha = 1.0;
                #[cfg(test)]
                if FLIP_MATMUL_RHS_GRAD.with(|f| f.get()) {
                    alpha = -1.0;
                }
                let gb = slot(grads, shapes, *b);
                gemm(k, m, n, alpha, av.as_slice(), true, dy.as_slice(), false, 1.0, gb.as_mut_slice());
            }
            Op::Add(a, b) => {
                slot(grads, shapes, *a).add_assign(dy);
                slot(grads, shapes, *b).add_assign(dy);
            }
            Op::AddRowBias(x, b) => {
                slot(grads, shapes, *x).add_assign(dy);
                let gb = slot(grads, shapes, *b);
                for r in 0..dy.rows() {
                    for (g, d) in gb.as_mut_slice().iter_mut().zip(dy.row(r)) {
                        *g += d;
                    }
                }
            }
            Op::AddScalar(x, s) => {
                slot(grads, shapes, *x).add_assign(dy);
                let total = dy.sum();
                slot(grads, shapes, *s).as_mut_slice()[0] += total;
            }
            Op::Scale(x, c) => {
                let gx = slot(grads, shapes, *x);
                for (g, d) in gx.as_mut_slice().iter_mut().zip(dy.as_slice()) {
                    *g += c * d;
                }
            }
            Op::Tanh(x) => {
                let gx = slot(grads, shapes, *x);
                for ((g, d), t) in gx.as_mut_slice().iter_mut().zip(dy.as_slice()).zip(y.as_slice()) {
                    *g += d * (1.0 - t * t);
                }
            }
            Op::MeanRows(x) => {
                let gx = slot(grads, shapes, *x);
                let inv = 1.0 / gx.rows() as f64;
                for r in 0..gx.rows() {
                    for (g, d) in gx.row_mut(r).iter_mut().zip(dy.as_slice()) {
                        *g += d * inv;
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for p in parts {
                    let gp = slot(grads, shapes, *p);
                    let w = gp.cols();
                    for r in 0..gp.rows() {
                        for (g, d) in gp.row_mut(r).iter_mut().zip(&dy.row(r)[off..off + w]) {
                            *g += d;
                        }
                    }
                    off += w;
                }
            }
            Op::Transpose(x) => {
                slot(grads, shapes, *x).add_assign(&dy.transpose());
            }
            Op::StandardizeRows { x, inv_std } => {
                let gx = slot(grads, shapes, *x);
                let n = y.cols() as f64;
                for r in 0..y.rows() {
                    let (yr, dr) = (y.row(r), dy.row(r));
                    let mean_d = dr.iter().sum::<f64>() / n;
                    let mean_dy = dr.iter().zip(yr).map(|(d, v)| d * v).sum::<f64>() / n;
                    let is = inv_std[r];
                    for ((g, d), v) in gx.row_mut(r).iter_mut().zip(dr).zip(yr) {
                        *g += is * (d - mean_d - v * mean_dy);
                    }
                }
            }
            Op::Dropout { x, mask } => {
                let gx = slot(grads, shapes, *x);
                for ((g, d), m) in gx.as_mut_slice().iter_mut().zip(dy.as_slice()).zip(mask) {
                    *g += d * m;
                }
            }
            Op::RowSoftmax(x) => {
                let gx = slot(grads, shapes, *x);
                for r in 0..y.rows() {
                    let (yr, dr) = (y.row(r), dy.row(r));
                    let dot: f64 = yr.iter().zip(dr).map(|(a, b)| a * b).sum();
                    for ((g, d), v) in gx.row_mut(r).iter_mut().zip(dr).zip(yr) {
                        *g += v * (d - dot);
                    }
                }
            }
            Op::Nll { probs, label } => {
                let p = self.value(*probs).get(0, *label);
                if p > NLL_PROB_FLOOR {
                    let gp = slot(grads, shapes, *probs);
                    gp.as_mut_slice()[*label] -= dy.get(0, 0) / p;
                }
            }
            Op::Sum(x) => {
                let d = dy.get(0, 0);
                for g in slot(grads, shapes, *x).as_mut_slice() {
                    *g += d;
                }
            }
        }
    }
}

/// Numerically stable softmax applied to each row independently.
pub fn softmax_rows(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out
}
