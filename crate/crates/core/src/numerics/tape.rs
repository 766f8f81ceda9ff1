//! Reverse-mode differentiation over dense matrices.
//!
//! Every operation appends a node holding its forward value and the
//! indices of its inputs. [`Tape::backward`] consumes the tape and walks
//! the nodes in reverse, applying one hand-written adjoint rule per op.
//! Leaves created with [`Tape::var`] receive gradients; leaves created
//! with [`Tape::constant`] do not, and nothing that depends only on
//! constants is visited during the backward sweep.

use crate::error::{Error, Result};

use super::matrix::{dot, Matrix};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Inputs to `exp` are clamped here so the output stays finite.
const EXP_CLAMP: f64 = 700.0;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    MatMulT(usize, usize),
    Transpose(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    Affine(usize, f64),
    Sigmoid(usize),
    Tanh(usize),
    Relu(usize),
    Exp(usize),
    Log(usize),
    ConcatCols(Vec<usize>),
    SumRows(usize),
    SumCols(usize),
    Sum(usize),
    Mean(usize),
    GatherRows(usize, Vec<usize>),
    Pick(usize, Vec<(usize, usize)>),
    NormalizeRows(usize),
    SoftmaxRows(usize),
    MulConst(usize, Matrix),
    RepeatCols(usize, usize),
    TileCols(usize, usize),
    FoldCols(usize, usize),
    BceLogits(usize, Vec<f64>),
}

#[derive(Debug, Clone)]
struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

/// Elementwise nonlinearity selector used by layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Identity,
}

#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar loss with respect to every differentiable leaf.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient for `v`, or zeros of the right shape when the loss does not depend on it.
    pub fn wrt(&self, v: Var) -> Matrix {
        match self.get(v) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Matrix::zeros(r, c)
            }
        }
    }

    pub fn take(&mut self, v: Var) -> Matrix {
        match self.grads[v.0].take() {
            Some(g) => g,
            None => {
                let (r, c) = self.shapes[v.0];
                Matrix::zeros(r, c)
            }
        }
    }
}

fn check_same(op: &'static str, a: &Matrix, b: &Matrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::dim(op, a.shape(), b.shape()));
    }
    Ok(())
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid_scalar(x: f64) -> f64 {
    sigmoid(x)
}

fn row_norm(r: &[f64]) -> f64 {
    dot(r, r).sqrt()
}

const NORM_FLOOR: f64 = 1e-12;

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

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: usize) -> bool {
        self.nodes[v].requires_grad
    }

    fn unary(&mut self, a: Var, value: Matrix, op: Op) -> Var {
        let rg = self.rg(a.0);
        self.push(value, op, rg)
    }

    /// Differentiable leaf.
    pub fn var(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a.0) || self.rg(b.0);
        Ok(self.push(value, Op::MatMul(a.0, b.0), rg))
    }

    /// `a * b^T`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul_t(self.value(b))?;
        let rg = self.rg(a.0) || self.rg(b.0);
        Ok(self.push(value, Op::MatMulT(a.0, b.0), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        self.unary(a, value, Op::Transpose(a.0))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        let rg = self.rg(a.0) || self.rg(b.0);
        Ok(self.push(value, Op::Add(a.0, b.0), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).sub(self.value(b))?;
        let rg = self.rg(a.0) || self.rg(b.0);
        Ok(self.push(value, Op::Sub(a.0, b.0), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).hadamard(self.value(b))?;
        let rg = self.rg(a.0) || self.rg(b.0);
        Ok(self.push(value, Op::Mul(a.0, b.0), rg))
    }

    /// Adds a `1 x c` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (am, rm) = (self.value(a), self.value(row));
        if rm.rows() != 1 || rm.cols() != am.cols() {
            return Err(Error::dim("add_row", am.shape(), rm.shape()));
        }
        let mut value = am.clone();
        for r in 0..value.rows() {
            for (v, b) in value.row_mut(r).iter_mut().zip(rm.as_slice()) {
                *v += b;
            }
        }
        let rg = self.rg(a.0) || self.rg(row.0);
        Ok(self.push(value, Op::AddRow(a.0, row.0), rg))
    }

    /// `scale * a + shift`.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Var {
        let value = self.value(a).map(|v| scale * v + shift);
        self.unary(a, value, Op::Affine(a.0, scale))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.affine(a, s, 0.0)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        self.unary(a, value, Op::Sigmoid(a.0))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        self.unary(a, value, Op::Tanh(a.0))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| v.max(0.0));
        self.unary(a, value, Op::Relu(a.0))
    }

    pub fn activate(&mut self, a: Var, act: Activation) -> Var {
        match act {
            Activation::Relu => self.relu(a),
            Activation::Tanh => self.tanh(a),
            Activation::Sigmoid => self.sigmoid(a),
            Activation::Identity => a,
        }
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| v.min(EXP_CLAMP).exp());
        self.unary(a, value, Op::Exp(a.0))
    }

    /// Natural log; inputs are floored at the smallest positive normal.
    pub fn log(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| v.max(f64::MIN_POSITIVE).ln());
        self.unary(a, value, Op::Log(a.0))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let mats: Vec<&Matrix> = parts.iter().map(|p| self.value(*p)).collect();
        let value = Matrix::concat_cols(&mats)?;
        let rg = parts.iter().any(|p| self.rg(p.0));
        Ok(self.push(value, Op::ConcatCols(parts.iter().map(|p| p.0).collect()), rg))
    }

    /// Column-wise sum over rows: `r x c -> 1 x c`.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let value = self.value(a).sum_rows();
        self.unary(a, value, Op::SumRows(a.0))
    }

    /// Row-wise sum over columns: `r x c -> r x 1`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let data = (0..m.rows()).map(|r| m.row(r).iter().sum()).collect();
        let value = Matrix::from_vec(m.rows(), 1, data).expect("shape");
        self.unary(a, value, Op::SumCols(a.0))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Matrix::scalar(self.value(a).sum());
        self.unary(a, value, Op::Sum(a.0))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let m = self.value(a);
        if m.is_empty() {
            return Err(Error::Contract("mean of an empty matrix".into()));
        }
        let value = Matrix::scalar(m.sum() / m.len() as f64);
        Ok(self.unary(a, value, Op::Mean(a.0)))
    }

    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let m = self.value(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= m.rows()) {
            return Err(Error::dim("gather_rows", m.shape(), (bad, 0)));
        }
        let value = m.select_rows(idx);
        Ok(self.unary(a, value, Op::GatherRows(a.0, idx.to_vec())))
    }

    /// Picks individual entries into a `k x 1` column.
    pub fn pick(&mut self, a: Var, coords: &[(usize, usize)]) -> Result<Var> {
        let m = self.value(a);
        let mut data = Vec::with_capacity(coords.len());
        for &(r, c) in coords {
            if r >= m.rows() || c >= m.cols() {
                return Err(Error::dim("pick", m.shape(), (r, c)));
            }
            data.push(m.get(r, c));
        }
        let value = Matrix::from_vec(coords.len(), 1, data)?;
        Ok(self.unary(a, value, Op::Pick(a.0, coords.to_vec())))
    }

    /// Scales each row to unit L2 norm. Rows with norm below `1e-12` map to zero.
    pub fn normalize_rows(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let mut value = m.clone();
        for r in 0..value.rows() {
            let n = row_norm(m.row(r));
            let row = value.row_mut(r);
            if n < NORM_FLOOR {
                row.iter_mut().for_each(|v| *v = 0.0);
            } else {
                row.iter_mut().for_each(|v| *v /= n);
            }
        }
        self.unary(a, value, Op::NormalizeRows(a.0))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let mut value = m.clone();
        for r in 0..value.rows() {
            let row = value.row_mut(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                z += *v;
            }
            row.iter_mut().for_each(|v| *v /= z);
        }
        self.unary(a, value, Op::SoftmaxRows(a.0))
    }

    /// Elementwise product with a constant matrix (masks, fixed weights).
    pub fn mul_const(&mut self, a: Var, mask: Matrix) -> Result<Var> {
        check_same("mul_const", self.value(a), &mask)?;
        let value = self.value(a).hadamard(&mask)?;
        Ok(self.unary(a, value, Op::MulConst(a.0, mask)))
    }

    /// Repeats every column `k` times in place: column `i` becomes columns `i*k .. i*k+k`.
    pub fn repeat_cols(&mut self, a: Var, k: usize) -> Var {
        let m = self.value(a);
        let mut value = Matrix::zeros(m.rows(), m.cols() * k);
        for r in 0..m.rows() {
            for (c, &v) in m.row(r).iter().enumerate() {
                value.row_mut(r)[c * k..(c + 1) * k].iter_mut().for_each(|d| *d = v);
            }
        }
        self.unary(a, value, Op::RepeatCols(a.0, k))
    }

    /// Places `n` copies of `a` side by side.
    pub fn tile_cols(&mut self, a: Var, n: usize) -> Var {
        let m = self.value(a);
        let d = m.cols();
        let mut value = Matrix::zeros(m.rows(), d * n);
        for r in 0..m.rows() {
            for i in 0..n {
                value.row_mut(r)[i * d..(i + 1) * d].copy_from_slice(m.row(r));
            }
        }
        self.unary(a, value, Op::TileCols(a.0, n))
    }

    /// Sums `n` equal-width column blocks: `r x (n*d) -> r x d`.
    pub fn fold_cols(&mut self, a: Var, n: usize) -> Result<Var> {
        let m = self.value(a);
        if n == 0 || m.cols() % n != 0 {
            return Err(Error::dim("fold_cols", m.shape(), (n, 0)));
        }
        let d = m.cols() / n;
        let mut value = Matrix::zeros(m.rows(), d);
        for r in 0..m.rows() {
            let src = m.row(r);
            let dst = value.row_mut(r);
            for i in 0..n {
                for (o, &v) in dst.iter_mut().zip(&src[i * d..(i + 1) * d]) {
                    *o += v;
                }
            }
        }
        Ok(self.unary(a, value, Op::FoldCols(a.0, n)))
    }

    /// Summed binary cross-entropy of `sigmoid(logits)` against `targets`.
    /// `logits` must be a `k x 1` column with `k == targets.len()`.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[f64]) -> Result<Var> {
        let m = self.value(logits);
        if m.cols() != 1 || m.rows() != targets.len() {
            return Err(Error::dim("bce_with_logits", m.shape(), (targets.len(), 1)));
        }
        let loss: f64 = m
            .as_slice()
            .iter()
            .zip(targets)
            .map(|(&x, &t)| x.max(0.0) - x * t + (-x.abs()).exp().ln_1p())
            .sum();
        Ok(self.unary(
            logits,
            Matrix::scalar(loss),
            Op::BceLogits(logits.0, targets.to_vec()),
        ))
    }

    /// Reverse sweep from a `1 x 1` loss. Consumes the tape.
    pub fn backward(self, loss: Var) -> Result<Gradients> {
        let shape = self.shape(loss);
        if shape != (1, 1) {
            return Err(Error::Contract(format!(
                "backward requires a scalar (1x1) loss, got {}x{}",
                shape.0, shape.1
            )));
        }
        let n = self.nodes.len();
        let shapes: Vec<(usize, usize)> = self.nodes.iter().map(|n| n.value.shape()).collect();
        let mut grads: Vec<Option<Matrix>> = vec![None; n];
        grads[loss.0] = Some(Matrix::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads)?;
        }

        // keep only differentiable leaves
        for (i, node) in self.nodes.iter().enumerate() {
            if !(matches!(node.op, Op::Leaf) && node.requires_grad) {
                grads[i] = None;
            }
        }
        Ok(Gradients { grads, shapes })
    }

    fn propagate(&self, i: usize, g: &Matrix, grads: &mut [Option<Matrix>]) -> Result<()> {
        let nodes = &self.nodes;
        let out = &nodes[i].value;
        let slot = |grads: &mut [Option<Matrix>], p: usize| -> Option<usize> {
            if nodes[p].requires_grad {
                if grads[p].is_none() {
                    let (r, c) = nodes[p].value.shape();
                    grads[p] = Some(Matrix::zeros(r, c));
                }
                Some(p)
            } else {
                None
            }
        };
        macro_rules! acc {
            ($p:expr, $contrib:expr) => {
                if let Some(p) = slot(grads, $p) {
                    let c: Matrix = $contrib;
                    grads[p].as_mut().unwrap().add_assign(&c)?;
                }
            };
        }
        macro_rules! acc_elem {
            ($p:expr, |$idx:ident, $gv:ident| $body:expr) => {
                if let Some(p) = slot(grads, $p) {
                    let buf = grads[p].as_mut().unwrap().as_mut_slice();
                    for ($idx, (dst, &$gv)) in buf.iter_mut().zip(g.as_slice()).enumerate() {
                        *dst += $body;
                    }
                }
            };
        }

        match &nodes[i].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (a, b) = (*a, *b);
                acc!(a, g.matmul_t(&nodes[b].value)?);
                acc!(b, nodes[a].value.t_matmul(g)?);
            }
            Op::MatMulT(a, b) => {
                let (a, b) = (*a, *b);
                acc!(a, g.matmul(&nodes[b].value)?);
                acc!(b, g.t_matmul(&nodes[a].value)?);
            }
            Op::Transpose(a) => acc!(*a, g.transpose()),
            Op::Add(a, b) => {
                acc_elem!(*a, |_k, gv| gv);
                acc_elem!(*b, |_k, gv| gv);
            }
            Op::Sub(a, b) => {
                acc_elem!(*a, |_k, gv| gv);
                acc_elem!(*b, |_k, gv| -gv);
            }
            Op::Mul(a, b) => {
                let (a, b) = (*a, *b);
                let av = nodes[a].value.as_slice();
                let bv = nodes[b].value.as_slice();
                acc_elem!(a, |k, gv| gv * bv[k]);
                acc_elem!(b, |k, gv| gv * av[k]);
            }
            Op::AddRow(a, row) => {
                acc_elem!(*a, |_k, gv| gv);
                acc!(*row, g.sum_rows());
            }
            Op::Affine(a, s) => {
                let s = *s;
                acc_elem!(*a, |_k, gv| gv * s);
            }
            Op::Sigmoid(a) => {
                let y = out.as_slice();
                acc_elem!(*a, |k, gv| gv * y[k] * (1.0 - y[k]));
            }
            Op::Tanh(a) => {
                let y = out.as_slice();
                acc_elem!(*a, |k, gv| gv * (1.0 - y[k] * y[k]));
            }
            Op::Relu(a) => {
                let y = out.as_slice();
                acc_elem!(*a, |k, gv| if y[k] > 0.0 { gv } else { 0.0 });
            }
            Op::Exp(a) => {
                let x = nodes[*a].value.as_slice();
                let y = out.as_slice();
                acc_elem!(*a, |k, gv| if x[k] > EXP_CLAMP { 0.0 } else { gv * y[k] });
            }
            Op::Log(a) => {
                let x = nodes[*a].value.as_slice();
                acc_elem!(*a, |k, gv| gv / x[k].max(f64::MIN_POSITIVE));
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let pc = nodes[p].value.cols();
                    if let Some(p) = slot(grads, p) {
                        let dst = grads[p].as_mut().unwrap();
                        for r in 0..g.rows() {
                            for (d, &gv) in dst.row_mut(r).iter_mut().zip(&g.row(r)[off..off + pc]) {
                                *d += gv;
                            }
                        }
                    }
                    off += pc;
                }
            }
            Op::SumRows(a) => {
                if let Some(p) = slot(grads, *a) {
                    let dst = grads[p].as_mut().unwrap();
                    for r in 0..dst.rows() {
                        for (d, &gv) in dst.row_mut(r).iter_mut().zip(g.as_slice()) {
                            *d += gv;
                        }
                    }
                }
            }
            Op::SumCols(a) => {
                if let Some(p) = slot(grads, *a) {
                    let dst = grads[p].as_mut().unwrap();
                    for r in 0..dst.rows() {
                        let gv = g.get(r, 0);
                        dst.row_mut(r).iter_mut().for_each(|d| *d += gv);
                    }
                }
            }
            Op::Sum(a) => {
                let gv = g.get(0, 0);
                if let Some(p) = slot(grads, *a) {
                    grads[p].as_mut().unwrap().as_mut_slice().iter_mut().for_each(|d| *d += gv);
                }
            }
            Op::Mean(a) => {
                let n = nodes[*a].value.len() as f64;
                let gv = g.get(0, 0) / n;
                if let Some(p) = slot(grads, *a) {
                    grads[p].as_mut().unwrap().as_mut_slice().iter_mut().for_each(|d| *d += gv);
                }
            }
            Op::GatherRows(a, idx) => {
                if let Some(p) = slot(grads, *a) {
                    let dst = grads[p].as_mut().unwrap();
                    for (o, &src) in idx.iter().enumerate() {
                        for (d, &gv) in dst.row_mut(src).iter_mut().zip(g.row(o)) {
                            *d += gv;
                        }
                    }
                }
            }
            Op::Pick(a, coords) => {
                if let Some(p) = slot(grads, *a) {
                    let dst = grads[p].as_mut().unwrap();
                    for (o, &(r, c)) in coords.iter().enumerate() {
                        let cur = dst.get(r, c);
                        dst.set(r, c, cur + g.get(o, 0));
                    }
                }
            }
            Op::NormalizeRows(a) => {
                if let Some(p) = slot(grads, *a) {
                    let x = &nodes[*a].value;
                    let dst = grads[p].as_mut().unwrap();
                    for r in 0..x.rows() {
                        let n = row_norm(x.row(r));
                        if n < NORM_FLOOR {
                            continue;
                        }
                        let y = out.row(r);
                        let gr = g.row(r);
                        let yg = dot(y, gr);
                        for ((d, &gv), &yv) in dst.row_mut(r).iter_mut().zip(gr).zip(y) {
                            *d += (gv - yv * yg) / n;
                        }
                    }
                }
            }
            Op::SoftmaxRows(a) => {
                if let Some(p) = slot(grads, *a) {
                    let dst = grads[p].as_mut().unwrap();
                    for r in 0..out.rows() {
                        let y = out.row(r);
                        let gr = g.row(r);
                        let yg = dot(y, gr);
                        for ((d, &gv), &yv) in dst.row_mut(r).iter_mut().zip(gr).zip(y) {
                            *d += yv * (gv - yg);
                        }
                    }
                }
            }
            Op::MulConst(a, mask) => {
                let m = mask.as_slice();
                acc_elem!(*a, |k, gv| gv * m[k]);
            }
            Op::RepeatCols(a, k) => {
                let k = *k;
                if let Some(p) = slot(grads, *a) {
                    let dst = grads[p].as_mut().unwrap();
                    for r in 0..dst.rows() {
                        let gr = g.row(r);
                        for (c, d) in dst.row_mut(r).iter_mut().enumerate() {
                            *d += gr[c * k..(c + 1) * k].iter().sum::<f64>();
                        }
                    }
                }
            }
            Op::TileCols(a, n) => {
                let n = *n;
                if let Some(p) = slot(grads, *a) {
                    let dst = grads[p].as_mut().unwrap();
                    let d = dst.cols();
                    for r in 0..dst.rows() {
                        let gr = g.row(r);
                        for i in 0..n {
                            for (o, &gv) in dst.row_mut(r).iter_mut().zip(&gr[i * d..(i + 1) * d]) {
                                *o += gv;
                            }
                        }
                    }
                }
            }
            Op::FoldCols(a, n) => {
                let n = *n;
                if let Some(p) = slot(grads, *a) {
                    let dst = grads[p].as_mut().unwrap();
                    let d = g.cols();
                    for r in 0..dst.rows() {
                        let gr = g.row(r);
                        let row = dst.row_mut(r);
                        for i in 0..n {
                            for (o, &gv) in row[i * d..(i + 1) * d].iter_mut().zip(gr) {
                                *o += gv;
                            }
                        }
                    }
                }
            }
            Op::BceLogits(a, targets) => {
                let gv = g.get(0, 0);
                if let Some(p) = slot(grads, *a) {
                    let x = nodes[*a].value.as_slice();
                    let dst = grads[p].as_mut().unwrap().as_mut_slice();
                    for ((d, &xv), &t) in dst.iter_mut().zip(x).zip(targets) {
                        *d += gv * (sigmoid(xv) - t);
                    }
                }
            }
        }
        Ok(())
    }
}
