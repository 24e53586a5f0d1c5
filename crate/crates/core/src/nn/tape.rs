//! Reverse-mode automatic differentiation over dense 2-D tensors.
//!
//! Input derivatives of networks are written out as forward-mode expressions
//! built from tape operations, so the reverse pass differentiates through
//! them (derivatives of derivatives with respect to parameters).

use std::cell::RefCell;
use std::ops;
use std::rc::Rc;

use super::activation::Activation;
use crate::error::{Error, Result};

/// Diagonal jitter added to transition covariances before factorization.
pub const NLL_JITTER: f64 = 1e-8;

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len());
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn scalar(x: f64) -> Self {
        Self::new(1, 1, vec![x])
    }

    pub fn column(x: Vec<f64>) -> Self {
        Self::new(x.len(), 1, x)
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    fn same_shape(&self, o: &Tensor) -> bool {
        self.rows == o.rows && self.cols == o.cols
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor::new(self.rows, self.cols, self.data.iter().map(|&x| f(x)).collect())
    }

    fn zip(&self, o: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        assert!(self.same_shape(o), "shape {}x{} vs {}x{}", self.rows, self.cols, o.rows, o.cols);
        Tensor::new(
            self.rows,
            self.cols,
            self.data.iter().zip(&o.data).map(|(&a, &b)| f(a, b)).collect(),
        )
    }

    fn add_assign(&mut self, o: &Tensor) {
        assert!(self.same_shape(o));
        for (a, b) in self.data.iter_mut().zip(&o.data) {
            *a += b;
        }
    }

    fn sum(&self) -> f64 {
        self.data.iter().sum()
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Neg(usize),
    Scale(usize, f64),
    AddConst(usize),
    MulScalar(usize, usize),
    AddScalar(usize, usize),
    MulCol(usize, usize),
    MulRow(usize, usize),
    AddRow(usize, usize),
    Exp(usize),
    Ln(usize),
    Act(usize, Activation, usize),
    Constrain(usize, Rc<Vec<i8>>),
    MatMul(usize, usize),
    MatMulT(usize, usize),
    Transpose(usize),
    Gather(usize, Rc<Vec<usize>>),
    ScatterAdd(usize, Rc<Vec<usize>>),
    Cols(usize, usize),
    Concat(Vec<usize>),
    SumAll(usize),
    SumCols(usize),
    Broadcast(usize),
    GaussNll {
        sigma: usize,
        resid: usize,
        inv: Rc<Vec<f64>>,
        alpha: Rc<Vec<f64>>,
    },
}

struct Node {
    value: Rc<Tensor>,
    op: Op,
    needs_grad: bool,
}

/// Recording of a computation.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a tape node.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    pub id: usize,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op, needs_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            op,
            needs_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// Trainable leaf.
    pub fn param(&self, t: Tensor) -> Var<'_> {
        self.push(t, Op::Leaf, true)
    }

    /// Constant leaf (no gradient).
    pub fn constant(&self, t: Tensor) -> Var<'_> {
        self.push(t, Op::Leaf, false)
    }

    fn value(&self, id: usize) -> Rc<Tensor> {
        self.nodes.borrow()[id].value.clone()
    }

    fn needs(&self, id: usize) -> bool {
        self.nodes.borrow()[id].needs_grad
    }

    /// Gradients of the scalar `loss` with respect to every node.
    pub fn backward(&self, loss: Var<'_>) -> Gradients {
        let nodes = self.nodes.borrow();
        assert_eq!(nodes[loss.id].value.data.len(), 1, "loss must be scalar");
        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        grads[loss.id] = Some(Tensor::scalar(1.0));
        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            let y = &node.value;
            let val = |k: usize| nodes[k].value.clone();
            let mut acc = |k: usize, t: Tensor| {
                if !nodes[k].needs_grad {
                    return;
                }
                match &mut grads[k] {
                    Some(x) => x.add_assign(&t),
                    slot @ None => *slot = Some(t),
                }
            };
            match &node.op {
                Op::Leaf => {
                    grads[id] = Some(g);
                    continue;
                }
                Op::Add(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g);
                }
                Op::Sub(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g.map(|x| -x));
                }
                Op::Mul(a, b) => {
                    acc(*a, g.zip(&val(*b), |g, b| g * b));
                    acc(*b, g.zip(&val(*a), |g, a| g * a));
                }
                Op::Div(a, b) => {
                    let bv = val(*b);
                    acc(*a, g.zip(&bv, |g, b| g / b));
                    acc(*b, g.zip(y, |g, y| g * y).zip(&bv, |gy, b| -gy / b));
                }
                Op::Neg(a) => acc(*a, g.map(|x| -x)),
                Op::Scale(a, c) => acc(*a, g.map(|x| x * c)),
                Op::AddConst(a) => acc(*a, g),
                Op::MulScalar(a, s) => {
                    let sv = val(*s).item();
                    let av = val(*a);
                    acc(*s, Tensor::scalar(g.data.iter().zip(&av.data).map(|(g, a)| g * a).sum()));
                    acc(*a, g.map(|x| x * sv));
                }
                Op::AddScalar(a, s) => {
                    acc(*s, Tensor::scalar(g.sum()));
                    acc(*a, g);
                }
                Op::MulCol(a, c) => {
                    let av = val(*a);
                    let cv = val(*c);
                    let mut gc = Tensor::zeros(cv.rows, 1);
                    let mut ga = g.clone();
                    for r in 0..g.rows {
                        let mut s = 0.0;
                        for k in 0..g.cols {
                            s += g.at(r, k) * av.at(r, k);
                            ga.data[r * g.cols + k] *= cv.data[r];
                        }
                        gc.data[r] = s;
                    }
                    acc(*a, ga);
                    acc(*c, gc);
                }
                Op::MulRow(a, rw) => {
                    let av = val(*a);
                    let rv = val(*rw);
                    let mut gr = Tensor::zeros(1, rv.cols);
                    let mut ga = g.clone();
                    for r in 0..g.rows {
                        for k in 0..g.cols {
                            gr.data[k] += g.at(r, k) * av.at(r, k);
                            ga.data[r * g.cols + k] *= rv.data[k];
                        }
                    }
                    acc(*a, ga);
                    acc(*rw, gr);
                }
                Op::AddRow(a, rw) => {
                    let mut gr = Tensor::zeros(1, g.cols);
                    for r in 0..g.rows {
                        for k in 0..g.cols {
                            gr.data[k] += g.at(r, k);
                        }
                    }
                    acc(*rw, gr);
                    acc(*a, g);
                }
                Op::Exp(a) => acc(*a, g.zip(y, |g, y| g * y)),
                Op::Ln(a) => acc(*a, g.zip(&val(*a), |g, a| g / a)),
                Op::Act(a, act, order) => {
                    let av = val(*a);
                    acc(*a, g.zip(&av, |g, z| g * act.eval(z, order + 1)));
                }
                Op::Constrain(a, t) => {
                    let av = val(*a);
                    let mut ga = g.clone();
                    for r in 0..av.rows {
                        for c in 0..av.cols {
                            let w = av.at(r, c);
                            let s = if w >= 0.0 { 1.0 } else { -1.0 };
                            let f = match t[c] {
                                1 => s,
                                -1 => -s,
                                _ => 1.0,
                            };
                            ga.data[r * av.cols + c] *= f;
                        }
                    }
                    acc(*a, ga);
                }
                Op::MatMul(a, b) => {
                    let av = val(*a);
                    let bv = val(*b);
                    acc(*a, matmul_bt(&g, &bv));
                    acc(*b, matmul_at(&av, &g));
                }
                Op::MatMulT(a, b) => {
                    let av = val(*a);
                    let bv = val(*b);
                    acc(*a, matmul(&g, &bv));
                    acc(*b, matmul_at(&g, &av));
                }
                Op::Transpose(a) => acc(*a, transpose(&g)),
                Op::Gather(a, idx) => {
                    let av = val(*a);
                    let mut ga = Tensor::zeros(av.rows, av.cols);
                    for (r, &src) in idx.iter().enumerate() {
                        for k in 0..g.cols {
                            ga.data[src * g.cols + k] += g.at(r, k);
                        }
                    }
                    acc(*a, ga);
                }
                Op::ScatterAdd(a, idx) => {
                    let mut ga = Tensor::zeros(idx.len(), g.cols);
                    for (r, &dst) in idx.iter().enumerate() {
                        for k in 0..g.cols {
                            ga.data[r * g.cols + k] = g.at(dst, k);
                        }
                    }
                    acc(*a, ga);
                }
                Op::Cols(a, start) => {
                    let av = val(*a);
                    let mut ga = Tensor::zeros(av.rows, av.cols);
                    for r in 0..g.rows {
                        for k in 0..g.cols {
                            ga.data[r * av.cols + start + k] = g.at(r, k);
                        }
                    }
                    acc(*a, ga);
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let c = val(p).cols;
                        let mut gp = Tensor::zeros(g.rows, c);
                        for r in 0..g.rows {
                            for k in 0..c {
                                gp.data[r * c + k] = g.at(r, off + k);
                            }
                        }
                        off += c;
                        acc(p, gp);
                    }
                }
                Op::SumAll(a) => {
                    let av = val(*a);
                    acc(*a, Tensor::new(av.rows, av.cols, vec![g.item(); av.data.len()]));
                }
                Op::SumCols(a) => {
                    let av = val(*a);
                    let mut ga = Tensor::zeros(av.rows, av.cols);
                    for r in 0..av.rows {
                        for k in 0..av.cols {
                            ga.data[r * av.cols + k] = g.data[r];
                        }
                    }
                    acc(*a, ga);
                }
                Op::Broadcast(s) => acc(*s, Tensor::scalar(g.sum())),
                Op::GaussNll {
                    sigma,
                    resid,
                    inv,
                    alpha,
                } => {
                    let k = val(*resid).cols;
                    let n = g.rows;
                    let mut gs = Tensor::zeros(n, k * k);
                    let mut gr = Tensor::zeros(n, k);
                    for p in 0..n {
                        let gp = g.data[p];
                        let iv = &inv[p * k * k..(p + 1) * k * k];
                        let al = &alpha[p * k..(p + 1) * k];
                        for a in 0..k {
                            gr.data[p * k + a] = gp * al[a];
                            for b in 0..k {
                                gs.data[p * k * k + a * k + b] = gp * 0.5 * (iv[a * k + b] - al[a] * al[b]);
                            }
                        }
                    }
                    acc(*sigma, gs);
                    acc(*resid, gr);
                }
            }
        }
        Gradients { grads }
    }
}

/// Result of a reverse pass.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var<'_>) -> Option<&Tensor> {
        self.grads[v.id].as_ref()
    }

    /// Gradient data, zeros when the loss does not depend on `v`.
    pub fn data_or_zero(&self, v: Var<'_>) -> Vec<f64> {
        match &self.grads[v.id] {
            Some(t) => t.data.clone(),
            None => vec![0.0; v.value().data.len()],
        }
    }
}

fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
    assert_eq!(a.cols, b.rows);
    let mut out = Tensor::zeros(a.rows, b.cols);
    for r in 0..a.rows {
        let orow = &mut out.data[r * b.cols..(r + 1) * b.cols];
        for k in 0..a.cols {
            let x = a.data[r * a.cols + k];
            if x == 0.0 {
                continue;
            }
            let brow = &b.data[k * b.cols..(k + 1) * b.cols];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += x * bv;
            }
        }
    }
    out
}

/// a · bᵀ
fn matmul_bt(a: &Tensor, b: &Tensor) -> Tensor {
    assert_eq!(a.cols, b.cols);
    let mut out = Tensor::zeros(a.rows, b.rows);
    for r in 0..a.rows {
        let arow = &a.data[r * a.cols..(r + 1) * a.cols];
        for c in 0..b.rows {
            let brow = &b.data[c * b.cols..(c + 1) * b.cols];
            out.data[r * b.rows + c] = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// aᵀ · b
fn matmul_at(a: &Tensor, b: &Tensor) -> Tensor {
    assert_eq!(a.rows, b.rows);
    let mut out = Tensor::zeros(a.cols, b.cols);
    for r in 0..a.rows {
        let brow = &b.data[r * b.cols..(r + 1) * b.cols];
        for k in 0..a.cols {
            let x = a.data[r * a.cols + k];
            if x == 0.0 {
                continue;
            }
            let orow = &mut out.data[k * b.cols..(k + 1) * b.cols];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += x * bv;
            }
        }
    }
    out
}

fn transpose(a: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(a.cols, a.rows);
    for r in 0..a.rows {
        for c in 0..a.cols {
            out.data[c * a.rows + r] = a.data[r * a.cols + c];
        }
    }
    out
}

/// In-place Cholesky of a k×k SPD matrix (lower factor). Returns false if
/// the matrix is not positive definite.
pub fn cholesky(m: &mut [f64], k: usize) -> bool {
    for j in 0..k {
        let mut d = m[j * k + j];
        for p in 0..j {
            d -= m[j * k + p] * m[j * k + p];
        }
        if !(d > 0.0) {
            return false;
        }
        let d = d.sqrt();
        m[j * k + j] = d;
        for i in j + 1..k {
            let mut s = m[i * k + j];
            for p in 0..j {
                s -= m[i * k + p] * m[j * k + p];
            }
            m[i * k + j] = s / d;
        }
        for i in 0..j {
            m[i * k + j] = 0.0;
        }
    }
    true
}

/// Gaussian negative log-likelihood without the 2π constant, its inverse
/// covariance and Σ⁻¹r. `sigma` is symmetrized and `jitter` added to the
/// diagonal.
pub fn gaussian_nll(sigma: &[f64], resid: &[f64], k: usize, jitter: f64) -> Option<(f64, Vec<f64>, Vec<f64>)> {
    let mut l = vec![0.0; k * k];
    for a in 0..k {
        for b in 0..k {
            l[a * k + b] = 0.5 * (sigma[a * k + b] + sigma[b * k + a]);
        }
        l[a * k + a] += jitter;
    }
    if !cholesky(&mut l, k) {
        return None;
    }
    let mut logdet = 0.0;
    for a in 0..k {
        logdet += 2.0 * l[a * k + a].ln();
    }
    // inverse via solving L Lᵀ X = I column by column
    let mut inv = vec![0.0; k * k];
    let solve = |rhs: &mut [f64]| {
        for i in 0..k {
            let mut s = rhs[i];
            for p in 0..i {
                s -= l[i * k + p] * rhs[p];
            }
            rhs[i] = s / l[i * k + i];
        }
        for i in (0..k).rev() {
            let mut s = rhs[i];
            for p in i + 1..k {
                s -= l[p * k + i] * rhs[p];
            }
            rhs[i] = s / l[i * k + i];
        }
    };
    let mut col = vec![0.0; k];
    for c in 0..k {
        col.iter_mut().for_each(|x| *x = 0.0);
        col[c] = 1.0;
        solve(&mut col);
        for r in 0..k {
            inv[r * k + c] = col[r];
        }
    }
    let mut alpha = resid.to_vec();
    solve(&mut alpha);
    let quad: f64 = resid.iter().zip(&alpha).map(|(r, a)| r * a).sum();
    Some((0.5 * logdet + 0.5 * quad, inv, alpha))
}

impl<'t> Var<'t> {
    pub fn value(&self) -> Rc<Tensor> {
        self.tape.value(self.id)
    }

    pub fn rows(&self) -> usize {
        self.value().rows
    }

    pub fn cols(&self) -> usize {
        self.value().cols
    }

    fn unary(self, f: impl Fn(&Tensor) -> Tensor, op: Op) -> Var<'t> {
        let v = f(&self.value());
        self.tape.push(v, op, self.tape.needs(self.id))
    }

    fn binary(self, o: Var<'t>, v: Tensor, op: Op) -> Var<'t> {
        let ng = self.tape.needs(self.id) || self.tape.needs(o.id);
        self.tape.push(v, op, ng)
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        self.unary(|a| a.map(|x| x * c), Op::Scale(self.id, c))
    }

    pub fn add_const(self, c: f64) -> Var<'t> {
        self.unary(|a| a.map(|x| x + c), Op::AddConst(self.id))
    }

    pub fn exp(self) -> Var<'t> {
        self.unary(|a| a.map(f64::exp), Op::Exp(self.id))
    }

    pub fn ln(self) -> Var<'t> {
        self.unary(|a| a.map(f64::ln), Op::Ln(self.id))
    }

    pub fn square(self) -> Var<'t> {
        self * self
    }

    pub fn recip(self) -> Var<'t> {
        let one = self.tape.constant(Tensor::new(self.rows(), self.cols(), vec![1.0; self.rows() * self.cols()]));
        one / self
    }

    /// Elementwise activation derivative of the given order.
    pub fn act(self, act: Activation, order: usize) -> Var<'t> {
        self.unary(|a| a.map(|z| act.eval(z, order)), Op::Act(self.id, act, order))
    }

    /// Per-column sign constraint `|w|_t`.
    pub fn constrain(self, t: Rc<Vec<i8>>) -> Var<'t> {
        let tt = t.clone();
        self.unary(
            move |a| {
                let mut o = a.clone();
                for r in 0..a.rows {
                    for c in 0..a.cols {
                        let w = &mut o.data[r * a.cols + c];
                        *w = match tt[c] {
                            1 => w.abs(),
                            -1 => -w.abs(),
                            _ => *w,
                        };
                    }
                }
                o
            },
            Op::Constrain(self.id, t),
        )
    }

    /// Multiply by a 1×1 variable.
    pub fn mul_scalar(self, s: Var<'t>) -> Var<'t> {
        let sv = s.value().item();
        let v = self.value().map(|x| x * sv);
        self.binary(s, v, Op::MulScalar(self.id, s.id))
    }

    /// Add a 1×1 variable.
    pub fn add_scalar(self, s: Var<'t>) -> Var<'t> {
        let sv = s.value().item();
        let v = self.value().map(|x| x + sv);
        self.binary(s, v, Op::AddScalar(self.id, s.id))
    }

    /// Multiply each row by the matching entry of an n×1 column.
    pub fn mul_col(self, c: Var<'t>) -> Var<'t> {
        let a = self.value();
        let cv = c.value();
        assert_eq!(cv.cols, 1);
        assert_eq!(cv.rows, a.rows);
        let mut v = (*a).clone();
        for r in 0..a.rows {
            for k in 0..a.cols {
                v.data[r * a.cols + k] *= cv.data[r];
            }
        }
        self.binary(c, v, Op::MulCol(self.id, c.id))
    }

    /// Multiply each column by the matching entry of a 1×k row.
    pub fn mul_row(self, rw: Var<'t>) -> Var<'t> {
        let a = self.value();
        let rv = rw.value();
        assert_eq!(rv.rows, 1);
        assert_eq!(rv.cols, a.cols);
        let mut v = (*a).clone();
        for r in 0..a.rows {
            for k in 0..a.cols {
                v.data[r * a.cols + k] *= rv.data[k];
            }
        }
        self.binary(rw, v, Op::MulRow(self.id, rw.id))
    }

    /// Add a 1×k row to every row.
    pub fn add_row(self, rw: Var<'t>) -> Var<'t> {
        let a = self.value();
        let rv = rw.value();
        assert_eq!(rv.rows, 1);
        assert_eq!(rv.cols, a.cols);
        let mut v = (*a).clone();
        for r in 0..a.rows {
            for k in 0..a.cols {
                v.data[r * a.cols + k] += rv.data[k];
            }
        }
        self.binary(rw, v, Op::AddRow(self.id, rw.id))
    }

    pub fn matmul(self, b: Var<'t>) -> Var<'t> {
        let v = matmul(&self.value(), &b.value());
        self.binary(b, v, Op::MatMul(self.id, b.id))
    }

    /// self · bᵀ
    pub fn matmul_t(self, b: Var<'t>) -> Var<'t> {
        let v = matmul_bt(&self.value(), &b.value());
        self.binary(b, v, Op::MatMulT(self.id, b.id))
    }

    pub fn t(self) -> Var<'t> {
        self.unary(transpose, Op::Transpose(self.id))
    }

    pub fn gather(self, idx: Rc<Vec<usize>>) -> Var<'t> {
        let a = self.value();
        let mut v = Tensor::zeros(idx.len(), a.cols);
        for (r, &src) in idx.iter().enumerate() {
            v.data[r * a.cols..(r + 1) * a.cols].copy_from_slice(&a.data[src * a.cols..(src + 1) * a.cols]);
        }
        self.tape.push(v, Op::Gather(self.id, idx), self.tape.needs(self.id))
    }

    /// Sum rows into `n_out` buckets given by `idx`.
    pub fn scatter_add(self, idx: Rc<Vec<usize>>, n_out: usize) -> Var<'t> {
        let a = self.value();
        assert_eq!(idx.len(), a.rows);
        let mut v = Tensor::zeros(n_out, a.cols);
        for (r, &dst) in idx.iter().enumerate() {
            for k in 0..a.cols {
                v.data[dst * a.cols + k] += a.data[r * a.cols + k];
            }
        }
        self.tape.push(v, Op::ScatterAdd(self.id, idx), self.tape.needs(self.id))
    }

    pub fn cols_range(self, start: usize, len: usize) -> Var<'t> {
        let a = self.value();
        assert!(start + len <= a.cols);
        let mut v = Tensor::zeros(a.rows, len);
        for r in 0..a.rows {
            v.data[r * len..(r + 1) * len].copy_from_slice(&a.data[r * a.cols + start..r * a.cols + start + len]);
        }
        self.tape.push(v, Op::Cols(self.id, start), self.tape.needs(self.id))
    }

    pub fn col(self, c: usize) -> Var<'t> {
        self.cols_range(c, 1)
    }

    pub fn sum(self) -> Var<'t> {
        self.unary(|a| Tensor::scalar(a.sum()), Op::SumAll(self.id))
    }

    pub fn mean(self) -> Var<'t> {
        let n = self.value().data.len() as f64;
        self.sum().scale(1.0 / n)
    }

    /// Row sums as an n×1 column.
    pub fn sum_cols(self) -> Var<'t> {
        self.unary(
            |a| {
                let mut v = Tensor::zeros(a.rows, 1);
                for r in 0..a.rows {
                    v.data[r] = a.data[r * a.cols..(r + 1) * a.cols].iter().sum();
                }
                v
            },
            Op::SumCols(self.id),
        )
    }

    /// Broadcast a 1×1 variable to a rows×cols tensor.
    pub fn broadcast(self, rows: usize, cols: usize) -> Var<'t> {
        let s = self.value().item();
        self.unary(move |_| Tensor::new(rows, cols, vec![s; rows * cols]), Op::Broadcast(self.id))
    }

    /// Per-row Gaussian NLL; `self` holds flattened k×k covariances (n×k²),
    /// `resid` the residuals (n×k). Returns an n×1 column.
    pub fn gaussian_nll(self, resid: Var<'t>, jitter: f64) -> Result<Var<'t>> {
        let s = self.value();
        let r = resid.value();
        let k = r.cols;
        assert_eq!(s.cols, k * k);
        assert_eq!(s.rows, r.rows);
        let mut out = Tensor::zeros(r.rows, 1);
        let mut inv = vec![0.0; r.rows * k * k];
        let mut alpha = vec![0.0; r.rows * k];
        for p in 0..r.rows {
            let (val, iv, al) = gaussian_nll(&s.data[p * k * k..(p + 1) * k * k], &r.data[p * k..(p + 1) * k], k, jitter)
                .ok_or(Error::SingularCovariance { particle: p })?;
            out.data[p] = val;
            inv[p * k * k..(p + 1) * k * k].copy_from_slice(&iv);
            alpha[p * k..(p + 1) * k].copy_from_slice(&al);
        }
        Ok(self.binary(
            resid,
            out,
            Op::GaussNll {
                sigma: self.id,
                resid: resid.id,
                inv: Rc::new(inv),
                alpha: Rc::new(alpha),
            },
        ))
    }
}

/// Concatenate columns of equally tall tensors.
pub fn concat_cols<'t>(parts: &[Var<'t>]) -> Var<'t> {
    let tape = parts[0].tape;
    let vals: Vec<Rc<Tensor>> = parts.iter().map(|p| p.value()).collect();
    let rows = vals[0].rows;
    let cols: usize = vals.iter().map(|v| v.cols).sum();
    let mut out = Tensor::zeros(rows, cols);
    for r in 0..rows {
        let mut off = 0;
        for v in &vals {
            assert_eq!(v.rows, rows);
            out.data[r * cols + off..r * cols + off + v.cols].copy_from_slice(&v.data[r * v.cols..(r + 1) * v.cols]);
            off += v.cols;
        }
    }
    let ng = parts.iter().any(|p| tape.needs(p.id));
    tape.push(out, Op::Concat(parts.iter().map(|p| p.id).collect()), ng)
}

macro_rules! binop {
    ($tr:ident, $m:ident, $op:ident, $f:expr) => {
        impl<'t> ops::$tr for Var<'t> {
            type Output = Var<'t>;
            fn $m(self, o: Var<'t>) -> Var<'t> {
                let v = self.value().zip(&o.value(), $f);
                self.binary(o, v, Op::$op(self.id, o.id))
            }
        }
    };
}

binop!(Add, add, Add, |a, b| a + b);
binop!(Sub, sub, Sub, |a, b| a - b);
binop!(Mul, mul, Mul, |a, b| a * b);
binop!(Div, div, Div, |a, b| a / b);

impl<'t> ops::Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.unary(|a| a.map(|x| -x), Op::Neg(self.id))
    }
}
