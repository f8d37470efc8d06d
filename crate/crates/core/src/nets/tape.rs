//! Matrix-valued reverse-mode differentiation.
//!
//! Every operation appends a node holding its value; [`Tape::grad`] walks the
//! nodes backwards once and returns the gradient of a scalar output with
//! respect to every leaf. Besides elementwise and linear-algebra primitives,
//! the tape has fused nodes for kernel Gram matrices and the two Gaussian KL
//! forms, each with a hand-written adjoint.

use std::sync::atomic::{AtomicU32, Ordering};

use crate::elbo::closed_form::{conditional_from_joint, kl_diag_vs_full_parts, kl_spa_expected};
use crate::error::{Error, Result};
use crate::kernels::{constrain, constrain_grad, kernel_dlengthscale, kernel_value, KernelKind};
use crate::linalg::{gemm, CholeskyFactor, Matrix};

static NEXT_TAPE: AtomicU32 = AtomicU32::new(1);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u32,
    idx: u32,
}

impl Var {
    pub fn index(self) -> usize {
        self.idx as usize
    }
}

enum Op {
    Leaf,
    Constant,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    Affine(usize, f64),
    Tanh(usize),
    Relu(usize),
    Exp(usize),
    Log(usize),
    Sigmoid(usize),
    Square(usize),
    Sqrt(usize),
    Clamp(usize, f64, f64),
    Sum(usize),
    SumRows(usize),
    /// Cached `∂ row-sum / ∂ logit` per entry.
    BernoulliRows(usize, Matrix),
    Cols(usize, usize),
    GatherRows(usize, Vec<usize>),
    Gather(usize, Vec<(usize, usize)>),
    AddScalars(Vec<usize>),
    Gram {
        ls: usize,
        os: usize,
        kind: KernelKind,
        dist: Matrix,
    },
    KlDiagFull {
        mu: usize,
        s: usize,
        k: usize,
        alpha: Vec<f64>,
        kinv: Matrix,
    },
    SpaKl(Box<SpaKlNode>),
}

struct SpaKlNode {
    mu_j: usize,
    s_j: usize,
    mu_n: usize,
    s_n: usize,
    k: usize,
    b: Vec<f64>,
    sigma_p: f64,
    floored: bool,
    factor: Option<CholeskyFactor>,
}

struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

/// Adds into the gradient slot of a node.
type Accumulate<'a> = dyn FnMut(usize, &mut dyn FnMut(&mut Matrix)) + 'a;

pub struct Tape {
    id: u32,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of one scalar output, indexed by [`Var`].
pub struct Gradients {
    tape: u32,
    grads: Vec<Option<Matrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient for a leaf (zeros if the output does not depend on it).
    pub fn get(&self, v: Var) -> Result<Matrix> {
        if v.tape != self.tape || v.index() >= self.grads.len() {
            return Err(Error::UnrecordedNode);
        }
        Ok(match &self.grads[v.index()] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.index()];
                Matrix::zeros(r, c)
            }
        })
    }

    pub fn take(&mut self, v: Var) -> Result<Matrix> {
        let g = self.get(v)?;
        self.grads[v.index()] = None;
        Ok(g)
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

impl Tape {
    pub fn new() -> Self {
        Self { id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed), nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn idx(&self, v: Var) -> usize {
        assert!(v.tape == self.id && v.index() < self.nodes.len(), "variable from another tape");
        v.index()
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
        let idx = self.nodes.len() as u32;
        self.nodes.push(Node { value, op, requires_grad });
        Var { tape: self.id, idx }
    }

    fn rg(&self, i: usize) -> bool {
        self.nodes[i].requires_grad
    }

    fn unary(&mut self, a: Var, value: Matrix, op: impl FnOnce(usize) -> Op) -> Var {
        let ia = self.idx(a);
        let rg = self.rg(ia);
        self.push(value, op(ia), rg)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[self.idx(v)].value
    }

    /// A differentiable input.
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Constant, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (ia, ib) = (self.idx(a), self.idx(b));
        let value = self.nodes[ia].value.matmul(&self.nodes[ib].value);
        let rg = self.rg(ia) || self.rg(ib);
        self.push(value, Op::MatMul(ia, ib), rg)
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: fn(usize, usize) -> Op) -> Var {
        let (ia, ib) = (self.idx(a), self.idx(b));
        let value = self.nodes[ia].value.zip_map(&self.nodes[ib].value, f);
        let rg = self.rg(ia) || self.rg(ib);
        self.push(value, op(ia, ib), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x * y, Op::Mul)
    }

    /// `a + 1·bias` for a `1×m` bias row.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Var {
        let (ia, ib) = (self.idx(a), self.idx(bias));
        let (av, bv) = (&self.nodes[ia].value, &self.nodes[ib].value);
        assert!(bv.rows() == 1 && bv.cols() == av.cols(), "bias shape");
        let mut value = av.clone();
        for r in 0..value.rows() {
            for (x, b) in value.row_mut(r).iter_mut().zip(bv.as_slice()) {
                *x += b;
            }
        }
        let rg = self.rg(ia) || self.rg(ib);
        self.push(value, Op::AddRow(ia, ib), rg)
    }

    /// `alpha·a + beta` elementwise.
    pub fn affine(&mut self, a: Var, alpha: f64, beta: f64) -> Var {
        let value = self.value(a).map(|x| alpha * x + beta);
        self.unary(a, value, |i| Op::Affine(i, alpha))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        self.unary(a, value, Op::Tanh)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        self.unary(a, value, Op::Relu)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::exp);
        self.unary(a, value, Op::Exp)
    }

    pub fn log(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::ln);
        self.unary(a, value, Op::Log)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        self.unary(a, value, Op::Sigmoid)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x * x);
        self.unary(a, value, Op::Square)
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::sqrt);
        self.unary(a, value, Op::Sqrt)
    }

    /// Clamps into `[lo, hi]`; no gradient flows where the input lies outside.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let value = self.value(a).map(|x| x.clamp(lo, hi));
        self.unary(a, value, |i| Op::Clamp(i, lo, hi))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Matrix::scalar(self.value(a).sum());
        self.unary(a, value, Op::Sum)
    }

    /// Row sums as an `n×1` column.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let value = Matrix::from_fn(av.rows(), 1, |r, _| av.row(r).iter().sum());
        self.unary(a, value, Op::SumRows)
    }

    /// Columns `start..start+width`.
    pub fn cols(&mut self, a: Var, start: usize, width: usize) -> Var {
        let av = self.value(a);
        assert!(start + width <= av.cols(), "column range");
        let value = Matrix::from_fn(av.rows(), width, |r, c| av[(r, start + c)]);
        self.unary(a, value, |i| Op::Cols(i, start))
    }

    pub fn gather_rows(&mut self, a: Var, rows: &[usize]) -> Var {
        let value = self.value(a).select_rows(rows);
        let rows = rows.to_vec();
        self.unary(a, value, |i| Op::GatherRows(i, rows))
    }

    /// Picks entries `(row, col)` into a column vector.
    pub fn gather(&mut self, a: Var, entries: &[(usize, usize)]) -> Var {
        let av = self.value(a);
        let value = Matrix::column(&entries.iter().map(|&(r, c)| av[(r, c)]).collect::<Vec<_>>());
        let entries = entries.to_vec();
        self.unary(a, value, |i| Op::Gather(i, entries))
    }

    /// Sum of 1×1 variables, accumulated in the order given.
    pub fn add_scalars(&mut self, terms: &[Var]) -> Var {
        let ids: Vec<usize> = terms.iter().map(|&t| self.idx(t)).collect();
        let mut total = 0.0;
        for &i in &ids {
            total += self.nodes[i].value.item();
        }
        let rg = ids.iter().any(|&i| self.rg(i));
        self.push(Matrix::scalar(total), Op::AddScalars(ids), rg)
    }

    /// Kernel Gram matrix over points with pairwise distances `dist`, from
    /// raw (unconstrained) 1×1 lengthscale and outputscale variables.
    pub fn gram(&mut self, kind: KernelKind, raw_ls: Var, raw_os: Var, dist: Matrix) -> Var {
        let (ils, ios) = (self.idx(raw_ls), self.idx(raw_os));
        let ls = constrain(self.nodes[ils].value.item());
        let os = constrain(self.nodes[ios].value.item());
        let value = dist.map(|r| kernel_value(kind, ls, os, r));
        let rg = self.rg(ils) || self.rg(ios);
        self.push(value, Op::Gram { ls: ils, os: ios, kind, dist }, rg)
    }

    /// Row sums of `mask ∘ [y log p + (1−y) log(1−p)]` with
    /// `p = clamp(sigmoid(logits), p_clamp, 1 − p_clamp)`, as an `n×1` column.
    pub fn bernoulli_rows(&mut self, logits: Var, y: &Matrix, mask: &Matrix, p_clamp: f64) -> Var {
        let il = self.idx(logits);
        let lv = &self.nodes[il].value;
        assert!(lv.shape() == y.shape() && y.shape() == mask.shape(), "bernoulli_rows shapes");
        let (n, k) = lv.shape();
        let mut rows = Matrix::zeros(n, 1);
        let mut dlogit = Matrix::zeros(n, k);
        for r in 0..n {
            let (l, yr, mr, dr) = (lv.row(r), y.row(r), mask.row(r), dlogit.row_mut(r));
            let mut acc = 0.0;
            for c in 0..k {
                if mr[c] == 0.0 {
                    continue;
                }
                let raw = sigmoid(l[c]);
                let p = raw.clamp(p_clamp, 1.0 - p_clamp);
                acc += mr[c] * (yr[c] * p.ln() + (1.0 - yr[c]) * (1.0 - p).ln());
                if raw == p {
                    dr[c] = mr[c] * (yr[c] - p);
                }
            }
            rows[(r, 0)] = acc;
        }
        let rg = self.rg(il);
        self.push(rows, Op::BernoulliRows(il, dlogit), rg)
    }

    /// `KL[N(μ, diag s) ‖ N(0, K)]` for column vectors `μ`, `s` and matrix `K`.
    pub fn kl_diag_vs_full(&mut self, mu: Var, s: Var, k: Var) -> Result<Var> {
        let (im, is, ik) = (self.idx(mu), self.idx(s), self.idx(k));
        let parts = kl_diag_vs_full_parts(self.nodes[im].value.as_slice(), self.nodes[is].value.as_slice(), &self.nodes[ik].value)?;
        let rg = self.rg(im) || self.rg(is) || self.rg(ik);
        Ok(self.push(Matrix::scalar(parts.value), Op::KlDiagFull { mu: im, s: is, k: ik, alpha: parts.alpha, kinv: parts.kinv }, rg))
    }

    /// Expected conditional KL for one chain factor. `k` is the joint prior
    /// covariance over `[n(j)…, j]`, target last; `mu_n`, `s_n` are columns.
    pub fn kl_spa(&mut self, mu_j: Var, s_j: Var, mu_n: Var, s_n: Var, k: Var) -> Result<Var> {
        let ids = [self.idx(mu_j), self.idx(s_j), self.idx(mu_n), self.idx(s_n), self.idx(k)];
        let v = |i: usize| &self.nodes[ids[i]].value;
        let cond = conditional_from_joint(v(4))?;
        let value = kl_spa_expected(v(0).item(), v(1).item(), v(2).as_slice(), v(3).as_slice(), &cond.b, cond.sigma_p);
        let rg = ids.iter().any(|&i| self.rg(i));
        let node = SpaKlNode {
            mu_j: ids[0],
            s_j: ids[1],
            mu_n: ids[2],
            s_n: ids[3],
            k: ids[4],
            b: cond.b,
            sigma_p: cond.sigma_p,
            floored: cond.floored,
            factor: cond.factor,
        };
        Ok(self.push(Matrix::scalar(value), Op::SpaKl(Box::new(node)), rg))
    }

    /// Reverse pass from a recorded 1×1 output.
    pub fn grad(&self, output: Var) -> Result<Gradients> {
        if output.tape != self.id || output.index() >= self.nodes.len() {
            return Err(Error::UnrecordedNode);
        }
        let out = output.index();
        let (r, c) = self.nodes[out].value.shape();
        if (r, c) != (1, 1) {
            return Err(Error::NonScalarOutput { rows: r, cols: c });
        }
        let mut grads: Vec<Option<Matrix>> = (0..=out).map(|_| None).collect();
        grads[out] = Some(Matrix::scalar(1.0));
        for i in (0..=out).rev() {
            if !self.nodes[i].requires_grad {
                grads[i] = None;
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            if matches!(self.nodes[i].op, Op::Leaf) {
                grads[i] = Some(g);
                continue;
            }
            self.backward_node(i, &g, &mut grads);
        }
        grads.resize_with(self.nodes.len(), || None);
        let shapes = self.nodes.iter().map(|n| n.value.shape()).collect();
        Ok(Gradients { tape: self.id, grads, shapes })
    }

    fn backward_node(&self, i: usize, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let node = &self.nodes[i];
        let val = |j: usize| &self.nodes[j].value;
        let mut acc = |j: usize, f: &mut dyn FnMut(&mut Matrix)| {
            if !self.nodes[j].requires_grad {
                return;
            }
            let slot = grads[j].get_or_insert_with(|| {
                let (r, c) = self.nodes[j].value.shape();
                Matrix::zeros(r, c)
            });
            f(slot);
        };
        let elementwise = |acc: &mut Accumulate<'_>, a: usize, d: &dyn Fn(usize) -> f64| {
            acc(a, &mut |m: &mut Matrix| {
                for (k, (x, gk)) in m.as_mut_slice().iter_mut().zip(g.as_slice()).enumerate() {
                    *x += gk * d(k);
                }
            });
        };
        match &node.op {
            Op::Leaf | Op::Constant => {}
            Op::MatMul(a, b) => {
                let (a, b) = (*a, *b);
                acc(a, &mut |m| gemm(false, true, 1.0, g, val(b), 1.0, m));
                acc(b, &mut |m| gemm(true, false, 1.0, val(a), g, 1.0, m));
            }
            Op::Add(a, b) => {
                acc(*a, &mut |m| m.axpy(1.0, g));
                acc(*b, &mut |m| m.axpy(1.0, g));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |m| m.axpy(1.0, g));
                acc(*b, &mut |m| m.axpy(-1.0, g));
            }
            Op::Mul(a, b) => {
                let (a, b) = (*a, *b);
                let (av, bv) = (val(a).as_slice(), val(b).as_slice());
                elementwise(&mut acc, a, &|k| bv[k]);
                elementwise(&mut acc, b, &|k| av[k]);
            }
            Op::AddRow(a, bias) => {
                acc(*a, &mut |m| m.axpy(1.0, g));
                acc(*bias, &mut |m| {
                    for r in 0..g.rows() {
                        for (x, gv) in m.as_mut_slice().iter_mut().zip(g.row(r)) {
                            *x += gv;
                        }
                    }
                });
            }
            Op::Affine(a, alpha) => acc(*a, &mut |m| m.axpy(*alpha, g)),
            Op::Tanh(a) => {
                let y = node.value.as_slice();
                elementwise(&mut acc, *a, &|k| 1.0 - y[k] * y[k]);
            }
            Op::Relu(a) => {
                let x = val(*a).as_slice();
                elementwise(&mut acc, *a, &|k| if x[k] > 0.0 { 1.0 } else { 0.0 });
            }
            Op::Exp(a) => {
                let y = node.value.as_slice();
                elementwise(&mut acc, *a, &|k| y[k]);
            }
            Op::Log(a) => {
                let x = val(*a).as_slice();
                elementwise(&mut acc, *a, &|k| 1.0 / x[k]);
            }
            Op::Sigmoid(a) => {
                let y = node.value.as_slice();
                elementwise(&mut acc, *a, &|k| y[k] * (1.0 - y[k]));
            }
            Op::Square(a) => {
                let x = val(*a).as_slice();
                elementwise(&mut acc, *a, &|k| 2.0 * x[k]);
            }
            Op::Sqrt(a) => {
                let y = node.value.as_slice();
                elementwise(&mut acc, *a, &|k| 0.5 / y[k]);
            }
            Op::Clamp(a, lo, hi) => {
                let x = val(*a).as_slice();
                let (lo, hi) = (*lo, *hi);
                elementwise(&mut acc, *a, &|k| if x[k] >= lo && x[k] <= hi { 1.0 } else { 0.0 });
            }
            Op::Sum(a) => {
                let gv = g.item();
                acc(*a, &mut |m| m.as_mut_slice().iter_mut().for_each(|x| *x += gv));
            }
            Op::SumRows(a) => acc(*a, &mut |m| {
                for r in 0..m.rows() {
                    let gv = g[(r, 0)];
                    m.row_mut(r).iter_mut().for_each(|x| *x += gv);
                }
            }),
            Op::BernoulliRows(a, d) => acc(*a, &mut |m: &mut Matrix| {
                for r in 0..m.rows() {
                    let gv = g[(r, 0)];
                    for (x, dv) in m.row_mut(r).iter_mut().zip(d.row(r)) {
                        *x += gv * dv;
                    }
                }
            }),
            Op::Cols(a, start) => acc(*a, &mut |m| {
                for r in 0..g.rows() {
                    for c in 0..g.cols() {
                        m[(r, start + c)] += g[(r, c)];
                    }
                }
            }),
            Op::GatherRows(a, rows) => acc(*a, &mut |m| {
                for (k, &r) in rows.iter().enumerate() {
                    for (x, gv) in m.row_mut(r).iter_mut().zip(g.row(k)) {
                        *x += gv;
                    }
                }
            }),
            Op::Gather(a, entries) => acc(*a, &mut |m| {
                for (k, &(r, c)) in entries.iter().enumerate() {
                    m[(r, c)] += g.as_slice()[k];
                }
            }),
            Op::AddScalars(ids) => {
                let gv = g.item();
                for &j in ids {
                    acc(j, &mut |m| m.as_mut_slice()[0] += gv);
                }
            }
            Op::Gram { ls, os, kind, dist } => {
                let raw_ls = val(*ls).item();
                let raw_os = val(*os).item();
                let (l, s) = (constrain(raw_ls), constrain(raw_os));
                let mut d_ls = 0.0;
                let mut d_os = 0.0;
                for ((gv, r), kv) in g.as_slice().iter().zip(dist.as_slice()).zip(node.value.as_slice()) {
                    d_ls += gv * kernel_dlengthscale(*kind, l, s, *r);
                    d_os += gv * kv / s;
                }
                acc(*ls, &mut |m| m.as_mut_slice()[0] += d_ls * constrain_grad(raw_ls));
                acc(*os, &mut |m| m.as_mut_slice()[0] += d_os * constrain_grad(raw_os));
            }
            Op::KlDiagFull { mu, s, k, alpha, kinv } => {
                let gv = g.item();
                let sv = val(*s).as_slice();
                let h = alpha.len();
                acc(*mu, &mut |m| {
                    for (x, a) in m.as_mut_slice().iter_mut().zip(alpha) {
                        *x += gv * a;
                    }
                });
                acc(*s, &mut |m| {
                    for (i, x) in m.as_mut_slice().iter_mut().enumerate() {
                        *x += gv * 0.5 * (kinv[(i, i)] - 1.0 / sv[i]);
                    }
                });
                acc(*k, &mut |m| {
                    // ½ (K⁻¹ − ααᵀ − K⁻¹ S K⁻¹)
                    for a in 0..h {
                        for b in 0..h {
                            let mut ksk = 0.0;
                            for c in 0..h {
                                ksk += kinv[(a, c)] * sv[c] * kinv[(c, b)];
                            }
                            m[(a, b)] += gv * 0.5 * (kinv[(a, b)] - alpha[a] * alpha[b] - ksk);
                        }
                    }
                });
            }
            Op::SpaKl(n) => {
                let gv = g.item();
                let (mu_j, s_j) = (val(n.mu_j).item(), val(n.s_j).item());
                let (mu_n, s_n) = (val(n.mu_n).as_slice(), val(n.s_n).as_slice());
                let b = &n.b;
                let h = b.len();
                let sp = n.sigma_p;
                let quad: f64 = b.iter().zip(s_n).map(|(bi, si)| bi * bi * si).sum();
                let d = b.iter().zip(mu_n).map(|(bi, mi)| bi * mi).sum::<f64>() - mu_j;
                acc(n.mu_j, &mut |m| m.as_mut_slice()[0] += gv * (-d / sp));
                acc(n.s_j, &mut |m| m.as_mut_slice()[0] += gv * 0.5 * (1.0 / sp - 1.0 / s_j));
                acc(n.mu_n, &mut |m| {
                    for (x, bi) in m.as_mut_slice().iter_mut().zip(b) {
                        *x += gv * d * bi / sp;
                    }
                });
                acc(n.s_n, &mut |m| {
                    for (x, bi) in m.as_mut_slice().iter_mut().zip(b) {
                        *x += gv * 0.5 * bi * bi / sp;
                    }
                });
                // ∂KL/∂σ_p, zero when σ_p sits on its floor.
                let g_sp = if n.floored { 0.0 } else { 0.5 * (1.0 / sp - (quad + d * d + s_j) / (sp * sp)) };
                // ∂KL/∂b
                let g_b: Vec<f64> = (0..h).map(|i| (s_n[i] * b[i] + d * mu_n[i]) / sp).collect();
                acc(n.k, &mut |m| {
                    if let Some(f) = &n.factor {
                        let w = f.solve_vec(&g_b);
                        for r in 0..h {
                            for c in 0..h {
                                m[(r, c)] += gv * (-w[r] * b[c] + g_sp * b[r] * b[c]);
                            }
                            m[(r, h)] += gv * (w[r] - 2.0 * g_sp * b[r]);
                        }
                    }
                    m[(h, h)] += gv * g_sp;
                });
            }
        }
    }
}
