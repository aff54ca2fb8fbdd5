//! Reverse-mode automatic differentiation over a closed operator set.
//!
//! A [`Tape`] records every executed operation together with its forward
//! value. [`Tape::backward`] walks the record once in reverse topological
//! order and returns gradients for the leaf tensors that were inserted
//! with `param`. The operator set is exactly what the tokenizer and
//! distillation objectives need; there is no general graph compiler here.
//!
//! Two gradient-routing primitives matter for correctness of the losses:
//! `stop_grad`, which blocks all flow into its argument, and
//! `straight_through`, whose forward value is the assigned codebook row
//! while its backward copies the incoming gradient onto the encoder
//! output unchanged. The codebook never receives gradient through the
//! straight-through path.

use alloc::format;
use alloc::rc::Rc;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::rng::Rng;
use crate::tensor::{matmul, matmul_nt, matmul_tn, CsrMatrix, Real, Tensor, TensorError};

/// Numerical floor for logarithms and norms.
pub const EPS: f64 = 1e-12;

/// Handle to a tensor recorded on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op<F: Real> {
    Leaf,
    Matmul(Var, Var),
    /// `A * B^T`
    MatmulNT(Var, Var),
    /// Constant sparse matrix times a dense variable.
    Spmm(Rc<CsrMatrix<F>>, Var),
    Add(Var, Var),
    Sub(Var, Var),
    /// `a + broadcast_rows(b)` with `b` a `1 x D` row.
    AddRow(Var, Var),
    Relu(Var),
    Sigmoid(Var),
    /// `ln(max(x, eps))`; gradient is zero in the clamped region.
    LogClamped(Var),
    Dropout(Var, Tensor<F>),
    SoftmaxRows(Var),
    Scale(Var, F),
    Sum(Var),
    SumSq(Var),
    GatherRows(Var, Rc<Vec<usize>>),
    StopGrad,
    StraightThrough(Var),
    /// Pairwise Euclidean distances between rows of two matrices.
    L2RowDistances(Var, Var),
    /// Pairwise cosine similarities between rows of two matrices.
    CosineRowSimilarities(Var, Var),
    /// Mean over rows of `(1 - cos(pred_i, target_i))^gamma`; target constant.
    CosineRowError { pred: Var, target: Rc<Tensor<F>>, gamma: F, cos: Vec<F> },
    /// Mean softmax cross-entropy over the listed rows.
    CrossEntropyRows { logits: Var, labels: Rc<Vec<usize>>, rows: Rc<Vec<usize>>, softmax: Tensor<F> },
    /// Mean over rows of `sum_j p_ij (ln p_ij - ln q_ij)`.
    KlRows(Var, Var),
    BatchNormRows { x: Var, gamma: Var, beta: Var, xhat: Tensor<F>, inv_std: Vec<F>, train: bool },
}

struct Node<F: Real> {
    op: Op<F>,
    value: Tensor<F>,
    requires_grad: bool,
}

/// Gradients keyed by tape variable; only leaves keep their gradient
/// after backward completes.
#[derive(Debug)]
pub struct Gradients<F: Real> {
    grads: Vec<Option<Tensor<F>>>,
}

impl<F: Real> Gradients<F> {
    pub fn get(&self, v: Var) -> Option<&Tensor<F>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<F>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

pub struct Tape<F: Real> {
    nodes: Vec<Node<F>>,
    consumed: bool,
}

impl<F: Real> Default for Tape<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Real> Tape<F> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), consumed: false }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, op: Op<F>, value: Tensor<F>, requires_grad: bool) -> Var {
        self.nodes.push(Node { op, value, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Insert a trainable leaf.
    pub fn param(&mut self, value: Tensor<F>) -> Var {
        self.push(Op::Leaf, value, true)
    }

    /// Insert a constant leaf (no gradient).
    pub fn constant(&mut self, value: Tensor<F>) -> Var {
        self.push(Op::Leaf, value, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ar, ac) = self.value(a).shape();
        let (br, bc) = self.value(b).shape();
        if ac != br {
            return Err(TensorError::ShapeMismatch { op: "matmul", lhs: (ar, ac), rhs: (br, bc) });
        }
        let v = matmul(self.value(a), self.value(b));
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::Matmul(a, b), v, rg))
    }

    /// `a * b^T`; `a` and `b` may be the same variable.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ar, ac) = self.value(a).shape();
        let (br, bc) = self.value(b).shape();
        if ac != bc {
            return Err(TensorError::ShapeMismatch { op: "matmul_nt", lhs: (ar, ac), rhs: (br, bc) });
        }
        let v = matmul_nt(self.value(a), self.value(b));
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::MatmulNT(a, b), v, rg))
    }

    pub fn spmm(&mut self, a: Rc<CsrMatrix<F>>, b: Var) -> Result<Var, TensorError> {
        let (br, bc) = self.value(b).shape();
        if a.cols != br {
            return Err(TensorError::ShapeMismatch { op: "spmm", lhs: (a.rows, a.cols), rhs: (br, bc) });
        }
        let v = a.matmul_dense(self.value(b));
        let rg = self.rg(b);
        Ok(self.push(Op::Spmm(a, b), v, rg))
    }

    fn binary_same_shape(&mut self, op: &'static str, a: Var, b: Var) -> Result<(), TensorError> {
        let la = self.value(a).shape();
        let lb = self.value(b).shape();
        if la != lb {
            return Err(TensorError::ShapeMismatch { op, lhs: la, rhs: lb });
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary_same_shape("add", a, b)?;
        let mut v = self.value(a).clone();
        for (x, y) in v.data_mut().iter_mut().zip(self.nodes[b.0].value.data()) {
            *x += *y;
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::Add(a, b), v, rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary_same_shape("sub", a, b)?;
        let mut v = self.value(a).clone();
        for (x, y) in v.data_mut().iter_mut().zip(self.nodes[b.0].value.data()) {
            *x -= *y;
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::Sub(a, b), v, rg))
    }

    /// Add a `1 x D` row vector to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ar, ac) = self.value(a).shape();
        let (br, bc) = self.value(b).shape();
        if br != 1 || bc != ac {
            return Err(TensorError::ShapeMismatch { op: "add_row", lhs: (ar, ac), rhs: (br, bc) });
        }
        let mut v = self.value(a).clone();
        let row = self.nodes[b.0].value.data().to_vec();
        for r in 0..ar {
            for (x, y) in v.row_mut(r).iter_mut().zip(&row) {
                *x += *y;
            }
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::AddRow(a, b), v, rg))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| if x > F::zero() { x } else { F::zero() });
        let rg = self.rg(a);
        self.push(Op::Relu(a), v, rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let one = F::one();
        // clamp the exponent so extreme logits stay finite
        let cap = F::from_f64(60.0);
        let v = self.value(a).map(|x| {
            let x = if x > cap { cap } else if x < -cap { -cap } else { x };
            one / (one + (-x).exp())
        });
        let rg = self.rg(a);
        self.push(Op::Sigmoid(a), v, rg)
    }

    pub fn log_clamped(&mut self, a: Var) -> Var {
        let eps = F::from_f64(EPS);
        let v = self.value(a).map(|x| if x > eps { x.ln() } else { eps.ln() });
        let rg = self.rg(a);
        self.push(Op::LogClamped(a), v, rg)
    }

    /// Inverted dropout: surviving entries are scaled by `1/keep` at train
    /// time so the inference path needs no rescale.
    pub fn dropout(&mut self, a: Var, rate: f64, rng: &mut Rng) -> Result<Var, TensorError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(TensorError::InvalidArgument {
                op: "dropout",
                message: format!("rate {rate} outside [0,1)"),
            });
        }
        let (r, c) = self.value(a).shape();
        if rate == 0.0 {
            // identity mask keeps the tape structure uniform
            let v = self.value(a).clone();
            let rg = self.rg(a);
            return Ok(self.push(Op::Dropout(a, Tensor::full(r, c, F::one())), v, rg));
        }
        let keep = 1.0 - rate;
        let scale = F::from_f64(1.0 / keep);
        let mut mask = Tensor::zeros(r, c);
        for m in mask.data_mut() {
            if rng.random::<f64>() < keep {
                *m = scale;
            }
        }
        let mut v = self.value(a).clone();
        for (x, m) in v.data_mut().iter_mut().zip(mask.data()) {
            *x *= *m;
        }
        let rg = self.rg(a);
        Ok(self.push(Op::Dropout(a, mask), v, rg))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let (r, c) = src.shape();
        let mut v = Tensor::zeros(r, c);
        for i in 0..r {
            softmax_into(src.row(i), v.row_mut(i));
        }
        let rg = self.rg(a);
        self.push(Op::SoftmaxRows(a), v, rg)
    }

    pub fn scale(&mut self, a: Var, c: F) -> Var {
        let v = self.value(a).map(|x| x * c);
        let rg = self.rg(a);
        self.push(Op::Scale(a, c), v, rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let mut acc = F::zero();
        for &x in self.value(a).data() {
            acc += x;
        }
        let rg = self.rg(a);
        self.push(Op::Sum(a), Tensor::scalar(acc), rg)
    }

    pub fn sum_sq(&mut self, a: Var) -> Var {
        let mut acc = F::zero();
        for &x in self.value(a).data() {
            acc += x * x;
        }
        let rg = self.rg(a);
        self.push(Op::SumSq(a), Tensor::scalar(acc), rg)
    }

    pub fn gather_rows(&mut self, a: Var, indices: Rc<Vec<usize>>) -> Result<Var, TensorError> {
        let rows = self.value(a).rows();
        for &i in indices.iter() {
            if i >= rows {
                return Err(TensorError::IndexOutOfRange { index: i, len: rows });
            }
        }
        let v = self.value(a).gather_rows(&indices);
        let rg = self.rg(a);
        Ok(self.push(Op::GatherRows(a, indices), v, rg))
    }

    pub fn stop_grad(&mut self, a: Var) -> Var {
        let v = self.value(a).clone();
        self.push(Op::StopGrad, v, false)
    }

    /// Quantize `h` to the assigned codebook rows. Forward output row `i`
    /// is `codebook[z[i]]`; backward copies the output gradient onto `h`.
    pub fn straight_through(
        &mut self,
        h: Var,
        codebook: &Tensor<F>,
        z: &[usize],
    ) -> Result<Var, TensorError> {
        let (hr, hc) = self.value(h).shape();
        if codebook.cols() != hc {
            return Err(TensorError::ShapeMismatch {
                op: "straight_through",
                lhs: (hr, hc),
                rhs: codebook.shape(),
            });
        }
        if z.len() != hr {
            return Err(TensorError::InvalidArgument {
                op: "straight_through",
                message: format!("{} assignments for {hr} rows", z.len()),
            });
        }
        for &code in z {
            if code >= codebook.rows() {
                return Err(TensorError::IndexOutOfRange { index: code, len: codebook.rows() });
            }
        }
        let v = codebook.gather_rows(z);
        let rg = self.rg(h);
        Ok(self.push(Op::StraightThrough(h), v, rg))
    }

    /// `N x M` Euclidean distances between rows of `a` and rows of `b`.
    pub fn l2_row_distances(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ar, ac) = self.value(a).shape();
        let (br, bc) = self.value(b).shape();
        if ac != bc {
            return Err(TensorError::ShapeMismatch {
                op: "l2_row_distances",
                lhs: (ar, ac),
                rhs: (br, bc),
            });
        }
        let va = self.value(a);
        let vb = &self.nodes[b.0].value;
        let mut out = Tensor::zeros(ar, br);
        for i in 0..ar {
            let ra = va.row(i);
            for j in 0..br {
                let rb = vb.row(j);
                let mut acc = F::zero();
                for k in 0..ac {
                    let d = ra[k] - rb[k];
                    acc += d * d;
                }
                out.set(i, j, acc.sqrt());
            }
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::L2RowDistances(a, b), out, rg))
    }

    /// `N x M` cosine similarities between rows of `a` and rows of `b`.
    pub fn cosine_row_similarities(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ar, ac) = self.value(a).shape();
        let (br, bc) = self.value(b).shape();
        if ac != bc {
            return Err(TensorError::ShapeMismatch {
                op: "cosine_row_similarities",
                lhs: (ar, ac),
                rhs: (br, bc),
            });
        }
        let eps = F::from_f64(EPS);
        let va = self.value(a);
        let vb = &self.nodes[b.0].value;
        let mut out = Tensor::zeros(ar, br);
        for i in 0..ar {
            for j in 0..br {
                out.set(i, j, cosine(va.row(i), vb.row(j), eps));
            }
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::CosineRowSimilarities(a, b), out, rg))
    }

    /// Mean over rows of `(1 - cos(pred_i, target_i))^gamma`.
    pub fn cosine_row_error(
        &mut self,
        pred: Var,
        target: Rc<Tensor<F>>,
        gamma: F,
    ) -> Result<Var, TensorError> {
        let ps = self.value(pred).shape();
        if ps != target.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "cosine_row_error",
                lhs: ps,
                rhs: target.shape(),
            });
        }
        let eps = F::from_f64(EPS);
        let n = ps.0;
        let vp = self.value(pred);
        let mut cos = Vec::with_capacity(n);
        let mut total = F::zero();
        for i in 0..n {
            let c = cosine(vp.row(i), target.row(i), eps);
            cos.push(c);
            total += (F::one() - c).powf(gamma);
        }
        let value = if n > 0 { total / F::from_f64(n as f64) } else { F::zero() };
        let rg = self.rg(pred);
        Ok(self.push(Op::CosineRowError { pred, target, gamma, cos }, Tensor::scalar(value), rg))
    }

    /// Mean softmax cross-entropy of `logits` against integer `labels`,
    /// restricted to the listed rows.
    pub fn cross_entropy_rows(
        &mut self,
        logits: Var,
        labels: Rc<Vec<usize>>,
        rows: Rc<Vec<usize>>,
    ) -> Result<Var, TensorError> {
        if rows.is_empty() {
            return Err(TensorError::EmptyInput { op: "cross_entropy_rows" });
        }
        let (n, k) = self.value(logits).shape();
        if labels.len() != n {
            return Err(TensorError::InvalidArgument {
                op: "cross_entropy_rows",
                message: format!("{} labels for {n} rows", labels.len()),
            });
        }
        let src = self.value(logits);
        let mut softmax = Tensor::zeros(n, k);
        let mut total = F::zero();
        let eps = F::from_f64(EPS);
        for &r in rows.iter() {
            if r >= n {
                return Err(TensorError::IndexOutOfRange { index: r, len: n });
            }
            if labels[r] >= k {
                return Err(TensorError::IndexOutOfRange { index: labels[r], len: k });
            }
            softmax_into(src.row(r), softmax.row_mut(r));
            let p = softmax.get(r, labels[r]);
            total -= (if p > eps { p } else { eps }).ln();
        }
        let value = total / F::from_f64(rows.len() as f64);
        let rg = self.rg(logits);
        Ok(self.push(
            Op::CrossEntropyRows { logits, labels, rows, softmax },
            Tensor::scalar(value),
            rg,
        ))
    }

    /// Mean over rows of `KL(p_i || q_i)` for row-stochastic inputs.
    pub fn kl_rows(&mut self, p: Var, q: Var) -> Result<Var, TensorError> {
        self.binary_same_shape("kl_rows", p, q)?;
        let (n, m) = self.value(p).shape();
        let eps = F::from_f64(EPS);
        let vp = self.value(p);
        let vq = &self.nodes[q.0].value;
        let mut total = F::zero();
        for i in 0..n {
            let rp = vp.row(i);
            let rq = vq.row(i);
            for j in 0..m {
                if rp[j] > F::zero() {
                    let pj = if rp[j] > eps { rp[j] } else { eps };
                    let qj = if rq[j] > eps { rq[j] } else { eps };
                    total += rp[j] * (pj.ln() - qj.ln());
                }
            }
        }
        let value = if n > 0 { total / F::from_f64(n as f64) } else { F::zero() };
        let rg = self.rg(p) || self.rg(q);
        Ok(self.push(Op::KlRows(p, q), Tensor::scalar(value), rg))
    }

    /// Batch normalization over rows. In train mode the batch statistics
    /// are used (and returned so the caller can update running stats);
    /// in eval mode the provided running statistics are used and treated
    /// as constants.
    pub fn batch_norm_rows(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running: Option<(&[F], &[F])>,
    ) -> Result<(Var, Vec<F>, Vec<F>), TensorError> {
        let (n, d) = self.value(x).shape();
        let gs = self.value(gamma).shape();
        let bs = self.value(beta).shape();
        if gs != (1, d) || bs != (1, d) {
            return Err(TensorError::ShapeMismatch { op: "batch_norm_rows", lhs: (n, d), rhs: gs });
        }
        let eps = F::from_f64(1e-5);
        let (mean, var): (Vec<F>, Vec<F>) = match running {
            Some((m, v)) => (m.to_vec(), v.to_vec()),
            None => {
                let vx = self.value(x);
                let nf = F::from_f64(n.max(1) as f64);
                let mut mean = vec![F::zero(); d];
                for i in 0..n {
                    for (j, &v) in vx.row(i).iter().enumerate() {
                        mean[j] += v;
                    }
                }
                for m in mean.iter_mut() {
                    *m /= nf;
                }
                let mut var = vec![F::zero(); d];
                for i in 0..n {
                    for (j, &v) in vx.row(i).iter().enumerate() {
                        let dv = v - mean[j];
                        var[j] += dv * dv;
                    }
                }
                for v in var.iter_mut() {
                    *v /= nf;
                }
                (mean, var)
            }
        };
        let inv_std: Vec<F> = var.iter().map(|&v| F::one() / (v + eps).sqrt()).collect();
        let vx = self.value(x);
        let vg = self.nodes[gamma.0].value.data().to_vec();
        let vb = self.nodes[beta.0].value.data().to_vec();
        let mut xhat = Tensor::zeros(n, d);
        let mut out = Tensor::zeros(n, d);
        for i in 0..n {
            for j in 0..d {
                let h = (vx.get(i, j) - mean[j]) * inv_std[j];
                xhat.set(i, j, h);
                out.set(i, j, vg[j] * h + vb[j]);
            }
        }
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        let train = running.is_none();
        let op = Op::BatchNormRows { x, gamma, beta, xhat, inv_std, train };
        let node = self.push(op, out, rg);
        Ok((node, mean, var))
    }

    /// Sum a list of scalar variables.
    pub fn add_n(&mut self, terms: &[Var]) -> Result<Var, TensorError> {
        let mut iter = terms.iter();
        let first = *iter.next().ok_or(TensorError::EmptyInput { op: "add_n" })?;
        let mut acc = first;
        for &t in iter {
            acc = self.add(acc, t)?;
        }
        Ok(acc)
    }

    /// Backpropagate from a scalar loss. Consumes the tape: a second call
    /// is an error.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients<F>, TensorError> {
        if self.consumed {
            return Err(TensorError::TapeConsumed);
        }
        let (lr, lc) = self.value(loss).shape();
        if (lr, lc) != (1, 1) {
            return Err(TensorError::NotScalar { rows: lr, cols: lc });
        }
        self.consumed = true;
        let mut grads: Vec<Option<Tensor<F>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(F::one()));

        for idx in (0..self.nodes.len()).rev() {
            if grads[idx].is_none() || !self.nodes[idx].requires_grad {
                continue;
            }
            if matches!(self.nodes[idx].op, Op::Leaf) {
                continue;
            }
            let g = grads[idx].take().expect("gradient present");
            self.propagate(idx, &g, &mut grads);
        }
        // drop gradients of anything that is not a trainable leaf
        for (idx, slot) in grads.iter_mut().enumerate() {
            if !matches!(self.nodes[idx].op, Op::Leaf) || !self.nodes[idx].requires_grad {
                *slot = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, idx: usize, g: &Tensor<F>, grads: &mut [Option<Tensor<F>>]) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            Op::Matmul(a, b) => {
                if self.rg(*a) {
                    let da = matmul_nt(g, &self.nodes[b.0].value);
                    accumulate(&mut grads[a.0], da);
                }
                if self.rg(*b) {
                    let db = matmul_tn(&self.nodes[a.0].value, g);
                    accumulate(&mut grads[b.0], db);
                }
            }
            Op::MatmulNT(a, b) => {
                if self.rg(*a) {
                    let da = matmul(g, &self.nodes[b.0].value);
                    accumulate(&mut grads[a.0], da);
                }
                if self.rg(*b) {
                    let db = matmul_tn(g, &self.nodes[a.0].value);
                    accumulate(&mut grads[b.0], db);
                }
            }
            Op::Spmm(m, b) => {
                if self.rg(*b) {
                    let db = m.transpose_matmul_dense(g);
                    accumulate(&mut grads[b.0], db);
                }
            }
            Op::Add(a, b) => {
                if self.rg(*a) {
                    accumulate(&mut grads[a.0], g.clone());
                }
                if self.rg(*b) {
                    accumulate(&mut grads[b.0], g.clone());
                }
            }
            Op::Sub(a, b) => {
                if self.rg(*a) {
                    accumulate(&mut grads[a.0], g.clone());
                }
                if self.rg(*b) {
                    accumulate(&mut grads[b.0], g.map(|x| -x));
                }
            }
            Op::AddRow(a, b) => {
                if self.rg(*a) {
                    accumulate(&mut grads[a.0], g.clone());
                }
                if self.rg(*b) {
                    let (r, c) = g.shape();
                    let mut db = Tensor::zeros(1, c);
                    for i in 0..r {
                        for (x, y) in db.row_mut(0).iter_mut().zip(g.row(i)) {
                            *x += *y;
                        }
                    }
                    accumulate(&mut grads[b.0], db);
                }
            }
            Op::Relu(a) => {
                if self.rg(*a) {
                    let va = &self.nodes[a.0].value;
                    let mut da = g.clone();
                    for (dg, &x) in da.data_mut().iter_mut().zip(va.data()) {
                        if x <= F::zero() {
                            *dg = F::zero();
                        }
                    }
                    accumulate(&mut grads[a.0], da);
                }
            }
            Op::Sigmoid(a) => {
                if self.rg(*a) {
                    let y = &node.value;
                    let mut da = g.clone();
                    for (dg, &s) in da.data_mut().iter_mut().zip(y.data()) {
                        *dg *= s * (F::one() - s);
                    }
                    accumulate(&mut grads[a.0], da);
                }
            }
            Op::LogClamped(a) => {
                if self.rg(*a) {
                    let eps = F::from_f64(EPS);
                    let va = &self.nodes[a.0].value;
                    let mut da = g.clone();
                    for (dg, &x) in da.data_mut().iter_mut().zip(va.data()) {
                        *dg = if x > eps { *dg / x } else { F::zero() };
                    }
                    accumulate(&mut grads[a.0], da);
                }
            }
            Op::Dropout(a, mask) => {
                if self.rg(*a) {
                    let mut da = g.clone();
                    for (dg, &m) in da.data_mut().iter_mut().zip(mask.data()) {
                        *dg *= m;
                    }
                    accumulate(&mut grads[a.0], da);
                }
            }
            Op::SoftmaxRows(a) => {
                if self.rg(*a) {
                    let y = &node.value;
                    let (r, c) = y.shape();
                    let mut da = Tensor::zeros(r, c);
                    for i in 0..r {
                        let yr = y.row(i);
                        let gr = g.row(i);
                        let mut dot = F::zero();
                        for j in 0..c {
                            dot += yr[j] * gr[j];
                        }
                        for j in 0..c {
                            da.set(i, j, yr[j] * (gr[j] - dot));
                        }
                    }
                    accumulate(&mut grads[a.0], da);
                }
            }
            Op::Scale(a, c) => {
                if self.rg(*a) {
                    accumulate(&mut grads[a.0], g.map(|x| x * *c));
                }
            }
            Op::Sum(a) => {
                if self.rg(*a) {
                    let (r, c) = self.nodes[a.0].value.shape();
                    accumulate(&mut grads[a.0], Tensor::full(r, c, g.item()));
                }
            }
            Op::SumSq(a) => {
                if self.rg(*a) {
                    let two_g = g.item() + g.item();
                    let da = self.nodes[a.0].value.map(|x| x * two_g);
                    accumulate(&mut grads[a.0], da);
                }
            }
            Op::GatherRows(a, indices) => {
                if self.rg(*a) {
                    let (ar, ac) = self.nodes[a.0].value.shape();
                    let mut da = Tensor::zeros(ar, ac);
                    for (i, &src) in indices.iter().enumerate() {
                        for (x, y) in da.row_mut(src).iter_mut().zip(g.row(i)) {
                            *x += *y;
                        }
                    }
                    accumulate(&mut grads[a.0], da);
                }
            }
            Op::StopGrad => {}
            Op::StraightThrough(h) => {
                if self.rg(*h) {
                    accumulate(&mut grads[h.0], g.clone());
                }
            }
            Op::L2RowDistances(a, b) => {
                let eps = F::from_f64(EPS);
                let va = &self.nodes[a.0].value;
                let vb = &self.nodes[b.0].value;
                let dist = &node.value;
                let (n, m) = dist.shape();
                let d = va.cols();
                let need_a = self.rg(*a);
                let need_b = self.rg(*b);
                let mut da = if need_a { Some(Tensor::zeros(n, d)) } else { None };
                let mut db = if need_b { Some(Tensor::zeros(m, d)) } else { None };
                for i in 0..n {
                    let ra = va.row(i);
                    for j in 0..m {
                        let gij = g.get(i, j);
                        if gij == F::zero() {
                            continue;
                        }
                        let denom = dist.get(i, j).max(eps);
                        let scale = gij / denom;
                        let rb = vb.row(j);
                        if let Some(da) = da.as_mut() {
                            for k in 0..d {
                                let v = da.get(i, k) + scale * (ra[k] - rb[k]);
                                da.set(i, k, v);
                            }
                        }
                        if let Some(db) = db.as_mut() {
                            for k in 0..d {
                                let v = db.get(j, k) - scale * (ra[k] - rb[k]);
                                db.set(j, k, v);
                            }
                        }
                    }
                }
                if let Some(da) = da {
                    accumulate(&mut grads[a.0], da);
                }
                if let Some(db) = db {
                    accumulate(&mut grads[b.0], db);
                }
            }
            Op::CosineRowSimilarities(a, b) => {
                let eps = F::from_f64(EPS);
                let va = &self.nodes[a.0].value;
                let vb = &self.nodes[b.0].value;
                let sim = &node.value;
                let (n, m) = sim.shape();
                let d = va.cols();
                let need_a = self.rg(*a);
                let need_b = self.rg(*b);
                let row_norm = |t: &Tensor<F>, i: usize| -> F {
                    let mut acc = F::zero();
                    for &v in t.row(i) {
                        acc += v * v;
                    }
                    acc.sqrt().max(eps)
                };
                let na: Vec<F> = (0..n).map(|i| row_norm(va, i)).collect();
                let nb: Vec<F> = (0..m).map(|j| row_norm(vb, j)).collect();
                let mut da = if need_a { Some(Tensor::zeros(n, d)) } else { None };
                let mut db = if need_b { Some(Tensor::zeros(m, d)) } else { None };
                for i in 0..n {
                    let ra = va.row(i);
                    for j in 0..m {
                        let gij = g.get(i, j);
                        if gij == F::zero() {
                            continue;
                        }
                        let rb = vb.row(j);
                        let s = sim.get(i, j);
                        let inv = F::one() / (na[i] * nb[j]);
                        if let Some(da) = da.as_mut() {
                            let self_scale = s / (na[i] * na[i]);
                            for k in 0..d {
                                let v = da.get(i, k) + gij * (rb[k] * inv - ra[k] * self_scale);
                                da.set(i, k, v);
                            }
                        }
                        if let Some(db) = db.as_mut() {
                            let self_scale = s / (nb[j] * nb[j]);
                            for k in 0..d {
                                let v = db.get(j, k) + gij * (ra[k] * inv - rb[k] * self_scale);
                                db.set(j, k, v);
                            }
                        }
                    }
                }
                if let Some(da) = da {
                    accumulate(&mut grads[a.0], da);
                }
                if let Some(db) = db {
                    accumulate(&mut grads[b.0], db);
                }
            }
            Op::CosineRowError { pred, target, gamma, cos } => {
                if self.rg(*pred) {
                    let eps = F::from_f64(EPS);
                    let vp = &self.nodes[pred.0].value;
                    let (n, d) = vp.shape();
                    let gs = g.item() / F::from_f64(n.max(1) as f64);
                    let one = F::one();
                    let mut da = Tensor::zeros(n, d);
                    for i in 0..n {
                        let c = cos[i];
                        let coeff = -*gamma * (one - c).max(F::zero()).powf(*gamma - one) * gs;
                        let p = vp.row(i);
                        let t = target.row(i);
                        let np = norm(p).max(eps);
                        let nt = norm(t).max(eps);
                        for k in 0..d {
                            // d cos / d p_k = t_k/(|p||t|) - cos * p_k/|p|^2
                            let dcos = t[k] / (np * nt) - c * p[k] / (np * np);
                            da.set(i, k, coeff * dcos);
                        }
                    }
                    accumulate(&mut grads[pred.0], da);
                }
            }
            Op::CrossEntropyRows { logits, labels, rows, softmax } => {
                if self.rg(*logits) {
                    let (n, k) = self.nodes[logits.0].value.shape();
                    let gs = g.item() / F::from_f64(rows.len() as f64);
                    let mut da = Tensor::zeros(n, k);
                    for &r in rows.iter() {
                        for j in 0..k {
                            let mut v = softmax.get(r, j);
                            if j == labels[r] {
                                v -= F::one();
                            }
                            da.set(r, j, v * gs);
                        }
                    }
                    accumulate(&mut grads[logits.0], da);
                }
            }
            Op::KlRows(p, q) => {
                let eps = F::from_f64(EPS);
                let vp = &self.nodes[p.0].value;
                let vq = &self.nodes[q.0].value;
                let (n, m) = vp.shape();
                let gs = g.item() / F::from_f64(n.max(1) as f64);
                if self.rg(*p) {
                    let mut dp = Tensor::zeros(n, m);
                    for i in 0..n {
                        for j in 0..m {
                            let pj = vp.get(i, j).max(eps);
                            let qj = vq.get(i, j).max(eps);
                            dp.set(i, j, gs * (pj.ln() - qj.ln() + F::one()));
                        }
                    }
                    accumulate(&mut grads[p.0], dp);
                }
                if self.rg(*q) {
                    let mut dq = Tensor::zeros(n, m);
                    for i in 0..n {
                        for j in 0..m {
                            let pij = vp.get(i, j);
                            if pij > F::zero() {
                                let qj = vq.get(i, j).max(eps);
                                dq.set(i, j, -gs * pij / qj);
                            }
                        }
                    }
                    accumulate(&mut grads[q.0], dq);
                }
            }
            Op::BatchNormRows { x, gamma, beta, xhat, inv_std, train } => {
                let (n, d) = xhat.shape();
                let nf = F::from_f64(n.max(1) as f64);
                let vg = self.nodes[gamma.0].value.data();
                // column sums of g and g*xhat
                let mut sum_g = vec![F::zero(); d];
                let mut sum_gx = vec![F::zero(); d];
                for i in 0..n {
                    let gr = g.row(i);
                    let xr = xhat.row(i);
                    for j in 0..d {
                        sum_g[j] += gr[j];
                        sum_gx[j] += gr[j] * xr[j];
                    }
                }
                if self.rg(*beta) {
                    accumulate(&mut grads[beta.0], Tensor::from_vec(1, d, sum_g.clone()));
                }
                if self.rg(*gamma) {
                    accumulate(&mut grads[gamma.0], Tensor::from_vec(1, d, sum_gx.clone()));
                }
                if self.rg(*x) {
                    let mut dx = Tensor::zeros(n, d);
                    for i in 0..n {
                        let gr = g.row(i);
                        let xr = xhat.row(i);
                        for j in 0..d {
                            let s = inv_std[j];
                            // eval mode: statistics are constants
                            let v = if *train {
                                vg[j] * s * (gr[j] - sum_g[j] / nf - xr[j] * sum_gx[j] / nf)
                            } else {
                                vg[j] * s * gr[j]
                            };
                            dx.set(i, j, v);
                        }
                    }
                    accumulate(&mut grads[x.0], dx);
                }
            }
        }
    }
}

fn accumulate<F: Real>(slot: &mut Option<Tensor<F>>, delta: Tensor<F>) {
    match slot {
        None => *slot = Some(delta),
        Some(acc) => {
            for (x, y) in acc.data_mut().iter_mut().zip(delta.data()) {
                *x += *y;
            }
        }
    }
}

fn softmax_into<F: Real>(src: &[F], dst: &mut [F]) {
    let mut max = src[0];
    for &x in src.iter() {
        if x > max {
            max = x;
        }
    }
    let mut total = F::zero();
    for (d, &x) in dst.iter_mut().zip(src) {
        let e = (x - max).exp();
        *d = e;
        total += e;
    }
    for d in dst.iter_mut() {
        *d /= total;
    }
}

fn cosine<F: Real>(a: &[F], b: &[F], eps: F) -> F {
    let mut dot = F::zero();
    for (x, y) in a.iter().zip(b) {
        dot += *x * *y;
    }
    dot / (norm(a).max(eps) * norm(b).max(eps))
}

fn norm<F: Real>(a: &[F]) -> F {
    let mut acc = F::zero();
    for &x in a {
        acc += x * x;
    }
    acc.sqrt()
}

/// Row-stochastic softmax of a plain tensor (no tape).
pub fn softmax_rows_value<F: Real>(x: &Tensor<F>) -> Tensor<F> {
    let (r, c) = x.shape();
    let mut out = Tensor::zeros(r, c);
    for i in 0..r {
        softmax_into(x.row(i), out.row_mut(i));
    }
    out
}

/// Cosine similarity of two slices with an epsilon guard (no tape).
pub fn cosine_value<F: Real>(a: &[F], b: &[F]) -> F {
    cosine(a, b, F::from_f64(EPS))
}
