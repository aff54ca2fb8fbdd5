//! Evaluation metrics: accuracy, partition cut value, production-setting
//! interpolation, and embedding-space retrieval.

// required for float math in pure no_std builds; redundant (and flagged
// unused) when a dependency links std and exposes the inherent methods
#[allow(unused_imports)]
use num_traits::Float as _;
use alloc::format;
use alloc::vec::Vec;

use crate::graph::{Adjacency, GraphError};
use crate::tensor::{matmul, matmul_tn, Real, Tensor, TensorError};

/// Row-wise argmax; ties resolve to the lowest class index.
pub fn argmax_rows<F: Real>(logits: &Tensor<F>) -> Vec<usize> {
    let (n, k) = logits.shape();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let row = logits.row(i);
        let mut best = 0usize;
        for j in 1..k {
            if row[j] > row[best] {
                best = j;
            }
        }
        out.push(best);
    }
    out
}

/// Fraction of `mask` rows whose argmax prediction matches the label.
pub fn accuracy<F: Real>(
    logits: &Tensor<F>,
    labels: &[usize],
    mask: &[usize],
) -> Result<f64, TensorError> {
    if mask.is_empty() {
        return Err(TensorError::EmptyInput { op: "accuracy" });
    }
    let (n, _) = logits.shape();
    if labels.len() != n {
        return Err(TensorError::InvalidArgument {
            op: "accuracy",
            message: format!("{} labels for {n} rows", labels.len()),
        });
    }
    let preds = argmax_rows(logits);
    let mut hits = 0usize;
    for &r in mask {
        if r >= n {
            return Err(TensorError::IndexOutOfRange { index: r, len: n });
        }
        if preds[r] == labels[r] {
            hits += 1;
        }
    }
    Ok(hits as f64 / mask.len() as f64)
}

/// Normalized cut quality of a node partition:
/// `tr(Y' A Y) / tr(Y' D Y)` with one-hot `Y`, raw adjacency `A` (no
/// self-loops) and degree matrix `D`. Equals the fraction of edge
/// endpoints that stay inside their own part; higher is better.
pub fn cut_value(adj: &Adjacency, assignments: &[usize]) -> Result<f64, GraphError> {
    let n = adj.num_nodes();
    if assignments.len() != n {
        return Err(GraphError::InvalidArgument(format!(
            "{} assignments for {n} nodes",
            assignments.len()
        )));
    }
    let total = adj.total_degree();
    if total == 0 {
        return Err(GraphError::InvalidArgument("cut value undefined for an edgeless graph".into()));
    }
    let mut same = 0usize;
    for u in 0..n {
        for &v in adj.neighbors(u) {
            if assignments[u] == assignments[v] {
                same += 1;
            }
        }
    }
    Ok(same as f64 / total as f64)
}

/// Reference implementation of [`cut_value`] by explicit dense trace
/// computation. Quadratic in the node count; used to cross-check the
/// sparse path on small graphs.
pub fn cut_value_dense_oracle(adj: &Adjacency, assignments: &[usize]) -> Result<f64, GraphError> {
    let n = adj.num_nodes();
    if assignments.len() != n {
        return Err(GraphError::InvalidArgument(format!(
            "{} assignments for {n} nodes",
            assignments.len()
        )));
    }
    let k = assignments.iter().copied().max().map_or(0, |m| m + 1);
    let mut y = Tensor::<f64>::zeros(n, k.max(1));
    for (i, &z) in assignments.iter().enumerate() {
        y.set(i, z, 1.0);
    }
    let mut a = Tensor::<f64>::zeros(n, n);
    let mut deg = Tensor::<f64>::zeros(n, n);
    for u in 0..n {
        for &v in adj.neighbors(u) {
            a.set(u, v, 1.0);
        }
        deg.set(u, u, adj.degree(u) as f64);
    }
    let num = trace(&matmul_tn(&y, &matmul(&a, &y)));
    let den = trace(&matmul_tn(&y, &matmul(&deg, &y)));
    if den == 0.0 {
        return Err(GraphError::InvalidArgument("cut value undefined for an edgeless graph".into()));
    }
    Ok(num / den)
}

fn trace(m: &Tensor<f64>) -> f64 {
    let d = m.rows().min(m.cols());
    (0..d).map(|i| m.get(i, i)).sum()
}

/// Accuracy in the three deployment settings. The production number
/// interpolates between the transductive and inductive accuracies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProductionMetrics {
    pub transductive: f64,
    pub inductive: f64,
    pub production: f64,
}

/// Combine the two settings with the given transductive weight
/// (0.8 by convention: 80% of test nodes were seen during training).
pub fn production_metrics(transductive: f64, inductive: f64, tran_weight: f64) -> ProductionMetrics {
    ProductionMetrics {
        transductive,
        inductive,
        production: tran_weight * transductive + (1.0 - tran_weight) * inductive,
    }
}

/// The `k` nodes most cosine-similar to `query` in embedding space.
/// The query itself is excluded; ties break toward the lower node id.
pub fn retrieve_similar_nodes<F: Real>(
    embeddings: &Tensor<F>,
    query: usize,
    k: usize,
) -> Result<Vec<(usize, f64)>, TensorError> {
    let (n, d) = embeddings.shape();
    if query >= n {
        return Err(TensorError::IndexOutOfRange { index: query, len: n });
    }
    let eps = 1e-12f64;
    let q: Vec<f64> = embeddings.row(query).iter().map(|&v| v.to_f64()).collect();
    let qn = q.iter().map(|v| v * v).sum::<f64>().sqrt().max(eps);
    let mut scored: Vec<(usize, f64)> = Vec::with_capacity(n.saturating_sub(1));
    for i in 0..n {
        if i == query {
            continue;
        }
        let row = embeddings.row(i);
        let mut dot = 0.0f64;
        let mut nn = 0.0f64;
        for j in 0..d {
            let v = row[j].to_f64();
            dot += v * q[j];
            nn += v * v;
        }
        scored.push((i, dot / (nn.sqrt().max(eps) * qn)));
    }
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(core::cmp::Ordering::Equal).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    Ok(scored)
}
