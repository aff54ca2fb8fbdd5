//! Graph container: symmetric adjacency in CSR form, node features,
//! labels, plus adjacency normalization and feature-noise injection.

// required for float math in pure no_std builds; redundant (and flagged
// unused) when a dependency links std and exposes the inherent methods
#[allow(unused_imports)]
use num_traits::Float as _;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::rng;
use crate::tensor::{CsrMatrix, Real, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub enum GraphError {
    NodeOutOfRange { node: usize, num_nodes: usize },
    LabelOutOfRange { node: usize, label: usize, num_classes: usize },
    FeatureRowCount { expected: usize, actual: usize },
    LabelCount { expected: usize, actual: usize },
    InvalidArgument(String),
}

impl fmt::Display for GraphError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphError::NodeOutOfRange { node, num_nodes } => {
                write!(f, "node id {node} out of range for {num_nodes} nodes")
            }
            GraphError::LabelOutOfRange { node, label, num_classes } => {
                write!(f, "label {label} of node {node} out of range for {num_classes} classes")
            }
            GraphError::FeatureRowCount { expected, actual } => {
                write!(f, "feature matrix has {actual} rows, expected {expected}")
            }
            GraphError::LabelCount { expected, actual } => {
                write!(f, "label vector has {actual} entries, expected {expected}")
            }
            GraphError::InvalidArgument(msg) => write!(f, "{msg}"),
        }
    }
}

impl core::error::Error for GraphError {}

/// Undirected adjacency structure (no weights, no self-loops).
#[derive(Debug, Clone, PartialEq)]
pub struct Adjacency {
    num_nodes: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
}

impl Adjacency {
    /// Build from undirected edge pairs: symmetrizes, deduplicates and
    /// drops self-loops.
    pub fn from_edges(num_nodes: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        let mut directed: Vec<(usize, usize)> = Vec::with_capacity(edges.len() * 2);
        for &(u, v) in edges {
            if u >= num_nodes {
                return Err(GraphError::NodeOutOfRange { node: u, num_nodes });
            }
            if v >= num_nodes {
                return Err(GraphError::NodeOutOfRange { node: v, num_nodes });
            }
            if u == v {
                continue;
            }
            directed.push((u, v));
            directed.push((v, u));
        }
        directed.sort_unstable();
        directed.dedup();
        let mut indptr = vec![0usize; num_nodes + 1];
        for &(u, _) in &directed {
            indptr[u + 1] += 1;
        }
        for i in 0..num_nodes {
            indptr[i + 1] += indptr[i];
        }
        let indices = directed.into_iter().map(|(_, v)| v).collect();
        Ok(Adjacency { num_nodes, indptr, indices })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.indices.len() / 2
    }

    pub fn degree(&self, node: usize) -> usize {
        self.indptr[node + 1] - self.indptr[node]
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.indices[self.indptr[node]..self.indptr[node + 1]]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Undirected edge list with `u < v`.
    pub fn edge_list(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.num_edges());
        for u in 0..self.num_nodes {
            for &v in self.neighbors(u) {
                if u < v {
                    out.push((u, v));
                }
            }
        }
        out
    }

    pub fn total_degree(&self) -> usize {
        self.indices.len()
    }
}

/// A node-classification dataset: adjacency, features, labels.
#[derive(Debug, Clone)]
pub struct Graph {
    pub adjacency: Adjacency,
    pub features: Tensor<f32>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl Graph {
    pub fn new(
        num_nodes: usize,
        edges: &[(usize, usize)],
        features: Tensor<f32>,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self, GraphError> {
        if features.rows() != num_nodes {
            return Err(GraphError::FeatureRowCount { expected: num_nodes, actual: features.rows() });
        }
        if labels.len() != num_nodes {
            return Err(GraphError::LabelCount { expected: num_nodes, actual: labels.len() });
        }
        for (node, &label) in labels.iter().enumerate() {
            if label >= num_classes {
                return Err(GraphError::LabelOutOfRange { node, label, num_classes });
            }
        }
        let adjacency = Adjacency::from_edges(num_nodes, edges)?;
        Ok(Graph { adjacency, features, labels, num_classes })
    }

    pub fn num_nodes(&self) -> usize {
        self.adjacency.num_nodes()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    /// Same nodes/features/labels over a different edge set (used for the
    /// inductive training graph with held-out edges removed).
    pub fn with_edges(&self, edges: &[(usize, usize)]) -> Result<Graph, GraphError> {
        Ok(Graph {
            adjacency: Adjacency::from_edges(self.num_nodes(), edges)?,
            features: self.features.clone(),
            labels: self.labels.clone(),
            num_classes: self.num_classes,
        })
    }

    pub fn features_as<F: Real>(&self) -> Tensor<F> {
        self.features.cast()
    }
}

/// Aggregation normalization mode for the GNN.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormMode {
    /// `D^{-1/2} (A + I) D^{-1/2}` with degrees of `A + I`.
    GcnSym,
    /// Row-normalized `A + I`; every row sums to one.
    Mean,
}

/// Normalized adjacency with self-loops, in CSR form.
pub fn normalize_adjacency<F: Real>(adj: &Adjacency, mode: NormMode) -> CsrMatrix<F> {
    let n = adj.num_nodes();
    let mut triplets: Vec<(usize, usize, F)> = Vec::with_capacity(adj.total_degree() + n);
    match mode {
        NormMode::GcnSym => {
            let inv_sqrt: Vec<F> = (0..n)
                .map(|v| F::from_f64(1.0 / (((adj.degree(v) + 1) as f64).sqrt())))
                .collect();
            for u in 0..n {
                triplets.push((u, u, inv_sqrt[u] * inv_sqrt[u]));
                for &v in adj.neighbors(u) {
                    triplets.push((u, v, inv_sqrt[u] * inv_sqrt[v]));
                }
            }
        }
        NormMode::Mean => {
            for u in 0..n {
                let w = F::from_f64(1.0 / ((adj.degree(u) + 1) as f64));
                triplets.push((u, u, w));
                for &v in adj.neighbors(u) {
                    triplets.push((u, v, w));
                }
            }
        }
    }
    CsrMatrix::from_triplets(n, n, &triplets)
}

/// Blend features with i.i.d. standard normal noise:
/// `X~ = (1 - alpha) * X + alpha * n`. `alpha = 0` is the bit-for-bit
/// identity; `alpha = 1` is pure noise.
pub fn add_feature_noise(
    x: &Tensor<f32>,
    alpha: f64,
    seed: u64,
) -> Result<Tensor<f32>, GraphError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(GraphError::InvalidArgument(format!("noise level {alpha} outside [0,1]")));
    }
    if alpha == 0.0 {
        return Ok(x.clone());
    }
    let mut rng = rng::stream(seed, "feature-noise");
    let a = alpha as f32;
    let keep = 1.0 - a;
    let mut out = x.clone();
    for v in out.data_mut() {
        let n: f32 = StandardNormal.sample(&mut rng);
        *v = keep * *v + a * n;
    }
    Ok(out)
}

/// Row-normalize features in place (L1 or L2); rows with zero norm are
/// left untouched.
pub fn normalize_features_rows(x: &mut Tensor<f32>, l2: bool) {
    for r in 0..x.rows() {
        let row = x.row_mut(r);
        let norm: f32 = if l2 {
            row.iter().map(|v| v * v).sum::<f32>().sqrt()
        } else {
            row.iter().map(|v| v.abs()).sum()
        };
        if norm > 0.0 {
            for v in row {
                *v /= norm;
            }
        }
    }
}

/// Deterministic uniform sample in [-1, 1) scaled by `bound` — helper for
/// codebook and weight init.
pub fn uniform_tensor<F: Real>(rows: usize, cols: usize, bound: f64, rng: &mut rng::Rng) -> Tensor<F> {
    let mut t = Tensor::zeros(rows, cols);
    for v in t.data_mut() {
        let u: f64 = rng.random::<f64>() * 2.0 - 1.0;
        *v = F::from_f64(u * bound);
    }
    t
}
