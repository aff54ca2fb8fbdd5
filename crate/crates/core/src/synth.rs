//! Synthetic graph generators for tests, benchmarks and smoke runs.

use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::graph::Graph;
use crate::rng;
use crate::tensor::Tensor;

/// Stochastic block model with Gaussian class-mean features.
///
/// `p_in` is the within-block edge probability, `p_out` the cross-block
/// probability. Features are a class-specific mean plus unit noise scaled
/// by `feature_noise`.
pub fn sbm(seed: u64, block_sizes: &[usize], p_in: f64, p_out: f64, feat_dim: usize, feature_noise: f64) -> Graph {
    let n: usize = block_sizes.iter().sum();
    let k = block_sizes.len();
    let mut labels = Vec::with_capacity(n);
    for (c, &size) in block_sizes.iter().enumerate() {
        for _ in 0..size {
            labels.push(c);
        }
    }
    let mut edge_rng = rng::stream(seed, "sbm-edges");
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let p = if labels[u] == labels[v] { p_in } else { p_out };
            if edge_rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    let mut feat_rng = rng::stream(seed, "sbm-features");
    // orthogonal-ish class means on distinct coordinates
    let mut means = Tensor::<f32>::zeros(k, feat_dim);
    for c in 0..k {
        means.set(c, c % feat_dim, 2.0);
        means.set(c, (c + 1) % feat_dim, -1.0);
    }
    let mut features = Tensor::<f32>::zeros(n, feat_dim);
    for v in 0..n {
        let mean = means.row(labels[v]).to_vec();
        for (j, f) in features.row_mut(v).iter_mut().enumerate() {
            let noise: f32 = StandardNormal.sample(&mut feat_rng);
            *f = mean[j] + (feature_noise as f32) * noise;
        }
    }
    Graph::new(n, &edges, features, labels, k).expect("sbm construction is valid")
}

/// Random graph with a target average degree and random labels/features.
/// Used for oracle comparisons and latency benchmarks where only the
/// scale matters.
pub fn random_graph(seed: u64, n: usize, avg_degree: f64, feat_dim: usize, num_classes: usize) -> Graph {
    let mut rng = rng::stream(seed, "random-graph");
    let target_edges = ((n as f64) * avg_degree / 2.0) as usize;
    let mut edges = Vec::with_capacity(target_edges);
    for _ in 0..target_edges {
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        if u != v {
            edges.push((u, v));
        }
    }
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..num_classes)).collect();
    let mut features = Tensor::<f32>::zeros(n, feat_dim);
    for f in features.data_mut() {
        *f = StandardNormal.sample(&mut rng);
    }
    Graph::new(n, &edges, features, labels, num_classes).expect("random graph is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sbm_is_deterministic() {
        let a = sbm(3, &[10, 10], 0.3, 0.05, 4, 0.5);
        let b = sbm(3, &[10, 10], 0.3, 0.05, 4, 0.5);
        assert_eq!(a.adjacency, b.adjacency);
        assert_eq!(a.features, b.features);
    }

    #[test]
    fn sbm_blocks_are_denser_inside() {
        let g = sbm(5, &[40, 40], 0.3, 0.02, 4, 0.5);
        let mut within = 0usize;
        let mut across = 0usize;
        for (u, v) in g.adjacency.edge_list() {
            if g.labels[u] == g.labels[v] {
                within += 1;
            } else {
                across += 1;
            }
        }
        assert!(within > across * 3);
    }
}
