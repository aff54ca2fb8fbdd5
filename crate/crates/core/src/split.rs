//! Transductive and inductive node splits.
//!
//! A split partitions the nodes into labeled, observed-unlabeled and
//! inductive sets. In the inductive setting every edge incident to an
//! inductive node is removed from the training edge set and restored at
//! inference time.

// required for float math in pure no_std builds; redundant (and flagged
// unused) when a dependency links std and exposes the inherent methods
#[allow(unused_imports)]
use num_traits::Float as _;
use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::graph::{Graph, GraphError};
use crate::rng;

/// How many nodes get labels during training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LabeledSpec {
    /// Fixed number of labeled nodes per class (citation-graph convention).
    PerClass(usize),
    /// Fixed total count.
    Count(usize),
    /// Fraction of all nodes.
    Fraction(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    pub labeled: Vec<usize>,
    pub observed_unlabeled: Vec<usize>,
    pub inductive: Vec<usize>,
    /// Undirected edges visible during training.
    pub train_edges: Vec<(usize, usize)>,
    pub seed: u64,
}

impl SplitSpec {
    pub fn is_inductive(&self) -> bool {
        !self.inductive.is_empty()
    }

    /// Check the partition and edge-removal invariants by scan.
    pub fn validate(&self, graph: &Graph) -> Result<(), GraphError> {
        let n = graph.num_nodes();
        let mut seen = alloc::vec![0u8; n];
        for set in [&self.labeled, &self.observed_unlabeled, &self.inductive] {
            for &v in set {
                if v >= n {
                    return Err(GraphError::NodeOutOfRange { node: v, num_nodes: n });
                }
                seen[v] += 1;
            }
        }
        if seen.iter().any(|&c| c != 1) {
            return Err(GraphError::InvalidArgument(
                "split sets do not partition the node set".into(),
            ));
        }
        let mut inductive = alloc::vec![false; n];
        for &v in &self.inductive {
            inductive[v] = true;
        }
        for &(u, v) in &self.train_edges {
            if inductive[u] || inductive[v] {
                return Err(GraphError::InvalidArgument(format!(
                    "train edge ({u},{v}) touches an inductive node"
                )));
            }
        }
        Ok(())
    }
}

fn pick_labeled(graph: &Graph, spec: LabeledSpec, rng: &mut rng::Rng) -> Result<Vec<usize>, GraphError> {
    let n = graph.num_nodes();
    let mut labeled = match spec {
        LabeledSpec::PerClass(k) => {
            let mut by_class: Vec<Vec<usize>> = alloc::vec![Vec::new(); graph.num_classes];
            for (v, &c) in graph.labels.iter().enumerate() {
                by_class[c].push(v);
            }
            let mut labeled = Vec::new();
            for nodes in by_class.iter_mut() {
                if nodes.len() < k {
                    return Err(GraphError::InvalidArgument(format!(
                        "class has only {} nodes, cannot label {k} per class",
                        nodes.len()
                    )));
                }
                nodes.shuffle(rng);
                labeled.extend_from_slice(&nodes[..k]);
            }
            labeled
        }
        LabeledSpec::Count(count) => {
            if count > n {
                return Err(GraphError::InvalidArgument(format!(
                    "labeled count {count} exceeds {n} nodes"
                )));
            }
            let mut nodes: Vec<usize> = (0..n).collect();
            nodes.shuffle(rng);
            nodes.truncate(count);
            nodes
        }
        LabeledSpec::Fraction(f) => {
            if !(0.0..=1.0).contains(&f) {
                return Err(GraphError::InvalidArgument(format!(
                    "labeled fraction {f} outside [0,1]"
                )));
            }
            let count = ((n as f64) * f).round() as usize;
            let mut nodes: Vec<usize> = (0..n).collect();
            nodes.shuffle(rng);
            nodes.truncate(count);
            nodes
        }
    };
    labeled.sort_unstable();
    Ok(labeled)
}

/// All nodes stay observed; the full edge set is used for training.
pub fn make_transductive_split(
    graph: &Graph,
    seed: u64,
    spec: LabeledSpec,
) -> Result<SplitSpec, GraphError> {
    let mut rng = rng::stream(seed, "split");
    let labeled = pick_labeled(graph, spec, &mut rng)?;
    let mut is_labeled = alloc::vec![false; graph.num_nodes()];
    for &v in &labeled {
        is_labeled[v] = true;
    }
    let observed_unlabeled = (0..graph.num_nodes()).filter(|&v| !is_labeled[v]).collect();
    Ok(SplitSpec {
        labeled,
        observed_unlabeled,
        inductive: Vec::new(),
        train_edges: graph.adjacency.edge_list(),
        seed,
    })
}

/// Hold out `ind_fraction` of the unlabeled nodes; edges incident to them
/// are removed from the training edge set.
pub fn make_inductive_split(
    graph: &Graph,
    seed: u64,
    spec: LabeledSpec,
    ind_fraction: f64,
) -> Result<SplitSpec, GraphError> {
    if !(ind_fraction > 0.0 && ind_fraction < 1.0) {
        return Err(GraphError::InvalidArgument(format!(
            "inductive fraction {ind_fraction} outside (0,1)"
        )));
    }
    let mut rng = rng::stream(seed, "split");
    let labeled = pick_labeled(graph, spec, &mut rng)?;
    let mut is_labeled = alloc::vec![false; graph.num_nodes()];
    for &v in &labeled {
        is_labeled[v] = true;
    }
    let mut unlabeled: Vec<usize> = (0..graph.num_nodes()).filter(|&v| !is_labeled[v]).collect();
    unlabeled.shuffle(&mut rng);
    let ind_count = ((unlabeled.len() as f64) * ind_fraction).round() as usize;
    let mut inductive: Vec<usize> = unlabeled[..ind_count].to_vec();
    let mut observed: Vec<usize> = unlabeled[ind_count..].to_vec();
    inductive.sort_unstable();
    observed.sort_unstable();
    let mut is_inductive = alloc::vec![false; graph.num_nodes()];
    for &v in &inductive {
        is_inductive[v] = true;
    }
    let train_edges = graph
        .adjacency
        .edge_list()
        .into_iter()
        .filter(|&(u, v)| !is_inductive[u] && !is_inductive[v])
        .collect();
    Ok(SplitSpec {
        labeled,
        observed_unlabeled: observed,
        inductive,
        train_edges,
        seed,
    })
}

/// Pick validation nodes out of the observed-unlabeled set, per class.
/// Their labels are used for model selection only.
pub fn select_validation(
    graph: &Graph,
    split: &SplitSpec,
    per_class: usize,
    seed: u64,
) -> Vec<usize> {
    let mut rng = rng::stream(seed, "validation");
    let mut by_class: Vec<Vec<usize>> = alloc::vec![Vec::new(); graph.num_classes];
    for &v in &split.observed_unlabeled {
        by_class[graph.labels[v]].push(v);
    }
    let mut val = Vec::new();
    for nodes in by_class.iter_mut() {
        nodes.shuffle(&mut rng);
        let take = per_class.min(nodes.len());
        val.extend_from_slice(&nodes[..take]);
    }
    val.sort_unstable();
    val
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;
    use crate::tensor::Tensor;
    use alloc::vec;

    fn toy_graph(n: usize) -> Graph {
        let edges: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        Graph::new(n, &edges, Tensor::zeros(n, 4), labels, 2).unwrap()
    }

    #[test]
    fn transductive_counts_and_determinism() {
        let g = toy_graph(10);
        let s = make_transductive_split(&g, 7, LabeledSpec::Count(4)).unwrap();
        assert_eq!(s.labeled.len(), 4);
        assert_eq!(s.observed_unlabeled.len(), 6);
        assert!(s.inductive.is_empty());
        assert_eq!(s.train_edges.len(), g.adjacency.num_edges());
        let again = make_transductive_split(&g, 7, LabeledSpec::Count(4)).unwrap();
        assert_eq!(s, again);
        s.validate(&g).unwrap();
    }

    #[test]
    fn transductive_count_too_large_rejected() {
        let g = toy_graph(10);
        assert!(make_transductive_split(&g, 7, LabeledSpec::Count(11)).is_err());
    }

    #[test]
    fn per_class_labeling() {
        let g = toy_graph(10);
        let s = make_transductive_split(&g, 3, LabeledSpec::PerClass(2)).unwrap();
        assert_eq!(s.labeled.len(), 4);
        let counts = s.labeled.iter().filter(|&&v| g.labels[v] == 0).count();
        assert_eq!(counts, 2);
    }

    #[test]
    fn inductive_fraction_and_edge_removal() {
        let g = synth::sbm(11, &[60, 60], 0.2, 0.02, 8, 1.0);
        let s = make_inductive_split(&g, 5, LabeledSpec::PerClass(10), 0.2).unwrap();
        let unlabeled = g.num_nodes() - s.labeled.len();
        assert_eq!(s.inductive.len(), ((unlabeled as f64) * 0.2).round() as usize);
        s.validate(&g).unwrap();
        // removed edges are exactly those touching inductive nodes
        let mut ind = vec![false; g.num_nodes()];
        for &v in &s.inductive {
            ind[v] = true;
        }
        let removed = g
            .adjacency
            .edge_list()
            .iter()
            .filter(|&&(u, v)| ind[u] || ind[v])
            .count();
        assert_eq!(s.train_edges.len(), g.adjacency.num_edges() - removed);
    }

    #[test]
    fn inductive_fraction_zero_rejected() {
        let g = toy_graph(10);
        assert!(make_inductive_split(&g, 5, LabeledSpec::Count(2), 0.0).is_err());
    }

    #[test]
    fn validation_disjoint_from_labeled() {
        let g = toy_graph(20);
        let s = make_transductive_split(&g, 7, LabeledSpec::PerClass(3)).unwrap();
        let val = select_validation(&g, &s, 2, 7);
        assert_eq!(val.len(), 4);
        for v in &val {
            assert!(!s.labeled.contains(v));
        }
    }
}
