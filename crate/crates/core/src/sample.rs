//! Fixed fan-out neighbor sampling for mini-batch training.
//!
//! A [`SampledBlock`] holds one batch: the target nodes, the per-layer
//! sampled neighborhoods needed to compute their embeddings, and the
//! adjacency induced among the targets, which serves as the
//! edge-reconstruction target in mini-batch tokenizer training.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::IndexedRandom;
use rand::Rng as _;

use crate::graph::{Graph, GraphError};
use crate::rng;

/// One message-passing layer of a sampled block, nearest the input first.
#[derive(Debug, Clone)]
pub struct BlockLayer {
    /// Global ids of the nodes whose embeddings this layer produces.
    pub nodes_out: Vec<usize>,
    /// Global ids whose previous-layer embeddings are consumed.
    pub nodes_in: Vec<usize>,
    /// Position of each output node inside `nodes_in`.
    pub self_pos: Vec<usize>,
    /// Positions of the sampled neighbors of each output node inside
    /// `nodes_in`; length per node is exactly the layer fan-out (repeats
    /// appear when sampling with replacement).
    pub neighbor_pos: Vec<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct SampledBlock {
    pub target_nodes: Vec<usize>,
    pub layers: Vec<BlockLayer>,
    /// Edges among target nodes, as local index pairs (u < v).
    pub induced_edges: Vec<(usize, usize)>,
    pub fanouts: Vec<usize>,
}

impl SampledBlock {
    pub fn num_targets(&self) -> usize {
        self.target_nodes.len()
    }

    /// Global ids whose raw features the block consumes.
    pub fn input_nodes(&self) -> &[usize] {
        &self.layers[0].nodes_in
    }
}

/// Sample a block for `targets` with one fan-out per layer. Sampling is
/// uniform without replacement when the degree covers the fan-out and
/// with replacement otherwise; isolated nodes fall back to themselves.
pub fn sample_neighbors(
    graph: &Graph,
    targets: &[usize],
    fanouts: &[usize],
    seed: u64,
) -> Result<SampledBlock, GraphError> {
    if targets.is_empty() {
        return Err(GraphError::InvalidArgument("empty target list".into()));
    }
    if fanouts.is_empty() {
        return Err(GraphError::InvalidArgument("empty fan-out list".into()));
    }
    let n = graph.num_nodes();
    for &t in targets {
        if t >= n {
            return Err(GraphError::NodeOutOfRange { node: t, num_nodes: n });
        }
    }
    let mut rng = rng::stream(seed, "neighbor-sampling");
    let mut local_of = vec![usize::MAX; n];

    let mut frontier: Vec<usize> = targets.to_vec();
    frontier.sort_unstable();
    frontier.dedup();

    let mut layers_rev: Vec<BlockLayer> = Vec::with_capacity(fanouts.len());
    for &fanout in fanouts.iter().rev() {
        let nodes_out = frontier.clone();
        let mut sampled: Vec<Vec<usize>> = Vec::with_capacity(nodes_out.len());
        for &v in &nodes_out {
            let nbrs = graph.adjacency.neighbors(v);
            let picks: Vec<usize> = if nbrs.is_empty() {
                vec![v; fanout]
            } else if nbrs.len() >= fanout {
                nbrs.choose_multiple(&mut rng, fanout).copied().collect()
            } else {
                (0..fanout).map(|_| nbrs[rng.random_range(0..nbrs.len())]).collect()
            };
            sampled.push(picks);
        }
        let mut nodes_in = nodes_out.clone();
        for picks in &sampled {
            nodes_in.extend_from_slice(picks);
        }
        nodes_in.sort_unstable();
        nodes_in.dedup();
        for (local, &g) in nodes_in.iter().enumerate() {
            local_of[g] = local;
        }
        let self_pos = nodes_out.iter().map(|&v| local_of[v]).collect();
        let neighbor_pos = sampled
            .iter()
            .map(|picks| picks.iter().map(|&v| local_of[v]).collect())
            .collect();
        for &g in &nodes_in {
            local_of[g] = usize::MAX;
        }
        layers_rev.push(BlockLayer { nodes_out, nodes_in: nodes_in.clone(), self_pos, neighbor_pos });
        frontier = nodes_in;
    }
    layers_rev.reverse();

    // induced adjacency among the (deduplicated) target set
    let target_nodes = layers_rev.last().expect("at least one layer").nodes_out.clone();
    for (local, &g) in target_nodes.iter().enumerate() {
        local_of[g] = local;
    }
    let mut induced_edges = Vec::new();
    for (lu, &u) in target_nodes.iter().enumerate() {
        for &v in graph.adjacency.neighbors(u) {
            let lv = local_of[v];
            if lv != usize::MAX && lu < lv {
                induced_edges.push((lu, lv));
            }
        }
    }
    for &g in &target_nodes {
        local_of[g] = usize::MAX;
    }

    Ok(SampledBlock { target_nodes, layers: layers_rev, induced_edges, fanouts: fanouts.to_vec() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    #[test]
    fn degree_below_fanout_samples_with_replacement() {
        // star: node 0 connected to 1,2,3
        let g = crate::graph::Graph::new(
            4,
            &[(0, 1), (0, 2), (0, 3)],
            crate::tensor::Tensor::zeros(4, 2),
            alloc::vec![0; 4],
            1,
        )
        .unwrap();
        let block = sample_neighbors(&g, &[0], &[5], 9).unwrap();
        let layer = &block.layers[0];
        assert_eq!(layer.neighbor_pos[layer.self_pos.len() - 1].len(), 5);
        // all sampled neighbors must come from {1,2,3}
        let out_pos = layer.nodes_out.iter().position(|&v| v == 0).unwrap();
        for &p in &layer.neighbor_pos[out_pos] {
            assert!((1..=3).contains(&layer.nodes_in[p]));
        }
    }

    #[test]
    fn degree_above_fanout_samples_distinct() {
        let edges: Vec<(usize, usize)> = (1..=10).map(|v| (0, v)).collect();
        let g = crate::graph::Graph::new(
            11,
            &edges,
            crate::tensor::Tensor::zeros(11, 2),
            alloc::vec![0; 11],
            1,
        )
        .unwrap();
        let block = sample_neighbors(&g, &[0], &[5], 3).unwrap();
        let layer = &block.layers[0];
        let out_pos = layer.nodes_out.iter().position(|&v| v == 0).unwrap();
        let mut picks: Vec<usize> = layer.neighbor_pos[out_pos]
            .iter()
            .map(|&p| layer.nodes_in[p])
            .collect();
        assert_eq!(picks.len(), 5);
        picks.sort_unstable();
        picks.dedup();
        assert_eq!(picks.len(), 5);
    }

    #[test]
    fn deterministic_under_seed_and_two_layers() {
        let g = synth::sbm(2, &[30, 30], 0.2, 0.05, 4, 0.5);
        let a = sample_neighbors(&g, &[3, 7, 11], &[5, 5], 42).unwrap();
        let b = sample_neighbors(&g, &[3, 7, 11], &[5, 5], 42).unwrap();
        assert_eq!(a.target_nodes, b.target_nodes);
        assert_eq!(a.induced_edges, b.induced_edges);
        assert_eq!(a.layers.len(), 2);
        for (la, lb) in a.layers.iter().zip(&b.layers) {
            assert_eq!(la.nodes_in, lb.nodes_in);
            assert_eq!(la.neighbor_pos, lb.neighbor_pos);
        }
        // fan-out cap holds everywhere
        for (layer, &fanout) in a.layers.iter().zip(&a.fanouts) {
            for picks in &layer.neighbor_pos {
                assert!(picks.len() <= fanout);
            }
        }
    }

    #[test]
    fn induced_edges_are_subgraph_of_full_adjacency() {
        let g = synth::sbm(4, &[20, 20], 0.3, 0.1, 4, 0.5);
        let targets: Vec<usize> = (0..10).collect();
        let block = sample_neighbors(&g, &targets, &[5], 1).unwrap();
        for &(lu, lv) in &block.induced_edges {
            let u = block.target_nodes[lu];
            let v = block.target_nodes[lv];
            assert!(g.adjacency.has_edge(u, v));
        }
    }

    #[test]
    fn empty_targets_rejected() {
        let g = synth::sbm(4, &[10], 0.3, 0.0, 4, 0.5);
        assert!(sample_neighbors(&g, &[], &[5], 1).is_err());
    }
}
