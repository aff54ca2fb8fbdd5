//! Single-node inference latency measurements.
//!
//! The teacher's cost includes fetching and aggregating the sampled
//! neighborhood of the query node; the student reads only the query's own
//! feature row. Warm-up queries are excluded from the statistics.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;
use std::time::Instant;

use graphvq_core::gnn::{block_agg_csr, block_agg_inputs, GnnModel, MlpModel};
use graphvq_core::graph::Graph;
use graphvq_core::rng;
use graphvq_core::sample::{sample_neighbors, BlockLayer};
use graphvq_core::tensor::Tensor;
use rand::Rng as _;

use crate::error::CliError;
use crate::export::sig9;

#[derive(Debug, Clone, Copy)]
pub struct LatencyStats {
    pub median_us: f64,
    pub p95_us: f64,
    pub reps: usize,
}

/// Percentile of a sorted sample by nearest-rank interpolation.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
    }
}

fn stats(mut micros: Vec<f64>) -> LatencyStats {
    micros.sort_by(|a, b| a.partial_cmp(b).unwrap());
    LatencyStats {
        median_us: percentile(&micros, 0.5),
        p95_us: percentile(&micros, 0.95),
        reps: micros.len(),
    }
}

fn query_nodes(n: usize, count: usize, seed: u64) -> Vec<usize> {
    let mut rng = rng::stream(seed, "bench-queries");
    (0..count).map(|_| rng.random_range(0..n)).collect()
}

/// Per-query latency of the teacher GNN, neighbor fetching included.
pub fn bench_teacher(
    model: &GnnModel<f32>,
    graph: &Graph,
    fanouts: &[usize],
    queries: usize,
    warmup: usize,
    seed: u64,
) -> Result<LatencyStats, CliError> {
    if fanouts.len() != model.encoder.layers.len() {
        return Err(CliError::Config(format!(
            "benchmark fan-outs ({}) must match the teacher's layer count ({})",
            fanouts.len(),
            model.encoder.layers.len()
        )));
    }
    let n = graph.num_nodes();
    let nodes = query_nodes(n, warmup + queries, seed);
    let features = graph.features_as::<f32>();
    let mut micros = Vec::with_capacity(queries);
    for (i, &q) in nodes.iter().enumerate() {
        let start = Instant::now();
        let block = sample_neighbors(graph, &[q], fanouts, seed ^ i as u64)?;
        let agg = block_agg_inputs::<f32>(&block);
        let x = features.gather_rows(block.input_nodes());
        let (_, logits) = model.infer(&agg, &x);
        std::hint::black_box(logits.get(0, 0));
        if i >= warmup {
            micros.push(start.elapsed().as_secs_f64() * 1e6);
        }
    }
    Ok(stats(micros))
}

/// The layered full-neighborhood block for one query node: every layer
/// consumes all neighbors (no sampling), matching transductive inference.
fn full_neighborhood_layers(graph: &Graph, q: usize, num_layers: usize) -> Vec<BlockLayer> {
    let mut out_sets: Vec<Vec<usize>> = vec![vec![q]];
    for _ in 0..num_layers {
        let prev = out_sets.last().unwrap();
        let mut set: BTreeSet<usize> = prev.iter().copied().collect();
        for &u in prev {
            set.extend(graph.adjacency.neighbors(u).iter().copied());
        }
        out_sets.push(set.into_iter().collect());
    }
    let mut layers = Vec::with_capacity(num_layers);
    for l in (0..num_layers).rev() {
        let nodes_out = out_sets[l].clone();
        let nodes_in = out_sets[l + 1].clone();
        let pos: HashMap<usize, usize> =
            nodes_in.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let self_pos = nodes_out.iter().map(|v| pos[v]).collect();
        let neighbor_pos = nodes_out
            .iter()
            .map(|&v| graph.adjacency.neighbors(v).iter().map(|n| pos[n]).collect())
            .collect();
        layers.push(BlockLayer { nodes_out, nodes_in, self_pos, neighbor_pos });
    }
    layers
}

/// Per-query latency of the teacher GNN aggregating over the complete
/// multi-hop neighborhood (no fan-out sampling), neighbor fetching
/// included. Uses the standard full-batch layer order
/// `sigma(A_hat (X W))`: every fetched neighborhood row is transformed
/// before aggregation, as in serving a full-graph model on one query.
pub fn bench_teacher_full(
    model: &GnnModel<f32>,
    graph: &Graph,
    queries: usize,
    warmup: usize,
    seed: u64,
) -> Result<LatencyStats, CliError> {
    let n = graph.num_nodes();
    let num_layers = model.encoder.layers.len();
    let nodes = query_nodes(n, warmup + queries, seed);
    let features = graph.features_as::<f32>();
    let mut micros = Vec::with_capacity(queries);
    for (i, &q) in nodes.iter().enumerate() {
        let start = Instant::now();
        let layers = full_neighborhood_layers(graph, q, num_layers);
        let mut x = features.gather_rows(&layers[0].nodes_in);
        for (l, (layer, block)) in model.encoder.layers.iter().zip(&layers).enumerate() {
            let lin = layer.linear.apply_value(&x);
            let agg = block_agg_csr::<f32>(block);
            let mut out = agg.matmul_dense(&lin);
            if let Some(bn) = &layer.batch_norm {
                // eval mode: running statistics
                for r in 0..out.rows() {
                    for (j, v) in out.row_mut(r).iter_mut().enumerate() {
                        let norm = (*v - bn.running_mean[j]) / (bn.running_var[j] + 1e-5).sqrt();
                        *v = bn.gamma.get(0, j) * norm + bn.beta.get(0, j);
                    }
                }
            }
            if l + 1 < num_layers {
                for v in out.data_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            x = out;
        }
        let logits = model.head.apply_value(&x);
        std::hint::black_box(logits.get(0, 0));
        if i >= warmup {
            micros.push(start.elapsed().as_secs_f64() * 1e6);
        }
    }
    Ok(stats(micros))
}

/// Per-query latency of the student MLP (feature row only).
pub fn bench_student(
    model: &MlpModel<f32>,
    graph: &Graph,
    queries: usize,
    warmup: usize,
    seed: u64,
) -> Result<LatencyStats, CliError> {
    let n = graph.num_nodes();
    let nodes = query_nodes(n, warmup + queries, seed);
    let features = graph.features_as::<f32>();
    let mut micros = Vec::with_capacity(queries);
    for (i, &q) in nodes.iter().enumerate() {
        let start = Instant::now();
        let x = Tensor::from_vec(1, features.cols(), features.row(q).to_vec());
        let (_, logits) = model.infer(&x);
        std::hint::black_box(logits.get(0, 0));
        if i >= warmup {
            micros.push(start.elapsed().as_secs_f64() * 1e6);
        }
    }
    Ok(stats(micros))
}

/// Write benchmark results as CSV.
pub fn write_bench_csv(path: &Path, rows: &[(&str, LatencyStats)]) -> Result<(), CliError> {
    let mut out = String::from("model,median_us,p95_us,reps\n");
    for (name, s) in rows {
        out.push_str(&format!("{name},{},{},{}\n", sig9(s.median_us), sig9(s.p95_us), s.reps));
    }
    std::fs::write(path, out)?;
    Ok(())
}
