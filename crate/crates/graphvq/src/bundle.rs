//! On-disk dataset bundle.
//!
//! A bundle is a directory with four files:
//!
//! * `edges.tsv` — one undirected edge per line, two tab-separated node ids.
//! * `features.bin` — 8-byte header (`N`, `D` as two little-endian `u32`)
//!   followed by `N * D` little-endian `f32` values, row-major.
//! * `labels.tsv` — one class id per line, line `i` labels node `i`.
//! * `meta.json` — `{"dataset": <name>, "num_classes": <K>}`.
//!
//! Predefined splits are plain JSON arrays of node ids, one file per set.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use graphvq_core::graph::Graph;
use graphvq_core::tensor::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BundleMeta {
    pub dataset: String,
    pub num_classes: usize,
}

fn config_err(path: &Path, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{}: {msg}", path.display()))
}

/// Load a dataset bundle from `dir`.
pub fn load_bundle(dir: &Path) -> Result<(Graph, BundleMeta), CliError> {
    if !dir.is_dir() {
        return Err(CliError::Config(format!("dataset bundle directory {} not found", dir.display())));
    }
    let meta_path = dir.join("meta.json");
    let meta_text = fs::read_to_string(&meta_path).map_err(|e| config_err(&meta_path, e))?;
    let meta: BundleMeta =
        serde_json::from_str(&meta_text).map_err(|e| config_err(&meta_path, e))?;

    let feat_path = dir.join("features.bin");
    let bytes = fs::read(&feat_path).map_err(|e| config_err(&feat_path, e))?;
    if bytes.len() < 8 {
        return Err(config_err(&feat_path, "shorter than the 8-byte header"));
    }
    let n = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let expected = 8 + n * d * 4;
    if bytes.len() != expected {
        return Err(config_err(
            &feat_path,
            format!("header says {n} x {d} ({expected} bytes) but file has {} bytes", bytes.len()),
        ));
    }
    let mut data = Vec::with_capacity(n * d);
    for chunk in bytes[8..].chunks_exact(4) {
        data.push(f32::from_le_bytes(chunk.try_into().unwrap()));
    }
    let features = Tensor::from_vec(n, d, data);

    let labels_path = dir.join("labels.tsv");
    let labels_text = fs::read_to_string(&labels_path).map_err(|e| config_err(&labels_path, e))?;
    let mut labels = Vec::with_capacity(n);
    for (i, line) in labels_text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let label: usize = line
            .parse()
            .map_err(|_| config_err(&labels_path, format!("line {}: not a class id: {line:?}", i + 1)))?;
        labels.push(label);
    }
    if labels.len() != n {
        return Err(config_err(
            &labels_path,
            format!("{} labels for {n} feature rows", labels.len()),
        ));
    }

    let edges_path = dir.join("edges.tsv");
    let edges_text = fs::read_to_string(&edges_path).map_err(|e| config_err(&edges_path, e))?;
    let mut edges = Vec::new();
    for (i, line) in edges_text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let parse = |field: Option<&str>| -> Result<usize, CliError> {
            field
                .and_then(|f| f.trim().parse().ok())
                .ok_or_else(|| config_err(&edges_path, format!("line {}: expected two tab-separated node ids, got {line:?}", i + 1)))
        };
        let u = parse(parts.next())?;
        let v = parse(parts.next())?;
        if parts.next().is_some() {
            return Err(config_err(
                &edges_path,
                format!("line {}: expected two tab-separated node ids, got {line:?}", i + 1),
            ));
        }
        if u >= n || v >= n {
            return Err(config_err(
                &edges_path,
                format!("line {}: node id out of range for {n} nodes: {line:?}", i + 1),
            ));
        }
        edges.push((u, v));
    }

    let graph = Graph::new(n, &edges, features, labels, meta.num_classes)
        .map_err(|e| CliError::Config(format!("{}: {e}", dir.display())))?;
    Ok((graph, meta))
}

/// Write a graph as a dataset bundle into `dir` (created if needed).
pub fn save_bundle(dir: &Path, graph: &Graph, dataset: &str) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    let meta = BundleMeta { dataset: dataset.to_string(), num_classes: graph.num_classes };
    fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta).unwrap())?;

    let (n, d) = graph.features.shape();
    let mut bytes = Vec::with_capacity(8 + n * d * 4);
    bytes.extend_from_slice(&(n as u32).to_le_bytes());
    bytes.extend_from_slice(&(d as u32).to_le_bytes());
    for &v in graph.features.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(dir.join("features.bin"), bytes)?;

    let mut labels = String::new();
    for &l in &graph.labels {
        labels.push_str(&l.to_string());
        labels.push('\n');
    }
    fs::write(dir.join("labels.tsv"), labels)?;

    let mut edges = String::new();
    for (u, v) in graph.adjacency.edge_list() {
        edges.push_str(&format!("{u}\t{v}\n"));
    }
    fs::write(dir.join("edges.tsv"), edges)?;
    Ok(())
}

/// Read a split file: a JSON array of node ids.
pub fn load_split_file(path: &Path, num_nodes: usize) -> Result<Vec<usize>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| config_err(path, e))?;
    let ids: Vec<usize> = serde_json::from_str(&text).map_err(|e| config_err(path, e))?;
    if let Some(&bad) = ids.iter().find(|&&v| v >= num_nodes) {
        return Err(config_err(path, format!("node id {bad} out of range for {num_nodes} nodes")));
    }
    Ok(ids)
}

/// Write a split file: a JSON array of node ids.
pub fn save_split_file(path: &Path, ids: &[usize]) -> Result<(), CliError> {
    let mut f = fs::File::create(path)?;
    f.write_all(serde_json::to_string(ids).unwrap().as_bytes())?;
    Ok(())
}

/// Read an entire file into bytes (helper shared with checkpoints).
pub fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    let mut f = fs::File::open(path).map_err(|e| config_err(path, e))?;
    let mut buf = Vec::new();
    f.read_to_end(&mut buf)?;
    Ok(buf)
}
