//! Exported artifacts: embedding tables, code dumps, training logs and
//! metric files.

use std::fs;
use std::path::Path;

use graphvq_core::gnn::TrainRecord;
use graphvq_core::tensor::Tensor;

use crate::error::CliError;

/// Format a value with 9 significant digits.
pub fn sig9(v: f64) -> String {
    format!("{v:.8e}")
}

/// Write the embedding table as TSV: node id, label, code id, then one
/// column per embedding dimension (9 significant digits). An empty
/// graph produces a header-only file.
pub fn write_embeddings(
    path: &Path,
    embeddings: &Tensor<f32>,
    labels: &[usize],
    codes: &[usize],
) -> Result<(), CliError> {
    let (n, d) = embeddings.shape();
    if labels.len() != n || codes.len() != n {
        return Err(CliError::Runtime(format!(
            "embedding export: {n} rows but {} labels and {} codes",
            labels.len(),
            codes.len()
        )));
    }
    let mut out = String::from("node_id\tlabel\tcode_id");
    for j in 0..d {
        out.push_str(&format!("\tdim{j}"));
    }
    out.push('\n');
    for i in 0..n {
        out.push_str(&format!("{i}\t{}\t{}", labels[i], codes[i]));
        for &v in embeddings.row(i) {
            out.push('\t');
            out.push_str(&sig9(v as f64));
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Write the code dump: one `node_id <tab> code_id` line per node.
pub fn write_codes(path: &Path, codes: &[usize]) -> Result<(), CliError> {
    let mut out = String::from("node_id\tcode_id\n");
    for (i, &z) in codes.iter().enumerate() {
        out.push_str(&format!("{i}\t{z}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Write a training log as CSV: epoch, total loss, one column per loss
/// term, validation accuracy. Term columns come from the first record.
pub fn write_training_log(path: &Path, log: &[TrainRecord]) -> Result<(), CliError> {
    let mut out = String::from("epoch,loss");
    let term_names: Vec<&str> = match log.first() {
        Some(r) => r.terms.iter().map(|(n, _)| n.as_str()).collect(),
        None => Vec::new(),
    };
    for name in &term_names {
        out.push(',');
        out.push_str(name);
    }
    out.push_str(",val_accuracy\n");
    for r in log {
        out.push_str(&format!("{},{}", r.epoch, sig9(r.loss)));
        for name in &term_names {
            let v = r.terms.iter().find(|(n, _)| n == name).map(|(_, v)| *v).unwrap_or(f64::NAN);
            out.push(',');
            out.push_str(&sig9(v));
        }
        out.push_str(&format!(",{}\n", sig9(r.val_accuracy)));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Write a JSON value prettily.
pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    fs::write(path, serde_json::to_string_pretty(value).unwrap())?;
    Ok(())
}

/// Mean and (population) standard deviation of a sample.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64;
    (mean, var.sqrt())
}
