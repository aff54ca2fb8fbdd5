//! File formats, checkpoints, configuration and the task runner for the
//! graph tokenizer / distillation pipeline. All numeric work lives in
//! the `graphvq-core` crate; this crate adds everything that touches the
//! filesystem or the command line.

pub mod bench;
pub mod bundle;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod export;
pub mod run;

/// Parse the `--seed` argument: a single integer or a comma-separated list.
pub fn parse_seeds(spec: &str) -> Result<Vec<u64>, error::CliError> {
    let mut seeds = Vec::new();
    for part in spec.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let seed: u64 = part.parse().map_err(|_| {
            error::CliError::Config(format!("--seed expects an integer or comma-separated list, got {spec:?}"))
        })?;
        seeds.push(seed);
    }
    if seeds.is_empty() {
        return Err(error::CliError::Config(format!("--seed {spec:?} names no seeds")));
    }
    Ok(seeds)
}
