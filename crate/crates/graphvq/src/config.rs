//! Run configuration: JSON config files, per-dataset default blocks and
//! `--override key.path=value` handling.
//!
//! Resolution order (later wins): dataset default block, config file,
//! command-line overrides. The resolved configuration is echoed into the
//! run manifest so every run is reproducible from its output directory.

use std::fs;
use std::path::Path;

use graphvq_core::distill::{CompFn, DistillConfig};
use graphvq_core::gnn::SupervisedConfig;
use graphvq_core::graph::NormMode;
use graphvq_core::tokenizer::{EdgeNorm, TokenizerConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

// --- string forms of the core enums (core is serde-free) -------------------

pub fn parse_aggregation(s: &str) -> Result<NormMode, CliError> {
    match s {
        "gcn" => Ok(NormMode::GcnSym),
        "mean" => Ok(NormMode::Mean),
        other => Err(CliError::Config(format!("unknown aggregation {other:?} (expected \"gcn\" or \"mean\")"))),
    }
}

pub fn aggregation_name(m: NormMode) -> &'static str {
    match m {
        NormMode::GcnSym => "gcn",
        NormMode::Mean => "mean",
    }
}

pub fn parse_edge_norm(s: &str) -> Result<EdgeNorm, CliError> {
    match s {
        "sum" => Ok(EdgeNorm::Sum),
        "mean" => Ok(EdgeNorm::Mean),
        other => Err(CliError::Config(format!("unknown edge_norm {other:?} (expected \"sum\" or \"mean\")"))),
    }
}

pub fn edge_norm_name(m: EdgeNorm) -> &'static str {
    match m {
        EdgeNorm::Sum => "sum",
        EdgeNorm::Mean => "mean",
    }
}

pub fn parse_comp(s: &str) -> Result<CompFn, CliError> {
    match s {
        "neg-l2" => Ok(CompFn::NegL2),
        "cosine" => Ok(CompFn::Cosine),
        other => Err(CliError::Config(format!("unknown comparison {other:?} (expected \"neg-l2\" or \"cosine\")"))),
    }
}

pub fn comp_name(c: CompFn) -> &'static str {
    match c {
        CompFn::NegL2 => "neg-l2",
        CompFn::Cosine => "cosine",
    }
}

// --- configuration sections -------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeacherSection {
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub dropout: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub patience: usize,
    pub batch_norm: bool,
    pub aggregation: String,
    pub fanouts: Vec<usize>,
}

impl TeacherSection {
    pub fn supervised(&self) -> Result<SupervisedConfig, CliError> {
        Ok(SupervisedConfig {
            hidden_dim: self.hidden_dim,
            num_layers: self.num_layers,
            dropout: self.dropout,
            lr: self.lr,
            weight_decay: self.weight_decay,
            epochs: self.epochs,
            patience: self.patience,
            aggregation: parse_aggregation(&self.aggregation)?,
            batch_norm: self.batch_norm,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenizerSection {
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub codebook_size: usize,
    pub dropout: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub patience: usize,
    /// Exponent of the cosine node-reconstruction error.
    pub gamma: f64,
    /// Commitment weight.
    pub eta: f64,
    pub edge_norm: String,
    pub aggregation: String,
    pub batch_norm: bool,
    /// Apply the code classifier to quantized embeddings (default) or raw ones.
    pub ce_on_quantized: bool,
    /// Re-seed unused codebook rows every this many epochs.
    pub dead_code_reset_interval: Option<usize>,
    /// When set, train with mini-batches of this many target nodes.
    pub batch_size: Option<usize>,
    /// Neighbor fan-out per layer for mini-batch training.
    pub fanouts: Vec<usize>,
}

impl TokenizerSection {
    pub fn core(&self) -> Result<TokenizerConfig, CliError> {
        let mut c = TokenizerConfig::defaults(self.hidden_dim, self.codebook_size);
        c.num_layers = self.num_layers;
        c.dropout = self.dropout;
        c.lr = self.lr;
        c.weight_decay = self.weight_decay;
        c.epochs = self.epochs;
        c.patience = self.patience;
        c.gamma = self.gamma;
        c.eta = self.eta;
        c.edge_norm = parse_edge_norm(&self.edge_norm)?;
        c.aggregation = parse_aggregation(&self.aggregation)?;
        c.batch_norm = self.batch_norm;
        c.ce_on_quantized = self.ce_on_quantized;
        c.dead_code_reset_interval = self.dead_code_reset_interval;
        Ok(c)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudentSection {
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub dropout: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub patience: usize,
    /// Weight of the class-distillation term.
    pub alpha: f64,
    /// Weight of the code-distillation term.
    pub beta: f64,
    /// Temperature of the soft code assignments.
    pub tau_code: f64,
    /// Temperature of the class distillation.
    pub tau_class: f64,
    /// Embedding/code comparison: "neg-l2" or "cosine".
    pub comp: String,
}

impl StudentSection {
    pub fn core(&self) -> Result<DistillConfig, CliError> {
        Ok(DistillConfig {
            hidden_dim: self.hidden_dim,
            num_layers: self.num_layers,
            dropout: self.dropout,
            lr: self.lr,
            weight_decay: self.weight_decay,
            epochs: self.epochs,
            patience: self.patience,
            alpha: self.alpha,
            beta: self.beta,
            tau_code: self.tau_code,
            tau_class: self.tau_class,
            comp: parse_comp(&self.comp)?,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    /// "transductive" or "inductive".
    pub setting: String,
    pub labeled_per_class: Option<usize>,
    pub labeled_fraction: Option<f64>,
    /// Fraction of the unlabeled nodes held out in the inductive setting.
    pub inductive_fraction: f64,
    /// Validation nodes drawn per class from the observed-unlabeled set.
    pub val_per_class: usize,
    /// Weight of the transductive accuracy in the production metric.
    pub production_tran_weight: f64,
    /// Optional predefined split files (JSON arrays of node ids).
    pub labeled_file: Option<String>,
    pub observed_file: Option<String>,
    pub inductive_file: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArtifactsSection {
    pub tokenizer_checkpoint: Option<String>,
    pub teacher_checkpoint: Option<String>,
    pub student_checkpoint: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetrieveSection {
    /// Query node id.
    pub query: usize,
    /// Number of neighbors to return.
    pub k: usize,
}

impl Default for RetrieveSection {
    fn default() -> Self {
        RetrieveSection { query: 0, k: 10 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchSection {
    /// Timed queries (after warm-up).
    pub queries: usize,
    /// Warm-up queries excluded from the statistics.
    pub warmup: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        BenchSection { queries: 200, warmup: 20 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: String,
    #[serde(default)]
    pub data_dir: Option<String>,
    pub teacher: TeacherSection,
    pub tokenizer: TokenizerSection,
    pub student: StudentSection,
    pub split: SplitSection,
    #[serde(default)]
    pub artifacts: ArtifactsSection,
    #[serde(default)]
    pub retrieve: RetrieveSection,
    #[serde(default)]
    pub benchmark: BenchSection,
}

// --- per-dataset default blocks ---------------------------------------------

struct DatasetRow {
    teacher_hidden: usize,
    teacher_layers: usize,
    teacher_dropout: f64,
    teacher_lr: f64,
    teacher_wd: f64,
    teacher_bn: bool,
    fanouts: &'static [usize],
    codebook_size: usize,
    mlp_layers: usize,
    hidden_dim: usize,
    lr: f64,
    weight_decay: f64,
    dropout: f64,
    minibatch: Option<usize>,
}

const CPF_TEACHER: (usize, usize, f64, f64, f64, bool, &[usize]) =
    (128, 2, 0.0, 0.01, 0.0005, false, &[5, 5]);

fn dataset_row(name: &str) -> DatasetRow {
    let (th, tl, td, tlr, twd, tbn, fo) = match name {
        "arxiv" => (256, 3, 0.2, 0.01, 0.0, true, &[5, 10, 15][..]),
        "products" => (256, 3, 0.5, 0.003, 0.0, true, &[5, 10, 15][..]),
        _ => CPF_TEACHER,
    };
    // codebook size, MLP layers, hidden dim, lr, weight decay, dropout
    let (cb, ml, hd, lr, wd, dr, mb) = match name {
        "citeseer" => (4096, 2, 128, 0.01, 0.005, 0.6, None),
        "pubmed" => (8192, 2, 128, 0.01, 0.001, 0.1, None),
        "cora" => (2048, 2, 128, 0.005, 0.001, 0.4, None),
        "a-computer" => (16384, 2, 128, 0.003, 0.005, 0.1, None),
        "a-photo" => (8192, 2, 128, 0.001, 0.001, 0.1, None),
        "arxiv" => (32768, 3, 256, 0.01, 0.0, 0.2, Some(1024)),
        "products" => (32768, 3, 256, 0.003, 0.0, 0.5, Some(1024)),
        // generic fallback for custom/synthetic datasets
        _ => (2048, 2, 128, 0.005, 0.001, 0.4, None),
    };
    DatasetRow {
        teacher_hidden: th,
        teacher_layers: tl,
        teacher_dropout: td,
        teacher_lr: tlr,
        teacher_wd: twd,
        teacher_bn: tbn,
        fanouts: fo,
        codebook_size: cb,
        mlp_layers: ml,
        hidden_dim: hd,
        lr,
        weight_decay: wd,
        dropout: dr,
        minibatch: mb,
    }
}

impl RunConfig {
    /// The default block for a dataset name. Unknown names fall back to the
    /// generic (citation-graph) block so custom bundles work out of the box.
    pub fn for_dataset(name: &str) -> RunConfig {
        let row = dataset_row(name);
        RunConfig {
            dataset: name.to_string(),
            data_dir: None,
            teacher: TeacherSection {
                hidden_dim: row.teacher_hidden,
                num_layers: row.teacher_layers,
                dropout: row.teacher_dropout,
                lr: row.teacher_lr,
                weight_decay: row.teacher_wd,
                epochs: 200,
                patience: 50,
                batch_norm: row.teacher_bn,
                aggregation: "gcn".to_string(),
                fanouts: row.fanouts.to_vec(),
            },
            tokenizer: TokenizerSection {
                hidden_dim: row.hidden_dim,
                num_layers: row.teacher_layers,
                codebook_size: row.codebook_size,
                dropout: row.teacher_dropout,
                lr: row.lr,
                weight_decay: row.weight_decay,
                epochs: 100,
                patience: 100,
                gamma: 2.0,
                eta: 0.25,
                edge_norm: "mean".to_string(),
                aggregation: "gcn".to_string(),
                batch_norm: row.teacher_bn,
                ce_on_quantized: true,
                dead_code_reset_interval: None,
                batch_size: row.minibatch,
                fanouts: row.fanouts.to_vec(),
            },
            student: StudentSection {
                hidden_dim: row.hidden_dim,
                num_layers: row.mlp_layers,
                dropout: row.dropout,
                lr: row.lr,
                weight_decay: row.weight_decay,
                epochs: 200,
                patience: 50,
                alpha: 1.0,
                beta: 1e-8,
                tau_code: 4.0,
                tau_class: 1.0,
                comp: "neg-l2".to_string(),
            },
            split: SplitSection {
                setting: "transductive".to_string(),
                labeled_per_class: Some(20),
                labeled_fraction: None,
                inductive_fraction: 0.2,
                val_per_class: 30,
                production_tran_weight: 0.8,
                labeled_file: None,
                observed_file: None,
                inductive_file: None,
            },
            artifacts: ArtifactsSection::default(),
            retrieve: RetrieveSection::default(),
            benchmark: BenchSection::default(),
        }
    }

    /// Sanity checks beyond what serde enforces; all violations are
    /// configuration errors.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        parse_aggregation(&self.teacher.aggregation)?;
        parse_aggregation(&self.tokenizer.aggregation)?;
        parse_edge_norm(&self.tokenizer.edge_norm)?;
        parse_comp(&self.student.comp)?;
        if !matches!(self.split.setting.as_str(), "transductive" | "inductive") {
            return bad(format!(
                "unknown split setting {:?} (expected \"transductive\" or \"inductive\")",
                self.split.setting
            ));
        }
        for (name, lr) in [
            ("teacher.lr", self.teacher.lr),
            ("tokenizer.lr", self.tokenizer.lr),
            ("student.lr", self.student.lr),
        ] {
            if !(lr > 0.0 && lr.is_finite()) {
                return bad(format!("{name} = {lr} must be positive"));
            }
        }
        for (name, d) in [
            ("teacher.dropout", self.teacher.dropout),
            ("tokenizer.dropout", self.tokenizer.dropout),
            ("student.dropout", self.student.dropout),
        ] {
            if !(0.0..1.0).contains(&d) {
                return bad(format!("{name} = {d} must lie in [0, 1)"));
            }
        }
        if self.student.tau_code <= 0.0 || self.student.tau_class <= 0.0 {
            return bad("distillation temperatures must be positive".to_string());
        }
        if self.student.alpha < 0.0 || self.student.beta < 0.0 {
            return bad("distillation weights must be non-negative".to_string());
        }
        if self.tokenizer.codebook_size == 0 {
            return bad("tokenizer.codebook_size must be positive".to_string());
        }
        if !(0.0..1.0).contains(&self.split.inductive_fraction) {
            return bad(format!(
                "split.inductive_fraction = {} must lie in [0, 1)",
                self.split.inductive_fraction
            ));
        }
        if !(0.0..=1.0).contains(&self.split.production_tran_weight) {
            return bad(format!(
                "split.production_tran_weight = {} must lie in [0, 1]",
                self.split.production_tran_weight
            ));
        }
        if self.split.labeled_per_class.is_none()
            && self.split.labeled_fraction.is_none()
            && self.split.labeled_file.is_none()
        {
            return bad("split needs labeled_per_class, labeled_fraction or labeled_file".to_string());
        }
        if let Some(b) = self.tokenizer.batch_size {
            if b == 0 {
                return bad("tokenizer.batch_size must be positive".to_string());
            }
            if self.tokenizer.fanouts.len() != self.tokenizer.num_layers {
                return bad(format!(
                    "tokenizer.fanouts has {} entries but the encoder has {} layers",
                    self.tokenizer.fanouts.len(),
                    self.tokenizer.num_layers
                ));
            }
        }
        Ok(())
    }
}

// --- resolution --------------------------------------------------------------

fn deep_merge(base: &mut Value, overlay: &Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) => deep_merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, o) => *b = o.clone(),
    }
}

/// Apply one `key.path=value` override onto a JSON object.
pub fn apply_override(root: &mut Value, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override {spec:?} is not of the form key=value")))?;
    if key.is_empty() {
        return Err(CliError::Config(format!("override {spec:?} has an empty key")));
    }
    // parse the value as JSON when possible, else keep it as a string
    let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut slot = root;
    let mut parts = key.split('.').peekable();
    while let Some(part) = parts.next() {
        if !slot.is_object() {
            *slot = Value::Object(serde_json::Map::new());
        }
        let map = slot.as_object_mut().unwrap();
        if parts.peek().is_none() {
            map.insert(part.to_string(), value);
            return Ok(());
        }
        slot = map.entry(part.to_string()).or_insert_with(|| Value::Object(serde_json::Map::new()));
    }
    unreachable!("split always yields at least one part")
}

/// Resolve a run configuration from an optional config file and
/// `key=value` overrides, on top of the dataset's default block.
pub fn resolve_config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig, CliError> {
    let mut user = match path {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            serde_json::from_str::<Value>(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => Value::Object(serde_json::Map::new()),
    };
    if !user.is_object() {
        return Err(CliError::Config("config file must hold a JSON object".to_string()));
    }
    for spec in overrides {
        apply_override(&mut user, spec)?;
    }
    let dataset = user
        .get("dataset")
        .and_then(Value::as_str)
        .unwrap_or("cora")
        .to_string();
    let mut merged = serde_json::to_value(RunConfig::for_dataset(&dataset)).unwrap();
    deep_merge(&mut merged, &user);
    let config: RunConfig = serde_json::from_value(merged)
        .map_err(|e| CliError::Config(format!("invalid configuration: {e}")))?;
    config.validate()?;
    Ok(config)
}
