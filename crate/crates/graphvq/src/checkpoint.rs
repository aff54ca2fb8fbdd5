//! Model checkpoints.
//!
//! A checkpoint is a directory holding
//!
//! * `manifest.json` — tensor names, shapes, dtype and byte offsets plus a
//!   JSON architecture descriptor, enough to rebuild the model without
//!   guessing dimensions;
//! * `weights.bin` — the concatenated tensor payloads as little-endian
//!   `f32`, in manifest order.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use graphvq_core::gnn::{Encoder, GnnModel, MlpModel};
use graphvq_core::tensor::Tensor;
use graphvq_core::tokenizer::TokenizerModel;
use serde::{Deserialize, Serialize};

use crate::bundle::read_bytes;
use crate::config::{aggregation_name, parse_aggregation};
use crate::error::CliError;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    /// Offset into the payload, in `f32` elements.
    pub offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    /// "gnn", "mlp" or "tokenizer".
    pub kind: String,
    pub dtype: String,
    pub tensors: Vec<TensorEntry>,
    /// Architecture descriptor; for tokenizers this echoes the training
    /// configuration.
    pub arch: serde_json::Value,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EncoderArch {
    pub in_dim: usize,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub dropout: f64,
    pub batch_norm: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GnnArch {
    #[serde(flatten)]
    pub encoder: EncoderArch,
    pub num_classes: usize,
    pub aggregation: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpArch {
    #[serde(flatten)]
    pub encoder: EncoderArch,
    pub num_classes: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TokenizerArch {
    #[serde(flatten)]
    pub encoder: EncoderArch,
    pub num_classes: usize,
    pub aggregation: String,
    pub codebook_size: usize,
    pub gamma: f64,
    pub eta: f64,
}

// --- writing -----------------------------------------------------------------

struct Writer {
    entries: Vec<TensorEntry>,
    payload: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Writer { entries: Vec::new(), payload: Vec::new() }
    }

    fn push(&mut self, name: &str, t: &Tensor<f32>) {
        let offset = self.payload.len() / 4;
        for &v in t.data() {
            self.payload.extend_from_slice(&v.to_le_bytes());
        }
        self.entries.push(TensorEntry {
            name: name.to_string(),
            rows: t.rows(),
            cols: t.cols(),
            offset,
        });
    }

    fn push_vec(&mut self, name: &str, v: &[f32]) {
        self.push(name, &Tensor::from_vec(1, v.len(), v.to_vec()));
    }

    fn finish(self, dir: &Path, kind: &str, arch: serde_json::Value) -> Result<(), CliError> {
        fs::create_dir_all(dir)?;
        let manifest = Manifest {
            format_version: FORMAT_VERSION,
            kind: kind.to_string(),
            dtype: "f32".to_string(),
            tensors: self.entries,
            arch,
        };
        fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest).unwrap())?;
        fs::write(dir.join("weights.bin"), self.payload)?;
        Ok(())
    }
}

fn push_encoder(w: &mut Writer, enc: &Encoder<f32>) {
    for (l, layer) in enc.layers.iter().enumerate() {
        w.push(&format!("enc{l}.w"), &layer.linear.w);
        w.push(&format!("enc{l}.b"), &layer.linear.b);
        if let Some(bn) = &layer.batch_norm {
            w.push(&format!("enc{l}.bn.gamma"), &bn.gamma);
            w.push(&format!("enc{l}.bn.beta"), &bn.beta);
            w.push_vec(&format!("enc{l}.bn.mean"), &bn.running_mean);
            w.push_vec(&format!("enc{l}.bn.var"), &bn.running_var);
        }
    }
}

fn encoder_arch(enc: &Encoder<f32>) -> EncoderArch {
    EncoderArch {
        in_dim: enc.in_dim(),
        hidden_dim: enc.hidden_dim(),
        num_layers: enc.layers.len(),
        dropout: enc.dropout,
        batch_norm: enc.layers.iter().any(|l| l.batch_norm.is_some()),
    }
}

pub fn save_gnn(dir: &Path, model: &GnnModel<f32>) -> Result<(), CliError> {
    let mut w = Writer::new();
    push_encoder(&mut w, &model.encoder);
    w.push("head.w", &model.head.w);
    w.push("head.b", &model.head.b);
    let arch = GnnArch {
        encoder: encoder_arch(&model.encoder),
        num_classes: model.head.w.cols(),
        aggregation: aggregation_name(model.aggregation).to_string(),
    };
    w.finish(dir, "gnn", serde_json::to_value(arch).unwrap())
}

pub fn save_mlp(dir: &Path, model: &MlpModel<f32>) -> Result<(), CliError> {
    let mut w = Writer::new();
    push_encoder(&mut w, &model.encoder);
    w.push("head.w", &model.head.w);
    w.push("head.b", &model.head.b);
    let arch = MlpArch { encoder: encoder_arch(&model.encoder), num_classes: model.head.w.cols() };
    w.finish(dir, "mlp", serde_json::to_value(arch).unwrap())
}

pub fn save_tokenizer(dir: &Path, model: &TokenizerModel<f32>) -> Result<(), CliError> {
    let mut w = Writer::new();
    push_encoder(&mut w, &model.encoder);
    w.push("codebook", &model.codebook);
    w.push("attr.w", &model.attr_decoder.w);
    w.push("attr.b", &model.attr_decoder.b);
    w.push("topo.w", &model.topo_decoder.w);
    w.push("topo.b", &model.topo_decoder.b);
    w.push("cls.w", &model.classifier.w);
    w.push("cls.b", &model.classifier.b);
    let arch = TokenizerArch {
        encoder: encoder_arch(&model.encoder),
        num_classes: model.classifier.w.cols(),
        aggregation: aggregation_name(model.aggregation).to_string(),
        codebook_size: model.codebook.rows(),
        gamma: model.gamma,
        eta: model.eta,
    };
    w.finish(dir, "tokenizer", serde_json::to_value(arch).unwrap())
}

// --- reading -----------------------------------------------------------------

struct Reader {
    tensors: HashMap<String, Tensor<f32>>,
    arch: serde_json::Value,
    kind: String,
    path: String,
}

impl Reader {
    fn open(dir: &Path, expect_kind: &str) -> Result<Self, CliError> {
        let manifest_path = dir.join("manifest.json");
        if !manifest_path.is_file() {
            return Err(CliError::Config(format!(
                "checkpoint {} not found (missing {})",
                dir.display(),
                manifest_path.display()
            )));
        }
        let text = fs::read_to_string(&manifest_path)?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", manifest_path.display())))?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(CliError::Config(format!(
                "{}: unsupported format version {}",
                manifest_path.display(),
                manifest.format_version
            )));
        }
        if manifest.kind != expect_kind {
            return Err(CliError::Config(format!(
                "{}: expected a {expect_kind} checkpoint, found {}",
                dir.display(),
                manifest.kind
            )));
        }
        if manifest.dtype != "f32" {
            return Err(CliError::Config(format!(
                "{}: unsupported dtype {}",
                manifest_path.display(),
                manifest.dtype
            )));
        }
        let bytes = read_bytes(&dir.join("weights.bin"))?;
        let floats: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let mut tensors = HashMap::new();
        for e in &manifest.tensors {
            let end = e.offset + e.rows * e.cols;
            if end > floats.len() {
                return Err(CliError::Config(format!(
                    "{}: tensor {} overruns the payload",
                    dir.display(),
                    e.name
                )));
            }
            tensors.insert(
                e.name.clone(),
                Tensor::from_vec(e.rows, e.cols, floats[e.offset..end].to_vec()),
            );
        }
        Ok(Reader { tensors, arch: manifest.arch, kind: manifest.kind, path: dir.display().to_string() })
    }

    fn take(&mut self, name: &str, rows: usize, cols: usize) -> Result<Tensor<f32>, CliError> {
        let t = self.tensors.remove(name).ok_or_else(|| {
            CliError::Config(format!("{}: missing tensor {name} in {} checkpoint", self.path, self.kind))
        })?;
        if t.shape() != (rows, cols) {
            return Err(CliError::Config(format!(
                "{}: tensor {name} has shape {:?}, expected ({rows}, {cols})",
                self.path,
                t.shape()
            )));
        }
        Ok(t)
    }

    fn arch<A: for<'de> Deserialize<'de>>(&self) -> Result<A, CliError> {
        serde_json::from_value(self.arch.clone())
            .map_err(|e| CliError::Config(format!("{}: bad architecture descriptor: {e}", self.path)))
    }
}

fn load_encoder_into(r: &mut Reader, enc: &mut Encoder<f32>) -> Result<(), CliError> {
    for (l, layer) in enc.layers.iter_mut().enumerate() {
        let (wi, wo) = layer.linear.w.shape();
        layer.linear.w = r.take(&format!("enc{l}.w"), wi, wo)?;
        layer.linear.b = r.take(&format!("enc{l}.b"), 1, wo)?;
        if let Some(bn) = &mut layer.batch_norm {
            bn.gamma = r.take(&format!("enc{l}.bn.gamma"), 1, wo)?;
            bn.beta = r.take(&format!("enc{l}.bn.beta"), 1, wo)?;
            bn.running_mean = r.take(&format!("enc{l}.bn.mean"), 1, wo)?.data().to_vec();
            bn.running_var = r.take(&format!("enc{l}.bn.var"), 1, wo)?.data().to_vec();
        }
    }
    Ok(())
}

pub fn load_gnn(dir: &Path) -> Result<GnnModel<f32>, CliError> {
    let mut r = Reader::open(dir, "gnn")?;
    let arch: GnnArch = r.arch()?;
    let mut model = GnnModel::<f32>::init(
        0,
        arch.encoder.in_dim,
        arch.encoder.hidden_dim,
        arch.encoder.num_layers,
        arch.num_classes,
        arch.encoder.dropout,
        parse_aggregation(&arch.aggregation)?,
        arch.encoder.batch_norm,
    );
    load_encoder_into(&mut r, &mut model.encoder)?;
    model.head.w = r.take("head.w", arch.encoder.hidden_dim, arch.num_classes)?;
    model.head.b = r.take("head.b", 1, arch.num_classes)?;
    Ok(model)
}

pub fn load_mlp(dir: &Path) -> Result<MlpModel<f32>, CliError> {
    let mut r = Reader::open(dir, "mlp")?;
    let arch: MlpArch = r.arch()?;
    let mut model = MlpModel::<f32>::init(
        0,
        arch.encoder.in_dim,
        arch.encoder.hidden_dim,
        arch.encoder.num_layers,
        arch.num_classes,
        arch.encoder.dropout,
    );
    load_encoder_into(&mut r, &mut model.encoder)?;
    model.head.w = r.take("head.w", arch.encoder.hidden_dim, arch.num_classes)?;
    model.head.b = r.take("head.b", 1, arch.num_classes)?;
    Ok(model)
}

pub fn load_tokenizer(dir: &Path) -> Result<TokenizerModel<f32>, CliError> {
    let mut r = Reader::open(dir, "tokenizer")?;
    let arch: TokenizerArch = r.arch()?;
    let mut model = TokenizerModel::<f32>::init(
        0,
        arch.encoder.in_dim,
        arch.encoder.hidden_dim,
        arch.encoder.num_layers,
        arch.num_classes,
        arch.codebook_size,
        arch.encoder.dropout,
        parse_aggregation(&arch.aggregation)?,
        arch.encoder.batch_norm,
        arch.gamma,
        arch.eta,
    );
    load_encoder_into(&mut r, &mut model.encoder)?;
    let d = arch.encoder.hidden_dim;
    model.codebook = r.take("codebook", arch.codebook_size, d)?;
    model.attr_decoder.w = r.take("attr.w", d, arch.encoder.in_dim)?;
    model.attr_decoder.b = r.take("attr.b", 1, arch.encoder.in_dim)?;
    model.topo_decoder.w = r.take("topo.w", d, d)?;
    model.topo_decoder.b = r.take("topo.b", 1, d)?;
    model.classifier.w = r.take("cls.w", d, arch.num_classes)?;
    model.classifier.b = r.take("cls.b", 1, arch.num_classes)?;
    Ok(model)
}
