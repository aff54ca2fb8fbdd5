//! Teacher GNN (GraphSAGE with GCN-style aggregation) and student MLP.
//!
//! Both models share the same layer stack: dropout on the layer input,
//! an optional neighbor aggregation (absent for the MLP), a linear map,
//! optional batch normalization, and ReLU on every layer except the last
//! so the final embedding `H` is unconstrained. A separate linear head
//! turns `H` into class logits; this keeps `H` in the dimension the
//! codebook quantizes.

// required for float math in pure no_std builds; redundant (and flagged
// unused) when a dependency links std and exposes the inherent methods
#[allow(unused_imports)]
use num_traits::Float as _;
use alloc::rc::Rc;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::adam::{Adam, AdamConfig, StepOutcome};
use crate::autodiff::{Tape, Var};
use crate::graph::{normalize_adjacency, uniform_tensor, Graph, NormMode};
use crate::rng;
use crate::sample::{BlockLayer, SampledBlock};
use crate::split::SplitSpec;
use crate::tensor::{matmul, CsrMatrix, Real, Tensor, TensorError};

/// Linear layer: `y = x W + b` with `W` of shape `in x out`.
#[derive(Debug, Clone)]
pub struct Linear<F> {
    pub w: Tensor<F>,
    pub b: Tensor<F>,
}

impl<F: Real> Linear<F> {
    pub fn glorot(in_dim: usize, out_dim: usize, rng: &mut rng::Rng) -> Self {
        assert!(in_dim > 0 && out_dim > 0, "zero-dimension layer");
        let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
        Linear { w: uniform_tensor(in_dim, out_dim, bound, rng), b: Tensor::zeros(1, out_dim) }
    }

    pub fn apply_value(&self, x: &Tensor<F>) -> Tensor<F> {
        let mut y = matmul(x, &self.w);
        for r in 0..y.rows() {
            for (v, b) in y.row_mut(r).iter_mut().zip(self.b.row(0)) {
                *v += *b;
            }
        }
        y
    }
}

#[derive(Debug, Clone)]
pub struct BatchNorm<F> {
    pub gamma: Tensor<F>,
    pub beta: Tensor<F>,
    pub running_mean: Vec<F>,
    pub running_var: Vec<F>,
    pub momentum: f64,
}

impl<F: Real> BatchNorm<F> {
    pub fn new(dim: usize) -> Self {
        BatchNorm {
            gamma: Tensor::full(1, dim, F::one()),
            beta: Tensor::zeros(1, dim),
            running_mean: vec![F::zero(); dim],
            running_var: vec![F::one(); dim],
            momentum: 0.1,
        }
    }

    fn update_running(&mut self, mean: &[F], var: &[F]) {
        let m = F::from_f64(self.momentum);
        let keep = F::one() - m;
        for (r, &v) in self.running_mean.iter_mut().zip(mean) {
            *r = keep * *r + m * v;
        }
        for (r, &v) in self.running_var.iter_mut().zip(var) {
            *r = keep * *r + m * v;
        }
    }
}

#[derive(Debug, Clone)]
pub struct EncoderLayer<F> {
    pub linear: Linear<F>,
    pub batch_norm: Option<BatchNorm<F>>,
}

/// A stack of layers shared by the GNN encoder (with aggregation) and the
/// MLP encoder (without).
#[derive(Debug, Clone)]
pub struct Encoder<F> {
    pub layers: Vec<EncoderLayer<F>>,
    pub dropout: f64,
}

impl<F: Real> Encoder<F> {
    pub fn new(
        in_dim: usize,
        hidden_dim: usize,
        num_layers: usize,
        dropout: f64,
        batch_norm: bool,
        rng: &mut rng::Rng,
    ) -> Self {
        assert!(num_layers >= 1, "encoder needs at least one layer");
        let mut layers = Vec::with_capacity(num_layers);
        for l in 0..num_layers {
            let din = if l == 0 { in_dim } else { hidden_dim };
            let bn = if batch_norm && l + 1 < num_layers {
                Some(BatchNorm::new(hidden_dim))
            } else {
                None
            };
            layers.push(EncoderLayer { linear: Linear::glorot(din, hidden_dim, rng), batch_norm: bn });
        }
        Encoder { layers, dropout }
    }

    pub fn hidden_dim(&self) -> usize {
        self.layers.last().expect("nonempty encoder").linear.w.cols()
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].linear.w.rows()
    }
}

/// Tape handles for an encoder's parameters.
pub struct EncoderVars {
    pub w: Vec<Var>,
    pub b: Vec<Var>,
    pub bn: Vec<Option<(Var, Var)>>,
}

impl EncoderVars {
    pub fn all(&self) -> Vec<Var> {
        let mut out = Vec::new();
        for i in 0..self.w.len() {
            out.push(self.w[i]);
            out.push(self.b[i]);
            if let Some((g, b)) = self.bn[i] {
                out.push(g);
                out.push(b);
            }
        }
        out
    }
}

/// Neighbor aggregation input for one forward pass: either the full
/// normalized adjacency applied at every layer, per-layer block matrices
/// from neighbor sampling, or none (MLP).
pub enum AggInput<F> {
    Full(Rc<CsrMatrix<F>>),
    Blocks(Vec<Rc<CsrMatrix<F>>>),
    None,
}

pub(crate) fn insert_encoder<F: Real>(encoder: &Encoder<F>, tape: &mut Tape<F>) -> EncoderVars {
    let mut w = Vec::new();
    let mut b = Vec::new();
    let mut bn = Vec::new();
    for layer in &encoder.layers {
        w.push(tape.param(layer.linear.w.clone()));
        b.push(tape.param(layer.linear.b.clone()));
        bn.push(layer.batch_norm.as_ref().map(|n| (tape.param(n.gamma.clone()), tape.param(n.beta.clone()))));
    }
    EncoderVars { w, b, bn }
}

/// Batch statistics observed during a training forward pass, for updating
/// the running estimates afterwards.
pub type BnStats<F> = Vec<Option<(Vec<F>, Vec<F>)>>;

#[allow(clippy::too_many_arguments)]
pub(crate) fn encoder_forward_tape<F: Real>(
    encoder: &Encoder<F>,
    vars: &EncoderVars,
    tape: &mut Tape<F>,
    agg: &AggInput<F>,
    x: Var,
    train: bool,
    rng: &mut rng::Rng,
) -> Result<(Var, BnStats<F>), TensorError> {
    let mut h = x;
    let mut stats: BnStats<F> = Vec::with_capacity(encoder.layers.len());
    let last = encoder.layers.len() - 1;
    for (l, layer) in encoder.layers.iter().enumerate() {
        if train && encoder.dropout > 0.0 {
            h = tape.dropout(h, encoder.dropout, rng)?;
        }
        h = match agg {
            AggInput::Full(m) => tape.spmm(Rc::clone(m), h)?,
            AggInput::Blocks(ms) => tape.spmm(Rc::clone(&ms[l]), h)?,
            AggInput::None => h,
        };
        h = tape.matmul(h, vars.w[l])?;
        h = tape.add_row(h, vars.b[l])?;
        if let (Some(bn), Some((g, b))) = (&layer.batch_norm, vars.bn[l]) {
            let running = if train { None } else { Some((&bn.running_mean[..], &bn.running_var[..])) };
            let (out, mean, var) = tape.batch_norm_rows(h, g, b, running)?;
            h = out;
            stats.push(if train { Some((mean, var)) } else { None });
        } else {
            stats.push(None);
        }
        if l != last {
            h = tape.relu(h);
        }
    }
    Ok((h, stats))
}

pub(crate) fn encoder_forward_value<F: Real>(
    encoder: &Encoder<F>,
    agg: &AggInput<F>,
    x: &Tensor<F>,
) -> Tensor<F> {
    let mut h = x.clone();
    let last = encoder.layers.len() - 1;
    for (l, layer) in encoder.layers.iter().enumerate() {
        h = match agg {
            AggInput::Full(m) => m.matmul_dense(&h),
            AggInput::Blocks(ms) => ms[l].matmul_dense(&h),
            AggInput::None => h,
        };
        h = layer.linear.apply_value(&h);
        if let Some(bn) = &layer.batch_norm {
            let eps = F::from_f64(1e-5);
            for r in 0..h.rows() {
                for (j, v) in h.row_mut(r).iter_mut().enumerate() {
                    let s = F::one() / (bn.running_var[j] + eps).sqrt();
                    *v = bn.gamma.get(0, j) * (*v - bn.running_mean[j]) * s + bn.beta.get(0, j);
                }
            }
        }
        if l != last {
            h = h.map(|v| if v > F::zero() { v } else { F::zero() });
        }
    }
    h
}

pub(crate) fn apply_bn_stats<F: Real>(encoder: &mut Encoder<F>, stats: &BnStats<F>) {
    for (layer, stat) in encoder.layers.iter_mut().zip(stats) {
        if let (Some(bn), Some((mean, var))) = (layer.batch_norm.as_mut(), stat.as_ref()) {
            bn.update_running(mean, var);
        }
    }
}

/// Aggregation matrix of one sampled block layer: mean over the sampled
/// neighbors plus the node itself.
pub fn block_agg_csr<F: Real>(layer: &BlockLayer) -> CsrMatrix<F> {
    let mut triplets = Vec::new();
    for (row, (&self_pos, nbrs)) in layer.self_pos.iter().zip(&layer.neighbor_pos).enumerate() {
        let w = F::from_f64(1.0 / (nbrs.len() + 1) as f64);
        triplets.push((row, self_pos, w));
        for &p in nbrs {
            triplets.push((row, p, w));
        }
    }
    CsrMatrix::from_triplets(layer.nodes_out.len(), layer.nodes_in.len(), &triplets)
}

/// Per-layer aggregation matrices for a whole block.
pub fn block_agg_inputs<F: Real>(block: &SampledBlock) -> AggInput<F> {
    AggInput::Blocks(block.layers.iter().map(|l| Rc::new(block_agg_csr(l))).collect())
}

// ---------------------------------------------------------------------------
// models
// ---------------------------------------------------------------------------

/// Teacher GNN: encoder with neighbor aggregation plus a linear head.
#[derive(Debug, Clone)]
pub struct GnnModel<F> {
    pub encoder: Encoder<F>,
    pub head: Linear<F>,
    pub aggregation: NormMode,
}

impl<F: Real> GnnModel<F> {
    #[allow(clippy::too_many_arguments)]
    pub fn init(
        seed: u64,
        in_dim: usize,
        hidden_dim: usize,
        num_layers: usize,
        num_classes: usize,
        dropout: f64,
        aggregation: NormMode,
        batch_norm: bool,
    ) -> Self {
        let mut rng = rng::stream(seed, "gnn-init");
        GnnModel {
            encoder: Encoder::new(in_dim, hidden_dim, num_layers, dropout, batch_norm, &mut rng),
            head: Linear::glorot(hidden_dim, num_classes, &mut rng),
            aggregation,
        }
    }

    /// Embeddings and logits in eval mode (dropout off, running BN stats).
    pub fn infer(&self, agg: &AggInput<F>, x: &Tensor<F>) -> (Tensor<F>, Tensor<F>) {
        let h = encoder_forward_value(&self.encoder, agg, x);
        let logits = self.head.apply_value(&h);
        (h, logits)
    }

    /// Eval-mode inference over the full graph.
    pub fn infer_full(&self, graph: &Graph) -> (Tensor<F>, Tensor<F>) {
        let adj = Rc::new(normalize_adjacency::<F>(&graph.adjacency, self.aggregation));
        self.infer(&AggInput::Full(adj), &graph.features_as())
    }

    pub fn param_tensors_mut(&mut self) -> Vec<&mut Tensor<F>> {
        let mut out = Vec::new();
        for layer in &mut self.encoder.layers {
            out.push(&mut layer.linear.w);
            out.push(&mut layer.linear.b);
            if let Some(bn) = &mut layer.batch_norm {
                out.push(&mut bn.gamma);
                out.push(&mut bn.beta);
            }
        }
        out.push(&mut self.head.w);
        out.push(&mut self.head.b);
        out
    }

    pub fn param_shapes(&self) -> Vec<(usize, usize)> {
        let mut s = Vec::new();
        for layer in &self.encoder.layers {
            s.push(layer.linear.w.shape());
            s.push(layer.linear.b.shape());
            if let Some(bn) = &layer.batch_norm {
                s.push(bn.gamma.shape());
                s.push(bn.beta.shape());
            }
        }
        s.push(self.head.w.shape());
        s.push(self.head.b.shape());
        s
    }
}

/// Tape view of a GNN model's parameters.
pub struct GnnModelVars {
    pub encoder: EncoderVars,
    pub head_w: Var,
    pub head_b: Var,
}

impl GnnModelVars {
    pub fn all(&self) -> Vec<Var> {
        let mut v = self.encoder.all();
        v.push(self.head_w);
        v.push(self.head_b);
        v
    }
}

pub fn insert_gnn<F: Real>(model: &GnnModel<F>, tape: &mut Tape<F>) -> GnnModelVars {
    let encoder = insert_encoder(&model.encoder, tape);
    GnnModelVars {
        encoder,
        head_w: tape.param(model.head.w.clone()),
        head_b: tape.param(model.head.b.clone()),
    }
}

/// Forward pass on the tape. Returns `(H, logits, batch-norm stats)`.
#[allow(clippy::too_many_arguments)]
pub fn gnn_forward_tape<F: Real>(
    model: &GnnModel<F>,
    vars: &GnnModelVars,
    tape: &mut Tape<F>,
    agg: &AggInput<F>,
    x: Var,
    train: bool,
    rng: &mut rng::Rng,
) -> Result<(Var, Var, BnStats<F>), TensorError> {
    let (h, stats) = encoder_forward_tape(&model.encoder, &vars.encoder, tape, agg, x, train, rng)?;
    let logits = tape.matmul(h, vars.head_w)?;
    let logits = tape.add_row(logits, vars.head_b)?;
    Ok((h, logits, stats))
}

/// Student MLP: the same layer stack with no aggregation anywhere.
#[derive(Debug, Clone)]
pub struct MlpModel<F> {
    pub encoder: Encoder<F>,
    pub head: Linear<F>,
}

impl<F: Real> MlpModel<F> {
    pub fn init(
        seed: u64,
        in_dim: usize,
        hidden_dim: usize,
        num_layers: usize,
        num_classes: usize,
        dropout: f64,
    ) -> Self {
        let mut rng = rng::stream(seed, "mlp-init");
        MlpModel {
            encoder: Encoder::new(in_dim, hidden_dim, num_layers, dropout, false, &mut rng),
            head: Linear::glorot(hidden_dim, num_classes, &mut rng),
        }
    }

    pub fn infer(&self, x: &Tensor<F>) -> (Tensor<F>, Tensor<F>) {
        let h = encoder_forward_value(&self.encoder, &AggInput::None, x);
        let logits = self.head.apply_value(&h);
        (h, logits)
    }

    pub fn param_tensors_mut(&mut self) -> Vec<&mut Tensor<F>> {
        let mut out = Vec::new();
        for layer in &mut self.encoder.layers {
            out.push(&mut layer.linear.w);
            out.push(&mut layer.linear.b);
        }
        out.push(&mut self.head.w);
        out.push(&mut self.head.b);
        out
    }

    pub fn param_shapes(&self) -> Vec<(usize, usize)> {
        let mut s = Vec::new();
        for layer in &self.encoder.layers {
            s.push(layer.linear.w.shape());
            s.push(layer.linear.b.shape());
        }
        s.push(self.head.w.shape());
        s.push(self.head.b.shape());
        s
    }
}

pub struct MlpModelVars {
    pub encoder: EncoderVars,
    pub head_w: Var,
    pub head_b: Var,
}

impl MlpModelVars {
    pub fn all(&self) -> Vec<Var> {
        let mut v = self.encoder.all();
        v.push(self.head_w);
        v.push(self.head_b);
        v
    }
}

pub fn insert_mlp<F: Real>(model: &MlpModel<F>, tape: &mut Tape<F>) -> MlpModelVars {
    let encoder = insert_encoder(&model.encoder, tape);
    MlpModelVars {
        encoder,
        head_w: tape.param(model.head.w.clone()),
        head_b: tape.param(model.head.b.clone()),
    }
}

pub fn mlp_forward_tape<F: Real>(
    model: &MlpModel<F>,
    vars: &MlpModelVars,
    tape: &mut Tape<F>,
    x: Var,
    train: bool,
    rng: &mut rng::Rng,
) -> Result<(Var, Var), TensorError> {
    let (h, _) = encoder_forward_tape(&model.encoder, &vars.encoder, tape, &AggInput::None, x, train, rng)?;
    let logits = tape.matmul(h, vars.head_w)?;
    let logits = tape.add_row(logits, vars.head_b)?;
    Ok((h, logits))
}

// ---------------------------------------------------------------------------
// plain supervised training (CE on labeled nodes only)
// ---------------------------------------------------------------------------

/// One epoch of a training log.
#[derive(Debug, Clone)]
pub struct TrainRecord {
    pub epoch: usize,
    pub loss: f64,
    pub terms: Vec<(String, f64)>,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct SupervisedConfig {
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub dropout: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub patience: usize,
    pub aggregation: NormMode,
    pub batch_norm: bool,
}

#[derive(Debug)]
pub enum TrainError {
    Tensor(TensorError),
    Graph(crate::graph::GraphError),
    Diverged { epoch: usize },
}

impl core::fmt::Display for TrainError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            TrainError::Tensor(e) => write!(f, "tensor error: {e}"),
            TrainError::Graph(e) => write!(f, "graph error: {e}"),
            TrainError::Diverged { epoch } => write!(f, "loss became non-finite at epoch {epoch}"),
        }
    }
}

impl core::error::Error for TrainError {}

impl From<TensorError> for TrainError {
    fn from(e: TensorError) -> Self {
        TrainError::Tensor(e)
    }
}

impl From<crate::graph::GraphError> for TrainError {
    fn from(e: crate::graph::GraphError) -> Self {
        TrainError::Graph(e)
    }
}

/// Argmax accuracy over `mask`; ties go to the lowest class index.
fn masked_accuracy<F: Real>(logits: &Tensor<F>, labels: &[usize], mask: &[usize]) -> f64 {
    crate::eval::accuracy(logits, labels, mask).unwrap_or(0.0)
}

/// Train a plain GNN with cross-entropy on the labeled nodes. Uses the
/// split's training edge set; keeps the best-validation parameters.
pub fn train_plain_gnn<F: Real>(
    graph: &Graph,
    split: &SplitSpec,
    val_nodes: &[usize],
    config: &SupervisedConfig,
    seed: u64,
) -> Result<(GnnModel<F>, Vec<TrainRecord>), TrainError> {
    let model = GnnModel::<F>::init(
        seed,
        graph.feature_dim(),
        config.hidden_dim,
        config.num_layers,
        graph.num_classes,
        config.dropout,
        config.aggregation,
        config.batch_norm,
    );
    train_gnn_from(model, graph, split, val_nodes, config, seed)
}

/// Continue supervised training from an existing model (fine-tuning).
/// Only the optimization fields of `config` are used; the architecture
/// is taken from `model`.
pub fn train_gnn_from<F: Real>(
    mut model: GnnModel<F>,
    graph: &Graph,
    split: &SplitSpec,
    val_nodes: &[usize],
    config: &SupervisedConfig,
    seed: u64,
) -> Result<(GnnModel<F>, Vec<TrainRecord>), TrainError> {
    let train_graph = graph.with_edges(&split.train_edges)?;
    let adj = Rc::new(normalize_adjacency::<F>(&train_graph.adjacency, model.aggregation));
    let x = graph.features_as::<F>();
    let labels = Rc::new(graph.labels.clone());
    let labeled = Rc::new(split.labeled.clone());

    let mut opt = Adam::<F>::new(AdamConfig::new(config.lr, config.weight_decay), &model.param_shapes());
    let mut dropout_rng = rng::stream(seed, "gnn-dropout");
    let mut best = (model.clone(), -1.0f64, 0usize);
    let mut log = Vec::new();

    for epoch in 0..config.epochs {
        let mut tape: Tape<F> = Tape::new();
        let vars = insert_gnn(&model, &mut tape);
        let xv = tape.constant(x.clone());
        let (_, logits, stats) =
            gnn_forward_tape(&model, &vars, &mut tape, &AggInput::Full(Rc::clone(&adj)), xv, true, &mut dropout_rng)?;
        let loss = tape.cross_entropy_rows(logits, Rc::clone(&labels), Rc::clone(&labeled))?;
        let loss_value = tape.value(loss).item().to_f64();
        if !loss_value.is_finite() {
            return Err(TrainError::Diverged { epoch });
        }
        let mut grads = tape.backward(loss)?;
        apply_bn_stats(&mut model.encoder, &stats);
        let var_list = vars.all();
        let grad_tensors: Vec<Option<Tensor<F>>> = var_list.iter().map(|&v| grads.take(v)).collect();
        let grad_refs: Vec<Option<&Tensor<F>>> = grad_tensors.iter().map(|g| g.as_ref()).collect();
        let mut params = model.param_tensors_mut();
        let _ = opt.step(&mut params, &grad_refs);

        let (_, val_logits) = {
            let (h, l) = model.infer(&AggInput::Full(Rc::clone(&adj)), &x);
            (h, l)
        };
        let val_acc = if val_nodes.is_empty() {
            masked_accuracy(&val_logits, &graph.labels, &split.labeled)
        } else {
            masked_accuracy(&val_logits, &graph.labels, val_nodes)
        };
        log.push(TrainRecord {
            epoch,
            loss: loss_value,
            terms: vec![("ce".into(), loss_value)],
            val_accuracy: val_acc,
        });
        if val_acc > best.1 {
            best = (model.clone(), val_acc, epoch);
        } else if epoch - best.2 >= config.patience {
            break;
        }
    }
    Ok((best.0, log))
}

/// Train a plain MLP with cross-entropy on the labeled nodes (the
/// stand-alone baseline).
pub fn train_plain_mlp<F: Real>(
    graph: &Graph,
    split: &SplitSpec,
    val_nodes: &[usize],
    config: &SupervisedConfig,
    seed: u64,
) -> Result<(MlpModel<F>, Vec<TrainRecord>), TrainError> {
    let x = graph.features_as::<F>();
    let labels = Rc::new(graph.labels.clone());
    let labeled = Rc::new(split.labeled.clone());

    let mut model = MlpModel::<F>::init(
        seed,
        graph.feature_dim(),
        config.hidden_dim,
        config.num_layers,
        graph.num_classes,
        config.dropout,
    );
    let mut opt = Adam::<F>::new(AdamConfig::new(config.lr, config.weight_decay), &model.param_shapes());
    let mut dropout_rng = rng::stream(seed, "mlp-dropout");
    let mut best = (model.clone(), -1.0f64, 0usize);
    let mut log = Vec::new();

    for epoch in 0..config.epochs {
        let mut tape: Tape<F> = Tape::new();
        let vars = insert_mlp(&model, &mut tape);
        let xv = tape.constant(x.clone());
        let (_, logits) = mlp_forward_tape(&model, &vars, &mut tape, xv, true, &mut dropout_rng)?;
        let loss = tape.cross_entropy_rows(logits, Rc::clone(&labels), Rc::clone(&labeled))?;
        let loss_value = tape.value(loss).item().to_f64();
        if !loss_value.is_finite() {
            return Err(TrainError::Diverged { epoch });
        }
        let mut grads = tape.backward(loss)?;
        let var_list = vars.all();
        let grad_tensors: Vec<Option<Tensor<F>>> = var_list.iter().map(|&v| grads.take(v)).collect();
        let grad_refs: Vec<Option<&Tensor<F>>> = grad_tensors.iter().map(|g| g.as_ref()).collect();
        let mut params = model.param_tensors_mut();
        let outcome = opt.step(&mut params, &grad_refs);
        debug_assert_eq!(outcome, StepOutcome::Applied);

        let (_, val_logits) = model.infer(&x);
        let val_acc = if val_nodes.is_empty() {
            masked_accuracy(&val_logits, &graph.labels, &split.labeled)
        } else {
            masked_accuracy(&val_logits, &graph.labels, val_nodes)
        };
        log.push(TrainRecord {
            epoch,
            loss: loss_value,
            terms: vec![("ce".into(), loss_value)],
            val_accuracy: val_acc,
        });
        if val_acc > best.1 {
            best = (model.clone(), val_acc, epoch);
        } else if epoch - best.2 >= config.patience {
            break;
        }
    }
    Ok((best.0, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::split::{make_transductive_split, LabeledSpec};
    use crate::synth;

    #[test]
    fn glorot_bound_and_zero_bias() {
        let mut r = rng::stream(1, "t");
        let lin = Linear::<f64>::glorot(128, 128, &mut r);
        let bound = (6.0f64 / 256.0).sqrt();
        for &w in lin.w.data() {
            assert!(w.abs() <= bound + 1e-12);
        }
        assert!(lin.b.data().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn init_is_deterministic() {
        let a = GnnModel::<f32>::init(9, 8, 4, 2, 3, 0.0, NormMode::GcnSym, false);
        let b = GnnModel::<f32>::init(9, 8, 4, 2, 3, 0.0, NormMode::GcnSym, false);
        assert_eq!(a.encoder.layers[0].linear.w, b.encoder.layers[0].linear.w);
        assert_eq!(a.head.w, b.head.w);
    }

    #[test]
    fn self_loop_only_gnn_matches_mlp_with_same_weights() {
        // with no edges the normalized adjacency is the identity, so the
        // GNN collapses to an MLP with the same weights.
        let g = crate::graph::Graph::new(
            5,
            &[],
            synth::random_graph(3, 5, 0.0, 6, 2).features,
            alloc::vec![0, 1, 0, 1, 0],
            2,
        )
        .unwrap();
        let gnn = GnnModel::<f64>::init(4, 6, 4, 2, 2, 0.0, NormMode::GcnSym, false);
        let mlp = MlpModel { encoder: gnn.encoder.clone(), head: gnn.head.clone() };
        let (hg, lg) = gnn.infer_full(&g);
        let (hm, lm) = mlp.infer(&g.features_as());
        for (a, b) in hg.data().iter().zip(hm.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in lg.data().iter().zip(lm.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_weights_give_zero_logits() {
        let g = synth::sbm(8, &[5, 5], 0.4, 0.1, 4, 0.3);
        let mut gnn = GnnModel::<f64>::init(4, 4, 8, 2, 2, 0.0, NormMode::GcnSym, false);
        for p in gnn.param_tensors_mut() {
            for v in p.data_mut() {
                *v = 0.0;
            }
        }
        let (_, logits) = gnn.infer_full(&g);
        assert!(logits.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mlp_permutation_equivariance() {
        let g = synth::sbm(2, &[4, 4], 0.5, 0.1, 6, 0.5);
        let mlp = MlpModel::<f64>::init(1, 6, 4, 2, 2, 0.0);
        let x = g.features_as::<f64>();
        let (h, _) = mlp.infer(&x);
        let perm = [3usize, 1, 7, 0, 2, 6, 4, 5];
        let xp = x.gather_rows(&perm);
        let (hp, _) = mlp.infer(&xp);
        for (i, &p) in perm.iter().enumerate() {
            for (a, b) in hp.row(i).iter().zip(h.row(p)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mlp_output_invariant_to_edges() {
        let g = synth::sbm(6, &[10, 10], 0.4, 0.1, 4, 0.4);
        let mlp = MlpModel::<f64>::init(2, 4, 8, 2, 2, 0.0);
        let (h1, l1) = mlp.infer(&g.features_as());
        let g2 = g.with_edges(&[(0, 5), (1, 9)]).unwrap();
        let (h2, l2) = mlp.infer(&g2.features_as());
        assert_eq!(h1, h2);
        assert_eq!(l1, l2);
    }

    #[test]
    fn supervised_training_fits_separable_sbm() {
        let g = synth::sbm(5, &[30, 30], 0.25, 0.02, 8, 0.3);
        let split = make_transductive_split(&g, 1, LabeledSpec::PerClass(8)).unwrap();
        let cfg = SupervisedConfig {
            hidden_dim: 16,
            num_layers: 2,
            dropout: 0.0,
            lr: 0.01,
            weight_decay: 0.0,
            epochs: 60,
            patience: 60,
            aggregation: NormMode::GcnSym,
            batch_norm: false,
        };
        let (model, log) = train_plain_gnn::<f32>(&g, &split, &[], &cfg, 11).unwrap();
        assert!(!log.is_empty());
        let (_, logits) = model.infer_full(&g);
        let acc = crate::eval::accuracy(&logits, &g.labels, &split.observed_unlabeled).unwrap();
        assert!(acc > 0.9, "sbm accuracy {acc}");
    }
}
