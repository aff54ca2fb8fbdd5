//! Structure-aware graph tokenizer.
//!
//! A GNN encoder maps each node to a latent vector that is quantized
//! against a learned codebook (nearest code by Euclidean distance). The
//! quantized vectors must support three reconstructions at once — node
//! features (cosine error), local adjacency (sigmoid inner products) and
//! the node label (cross-entropy) — plus the usual vector-quantization
//! and commitment terms. Gradients pass the quantizer via the
//! straight-through estimator; the codebook itself learns only from the
//! vector-quantization term.

use alloc::rc::Rc;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::adam::{Adam, AdamConfig};
use crate::autodiff::{Tape, Var};
use crate::gnn::{
    apply_bn_stats, block_agg_inputs, encoder_forward_tape, encoder_forward_value, insert_encoder,
    AggInput, Encoder, EncoderVars, Linear, TrainError, TrainRecord,
};
use crate::graph::{normalize_adjacency, uniform_tensor, Adjacency, Graph, NormMode};
use crate::rng;
use crate::sample::sample_neighbors;
use crate::split::SplitSpec;
use crate::tensor::{Real, Tensor, TensorError};

/// Normalization of the adjacency-reconstruction term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeNorm {
    /// Raw squared Frobenius error.
    Sum,
    /// Squared error divided by the number of matrix cells.
    Mean,
}

#[derive(Debug, Clone)]
pub struct TokenizerModel<F> {
    pub encoder: Encoder<F>,
    pub aggregation: NormMode,
    /// `M x D` code embeddings.
    pub codebook: Tensor<F>,
    /// Reconstructs raw node features from quantized embeddings.
    pub attr_decoder: Linear<F>,
    /// Maps quantized embeddings to the space whose inner products
    /// predict adjacency.
    pub topo_decoder: Linear<F>,
    /// Predicts the class from the quantized embedding.
    pub classifier: Linear<F>,
    /// Exponent of the cosine reconstruction error.
    pub gamma: f64,
    /// Commitment weight.
    pub eta: f64,
}

impl<F: Real> TokenizerModel<F> {
    #[allow(clippy::too_many_arguments)]
    pub fn init(
        seed: u64,
        in_dim: usize,
        hidden_dim: usize,
        num_layers: usize,
        num_classes: usize,
        codebook_size: usize,
        dropout: f64,
        aggregation: NormMode,
        batch_norm: bool,
        gamma: f64,
        eta: f64,
    ) -> Self {
        assert!(codebook_size > 0, "empty codebook");
        let mut r = rng::stream(seed, "tokenizer-init");
        let encoder = Encoder::new(in_dim, hidden_dim, num_layers, dropout, batch_norm, &mut r);
        let bound = 1.0 / codebook_size as f64;
        TokenizerModel {
            encoder,
            aggregation,
            codebook: uniform_tensor(codebook_size, hidden_dim, bound, &mut r),
            attr_decoder: Linear::glorot(hidden_dim, in_dim, &mut r),
            topo_decoder: Linear::glorot(hidden_dim, hidden_dim, &mut r),
            classifier: Linear::glorot(hidden_dim, num_classes, &mut r),
            gamma,
            eta,
        }
    }

    pub fn codebook_size(&self) -> usize {
        self.codebook.rows()
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
        out.push(&mut self.codebook);
        out.push(&mut self.attr_decoder.w);
        out.push(&mut self.attr_decoder.b);
        out.push(&mut self.topo_decoder.w);
        out.push(&mut self.topo_decoder.b);
        out.push(&mut self.classifier.w);
        out.push(&mut self.classifier.b);
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
        s.push(self.codebook.shape());
        s.push(self.attr_decoder.w.shape());
        s.push(self.attr_decoder.b.shape());
        s.push(self.topo_decoder.w.shape());
        s.push(self.topo_decoder.b.shape());
        s.push(self.classifier.w.shape());
        s.push(self.classifier.b.shape());
        s
    }

    /// Eval-mode embeddings, code assignments and logits over the
    /// full graph.
    pub fn infer_full(&self, graph: &Graph) -> (Tensor<F>, Vec<usize>, Tensor<F>) {
        let adj = Rc::new(normalize_adjacency::<F>(&graph.adjacency, self.aggregation));
        let h = encoder_forward_value(&self.encoder, &AggInput::Full(adj), &graph.features_as());
        let z = assign_codes(&h, &self.codebook);
        let quantized = self.codebook.gather_rows(&z);
        let logits = self.classifier.apply_value(&quantized);
        (h, z, logits)
    }
}

/// Nearest code (Euclidean) for every row of `h`; ties resolve to the
/// lowest code index.
pub fn assign_codes<F: Real>(h: &Tensor<F>, codebook: &Tensor<F>) -> Vec<usize> {
    let (n, d) = h.shape();
    let m = codebook.rows();
    assert_eq!(codebook.cols(), d, "codebook dimension mismatch");
    assert!(m > 0, "empty codebook");
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let row = h.row(i);
        let mut best = 0usize;
        let mut best_d = F::infinity();
        for j in 0..m {
            let code = codebook.row(j);
            let mut acc = F::zero();
            for k in 0..d {
                let diff = row[k] - code[k];
                acc += diff * diff;
            }
            if acc < best_d {
                best_d = acc;
                best = j;
            }
        }
        out.push(best);
    }
    out
}

/// Dense symmetric 0/1 adjacency with zero diagonal, the target of the
/// edge-reconstruction term.
pub fn dense_adjacency_target<F: Real>(adj: &Adjacency) -> Tensor<F> {
    let n = adj.num_nodes();
    let mut a = Tensor::zeros(n, n);
    for u in 0..n {
        for &v in adj.neighbors(u) {
            a.set(u, v, F::one());
        }
    }
    a
}

/// Same target built from local edge pairs of a sampled batch.
pub fn dense_edges_target<F: Real>(n: usize, edges: &[(usize, usize)]) -> Tensor<F> {
    let mut a = Tensor::zeros(n, n);
    for &(u, v) in edges {
        a.set(u, v, F::one());
        a.set(v, u, F::one());
    }
    a
}

/// Scalar values of the individual loss terms for logging.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TokenizerLossTerms {
    pub node_recon: f64,
    pub edge_recon: f64,
    pub classification: f64,
    pub vq: f64,
    pub commitment: f64,
    pub total: f64,
}

/// Tape handles for the tokenizer parameters.
pub struct TokenizerVars {
    pub encoder: EncoderVars,
    pub codebook: Var,
    pub attr_w: Var,
    pub attr_b: Var,
    pub topo_w: Var,
    pub topo_b: Var,
    pub cls_w: Var,
    pub cls_b: Var,
}

impl TokenizerVars {
    pub fn all(&self) -> Vec<Var> {
        let mut v = self.encoder.all();
        v.extend([
            self.codebook,
            self.attr_w,
            self.attr_b,
            self.topo_w,
            self.topo_b,
            self.cls_w,
            self.cls_b,
        ]);
        v
    }
}

pub fn insert_tokenizer<F: Real>(model: &TokenizerModel<F>, tape: &mut Tape<F>) -> TokenizerVars {
    TokenizerVars {
        encoder: insert_encoder(&model.encoder, tape),
        codebook: tape.param(model.codebook.clone()),
        attr_w: tape.param(model.attr_decoder.w.clone()),
        attr_b: tape.param(model.attr_decoder.b.clone()),
        topo_w: tape.param(model.topo_decoder.w.clone()),
        topo_b: tape.param(model.topo_decoder.b.clone()),
        cls_w: tape.param(model.classifier.w.clone()),
        cls_b: tape.param(model.classifier.b.clone()),
    }
}

/// Quantize `h` and assemble the five-term tokenizer loss on the tape.
///
/// `h` must hold one row per target node; `recon_target` the raw features
/// and `adj_target` the dense adjacency of exactly those nodes. When
/// `labeled_rows` is empty the classification term is skipped.
#[allow(clippy::too_many_arguments)]
pub fn tokenizer_loss_on_tape<F: Real>(
    model: &TokenizerModel<F>,
    vars: &TokenizerVars,
    tape: &mut Tape<F>,
    h: Var,
    recon_target: Rc<Tensor<F>>,
    adj_target: Rc<Tensor<F>>,
    labels: Rc<Vec<usize>>,
    labeled_rows: Rc<Vec<usize>>,
    edge_norm: EdgeNorm,
    ce_on_quantized: bool,
) -> Result<(Var, Vec<usize>, TokenizerLossTerms), TensorError> {
    let n = tape.value(h).rows();
    let inv_n = F::from_f64(1.0 / n.max(1) as f64);
    let codebook_now = tape.value(vars.codebook).clone();
    let z = assign_codes(tape.value(h), &codebook_now);
    let quantized = tape.straight_through(h, &codebook_now, &z)?;

    // node feature reconstruction
    let attr = tape.matmul(quantized, vars.attr_w)?;
    let attr = tape.add_row(attr, vars.attr_b)?;
    let node_recon = tape.cosine_row_error(attr, recon_target, F::from_f64(model.gamma))?;

    // adjacency reconstruction from sigmoid inner products
    let topo = tape.matmul(quantized, vars.topo_w)?;
    let topo = tape.add_row(topo, vars.topo_b)?;
    let scores = tape.matmul_nt(topo, topo)?;
    let probs = tape.sigmoid(scores);
    let adj_const = tape.constant((*adj_target).clone());
    let diff = tape.sub(probs, adj_const)?;
    let edge_sq = tape.sum_sq(diff);
    let edge_recon = match edge_norm {
        EdgeNorm::Sum => edge_sq,
        EdgeNorm::Mean => tape.scale(edge_sq, F::from_f64(1.0 / ((n * n).max(1) as f64))),
    };

    // classification from the (quantized) embedding
    let classification = if labeled_rows.is_empty() {
        None
    } else {
        let input = if ce_on_quantized { quantized } else { h };
        let logits = tape.matmul(input, vars.cls_w)?;
        let logits = tape.add_row(logits, vars.cls_b)?;
        Some(tape.cross_entropy_rows(logits, labels, labeled_rows)?)
    };

    // vector-quantization: pulls codes toward the (frozen) encoder output
    let gathered = tape.gather_rows(vars.codebook, Rc::new(z.clone()))?;
    let h_sg = tape.stop_grad(h);
    let vq_diff = tape.sub(h_sg, gathered)?;
    let vq = tape.sum_sq(vq_diff);
    let vq = tape.scale(vq, inv_n);

    // commitment: pulls the encoder toward the (frozen) codes
    let gathered_sg = tape.stop_grad(gathered);
    let commit_diff = tape.sub(gathered_sg, h)?;
    let commit = tape.sum_sq(commit_diff);
    let commit = tape.scale(commit, inv_n * F::from_f64(model.eta));

    let mut parts = vec![node_recon, edge_recon];
    if let Some(ce) = classification {
        parts.push(ce);
    }
    parts.push(vq);
    parts.push(commit);
    let total = tape.add_n(&parts)?;

    let terms = TokenizerLossTerms {
        node_recon: tape.value(node_recon).item().to_f64(),
        edge_recon: tape.value(edge_recon).item().to_f64(),
        classification: classification.map_or(0.0, |ce| tape.value(ce).item().to_f64()),
        vq: tape.value(vq).item().to_f64(),
        commitment: tape.value(commit).item().to_f64(),
        total: tape.value(total).item().to_f64(),
    };
    Ok((total, z, terms))
}

#[derive(Debug, Clone)]
pub struct TokenizerConfig {
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub codebook_size: usize,
    pub dropout: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub patience: usize,
    pub gamma: f64,
    pub eta: f64,
    pub edge_norm: EdgeNorm,
    pub aggregation: NormMode,
    pub batch_norm: bool,
    /// Feed the classifier quantized embeddings (default) or raw `h`.
    pub ce_on_quantized: bool,
    /// Re-seed codes unused for this many epochs; `None` disables.
    pub dead_code_reset_interval: Option<usize>,
}

impl TokenizerConfig {
    pub fn defaults(hidden_dim: usize, codebook_size: usize) -> Self {
        TokenizerConfig {
            hidden_dim,
            num_layers: 2,
            codebook_size,
            dropout: 0.0,
            lr: 1e-2,
            weight_decay: 0.0,
            epochs: 100,
            patience: 50,
            gamma: 2.0,
            eta: 0.25,
            edge_norm: EdgeNorm::Mean,
            aggregation: NormMode::GcnSym,
            batch_norm: false,
            ce_on_quantized: true,
            dead_code_reset_interval: None,
        }
    }
}

fn tokenizer_val_accuracy<F: Real>(
    model: &TokenizerModel<F>,
    agg: &AggInput<F>,
    x: &Tensor<F>,
    labels: &[usize],
    val_nodes: &[usize],
) -> f64 {
    let h = encoder_forward_value(&model.encoder, agg, x);
    let z = assign_codes(&h, &model.codebook);
    let quantized = model.codebook.gather_rows(&z);
    let logits = model.classifier.apply_value(&quantized);
    crate::eval::accuracy(&logits, labels, val_nodes).unwrap_or(0.0)
}

/// Re-initialize codes that received no assignments, copying random
/// encoder outputs. Returns the number of codes reset. The optimizer
/// moments for those rows keep their old values, which is acceptable for
/// the rare resets this is meant for.
pub fn reset_dead_codes<F: Real>(
    codebook: &mut Tensor<F>,
    h: &Tensor<F>,
    counts: &[usize],
    rng: &mut rng::Rng,
) -> usize {
    assert_eq!(counts.len(), codebook.rows(), "one count per code");
    if h.rows() == 0 {
        return 0;
    }
    let mut reset = 0usize;
    for (code, &c) in counts.iter().enumerate() {
        if c == 0 {
            let src = rng.random_range(0..h.rows());
            let row = h.row(src).to_vec();
            codebook.row_mut(code).copy_from_slice(&row);
            reset += 1;
        }
    }
    reset
}

/// Train on the full training graph (all nodes at once).
pub fn train_tokenizer_full<F: Real>(
    graph: &Graph,
    split: &SplitSpec,
    val_nodes: &[usize],
    config: &TokenizerConfig,
    seed: u64,
) -> Result<(TokenizerModel<F>, Vec<TrainRecord>), TrainError> {
    let train_graph = graph.with_edges(&split.train_edges)?;
    let adj = AggInput::Full(Rc::new(normalize_adjacency::<F>(&train_graph.adjacency, config.aggregation)));
    let x = graph.features_as::<F>();
    let recon_target = Rc::new(x.clone());
    let adj_target = Rc::new(dense_adjacency_target::<F>(&train_graph.adjacency));
    let labels = Rc::new(graph.labels.clone());
    let labeled = Rc::new(split.labeled.clone());

    let mut model = TokenizerModel::<F>::init(
        seed,
        graph.feature_dim(),
        config.hidden_dim,
        config.num_layers,
        graph.num_classes,
        config.codebook_size,
        config.dropout,
        config.aggregation,
        config.batch_norm,
        config.gamma,
        config.eta,
    );
    let mut opt = Adam::<F>::new(AdamConfig::new(config.lr, config.weight_decay), &model.param_shapes());
    let mut dropout_rng = rng::stream(seed, "tokenizer-dropout");
    let mut reset_rng = rng::stream(seed, "tokenizer-reset");
    let mut best = (model.clone(), -1.0f64, 0usize);
    let mut log = Vec::new();

    for epoch in 0..config.epochs {
        let mut tape: Tape<F> = Tape::new();
        let vars = insert_tokenizer(&model, &mut tape);
        let xv = tape.constant(x.clone());
        let (h, stats) =
            encoder_forward_tape(&model.encoder, &vars.encoder, &mut tape, &adj, xv, true, &mut dropout_rng)?;
        let (loss, z, terms) = tokenizer_loss_on_tape(
            &model,
            &vars,
            &mut tape,
            h,
            Rc::clone(&recon_target),
            Rc::clone(&adj_target),
            Rc::clone(&labels),
            Rc::clone(&labeled),
            config.edge_norm,
            config.ce_on_quantized,
        )?;
        if !terms.total.is_finite() {
            return Err(TrainError::Diverged { epoch });
        }
        let h_value = tape.value(h).clone();
        let mut grads = tape.backward(loss)?;
        apply_bn_stats(&mut model.encoder, &stats);
        let var_list = vars.all();
        let grad_tensors: Vec<Option<Tensor<F>>> = var_list.iter().map(|&v| grads.take(v)).collect();
        let grad_refs: Vec<Option<&Tensor<F>>> = grad_tensors.iter().map(|g| g.as_ref()).collect();
        let mut params = model.param_tensors_mut();
        let _ = opt.step(&mut params, &grad_refs);

        if let Some(interval) = config.dead_code_reset_interval {
            if interval > 0 && (epoch + 1) % interval == 0 {
                let mut counts = vec![0usize; config.codebook_size];
                for &c in &z {
                    counts[c] += 1;
                }
                reset_dead_codes(&mut model.codebook, &h_value, &counts, &mut reset_rng);
            }
        }

        let val_acc = tokenizer_val_accuracy(
            &model,
            &adj,
            &x,
            &graph.labels,
            if val_nodes.is_empty() { &split.labeled } else { val_nodes },
        );
        log.push(TrainRecord {
            epoch,
            loss: terms.total,
            terms: vec![
                ("node_recon".into(), terms.node_recon),
                ("edge_recon".into(), terms.edge_recon),
                ("classification".into(), terms.classification),
                ("vq".into(), terms.vq),
                ("commitment".into(), terms.commitment),
            ],
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

/// Mini-batch training with fixed fan-out neighbor sampling. The
/// edge-reconstruction target of each batch is the adjacency induced
/// among the batch targets.
pub fn train_tokenizer_minibatch<F: Real>(
    graph: &Graph,
    split: &SplitSpec,
    val_nodes: &[usize],
    config: &TokenizerConfig,
    batch_size: usize,
    fanouts: &[usize],
    seed: u64,
) -> Result<(TokenizerModel<F>, Vec<TrainRecord>), TrainError> {
    if batch_size == 0 {
        return Err(TrainError::Tensor(TensorError::InvalidArgument {
            op: "train_tokenizer_minibatch",
            message: "batch size must be positive".into(),
        }));
    }
    if fanouts.len() != config.num_layers {
        return Err(TrainError::Tensor(TensorError::InvalidArgument {
            op: "train_tokenizer_minibatch",
            message: alloc::format!(
                "{} fan-outs for {} layers",
                fanouts.len(),
                config.num_layers
            ),
        }));
    }
    let train_graph = graph.with_edges(&split.train_edges)?;
    let x = graph.features_as::<F>();
    let full_adj = AggInput::Full(Rc::new(normalize_adjacency::<F>(&train_graph.adjacency, config.aggregation)));
    let mut is_labeled = vec![false; graph.num_nodes()];
    for &v in &split.labeled {
        is_labeled[v] = true;
    }
    let mut pool: Vec<usize> = split.labeled.iter().chain(&split.observed_unlabeled).copied().collect();
    pool.sort_unstable();

    let mut model = TokenizerModel::<F>::init(
        seed,
        graph.feature_dim(),
        config.hidden_dim,
        config.num_layers,
        graph.num_classes,
        config.codebook_size,
        config.dropout,
        config.aggregation,
        config.batch_norm,
        config.gamma,
        config.eta,
    );
    let mut opt = Adam::<F>::new(AdamConfig::new(config.lr, config.weight_decay), &model.param_shapes());
    let mut dropout_rng = rng::stream(seed, "tokenizer-dropout");
    let mut shuffle_rng = rng::stream(seed, "tokenizer-shuffle");
    let mut reset_rng = rng::stream(seed, "tokenizer-reset");
    let mut best = (model.clone(), -1.0f64, 0usize);
    let mut log = Vec::new();

    for epoch in 0..config.epochs {
        pool.shuffle(&mut shuffle_rng);
        let mut usage = vec![0usize; config.codebook_size];
        let mut last_h: Option<Tensor<F>> = None;
        let mut epoch_terms = TokenizerLossTerms {
            node_recon: 0.0,
            edge_recon: 0.0,
            classification: 0.0,
            vq: 0.0,
            commitment: 0.0,
            total: 0.0,
        };
        let mut batches = 0usize;
        for chunk in pool.chunks(batch_size) {
            let block_seed: u64 = shuffle_rng.random();
            let block = sample_neighbors(&train_graph, chunk, fanouts, block_seed)?;
            let agg = block_agg_inputs::<F>(&block);
            let x_in = x.gather_rows(block.input_nodes());
            let recon_target = Rc::new(x.gather_rows(&block.target_nodes));
            let adj_target =
                Rc::new(dense_edges_target::<F>(block.num_targets(), &block.induced_edges));
            let local_labels: Vec<usize> =
                block.target_nodes.iter().map(|&v| graph.labels[v]).collect();
            let labeled_rows: Vec<usize> = block
                .target_nodes
                .iter()
                .enumerate()
                .filter(|&(_, &v)| is_labeled[v])
                .map(|(i, _)| i)
                .collect();

            let mut tape: Tape<F> = Tape::new();
            let vars = insert_tokenizer(&model, &mut tape);
            let xv = tape.constant(x_in);
            let (h, stats) = encoder_forward_tape(
                &model.encoder,
                &vars.encoder,
                &mut tape,
                &agg,
                xv,
                true,
                &mut dropout_rng,
            )?;
            let (loss, z, terms) = tokenizer_loss_on_tape(
                &model,
                &vars,
                &mut tape,
                h,
                recon_target,
                adj_target,
                Rc::new(local_labels),
                Rc::new(labeled_rows),
                config.edge_norm,
                config.ce_on_quantized,
            )?;
            if !terms.total.is_finite() {
                return Err(TrainError::Diverged { epoch });
            }
            for &c in &z {
                usage[c] += 1;
            }
            last_h = Some(tape.value(h).clone());
            let mut grads = tape.backward(loss)?;
            apply_bn_stats(&mut model.encoder, &stats);
            let var_list = vars.all();
            let grad_tensors: Vec<Option<Tensor<F>>> = var_list.iter().map(|&v| grads.take(v)).collect();
            let grad_refs: Vec<Option<&Tensor<F>>> = grad_tensors.iter().map(|g| g.as_ref()).collect();
            let mut params = model.param_tensors_mut();
            let _ = opt.step(&mut params, &grad_refs);

            epoch_terms.node_recon += terms.node_recon;
            epoch_terms.edge_recon += terms.edge_recon;
            epoch_terms.classification += terms.classification;
            epoch_terms.vq += terms.vq;
            epoch_terms.commitment += terms.commitment;
            epoch_terms.total += terms.total;
            batches += 1;
        }
        let inv = 1.0 / batches.max(1) as f64;
        epoch_terms.node_recon *= inv;
        epoch_terms.edge_recon *= inv;
        epoch_terms.classification *= inv;
        epoch_terms.vq *= inv;
        epoch_terms.commitment *= inv;
        epoch_terms.total *= inv;

        if let (Some(interval), Some(h_value)) = (config.dead_code_reset_interval, last_h.as_ref()) {
            if interval > 0 && (epoch + 1) % interval == 0 {
                reset_dead_codes(&mut model.codebook, h_value, &usage, &mut reset_rng);
            }
        }

        let val_acc = tokenizer_val_accuracy(
            &model,
            &full_adj,
            &x,
            &graph.labels,
            if val_nodes.is_empty() { &split.labeled } else { val_nodes },
        );
        log.push(TrainRecord {
            epoch,
            loss: epoch_terms.total,
            terms: vec![
                ("node_recon".into(), epoch_terms.node_recon),
                ("edge_recon".into(), epoch_terms.edge_recon),
                ("classification".into(), epoch_terms.classification),
                ("vq".into(), epoch_terms.vq),
                ("commitment".into(), epoch_terms.commitment),
            ],
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

// ---------------------------------------------------------------------------
// codebook statistics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct CodebookUsage {
    /// Assignments per code over all nodes.
    pub counts: Vec<usize>,
    /// Assignments per code, split by node class (`num_classes x M`).
    pub per_class: Vec<Vec<usize>>,
    pub active_codes: usize,
}

pub fn codebook_usage(
    assignments: &[usize],
    labels: &[usize],
    num_classes: usize,
    codebook_size: usize,
) -> CodebookUsage {
    assert_eq!(assignments.len(), labels.len(), "one label per assignment");
    let mut counts = vec![0usize; codebook_size];
    let mut per_class = vec![vec![0usize; codebook_size]; num_classes];
    for (&z, &c) in assignments.iter().zip(labels) {
        counts[z] += 1;
        per_class[c][z] += 1;
    }
    let active_codes = counts.iter().filter(|&&c| c > 0).count();
    CodebookUsage { counts, per_class, active_codes }
}

/// How class-code overlap is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverlapMode {
    /// |A ∩ B| / |A ∪ B|.
    Jaccard,
    /// |A ∩ B| / min(|A|, |B|).
    FractionOfSmaller,
}

/// Pairwise overlap (in percent) between the code sets used by each
/// class. Diagonal entries are 100 whenever the class uses any code.
pub fn class_code_overlap(usage: &CodebookUsage, mode: OverlapMode) -> Tensor<f64> {
    let k = usage.per_class.len();
    let mut out = Tensor::zeros(k, k);
    for a in 0..k {
        for b in 0..k {
            let mut inter = 0usize;
            let mut union = 0usize;
            let mut size_a = 0usize;
            let mut size_b = 0usize;
            for m in 0..usage.counts.len() {
                let ua = usage.per_class[a][m] > 0;
                let ub = usage.per_class[b][m] > 0;
                inter += (ua && ub) as usize;
                union += (ua || ub) as usize;
                size_a += ua as usize;
                size_b += ub as usize;
            }
            let denom = match mode {
                OverlapMode::Jaccard => union,
                OverlapMode::FractionOfSmaller => size_a.min(size_b),
            };
            let v = if denom == 0 { 0.0 } else { 100.0 * inter as f64 / denom as f64 };
            out.set(a, b, v);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::split::{make_transductive_split, LabeledSpec};
    use crate::synth;

    #[test]
    fn codebook_init_within_bound() {
        let m = TokenizerModel::<f64>::init(1, 8, 4, 2, 3, 10, 0.0, NormMode::GcnSym, false, 2.0, 0.25);
        for &v in m.codebook.data() {
            assert!(v.abs() <= 0.1 + 1e-12);
        }
        assert_eq!(m.codebook.shape(), (10, 4));
        assert_eq!(m.attr_decoder.w.shape(), (4, 8));
        assert_eq!(m.topo_decoder.w.shape(), (4, 4));
        assert_eq!(m.classifier.w.shape(), (4, 3));
    }

    #[test]
    fn assign_codes_ties_go_to_lowest_index() {
        let h = Tensor::from_rows(&[&[1.0f64, 0.0]]);
        let codebook = Tensor::from_rows(&[&[0.0f64, 0.0], &[2.0, 0.0]]);
        // both codes at distance 1
        assert_eq!(assign_codes(&h, &codebook), alloc::vec![0]);
    }

    #[test]
    fn assign_codes_picks_nearest() {
        let h = Tensor::from_rows(&[&[0.9f32, 0.0], &[-3.0, 0.1]]);
        let codebook = Tensor::from_rows(&[&[1.0f32, 0.0], &[-3.0, 0.0], &[0.0, 0.0]]);
        assert_eq!(assign_codes(&h, &codebook), alloc::vec![0, 1]);
    }

    /// Two nodes, one edge, all-zero decoders: every predicted edge
    /// probability is sigmoid(0) = 0.5, so the squared error against
    /// the adjacency is 4 * 0.25 = 1.0 summed, 0.25 averaged.
    #[test]
    fn edge_term_matches_hand_computation() {
        for (norm, expected) in [(EdgeNorm::Sum, 1.0f64), (EdgeNorm::Mean, 0.25)] {
            let mut model =
                TokenizerModel::<f64>::init(3, 2, 2, 1, 2, 4, 0.0, NormMode::GcnSym, false, 2.0, 0.25);
            for v in model.topo_decoder.w.data_mut() {
                *v = 0.0;
            }
            let mut tape: Tape<f64> = Tape::new();
            let vars = insert_tokenizer(&model, &mut tape);
            let h = tape.param(Tensor::from_rows(&[&[0.3f64, -0.1], &[0.2, 0.4]]));
            let adj = Adjacency::from_edges(2, &[(0, 1)]).unwrap();
            let (_, _, terms) = tokenizer_loss_on_tape(
                &model,
                &vars,
                &mut tape,
                h,
                Rc::new(Tensor::from_rows(&[&[1.0f64, 0.0], &[0.0, 1.0]])),
                Rc::new(dense_adjacency_target(&adj)),
                Rc::new(alloc::vec![0, 1]),
                Rc::new(Vec::new()),
                norm,
                true,
            )
            .unwrap();
            assert!((terms.edge_recon - expected).abs() < 1e-12, "{norm:?}: {}", terms.edge_recon);
        }
    }

    /// Hand-computed vector-quantization and commitment terms.
    #[test]
    fn vq_and_commitment_match_hand_computation() {
        let mut model =
            TokenizerModel::<f64>::init(5, 2, 2, 1, 2, 2, 0.0, NormMode::GcnSym, false, 2.0, 0.25);
        model.codebook = Tensor::from_rows(&[&[0.0f64, 0.0], &[10.0, 0.0]]);
        let mut tape: Tape<f64> = Tape::new();
        let vars = insert_tokenizer(&model, &mut tape);
        let h = tape.param(Tensor::from_rows(&[&[1.0f64, 0.0]]));
        let adj = Adjacency::from_edges(1, &[]).unwrap();
        let (_, z, terms) = tokenizer_loss_on_tape(
            &model,
            &vars,
            &mut tape,
            h,
            Rc::new(Tensor::from_rows(&[&[1.0f64, 0.0]])),
            Rc::new(dense_adjacency_target(&adj)),
            Rc::new(alloc::vec![0]),
            Rc::new(Vec::new()),
            EdgeNorm::Mean,
            true,
        )
        .unwrap();
        assert_eq!(z, alloc::vec![0]);
        assert!((terms.vq - 1.0).abs() < 1e-12);
        assert!((terms.commitment - 0.25).abs() < 1e-12);
    }

    /// The codebook must receive gradient only from the VQ term: with a
    /// single node assigned to code 0, the codebook gradient is
    /// -2(h - e_0)/N on row 0 and zero elsewhere.
    #[test]
    fn codebook_gradient_comes_only_from_vq_term() {
        let mut model =
            TokenizerModel::<f64>::init(5, 2, 2, 1, 2, 2, 0.0, NormMode::GcnSym, false, 2.0, 0.25);
        model.codebook = Tensor::from_rows(&[&[0.25f64, 0.0], &[10.0, 0.0]]);
        let mut tape: Tape<f64> = Tape::new();
        let vars = insert_tokenizer(&model, &mut tape);
        let h = tape.param(Tensor::from_rows(&[&[1.0f64, 0.5]]));
        let adj = Adjacency::from_edges(1, &[]).unwrap();
        let (loss, _, _) = tokenizer_loss_on_tape(
            &model,
            &vars,
            &mut tape,
            h,
            Rc::new(Tensor::from_rows(&[&[1.0f64, 0.0]])),
            Rc::new(dense_adjacency_target(&adj)),
            Rc::new(alloc::vec![0]),
            Rc::new(Vec::new()),
            EdgeNorm::Mean,
            true,
        )
        .unwrap();
        let mut grads = tape.backward(loss).unwrap();
        let g = grads.take(vars.codebook).unwrap();
        // d/d e0 of ||h - e0||^2 = -2 (h - e0) = -2 (0.75, 0.5)
        assert!((g.get(0, 0) - (-1.5)).abs() < 1e-12);
        assert!((g.get(0, 1) - (-1.0)).abs() < 1e-12);
        assert_eq!(g.get(1, 0), 0.0);
        assert_eq!(g.get(1, 1), 0.0);
    }

    #[test]
    fn full_training_reduces_loss_and_stays_finite() {
        let g = synth::sbm(7, &[20, 20], 0.3, 0.02, 6, 0.3);
        let split = make_transductive_split(&g, 1, LabeledSpec::PerClass(5)).unwrap();
        let mut cfg = TokenizerConfig::defaults(8, 6);
        cfg.epochs = 30;
        cfg.patience = 30;
        let (_, log) = train_tokenizer_full::<f32>(&g, &split, &[], &cfg, 3).unwrap();
        assert_eq!(log.len(), 30);
        let first = log[0].loss;
        let last = log.last().unwrap().loss;
        assert!(last.is_finite() && last < first, "loss {first} -> {last}");
    }

    #[test]
    fn minibatch_training_runs_and_reduces_edge_loss() {
        let g = synth::sbm(9, &[30, 30], 0.25, 0.03, 6, 0.3);
        let split = make_transductive_split(&g, 2, LabeledSpec::PerClass(5)).unwrap();
        let mut cfg = TokenizerConfig::defaults(8, 6);
        cfg.epochs = 40;
        cfg.patience = 40;
        cfg.lr = 0.03;
        let (_, log) = train_tokenizer_minibatch::<f32>(&g, &split, &[], &cfg, 16, &[5, 5], 3).unwrap();
        assert_eq!(log.len(), 40);
        let edge = |r: &TrainRecord| {
            r.terms.iter().find(|(n, _)| n == "edge_recon").map(|&(_, v)| v).unwrap()
        };
        let first: f64 = log[..5].iter().map(&edge).sum::<f64>() / 5.0;
        let last: f64 = log[log.len() - 5..].iter().map(&edge).sum::<f64>() / 5.0;
        assert!(last < first, "edge loss {first} -> {last}");
    }

    #[test]
    fn dead_code_reset_revives_unused_codes() {
        let mut codebook = Tensor::from_rows(&[&[5.0f64, 5.0], &[9.0, 9.0]]);
        let h = Tensor::from_rows(&[&[1.0f64, 2.0]]);
        let mut r = rng::stream(0, "t");
        let reset = reset_dead_codes(&mut codebook, &h, &[3, 0], &mut r);
        assert_eq!(reset, 1);
        assert_eq!(codebook.row(0), &[5.0, 5.0]);
        assert_eq!(codebook.row(1), &[1.0, 2.0]);
    }

    #[test]
    fn usage_and_overlap() {
        // class 0 uses codes {0,1}, class 1 uses {1,2}
        let z = [0usize, 1, 1, 2];
        let labels = [0usize, 0, 1, 1];
        let usage = codebook_usage(&z, &labels, 2, 4);
        assert_eq!(usage.counts, alloc::vec![1, 2, 1, 0]);
        assert_eq!(usage.active_codes, 3);
        let jaccard = class_code_overlap(&usage, OverlapMode::Jaccard);
        assert!((jaccard.get(0, 1) - 100.0 / 3.0).abs() < 1e-9);
        assert_eq!(jaccard.get(0, 0), 100.0);
        let frac = class_code_overlap(&usage, OverlapMode::FractionOfSmaller);
        assert!((frac.get(0, 1) - 50.0).abs() < 1e-9);
    }
}
