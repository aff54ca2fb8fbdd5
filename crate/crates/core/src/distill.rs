//! Code-based knowledge distillation from a GNN teacher into an MLP
//! student.
//!
//! The student sees node features only. Its loss combines (i) ordinary
//! cross-entropy on the labeled nodes, (ii) class distillation against
//! the teacher's softened logits and (iii) code distillation: both
//! teacher and student embeddings are softly assigned to the frozen
//! codebook, and the student's assignment distribution is matched to the
//! teacher's with a temperature-scaled KL term. In the inductive setting
//! only nodes visible at training time contribute.

// required for float math in pure no_std builds; redundant (and flagged
// unused) when a dependency links std and exposes the inherent methods
#[allow(unused_imports)]
use num_traits::Float as _;
use alloc::format;
use alloc::rc::Rc;
use alloc::vec;
use alloc::vec::Vec;

use crate::adam::{Adam, AdamConfig};
use crate::autodiff::{softmax_rows_value, Tape};
use crate::gnn::{insert_mlp, mlp_forward_tape, GnnModel, MlpModel, TrainError, TrainRecord};
use crate::graph::Graph;
use crate::rng;
use crate::split::SplitSpec;
use crate::tensor::{Real, Tensor, TensorError};
use crate::tokenizer::TokenizerModel;

/// Comparison function between embeddings and codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompFn {
    /// Negative Euclidean distance (default).
    NegL2,
    /// Cosine similarity.
    Cosine,
}

/// Soft assignment of each embedding row to the codebook:
/// `softmax(comp(h_i, E) / tau)`.
pub fn soft_code_assignment<F: Real>(
    h: &Tensor<F>,
    codebook: &Tensor<F>,
    comp: CompFn,
    tau: f64,
) -> Result<Tensor<F>, TensorError> {
    if !(tau > 0.0) {
        return Err(TensorError::InvalidArgument {
            op: "soft_code_assignment",
            message: format!("temperature {tau} must be positive"),
        });
    }
    let (n, d) = h.shape();
    let (m, dc) = codebook.shape();
    if d != dc {
        return Err(TensorError::ShapeMismatch {
            op: "soft_code_assignment",
            lhs: (n, d),
            rhs: (m, dc),
        });
    }
    let inv_tau = F::from_f64(1.0 / tau);
    let eps = 1e-12f64;
    let mut r = Tensor::zeros(n, m);
    for i in 0..n {
        let hi = h.row(i);
        for j in 0..m {
            let cj = codebook.row(j);
            let v = match comp {
                CompFn::NegL2 => {
                    let mut acc = F::zero();
                    for k in 0..d {
                        let diff = hi[k] - cj[k];
                        acc += diff * diff;
                    }
                    -acc.sqrt()
                }
                CompFn::Cosine => {
                    let mut dot = 0.0f64;
                    let mut na = 0.0f64;
                    let mut nb = 0.0f64;
                    for k in 0..d {
                        let a = hi[k].to_f64();
                        let b = cj[k].to_f64();
                        dot += a * b;
                        na += a * a;
                        nb += b * b;
                    }
                    F::from_f64(dot / (na.sqrt() * nb.sqrt()).max(eps))
                }
            };
            r.set(i, j, v * inv_tau);
        }
    }
    Ok(softmax_rows_value(&r))
}

/// Everything the student needs from the teacher, precomputed over all
/// nodes: class logits and (optionally) soft code assignments.
#[derive(Debug, Clone)]
pub struct TeacherTargets<F> {
    pub logits: Tensor<F>,
    pub code_probs: Option<Tensor<F>>,
}

/// Run a teacher GNN over the full graph and precompute its targets.
/// Pass the codebook to also produce soft code assignments.
pub fn teacher_targets_from_gnn<F: Real>(
    model: &GnnModel<F>,
    graph: &Graph,
    code: Option<(&Tensor<F>, CompFn, f64)>,
) -> Result<TeacherTargets<F>, TensorError> {
    let (h, logits) = model.infer_full(graph);
    let code_probs = match code {
        Some((codebook, comp, tau)) => Some(soft_code_assignment(&h, codebook, comp, tau)?),
        None => None,
    };
    Ok(TeacherTargets { logits, code_probs })
}

/// View a trained tokenizer as a teacher GNN: its encoder plus its code
/// classifier as the head. Usually fine-tuned with [`crate::gnn::train_gnn_from`]
/// before distillation.
pub fn gnn_from_tokenizer<F: Real>(tokenizer: &TokenizerModel<F>) -> GnnModel<F> {
    GnnModel {
        encoder: tokenizer.encoder.clone(),
        head: tokenizer.classifier.clone(),
        aggregation: tokenizer.aggregation,
    }
}

#[derive(Debug, Clone)]
pub struct DistillConfig {
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
    pub comp: CompFn,
}

impl DistillConfig {
    pub fn defaults(hidden_dim: usize) -> Self {
        DistillConfig {
            hidden_dim,
            num_layers: 2,
            dropout: 0.0,
            lr: 1e-2,
            weight_decay: 0.0,
            epochs: 300,
            patience: 100,
            alpha: 1.0,
            beta: 1.0,
            tau_code: 4.0,
            tau_class: 1.0,
            comp: CompFn::NegL2,
        }
    }
}

/// Distill the teacher targets into an MLP student.
///
/// The distillation set is every node in the transductive setting and
/// the labeled plus observed-unlabeled nodes in the inductive setting;
/// inductive nodes are never touched during training. `codebook` is the
/// frozen code embedding table; required whenever `beta > 0`.
pub fn train_student<F: Real>(
    graph: &Graph,
    split: &SplitSpec,
    val_nodes: &[usize],
    teacher: &TeacherTargets<F>,
    codebook: Option<&Tensor<F>>,
    config: &DistillConfig,
    seed: u64,
) -> Result<(MlpModel<F>, Vec<TrainRecord>), TrainError> {
    let n = graph.num_nodes();
    if teacher.logits.rows() != n {
        return Err(TrainError::Tensor(TensorError::InvalidArgument {
            op: "train_student",
            message: format!("{} teacher logit rows for {n} nodes", teacher.logits.rows()),
        }));
    }
    let use_code = config.beta > 0.0;
    if use_code && (codebook.is_none() || teacher.code_probs.is_none()) {
        return Err(TrainError::Tensor(TensorError::InvalidArgument {
            op: "train_student",
            message: "code distillation enabled but codebook or teacher code targets missing".into(),
        }));
    }

    // nodes visible during training, in ascending order
    let mut distill_rows: Vec<usize> =
        split.labeled.iter().chain(&split.observed_unlabeled).copied().collect();
    distill_rows.sort_unstable();
    let mut local_of = vec![usize::MAX; n];
    for (local, &g) in distill_rows.iter().enumerate() {
        local_of[g] = local;
    }
    let x_train = graph.features_as::<F>().gather_rows(&distill_rows);
    let local_labels: Vec<usize> = distill_rows.iter().map(|&v| graph.labels[v]).collect();
    let local_labeled: Vec<usize> = split.labeled.iter().map(|&v| local_of[v]).collect();
    let labels = Rc::new(local_labels);
    let labeled = Rc::new(local_labeled);

    let inv_tau_class = F::from_f64(1.0 / config.tau_class);
    let class_weight = F::from_f64(config.alpha * config.tau_class * config.tau_class);
    let inv_tau_code = F::from_f64(1.0 / config.tau_code);
    let code_weight = F::from_f64(config.beta * config.tau_code * config.tau_code);

    let mut teacher_soft = teacher.logits.gather_rows(&distill_rows);
    for v in teacher_soft.data_mut() {
        *v *= inv_tau_class;
    }
    let teacher_soft = softmax_rows_value(&teacher_soft);
    let teacher_codes = teacher.code_probs.as_ref().map(|p| p.gather_rows(&distill_rows));

    let mut model = MlpModel::<F>::init(
        seed,
        graph.feature_dim(),
        config.hidden_dim,
        config.num_layers,
        graph.num_classes,
        config.dropout,
    );
    let mut opt = Adam::<F>::new(AdamConfig::new(config.lr, config.weight_decay), &model.param_shapes());
    let mut dropout_rng = rng::stream(seed, "distill-dropout");
    let mut best = (model.clone(), -1.0f64, 0usize);
    let mut log = Vec::new();
    let x_full = graph.features_as::<F>();

    for epoch in 0..config.epochs {
        let mut tape: Tape<F> = Tape::new();
        let vars = insert_mlp(&model, &mut tape);
        let xv = tape.constant(x_train.clone());
        let (h, logits) = mlp_forward_tape(&model, &vars, &mut tape, xv, true, &mut dropout_rng)?;

        let ce = tape.cross_entropy_rows(logits, Rc::clone(&labels), Rc::clone(&labeled))?;

        let student_soft = tape.scale(logits, inv_tau_class);
        let student_soft = tape.softmax_rows(student_soft);
        let teacher_soft_var = tape.constant(teacher_soft.clone());
        let class_kl = tape.kl_rows(teacher_soft_var, student_soft)?;
        let class_term = tape.scale(class_kl, class_weight);

        let mut parts = vec![ce, class_term];
        let mut code_value = 0.0f64;
        if use_code {
            let cb = tape.constant(codebook.expect("checked above").clone());
            let scores = match config.comp {
                CompFn::NegL2 => {
                    let dist = tape.l2_row_distances(h, cb)?;
                    tape.scale(dist, -inv_tau_code)
                }
                CompFn::Cosine => {
                    let sim = tape.cosine_row_similarities(h, cb)?;
                    tape.scale(sim, inv_tau_code)
                }
            };
            let student_codes = tape.softmax_rows(scores);
            let teacher_codes_var =
                tape.constant(teacher_codes.as_ref().expect("checked above").clone());
            let code_kl = tape.kl_rows(teacher_codes_var, student_codes)?;
            let code_term = tape.scale(code_kl, code_weight);
            code_value = tape.value(code_term).item().to_f64();
            parts.push(code_term);
        }
        let loss = tape.add_n(&parts)?;
        let loss_value = tape.value(loss).item().to_f64();
        if !loss_value.is_finite() {
            return Err(TrainError::Diverged { epoch });
        }
        let ce_value = tape.value(ce).item().to_f64();
        let class_value = tape.value(class_term).item().to_f64();

        let mut grads = tape.backward(loss)?;
        let var_list = vars.all();
        let grad_tensors: Vec<Option<Tensor<F>>> = var_list.iter().map(|&v| grads.take(v)).collect();
        let grad_refs: Vec<Option<&Tensor<F>>> = grad_tensors.iter().map(|g| g.as_ref()).collect();
        let mut params = model.param_tensors_mut();
        let _ = opt.step(&mut params, &grad_refs);

        let (_, val_logits) = model.infer(&x_full);
        let val_mask = if val_nodes.is_empty() { &split.labeled } else { val_nodes };
        let val_acc = crate::eval::accuracy(&val_logits, &graph.labels, val_mask).unwrap_or(0.0);
        log.push(TrainRecord {
            epoch,
            loss: loss_value,
            terms: vec![
                ("ce".into(), ce_value),
                ("class_distill".into(), class_value),
                ("code_distill".into(), code_value),
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
