//! Task runner: each CLI task resolved into concrete training/evaluation
//! work over a dataset bundle, with all artifacts written into the output
//! directory. Every run starts by writing a manifest with the fully
//! resolved configuration and the seed list.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use graphvq_core::distill::{gnn_from_tokenizer, teacher_targets_from_gnn, train_student, DistillConfig};
use graphvq_core::eval::{accuracy, argmax_rows, cut_value, retrieve_similar_nodes};
use graphvq_core::gnn::{train_gnn_from, train_plain_gnn, GnnModel, MlpModel, TrainRecord};
use graphvq_core::graph::{add_feature_noise, Graph};
use graphvq_core::split::{
    make_inductive_split, make_transductive_split, select_validation, LabeledSpec, SplitSpec,
};
use graphvq_core::tokenizer::{
    class_code_overlap, codebook_usage, train_tokenizer_full, train_tokenizer_minibatch,
    OverlapMode, TokenizerModel,
};
use serde_json::{json, Value};

use crate::bench::{bench_student, bench_teacher, write_bench_csv};
use crate::bundle::{load_bundle, load_split_file};
use crate::checkpoint;
use crate::config::RunConfig;
use crate::error::CliError;
use crate::export::{mean_std, sig9, write_codes, write_embeddings, write_json, write_training_log};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    TrainTokenizer,
    Distill,
    Evaluate,
    Tokenize,
    Retrieve,
    Benchmark,
    NoiseSweep,
    Ablate,
}

impl Task {
    pub fn from_name(name: &str) -> Result<Task, CliError> {
        match name {
            "train-tokenizer" => Ok(Task::TrainTokenizer),
            "distill" => Ok(Task::Distill),
            "evaluate" => Ok(Task::Evaluate),
            "tokenize" => Ok(Task::Tokenize),
            "retrieve" => Ok(Task::Retrieve),
            "benchmark" => Ok(Task::Benchmark),
            "noise-sweep" => Ok(Task::NoiseSweep),
            "ablate" => Ok(Task::Ablate),
            other => Err(CliError::Config(format!(
                "unknown task {other:?} (expected one of: train-tokenizer, distill, evaluate, \
                 tokenize, retrieve, benchmark, noise-sweep, ablate)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Task::TrainTokenizer => "train-tokenizer",
            Task::Distill => "distill",
            Task::Evaluate => "evaluate",
            Task::Tokenize => "tokenize",
            Task::Retrieve => "retrieve",
            Task::Benchmark => "benchmark",
            Task::NoiseSweep => "noise-sweep",
            Task::Ablate => "ablate",
        }
    }
}

// --- shared plumbing ---------------------------------------------------------

pub fn load_dataset(config: &RunConfig) -> Result<Graph, CliError> {
    let dir = config.data_dir.as_ref().ok_or_else(|| {
        CliError::Config(format!(
            "data_dir is not set; point it at the {} bundle directory",
            config.dataset
        ))
    })?;
    let (graph, _meta) = load_bundle(Path::new(dir))?;
    Ok(graph)
}

fn labeled_spec(config: &RunConfig) -> Result<LabeledSpec, CliError> {
    if let Some(k) = config.split.labeled_per_class {
        Ok(LabeledSpec::PerClass(k))
    } else if let Some(f) = config.split.labeled_fraction {
        Ok(LabeledSpec::Fraction(f))
    } else {
        Err(CliError::Config("split needs labeled_per_class or labeled_fraction".to_string()))
    }
}

/// Build the node split for one seed: from predefined split files when
/// given, otherwise sampled from the seed.
pub fn build_split(graph: &Graph, config: &RunConfig, seed: u64) -> Result<(SplitSpec, Vec<usize>), CliError> {
    let split = if let Some(labeled_file) = &config.split.labeled_file {
        let n = graph.num_nodes();
        let labeled = load_split_file(Path::new(labeled_file), n)?;
        let inductive = match &config.split.inductive_file {
            Some(f) => load_split_file(Path::new(f), n)?,
            None => Vec::new(),
        };
        let observed = match &config.split.observed_file {
            Some(f) => load_split_file(Path::new(f), n)?,
            None => {
                let used: HashSet<usize> =
                    labeled.iter().chain(&inductive).copied().collect();
                (0..n).filter(|v| !used.contains(v)).collect()
            }
        };
        let ind_set: HashSet<usize> = inductive.iter().copied().collect();
        let train_edges = graph
            .adjacency
            .edge_list()
            .into_iter()
            .filter(|(u, v)| !ind_set.contains(u) && !ind_set.contains(v))
            .collect();
        let split = SplitSpec {
            labeled,
            observed_unlabeled: observed,
            inductive,
            train_edges,
            seed,
        };
        split
            .validate(graph)
            .map_err(|e| CliError::Config(format!("predefined split files are inconsistent: {e}")))?;
        split
    } else {
        let spec = labeled_spec(config)?;
        match config.split.setting.as_str() {
            "inductive" => make_inductive_split(graph, seed, spec, config.split.inductive_fraction)?,
            _ => make_transductive_split(graph, seed, spec)?,
        }
    };
    let val = select_validation(graph, &split, config.split.val_per_class, seed);
    Ok((split, val))
}

/// Observed-unlabeled nodes that are not used for validation: the
/// transductive test set.
pub fn test_nodes(split: &SplitSpec, val: &[usize]) -> Vec<usize> {
    let val_set: HashSet<usize> = val.iter().copied().collect();
    split.observed_unlabeled.iter().copied().filter(|v| !val_set.contains(v)).collect()
}

fn write_manifest(out: &Path, task: Task, config: &RunConfig, seeds: &[u64]) -> Result<(), CliError> {
    std::fs::create_dir_all(out)?;
    let manifest = json!({
        "task": task.name(),
        "seeds": seeds,
        "config": serde_json::to_value(config).unwrap(),
    });
    write_json(&out.join("manifest.json"), &manifest)
}

fn require_artifact(value: &Option<String>, field: &str, what: &str) -> Result<PathBuf, CliError> {
    match value {
        Some(p) => Ok(PathBuf::from(p)),
        None => Err(CliError::Config(format!(
            "missing artifact: {what} (set artifacts.{field} in the configuration)"
        ))),
    }
}

pub fn train_tokenizer_for_seed(
    graph: &Graph,
    config: &RunConfig,
    split: &SplitSpec,
    val: &[usize],
    seed: u64,
) -> Result<(TokenizerModel<f32>, Vec<TrainRecord>), CliError> {
    let core = config.tokenizer.core()?;
    let out = match config.tokenizer.batch_size {
        Some(batch) => train_tokenizer_minibatch::<f32>(
            graph,
            split,
            val,
            &core,
            batch,
            &config.tokenizer.fanouts,
            seed,
        )?,
        None => train_tokenizer_full::<f32>(graph, split, val, &core, seed)?,
    };
    Ok(out)
}

fn student_logits(model: &MlpModel<f32>, graph: &Graph) -> graphvq_core::tensor::Tensor<f32> {
    model.infer(&graph.features_as()).1
}

fn acc_on(logits: &graphvq_core::tensor::Tensor<f32>, graph: &Graph, nodes: &[usize]) -> f64 {
    if nodes.is_empty() {
        return f64::NAN;
    }
    accuracy(logits, &graph.labels, nodes).unwrap_or(f64::NAN)
}

fn summarize(name: &str, values: &[f64]) -> Value {
    let (mean, std) = mean_std(values);
    json!({ "metric": name, "mean": mean, "std": std, "values": values })
}

/// Fine-tune a teacher GNN initialized from a tokenizer's encoder and
/// code classifier.
pub fn finetune_teacher(
    tokenizer: &TokenizerModel<f32>,
    graph: &Graph,
    split: &SplitSpec,
    val: &[usize],
    config: &RunConfig,
    seed: u64,
) -> Result<(GnnModel<f32>, Vec<TrainRecord>), CliError> {
    let init = gnn_from_tokenizer(tokenizer);
    let sup = config.teacher.supervised()?;
    Ok(train_gnn_from(init, graph, split, val, &sup, seed)?)
}

pub fn distill_once(
    graph: &Graph,
    split: &SplitSpec,
    val: &[usize],
    teacher: &GnnModel<f32>,
    tokenizer: Option<&TokenizerModel<f32>>,
    dconf: &DistillConfig,
    seed: u64,
) -> Result<(MlpModel<f32>, Vec<TrainRecord>), CliError> {
    // teacher targets are computed on the training graph so held-out
    // (inductive) structure never leaks into distillation
    let train_graph = graph.with_edges(&split.train_edges)?;
    let code = if dconf.beta > 0.0 {
        let tok = tokenizer.ok_or_else(|| {
            CliError::Config("code distillation (beta > 0) requires a tokenizer checkpoint".to_string())
        })?;
        Some((&tok.codebook, dconf.comp, dconf.tau_code))
    } else {
        None
    };
    let targets = teacher_targets_from_gnn(teacher, &train_graph, code)?;
    let codebook = tokenizer.map(|t| &t.codebook);
    Ok(train_student(graph, split, val, &targets, codebook, dconf, seed)?)
}

// --- tasks -------------------------------------------------------------------

pub fn run_task(task: Task, config: &RunConfig, seeds: &[u64], out: &Path) -> Result<(), CliError> {
    if seeds.is_empty() {
        return Err(CliError::Config("at least one seed is required".to_string()));
    }
    write_manifest(out, task, config, seeds)?;
    match task {
        Task::TrainTokenizer => task_train_tokenizer(config, seeds, out),
        Task::Distill => task_distill(config, seeds, out),
        Task::Evaluate => task_evaluate(config, seeds, out),
        Task::Tokenize => task_tokenize(config, out),
        Task::Retrieve => task_retrieve(config, out),
        Task::Benchmark => task_benchmark(config, seeds, out),
        Task::NoiseSweep => task_noise_sweep(config, seeds, out),
        Task::Ablate => task_ablate(config, seeds, out),
    }
}

fn task_train_tokenizer(config: &RunConfig, seeds: &[u64], out: &Path) -> Result<(), CliError> {
    let graph = load_dataset(config)?;
    let mut val_accs = Vec::new();
    let mut actives = Vec::new();
    for &seed in seeds {
        let (split, val) = build_split(&graph, config, seed)?;
        let (model, log) = train_tokenizer_for_seed(&graph, config, &split, &val, seed)?;
        checkpoint::save_tokenizer(&out.join(format!("tokenizer-seed{seed}")), &model)?;
        write_training_log(&out.join(format!("training_log-seed{seed}.csv")), &log)?;
        let (_, codes, _) = model.infer_full(&graph);
        let usage = codebook_usage(&codes, &graph.labels, graph.num_classes, model.codebook_size());
        actives.push(usage.active_codes as f64);
        val_accs.push(log.last().map(|r| r.val_accuracy).unwrap_or(f64::NAN));
        println!(
            "seed {seed}: final val accuracy {} | active codes {}",
            sig9(*val_accs.last().unwrap()),
            usage.active_codes
        );
    }
    let summary = json!({
        "val_accuracy": summarize("val_accuracy", &val_accs),
        "active_codes": summarize("active_codes", &actives),
    });
    write_json(&out.join("summary.json"), &summary)
}

fn task_distill(config: &RunConfig, seeds: &[u64], out: &Path) -> Result<(), CliError> {
    let graph = load_dataset(config)?;
    let tok_path = require_artifact(
        &config.artifacts.tokenizer_checkpoint,
        "tokenizer_checkpoint",
        "tokenizer checkpoint",
    )?;
    let tokenizer = checkpoint::load_tokenizer(&tok_path)?;
    let dconf = config.student.core()?;

    let mut teacher_accs = Vec::new();
    let mut student_accs = Vec::new();
    let mut productions = Vec::new();
    for &seed in seeds {
        let (split, val) = build_split(&graph, config, seed)?;
        let (teacher, tlog) = finetune_teacher(&tokenizer, &graph, &split, &val, config, seed)?;
        let (student, slog) = distill_once(&graph, &split, &val, &teacher, Some(&tokenizer), &dconf, seed)?;

        checkpoint::save_gnn(&out.join(format!("teacher-seed{seed}")), &teacher)?;
        checkpoint::save_mlp(&out.join(format!("student-seed{seed}")), &student)?;
        write_training_log(&out.join(format!("teacher_log-seed{seed}.csv")), &tlog)?;
        write_training_log(&out.join(format!("student_log-seed{seed}.csv")), &slog)?;

        let tran = test_nodes(&split, &val);
        let (_, teacher_logits) = teacher.infer_full(&graph);
        let slogits = student_logits(&student, &graph);
        let t_acc = acc_on(&teacher_logits, &graph, &tran);
        let s_acc = acc_on(&slogits, &graph, &tran);
        teacher_accs.push(t_acc);
        student_accs.push(s_acc);

        let mut metrics = json!({
            "seed": seed,
            "teacher_accuracy": t_acc,
            "student_accuracy": s_acc,
        });
        if split.is_inductive() {
            let ind = acc_on(&slogits, &graph, &split.inductive);
            let w = config.split.production_tran_weight;
            let prod = w * s_acc + (1.0 - w) * ind;
            productions.push(prod);
            metrics["student_inductive_accuracy"] = json!(ind);
            metrics["student_production_accuracy"] = json!(prod);
        }
        if let Ok(cv) = cut_value(&graph.adjacency, &argmax_rows(&slogits)) {
            metrics["student_cut_value"] = json!(cv);
        }
        write_json(&out.join(format!("metrics-seed{seed}.json")), &metrics)?;
        println!("seed {seed}: teacher {} | student {}", sig9(t_acc), sig9(s_acc));
    }
    let mut summary = json!({
        "teacher_accuracy": summarize("teacher_accuracy", &teacher_accs),
        "student_accuracy": summarize("student_accuracy", &student_accs),
    });
    if !productions.is_empty() {
        summary["student_production_accuracy"] =
            summarize("student_production_accuracy", &productions);
    }
    let (ms, ss) = mean_std(&student_accs);
    println!("student accuracy over {} seeds: {} +/- {}", seeds.len(), sig9(ms), sig9(ss));
    write_json(&out.join("summary.json"), &summary)
}

fn task_evaluate(config: &RunConfig, seeds: &[u64], out: &Path) -> Result<(), CliError> {
    let graph = load_dataset(config)?;
    let student_path = require_artifact(
        &config.artifacts.student_checkpoint,
        "student_checkpoint",
        "student checkpoint",
    )?;
    let student = checkpoint::load_mlp(&student_path)?;
    let teacher = match &config.artifacts.teacher_checkpoint {
        Some(p) => Some(checkpoint::load_gnn(Path::new(p))?),
        None => None,
    };
    let slogits = student_logits(&student, &graph);
    let preds = argmax_rows(&slogits);

    let mut accs = Vec::new();
    let mut rows = Vec::new();
    for &seed in seeds {
        let (split, val) = build_split(&graph, config, seed)?;
        let tran = test_nodes(&split, &val);
        let s_acc = acc_on(&slogits, &graph, &tran);
        accs.push(s_acc);
        let mut row = json!({ "seed": seed, "student_accuracy": s_acc });
        if split.is_inductive() {
            let ind = acc_on(&slogits, &graph, &split.inductive);
            let w = config.split.production_tran_weight;
            row["student_inductive_accuracy"] = json!(ind);
            row["student_production_accuracy"] = json!(w * s_acc + (1.0 - w) * ind);
        }
        if let Some(t) = &teacher {
            let (_, tl) = t.infer_full(&graph);
            row["teacher_accuracy"] = json!(acc_on(&tl, &graph, &tran));
        }
        rows.push(row);
    }
    let mut metrics = json!({
        "per_seed": rows,
        "student_accuracy": summarize("student_accuracy", &accs),
    });
    if let Ok(cv) = cut_value(&graph.adjacency, &preds) {
        metrics["student_cut_value"] = json!(cv);
    }
    if let Ok(cv) = cut_value(&graph.adjacency, &graph.labels) {
        metrics["label_cut_value"] = json!(cv);
    }
    write_json(&out.join("metrics.json"), &metrics)
}

fn task_tokenize(config: &RunConfig, out: &Path) -> Result<(), CliError> {
    let graph = load_dataset(config)?;
    let tok_path = require_artifact(
        &config.artifacts.tokenizer_checkpoint,
        "tokenizer_checkpoint",
        "tokenizer checkpoint",
    )?;
    let tokenizer = checkpoint::load_tokenizer(&tok_path)?;
    let (h, codes, _) = tokenizer.infer_full(&graph);
    write_codes(&out.join("codes.tsv"), &codes)?;
    write_embeddings(&out.join("embeddings.tsv"), &h, &graph.labels, &codes)?;
    let usage = codebook_usage(&codes, &graph.labels, graph.num_classes, tokenizer.codebook_size());
    let overlap = class_code_overlap(&usage, OverlapMode::Jaccard);
    let overlap_rows: Vec<Vec<f64>> =
        (0..overlap.rows()).map(|i| overlap.row(i).to_vec()).collect();
    let metrics = json!({
        "active_codes": usage.active_codes,
        "codebook_size": tokenizer.codebook_size(),
        "class_code_overlap_jaccard_percent": overlap_rows,
    });
    write_json(&out.join("metrics.json"), &metrics)
}

fn task_retrieve(config: &RunConfig, out: &Path) -> Result<(), CliError> {
    let graph = load_dataset(config)?;
    let tok_path = require_artifact(
        &config.artifacts.tokenizer_checkpoint,
        "tokenizer_checkpoint",
        "tokenizer checkpoint",
    )?;
    let tokenizer = checkpoint::load_tokenizer(&tok_path)?;
    let (h, codes, _) = tokenizer.infer_full(&graph);
    let query = config.retrieve.query;
    if query >= graph.num_nodes() {
        return Err(CliError::Config(format!(
            "retrieve.query = {query} is out of range for {} nodes",
            graph.num_nodes()
        )));
    }
    let hits = retrieve_similar_nodes(&h, query, config.retrieve.k)?;
    let mut text = String::from("rank\tnode_id\tcosine\tlabel\tcode_id\n");
    for (rank, (node, score)) in hits.iter().enumerate() {
        text.push_str(&format!(
            "{}\t{node}\t{}\t{}\t{}\n",
            rank + 1,
            sig9(*score),
            graph.labels[*node],
            codes[*node]
        ));
    }
    std::fs::write(out.join("retrieve.tsv"), text)?;
    Ok(())
}

fn task_benchmark(config: &RunConfig, seeds: &[u64], out: &Path) -> Result<(), CliError> {
    let graph = load_dataset(config)?;
    let teacher_path = require_artifact(
        &config.artifacts.teacher_checkpoint,
        "teacher_checkpoint",
        "teacher checkpoint",
    )?;
    let student_path = require_artifact(
        &config.artifacts.student_checkpoint,
        "student_checkpoint",
        "student checkpoint",
    )?;
    let teacher = checkpoint::load_gnn(&teacher_path)?;
    let student = checkpoint::load_mlp(&student_path)?;
    let seed = seeds[0];
    let t = bench_teacher(
        &teacher,
        &graph,
        &config.teacher.fanouts,
        config.benchmark.queries,
        config.benchmark.warmup,
        seed,
    )?;
    let s = bench_student(&student, &graph, config.benchmark.queries, config.benchmark.warmup, seed)?;
    write_bench_csv(&out.join("benchmark.csv"), &[("teacher", t), ("student", s)])?;
    let summary = json!({
        "teacher_median_us": t.median_us,
        "teacher_p95_us": t.p95_us,
        "student_median_us": s.median_us,
        "student_p95_us": s.p95_us,
        "speedup_median": t.median_us / s.median_us,
    });
    println!(
        "teacher median {} us | student median {} us | speedup {:.1}x",
        sig9(t.median_us),
        sig9(s.median_us),
        t.median_us / s.median_us
    );
    write_json(&out.join("summary.json"), &summary)
}

fn task_noise_sweep(config: &RunConfig, seeds: &[u64], out: &Path) -> Result<(), CliError> {
    let graph = load_dataset(config)?;
    let student_path = require_artifact(
        &config.artifacts.student_checkpoint,
        "student_checkpoint",
        "student checkpoint",
    )?;
    let student = checkpoint::load_mlp(&student_path)?;
    let teacher = match &config.artifacts.teacher_checkpoint {
        Some(p) => Some(checkpoint::load_gnn(Path::new(p))?),
        None => None,
    };
    let mut csv = String::from(match teacher {
        Some(_) => "alpha,seed,student_accuracy,teacher_accuracy\n",
        None => "alpha,seed,student_accuracy\n",
    });
    for step in 0..=10u32 {
        let alpha = f64::from(step) / 10.0;
        for &seed in seeds {
            let (split, val) = build_split(&graph, config, seed)?;
            let tran = test_nodes(&split, &val);
            let noisy_features = add_feature_noise(&graph.features, alpha, seed)?;
            let noisy = Graph {
                adjacency: graph.adjacency.clone(),
                features: noisy_features,
                labels: graph.labels.clone(),
                num_classes: graph.num_classes,
            };
            let s_acc = acc_on(&student_logits(&student, &noisy), &graph, &tran);
            match &teacher {
                Some(t) => {
                    let (_, tl) = t.infer_full(&noisy);
                    let t_acc = acc_on(&tl, &graph, &tran);
                    csv.push_str(&format!("{alpha},{seed},{},{}\n", sig9(s_acc), sig9(t_acc)));
                }
                None => csv.push_str(&format!("{alpha},{seed},{}\n", sig9(s_acc))),
            }
        }
    }
    std::fs::write(out.join("noise_sweep.csv"), csv)?;
    Ok(())
}

pub const ABLATION_MODES: [&str; 3] = ["class-only", "only-vq", "vqgraph"];

/// One ablation arm for one seed; the tokenizer (when needed) is shared
/// across arms of the same seed so comparisons are paired.
pub fn ablate_mode(
    graph: &Graph,
    config: &RunConfig,
    mode: &str,
    tokenizer: Option<&TokenizerModel<f32>>,
    split: &SplitSpec,
    val: &[usize],
    seed: u64,
) -> Result<f64, CliError> {
    let mut dconf = config.student.core()?;
    let (teacher, _log) = match mode {
        "class-only" => {
            dconf.beta = 0.0;
            let sup = config.teacher.supervised()?;
            train_plain_gnn::<f32>(graph, split, val, &sup, seed)?
        }
        "only-vq" => {
            dconf.beta = 0.0;
            let tok = tokenizer.expect("tokenizer required for only-vq");
            finetune_teacher(tok, graph, split, val, config, seed)?
        }
        "vqgraph" => {
            let tok = tokenizer.expect("tokenizer required for vqgraph");
            finetune_teacher(tok, graph, split, val, config, seed)?
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown ablation mode {other:?} (expected class-only, only-vq or vqgraph)"
            )))
        }
    };
    let (student, _slog) = distill_once(graph, split, val, &teacher, tokenizer, &dconf, seed)?;
    let tran = test_nodes(split, val);
    Ok(acc_on(&student_logits(&student, graph), graph, &tran))
}

fn task_ablate(config: &RunConfig, seeds: &[u64], out: &Path) -> Result<(), CliError> {
    let graph = load_dataset(config)?;
    let mut csv = String::from("seed,mode,student_accuracy\n");
    let mut per_mode: Vec<Vec<f64>> = vec![Vec::new(); ABLATION_MODES.len()];
    for &seed in seeds {
        let (split, val) = build_split(&graph, config, seed)?;
        let (tokenizer, _) = train_tokenizer_for_seed(&graph, config, &split, &val, seed)?;
        for (m, &mode) in ABLATION_MODES.iter().enumerate() {
            let acc = ablate_mode(&graph, config, mode, Some(&tokenizer), &split, &val, seed)?;
            per_mode[m].push(acc);
            csv.push_str(&format!("{seed},{mode},{}\n", sig9(acc)));
            println!("seed {seed} {mode}: {}", sig9(acc));
        }
    }
    std::fs::write(out.join("ablation.csv"), csv)?;
    let mut summary = serde_json::Map::new();
    for (m, &mode) in ABLATION_MODES.iter().enumerate() {
        summary.insert(mode.to_string(), summarize(mode, &per_mode[m]));
    }
    write_json(&out.join("summary.json"), &Value::Object(summary))
}
