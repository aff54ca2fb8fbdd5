//! Acceptance gate: one test per criterion, each printing a single
//! PASS / FAIL / SKIP line (run with `--nocapture` to see them for
//! passing tests).
//!
//! Criteria that require the real citation datasets run only when a
//! bundle directory is found (the `GRAPHVQ_DATA` environment variable,
//! `../../data/<name>` or `./data/<name>`); otherwise they print SKIP.
//! Everything dataset-free runs unconditionally.

use std::collections::HashSet;
use std::path::PathBuf;

use graphvq::config::{resolve_config, RunConfig};
use graphvq::error::CliError;
use graphvq::run::{
    ablate_mode, build_split, distill_once, finetune_teacher, test_nodes, train_tokenizer_for_seed,
    ABLATION_MODES,
};
use graphvq_core::autodiff::{softmax_rows_value, Tape};
use graphvq_core::distill::{soft_code_assignment, CompFn};
use graphvq_core::eval::{accuracy, argmax_rows, cut_value, cut_value_dense_oracle};
use graphvq_core::gnn::{train_plain_mlp, GnnModel, MlpModel, SupervisedConfig};
use graphvq_core::graph::{add_feature_noise, Graph, NormMode};
use graphvq_core::split::{make_inductive_split, make_transductive_split, LabeledSpec};
use graphvq_core::synth;
use graphvq_core::tensor::Tensor;
use graphvq_core::tokenizer::{assign_codes, train_tokenizer_minibatch, TokenizerConfig};

// --- reporting ----------------------------------------------------------------

fn report_pass(criterion: usize, msg: &str) {
    println!("ACCEPTANCE {criterion}: PASS - {msg}");
}

fn report_skip(criterion: usize, msg: &str) {
    println!("ACCEPTANCE {criterion}: SKIP - {msg}");
}

fn report_fail(criterion: usize, msg: &str) -> ! {
    println!("ACCEPTANCE {criterion}: FAIL - {msg}");
    panic!("ACCEPTANCE {criterion}: FAIL - {msg}");
}

fn check(criterion: usize, ok: bool, msg: &str) {
    if !ok {
        report_fail(criterion, msg);
    }
}

// --- dataset discovery ---------------------------------------------------------

fn dataset_dir(name: &str) -> Option<PathBuf> {
    let mut candidates: Vec<PathBuf> = Vec::new();
    if let Ok(root) = std::env::var("GRAPHVQ_DATA") {
        candidates.push(PathBuf::from(root).join(name));
    }
    candidates.push(PathBuf::from("../../data").join(name));
    candidates.push(PathBuf::from("data").join(name));
    candidates.into_iter().find(|p| p.join("meta.json").is_file())
}

fn dataset_config(name: &str, dir: &PathBuf, extra: &[String]) -> RunConfig {
    let mut overrides = vec![
        format!("dataset={name}"),
        format!("data_dir={}", dir.display()),
    ];
    overrides.extend_from_slice(extra);
    resolve_config(None, &overrides).expect("dataset default block resolves")
}

struct PipelineResult {
    teacher_acc: f64,
    student_acc: f64,
    production: Option<f64>,
    student: MlpModel<f32>,
}

/// Full pipeline for one seed: tokenizer -> fine-tuned teacher ->
/// code-distilled student, evaluated on the held-out test nodes.
fn run_pipeline(config: &RunConfig, graph: &Graph, seed: u64) -> Result<PipelineResult, CliError> {
    let (split, val) = build_split(graph, config, seed)?;
    let (tokenizer, _tlog) = train_tokenizer_for_seed(graph, config, &split, &val, seed)?;
    let (teacher, _) = finetune_teacher(&tokenizer, graph, &split, &val, config, seed)?;
    let dconf = config.student.core()?;
    let (student, _) = distill_once(graph, &split, &val, &teacher, Some(&tokenizer), &dconf, seed)?;

    let tran = test_nodes(&split, &val);
    let (_, tlogits) = teacher.infer_full(graph);
    let slogits = student.infer(&graph.features_as::<f32>()).1;
    let teacher_acc = accuracy(&tlogits, &graph.labels, &tran).unwrap_or(0.0);
    let student_acc = accuracy(&slogits, &graph.labels, &tran).unwrap_or(0.0);
    let production = if split.is_inductive() {
        let ind = accuracy(&slogits, &graph.labels, &split.inductive).unwrap_or(0.0);
        let w = config.split.production_tran_weight;
        Some(w * student_acc + (1.0 - w) * ind)
    } else {
        None
    };
    Ok(PipelineResult { teacher_acc, student_acc, production, student })
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

const SEEDS: [u64; 10] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9];

// --- criterion 1: Cora transductive accuracy -----------------------------------

#[test]
fn criterion_1_cora_transductive_accuracy() {
    let Some(dir) = dataset_dir("cora") else {
        report_skip(
            1,
            "requires the real Cora bundle (teacher >= 78.0%, student >= 81.0%, mean of 10 seeds, \
             each run <= 15 min single-threaded); no bundle found in GRAPHVQ_DATA or ./data/cora",
        );
        return;
    };
    let config = dataset_config("cora", &dir, &[]);
    let graph = graphvq::run::load_dataset(&config).expect("cora bundle loads");
    let mut teacher_accs = Vec::new();
    let mut student_accs = Vec::new();
    for &seed in &SEEDS {
        let start = std::time::Instant::now();
        let r = run_pipeline(&config, &graph, seed).expect("pipeline runs");
        let minutes = start.elapsed().as_secs_f64() / 60.0;
        check(1, minutes <= 15.0, &format!("seed {seed} took {minutes:.1} min (> 15 min budget)"));
        teacher_accs.push(r.teacher_acc);
        student_accs.push(r.student_acc);
    }
    let (t, s) = (mean(&teacher_accs), mean(&student_accs));
    check(1, t >= 0.78, &format!("teacher mean accuracy {t:.4} < 0.780"));
    check(1, s >= 0.81, &format!("student mean accuracy {s:.4} < 0.810"));
    report_pass(1, &format!("cora teacher {t:.4} >= 0.780, student {s:.4} >= 0.810 over 10 seeds"));
}

// --- criterion 2: Citeseer student accuracy ------------------------------------

#[test]
fn criterion_2_citeseer_student_accuracy() {
    let Some(dir) = dataset_dir("citeseer") else {
        report_skip(
            2,
            "requires the real Citeseer bundle (student >= 73.0%, mean of 10 seeds); \
             no bundle found in GRAPHVQ_DATA or ./data/citeseer",
        );
        return;
    };
    let config = dataset_config("citeseer", &dir, &[]);
    let graph = graphvq::run::load_dataset(&config).expect("citeseer bundle loads");
    let accs: Vec<f64> = SEEDS
        .iter()
        .map(|&seed| run_pipeline(&config, &graph, seed).expect("pipeline runs").student_acc)
        .collect();
    let s = mean(&accs);
    check(2, s >= 0.73, &format!("student mean accuracy {s:.4} < 0.730"));
    report_pass(2, &format!("citeseer student {s:.4} >= 0.730 over 10 seeds"));
}

// --- criterion 3: ablation ordering --------------------------------------------

#[test]
fn criterion_3_ablation_ordering() {
    let dirs: Vec<(&str, Option<PathBuf>)> =
        vec![("cora", dataset_dir("cora")), ("citeseer", dataset_dir("citeseer"))];
    if dirs.iter().any(|(_, d)| d.is_none()) {
        report_skip(
            3,
            "requires the real Cora and Citeseer bundles (vqgraph >= only-vq >= class-only \
             on mean accuracy over 10 paired seeds); bundles not found",
        );
        return;
    }
    for (name, dir) in dirs {
        let dir = dir.unwrap();
        let config = dataset_config(name, &dir, &[]);
        let graph = graphvq::run::load_dataset(&config).expect("bundle loads");
        let mut per_mode = vec![Vec::new(); ABLATION_MODES.len()];
        for &seed in &SEEDS {
            let (split, val) = build_split(&graph, &config, seed).unwrap();
            let (tokenizer, _) =
                train_tokenizer_for_seed(&graph, &config, &split, &val, seed).unwrap();
            for (m, &mode) in ABLATION_MODES.iter().enumerate() {
                let acc = ablate_mode(&graph, &config, mode, Some(&tokenizer), &split, &val, seed)
                    .expect("ablation arm runs");
                per_mode[m].push(acc);
            }
        }
        let class_only = mean(&per_mode[0]);
        let only_vq = mean(&per_mode[1]);
        let vqgraph = mean(&per_mode[2]);
        check(
            3,
            vqgraph >= only_vq && only_vq >= class_only,
            &format!("{name}: vqgraph {vqgraph:.4}, only-vq {only_vq:.4}, class-only {class_only:.4} not ordered"),
        );
    }
    report_pass(3, "vqgraph >= only-vq >= class-only on cora and citeseer over 10 paired seeds");
}

// --- criterion 4: cut value ------------------------------------------------------

#[test]
fn criterion_4_cut_value() {
    // unconditional half: the fast cut value matches the dense trace oracle
    // on 200 random graphs with at most 50 nodes, to 1e-9
    let mut checked = 0usize;
    let mut seed = 0u64;
    while checked < 200 {
        let n = 2 + (seed as usize * 7) % 49;
        let g = synth::random_graph(seed, n, 3.0, 2, 4);
        seed += 1;
        if g.adjacency.num_edges() == 0 {
            continue;
        }
        let parts: Vec<usize> = (0..n).map(|i| (i * 13 + seed as usize) % 5).collect();
        let fast = cut_value(&g.adjacency, &parts).unwrap();
        let slow = cut_value_dense_oracle(&g.adjacency, &parts).unwrap();
        check(
            4,
            (fast - slow).abs() <= 1e-9,
            &format!("cut value {fast} differs from the oracle {slow} on graph seed {}", seed - 1),
        );
        checked += 1;
    }

    // dataset half: on Cora, the distilled student's predictions cut the
    // graph at least 0.10 better than a plain MLP's
    let Some(dir) = dataset_dir("cora") else {
        report_pass(
            4,
            "cut value matches the dense oracle to 1e-9 on 200 random graphs <= 50 nodes \
             (Cora student-vs-MLP gap skipped: no bundle found)",
        );
        return;
    };
    let config = dataset_config("cora", &dir, &[]);
    let graph = graphvq::run::load_dataset(&config).expect("cora bundle loads");
    let seed = 0u64;
    let r = run_pipeline(&config, &graph, seed).expect("pipeline runs");
    let (split, val) = build_split(&graph, &config, seed).unwrap();
    let sup = SupervisedConfig {
        hidden_dim: config.student.hidden_dim,
        num_layers: config.student.num_layers,
        dropout: config.student.dropout,
        lr: config.student.lr,
        weight_decay: config.student.weight_decay,
        epochs: config.student.epochs,
        patience: config.student.patience,
        aggregation: NormMode::GcnSym,
        batch_norm: false,
    };
    let (plain, _) = train_plain_mlp::<f32>(&graph, &split, &val, &sup, seed).unwrap();
    let cv_student =
        cut_value(&graph.adjacency, &argmax_rows(&r.student.infer(&graph.features_as()).1)).unwrap();
    let cv_plain =
        cut_value(&graph.adjacency, &argmax_rows(&plain.infer(&graph.features_as()).1)).unwrap();
    check(
        4,
        cv_student - cv_plain >= 0.10,
        &format!("cut value gap {cv_student:.4} - {cv_plain:.4} < 0.10"),
    );
    report_pass(
        4,
        &format!(
            "oracle agreement on 200 graphs and cora cut value gap {:.4} >= 0.10",
            cv_student - cv_plain
        ),
    );
}

// --- criterion 5: inductive production accuracy ----------------------------------

#[test]
fn criterion_5_citeseer_inductive_production() {
    // unconditional half: edge-removal invariants of the 20% inductive split
    let graph = synth::sbm(21, &[60, 60, 60], 0.12, 0.01, 8, 0.4);
    let split = make_inductive_split(&graph, 3, LabeledSpec::PerClass(20), 0.2).unwrap();
    split.validate(&graph).unwrap();
    let unlabeled = graph.num_nodes() - split.labeled.len();
    let expect = (unlabeled as f64 * 0.2).round() as usize;
    check(
        5,
        split.inductive.len().abs_diff(expect) <= 1,
        &format!("{} inductive nodes, expected about {expect}", split.inductive.len()),
    );
    let ind: HashSet<usize> = split.inductive.iter().copied().collect();
    let kept: HashSet<(usize, usize)> = split.train_edges.iter().copied().collect();
    for (u, v) in graph.adjacency.edge_list() {
        let touches = ind.contains(&u) || ind.contains(&v);
        check(
            5,
            kept.contains(&(u, v)) != touches,
            &format!("edge ({u},{v}) removal does not match incidence on the held-out set"),
        );
    }
    // held-out edges come back at inference time: the full graph is untouched
    let train_graph = graph.with_edges(&split.train_edges).unwrap();
    check(
        5,
        train_graph.adjacency.num_edges() < graph.adjacency.num_edges(),
        "training graph should have fewer edges than the full graph",
    );

    let Some(dir) = dataset_dir("citeseer") else {
        report_pass(
            5,
            "20% inductive split invariants hold (citeseer production >= 70.0% skipped: \
             no bundle found)",
        );
        return;
    };
    let config = dataset_config("citeseer", &dir, &["split.setting=inductive".to_string()]);
    let graph = graphvq::run::load_dataset(&config).expect("citeseer bundle loads");
    let prods: Vec<f64> = SEEDS
        .iter()
        .map(|&seed| {
            run_pipeline(&config, &graph, seed)
                .expect("pipeline runs")
                .production
                .expect("inductive run yields a production metric")
        })
        .collect();
    let p = mean(&prods);
    check(5, p >= 0.70, &format!("production accuracy {p:.4} < 0.700"));
    report_pass(5, &format!("split invariants hold and citeseer production {p:.4} >= 0.700"));
}

// --- criterion 6: dataset-free property suite -------------------------------------

/// Central-difference gradient check in f64.
fn fd_check<F>(params: &[Tensor<f64>], build: F)
where
    F: Fn(&mut Tape<f64>, &[graphvq_core::autodiff::Var]) -> graphvq_core::autodiff::Var,
{
    let step = 1e-3;
    let tol = 1e-4;
    let mut tape = Tape::new();
    let vars: Vec<_> = params.iter().map(|p| tape.param(p.clone())).collect();
    let loss = build(&mut tape, &vars);
    let mut grads = tape.backward(loss).unwrap();
    for (pi, p) in params.iter().enumerate() {
        let analytic = grads.take(vars[pi]).unwrap_or_else(|| Tensor::zeros(p.rows(), p.cols()));
        for i in 0..p.len() {
            let eval = |delta: f64| {
                let mut shifted = params.to_vec();
                shifted[pi].data_mut()[i] += delta;
                let mut t = Tape::new();
                let vs: Vec<_> = shifted.iter().map(|q| t.param(q.clone())).collect();
                let l = build(&mut t, &vs);
                t.value(l).item()
            };
            let numeric = (eval(step) - eval(-step)) / (2.0 * step);
            let a = analytic.data()[i];
            let denom = a.abs().max(numeric.abs()).max(1.0);
            check(
                6,
                ((a - numeric) / denom).abs() < tol,
                &format!("gradient check failed: param {pi} entry {i}: {a} vs {numeric}"),
            );
        }
    }
}

#[test]
fn criterion_6_property_suite() {
    // representative finite-difference check (the full per-operator and
    // full-loss checks run in the core crate's grad_checks suite, which is
    // part of the same workspace test run)
    let x = Tensor::from_vec(3, 4, (0..12).map(|i| (i as f64) * 0.13 - 0.7).collect());
    let w = Tensor::from_vec(4, 3, (0..12).map(|i| (i as f64) * 0.07 - 0.4).collect());
    fd_check(&[x, w], |t, vs| {
        let y = t.matmul(vs[0], vs[1]).unwrap();
        let s = t.softmax_rows(y);
        t.sum_sq(s)
    });

    // KL(p || p) = 0
    let logits = Tensor::from_vec(4, 5, (0..20).map(|i| ((i * 37) % 11) as f64 * 0.3 - 1.0).collect());
    let p = softmax_rows_value(&logits);
    let mut tape: Tape<f64> = Tape::new();
    let p1 = tape.constant(p.clone());
    let p2 = tape.constant(p.clone());
    let kl_self = tape.kl_rows(p1, p2).unwrap();
    check(6, tape.value(kl_self).item().abs() < 1e-12, "KL(p, p) is not zero");

    // tau^2 scaling: tau^2 * KL between soft code assignments stabilizes as
    // tau grows (the gradient scale of the code-distillation term is
    // temperature-invariant)
    let h = Tensor::from_vec(4, 3, (0..12).map(|i| (i as f64) * 0.21 - 1.0).collect());
    let e1 = Tensor::from_vec(5, 3, (0..15).map(|i| (i as f64) * 0.17 - 1.2).collect());
    let e2 = Tensor::from_vec(5, 3, (0..15).map(|i| (i as f64) * 0.11 - 0.8).collect());
    let scaled_kl = |tau: f64| {
        let p = soft_code_assignment(&h, &e1, CompFn::NegL2, tau).unwrap();
        let q = soft_code_assignment(&h, &e2, CompFn::NegL2, tau).unwrap();
        let mut t: Tape<f64> = Tape::new();
        let pv = t.constant(p);
        let qv = t.constant(q);
        let kl = t.kl_rows(pv, qv).unwrap();
        tau * tau * t.value(kl).item()
    };
    let (a, b) = (scaled_kl(100.0), scaled_kl(200.0));
    check(
        6,
        ((a - b) / a.abs().max(1e-12)).abs() < 0.05,
        &format!("tau^2-scaled KL not temperature-stable: {a} vs {b}"),
    );

    // straight-through contract: the forward value is the selected codebook
    // rows, the backward pass is the identity onto the encoder output
    let hval = Tensor::from_vec(2, 3, vec![0.3, -0.2, 0.9, 1.4, 0.0, -0.5]);
    let codebook = Tensor::from_vec(4, 3, (0..12).map(|i| (i as f64) * 0.25 - 1.0).collect());
    let z = vec![2usize, 0];
    let mut t: Tape<f64> = Tape::new();
    let hv = t.param(hval.clone());
    let st = t.straight_through(hv, &codebook, &z).unwrap();
    let quantized = codebook.gather_rows(&z);
    check(6, t.value(st).data() == quantized.data(), "ST forward is not the codebook rows");
    let loss = t.sum_sq(st);
    let mut grads = t.backward(loss).unwrap();
    let gh = grads.take(hv).expect("gradient reaches the encoder output");
    for (g, q) in gh.data().iter().zip(quantized.data()) {
        check(6, (g - 2.0 * q).abs() < 1e-12, "ST backward is not the identity");
    }

    // nearest-code assignment equals an independent brute force
    let h = Tensor::from_vec(50, 8, (0..400).map(|i| ((i * 29) % 101) as f64 * 0.02 - 1.0).collect());
    let cb = Tensor::from_vec(16, 8, (0..128).map(|i| ((i * 53) % 97) as f64 * 0.02 - 1.0).collect());
    let fast = assign_codes(&h, &cb);
    for i in 0..50 {
        let mut pairs: Vec<(f64, usize)> = (0..16)
            .map(|j| {
                let d: f64 =
                    h.row(i).iter().zip(cb.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
                (d, j)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        check(6, fast[i] == pairs[0].1, &format!("assignment differs from brute force at row {i}"));
    }

    // stop-gradient blocks the backward pass
    let mut t: Tape<f64> = Tape::new();
    let hv = t.param(hval.clone());
    let blocked = t.stop_grad(hv);
    let loss = t.sum_sq(blocked);
    let grads = t.backward(loss).unwrap();
    let gh = grads.get(hv);
    check(
        6,
        gh.map_or(true, |g| g.data().iter().all(|&v| v == 0.0)),
        "stop-gradient leaked a gradient",
    );

    // softmax rows are stochastic
    let s = softmax_rows_value(&logits);
    for i in 0..s.rows() {
        let sum: f64 = s.row(i).iter().sum();
        check(6, (sum - 1.0).abs() < 1e-9, "softmax row does not sum to one");
        check(6, s.row(i).iter().all(|&p| p >= 0.0), "softmax produced a negative probability");
    }

    // split invariants: transductive partition and inductive edge removal
    let g = synth::sbm(31, &[40, 40, 40], 0.15, 0.02, 6, 0.4);
    let tr = make_transductive_split(&g, 5, LabeledSpec::PerClass(10)).unwrap();
    tr.validate(&g).unwrap();
    check(6, tr.labeled.len() == 30, "transductive split labeled count");
    check(
        6,
        tr.labeled.len() + tr.observed_unlabeled.len() == g.num_nodes() && tr.inductive.is_empty(),
        "transductive split does not partition the nodes",
    );
    let ind = make_inductive_split(&g, 5, LabeledSpec::PerClass(10), 0.25).unwrap();
    ind.validate(&g).unwrap();
    let ind_set: HashSet<usize> = ind.inductive.iter().copied().collect();
    let kept: HashSet<(usize, usize)> = ind.train_edges.iter().copied().collect();
    for (u, v) in g.adjacency.edge_list() {
        check(
            6,
            kept.contains(&(u, v)) != (ind_set.contains(&u) || ind_set.contains(&v)),
            "inductive split did not remove exactly the incident edges",
        );
    }

    // feature noise at level zero is the bit-for-bit identity
    let noisy = add_feature_noise(&g.features, 0.0, 99).unwrap();
    check(6, noisy.data() == g.features.data(), "noise level 0 changed the features");

    report_pass(
        6,
        "gradient spot-check, KL/temperature contracts, straight-through contract, argmin \
         equivalence, stop-gradient blocking, softmax stochasticity, split invariants and \
         zero-noise identity all hold (full per-operator gradient checks run in the core suite)",
    );
}

// --- criterion 7: latency ---------------------------------------------------------

#[test]
fn criterion_7_student_latency() {
    // a graph at the scale of the largest citation dataset (~19.7k nodes,
    // 500-dimensional features)
    let graph = synth::random_graph(11, 19_717, 4.5, 500, 3);
    let teacher = GnnModel::<f32>::init(0, 500, 128, 2, 3, 0.0, NormMode::GcnSym, false);
    let student = MlpModel::<f32>::init(1, 500, 128, 2, 3, 0.0);
    let t = graphvq::bench::bench_teacher_full(&teacher, &graph, 100, 10, 7).unwrap();
    let s = graphvq::bench::bench_student(&student, &graph, 100, 10, 7).unwrap();
    let ratio = t.median_us / s.median_us;
    check(
        7,
        s.median_us <= t.median_us / 10.0,
        &format!(
            "student median {:.1} us is not <= 1/10 of teacher median {:.1} us",
            s.median_us, t.median_us
        ),
    );
    report_pass(
        7,
        &format!(
            "student median {:.1} us vs teacher {:.1} us ({ratio:.1}x) on a 19,717-node graph",
            s.median_us, t.median_us
        ),
    );
}

// --- criterion 8: mini-batch scalability --------------------------------------

#[test]
fn criterion_8_minibatch_scalability() {
    // the reference setup needs the OGB datasets, which cannot be fetched
    // here; the substitute exercises the same mini-batch path on a 20k-node
    // synthetic graph with the large-dataset layer/fan-out layout
    let block_sizes = vec![500usize; 40];
    let graph = synth::sbm(42, &block_sizes, 0.012, 0.0002, 128, 0.5);
    assert_eq!(graph.num_nodes(), 20_000);
    let split = make_transductive_split(&graph, 0, LabeledSpec::PerClass(50)).unwrap();

    let mut config = TokenizerConfig::defaults(64, 256);
    config.num_layers = 2;
    config.lr = 0.01;
    config.epochs = 10;
    config.patience = 10;
    // keep the codebook tracking the moving encoder from the start, so the
    // quantized edge decoder sees usable codes within the first epochs
    config.dead_code_reset_interval = Some(1);
    let (_model, log) = train_tokenizer_minibatch::<f32>(
        &graph,
        &split,
        &[],
        &config,
        512,
        &[5, 5],
        0,
    )
    .unwrap_or_else(|e| report_fail(8, &format!("mini-batch training diverged or failed: {e}")));

    check(8, log.len() == 10, &format!("expected 10 epochs of logs, got {}", log.len()));
    for r in &log {
        check(8, r.loss.is_finite(), &format!("loss became non-finite at epoch {}", r.epoch));
    }
    let edge = |r: &graphvq_core::gnn::TrainRecord| {
        r.terms
            .iter()
            .find(|(n, _)| n == "edge_recon")
            .map(|(_, v)| *v)
            .expect("edge term logged")
    };
    let first: f64 = log[..3].iter().map(edge).sum::<f64>() / 3.0;
    let last: f64 = log[7..].iter().map(edge).sum::<f64>() / 3.0;
    check(
        8,
        last < first,
        &format!("smoothed edge-reconstruction loss did not decrease: {first:.6} -> {last:.6}"),
    );
    report_pass(
        8,
        &format!(
            "20k-node mini-batch training stayed finite and the smoothed edge loss fell \
             {first:.6} -> {last:.6} over 10 epochs (OGB-scale substitute)"
        ),
    );
}
