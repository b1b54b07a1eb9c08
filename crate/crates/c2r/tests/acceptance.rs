//! The acceptance gate: every criterion prints exactly one
//! `[PASS]`/`[FAIL]` line (run with `--nocapture` to see them; the
//! assertion carries the same message). Criteria 6, 7, and 9 share one
//! full-scale training pair and therefore live in a single test.

use std::path::Path;

use c2r::cli::commands;
use c2r::config::{LossSection, Mode, RunConfig};
use c2r::diffcore::{NodeId, ParamStore, Result as DiffResult, Rng, Tape, Tensor};
use c2r::graphdata::{gen_spurious_motif, Dataset, GenSpec, Split};
use c2r::metrics::{binary_auc, pairwise_auc};
use c2r::models::{Backbone, Batch, C2RModel, ModelConfig};
use c2r::train::kmeans::{adjusted_rand_index, kmeans};
use c2r::train::losses::{infonce, sparsity};
use c2r::train::EnvironmentSet;

fn verdict(criterion: &str, pass: bool, detail: &str) -> Result<(), String> {
    use std::io::Write as _;
    let line = format!(
        "[{}] criterion {criterion}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    // the harness captures passing tests' stdout, and these lines must
    // appear either way, so write to the process stdout directly
    if let Ok(mut out) = std::fs::OpenOptions::new().write(true).open("/dev/stdout") {
        let _ = writeln!(out, "\n{line}");
    }
    if pass {
        Ok(())
    } else {
        Err(line)
    }
}

fn check(criterion: &str, pass: bool, detail: &str) {
    if let Err(line) = verdict(criterion, pass, detail) {
        panic!("{line}");
    }
}

fn desk_spec(n: usize, bias: f64, seed: u64) -> GenSpec {
    GenSpec { n_graphs: n, bias, d_in: 4, base_size_min: 15, base_size_max: 35, seed }
}

// ------------------------------------------------------------------ 1

fn mean_ce(tape: &mut Tape, logits: NodeId, labels: &[usize]) -> DiffResult<NodeId> {
    let ce = tape.cross_entropy_with_logits(logits, labels)?;
    Ok(tape.mean_all(ce))
}

/// All six terms of the total loss as a pure function of the parameter
/// store: Gumbel noise, environments, and counterfactual indices are
/// fixed inputs.
#[allow(clippy::too_many_arguments)]
fn six_term_loss(
    tape: &mut Tape,
    model: &C2RModel,
    store: &ParamStore,
    batch: &Batch,
    env: &EnvironmentSet,
    js: &[usize],
    gumbel_q: &Tensor,
    w: &LossSection,
) -> DiffResult<NodeId> {
    let x = tape.input(batch.features.clone());

    // classification module
    let h_nodes = model.encoder.forward(tape, store, batch, x)?;
    let h_en = tape.segment_mean(h_nodes, &batch.segments, batch.n_graphs)?;
    let logits_en = model.predictor.forward(tape, store, h_en)?;
    let l_ori = mean_ce(tape, logits_en, &batch.labels)?;

    let d = env.centroids[0].len();
    let rows = |which: &[usize]| -> Tensor {
        let mut flat = Vec::with_capacity(which.len() * d);
        for &j in which {
            flat.extend_from_slice(&env.centroids[j]);
        }
        Tensor::new(which.len(), d, flat).unwrap()
    };
    let ms: Vec<usize> = batch.sample_indices.iter().map(|&i| env.assignments[i]).collect();
    let e_j = tape.input(rows(js));
    let e_m = tape.input(rows(&ms));
    let joined = tape.concat_cols(h_en, e_j)?;
    let h_cou = model.env_gen.forward(tape, store, joined)?;
    let logits_cou = model.predictor.forward(tape, store, h_cou)?;
    let l_cou = mean_ce(tape, logits_cou, &batch.labels)?;
    let joined_back = tape.concat_cols(h_cou, e_m)?;
    let h_back = model.env_gen.forward(tape, store, joined_back)?;
    let l_cycle = infonce(tape, h_back, h_en, w.tau_nce)?;

    // rationalization module with fixed Gumbel noise
    let h_m = model.sep_gnn.forward(tape, store, batch, x)?;
    let w_m = tape.param(store, model.w_m);
    let logits_m = tape.matmul(h_m, w_m)?;
    let mtilde = tape.row_softmax(logits_m);
    let guarded = tape.affine(mtilde, 1.0, 1e-12);
    let logged = tape.log(guarded)?;
    let q = tape.input(gumbel_q.clone());
    let shifted = tape.add(logged, q)?;
    let scaled = tape.affine(shifted, 1.0 / model.cfg.tau, 0.0);
    let sample = tape.row_softmax(scaled);
    let mask = tape.slice_col(sample, 0)?;

    let h_g = model.rat_gnn.forward(tape, store, batch, x)?;
    let masked = tape.scale_rows(h_g, mask)?;
    let h_r = tape.segment_mean(masked, &batch.segments, batch.n_graphs)?;
    let logits_r = model.predictor.forward(tape, store, h_r)?;
    let l_r = mean_ce(tape, logits_r, &batch.labels)?;
    let probs = tape.slice_col(mtilde, 0)?;
    let l_sp = sparsity(tape, probs, &batch.segments, batch.n_graphs, w.alpha)?;
    // fully differentiable teacher: finite differences see the teacher path,
    // so the check must too (the trainer's stop-gradient variant is covered
    // by its own unit tests)
    let l_dis = infonce(tape, h_r, h_en, w.tau_nce)?;

    let mut total = tape.add(l_ori, l_r)?;
    for (term, lam) in [
        (l_cou, w.lambda_cou),
        (l_cycle, w.lambda_cycle),
        (l_sp, w.lambda_sp),
        (l_dis, w.lambda_dis),
    ] {
        let scaled = tape.affine(term, lam, 0.0);
        total = tape.add(total, scaled)?;
    }
    Ok(total)
}

#[test]
fn criterion_1_gradient_integrity() {
    let started = std::time::Instant::now();
    let train = gen_spurious_motif(&desk_spec(4, 0.9, 21), Split::Train).unwrap();
    let batch = Batch::from_dataset(&train.graphs, &[0, 1, 2, 3]);
    let cfg = ModelConfig {
        backbone: Backbone::Gin,
        d_in: 4,
        d: 8,
        n_classes: 3,
        n_layers: 3,
        tau: 1.0,
    };
    let mut model = C2RModel::build(cfg, 3);

    let mut env_rng = Rng::stream(3, "kmeans");
    let centroids: Vec<Vec<f64>> =
        (0..3).map(|_| (0..8).map(|_| env_rng.range(-0.5, 0.5)).collect()).collect();
    let env = EnvironmentSet { centroids, assignments: vec![0, 1, 2, 0] };
    let js = vec![1usize, 2, 0, 1];
    let q = {
        let mut g = Rng::stream(3, "gumbel");
        let vals: Vec<f64> = (0..batch.n_nodes * 2).map(|_| g.gumbel()).collect();
        Tensor::new(batch.n_nodes, 2, vals).unwrap()
    };
    let weights = LossSection::default();

    // the check perturbs the store; the model only provides structure
    let mut store = std::mem::take(&mut model.store);
    let report = c2r::diffcore::param_gradient_check(
        &mut store,
        |tape, s| six_term_loss(tape, &model, s, &batch, &env, &js, &q, &weights),
        1e-5,
    )
    .unwrap();
    let pass = report.max_rel_err < 1e-4 && started.elapsed().as_secs() < 60;
    check(
        "1 (gradient integrity)",
        pass,
        &format!(
            "max rel err {:.3e} over {} parameters in {:?}",
            report.max_rel_err,
            report.n_checked,
            started.elapsed()
        ),
    );
}

// ------------------------------------------------------------------ 2

#[test]
fn criterion_2_gumbel_softmax_fidelity() {
    let n = 100_000;
    let mut tape = Tape::new();
    let probs = tape.input(Tensor::new(n, 2, [0.7, 0.3].repeat(n)).unwrap());
    let mut rng = Rng::stream(2, "gumbel");
    let sample = c2r::models::gumbel_softmax(&mut tape, probs, 0.5, &mut rng).unwrap();
    let t = tape.value(sample);
    let mut hits = 0usize;
    let mut max_sum_err = 0.0f64;
    for i in 0..n {
        let row = t.row(i);
        if row[0] > row[1] {
            hits += 1;
        }
        max_sum_err = max_sum_err.max((row[0] + row[1] - 1.0).abs());
    }
    let freq = hits as f64 / n as f64;
    let pass = (freq - 0.70).abs() <= 0.01 && max_sum_err <= 1e-12;
    check(
        "2 (gumbel-softmax fidelity)",
        pass,
        &format!("argmax frequency {freq:.4} (target 0.70 +/- 0.01), max row-sum error {max_sum_err:.2e}"),
    );
}

// ------------------------------------------------------------------ 3

fn generator_stats(bias: f64) -> (f64, Vec<usize>) {
    let n = 10_000;
    let ds = gen_spurious_motif(&desk_spec(n, bias, 33), Split::Train).unwrap();
    let matches = ds
        .graphs
        .iter()
        .filter(|g| g.env_hint == Some(g.label))
        .count();
    let mut counts = vec![0usize; 3];
    for g in &ds.graphs {
        counts[g.label] += 1;
    }
    (matches as f64 / n as f64, counts)
}

#[test]
fn criterion_3_generator_statistics() {
    let (p_biased, counts) = generator_stats(0.9);
    let (p_balanced, _) = generator_stats(1.0 / 3.0);
    let n = 10_000f64;
    let sigma = (n * (1.0 / 3.0) * (2.0 / 3.0)).sqrt();
    let uniform = counts.iter().all(|&c| (c as f64 - n / 3.0).abs() <= 3.0 * sigma);
    let pass = (0.88..=0.92).contains(&p_biased)
        && (0.31..=0.35).contains(&p_balanced)
        && uniform;
    check(
        "3 (generator statistics)",
        pass,
        &format!(
            "P(B=R)@0.9 = {p_biased:.4}, P(B=R)@1/3 = {p_balanced:.4}, label counts {counts:?} (3-sigma band {:.0})",
            3.0 * sigma
        ),
    );
}

// ------------------------------------------------------------------ 4

#[test]
fn criterion_4_kmeans_oracle() {
    // three blobs of diameter ~1 with centers 10 apart
    let mut rng = Rng::stream(4, "kmeans");
    let centers = [(0.0, 0.0), (10.0, 0.0), (5.0, 10.0)];
    let mut points = Vec::new();
    let mut truth = Vec::new();
    for (c, &(cx, cy)) in centers.iter().enumerate() {
        for _ in 0..50 {
            points.push(vec![cx + rng.range(-0.5, 0.5), cy + rng.range(-0.5, 0.5)]);
            truth.push(c);
        }
    }
    let res = kmeans(&points, 3, &mut rng, 100, 1e-6).unwrap();
    let ari = adjusted_rand_index(&res.assignments, &truth);

    let mut monotone = true;
    for seed in 0..20 {
        let mut r = Rng::substream(4, "kmeans", seed);
        let pts: Vec<Vec<f64>> =
            (0..80).map(|_| vec![r.range(-3.0, 3.0), r.range(-3.0, 3.0)]).collect();
        let out = kmeans(&pts, 4, &mut r, 100, 0.0).unwrap();
        monotone &= out.sse_history.windows(2).all(|w| w[1] <= w[0] + 1e-9);
    }
    let pass = ari == 1.0 && monotone;
    check(
        "4 (k-means oracle)",
        pass,
        &format!("blob ARI = {ari}, SSE monotone on 20 instances: {monotone}"),
    );
}

// ------------------------------------------------------------------ 5

#[test]
fn criterion_5_auc_oracle() {
    let mut rng = Rng::stream(5, "test");
    let mut max_err = 0.0f64;
    for _ in 0..100 {
        loop {
            let n = 2 + rng.below(49);
            // quantized scores force ties
            let scores: Vec<f64> =
                (0..n).map(|_| (rng.uniform() * 8.0).floor() / 8.0).collect();
            let labels: Vec<usize> = (0..n).map(|_| rng.below(2)).collect();
            let pos = labels.iter().filter(|&&y| y == 1).count();
            if pos == 0 || pos == n {
                continue;
            }
            let fast = binary_auc(&scores, &labels).unwrap();
            let brute = pairwise_auc(&scores, &labels).unwrap();
            max_err = max_err.max((fast - brute).abs());
            break;
        }
    }
    let pass = max_err <= 1e-12;
    check(
        "5 (AUC oracle)",
        pass,
        &format!("max |rank-based - brute-force| = {max_err:.2e} over 100 instances"),
    );
}

// --------------------------------------------------------------- 6/7/9

fn write_desk_data(dir: &Path) {
    let mut cfg = RunConfig::default();
    cfg.dataset.seed = 7;
    commands::gen_data(&cfg, dir, false).unwrap();
}

fn desk_config(data: &Path, mode: Mode) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.mode = mode;
    cfg.dataset.path = Some(data.to_str().unwrap().to_string());
    cfg.seeds = vec![0, 1, 2];
    cfg
}

fn motif_fraction(test: &Dataset) -> f64 {
    let per_graph: Vec<f64> = test
        .graphs
        .iter()
        .map(|g| {
            let m = g.rationale_mask.as_ref().unwrap();
            m.iter().filter(|&&b| b).count() as f64 / g.n_nodes as f64
        })
        .collect();
    per_graph.iter().sum::<f64>() / per_graph.len() as f64
}

fn dir_files_equal(a: &Path, b: &Path, rel: &[&str]) -> Vec<String> {
    let mut diffs = Vec::new();
    for r in rel {
        let fa = std::fs::read(a.join(r)).unwrap();
        let fb = std::fs::read(b.join(r)).unwrap();
        if fa != fb {
            diffs.push(r.to_string());
        }
    }
    diffs
}

#[test]
fn criteria_6_7_9_ood_reproduction_and_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    write_desk_data(&data);

    let c2r_cfg = desk_config(&data, Mode::C2r);
    let c2r_run = commands::train(&c2r_cfg, &tmp.path().join("c2r"), false).unwrap();
    let vanilla_cfg = desk_config(&data, Mode::Vanilla);
    let vanilla_run = commands::train(&vanilla_cfg, &tmp.path().join("vanilla"), false).unwrap();

    // verdicts are collected so a failing criterion still lets the
    // remaining ones in this shared run print their own line
    let mut failures: Vec<String> = Vec::new();

    // criterion 6: OOD accuracy gap
    let gap = c2r_run.aggregate.acc_mean - vanilla_run.aggregate.acc_mean;
    failures.extend(
        verdict(
            "6 (OOD reproduction)",
            gap >= 0.05,
            &format!(
                "C2R balanced-test acc {:.4} vs vanilla GIN {:.4} (gap {gap:+.4}, need >= +0.05)",
                c2r_run.aggregate.acc_mean, vanilla_run.aggregate.acc_mean
            ),
        )
        .err(),
    );

    // criterion 7: rationale quality vs the random-score baseline
    let test = c2r::graphdata::read_dataset(&data.join("test.jsonl"), Split::Test).unwrap();
    let baseline = motif_fraction(&test);
    let p5 = c2r_run.aggregate.precision_at_k_mean.unwrap();
    failures.extend(
        verdict(
            "7 (rationale quality)",
            p5 >= baseline + 0.10,
            &format!("C2R P@5 {p5:.4} vs random-score baseline {baseline:.4} (need >= +0.10)"),
        )
        .err(),
    );

    // criterion 9: byte-identical rerun
    commands::train(&c2r_cfg, &tmp.path().join("c2r-again"), false).unwrap();
    let tracked: Vec<String> = c2r_cfg
        .seeds
        .iter()
        .flat_map(|s| {
            [
                format!("seed-{s}/metrics.jsonl"),
                format!("seed-{s}/checkpoint/checkpoint.json"),
                format!("seed-{s}/checkpoint/checkpoint.bin"),
                format!("seed-{s}/test_report.json"),
            ]
        })
        .chain(["summary.json".to_string()])
        .collect();
    let refs: Vec<&str> = tracked.iter().map(String::as_str).collect();
    let diffs = dir_files_equal(&tmp.path().join("c2r"), &tmp.path().join("c2r-again"), &refs);
    failures.extend(
        verdict(
            "9 (determinism)",
            diffs.is_empty(),
            &format!("{} tracked files compared, differing: {diffs:?}", refs.len()),
        )
        .err(),
    );

    assert!(failures.is_empty(), "{}", failures.join("\n"));
}

// ------------------------------------------------------------------ 8

#[test]
fn criterion_8_sparsity_control() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    write_desk_data(&data);

    let mut worst = 0.0f64;
    let mut detail = String::new();
    for alpha in [0.2, 0.4, 0.6] {
        let mut cfg = desk_config(&data, Mode::C2r);
        cfg.seeds = vec![0];
        cfg.loss.alpha = alpha;
        cfg.loss.lambda_sp = 1.0;
        cfg.optim.epochs = 50;
        let out = tmp.path().join(format!("alpha-{alpha}"));
        let run = commands::train(&cfg, &out, false).unwrap();
        let mean = run.per_seed[0].mask_mean.unwrap();
        let dev = (mean - alpha).abs();
        worst = worst.max(dev);
        detail.push_str(&format!("alpha={alpha}: mask mean {mean:.3} (|dev| {dev:.3}); "));
    }
    check(
        "8 (sparsity control)",
        worst <= 0.15,
        &format!("{detail}worst deviation {worst:.3} (limit 0.15)"),
    );
}

// ----------------------------------------------------------------- 10

#[test]
fn criterion_10_ablation_harness() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let mut gen_cfg = RunConfig::default();
    gen_cfg.dataset.n_train = 48;
    gen_cfg.dataset.n_val = 24;
    gen_cfg.dataset.n_test = 24;
    gen_cfg.dataset.base_size_min = 6;
    gen_cfg.dataset.base_size_max = 10;
    commands::gen_data(&gen_cfg, &data, false).unwrap();

    let mut cfg = desk_config(&data, Mode::C2r);
    cfg.seeds = vec![0, 1];
    cfg.model.d = 8;
    cfg.optim.batch_size = 8;
    cfg.optim.epochs = 2;

    let table = commands::ablate(&cfg, &tmp.path().join("ablate"), false).unwrap();
    let variants: Vec<&str> = table.aggregates.iter().map(|(n, _)| n.as_str()).collect();
    let shape_ok = variants == ["full", "no_cycle", "no_cou", "no_dis"]
        && table.rows.len() == 4 * cfg.seeds.len()
        && tmp.path().join("ablate/table.txt").exists();

    // flag-vs-zero-weight bit-exactness, one pair per switchable term
    let mut exact = true;
    let mut diffs_detail = String::new();
    for (name, flag, weight) in [
        ("no_cou", 0usize, "lambda_cou"),
        ("no_cycle", 1, "lambda_cycle"),
        ("no_dis", 2, "lambda_dis"),
    ] {
        let mut zeroed = cfg.clone();
        match flag {
            0 => zeroed.loss.lambda_cou = 0.0,
            1 => zeroed.loss.lambda_cycle = 0.0,
            _ => zeroed.loss.lambda_dis = 0.0,
        }
        let out = tmp.path().join(format!("zero-{weight}"));
        commands::train(&zeroed, &out, false).unwrap();
        let tracked: Vec<String> = cfg
            .seeds
            .iter()
            .flat_map(|s| {
                [
                    format!("seed-{s}/metrics.jsonl"),
                    format!("seed-{s}/checkpoint/checkpoint.bin"),
                ]
            })
            .collect();
        let refs: Vec<&str> = tracked.iter().map(String::as_str).collect();
        let diffs = dir_files_equal(&tmp.path().join("ablate").join(name), &out, &refs);
        if !diffs.is_empty() {
            exact = false;
            diffs_detail.push_str(&format!("{name} vs {weight}=0 differs in {diffs:?}; "));
        }
    }
    let pass = shape_ok && exact;
    check(
        "10 (ablation harness)",
        pass,
        &format!(
            "variants {variants:?}, {} rows; flag-vs-zero-weight bit-exact: {exact} {diffs_detail}",
            table.rows.len()
        ),
    );
}
