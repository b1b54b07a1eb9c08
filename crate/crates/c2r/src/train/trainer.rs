//! The cooperative epoch loop: warm-start environment refresh, minibatch
//! passes over all six loss terms, Adam updates, per-epoch refresh and
//! evaluation, and best-validation checkpoint selection.

use serde::{Deserialize, Serialize};

use crate::config::{Align, Mode, RunConfig};
use crate::diffcore::{Adam, NodeId, Rng, Tape, Tensor};
use crate::graphdata::Dataset;
use crate::metrics::{accuracy, precision_at_k, EvalReport};
use crate::models::{Batch, C2RModel};

use super::kmeans::kmeans;
use super::losses::{infonce, kl_align, mse_align, sparsity};
use super::{EnvironmentSet, Result, TrainError};

const EVAL_CHUNK: usize = 256;
const PRECISION_K: usize = 5;

/// One JSONL line of the per-epoch metric stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub split: String,
    pub acc: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acc_en: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub precision_at_k: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mask_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss_total: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss_ori: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss_cou: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss_cycle: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss_r: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss_sp: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss_dis: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub env_agreement: Option<f64>,
}

pub struct EvalOutput {
    pub report: EvalReport,
    /// classification-module accuracy (c2r mode only)
    pub acc_en: Option<f64>,
    /// mean soft rationale probability over all nodes
    pub mask_mean: Option<f64>,
}

pub struct TrainOutcome {
    pub seed: u64,
    pub records: Vec<MetricsRecord>,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub test: EvalOutput,
    /// model restored to the best-validation parameters
    pub model: C2RModel,
}

fn n_classes_of(sets: &[&Dataset]) -> usize {
    sets.iter()
        .flat_map(|d| d.graphs.iter())
        .map(|g| g.label + 1)
        .max()
        .unwrap_or(2)
        .max(2)
}

fn mean_ce(tape: &mut Tape, logits: NodeId, labels: &[usize]) -> Result<NodeId> {
    let ce = tape.cross_entropy_with_logits(logits, labels)?;
    Ok(tape.mean_all(ce))
}

fn argmax_rows(t: &Tensor) -> Vec<usize> {
    (0..t.rows())
        .map(|i| {
            let row = t.row(i);
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Cluster purity against the generator's base-type hints, when present.
fn env_agreement(assignments: &[usize], data: &Dataset) -> Option<f64> {
    let hints: Vec<usize> = data.graphs.iter().filter_map(|g| g.env_hint).collect();
    if hints.len() != assignments.len() || hints.is_empty() {
        return None;
    }
    let k = assignments.iter().max().map_or(0, |&m| m + 1);
    let n_hints = hints.iter().max().map_or(0, |&m| m + 1);
    let mut counts = vec![vec![0usize; n_hints]; k];
    for (&a, &h) in assignments.iter().zip(&hints) {
        counts[a][h] += 1;
    }
    let majority: usize = counts.iter().map(|c| c.iter().max().copied().unwrap_or(0)).sum();
    Some(majority as f64 / assignments.len() as f64)
}

fn collect_h_n(model: &C2RModel, data: &Dataset) -> Result<Vec<Vec<f64>>> {
    let mut points = Vec::with_capacity(data.len());
    let all: Vec<usize> = (0..data.len()).collect();
    for chunk in all.chunks(EVAL_CHUNK) {
        let batch = Batch::from_dataset(&data.graphs, chunk);
        let mut tape = Tape::new();
        let sep = model.separate(&mut tape, &batch, None, false)?;
        let t = tape.value(sep.h_n);
        for i in 0..batch.n_graphs {
            points.push(t.row(i).to_vec());
        }
    }
    Ok(points)
}

/// Forward-only pass over the full training set, then k-means over the
/// non-rationale representations.
pub fn refresh_environments(
    model: &C2RModel,
    train: &Dataset,
    k: usize,
    rng: &mut Rng,
) -> Result<EnvironmentSet> {
    let points = collect_h_n(model, train)?;
    let res = kmeans(&points, k, rng, 100, 1e-6)?;
    Ok(EnvironmentSet { centroids: res.centroids, assignments: res.assignments })
}

fn gather_env_rows(env: &EnvironmentSet, which: &[usize]) -> Tensor {
    let d = env.centroids[0].len();
    let mut flat = Vec::with_capacity(which.len() * d);
    for &j in which {
        flat.extend_from_slice(&env.centroids[j]);
    }
    Tensor::new(which.len(), d, flat).expect("centroid rows")
}

struct StepTerms {
    total: f64,
    ori: f64,
    cou: f64,
    cycle: f64,
    r: f64,
    sp: f64,
    dis: f64,
}

#[allow(clippy::too_many_arguments)]
fn train_step(
    cfg: &RunConfig,
    model: &mut C2RModel,
    batch: &Batch,
    env: Option<&EnvironmentSet>,
    gumbel_rng: &mut Rng,
    env_rng: &mut Rng,
    adam: &mut Adam,
) -> Result<StepTerms> {
    let mut tape = Tape::new();
    let w = &cfg.loss;
    let mut terms = StepTerms { total: 0.0, ori: 0.0, cou: 0.0, cycle: 0.0, r: 0.0, sp: 0.0, dis: 0.0 };

    let total = match cfg.mode {
        Mode::Vanilla => {
            let (_, h_en) = model.encode(&mut tape, batch)?;
            let logits = model.predict(&mut tape, h_en)?;
            let l_ori = mean_ce(&mut tape, logits, &batch.labels)?;
            terms.ori = tape.value(l_ori).item();
            l_ori
        }
        Mode::Rationale => {
            let sep = model.separate(&mut tape, batch, Some(gumbel_rng), false)?;
            let logits_r = model.predict(&mut tape, sep.h_r)?;
            let l_r = mean_ce(&mut tape, logits_r, &batch.labels)?;
            let probs = tape.slice_col(sep.mtilde, 0)?;
            let l_sp = sparsity(&mut tape, probs, &batch.segments, batch.n_graphs, w.alpha)?;
            terms.r = tape.value(l_r).item();
            terms.sp = tape.value(l_sp).item();
            let sp_scaled = tape.affine(l_sp, w.lambda_sp, 0.0);
            tape.add(l_r, sp_scaled)?
        }
        Mode::C2r => {
            let env = env.expect("environments populated before c2r steps");
            let (_, h_en) = model.encode(&mut tape, batch)?;
            let logits_en = model.predict(&mut tape, h_en)?;
            let l_ori = mean_ce(&mut tape, logits_en, &batch.labels)?;

            // counterfactual branch: per sample, a uniformly chosen
            // environment j != m, plus the original e_m for the cycle.
            let k = env.centroids.len();
            let ms: Vec<usize> =
                batch.sample_indices.iter().map(|&i| env.assignments[i]).collect();
            let js: Vec<usize> = ms
                .iter()
                .map(|&m| {
                    let r = env_rng.below(k - 1);
                    if r >= m {
                        r + 1
                    } else {
                        r
                    }
                })
                .collect();
            let e_j = tape.input(gather_env_rows(env, &js));
            let e_m = tape.input(gather_env_rows(env, &ms));
            let h_cou = model.counterfactual(&mut tape, h_en, e_j)?;
            let logits_cou = model.predict(&mut tape, h_cou)?;
            let l_cou = mean_ce(&mut tape, logits_cou, &batch.labels)?;
            let h_back = model.counterfactual(&mut tape, h_cou, e_m)?;
            let l_cycle = infonce(&mut tape, h_back, h_en, w.tau_nce)?;

            // rationalization branch
            let sep = model.separate(&mut tape, batch, Some(gumbel_rng), false)?;
            let logits_r = model.predict(&mut tape, sep.h_r)?;
            let l_r = mean_ce(&mut tape, logits_r, &batch.labels)?;
            let probs = tape.slice_col(sep.mtilde, 0)?;
            let l_sp = sparsity(&mut tape, probs, &batch.segments, batch.n_graphs, w.alpha)?;

            // distillation: the classification module is the teacher
            let teacher = if w.distill_stop_grad { tape.detach(h_en) } else { h_en };
            let l_dis = match w.align {
                Align::Infonce => infonce(&mut tape, sep.h_r, teacher, w.tau_nce)?,
                Align::Mse => mse_align(&mut tape, sep.h_r, teacher)?,
                Align::Kl => {
                    let a = tape.l2_normalize_rows(sep.h_r);
                    let b = tape.l2_normalize_rows(teacher);
                    let sim = tape.matmul_nt(a, b)?;
                    let target = similarity_target(tape.value(teacher));
                    kl_align(&mut tape, sim, &target, w.tau_nce)?
                }
            };

            terms.ori = tape.value(l_ori).item();
            terms.cou = tape.value(l_cou).item();
            terms.cycle = tape.value(l_cycle).item();
            terms.r = tape.value(l_r).item();
            terms.sp = tape.value(l_sp).item();
            terms.dis = tape.value(l_dis).item();

            // Flags zero the weight; the term is still built so the tape,
            // RNG consumption, and therefore every other gradient are
            // bit-identical to an explicit lambda = 0 run.
            let lam_cou = if cfg.ablation.no_cou { 0.0 } else { w.lambda_cou };
            let lam_cycle = if cfg.ablation.no_cycle { 0.0 } else { w.lambda_cycle };
            let lam_dis = if cfg.ablation.no_dis { 0.0 } else { w.lambda_dis };

            let mut total = tape.add(l_ori, l_r)?;
            for (term, lam) in [
                (l_cou, lam_cou),
                (l_cycle, lam_cycle),
                (l_sp, w.lambda_sp),
                (l_dis, lam_dis),
            ] {
                let scaled = tape.affine(term, lam, 0.0);
                total = tape.add(total, scaled)?;
            }
            total
        }
    };

    terms.total = tape.value(total).item();
    if !terms.total.is_finite() {
        return Err(TrainError::Nan { epoch: 0, batch: 0 }); // located by caller
    }
    tape.backward(total)?;
    model.store.zero_grads();
    tape.flush_param_grads(&mut model.store);
    adam.step(&mut model.store)?;
    Ok(terms)
}

/// Self-similarity distribution target for the KL alignment variant.
fn similarity_target(teacher: &Tensor) -> Tensor {
    let (n, d) = teacher.shape();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let r = teacher.row(i);
        let norm = r.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        rows.push(r.iter().map(|x| x / norm).collect());
    }
    let mut flat = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            flat.push((0..d).map(|t| rows[i][t] * rows[j][t]).sum());
        }
    }
    Tensor::new(n, n, flat).expect("similarity target")
}

/// Full-split evaluation with hard masks; accuracy uses the rationale
/// prediction for c2r/rationale modes and the encoder prediction for
/// vanilla.
pub fn evaluate(
    model: &C2RModel,
    mode: Mode,
    data: &Dataset,
    seed: u64,
    rng: &mut Rng,
) -> Result<EvalOutput> {
    if data.is_empty() {
        return Err(TrainError::Data("cannot evaluate an empty split".into()));
    }
    let mut preds = Vec::with_capacity(data.len());
    let mut preds_en = Vec::with_capacity(data.len());
    let mut labels = Vec::with_capacity(data.len());
    let mut p_at_k_vals = Vec::new();
    let mut mask_sum = 0.0;
    let mut node_count = 0usize;

    let all: Vec<usize> = (0..data.len()).collect();
    for chunk in all.chunks(EVAL_CHUNK) {
        let batch = Batch::from_dataset(&data.graphs, chunk);
        let mut tape = Tape::new();
        labels.extend_from_slice(&batch.labels);
        match mode {
            Mode::Vanilla => {
                let (_, h_en) = model.encode(&mut tape, &batch)?;
                let logits = model.predict(&mut tape, h_en)?;
                preds.extend(argmax_rows(tape.value(logits)));
            }
            Mode::Rationale | Mode::C2r => {
                let sep = model.separate(&mut tape, &batch, Some(rng), true)?;
                let logits_r = model.predict(&mut tape, sep.h_r)?;
                preds.extend(argmax_rows(tape.value(logits_r)));
                if mode == Mode::C2r {
                    let (_, h_en) = model.encode(&mut tape, &batch)?;
                    let logits_en = model.predict(&mut tape, h_en)?;
                    preds_en.extend(argmax_rows(tape.value(logits_en)));
                }
                let probs = tape.value(sep.mtilde);
                for (g, &(lo, hi)) in batch.node_ranges.iter().enumerate() {
                    let scores: Vec<f64> = (lo..hi).map(|i| probs.at(i, 0)).collect();
                    mask_sum += scores.iter().sum::<f64>();
                    node_count += scores.len();
                    if let Some(mask) = &data.graphs[chunk[g]].rationale_mask {
                        if let Some(p) = precision_at_k(&scores, mask, PRECISION_K) {
                            p_at_k_vals.push(p);
                        }
                    }
                }
            }
        }
    }

    let acc = accuracy(&preds, &labels)
        .map_err(|e| TrainError::Data(e.to_string()))?;
    let acc_en = if preds_en.is_empty() {
        None
    } else {
        Some(accuracy(&preds_en, &labels).map_err(|e| TrainError::Data(e.to_string()))?)
    };
    let p_at_k = if p_at_k_vals.is_empty() {
        None
    } else {
        Some(p_at_k_vals.iter().sum::<f64>() / p_at_k_vals.len() as f64)
    };
    let mask_mean = if node_count == 0 { None } else { Some(mask_sum / node_count as f64) };
    Ok(EvalOutput {
        report: EvalReport {
            acc,
            auc: None,
            precision_at_k: p_at_k,
            n_samples: labels.len(),
            seed,
        },
        acc_en,
        mask_mean,
    })
}

fn batch_index_chunks(order: &[usize], batch_size: usize) -> Vec<Vec<usize>> {
    let mut chunks: Vec<Vec<usize>> =
        order.chunks(batch_size).map(|c| c.to_vec()).collect();
    // A trailing singleton cannot provide in-batch negatives; fold it into
    // the previous batch.
    if chunks.len() >= 2 && chunks.last().is_some_and(|c| c.len() == 1) {
        let tail = chunks.pop().unwrap();
        chunks.last_mut().unwrap().extend(tail);
    }
    chunks
}

fn validate(cfg: &RunConfig, train: &Dataset, val: &Dataset, test: &Dataset) -> Result<()> {
    if train.is_empty() || val.is_empty() || test.is_empty() {
        return Err(TrainError::Data("train/val/test splits must be non-empty".into()));
    }
    if cfg.optim.batch_size == 0 {
        return Err(TrainError::Config("batch_size must be positive".into()));
    }
    if cfg.mode == Mode::C2r {
        if cfg.k < 2 {
            return Err(TrainError::Config(format!(
                "c2r needs k >= 2 environments to sample counterfactuals, got k={}",
                cfg.k
            )));
        }
        if cfg.optim.batch_size < 2 || train.len() < 2 {
            return Err(TrainError::Config(
                "c2r needs batches of at least 2 samples for in-batch negatives".into(),
            ));
        }
        if train.len() < cfg.k {
            return Err(TrainError::Config(format!(
                "k={} environments need at least as many training samples, got {}",
                cfg.k,
                train.len()
            )));
        }
    }
    let d_in = train.graphs[0].feature_dim();
    for d in [train, val, test] {
        if d.graphs.iter().any(|g| g.feature_dim() != d_in) {
            return Err(TrainError::Data("inconsistent feature dimensionality".into()));
        }
    }
    Ok(())
}

pub fn train_one_seed(
    cfg: &RunConfig,
    seed: u64,
    train: &Dataset,
    val: &Dataset,
    test: &Dataset,
) -> Result<TrainOutcome> {
    validate(cfg, train, val, test)?;
    let d_in = train.graphs[0].feature_dim();
    let n_classes = n_classes_of(&[train, val, test]);
    let mut model = C2RModel::build(cfg.model_config(d_in, n_classes), seed);
    let mut adam = Adam::new(&model.store, cfg.optim.lr);
    let mut records = Vec::new();

    // warm start: environments from the untrained separator
    let mut env = if cfg.mode == Mode::C2r {
        let mut rng = Rng::substream(seed, "kmeans", 0);
        Some(refresh_environments(&model, train, cfg.k, &mut rng)?)
    } else {
        None
    };
    let mut agreement = env.as_ref().and_then(|e| env_agreement(&e.assignments, train));

    let eval_pair = |model: &C2RModel,
                         epoch: usize,
                         agreement: Option<f64>,
                         terms: Option<&StepTerms>|
     -> Result<(MetricsRecord, MetricsRecord)> {
        let mut rng_tr = Rng::substream(seed, "eval-train", epoch as u64);
        let tr = evaluate(model, cfg.mode, train, seed, &mut rng_tr)?;
        let mut rng_val = Rng::substream(seed, "eval-val", epoch as u64);
        let va = evaluate(model, cfg.mode, val, seed, &mut rng_val)?;
        let train_rec = MetricsRecord {
            epoch,
            split: "train".into(),
            acc: tr.report.acc,
            acc_en: tr.acc_en,
            precision_at_k: tr.report.precision_at_k,
            mask_mean: tr.mask_mean,
            loss_total: terms.map(|t| t.total),
            loss_ori: terms.map(|t| t.ori),
            loss_cou: terms.map(|t| t.cou),
            loss_cycle: terms.map(|t| t.cycle),
            loss_r: terms.map(|t| t.r),
            loss_sp: terms.map(|t| t.sp),
            loss_dis: terms.map(|t| t.dis),
            env_agreement: agreement,
        };
        let val_rec = MetricsRecord {
            epoch,
            split: "val".into(),
            acc: va.report.acc,
            acc_en: va.acc_en,
            precision_at_k: va.report.precision_at_k,
            mask_mean: va.mask_mean,
            loss_total: None,
            loss_ori: None,
            loss_cou: None,
            loss_cycle: None,
            loss_r: None,
            loss_sp: None,
            loss_dis: None,
            env_agreement: None,
        };
        Ok((train_rec, val_rec))
    };

    let (tr0, va0) = eval_pair(&model, 0, agreement, None)?;
    let mut best_val_acc = va0.acc;
    let mut best_epoch = 0usize;
    let mut best_values = model.snapshot();
    records.push(tr0);
    records.push(va0);

    for epoch in 1..=cfg.optim.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut shuffle_rng = Rng::substream(seed, "shuffle", epoch as u64);
        shuffle_rng.shuffle(&mut order);
        let mut gumbel_rng = Rng::substream(seed, "gumbel", epoch as u64);
        let mut env_rng = Rng::substream(seed, "env", epoch as u64);

        // epoch-level term averages, weighted by batch size
        let mut acc_terms = StepTerms { total: 0.0, ori: 0.0, cou: 0.0, cycle: 0.0, r: 0.0, sp: 0.0, dis: 0.0 };
        let mut n_seen = 0usize;
        for (b, idxs) in batch_index_chunks(&order, cfg.optim.batch_size).iter().enumerate() {
            let batch = Batch::from_dataset(&train.graphs, idxs);
            let terms = train_step(
                cfg,
                &mut model,
                &batch,
                env.as_ref(),
                &mut gumbel_rng,
                &mut env_rng,
                &mut adam,
            )
            .map_err(|e| match e {
                TrainError::Nan { .. } => TrainError::Nan { epoch, batch: b },
                other => other,
            })?;
            let w = idxs.len() as f64;
            acc_terms.total += terms.total * w;
            acc_terms.ori += terms.ori * w;
            acc_terms.cou += terms.cou * w;
            acc_terms.cycle += terms.cycle * w;
            acc_terms.r += terms.r * w;
            acc_terms.sp += terms.sp * w;
            acc_terms.dis += terms.dis * w;
            n_seen += idxs.len();
        }
        let inv = 1.0 / n_seen as f64;
        acc_terms.total *= inv;
        acc_terms.ori *= inv;
        acc_terms.cou *= inv;
        acc_terms.cycle *= inv;
        acc_terms.r *= inv;
        acc_terms.sp *= inv;
        acc_terms.dis *= inv;

        if cfg.mode == Mode::C2r {
            let mut rng = Rng::substream(seed, "kmeans", epoch as u64);
            let refreshed = refresh_environments(&model, train, cfg.k, &mut rng)?;
            agreement = env_agreement(&refreshed.assignments, train);
            env = Some(refreshed);
        }

        let (tr, va) = eval_pair(&model, epoch, agreement, Some(&acc_terms))?;
        if va.acc > best_val_acc {
            best_val_acc = va.acc;
            best_epoch = epoch;
            best_values = model.snapshot();
        }
        records.push(tr);
        records.push(va);
    }

    model.restore(&best_values);
    let mut test_rng = Rng::stream(seed, "eval-final");
    let test_out = evaluate(&model, cfg.mode, test, seed, &mut test_rng)?;
    Ok(TrainOutcome {
        seed,
        records,
        best_epoch,
        best_val_acc,
        test: test_out,
        model,
    })
}
