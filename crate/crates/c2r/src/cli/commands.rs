//! Implementations of the five subcommands. Every command writes its
//! fully resolved config next to its outputs and refuses to clobber an
//! existing non-empty directory without `--force`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::{Mode, RunConfig};
use crate::diffcore::Rng;
use crate::graphdata::{gen_spurious_motif, read_dataset, write_dataset, Dataset, GenSpec, Split};
use crate::metrics::{aggregate, AggregateReport, EvalReport};
use crate::models::checkpoint;
use crate::train::trainer::{evaluate, train_one_seed, TrainOutcome};

use super::{overrides, CliError, Result};

/// Per-seed test-set summary written as `test_report.json`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TestSummary {
    pub acc: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acc_en: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub precision_at_k: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mask_mean: Option<f64>,
    pub n_samples: usize,
    pub seed: u64,
    pub best_epoch: usize,
    pub best_val_acc: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunSummary {
    pub n_seeds: usize,
    pub aggregate: AggregateReport,
    pub per_seed: Vec<TestSummary>,
}

fn prepare_out(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() && dir.read_dir()?.next().is_some() {
        if !force {
            return Err(CliError::WouldOverwrite(dir.display().to_string()));
        }
        fs::remove_dir_all(dir)?;
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn sha256_hex(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    let mut h = Sha256::new();
    h.update(&bytes);
    Ok(h.digest_hex())
}

trait DigestHex {
    fn digest_hex(self) -> String;
}

impl DigestHex for Sha256 {
    fn digest_hex(self) -> String {
        self.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Serialize, Deserialize)]
struct DataManifest {
    files: Vec<(String, String)>,
    splits: Vec<(String, GenSpec)>,
}

pub fn gen_data(cfg: &RunConfig, out: &Path, force: bool) -> Result<()> {
    prepare_out(out, force)?;
    let ds = &cfg.dataset;
    let specs = [
        ("train", ds.n_train, ds.bias, ds.seed, Split::Train),
        ("val", ds.n_val, ds.bias, ds.seed.wrapping_add(1), Split::Val),
        ("test", ds.n_test, ds.test_bias, ds.seed.wrapping_add(2), Split::Test),
    ];
    let mut files = Vec::new();
    let mut splits = Vec::new();
    for (name, n, bias, seed, split) in specs {
        let spec = GenSpec {
            n_graphs: n,
            bias,
            d_in: ds.d_in,
            base_size_min: ds.base_size_min,
            base_size_max: ds.base_size_max,
            seed,
        };
        let dataset = gen_spurious_motif(&spec, split)?;
        let file = out.join(format!("{name}.jsonl"));
        write_dataset(&file, &dataset)?;
        files.push((format!("{name}.jsonl"), sha256_hex(&file)?));
        splits.push((name.to_string(), spec));
    }
    write_json(&out.join("manifest.json"), &DataManifest { files, splits })?;
    write_json(&out.join("config.json"), cfg)?;
    Ok(())
}

fn load_splits(cfg: &RunConfig) -> Result<(Dataset, Dataset, Dataset, PathBuf)> {
    let dir = cfg.dataset.path.as_deref().ok_or_else(|| {
        CliError::Config("dataset.path must point to a gen-data output directory".into())
    })?;
    let dir = PathBuf::from(dir);
    let train = read_dataset(&dir.join("train.jsonl"), Split::Train)?;
    let val = read_dataset(&dir.join("val.jsonl"), Split::Val)?;
    let test = read_dataset(&dir.join("test.jsonl"), Split::Test)?;
    Ok((train, val, test, dir))
}

fn summarize(outcome: &TrainOutcome) -> TestSummary {
    TestSummary {
        acc: outcome.test.report.acc,
        acc_en: outcome.test.acc_en,
        precision_at_k: outcome.test.report.precision_at_k,
        mask_mean: outcome.test.mask_mean,
        n_samples: outcome.test.report.n_samples,
        seed: outcome.seed,
        best_epoch: outcome.best_epoch,
        best_val_acc: outcome.best_val_acc,
    }
}

fn run_seeds(cfg: &RunConfig, out: &Path) -> Result<RunSummary> {
    let (train, val, test, _) = load_splits(cfg)?;
    let mut reports = Vec::new();
    let mut per_seed = Vec::new();
    for &seed in &cfg.seeds {
        let seed_dir = out.join(format!("seed-{seed}"));
        fs::create_dir_all(&seed_dir)?;
        let outcome = train_one_seed(cfg, seed, &train, &val, &test)?;
        let mut lines = String::new();
        for rec in &outcome.records {
            let _ = writeln!(lines, "{}", serde_json::to_string(rec)?);
        }
        fs::write(seed_dir.join("metrics.jsonl"), lines)?;
        checkpoint::save(&outcome.model, seed, &seed_dir.join("checkpoint"))?;
        let summary = summarize(&outcome);
        write_json(&seed_dir.join("test_report.json"), &summary)?;
        reports.push(outcome.test.report.clone());
        per_seed.push(summary);
    }
    let aggregate = aggregate(&reports).map_err(|e| CliError::Invalid(e.to_string()))?;
    Ok(RunSummary { n_seeds: cfg.seeds.len(), aggregate, per_seed })
}

pub fn train(cfg: &RunConfig, out: &Path, force: bool) -> Result<RunSummary> {
    prepare_out(out, force)?;
    write_json(&out.join("config.json"), cfg)?;
    let summary = run_seeds(cfg, out)?;
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Evaluates a checkpoint on a dataset file; reports the rationale
/// prediction accuracy alongside the classification-module accuracy.
pub fn eval(checkpoint_dir: &Path, data_path: &Path, out: Option<&Path>) -> Result<TestSummary> {
    let (model, seed) = checkpoint::load(checkpoint_dir)?;
    let data = read_dataset(data_path, Split::Test)?;
    let mut rng = Rng::stream(seed, "eval-final");
    let result = evaluate(&model, Mode::C2r, &data, seed, &mut rng)?;
    let summary = TestSummary {
        acc: result.report.acc,
        acc_en: result.acc_en,
        precision_at_k: result.report.precision_at_k,
        mask_mean: result.mask_mean,
        n_samples: result.report.n_samples,
        seed,
        best_epoch: 0,
        best_val_acc: 0.0,
    };
    if let Some(path) = out {
        write_json(path, &summary)?;
    }
    Ok(summary)
}

#[derive(Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub seed: u64,
    pub acc: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub precision_at_k: Option<f64>,
}

#[derive(Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
    pub aggregates: Vec<(String, AggregateReport)>,
}

pub fn ablate(cfg: &RunConfig, out: &Path, force: bool) -> Result<AblationTable> {
    prepare_out(out, force)?;
    write_json(&out.join("config.json"), cfg)?;
    let variants: [(&str, fn(&mut RunConfig)); 4] = [
        ("full", |_| {}),
        ("no_cycle", |c| c.ablation.no_cycle = true),
        ("no_cou", |c| c.ablation.no_cou = true),
        ("no_dis", |c| c.ablation.no_dis = true),
    ];
    let mut rows = Vec::new();
    let mut aggregates = Vec::new();
    for (name, tweak) in variants {
        let mut vcfg = cfg.clone();
        vcfg.mode = Mode::C2r;
        vcfg.ablation = Default::default();
        tweak(&mut vcfg);
        let vdir = out.join(name);
        fs::create_dir_all(&vdir)?;
        write_json(&vdir.join("config.json"), &vcfg)?;
        let summary = run_seeds(&vcfg, &vdir)?;
        write_json(&vdir.join("summary.json"), &summary)?;
        for s in &summary.per_seed {
            rows.push(AblationRow {
                variant: name.to_string(),
                seed: s.seed,
                acc: s.acc,
                precision_at_k: s.precision_at_k,
            });
        }
        aggregates.push((name.to_string(), summary.aggregate));
    }
    let table = AblationTable { rows, aggregates };
    write_json(&out.join("ablation.json"), &table)?;
    fs::write(out.join("table.txt"), render_ablation(&table))?;
    Ok(table)
}

fn render_ablation(table: &AblationTable) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<10} {:>10} {:>10} {:>10}", "variant", "acc_mean", "acc_std", "p@5_mean");
    for (name, agg) in &table.aggregates {
        let p5 = agg
            .precision_at_k_mean
            .map_or("-".to_string(), |v| format!("{v:.4}"));
        let _ = writeln!(s, "{:<10} {:>10.4} {:>10.4} {:>10}", name, agg.acc_mean, agg.acc_std, p5);
    }
    s
}

#[derive(Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: Value,
    pub mean: f64,
    pub std: f64,
}

pub fn sweep(
    cfg: &RunConfig,
    param: &str,
    values: &[Value],
    out: &Path,
    force: bool,
) -> Result<Vec<SweepPoint>> {
    if values.is_empty() {
        return Err(CliError::Config("sweep needs at least one value".into()));
    }
    prepare_out(out, force)?;
    write_json(&out.join("config.json"), cfg)?;
    let mut points = Vec::new();
    for (i, v) in values.iter().enumerate() {
        let mut as_value = serde_json::to_value(cfg)?;
        overrides::set_dotted(&mut as_value, param, v.clone())?;
        let vcfg: RunConfig = serde_json::from_value(as_value)
            .map_err(|e| CliError::Config(format!("invalid sweep value {v}: {e}")))?;
        let vdir = out.join(format!("point-{i}"));
        fs::create_dir_all(&vdir)?;
        write_json(&vdir.join("config.json"), &vcfg)?;
        let summary = run_seeds(&vcfg, &vdir)?;
        write_json(&vdir.join("summary.json"), &summary)?;
        points.push(SweepPoint {
            value: v.clone(),
            mean: summary.aggregate.acc_mean,
            std: summary.aggregate.acc_std,
        });
    }
    write_json(&out.join("sweep.json"), &points)?;
    let mut curve = String::new();
    let _ = writeln!(curve, "{:<12} {:>10} {:>10}", param, "acc_mean", "acc_std");
    for p in &points {
        let _ = writeln!(curve, "{:<12} {:>10.4} {:>10.4}", p.value.to_string(), p.mean, p.std);
    }
    fs::write(out.join("curve.txt"), curve)?;
    Ok(points)
}

/// Helper used by `eval` and tests: EvalReport for external aggregation.
pub fn report_of(summary: &TestSummary) -> EvalReport {
    EvalReport {
        acc: summary.acc,
        auc: None,
        precision_at_k: summary.precision_at_k,
        n_samples: summary.n_samples,
        seed: summary.seed,
    }
}
