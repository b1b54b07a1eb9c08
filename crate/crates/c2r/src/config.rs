//! Declarative run configuration; every field has a recorded default and
//! the fully resolved config is written next to run outputs.

use serde::{Deserialize, Serialize};

use crate::models::{Backbone, ModelConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// full cooperative method
    C2r,
    /// plain GIN/GCN classification
    Vanilla,
    /// separator + rationale predictor only
    Rationale,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Align {
    Infonce,
    Kl,
    Mse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// directory produced by `gen-data`; required for train/eval
    pub path: Option<String>,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub bias: f64,
    pub test_bias: f64,
    pub d_in: usize,
    pub base_size_min: usize,
    pub base_size_max: usize,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            path: None,
            n_train: 1000,
            n_val: 1000,
            n_test: 2000,
            bias: 0.9,
            test_bias: 1.0 / 3.0,
            d_in: 4,
            base_size_min: 15,
            base_size_max: 35,
            seed: 7,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub backbone: Backbone,
    pub d: usize,
    pub layers: usize,
    pub tau: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection { backbone: Backbone::Gin, d: 32, layers: 3, tau: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossSection {
    pub lambda_cou: f64,
    pub lambda_cycle: f64,
    pub lambda_sp: f64,
    pub lambda_dis: f64,
    pub alpha: f64,
    pub tau_nce: f64,
    pub align: Align,
    pub distill_stop_grad: bool,
}

impl Default for LossSection {
    fn default() -> Self {
        LossSection {
            lambda_cou: 1.0,
            lambda_cycle: 0.01,
            lambda_sp: 0.01,
            lambda_dis: 1.0,
            alpha: 0.4,
            tau_nce: 0.2,
            align: Align::Infonce,
            distill_stop_grad: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimSection {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for OptimSection {
    fn default() -> Self {
        OptimSection { lr: 1e-2, batch_size: 128, epochs: 100 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationFlags {
    pub no_cycle: bool,
    pub no_cou: bool,
    pub no_dis: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub dataset: DatasetConfig,
    pub model: ModelSection,
    pub loss: LossSection,
    /// number of inductive environments
    pub k: usize,
    pub optim: OptimSection,
    pub ablation: AblationFlags,
    pub seeds: Vec<u64>,
    pub out: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::C2r,
            dataset: DatasetConfig::default(),
            model: ModelSection::default(),
            loss: LossSection::default(),
            k: 3,
            optim: OptimSection::default(),
            ablation: AblationFlags::default(),
            seeds: vec![0, 1, 2],
            out: "runs/out".into(),
        }
    }
}

impl RunConfig {
    pub fn model_config(&self, d_in: usize, n_classes: usize) -> ModelConfig {
        ModelConfig {
            backbone: self.model.backbone,
            d_in,
            d: self.model.d,
            n_classes,
            n_layers: self.model.layers,
            tau: self.model.tau,
        }
    }
}
