//! Neural building blocks: GIN/GCN encoders with mean-pooled readout, the
//! rationale separator with Gumbel-softmax node masking, the shared
//! predictor, and the environment-conditional generator.

pub mod batch;
pub mod checkpoint;
pub mod layers;

pub use batch::Batch;
pub use layers::{Backbone, GnnLayer, GnnStack, Mlp};

use serde::{Deserialize, Serialize};

use crate::diffcore::{NodeId, ParamId, ParamStore, Result, Rng, Tape, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub backbone: Backbone,
    pub d_in: usize,
    pub d: usize,
    pub n_classes: usize,
    pub n_layers: usize,
    /// Gumbel-softmax temperature
    pub tau: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { backbone: Backbone::Gin, d_in: 4, d: 32, n_classes: 3, n_layers: 3, tau: 1.0 }
    }
}

/// Parameter bundle for the full method: encoder GNN_en, separator
/// (GNN_m, W_m), rationale encoder GNN_g, shared predictor, and the
/// environment-conditional generator.
pub struct C2RModel {
    pub cfg: ModelConfig,
    pub store: ParamStore,
    pub encoder: GnnStack,
    pub sep_gnn: GnnStack,
    pub w_m: ParamId,
    pub rat_gnn: GnnStack,
    pub predictor: Mlp,
    pub env_gen: Mlp,
}

/// Output of the separator: node mask distribution, sampled mask, and the
/// rationale / non-rationale readouts.
pub struct Separation {
    /// |V| x 2 row-stochastic mask distribution
    pub mtilde: NodeId,
    /// |V| x 1 rationale-channel mask actually applied
    pub mask: NodeId,
    pub h_r: NodeId,
    pub h_n: NodeId,
}

impl C2RModel {
    pub fn build(cfg: ModelConfig, seed: u64) -> Self {
        let mut store = ParamStore::new();
        let mut rng = Rng::stream(seed, "init");
        let d = cfg.d;
        let encoder =
            GnnStack::build(&mut store, &mut rng, "en", cfg.backbone, cfg.d_in, d, cfg.n_layers);
        let sep_gnn =
            GnnStack::build(&mut store, &mut rng, "sep", cfg.backbone, cfg.d_in, d, cfg.n_layers);
        let w_m = store.register_uniform("sep.w_m", d, 2, d, &mut rng);
        let rat_gnn =
            GnnStack::build(&mut store, &mut rng, "rat", cfg.backbone, cfg.d_in, d, cfg.n_layers);
        let predictor = Mlp::build(&mut store, &mut rng, "phi", d, d, cfg.n_classes);
        let env_gen = Mlp::build(&mut store, &mut rng, "eg", 2 * d, d, d);
        C2RModel { cfg, store, encoder, sep_gnn, w_m, rat_gnn, predictor, env_gen }
    }

    /// Eq-style encoder pass: node embeddings H and mean-pooled per-graph h.
    pub fn encode(&self, tape: &mut Tape, batch: &Batch) -> Result<(NodeId, NodeId)> {
        let x = tape.input(batch.features.clone());
        let h_nodes = self.encoder.forward(tape, &self.store, batch, x)?;
        let h_graph = tape.segment_mean(h_nodes, &batch.segments, batch.n_graphs)?;
        Ok((h_nodes, h_graph))
    }

    /// Shared predictor over any d-wide representation.
    pub fn predict(&self, tape: &mut Tape, h: NodeId) -> Result<NodeId> {
        self.predictor.forward(tape, &self.store, h)
    }

    /// Counterfactual representation EG([h; e]).
    pub fn counterfactual(&self, tape: &mut Tape, h: NodeId, e: NodeId) -> Result<NodeId> {
        let joined = tape.concat_cols(h, e)?;
        self.env_gen.forward(tape, &self.store, joined)
    }

    /// Separator pass. With `noise`, nodes are sampled via Gumbel-softmax
    /// (relaxed when `hard` is false, argmax indicator when true). Without
    /// noise the soft selection probabilities are used directly.
    pub fn separate(
        &self,
        tape: &mut Tape,
        batch: &Batch,
        noise: Option<&mut Rng>,
        hard: bool,
    ) -> Result<Separation> {
        if self.cfg.tau <= 0.0 {
            return Err(crate::diffcore::DiffError::Contract(format!(
                "gumbel temperature must be positive, got {}",
                self.cfg.tau
            )));
        }
        let x = tape.input(batch.features.clone());
        let h_m = self.sep_gnn.forward(tape, &self.store, batch, x)?;
        let w_m = tape.param(&self.store, self.w_m);
        let logits = tape.matmul(h_m, w_m)?;
        let mtilde = tape.row_softmax(logits);

        let mask = match noise {
            Some(rng) => {
                let sample = gumbel_softmax(tape, mtilde, self.cfg.tau, rng)?;
                if hard {
                    let hard_vals: Vec<f64> = (0..batch.n_nodes)
                        .map(|i| {
                            let row = tape.value(sample).row(i);
                            if row[0] >= row[1] {
                                1.0
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    tape.input(Tensor::column(hard_vals))
                } else {
                    tape.slice_col(sample, 0)?
                }
            }
            None => tape.slice_col(mtilde, 0)?,
        };

        let h_g = self.rat_gnn.forward(tape, &self.store, batch, x)?;
        let masked = tape.scale_rows(h_g, mask)?;
        let h_r = tape.segment_mean(masked, &batch.segments, batch.n_graphs)?;
        let inv_mask = tape.affine(mask, -1.0, 1.0);
        let unmasked = tape.scale_rows(h_g, inv_mask)?;
        let h_n = tape.segment_mean(unmasked, &batch.segments, batch.n_graphs)?;
        Ok(Separation { mtilde, mask, h_r, h_n })
    }

    /// Flat snapshot of all parameter values in store order.
    pub fn snapshot(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.store.total_values());
        for p in self.store.iter() {
            out.extend_from_slice(p.value.values());
        }
        out
    }

    pub fn restore(&mut self, snapshot: &[f64]) {
        let mut offset = 0;
        for id in self.store.ids().collect::<Vec<_>>() {
            let len = self.store.value(id).len();
            self.store
                .value_mut(id)
                .values_mut()
                .copy_from_slice(&snapshot[offset..offset + len]);
            offset += len;
        }
        assert_eq!(offset, snapshot.len(), "snapshot length mismatch");
    }
}

/// Relaxed categorical sample per row: softmax((log m + q) / tau) with
/// q = -log(-log u), u ~ U(0,1).
pub fn gumbel_softmax(tape: &mut Tape, probs: NodeId, tau: f64, rng: &mut Rng) -> Result<NodeId> {
    let (r, c) = tape.value(probs).shape();
    // Guard against exact zeros from saturated softmax rows.
    let guarded = tape.affine(probs, 1.0, 1e-12);
    let logged = tape.log(guarded)?;
    let noise: Vec<f64> = (0..r * c).map(|_| rng.gumbel()).collect();
    let q = tape.input(Tensor::new(r, c, noise)?);
    let shifted = tape.add(logged, q)?;
    let scaled = tape.affine(shifted, 1.0 / tau, 0.0);
    Ok(tape.row_softmax(scaled))
}
