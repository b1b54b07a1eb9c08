use serde::{Deserialize, Serialize};

use crate::diffcore::{NodeId, ParamId, ParamStore, Result, Rng, Tape, Tensor};

use super::batch::Batch;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backbone {
    Gin,
    Gcn,
}

/// Two-layer MLP with ReLU between.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

impl Mlp {
    pub fn build(
        store: &mut ParamStore,
        rng: &mut Rng,
        prefix: &str,
        d_in: usize,
        d_hidden: usize,
        d_out: usize,
    ) -> Self {
        Mlp {
            w1: store.register_uniform(&format!("{prefix}.w1"), d_in, d_hidden, d_in, rng),
            b1: store.register_uniform(&format!("{prefix}.b1"), 1, d_hidden, d_in, rng),
            w2: store.register_uniform(&format!("{prefix}.w2"), d_hidden, d_out, d_hidden, rng),
            b2: store.register_uniform(&format!("{prefix}.b2"), 1, d_out, d_hidden, rng),
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: NodeId) -> Result<NodeId> {
        let w1 = tape.param(store, self.w1);
        let b1 = tape.param(store, self.b1);
        let w2 = tape.param(store, self.w2);
        let b2 = tape.param(store, self.b2);
        let h = tape.matmul(x, w1)?;
        let h = tape.add_row_vec(h, b1)?;
        let h = tape.relu(h);
        let h = tape.matmul(h, w2)?;
        tape.add_row_vec(h, b2)
    }
}

#[derive(Clone, Debug)]
pub enum GnnLayer {
    /// H' = MLP((1 + eps) H + sum of neighbor rows)
    Gin { eps: ParamId, mlp: Mlp },
    /// H' = ReLU(A_hat H W)
    Gcn { w: ParamId },
}

impl GnnLayer {
    pub fn build(
        store: &mut ParamStore,
        rng: &mut Rng,
        prefix: &str,
        backbone: Backbone,
        d_in: usize,
        d_out: usize,
    ) -> Self {
        match backbone {
            Backbone::Gin => GnnLayer::Gin {
                eps: store.register(&format!("{prefix}.eps"), Tensor::scalar(0.0)),
                mlp: Mlp::build(store, rng, &format!("{prefix}.mlp"), d_in, d_out, d_out),
            },
            Backbone::Gcn => GnnLayer::Gcn {
                w: store.register_uniform(&format!("{prefix}.w"), d_in, d_out, d_in, rng),
            },
        }
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        batch: &Batch,
        h: NodeId,
    ) -> Result<NodeId> {
        match self {
            GnnLayer::Gin { eps, mlp } => {
                let agg = tape.sparse_mm(batch.sum_adj.clone(), batch.n_nodes, h)?;
                let eps_node = tape.param(store, *eps);
                let scaled = tape.scale_by_scalar(h, eps_node)?;
                let self_term = tape.add(h, scaled)?;
                let pre = tape.add(self_term, agg)?;
                mlp.forward(tape, store, pre)
            }
            GnnLayer::Gcn { w } => {
                let smoothed = tape.sparse_mm(batch.gcn_adj.clone(), batch.n_nodes, h)?;
                let wn = tape.param(store, *w);
                let hw = tape.matmul(smoothed, wn)?;
                Ok(tape.relu(hw))
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct GnnStack {
    pub layers: Vec<GnnLayer>,
}

impl GnnStack {
    pub fn build(
        store: &mut ParamStore,
        rng: &mut Rng,
        prefix: &str,
        backbone: Backbone,
        d_in: usize,
        d: usize,
        n_layers: usize,
    ) -> Self {
        let layers = (0..n_layers)
            .map(|i| {
                let din = if i == 0 { d_in } else { d };
                GnnLayer::build(store, rng, &format!("{prefix}.layer{i}"), backbone, din, d)
            })
            .collect();
        GnnStack { layers }
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        batch: &Batch,
        x: NodeId,
    ) -> Result<NodeId> {
        let mut h = x;
        for layer in &self.layers {
            h = layer.forward(tape, store, batch, h)?;
        }
        Ok(h)
    }
}
