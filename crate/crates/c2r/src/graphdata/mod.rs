//! Graph data model, the Spurious-Motif benchmark generator, and the
//! JSON-lines dataset format.

pub mod generate;
pub mod io;
pub mod motif;

pub use generate::{gen_spurious_motif, GenSpec};
pub use io::{read_dataset, write_dataset};
pub use motif::{build_base, build_motif, BaseKind, MotifKind};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Error, Debug)]
pub enum DataError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("invalid graph{}: {reason}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Validation { line: Option<usize>, reason: String },
    #[error("malformed line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DataError>;

/// Undirected graph with per-node features, a class label, and optional
/// ground-truth rationale mask / base-type hint from the generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Graph {
    pub n_nodes: usize,
    pub edges: Vec<(usize, usize)>,
    /// n_nodes x d_in feature rows
    pub features: Vec<Vec<f64>>,
    pub label: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale_mask: Option<Vec<bool>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env_hint: Option<usize>,
}

impl Graph {
    pub fn validate(&self) -> Result<()> {
        self.validate_at(None)
    }

    pub fn validate_at(&self, line: Option<usize>) -> Result<()> {
        let fail = |reason: String| Err(DataError::Validation { line, reason });
        let mut seen = std::collections::HashSet::new();
        for &(u, v) in &self.edges {
            if u >= self.n_nodes || v >= self.n_nodes {
                return fail(format!("edge ({u},{v}) out of range for {} nodes", self.n_nodes));
            }
            if u == v {
                return fail(format!("self-loop edge ({u},{v})"));
            }
            let key = (u.min(v), u.max(v));
            if !seen.insert(key) {
                return fail(format!("duplicate undirected edge ({u},{v})"));
            }
        }
        if self.features.len() != self.n_nodes {
            return fail(format!(
                "{} feature rows for {} nodes",
                self.features.len(),
                self.n_nodes
            ));
        }
        let d = self.features.first().map_or(0, |f| f.len());
        if self.features.iter().any(|f| f.len() != d) {
            return fail("ragged feature rows".into());
        }
        if let Some(mask) = &self.rationale_mask {
            if mask.len() != self.n_nodes {
                return fail(format!("mask length {} for {} nodes", mask.len(), self.n_nodes));
            }
        }
        if self.n_nodes > 0 && !self.is_connected() {
            return fail("graph is not connected".into());
        }
        Ok(())
    }

    pub fn is_connected(&self) -> bool {
        if self.n_nodes == 0 {
            return true;
        }
        let mut adj = vec![Vec::new(); self.n_nodes];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        let mut seen = vec![false; self.n_nodes];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count == self.n_nodes
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.n_nodes];
        for &(u, v) in &self.edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg
    }

    pub fn feature_dim(&self) -> usize {
        self.features.first().map_or(0, |f| f.len())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub graphs: Vec<Graph>,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<GenSpec>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }
}
