use std::rc::Rc;

use crate::diffcore::{SparseEntries, Tensor};
use crate::graphdata::Graph;

/// Disjoint union of graphs with segment ids, plus precomputed sparse
/// aggregation matrices for the message-passing layers.
pub struct Batch {
    pub features: Tensor,
    pub segments: Vec<usize>,
    pub n_graphs: usize,
    pub n_nodes: usize,
    pub labels: Vec<usize>,
    /// indices of these samples in the source dataset
    pub sample_indices: Vec<usize>,
    /// node ranges per graph in batch order
    pub node_ranges: Vec<(usize, usize)>,
    /// plain neighbor-sum adjacency (both directions, weight 1)
    pub sum_adj: SparseEntries,
    /// symmetric-normalized adjacency with self-loops
    pub gcn_adj: SparseEntries,
}

impl Batch {
    pub fn new(graphs: &[&Graph], sample_indices: &[usize]) -> Self {
        let n_nodes: usize = graphs.iter().map(|g| g.n_nodes).sum();
        let d_in = graphs.first().map_or(0, |g| g.feature_dim());
        let mut feat = Vec::with_capacity(n_nodes * d_in);
        let mut segments = Vec::with_capacity(n_nodes);
        let mut labels = Vec::with_capacity(graphs.len());
        let mut node_ranges = Vec::with_capacity(graphs.len());
        let mut sum_adj = Vec::new();
        let mut degrees = vec![0usize; n_nodes];
        let mut offset = 0;
        for (gi, g) in graphs.iter().enumerate() {
            node_ranges.push((offset, offset + g.n_nodes));
            for row in &g.features {
                feat.extend_from_slice(row);
            }
            segments.extend(std::iter::repeat(gi).take(g.n_nodes));
            labels.push(g.label);
            for &(u, v) in &g.edges {
                let (u, v) = (offset + u, offset + v);
                sum_adj.push((u, v, 1.0));
                sum_adj.push((v, u, 1.0));
                degrees[u] += 1;
                degrees[v] += 1;
            }
            offset += g.n_nodes;
        }
        // D~^{-1/2} (A + I) D~^{-1/2} with D~ = D + I
        let dt: Vec<f64> = degrees.iter().map(|&d| (d + 1) as f64).collect();
        let mut gcn_adj = Vec::with_capacity(sum_adj.len() + n_nodes);
        for v in 0..n_nodes {
            gcn_adj.push((v, v, 1.0 / dt[v]));
        }
        for &(u, v, _) in &sum_adj {
            gcn_adj.push((u, v, 1.0 / (dt[u] * dt[v]).sqrt()));
        }
        Batch {
            features: Tensor::new(n_nodes, d_in, feat).unwrap(),
            segments,
            n_graphs: graphs.len(),
            n_nodes,
            labels,
            sample_indices: sample_indices.to_vec(),
            node_ranges,
            sum_adj: Rc::new(sum_adj),
            gcn_adj: Rc::new(gcn_adj),
        }
    }

    pub fn from_dataset(graphs: &[Graph], indices: &[usize]) -> Self {
        let refs: Vec<&Graph> = indices.iter().map(|&i| &graphs[i]).collect();
        Batch::new(&refs, indices)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_node_graph() -> Graph {
        Graph {
            n_nodes: 2,
            edges: vec![(0, 1)],
            features: vec![vec![1.0], vec![2.0]],
            label: 0,
            rationale_mask: None,
            env_hint: None,
        }
    }

    #[test]
    fn gcn_normalization_for_single_edge() {
        let g = two_node_graph();
        let batch = Batch::new(&[&g], &[0]);
        // A_hat = [[1/2, 1/2], [1/2, 1/2]]
        let mut dense = [[0.0; 2]; 2];
        for &(i, j, w) in batch.gcn_adj.iter() {
            dense[i][j] += w;
        }
        for i in 0..2 {
            for j in 0..2 {
                assert!((dense[i][j] - 0.5).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn isolated_node_keeps_self_loop_only() {
        let g = Graph {
            n_nodes: 1,
            edges: vec![],
            features: vec![vec![0.5]],
            label: 1,
            rationale_mask: None,
            env_hint: None,
        };
        let batch = Batch::new(&[&g], &[0]);
        assert_eq!(batch.gcn_adj.len(), 1);
        assert_eq!(*batch.gcn_adj.first().unwrap(), (0, 0, 1.0));
    }
}
