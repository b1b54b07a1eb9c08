use serde::{Deserialize, Serialize};

use crate::diffcore::Rng;

use super::{DataError, Result};

/// Motif shapes; the label of a generated graph is the motif index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MotifKind {
    Cycle = 0,
    House = 1,
    Crane = 2,
}

/// Base (non-rationale) shapes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaseKind {
    Tree = 0,
    Ladder = 1,
    Wheel = 2,
}

impl MotifKind {
    pub fn from_index(i: usize) -> Self {
        match i {
            0 => MotifKind::Cycle,
            1 => MotifKind::House,
            _ => MotifKind::Crane,
        }
    }
}

impl BaseKind {
    pub fn from_index(i: usize) -> Self {
        match i {
            0 => BaseKind::Tree,
            1 => BaseKind::Ladder,
            _ => BaseKind::Wheel,
        }
    }
}

/// Bare topology fragment; features and labels attach later.
#[derive(Clone, Debug)]
pub struct Fragment {
    pub n_nodes: usize,
    pub edges: Vec<(usize, usize)>,
}

/// Canonical motif fragments:
/// Cycle = 6-node ring; House = square 0-1-2-3-0 plus apex 4 joined to 2
/// and 3; Crane = square 0-1-2-3-0 with pendant chains 2-4-5 and 3-6-7.
pub fn build_motif(kind: MotifKind) -> Fragment {
    match kind {
        MotifKind::Cycle => Fragment {
            n_nodes: 6,
            edges: vec![(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0)],
        },
        MotifKind::House => Fragment {
            n_nodes: 5,
            edges: vec![(0, 1), (1, 2), (2, 3), (3, 0), (2, 4), (3, 4)],
        },
        MotifKind::Crane => Fragment {
            n_nodes: 8,
            edges: vec![(0, 1), (1, 2), (2, 3), (3, 0), (2, 4), (4, 5), (3, 6), (6, 7)],
        },
    }
}

/// Base constructions: random recursive tree, 2 x ceil(size/2) ladder, or
/// a wheel (hub joined to every node of a (size-1)-cycle).
pub fn build_base(kind: BaseKind, size: usize, rng: &mut Rng) -> Result<Fragment> {
    if size < 4 {
        return Err(DataError::Parameter(format!("base size {size} < 4")));
    }
    Ok(match kind {
        BaseKind::Tree => {
            let mut edges = Vec::with_capacity(size - 1);
            for i in 1..size {
                edges.push((rng.below(i), i));
            }
            Fragment { n_nodes: size, edges }
        }
        BaseKind::Ladder => {
            let k = size.div_ceil(2);
            let n = 2 * k;
            let mut edges = Vec::new();
            for i in 0..k - 1 {
                edges.push((i, i + 1)); // left rail
                edges.push((k + i, k + i + 1)); // right rail
            }
            for i in 0..k {
                edges.push((i, k + i)); // rung
            }
            Fragment { n_nodes: n, edges }
        }
        BaseKind::Wheel => {
            let rim = size - 1;
            let mut edges = Vec::new();
            for i in 0..rim {
                edges.push((1 + i, 1 + (i + 1) % rim));
                edges.push((0, 1 + i));
            }
            Fragment { n_nodes: size, edges }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn degree_sequence(f: &Fragment) -> Vec<usize> {
        let mut deg = vec![0usize; f.n_nodes];
        for &(u, v) in &f.edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg.sort_unstable();
        deg
    }

    #[test]
    fn cycle_is_a_ring() {
        let f = build_motif(MotifKind::Cycle);
        assert_eq!(f.n_nodes, 6);
        assert_eq!(f.edges.len(), 6);
        assert!(degree_sequence(&f).iter().all(|&d| d == 2));
    }

    #[test]
    fn house_degree_sequence() {
        let f = build_motif(MotifKind::House);
        assert_eq!(f.n_nodes, 5);
        assert_eq!(f.edges.len(), 6);
        assert_eq!(degree_sequence(&f), vec![2, 2, 2, 3, 3]);
    }

    #[test]
    fn crane_shape() {
        let f = build_motif(MotifKind::Crane);
        assert_eq!(f.n_nodes, 8);
        assert_eq!(f.edges.len(), 8);
        let pendant = degree_sequence(&f).iter().filter(|&&d| d == 1).count();
        assert_eq!(pendant, 2);
    }

    #[test]
    fn tree_is_acyclic_and_connected() {
        let mut rng = Rng::stream(3, "test");
        for size in [4, 10, 25] {
            let f = build_base(BaseKind::Tree, size, &mut rng).unwrap();
            assert_eq!(f.edges.len(), size - 1);
        }
    }

    #[test]
    fn wheel_degrees() {
        let mut rng = Rng::stream(3, "test");
        let f = build_base(BaseKind::Wheel, 7, &mut rng).unwrap();
        let deg = degree_sequence(&f);
        assert_eq!(deg, vec![3, 3, 3, 3, 3, 3, 6]);
    }

    #[test]
    fn ladder_edge_count() {
        let mut rng = Rng::stream(3, "test");
        let f = build_base(BaseKind::Ladder, 8, &mut rng).unwrap();
        assert_eq!(f.n_nodes, 8);
        assert_eq!(f.edges.len(), 10); // 3k - 2 for 2 x k
    }

    #[test]
    fn small_base_rejected() {
        let mut rng = Rng::stream(3, "test");
        assert!(build_base(BaseKind::Tree, 3, &mut rng).is_err());
    }
}
