use serde::{Deserialize, Serialize};

use crate::diffcore::Rng;

use super::motif::{build_base, build_motif, BaseKind, MotifKind};
use super::{DataError, Dataset, Graph, Result, Split};

/// Generation parameters recorded alongside every dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub n_graphs: usize,
    pub bias: f64,
    pub d_in: usize,
    pub base_size_min: usize,
    pub base_size_max: usize,
    pub seed: u64,
}

/// Spurious-Motif generator. Motif label R is uniform over {0,1,2}; the
/// base type matches R with probability `bias` and each other type with
/// probability (1-bias)/2. Motif and base are joined by a single edge.
pub fn gen_spurious_motif(spec: &GenSpec, split: Split) -> Result<Dataset> {
    if !(1.0 / 3.0..1.0).contains(&spec.bias) && (spec.bias - 1.0 / 3.0).abs() > 1e-12 {
        return Err(DataError::Parameter(format!("bias {} outside [1/3, 1)", spec.bias)));
    }
    if spec.base_size_min < 4 || spec.base_size_max < spec.base_size_min {
        return Err(DataError::Parameter(format!(
            "invalid base size range [{}, {}]",
            spec.base_size_min, spec.base_size_max
        )));
    }
    let mut graphs = Vec::with_capacity(spec.n_graphs);
    for i in 0..spec.n_graphs {
        let mut rng = Rng::substream(spec.seed, "data-gen", i as u64);
        graphs.push(gen_one(spec, &mut rng)?);
    }
    Ok(Dataset { graphs, split, spec: Some(spec.clone()) })
}

fn gen_one(spec: &GenSpec, rng: &mut Rng) -> Result<Graph> {
    let r = rng.below(3);
    let u = rng.uniform();
    let b = if u < spec.bias {
        r
    } else if u < spec.bias + (1.0 - spec.bias) / 2.0 {
        (r + 1) % 3
    } else {
        (r + 2) % 3
    };
    let motif = build_motif(MotifKind::from_index(r));
    let size = spec.base_size_min + rng.below(spec.base_size_max - spec.base_size_min + 1);
    let base = build_base(BaseKind::from_index(b), size, rng)?;

    let offset = motif.n_nodes;
    let n_nodes = offset + base.n_nodes;
    let mut edges = motif.edges.clone();
    edges.extend(base.edges.iter().map(|&(x, y)| (offset + x, offset + y)));
    let join_motif = rng.below(motif.n_nodes);
    let join_base = offset + rng.below(base.n_nodes);
    edges.push((join_motif, join_base));

    let features = (0..n_nodes)
        .map(|_| (0..spec.d_in).map(|_| rng.range(-1.0, 1.0)).collect())
        .collect();
    let mask = (0..n_nodes).map(|v| v < offset).collect();

    let graph = Graph {
        n_nodes,
        edges,
        features,
        label: r,
        rationale_mask: Some(mask),
        env_hint: Some(b),
    };
    graph.validate()?;
    Ok(graph)
}
