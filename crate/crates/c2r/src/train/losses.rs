use crate::diffcore::{DiffError, NodeId, Result, Tape, Tensor};

/// InfoNCE with in-batch negatives over cosine similarity:
/// rows are L2-normalized, s = A_norm B_norm^T / tau, and the loss is the
/// mean cross entropy of each row against its own index. Minimizing it
/// maximizes the MI lower bound I >= log n - loss.
pub fn infonce(tape: &mut Tape, anchors: NodeId, positives: NodeId, tau_nce: f64) -> Result<NodeId> {
    let n = tape.value(anchors).rows();
    if n < 2 {
        return Err(DiffError::Contract(format!(
            "infonce needs at least 2 rows for in-batch negatives, got {n}"
        )));
    }
    let a = tape.l2_normalize_rows(anchors);
    let p = tape.l2_normalize_rows(positives);
    let sim = tape.matmul_nt(a, p)?;
    let scaled = tape.affine(sim, 1.0 / tau_nce, 0.0);
    let diag: Vec<usize> = (0..n).collect();
    let ce = tape.cross_entropy_with_logits(scaled, &diag)?;
    Ok(tape.mean_all(ce))
}

/// Mean squared error between representations.
pub fn mse_align(tape: &mut Tape, a: NodeId, b: NodeId) -> Result<NodeId> {
    let diff = tape.sub(a, b)?;
    let sq = tape.hadamard(diff, diff)?;
    Ok(tape.mean_all(sq))
}

/// KL divergence between softened per-row distributions softmax(target/T)
/// and softmax(source/T); the target side is a constant.
pub fn kl_align(tape: &mut Tape, source: NodeId, target: &Tensor, temp: f64) -> Result<NodeId> {
    let (r, c) = target.shape();
    // Softened target distribution and its log, computed outside the tape.
    let mut p = vec![0.0; r * c];
    let mut log_p = vec![0.0; r * c];
    for i in 0..r {
        let row = target.row(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for j in 0..c {
            let e = ((row[j] - max) / temp).exp();
            p[i * c + j] = e;
            sum += e;
        }
        for j in 0..c {
            p[i * c + j] /= sum;
            log_p[i * c + j] = p[i * c + j].max(1e-300).ln();
        }
    }
    let p_node = tape.input(Tensor::new(r, c, p)?);
    let log_p_node = tape.input(Tensor::new(r, c, log_p)?);
    let scaled = tape.affine(source, 1.0 / temp, 0.0);
    let q = tape.row_softmax(scaled);
    let q_guarded = tape.affine(q, 1.0, 1e-12);
    let log_q = tape.log(q_guarded)?;
    let diff = tape.sub(log_p_node, log_q)?;
    let terms = tape.hadamard(p_node, diff)?;
    let total = tape.sum_all(terms);
    Ok(tape.affine(total, 1.0 / r as f64, 0.0))
}

/// Sparsity penalty: per graph the mean rationale probability, then the
/// batch mean of |s_g - alpha|.
pub fn sparsity(
    tape: &mut Tape,
    mask_probs: NodeId,
    segments: &[usize],
    n_graphs: usize,
    alpha: f64,
) -> Result<NodeId> {
    let per_graph = tape.segment_mean(mask_probs, segments, n_graphs)?;
    let deviation = tape.affine(per_graph, 1.0, -alpha);
    let abs = tape.abs(deviation);
    Ok(tape.mean_all(abs))
}
