use std::rc::Rc;

use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;
use super::{DiffError, Result};

/// Handle into a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

/// Sparse matrix entries (row, col, weight) applied as `out = S * rhs`.
pub type SparseEntries = Rc<Vec<(usize, usize, f64)>>;

enum Op {
    Leaf { param: Option<ParamId> },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Hadamard(NodeId, NodeId),
    MatMul(NodeId, NodeId),
    /// A * B^T
    MatMulNT(NodeId, NodeId),
    Relu(NodeId),
    Log(NodeId),
    Exp(NodeId),
    /// a * x + b elementwise
    Affine(NodeId, f64),
    Abs(NodeId),
    RowSoftmax(NodeId),
    ConcatRows(NodeId, NodeId),
    ConcatCols(NodeId, NodeId),
    GatherRows(NodeId, Rc<Vec<usize>>),
    SegmentMean(NodeId, Rc<Vec<usize>>),
    L2NormalizeRows(NodeId),
    CrossEntropy(NodeId, Rc<Vec<usize>>),
    SparseMm { entries: SparseEntries, rhs: NodeId },
    /// rows of x scaled by an n x 1 column
    ScaleRows(NodeId, NodeId),
    /// x * s with s a 1 x 1 node
    ScaleByScalar(NodeId, NodeId),
    /// x + b with b a 1 x d row broadcast over rows
    AddRowVec(NodeId, NodeId),
    SliceCol(NodeId, usize),
    MeanAll(NodeId),
    SumAll(NodeId),
    Detach,
}

struct Node {
    value: Tensor,
    grad: Vec<f64>,
    requires_grad: bool,
    op: Op,
}

/// Eagerly evaluated computation record with reverse-mode gradients.
/// Values are computed at construction; `backward` accumulates (+=) grads
/// into every reachable requires_grad node.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

const NORM_EPS: f64 = 1e-12;

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    fn push(&mut self, value: Tensor, requires_grad: bool, op: Op) -> NodeId {
        let grad = vec![0.0; value.len()];
        self.nodes.push(Node { value, grad, requires_grad, op });
        NodeId(self.nodes.len() - 1)
    }

    fn rg(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn grad(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].grad
    }

    /// Constant input; gradients do not flow into it.
    pub fn input(&mut self, t: Tensor) -> NodeId {
        self.push(t, false, Op::Leaf { param: None })
    }

    /// Trainable leaf not backed by a parameter store.
    pub fn leaf(&mut self, t: Tensor) -> NodeId {
        self.push(t, true, Op::Leaf { param: None })
    }

    /// Leaf backed by a stored parameter; backward grads are later flushed
    /// into the store with [`Tape::flush_param_grads`].
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> NodeId {
        self.push(store.value(id).clone(), true, Op::Leaf { param: Some(id) })
    }

    fn same_shape(a: &Tensor, b: &Tensor, op: &'static str) -> Result<()> {
        if a.shape() != b.shape() {
            return Err(DiffError::Shape {
                op,
                detail: format!("{:?} vs {:?}", a.shape(), b.shape()),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        Self::same_shape(self.value(a), self.value(b), "add")?;
        let (r, c) = self.value(a).shape();
        let values = self
            .value(a)
            .values()
            .iter()
            .zip(self.value(b).values())
            .map(|(x, y)| x + y)
            .collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(r, c, values)?, rg, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        Self::same_shape(self.value(a), self.value(b), "sub")?;
        let (r, c) = self.value(a).shape();
        let values = self
            .value(a)
            .values()
            .iter()
            .zip(self.value(b).values())
            .map(|(x, y)| x - y)
            .collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(r, c, values)?, rg, Op::Sub(a, b)))
    }

    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        Self::same_shape(self.value(a), self.value(b), "hadamard")?;
        let (r, c) = self.value(a).shape();
        let values = self
            .value(a)
            .values()
            .iter()
            .zip(self.value(b).values())
            .map(|(x, y)| x * y)
            .collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(r, c, values)?, rg, Op::Hadamard(a, b)))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (n, ka) = self.value(a).shape();
        let (kb, m) = self.value(b).shape();
        if ka != kb {
            return Err(DiffError::Shape {
                op: "matmul",
                detail: format!("{}x{} * {}x{}", n, ka, kb, m),
            });
        }
        let out = mat_mul(self.value(a), self.value(b));
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, rg, Op::MatMul(a, b)))
    }

    /// `a @ b^T` for row-major similarity matrices.
    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (n, ka) = self.value(a).shape();
        let (m, kb) = self.value(b).shape();
        if ka != kb {
            return Err(DiffError::Shape {
                op: "matmul_nt",
                detail: format!("{}x{} * ({}x{})^T", n, ka, m, kb),
            });
        }
        let out = mat_mul_nt(self.value(a), self.value(b));
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, rg, Op::MatMulNT(a, b)))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.value(a).shape();
        let values = self.value(a).values().iter().map(|&x| x.max(0.0)).collect();
        let rg = self.rg(a);
        self.push(Tensor::new(r, c, values).unwrap(), rg, Op::Relu(a))
    }

    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        let (r, c) = self.value(a).shape();
        let mut values = Vec::with_capacity(r * c);
        for &x in self.value(a).values() {
            if x <= 0.0 {
                return Err(DiffError::Domain(format!("log of non-positive entry {x}")));
            }
            values.push(x.ln());
        }
        let rg = self.rg(a);
        Ok(self.push(Tensor::new(r, c, values)?, rg, Op::Log(a)))
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.value(a).shape();
        let values = self.value(a).values().iter().map(|&x| x.exp()).collect();
        let rg = self.rg(a);
        self.push(Tensor::new(r, c, values).unwrap(), rg, Op::Exp(a))
    }

    /// `scale * x + shift` elementwise.
    pub fn affine(&mut self, a: NodeId, scale: f64, shift: f64) -> NodeId {
        let (r, c) = self.value(a).shape();
        let values = self.value(a).values().iter().map(|&x| scale * x + shift).collect();
        let rg = self.rg(a);
        self.push(Tensor::new(r, c, values).unwrap(), rg, Op::Affine(a, scale))
    }

    pub fn abs(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.value(a).shape();
        let values = self.value(a).values().iter().map(|&x| x.abs()).collect();
        let rg = self.rg(a);
        self.push(Tensor::new(r, c, values).unwrap(), rg, Op::Abs(a))
    }

    pub fn row_softmax(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.value(a).shape();
        let mut values = vec![0.0; r * c];
        for i in 0..r {
            let row = self.value(a).row(i);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for j in 0..c {
                let e = (row[j] - max).exp();
                values[i * c + j] = e;
                sum += e;
            }
            for j in 0..c {
                values[i * c + j] /= sum;
            }
        }
        let rg = self.rg(a);
        self.push(Tensor::new(r, c, values).unwrap(), rg, Op::RowSoftmax(a))
    }

    pub fn concat_rows(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ra, ca) = self.value(a).shape();
        let (rb, cb) = self.value(b).shape();
        if ca != cb {
            return Err(DiffError::Shape {
                op: "concat_rows",
                detail: format!("{ca} vs {cb} columns"),
            });
        }
        let mut values = self.value(a).values().to_vec();
        values.extend_from_slice(self.value(b).values());
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(ra + rb, ca, values)?, rg, Op::ConcatRows(a, b)))
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ra, ca) = self.value(a).shape();
        let (rb, cb) = self.value(b).shape();
        if ra != rb {
            return Err(DiffError::Shape {
                op: "concat_cols",
                detail: format!("{ra} vs {rb} rows"),
            });
        }
        let mut values = Vec::with_capacity(ra * (ca + cb));
        for i in 0..ra {
            values.extend_from_slice(self.value(a).row(i));
            values.extend_from_slice(self.value(b).row(i));
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(ra, ca + cb, values)?, rg, Op::ConcatCols(a, b)))
    }

    pub fn gather_rows(&mut self, a: NodeId, idx: &[usize]) -> Result<NodeId> {
        let (r, c) = self.value(a).shape();
        let mut values = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            if i >= r {
                return Err(DiffError::Shape {
                    op: "gather_rows",
                    detail: format!("row index {i} out of {r}"),
                });
            }
            values.extend_from_slice(self.value(a).row(i));
        }
        let rg = self.rg(a);
        let idx = Rc::new(idx.to_vec());
        Ok(self.push(Tensor::new(idx.len(), c, values)?, rg, Op::GatherRows(a, idx)))
    }

    pub fn segment_mean(
        &mut self,
        a: NodeId,
        segments: &[usize],
        n_segments: usize,
    ) -> Result<NodeId> {
        let (r, c) = self.value(a).shape();
        if segments.len() != r {
            return Err(DiffError::Shape {
                op: "segment_mean",
                detail: format!("{} segment ids for {} rows", segments.len(), r),
            });
        }
        if let Some(&bad) = segments.iter().find(|&&s| s >= n_segments) {
            return Err(DiffError::Shape {
                op: "segment_mean",
                detail: format!("segment id {bad} out of {n_segments}"),
            });
        }
        let mut sums = vec![0.0; n_segments * c];
        let mut counts = vec![0usize; n_segments];
        for (i, &s) in segments.iter().enumerate() {
            counts[s] += 1;
            let row = self.value(a).row(i);
            for j in 0..c {
                sums[s * c + j] += row[j];
            }
        }
        for (s, &count) in counts.iter().enumerate() {
            if count > 0 {
                for j in 0..c {
                    sums[s * c + j] /= count as f64;
                }
            }
        }
        let rg = self.rg(a);
        let segments = Rc::new(segments.to_vec());
        Ok(self.push(
            Tensor::new(n_segments, c, sums)?,
            rg,
            Op::SegmentMean(a, segments),
        ))
    }

    pub fn l2_normalize_rows(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.value(a).shape();
        let mut values = vec![0.0; r * c];
        for i in 0..r {
            let row = self.value(a).row(i);
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt().max(NORM_EPS);
            for j in 0..c {
                values[i * c + j] = row[j] / norm;
            }
        }
        let rg = self.rg(a);
        self.push(Tensor::new(r, c, values).unwrap(), rg, Op::L2NormalizeRows(a))
    }

    /// Per-row cross entropy against integer labels; returns an n x 1 column.
    pub fn cross_entropy_with_logits(&mut self, logits: NodeId, labels: &[usize]) -> Result<NodeId> {
        let (r, c) = self.value(logits).shape();
        if labels.len() != r {
            return Err(DiffError::Shape {
                op: "cross_entropy_with_logits",
                detail: format!("{} labels for {} rows", labels.len(), r),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
            return Err(DiffError::Shape {
                op: "cross_entropy_with_logits",
                detail: format!("label {bad} out of {c} classes"),
            });
        }
        let mut values = Vec::with_capacity(r);
        for i in 0..r {
            let row = self.value(logits).row(i);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
            values.push(lse - row[labels[i]]);
        }
        let rg = self.rg(logits);
        let labels = Rc::new(labels.to_vec());
        Ok(self.push(Tensor::column(values), rg, Op::CrossEntropy(logits, labels)))
    }

    /// `out = S * rhs` for a constant sparse matrix given as (row, col, w)
    /// entries; used for neighborhood aggregation.
    pub fn sparse_mm(&mut self, entries: SparseEntries, out_rows: usize, rhs: NodeId) -> Result<NodeId> {
        let (r, c) = self.value(rhs).shape();
        let mut values = vec![0.0; out_rows * c];
        for &(i, j, w) in entries.iter() {
            if i >= out_rows || j >= r {
                return Err(DiffError::Shape {
                    op: "sparse_mm",
                    detail: format!("entry ({i},{j}) out of {out_rows}x{r}"),
                });
            }
            let row = self.value(rhs).row(j);
            for jj in 0..c {
                values[i * c + jj] += w * row[jj];
            }
        }
        let rg = self.rg(rhs);
        Ok(self.push(
            Tensor::new(out_rows, c, values)?,
            rg,
            Op::SparseMm { entries, rhs },
        ))
    }

    /// Scale row i of `a` by `s[i]` where `s` is n x 1.
    pub fn scale_rows(&mut self, a: NodeId, s: NodeId) -> Result<NodeId> {
        let (r, c) = self.value(a).shape();
        let (rs, cs) = self.value(s).shape();
        if rs != r || cs != 1 {
            return Err(DiffError::Shape {
                op: "scale_rows",
                detail: format!("scale {}x{} for {}x{}", rs, cs, r, c),
            });
        }
        let mut values = vec![0.0; r * c];
        for i in 0..r {
            let si = self.value(s).at(i, 0);
            let row = self.value(a).row(i);
            for j in 0..c {
                values[i * c + j] = row[j] * si;
            }
        }
        let rg = self.rg(a) || self.rg(s);
        Ok(self.push(Tensor::new(r, c, values)?, rg, Op::ScaleRows(a, s)))
    }

    pub fn scale_by_scalar(&mut self, a: NodeId, s: NodeId) -> Result<NodeId> {
        if !self.value(s).is_scalar() {
            return Err(DiffError::Shape {
                op: "scale_by_scalar",
                detail: format!("scale has shape {:?}", self.value(s).shape()),
            });
        }
        let (r, c) = self.value(a).shape();
        let sv = self.value(s).item();
        let values = self.value(a).values().iter().map(|&x| x * sv).collect();
        let rg = self.rg(a) || self.rg(s);
        Ok(self.push(Tensor::new(r, c, values)?, rg, Op::ScaleByScalar(a, s)))
    }

    /// Broadcast-add a 1 x d row vector to every row of `a`.
    pub fn add_row_vec(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (r, c) = self.value(a).shape();
        let (rb, cb) = self.value(b).shape();
        if rb != 1 || cb != c {
            return Err(DiffError::Shape {
                op: "add_row_vec",
                detail: format!("bias {}x{} for {}x{}", rb, cb, r, c),
            });
        }
        let mut values = vec![0.0; r * c];
        for i in 0..r {
            let row = self.value(a).row(i);
            let bias = self.value(b).row(0);
            for j in 0..c {
                values[i * c + j] = row[j] + bias[j];
            }
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(r, c, values)?, rg, Op::AddRowVec(a, b)))
    }

    pub fn slice_col(&mut self, a: NodeId, col: usize) -> Result<NodeId> {
        let (r, c) = self.value(a).shape();
        if col >= c {
            return Err(DiffError::Shape {
                op: "slice_col",
                detail: format!("column {col} out of {c}"),
            });
        }
        let values = (0..r).map(|i| self.value(a).at(i, col)).collect();
        let rg = self.rg(a);
        Ok(self.push(Tensor::column(values), rg, Op::SliceCol(a, col)))
    }

    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        let n = self.value(a).len() as f64;
        let v = self.value(a).values().iter().sum::<f64>() / n;
        let rg = self.rg(a);
        self.push(Tensor::scalar(v), rg, Op::MeanAll(a))
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).values().iter().sum::<f64>();
        let rg = self.rg(a);
        self.push(Tensor::scalar(v), rg, Op::SumAll(a))
    }

    /// Value passthrough with gradient flow blocked.
    pub fn detach(&mut self, a: NodeId) -> NodeId {
        let t = self.value(a).clone();
        self.push(t, false, Op::Detach)
    }

    /// Reverse-mode sweep from a scalar loss; accumulates (+=) into node
    /// grads, so repeated calls without a fresh tape add up.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if !self.value(loss).is_scalar() {
            return Err(DiffError::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        // Local adjoints for this sweep; merged into node grads at the end.
        let mut adj: Vec<Vec<f64>> = self.nodes.iter().map(|n| vec![0.0; n.value.len()]).collect();
        adj[loss.0][0] = 1.0;
        for i in (0..=loss.0).rev() {
            // Zero adjoints contribute nothing; skipping them is exact.
            if adj[i].iter().all(|&g| g == 0.0) {
                continue;
            }
            let g = std::mem::take(&mut adj[i]);
            self.propagate(i, &g, &mut adj)?;
            adj[i] = g;
        }
        for (node, a) in self.nodes.iter_mut().zip(adj) {
            if node.requires_grad {
                for (dst, src) in node.grad.iter_mut().zip(a) {
                    *dst += src;
                }
            }
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], adj: &mut [Vec<f64>]) -> Result<()> {
        let node = &self.nodes[i];
        let val = |id: NodeId| &self.nodes[id.0].value;
        match &node.op {
            Op::Leaf { .. } => {}
            Op::Add(a, b) => {
                if self.rg(*a) {
                    axpy(&mut adj[a.0], g, 1.0);
                }
                if self.rg(*b) {
                    axpy(&mut adj[b.0], g, 1.0);
                }
            }
            Op::Sub(a, b) => {
                if self.rg(*a) {
                    axpy(&mut adj[a.0], g, 1.0);
                }
                if self.rg(*b) {
                    axpy(&mut adj[b.0], g, -1.0);
                }
            }
            Op::Hadamard(a, b) => {
                if self.rg(*a) {
                    for (k, dst) in adj[a.0].iter_mut().enumerate() {
                        *dst += g[k] * val(*b).values()[k];
                    }
                }
                if self.rg(*b) {
                    for (k, dst) in adj[b.0].iter_mut().enumerate() {
                        *dst += g[k] * val(*a).values()[k];
                    }
                }
            }
            Op::MatMul(a, b) => {
                let (n, _) = val(*a).shape();
                let (k, m) = val(*b).shape();
                let gt = Tensor::new(n, m, g.to_vec())?;
                if self.rg(*a) {
                    // dA = G * B^T
                    let da = mat_mul_nt(&gt, val(*b));
                    axpy(&mut adj[a.0], da.values(), 1.0);
                }
                if self.rg(*b) {
                    // dB = A^T * G
                    let db = mat_mul_tn(val(*a), &gt);
                    debug_assert_eq!(db.shape(), (k, m));
                    axpy(&mut adj[b.0], db.values(), 1.0);
                }
            }
            Op::MatMulNT(a, b) => {
                let (n, _) = val(*a).shape();
                let (m, _) = val(*b).shape();
                let gt = Tensor::new(n, m, g.to_vec())?;
                if self.rg(*a) {
                    // dA = G * B
                    let da = mat_mul(&gt, val(*b));
                    axpy(&mut adj[a.0], da.values(), 1.0);
                }
                if self.rg(*b) {
                    // dB = G^T * A
                    let db = mat_mul_tn(&gt, val(*a));
                    axpy(&mut adj[b.0], db.values(), 1.0);
                }
            }
            Op::Relu(a) => {
                if self.rg(*a) {
                    for (k, dst) in adj[a.0].iter_mut().enumerate() {
                        if val(*a).values()[k] > 0.0 {
                            *dst += g[k];
                        }
                    }
                }
            }
            Op::Log(a) => {
                if self.rg(*a) {
                    for (k, dst) in adj[a.0].iter_mut().enumerate() {
                        *dst += g[k] / val(*a).values()[k];
                    }
                }
            }
            Op::Exp(a) => {
                if self.rg(*a) {
                    for (k, dst) in adj[a.0].iter_mut().enumerate() {
                        *dst += g[k] * node.value.values()[k];
                    }
                }
            }
            Op::Affine(a, scale) => {
                if self.rg(*a) {
                    axpy(&mut adj[a.0], g, *scale);
                }
            }
            Op::Abs(a) => {
                if self.rg(*a) {
                    for (k, dst) in adj[a.0].iter_mut().enumerate() {
                        let x = val(*a).values()[k];
                        *dst += g[k] * if x > 0.0 { 1.0 } else if x < 0.0 { -1.0 } else { 0.0 };
                    }
                }
            }
            Op::RowSoftmax(a) => {
                if self.rg(*a) {
                    let (r, c) = node.value.shape();
                    for i in 0..r {
                        let y = node.value.row(i);
                        let gr = &g[i * c..(i + 1) * c];
                        let dot: f64 = y.iter().zip(gr).map(|(yi, gi)| yi * gi).sum();
                        for j in 0..c {
                            adj[a.0][i * c + j] += y[j] * (gr[j] - dot);
                        }
                    }
                }
            }
            Op::ConcatRows(a, b) => {
                let na = val(*a).len();
                if self.rg(*a) {
                    axpy(&mut adj[a.0], &g[..na], 1.0);
                }
                if self.rg(*b) {
                    axpy(&mut adj[b.0], &g[na..], 1.0);
                }
            }
            Op::ConcatCols(a, b) => {
                let (r, ca) = val(*a).shape();
                let (_, cb) = val(*b).shape();
                for i in 0..r {
                    if self.rg(*a) {
                        for j in 0..ca {
                            adj[a.0][i * ca + j] += g[i * (ca + cb) + j];
                        }
                    }
                    if self.rg(*b) {
                        for j in 0..cb {
                            adj[b.0][i * cb + j] += g[i * (ca + cb) + ca + j];
                        }
                    }
                }
            }
            Op::GatherRows(a, idx) => {
                if self.rg(*a) {
                    let c = val(*a).cols();
                    for (out_i, &src) in idx.iter().enumerate() {
                        for j in 0..c {
                            adj[a.0][src * c + j] += g[out_i * c + j];
                        }
                    }
                }
            }
            Op::SegmentMean(a, segments) => {
                if self.rg(*a) {
                    let c = val(*a).cols();
                    let mut counts = vec![0usize; node.value.rows()];
                    for &s in segments.iter() {
                        counts[s] += 1;
                    }
                    for (i, &s) in segments.iter().enumerate() {
                        let inv = 1.0 / counts[s] as f64;
                        for j in 0..c {
                            adj[a.0][i * c + j] += g[s * c + j] * inv;
                        }
                    }
                }
            }
            Op::L2NormalizeRows(a) => {
                if self.rg(*a) {
                    let (r, c) = node.value.shape();
                    for i in 0..r {
                        let x = val(*a).row(i);
                        let y = node.value.row(i);
                        let gr = &g[i * c..(i + 1) * c];
                        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt().max(NORM_EPS);
                        let dot: f64 = y.iter().zip(gr).map(|(yi, gi)| yi * gi).sum();
                        for j in 0..c {
                            adj[a.0][i * c + j] += (gr[j] - y[j] * dot) / norm;
                        }
                    }
                }
            }
            Op::CrossEntropy(logits, labels) => {
                if self.rg(*logits) {
                    let (r, c) = val(*logits).shape();
                    for i in 0..r {
                        let row = val(*logits).row(i);
                        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let mut probs: Vec<f64> = row.iter().map(|&x| (x - max).exp()).collect();
                        let sum: f64 = probs.iter().sum();
                        for p in &mut probs {
                            *p /= sum;
                        }
                        for j in 0..c {
                            let onehot = if j == labels[i] { 1.0 } else { 0.0 };
                            adj[logits.0][i * c + j] += g[i] * (probs[j] - onehot);
                        }
                    }
                }
            }
            Op::SparseMm { entries, rhs } => {
                if self.rg(*rhs) {
                    let c = val(*rhs).cols();
                    for &(i2, j2, w) in entries.iter() {
                        for jj in 0..c {
                            adj[rhs.0][j2 * c + jj] += w * g[i2 * c + jj];
                        }
                    }
                }
            }
            Op::ScaleRows(a, s) => {
                let (r, c) = val(*a).shape();
                for i in 0..r {
                    let si = val(*s).at(i, 0);
                    for j in 0..c {
                        let gk = g[i * c + j];
                        if self.rg(*a) {
                            adj[a.0][i * c + j] += gk * si;
                        }
                        if self.rg(*s) {
                            adj[s.0][i] += gk * val(*a).at(i, j);
                        }
                    }
                }
            }
            Op::ScaleByScalar(a, s) => {
                let sv = val(*s).item();
                if self.rg(*a) {
                    axpy(&mut adj[a.0], g, sv);
                }
                if self.rg(*s) {
                    let dot: f64 =
                        g.iter().zip(val(*a).values()).map(|(gi, xi)| gi * xi).sum();
                    adj[s.0][0] += dot;
                }
            }
            Op::AddRowVec(a, b) => {
                let (r, c) = val(*a).shape();
                if self.rg(*a) {
                    axpy(&mut adj[a.0], g, 1.0);
                }
                if self.rg(*b) {
                    for i in 0..r {
                        for j in 0..c {
                            adj[b.0][j] += g[i * c + j];
                        }
                    }
                }
            }
            Op::SliceCol(a, col) => {
                if self.rg(*a) {
                    let c = val(*a).cols();
                    for i in 0..node.value.rows() {
                        adj[a.0][i * c + col] += g[i];
                    }
                }
            }
            Op::MeanAll(a) => {
                if self.rg(*a) {
                    let inv = 1.0 / val(*a).len() as f64;
                    for dst in adj[a.0].iter_mut() {
                        *dst += g[0] * inv;
                    }
                }
            }
            Op::SumAll(a) => {
                if self.rg(*a) {
                    for dst in adj[a.0].iter_mut() {
                        *dst += g[0];
                    }
                }
            }
            Op::Detach => {}
        }
        Ok(())
    }

    /// Add leaf grads into their backing parameters (+= semantics).
    pub fn flush_param_grads(&self, store: &mut ParamStore) {
        for node in &self.nodes {
            if let Op::Leaf { param: Some(id) } = node.op {
                let grad = store.grad_mut(id);
                for (dst, src) in grad.iter_mut().zip(&node.grad) {
                    *dst += src;
                }
            }
        }
    }
}

fn axpy(dst: &mut [f64], src: &[f64], scale: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += scale * s;
    }
}

fn mat_mul(a: &Tensor, b: &Tensor) -> Tensor {
    let (n, k) = a.shape();
    let (_, m) = b.shape();
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let arow = a.row(i);
        let orow = &mut out[i * m..(i + 1) * m];
        for (kk, &av) in arow.iter().enumerate().take(k) {
            if av == 0.0 {
                continue;
            }
            let brow = b.row(kk);
            for j in 0..m {
                orow[j] += av * brow[j];
            }
        }
    }
    Tensor::new(n, m, out).unwrap()
}

/// a * b^T
fn mat_mul_nt(a: &Tensor, b: &Tensor) -> Tensor {
    let (n, k) = a.shape();
    let (m, _) = b.shape();
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let arow = a.row(i);
        for j in 0..m {
            let brow = b.row(j);
            let mut acc = 0.0;
            for kk in 0..k {
                acc += arow[kk] * brow[kk];
            }
            out[i * m + j] = acc;
        }
    }
    Tensor::new(n, m, out).unwrap()
}

/// a^T * b
fn mat_mul_tn(a: &Tensor, b: &Tensor) -> Tensor {
    let (n, k) = a.shape();
    let (_, m) = b.shape();
    let mut out = vec![0.0; k * m];
    for i in 0..n {
        let arow = a.row(i);
        let brow = b.row(i);
        for (kk, &av) in arow.iter().enumerate().take(k) {
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[kk * m..(kk + 1) * m];
            for j in 0..m {
                orow[j] += av * brow[j];
            }
        }
    }
    Tensor::new(k, m, out).unwrap()
}
