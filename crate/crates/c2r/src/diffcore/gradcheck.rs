use super::params::ParamStore;
use super::tape::{NodeId, Tape};
use super::tensor::Tensor;
use super::Result;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub n_checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-6);
    (analytic - numeric).abs() / denom
}

/// Compare the analytic gradient of a scalar-valued tensor function at `x`
/// against central finite differences with step `h`.
pub fn gradient_check<F>(mut f: F, x: &Tensor, h: f64) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape, NodeId) -> Result<NodeId>,
{
    let mut tape = Tape::new();
    let leaf = tape.leaf(x.clone());
    let loss = f(&mut tape, leaf)?;
    tape.backward(loss)?;
    let analytic = tape.grad(leaf).to_vec();

    let mut eval = |vals: &[f64]| -> Result<f64> {
        let mut t = Tape::new();
        let (r, c) = x.shape();
        let leaf = t.leaf(Tensor::new(r, c, vals.to_vec())?);
        let out = f(&mut t, leaf)?;
        Ok(t.value(out).item())
    };

    let mut max_rel = 0.0f64;
    let base = x.values().to_vec();
    for k in 0..base.len() {
        let mut plus = base.clone();
        plus[k] += h;
        let mut minus = base.clone();
        minus[k] -= h;
        let numeric = (eval(&plus)? - eval(&minus)?) / (2.0 * h);
        max_rel = max_rel.max(rel_err(analytic[k], numeric));
    }
    Ok(GradCheckReport { max_rel_err: max_rel, n_checked: base.len() })
}

/// Gradient check across every parameter in a store. The builder must be a
/// pure function of the store contents.
pub fn param_gradient_check<F>(
    store: &mut ParamStore,
    mut build_loss: F,
    h: f64,
) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape, &ParamStore) -> Result<NodeId>,
{
    store.zero_grads();
    let mut tape = Tape::new();
    let loss = build_loss(&mut tape, store)?;
    tape.backward(loss)?;
    tape.flush_param_grads(store);

    let ids: Vec<_> = store.ids().collect();
    let mut max_rel = 0.0f64;
    let mut n_checked = 0;
    for id in ids {
        let analytic = store.grad(id).to_vec();
        for k in 0..analytic.len() {
            let orig = store.value(id).values()[k];
            store.value_mut(id).values_mut()[k] = orig + h;
            let mut tp = Tape::new();
            let lp = build_loss(&mut tp, store)?;
            let plus = tp.value(lp).item();
            store.value_mut(id).values_mut()[k] = orig - h;
            let mut tm = Tape::new();
            let lm = build_loss(&mut tm, store)?;
            let minus = tm.value(lm).item();
            store.value_mut(id).values_mut()[k] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            max_rel = max_rel.max(rel_err(analytic[k], numeric));
            n_checked += 1;
        }
    }
    Ok(GradCheckReport { max_rel_err: max_rel, n_checked })
}
