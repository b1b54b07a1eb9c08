//! Dense-tensor computation with reverse-mode gradients, Adam, and seeded
//! random streams: the numeric substrate for the rest of the crate.

pub mod adam;
pub mod gradcheck;
pub mod params;
pub mod rng;
pub mod tape;
pub mod tensor;

pub use adam::Adam;
pub use gradcheck::{gradient_check, param_gradient_check, GradCheckReport};
pub use params::{ParamId, ParamStore};
pub use rng::Rng;
pub use tape::{NodeId, SparseEntries, Tape};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Error, Debug)]
pub enum DiffError {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("NaN gradient in parameter {param}")]
    NanGrad { param: String },
}

pub type Result<T> = std::result::Result<T, DiffError>;

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rng::Rng;

    #[test]
    fn matmul_identity() {
        let mut tape = Tape::new();
        let a = tape.input(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap());
        let i = tape.input(Tensor::identity(2));
        let out = tape.matmul(a, i).unwrap();
        assert_eq!(tape.value(out).values(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn row_softmax_symmetry() {
        let mut tape = Tape::new();
        let a = tape.input(Tensor::from_rows(&[vec![0.0, 0.0]]).unwrap());
        let out = tape.row_softmax(a);
        assert_eq!(tape.value(out).values(), &[0.5, 0.5]);
    }

    #[test]
    fn segment_mean_basic() {
        let mut tape = Tape::new();
        let a = tape.input(Tensor::from_rows(&[vec![2.0], vec![4.0], vec![6.0]]).unwrap());
        let out = tape.segment_mean(a, &[0, 0, 1], 2).unwrap();
        assert_eq!(tape.value(out).values(), &[3.0, 6.0]);
    }

    #[test]
    fn backward_of_sum_of_squares() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap());
        let sq = tape.hadamard(x, x).unwrap();
        let loss = tape.sum_all(sq);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn dead_relu_has_zero_grad() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(-1.0));
        let y = tape.relu(x);
        let loss = tape.sum_all(y);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x), &[0.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_rows(&[vec![1.0, 2.0]]).unwrap());
        assert!(matches!(tape.backward(x), Err(DiffError::Contract(_))));
    }

    #[test]
    fn repeated_backward_accumulates() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(3.0));
        let sq = tape.hadamard(x, x).unwrap();
        let loss = tape.sum_all(sq);
        tape.backward(loss).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x), &[12.0]);
    }

    #[test]
    fn log_rejects_non_positive() {
        let mut tape = Tape::new();
        let x = tape.input(Tensor::scalar(0.0));
        assert!(matches!(tape.log(x), Err(DiffError::Domain(_))));
    }

    #[test]
    fn detach_blocks_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(2.0));
        let d = tape.detach(x);
        let y = tape.hadamard(x, d).unwrap();
        let loss = tape.sum_all(y);
        tape.backward(loss).unwrap();
        // d(x * stop(x))/dx = stop(x) = 2, not 2x = 4.
        assert_eq!(tape.grad(x), &[2.0]);
    }

    #[test]
    fn softmax_gradient_is_near_zero_for_sum() {
        // f = sum(softmax(x)) == 1, so the analytic gradient vanishes.
        let x = Tensor::from_rows(&[vec![0.3, -1.2, 0.7, 2.0]]).unwrap();
        let mut tape = Tape::new();
        let leaf = tape.leaf(x.clone());
        let s = tape.row_softmax(leaf);
        let f = tape.sum_all(s);
        tape.backward(f).unwrap();
        assert!(tape.grad(leaf).iter().all(|g| g.abs() < 1e-12));

        // the numeric estimate only carries finite-difference noise
        let report = gradient_check(
            |t, l| {
                let s = t.row_softmax(l);
                Ok(t.sum_all(s))
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-4, "max rel err {}", report.max_rel_err);
    }

    #[test]
    fn composite_ops_match_finite_differences() {
        let mut rng = Rng::stream(11, "test");
        for run in 0..10 {
            let x = Tensor::new(3, 4, (0..12).map(|_| rng.range(-2.0, 2.0)).collect()).unwrap();
            let w = Tensor::new(4, 3, (0..12).map(|_| rng.range(-1.0, 1.0)).collect()).unwrap();
            let labels = vec![rng.below(3), rng.below(3), rng.below(3)];
            let report = gradient_check(
                |t, leaf| {
                    let wn = t.input(w.clone());
                    let logits = t.matmul(leaf, wn)?;
                    let act = t.relu(logits);
                    let norm = t.l2_normalize_rows(act);
                    let sim = t.matmul_nt(norm, norm)?;
                    let ce = t.cross_entropy_with_logits(sim, &labels)?;
                    Ok(t.mean_all(ce))
                },
                &x,
                1e-5,
            )
            .unwrap();
            assert!(report.max_rel_err < 1e-4, "run {run}: {}", report.max_rel_err);
        }
    }

    proptest! {
        #[test]
        fn softmax_rows_sum_to_one_and_shift_invariant(
            row in proptest::collection::vec(-30.0f64..30.0, 2..6),
            shift in -10.0f64..10.0,
        ) {
            let mut tape = Tape::new();
            let n = row.len();
            let a = tape.input(Tensor::new(1, n, row.clone()).unwrap());
            let s = tape.row_softmax(a);
            let sum: f64 = tape.value(s).values().iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);

            let shifted: Vec<f64> = row.iter().map(|x| x + shift).collect();
            let b = tape.input(Tensor::new(1, n, shifted).unwrap());
            let s2 = tape.row_softmax(b);
            for (x, y) in tape.value(s).values().iter().zip(tape.value(s2).values()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn segment_mean_centers_segments(
            values in proptest::collection::vec(-5.0f64..5.0, 6),
            segs in proptest::collection::vec(0usize..3, 6),
        ) {
            let mut tape = Tape::new();
            let a = tape.input(Tensor::new(6, 1, values.clone()).unwrap());
            let means = tape.segment_mean(a, &segs, 3).unwrap();
            let broadcast = tape.gather_rows(means, &segs).unwrap();
            let centered = tape.sub(a, broadcast).unwrap();
            let remeaned = tape.segment_mean(centered, &segs, 3).unwrap();
            for &m in tape.value(remeaned).values() {
                prop_assert!(m.abs() < 1e-12);
            }
        }
    }
}
