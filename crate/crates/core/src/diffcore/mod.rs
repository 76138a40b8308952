//! Minimal reverse-mode differentiation over dense `f64` matrices.
//!
//! A [`Tape`] records every op as it runs (define-by-run) and
//! [`Tape::backward`] replays the pullbacks in reverse order. Only the ops the
//! pooling heads need are provided.

mod tape;
mod tensor;

pub use tape::{softmax_rows, Gradients, Tape, Var, NLL_PROB_FLOOR, STANDARDIZE_EPS};
pub use tensor::Tensor;

#[cfg(test)]
pub(crate) use tape::FLIP_MATMUL_RHS_GRAD;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{finite_difference, max_relative_error};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
        Tensor::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Checks `build` (which maps leaf vars to a scalar) against central differences.
    fn check_op(inputs: Vec<Tensor>, build: impl Fn(&mut Tape, &[Var]) -> Var) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().cloned().map(|t| tape.leaf(t)).collect();
        let loss = build(&mut tape, &vars);
        let grads = tape.backward(loss).unwrap();
        let eval = |xs: &[Tensor]| {
            let mut t = Tape::new();
            let vs: Vec<Var> = xs.iter().cloned().map(|x| t.leaf(x)).collect();
            let l = build(&mut t, &vs);
            t.value(l).get(0, 0)
        };
        for (i, v) in vars.iter().enumerate() {
            let numeric = finite_difference(&eval, &inputs, i, 1e-6);
            let err = max_relative_error(&grads.wrt(*v), &numeric);
            assert!(err <= 1e-7, "input {i}: rel err {err}");
        }
    }

    // A fixed random weighting so every output element contributes distinctly.
    fn weighted_sum(tape: &mut Tape, x: Var, seed: u64) -> Var {
        let c = tape.value(x).cols();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = tape.leaf(random(&mut rng, c, 1));
        let y = tape.matmul(x, w).unwrap();
        let y = tape.tanh(y);
        tape.sum(y)
    }

    #[test]
    fn matmul_identity_and_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random(&mut rng, 3, 4);
        assert_eq!(Tensor::identity(3).matmul(&m).unwrap(), m);
        assert_eq!(Tensor::zeros(2, 3).matmul(&m).unwrap(), Tensor::zeros(2, 4));
    }

    #[test]
    fn matmul_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random(&mut rng, 4, 3);
        let b = random(&mut rng, 3, 2);
        check_op(vec![a, b], |t, v| {
            let c = t.matmul(v[0], v[1]).unwrap();
            weighted_sum(t, c, 9)
        });
    }

    #[test]
    fn matmul_shape_error() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor::zeros(2, 3));
        let b = t.leaf(Tensor::zeros(4, 2));
        let err = t.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("(2, 3)") && err.contains("(4, 2)"), "{err}");
    }

    #[test]
    fn softmax_examples() {
        let s = softmax_rows(&Tensor::row_vector(&[0.0, 0.0, 0.0]));
        for v in s.as_slice() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        // hand evaluation of e^{x_i - 3} / sum for [1, 2, 3]
        let denom = (-2.0f64).exp() + (-1.0f64).exp() + 1.0;
        let expect = [(-2.0f64).exp() / denom, (-1.0f64).exp() / denom, 1.0 / denom];
        let s = softmax_rows(&Tensor::row_vector(&[1.0, 2.0, 3.0]));
        for (a, b) in s.as_slice().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((expect[0] - 0.090_030_573_170_380_46).abs() < 1e-15);
        let shifted = softmax_rows(&Tensor::row_vector(&[101.0, 102.0, 103.0]));
        assert!(shifted.max_abs_diff(&s) < 1e-12);
    }

    #[test]
    fn softmax_extreme_inputs_stay_finite() {
        let s = softmax_rows(&Tensor::row_vector(&[1e300, -1e300, 0.0]));
        assert!(s.is_finite());
        assert_eq!(s.as_slice()[0], 1.0);
    }

    #[test]
    fn elementwise_ops_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random(&mut rng, 5, 4);
        let b = random(&mut rng, 1, 4);
        let s = random(&mut rng, 1, 1);
        check_op(vec![x.clone(), b, s], |t, v| {
            let y = t.add_bias(v[0], v[1]).unwrap();
            let y = t.add_scalar(y, v[2]).unwrap();
            let y = t.scale(y, 0.7);
            let y = t.tanh(y);
            weighted_sum(t, y, 4)
        });
        check_op(vec![x.clone()], |t, v| {
            let y = t.standardize_rows(v[0]);
            weighted_sum(t, y, 5)
        });
        check_op(vec![x.clone()], |t, v| {
            let y = t.mean_rows(v[0]).unwrap();
            weighted_sum(t, y, 6)
        });
        check_op(vec![x.clone()], |t, v| {
            let y = t.transpose(v[0]);
            weighted_sum(t, y, 7)
        });
        check_op(vec![x.clone(), x.map(|v| v * 2.0 + 0.1)], |t, v| {
            let y = t.concat_cols(&[v[0], v[1]]).unwrap();
            let z = t.add(v[0], v[1]).unwrap();
            let z = t.concat_cols(&[y, z]).unwrap();
            weighted_sum(t, z, 8)
        });
        check_op(vec![random(&mut rng, 3, 6)], |t, v| {
            let y = t.row_softmax(v[0]);
            weighted_sum(t, y, 10)
        });
    }

    #[test]
    fn nll_through_softmax_is_probs_minus_one_hot() {
        let logits = Tensor::row_vector(&[0.3, -1.2, 2.0, 0.5]);
        let mut t = Tape::new();
        let z = t.leaf(logits.clone());
        let p = t.row_softmax(z);
        let loss = t.nll(p, 2).unwrap();
        let g = t.backward(loss).unwrap().wrt(z);
        let probs = softmax_rows(&logits);
        for (i, (gi, pi)) in g.as_slice().iter().zip(probs.as_slice()).enumerate() {
            let expect = pi - if i == 2 { 1.0 } else { 0.0 };
            assert!((gi - expect).abs() < 1e-12);
        }
        check_op(vec![logits], |t, v| {
            let p = t.row_softmax(v[0]);
            t.nll(p, 2).unwrap()
        });
    }

    #[test]
    fn dropout_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut t = Tape::new();
        let x = t.leaf(Tensor::filled(4, 50, 1.0));
        assert_eq!(t.dropout(x, 0.0, &mut rng, true).unwrap(), x);
        assert_eq!(t.dropout(x, 0.0, &mut rng, false).unwrap(), x);
        assert_eq!(t.dropout(x, 0.5, &mut rng, false).unwrap(), x);
        let y = t.dropout(x, 0.25, &mut rng, true).unwrap();
        for &v in t.value(y).as_slice() {
            assert!(v == 0.0 || (v - 1.0 / 0.75).abs() < 1e-15);
        }
        assert!(t.dropout(x, 1.0, &mut rng, true).is_err());
        assert!(t.dropout(x, -0.1, &mut rng, false).is_err());
    }

    #[test]
    fn dropout_gradient_uses_mask() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut t = Tape::new();
        let x = t.leaf(Tensor::filled(3, 3, 2.0));
        let y = t.dropout(x, 0.5, &mut rng, true).unwrap();
        let mask: Vec<f64> = t.value(y).as_slice().iter().map(|v| v / 2.0).collect();
        let l = t.sum(y);
        let g = t.backward(l).unwrap().wrt(x);
        assert_eq!(g.as_slice(), &mask[..]);
    }

    #[test]
    fn standardize_constant_row_is_zero() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::filled(2, 6, 3.5));
        let y = t.standardize_rows(x);
        assert!(t.value(y).as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mean_rows_single_row_is_identity() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::row_vector(&[1.0, -2.0, 3.0]));
        let m = t.mean_rows(x).unwrap();
        assert_eq!(t.value(m), t.value(x));
    }

    #[test]
    fn backward_sum_gives_ones_and_disconnected_zero() {
        let mut t = Tape::new();
        let w = t.leaf(Tensor::filled(2, 3, 0.4));
        let unused = t.leaf(Tensor::filled(4, 1, 9.0));
        let l = t.sum(w);
        let g = t.backward(l).unwrap();
        assert_eq!(g.wrt(w), Tensor::filled(2, 3, 1.0));
        assert!(g.get(unused).is_none());
        assert_eq!(g.wrt(unused), Tensor::zeros(4, 1));
    }

    #[test]
    fn reused_input_accumulates() {
        let mut t = Tape::new();
        let w = t.leaf(Tensor::row_vector(&[1.0, 2.0]));
        let y = t.add(w, w).unwrap();
        let y = t.add(y, w).unwrap();
        let l = t.sum(y);
        assert_eq!(t.backward(l).unwrap().wrt(w).as_slice(), &[3.0, 3.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut t = Tape::new();
        let w = t.leaf(Tensor::zeros(2, 2));
        assert!(matches!(t.backward(w), Err(crate::Error::Shape { .. })));
    }

    #[test]
    fn nll_label_out_of_range() {
        let mut t = Tape::new();
        let p = t.leaf(Tensor::row_vector(&[0.5, 0.5]));
        assert!(matches!(t.nll(p, 2), Err(crate::Error::Index { index: 2, len: 2 })));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn softmax_normalized_and_shift_invariant(
                xs in proptest::collection::vec(-30.0f64..30.0, 1..12),
                shift in -50.0f64..50.0,
            ) {
                let a = softmax_rows(&Tensor::row_vector(&xs));
                let shifted: Vec<f64> = xs.iter().map(|x| x + shift).collect();
                let b = softmax_rows(&Tensor::row_vector(&shifted));
                prop_assert!((a.sum() - 1.0).abs() <= 1e-12);
                prop_assert!(a.as_slice().iter().all(|&p| p > 0.0));
                prop_assert!(a.max_abs_diff(&b) <= 1e-12);
            }

            #[test]
            fn forward_ops_keep_finite(
                xs in proptest::collection::vec(-1e3f64..1e3, 12),
            ) {
                let mut t = Tape::new();
                let x = t.leaf(Tensor::from_vec(3, 4, xs).unwrap());
                let y = t.standardize_rows(x);
                let y = t.tanh(y);
                let y = t.row_softmax(y);
                let m = t.mean_rows(y).unwrap();
                prop_assert!(t.value(m).is_finite());
            }
        }
    }
}
