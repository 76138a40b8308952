//! Central finite-difference checks of the analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::diffcore::{Tape, Tensor};
use crate::error::Result;
use crate::model::{HeadModel, ModelConfig, PoolingMethod};

/// Central differences of `eval` with respect to every entry of `inputs[which]`.
pub fn finite_difference(
    eval: &dyn Fn(&[Tensor]) -> f64,
    inputs: &[Tensor],
    which: usize,
    h: f64,
) -> Tensor {
    let mut work = inputs.to_vec();
    let (rows, cols) = inputs[which].shape();
    let mut out = Tensor::zeros(rows, cols);
    for j in 0..rows * cols {
        let orig = inputs[which].as_slice()[j];
        work[which].as_mut_slice()[j] = orig + h;
        let up = eval(&work);
        work[which].as_mut_slice()[j] = orig - h;
        let down = eval(&work);
        work[which].as_mut_slice()[j] = orig;
        out.as_mut_slice()[j] = (up - down) / (2.0 * h);
    }
    out
}

/// `max_i |a_i - n_i| / max(1, |a_i|)`.
pub fn max_relative_error(analytic: &Tensor, numeric: &Tensor) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape());
    analytic
        .as_slice()
        .iter()
        .zip(numeric.as_slice())
        .map(|(a, n)| (a - n).abs() / a.abs().max(1.0))
        .fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GradcheckDims {
    pub d_enc: usize,
    pub d_model: usize,
    pub frames: usize,
    pub num_heads: usize,
    pub d_hidden: usize,
    pub num_classes: usize,
}

impl Default for GradcheckDims {
    fn default() -> Self {
        Self {
            d_enc: 10,
            d_model: 8,
            frames: 7,
            num_heads: 2,
            d_hidden: 3,
            num_classes: 4,
        }
    }
}

/// Outcome for one named parameter tensor.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroupCheck {
    pub name: String,
    pub max_rel_err: f64,
    pub passed: bool,
}

pub const GRADCHECK_STEP: f64 = 1e-6;

/// Compares tape gradients of the training loss against central differences
/// for every parameter tensor. All parameters, biases and offsets included,
/// are randomized; dropout is active with a mask that is identical across
/// evaluations.
pub fn check_model_gradients(
    method: PoolingMethod,
    dims: GradcheckDims,
    seed: u64,
    tol: f64,
) -> Result<Vec<GroupCheck>> {
    let cfg = ModelConfig::new(dims.d_enc, dims.num_classes, method)
        .with_d_model(dims.d_model)
        .with_heads(dims.num_heads, dims.d_hidden);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = HeadModel::zeros(cfg)?;
    for p in model.params_mut() {
        for v in p.as_mut_slice() {
            *v = rng.gen_range(-1.0..1.0);
        }
    }
    let input = Tensor::from_vec(
        dims.frames,
        dims.d_enc,
        (0..dims.frames * dims.d_enc)
            .map(|_| rng.gen_range(-2.0..2.0))
            .collect(),
    )?;
    let label = rng.gen_range(0..dims.num_classes);
    let dropout_seed: u64 = rng.gen();

    let loss_of = |m: &HeadModel| -> Result<(f64, Vec<Tensor>)> {
        let mut tape = Tape::new();
        let bound = m.bind(&mut tape);
        let mut drng = ChaCha8Rng::seed_from_u64(dropout_seed);
        let trace = bound.forward(&mut tape, &input, true, &mut drng)?;
        let loss = tape.nll(trace.probs, label)?;
        let g = tape.backward(loss)?;
        let grads = bound.params().iter().map(|&v| g.wrt(v)).collect();
        Ok((tape.value(loss).get(0, 0), grads))
    };

    let (_, analytic) = loss_of(&model)?;
    let params: Vec<Tensor> = model.named_params().into_iter().map(|(_, t)| t.clone()).collect();
    let names: Vec<String> = model.named_params().into_iter().map(|(n, _)| n).collect();
    let eval = |ps: &[Tensor]| -> f64 {
        let mut m = model.clone();
        for (dst, src) in m.params_mut().into_iter().zip(ps) {
            dst.as_mut_slice().copy_from_slice(src.as_slice());
        }
        loss_of(&m).expect("forward on fixed shapes").0
    };

    Ok(names
        .into_iter()
        .enumerate()
        .map(|(i, name)| {
            let numeric = finite_difference(&eval, &params, i, GRADCHECK_STEP);
            let err = max_relative_error(&analytic[i], &numeric);
            GroupCheck {
                name,
                max_rel_err: err,
                passed: err <= tol,
            }
        })
        .collect())
}
