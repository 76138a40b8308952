//! Loop-based reference implementations used as test oracles. Nothing here
//! calls into the tensor or tape code; values are read element by element.

#![allow(dead_code)]

use attnpool::diffcore::Tensor;
use attnpool::model::{HeadModel, ModelConfig, Pooling, PoolingMethod};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn vec_mat(v: &[f64], m: &Tensor) -> Vec<f64> {
    (0..m.cols())
        .map(|j| (0..m.rows()).map(|i| v[i] * m.get(i, j)).sum())
        .collect()
}

fn softmax(xs: &[f64]) -> Vec<f64> {
    let mx = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = xs.iter().map(|x| (x - mx).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

fn weighted_values(h: &Tensor, weights: &[f64], wv: &Tensor) -> Vec<f64> {
    let mut out = vec![0.0; wv.cols()];
    for (t, &w) in weights.iter().enumerate() {
        let v = vec_mat(h.row(t), wv);
        for (o, x) in out.iter_mut().zip(v) {
            *o += w * x;
        }
    }
    out
}

/// Pooled vector and per-head weights computed with plain loops (dropout off).
pub fn naive_pool(model: &HeadModel, h: &Tensor) -> (Vec<f64>, Vec<Vec<f64>>) {
    let frames = h.rows();
    let width = h.cols();
    match &model.pooling {
        Pooling::Mean => {
            let mut out = vec![0.0; width];
            for t in 0..frames {
                for (o, x) in out.iter_mut().zip(h.row(t)) {
                    *o += x / frames as f64;
                }
            }
            (out, Vec::new())
        }
        Pooling::Attentive { heads, w_out } => {
            let mut cat = Vec::new();
            let mut all_weights = Vec::new();
            for head in heads {
                let scores: Vec<f64> = (0..frames)
                    .map(|t| {
                        let hidden = vec_mat(h.row(t), &head.w1);
                        let mut e = head.k.get(0, 0);
                        for (j, x) in hidden.iter().enumerate() {
                            e += (x + head.b.get(0, j)).tanh() * head.w2.get(j, 0);
                        }
                        e
                    })
                    .collect();
                let w = softmax(&scores);
                cat.extend(weighted_values(h, &w, &head.wv));
                all_weights.push(w);
            }
            (vec_mat(&cat, w_out), all_weights)
        }
        Pooling::Qkv { heads, w_out } => {
            let mut mu = vec![0.0; width];
            for t in 0..frames {
                for (o, x) in mu.iter_mut().zip(h.row(t)) {
                    *o += x / frames as f64;
                }
            }
            let mut cat = Vec::new();
            let mut all_weights = Vec::new();
            for head in heads {
                let q = vec_mat(&mu, &head.wq);
                let scale = (head.wq.cols() as f64).sqrt();
                let scores: Vec<f64> = (0..frames)
                    .map(|t| {
                        let k = vec_mat(h.row(t), &head.wk);
                        q.iter().zip(&k).map(|(a, b)| a * b).sum::<f64>() / scale
                    })
                    .collect();
                let w = softmax(&scores);
                cat.extend(weighted_values(h, &w, &head.wv));
                all_weights.push(w);
            }
            (vec_mat(&cat, w_out), all_weights)
        }
    }
}

/// Per-row standardization of `h_enc W_p` with the 1e-5 variance guard.
pub fn naive_project(model: &HeadModel, h_enc: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(h_enc.rows(), model.projector.cols());
    for t in 0..h_enc.rows() {
        let z = vec_mat(h_enc.row(t), &model.projector);
        let n = z.len() as f64;
        let mean = z.iter().sum::<f64>() / n;
        let var = z.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        for (j, x) in z.iter().enumerate() {
            out.set(t, j, (x - mean) / (var + 1e-5).sqrt());
        }
    }
    out
}

pub fn random_tensor(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> Tensor {
    Tensor::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect(),
    )
    .unwrap()
}

/// A model with every parameter (biases and offsets included) drawn uniformly.
pub fn random_model(rng: &mut impl Rng, cfg: ModelConfig) -> HeadModel {
    let mut model = HeadModel::zeros(cfg).unwrap();
    for p in model.params_mut() {
        for v in p.as_mut_slice() {
            *v = rng.gen_range(-1.0..1.0);
        }
    }
    model
}

/// One random small configuration (T <= 10, every dimension <= 8).
pub struct Case {
    pub model: HeadModel,
    pub h: Tensor,
}

pub fn random_case(seed: u64, method: PoolingMethod) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d_model = rng.gen_range(1..=8);
    let d_hidden = rng.gen_range(1..=8);
    let heads = rng.gen_range(1..=8);
    let frames = rng.gen_range(1..=10);
    let cfg = ModelConfig::new(rng.gen_range(1..=8), rng.gen_range(2..=8), method)
        .with_d_model(d_model)
        .with_heads(heads, d_hidden);
    let model = random_model(&mut rng, cfg);
    let h = random_tensor(&mut rng, frames, d_model, 2.0);
    Case { model, h }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
