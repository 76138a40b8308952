//! Trainable head: projector, pooling (mean / attentive / QKV) and classifier.
//!
//! Shapes, with `T` frames:
//!
//! ```text
//! H_enc (T x d_enc) -> project -> H (T x d_model) -> pool -> a (1 x d_model)
//!                                                  -> classify -> probs (1 x classes)
//! ```
//!
//! The projector and classifier are bias-free. The projector output is
//! standardized per frame with no learnable affine.

mod checkpoint;
mod config;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_CONFIG_FILE};
pub use config::{
    ModelConfig, PoolingMethod, DEFAULT_D_HIDDEN, DEFAULT_D_MODEL, DEFAULT_DROPOUT,
    DEFAULT_NUM_HEADS,
};

use rand::Rng;

use crate::diffcore::{Tape, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct AttentiveHead {
    pub w1: Tensor,
    pub b: Tensor,
    pub w2: Tensor,
    pub k: Tensor,
    pub wv: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QkvHead {
    pub wq: Tensor,
    pub wk: Tensor,
    pub wv: Tensor,
}

/// Pooling parameters; only the configured method's set is allocated.
#[derive(Clone, Debug, PartialEq)]
pub enum Pooling {
    Mean,
    Attentive {
        heads: Vec<AttentiveHead>,
        w_out: Tensor,
    },
    Qkv {
        heads: Vec<QkvHead>,
        w_out: Tensor,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeadModel {
    config: ModelConfig,
    pub projector: Tensor,
    pub pooling: Pooling,
    pub classifier: Tensor,
}

fn xavier<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect();
    Tensor::from_vec(rows, cols, data).expect("sized")
}

impl HeadModel {
    /// Glorot-uniform matrices, zero biases and offsets.
    pub fn init<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        Self::build(config, |r, c, zero| {
            if zero {
                Tensor::zeros(r, c)
            } else {
                xavier(rng, r, c)
            }
        })
    }

    /// All parameters zero; used as a shape template when loading checkpoints.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        Self::build(config, |r, c, _| Tensor::zeros(r, c))
    }

    fn build(
        config: ModelConfig,
        mut make: impl FnMut(usize, usize, bool) -> Tensor,
    ) -> Result<Self> {
        config.validate()?;
        let (dm, dh, nh) = (config.d_model, config.d_hidden, config.num_heads);
        let projector = make(config.d_enc, dm, false);
        let pooling = match config.pooling {
            PoolingMethod::Mean => Pooling::Mean,
            PoolingMethod::Attentive => {
                let heads = (0..nh)
                    .map(|_| AttentiveHead {
                        w1: make(dm, dh, false),
                        b: make(1, dh, true),
                        w2: make(dh, 1, false),
                        k: make(1, 1, true),
                        wv: make(dm, dh, false),
                    })
                    .collect();
                Pooling::Attentive {
                    heads,
                    w_out: make(nh * dh, dm, false),
                }
            }
            PoolingMethod::Qkv => {
                let heads = (0..nh)
                    .map(|_| QkvHead {
                        wq: make(dm, dh, false),
                        wk: make(dm, dh, false),
                        wv: make(dm, dh, false),
                    })
                    .collect();
                Pooling::Qkv {
                    heads,
                    w_out: make(nh * dh, dm, false),
                }
            }
        };
        let classifier = make(dm, config.num_classes, false);
        Ok(Self {
            config,
            projector,
            pooling,
            classifier,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Parameters in a fixed order, with stable names.
    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![("projector".to_string(), &self.projector)];
        match &self.pooling {
            Pooling::Mean => {}
            Pooling::Attentive { heads, w_out } => {
                for (i, h) in heads.iter().enumerate() {
                    out.push((format!("head{i}.w1"), &h.w1));
                    out.push((format!("head{i}.b"), &h.b));
                    out.push((format!("head{i}.w2"), &h.w2));
                    out.push((format!("head{i}.k"), &h.k));
                    out.push((format!("head{i}.wv"), &h.wv));
                }
                out.push(("w_out".to_string(), w_out));
            }
            Pooling::Qkv { heads, w_out } => {
                for (i, h) in heads.iter().enumerate() {
                    out.push((format!("head{i}.wq"), &h.wq));
                    out.push((format!("head{i}.wk"), &h.wk));
                    out.push((format!("head{i}.wv"), &h.wv));
                }
                out.push(("w_out".to_string(), w_out));
            }
        }
        out.push(("classifier".to_string(), &self.classifier));
        out
    }

    /// Same order as [`named_params`](Self::named_params).
    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.projector];
        match &mut self.pooling {
            Pooling::Mean => {}
            Pooling::Attentive { heads, w_out } => {
                for h in heads {
                    out.extend([&mut h.w1, &mut h.b, &mut h.w2, &mut h.k, &mut h.wv]);
                }
                out.push(w_out);
            }
            Pooling::Qkv { heads, w_out } => {
                for h in heads {
                    out.extend([&mut h.wq, &mut h.wk, &mut h.wv]);
                }
                out.push(w_out);
            }
        }
        out.push(&mut self.classifier);
        out
    }

    pub fn count_trainable_params(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.len()).sum()
    }

    /// Records every parameter as a leaf on `tape`.
    pub fn bind(&self, tape: &mut Tape) -> BoundModel<'_> {
        let params = self
            .named_params()
            .into_iter()
            .map(|(_, t)| tape.leaf(t.clone()))
            .collect();
        BoundModel {
            model: self,
            params,
        }
    }

    /// Probability vector (`1 x classes`) for one utterance, dropout off.
    pub fn predict_proba(&self, h_enc: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let trace = bound.forward(&mut tape, h_enc, false, &mut NoRng)?;
        Ok(tape.value(trace.probs).clone())
    }

    pub fn predict(&self, h_enc: &Tensor) -> Result<usize> {
        Ok(argmax(self.predict_proba(h_enc)?.as_slice()))
    }

    /// `standardize_rows(H_enc W_p)`.
    pub fn project(&self, h_enc: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let x = tape.leaf(h_enc.clone());
        let h = bound.project(&mut tape, x)?;
        Ok(tape.value(h).clone())
    }

    /// Pools an already-projected `T x d_model` matrix (evaluation mode).
    pub fn pool(&self, h: &Tensor) -> Result<PoolOutput> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let x = tape.leaf(h.clone());
        let pooled = bound.pool(&mut tape, x, false, &mut NoRng)?;
        Ok(PoolOutput {
            pooled: tape.value(pooled.pooled).clone(),
            attention: pooled
                .attention
                .iter()
                .map(|&v| tape.value(v).clone())
                .collect(),
        })
    }

    /// `softmax(a W_c)` for a pooled `1 x d_model` vector.
    pub fn classify(&self, a: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let x = tape.leaf(a.clone());
        let (_, probs) = bound.classify(&mut tape, x)?;
        Ok(tape.value(probs).clone())
    }
}

pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

/// Evaluation never draws randomness; this panics if it ever does.
struct NoRng;

impl rand::RngCore for NoRng {
    fn next_u32(&mut self) -> u32 {
        unreachable!("evaluation-mode forward drew a random number")
    }
    fn next_u64(&mut self) -> u64 {
        unreachable!("evaluation-mode forward drew a random number")
    }
    fn fill_bytes(&mut self, _: &mut [u8]) {
        unreachable!("evaluation-mode forward drew a random number")
    }
    fn try_fill_bytes(&mut self, _: &mut [u8]) -> Result<(), rand::Error> {
        unreachable!("evaluation-mode forward drew a random number")
    }
}

#[derive(Clone, Debug)]
pub struct PoolOutput {
    pub pooled: Tensor,
    /// One `1 x T` weight row per head; empty for mean pooling.
    pub attention: Vec<Tensor>,
}

pub struct PooledVars {
    pub pooled: Var,
    pub attention: Vec<Var>,
}

/// Vars produced by one forward pass.
pub struct ForwardTrace {
    pub projected: Var,
    pub pooled: Var,
    pub attention: Vec<Var>,
    pub logits: Var,
    pub probs: Var,
}

/// A model whose parameters have been recorded on a tape.
pub struct BoundModel<'m> {
    model: &'m HeadModel,
    params: Vec<Var>,
}

impl<'m> BoundModel<'m> {
    /// Parameter vars in [`HeadModel::named_params`] order.
    pub fn params(&self) -> &[Var] {
        &self.params
    }

    fn cfg(&self) -> &ModelConfig {
        &self.model.config
    }

    pub fn project(&self, tape: &mut Tape, h_enc: Var) -> Result<Var> {
        let x = tape.value(h_enc);
        if x.cols() != self.cfg().d_enc {
            return Err(Error::Shape {
                op: "project",
                left: x.shape(),
                right: (self.cfg().d_enc, self.cfg().d_model),
            });
        }
        let z = tape.matmul(h_enc, self.params[0])?;
        Ok(tape.standardize_rows(z))
    }

    pub fn pool<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        h: Var,
        training: bool,
        rng: &mut R,
    ) -> Result<PooledVars> {
        let (t, width) = tape.value(h).shape();
        if width != self.cfg().d_model || t == 0 {
            return Err(Error::Shape {
                op: "pool",
                left: (t, width),
                right: (t.max(1), self.cfg().d_model),
            });
        }
        match self.cfg().pooling {
            PoolingMethod::Mean => Ok(PooledVars {
                pooled: tape.mean_rows(h)?,
                attention: Vec::new(),
            }),
            PoolingMethod::Attentive => self.attentive_pool(tape, h, training, rng),
            PoolingMethod::Qkv => self.qkv_pool(tape, h),
        }
    }

    fn attentive_pool<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        h: Var,
        training: bool,
        rng: &mut R,
    ) -> Result<PooledVars> {
        let nh = self.cfg().num_heads;
        let rate = self.cfg().dropout_rate;
        let mut heads = Vec::with_capacity(nh);
        let mut attention = Vec::with_capacity(nh);
        for i in 0..nh {
            let [w1, b, w2, k, wv] = [0, 1, 2, 3, 4].map(|j| self.params[1 + 5 * i + j]);
            // e_t = tanh(h_t W1 + b) w2 + k
            let hidden = tape.matmul(h, w1)?;
            let hidden = tape.add_bias(hidden, b)?;
            let hidden = tape.tanh(hidden);
            let hidden = tape.dropout(hidden, rate, rng, training)?;
            let scores = tape.matmul(hidden, w2)?;
            let scores = tape.add_scalar(scores, k)?;
            let scores = tape.transpose(scores);
            let weights = tape.row_softmax(scores);
            let values = tape.matmul(h, wv)?;
            heads.push(tape.matmul(weights, values)?);
            attention.push(weights);
        }
        let w_out = self.params[1 + 5 * nh];
        let cat = tape.concat_cols(&heads)?;
        Ok(PooledVars {
            pooled: tape.matmul(cat, w_out)?,
            attention,
        })
    }

    fn qkv_pool(&self, tape: &mut Tape, h: Var) -> Result<PooledVars> {
        let nh = self.cfg().num_heads;
        let inv_sqrt_dk = 1.0 / (self.cfg().d_hidden as f64).sqrt();
        let mu = tape.mean_rows(h)?;
        let mut heads = Vec::with_capacity(nh);
        let mut attention = Vec::with_capacity(nh);
        for i in 0..nh {
            let [wq, wk, wv] = [0, 1, 2].map(|j| self.params[1 + 3 * i + j]);
            let q = tape.matmul(mu, wq)?;
            let keys = tape.matmul(h, wk)?;
            let keys_t = tape.transpose(keys);
            let scores = tape.matmul(q, keys_t)?;
            let scores = tape.scale(scores, inv_sqrt_dk);
            let weights = tape.row_softmax(scores);
            let values = tape.matmul(h, wv)?;
            heads.push(tape.matmul(weights, values)?);
            attention.push(weights);
        }
        let w_out = self.params[1 + 3 * nh];
        let cat = tape.concat_cols(&heads)?;
        Ok(PooledVars {
            pooled: tape.matmul(cat, w_out)?,
            attention,
        })
    }

    /// Returns `(logits, probs)`.
    pub fn classify(&self, tape: &mut Tape, a: Var) -> Result<(Var, Var)> {
        let wc = *self.params.last().expect("classifier bound");
        let logits = tape.matmul(a, wc)?;
        Ok((logits, tape.row_softmax(logits)))
    }

    pub fn forward<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        h_enc: &Tensor,
        training: bool,
        rng: &mut R,
    ) -> Result<ForwardTrace> {
        let x = tape.leaf(h_enc.clone());
        let projected = self.project(tape, x)?;
        let PooledVars { pooled, attention } = self.pool(tape, projected, training, rng)?;
        let (logits, probs) = self.classify(tape, pooled)?;
        Ok(ForwardTrace {
            projected,
            pooled,
            attention,
            logits,
            probs,
        })
    }
}
