use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolingMethod {
    /// Global average over frames (baseline).
    Mean,
    /// Multi-head attentive average pooling.
    Attentive,
    /// Multi-head QKV pooling with a mean-conditioned query.
    Qkv,
}

impl PoolingMethod {
    pub const ALL: [PoolingMethod; 3] = [Self::Mean, Self::Attentive, Self::Qkv];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Mean => "mean",
            Self::Attentive => "attentive",
            Self::Qkv => "qkv",
        }
    }
}

impl fmt::Display for PoolingMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PoolingMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mean" => Ok(Self::Mean),
            "attentive" | "attw" => Ok(Self::Attentive),
            "qkv" => Ok(Self::Qkv),
            other => Err(Error::Config(format!(
                "unknown pooling method {other:?} (expected mean, attentive or qkv)"
            ))),
        }
    }
}

pub const DEFAULT_D_MODEL: usize = 256;
pub const DEFAULT_NUM_HEADS: usize = 6;
pub const DEFAULT_D_HIDDEN: usize = 4;
pub const DEFAULT_DROPOUT: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_enc: usize,
    pub d_model: usize,
    pub num_heads: usize,
    pub d_hidden: usize,
    pub num_classes: usize,
    pub pooling: PoolingMethod,
    pub dropout_rate: f64,
    pub encoder_layer: u32,
}

impl ModelConfig {
    /// Config with the default head shape (6 heads of width 4, `d_model` 256).
    pub fn new(d_enc: usize, num_classes: usize, pooling: PoolingMethod) -> Self {
        Self {
            d_enc,
            d_model: DEFAULT_D_MODEL,
            num_heads: DEFAULT_NUM_HEADS,
            d_hidden: DEFAULT_D_HIDDEN,
            num_classes,
            pooling,
            dropout_rate: DEFAULT_DROPOUT,
            encoder_layer: 1,
        }
    }

    pub fn with_heads(mut self, num_heads: usize, d_hidden: usize) -> Self {
        self.num_heads = num_heads;
        self.d_hidden = d_hidden;
        self
    }

    pub fn with_d_model(mut self, d_model: usize) -> Self {
        self.d_model = d_model;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.d_enc == 0 || self.d_model == 0 {
            return bad(format!(
                "d_enc ({}) and d_model ({}) must be positive",
                self.d_enc, self.d_model
            ));
        }
        if self.num_heads == 0 || self.d_hidden == 0 {
            return bad(format!(
                "num_heads ({}) and d_hidden ({}) must be >= 1",
                self.num_heads, self.d_hidden
            ));
        }
        if self.num_classes < 2 {
            return bad(format!("num_classes must be >= 2, got {}", self.num_classes));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout rate {} not in [0, 1)", self.dropout_rate));
        }
        Ok(())
    }
}
