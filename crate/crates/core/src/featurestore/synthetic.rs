//! Planted-saliency datasets.
//!
//! Every utterance is Gaussian noise except for `salient_frames` randomly
//! chosen frames, to which a fixed per-class signature vector (entries drawn
//! from `N(0, 1)`) is added. Values are rounded to `f32` so the in-memory copy
//! equals what the feature files hold.

use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::fea::write_features;
use super::manifest::{DatasetManifest, UtteranceRecord};
use crate::diffcore::Tensor;
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub per_class: usize,
    pub frames: usize,
    pub d_enc: usize,
    pub salient_frames: usize,
    pub noise_sigma: f64,
    pub seed: u64,
    pub folds: usize,
    pub layers: Vec<u32>,
}

impl SyntheticSpec {
    pub fn new(
        classes: usize,
        per_class: usize,
        frames: usize,
        d_enc: usize,
        salient_frames: usize,
        noise_sigma: f64,
        seed: u64,
    ) -> Self {
        Self {
            classes,
            per_class,
            frames,
            d_enc,
            salient_frames,
            noise_sigma,
            seed,
            folds: 5,
            layers: vec![1],
        }
    }

    pub fn with_folds(mut self, folds: usize) -> Self {
        self.folds = folds;
        self
    }

    pub fn with_layers(mut self, layers: Vec<u32>) -> Self {
        self.layers = layers;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.classes < 2 {
            return fail(format!("need at least 2 classes, got {}", self.classes));
        }
        if self.frames == 0 || self.d_enc == 0 || self.per_class == 0 {
            return fail("frames, d_enc and per_class must be positive".into());
        }
        if self.salient_frames == 0 || self.salient_frames > self.frames {
            return fail(format!(
                "salient frames must be in [1, {}], got {}",
                self.frames, self.salient_frames
            ));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return fail(format!("noise sigma must be >= 0, got {}", self.noise_sigma));
        }
        if self.folds == 0 || self.folds > self.classes * self.per_class {
            return fail(format!(
                "fold count {} must be in [1, {}]",
                self.folds,
                self.classes * self.per_class
            ));
        }
        if self.layers.is_empty() {
            return fail("at least one layer required".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticData {
    pub manifest: DatasetManifest,
    /// `features[layer_idx][record]`, layer order as in `manifest.layers`.
    pub features: Vec<Vec<Tensor>>,
    pub salient_positions: Vec<Vec<usize>>,
    /// `classes x d_enc`.
    pub signatures: Tensor,
}

impl SyntheticData {
    pub fn layer_features(&self, layer: u32) -> Option<&[Tensor]> {
        let i = self.manifest.layers.iter().position(|&l| l == layer)?;
        Some(&self.features[i])
    }
}

fn f32_round(v: f64) -> f64 {
    f64::from(v as f32)
}

/// Generates the dataset in memory. Pure function of `spec`.
pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.d_enc;
    let sig: Vec<f64> = (0..spec.classes * d)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let signatures = Tensor::from_vec(spec.classes, d, sig)?;

    let n = spec.classes * spec.per_class;
    let mut records = Vec::with_capacity(n);
    let mut positions = Vec::with_capacity(n);
    let mut features = vec![Vec::with_capacity(n); spec.layers.len()];
    for i in 0..n {
        let label = i / spec.per_class;
        let fold = i % spec.folds;
        let mut pos = index::sample(&mut rng, spec.frames, spec.salient_frames).into_vec();
        pos.sort_unstable();
        for layer_feats in features.iter_mut() {
            let mut m = Tensor::zeros(spec.frames, d);
            if spec.noise_sigma > 0.0 {
                for v in m.as_mut_slice() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *v = spec.noise_sigma * z;
                }
            }
            for &t in &pos {
                for (v, s) in m.row_mut(t).iter_mut().zip(signatures.row(label)) {
                    *v += s;
                }
            }
            layer_feats.push(m.map(f32_round));
        }
        let id = format!("utt{i:05}");
        records.push(UtteranceRecord {
            features: format!("features/L{{layer}}/{id}.fea"),
            id,
            label,
            group: fold as u32,
            fold,
        });
        positions.push(pos);
    }

    let manifest = DatasetManifest {
        classes: (0..spec.classes).map(|c| format!("class{c}")).collect(),
        folds: spec.folds,
        d_enc: d,
        layers: spec.layers.clone(),
        model_size: None,
        records,
        base_dir: Default::default(),
    };
    Ok(SyntheticData {
        manifest,
        features,
        salient_positions: positions,
        signatures,
    })
}

/// Generates and writes `manifest.txt` plus one `FEA1` file per record and layer.
pub fn gen_synthetic(spec: &SyntheticSpec, out_dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    let out_dir = out_dir.as_ref();
    let mut data = generate(spec)?;
    data.manifest.base_dir = out_dir.to_path_buf();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    for (li, &layer) in data.manifest.layers.iter().enumerate() {
        for (r, m) in data.manifest.records.iter().zip(&data.features[li]) {
            write_features(m, data.manifest.feature_path(r, layer))?;
        }
    }
    data.manifest.write(out_dir.join(MANIFEST_FILE))?;
    Ok(data.manifest)
}
