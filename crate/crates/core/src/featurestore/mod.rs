//! Feature files, dataset manifests and synthetic data.

mod fea;
mod manifest;
mod synthetic;

pub use fea::{
    decode_features, encode_features, read_features, write_features, ModelSize,
    RepresentationMatrix, SourceTags, HEADER_LEN, MAGIC,
};
pub use manifest::{
    load_manifest, parse_manifest, DatasetManifest, UtteranceRecord, MANIFEST_FORMAT,
};
pub use synthetic::{gen_synthetic, generate, SyntheticData, SyntheticSpec, MANIFEST_FILE};

use std::borrow::Cow;
use std::path::PathBuf;

use crate::diffcore::Tensor;
use crate::error::{Error, Result};

/// Per-record access to one encoder layer's representation matrices.
pub trait FeatureSource: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn load(&self, record: usize) -> Result<Cow<'_, Tensor>>;
}

/// All matrices held in memory.
pub struct InMemoryFeatures {
    items: Vec<Tensor>,
}

impl InMemoryFeatures {
    pub fn new(items: Vec<Tensor>) -> Self {
        Self { items }
    }
}

impl FeatureSource for InMemoryFeatures {
    fn len(&self) -> usize {
        self.items.len()
    }

    fn load(&self, record: usize) -> Result<Cow<'_, Tensor>> {
        self.items
            .get(record)
            .map(Cow::Borrowed)
            .ok_or_else(|| Error::Data(format!("no features for record {record}")))
    }
}

/// Reads each matrix from disk on every access.
pub struct DiskFeatures {
    paths: Vec<PathBuf>,
    width: usize,
}

impl FeatureSource for DiskFeatures {
    fn len(&self) -> usize {
        self.paths.len()
    }

    fn load(&self, record: usize) -> Result<Cow<'_, Tensor>> {
        let path = self
            .paths
            .get(record)
            .ok_or_else(|| Error::Data(format!("no features for record {record}")))?;
        let m = read_features(path)?.data;
        if m.cols() != self.width {
            return Err(Error::Data(format!(
                "{} has width {}, manifest says {}",
                path.display(),
                m.cols(),
                self.width
            )));
        }
        Ok(Cow::Owned(m))
    }
}

/// Preloading threshold for [`open_layer`]: 1 GiB of `f64` values.
pub const PRELOAD_LIMIT_BYTES: u64 = 1 << 30;

/// Opens the feature files of `layer`. Files are loaded eagerly when their
/// promoted size stays under [`PRELOAD_LIMIT_BYTES`], otherwise lazily.
pub fn open_layer(manifest: &DatasetManifest, layer: u32) -> Result<Box<dyn FeatureSource>> {
    if !manifest.layers.contains(&layer) {
        return Err(Error::Data(format!(
            "layer {layer} not available (manifest lists {:?})",
            manifest.layers
        )));
    }
    let mut paths = Vec::with_capacity(manifest.records.len());
    let mut bytes = 0u64;
    for r in &manifest.records {
        let p = manifest.feature_path(r, layer);
        let meta = std::fs::metadata(&p).map_err(|_| {
            Error::Data(format!("layer {layer}: missing feature file {}", p.display()))
        })?;
        bytes += meta.len().saturating_sub(HEADER_LEN as u64) * 2;
        paths.push(p);
    }
    let disk = DiskFeatures {
        paths,
        width: manifest.d_enc,
    };
    if bytes > PRELOAD_LIMIT_BYTES {
        return Ok(Box::new(disk));
    }
    let items = (0..disk.len())
        .map(|i| disk.load(i).map(Cow::into_owned))
        .collect::<Result<Vec<_>>>()?;
    Ok(Box::new(InMemoryFeatures::new(items)))
}
