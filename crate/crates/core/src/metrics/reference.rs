//! Published reference numbers, embedded from `data/published_reference.csv`.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use super::MeanStd;
use crate::error::{Error, Result};
use crate::featurestore::ModelSize;
use crate::model::PoolingMethod;

const REFERENCE_CSV: &str = include_str!("../../data/published_reference.csv");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Dataset {
    Shemo,
    Iemocap,
}

impl fmt::Display for Dataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Shemo => "shemo",
            Self::Iemocap => "iemocap",
        })
    }
}

impl FromStr for Dataset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "shemo" => Ok(Self::Shemo),
            "iemocap" => Ok(Self::Iemocap),
            other => Err(Error::Config(format!("unknown dataset {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ReferenceKey {
    pub dataset: Dataset,
    pub size: ModelSize,
    pub pooling: PoolingMethod,
    /// `None` selects the headline comparison, `Some(l)` the per-layer tables.
    pub layer: Option<u32>,
}

impl fmt::Display for ReferenceKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.dataset, self.size.as_str(), self.pooling)?;
        if let Some(l) = self.layer {
            write!(f, "/layer{l}")?;
        }
        Ok(())
    }
}

/// Percent-valued reference (mean ± std across folds).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Reference {
    pub key: ReferenceKey,
    pub wa: MeanStd,
    pub ua: MeanStd,
    pub f1: Option<MeanStd>,
}

fn parse_table() -> Vec<Reference> {
    let mut out = Vec::new();
    for line in REFERENCE_CSV.lines().skip_while(|l| l.starts_with('#')).skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let num = |i: usize| -> f64 { f[i].parse().expect("reference table number") };
        let f1 = (!f[9].is_empty()).then(|| MeanStd { mean: num(9), std: num(10) });
        out.push(Reference {
            key: ReferenceKey {
                dataset: f[1].parse().expect("dataset"),
                size: f[2].parse().expect("size"),
                pooling: f[3].parse().expect("pooling"),
                layer: (!f[4].is_empty()).then(|| f[4].parse().expect("layer")),
            },
            wa: MeanStd { mean: num(5), std: num(6) },
            ua: MeanStd { mean: num(7), std: num(8) },
            f1,
        });
    }
    out
}

pub fn all_references() -> &'static [Reference] {
    static TABLE: OnceLock<Vec<Reference>> = OnceLock::new();
    TABLE.get_or_init(parse_table)
}

pub fn published_reference(
    dataset: Dataset,
    size: ModelSize,
    pooling: PoolingMethod,
    layer: Option<u32>,
) -> Result<Reference> {
    let key = ReferenceKey {
        dataset,
        size,
        pooling,
        layer,
    };
    all_references()
        .iter()
        .find(|r| r.key == key)
        .copied()
        .ok_or_else(|| Error::Lookup(key.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn headline_values() {
        let r = published_reference(Dataset::Shemo, ModelSize::Small, PoolingMethod::Qkv, None).unwrap();
        assert_eq!((r.wa.mean, r.ua.mean), (89.19, 83.07));
        assert_eq!(r.wa.format_plain(), "89.19 ± 2.65");
        assert!(r.f1.is_none());
        let r = published_reference(Dataset::Iemocap, ModelSize::Tiny, PoolingMethod::Mean, None).unwrap();
        assert_eq!((r.wa.mean, r.ua.mean), (68.22, 68.53));
    }

    #[test]
    fn per_layer_values() {
        let r = published_reference(Dataset::Shemo, ModelSize::Small, PoolingMethod::Attentive, Some(8))
            .unwrap();
        assert_eq!((r.wa.mean, r.ua.mean, r.f1.unwrap().mean), (88.94, 82.86, 88.79));
    }

    #[test]
    fn table_is_complete() {
        let refs = all_references();
        assert_eq!(refs.iter().filter(|r| r.key.layer.is_none()).count(), 12);
        for size in [ModelSize::Tiny, ModelSize::Small] {
            for pooling in PoolingMethod::ALL {
                for ds in [Dataset::Shemo, Dataset::Iemocap] {
                    for l in 1..=size.encoder_layers() {
                        assert!(published_reference(ds, size, pooling, Some(l)).is_ok());
                    }
                }
            }
        }
        assert_eq!(refs.len(), 12 + 2 * 3 * 16);
    }

    #[test]
    fn unknown_key_is_lookup_error() {
        let err = published_reference(Dataset::Shemo, ModelSize::Tiny, PoolingMethod::Qkv, Some(5));
        assert!(matches!(err, Err(Error::Lookup(_))));
    }
}
