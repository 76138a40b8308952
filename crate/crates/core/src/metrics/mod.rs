//! Classification metrics, fold aggregation, reports and published reference values.
//!
//! WA is overall accuracy (`trace / total`). UA is the mean per-class recall.
//! F1 is macro-averaged. Classes with no support in a fold are left out of the
//! UA and F1 averages. Fold spreads use the sample standard deviation.

mod confusion;
mod reference;
mod report;

pub use confusion::{macro_f1, unweighted_accuracy, weighted_accuracy, ClassStats, ConfusionMatrix};
pub use reference::{all_references, published_reference, Dataset, Reference, ReferenceKey};
pub use report::{emit_report, sweep_csv, ReportContext, SweepRow};

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct FoldReport {
    pub fold: usize,
    pub confusion: ConfusionMatrix,
    pub wa: f64,
    pub ua: f64,
    pub f1: f64,
    pub per_class: Vec<ClassStats>,
}

impl FoldReport {
    pub fn from_confusion(fold: usize, confusion: ConfusionMatrix) -> Result<Self> {
        Ok(Self {
            fold,
            wa: weighted_accuracy(&confusion)?,
            ua: unweighted_accuracy(&confusion)?,
            f1: macro_f1(&confusion)?,
            per_class: confusion.class_stats(),
            confusion,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Mean and sample standard deviation; a single value has std 0.
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Data("cannot aggregate zero values".into()));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Ok(Self { mean, std })
    }

    /// Rates in `[0, 1]` rendered as percentages, e.g. `89.19 ± 2.65`.
    pub fn format_percent(&self) -> String {
        format!("{:.2} ± {:.2}", 100.0 * self.mean, 100.0 * self.std)
    }

    /// Values already in percent.
    pub fn format_plain(&self) -> String {
        format!("{:.2} ± {:.2}", self.mean, self.std)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Aggregate {
    pub folds: usize,
    pub wa: MeanStd,
    pub ua: MeanStd,
    pub f1: MeanStd,
}

impl Aggregate {
    pub fn from_folds(folds: &[FoldReport]) -> Result<Self> {
        let pick = |f: fn(&FoldReport) -> f64| MeanStd::of(&folds.iter().map(f).collect::<Vec<_>>());
        Ok(Self {
            folds: folds.len(),
            wa: pick(|r| r.wa)?,
            ua: pick(|r| r.ua)?,
            f1: pick(|r| r.f1)?,
        })
    }
}
