//! Report emission. All files are plain text with LF endings and fixed float
//! formatting, so identical inputs produce identical bytes.
//!
//! ```text
//! metrics.csv            fold,n,wa,ua,f1 per fold, then `mean` and `std` rows
//! per_class.csv          fold,class,support,precision,recall,f1
//! confusion_fold<k>.csv  one confusion matrix per fold
//! confusion_total.csv    sum over folds
//! summary.txt            mean ± std table (percent), with reference row if given
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Aggregate, ConfusionMatrix, FoldReport, MeanStd, Reference};
use crate::error::{Error, Result};

#[derive(Clone, Debug, Default)]
pub struct ReportContext {
    pub title: String,
    /// Echoed verbatim at the top of `summary.txt`.
    pub config: Vec<(String, String)>,
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let p = dir.join(name);
    fs::write(&p, contents).map_err(|e| Error::io(&p, e))
}

pub fn emit_report(
    out_dir: impl AsRef<Path>,
    folds: &[FoldReport],
    aggregate: &Aggregate,
    ctx: &ReportContext,
    reference: Option<&Reference>,
) -> Result<()> {
    let dir = out_dir.as_ref();
    let first = folds
        .first()
        .ok_or_else(|| Error::Data("no fold reports to emit".into()))?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut csv = String::from("fold,n,wa,ua,f1\n");
    for f in folds {
        writeln!(
            csv,
            "{},{},{:.6},{:.6},{:.6}",
            f.fold,
            f.confusion.total(),
            f.wa,
            f.ua,
            f.f1
        )
        .unwrap();
    }
    let total_n: u64 = folds.iter().map(|f| f.confusion.total()).sum();
    let a = aggregate;
    writeln!(csv, "mean,{total_n},{:.6},{:.6},{:.6}", a.wa.mean, a.ua.mean, a.f1.mean).unwrap();
    writeln!(csv, "std,{total_n},{:.6},{:.6},{:.6}", a.wa.std, a.ua.std, a.f1.std).unwrap();
    write(dir, "metrics.csv", &csv)?;

    let mut pc = String::from("fold,class,support,precision,recall,f1\n");
    for f in folds {
        for (name, s) in f.confusion.classes().iter().zip(&f.per_class) {
            writeln!(
                pc,
                "{},{},{},{:.6},{:.6},{:.6}",
                f.fold, name, s.support, s.precision, s.recall, s.f1
            )
            .unwrap();
        }
    }
    write(dir, "per_class.csv", &pc)?;

    let mut total = ConfusionMatrix::new(first.confusion.classes().to_vec());
    for f in folds {
        write(dir, &format!("confusion_fold{}.csv", f.fold), &f.confusion.to_csv())?;
        total.merge(&f.confusion)?;
    }
    write(dir, "confusion_total.csv", &total.to_csv())?;

    write(dir, "summary.txt", &summary_text(aggregate, ctx, reference))
}

fn summary_text(a: &Aggregate, ctx: &ReportContext, reference: Option<&Reference>) -> String {
    let mut s = String::new();
    if !ctx.title.is_empty() {
        writeln!(s, "{}\n", ctx.title).unwrap();
    }
    for (k, v) in &ctx.config {
        writeln!(s, "{k}: {v}").unwrap();
    }
    if !ctx.config.is_empty() {
        s.push('\n');
    }
    writeln!(s, "{:<12} {:>16} {:>16} {:>16}", "", "WA", "UA", "F1").unwrap();
    writeln!(
        s,
        "{:<12} {:>16} {:>16} {:>16}",
        format!("run (k={})", a.folds),
        a.wa.format_percent(),
        a.ua.format_percent(),
        a.f1.format_percent()
    )
    .unwrap();
    if let Some(r) = reference {
        writeln!(
            s,
            "{:<12} {:>16} {:>16} {:>16}",
            "published",
            r.wa.format_plain(),
            r.ua.format_plain(),
            r.f1.as_ref().map_or_else(|| "-".to_string(), MeanStd::format_plain)
        )
        .unwrap();
        writeln!(s, "\nreference: {}", r.key).unwrap();
    }
    s
}

/// One encoder layer's cross-validation outcome.
#[derive(Clone, Debug)]
pub struct SweepRow {
    pub layer: u32,
    pub aggregate: Aggregate,
    pub reference: Option<Reference>,
}

/// Consolidated layer × {WA, UA, F1} table (rates as fractions, references in percent).
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from(
        "layer,wa_mean,wa_std,ua_mean,ua_std,f1_mean,f1_std,ref_wa,ref_ua,ref_f1\n",
    );
    for r in rows {
        let a = &r.aggregate;
        write!(
            s,
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            r.layer, a.wa.mean, a.wa.std, a.ua.mean, a.ua.std, a.f1.mean, a.f1.std
        )
        .unwrap();
        match &r.reference {
            Some(rf) => writeln!(
                s,
                ",{:.2},{:.2},{}",
                rf.wa.mean,
                rf.ua.mean,
                rf.f1.map_or(String::new(), |f| format!("{:.2}", f.mean))
            )
            .unwrap(),
            None => s.push_str(",,,\n"),
        }
    }
    s
}
