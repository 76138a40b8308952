use crate::error::{Error, Result};

/// `counts[i][j]` = utterances of true class `i` predicted as class `j`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: Vec<String>,
    counts: Vec<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassStats {
    pub support: u64,
    pub predicted: u64,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

impl ConfusionMatrix {
    pub fn new(classes: Vec<String>) -> Self {
        let n = classes.len();
        Self {
            classes,
            counts: vec![0; n * n],
        }
    }

    /// Unnamed classes `0..n`.
    pub fn with_size(n: usize) -> Self {
        Self::new((0..n).map(|i| i.to_string()).collect())
    }

    pub fn from_counts(rows: &[Vec<u64>]) -> Result<Self> {
        let n = rows.len();
        let mut m = Self::with_size(n);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n {
                return Err(Error::Shape {
                    op: "confusion",
                    left: (n, n),
                    right: (1, r.len()),
                });
            }
            m.counts[i * n..(i + 1) * n].copy_from_slice(r);
        }
        Ok(m)
    }

    pub fn from_pairs(classes: Vec<String>, truth: &[usize], predicted: &[usize]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::Data(format!(
                "{} true labels vs {} predictions",
                truth.len(),
                predicted.len()
            )));
        }
        let mut m = Self::new(classes);
        for (&t, &p) in truth.iter().zip(predicted) {
            m.record(t, p)?;
        }
        Ok(m)
    }

    pub fn record(&mut self, truth: usize, predicted: usize) -> Result<()> {
        let n = self.n();
        for idx in [truth, predicted] {
            if idx >= n {
                return Err(Error::Index { index: idx, len: n });
            }
        }
        self.counts[truth * n + predicted] += 1;
        Ok(())
    }

    /// Element-wise sum; class lists must agree.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if self.classes != other.classes {
            return Err(Error::Data("cannot merge confusion matrices over different classes".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.classes.len()
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.n() + predicted]
    }

    pub fn row_sum(&self, i: usize) -> u64 {
        let n = self.n();
        self.counts[i * n..(i + 1) * n].iter().sum()
    }

    pub fn col_sum(&self, j: usize) -> u64 {
        (0..self.n()).map(|i| self.get(i, j)).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n()).map(|i| self.get(i, i)).sum()
    }

    /// Relabels classes: new class `i` is old class `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n();
        assert_eq!(perm.len(), n);
        let mut out = Self::new(perm.iter().map(|&p| self.classes[p].clone()).collect());
        for i in 0..n {
            for j in 0..n {
                out.counts[i * n + j] = self.get(perm[i], perm[j]);
            }
        }
        out
    }

    pub fn class_stats(&self) -> Vec<ClassStats> {
        (0..self.n())
            .map(|i| {
                let tp = self.get(i, i) as f64;
                let support = self.row_sum(i);
                let predicted = self.col_sum(i);
                let ratio = |num: f64, den: u64| if den == 0 { 0.0 } else { num / den as f64 };
                let recall = ratio(tp, support);
                let precision = ratio(tp, predicted);
                let f1 = if precision + recall == 0.0 {
                    0.0
                } else {
                    2.0 * precision * recall / (precision + recall)
                };
                ClassStats {
                    support,
                    predicted,
                    recall,
                    precision,
                    f1,
                }
            })
            .collect()
    }

    /// CSV with a header row of predicted classes and one row per true class.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("true\\pred");
        for c in &self.classes {
            s.push(',');
            s.push_str(c);
        }
        s.push('\n');
        for i in 0..self.n() {
            s.push_str(&self.classes[i]);
            for j in 0..self.n() {
                s.push_str(&format!(",{}", self.get(i, j)));
            }
            s.push('\n');
        }
        s
    }

    /// Parses the layout written by [`to_csv`](Self::to_csv).
    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: String| Error::Parse { line, msg };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad(1, "empty confusion csv".into()))?;
        let classes: Vec<String> = header.split(',').skip(1).map(str::to_string).collect();
        let mut m = Self::new(classes);
        let mut rows = 0;
        for (i, line) in lines.enumerate() {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != m.n() + 1 || i >= m.n() || f[0] != m.classes[i] {
                return Err(bad(i + 2, format!("unexpected row {line:?}")));
            }
            let n = m.n();
            for (j, v) in f[1..].iter().enumerate() {
                m.counts[i * n + j] = v.parse().map_err(|_| bad(i + 2, format!("bad count {v:?}")))?;
            }
            rows += 1;
        }
        if rows != m.n() {
            return Err(bad(rows + 2, format!("expected {} rows, found {rows}", m.n())));
        }
        Ok(m)
    }
}

/// Overall accuracy: `trace / total`.
pub fn weighted_accuracy(c: &ConfusionMatrix) -> Result<f64> {
    let total = c.total();
    if total == 0 {
        return Err(Error::Data("empty confusion matrix".into()));
    }
    Ok(c.trace() as f64 / total as f64)
}

fn supported_mean(c: &ConfusionMatrix, f: impl Fn(&ClassStats) -> f64) -> Result<f64> {
    let stats: Vec<_> = c.class_stats().into_iter().filter(|s| s.support > 0).collect();
    if stats.is_empty() {
        return Err(Error::Data("no class has any support".into()));
    }
    Ok(stats.iter().map(f).sum::<f64>() / stats.len() as f64)
}

/// Mean per-class recall over classes with non-zero support.
pub fn unweighted_accuracy(c: &ConfusionMatrix) -> Result<f64> {
    supported_mean(c, |s| s.recall)
}

/// Unweighted mean of per-class F1 over classes with non-zero support.
pub fn macro_f1(c: &ConfusionMatrix) -> Result<f64> {
    supported_mean(c, |s| s.f1)
}
