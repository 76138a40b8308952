//! Dataset manifest: a header block of `key: value` lines, a `---` separator,
//! then one whitespace-separated record per line:
//!
//! ```text
//! format: attnpool-manifest-1
//! classes: anger,happiness,sadness,neutral
//! folds: 5
//! d_enc: 768
//! layers: 1,2,3,4,5,6,7,8,9,10,11,12
//! model_size: small
//! ---
//! # id        label  group  fold  features
//! Ses01F_001  0      1      0     feats/L{layer}/Ses01F_001.fea
//! ```
//!
//! `{layer}` in the feature path is replaced by the encoder layer index; paths
//! are relative to the manifest's directory. `#` starts a comment line.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::fea::ModelSize;
use crate::error::{Error, Result};

pub const MANIFEST_FORMAT: &str = "attnpool-manifest-1";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UtteranceRecord {
    pub id: String,
    pub label: usize,
    /// Speaker group or session.
    pub group: u32,
    pub fold: usize,
    /// Feature path template, may contain `{layer}`.
    pub features: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub classes: Vec<String>,
    pub folds: usize,
    pub d_enc: usize,
    pub layers: Vec<u32>,
    pub model_size: Option<ModelSize>,
    pub records: Vec<UtteranceRecord>,
    /// Directory that relative feature paths resolve against.
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn feature_path(&self, record: &UtteranceRecord, layer: u32) -> PathBuf {
        let rel = record.features.replace("{layer}", &layer.to_string());
        self.base_dir.join(rel)
    }

    /// Record indices `(train, test)` for holding out `fold`.
    pub fn split(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        self.records
            .iter()
            .enumerate()
            .map(|(i, _)| i)
            .partition(|&i| self.records[i].fold != fold)
    }

    /// Checks every invariant; with `check_files`, also that each referenced
    /// feature file exists for every listed layer.
    pub fn validate(&self, check_files: bool) -> Result<()> {
        self.validate_with_lines(check_files, None)
    }

    fn validate_with_lines(&self, check_files: bool, lines: Option<&[usize]>) -> Result<()> {
        if self.classes.len() < 2 {
            return Err(Error::Config(format!(
                "manifest needs at least 2 classes, found {}",
                self.classes.len()
            )));
        }
        if self.folds == 0 {
            return Err(Error::Config("manifest fold count must be positive".into()));
        }
        let line_of = |i: usize| lines.map_or(i + 1, |l| l[i]);
        let mut seen_folds = vec![false; self.folds];
        let mut ids = HashSet::new();
        for (i, r) in self.records.iter().enumerate() {
            if r.label >= self.classes.len() {
                return Err(Error::LabelOutOfRange {
                    line: line_of(i),
                    label: r.label,
                    classes: self.classes.len(),
                });
            }
            if r.fold >= self.folds {
                return Err(Error::FoldOutOfRange {
                    line: line_of(i),
                    fold: r.fold,
                    k: self.folds,
                });
            }
            if !ids.insert(r.id.as_str()) {
                return Err(Error::Parse {
                    line: line_of(i),
                    msg: format!("duplicate utterance id {:?}", r.id),
                });
            }
            seen_folds[r.fold] = true;
        }
        if let Some(fold) = seen_folds.iter().position(|s| !s) {
            return Err(Error::MissingFold { fold });
        }
        if check_files {
            for r in &self.records {
                for &layer in &self.layers {
                    let p = self.feature_path(r, layer);
                    if !p.is_file() {
                        return Err(Error::DanglingFile { path: p });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let join = |xs: &[u32]| xs.iter().map(u32::to_string).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        writeln!(s, "format: {MANIFEST_FORMAT}").unwrap();
        writeln!(s, "classes: {}", self.classes.join(",")).unwrap();
        writeln!(s, "folds: {}", self.folds).unwrap();
        writeln!(s, "d_enc: {}", self.d_enc).unwrap();
        writeln!(s, "layers: {}", join(&self.layers)).unwrap();
        if let Some(m) = self.model_size {
            writeln!(s, "model_size: {}", m.as_str()).unwrap();
        }
        s.push_str("---\n# id\tlabel\tgroup\tfold\tfeatures\n");
        for r in &self.records {
            writeln!(s, "{}\t{}\t{}\t{}\t{}", r.id, r.label, r.group, r.fold, r.features).unwrap();
        }
        s
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

fn parse_list<T: std::str::FromStr>(value: &str, line: usize, key: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("bad {key} entry {s:?}"),
            })
        })
        .collect()
}

fn parse_num<T: std::str::FromStr>(value: &str, line: usize, what: &str) -> Result<T> {
    value.trim().parse().map_err(|_| Error::Parse {
        line,
        msg: format!("bad {what} {value:?}"),
    })
}

/// Parses manifest text without touching the filesystem.
pub fn parse_manifest(text: &str, base_dir: impl Into<PathBuf>) -> Result<DatasetManifest> {
    let (m, _) = parse_inner(text, base_dir.into())?;
    Ok(m)
}

fn parse_inner(text: &str, base_dir: PathBuf) -> Result<(DatasetManifest, Vec<usize>)> {
    let mut classes = None;
    let mut folds = None;
    let mut d_enc = None;
    let mut layers = None;
    let mut model_size = None;
    let mut records = Vec::new();
    let mut record_lines = Vec::new();
    let mut in_body = false;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if !in_body {
            if trimmed == "---" {
                in_body = true;
                continue;
            }
            let (key, value) = trimmed.split_once(':').ok_or_else(|| Error::Parse {
                line,
                msg: format!("expected `key: value`, got {trimmed:?}"),
            })?;
            let value = value.trim();
            match key.trim() {
                "format" if value == MANIFEST_FORMAT => {}
                "format" => {
                    return Err(Error::Parse {
                        line,
                        msg: format!("unsupported manifest format {value:?}"),
                    })
                }
                "classes" => {
                    classes = Some(
                        value
                            .split(',')
                            .map(|c| c.trim().to_string())
                            .filter(|c| !c.is_empty())
                            .collect::<Vec<_>>(),
                    )
                }
                "folds" => folds = Some(parse_num(value, line, "fold count")?),
                "d_enc" => d_enc = Some(parse_num(value, line, "d_enc")?),
                "layers" => layers = Some(parse_list(value, line, "layers")?),
                "model_size" => {
                    model_size = Some(value.parse().map_err(|_| Error::Parse {
                        line,
                        msg: format!("unknown model size {value:?}"),
                    })?)
                }
                other => {
                    return Err(Error::Parse {
                        line,
                        msg: format!("unknown header key {other:?}"),
                    })
                }
            }
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(Error::Parse {
                line,
                msg: format!("expected 5 fields (id label group fold features), got {}", fields.len()),
            });
        }
        records.push(UtteranceRecord {
            id: fields[0].to_string(),
            label: parse_num(fields[1], line, "label")?,
            group: parse_num(fields[2], line, "group")?,
            fold: parse_num(fields[3], line, "fold")?,
            features: fields[4].to_string(),
        });
        record_lines.push(line);
    }

    let missing = |key: &str| Error::Parse {
        line: 0,
        msg: format!("missing header key {key:?}"),
    };
    if !in_body {
        return Err(Error::Parse {
            line: 0,
            msg: "missing `---` separator".into(),
        });
    }
    let manifest = DatasetManifest {
        classes: classes.ok_or_else(|| missing("classes"))?,
        folds: folds.ok_or_else(|| missing("folds"))?,
        d_enc: d_enc.ok_or_else(|| missing("d_enc"))?,
        layers: layers.unwrap_or_else(|| vec![1]),
        model_size,
        records,
        base_dir,
    };
    Ok((manifest, record_lines))
}

/// Reads and validates a manifest file.
pub fn load_manifest(path: impl AsRef<Path>, check_files: bool) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let (m, lines) = parse_inner(&text, base)?;
    m.validate_with_lines(check_files, Some(&lines))?;
    Ok(m)
}
