//! Checkpoint directory layout:
//!
//! ```text
//! <dir>/model.cfg          key = value lines, then one `param <name> <rows> <cols>` per tensor
//! <dir>/<name>.fea         each parameter tensor as an FEA1 container
//! ```
//!
//! Parameters are stored at single precision, so `load(save(m))` rounds each
//! value to `f32`; a second save of the loaded model is byte-identical.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{HeadModel, ModelConfig};
use crate::error::{Error, Result};
use crate::featurestore::{read_features, write_features};

pub const CHECKPOINT_CONFIG_FILE: &str = "model.cfg";
const FORMAT: &str = "attnpool-checkpoint-1";

pub fn save_checkpoint(model: &HeadModel, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let c = model.config();
    let mut s = String::new();
    writeln!(s, "format = {FORMAT}").unwrap();
    writeln!(s, "pooling = {}", c.pooling).unwrap();
    writeln!(s, "d_enc = {}", c.d_enc).unwrap();
    writeln!(s, "d_model = {}", c.d_model).unwrap();
    writeln!(s, "num_heads = {}", c.num_heads).unwrap();
    writeln!(s, "d_hidden = {}", c.d_hidden).unwrap();
    writeln!(s, "num_classes = {}", c.num_classes).unwrap();
    writeln!(s, "dropout_rate = {}", c.dropout_rate).unwrap();
    writeln!(s, "encoder_layer = {}", c.encoder_layer).unwrap();
    for (name, t) in model.named_params() {
        writeln!(s, "param {name} {} {}", t.rows(), t.cols()).unwrap();
        write_features(t, dir.join(format!("{name}.fea")))?;
    }
    let cfg = dir.join(CHECKPOINT_CONFIG_FILE);
    fs::write(&cfg, s).map_err(|e| Error::io(&cfg, e))
}

pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<HeadModel> {
    let dir = dir.as_ref();
    let cfg_path = dir.join(CHECKPOINT_CONFIG_FILE);
    let text = fs::read_to_string(&cfg_path).map_err(|e| Error::io(&cfg_path, e))?;

    let mut kv = std::collections::HashMap::new();
    let mut params = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let bad = || Error::Parse {
            line: i + 1,
            msg: format!("bad checkpoint line {line:?}"),
        };
        if let Some(rest) = line.strip_prefix("param ") {
            let f: Vec<&str> = rest.split_whitespace().collect();
            let [name, r, c] = f[..] else { return Err(bad()) };
            let r: usize = r.parse().map_err(|_| bad())?;
            let c: usize = c.parse().map_err(|_| bad())?;
            params.push((name.to_string(), (r, c)));
        } else {
            let (k, v) = line.split_once('=').ok_or_else(bad)?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    let get = |k: &str| {
        kv.get(k).ok_or_else(|| Error::Parse {
            line: 0,
            msg: format!("checkpoint missing {k:?}"),
        })
    };
    if get("format")? != FORMAT {
        return Err(Error::Format(format!("unsupported checkpoint {:?}", get("format")?)));
    }
    let num = |k: &str| -> Result<usize> {
        get(k)?.parse().map_err(|_| Error::Parse {
            line: 0,
            msg: format!("bad value for {k:?}"),
        })
    };
    let config = ModelConfig {
        d_enc: num("d_enc")?,
        d_model: num("d_model")?,
        num_heads: num("num_heads")?,
        d_hidden: num("d_hidden")?,
        num_classes: num("num_classes")?,
        pooling: get("pooling")?.parse()?,
        dropout_rate: get("dropout_rate")?
            .parse()
            .map_err(|_| Error::Config("bad dropout_rate".into()))?,
        encoder_layer: num("encoder_layer")? as u32,
    };
    let mut model = HeadModel::zeros(config)?;
    let names: Vec<(String, (usize, usize))> = model
        .named_params()
        .into_iter()
        .map(|(n, t)| (n, t.shape()))
        .collect();
    if names != params {
        return Err(Error::Format(format!(
            "checkpoint parameter list does not match config ({} vs {} tensors)",
            params.len(),
            names.len()
        )));
    }
    for ((name, shape), slot) in names.iter().zip(model.params_mut()) {
        let t = read_features(dir.join(format!("{name}.fea")))?.data;
        if t.shape() != *shape {
            return Err(Error::Shape {
                op: "load_checkpoint",
                left: t.shape(),
                right: *shape,
            });
        }
        *slot = t;
    }
    Ok(model)
}
