//! `FEA1` feature container.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "FEA1"
//! 4       4     frames T  (u32 little-endian)
//! 8       4     width d   (u32 little-endian)
//! 12      4*T*d f32 little-endian values, frame-major
//! ```
//!
//! No padding, no footer. Values are promoted to `f64` on read.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::diffcore::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"FEA1";
pub const HEADER_LEN: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelSize {
    Tiny,
    Small,
}

impl ModelSize {
    pub fn encoder_width(self) -> usize {
        match self {
            Self::Tiny => 384,
            Self::Small => 768,
        }
    }

    pub fn encoder_layers(self) -> u32 {
        match self {
            Self::Tiny => 4,
            Self::Small => 12,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Tiny => "tiny",
            Self::Small => "small",
        }
    }
}

impl std::str::FromStr for ModelSize {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tiny" => Ok(Self::Tiny),
            "small" => Ok(Self::Small),
            other => Err(Error::Config(format!("unknown model size {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SourceTags {
    pub model_size: Option<ModelSize>,
    pub layer: u32,
    pub utterance_id: String,
}

/// `T x d` encoder output for one utterance.
#[derive(Clone, Debug, PartialEq)]
pub struct RepresentationMatrix {
    pub data: Tensor,
    pub tags: Option<SourceTags>,
}

impl RepresentationMatrix {
    pub fn new(data: Tensor) -> Self {
        Self { data, tags: None }
    }

    pub fn frames(&self) -> usize {
        self.data.rows()
    }

    pub fn width(&self) -> usize {
        self.data.cols()
    }
}

pub fn encode_features(m: &Tensor) -> Result<Vec<u8>> {
    if let Some(index) = m.as_slice().iter().position(|v| !v.is_finite()) {
        return Err(Error::Value { index });
    }
    if m.rows() == 0 || m.cols() == 0 {
        return Err(Error::Format(format!("empty matrix {:?}", m.shape())));
    }
    let to_u32 = |n: usize| {
        u32::try_from(n).map_err(|_| Error::Format(format!("dimension {n} exceeds u32")))
    };
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * m.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&to_u32(m.rows())?.to_le_bytes());
    out.extend_from_slice(&to_u32(m.cols())?.to_le_bytes());
    for (index, &v) in m.as_slice().iter().enumerate() {
        let f = v as f32;
        if !f.is_finite() {
            return Err(Error::Value { index });
        }
        out.extend_from_slice(&f.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_features(bytes: &[u8]) -> Result<Tensor> {
    if bytes.len() < HEADER_LEN {
        if bytes.len() >= 4 && &bytes[..4] != MAGIC {
            return Err(Error::Format(format!("bad magic {:?}", &bytes[..4])));
        }
        return Err(Error::Length {
            expected: HEADER_LEN,
            actual: bytes.len(),
        });
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}",
            String::from_utf8_lossy(&bytes[..4])
        )));
    }
    let frames = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let width = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if frames == 0 || width == 0 {
        return Err(Error::Format(format!("empty shape {frames}x{width}")));
    }
    let expected = frames
        .checked_mul(width)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::Format(format!("shape {frames}x{width} overflows")))?;
    if bytes.len() != expected {
        return Err(Error::Length {
            expected,
            actual: bytes.len(),
        });
    }
    let mut data = Vec::with_capacity(frames * width);
    for (index, chunk) in bytes[HEADER_LEN..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::Value { index });
        }
        data.push(f64::from(v));
    }
    Tensor::from_vec(frames, width, data)
}

pub fn write_features(m: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_features(m)?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn read_features(path: impl AsRef<Path>) -> Result<RepresentationMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(RepresentationMatrix::new(decode_features(&bytes)?))
}
