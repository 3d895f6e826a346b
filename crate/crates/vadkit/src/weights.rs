//! `VADW` tensor container.
//!
//! Layout, all little-endian: magic `VADW`, version u32, tensor count u32,
//! then per tensor a u16 name length, the UTF-8 name, a u8 rank, rank u32
//! dims and the f32 payload. A CRC32 of every preceding byte closes the file.
//! Feature dumps reuse the container with one tensor per utterance.

use std::collections::HashSet;
use std::path::Path;

use vadkit_core::config::ModelConfig;
use vadkit_core::encoders::ENCODER_PREFIX;
use vadkit_core::model::VadModel;
use vadkit_core::tensor::ParamStore;

use crate::config::{parse_config, render_config, FileConfig};
use crate::error::{Error, Result};
use crate::fsutil;

pub const MAGIC: &[u8; 4] = b"VADW";
pub const VERSION: u32 = 1;

/// Serialized config text, one byte per element.
pub const META_CONFIG: &str = "meta.config";
/// CTC vocabulary as Unicode scalar values; token id = index + 1.
pub const META_VOCAB: &str = "meta.vocab";

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

pub fn encode(tensors: &[NamedTensor]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.push(t.dims.len() as u8);
        for &d in &t.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.bytes.get(self.pos..self.pos.checked_add(n)?)?;
        self.pos += n;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<Vec<NamedTensor>> {
    let bad = |msg: String| Error::Weights {
        path: path.into(),
        msg,
    };
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(bad("missing VADW header".into()));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(trailer.try_into().unwrap());
    let actual = crc32fast::hash(body);
    if stored != actual {
        return Err(bad(format!("CRC mismatch (stored {stored:08x}, computed {actual:08x})")));
    }
    let mut c = Cursor { bytes: body, pos: 4 };
    let truncated = || bad("truncated".into());
    let version = c.u32().ok_or_else(truncated)?;
    if version != VERSION {
        return Err(bad(format!("format version {version}, expected {VERSION}")));
    }
    let count = c.u32().ok_or_else(truncated)? as usize;
    let mut names = HashSet::new();
    let mut out = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let len = c.take(2).map(|b| u16::from_le_bytes([b[0], b[1]])).ok_or_else(truncated)? as usize;
        let name = std::str::from_utf8(c.take(len).ok_or_else(truncated)?)
            .map_err(|_| bad("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = c.take(1).ok_or_else(truncated)?[0] as usize;
        let dims = (0..rank)
            .map(|_| c.u32().map(|d| d as usize).ok_or_else(truncated))
            .collect::<Result<Vec<_>>>()?;
        let n = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(truncated)?;
        let raw = c.take(n.checked_mul(4).ok_or_else(truncated)?).ok_or_else(truncated)?;
        let data = raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
        if !names.insert(name.clone()) {
            return Err(bad(format!("tensor `{name}` appears twice")));
        }
        out.push(NamedTensor { name, dims, data });
    }
    if c.pos != body.len() {
        return Err(bad(format!("{} trailing bytes after the last tensor", body.len() - c.pos)));
    }
    Ok(out)
}

pub fn save(tensors: &[NamedTensor], path: impl AsRef<Path>) -> Result<()> {
    fsutil::write_atomic(path.as_ref(), &encode(tensors))
}

pub fn load(path: impl AsRef<Path>) -> Result<Vec<NamedTensor>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

/// A trained model with the settings and vocabulary it was trained with.
#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub config: FileConfig,
    pub model: VadModel,
    pub vocab: Vec<char>,
}

pub fn bundle_tensors(b: &ModelBundle) -> Vec<NamedTensor> {
    let text = render_config(&b.config);
    let mut out = vec![
        NamedTensor {
            name: META_CONFIG.into(),
            dims: vec![text.len()],
            data: text.bytes().map(f32::from).collect(),
        },
        NamedTensor {
            name: META_VOCAB.into(),
            dims: vec![b.vocab.len()],
            data: b.vocab.iter().map(|&c| c as u32 as f32).collect(),
        },
    ];
    out.extend(b.model.store().iter().map(|(_, p)| NamedTensor {
        name: p.name.clone(),
        dims: p.dims.clone(),
        data: p.data.clone(),
    }));
    out
}

pub fn save_bundle(b: &ModelBundle, path: impl AsRef<Path>) -> Result<()> {
    save(&bundle_tensors(b), path)
}

pub fn load_bundle(path: impl AsRef<Path>) -> Result<ModelBundle> {
    let path = path.as_ref();
    let tensors = load(path)?;
    let bad = |msg: String| Error::Weights {
        path: path.into(),
        msg,
    };
    let meta = |name: &str| {
        tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| bad(format!("missing `{name}`")))
    };
    let bytes: Vec<u8> = meta(META_CONFIG)?.data.iter().map(|&b| b as u8).collect();
    let text = String::from_utf8(bytes).map_err(|_| bad("embedded config is not UTF-8".into()))?;
    let config = parse_config(&text, &path.join(META_CONFIG))?;
    let vocab = meta(META_VOCAB)?
        .data
        .iter()
        .map(|&c| char::from_u32(c as u32).ok_or_else(|| bad(format!("vocabulary entry {c} is not a character"))))
        .collect::<Result<Vec<_>>>()?;
    let mut store = ParamStore::new();
    for t in tensors.iter().filter(|t| !t.name.starts_with("meta.")) {
        store.insert(&t.name, t.dims.clone(), t.data.clone())?;
    }
    let model = bind(config.model.clone(), store)?;
    Ok(ModelBundle { config, model, vocab })
}

fn bind(cfg: ModelConfig, store: ParamStore) -> Result<VadModel> {
    let expected = VadModel::new(cfg.clone(), 0)?;
    let names: HashSet<&str> = expected.store().iter().map(|(_, p)| p.name.as_str()).collect();
    if let Some((_, extra)) = store.iter().find(|(_, p)| !names.contains(p.name.as_str())) {
        return Err(vadkit_core::Error::Config(format!("tensor `{}` is not part of the configured model", extra.name)).into());
    }
    Ok(VadModel::from_params(cfg, store)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SizeReport {
    pub encoder_params: usize,
    pub bytes: usize,
}

impl SizeReport {
    /// Decimal megabytes.
    pub fn mb(&self) -> f64 {
        self.bytes as f64 / 1e6
    }

    pub fn mib(&self) -> f64 {
        self.bytes as f64 / (1024.0 * 1024.0)
    }
}

/// Encoder-only footprint at 4 bytes per parameter.
pub fn param_size_report(tensors: &[NamedTensor]) -> SizeReport {
    let encoder_params = tensors
        .iter()
        .filter(|t| t.name.starts_with(ENCODER_PREFIX))
        .map(|t| t.data.len())
        .sum();
    SizeReport {
        encoder_params,
        bytes: encoder_params * 4,
    }
}
