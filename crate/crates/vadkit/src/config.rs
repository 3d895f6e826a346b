//! Sectioned `key = value` configuration files.
//!
//! ```text
//! [encoder]
//! type = rwkv
//! blocks = 2
//!
//! [vad]
//! smoothing = trailing
//! ```
//!
//! Every key has a default; unknown sections and keys are rejected with the
//! line they appear on. `#` and `;` start comments. Values may be quoted.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use vadkit_core::config::{
    DfsmnConfig, EncoderConfig, HeadsConfig, ModelConfig, MultiTaskWeights, RwkvConfig, SanmConfig, TrainConfig,
};
use vadkit_core::metrics::SCORING_GRID_MS;
use vadkit_core::segment::{Smoothing, VadDecisionConfig};

use crate::error::{Error, Result};
use crate::fsutil;

#[derive(Debug, Clone, PartialEq)]
pub struct FeaturesConfig {
    /// Fit per-dimension mean/variance normalization on the training set.
    pub cmvn: bool,
}

impl Default for FeaturesConfig {
    fn default() -> Self {
        Self { cmvn: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub grid_ms: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { grid_ms: SCORING_GRID_MS }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FileConfig {
    pub features: FeaturesConfig,
    pub model: ModelConfig,
    pub vad: VadDecisionConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

struct Entry<'a> {
    line: usize,
    section: &'a str,
    key: &'a str,
    value: &'a str,
}

fn strip_comment(line: &str) -> &str {
    let mut quoted = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => quoted = !quoted,
            '#' | ';' if !quoted => return &line[..i],
            _ => {}
        }
    }
    line
}

fn unquote(v: &str) -> &str {
    v.strip_prefix('"').and_then(|v| v.strip_suffix('"')).unwrap_or(v)
}

const SECTIONS: [&str; 6] = ["features", "encoder", "heads", "vad", "train", "eval"];

fn entries<'a>(text: &'a str, path: &Path) -> Result<Vec<Entry<'a>>> {
    let mut section = None;
    let mut out: Vec<Entry<'a>> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = strip_comment(raw).trim();
        if l.is_empty() {
            continue;
        }
        if let Some(name) = l.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim();
            if !SECTIONS.contains(&name) {
                return Err(Error::parse(path, line, format!("unknown section [{name}]")));
            }
            section = Some(name);
            continue;
        }
        let Some((key, value)) = l.split_once('=') else {
            return Err(Error::parse(path, line, format!("expected `key = value`, got `{l}`")));
        };
        let Some(section) = section else {
            return Err(Error::parse(path, line, "key outside of any section"));
        };
        let key = key.trim();
        if let Some(prev) = out.iter().find(|e| e.section == section && e.key == key) {
            return Err(Error::parse(path, line, format!("duplicate key `{key}` (first on line {})", prev.line)));
        }
        out.push(Entry {
            line,
            section,
            key,
            value: unquote(value.trim()),
        });
    }
    Ok(out)
}

fn value<T: FromStr>(e: &Entry<'_>, path: &Path) -> Result<T> {
    e.value.parse().map_err(|_| {
        Error::parse(
            path,
            e.line,
            format!("[{}] {}: cannot parse `{}` as {}", e.section, e.key, e.value, std::any::type_name::<T>()),
        )
    })
}

fn unknown(e: &Entry<'_>, path: &Path) -> Error {
    Error::parse(path, e.line, format!("unknown key `{}` in [{}]", e.key, e.section))
}

macro_rules! assign {
    ($e:expr, $path:expr, $target:expr; $($key:literal => $field:ident),* $(,)?) => {
        match $e.key {
            $($key => { $target.$field = value($e, $path)?; true })*
            _ => false,
        }
    };
}

pub fn parse_config(text: &str, path: &Path) -> Result<FileConfig> {
    let entries = entries(text, path)?;
    let mut cfg = FileConfig::default();

    let kind = entries
        .iter()
        .find(|e| e.section == "encoder" && e.key == "type")
        .map(|e| (e.value, e.line));
    cfg.model.encoder = match kind {
        None | Some(("dfsmn", _)) => EncoderConfig::Dfsmn(DfsmnConfig::default()),
        Some(("rwkv", _)) => EncoderConfig::Rwkv(RwkvConfig::default()),
        Some(("sanm", _)) => EncoderConfig::Sanm(SanmConfig::default()),
        Some((other, line)) => {
            return Err(Error::parse(path, line, format!("encoder type `{other}`: expected dfsmn, rwkv or sanm")))
        }
    };

    for e in &entries {
        let known = match e.section {
            "features" => assign!(e, path, cfg.features; "cmvn" => cmvn),
            "encoder" => {
                e.key == "type"
                    || match &mut cfg.model.encoder {
                        EncoderConfig::Dfsmn(c) => assign!(e, path, c;
                            "input_dim" => input_dim, "linear_dim" => linear_dim, "proj_dim" => proj_dim,
                            "blocks" => blocks, "lorder" => lorder, "rorder" => rorder,
                            "lstride" => lstride, "rstride" => rstride),
                        EncoderConfig::Rwkv(c) => assign!(e, path, c;
                            "input_dim" => input_dim, "conv_channels" => conv_channels, "dim" => dim,
                            "ffn_dim" => ffn_dim, "blocks" => blocks, "dropout" => dropout),
                        EncoderConfig::Sanm(c) => assign!(e, path, c;
                            "input_dim" => input_dim, "dim" => dim, "ffn_dim" => ffn_dim, "heads" => heads,
                            "blocks" => blocks, "lmem" => lmem, "rmem" => rmem,
                            "chunk_frames" => chunk_frames, "dropout" => dropout),
                    }
            }
            "heads" => {
                let h: &mut HeadsConfig = &mut cfg.model.heads;
                let w: &mut MultiTaskWeights = &mut h.weights;
                assign!(e, path, h; "vocab_size" => vocab_size)
                    || assign!(e, path, w; "weight_vad" => vad, "weight_asr" => asr, "weight_punc" => punc)
            }
            "vad" => match e.key {
                "smoothing" => {
                    cfg.vad.smoothing = match e.value {
                        "centered" => Smoothing::Centered,
                        "trailing" => Smoothing::Trailing,
                        other => {
                            return Err(Error::parse(
                                path,
                                e.line,
                                format!("smoothing `{other}`: expected centered or trailing"),
                            ))
                        }
                    };
                    true
                }
                _ => assign!(e, path, cfg.vad;
                    "on_threshold" => on_threshold, "off_threshold" => off_threshold,
                    "min_speech_ms" => min_speech_ms, "max_silence_ms" => max_silence_ms,
                    "pad_ms" => pad_ms, "median_window" => median_window),
            },
            "train" => assign!(e, path, cfg.train;
                "epochs" => epochs, "learning_rate" => learning_rate, "clip_norm" => clip_norm,
                "batch_size" => batch_size, "seed" => seed),
            "eval" => assign!(e, path, cfg.eval; "grid_ms" => grid_ms),
            _ => false,
        };
        if !known {
            return Err(unknown(e, path));
        }
    }
    cfg.model.validate()?;
    cfg.vad.validate()?;
    if cfg.eval.grid_ms == 0 {
        return Err(Error::Usage(format!("{}: [eval] grid_ms must be positive", path.display())));
    }
    Ok(cfg)
}

pub fn read_config(path: impl AsRef<Path>) -> Result<FileConfig> {
    let path = path.as_ref();
    parse_config(&fsutil::read_to_string(path)?, path)
}

/// Every setting spelled out; parses back to the same config.
pub fn render_config(cfg: &FileConfig) -> String {
    let mut s = String::new();
    let kv = |s: &mut String, k: &str, v: &dyn std::fmt::Display| {
        let _ = writeln!(s, "{k} = {v}");
    };
    s.push_str("[features]\n");
    kv(&mut s, "cmvn", &cfg.features.cmvn);
    s.push_str("\n[encoder]\n");
    kv(&mut s, "type", &cfg.model.encoder.kind());
    match &cfg.model.encoder {
        EncoderConfig::Dfsmn(c) => {
            for (k, v) in [
                ("input_dim", c.input_dim),
                ("linear_dim", c.linear_dim),
                ("proj_dim", c.proj_dim),
                ("blocks", c.blocks),
                ("lorder", c.lorder),
                ("rorder", c.rorder),
                ("lstride", c.lstride),
                ("rstride", c.rstride),
            ] {
                kv(&mut s, k, &v);
            }
        }
        EncoderConfig::Rwkv(c) => {
            for (k, v) in [
                ("input_dim", c.input_dim),
                ("conv_channels", c.conv_channels),
                ("dim", c.dim),
                ("ffn_dim", c.ffn_dim),
                ("blocks", c.blocks),
            ] {
                kv(&mut s, k, &v);
            }
            kv(&mut s, "dropout", &c.dropout);
        }
        EncoderConfig::Sanm(c) => {
            for (k, v) in [
                ("input_dim", c.input_dim),
                ("dim", c.dim),
                ("ffn_dim", c.ffn_dim),
                ("heads", c.heads),
                ("blocks", c.blocks),
                ("lmem", c.lmem),
                ("rmem", c.rmem),
                ("chunk_frames", c.chunk_frames),
            ] {
                kv(&mut s, k, &v);
            }
            kv(&mut s, "dropout", &c.dropout);
        }
    }
    let h = &cfg.model.heads;
    s.push_str("\n[heads]\n");
    kv(&mut s, "vocab_size", &h.vocab_size);
    kv(&mut s, "weight_vad", &h.weights.vad);
    kv(&mut s, "weight_asr", &h.weights.asr);
    kv(&mut s, "weight_punc", &h.weights.punc);
    let v = &cfg.vad;
    s.push_str("\n[vad]\n");
    kv(&mut s, "on_threshold", &v.on_threshold);
    kv(&mut s, "off_threshold", &v.off_threshold);
    kv(&mut s, "min_speech_ms", &v.min_speech_ms);
    kv(&mut s, "max_silence_ms", &v.max_silence_ms);
    kv(&mut s, "pad_ms", &v.pad_ms);
    kv(&mut s, "median_window", &v.median_window);
    let smoothing = match v.smoothing {
        Smoothing::Centered => "centered",
        Smoothing::Trailing => "trailing",
    };
    kv(&mut s, "smoothing", &smoothing);
    let t = &cfg.train;
    s.push_str("\n[train]\n");
    kv(&mut s, "epochs", &t.epochs);
    kv(&mut s, "learning_rate", &t.learning_rate);
    kv(&mut s, "clip_norm", &t.clip_norm);
    kv(&mut s, "batch_size", &t.batch_size);
    kv(&mut s, "seed", &t.seed);
    s.push_str("\n[eval]\n");
    kv(&mut s, "grid_ms", &cfg.eval.grid_ms);
    s
}
