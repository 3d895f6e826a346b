//! Architecture and training configuration records with shipped defaults.

use crate::error::{Error, Result};

/// DFSMN stack: input linear, `blocks` memory blocks, output linear.
#[derive(Debug, Clone, PartialEq)]
pub struct DfsmnConfig {
    pub input_dim: usize,
    pub linear_dim: usize,
    pub proj_dim: usize,
    pub blocks: usize,
    /// Look-back order N1.
    pub lorder: usize,
    /// Lookahead order N2; 0 makes the stack causal.
    pub rorder: usize,
    pub lstride: usize,
    pub rstride: usize,
}

impl Default for DfsmnConfig {
    fn default() -> Self {
        Self {
            input_dim: 160,
            linear_dim: 256,
            proj_dim: 1024,
            blocks: 10,
            lorder: 10,
            rorder: 0,
            lstride: 1,
            rstride: 1,
        }
    }
}

impl DfsmnConfig {
    pub fn online() -> Self {
        Self::default()
    }

    pub fn offline() -> Self {
        Self {
            rorder: 10,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lstride == 0 || self.rstride == 0 {
            return Err(Error::Config("dfsmn strides must be >= 1".into()));
        }
        nonzero(&[
            ("input_dim", self.input_dim),
            ("linear_dim", self.linear_dim),
            ("proj_dim", self.proj_dim),
        ])
    }
}

/// Conv2d subsampling front end followed by RWKV blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct RwkvConfig {
    pub input_dim: usize,
    pub conv_channels: usize,
    pub dim: usize,
    pub ffn_dim: usize,
    pub blocks: usize,
    pub dropout: f64,
}

impl Default for RwkvConfig {
    fn default() -> Self {
        Self {
            input_dim: 80,
            conv_channels: 256,
            dim: 256,
            ffn_dim: 1024,
            blocks: 4,
            dropout: 0.1,
        }
    }
}

impl RwkvConfig {
    pub fn conv_freq_out(&self) -> usize {
        (self.input_dim - 3) / 2 + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim < 3 {
            return Err(Error::Config("rwkv input_dim must be >= 3".into()));
        }
        dropout_ok(self.dropout)?;
        nonzero(&[
            ("conv_channels", self.conv_channels),
            ("dim", self.dim),
            ("ffn_dim", self.ffn_dim),
        ])
    }
}

/// SAN-M stack over fixed-length chunks.
#[derive(Debug, Clone, PartialEq)]
pub struct SanmConfig {
    pub input_dim: usize,
    pub dim: usize,
    pub ffn_dim: usize,
    pub heads: usize,
    pub blocks: usize,
    pub lmem: usize,
    pub rmem: usize,
    pub chunk_frames: usize,
    pub dropout: f64,
}

impl Default for SanmConfig {
    fn default() -> Self {
        Self {
            input_dim: 160,
            dim: 320,
            ffn_dim: 1280,
            heads: 4,
            blocks: 4,
            lmem: 10,
            rmem: 10,
            chunk_frames: 500,
            dropout: 0.1,
        }
    }
}

impl SanmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || self.dim % self.heads != 0 {
            return Err(Error::Config(alloc::format!(
                "sanm dim {} not divisible by {} heads",
                self.dim,
                self.heads
            )));
        }
        if self.chunk_frames == 0 {
            return Err(Error::Config("sanm chunk_frames must be >= 1".into()));
        }
        dropout_ok(self.dropout)?;
        nonzero(&[("input_dim", self.input_dim), ("ffn_dim", self.ffn_dim)])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EncoderConfig {
    Dfsmn(DfsmnConfig),
    Rwkv(RwkvConfig),
    Sanm(SanmConfig),
}

impl EncoderConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Dfsmn(_) => "dfsmn",
            Self::Rwkv(_) => "rwkv",
            Self::Sanm(_) => "sanm",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Dfsmn(c) => c.validate(),
            Self::Rwkv(c) => c.validate(),
            Self::Sanm(c) => c.validate(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Self::Dfsmn(c) => c.input_dim,
            Self::Rwkv(c) => c.input_dim,
            Self::Sanm(c) => c.input_dim,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Self::Dfsmn(c) => c.linear_dim,
            Self::Rwkv(c) => c.dim,
            Self::Sanm(c) => c.dim,
        }
    }

    /// Whether batch and frame-by-frame inference coincide.
    pub fn is_streaming(&self) -> bool {
        match self {
            Self::Dfsmn(c) => c.rorder == 0,
            Self::Rwkv(_) => true,
            Self::Sanm(_) => false,
        }
    }

    /// Input is 10 ms log-mel frames (RWKV) or stacked 20 ms pairs.
    pub fn consumes_stacked(&self) -> bool {
        !matches!(self, Self::Rwkv(_))
    }
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self::Dfsmn(DfsmnConfig::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiTaskWeights {
    pub vad: f64,
    pub asr: f64,
    pub punc: f64,
}

impl Default for MultiTaskWeights {
    fn default() -> Self {
        Self {
            vad: 1.0,
            asr: 0.5,
            punc: 0.5,
        }
    }
}

impl MultiTaskWeights {
    pub const SINGLE_TASK: Self = Self {
        vad: 1.0,
        asr: 0.0,
        punc: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        let all = [self.vad, self.asr, self.punc];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config(alloc::format!("negative or non-finite loss weight in {all:?}")));
        }
        if all.iter().all(|w| *w == 0.0) {
            return Err(Error::Config("at least one loss weight must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadsConfig {
    /// CTC label inventory size, excluding the blank.
    pub vocab_size: usize,
    pub punct_classes: usize,
    pub weights: MultiTaskWeights,
}

impl Default for HeadsConfig {
    fn default() -> Self {
        Self {
            vocab_size: 30,
            punct_classes: crate::heads::PUNCT_CLASSES,
            weights: MultiTaskWeights::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub heads: HeadsConfig,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.heads.weights.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub clip_norm: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            learning_rate: 1e-2,
            clip_norm: 5.0,
            batch_size: 8,
            seed: 0,
        }
    }
}

fn nonzero(fields: &[(&str, usize)]) -> Result<()> {
    match fields.iter().find(|(_, v)| *v == 0) {
        Some((name, _)) => Err(Error::Config(alloc::format!("{name} must be positive"))),
        None => Ok(()),
    }
}

fn dropout_ok(rate: f64) -> Result<()> {
    if (0.0..1.0).contains(&rate) {
        Ok(())
    } else {
        Err(Error::Config(alloc::format!("dropout {rate} outside [0, 1)")))
    }
}
