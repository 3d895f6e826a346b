//! Speech encoders: DFSMN, RWKV with convolution subsampling, and chunked
//! SAN-M. Each encoder has a recorded forward for training and gradient
//! checks; the streaming-capable ones also have a frame-synchronous path.

pub mod dfsmn;
pub mod rwkv;
pub mod sanm;

use alloc::string::String;
use alloc::vec::Vec;

use crate::autodiff::{Tape, Var};
use crate::config::EncoderConfig;
use crate::error::{Error, Result};
use crate::tensor::{Initializer, ParamId, ParamStore, Tensor};

pub use dfsmn::{dfsmn_memory_block, Dfsmn, DfsmnStream};
pub use rwkv::{rwkv_wkv, Rwkv, RwkvStream};
pub use sanm::{chunk_sequence, Sanm};

/// How a parameter is initialized when created fresh.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Init {
    FanIn(usize),
    Const(f32),
    Uniform(f64, f64),
}

/// Creates parameters (with an initializer) or binds and shape-checks
/// existing ones (without).
pub(crate) struct Builder<'a> {
    store: &'a mut ParamStore,
    init: Option<&'a mut Initializer>,
    prefix: String,
}

impl<'a> Builder<'a> {
    pub(crate) fn new(store: &'a mut ParamStore, init: Option<&'a mut Initializer>, prefix: &str) -> Self {
        Self {
            store,
            init,
            prefix: prefix.into(),
        }
    }

    pub(crate) fn param(&mut self, name: &str, dims: &[usize], init: Init) -> Result<ParamId> {
        let full = alloc::format!("{}{}", self.prefix, name);
        let n: usize = dims.iter().product();
        match self.init.as_deref_mut() {
            Some(rng) => {
                let data = match init {
                    Init::FanIn(f) => rng.fan_in(n, f),
                    Init::Const(v) => alloc::vec![v; n],
                    Init::Uniform(lo, hi) => rng.uniform(n, lo, hi),
                };
                self.store.insert(&full, dims.to_vec(), data)
            }
            None => {
                let id = self.store.require(&full)?;
                let have = &self.store.get(id).dims;
                if have.as_slice() != dims {
                    return Err(Error::Config(alloc::format!(
                        "tensor `{full}` has dims {have:?}, config expects {dims:?}"
                    )));
                }
                Ok(id)
            }
        }
    }

    pub(crate) fn linear(&mut self, name: &str, fan_in: usize, fan_out: usize, bias: bool) -> Result<Linear> {
        let w = self.param(&alloc::format!("{name}.weight"), &[fan_in, fan_out], Init::FanIn(fan_in))?;
        let b = if bias {
            Some(self.param(&alloc::format!("{name}.bias"), &[fan_out], Init::FanIn(fan_in))?)
        } else {
            None
        };
        Ok(Linear { w, b, fan_in, fan_out })
    }

    pub(crate) fn layer_norm(&mut self, name: &str, dim: usize) -> Result<Norm> {
        Ok(Norm {
            gain: self.param(&alloc::format!("{name}.gain"), &[dim], Init::Const(1.0))?,
            bias: self.param(&alloc::format!("{name}.bias"), &[dim], Init::Const(0.0))?,
        })
    }
}

/// `y = x · W + b` with `W: in × out`.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = tape.param(store, self.w)?;
        let b = match self.b {
            Some(b) => Some(tape.param(store, b)?),
            None => None,
        };
        tape.linear(x, w, b)
    }

    pub fn row(&self, store: &ParamStore, x: &[f64], out: &mut [f64]) {
        crate::kernels::linear_row(x, store.data(self.w), self.b.map(|b| store.data(b)), out);
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Norm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl Norm {
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let g = tape.param(store, self.gain)?;
        let b = tape.param(store, self.bias)?;
        tape.layer_norm(x, g, b)
    }

    pub fn row(&self, store: &ParamStore, x: &[f64], out: &mut [f64]) {
        crate::kernels::layer_norm_row(x, store.data(self.gain), store.data(self.bias), out);
    }
}

#[derive(Debug, Clone)]
pub enum Encoder {
    Dfsmn(Dfsmn),
    Rwkv(Rwkv),
    Sanm(Sanm),
}

pub const ENCODER_PREFIX: &str = "encoder.";

impl Encoder {
    /// Registers fresh parameters under `encoder.` (with `init`) or binds to
    /// parameters already in `store`.
    pub fn build(cfg: &EncoderConfig, store: &mut ParamStore, init: Option<&mut Initializer>) -> Result<Self> {
        cfg.validate()?;
        let mut b = Builder::new(store, init, ENCODER_PREFIX);
        Ok(match cfg {
            EncoderConfig::Dfsmn(c) => Self::Dfsmn(Dfsmn::build(c.clone(), &mut b)?),
            EncoderConfig::Rwkv(c) => Self::Rwkv(Rwkv::build(c.clone(), &mut b)?),
            EncoderConfig::Sanm(c) => Self::Sanm(Sanm::build(c.clone(), &mut b)?),
        })
    }

    pub fn config(&self) -> EncoderConfig {
        match self {
            Self::Dfsmn(e) => EncoderConfig::Dfsmn(e.config().clone()),
            Self::Rwkv(e) => EncoderConfig::Rwkv(e.config().clone()),
            Self::Sanm(e) => EncoderConfig::Sanm(e.config().clone()),
        }
    }

    pub fn output_dim(&self) -> usize {
        self.config().output_dim()
    }

    /// Recorded forward over a whole feature sequence.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var, training: bool) -> Result<Var> {
        match self {
            Self::Dfsmn(e) => e.forward(tape, store, x),
            Self::Rwkv(e) => e.forward(tape, store, x, training),
            Self::Sanm(e) => e.forward(tape, store, x, training),
        }
    }

    /// Evaluation on a plain tensor. Streaming-capable encoders run their
    /// frame-synchronous path so that batch and streaming results agree
    /// bit for bit.
    pub fn infer(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
        match self.streamer(store) {
            Ok(mut s) => {
                let d = self.output_dim();
                let mut out = Vec::new();
                for t in 0..x.rows() {
                    s.push(store, x.row(t), |h| out.extend_from_slice(h));
                }
                Tensor::matrix(out.len() / d, d, out)
            }
            Err(Error::UnsupportedStreaming(_)) => {
                let mut tape = Tape::inference();
                let xv = tape.input(x.clone())?;
                let y = self.forward(&mut tape, store, xv, false)?;
                Ok(tape.value(y).clone())
            }
            Err(e) => Err(e),
        }
    }

    pub fn streamer(&self, store: &ParamStore) -> Result<EncoderStream> {
        match self {
            Self::Dfsmn(e) => Ok(EncoderStream::Dfsmn(e.stream(store)?)),
            Self::Rwkv(e) => Ok(EncoderStream::Rwkv(e.stream(store))),
            Self::Sanm(_) => Err(Error::UnsupportedStreaming("SAN-M runs offline over whole chunks".into())),
        }
    }

    /// Model-level lookahead in encoder frames; `None` for chunk-offline models.
    pub fn lookahead_frames(&self) -> Option<usize> {
        match self {
            Self::Dfsmn(e) => Some(e.lookahead_frames()),
            Self::Rwkv(_) => Some(0),
            Self::Sanm(_) => None,
        }
    }
}

/// Per-session recurrent context of a streaming encoder.
#[derive(Debug, Clone)]
pub enum EncoderStream {
    Dfsmn(DfsmnStream),
    Rwkv(RwkvStream),
}

impl EncoderStream {
    /// Consumes one input frame, calling `emit` for each hidden frame that
    /// becomes available.
    pub fn push(&mut self, store: &ParamStore, frame: &[f64], emit: impl FnMut(&[f64])) {
        match self {
            Self::Dfsmn(s) => s.push(store, frame, emit),
            Self::Rwkv(s) => s.push(store, frame, emit),
        }
    }

    pub fn reset(&mut self) {
        match self {
            Self::Dfsmn(s) => s.reset(),
            Self::Rwkv(s) => s.reset(),
        }
    }
}

/// Parameter count of the encoder a config would build.
pub fn encoder_param_count(cfg: &EncoderConfig) -> Result<usize> {
    let mut store = ParamStore::new();
    let mut init = Initializer::new(0);
    Encoder::build(cfg, &mut store, Some(&mut init))?;
    Ok(store.element_count(ENCODER_PREFIX))
}
