//! Complete VAD model: front end normalization, encoder and heads over one
//! parameter store.

use alloc::vec;
use alloc::vec::Vec;

use crate::audio::AudioBuffer;
use crate::autodiff::{Tape, Var};
use crate::config::{EncoderConfig, ModelConfig};
use crate::encoders::{Encoder, EncoderStream};
use crate::error::Result;
use crate::features::{self, Cmvn, FbankStream, FeatureMatrix, NUM_MELS};
use crate::heads::{self, FramePosteriors, Heads};
use crate::tensor::{Initializer, ParamId, ParamStore, Tensor};

pub const CMVN_MEAN: &str = "frontend.cmvn.mean";
pub const CMVN_ISTD: &str = "frontend.cmvn.inv_std";

/// Encoder output frame shift.
pub const FRAME_SHIFT_MS: u32 = 20;

#[derive(Debug, Clone)]
pub struct VadModel {
    config: ModelConfig,
    store: ParamStore,
    encoder: Encoder,
    heads: Heads,
    cmvn_mean: ParamId,
    cmvn_istd: ParamId,
}

/// Supervision for one utterance on the encoder's output grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Targets {
    pub vad: Vec<usize>,
    pub tokens: Option<Vec<usize>>,
    pub punct: Vec<usize>,
}

/// Component losses of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct Losses {
    pub total: Var,
    pub vad: Var,
    pub ctc: Option<Var>,
    pub punc: Option<Var>,
}

pub fn encoder_input_dim(cfg: &EncoderConfig) -> usize {
    if cfg.consumes_stacked() {
        2 * NUM_MELS
    } else {
        NUM_MELS
    }
}

impl VadModel {
    /// Freshly initialized model.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut init = Initializer::new(seed);
        Self::assemble(&config, &mut store, Some(&mut init))?;
        Self::from_params(config, store)
    }

    /// Binds a model to an existing parameter store, checking every tensor.
    pub fn from_params(config: ModelConfig, mut store: ParamStore) -> Result<Self> {
        config.validate()?;
        let (encoder, heads, cmvn_mean, cmvn_istd) = Self::assemble(&config, &mut store, None)?;
        Ok(Self {
            config,
            store,
            encoder,
            heads,
            cmvn_mean,
            cmvn_istd,
        })
    }

    fn assemble(
        config: &ModelConfig,
        store: &mut ParamStore,
        mut init: Option<&mut Initializer>,
    ) -> Result<(Encoder, Heads, ParamId, ParamId)> {
        let dim = encoder_input_dim(&config.encoder);
        if config.encoder.input_dim() != dim {
            return Err(crate::error::Error::Config(alloc::format!(
                "{} encoder reads {dim}-dim features, config says input_dim = {}",
                config.encoder.kind(),
                config.encoder.input_dim()
            )));
        }
        let (mean, istd) = if init.is_some() {
            (
                store.insert(CMVN_MEAN, vec![dim], vec![0.0; dim])?,
                store.insert(CMVN_ISTD, vec![dim], vec![1.0; dim])?,
            )
        } else {
            let m = store.require(CMVN_MEAN)?;
            let s = store.require(CMVN_ISTD)?;
            for id in [m, s] {
                if store.get(id).dims != [dim] {
                    return Err(crate::error::Error::Config(alloc::format!(
                        "tensor `{}` has dims {:?}, config expects [{dim}]",
                        store.get(id).name,
                        store.get(id).dims
                    )));
                }
            }
            (m, s)
        };
        let encoder = Encoder::build(&config.encoder, store, init.as_deref_mut())?;
        let heads = Heads::build(&config.heads, config.encoder.output_dim(), store, init)?;
        Ok((encoder, heads, mean, istd))
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn into_store(self) -> ParamStore {
        self.store
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn heads(&self) -> &Heads {
        &self.heads
    }

    pub fn cmvn(&self) -> Cmvn {
        Cmvn {
            mean: self.store.data(self.cmvn_mean).iter().map(|&v| v as f64).collect(),
            inv_std: self.store.data(self.cmvn_istd).iter().map(|&v| v as f64).collect(),
        }
    }

    pub fn set_cmvn(&mut self, cmvn: &Cmvn) {
        let to32 = |v: &[f64]| v.iter().map(|&x| x as f32).collect::<Vec<f32>>();
        self.store.get_mut(self.cmvn_mean).data = to32(&cmvn.mean);
        self.store.get_mut(self.cmvn_istd).data = to32(&cmvn.inv_std);
    }

    /// Un-normalized encoder input: raw 10 ms log-mel or stacked pairs.
    pub fn raw_input(&self, fbank: &FeatureMatrix) -> Result<Tensor> {
        if self.config.encoder.consumes_stacked() {
            Ok(features::downsample2(fbank)?.frames)
        } else {
            Ok(fbank.frames.clone())
        }
    }

    /// Normalized encoder input for an utterance.
    pub fn encoder_input(&self, fbank: &FeatureMatrix) -> Result<Tensor> {
        let mut x = self.raw_input(fbank)?;
        self.cmvn().apply(&mut x);
        Ok(x)
    }

    /// Number of encoder output frames for `t` 10 ms feature frames.
    pub fn output_frames(&self, t: usize) -> usize {
        if self.config.encoder.consumes_stacked() {
            t / 2
        } else {
            crate::kernels::conv_out_len(t).unwrap_or(0)
        }
    }

    /// Frame posteriors for a whole utterance. Streaming-capable encoders
    /// go through [`FrameStream`] so offline and streaming runs coincide.
    pub fn posteriors(&self, audio: &AudioBuffer) -> Result<FramePosteriors> {
        if self.config.encoder.is_streaming() {
            let mut s = self.frame_stream()?;
            let mut probs = Vec::new();
            s.push(audio.samples(), |p| probs.push(p));
            return FramePosteriors::new(probs, FRAME_SHIFT_MS);
        }
        if features::frame_count(audio.samples().len()).is_none() {
            return FramePosteriors::new(Vec::new(), FRAME_SHIFT_MS);
        }
        let fb = features::fbank(audio)?;
        let x = self.encoder_input(&fb)?;
        if x.rows() == 0 {
            return FramePosteriors::new(Vec::new(), FRAME_SHIFT_MS);
        }
        let h = self.encoder.infer(&self.store, &x)?;
        heads::vad_classify(&h, &self.heads.vad, &self.store, FRAME_SHIFT_MS)
    }

    pub fn frame_stream(&self) -> Result<FrameStream<'_>> {
        Ok(FrameStream {
            model: self,
            fbank: FbankStream::new(),
            encoder: self.encoder.streamer(&self.store)?,
            cmvn: self.cmvn(),
            stacked: vec![0.0; encoder_input_dim(&self.config.encoder)],
            half: false,
        })
    }

    /// Recorded forward of all heads and the weighted objective.
    pub fn forward_losses(&self, tape: &mut Tape, input: &Tensor, targets: &Targets, training: bool) -> Result<Losses> {
        let w = self.config.heads.weights;
        let x = tape.input(input.clone())?;
        let h = self.encoder.forward(tape, &self.store, x, training)?;
        let vad_logits = self.heads.vad.forward(tape, &self.store, h)?;
        let vad = tape.cross_entropy(vad_logits, &targets.vad)?;
        let ctc = match (&targets.tokens, w.asr > 0.0) {
            (Some(tokens), true) => {
                let logits = self.heads.ctc.forward(tape, &self.store, h)?;
                let lp = tape.log_softmax(logits)?;
                Some(tape.ctc(lp, tokens)?)
            }
            _ => None,
        };
        let punc = if w.punc > 0.0 {
            let logits = self.heads.punc.forward(tape, &self.store, h)?;
            Some(tape.cross_entropy(logits, &targets.punct)?)
        } else {
            None
        };
        let total = heads::multitask_objective(tape, vad, ctc, punc, &w)?;
        Ok(Losses { total, vad, ctc, punc })
    }

    /// Greedy CTC transcription of an utterance's encoder input.
    pub fn transcribe(&self, input: &Tensor) -> Result<Vec<usize>> {
        let h = self.encoder.infer(&self.store, input)?;
        let c = self.heads.ctc.fan_out;
        let mut logits = vec![0.0; h.rows() * c];
        for t in 0..h.rows() {
            self.heads.ctc.row(&self.store, h.row(t), &mut logits[t * c..(t + 1) * c]);
        }
        Ok(heads::ctc_greedy_decode(&Tensor::matrix(h.rows(), c, logits)?))
    }
}

/// Frame-synchronous posterior stream: samples in, one speech probability
/// per 20 ms encoder frame out.
#[derive(Debug, Clone)]
pub struct FrameStream<'m> {
    model: &'m VadModel,
    fbank: FbankStream,
    encoder: EncoderStream,
    cmvn: Cmvn,
    stacked: Vec<f64>,
    half: bool,
}

impl FrameStream<'_> {
    pub fn reset(&mut self) {
        self.fbank.reset();
        self.encoder.reset();
        self.half = false;
    }

    pub fn push(&mut self, samples: &[f32], mut emit: impl FnMut(f64)) {
        let model = self.model;
        let store = &model.store;
        let head = &model.heads.vad;
        let stacked_input = model.config.encoder.consumes_stacked();
        let (encoder, stacked, half, cmvn) = (&mut self.encoder, &mut self.stacked, &mut self.half, &self.cmvn);
        let mut on_hidden = |h: &[f64]| {
            let mut logits = [0.0; 2];
            head.row(store, h, &mut logits);
            emit(heads::speech_prob(&logits));
        };
        self.fbank.push(samples, |row| {
            if stacked_input {
                if !*half {
                    stacked[..NUM_MELS].copy_from_slice(row);
                    *half = true;
                    return;
                }
                stacked[NUM_MELS..].copy_from_slice(row);
                *half = false;
            } else {
                stacked.copy_from_slice(row);
            }
            cmvn.apply_row(stacked);
            encoder.push(store, stacked, &mut on_hidden);
        });
    }
}
