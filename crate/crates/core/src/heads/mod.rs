//! Multi-task output heads: VAD classifier, CTC character head and
//! punctuation classifier, plus the weighted training objective.

pub mod ctc;

use alloc::vec::Vec;

use crate::autodiff::{Tape, Var};
use crate::config::{HeadsConfig, MultiTaskWeights};
use crate::encoders::{Builder, Linear};
use crate::error::{Error, Result};
use crate::tensor::{Initializer, ParamStore, Tensor};

pub use ctc::{ctc_greedy_decode, ctc_loss};

pub const HEADS_PREFIX: &str = "heads.";

/// Punctuation inventory, indexed by class id.
pub const PUNCT_LABELS: [&str; 5] = ["none", "comma", "period", "question", "pause"];
pub const PUNCT_CLASSES: usize = PUNCT_LABELS.len();
pub const PUNCT_NONE: usize = 0;
pub const PUNCT_COMMA: usize = 1;
pub const PUNCT_PERIOD: usize = 2;
pub const PUNCT_PAUSE: usize = 4;

pub const NON_SPEECH: usize = 0;
pub const SPEECH: usize = 1;

/// Per-frame speech probability.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePosteriors {
    pub probs: Vec<f64>,
    pub frame_shift_ms: u32,
}

impl FramePosteriors {
    pub fn new(probs: Vec<f64>, frame_shift_ms: u32) -> Result<Self> {
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Contract(alloc::format!("posterior {p} outside [0, 1]")));
        }
        Ok(Self { probs, frame_shift_ms })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct Heads {
    pub vad: Linear,
    pub ctc: Linear,
    pub punc: Linear,
    pub cfg: HeadsConfig,
}

impl Heads {
    pub fn build(cfg: &HeadsConfig, input_dim: usize, store: &mut ParamStore, init: Option<&mut Initializer>) -> Result<Self> {
        let mut b = Builder::new(store, init, HEADS_PREFIX);
        Ok(Self {
            vad: b.linear("vad", input_dim, 2, true)?,
            ctc: b.linear("ctc", input_dim, cfg.vocab_size + 1, true)?,
            punc: b.linear("punc", input_dim, cfg.punct_classes, true)?,
            cfg: cfg.clone(),
        })
    }
}

/// Speech probability from one pair of `[non-speech, speech]` logits.
pub fn speech_prob(logits: &[f64]) -> f64 {
    let m = logits[0].max(logits[1]);
    let e0 = libm::exp(logits[0] - m);
    let e1 = libm::exp(logits[1] - m);
    e1 / (e0 + e1)
}

/// Linear `d → 2` then softmax; returns the speech column.
pub fn vad_classify(hidden: &Tensor, head: &Linear, store: &ParamStore, frame_shift_ms: u32) -> Result<FramePosteriors> {
    if hidden.cols() != head.fan_in {
        return Err(crate::error::shape_err("vad_classify", hidden.dims(), &[head.fan_in, 2]));
    }
    let mut logits = [0.0; 2];
    let probs = (0..hidden.rows())
        .map(|t| {
            head.row(store, hidden.row(t), &mut logits);
            speech_prob(&logits)
        })
        .collect();
    FramePosteriors::new(probs, frame_shift_ms)
}

/// Framewise punctuation logits `T × P`.
pub fn punctuation_classify(hidden: &Tensor, head: &Linear, store: &ParamStore) -> Result<Tensor> {
    if hidden.cols() != head.fan_in {
        return Err(crate::error::shape_err("punctuation_classify", hidden.dims(), &[head.fan_in]));
    }
    let p = head.fan_out;
    let mut out = alloc::vec![0.0; hidden.rows() * p];
    for t in 0..hidden.rows() {
        head.row(store, hidden.row(t), &mut out[t * p..(t + 1) * p]);
    }
    Tensor::matrix(hidden.rows(), p, out)
}

/// Mean framewise `−log softmax(logits)[label]`.
pub fn ce_loss(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    let mut tape = Tape::inference();
    let l = tape.input(logits.clone())?;
    let loss = tape.cross_entropy(l, labels)?;
    Ok(tape.scalar(loss))
}

/// `λ_vad·vad + λ_asr·ctc + λ_punc·punc` on plain values.
pub fn multitask_loss(vad_ce: f64, ctc: f64, punc_ce: f64, w: &MultiTaskWeights) -> Result<f64> {
    w.validate()?;
    if ![vad_ce, ctc, punc_ce].iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite { op: "multitask_loss" });
    }
    Ok(w.vad * vad_ce + w.asr * ctc + w.punc * punc_ce)
}

/// Recorded weighted objective. Components with zero weight are skipped
/// entirely, so zero auxiliary weights reproduce the single-task graph.
pub fn multitask_objective(tape: &mut Tape, vad_ce: Var, ctc: Option<Var>, punc_ce: Option<Var>, w: &MultiTaskWeights) -> Result<Var> {
    w.validate()?;
    let mut total = tape.scale(vad_ce, w.vad)?;
    for (term, weight) in [(ctc, w.asr), (punc_ce, w.punc)] {
        if let (Some(v), true) = (term, weight > 0.0) {
            let s = tape.scale(v, weight)?;
            total = tape.add(total, s)?;
        }
    }
    Ok(total)
}

/// Frame `i` (centered at `i·shift + shift/2`) is speech iff its center lies
/// inside a segment.
pub fn frame_labels(segments: &[crate::audio::SpeechSegment], frames: usize, shift_ms: u32) -> Vec<usize> {
    (0..frames)
        .map(|i| {
            let center2 = (2 * i as u64 + 1) * shift_ms as u64;
            let inside = segments
                .iter()
                .any(|s| 2 * s.start_ms <= center2 && center2 < 2 * s.end_ms);
            if inside {
                SPEECH
            } else {
                NON_SPEECH
            }
        })
        .collect()
}

/// Frame-level punctuation targets: `none` inside speech, `comma` on the
/// last frame of a non-final speech run, `period` on the last frame of the
/// final run, `pause` on non-speech frames.
pub fn punctuation_labels(vad_labels: &[usize]) -> Vec<usize> {
    let last_speech = vad_labels.iter().rposition(|&l| l == SPEECH);
    vad_labels
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            if l != SPEECH {
                return PUNCT_PAUSE;
            }
            let run_ends = vad_labels.get(i + 1) != Some(&SPEECH);
            match (run_ends, Some(i) == last_speech) {
                (true, true) => PUNCT_PERIOD,
                (true, false) => PUNCT_COMMA,
                _ => PUNCT_NONE,
            }
        })
        .collect()
}
