//! Minibatch SGD over prepared utterances.

use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::audio::{AudioBuffer, SpeechSegment};
use crate::autodiff::Tape;
use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::features::{self, Cmvn};
use crate::heads::{self, ctc};
use crate::model::{Targets, VadModel, FRAME_SHIFT_MS};
use crate::tensor::Tensor;

/// One utterance on the encoder's input and output grids.
#[derive(Debug, Clone)]
pub struct Example {
    pub input: Tensor,
    pub targets: Targets,
}

/// Which loss drives the updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// The weighted sum configured on the model.
    MultiTask,
    /// VAD cross-entropy alone, bypassing the weighted objective.
    VadOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean per-utterance loss of each epoch.
    pub epoch_loss: Vec<f64>,
}

/// Un-normalized encoder input plus targets. Tokens that cannot fit the
/// utterance's CTC lattice are dropped so the VAD target still trains.
pub fn prepare_example(model: &VadModel, audio: &AudioBuffer, segments: &[SpeechSegment], tokens: Option<Vec<usize>>) -> Result<Example> {
    let fb = features::fbank(audio)?;
    let input = model.raw_input(&fb)?;
    let frames = model.output_frames(fb.num_frames());
    if frames == 0 {
        return Err(Error::TooShort(alloc::format!(
            "{} samples give no encoder frames",
            audio.samples().len()
        )));
    }
    let vad = heads::frame_labels(segments, frames, FRAME_SHIFT_MS);
    let punct = heads::punctuation_labels(&vad);
    let tokens = tokens.filter(|t| ctc::min_frames(t) <= frames);
    Ok(Example {
        input,
        targets: Targets { vad, tokens, punct },
    })
}

/// Estimates CMVN from the (un-normalized) training inputs, stores it in the
/// model and normalizes the inputs with the stored f32 statistics.
pub fn fit_cmvn(model: &mut VadModel, examples: &mut [Example]) {
    if let Some(c) = Cmvn::estimate(examples.iter().map(|e| &e.input)) {
        model.set_cmvn(&c);
    }
    let stored = model.cmvn();
    for e in examples.iter_mut() {
        stored.apply(&mut e.input);
    }
}

fn shuffle(order: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..order.len()).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        order.swap(i, j);
    }
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
}

/// Runs `cfg.epochs` of shuffled minibatch SGD with global-norm clipping.
/// Gradients are averaged over each batch. A non-finite loss or gradient
/// aborts with [`Error::Diverged`].
pub fn train(model: &mut VadModel, examples: &[Example], cfg: &TrainConfig, objective: Objective) -> Result<TrainReport> {
    if examples.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    if cfg.batch_size == 0 || !(cfg.learning_rate > 0.0) {
        return Err(Error::Config("batch size and learning rate must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        shuffle(&mut order, &mut rng);
        let mut total = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            model.store_mut().zero_grad();
            for &i in batch {
                let mut tape = Tape::with_seed(mix(cfg.seed, epoch as u64, (b * cfg.batch_size + i) as u64));
                let ex = &examples[i];
                let step = model.forward_losses(&mut tape, &ex.input, &ex.targets, true).and_then(|l| {
                    let loss = match objective {
                        Objective::MultiTask => l.total,
                        Objective::VadOnly => l.vad,
                    };
                    total += tape.scalar(loss);
                    let scaled = tape.scale(loss, 1.0 / batch.len() as f64)?;
                    tape.backward(scaled)
                });
                match step {
                    Ok(g) => g.accumulate_into(model.store_mut()),
                    Err(Error::NonFinite { .. }) => return Err(Error::Diverged { epoch }),
                    Err(e) => return Err(e),
                }
            }
            if !model.store().grad_norm().is_finite() {
                return Err(Error::Diverged { epoch });
            }
            model.store_mut().sgd_step(cfg.learning_rate, cfg.clip_norm);
        }
        let mean = total / examples.len() as f64;
        if !mean.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        epoch_loss.push(mean);
    }
    model.store_mut().zero_grad();
    Ok(TrainReport { epoch_loss })
}

/// Share of frames whose thresholded speech posterior (0.5) matches the
/// target, pooled over examples.
pub fn frame_accuracy(model: &VadModel, examples: &[Example]) -> Result<f64> {
    let (mut hit, mut n) = (0usize, 0usize);
    for ex in examples {
        let h = model.encoder().infer(model.store(), &ex.input)?;
        let post = heads::vad_classify(&h, &model.heads().vad, model.store(), FRAME_SHIFT_MS)?;
        for (p, &label) in post.probs.iter().zip(&ex.targets.vad) {
            hit += usize::from((*p >= 0.5) == (label == heads::SPEECH));
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::UndefinedMetric("accuracy over zero frames".into()));
    }
    Ok(hit as f64 / n as f64)
}
