//! Posterior smoothing, hysteresis decisions and segment post-processing,
//! shared by the offline path and the incremental session.
//!
//! The offline extractor is the session fed all frames at once, so the two
//! produce the same segments for any chunking of the input.

use alloc::collections::VecDeque;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::audio::{canonicalize, SpeechSegment};
use crate::config::EncoderConfig;
use crate::error::{Error, Result};
use crate::heads::FramePosteriors;
use crate::model::{FrameStream, VadModel, FRAME_SHIFT_MS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Smoothing {
    /// Median over `[i − h, i + h]`; needs `h` frames of lookahead.
    Centered,
    /// Median over `[i − w + 1, i]`; no lookahead.
    Trailing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VadDecisionConfig {
    pub on_threshold: f64,
    pub off_threshold: f64,
    pub min_speech_ms: u64,
    pub max_silence_ms: u64,
    pub pad_ms: u64,
    pub median_window: usize,
    pub smoothing: Smoothing,
}

impl Default for VadDecisionConfig {
    fn default() -> Self {
        Self {
            on_threshold: 0.6,
            off_threshold: 0.4,
            min_speech_ms: 100,
            max_silence_ms: 300,
            pad_ms: 50,
            median_window: 5,
            smoothing: Smoothing::Centered,
        }
    }
}

impl VadDecisionConfig {
    pub fn validate(&self) -> Result<()> {
        let (on, off) = (self.on_threshold, self.off_threshold);
        if !(0.0..=1.0).contains(&on) || !(0.0..=1.0).contains(&off) || off > on {
            return Err(Error::Config(alloc::format!(
                "thresholds need 0 <= off <= on <= 1, got on={on} off={off}"
            )));
        }
        if self.median_window == 0 || self.median_window % 2 == 0 {
            return Err(Error::Config(alloc::format!(
                "median window must be odd and positive, got {}",
                self.median_window
            )));
        }
        Ok(())
    }

    /// Frames of smoothing lookahead.
    pub fn smoothing_delay_frames(&self) -> usize {
        match self.smoothing {
            Smoothing::Centered => self.median_window / 2,
            Smoothing::Trailing => 0,
        }
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values[values.len() / 2]
}

/// Offline median smoothing with edge replication.
pub fn smooth(probs: &[f64], window: usize, mode: Smoothing) -> Vec<f64> {
    let mut s = Smoother::new(window, mode);
    let mut out = Vec::with_capacity(probs.len());
    for &p in probs {
        s.push(p, |v| out.push(v));
    }
    s.finish(|v| out.push(v));
    out
}

#[derive(Debug, Clone)]
struct Smoother {
    window: usize,
    mode: Smoothing,
    raw: VecDeque<f64>,
    /// Absolute index of `raw[0]`.
    base: usize,
    total: usize,
    next_out: usize,
    scratch: Vec<f64>,
}

impl Smoother {
    fn new(window: usize, mode: Smoothing) -> Self {
        Self {
            window,
            mode,
            raw: VecDeque::new(),
            base: 0,
            total: 0,
            next_out: 0,
            scratch: Vec::with_capacity(window),
        }
    }

    fn lookahead(&self) -> usize {
        match self.mode {
            Smoothing::Centered => self.window / 2,
            Smoothing::Trailing => 0,
        }
    }

    fn value(&mut self, j: usize, last: usize) -> f64 {
        let half = self.window / 2;
        let (lo, hi) = match self.mode {
            Smoothing::Centered => (j as isize - half as isize, j + half),
            Smoothing::Trailing => (j as isize - self.window as isize + 1, j),
        };
        self.scratch.clear();
        for k in lo..=hi as isize {
            let idx = (k.max(0) as usize).min(last);
            self.scratch.push(self.raw[idx - self.base]);
        }
        median(&mut self.scratch)
    }

    fn push(&mut self, p: f64, mut emit: impl FnMut(f64)) {
        self.raw.push_back(p);
        self.total += 1;
        while self.next_out + self.lookahead() < self.total {
            let v = self.value(self.next_out, self.total - 1);
            emit(v);
            self.next_out += 1;
        }
        self.trim();
    }

    fn finish(&mut self, mut emit: impl FnMut(f64)) {
        while self.next_out < self.total {
            let v = self.value(self.next_out, self.total - 1);
            emit(v);
            self.next_out += 1;
        }
    }

    fn trim(&mut self) {
        let keep_from = self.next_out.saturating_sub(self.window);
        while self.base < keep_from {
            self.raw.pop_front();
            self.base += 1;
        }
    }
}

/// Hysteresis and post-processing over smoothed frames.
#[derive(Debug, Clone)]
struct Decider {
    cfg: VadDecisionConfig,
    shift_ms: u64,
    frames: usize,
    open: Option<u64>,
    silence_run: usize,
    silence_start: usize,
    pending: Option<SpeechSegment>,
}

impl Decider {
    fn new(cfg: VadDecisionConfig, shift_ms: u64) -> Self {
        Self {
            cfg,
            shift_ms,
            frames: 0,
            open: None,
            silence_run: 0,
            silence_start: 0,
            pending: None,
        }
    }

    fn step(&mut self, p: f64, out: &mut Vec<SpeechSegment>) {
        let i = self.frames;
        self.frames += 1;
        match self.open {
            None => {
                if p >= self.cfg.on_threshold {
                    self.open = Some(i as u64 * self.shift_ms);
                    self.silence_run = 0;
                }
            }
            Some(start) => {
                if p < self.cfg.off_threshold {
                    if self.silence_run == 0 {
                        self.silence_start = i;
                    }
                    self.silence_run += 1;
                    if self.silence_run as u64 * self.shift_ms >= self.cfg.max_silence_ms {
                        self.close(start, self.silence_start as u64 * self.shift_ms, out);
                    }
                } else {
                    self.silence_run = 0;
                }
            }
        }
        self.release(out);
    }

    fn close(&mut self, start: u64, end: u64, out: &mut Vec<SpeechSegment>) {
        self.open = None;
        self.silence_run = 0;
        if end - start < self.cfg.min_speech_ms {
            return;
        }
        let padded = SpeechSegment::new(start.saturating_sub(self.cfg.pad_ms), end + self.cfg.pad_ms);
        match &mut self.pending {
            Some(prev) if padded.start_ms <= prev.end_ms => prev.end_ms = prev.end_ms.max(padded.end_ms),
            _ => {
                if let Some(prev) = self.pending.replace(padded) {
                    out.push(prev);
                }
            }
        }
    }

    /// Emits the pending segment once no later segment can reach it.
    fn release(&mut self, out: &mut Vec<SpeechSegment>) {
        let earliest = self.open.unwrap_or(self.frames as u64 * self.shift_ms);
        if let Some(prev) = self.pending {
            if prev.end_ms < earliest.saturating_sub(self.cfg.pad_ms) {
                out.push(prev);
                self.pending = None;
            }
        }
    }

    fn finish(&mut self, duration_ms: u64, out: &mut Vec<SpeechSegment>) {
        if let Some(start) = self.open {
            let end_frame = if self.silence_run > 0 { self.silence_start } else { self.frames };
            self.close(start, end_frame as u64 * self.shift_ms, out);
        }
        out.extend(self.pending.take());
        clip(out, duration_ms);
    }
}

fn clip(segs: &mut Vec<SpeechSegment>, duration_ms: u64) {
    for s in segs.iter_mut() {
        s.end_ms = s.end_ms.min(duration_ms);
    }
    segs.retain(|s| s.start_ms < s.end_ms);
}

/// Incremental decision session over a posterior stream.
#[derive(Debug, Clone)]
pub struct VadSession {
    smoother: Smoother,
    decider: Decider,
    flushed: bool,
}

impl VadSession {
    pub fn new(cfg: VadDecisionConfig, frame_shift_ms: u32) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            smoother: Smoother::new(cfg.median_window, cfg.smoothing),
            decider: Decider::new(cfg, frame_shift_ms as u64),
            flushed: false,
        })
    }

    /// Frames consumed so far.
    pub fn frames(&self) -> usize {
        self.smoother.total
    }

    /// Consumes posteriors and returns the segments that became final.
    pub fn feed(&mut self, probs: &[f64]) -> Result<Vec<SpeechSegment>> {
        if self.flushed {
            return Err(Error::Lifecycle("feed after flush".into()));
        }
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Contract(alloc::format!("posterior {p} outside [0, 1]")));
        }
        let mut out = Vec::new();
        let (smoother, decider) = (&mut self.smoother, &mut self.decider);
        for &p in probs {
            smoother.push(p, |v| decider.step(v, &mut out));
        }
        Ok(out)
    }

    /// Ends the stream. `duration_ms` clips padding at the end; without it
    /// the frame grid's extent is used.
    pub fn flush(&mut self, duration_ms: Option<u64>) -> Result<Vec<SpeechSegment>> {
        if self.flushed {
            return Err(Error::Lifecycle("flush called twice".into()));
        }
        self.flushed = true;
        let mut out = Vec::new();
        let (smoother, decider) = (&mut self.smoother, &mut self.decider);
        smoother.finish(|v| decider.step(v, &mut out));
        let duration = duration_ms.unwrap_or(decider.frames as u64 * decider.shift_ms);
        decider.finish(duration, &mut out);
        Ok(out)
    }
}

/// Offline segment extraction: the session run over the whole sequence.
pub fn extract_segments(post: &FramePosteriors, cfg: &VadDecisionConfig, duration_ms: Option<u64>) -> Result<Vec<SpeechSegment>> {
    let mut s = VadSession::new(cfg.clone(), post.frame_shift_ms)?;
    let mut segs = s.feed(&post.probs)?;
    segs.extend(s.flush(duration_ms)?);
    Ok(canonicalize(segs))
}

/// Audio in, finalized segments out. Only for streaming-capable encoders.
#[derive(Debug, Clone)]
pub struct StreamingVad<'m> {
    frames: FrameStream<'m>,
    session: VadSession,
    samples: u64,
    probs: Vec<f64>,
}

impl<'m> StreamingVad<'m> {
    pub fn new(model: &'m VadModel, cfg: VadDecisionConfig) -> Result<Self> {
        Ok(Self {
            frames: model.frame_stream()?,
            session: VadSession::new(cfg, FRAME_SHIFT_MS)?,
            samples: 0,
            probs: Vec::new(),
        })
    }

    pub fn push(&mut self, samples: &[f32]) -> Result<Vec<SpeechSegment>> {
        self.samples += samples.len() as u64;
        self.probs.clear();
        let probs = &mut self.probs;
        self.frames.push(samples, |p| probs.push(p));
        self.session.feed(&self.probs)
    }

    pub fn finish(&mut self) -> Result<Vec<SpeechSegment>> {
        let duration = self.samples * 1000 / crate::audio::SAMPLE_RATE as u64;
        self.session.flush(Some(duration))
    }
}

/// Where decision latency comes from, per encoder family.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencyReport {
    pub encoder: String,
    /// `None` when the encoder needs the whole chunk before emitting.
    pub model_lookahead_ms: Option<u64>,
    pub smoothing_delay_ms: u64,
    /// Worst-case wait before a speech end is declared.
    pub endpoint_delay_ms: u64,
}

pub fn latency_report(enc: &EncoderConfig, vad: &VadDecisionConfig) -> LatencyReport {
    let shift = FRAME_SHIFT_MS as u64;
    let model_lookahead_ms = match enc {
        EncoderConfig::Dfsmn(c) => Some((c.blocks * c.rorder * c.rstride) as u64 * shift),
        EncoderConfig::Rwkv(_) => Some(0),
        EncoderConfig::Sanm(_) => None,
    };
    LatencyReport {
        encoder: enc.kind().into(),
        model_lookahead_ms,
        smoothing_delay_ms: vad.smoothing_delay_frames() as u64 * shift,
        endpoint_delay_ms: vad.max_silence_ms,
    }
}

impl fmt::Display for LatencyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.model_lookahead_ms {
            Some(ms) => write!(f, "encoder={} model_lookahead_ms={ms}", self.encoder)?,
            None => write!(f, "encoder={} model_lookahead_ms=offline", self.encoder)?,
        }
        write!(
            f,
            " smoothing_delay_ms={} endpoint_delay_ms={}",
            self.smoothing_delay_ms, self.endpoint_delay_ms
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn post(probs: Vec<f64>) -> FramePosteriors {
        FramePosteriors::new(probs, 20).unwrap()
    }

    #[test]
    fn median_edges_replicate() {
        let s = smooth(&[1.0, 0.0, 0.0, 1.0, 1.0], 3, Smoothing::Centered);
        assert_eq!(s, vec![1.0, 0.0, 0.0, 1.0, 1.0]);
        let s = smooth(&[0.0, 1.0, 0.0, 0.0], 3, Smoothing::Centered);
        assert_eq!(s, vec![0.0, 0.0, 0.0, 0.0]);
        let s = smooth(&[1.0, 1.0, 0.0, 1.0], 3, Smoothing::Trailing);
        assert_eq!(s, vec![1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn single_burst() {
        let mut p = vec![0.0; 50];
        p[10..30].iter_mut().for_each(|v| *v = 0.9);
        let segs = extract_segments(&post(p), &VadDecisionConfig::default(), Some(1000)).unwrap();
        assert_eq!(segs, vec![SpeechSegment::new(150, 650)]);
    }

    #[test]
    fn short_burst_dropped_and_short_gap_bridged() {
        let cfg = VadDecisionConfig::default();
        let mut p = vec![0.0; 60];
        p[5..8].iter_mut().for_each(|v| *v = 0.9);
        assert!(extract_segments(&post(p.clone()), &cfg, None).unwrap().is_empty());
        p[5..45].iter_mut().for_each(|v| *v = 0.9);
        p[20..26].iter_mut().for_each(|v| *v = 0.1);
        let segs = extract_segments(&post(p), &cfg, None).unwrap();
        assert_eq!(segs, vec![SpeechSegment::new(50, 950)]);
    }

    #[test]
    fn hysteresis_band_holds_speech() {
        let mut p = vec![0.0; 40];
        p[5..35].iter_mut().for_each(|v| *v = 0.5);
        p[5..8].iter_mut().for_each(|v| *v = 0.9);
        let segs = extract_segments(&post(p), &VadDecisionConfig::default(), None).unwrap();
        assert_eq!(segs, vec![SpeechSegment::new(50, 750)]);
    }

    #[test]
    fn clipping_and_lifecycle() {
        let p = vec![0.9; 20];
        let segs = extract_segments(&post(p.clone()), &VadDecisionConfig::default(), Some(400)).unwrap();
        assert_eq!(segs, vec![SpeechSegment::new(0, 400)]);
        let mut s = VadSession::new(VadDecisionConfig::default(), 20).unwrap();
        s.feed(&p).unwrap();
        s.flush(None).unwrap();
        assert!(matches!(s.feed(&p), Err(Error::Lifecycle(_))));
        assert!(matches!(s.flush(None), Err(Error::Lifecycle(_))));
        let mut fresh = VadSession::new(VadDecisionConfig::default(), 20).unwrap();
        assert!(matches!(fresh.feed(&[1.5]), Err(Error::Contract(_))));
    }

    #[test]
    fn bad_config() {
        let cfg = VadDecisionConfig {
            off_threshold: 0.7,
            ..Default::default()
        };
        assert!(VadSession::new(cfg, 20).is_err());
        let cfg = VadDecisionConfig {
            median_window: 4,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn latency_by_family() {
        let vad = VadDecisionConfig::default();
        let off = latency_report(&EncoderConfig::Dfsmn(crate::config::DfsmnConfig::offline()), &vad);
        assert_eq!(off.model_lookahead_ms, Some(2000));
        let on = latency_report(&EncoderConfig::Dfsmn(crate::config::DfsmnConfig::online()), &vad);
        assert_eq!(on.model_lookahead_ms, Some(0));
        assert_eq!(on.smoothing_delay_ms, 40);
        let sanm = latency_report(&EncoderConfig::Sanm(Default::default()), &vad);
        assert_eq!(sanm.model_lookahead_ms, None);
    }
}
