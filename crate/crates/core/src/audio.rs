//! Audio and label carriers shared by the pipeline stages.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub const SAMPLE_RATE: u32 = 16_000;

/// Mono audio with samples in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Contract("sample rate must be positive".into()));
        }
        if let Some(bad) = samples.iter().find(|s| !s.is_finite() || s.abs() > 1.0) {
            return Err(Error::Contract(alloc::format!("sample {bad} outside [-1, 1]")));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn duration_ms(&self) -> u64 {
        self.samples.len() as u64 * 1000 / self.sample_rate as u64
    }
}

/// Half-open speech interval in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SpeechSegment {
    pub start_ms: u64,
    pub end_ms: u64,
}

impl SpeechSegment {
    pub fn new(start_ms: u64, end_ms: u64) -> Self {
        debug_assert!(start_ms < end_ms);
        Self { start_ms, end_ms }
    }

    pub fn duration_ms(&self) -> u64 {
        self.end_ms - self.start_ms
    }
}

/// Sorts segments and merges any that overlap or touch.
pub fn canonicalize(mut segs: Vec<SpeechSegment>) -> Vec<SpeechSegment> {
    segs.sort();
    let mut out: Vec<SpeechSegment> = Vec::with_capacity(segs.len());
    for s in segs {
        match out.last_mut() {
            Some(last) if s.start_ms <= last.end_ms => last.end_ms = last.end_ms.max(s.end_ms),
            _ => out.push(s),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentLabelSet {
    pub utterance_id: String,
    pub segments: Vec<SpeechSegment>,
}

impl SegmentLabelSet {
    pub fn new(utterance_id: impl Into<String>, segments: Vec<SpeechSegment>) -> Self {
        Self {
            utterance_id: utterance_id.into(),
            segments: canonicalize(segments),
        }
    }

    pub fn total_ms(&self) -> u64 {
        self.segments.iter().map(SpeechSegment::duration_ms).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranscriptSet {
    pub utterance_id: String,
    pub text: String,
}
