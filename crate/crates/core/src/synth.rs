//! Synthetic tones-vs-silence corpus with exact segment and transcript
//! labels, plus pure-noise clips for rejection scoring.

use alloc::string::String;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::audio::{AudioBuffer, SpeechSegment, SAMPLE_RATE};
use crate::error::Result;
use crate::tensor::unit_f64;

/// Burst frequencies; burst `i` of a clip spells `TONE_CHARS[k]`.
pub const TONE_HZ: [f64; 5] = [300.0, 500.0, 800.0, 1200.0, 2000.0];
pub const TONE_CHARS: [char; 5] = ['a', 'b', 'c', 'd', 'e'];
pub const NOISE_LEVEL: f64 = 0.005;

#[derive(Debug, Clone)]
pub struct SynthClip {
    pub id: String,
    pub audio: AudioBuffer,
    pub segments: Vec<SpeechSegment>,
    pub text: String,
}

/// Toy vocabulary: `a..=z` map to token ids `1..=26`, blank is 0.
pub fn toy_vocab() -> Vec<char> {
    ('a'..='z').collect()
}

/// Token ids of `text` under `vocab` (id = position + 1); unknown chars and
/// whitespace are skipped.
pub fn tokenize(text: &str, vocab: &[char]) -> Vec<usize> {
    text.chars()
        .filter_map(|c| vocab.iter().position(|&v| v == c).map(|i| i + 1))
        .collect()
}

pub fn detokenize(tokens: &[usize], vocab: &[char]) -> String {
    tokens
        .iter()
        .filter_map(|&t| t.checked_sub(1).and_then(|i| vocab.get(i)))
        .collect()
}

fn range(rng: &mut ChaCha8Rng, lo: u64, hi: u64) -> u64 {
    lo + rng.next_u64() % (hi - lo + 1)
}

fn noise(rng: &mut ChaCha8Rng, level: f64) -> f64 {
    // uniform with the given standard deviation
    (unit_f64(rng) * 2.0 - 1.0) * level * libm::sqrt(3.0)
}

fn render(rng: &mut ChaCha8Rng, duration_ms: u64, bursts: &[(SpeechSegment, f64, f64)]) -> Result<AudioBuffer> {
    let n = (duration_ms * SAMPLE_RATE as u64 / 1000) as usize;
    let ramp = (SAMPLE_RATE / 100) as f64;
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = noise(rng, NOISE_LEVEL);
        for (seg, hz, amp) in bursts {
            let a = seg.start_ms as usize * SAMPLE_RATE as usize / 1000;
            let b = seg.end_ms as usize * SAMPLE_RATE as usize / 1000;
            if (a..b).contains(&i) {
                let edge = ((i - a) as f64).min((b - 1 - i) as f64);
                let env = (edge / ramp).min(1.0);
                let t = i as f64 / SAMPLE_RATE as f64;
                x += amp * env * libm::sin(2.0 * core::f64::consts::PI * hz * t);
            }
        }
        samples.push(x.clamp(-1.0, 1.0) as f32);
    }
    AudioBuffer::new(samples, SAMPLE_RATE)
}

/// A 2–4 s clip with 1–3 tone bursts of 300–800 ms separated by at least
/// 200 ms of low noise.
pub fn tone_clip(id: impl Into<String>, seed: u64) -> Result<SynthClip> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let duration = range(&mut rng, 200, 400) * 10;
    let wanted = range(&mut rng, 1, 3);
    let mut bursts = Vec::new();
    let mut text = String::new();
    let mut cursor = range(&mut rng, 10, 40) * 10;
    for _ in 0..wanted {
        let len = range(&mut rng, 30, 80) * 10;
        if cursor + len + 100 > duration {
            break;
        }
        let k = (rng.next_u64() % TONE_HZ.len() as u64) as usize;
        let amp = 0.2 + 0.3 * unit_f64(&mut rng);
        bursts.push((SpeechSegment::new(cursor, cursor + len), TONE_HZ[k], amp));
        text.push(TONE_CHARS[k]);
        cursor += len + range(&mut rng, 20, 60) * 10;
    }
    let audio = render(&mut rng, duration, &bursts)?;
    Ok(SynthClip {
        id: id.into(),
        audio,
        segments: bursts.iter().map(|b| b.0).collect(),
        text,
    })
}

/// `n` clips with ids `tone_0000…`, each seeded from `seed`.
pub fn tone_corpus(n: usize, seed: u64) -> Result<Vec<SynthClip>> {
    (0..n)
        .map(|i| tone_clip(alloc::format!("tone_{i:04}"), seed.wrapping_mul(1_000_003).wrapping_add(i as u64)))
        .collect()
}

/// Pure low-level noise; a well-behaved detector emits nothing for it.
pub fn noise_clip(id: impl Into<String>, duration_ms: u64, seed: u64) -> Result<SynthClip> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let audio = render(&mut rng, duration_ms, &[])?;
    Ok(SynthClip {
        id: id.into(),
        audio,
        segments: Vec::new(),
        text: String::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clip_shape() {
        for seed in 0..20 {
            let c = tone_clip("x", seed).unwrap();
            let d = c.audio.duration_ms();
            assert!((2000..=4000).contains(&d));
            assert!(!c.segments.is_empty() && c.segments.len() <= 3);
            assert_eq!(c.text.chars().count(), c.segments.len());
            for w in c.segments.windows(2) {
                assert!(w[1].start_ms >= w[0].end_ms + 200);
            }
            assert!(c.segments.last().unwrap().end_ms + 100 <= d);
        }
    }

    #[test]
    fn deterministic() {
        let a = tone_clip("x", 7).unwrap();
        let b = tone_clip("x", 7).unwrap();
        assert_eq!(a.audio, b.audio);
        assert_eq!(a.segments, b.segments);
    }

    #[test]
    fn vocab_roundtrip() {
        let v = toy_vocab();
        assert_eq!(tokenize("a z", &v), alloc::vec![1, 26]);
        assert_eq!(detokenize(&[1, 26], &v), "az");
    }
}
