//! Log-mel filterbank front end: 25 ms Hamming frames every 10 ms, 512-point
//! power spectrum, 80 triangular mel bands over 20–7600 Hz, log with floor.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const WINDOW_SAMPLES: usize = 400;
pub const SHIFT_SAMPLES: usize = 160;
pub const FFT_SIZE: usize = 512;
pub const NUM_BINS: usize = FFT_SIZE / 2 + 1;
pub const NUM_MELS: usize = 80;
pub const LOW_HZ: f64 = 20.0;
pub const HIGH_HZ: f64 = 7600.0;
pub const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub frames: Tensor,
    pub frame_shift_ms: u32,
}

impl FeatureMatrix {
    pub fn num_frames(&self) -> usize {
        self.frames.rows()
    }

    pub fn dim(&self) -> usize {
        self.frames.cols()
    }
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * libm::log10(1.0 + f / 700.0)
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (libm::pow(10.0, m / 2595.0) - 1.0)
}

pub fn frame_count(num_samples: usize) -> Option<usize> {
    (num_samples >= WINDOW_SAMPLES).then(|| 1 + (num_samples - WINDOW_SAMPLES) / SHIFT_SAMPLES)
}

pub fn hamming_window() -> Vec<f64> {
    (0..WINDOW_SAMPLES)
        .map(|n| 0.54 - 0.46 * libm::cos(2.0 * PI * n as f64 / (WINDOW_SAMPLES - 1) as f64))
        .collect()
}

/// Splits audio into Hamming-windowed 400-sample frames with a 160-sample hop.
pub fn frame_signal(audio: &AudioBuffer) -> Result<Vec<Vec<f64>>> {
    let s = audio.samples();
    let t = frame_count(s.len()).ok_or_else(|| {
        Error::TooShort(alloc::format!("{} samples, need at least {WINDOW_SAMPLES}", s.len()))
    })?;
    let window = hamming_window();
    Ok((0..t)
        .map(|i| {
            let start = i * SHIFT_SAMPLES;
            window_frame(&s[start..start + WINDOW_SAMPLES], &window)
        })
        .collect())
}

fn window_frame(samples: &[f32], window: &[f64]) -> Vec<f64> {
    samples.iter().zip(window).map(|(&x, w)| x as f64 * w).collect()
}

/// Precomputed transform tables and mel filters.
#[derive(Debug, Clone)]
pub struct Fbank {
    window: Vec<f64>,
    cos: Vec<f64>,
    sin: Vec<f64>,
    /// `NUM_MELS × NUM_BINS` triangular weights.
    filters: Vec<f64>,
    centers_hz: Vec<f64>,
}

impl Default for Fbank {
    fn default() -> Self {
        Self::new()
    }
}

impl Fbank {
    pub fn new() -> Self {
        let half = FFT_SIZE / 2;
        let cos = (0..half).map(|k| libm::cos(-2.0 * PI * k as f64 / FFT_SIZE as f64)).collect();
        let sin = (0..half).map(|k| libm::sin(-2.0 * PI * k as f64 / FFT_SIZE as f64)).collect();

        let (lo, hi) = (hz_to_mel(LOW_HZ), hz_to_mel(HIGH_HZ));
        let edges: Vec<f64> = (0..NUM_MELS + 2)
            .map(|i| lo + (hi - lo) * i as f64 / (NUM_MELS + 1) as f64)
            .collect();
        let mut filters = vec![0.0; NUM_MELS * NUM_BINS];
        for m in 0..NUM_MELS {
            let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
            for k in 0..NUM_BINS {
                let mel = hz_to_mel(bin_hz(k));
                let w = if mel > l && mel <= c {
                    (mel - l) / (c - l)
                } else if mel > c && mel < r {
                    (r - mel) / (r - c)
                } else {
                    0.0
                };
                filters[m * NUM_BINS + k] = w;
            }
        }
        let centers_hz = edges[1..=NUM_MELS].iter().map(|&m| mel_to_hz(m)).collect();
        Self {
            window: hamming_window(),
            cos,
            sin,
            filters,
            centers_hz,
        }
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    pub fn filter(&self, mel: usize) -> &[f64] {
        &self.filters[mel * NUM_BINS..(mel + 1) * NUM_BINS]
    }

    /// |DFT|² of a frame zero-padded to 512 points.
    pub fn power_spectrum(&self, frame: &[f64]) -> Vec<f64> {
        let mut re = vec![0.0; FFT_SIZE];
        let mut im = vec![0.0; FFT_SIZE];
        re[..frame.len()].copy_from_slice(frame);
        self.fft(&mut re, &mut im);
        (0..NUM_BINS).map(|k| re[k] * re[k] + im[k] * im[k]).collect()
    }

    /// In-place iterative radix-2 FFT.
    fn fft(&self, re: &mut [f64], im: &mut [f64]) {
        let n = re.len();
        let mut j = 0;
        for i in 1..n {
            let mut bit = n >> 1;
            while j & bit != 0 {
                j ^= bit;
                bit >>= 1;
            }
            j |= bit;
            if i < j {
                re.swap(i, j);
                im.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= n {
            let step = n / len;
            for start in (0..n).step_by(len) {
                for k in 0..len / 2 {
                    let (wr, wi) = (self.cos[k * step], self.sin[k * step]);
                    let (a, b) = (start + k, start + k + len / 2);
                    let tr = re[b] * wr - im[b] * wi;
                    let ti = re[b] * wi + im[b] * wr;
                    re[b] = re[a] - tr;
                    im[b] = im[a] - ti;
                    re[a] += tr;
                    im[a] += ti;
                }
            }
            len <<= 1;
        }
    }

    /// Log mel energies of one already-windowed frame.
    pub fn log_mel_frame(&self, frame: &[f64], out: &mut [f64]) {
        let power = self.power_spectrum(frame);
        for (m, o) in out.iter_mut().enumerate() {
            let e: f64 = self.filter(m).iter().zip(&power).map(|(w, p)| w * p).sum();
            *o = libm::log(e.max(LOG_FLOOR));
        }
    }

    /// Windows and transforms 400 raw samples.
    pub fn raw_frame(&self, samples: &[f32], out: &mut [f64]) {
        let frame = window_frame(samples, &self.window);
        self.log_mel_frame(&frame, out);
    }
}

fn bin_hz(k: usize) -> f64 {
    k as f64 * crate::audio::SAMPLE_RATE as f64 / FFT_SIZE as f64
}

/// Log-mel features of windowed frames, `T × 80` at 10 ms.
pub fn log_mel(frames: &[Vec<f64>]) -> Result<FeatureMatrix> {
    let fb = Fbank::new();
    let mut data = vec![0.0; frames.len() * NUM_MELS];
    for (f, out) in frames.iter().zip(data.chunks_mut(NUM_MELS)) {
        fb.log_mel_frame(f, out);
    }
    Ok(FeatureMatrix {
        frames: Tensor::matrix(frames.len(), NUM_MELS, data)?,
        frame_shift_ms: 10,
    })
}

/// Audio to `T × 80` log-mel features.
pub fn fbank(audio: &AudioBuffer) -> Result<FeatureMatrix> {
    log_mel(&frame_signal(audio)?)
}

/// Stacks frame pairs `(2t, 2t+1)` into one frame at twice the shift; a
/// trailing odd frame is dropped.
pub fn downsample2(feats: &FeatureMatrix) -> Result<FeatureMatrix> {
    if feats.frame_shift_ms != 10 {
        return Err(Error::Contract(alloc::format!(
            "downsample2 expects 10 ms frames, got {} ms",
            feats.frame_shift_ms
        )));
    }
    let (t, d) = (feats.num_frames(), feats.dim());
    let half = t / 2;
    let data = feats.frames.data()[..half * 2 * d].to_vec();
    Ok(FeatureMatrix {
        frames: Tensor::matrix(half, 2 * d, data)?,
        frame_shift_ms: 20,
    })
}

/// Per-dimension mean/variance normalization statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Cmvn {
    pub mean: Vec<f64>,
    pub inv_std: Vec<f64>,
}

impl Cmvn {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            inv_std: vec![1.0; dim],
        }
    }

    /// Pooled statistics over the rows of every matrix.
    pub fn estimate<'a>(mats: impl IntoIterator<Item = &'a Tensor>) -> Option<Self> {
        let mut sum: Vec<f64> = Vec::new();
        let mut sq: Vec<f64> = Vec::new();
        let mut n = 0usize;
        for m in mats {
            if sum.is_empty() {
                sum = vec![0.0; m.cols()];
                sq = vec![0.0; m.cols()];
            }
            for t in 0..m.rows() {
                for (j, &x) in m.row(t).iter().enumerate() {
                    sum[j] += x;
                    sq[j] += x * x;
                }
            }
            n += m.rows();
        }
        if n == 0 {
            return None;
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        let inv_std = sq
            .iter()
            .zip(&mean)
            .map(|(s, m)| 1.0 / libm::sqrt((s / n as f64 - m * m).max(1e-8)))
            .collect();
        Some(Self { mean, inv_std })
    }

    pub fn apply_row(&self, row: &mut [f64]) {
        for ((x, m), s) in row.iter_mut().zip(&self.mean).zip(&self.inv_std) {
            *x = (*x - m) * s;
        }
    }

    pub fn apply(&self, t: &mut Tensor) {
        for r in 0..t.rows() {
            self.apply_row(t.row_mut(r));
        }
    }
}

/// Incremental log-mel extraction over arbitrarily sized sample chunks.
/// Emits exactly the frames the batch front end would, in order.
#[derive(Debug, Clone)]
pub struct FbankStream {
    fbank: Fbank,
    pending: Vec<f32>,
}

impl Default for FbankStream {
    fn default() -> Self {
        Self::new()
    }
}

impl FbankStream {
    pub fn new() -> Self {
        Self {
            fbank: Fbank::new(),
            pending: Vec::with_capacity(WINDOW_SAMPLES + SHIFT_SAMPLES),
        }
    }

    pub fn reset(&mut self) {
        self.pending.clear();
    }

    /// Appends samples and calls `emit` once per completed 80-dim frame.
    pub fn push(&mut self, samples: &[f32], mut emit: impl FnMut(&[f64])) {
        let mut out = [0.0; NUM_MELS];
        for &s in samples {
            self.pending.push(s);
            if self.pending.len() == WINDOW_SAMPLES {
                self.fbank.raw_frame(&self.pending, &mut out);
                emit(&out);
                self.pending.drain(..SHIFT_SAMPLES);
            }
        }
    }
}
