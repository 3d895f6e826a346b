//! Brute-force references shared by the integration tests and the
//! acceptance harness. Each is written from the definition, without reusing
//! any kernel from the library.
#![allow(dead_code)]

use vadkit_core::audio::SpeechSegment;
use vadkit_core::tensor::{Initializer, Tensor};

/// Small deterministic RNG helpers on top of the library initializer.
pub struct Rng(pub Initializer);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self(Initializer::new(seed))
    }

    pub fn unit(&mut self) -> f64 {
        self.0.unit()
    }

    /// Uniform in `[lo, hi]`.
    pub fn int(&mut self, lo: usize, hi: usize) -> usize {
        lo + ((self.unit() * (hi - lo + 1) as f64) as usize).min(hi - lo)
    }

    pub fn sym(&mut self, scale: f64) -> f64 {
        (self.unit() * 2.0 - 1.0) * scale
    }

    pub fn matrix(&mut self, rows: usize, cols: usize, scale: f64) -> Tensor {
        Tensor::matrix(rows, cols, (0..rows * cols).map(|_| self.sym(scale)).collect()).unwrap()
    }
}

/// Triple loop over frames, taps and channels:
/// `prev + p + Σ_i past_i ⊙ p[t − s1·i] + Σ_j future_{j−1} ⊙ p[t + s2·j]`.
pub fn dfsmn_memory_naive(p: &Tensor, prev: &Tensor, past: &Tensor, future: &Tensor, s1: usize, s2: usize) -> Tensor {
    let (t_len, d) = (p.rows(), p.cols());
    let mut out = vec![0.0; t_len * d];
    for t in 0..t_len {
        for c in 0..d {
            let mut acc = prev.row(t)[c] + p.row(t)[c];
            for i in 0..past.rows() {
                let src = t as isize - (s1 * i) as isize;
                if src >= 0 {
                    acc += past.row(i)[c] * p.row(src as usize)[c];
                }
            }
            for j in 1..=future.rows() {
                let src = t + s2 * j;
                if src < t_len {
                    acc += future.row(j - 1)[c] * p.row(src)[c];
                }
            }
            out[t * d + c] = acc;
        }
    }
    Tensor::matrix(t_len, d, out).unwrap()
}

/// FIR over values with unit strides: `Σ_{i=0..=L} past_i v[t−i] + Σ_{j=1..=R} future_{j−1} v[t+j]`.
pub fn fir_naive(v: &Tensor, past: &Tensor, future: Option<&Tensor>) -> Tensor {
    let zero = Tensor::zeros(vec![v.rows(), v.cols()]);
    let empty = Tensor::zeros(vec![0, v.cols()]);
    let with_skip = dfsmn_memory_naive(v, &zero, past, future.unwrap_or(&empty), 1, 1);
    let data = with_skip.data().iter().zip(v.data()).map(|(o, x)| o - x).collect();
    Tensor::matrix(v.rows(), v.cols(), data).unwrap()
}

/// `wkv_t = (Σ_{i<t} e^{−(t−1−i)·e^{w} + k_i} v_i + e^{u + k_t} v_t) / (same with v ≡ 1)`,
/// summed directly in O(T²).
pub fn wkv_naive(k: &Tensor, v: &Tensor, w: &[f64], u: &[f64]) -> Tensor {
    let (t_len, d) = (k.rows(), k.cols());
    let mut out = vec![0.0; t_len * d];
    for t in 0..t_len {
        for c in 0..d {
            let decay = w[c].exp();
            let mut exps: Vec<(f64, f64)> = (0..t)
                .map(|i| (-((t - 1 - i) as f64) * decay + k.row(i)[c], v.row(i)[c]))
                .collect();
            exps.push((u[c] + k.row(t)[c], v.row(t)[c]));
            let m = exps.iter().map(|e| e.0).fold(f64::NEG_INFINITY, f64::max);
            let num: f64 = exps.iter().map(|(e, x)| (e - m).exp() * x).sum();
            let den: f64 = exps.iter().map(|(e, _)| (e - m).exp()).sum();
            out[t * d + c] = num / den;
        }
    }
    Tensor::matrix(t_len, d, out).unwrap()
}

pub fn matmul(a: &[f64], rows: usize, inner: usize, b: &[f32], cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[r * cols + c] = (0..inner).map(|i| a[r * inner + i] * b[i * cols + c] as f64).sum();
        }
    }
    out
}

pub fn affine(x: &Tensor, w: &[f32], b: Option<&[f32]>, out_dim: usize) -> Tensor {
    let mut y = matmul(x.data(), x.rows(), x.cols(), w, out_dim);
    if let Some(b) = b {
        for r in 0..x.rows() {
            for c in 0..out_dim {
                y[r * out_dim + c] += b[c] as f64;
            }
        }
    }
    Tensor::matrix(x.rows(), out_dim, y).unwrap()
}

/// Textbook multi-head attention: per head `softmax(Q Kᵀ / √d_h) V`,
/// concatenated. Returns the context and the attention matrices.
pub fn mha_naive(q: &Tensor, k: &Tensor, v: &Tensor, heads: usize) -> (Tensor, Vec<Tensor>) {
    let (t_len, d) = (q.rows(), q.cols());
    let dh = d / heads;
    let mut ctx = vec![0.0; t_len * d];
    let mut mats = Vec::new();
    for h in 0..heads {
        let off = h * dh;
        let mut a = vec![0.0; t_len * t_len];
        for i in 0..t_len {
            let scores: Vec<f64> = (0..t_len)
                .map(|j| (0..dh).map(|c| q.row(i)[off + c] * k.row(j)[off + c]).sum::<f64>() / (dh as f64).sqrt())
                .collect();
            let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = scores.iter().map(|s| (s - m).exp()).sum();
            for j in 0..t_len {
                a[i * t_len + j] = (scores[j] - m).exp() / z;
            }
            for c in 0..dh {
                ctx[i * d + off + c] = (0..t_len).map(|j| a[i * t_len + j] * v.row(j)[off + c]).sum();
            }
        }
        mats.push(Tensor::matrix(t_len, t_len, a).unwrap());
    }
    (Tensor::matrix(t_len, d, ctx).unwrap(), mats)
}

/// Collapses a CTC path: merge repeats, then drop blanks (class 0).
pub fn ctc_collapse(path: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &s in path {
        if Some(s) != prev && s != 0 {
            out.push(s);
        }
        prev = Some(s);
    }
    out
}

/// `−log Σ_{paths collapsing to labels} Π_t p(path_t)` by enumerating all
/// `C^T` paths.
pub fn ctc_nll_enumerated(logprobs: &Tensor, labels: &[usize]) -> f64 {
    let (t_len, c) = (logprobs.rows(), logprobs.cols());
    let mut path = vec![0usize; t_len];
    let mut total = 0.0;
    loop {
        if ctc_collapse(&path) == labels {
            let lp: f64 = path.iter().enumerate().map(|(t, &s)| logprobs.row(t)[s]).sum();
            total += lp.exp();
        }
        // odometer increment
        let mut i = 0;
        loop {
            if i == t_len {
                return -total.ln();
            }
            path[i] += 1;
            if path[i] < c {
                break;
            }
            path[i] = 0;
            i += 1;
        }
    }
}

/// Edit distance by exhaustive recursion over the three edit moves, no
/// memoization. Only for short strings.
pub fn edit_distance_exhaustive(a: &[char], b: &[char]) -> usize {
    match (a.split_first(), b.split_first()) {
        (None, _) => b.len(),
        (_, None) => a.len(),
        (Some((x, ra)), Some((y, rb))) => {
            let sub = edit_distance_exhaustive(ra, rb) + usize::from(x != y);
            let del = edit_distance_exhaustive(ra, b) + 1;
            let ins = edit_distance_exhaustive(a, rb) + 1;
            sub.min(del).min(ins)
        }
    }
}

pub fn strip_ws(s: &str) -> Vec<char> {
    s.chars().filter(|c| !c.is_whitespace()).collect()
}

/// Pooled corpus CER in percent.
pub fn corpus_cer_naive(pairs: &[(String, String)]) -> f64 {
    let (mut e, mut n) = (0, 0);
    for (r, h) in pairs {
        let (r, h) = (strip_ws(r), strip_ws(h));
        e += edit_distance_exhaustive(&r, &h);
        n += r.len();
    }
    100.0 * e as f64 / n as f64
}

/// Speech-ness of the 10 ms frame `k`: its midpoint `k·g + g/2` lies in
/// some `[start, end)`. Evaluated in half-milliseconds to stay exact.
pub fn is_speech_at(segs: &[SpeechSegment], k: u64, grid: u64) -> bool {
    let mid2 = 2 * k * grid + grid;
    segs.iter().any(|s| 2 * s.start_ms <= mid2 && mid2 < 2 * s.end_ms)
}

/// Pooled DCF in percent from (ref, hyp, duration) triples.
pub fn dcf_naive(utts: &[(Vec<SpeechSegment>, Vec<SpeechSegment>, u64)], grid: u64) -> Option<(f64, f64, f64)> {
    let (mut miss, mut fa, mut sp, mut ns) = (0u64, 0u64, 0u64, 0u64);
    for (r, h, dur) in utts {
        for k in 0..dur / grid {
            let (rs, hs) = (is_speech_at(r, k, grid), is_speech_at(h, k, grid));
            if rs {
                sp += 1;
                miss += u64::from(!hs);
            } else {
                ns += 1;
                fa += u64::from(hs);
            }
        }
    }
    if sp == 0 || ns == 0 {
        return None;
    }
    let (pm, pf) = (miss as f64 / sp as f64, fa as f64 / ns as f64);
    Some((100.0 * (0.75 * pm + 0.25 * pf), 100.0 * pm, 100.0 * pf))
}

pub fn nrr_naive(files: &[Vec<SpeechSegment>]) -> f64 {
    let mut rejected = 0;
    for f in files {
        if f.is_empty() {
            rejected += 1;
        }
    }
    100.0 * rejected as f64 / files.len() as f64
}

/// Random disjoint sorted segments inside `[0, dur)`.
pub fn random_segments(rng: &mut Rng, dur: u64, max: usize) -> Vec<SpeechSegment> {
    let n = rng.int(0, max);
    let mut cuts: Vec<u64> = (0..2 * n).map(|_| (rng.unit() * dur as f64) as u64).collect();
    cuts.sort_unstable();
    cuts.dedup();
    cuts.chunks_exact(2)
        .filter(|c| c[0] < c[1])
        .map(|c| SpeechSegment::new(c[0], c[1]))
        .collect()
}

pub mod grad;
