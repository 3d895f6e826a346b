//! Raw numeric kernels shared by the recorded (autodiff) path and the
//! streaming inference path. Loop order is fixed so that both paths produce
//! bit-identical results for the same inputs.

/// `out[j] += Σ_i x[i] · w[i, j]` with `w` stored row-major as `[in, out]`.
#[inline]
pub fn vec_mat_acc<W: Copy + Into<f64>>(x: &[f64], w: &[W], out: &mut [f64]) {
    let n = out.len();
    debug_assert_eq!(x.len() * n, w.len());
    for (i, &xi) in x.iter().enumerate() {
        let row = &w[i * n..(i + 1) * n];
        for (o, &wij) in out.iter_mut().zip(row) {
            *o += xi * wij.into();
        }
    }
}

/// Affine map of one row: `out = x · w + bias`, accumulated in the same
/// order as a recorded matmul followed by a bias add.
pub fn linear_row(x: &[f64], w: &[f32], bias: Option<&[f32]>, out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    vec_mat_acc(x, w, out);
    if let Some(b) = bias {
        for (o, &bj) in out.iter_mut().zip(b) {
            *o += bj as f64;
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

pub fn layer_norm_row(x: &[f64], gain: &[f32], bias: &[f32], out: &mut [f64]) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let rstd = 1.0 / libm::sqrt(var + LAYER_NORM_EPS);
    for (((o, &xi), &g), &b) in out.iter_mut().zip(x).zip(gain).zip(bias) {
        *o = (xi - mean) * rstd * g as f64 + b as f64;
    }
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Numerically stable running state of the WKV recurrence for one channel
/// set: `num`/`den` are scaled by `exp(-max)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WkvState {
    pub num: alloc::vec::Vec<f64>,
    pub den: alloc::vec::Vec<f64>,
    pub max: alloc::vec::Vec<f64>,
}

/// Stand-in for an empty history; `exp(WKV_EMPTY - x)` underflows to zero.
pub const WKV_EMPTY: f64 = -1e300;

impl WkvState {
    pub fn new(dim: usize) -> Self {
        Self {
            num: alloc::vec![0.0; dim],
            den: alloc::vec![0.0; dim],
            max: alloc::vec![WKV_EMPTY; dim],
        }
    }

    pub fn reset(&mut self) {
        self.num.iter_mut().for_each(|v| *v = 0.0);
        self.den.iter_mut().for_each(|v| *v = 0.0);
        self.max.iter_mut().for_each(|v| *v = WKV_EMPTY);
    }

    /// Emits `wkv_t` for one token, then folds the token into the state.
    /// `decay[c] = exp(w[c])` is the per-step log-decay.
    pub fn step(&mut self, k: &[f64], v: &[f64], decay: &[f64], bonus: &[f64], out: &mut [f64]) {
        for c in 0..out.len() {
            let (aa, bb, pp) = (self.num[c], self.den[c], self.max[c]);
            let ww = bonus[c] + k[c];
            let q = pp.max(ww);
            let e1 = libm::exp(pp - q);
            let e2 = libm::exp(ww - q);
            out[c] = (e1 * aa + e2 * v[c]) / (e1 * bb + e2);

            let ww = pp - decay[c];
            let q = ww.max(k[c]);
            let e1 = libm::exp(ww - q);
            let e2 = libm::exp(k[c] - q);
            self.num[c] = e1 * aa + e2 * v[c];
            self.den[c] = e1 * bb + e2;
            self.max[c] = q;
        }
    }
}

/// Sum of tap-weighted past, current and future frames:
/// `out_t = Σ_{i=0..=N1} past_i ⊙ p_{t-s1·i} + Σ_{j=1..=N2} future_{j-1} ⊙ p_{t+s2·j}`,
/// with frames outside `[0, T)` contributing zero.
pub fn memory_filter(
    p: &[f64],
    frames: usize,
    dim: usize,
    past: &[f64],
    future: &[f64],
    s1: usize,
    s2: usize,
    out: &mut [f64],
) {
    let n1 = past.len() / dim;
    let n2 = future.len() / dim;
    out.iter_mut().for_each(|o| *o = 0.0);
    for t in 0..frames {
        let o = &mut out[t * dim..(t + 1) * dim];
        for i in 0..n1 {
            let Some(src) = t.checked_sub(s1 * i) else {
                break;
            };
            let taps = &past[i * dim..(i + 1) * dim];
            let x = &p[src * dim..(src + 1) * dim];
            for c in 0..dim {
                o[c] += taps[c] * x[c];
            }
        }
        for j in 1..=n2 {
            let src = t + s2 * j;
            if src >= frames {
                break;
            }
            let taps = &future[(j - 1) * dim..j * dim];
            let x = &p[src * dim..(src + 1) * dim];
            for c in 0..dim {
                o[c] += taps[c] * x[c];
            }
        }
    }
}

/// Output geometry of the 3×3, stride-2, unpadded convolution.
pub fn conv_out_len(n: usize) -> Option<usize> {
    (n >= 3).then(|| (n - 3) / 2 + 1)
}

/// Single-input-channel 3×3 stride-2 convolution for output time step `t`,
/// flattened channel-major into `out[c * F' + f]`.
pub fn conv2d_row(
    x: &[f64],
    feat_dim: usize,
    t: usize,
    kernel: &[f64],
    bias: &[f64],
    out: &mut [f64],
) {
    let fo = (feat_dim - 3) / 2 + 1;
    let channels = bias.len();
    for c in 0..channels {
        let kc = &kernel[c * 9..(c + 1) * 9];
        for f in 0..fo {
            let mut acc = bias[c];
            for a in 0..3 {
                let row = &x[(2 * t + a) * feat_dim..(2 * t + a + 1) * feat_dim];
                for b in 0..3 {
                    acc += kc[3 * a + b] * row[2 * f + b];
                }
            }
            out[c * fo + f] = acc;
        }
    }
}
