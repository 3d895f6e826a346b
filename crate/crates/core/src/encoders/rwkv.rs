//! RWKV encoder with a stride-2 Conv2d subsampling front end.
//!
//! Each block computes
//! `x' = x + Dropout(TimeMixing(LN(x)))` and
//! `x'' = x' + Dropout(ChannelMixing(LN(x')))`.

use alloc::vec;
use alloc::vec::Vec;

use super::{Builder, Init, Linear, Norm};
use crate::autodiff::{Tape, Var};
use crate::config::RwkvConfig;
use crate::error::{shape_err, Error, Result};
use crate::kernels::{self, WkvState};
use crate::tensor::{ParamId, ParamStore, Tensor};

#[derive(Debug, Clone)]
pub struct TimeMixing {
    pub mix_r: ParamId,
    pub mix_k: ParamId,
    pub mix_v: ParamId,
    /// Log decay rate; the per-step decay factor is `exp(-exp(w))`.
    pub decay: ParamId,
    pub bonus: ParamId,
    pub receptance: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
}

#[derive(Debug, Clone)]
pub struct ChannelMixing {
    pub mix_r: ParamId,
    pub mix_k: ParamId,
    pub receptance: Linear,
    pub key: Linear,
    pub value: Linear,
}

#[derive(Debug, Clone)]
pub struct RwkvBlock {
    pub ln_time: Norm,
    pub ln_channel: Norm,
    pub time: TimeMixing,
    pub channel: ChannelMixing,
}

#[derive(Debug, Clone)]
pub struct Rwkv {
    cfg: RwkvConfig,
    conv_kernel: ParamId,
    conv_bias: ParamId,
    subsample: Linear,
    blocks: Vec<RwkvBlock>,
    ln_out: Norm,
}

impl Rwkv {
    pub(crate) fn build(cfg: RwkvConfig, b: &mut Builder<'_>) -> Result<Self> {
        let (d, ch) = (cfg.dim, cfg.conv_channels);
        let conv_kernel = b.param("conv.kernel", &[ch, 9], Init::FanIn(9))?;
        let conv_bias = b.param("conv.bias", &[ch], Init::FanIn(9))?;
        let subsample = b.linear("subsample", ch * cfg.conv_freq_out(), d, true)?;
        let mut blocks = Vec::with_capacity(cfg.blocks);
        for l in 0..cfg.blocks {
            let n = |s: &str| alloc::format!("blocks.{l}.{s}");
            let time = TimeMixing {
                mix_r: b.param(&n("time.mix_r"), &[d], Init::Uniform(0.0, 1.0))?,
                mix_k: b.param(&n("time.mix_k"), &[d], Init::Uniform(0.0, 1.0))?,
                mix_v: b.param(&n("time.mix_v"), &[d], Init::Uniform(0.0, 1.0))?,
                decay: b.param(&n("time.decay"), &[d], Init::Uniform(-1.0, 1.0))?,
                bonus: b.param(&n("time.bonus"), &[d], Init::Uniform(-0.5, 0.5))?,
                receptance: b.linear(&n("time.receptance"), d, d, false)?,
                key: b.linear(&n("time.key"), d, d, false)?,
                value: b.linear(&n("time.value"), d, d, false)?,
                output: b.linear(&n("time.output"), d, d, false)?,
            };
            let channel = ChannelMixing {
                mix_r: b.param(&n("channel.mix_r"), &[d], Init::Uniform(0.0, 1.0))?,
                mix_k: b.param(&n("channel.mix_k"), &[d], Init::Uniform(0.0, 1.0))?,
                receptance: b.linear(&n("channel.receptance"), d, d, false)?,
                key: b.linear(&n("channel.key"), d, cfg.ffn_dim, false)?,
                value: b.linear(&n("channel.value"), cfg.ffn_dim, d, false)?,
            };
            blocks.push(RwkvBlock {
                ln_time: b.layer_norm(&n("ln_time"), d)?,
                ln_channel: b.layer_norm(&n("ln_channel"), d)?,
                time,
                channel,
            });
        }
        let ln_out = b.layer_norm("ln_out", d)?;
        Ok(Self {
            cfg,
            conv_kernel,
            conv_bias,
            subsample,
            blocks,
            ln_out,
        })
    }

    pub fn config(&self) -> &RwkvConfig {
        &self.cfg
    }

    pub fn blocks(&self) -> &[RwkvBlock] {
        &self.blocks
    }

    /// Conv2d (1→C, 3×3, stride 2, relu) then flatten and project:
    /// `T × F` to `floor((T−3)/2)+1 × dim`.
    pub fn conv_subsample(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        if tape.dims(x).get(1) != Some(&self.cfg.input_dim) {
            return Err(Error::Config(alloc::format!(
                "rwkv expects {}-dim input, got {:?}",
                self.cfg.input_dim,
                tape.dims(x)
            )));
        }
        let k = tape.param(store, self.conv_kernel)?;
        let b = tape.param(store, self.conv_bias)?;
        let c = tape.conv2d(x, k, b)?;
        let c = tape.relu(c)?;
        self.subsample.forward(tape, store, c)
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var, training: bool) -> Result<Var> {
        let mut h = self.conv_subsample(tape, store, x)?;
        for blk in &self.blocks {
            h = blk.forward(tape, store, h, self.cfg.dropout, training)?;
        }
        self.ln_out.forward(tape, store, h)
    }

    pub fn stream(&self, store: &ParamStore) -> RwkvStream {
        let (d, f) = (self.cfg.dim, self.cfg.input_dim);
        let widen = |id: ParamId| store.data(id).iter().map(|&v| v as f64).collect::<Vec<f64>>();
        let blocks = self
            .blocks
            .iter()
            .map(|b| BlockState {
                wkv: WkvState::new(d),
                prev_time: vec![0.0; d],
                prev_channel: vec![0.0; d],
                decay: store.data(b.time.decay).iter().map(|&w| libm::exp(w as f64)).collect(),
                bonus: widen(b.time.bonus),
            })
            .collect();
        RwkvStream {
            model: self.clone(),
            kernel: widen(self.conv_kernel),
            bias: widen(self.conv_bias),
            window: vec![0.0; 3 * f],
            seen: 0,
            conv: vec![0.0; self.cfg.conv_channels * self.cfg.conv_freq_out()],
            blocks,
            scratch: Scratch::new(d, self.cfg.ffn_dim),
        }
    }
}

fn token_shift(tape: &mut Tape, store: &ParamStore, x: Var, prev: Var, mix: ParamId) -> Result<Var> {
    // prev + μ ⊙ (x − prev)
    let mu = tape.param(store, mix)?;
    let diff = tape.sub(x, prev)?;
    let scaled = tape.mul_rows(diff, mu)?;
    tape.add(prev, scaled)
}

impl RwkvBlock {
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var, dropout: f64, training: bool) -> Result<Var> {
        let xn = self.ln_time.forward(tape, store, x)?;
        let tm = self.time.forward(tape, store, xn)?;
        let tm = tape.dropout(tm, dropout, training)?;
        let x1 = tape.add(x, tm)?;

        let xn = self.ln_channel.forward(tape, store, x1)?;
        let cm = self.channel.forward(tape, store, xn)?;
        let cm = tape.dropout(cm, dropout, training)?;
        tape.add(x1, cm)
    }
}

impl TimeMixing {
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, xn: Var) -> Result<Var> {
        let prev = tape.shift_down(xn)?;
        let xr = token_shift(tape, store, xn, prev, self.mix_r)?;
        let xk = token_shift(tape, store, xn, prev, self.mix_k)?;
        let xv = token_shift(tape, store, xn, prev, self.mix_v)?;
        let r = self.receptance.forward(tape, store, xr)?;
        let k = self.key.forward(tape, store, xk)?;
        let v = self.value.forward(tape, store, xv)?;
        let w = tape.param(store, self.decay)?;
        let u = tape.param(store, self.bonus)?;
        let wkv = tape.wkv(k, v, w, u)?;
        let gate = tape.sigmoid(r)?;
        let gated = tape.mul(gate, wkv)?;
        self.output.forward(tape, store, gated)
    }
}

impl ChannelMixing {
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, xn: Var) -> Result<Var> {
        let prev = tape.shift_down(xn)?;
        let xr = token_shift(tape, store, xn, prev, self.mix_r)?;
        let xk = token_shift(tape, store, xn, prev, self.mix_k)?;
        let r = self.receptance.forward(tape, store, xr)?;
        let k = self.key.forward(tape, store, xk)?;
        let k = tape.squared_relu(k)?;
        let kv = self.value.forward(tape, store, k)?;
        let gate = tape.sigmoid(r)?;
        tape.mul(gate, kv)
    }
}

/// Standalone WKV over plain tensors (`T × d` keys/values, `d` decay and bonus).
pub fn rwkv_wkv(k: &Tensor, v: &Tensor, w: &[f64], u: &[f64]) -> Result<Tensor> {
    if k.dims() != v.dims() || k.dims().len() != 2 || w.len() != k.cols() || u.len() != k.cols() {
        return Err(shape_err("rwkv_wkv", k.dims(), v.dims()));
    }
    let d = k.cols();
    let decay: Vec<f64> = w.iter().map(|&x| libm::exp(x)).collect();
    let mut state = WkvState::new(d);
    let mut out = vec![0.0; k.len()];
    for t in 0..k.rows() {
        state.step(k.row(t), v.row(t), &decay, u, &mut out[t * d..(t + 1) * d]);
    }
    Tensor::matrix(k.rows(), d, out)
}

#[derive(Debug, Clone)]
struct BlockState {
    wkv: WkvState,
    prev_time: Vec<f64>,
    prev_channel: Vec<f64>,
    decay: Vec<f64>,
    bonus: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Scratch {
    xn: Vec<f64>,
    mixed: Vec<f64>,
    r: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    wkv: Vec<f64>,
    ffn: Vec<f64>,
    out: Vec<f64>,
    h: Vec<f64>,
}

impl Scratch {
    fn new(d: usize, ffn: usize) -> Self {
        Self {
            xn: vec![0.0; d],
            mixed: vec![0.0; d],
            r: vec![0.0; d],
            k: vec![0.0; d],
            v: vec![0.0; d],
            wkv: vec![0.0; d],
            ffn: vec![0.0; ffn],
            out: vec![0.0; d],
            h: vec![0.0; d],
        }
    }
}

/// Recurrent context: the last three input frames for the convolution and,
/// per block, the WKV state plus previous normalized inputs for token shift.
#[derive(Debug, Clone)]
pub struct RwkvStream {
    model: Rwkv,
    kernel: Vec<f64>,
    bias: Vec<f64>,
    window: Vec<f64>,
    seen: usize,
    conv: Vec<f64>,
    blocks: Vec<BlockState>,
    scratch: Scratch,
}

fn mix_into(x: &[f64], prev: &[f64], mu: &[f32], out: &mut [f64]) {
    for c in 0..x.len() {
        out[c] = prev[c] + (x[c] - prev[c]) * mu[c] as f64;
    }
}

impl RwkvStream {
    pub fn reset(&mut self) {
        self.seen = 0;
        self.window.iter_mut().for_each(|v| *v = 0.0);
        for b in &mut self.blocks {
            b.wkv.reset();
            b.prev_time.iter_mut().for_each(|v| *v = 0.0);
            b.prev_channel.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Consumes one 10 ms feature frame; emits a hidden frame once three
    /// frames `2t, 2t+1, 2t+2` are available.
    pub fn push(&mut self, store: &ParamStore, frame: &[f64], mut emit: impl FnMut(&[f64])) {
        let f = self.model.cfg.input_dim;
        self.window.copy_within(f.., 0);
        self.window[2 * f..].copy_from_slice(frame);
        self.seen += 1;
        if self.seen < 3 || (self.seen - 3) % 2 != 0 {
            return;
        }
        kernels::conv2d_row(&self.window, f, 0, &self.kernel, &self.bias, &mut self.conv);
        self.conv.iter_mut().for_each(|v| *v = kernels::relu(*v));
        let s = &mut self.scratch;
        self.model.subsample.row(store, &self.conv, &mut s.h);

        for (blk, st) in self.model.blocks.iter().zip(&mut self.blocks) {
            // time mixing
            blk.ln_time.row(store, &s.h, &mut s.xn);
            let tm = &blk.time;
            mix_into(&s.xn, &st.prev_time, store.data(tm.mix_r), &mut s.mixed);
            tm.receptance.row(store, &s.mixed, &mut s.r);
            mix_into(&s.xn, &st.prev_time, store.data(tm.mix_k), &mut s.mixed);
            tm.key.row(store, &s.mixed, &mut s.k);
            mix_into(&s.xn, &st.prev_time, store.data(tm.mix_v), &mut s.mixed);
            tm.value.row(store, &s.mixed, &mut s.v);
            st.prev_time.copy_from_slice(&s.xn);
            st.wkv.step(&s.k, &s.v, &st.decay, &st.bonus, &mut s.wkv);
            for c in 0..s.r.len() {
                s.mixed[c] = kernels::sigmoid(s.r[c]) * s.wkv[c];
            }
            tm.output.row(store, &s.mixed, &mut s.out);
            for c in 0..s.h.len() {
                s.h[c] += s.out[c];
            }

            // channel mixing
            blk.ln_channel.row(store, &s.h, &mut s.xn);
            let cm = &blk.channel;
            mix_into(&s.xn, &st.prev_channel, store.data(cm.mix_r), &mut s.mixed);
            cm.receptance.row(store, &s.mixed, &mut s.r);
            mix_into(&s.xn, &st.prev_channel, store.data(cm.mix_k), &mut s.mixed);
            cm.key.row(store, &s.mixed, &mut s.ffn);
            s.ffn.iter_mut().for_each(|v| *v = kernels::relu(*v) * kernels::relu(*v));
            cm.value.row(store, &s.ffn, &mut s.out);
            st.prev_channel.copy_from_slice(&s.xn);
            for c in 0..s.h.len() {
                s.h[c] += kernels::sigmoid(s.r[c]) * s.out[c];
            }
        }
        self.model.ln_out.row(store, &s.h, &mut s.out);
        emit(&s.out);
    }
}
