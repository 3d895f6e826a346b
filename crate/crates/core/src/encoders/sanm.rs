//! SAN-M: multi-head self-attention whose projected values also pass through
//! a per-dimension FIR memory filter, stacked with pre-norm FFN blocks and
//! evaluated independently over fixed-length chunks.

use alloc::vec::Vec;

use super::{Builder, Init, Linear, Norm};
use crate::autodiff::{Axis, Tape, Var};
use crate::config::SanmConfig;
use crate::error::Result;
use crate::tensor::{ParamId, ParamStore};

#[derive(Debug, Clone)]
pub struct SanmBlock {
    pub ln_attn: Norm,
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    /// `(lmem + 1) × d`, row 0 weights the current frame.
    pub mem_past: ParamId,
    /// `rmem × d`.
    pub mem_future: Option<ParamId>,
    pub ln_ffn: Norm,
    pub ffn_in: Linear,
    pub ffn_out: Linear,
    pub heads: usize,
}

/// Attention output plus the per-head attention matrices.
pub struct AttentionOutput {
    pub output: Var,
    pub weights: Vec<Var>,
    pub values: Var,
}

impl SanmBlock {
    pub fn attention(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<AttentionOutput> {
        let d = self.query.fan_out;
        let dh = d / self.heads;
        let q = self.query.forward(tape, store, x)?;
        let k = self.key.forward(tape, store, x)?;
        let v = self.value.forward(tape, store, x)?;
        let scale = 1.0 / libm::sqrt(dh as f64);
        let mut contexts = Vec::with_capacity(self.heads);
        let mut weights = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = tape.slice(q, Axis::Cols, h * dh, dh)?;
            let kh = tape.slice(k, Axis::Cols, h * dh, dh)?;
            let vh = tape.slice(v, Axis::Cols, h * dh, dh)?;
            let kt = tape.transpose(kh)?;
            let scores = tape.matmul(qh, kt)?;
            let scores = tape.scale(scores, scale)?;
            let a = tape.softmax(scores, Axis::Cols)?;
            contexts.push(tape.matmul(a, vh)?);
            weights.push(a);
        }
        let ctx = if contexts.len() == 1 {
            contexts[0]
        } else {
            tape.concat(&contexts, Axis::Cols)?
        };
        let attn = self.output.forward(tape, store, ctx)?;
        let past = tape.param(store, self.mem_past)?;
        let future = match self.mem_future {
            Some(f) => Some(tape.param(store, f)?),
            None => None,
        };
        let memory = tape.memory_filter(v, past, future, 1, 1)?;
        let output = tape.add(attn, memory)?;
        Ok(AttentionOutput {
            output,
            weights,
            values: v,
        })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var, dropout: f64, training: bool) -> Result<Var> {
        let xn = self.ln_attn.forward(tape, store, x)?;
        let a = self.attention(tape, store, xn)?.output;
        let a = tape.dropout(a, dropout, training)?;
        let x1 = tape.add(x, a)?;
        let xn = self.ln_ffn.forward(tape, store, x1)?;
        let f = self.ffn_in.forward(tape, store, xn)?;
        let f = tape.relu(f)?;
        let f = self.ffn_out.forward(tape, store, f)?;
        let f = tape.dropout(f, dropout, training)?;
        tape.add(x1, f)
    }
}

#[derive(Debug, Clone)]
pub struct Sanm {
    cfg: SanmConfig,
    input: Linear,
    blocks: Vec<SanmBlock>,
    ln_out: Norm,
}

/// Consecutive `[start, len)` spans of at most `chunk_frames` frames.
pub fn chunk_sequence(frames: usize, chunk_frames: usize) -> Vec<(usize, usize)> {
    let step = chunk_frames.max(1);
    (0..frames)
        .step_by(step)
        .map(|s| (s, step.min(frames - s)))
        .collect()
}

impl Sanm {
    pub(crate) fn build(cfg: SanmConfig, b: &mut Builder<'_>) -> Result<Self> {
        let d = cfg.dim;
        let input = b.linear("input", cfg.input_dim, d, true)?;
        let taps = cfg.lmem + cfg.rmem + 1;
        let mut blocks = Vec::with_capacity(cfg.blocks);
        for l in 0..cfg.blocks {
            let n = |s: &str| alloc::format!("blocks.{l}.{s}");
            blocks.push(SanmBlock {
                ln_attn: b.layer_norm(&n("ln_attn"), d)?,
                query: b.linear(&n("attn.query"), d, d, true)?,
                key: b.linear(&n("attn.key"), d, d, true)?,
                value: b.linear(&n("attn.value"), d, d, true)?,
                output: b.linear(&n("attn.output"), d, d, true)?,
                mem_past: b.param(&n("attn.memory.past"), &[cfg.lmem + 1, d], Init::FanIn(taps))?,
                mem_future: if cfg.rmem > 0 {
                    Some(b.param(&n("attn.memory.future"), &[cfg.rmem, d], Init::FanIn(taps))?)
                } else {
                    None
                },
                ln_ffn: b.layer_norm(&n("ln_ffn"), d)?,
                ffn_in: b.linear(&n("ffn.in"), d, cfg.ffn_dim, true)?,
                ffn_out: b.linear(&n("ffn.out"), cfg.ffn_dim, d, true)?,
                heads: cfg.heads,
            });
        }
        let ln_out = b.layer_norm("ln_out", d)?;
        Ok(Self {
            cfg,
            input,
            blocks,
            ln_out,
        })
    }

    pub fn config(&self) -> &SanmConfig {
        &self.cfg
    }

    pub fn blocks(&self) -> &[SanmBlock] {
        &self.blocks
    }

    /// Runs every block over one chunk of already-projected frames.
    pub fn forward_chunk(&self, tape: &mut Tape, store: &ParamStore, x: Var, training: bool) -> Result<Var> {
        let mut h = x;
        for blk in &self.blocks {
            h = blk.forward(tape, store, h, self.cfg.dropout, training)?;
        }
        self.ln_out.forward(tape, store, h)
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var, training: bool) -> Result<Var> {
        if tape.dims(x).get(1) != Some(&self.cfg.input_dim) {
            return Err(crate::error::Error::Config(alloc::format!(
                "sanm expects {}-dim input, got {:?}",
                self.cfg.input_dim,
                tape.dims(x)
            )));
        }
        let h = self.input.forward(tape, store, x)?;
        let frames = tape.dims(h)[0];
        let spans = chunk_sequence(frames, self.cfg.chunk_frames);
        if spans.len() <= 1 {
            return self.forward_chunk(tape, store, h, training);
        }
        let mut outs = Vec::with_capacity(spans.len());
        for (start, len) in spans {
            let c = tape.slice(h, Axis::Rows, start, len)?;
            outs.push(self.forward_chunk(tape, store, c, training)?);
        }
        tape.concat(&outs, Axis::Rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunk_spans() {
        assert_eq!(chunk_sequence(10, 4), alloc::vec![(0, 4), (4, 4), (8, 2)]);
        assert_eq!(chunk_sequence(3, 5), alloc::vec![(0, 3)]);
        assert!(chunk_sequence(0, 5).is_empty());
    }
}
