//! Deep FSMN encoder.
//!
//! Block `l` maps its input `x` to `p = relu(x·W_in + b_in)`, adds the
//! memory `Σ_i a_i ⊙ p_{t-s1·i} + Σ_j c_j ⊙ p_{t+s2·j}` plus the previous
//! block's memory output (identity skip), then projects back to the block
//! width for the next block.

use alloc::vec;
use alloc::vec::Vec;

use super::{Builder, Init, Linear};
use crate::autodiff::{Tape, Var};
use crate::config::DfsmnConfig;
use crate::error::{shape_err, Error, Result};
use crate::kernels;
use crate::tensor::{ParamId, ParamStore, Tensor};

#[derive(Debug, Clone)]
pub struct DfsmnBlock {
    pub expand: Linear,
    /// `(N1 + 1) × proj` look-back taps, row 0 weights the current frame.
    pub past: ParamId,
    /// `N2 × proj` lookahead taps.
    pub future: Option<ParamId>,
    pub project: Linear,
}

#[derive(Debug, Clone)]
pub struct Dfsmn {
    cfg: DfsmnConfig,
    input: Linear,
    blocks: Vec<DfsmnBlock>,
    output: Linear,
}

impl Dfsmn {
    pub(crate) fn build(cfg: DfsmnConfig, b: &mut Builder<'_>) -> Result<Self> {
        let input = b.linear("input", cfg.input_dim, cfg.linear_dim, true)?;
        let taps = cfg.lorder + cfg.rorder + 1;
        let mut blocks = Vec::with_capacity(cfg.blocks);
        for l in 0..cfg.blocks {
            let expand = b.linear(&alloc::format!("blocks.{l}.expand"), cfg.linear_dim, cfg.proj_dim, true)?;
            let past = b.param(
                &alloc::format!("blocks.{l}.memory.past"),
                &[cfg.lorder + 1, cfg.proj_dim],
                Init::FanIn(taps),
            )?;
            let future = if cfg.rorder > 0 {
                Some(b.param(
                    &alloc::format!("blocks.{l}.memory.future"),
                    &[cfg.rorder, cfg.proj_dim],
                    Init::FanIn(taps),
                )?)
            } else {
                None
            };
            let project = b.linear(&alloc::format!("blocks.{l}.project"), cfg.proj_dim, cfg.linear_dim, true)?;
            blocks.push(DfsmnBlock {
                expand,
                past,
                future,
                project,
            });
        }
        let output = b.linear("output", cfg.linear_dim, cfg.linear_dim, true)?;
        Ok(Self {
            cfg,
            input,
            blocks,
            output,
        })
    }

    pub fn config(&self) -> &DfsmnConfig {
        &self.cfg
    }

    pub fn blocks(&self) -> &[DfsmnBlock] {
        &self.blocks
    }

    /// Σ over blocks of N2 · s2.
    pub fn lookahead_frames(&self) -> usize {
        self.cfg.blocks * self.cfg.rorder * self.cfg.rstride
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        if tape.dims(x).get(1) != Some(&self.cfg.input_dim) {
            return Err(Error::Config(alloc::format!(
                "dfsmn expects {}-dim input, got {:?}",
                self.cfg.input_dim,
                tape.dims(x)
            )));
        }
        let mut h = self.input.forward(tape, store, x)?;
        let mut prev: Option<Var> = None;
        for blk in &self.blocks {
            let pre = blk.expand.forward(tape, store, h)?;
            let p = tape.relu(pre)?;
            let past = tape.param(store, blk.past)?;
            let future = match blk.future {
                Some(f) => Some(tape.param(store, f)?),
                None => None,
            };
            let mem = tape.memory_filter(p, past, future, self.cfg.lstride, self.cfg.rstride)?;
            let mut out = tape.add(p, mem)?;
            if let Some(prev) = prev {
                out = tape.add(out, prev)?;
            }
            prev = Some(out);
            h = blk.project.forward(tape, store, out)?;
        }
        self.output.forward(tape, store, h)
    }

    /// Frame-synchronous state; only causal (`rorder = 0`) stacks stream.
    pub fn stream(&self, store: &ParamStore) -> Result<DfsmnStream> {
        if self.cfg.rorder != 0 {
            return Err(Error::UnsupportedStreaming(alloc::format!(
                "dfsmn with rorder {} needs future frames",
                self.cfg.rorder
            )));
        }
        let _ = store;
        let hist = self.cfg.lorder * self.cfg.lstride + 1;
        Ok(DfsmnStream {
            model: self.clone(),
            history: vec![vec![0.0; hist * self.cfg.proj_dim]; self.cfg.blocks],
            seen: 0,
            x: vec![0.0; self.cfg.linear_dim],
            y: vec![0.0; self.cfg.linear_dim],
            p: vec![0.0; self.cfg.proj_dim],
            cur: vec![0.0; self.cfg.proj_dim],
            prev: vec![0.0; self.cfg.proj_dim],
        })
    }
}

/// Ring buffers of the last `N1·s1 + 1` expanded frames per block.
#[derive(Debug, Clone)]
pub struct DfsmnStream {
    model: Dfsmn,
    history: Vec<Vec<f64>>,
    seen: usize,
    x: Vec<f64>,
    y: Vec<f64>,
    p: Vec<f64>,
    cur: Vec<f64>,
    prev: Vec<f64>,
}

impl DfsmnStream {
    pub fn reset(&mut self) {
        self.seen = 0;
        for h in &mut self.history {
            h.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn push(&mut self, store: &ParamStore, frame: &[f64], mut emit: impl FnMut(&[f64])) {
        let cfg = &self.model.cfg;
        let d = cfg.proj_dim;
        let hist = cfg.lorder * cfg.lstride + 1;
        let slot = self.seen % hist;
        self.model.input.row(store, frame, &mut self.x);
        for (l, blk) in self.model.blocks.iter().enumerate() {
            blk.expand.row(store, &self.x, &mut self.p);
            self.p.iter_mut().for_each(|v| *v = kernels::relu(*v));
            let ring = &mut self.history[l];
            ring[slot * d..(slot + 1) * d].copy_from_slice(&self.p);

            self.cur.iter_mut().for_each(|v| *v = 0.0);
            let taps = store.data(blk.past);
            for i in 0..=cfg.lorder {
                let back = cfg.lstride * i;
                if back > self.seen {
                    break;
                }
                let s = (slot + hist - back) % hist;
                let src = &ring[s * d..(s + 1) * d];
                for c in 0..d {
                    self.cur[c] += taps[i * d + c] as f64 * src[c];
                }
            }
            for c in 0..d {
                self.cur[c] = self.p[c] + self.cur[c];
            }
            if l > 0 {
                for c in 0..d {
                    self.cur[c] += self.prev[c];
                }
            }
            core::mem::swap(&mut self.prev, &mut self.cur);
            blk.project.row(store, &self.prev, &mut self.x);
        }
        self.model.output.row(store, &self.x, &mut self.y);
        self.seen += 1;
        emit(&self.y);
    }
}

/// `out_t = prev_t + p_t + Σ_{i=0..=N1} a_i ⊙ p_{t−s1·i} + Σ_{j=1..=N2} c_j ⊙ p_{t+s2·j}`
/// with zero padding outside the sequence.
pub fn dfsmn_memory_block(
    p: &Tensor,
    prev: &Tensor,
    past: &Tensor,
    future: &Tensor,
    s1: usize,
    s2: usize,
) -> Result<Tensor> {
    if p.dims() != prev.dims() || p.dims().len() != 2 {
        return Err(shape_err("dfsmn_memory_block", p.dims(), prev.dims()));
    }
    let d = p.cols();
    if past.cols() != d || (!future.is_empty() && future.cols() != d) {
        return Err(shape_err("dfsmn_memory_block", p.dims(), past.dims()));
    }
    let mut mem = vec![0.0; p.len()];
    kernels::memory_filter(p.data(), p.rows(), d, past.data(), future.data(), s1, s2, &mut mem);
    let data = mem
        .iter()
        .zip(p.data())
        .zip(prev.data())
        .map(|((m, p), h)| h + p + m)
        .collect();
    Tensor::new(p.dims().to_vec(), data)
}
