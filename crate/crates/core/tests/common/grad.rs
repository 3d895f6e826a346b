//! Finite-difference gradient checks at toy dimensions. Each case returns
//! the worst relative error over inputs and a seeded parameter sample.

use vadkit_core::autodiff::{Tape, Var};
use vadkit_core::config::{DfsmnConfig, EncoderConfig, HeadsConfig, ModelConfig, RwkvConfig, SanmConfig};
use vadkit_core::encoders::Encoder;
use vadkit_core::gradcheck::{finite_difference_check, param_difference_check, FD_EPS};
use vadkit_core::heads::{frame_labels, punctuation_labels};
use vadkit_core::audio::SpeechSegment;
use vadkit_core::model::{Targets, VadModel};
use vadkit_core::tensor::{Initializer, ParamStore, Tensor};
use vadkit_core::Result;

use super::Rng;

const COORDS: Option<usize> = Some(24);

/// `Σ y ⊙ r` with a fixed random `r`, so no output direction cancels.
fn project(tape: &mut Tape, y: Var, seed: u64) -> Result<Var> {
    let d = tape.dims(y).to_vec();
    let r = Rng::new(seed).matrix(d[0], d[1], 1.0);
    let r = tape.input(r)?;
    let p = tape.mul(y, r)?;
    tape.sum(p)
}

fn build(cfg: &EncoderConfig, seed: u64) -> (Encoder, ParamStore) {
    let mut store = ParamStore::new();
    let mut init = Initializer::new(seed);
    let enc = Encoder::build(cfg, &mut store, Some(&mut init)).unwrap();
    (enc, store)
}

fn check_encoder_part<F>(store: &ParamStore, x: &Tensor, seed: u64, f: F) -> Result<f64>
where
    F: Fn(&mut Tape, &ParamStore, Var) -> Result<Var>,
{
    let on_input = finite_difference_check(
        |tape, v| {
            let y = f(tape, store, v[0])?;
            project(tape, y, seed)
        },
        std::slice::from_ref(x),
        FD_EPS,
        COORDS,
        seed,
    )?;
    let xs = x.clone();
    let on_params = param_difference_check(
        |tape, s| {
            let v = tape.input(xs.clone())?;
            let y = f(tape, s, v)?;
            project(tape, y, seed)
        },
        store,
        FD_EPS,
        COORDS,
        seed,
    )?;
    Ok(on_input.max(on_params))
}

pub fn dfsmn_block() -> Result<f64> {
    let cfg = EncoderConfig::Dfsmn(DfsmnConfig {
        input_dim: 5,
        linear_dim: 4,
        proj_dim: 6,
        blocks: 2,
        lorder: 2,
        rorder: 1,
        lstride: 2,
        rstride: 1,
    });
    let (enc, store) = build(&cfg, 1);
    let x = Rng::new(2).matrix(7, 5, 1.0);
    check_encoder_part(&store, &x, 3, |t, s, v| enc.forward(t, s, v, false))
}

pub fn rwkv_block() -> Result<f64> {
    let cfg = EncoderConfig::Rwkv(RwkvConfig {
        input_dim: 9,
        conv_channels: 2,
        dim: 4,
        ffn_dim: 8,
        blocks: 1,
        dropout: 0.0,
    });
    let (enc, store) = build(&cfg, 4);
    let Encoder::Rwkv(r) = &enc else { unreachable!() };
    let x = Rng::new(5).matrix(6, 4, 1.0);
    let blk = r.blocks()[0].clone();
    let block = check_encoder_part(&store, &x, 6, |t, s, v| blk.forward(t, s, v, 0.0, false))?;
    // the conv front end and the stack as a whole
    let x = Rng::new(7).matrix(9, 9, 1.0);
    let stack = check_encoder_part(&store, &x, 8, |t, s, v| enc.forward(t, s, v, false))?;
    Ok(block.max(stack))
}

pub fn sanm_block() -> Result<f64> {
    let cfg = EncoderConfig::Sanm(SanmConfig {
        input_dim: 5,
        dim: 4,
        ffn_dim: 6,
        heads: 2,
        blocks: 1,
        lmem: 2,
        rmem: 1,
        chunk_frames: 4,
        dropout: 0.0,
    });
    let (enc, store) = build(&cfg, 9);
    let Encoder::Sanm(s) = &enc else { unreachable!() };
    let blk = s.blocks()[0].clone();
    let x = Rng::new(10).matrix(6, 4, 1.0);
    let block = check_encoder_part(&store, &x, 11, |t, st, v| blk.forward(t, st, v, 0.0, false))?;
    // two chunks through input projection and final norm
    let x = Rng::new(12).matrix(7, 5, 1.0);
    let stack = check_encoder_part(&store, &x, 13, |t, st, v| enc.forward(t, st, v, false))?;
    Ok(block.max(stack))
}

pub fn cross_entropy() -> Result<f64> {
    let logits = Rng::new(14).matrix(6, 3, 2.0);
    let labels = [0, 2, 1, 1, 0, 2];
    finite_difference_check(|t, v| t.cross_entropy(v[0], &labels), &[logits], FD_EPS, None, 15)
}

pub fn ctc() -> Result<f64> {
    let logits = Rng::new(16).matrix(7, 4, 2.0);
    let labels = [1, 3, 3];
    finite_difference_check(
        |t, v| {
            let lp = t.log_softmax(v[0])?;
            t.ctc(lp, &labels)
        },
        &[logits],
        FD_EPS,
        None,
        17,
    )
}

pub fn multitask() -> Result<f64> {
    let cfg = ModelConfig {
        encoder: EncoderConfig::Dfsmn(DfsmnConfig {
            input_dim: 160,
            linear_dim: 4,
            proj_dim: 5,
            blocks: 2,
            lorder: 2,
            rorder: 0,
            lstride: 1,
            rstride: 1,
        }),
        heads: HeadsConfig {
            vocab_size: 3,
            ..HeadsConfig::default()
        },
    };
    let model = VadModel::new(cfg, 18)?;
    let frames = 8;
    let x = Rng::new(19).matrix(frames, 160, 1.0);
    let vad = frame_labels(&[SpeechSegment::new(40, 100)], frames, 20);
    let targets = Targets {
        punct: punctuation_labels(&vad),
        vad,
        tokens: Some(vec![2, 1]),
    };
    // forward_losses records its own input node, so parameters are probed.
    let store = model.store().clone();
    let cfg = model.config().clone();
    param_difference_check(
        |t, s| {
            let m = VadModel::from_params(cfg.clone(), s.clone())?;
            m.forward_losses(t, &x, &targets, false).map(|l| l.total)
        },
        &store,
        FD_EPS,
        COORDS,
        21,
    )
}

pub fn all() -> Vec<(&'static str, fn() -> Result<f64>)> {
    vec![
        ("dfsmn block", dfsmn_block as fn() -> Result<f64>),
        ("rwkv block", rwkv_block),
        ("sanm block", sanm_block),
        ("cross-entropy", cross_entropy),
        ("ctc", ctc),
        ("multi-task loss", multitask),
    ]
}
