mod common;

use common::{affine, dfsmn_memory_naive, fir_naive, mha_naive, wkv_naive, Rng};
use proptest::prelude::*;
use vadkit_core::autodiff::Tape;
use vadkit_core::config::{DfsmnConfig, EncoderConfig, RwkvConfig, SanmConfig};
use vadkit_core::encoders::{dfsmn_memory_block, rwkv_wkv, Encoder};
use vadkit_core::tensor::{Initializer, ParamStore, Tensor};

fn build(cfg: EncoderConfig, seed: u64) -> (Encoder, ParamStore) {
    let mut store = ParamStore::new();
    let mut init = Initializer::new(seed);
    let enc = Encoder::build(&cfg, &mut store, Some(&mut init)).unwrap();
    (enc, store)
}

fn tape_forward(enc: &Encoder, store: &ParamStore, x: &Tensor) -> Tensor {
    let mut tape = Tape::inference();
    let xv = tape.input(x.clone()).unwrap();
    let y = enc.forward(&mut tape, store, xv, false).unwrap();
    tape.value(y).clone()
}

fn streamed(enc: &Encoder, store: &ParamStore, x: &Tensor) -> Tensor {
    let mut s = enc.streamer(store).unwrap();
    let mut rows = Vec::new();
    for t in 0..x.rows() {
        s.push(store, x.row(t), |h| rows.push(h.to_vec()));
    }
    Tensor::from_rows(&rows).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn memory_block_matches_triple_loop(
        t in 1usize..=16, d in 1usize..=8, n1 in 0usize..=4, n2 in 0usize..=4,
        s1 in 1usize..=2, s2 in 1usize..=2, seed in any::<u64>(),
    ) {
        let mut r = Rng::new(seed);
        let (p, prev) = (r.matrix(t, d, 1.0), r.matrix(t, d, 1.0));
        let (past, future) = (r.matrix(n1 + 1, d, 1.0), r.matrix(n2, d, 1.0));
        let got = dfsmn_memory_block(&p, &prev, &past, &future, s1, s2).unwrap();
        let want = dfsmn_memory_naive(&p, &prev, &past, &future, s1, s2);
        prop_assert!(got.max_abs_diff(&want) < 1e-9);
    }

    #[test]
    fn causal_memory_ignores_the_future(
        t in 2usize..=16, d in 1usize..=8, n1 in 0usize..=4, s1 in 1usize..=2, seed in any::<u64>(),
    ) {
        let mut r = Rng::new(seed);
        let (mut p, prev) = (r.matrix(t, d, 1.0), r.matrix(t, d, 1.0));
        let past = r.matrix(n1 + 1, d, 1.0);
        let none = Tensor::zeros(vec![0, d]);
        let before = dfsmn_memory_block(&p, &prev, &past, &none, s1, 1).unwrap();
        let t0 = r.int(1, t - 1);
        p.row_mut(t0).iter_mut().for_each(|v| *v += 3.0);
        let after = dfsmn_memory_block(&p, &prev, &past, &none, s1, 1).unwrap();
        prop_assert_eq!(&before.data()[..t0 * d], &after.data()[..t0 * d]);
    }

    #[test]
    fn wkv_matches_direct_sum(t in 1usize..=24, d in 1usize..=6, seed in any::<u64>()) {
        let mut r = Rng::new(seed);
        let (k, v) = (r.matrix(t, d, 3.0), r.matrix(t, d, 2.0));
        let w: Vec<f64> = (0..d).map(|_| r.sym(2.0)).collect();
        let u: Vec<f64> = (0..d).map(|_| r.sym(2.0)).collect();
        let got = rwkv_wkv(&k, &v, &w, &u).unwrap();
        prop_assert!(got.max_abs_diff(&wkv_naive(&k, &v, &w, &u)) < 1e-9);
    }

    #[test]
    fn wkv_is_convex_combination(t in 1usize..=16, seed in any::<u64>()) {
        let mut r = Rng::new(seed);
        let (k, v) = (r.matrix(t, 3, 5.0), r.matrix(t, 3, 1.0));
        let out = rwkv_wkv(&k, &v, &[0.5, -1.0, 1.5], &[0.0, 2.0, -2.0]).unwrap();
        for c in 0..3 {
            let col: Vec<f64> = (0..t).map(|i| v.row(i)[c]).collect();
            let (lo, hi) = col.iter().fold((f64::MAX, f64::MIN), |(a, b), &x| (a.min(x), b.max(x)));
            for i in 0..t {
                prop_assert!(out.row(i)[c] >= lo - 1e-12 && out.row(i)[c] <= hi + 1e-12);
            }
        }
    }
}

#[test]
fn dfsmn_stack_causality() {
    let cfg = DfsmnConfig {
        input_dim: 6,
        linear_dim: 5,
        proj_dim: 7,
        blocks: 3,
        lorder: 3,
        rorder: 0,
        lstride: 2,
        rstride: 1,
    };
    let (enc, store) = build(EncoderConfig::Dfsmn(cfg), 11);
    let mut r = Rng::new(1);
    let x = r.matrix(12, 6, 1.0);
    let base = tape_forward(&enc, &store, &x);
    let mut bumped = x.clone();
    bumped.row_mut(7).iter_mut().for_each(|v| *v -= 2.0);
    let after = tape_forward(&enc, &store, &bumped);
    let d = base.cols();
    assert_eq!(&base.data()[..7 * d], &after.data()[..7 * d]);
    assert_ne!(&base.data()[7 * d..8 * d], &after.data()[7 * d..8 * d]);
}

#[test]
fn dfsmn_lookahead_reaches_exactly_rorder_frames() {
    let cfg = DfsmnConfig {
        input_dim: 4,
        linear_dim: 4,
        proj_dim: 6,
        blocks: 2,
        lorder: 1,
        rorder: 2,
        lstride: 1,
        rstride: 1,
    };
    let (enc, store) = build(EncoderConfig::Dfsmn(cfg), 5);
    assert_eq!(enc.lookahead_frames(), Some(4));
    let x = Rng::new(2).matrix(14, 4, 1.0);
    let base = tape_forward(&enc, &store, &x);
    let mut bumped = x.clone();
    bumped.row_mut(10).iter_mut().for_each(|v| *v += 1.0);
    let after = tape_forward(&enc, &store, &bumped);
    let d = base.cols();
    // frames before 10 − 4 are unaffected, frame 6 sees the change
    assert_eq!(&base.data()[..6 * d], &after.data()[..6 * d]);
    assert_ne!(&base.data()[6 * d..7 * d], &after.data()[6 * d..7 * d]);
}

#[test]
fn streaming_matches_batch_for_causal_encoders() {
    let dfsmn = EncoderConfig::Dfsmn(DfsmnConfig {
        input_dim: 10,
        linear_dim: 8,
        proj_dim: 12,
        blocks: 3,
        lorder: 4,
        rorder: 0,
        lstride: 1,
        rstride: 1,
    });
    let rwkv = EncoderConfig::Rwkv(RwkvConfig {
        input_dim: 13,
        conv_channels: 3,
        dim: 8,
        ffn_dim: 16,
        blocks: 4,
        dropout: 0.1,
    });
    for (i, cfg) in [dfsmn, rwkv].into_iter().enumerate() {
        let (enc, store) = build(cfg.clone(), 20 + i as u64);
        for seed in 0..5 {
            let x = Rng::new(seed).matrix(5 + 7 * seed as usize, cfg.input_dim(), 1.5);
            let batch = tape_forward(&enc, &store, &x);
            let stream = streamed(&enc, &store, &x);
            assert_eq!(batch.dims(), stream.dims());
            assert!(batch.max_abs_diff(&stream) < 1e-9, "{cfg:?}");
        }
    }
}

fn tiny_sanm(lmem: usize, rmem: usize, chunk: usize) -> SanmConfig {
    SanmConfig {
        input_dim: 6,
        dim: 8,
        ffn_dim: 10,
        heads: 2,
        blocks: 2,
        lmem,
        rmem,
        chunk_frames: chunk,
        dropout: 0.0,
    }
}

/// Attention sub-layer against textbook MHA plus the FIR oracle over values.
#[test]
fn sanm_attention_decomposes_into_mha_plus_fir() {
    for (lmem, rmem) in [(0, 0), (2, 0), (3, 2)] {
        let (enc, store) = build(EncoderConfig::Sanm(tiny_sanm(lmem, rmem, 100)), 3);
        let Encoder::Sanm(s) = &enc else { unreachable!() };
        let blk = &s.blocks()[0];
        let x = Rng::new(9).matrix(7, 8, 1.0);
        let mut tape = Tape::inference();
        let xv = tape.input(x.clone()).unwrap();
        let out = blk.attention(&mut tape, &store, xv).unwrap();
        let lin = |l: &vadkit_core::encoders::Linear, x: &Tensor| affine(x, store.data(l.w), l.b.map(|b| store.data(b)), l.fan_out);
        let (q, k, v) = (lin(&blk.query, &x), lin(&blk.key, &x), lin(&blk.value, &x));
        let (ctx, mats) = mha_naive(&q, &k, &v, blk.heads);
        let attn = lin(&blk.output, &ctx);
        let past = Tensor::new(vec![lmem + 1, 8], store.data(blk.mem_past).iter().map(|&w| w as f64).collect()).unwrap();
        let future = blk
            .mem_future
            .map(|f| Tensor::new(vec![rmem, 8], store.data(f).iter().map(|&w| w as f64).collect()).unwrap());
        let fir = fir_naive(&v, &past, future.as_ref());
        let want: Vec<f64> = attn.data().iter().zip(fir.data()).map(|(a, b)| a + b).collect();
        let got = tape.value(out.output);
        let diff = got.data().iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-9, "lmem {lmem} rmem {rmem}: {diff}");
        for (h, m) in mats.iter().enumerate() {
            let a = tape.value(out.weights[h]);
            assert!(a.max_abs_diff(m) < 1e-9);
            for i in 0..a.rows() {
                assert!((a.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn sanm_chunking_is_identity_below_chunk_length() {
    let (short, store) = build(EncoderConfig::Sanm(tiny_sanm(2, 1, 9)), 4);
    let long = Encoder::build(&EncoderConfig::Sanm(tiny_sanm(2, 1, 1000)), &mut store.clone(), None).unwrap();
    for t in [1, 5, 9] {
        let x = Rng::new(t as u64).matrix(t, 6, 1.0);
        assert_eq!(tape_forward(&short, &store, &x), tape_forward(&long, &store, &x));
    }
    let x = Rng::new(77).matrix(20, 6, 1.0);
    assert_ne!(tape_forward(&short, &store, &x), tape_forward(&long, &store, &x));
}
