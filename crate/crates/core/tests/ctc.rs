mod common;

use common::{ctc_collapse, ctc_nll_enumerated, Rng};
use proptest::prelude::*;
use vadkit_core::autodiff::Tape;
use vadkit_core::heads::ctc::{ctc_loss_and_grad, min_frames};
use vadkit_core::heads::{ctc_greedy_decode, ctc_loss};
use vadkit_core::tensor::Tensor;

fn log_softmax_rows(r: &mut Rng, t: usize, c: usize) -> Tensor {
    let mut data = Vec::with_capacity(t * c);
    for _ in 0..t {
        let row: Vec<f64> = (0..c).map(|_| r.sym(3.0)).collect();
        let lse = row.iter().map(|x| x.exp()).sum::<f64>().ln();
        data.extend(row.iter().map(|x| x - lse));
    }
    Tensor::matrix(t, c, data).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn forward_recursion_equals_enumeration(
        t in 1usize..=5, v in 1usize..=3, labels in prop::collection::vec(1usize..=3, 0..=3), seed in any::<u64>(),
    ) {
        let labels: Vec<usize> = labels.into_iter().map(|l| (l - 1) % v + 1).collect();
        prop_assume!(min_frames(&labels) <= t);
        let lp = log_softmax_rows(&mut Rng::new(seed), t, v + 1);
        let got = ctc_loss(&lp, &labels).unwrap();
        let want = ctc_nll_enumerated(&lp, &labels);
        prop_assert!((got - want).abs() < 1e-9, "{} vs {}", got, want);
    }

    #[test]
    fn gradient_matches_tape_backward(t in 2usize..=6, seed in any::<u64>()) {
        let lp = log_softmax_rows(&mut Rng::new(seed), t, 4);
        let labels = [1, 3];
        let (loss, grad) = ctc_loss_and_grad(&lp, &labels).unwrap();
        let mut tape = Tape::new();
        let x = tape.input(lp.clone()).unwrap();
        let l = tape.ctc(x, &labels).unwrap();
        prop_assert!((tape.scalar(l) - loss).abs() < 1e-12);
        let g = tape.backward(l).unwrap();
        let tg = g.wrt(x).unwrap();
        for (a, b) in tg.iter().zip(&grad) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn infeasible_and_bad_labels_are_errors() {
    let lp = log_softmax_rows(&mut Rng::new(1), 2, 3);
    assert!(ctc_loss(&lp, &[1, 1]).is_err());
    assert!(ctc_loss(&lp, &[0]).is_err());
    assert!(ctc_loss(&lp, &[3]).is_err());
}

#[test]
fn greedy_decode_collapses_the_argmax_path() {
    let mut r = Rng::new(4);
    let lp = log_softmax_rows(&mut r, 12, 4);
    let argmax: Vec<usize> = (0..12)
        .map(|t| {
            let row = lp.row(t);
            (0..4).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap()
        })
        .collect();
    assert_eq!(ctc_greedy_decode(&lp), ctc_collapse(&argmax));
}
