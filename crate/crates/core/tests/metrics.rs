mod common;

use common::{corpus_cer_naive, dcf_naive, edit_distance_exhaustive, nrr_naive, random_segments, Rng};
use proptest::prelude::*;
use vadkit_core::audio::SpeechSegment;
use vadkit_core::metrics::{align_frames, corpus_cer, dcf, levenshtein, nrr, relative_change, table_average};

fn short_string() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(vec!['a', 'b', 'c', ' ', '你']), 0..7).prop_map(|v| v.into_iter().collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn dcf_matches_frame_enumeration(seed in any::<u64>(), n in 1usize..4) {
        let mut r = Rng::new(seed);
        let utts: Vec<_> = (0..n)
            .map(|_| {
                let dur = r.int(1, 300) as u64;
                (random_segments(&mut r, dur, 3), random_segments(&mut r, dur, 3), dur)
            })
            .collect();
        let aligned: Vec<_> = utts.iter().map(|(re, h, d)| align_frames(re, h, *d, 10).unwrap()).collect();
        match (dcf(&aligned), dcf_naive(&utts, 10)) {
            (Ok(d), Some((want, pm, pf))) => {
                prop_assert!((d.dcf_pct - want).abs() < 1e-9);
                prop_assert!((d.p_miss_pct - pm).abs() < 1e-9 && (d.p_fa_pct - pf).abs() < 1e-9);
                prop_assert!((0.0..=100.0).contains(&d.dcf_pct));
            }
            (Err(_), None) => {}
            (a, b) => prop_assert!(false, "{:?} vs {:?}", a, b),
        }
    }

    #[test]
    fn levenshtein_is_a_metric(a in short_string(), b in short_string(), c in short_string()) {
        let (a, b, c): (Vec<char>, Vec<char>, Vec<char>) = (a.chars().collect(), b.chars().collect(), c.chars().collect());
        prop_assert_eq!(levenshtein(&a, &b), edit_distance_exhaustive(&a, &b));
        prop_assert_eq!(levenshtein(&a, &b), levenshtein(&b, &a));
        prop_assert!(levenshtein(&a, &c) <= levenshtein(&a, &b) + levenshtein(&b, &c));
        prop_assert_eq!(levenshtein(&a, &a), 0);
    }

    #[test]
    fn corpus_cer_matches_brute_force(pairs in prop::collection::vec((short_string(), short_string()), 1..5)) {
        let refs_ok = pairs.iter().all(|(r, _)| r.chars().any(|c| !c.is_whitespace()));
        let got = corpus_cer(pairs.iter().map(|(r, h)| (r.as_str(), h.as_str())));
        if refs_ok {
            prop_assert!((got.unwrap() - corpus_cer_naive(&pairs)).abs() < 1e-9);
        } else {
            prop_assert!(got.is_err());
        }
    }

    #[test]
    fn nrr_counts_empty_files(seed in any::<u64>(), n in 1usize..10) {
        let mut r = Rng::new(seed);
        let files: Vec<Vec<SpeechSegment>> = (0..n).map(|_| random_segments(&mut r, 1000, 2)).collect();
        prop_assert_eq!(nrr(&files).unwrap(), nrr_naive(&files));
    }
}

#[test]
fn nrr_boundaries() {
    let none: Vec<Vec<SpeechSegment>> = vec![Vec::new(); 4];
    assert_eq!(nrr(&none).unwrap(), 100.0);
    let mut three = none.clone();
    three[2] = vec![SpeechSegment::new(0, 10)];
    assert_eq!(nrr(&three).unwrap(), 75.0);
    let all: Vec<_> = vec![vec![SpeechSegment::new(5, 6)]; 3];
    assert_eq!(nrr(&all).unwrap(), 0.0);
    assert!(nrr::<Vec<SpeechSegment>>(&[]).is_err());
}

#[test]
fn frame_centers_decide_boundaries() {
    // frame 0 center 5 ms: [5, 15) covers it, [6, 15) does not
    let a = align_frames(&[SpeechSegment::new(5, 15)], &[], 20, 10).unwrap();
    assert_eq!(a.reference, vec![true, false]);
    let a = align_frames(&[SpeechSegment::new(6, 16)], &[], 20, 10).unwrap();
    assert_eq!(a.reference, vec![false, true]);
    let a = align_frames(&[SpeechSegment::new(6, 15)], &[], 20, 10).unwrap();
    assert_eq!(a.reference, vec![false, false]);
    assert!(align_frames(&[SpeechSegment::new(0, 30)], &[], 20, 10).is_err());
}

#[test]
fn averages_and_relative_change() {
    assert!((table_average(&[2.53, 4.31, 6.95, 19.99, 20.60, 16.00]).unwrap() - 11.73).abs() < 0.005);
    assert_eq!(relative_change(11.73, 10.91).unwrap(), -7.0);
    assert_eq!(relative_change(57.51, 68.56).unwrap(), 19.2);
    // exact ±0.25 rounds away from zero
    assert_eq!(relative_change(100.0, 100.25).unwrap(), 0.3);
    assert_eq!(relative_change(100.0, 99.75).unwrap(), -0.3);
    assert!(relative_change(0.0, 1.0).is_err());
}
