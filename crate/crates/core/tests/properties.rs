mod support;

use natadv_core::attack::fgsm_perturb;
use natadv_core::metrics::{bleu, render_diff, BleuConfig};
use natadv_core::model::SentenceEncoding;
use natadv_core::text::{BpeModel, END_OF_WORD};
use proptest::prelude::*;
use std::collections::BTreeMap;
use support::props;

#[test]
fn fgsm_stays_in_the_box() {
    let s = props::fgsm_bound(10_000, 11).unwrap();
    assert_eq!(s.cases, 10_000);
    assert!(s.ok(), "{:?}", s.failures);
}

#[test]
fn bpe_keeps_every_character() {
    let s = props::bpe_preservation(1000, 12).unwrap();
    assert!(s.ok(), "{:?}", s.failures);
    assert!(props::bpe_determinism(13).unwrap());
    for (cap, len) in props::vocab_caps(14).unwrap() {
        assert!(len <= cap, "cap {cap} gave {len}");
    }
}

#[test]
fn bleu_hand_values() {
    for (name, got, want) in props::bleu_oracles().unwrap() {
        assert!((got - want).abs() < 1e-9, "{name}: {got} vs {want}");
    }
}

#[test]
fn diff_rebuilds_both_sides() {
    let s = props::diff_soundness(500, 15);
    assert_eq!(s.cases, 500);
    assert!(s.ok(), "{:?}", s.failures);
}

#[test]
fn diff_example() {
    let w = |s: &'static str| s.split(' ').collect::<Vec<_>>();
    assert_eq!(render_diff(&w("a b c"), &w("a x c")), "a [-b-] {+x+} c");
    assert_eq!(render_diff(&w("a b c"), &w("a b c")), "a b c");
}

proptest! {
    #[test]
    fn fgsm_bound_holds(
        z in prop::collection::vec(-1e6f64..1e6, 1..16),
        seed in any::<u64>(),
        eps in 0f64..1e3,
    ) {
        let g: Vec<f64> = z.iter().enumerate().map(|(i, _)| ((seed >> (i % 64)) & 3) as f64 - 1.5).collect();
        let z = SentenceEncoding(z);
        let adv = fgsm_perturb(&z, &g, eps).unwrap();
        for (a, b) in z.0.iter().zip(&adv.0) {
            prop_assert!((a - b).abs() <= eps);
        }
    }

    #[test]
    fn bleu_in_unit_interval(
        cand in prop::collection::vec(0u8..6, 0..12),
        reference in prop::collection::vec(0u8..6, 1..12),
        max_n in 1usize..5,
        smoothing in any::<bool>(),
    ) {
        let cfg = BleuConfig { max_n, smoothing };
        let b = bleu(&cand, &reference, &cfg).unwrap();
        prop_assert!((0.0..=1.0).contains(&b));
        if max_n <= reference.len() {
            prop_assert_eq!(b == 1.0, cand == reference);
        }
    }

    #[test]
    fn bpe_segments_concatenate_to_word(word in "[a-z]{1,10}", corpus in prop::collection::vec("[a-e]{1,6}", 1..30)) {
        let mut freqs = BTreeMap::new();
        for w in corpus {
            *freqs.entry(w).or_insert(0u64) += 1;
        }
        let model = BpeModel::learn(&freqs, 40).unwrap();
        let joined = model.encode_word(&word).concat();
        prop_assert_eq!(joined.strip_suffix(END_OF_WORD).unwrap(), word.as_str());
    }
}
