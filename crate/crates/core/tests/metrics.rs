mod common;

use spanlink::metrics::{bleu, bleu_with, Normalizer, Smoothing};

#[test]
fn metric_criteria() {
    common::check_metrics().unwrap();
}

#[test]
fn bleu_five_token_cross_check() {
    let b4 = bleu("the cat sat on mat", "the cat sat on the mat", 4);
    assert!((b4 - common::BLEU4_CAT_MAT).abs() < 1e-6, "{b4}");
    let b1 = bleu("the cat sat on mat", "the cat sat on the mat", 1);
    assert!((b1 - (-0.2f64).exp()).abs() < 1e-12, "{b1}");
}

#[test]
fn smoothing_only_lifts_zero_orders() {
    let plain = bleu("the cat sat on mat", "the cat sat on the mat", 4);
    let smooth = bleu_with(
        "the cat sat on mat",
        "the cat sat on the mat",
        4,
        Smoothing::AddOne,
        &Normalizer::default(),
    );
    assert!(smooth > plain);
    assert_eq!(bleu("mat on sat cat the", "the cat sat on the mat", 4), 0.0);
}
