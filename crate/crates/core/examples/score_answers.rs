//! Answer F1, Bleu and Rouge-L over a few prediction/reference pairs.

use spanlink::metrics::{aggregate, score, token_f1_with, Normalizer};

fn main() {
    let pairs = [
        (
            "a recurrent neural network",
            "a single-layer recurrent neural network",
        ),
        ("Long Short-Term Memory", "long short-term memory."),
        ("the held-out dataset", "held-out"),
    ];
    let mut reports = Vec::new();
    for (pred, gold) in pairs {
        let r = score(pred, gold);
        println!(
            "{pred:?} vs {gold:?}: f1 {:.3} bleu1 {:.3} bleu4 {:.3} rouge-l {:.3}",
            r.f1, r.bleu1, r.bleu4, r.rouge_l
        );
        reports.push(r);
    }
    println!("mean: {:?}", aggregate(&reports));

    let (pred, gold) = pairs[2];
    println!(
        "with article removal, last pair f1 = {:.3}",
        token_f1_with(pred, gold, &Normalizer::squad())
    );
}
