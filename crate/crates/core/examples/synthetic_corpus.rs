//! Write a seeded synthetic corpus directory and load it back, the same
//! layout the command-line tool reads.

use spanlink::model::validate;
use spanlink::pipeline::{load_corpus, write_corpus, DOCS_FILE, DUMPS_DIR, PARSES_FILE};
use spanlink::synth::{crafted_corpus, gen_corpus, SynthSpec};

fn main() -> spanlink::Result<()> {
    let dir = std::env::temp_dir().join(format!("spanlink-synth-{}", std::process::id()));
    let spec = SynthSpec {
        rng_seed: 7,
        span_density: 0.8,
        ..SynthSpec::default()
    };
    let mut inputs: Vec<_> = gen_corpus(&spec, 4)?.iter().map(|c| c.to_input()).collect();
    inputs.extend(crafted_corpus());
    write_corpus(&dir, &inputs)?;

    let (loaded, skipped) = load_corpus(
        &dir.join(DOCS_FILE),
        &dir.join(PARSES_FILE),
        &dir.join(DUMPS_DIR),
    )?;
    println!(
        "loaded {} documents from {} ({} skipped)",
        loaded.len(),
        dir.display(),
        skipped.len()
    );
    for input in &loaded {
        let report = validate(&input.dump, &input.doc, 1e-5);
        println!(
            "  {:<12} {:>3} tokens  {} paragraphs  {} parse roots  rows ok: {}",
            input.doc.doc_id(),
            input.doc.n_tokens(),
            input.doc.n_paragraphs(),
            input.parse.forest.len(),
            report.row_sum_violations.is_empty()
        );
    }
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
