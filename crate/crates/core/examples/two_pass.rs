//! Both passes over the crafted corpus plus a synthetic one, with
//! per-pass dataset statistics.

use spanlink::pipeline::{run_pass, PassProfile};
use spanlink::synth::{crafted_corpus, gen_corpus, SynthSpec};

fn main() -> spanlink::Result<()> {
    let spec = SynthSpec {
        n_paragraphs: 4,
        rng_seed: 2024,
        ..SynthSpec::default()
    };
    let mut inputs = crafted_corpus();
    inputs.extend(gen_corpus(&spec, 12)?.iter().map(|c| c.to_input()));

    for mut profile in [PassProfile::pass_one(), PassProfile::pass_two()] {
        profile.workers = 4;
        let out = run_pass(&profile, &inputs)?;
        let s = &out.summary.stats;
        println!(
            "{:<9} overall {:>4}  with_global {:>3}  multi_span {:>3}  config {}",
            out.manifest.profile,
            s.overall,
            s.with_global,
            s.multi_span,
            &out.manifest.config_sha256[..12]
        );
        for r in out.records.iter().filter(|r| r.used_bridge) {
            println!("  {}: {}", r.doc_id, r.template);
        }
    }
    Ok(())
}
