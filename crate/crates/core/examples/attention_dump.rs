//! Build a windowed attention dump by hand, write it in the binary format,
//! read it back and validate it against its document.

use spanlink::model::{validate, AttentionDump, Document};

fn main() -> spanlink::Result<()> {
    let paragraphs = [
        vec!["attention", "is", "sparse", "."],
        vec!["markers", "see", "everything", "."],
    ];
    let doc = Document::from_paragraphs("demo", &paragraphs)?;
    println!("tokens: {:?}", doc.tokens());
    println!("markers at {:?}", doc.global_positions());

    let mut dump = AttentionDump::zeros_for(&doc, 1, 1, 1)?;
    let n = doc.n_tokens();
    for src in 0..n {
        // spread each row uniformly over the entries that exist for it
        let present: Vec<usize> = (0..n)
            .filter(|&dst| dump.attention_weight(0, 0, src, dst).unwrap().is_some())
            .collect();
        for &dst in &present {
            dump.set_weight(0, 0, src, dst, 1.0 / present.len() as f32)?;
        }
    }

    let bytes = dump.to_bytes();
    println!("encoded {} bytes", bytes.len());
    let back = AttentionDump::from_bytes(&bytes)?;
    for (src, dst) in [(1, 2), (1, 4), (1, 5), (5, 0)] {
        println!(
            "w({src}, {dst}) = {:?}",
            back.attention_weight(0, 0, src, dst)?
        );
    }

    let report = validate(&back, &doc, 1e-5);
    println!(
        "valid: {} ({} row-sum issues)",
        report.ok,
        report.row_sum_violations.len()
    );
    Ok(())
}
