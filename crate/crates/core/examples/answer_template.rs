//! Masked answer template for a three-span cluster, filled by the
//! connector baseline and by a stand-in infiller.

use spanlink::answer::{external_fill, gather_context_sentences, qg_input};
use spanlink::{build_template, connector_fill, Document, Span, MASK_TOKEN};

fn main() -> spanlink::Result<()> {
    let paragraphs: Vec<Vec<&str>> = [
        "The main contributions of this paper are listed .",
        "We use a single-layer forward recurrent neural network here .",
        "It encodes sentence information well .",
    ]
    .iter()
    .map(|p| p.split(' ').collect())
    .collect();
    let doc = Document::from_paragraphs("contributions", &paragraphs)?;
    let spans = [
        Span::new(&doc, 24, 26)?,
        Span::new(&doc, 1, 4)?,
        Span::new(&doc, 13, 19)?,
    ];

    let template = build_template(&doc, &spans)?;
    println!("template:  {}", template.render());
    println!("connector: {}", connector_fill(&template));

    let mut infiller = |request: &str| -> spanlink::Result<String> {
        Ok(request
            .replacen(MASK_TOKEN, "were to develop", 1)
            .replacen(MASK_TOKEN, "for", 1))
    };
    let filled = external_fill(&template, &mut infiller);
    println!(
        "infilled:  {} (fallback: {})",
        filled.answer, filled.fallback
    );

    let context = gather_context_sentences(&doc, &spans);
    println!("qg input:  {}", qg_input(&filled.answer, &context, "</s>"));
    Ok(())
}
